//! The listening model: an LSTM stack that encodes the speaker's AU+POSE
//! window and then continues as the decoder emitting the listener's window
//! of the same length. The stack weights are shared between the encode and
//! decode phases (block names `listen.layer{k}.*`); a linear output layer
//! maps the top hidden state to a 20-D frame.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FRAME_DIM;
use crate::numerics::{NodeId, ParamStore, RealArray, Tape};
use crate::seqmodels::lstm::{run_stack, lstm_cell_step, LstmLayerParams};

#[derive(Debug, Clone)]
pub struct ListeningModelConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Window length n: encoder consumes n frames, decoder emits n frames.
    pub n: usize,
}

impl Default for ListeningModelConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden: 1000,
            n: 10,
        }
    }
}

impl ListeningModelConfig {
    /// Small defaults for tests and desk-scale runs.
    pub fn test_scale() -> Self {
        Self {
            layers: 4,
            hidden: 32,
            n: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::InvalidConfig("listening layers must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("listening n must be >= 2".into()));
        }
        if self.hidden < 1 {
            return Err(Error::InvalidConfig("listening hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// How the decoder is fed: ground truth at every step, or its own previous
/// output. Both start from an explicit start frame.
pub enum DecodeMode<'a> {
    TeacherForced { gt: &'a [[f64; FRAME_DIM]] },
    FreeRunning,
}

#[derive(Debug, Clone)]
pub struct ListeningModel {
    pub cfg: ListeningModelConfig,
    layers: Vec<LstmLayerParams>,
}

pub const OUT_W: &str = "listen.out.W";
pub const OUT_B: &str = "listen.out.b";

impl ListeningModel {
    pub fn new(cfg: ListeningModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = (1..=cfg.layers)
            .map(|k| {
                let input = if k == 1 { FRAME_DIM } else { cfg.hidden };
                LstmLayerParams::new(format!("listen.layer{k}"), cfg.hidden, input)
            })
            .collect();
        Ok(Self { cfg, layers })
    }

    /// Registers all blocks with seeded uniform init.
    pub fn register<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        for layer in &self.layers {
            layer.register(store, rng)?;
        }
        store.register_uniform(OUT_W, vec![FRAME_DIM, self.cfg.hidden], self.cfg.hidden, rng)?;
        store.register(OUT_B, RealArray::zeros(vec![FRAME_DIM]))?;
        Ok(())
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .layers
            .iter()
            .flat_map(|l| l.block_names())
            .collect();
        names.push(OUT_W.into());
        names.push(OUT_B.into());
        names
    }

    /// Encodes an n-frame normalized window; returns per-layer final (h, c).
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        window: &[[f64; FRAME_DIM]],
    ) -> Result<Vec<(NodeId, NodeId)>> {
        if window.len() != self.cfg.n {
            return Err(Error::ShapeMismatch {
                context: "encode_listening window length",
                left: vec![window.len()],
                right: vec![self.cfg.n],
            });
        }
        let inputs: Vec<NodeId> = window
            .iter()
            .map(|f| tape.input_vector(f.to_vec()))
            .collect::<Result<_>>()?;
        let (finals, _) = run_stack(tape, store, &self.layers, &inputs, None)?;
        Ok(finals)
    }

    /// Decodes `steps` frames from the encoder states. Step 1 consumes the
    /// start frame; later steps consume the ground-truth previous frame
    /// (teacher forcing) or the model's own previous output (free running).
    pub fn decode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc_states: &[(NodeId, NodeId)],
        start: &[f64; FRAME_DIM],
        mode: DecodeMode,
        steps: usize,
    ) -> Result<Vec<NodeId>> {
        if let DecodeMode::TeacherForced { gt } = &mode {
            if gt.len() != steps {
                return Err(Error::ShapeMismatch {
                    context: "teacher-forced gt length",
                    left: vec![gt.len()],
                    right: vec![steps],
                });
            }
        }
        let mut states: Vec<(NodeId, NodeId)> = enc_states.to_vec();
        let mut prev_input = tape.input_vector(start.to_vec())?;
        let mut outputs = Vec::with_capacity(steps);
        for l in 0..steps {
            let mut x = prev_input;
            for (k, layer) in self.layers.iter().enumerate() {
                let (h, c) = states[k];
                let (h_t, c_t) = lstm_cell_step(tape, store, layer, h, c, x)?;
                states[k] = (h_t, c_t);
                x = h_t;
            }
            let w = tape.param(store, OUT_W)?;
            let b = tape.param(store, OUT_B)?;
            let wx = tape.matvec(w, x)?;
            let y = tape.add(wx, b)?;
            outputs.push(y);
            prev_input = match &mode {
                DecodeMode::TeacherForced { gt } => tape.input_vector(gt[l].to_vec())?,
                DecodeMode::FreeRunning => y,
            };
        }
        Ok(outputs)
    }

    /// Free-running inference on plain data: encode the window, decode n
    /// frames starting from the window's last frame.
    pub fn predict(
        &self,
        store: &ParamStore,
        window: &[[f64; FRAME_DIM]],
    ) -> Result<Vec<[f64; FRAME_DIM]>> {
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, store, window)?;
        let start = window[window.len() - 1];
        let outs = self.decode(
            &mut tape,
            store,
            &enc,
            &start,
            DecodeMode::FreeRunning,
            self.cfg.n,
        )?;
        Ok(outs
            .iter()
            .map(|&id| {
                let mut f = [0.0; FRAME_DIM];
                f.copy_from_slice(tape.value(id).values());
                f
            })
            .collect())
    }
}
