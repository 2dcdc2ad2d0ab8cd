//! The speaking model: a trainable embedding table, a forward LSTM text
//! encoder with a linear layer on top whose output initializes the decoder
//! states, and an LSTM decoder emitting the speaker's AU+POSE sequence.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FRAME_DIM;
use crate::numerics::rng::{fnv1a, seeded};
use crate::numerics::{NodeId, ParamStore, RealArray, Tape};
use crate::seqmodels::listening::DecodeMode;
use crate::seqmodels::lstm::{lstm_cell_step, run_stack, LstmLayerParams};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_ROW: usize = 0;
pub const UNK_ROW: usize = 1;

pub const EMBED_BLOCK: &str = "speak.embed";
pub const ENC_OUT_W: &str = "speak.enc.out.W";
pub const ENC_OUT_B: &str = "speak.enc.out.b";
pub const DEC_OUT_W: &str = "speak.dec.out.W";
pub const DEC_OUT_B: &str = "speak.dec.out.b";

#[derive(Debug, Clone)]
pub struct SpeakingModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub encoder_len: usize,
    pub decoder_len: usize,
}

impl Default for SpeakingModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 1000,
            embedding_dim: 200,
            encoder_len: 25,
            decoder_len: 370,
        }
    }
}

impl SpeakingModelConfig {
    pub fn test_scale() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            embedding_dim: 16,
            encoder_len: 25,
            decoder_len: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::InvalidConfig("speaking layers must be >= 1".into()));
        }
        if self.encoder_len < 1 {
            return Err(Error::InvalidConfig("speaking encoder_len must be >= 1".into()));
        }
        if self.decoder_len < 2 {
            return Err(Error::InvalidConfig("speaking decoder_len must be >= 2".into()));
        }
        Ok(())
    }
}

/// Token -> row map over a fixed vocabulary. Row 0 is PAD (zero, frozen),
/// row 1 is UNK. Other rows are initialized from a hash of the token string
/// so the init does not depend on vocabulary insertion order.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    index: BTreeMap<String, usize>,
    vocab: Vec<String>,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Builds the table from a token universe (deduplicated, sorted).
    pub fn build(tokens: impl Iterator<Item = String>, dim: usize) -> Self {
        let mut uniq: Vec<String> = tokens
            .filter(|t| t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        uniq.sort();
        uniq.dedup();
        let mut vocab = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        vocab.extend(uniq);
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { index, vocab, dim }
    }

    pub fn from_rows(rows: Vec<String>, dim: usize) -> Result<Self> {
        if rows.len() < 2 || rows[0] != PAD_TOKEN || rows[1] != UNK_TOKEN {
            return Err(Error::Data(
                "embedding vocabulary must start with <pad>, <unk>".into(),
            ));
        }
        let index = rows
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self {
            index,
            vocab: rows,
            dim,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn row_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ROW)
    }

    /// Registers the [vocab, dim] matrix. PAD row is zero; every other row
    /// is drawn from a stream seeded by (seed, token hash).
    pub fn register(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        let mut values = vec![0.0; self.vocab.len() * self.dim];
        let s = 1.0 / (self.dim as f64).sqrt();
        for (row, token) in self.vocab.iter().enumerate() {
            if row == PAD_ROW {
                continue;
            }
            let mut rng = seeded(seed ^ fnv1a(token.as_bytes()));
            for j in 0..self.dim {
                values[row * self.dim + j] = rng.gen_range(-s..=s);
            }
        }
        store.register(
            EMBED_BLOCK,
            RealArray::new(vec![self.vocab.len(), self.dim], values)?,
        )
    }

    /// Maps tokens to rows, truncating and PAD-padding to `len`.
    pub fn rows_for(&self, tokens: &[String], len: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = tokens.iter().take(len).map(|t| self.row_of(t)).collect();
        rows.resize(len, PAD_ROW);
        rows
    }
}

#[derive(Debug, Clone)]
pub struct SpeakingModel {
    pub cfg: SpeakingModelConfig,
    enc_layers: Vec<LstmLayerParams>,
    dec_layers: Vec<LstmLayerParams>,
}

impl SpeakingModel {
    pub fn new(cfg: SpeakingModelConfig) -> Result<Self> {
        cfg.validate()?;
        let enc_layers = (1..=cfg.layers)
            .map(|k| {
                let input = if k == 1 { cfg.embedding_dim } else { cfg.hidden };
                LstmLayerParams::new(format!("speak.enc.layer{k}"), cfg.hidden, input)
            })
            .collect();
        let dec_layers = (1..=cfg.layers)
            .map(|k| {
                let input = if k == 1 { FRAME_DIM } else { cfg.hidden };
                LstmLayerParams::new(format!("speak.dec.layer{k}"), cfg.hidden, input)
            })
            .collect();
        Ok(Self {
            cfg,
            enc_layers,
            dec_layers,
        })
    }

    /// Registers everything except the embedding table (see
    /// [`EmbeddingTable::register`]).
    pub fn register<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        for layer in &self.enc_layers {
            layer.register(store, rng)?;
        }
        // the encoding linear layer emits (h, c) for every decoder layer
        let enc_out = 2 * self.cfg.layers * self.cfg.hidden;
        store.register_uniform(ENC_OUT_W, vec![enc_out, self.cfg.hidden], self.cfg.hidden, rng)?;
        store.register(ENC_OUT_B, RealArray::zeros(vec![enc_out]))?;
        for layer in &self.dec_layers {
            layer.register(store, rng)?;
        }
        store.register_uniform(DEC_OUT_W, vec![FRAME_DIM, self.cfg.hidden], self.cfg.hidden, rng)?;
        store.register(DEC_OUT_B, RealArray::zeros(vec![FRAME_DIM]))?;
        Ok(())
    }

    /// Encoder-side block names (frozen during the speaking stage 2).
    pub fn encoder_block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .enc_layers
            .iter()
            .flat_map(|l| l.block_names())
            .collect();
        names.push(ENC_OUT_W.into());
        names.push(ENC_OUT_B.into());
        names.push(EMBED_BLOCK.into());
        names
    }

    pub fn decoder_block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .dec_layers
            .iter()
            .flat_map(|l| l.block_names())
            .collect();
        names.push(DEC_OUT_W.into());
        names.push(DEC_OUT_B.into());
        names
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names = self.encoder_block_names();
        names.extend(self.decoder_block_names());
        names
    }

    /// Embeds tokens (truncated/padded to encoder_len). PAD rows receive no
    /// gradient so padding stays inert.
    pub fn embed_tokens(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        table: &EmbeddingTable,
        tokens: &[String],
    ) -> Result<Vec<NodeId>> {
        let rows = table.rows_for(tokens, self.cfg.encoder_len);
        let block = tape.param(store, EMBED_BLOCK)?;
        let gathered = tape.embed_rows(block, rows, Some(PAD_ROW))?;
        (0..self.cfg.encoder_len)
            .map(|i| tape.slice(gathered, i * table.dim, table.dim))
            .collect()
    }

    /// Runs the text encoder over embedded tokens and applies the linear
    /// layer on the final top hidden state; the result is split into the
    /// decoder's initial (h, c) per layer.
    pub fn encode_text(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        embedded: &[NodeId],
    ) -> Result<Vec<(NodeId, NodeId)>> {
        if embedded.len() != self.cfg.encoder_len {
            return Err(Error::ShapeMismatch {
                context: "encode_text embedded length",
                left: vec![embedded.len()],
                right: vec![self.cfg.encoder_len],
            });
        }
        let (finals, _) = run_stack(tape, store, &self.enc_layers, embedded, None)?;
        let (h_top, _) = finals[finals.len() - 1];
        let w = tape.param(store, ENC_OUT_W)?;
        let b = tape.param(store, ENC_OUT_B)?;
        let wx = tape.matvec(w, h_top)?;
        let h_text = tape.add(wx, b)?;
        let mut states = Vec::with_capacity(self.cfg.layers);
        for k in 0..self.cfg.layers {
            let h = tape.slice(h_text, 2 * k * self.cfg.hidden, self.cfg.hidden)?;
            let c = tape.slice(h_text, (2 * k + 1) * self.cfg.hidden, self.cfg.hidden)?;
            states.push((h, c));
        }
        Ok(states)
    }

    /// Decodes `steps` frames from the text encoding. The first step
    /// consumes the zero frame (no encoder-side frame exists for text).
    pub fn decode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        states: &[(NodeId, NodeId)],
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
        let mut states: Vec<(NodeId, NodeId)> = states.to_vec();
        let mut prev_input = tape.input(RealArray::zeros(vec![FRAME_DIM]));
        let mut outputs = Vec::with_capacity(steps);
        for l in 0..steps {
            let mut x = prev_input;
            for (k, layer) in self.dec_layers.iter().enumerate() {
                let (h, c) = states[k];
                let (h_t, c_t) = lstm_cell_step(tape, store, layer, h, c, x)?;
                states[k] = (h_t, c_t);
                x = h_t;
            }
            let w = tape.param(store, DEC_OUT_W)?;
            let b = tape.param(store, DEC_OUT_B)?;
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

    /// Free-running inference from a sentence.
    pub fn predict(
        &self,
        store: &ParamStore,
        table: &EmbeddingTable,
        tokens: &[String],
    ) -> Result<Vec<[f64; FRAME_DIM]>> {
        let mut tape = Tape::new();
        let embedded = self.embed_tokens(&mut tape, store, table, tokens)?;
        let states = self.encode_text(&mut tape, store, &embedded)?;
        let outs = self.decode(
            &mut tape,
            store,
            &states,
            DecodeMode::FreeRunning,
            self.cfg.decoder_len,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;

    fn table() -> EmbeddingTable {
        EmbeddingTable::build(
            ["game", "win", "yeah", "time"].iter().map(|s| s.to_string()),
            8,
        )
    }

    fn model() -> SpeakingModel {
        SpeakingModel::new(SpeakingModelConfig {
            layers: 2,
            hidden: 6,
            embedding_dim: 8,
            encoder_len: 5,
            decoder_len: 4,
        })
        .unwrap()
    }

    fn setup() -> (SpeakingModel, EmbeddingTable, ParamStore) {
        let m = model();
        let t = table();
        let mut store = ParamStore::new();
        t.register(&mut store, 7).unwrap();
        m.register(&mut store, &mut seeded(7)).unwrap();
        (m, t, store)
    }

    #[test]
    fn empty_sentence_is_all_pad() {
        let t = table();
        assert_eq!(t.rows_for(&[], 5), vec![PAD_ROW; 5]);
    }

    #[test]
    fn long_sentence_truncates() {
        let t = table();
        let tokens: Vec<String> = (0..30).map(|_| "game".to_string()).collect();
        let rows = t.rows_for(&tokens, 25);
        assert_eq!(rows.len(), 25);
        assert!(rows.iter().all(|&r| r == t.row_of("game")));
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let t = table();
        assert_eq!(t.row_of("zzz-not-in-vocab"), UNK_ROW);
    }

    #[test]
    fn same_token_embeds_identically() {
        let (m, t, store) = setup();
        let tokens = vec!["game".to_string(), "game".to_string()];
        let mut tape = Tape::new();
        let embedded = m.embed_tokens(&mut tape, &store, &t, &tokens).unwrap();
        assert_eq!(
            tape.value(embedded[0]).values(),
            tape.value(embedded[1]).values()
        );
    }

    #[test]
    fn pad_row_is_zero_and_init_is_order_independent() {
        let (_, t, store) = setup();
        let emb = store.values(EMBED_BLOCK).unwrap();
        assert!(emb.values()[..t.dim].iter().all(|&v| v == 0.0));

        // a table built in a different order gives identical rows per token
        let t2 = EmbeddingTable::build(
            ["time", "yeah", "win", "game"].iter().map(|s| s.to_string()),
            8,
        );
        let mut store2 = ParamStore::new();
        t2.register(&mut store2, 7).unwrap();
        let emb2 = store2.values(EMBED_BLOCK).unwrap();
        for token in ["game", "win", "yeah", "time"] {
            let (r1, r2) = (t.row_of(token), t2.row_of(token));
            assert_eq!(
                &emb.values()[r1 * 8..(r1 + 1) * 8],
                &emb2.values()[r2 * 8..(r2 + 1) * 8],
                "token {token}"
            );
        }
    }

    #[test]
    fn zero_weights_give_zero_encoding() {
        let (m, t, mut store) = setup();
        for name in m.block_names() {
            store.block_mut(&name).unwrap().values.values_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let embedded = m
            .embed_tokens(&mut tape, &store, &t, &["game".to_string()])
            .unwrap();
        let states = m.encode_text(&mut tape, &store, &embedded).unwrap();
        for (h, c) in states {
            assert!(tape.value(h).values().iter().all(|&v| v == 0.0));
            assert!(tape.value(c).values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encoding_differs_on_changed_token() {
        let (m, t, store) = setup();
        let a = m
            .predict(&store, &t, &["game".to_string(), "win".to_string()])
            .unwrap();
        let b = m
            .predict(&store, &t, &["game".to_string(), "time".to_string()])
            .unwrap();
        let differs = a
            .iter()
            .zip(&b)
            .any(|(x, y)| x.iter().zip(y).any(|(p, q)| (p - q).abs() > 1e-9));
        assert!(differs);
    }

    #[test]
    fn pad_suffix_is_inert_with_pad_row_zero() {
        // PAD rows are zero by construction; a sentence and the same sentence
        // with explicit PAD tokens appended embed identically.
        let (m, t, store) = setup();
        let short = vec!["yeah".to_string()];
        let mut padded = short.clone();
        padded.push(PAD_TOKEN.to_string());
        padded.push(PAD_TOKEN.to_string());
        let a = m.predict(&store, &t, &short).unwrap();
        let b = m.predict(&store, &t, &padded).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pad_row_receives_no_gradient() {
        let (m, t, mut store) = setup();
        let mut tape = Tape::new();
        let embedded = m
            .embed_tokens(&mut tape, &store, &t, &["game".to_string()])
            .unwrap();
        let states = m.encode_text(&mut tape, &store, &embedded).unwrap();
        let outs = m
            .decode(&mut tape, &store, &states, DecodeMode::FreeRunning, 4)
            .unwrap();
        let mut acc = tape.sum(outs[0]).unwrap();
        for &o in &outs[1..] {
            let s = tape.sum(o).unwrap();
            acc = tape.add(acc, s).unwrap();
        }
        store.zero_grads();
        tape.backward(acc, &mut store).unwrap();
        let g = store.grads(EMBED_BLOCK).unwrap();
        assert!(g.values()[..t.dim].iter().all(|&v| v == 0.0));
        // the used token's row did get gradient
        let r = t.row_of("game");
        assert!(g.values()[r * t.dim..(r + 1) * t.dim].iter().any(|&v| v != 0.0));
    }
}
