//! The relu6-LSTM cell: gates via sigmoid over W[h_prev, x] + b, candidate
//! and hidden activation via relu6 in place of the usual tanh.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{NodeId, ParamStore, Tape};

/// Parameter names for one LSTM layer under a prefix, e.g.
/// `listen.layer1.W_i`. W_* are [hidden, hidden+input], b_* are [hidden].
#[derive(Debug, Clone)]
pub struct LstmLayerParams {
    pub prefix: String,
    pub hidden: usize,
    pub input: usize,
}

pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "c"];

impl LstmLayerParams {
    pub fn new(prefix: impl Into<String>, hidden: usize, input: usize) -> Self {
        Self {
            prefix: prefix.into(),
            hidden,
            input,
        }
    }

    pub fn weight_name(&self, gate: &str) -> String {
        format!("{}.W_{gate}", self.prefix)
    }

    pub fn bias_name(&self, gate: &str) -> String {
        format!("{}.b_{gate}", self.prefix)
    }

    pub fn block_names(&self) -> Vec<String> {
        GATE_NAMES
            .iter()
            .flat_map(|g| [self.weight_name(g), self.bias_name(g)])
            .collect()
    }

    /// Registers the eight blocks: weights uniform in [-s, s] with
    /// s = 1/sqrt(fan_in), biases zero.
    pub fn register<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let fan_in = self.hidden + self.input;
        for gate in GATE_NAMES {
            store.register_uniform(
                &self.weight_name(gate),
                vec![self.hidden, fan_in],
                fan_in,
                rng,
            )?;
            store.register(
                &self.bias_name(gate),
                crate::numerics::RealArray::zeros(vec![self.hidden]),
            )?;
        }
        Ok(())
    }
}

/// One step of the cell on the tape. Inputs are the previous hidden and
/// cell states and the current frame; returns (h_t, c_t).
pub fn lstm_cell_step(
    tape: &mut Tape,
    store: &ParamStore,
    layer: &LstmLayerParams,
    h_prev: NodeId,
    c_prev: NodeId,
    x_t: NodeId,
) -> Result<(NodeId, NodeId)> {
    let z = tape.concat(h_prev, x_t)?;
    let gate = |tape: &mut Tape, name: &str| -> Result<NodeId> {
        let w = tape.param(store, &layer.weight_name(name))?;
        let b = tape.param(store, &layer.bias_name(name))?;
        let wz = tape.matvec(w, z)?;
        tape.add(wz, b)
    };
    let i_pre = gate(tape, "i")?;
    let f_pre = gate(tape, "f")?;
    let o_pre = gate(tape, "o")?;
    let c_pre = gate(tape, "c")?;
    let i_t = tape.sigmoid(i_pre)?;
    let f_t = tape.sigmoid(f_pre)?;
    let o_t = tape.sigmoid(o_pre)?;
    let candidate = tape.relu6(c_pre)?;
    let keep = tape.mul(f_t, c_prev)?;
    let write = tape.mul(i_t, candidate)?;
    let c_t = tape.add(keep, write)?;
    let c_act = tape.relu6(c_t)?;
    let h_t = tape.mul(o_t, c_act)?;
    Ok((h_t, c_t))
}

/// Runs a stack of layers over an input sequence. Layer k consumes the
/// hidden sequence of layer k-1. Initial states default to zero unless
/// provided. Returns (per-layer final (h, c), top-layer hidden sequence).
#[allow(clippy::type_complexity)]
pub fn run_stack(
    tape: &mut Tape,
    store: &ParamStore,
    layers: &[LstmLayerParams],
    inputs: &[NodeId],
    init: Option<&[(NodeId, NodeId)]>,
) -> Result<(Vec<(NodeId, NodeId)>, Vec<NodeId>)> {
    let mut finals = Vec::with_capacity(layers.len());
    let mut sequence: Vec<NodeId> = inputs.to_vec();
    for (k, layer) in layers.iter().enumerate() {
        let (mut h, mut c) = match init {
            Some(states) => states[k],
            None => {
                let z1 = tape.input(crate::numerics::RealArray::zeros(vec![layer.hidden]));
                let z2 = tape.input(crate::numerics::RealArray::zeros(vec![layer.hidden]));
                (z1, z2)
            }
        };
        let mut outs = Vec::with_capacity(sequence.len());
        for &x in &sequence {
            let (h_t, c_t) = lstm_cell_step(tape, store, layer, h, c, x)?;
            h = h_t;
            c = c_t;
            outs.push(h_t);
        }
        finals.push((h, c));
        sequence = outs;
    }
    Ok((finals, sequence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::array::{relu6_scalar, sigmoid_scalar};
    use crate::numerics::rng::seeded;
    use crate::numerics::RealArray;
    use rand::Rng;

    fn zero_layer(store: &mut ParamStore, hidden: usize, input: usize) -> LstmLayerParams {
        let layer = LstmLayerParams::new("t", hidden, input);
        for gate in GATE_NAMES {
            store
                .register(
                    &layer.weight_name(gate),
                    RealArray::zeros(vec![hidden, hidden + input]),
                )
                .unwrap();
            store
                .register(&layer.bias_name(gate), RealArray::zeros(vec![hidden]))
                .unwrap();
        }
        layer
    }

    #[test]
    fn zero_weights_zero_state_gives_zero() {
        let mut store = ParamStore::new();
        let layer = zero_layer(&mut store, 3, 2);
        let mut tape = Tape::new();
        let h0 = tape.input(RealArray::zeros(vec![3]));
        let c0 = tape.input(RealArray::zeros(vec![3]));
        let x = tape.input_vector(vec![0.7, -0.3]).unwrap();
        let (h, c) = lstm_cell_step(&mut tape, &store, &layer, h0, c0, x).unwrap();
        assert!(tape.value(h).values().iter().all(|&v| v == 0.0));
        assert!(tape.value(c).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_nonzero_cell_state() {
        // gates all 0.5, candidate relu6(0)=0:
        // c_t = 0.5*c_prev, h_t = 0.5*relu6(0.5*c_prev)
        let mut store = ParamStore::new();
        let layer = zero_layer(&mut store, 2, 2);
        let mut tape = Tape::new();
        let h0 = tape.input(RealArray::zeros(vec![2]));
        let c0 = tape.input_vector(vec![4.0, -2.0]).unwrap();
        let x = tape.input_vector(vec![1.0, 1.0]).unwrap();
        let (h, c) = lstm_cell_step(&mut tape, &store, &layer, h0, c0, x).unwrap();
        assert_eq!(tape.value(c).values(), &[2.0, -1.0]);
        assert_eq!(tape.value(h).values(), &[0.5 * 2.0, 0.0]);
    }

    #[test]
    fn random_cell_matches_scalar_reference() {
        let mut rng = seeded(9);
        let hidden = 4;
        let input = 3;
        let mut store = ParamStore::new();
        let layer = LstmLayerParams::new("t", hidden, input);
        layer.register(&mut store, &mut rng).unwrap();

        let h_prev: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c_prev: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let h0 = tape.input_vector(h_prev.clone()).unwrap();
        let c0 = tape.input_vector(c_prev.clone()).unwrap();
        let xn = tape.input_vector(x.clone()).unwrap();
        let (h, c) = lstm_cell_step(&mut tape, &store, &layer, h0, c0, xn).unwrap();

        // independent scalar evaluation
        let mut z = h_prev.clone();
        z.extend_from_slice(&x);
        let gate_out = |gate: &str, row: usize| -> f64 {
            let w = store.values(&layer.weight_name(gate)).unwrap().values();
            let b = store.values(&layer.bias_name(gate)).unwrap().values();
            let n = hidden + input;
            let mut acc = b[row];
            for j in 0..n {
                acc += w[row * n + j] * z[j];
            }
            acc
        };
        for row in 0..hidden {
            let i = sigmoid_scalar(gate_out("i", row));
            let f = sigmoid_scalar(gate_out("f", row));
            let o = sigmoid_scalar(gate_out("o", row));
            let cand = relu6_scalar(gate_out("c", row));
            let c_ref = f * c_prev[row] + i * cand;
            let h_ref = o * relu6_scalar(c_ref);
            assert!((tape.value(c).values()[row] - c_ref).abs() < 1e-12);
            assert!((tape.value(h).values()[row] - h_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_state_bounded_by_six() {
        let mut rng = seeded(33);
        let mut store = ParamStore::new();
        let layer = LstmLayerParams::new("t", 6, 6);
        layer.register(&mut store, &mut rng).unwrap();
        let mut tape = Tape::new();
        let mut h = tape.input_vector(vec![5.9; 6]).unwrap();
        let mut c = tape.input_vector(vec![100.0_f64.min(5.9); 6]).unwrap();
        for _ in 0..20 {
            let x = tape
                .input_vector((0..6).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .unwrap();
            let (h_t, c_t) = lstm_cell_step(&mut tape, &store, &layer, h, c, x).unwrap();
            h = h_t;
            c = c_t;
            assert!(tape.value(h).values().iter().all(|v| v.abs() <= 6.0));
        }
    }

    #[test]
    fn cell_shape_mismatch_is_error() {
        let mut store = ParamStore::new();
        let layer = zero_layer(&mut store, 3, 2);
        let mut tape = Tape::new();
        let h0 = tape.input(RealArray::zeros(vec![3]));
        let c0 = tape.input(RealArray::zeros(vec![3]));
        let bad_x = tape.input_vector(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(lstm_cell_step(&mut tape, &store, &layer, h0, c0, bad_x).is_err());
    }
}
