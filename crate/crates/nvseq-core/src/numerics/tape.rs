//! Tape-based reverse-mode differentiation.
//!
//! Forward computation records primitive operations into a linear tape; a
//! single reverse sweep accumulates gradients into the [`ParamStore`] blocks
//! that were bound as parameter leaves. Parameters never touched by the
//! recorded computation receive exactly zero gradient.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::array::{relu6_grad_scalar, relu6_scalar, sigmoid_scalar, RealArray};
use crate::numerics::store::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    /// Constant data; receives no gradient.
    Input,
    /// Leaf bound to a ParamStore block.
    Param { name: String },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// scale*x + shift, elementwise; only the scale matters in reverse.
    AffineConst { x: NodeId, scale: f64 },
    /// w: [m, n] times x: [n] -> [m].
    MatVec { w: NodeId, x: NodeId },
    Sigmoid(NodeId),
    Relu6(NodeId),
    /// log(sigmoid(x)), computed stably from the logit.
    LogSigmoid(NodeId),
    Log(NodeId),
    /// |x|^p with p in {1, 2}.
    AbsPow { x: NodeId, exponent: u32 },
    Concat(NodeId, NodeId),
    Slice { x: NodeId, start: usize, len: usize },
    Sum(NodeId),
    Mean(NodeId),
    /// Euclidean norm of the flattened input; subgradient 0 at the origin.
    Norm2(NodeId),
    /// Max over scalar nodes; gradient routed to the first argmax.
    MaxOf(Vec<NodeId>),
    /// Row gather from a [vocab, dim] table. Rows listed in `skip_grad_rows`
    /// accumulate no gradient (used to keep the PAD embedding inert).
    EmbedRows {
        table: NodeId,
        rows: Vec<usize>,
        skip_grad_row: Option<usize>,
    },
    /// 3x3 stride-1 zero-pad-1 convolution with a fixed (non-trainable)
    /// kernel bank of shape [out_ch, in_ch, 3, 3]. Input [in_ch, h, w].
    Conv2dFixed {
        x: NodeId,
        kernel: Rc<RealArray>,
        in_ch: usize,
        out_ch: usize,
        h: usize,
        w: usize,
    },
}

struct Node {
    op: Op,
    value: RealArray,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<String, NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &RealArray {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: RealArray) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    /// Records constant data (no gradient).
    pub fn input(&mut self, value: RealArray) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn input_vector(&mut self, values: Vec<f64>) -> Result<NodeId> {
        Ok(self.input(RealArray::vector(values)?))
    }

    pub fn scalar(&mut self, v: f64) -> Result<NodeId> {
        Ok(self.input(RealArray::scalar(v)?))
    }

    /// Binds a ParamStore block as a leaf. Repeated binds of the same name
    /// return the same node so gradients from all uses accumulate together.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.param_nodes.get(name) {
            return Ok(id);
        }
        let value = store.values(name)?.clone();
        let id = self.push(
            Op::Param {
                name: name.to_string(),
            },
            value,
        );
        self.param_nodes.insert(name.to_string(), id);
        Ok(id)
    }

    fn binary_same_shape(&mut self, a: NodeId, b: NodeId, context: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                context,
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "tape add")?;
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x + y)
            .collect();
        let value = RealArray::new(self.value(a).shape().to_vec(), values)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "tape sub")?;
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x - y)
            .collect();
        let value = RealArray::new(self.value(a).shape().to_vec(), values)?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "tape mul")?;
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x * y)
            .collect();
        let value = RealArray::new(self.value(a).shape().to_vec(), values)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        let values = self.value(x).values().iter().map(|v| scale * v + shift).collect();
        let value = RealArray::new(self.value(x).shape().to_vec(), values)?;
        Ok(self.push(Op::AffineConst { x, scale }, value))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let ws = self.value(w).shape().to_vec();
        let xs = self.value(x).shape().to_vec();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::ShapeMismatch {
                context: "tape matvec",
                left: ws,
                right: xs,
            });
        }
        let (m, n) = (ws[0], ws[1]);
        let wv = self.value(w).values();
        let xv = self.value(x).values();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wv[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xv) {
                acc += a * b;
            }
            out[i] = acc;
        }
        let value = RealArray::vector(out)?;
        Ok(self.push(Op::MatVec { w, x }, value))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).sigmoid()?;
        Ok(self.push(Op::Sigmoid(x), value))
    }

    pub fn relu6(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.value(x).relu6()?;
        Ok(self.push(Op::Relu6(x), value))
    }

    /// log(sigmoid(x)) via -softplus(-x); never produces -inf for finite x.
    pub fn log_sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let values = self
            .value(x)
            .values()
            .iter()
            .map(|&v| -softplus(-v))
            .collect();
        let value = RealArray::new(self.value(x).shape().to_vec(), values)?;
        Ok(self.push(Op::LogSigmoid(x), value))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        if self.value(x).values().iter().any(|&v| v <= 0.0) {
            return Err(Error::NumericFailure("log of non-positive value".into()));
        }
        let values = self.value(x).values().iter().map(|v| v.ln()).collect();
        let value = RealArray::new(self.value(x).shape().to_vec(), values)?;
        Ok(self.push(Op::Log(x), value))
    }

    /// Elementwise |x|^p for p in {1, 2}.
    pub fn abs_pow(&mut self, x: NodeId, exponent: u32) -> Result<NodeId> {
        if exponent != 1 && exponent != 2 {
            return Err(Error::InvalidConfig(format!(
                "abs_pow exponent must be 1 or 2, got {exponent}"
            )));
        }
        let values = self
            .value(x)
            .values()
            .iter()
            .map(|&v| if exponent == 1 { v.abs() } else { v * v })
            .collect();
        let value = RealArray::new(self.value(x).shape().to_vec(), values)?;
        Ok(self.push(Op::AbsPow { x, exponent }, value))
    }

    /// 1-D concatenation.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let mut values = self.value(a).values().to_vec();
        values.extend_from_slice(self.value(b).values());
        let value = RealArray::vector(values)?;
        Ok(self.push(Op::Concat(a, b), value))
    }

    /// Contiguous slice of the flattened input.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.value(x).len() {
            return Err(Error::ShapeMismatch {
                context: "tape slice",
                left: self.value(x).shape().to_vec(),
                right: vec![start, len],
            });
        }
        let values = self.value(x).values()[start..start + len].to_vec();
        let value = RealArray::vector(values)?;
        Ok(self.push(Op::Slice { x, start, len }, value))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(x).values().iter().sum();
        let value = RealArray::scalar(s)?;
        Ok(self.push(Op::Sum(x), value))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Data("mean of empty array".into()));
        }
        let s: f64 = self.value(x).values().iter().sum::<f64>() / n as f64;
        let value = RealArray::scalar(s)?;
        Ok(self.push(Op::Mean(x), value))
    }

    pub fn norm2(&mut self, x: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(x).values().iter().map(|v| v * v).sum();
        let value = RealArray::scalar(s.sqrt())?;
        Ok(self.push(Op::Norm2(x), value))
    }

    /// Max over scalar nodes. Ties break toward the earliest operand.
    pub fn max_of(&mut self, xs: Vec<NodeId>) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Data("max_of needs at least one operand".into()));
        }
        let mut best = f64::NEG_INFINITY;
        for &id in &xs {
            if !self.value(id).is_scalar() {
                return Err(Error::ShapeMismatch {
                    context: "tape max_of",
                    left: self.value(id).shape().to_vec(),
                    right: vec![1],
                });
            }
            let v = self.value(id).values()[0];
            if v > best {
                best = v;
            }
        }
        let value = RealArray::scalar(best)?;
        Ok(self.push(Op::MaxOf(xs), value))
    }

    /// Gathers `rows` from a [vocab, dim] table into a [k, dim] block.
    pub fn embed_rows(
        &mut self,
        table: NodeId,
        rows: Vec<usize>,
        skip_grad_row: Option<usize>,
    ) -> Result<NodeId> {
        let ts = self.value(table).shape().to_vec();
        if ts.len() != 2 {
            return Err(Error::ShapeMismatch {
                context: "tape embed_rows",
                left: ts,
                right: vec![0, 0],
            });
        }
        let (vocab, dim) = (ts[0], ts[1]);
        let tv = self.value(table).values();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for &r in &rows {
            if r >= vocab {
                return Err(Error::Data(format!("embedding row {r} out of range {vocab}")));
            }
            values.extend_from_slice(&tv[r * dim..(r + 1) * dim]);
        }
        let value = RealArray::new(vec![rows.len(), dim], values)?;
        Ok(self.push(
            Op::EmbedRows {
                table,
                rows,
                skip_grad_row,
            },
            value,
        ))
    }

    /// 3x3 same convolution against a fixed kernel bank.
    pub fn conv2d_fixed(
        &mut self,
        x: NodeId,
        kernel: Rc<RealArray>,
        in_ch: usize,
        out_ch: usize,
        h: usize,
        w: usize,
    ) -> Result<NodeId> {
        if self.value(x).len() != in_ch * h * w {
            return Err(Error::ShapeMismatch {
                context: "tape conv2d",
                left: self.value(x).shape().to_vec(),
                right: vec![in_ch, h, w],
            });
        }
        if kernel.len() != out_ch * in_ch * 9 {
            return Err(Error::ShapeMismatch {
                context: "tape conv2d kernel",
                left: kernel.shape().to_vec(),
                right: vec![out_ch, in_ch, 3, 3],
            });
        }
        let xv = self.value(x).values();
        let kv = kernel.values();
        let mut out = vec![0.0; out_ch * h * w];
        for oc in 0..out_ch {
            for ic in 0..in_ch {
                let kbase = (oc * in_ch + ic) * 9;
                let xbase = ic * h * w;
                for y in 0..h {
                    for xq in 0..w {
                        let mut acc = 0.0;
                        for ky in 0..3usize {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..3usize {
                                let sx = xq as isize + kx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += kv[kbase + ky * 3 + kx]
                                    * xv[xbase + sy as usize * w + sx as usize];
                            }
                        }
                        out[oc * h * w + y * w + xq] += acc;
                    }
                }
            }
        }
        let value = RealArray::new(vec![out_ch, h, w], out)?;
        Ok(self.push(
            Op::Conv2dFixed {
                x,
                kernel,
                in_ch,
                out_ch,
                h,
                w,
            },
            value,
        ))
    }

    /// Mean of a list of scalar nodes (folded adds; shape-checked).
    pub fn mean_of_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::Data("mean of empty node list".into()));
        }
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x)?;
        }
        self.affine(acc, 1.0 / xs.len() as f64, 0.0)
    }

    /// Smallest distance from any recorded relu6 pre-activation to a kink
    /// (0 or 6). Arguments exactly equal to 0 are skipped: they arise from
    /// units pinned at zero (zero cell state times a zero candidate), which
    /// are locally constant and differentiate cleanly.
    pub fn min_relu6_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu6(x) = node.op {
                for &v in self.nodes[x.0].value.values() {
                    if v == 0.0 {
                        continue;
                    }
                    best = best.min(v.abs()).min((v - 6.0).abs());
                }
            }
        }
        best
    }

    /// Activation regime of every relu6 argument, in tape order: 0 below the
    /// lower kink, 1 strictly inside (0, 6), 2 at or above 6. Two forward
    /// passes with the same structure but different parameter values crossed
    /// a kink iff their patterns differ.
    pub fn relu6_pattern(&self) -> Vec<u8> {
        let mut pattern = Vec::new();
        for node in &self.nodes {
            if let Op::Relu6(x) = node.op {
                for &v in self.nodes[x.0].value.values() {
                    pattern.push(if v <= 0.0 {
                        0
                    } else if v < 6.0 {
                        1
                    } else {
                        2
                    });
                }
            }
        }
        pattern
    }

    /// Reverse accumulation from a scalar loss node. Each parameter's
    /// gradient contribution is added into the store; repeated calls
    /// accumulate until the store's gradients are explicitly zeroed.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::ShapeMismatch {
                context: "backward loss must be scalar",
                left: self.value(loss).shape().to_vec(),
                right: vec![1],
            });
        }
        if !self.value(loss).values()[0].is_finite() {
            return Err(Error::NumericFailure("loss is non-finite".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..self.nodes.len()).rev() {
            let Some(up) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param { name } => {
                    store.accumulate_grad(name, &up)?;
                }
                Op::Add(a, b) => {
                    add_into(&mut grads, *a, &up, self.nodes[a.0].value.len());
                    add_into(&mut grads, *b, &up, self.nodes[b.0].value.len());
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads, *a, &up, self.nodes[a.0].value.len());
                    let neg: Vec<f64> = up.iter().map(|v| -v).collect();
                    add_into(&mut grads, *b, &neg, self.nodes[b.0].value.len());
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.values();
                    let bv = self.nodes[b.0].value.values();
                    let da: Vec<f64> = up.iter().zip(bv).map(|(u, y)| u * y).collect();
                    let db: Vec<f64> = up.iter().zip(av).map(|(u, x)| u * x).collect();
                    add_into(&mut grads, *a, &da, av.len());
                    add_into(&mut grads, *b, &db, bv.len());
                }
                Op::AffineConst { x, scale } => {
                    let dx: Vec<f64> = up.iter().map(|u| u * scale).collect();
                    add_into(&mut grads, *x, &dx, self.nodes[x.0].value.len());
                }
                Op::MatVec { w, x } => {
                    let ws = self.nodes[w.0].value.shape();
                    let (m, n) = (ws[0], ws[1]);
                    let wv = self.nodes[w.0].value.values();
                    let xv = self.nodes[x.0].value.values();
                    let mut dw = vec![0.0; m * n];
                    let mut dx = vec![0.0; n];
                    for i in 0..m {
                        let u = up[i];
                        if u == 0.0 {
                            continue;
                        }
                        let row = &wv[i * n..(i + 1) * n];
                        let drow = &mut dw[i * n..(i + 1) * n];
                        for j in 0..n {
                            drow[j] += u * xv[j];
                            dx[j] += u * row[j];
                        }
                    }
                    add_into(&mut grads, *w, &dw, m * n);
                    add_into(&mut grads, *x, &dx, n);
                }
                Op::Sigmoid(x) => {
                    let out = node.value.values();
                    let dx: Vec<f64> = up.iter().zip(out).map(|(u, s)| u * s * (1.0 - s)).collect();
                    add_into(&mut grads, *x, &dx, out.len());
                }
                Op::Relu6(x) => {
                    let xin = self.nodes[x.0].value.values();
                    let dx: Vec<f64> = up
                        .iter()
                        .zip(xin)
                        .map(|(u, &v)| u * relu6_grad_scalar(v))
                        .collect();
                    add_into(&mut grads, *x, &dx, xin.len());
                }
                Op::LogSigmoid(x) => {
                    // d/dx log(sigmoid(x)) = 1 - sigmoid(x)
                    let xin = self.nodes[x.0].value.values();
                    let dx: Vec<f64> = up
                        .iter()
                        .zip(xin)
                        .map(|(u, &v)| u * (1.0 - sigmoid_scalar(v)))
                        .collect();
                    add_into(&mut grads, *x, &dx, xin.len());
                }
                Op::Log(x) => {
                    let xin = self.nodes[x.0].value.values();
                    let dx: Vec<f64> = up.iter().zip(xin).map(|(u, v)| u / v).collect();
                    add_into(&mut grads, *x, &dx, xin.len());
                }
                Op::AbsPow { x, exponent } => {
                    let xin = self.nodes[x.0].value.values();
                    let dx: Vec<f64> = up
                        .iter()
                        .zip(xin)
                        .map(|(u, &v)| {
                            if *exponent == 2 {
                                u * 2.0 * v
                            } else {
                                u * sign0(v)
                            }
                        })
                        .collect();
                    add_into(&mut grads, *x, &dx, xin.len());
                }
                Op::Concat(a, b) => {
                    let alen = self.nodes[a.0].value.len();
                    add_into(&mut grads, *a, &up[..alen], alen);
                    add_into(&mut grads, *b, &up[alen..], up.len() - alen);
                }
                Op::Slice { x, start, len } => {
                    let xlen = self.nodes[x.0].value.len();
                    let mut dx = vec![0.0; xlen];
                    dx[*start..start + len].copy_from_slice(&up);
                    add_into(&mut grads, *x, &dx, xlen);
                }
                Op::Sum(x) => {
                    let xlen = self.nodes[x.0].value.len();
                    let dx = vec![up[0]; xlen];
                    add_into(&mut grads, *x, &dx, xlen);
                }
                Op::Mean(x) => {
                    let xlen = self.nodes[x.0].value.len();
                    let dx = vec![up[0] / xlen as f64; xlen];
                    add_into(&mut grads, *x, &dx, xlen);
                }
                Op::Norm2(x) => {
                    let norm = node.value.values()[0];
                    let xin = self.nodes[x.0].value.values();
                    let dx: Vec<f64> = if norm == 0.0 {
                        vec![0.0; xin.len()]
                    } else {
                        xin.iter().map(|v| up[0] * v / norm).collect()
                    };
                    add_into(&mut grads, *x, &dx, xin.len());
                }
                Op::MaxOf(xs) => {
                    let best = node.value.values()[0];
                    let winner = xs
                        .iter()
                        .find(|&&id| self.nodes[id.0].value.values()[0] == best)
                        .copied()
                        .expect("max_of winner present");
                    add_into(&mut grads, winner, &up, 1);
                }
                Op::EmbedRows {
                    table,
                    rows,
                    skip_grad_row,
                } => {
                    let ts = self.nodes[table.0].value.shape();
                    let (vocab, dim) = (ts[0], ts[1]);
                    let mut dt = vec![0.0; vocab * dim];
                    for (i, &r) in rows.iter().enumerate() {
                        if Some(r) == *skip_grad_row {
                            continue;
                        }
                        for j in 0..dim {
                            dt[r * dim + j] += up[i * dim + j];
                        }
                    }
                    add_into(&mut grads, *table, &dt, vocab * dim);
                }
                Op::Conv2dFixed {
                    x,
                    kernel,
                    in_ch,
                    out_ch,
                    h,
                    w,
                } => {
                    let kv = kernel.values();
                    let mut dx = vec![0.0; in_ch * h * w];
                    for oc in 0..*out_ch {
                        for ic in 0..*in_ch {
                            let kbase = (oc * in_ch + ic) * 9;
                            for y in 0..*h {
                                for xq in 0..*w {
                                    let u = up[oc * h * w + y * w + xq];
                                    if u == 0.0 {
                                        continue;
                                    }
                                    for ky in 0..3usize {
                                        let sy = y as isize + ky as isize - 1;
                                        if sy < 0 || sy >= *h as isize {
                                            continue;
                                        }
                                        for kx in 0..3usize {
                                            let sx = xq as isize + kx as isize - 1;
                                            if sx < 0 || sx >= *w as isize {
                                                continue;
                                            }
                                            dx[ic * h * w + sy as usize * w + sx as usize] +=
                                                u * kv[kbase + ky * 3 + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    add_into(&mut grads, *x, &dx, in_ch * h * w);
                }
            }
        }
        Ok(())
    }
}

fn add_into(grads: &mut [Option<Vec<f64>>], id: NodeId, delta: &[f64], len: usize) {
    let slot = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
    for (g, d) in slot.iter_mut().zip(delta) {
        *g += d;
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn relu6_eager(v: f64) -> f64 {
    relu6_scalar(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::store::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

    fn store_with(name: &str, values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.register(name, RealArray::vector(values).unwrap()).unwrap();
        s
    }

    #[test]
    fn sum_loss_gives_ones() {
        let mut store = store_with("p", vec![1.0, 2.0, 3.0]);
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grads("p").unwrap().values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_square_norm_grad_is_param() {
        let mut store = store_with("p", vec![1.5, -2.0]);
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        let sq = tape.abs_pow(p, 2).unwrap();
        let s = tape.sum(sq).unwrap();
        let loss = tape.affine(s, 0.5, 0.0).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grads("p").unwrap().values(), &[1.5, -2.0]);
    }

    #[test]
    fn disconnected_param_gets_zero_grad() {
        let mut store = store_with("used", vec![2.0]);
        store
            .register("unused", RealArray::vector(vec![5.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, "used").unwrap();
        let _ = tape.param(&store, "unused").unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grads("unused").unwrap().values(), &[0.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = store_with("p", vec![1.0]);
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss, &mut store).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grads("p").unwrap().values(), &[2.0]);
        store.zero_grads();
        assert_eq!(store.grads("p").unwrap().values(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut store = store_with("p", vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        assert!(tape.backward(p, &mut store).is_err());
    }

    #[test]
    fn param_node_deduplicated() {
        let mut store = store_with("p", vec![1.0]);
        let mut tape = Tape::new();
        let a = tape.param(&store, "p").unwrap();
        let b = tape.param(&store, "p").unwrap();
        assert_eq!(a, b);
        // y = p * p -> dy/dp = 2p
        let y = tape.mul(a, b).unwrap();
        let loss = tape.sum(y).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grads("p").unwrap().values(), &[2.0]);
    }

    #[test]
    fn log_sigmoid_matches_naive_composition() {
        let store = store_with("p", vec![0.3, -1.7, 4.0]);
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        let ls = tape.log_sigmoid(p).unwrap();
        let sg = tape.sigmoid(p).unwrap();
        let lg = tape.log(sg).unwrap();
        for (a, b) in tape.value(ls).values().iter().zip(tape.value(lg).values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn max_of_routes_to_first_argmax() {
        let mut store = store_with("p", vec![2.0, 2.0, 1.0]);
        let mut tape = Tape::new();
        let p = tape.param(&store, "p").unwrap();
        let a = tape.slice(p, 0, 1).unwrap();
        let b = tape.slice(p, 1, 1).unwrap();
        let c = tape.slice(p, 2, 1).unwrap();
        let m = tape.max_of(vec![a, b, c]).unwrap();
        tape.backward(m, &mut store).unwrap();
        assert_eq!(store.grads("p").unwrap().values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn adam_on_tape_gradient_descends_quadratic() {
        let mut store = store_with("p", vec![3.0]);
        for _ in 0..200 {
            let mut tape = Tape::new();
            let p = tape.param(&store, "p").unwrap();
            let sq = tape.abs_pow(p, 2).unwrap();
            let loss = tape.sum(sq).unwrap();
            tape.backward(loss, &mut store).unwrap();
            store.adam_step(0.1, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        }
        assert!(store.values("p").unwrap().values()[0].abs() < 0.5);
    }
}
