//! Named parameter blocks with gradient accumulators and Adam state.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::array::RealArray;

/// One named block: parameter values, accumulated gradients, and the
/// per-block adaptive-moment state.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub values: RealArray,
    pub grads: RealArray,
    pub first_moment: RealArray,
    pub second_moment: RealArray,
    pub step: u64,
}

impl ParamBlock {
    fn new(values: RealArray) -> Self {
        let shape = values.shape().to_vec();
        Self {
            values,
            grads: RealArray::zeros(shape.clone()),
            first_moment: RealArray::zeros(shape.clone()),
            second_moment: RealArray::zeros(shape),
            step: 0,
        }
    }
}

/// Name-ordered parameter store. Blocks are registered once; gradients
/// accumulate until explicitly zeroed.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    blocks: BTreeMap<String, ParamBlock>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, values: RealArray) -> Result<()> {
        if self.blocks.contains_key(name) {
            return Err(Error::Data(format!("parameter block {name:?} already registered")));
        }
        self.blocks.insert(name.to_string(), ParamBlock::new(values));
        Ok(())
    }

    /// Registers a block with uniform init in [-s, s], s = 1/sqrt(fan_in).
    pub fn register_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<()> {
        let s = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-s..=s)).collect();
        self.register(name, RealArray::new(shape, values)?)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.blocks.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.blocks.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, name: &str) -> Result<&ParamBlock> {
        self.blocks
            .get(name)
            .ok_or_else(|| Error::Data(format!("unknown parameter block {name:?}")))
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut ParamBlock> {
        self.blocks
            .get_mut(name)
            .ok_or_else(|| Error::Data(format!("unknown parameter block {name:?}")))
    }

    pub fn values(&self, name: &str) -> Result<&RealArray> {
        Ok(&self.block(name)?.values)
    }

    pub fn grads(&self, name: &str) -> Result<&RealArray> {
        Ok(&self.block(name)?.grads)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamBlock)> {
        self.blocks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for block in self.blocks.values_mut() {
            block.grads.values_mut().fill(0.0);
        }
    }

    /// Accumulates `delta` into the named gradient block.
    pub fn accumulate_grad(&mut self, name: &str, delta: &[f64]) -> Result<()> {
        let block = self.block_mut(name)?;
        if block.grads.len() != delta.len() {
            return Err(Error::ShapeMismatch {
                context: "accumulate_grad",
                left: block.grads.shape().to_vec(),
                right: vec![delta.len()],
            });
        }
        for (g, d) in block.grads.values_mut().iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    /// Global L2 norm of the gradients of the given blocks.
    pub fn grad_norm<'a>(&self, names: impl Iterator<Item = &'a str>) -> Result<f64> {
        let mut sq = 0.0;
        for name in names {
            for &g in self.block(name)?.grads.values() {
                sq += g * g;
            }
        }
        Ok(sq.sqrt())
    }

    /// Scales the gradients of the given blocks so their global norm does not
    /// exceed `max_norm`.
    pub fn clip_grads<'a>(
        &mut self,
        names: impl Iterator<Item = &'a str> + Clone,
        max_norm: f64,
    ) -> Result<()> {
        let norm = self.grad_norm(names.clone())?;
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for name in names {
                for g in self.block_mut(name)?.grads.values_mut() {
                    *g *= scale;
                }
            }
        }
        Ok(())
    }

    /// Bias-corrected adaptive-moment update on every block, then zeroes all
    /// gradients and increments step counters.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
        let names: Vec<String> = self.blocks.keys().cloned().collect();
        self.adam_step_subset(names.iter().map(|s| s.as_str()), lr, beta1, beta2, eps)
    }

    /// Adam update restricted to the named blocks; other blocks (params,
    /// moments, step counters) are untouched. Gradients of updated blocks are
    /// zeroed afterward.
    pub fn adam_step_subset<'a>(
        &mut self,
        names: impl Iterator<Item = &'a str>,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<()> {
        if lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("adam lr must be > 0, got {lr}")));
        }
        for name in names {
            let block = self.block_mut(name)?;
            block.step += 1;
            let t = block.step as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            let n = block.values.len();
            for i in 0..n {
                let g = block.grads.values()[i];
                let m = beta1 * block.first_moment.values()[i] + (1.0 - beta1) * g;
                let v = beta2 * block.second_moment.values()[i] + (1.0 - beta2) * g * g;
                block.first_moment.values_mut()[i] = m;
                block.second_moment.values_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                block.values.values_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            block.grads.values_mut().fill(0.0);
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.register(name, RealArray::vector(values).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_grad_step_is_noop_on_params() {
        let mut s = store_with("p", vec![1.0, -2.0, 3.5]);
        let before = s.values("p").unwrap().values().to_vec();
        s.adam_step(0.1, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        assert_eq!(s.values("p").unwrap().values(), before.as_slice());
        assert_eq!(s.block("p").unwrap().step, 1);
    }

    #[test]
    fn first_step_magnitude_close_to_lr() {
        let mut s = store_with("p", vec![0.0, 0.0]);
        s.accumulate_grad("p", &[1.0, -3.0]).unwrap();
        let lr = 0.0001;
        s.adam_step(lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).unwrap();
        for (i, sign) in [(0usize, -1.0f64), (1, 1.0)] {
            let v = s.values("p").unwrap().values()[i];
            assert!((v.abs() - lr).abs() < 1e-6, "step {v}");
            assert!(v * sign > 0.0);
        }
        // grads zeroed afterward
        assert!(s.grads("p").unwrap().values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_positive_lr_rejected() {
        let mut s = store_with("p", vec![1.0]);
        assert!(s.adam_step(0.0, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).is_err());
        assert!(s.adam_step(-1.0, ADAM_BETA1, ADAM_BETA2, ADAM_EPS).is_err());
    }

    #[test]
    fn subset_step_leaves_other_blocks_untouched() {
        let mut s = store_with("a", vec![1.0]);
        s.register("b", RealArray::vector(vec![2.0]).unwrap()).unwrap();
        s.accumulate_grad("a", &[1.0]).unwrap();
        s.accumulate_grad("b", &[1.0]).unwrap();
        s.adam_step_subset(["a"].into_iter(), 0.1, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
            .unwrap();
        assert_eq!(s.values("b").unwrap().values(), &[2.0]);
        assert_eq!(s.block("b").unwrap().step, 0);
        // b's gradient is preserved until its own step or an explicit zero
        assert_eq!(s.grads("b").unwrap().values(), &[1.0]);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut s = store_with("p", vec![0.0, 0.0]);
        s.accumulate_grad("p", &[3.0, 4.0]).unwrap();
        s.clip_grads(["p"].into_iter(), 1.0).unwrap();
        let g = s.grads("p").unwrap().values().to_vec();
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
