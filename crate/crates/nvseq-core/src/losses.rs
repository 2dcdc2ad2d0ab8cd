//! Training losses and evaluation metrics over 20-D frame sequences.
//!
//! The training losses are built on the tape so they can be differentiated;
//! eager wrappers evaluate them on plain data. Frames are compared in
//! normalized space.

use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamStore, RealArray, Tape};

pub const N_AU: usize = crate::features::NUM_AU;
pub const N_POSE: usize = crate::features::NUM_POSE;

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    /// Pose-term weight in the weighted frame loss.
    pub gamma: f64,
    /// Continuity-loss weight in the combined loss.
    pub alpha: f64,
    /// Adjacent-frame count for the continuity loss.
    pub n_b: usize,
    /// 2 = squared per-dimension terms, 1 = absolute.
    pub exponent: u32,
    /// When true, the continuity sum is averaged over contributing frames
    /// instead of the printed 1/n_b factor.
    pub continuity_mean_frames: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 8.1,
            alpha: 0.1,
            n_b: 3,
            exponent: 2,
            continuity_mean_frames: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.n_b < 2 {
            return Err(Error::InvalidConfig(format!("n_b must be >= 2, got {}", self.n_b)));
        }
        if self.exponent != 1 && self.exponent != 2 {
            return Err(Error::InvalidConfig(format!(
                "exponent must be 1 or 2, got {}",
                self.exponent
            )));
        }
        Ok(())
    }
}

fn check_equal_lengths(gt: usize, pred: usize) -> Result<()> {
    if gt != pred {
        return Err(Error::ShapeMismatch {
            context: "loss sequence lengths",
            left: vec![gt],
            right: vec![pred],
        });
    }
    Ok(())
}

/// Weighted frame loss on the tape: per frame
/// (1/n_au)*sum |au diff|^p + (gamma/n_pose)*sum |pose diff|^p, frame-averaged.
pub fn mse_loss_node(
    tape: &mut Tape,
    gt: &[NodeId],
    pred: &[NodeId],
    cfg: &LossConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    check_equal_lengths(gt.len(), pred.len())?;
    if gt.is_empty() {
        return Err(Error::Data("mse_loss over empty sequence".into()));
    }
    let mut frame_losses = Vec::with_capacity(gt.len());
    for (&g, &p) in gt.iter().zip(pred) {
        let diff = tape.sub(g, p)?;
        let powed = tape.abs_pow(diff, cfg.exponent)?;
        let au = tape.slice(powed, 0, N_AU)?;
        let pose = tape.slice(powed, N_AU, N_POSE)?;
        let au_sum = tape.sum(au)?;
        let pose_sum = tape.sum(pose)?;
        let au_term = tape.affine(au_sum, 1.0 / N_AU as f64, 0.0)?;
        let pose_term = tape.affine(pose_sum, cfg.gamma / N_POSE as f64, 0.0)?;
        frame_losses.push(tape.add(au_term, pose_term)?);
    }
    tape.mean_of_scalars(&frame_losses)
}

/// Continuity loss on the tape, exactly as printed: with frames indexed
/// 0..l-1, loss(i,j) = ||(gt[i-j]-gt[i-j-1]) - (pred[i-j]-pred[i-j-1])||_2,
/// and the result is (1/n_b) * sum_{i=n_b}^{l-1} max_{j=1..n_b-1} loss(i,j).
pub fn continuity_loss_node(
    tape: &mut Tape,
    gt: &[NodeId],
    pred: &[NodeId],
    cfg: &LossConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    check_equal_lengths(gt.len(), pred.len())?;
    let l = gt.len();
    if l < cfg.n_b {
        return Err(Error::Data(format!(
            "continuity_loss needs length >= n_b ({}), got {l}",
            cfg.n_b
        )));
    }
    // gt/pred frame-to-frame differences are reused across i.
    let mut gt_diffs = Vec::with_capacity(l.saturating_sub(1));
    let mut pred_diffs = Vec::with_capacity(l.saturating_sub(1));
    for t in 1..l {
        gt_diffs.push(tape.sub(gt[t], gt[t - 1])?);
        pred_diffs.push(tape.sub(pred[t], pred[t - 1])?);
    }
    let mut terms = Vec::new();
    for i in cfg.n_b..l {
        let mut candidates = Vec::with_capacity(cfg.n_b - 1);
        for j in 1..cfg.n_b {
            // difference between frames (i-j) and (i-j-1) lives at index i-j-1
            let idx = i - j - 1;
            let d = tape.sub(gt_diffs[idx], pred_diffs[idx])?;
            candidates.push(tape.norm2(d)?);
        }
        terms.push(tape.max_of(candidates)?);
    }
    if terms.is_empty() {
        return tape.scalar(0.0);
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    let denom = if cfg.continuity_mean_frames {
        terms.len() as f64
    } else {
        cfg.n_b as f64
    };
    tape.affine(acc, 1.0 / denom, 0.0)
}

/// Combined training loss: mse + alpha * continuity.
pub fn total_loss_node(
    tape: &mut Tape,
    gt: &[NodeId],
    pred: &[NodeId],
    cfg: &LossConfig,
) -> Result<NodeId> {
    let mse = mse_loss_node(tape, gt, pred, cfg)?;
    let con = continuity_loss_node(tape, gt, pred, cfg)?;
    let weighted = tape.affine(con, cfg.alpha, 0.0)?;
    tape.add(mse, weighted)
}

fn frames_to_nodes(tape: &mut Tape, frames: &[[f64; 20]]) -> Result<Vec<NodeId>> {
    frames
        .iter()
        .map(|f| tape.input_vector(f.to_vec()))
        .collect()
}

/// Eager evaluation of the weighted frame loss.
pub fn mse_loss(gt: &[[f64; 20]], pred: &[[f64; 20]], cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let g = frames_to_nodes(&mut tape, gt)?;
    let p = frames_to_nodes(&mut tape, pred)?;
    let node = mse_loss_node(&mut tape, &g, &p, cfg)?;
    Ok(tape.value(node).values()[0])
}

/// Eager evaluation of the continuity loss.
pub fn continuity_loss(gt: &[[f64; 20]], pred: &[[f64; 20]], cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let g = frames_to_nodes(&mut tape, gt)?;
    let p = frames_to_nodes(&mut tape, pred)?;
    let node = continuity_loss_node(&mut tape, &g, &p, cfg)?;
    Ok(tape.value(node).values()[0])
}

/// Eager evaluation of the combined loss.
pub fn total_loss(gt: &[[f64; 20]], pred: &[[f64; 20]], cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let g = frames_to_nodes(&mut tape, gt)?;
    let p = frames_to_nodes(&mut tape, pred)?;
    let node = total_loss_node(&mut tape, &g, &p, cfg)?;
    Ok(tape.value(node).values()[0])
}

/// Evaluation metrics: unweighted frame loss (pose weight 1) averaged over
/// samples, and mean per-frame cosine similarity (zero vectors score 0).
pub fn eval_mse_cosine(
    gt: &[Vec<[f64; 20]>],
    pred: &[Vec<[f64; 20]>],
) -> Result<(f64, f64)> {
    if gt.is_empty() || gt.len() != pred.len() {
        return Err(Error::Data(format!(
            "eval_mse_cosine needs matched non-empty sets, got {} vs {}",
            gt.len(),
            pred.len()
        )));
    }
    let mut mse_acc = 0.0;
    let mut cos_acc = 0.0;
    let mut frame_count = 0usize;
    for (gs, ps) in gt.iter().zip(pred) {
        check_equal_lengths(gs.len(), ps.len())?;
        if gs.is_empty() {
            return Err(Error::Data("eval_mse_cosine: empty sequence".into()));
        }
        let mut sample_mse = 0.0;
        for (g, p) in gs.iter().zip(ps) {
            let mut au = 0.0;
            for i in 0..N_AU {
                au += (g[i] - p[i]).powi(2);
            }
            let mut pose = 0.0;
            for i in N_AU..20 {
                pose += (g[i] - p[i]).powi(2);
            }
            sample_mse += au / N_AU as f64 + pose / N_POSE as f64;
            cos_acc += cosine(g, p);
            frame_count += 1;
        }
        mse_acc += sample_mse / gs.len() as f64;
    }
    Ok((mse_acc / gt.len() as f64, cos_acc / frame_count as f64))
}

fn cosine(a: &[f64; 20], b: &[f64; 20]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean absolute per-dimension reconstruction error, split into AU and pose
/// parts (L1).
pub fn reconstruction_error(
    gt: &[[f64; 20]],
    reconstructed: &[[f64; 20]],
) -> Result<(f64, f64)> {
    let mask = [true; 20];
    reconstruction_error_masked(gt, reconstructed, &vec![mask; gt.len()])
}

/// Masked variant: per frame, only dimensions marked true contribute; the
/// denominators count contributing (frame, dim) pairs.
pub fn reconstruction_error_masked(
    gt: &[[f64; 20]],
    reconstructed: &[[f64; 20]],
    masks: &[[bool; 20]],
) -> Result<(f64, f64)> {
    if gt.is_empty() || gt.len() != reconstructed.len() || gt.len() != masks.len() {
        return Err(Error::Data(format!(
            "reconstruction_error needs matched non-empty sets, got {}/{}/{}",
            gt.len(),
            reconstructed.len(),
            masks.len()
        )));
    }
    let mut au_sum = 0.0;
    let mut au_n = 0usize;
    let mut pose_sum = 0.0;
    let mut pose_n = 0usize;
    for ((g, r), m) in gt.iter().zip(reconstructed).zip(masks) {
        for i in 0..20 {
            if !m[i] {
                continue;
            }
            let err = (g[i] - r[i]).abs();
            if i < N_AU {
                au_sum += err;
                au_n += 1;
            } else {
                pose_sum += err;
                pose_n += 1;
            }
        }
    }
    let d_au = if au_n > 0 { au_sum / au_n as f64 } else { 0.0 };
    let d_pose = if pose_n > 0 { pose_sum / pose_n as f64 } else { 0.0 };
    Ok((d_au, d_pose))
}

/// GAN loss components over a batch of discriminator scores and image pairs:
/// the two-expectation adversarial term, mean absolute pixel error, and the
/// perceptual feature distance computed by the caller.
pub fn gan_losses(
    d_real: &[f64],
    d_fake: &[f64],
    g_out: &[f64],
    gt: &[f64],
    perceptual: f64,
) -> Result<(f64, f64, f64, f64)> {
    if d_real.is_empty() || d_real.len() != d_fake.len() {
        return Err(Error::Data(format!(
            "gan_losses needs matched non-empty score sets, got {} vs {}",
            d_real.len(),
            d_fake.len()
        )));
    }
    if g_out.len() != gt.len() || g_out.is_empty() {
        return Err(Error::Data("gan_losses needs matched image buffers".into()));
    }
    for &d in d_real.iter().chain(d_fake) {
        if !(0.0..=1.0).contains(&d) || d == 0.0 || d == 1.0 {
            return Err(Error::NumericFailure(format!(
                "discriminator score {d} outside (0,1)"
            )));
        }
    }
    let n = d_real.len() as f64;
    let l_gan = d_real.iter().map(|d| d.ln()).sum::<f64>() / n
        + d_fake.iter().map(|d| (1.0 - d).ln()).sum::<f64>() / n;
    let l_l1 =
        g_out.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / g_out.len() as f64;
    let total = l_gan + l_l1 + perceptual;
    Ok((l_gan, l_l1, perceptual, total))
}

/// Builds total_loss directly over parameter-driven prediction nodes and
/// constant ground truth; used by training and by gradient checks.
pub fn total_loss_from_frames(
    tape: &mut Tape,
    gt_frames: &[[f64; 20]],
    pred: &[NodeId],
    cfg: &LossConfig,
) -> Result<NodeId> {
    let gt_nodes = frames_to_nodes(tape, gt_frames)?;
    total_loss_node(tape, &gt_nodes, pred, cfg)
}

pub fn frame_constant(tape: &mut Tape, frame: &[f64; 20]) -> Result<NodeId> {
    tape.input_vector(frame.to_vec())
}

pub fn array_from_frame(frame: &[f64; 20]) -> Result<RealArray> {
    RealArray::vector(frame.to_vec())
}

/// Scratch store helper for loss gradient checks: frames as one block.
pub fn frames_param_store(name: &str, frames: &[[f64; 20]]) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    let mut flat = Vec::with_capacity(frames.len() * 20);
    for f in frames {
        flat.extend_from_slice(f);
    }
    store.register(name, RealArray::new(vec![frames.len(), 20], flat)?)?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error};

    fn frame(vals: &[(usize, f64)]) -> [f64; 20] {
        let mut f = [0.0; 20];
        for &(i, v) in vals {
            f[i] = v;
        }
        f
    }

    #[test]
    fn mse_zero_on_equal() {
        let cfg = LossConfig::default();
        let fs = vec![frame(&[(0, 0.5), (18, 0.2)]); 4];
        assert_eq!(mse_loss(&fs, &fs, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn mse_single_frame_au_diff() {
        let cfg = LossConfig::default();
        let gt = vec![frame(&[(0, 0.5)])];
        let pred = vec![frame(&[])];
        let v = mse_loss(&gt, &pred, &cfg).unwrap();
        assert!((v - 0.25 / 17.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mse_single_frame_pose_diff_gamma() {
        let cfg = LossConfig::default();
        let gt = vec![frame(&[(17, 0.1)])];
        let pred = vec![frame(&[])];
        let v = mse_loss(&gt, &pred, &cfg).unwrap();
        assert!((v - 8.1 * 0.01 / 3.0).abs() < 1e-12, "{v}");
        assert!((v - 0.027).abs() < 1e-12);
    }

    #[test]
    fn mse_symmetric_for_exponent_two() {
        let cfg = LossConfig::default();
        let gt = vec![frame(&[(1, 0.3), (19, -0.4)]), frame(&[(5, 0.9)])];
        let pred = vec![frame(&[(2, 0.1)]), frame(&[(5, 0.2), (17, 0.6)])];
        let a = mse_loss(&gt, &pred, &cfg).unwrap();
        let b = mse_loss(&pred, &gt, &cfg).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn continuity_zero_on_equal_and_constant_offset() {
        let cfg = LossConfig::default();
        let gt: Vec<[f64; 20]> = (0..6).map(|i| frame(&[(0, 0.1 * i as f64)])).collect();
        assert_eq!(continuity_loss(&gt, &gt, &cfg).unwrap(), 0.0);
        let offset: Vec<[f64; 20]> = gt
            .iter()
            .map(|f| {
                let mut g = *f;
                for v in &mut g {
                    *v += 0.37;
                }
                g
            })
            .collect();
        let v = continuity_loss(&gt, &offset, &cfg).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn continuity_hand_expanded_case() {
        // 1-D payload in slot 0: gt [0,1,2,3], pred [0,1,1,1], n_b=2 -> 0.5
        let cfg = LossConfig {
            n_b: 2,
            ..LossConfig::default()
        };
        let gt: Vec<[f64; 20]> = [0.0, 1.0, 2.0, 3.0].iter().map(|&v| frame(&[(0, v)])).collect();
        let pred: Vec<[f64; 20]> = [0.0, 1.0, 1.0, 1.0].iter().map(|&v| frame(&[(0, v)])).collect();
        let v = continuity_loss(&gt, &pred, &cfg).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn continuity_rejects_short_sequences() {
        let cfg = LossConfig::default(); // n_b = 3
        let gt = vec![frame(&[]); 2];
        assert!(continuity_loss(&gt, &gt, &cfg).is_err());
    }

    #[test]
    fn total_is_mse_plus_alpha_continuity() {
        let cfg = LossConfig::default();
        let gt: Vec<[f64; 20]> = (0..5).map(|i| frame(&[(3, 0.2 * i as f64)])).collect();
        let pred: Vec<[f64; 20]> = (0..5).map(|i| frame(&[(3, 0.15 * i as f64 + 0.1)])).collect();
        let m = mse_loss(&gt, &pred, &cfg).unwrap();
        let c = continuity_loss(&gt, &pred, &cfg).unwrap();
        let t = total_loss(&gt, &pred, &cfg).unwrap();
        assert!((t - (m + cfg.alpha * c)).abs() < 1e-14);

        let cfg0 = LossConfig { alpha: 0.0, ..cfg };
        assert!((total_loss(&gt, &pred, &cfg0).unwrap() - m).abs() < 1e-15);
    }

    #[test]
    fn total_arithmetic_example() {
        // mse=0.125, con=0.5, alpha=0.1 -> 0.175
        assert!((0.125f64 + 0.1 * 0.5 - 0.175).abs() < 1e-15);
    }

    #[test]
    fn eval_metrics_on_identical_and_orthogonal() {
        let a = vec![vec![frame(&[(0, 1.0)]), frame(&[(1, 0.5)])]];
        let (d_mse, d_cos) = eval_mse_cosine(&a, &a).unwrap();
        assert_eq!(d_mse, 0.0);
        assert!((d_cos - 1.0).abs() < 1e-15);

        let b = vec![vec![frame(&[(2, 1.0)]), frame(&[(3, 0.5)])]];
        let (_, d_cos) = eval_mse_cosine(&a, &b).unwrap();
        assert_eq!(d_cos, 0.0);
    }

    #[test]
    fn reconstruction_error_formulas() {
        let gt = vec![frame(&[(0, 0.17)])];
        let rec = vec![frame(&[])];
        let (d_au, d_pose) = reconstruction_error(&gt, &rec).unwrap();
        assert!((d_au - 0.01).abs() < 1e-15);
        assert_eq!(d_pose, 0.0);

        let gt = vec![frame(&[(17, 0.03), (18, 0.03), (19, 0.03)])];
        let rec = vec![frame(&[])];
        let (d_au, d_pose) = reconstruction_error(&gt, &rec).unwrap();
        assert_eq!(d_au, 0.0);
        assert!((d_pose - 0.03).abs() < 1e-15);
    }

    #[test]
    fn gan_loss_at_half_scores() {
        let (l_gan, l_l1, l_p, total) =
            gan_losses(&[0.5, 0.5], &[0.5, 0.5], &[0.3], &[0.3], 0.0).unwrap();
        assert!((l_gan - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((l_gan + 1.3863).abs() < 1e-4);
        assert_eq!(l_l1, 0.0);
        assert_eq!(l_p, 0.0);
        assert!((total - l_gan).abs() < 1e-15);
    }

    #[test]
    fn gan_loss_rejects_out_of_range_scores() {
        assert!(gan_losses(&[1.0], &[0.5], &[0.0], &[0.0], 0.0).is_err());
        assert!(gan_losses(&[0.5], &[0.0], &[0.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let cfg = LossConfig::default();
        let gt: Vec<[f64; 20]> = (0..5)
            .map(|i| {
                let mut f = [0.0; 20];
                for (d, v) in f.iter_mut().enumerate() {
                    *v = ((i * 20 + d) as f64 * 0.7).sin() * 0.4 + 0.5;
                }
                f
            })
            .collect();
        let pred0: Vec<[f64; 20]> = (0..5)
            .map(|i| {
                let mut f = [0.0; 20];
                for (d, v) in f.iter_mut().enumerate() {
                    *v = ((i * 20 + d) as f64 * 1.3).cos() * 0.4 + 0.5;
                }
                f
            })
            .collect();

        let mut store = frames_param_store("pred", &pred0).unwrap();
        let build = |s: &ParamStore| -> crate::error::Result<(Tape, NodeId)> {
            let mut tape = Tape::new();
            let block = tape.param(s, "pred")?;
            let pred_nodes: Vec<NodeId> = (0..5)
                .map(|i| tape.slice(block, i * 20, 20))
                .collect::<crate::error::Result<_>>()?;
            let loss = total_loss_from_frames(&mut tape, &gt, &pred_nodes, &cfg)?;
            Ok((tape, loss))
        };

        let (tape, loss) = build(&store).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let analytic = store.grads("pred").unwrap().values().to_vec();

        let numeric = finite_diff_grad(
            &mut store,
            |s| {
                let (tape, loss) = build(s)?;
                Ok(tape.value(loss).values()[0])
            },
            1e-6,
        )
        .unwrap();
        for (i, (&a, &n)) in analytic.iter().zip(&numeric["pred"]).enumerate() {
            assert!(
                relative_error(a, n) < 1e-4,
                "coord {i}: analytic {a} vs numeric {n}"
            );
        }
    }
}
