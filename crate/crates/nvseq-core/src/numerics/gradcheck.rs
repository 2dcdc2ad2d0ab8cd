//! Central finite-difference gradients — the independent oracle the analytic
//! backward pass is validated against.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::store::ParamStore;
use crate::numerics::tape::{NodeId, Tape};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central differences over every coordinate of every block.
/// `f` must be a pure function of the store's parameter values.
pub fn finite_diff_grad<F>(
    store: &mut ParamStore,
    mut f: F,
    eps: f64,
) -> Result<BTreeMap<String, Vec<f64>>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("eps must be > 0, got {eps}")));
    }
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut out = BTreeMap::new();
    for name in names {
        let n = store.values(&name)?.len();
        let mut grads = vec![0.0; n];
        for i in 0..n {
            grads[i] = central_diff(store, &mut f, eps, &name, i)?;
        }
        out.insert(name, grads);
    }
    Ok(out)
}

/// Central difference for a single (block, coordinate) pair.
pub fn finite_diff_coord<F>(
    store: &mut ParamStore,
    f: F,
    eps: f64,
    name: &str,
    index: usize,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidConfig(format!("eps must be > 0, got {eps}")));
    }
    let mut f = f;
    central_diff(store, &mut f, eps, name, index)
}

fn central_diff<F>(
    store: &mut ParamStore,
    f: &mut F,
    eps: f64,
    name: &str,
    index: usize,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let original = store.values(name)?.values()[index];
    store.block_mut(name)?.values.values_mut()[index] = original + eps;
    let plus = f(store);
    store.block_mut(name)?.values.values_mut()[index] = original - eps;
    let minus = f(store);
    store.block_mut(name)?.values.values_mut()[index] = original;
    let (plus, minus) = (plus?, minus?);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite("finite_diff_grad function output"));
    }
    Ok((plus - minus) / (2.0 * eps))
}

/// Relative error with an absolute floor for near-zero pairs.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_kink: usize,
    pub max_rel_err: f64,
    pub worst_coord: Option<(String, usize)>,
}

/// Compares analytic gradients against central differences on randomly
/// sampled parameter coordinates. Coordinates whose perturbation interval
/// crosses a relu6 kink (detected by comparing activation patterns at the
/// two perturbed points) are skipped; sampling continues until `target`
/// coordinates have been checked or the attempt budget runs out.
pub fn check_grads_sampled<F, R>(
    store: &mut ParamStore,
    forward: F,
    rng: &mut R,
    target: usize,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(Tape, NodeId)>,
    R: Rng,
{
    store.zero_grads();
    let (tape, loss) = forward(store)?;
    tape.backward(loss, store)?;
    let analytic: BTreeMap<String, Vec<f64>> = store
        .iter()
        .map(|(name, block)| (name.to_string(), block.grads.values().to_vec()))
        .collect();
    store.zero_grads();

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kink: 0,
        max_rel_err: 0.0,
        worst_coord: None,
    };
    let budget = target * 4;
    for _ in 0..budget {
        if report.checked >= target {
            break;
        }
        let name = &names[rng.gen_range(0..names.len())];
        let len = store.values(name)?.len();
        let idx = rng.gen_range(0..len);

        let original = store.values(name)?.values()[idx];
        store.block_mut(name)?.values.values_mut()[idx] = original + eps;
        let plus = forward(store);
        store.block_mut(name)?.values.values_mut()[idx] = original - eps;
        let minus = forward(store);
        store.block_mut(name)?.values.values_mut()[idx] = original;
        let ((tape_p, loss_p), (tape_m, loss_m)) = (plus?, minus?);
        if tape_p.relu6_pattern() != tape_m.relu6_pattern() {
            report.skipped_kink += 1;
            continue;
        }
        let numeric = (tape_p.value(loss_p).values()[0] - tape_m.value(loss_m).values()[0])
            / (2.0 * eps);
        let rel = relative_error(analytic[name][idx], numeric);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_coord = Some((name.clone(), idx));
        }
        if rel >= tol {
            return Err(Error::NumericFailure(format!(
                "gradient mismatch at {name}[{idx}]: analytic {} vs numeric {numeric} (rel {rel:.3e})",
                analytic[name][idx]
            )));
        }
        report.checked += 1;
    }
    if report.checked < target {
        return Err(Error::NumericFailure(format!(
            "only {} of {target} coordinates checked ({} kink skips)",
            report.checked, report.skipped_kink
        )));
    }
    Ok(report)
}
