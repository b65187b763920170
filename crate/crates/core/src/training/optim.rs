//! AdamW with decoupled weight decay and global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Real};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments plus the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub m: ParamSet<F>,
    pub v: ParamSet<F>,
    pub t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamSet<F>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One AdamW update. Decay is applied as `p ← p − lr·wd·p` before the Adam
/// delta. Non-finite gradients abort without touching `params` or `state`.
pub fn optimizer_step<F: Real>(
    params: &mut ParamSet<F>,
    grads: &ParamSet<F>,
    lr: f64,
    weight_decay: f64,
    state: &mut AdamState<F>,
) -> Result<()> {
    params.check_compatible(grads)?;
    params.check_compatible(&state.m)?;
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let tensors = params.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (k, p) in tensors.iter_mut().enumerate() {
        let g = &grads.tensors()[k].data;
        let m = &mut ms[k].data;
        let v = &mut vs[k].data;
        for i in 0..p.data.len() {
            let gi = g[i].as_f64();
            let mi = BETA1 * m[i].as_f64() + (1.0 - BETA1) * gi;
            let vi = BETA2 * v[i].as_f64() + (1.0 - BETA2) * gi * gi;
            m[i] = F::from_f64_lossy(mi);
            v[i] = F::from_f64_lossy(vi);
            let mut x = p.data[i].as_f64();
            x -= lr * weight_decay * x;
            x -= lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
            p.data[i] = F::from_f64_lossy(x);
        }
    }
    Ok(())
}

/// Rescales all gradient sets jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping. `max_norm = 0` disables.
pub fn clip_global_norm<F: Real>(grads: &mut [&mut ParamSet<F>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.global_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = F::from_f64_lossy(max_norm / norm);
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}
