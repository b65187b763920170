use crate::error::{Error, Result};
use crate::nn::{ParamSet, Real};

use super::EncoderParams;

/// `target ← κ·target + (1−κ)·student`, elementwise over every tensor.
/// Arithmetic is carried out in f64 and rounded to the storage type.
pub fn ema_update_params<F: Real>(
    target: &mut ParamSet<F>,
    student: &ParamSet<F>,
    kappa: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidArgument(format!(
            "EMA decay must lie in [0,1], got {kappa}"
        )));
    }
    target.check_compatible(student)?;
    let keep = kappa;
    let take = 1.0 - kappa;
    for (t, s) in target.tensors_mut().iter_mut().zip(student.tensors()) {
        for (x, &y) in t.data.iter_mut().zip(&s.data) {
            *x = F::from_f64_lossy(keep * x.as_f64() + take * y.as_f64());
        }
    }
    Ok(())
}

pub fn ema_update(target: &mut EncoderParams, student: &EncoderParams, kappa: f64) -> Result<()> {
    if target.config != student.config {
        return Err(Error::ShapeMismatch(
            "EMA target and student use different architectures".into(),
        ));
    }
    ema_update_params(&mut target.tensors, &student.tensors, kappa)
}
