use alloc::string::ToString;

use crate::error::{invalid, shape_err, Error, Result};
use crate::netcore::params::ParamSet;
use crate::real::Real;

/// One momentum-SGD update: `v ← m·v + g`, `p ← p − lr·v`.
///
/// `step` only labels the error raised for a non-finite gradient; in that
/// case neither `params` nor `velocity` is touched.
pub fn sgd_step<T: Real>(
    params: &mut ParamSet<T>,
    velocity: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    lr: T,
    momentum: T,
    step: usize,
) -> Result<()> {
    if !(lr > T::zero()) || !lr.is_finite() {
        return Err(invalid!("learning rate must be positive, got {:?}", lr));
    }
    if !(momentum >= T::zero()) || !momentum.is_finite() {
        return Err(invalid!("momentum must be non-negative, got {:?}", momentum));
    }
    if !params.same_layout(grads) || !params.same_layout(velocity) {
        return Err(shape_err!("parameter, gradient and velocity layouts differ"));
    }
    if !grads.all_finite() {
        return Err(Error::Training {
            step,
            reason: "non-finite gradient".to_string(),
        });
    }
    for ((p, v), g) in params.tensors_mut().zip(velocity.tensors_mut()).zip(grads.iter().map(|(_, g)| g)) {
        for ((pi, vi), &gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = momentum * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}
