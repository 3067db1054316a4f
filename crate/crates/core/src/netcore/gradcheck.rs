use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::netcore::params::ParamSet;
use crate::rng::RngStream;

/// Minimum number of scalars compared (all of them when the model is smaller).
pub const MIN_CHECKED: usize = 200;

/// Floor on the denominator of the relative error.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameter name and offset of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: (f64, f64),
}

/// `|a − n| / max(|a|, |n|, 1e−8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` (the gradient of `loss_fn` at `params`) against
/// central differences with step `step` on `count.max(200)` distinct scalars
/// drawn from `rng`.
///
/// The caller should keep ReLU pre-activations away from zero (for example by
/// using inputs with generic values) so that no probe straddles a kink.
pub fn grad_check<F>(
    params: &ParamSet<f64>,
    analytic: &ParamSet<f64>,
    mut loss_fn: F,
    step: f64,
    count: usize,
    rng: &mut RngStream,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(invalid!("finite-difference step must be positive"));
    }
    if !analytic.same_layout(params) {
        return Err(shape_err!("gradient layout differs from the parameters"));
    }
    let total = params.num_scalars();
    let want = count.max(MIN_CHECKED).min(total);
    // Partial Fisher-Yates over flat indices.
    let mut idx: Vec<usize> = (0..total).collect();
    for i in 0..want {
        let j = i + rng.below(total - i);
        idx.swap(i, j);
    }
    idx.truncate(want);
    idx.sort_unstable();

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: want,
        worst: None,
        worst_values: (0.0, 0.0),
    };
    for &flat in &idx {
        let orig = params.scalar(flat);
        probe.set_scalar(flat, orig + step);
        let up = loss_fn(&probe)?;
        probe.set_scalar(flat, orig - step);
        let down = loss_fn(&probe)?;
        probe.set_scalar(flat, orig);
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.scalar(flat);
        let err = relative_error(a, numeric);
        if err > report.max_rel_err || report.worst.is_none() {
            let (id, off) = params.locate(flat).expect("index in range");
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some((String::from(params.name(id)), off));
            report.worst_values = (a, numeric);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use alloc::string::ToString;

    fn params(n: usize) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        let data = (0..n).map(|i| i as f64 * 0.1 - 1.0).collect();
        p.push("w".to_string(), Tensor::from_vec(&[n], data).unwrap());
        p
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let p = params(300);
        let r = grad_check(&p, &p.zeros_like(), |_| Ok(3.0), 1e-5, 200, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(r.max_rel_err, 0.0);
        assert_eq!(r.checked, 200);
    }

    #[test]
    fn quadratic_matches() {
        let p = params(50);
        let r = grad_check(
            &p,
            &p,
            |q| Ok(q.iter().flat_map(|(_, t)| t.data().iter()).map(|x| 0.5 * x * x).sum()),
            1e-5,
            200,
            &mut RngStream::new(2, 0),
        )
        .unwrap();
        assert_eq!(r.checked, 50);
        assert!(r.max_rel_err < 1e-8, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let p = params(10);
        let r = grad_check(&p, &p.zeros_like(), |q| Ok(q.scalar(0) * 2.0), 1e-5, 1, &mut RngStream::new(3, 0)).unwrap();
        assert!(r.max_rel_err > 0.5);
    }
}
