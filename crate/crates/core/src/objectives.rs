//! Loss functions with analytic gradients w.r.t. their inputs.
//!
//! Every loss returns a [`LossValue`] whose gradients are keyed by the
//! [`Role`] of each input batch. The trainer maps those roles back onto rows
//! of a network forward pass.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;
#[allow(unused_imports)]
use num_traits::Float;

/// Allowed deviation of an embedding norm from 1.
pub const UNIT_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// First strong view `z` of the base objective.
    Anchor,
    /// Second strong view `ẑ`.
    Positive,
    SpdAnchor,
    SpdPositive,
    SpdNegative,
    /// Predictor output for the first view (SimSiam-style online branch).
    OnlineA,
    OnlineB,
    /// Stop-gradient target embedding of the first view.
    TargetA,
    TargetB,
    ClassLogits,
    AuxLogits,
}

/// `N × D` embeddings with unit-norm rows, tagged with their role.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch<T> {
    z: Tensor<T>,
    role: Role,
}

impl<T: Real> EmbeddingBatch<T> {
    pub fn new(z: Tensor<T>, role: Role) -> Result<Self> {
        if z.shape().len() != 2 || z.rows() == 0 || z.shape()[1] == 0 {
            return Err(invalid!("embedding batch must be a non-empty N x D matrix, got {:?}", z.shape()));
        }
        for i in 0..z.rows() {
            check_unit(z.row(i))?;
        }
        Ok(Self { z, role })
    }

    pub fn z(&self) -> &Tensor<T> {
        &self.z
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.shape()[1]
    }

    fn row(&self, i: usize) -> &[T] {
        self.z.row(i)
    }
}

/// A scalar loss and its gradient w.r.t. each input batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub grads: BTreeMap<Role, Tensor<T>>,
}

impl<T: Real> LossValue<T> {
    pub fn grad(&self, role: Role) -> Option<&Tensor<T>> {
        self.grads.get(&role)
    }

    /// Moves the gradient stored under `from` to `to`.
    pub fn relabel(mut self, from: Role, to: Role) -> Self {
        if let Some(g) = self.grads.remove(&from) {
            self.grads.insert(to, g);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grads.values().all(Tensor::all_finite)
    }
}

fn check_unit<T: Real>(v: &[T]) -> Result<()> {
    let n: f64 = v.iter().map(|x| x.f64() * x.f64()).sum::<f64>().sqrt();
    if !((n - 1.0).abs() <= UNIT_TOL) {
        return Err(invalid!("expected a unit vector, norm is {n}"));
    }
    Ok(())
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn clamp_cos<T: Real>(c: T) -> T {
    c.max(-T::one()).min(T::one())
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine_sim<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(shape_err!("cosine of vectors with lengths {} and {}", a.len(), b.len()));
    }
    check_unit(a)?;
    check_unit(b)?;
    Ok(clamp_cos(dot(a, b)))
}

fn same_shape<T: Real>(batches: &[&EmbeddingBatch<T>]) -> Result<()> {
    let (n, d) = (batches[0].len(), batches[0].dim());
    for b in batches {
        if b.len() != n || b.dim() != d {
            return Err(shape_err!("embedding batches differ: {}x{} vs {}x{}", n, d, b.len(), b.dim()));
        }
    }
    for (i, a) in batches.iter().enumerate() {
        if batches[i + 1..].iter().any(|b| b.role == a.role) {
            return Err(invalid!("two inputs share the role {:?}", a.role));
        }
    }
    Ok(())
}

fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Contrastive loss with in-batch anchors as negatives.
///
/// For anchor `i` the candidates are its positive `ẑᵢ` and every other
/// anchor `zⱼ`; the loss is the batch mean of the softmax cross-entropy of
/// picking the positive.
pub fn info_nce<T: Real>(anchors: &EmbeddingBatch<T>, positives: &EmbeddingBatch<T>, tau: T) -> Result<LossValue<T>> {
    same_shape(&[anchors, positives])?;
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(invalid!("temperature must be positive, got {:?}", tau));
    }
    let (n, d) = (anchors.len(), anchors.dim());
    let inv_n = T::one() / T::of(n as f64);
    let mut ga = Tensor::zeros(&[n, d]);
    let mut gp = Tensor::zeros(&[n, d]);
    let mut total = T::zero();
    let mut logits = Vec::with_capacity(n);
    for i in 0..n {
        let zi = anchors.row(i);
        // logits[0] is the positive, logits[1..] the other anchors in index order.
        logits.clear();
        logits.push(dot(zi, positives.row(i)) / tau);
        for j in (0..n).filter(|&j| j != i) {
            logits.push(dot(zi, anchors.row(j)) / tau);
        }
        let lse = log_sum_exp(&logits);
        total += lse - logits[0];
        let w0 = (logits[0] - lse).exp() - T::one();
        let c = inv_n / tau;
        axpy(c * w0, positives.row(i), ga.row_mut(i));
        axpy(c * w0, zi, gp.row_mut(i));
        for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
            let w = (logits[slot + 1] - lse).exp();
            axpy(c * w, anchors.row(j), ga.row_mut(i));
            axpy(c * w, zi, ga.row_mut(j));
        }
    }
    let mut grads = BTreeMap::new();
    grads.insert(anchors.role, ga);
    grads.insert(positives.role, gp);
    Ok(LossValue {
        value: total * inv_n,
        grads,
    })
}

/// Spot-the-difference loss: batch mean of `cos(z, z̃⁻) − cos(z, z̃⁺)`.
pub fn spd_loss<T: Real>(
    anchor: &EmbeddingBatch<T>,
    negative: &EmbeddingBatch<T>,
    positive: &EmbeddingBatch<T>,
) -> Result<LossValue<T>> {
    same_shape(&[anchor, negative, positive])?;
    let (n, d) = (anchor.len(), anchor.dim());
    let inv_n = T::one() / T::of(n as f64);
    let mut ga = Tensor::zeros(&[n, d]);
    let mut gn = Tensor::zeros(&[n, d]);
    let mut gp = Tensor::zeros(&[n, d]);
    let mut total = T::zero();
    for i in 0..n {
        let (z, zn, zp) = (anchor.row(i), negative.row(i), positive.row(i));
        // One dot with the difference avoids cancelling two near-equal cosines.
        let diff: Vec<T> = zn.iter().zip(zp).map(|(&a, &b)| a - b).collect();
        total += dot(z, &diff).max(-T::of(2.0)).min(T::of(2.0));
        let ga_i = ga.row_mut(i);
        axpy(inv_n, zn, ga_i);
        axpy(-inv_n, zp, ga_i);
        axpy(inv_n, z, gn.row_mut(i));
        axpy(-inv_n, z, gp.row_mut(i));
    }
    let mut grads = BTreeMap::new();
    grads.insert(anchor.role, ga);
    grads.insert(negative.role, gn);
    grads.insert(positive.role, gp);
    Ok(LossValue {
        value: total * inv_n,
        grads,
    })
}

/// `base + η · spd`, with gradients combined the same way.
///
/// With `η = 0` the value and every gradient of `base` come back unchanged;
/// roles that only the SPD term touches get zero gradients.
pub fn combined_loss<T: Real>(base: &LossValue<T>, spd: &LossValue<T>, eta: T) -> Result<LossValue<T>> {
    if !(eta >= T::zero()) || !eta.is_finite() {
        return Err(invalid!("SPD weight must be finite and non-negative, got {:?}", eta));
    }
    let mut out = base.clone();
    if eta != T::zero() {
        out.value = base.value + eta * spd.value;
    }
    for (role, g) in &spd.grads {
        match out.grads.get_mut(role) {
            Some(acc) => {
                if acc.shape() != g.shape() {
                    return Err(shape_err!("gradient shapes differ for {:?}", role));
                }
                if eta != T::zero() {
                    axpy(eta, g.data(), acc.data_mut());
                }
            }
            None => {
                out.grads.insert(*role, g.scale(eta));
            }
        }
    }
    Ok(out)
}

/// Symmetric negative cosine between each predictor output and the other
/// view's target, `−½[cos(p₁, z₂) + cos(p₂, z₁)]`, batch-averaged.
///
/// Targets are treated as constants; their gradients are reported as zero.
pub fn simsiam_positive_loss<T: Real>(
    online_a: &EmbeddingBatch<T>,
    online_b: &EmbeddingBatch<T>,
    target_a: &EmbeddingBatch<T>,
    target_b: &EmbeddingBatch<T>,
) -> Result<LossValue<T>> {
    same_shape(&[online_a, online_b, target_a, target_b])?;
    let (n, d) = (online_a.len(), online_a.dim());
    let c = -T::of(0.5) / T::of(n as f64);
    let mut g1 = Tensor::zeros(&[n, d]);
    let mut g2 = Tensor::zeros(&[n, d]);
    let mut total = T::zero();
    for i in 0..n {
        total += clamp_cos(dot(online_a.row(i), target_b.row(i))) + clamp_cos(dot(online_b.row(i), target_a.row(i)));
        axpy(c, target_b.row(i), g1.row_mut(i));
        axpy(c, target_a.row(i), g2.row_mut(i));
    }
    let mut grads = BTreeMap::new();
    grads.insert(online_a.role, g1);
    grads.insert(online_b.role, g2);
    grads.insert(target_a.role, Tensor::zeros(&[n, d]));
    grads.insert(target_b.role, Tensor::zeros(&[n, d]));
    Ok(LossValue {
        value: total * c,
        grads,
    })
}

fn check_logits<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(usize, usize)> {
    if logits.shape().len() != 2 || logits.rows() == 0 || logits.shape()[1] < 2 {
        return Err(invalid!("logits must be N x C with N >= 1 and C >= 2, got {:?}", logits.shape()));
    }
    let (n, c) = (logits.rows(), logits.shape()[1]);
    if labels.len() != n {
        return Err(shape_err!("{} labels for {} logit rows", labels.len(), n));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(invalid!("label {bad} out of range for {c} classes"));
    }
    Ok((n, c))
}

/// Focal loss `−α(1−p_t)^γ log p_t`, batch-averaged. Gradients are reported
/// under [`Role::ClassLogits`].
pub fn focal_loss<T: Real>(logits: &Tensor<T>, labels: &[usize], gamma: T, alpha: T) -> Result<LossValue<T>> {
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(invalid!("focal gamma must be non-negative, got {:?}", gamma));
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(invalid!("focal alpha must lie in (0, 1], got {:?}", alpha));
    }
    let (n, c) = check_logits(logits, labels)?;
    let inv_n = T::one() / T::of(n as f64);
    let mut g = Tensor::zeros(&[n, c]);
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        let lp = row[y] - lse;
        let p = lp.exp();
        let q = T::one() - p;
        let mod_factor = if gamma == T::zero() { T::one() } else { q.powf(gamma) };
        total += -alpha * mod_factor * lp;
        // d loss / d log p_t; the second term vanishes in the p_t → 1 limit.
        let kink = if gamma == T::zero() || q == T::zero() {
            T::zero()
        } else {
            gamma * q.powf(gamma - T::one()) * p * lp
        };
        let dl_dlp = -alpha * (mod_factor - kink) * inv_n;
        for (k, gk) in g.row_mut(i).iter_mut().enumerate() {
            let soft = (row[k] - lse).exp();
            let onehot = if k == y { T::one() } else { T::zero() };
            *gk = dl_dlp * (onehot - soft);
        }
    }
    let mut grads = BTreeMap::new();
    grads.insert(Role::ClassLogits, g);
    Ok(LossValue {
        value: total * inv_n,
        grads,
    })
}

/// Softmax cross-entropy, batch-averaged. Gradients are reported under
/// [`Role::ClassLogits`].
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossValue<T>> {
    let (n, c) = check_logits(logits, labels)?;
    let inv_n = T::one() / T::of(n as f64);
    let mut g = Tensor::zeros(&[n, c]);
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        total += lse - row[y];
        for (k, gk) in g.row_mut(i).iter_mut().enumerate() {
            let soft = (row[k] - lse).exp();
            *gk = (soft - if k == y { T::one() } else { T::zero() }) * inv_n;
        }
    }
    let mut grads = BTreeMap::new();
    grads.insert(Role::ClassLogits, g);
    Ok(LossValue {
        value: total * inv_n,
        grads,
    })
}

/// Unit-normalizes each row, for building test inputs and oracles.
pub fn normalize_rows<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let mut out = t.clone();
    let d = t.shape().get(1).copied().unwrap_or(0);
    if d == 0 {
        return out;
    }
    for i in 0..t.rows() {
        let row = out.row_mut(i);
        let n = dot(row, row).sqrt().max(T::of(1e-12));
        row.iter_mut().for_each(|v| *v = *v / n);
    }
    out
}
