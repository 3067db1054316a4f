//! Threshold sweeps and the ranking metrics built on them: AU-ROC, AU-PR
//! (average precision and trapezoid) and max-F1.
//!
//! Samples that share a score enter the sweep together, so every metric
//! depends only on the score order and its ties.

use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::image::BinaryMask;
use crate::padim::AnomalyMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    /// `true` for anomalous (positive).
    pub label: bool,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

/// Confusion counts when every sample scoring `>= threshold` is flagged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepPoint {
    pub threshold: OrderedScore,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// Score wrapper with total equality, so sweep points compare exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd)]
pub struct OrderedScore(u64);

impl OrderedScore {
    pub fn new(v: f64) -> Self {
        Self(v.to_bits())
    }

    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl SweepPoint {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

/// `TP / (TP + FP)`; 1 when nothing is flagged.
pub fn precision(pt: &SweepPoint) -> f64 {
    if pt.tp + pt.fp == 0 {
        1.0
    } else {
        pt.tp as f64 / (pt.tp + pt.fp) as f64
    }
}

/// `TP / P`; 0 without positives.
pub fn recall(pt: &SweepPoint) -> f64 {
    let p = pt.positives();
    if p == 0 {
        0.0
    } else {
        pt.tp as f64 / p as f64
    }
}

/// `FP / N`; 0 without negatives.
pub fn fpr(pt: &SweepPoint) -> f64 {
    let n = pt.negatives();
    if n == 0 {
        0.0
    } else {
        pt.fp as f64 / n as f64
    }
}

/// `TP / (TP + ½(FP + FN))`; 0 when the denominator vanishes.
pub fn f1(pt: &SweepPoint) -> f64 {
    let den = pt.tp as f64 + 0.5 * (pt.fp + pt.fn_) as f64;
    if den == 0.0 {
        0.0
    } else {
        pt.tp as f64 / den
    }
}

/// Points at every distinct score in descending order, preceded by the
/// nothing-flagged point (threshold `+∞`). Works for any label mix.
pub fn sweep(samples: &[ScoredSample]) -> Result<Vec<SweepPoint>> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(invalid!("non-finite score {}", s.score));
    }
    // +0 and −0 are the same threshold.
    let mut sorted: Vec<(f64, bool)> = samples.iter().map(|s| (s.score + 0.0, s.label)).collect();
    sorted.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let p = samples.iter().filter(|s| s.label).count() as u64;
    let n = samples.len() as u64 - p;
    let mut pts = Vec::new();
    let mut cur = SweepPoint {
        threshold: OrderedScore::new(f64::INFINITY),
        tp: 0,
        fp: 0,
        tn: n,
        fn_: p,
    };
    pts.push(cur);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                cur.tp += 1;
                cur.fn_ -= 1;
            } else {
                cur.fp += 1;
                cur.tn -= 1;
            }
            i += 1;
        }
        cur.threshold = OrderedScore::new(t);
        pts.push(cur);
    }
    Ok(pts)
}

fn totals(pts: &[SweepPoint]) -> (u64, u64) {
    (pts[0].positives(), pts[0].negatives())
}

/// AU-ROC from sweep points: trapezoids in integer arithmetic, one final
/// division.
pub fn auroc_from_sweep(pts: &[SweepPoint]) -> Result<f64> {
    let (p, n) = totals(pts);
    if p == 0 {
        return Err(Error::MissingClass("no positive samples"));
    }
    if n == 0 {
        return Err(Error::MissingClass("no negative samples"));
    }
    let mut twice_area: u128 = 0;
    for w in pts.windows(2) {
        twice_area += u128::from(w[1].fp - w[0].fp) * u128::from(w[1].tp + w[0].tp);
    }
    Ok(twice_area as f64 / (2.0 * p as f64 * n as f64))
}

/// Average precision, `Σ ΔRecall · Precision`.
pub fn average_precision_from_sweep(pts: &[SweepPoint]) -> Result<f64> {
    let (p, _) = totals(pts);
    if p == 0 {
        return Err(Error::MissingClass("no positive samples"));
    }
    let mut ap = 0.0;
    for w in pts.windows(2) {
        let d = w[1].tp - w[0].tp;
        if d > 0 {
            ap += (d as f64 / p as f64) * precision(&w[1]);
        }
    }
    Ok(ap)
}

/// Trapezoidal PR area over recall-advancing points, starting at (0, 1).
pub fn trapezoid_pr_from_sweep(pts: &[SweepPoint]) -> Result<f64> {
    let (p, _) = totals(pts);
    if p == 0 {
        return Err(Error::MissingClass("no positive samples"));
    }
    let mut area = 0.0;
    let mut prev_prec = 1.0;
    let mut prev_tp = 0;
    for pt in &pts[1..] {
        if pt.tp > prev_tp {
            let pr = precision(pt);
            area += ((pt.tp - prev_tp) as f64 / p as f64) * (pr + prev_prec) * 0.5;
            prev_prec = pr;
            prev_tp = pt.tp;
        }
    }
    Ok(area)
}

/// Best F1 over the sweep and its threshold (the highest one on ties).
pub fn max_f1_from_sweep(pts: &[SweepPoint]) -> Result<(f64, f64)> {
    let (p, _) = totals(pts);
    if p == 0 {
        return Err(Error::MissingClass("no positive samples"));
    }
    let mut best = (f1(&pts[0]), pts[0].threshold.get());
    for pt in &pts[1..] {
        let v = f1(pt);
        if v > best.0 {
            best = (v, pt.threshold.get());
        }
    }
    Ok(best)
}

pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    auroc_from_sweep(&sweep(samples)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrMode {
    AveragePrecision,
    Trapezoid,
}

/// Area under the PR curve; only positives are required.
pub fn aupr(samples: &[ScoredSample], mode: PrMode) -> Result<f64> {
    let pts = sweep(samples)?;
    match mode {
        PrMode::AveragePrecision => average_precision_from_sweep(&pts),
        PrMode::Trapezoid => trapezoid_pr_from_sweep(&pts),
    }
}

/// `(max F1, threshold)`.
pub fn max_f1(samples: &[ScoredSample]) -> Result<(f64, f64)> {
    max_f1_from_sweep(&sweep(samples)?)
}

/// Every curve metric of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub auroc: f64,
    pub aupr: f64,
    pub aupr_trapezoid: f64,
    pub max_f1: f64,
    pub threshold: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

impl MetricReport {
    pub const KEYS: [&'static str; 7] = ["auroc", "aupr", "aupr_trapezoid", "max_f1", "threshold", "n_pos", "n_neg"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.auroc,
            self.aupr,
            self.aupr_trapezoid,
            self.max_f1,
            self.threshold,
            self.n_pos as f64,
            self.n_neg as f64,
        ]
    }
}

/// All metrics from a single sweep; both classes must be present.
pub fn evaluate(samples: &[ScoredSample]) -> Result<MetricReport> {
    let pts = sweep(samples)?;
    let (n_pos, n_neg) = totals(&pts);
    let auroc = auroc_from_sweep(&pts)?;
    let (max_f1, threshold) = max_f1_from_sweep(&pts)?;
    Ok(MetricReport {
        auroc,
        aupr: average_precision_from_sweep(&pts)?,
        aupr_trapezoid: trapezoid_pr_from_sweep(&pts)?,
        max_f1,
        threshold,
        n_pos,
        n_neg,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    Roc,
    Pr,
}

/// Curve points with their sweep thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    /// `(x, y, threshold)`: (FPR, TPR) for ROC, (recall, precision) for PR.
    pub points: Vec<(f64, f64, f64)>,
}

pub fn roc_curve(pts: &[SweepPoint]) -> Curve {
    Curve {
        kind: CurveKind::Roc,
        points: pts.iter().map(|p| (fpr(p), recall(p), p.threshold.get())).collect(),
    }
}

pub fn pr_curve(pts: &[SweepPoint]) -> Curve {
    Curve {
        kind: CurveKind::Pr,
        points: pts.iter().map(|p| (recall(p), precision(p), p.threshold.get())).collect(),
    }
}

/// Flattens every pixel of every map into samples, anomalous where the
/// mask is set.
pub fn pixel_samples(maps: &[AnomalyMap], masks: &[BinaryMask]) -> Result<Vec<ScoredSample>> {
    if maps.len() != masks.len() {
        return Err(shape_err!("{} maps for {} masks", maps.len(), masks.len()));
    }
    let mut out = Vec::with_capacity(maps.iter().map(|m| m.data.len()).sum());
    for (i, (m, k)) in maps.iter().zip(masks).enumerate() {
        if m.height != k.height() || m.width != k.width() {
            return Err(shape_err!(
                "map {i} is {}x{} but its mask is {}x{}",
                m.height,
                m.width,
                k.height(),
                k.width()
            ));
        }
        out.extend(m.data.iter().zip(k.data()).map(|(&s, &l)| ScoredSample::new(f64::from(s), l)));
    }
    Ok(out)
}

/// Pixel-level metrics over a set of anomaly maps.
pub fn pixel_metrics(maps: &[AnomalyMap], masks: &[BinaryMask]) -> Result<MetricReport> {
    evaluate(&pixel_samples(maps, masks)?)
}

pub const TOY_POSITIVES: usize = 100;
pub const TOY_NEGATIVES: usize = 100_000;

/// Every true positive costs 10 false positives: positive `k` scores
/// `2(101−k)` and its 10 negatives score one less; the other 99,000
/// negatives score 0.
pub fn toy_model_a() -> Vec<ScoredSample> {
    let mut s = Vec::with_capacity(TOY_POSITIVES + TOY_NEGATIVES);
    for k in 1..=100u32 {
        let top = f64::from(2 * (101 - k));
        s.push(ScoredSample::new(top, true));
        s.extend((0..10).map(|_| ScoredSample::new(top - 1.0, false)));
    }
    s.extend((0..TOY_NEGATIVES - 1000).map(|_| ScoredSample::new(0.0, false)));
    s
}

/// The first 90 positives rank above every negative; each of the last 10
/// arrives together with 3,000 negatives (tied score). The other 70,000
/// negatives score 0.
pub fn toy_model_b() -> Vec<ScoredSample> {
    let mut s = Vec::with_capacity(TOY_POSITIVES + TOY_NEGATIVES);
    for k in 1..=100u32 {
        let score = f64::from(2 * (101 - k));
        s.push(ScoredSample::new(score, true));
        if k > 90 {
            s.extend((0..3000).map(|_| ScoredSample::new(score, false)));
        }
    }
    s.extend((0..TOY_NEGATIVES - 30_000).map(|_| ScoredSample::new(0.0, false)));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pairs(pts: &[SweepPoint]) -> Vec<(u64, u64)> {
        pts.iter().map(|p| (p.tp, p.fp)).collect()
    }

    #[test]
    fn simple_sweeps() {
        let s = [ScoredSample::new(1.0, true), ScoredSample::new(0.0, false)];
        assert_eq!(pairs(&sweep(&s).unwrap()), vec![(0, 0), (1, 0), (1, 1)]);
        let t = [ScoredSample::new(1.0, true), ScoredSample::new(1.0, false)];
        assert_eq!(pairs(&sweep(&t).unwrap()), vec![(0, 0), (1, 1)]);
        assert!(sweep(&[ScoredSample::new(f64::NAN, true)]).is_err());
    }

    #[test]
    fn point_formulas() {
        let pt = SweepPoint {
            threshold: OrderedScore::new(0.0),
            tp: 90,
            fp: 0,
            tn: 10,
            fn_: 10,
        };
        assert!((f1(&pt) - 90.0 / 95.0).abs() < 1e-15);
        assert_eq!(precision(&pt), 1.0);
        let a = SweepPoint {
            tp: 100,
            fp: 1000,
            tn: 0,
            fn_: 0,
            ..pt
        };
        assert!((precision(&a) - 100.0 / 1100.0).abs() < 1e-15);
        let none = SweepPoint {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 5,
            ..pt
        };
        assert_eq!(precision(&none), 1.0);
    }

    #[test]
    fn one_class_inputs() {
        let pos = [ScoredSample::new(0.3, true), ScoredSample::new(0.9, true)];
        assert_eq!(aupr(&pos, PrMode::AveragePrecision).unwrap(), 1.0);
        assert!(matches!(auroc(&pos), Err(Error::MissingClass(_))));
        let neg = [ScoredSample::new(0.3, false)];
        assert!(aupr(&neg, PrMode::AveragePrecision).is_err());
        assert_eq!(sweep(&neg).unwrap().len(), 2);
    }

    #[test]
    fn perfect_separation() {
        let s = [
            ScoredSample::new(3.0, true),
            ScoredSample::new(2.0, true),
            ScoredSample::new(1.0, false),
        ];
        let r = evaluate(&s).unwrap();
        assert_eq!((r.auroc, r.aupr, r.max_f1, r.threshold), (1.0, 1.0, 1.0, 2.0));
    }

    #[test]
    fn toy_counts_and_boundaries() {
        for s in [toy_model_a(), toy_model_b()] {
            assert_eq!(s.iter().filter(|x| x.label).count(), TOY_POSITIVES);
            assert_eq!(s.iter().filter(|x| !x.label).count(), TOY_NEGATIVES);
        }
        let a = pairs(&sweep(&toy_model_a()).unwrap());
        for k in 1..=100u64 {
            assert!(a.contains(&(k, 10 * k)));
        }
        let b = pairs(&sweep(&toy_model_b()).unwrap());
        let i = b.iter().position(|&p| p == (90, 0)).unwrap();
        assert_eq!(b[i + 1], (91, 3000));
    }
}
