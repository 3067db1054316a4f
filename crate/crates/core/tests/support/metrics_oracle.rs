//! Brute-force reference for the ranking metrics: every count is recomputed
//! by a full scan per threshold and AU-ROC comes from explicit pairs.

use spd_core::metrics::ScoredSample;

pub struct OracleMetrics {
    pub auroc: f64,
    pub ap: f64,
    pub trapezoid: f64,
    pub max_f1: f64,
    pub threshold: f64,
}

fn counts(samples: &[ScoredSample], t: f64) -> (u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for s in samples {
        if s.score >= t {
            if s.label {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp, fp)
}

fn prec(tp: u64, fp: u64) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

pub fn oracle(samples: &[ScoredSample]) -> OracleMetrics {
    let p = samples.iter().filter(|s| s.label).count() as u64;
    let n = samples.len() as u64 - p;

    let mut twice_wins: u128 = 0;
    for a in samples.iter().filter(|s| s.label) {
        for b in samples.iter().filter(|s| !s.label) {
            if a.score > b.score {
                twice_wins += 2;
            } else if a.score == b.score {
                twice_wins += 1;
            }
        }
    }
    let auroc = twice_wins as f64 / (2.0 * p as f64 * n as f64);

    // Distinct thresholds, highest first, found by repeated scans.
    let mut thresholds = vec![f64::INFINITY];
    loop {
        let last = *thresholds.last().unwrap();
        let next = samples
            .iter()
            .map(|s| s.score)
            .filter(|&s| s < last)
            .fold(f64::NEG_INFINITY, f64::max);
        if next == f64::NEG_INFINITY {
            break;
        }
        thresholds.push(next);
    }

    let mut ap = 0.0;
    let mut trapezoid = 0.0;
    let mut prev_tp = 0u64;
    let mut prev_prec = 1.0;
    let mut max_f1 = 0.0;
    let mut threshold = f64::INFINITY;
    for &t in &thresholds {
        let (tp, fp) = counts(samples, t);
        let fn_ = p - tp;
        let den = tp as f64 + 0.5 * (fp + fn_) as f64;
        let f1 = if den == 0.0 { 0.0 } else { tp as f64 / den };
        if f1 > max_f1 {
            max_f1 = f1;
            threshold = t;
        }
        if tp > prev_tp {
            let pr = prec(tp, fp);
            ap += ((tp - prev_tp) as f64 / p as f64) * pr;
            trapezoid += ((tp - prev_tp) as f64 / p as f64) * (pr + prev_prec) * 0.5;
            prev_prec = pr;
        }
        prev_tp = tp;
    }
    OracleMetrics {
        auroc,
        ap,
        trapezoid,
        max_f1,
        threshold,
    }
}
