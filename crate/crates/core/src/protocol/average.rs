use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::metrics::MetricReport;

#[allow(unused_imports)]
use num_traits::Float;

/// Mean and sample standard deviation of one metric across runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// `n − 1` denominator; 0 for a single run.
    pub std: f64,
    pub runs: usize,
}

impl MetricReport {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        Self::KEYS.iter().map(|k| String::from(*k)).zip(self.values()).collect()
    }
}

/// Per-key aggregate over run reports that all carry the same keys.
pub fn five_run_average(reports: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, Aggregate>> {
    let first = reports.first().ok_or_else(|| invalid!("no reports to average"))?;
    for (i, r) in reports.iter().enumerate() {
        if !r.keys().eq(first.keys()) {
            return Err(invalid!("report {i} has different metric keys"));
        }
    }
    let n = reports.len();
    let mut out = BTreeMap::new();
    for key in first.keys() {
        let vals: Vec<f64> = reports.iter().map(|r| r[key]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        out.insert(key.clone(), Aggregate { mean, std, runs: n });
    }
    Ok(out)
}
