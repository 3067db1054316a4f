use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, Label, ManifestRecord, ManifestRow, SplitRole};
use crate::error::{invalid, Error, Result};
use crate::rng::{mix64, RngStream};

const STREAM_SPLIT: u64 = 0x5350_4c49_5400_0001;
const STREAM_POOL: u64 = 0x5350_4c49_5400_0002;
const STREAM_SHOTS: u64 = 0x5350_4c49_5400_0003;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Train on 90% of the normals; test on the rest plus every anomaly.
    OneClass,
    /// 60% of each class to train, 40% to test.
    HighShot,
    /// `k` draws per class from a fixed 20% pool; test on the other 80%.
    KShot,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::OneClass, ProtocolKind::HighShot, ProtocolKind::KShot];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::OneClass => "one-class",
            ProtocolKind::HighShot => "high-shot",
            ProtocolKind::KShot => "k-shot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| invalid!("unknown protocol '{s}' (one-class, high-shot, k-shot)"))
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-class train/test sizes a protocol assigns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitCounts {
    pub train_normal: usize,
    pub train_anomaly: usize,
    pub test_normal: usize,
    pub test_anomaly: usize,
}

/// Sizes for `n_normal` / `n_anomaly` records; percentages round down and
/// the remainder goes to test.
pub fn split_counts(kind: ProtocolKind, n_normal: usize, n_anomaly: usize, k: usize) -> Result<SplitCounts> {
    match kind {
        ProtocolKind::OneClass => {
            if n_normal == 0 {
                return Err(Error::Protocol("one-class split needs normal images".into()));
            }
            let train = n_normal * 9 / 10;
            Ok(SplitCounts {
                train_normal: train,
                train_anomaly: 0,
                test_normal: n_normal - train,
                test_anomaly: n_anomaly,
            })
        }
        ProtocolKind::HighShot => {
            if n_normal == 0 || n_anomaly == 0 {
                return Err(Error::Protocol("high-shot split needs both classes".into()));
            }
            let (tn, ta) = (n_normal * 6 / 10, n_anomaly * 6 / 10);
            Ok(SplitCounts {
                train_normal: tn,
                train_anomaly: ta,
                test_normal: n_normal - tn,
                test_anomaly: n_anomaly - ta,
            })
        }
        ProtocolKind::KShot => {
            if k == 0 {
                return Err(invalid!("k must be at least 1"));
            }
            let (pn, pa) = (n_normal * 2 / 10, n_anomaly * 2 / 10);
            if k > pn || k > pa {
                return Err(Error::Protocol(alloc::format!(
                    "k={k} exceeds the 20% pool ({pn} normal, {pa} anomalous)"
                )));
            }
            Ok(SplitCounts {
                train_normal: k,
                train_anomaly: k,
                test_normal: n_normal - pn,
                test_anomaly: n_anomaly - pa,
            })
        }
    }
}

/// Seed of run `run` (0-based) under a base seed.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

/// One train/test assignment for one object. Ids keep manifest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub protocol: ProtocolKind,
    pub object: String,
    pub seed: u64,
    pub run: usize,
    pub k: Option<usize>,
    pub pool_seed: Option<u64>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn with_run(mut self, run: usize) -> Self {
        self.run = run;
        self
    }

    /// Checks disjointness and membership in `manifest`.
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<()> {
        for id in self.train.iter().chain(&self.test) {
            if manifest.get(id).is_none() {
                return Err(Error::Protocol(alloc::format!("id '{id}' is not in the manifest")));
            }
        }
        let test: BTreeSet<&String> = self.test.iter().collect();
        if let Some(id) = self.train.iter().find(|id| test.contains(id)) {
            return Err(Error::Protocol(alloc::format!("id '{id}' is in both train and test")));
        }
        Ok(())
    }

    /// Rows in manifest order; records outside the split are omitted.
    pub fn rows(&self, manifest: &DatasetManifest) -> Vec<ManifestRow> {
        let train: BTreeSet<&str> = self.train.iter().map(|s| s.as_str()).collect();
        let test: BTreeSet<&str> = self.test.iter().map(|s| s.as_str()).collect();
        manifest
            .records()
            .iter()
            .filter_map(|r| {
                let role = if train.contains(r.id.as_str()) {
                    SplitRole::Train
                } else if test.contains(r.id.as_str()) {
                    SplitRole::Test
                } else {
                    return None;
                };
                Some(ManifestRow::from_record(r, Some(role), Some(self.run)))
            })
            .collect()
    }
}

fn object_key(object: &str) -> u64 {
    // FNV-1a, so each object shuffles independently under one seed.
    object
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

fn stream(seed: u64, purpose: u64, object: &str, label: Label) -> RngStream {
    RngStream::new(seed, mix64(purpose ^ object_key(object))).substream(label as u64)
}

fn class<'m>(manifest: &'m DatasetManifest, object: &str, label: Label) -> Vec<&'m ManifestRecord> {
    manifest.select(object, label)
}

fn check_object(manifest: &DatasetManifest, object: &str) -> Result<()> {
    if manifest.records().iter().any(|r| r.object == object) {
        Ok(())
    } else {
        Err(Error::Protocol(alloc::format!("object '{object}' is not in the manifest")))
    }
}

fn shuffled<'m>(mut recs: Vec<&'m ManifestRecord>, mut rng: RngStream) -> Vec<&'m ManifestRecord> {
    recs.shuffle(&mut rng);
    recs
}

fn in_manifest_order(manifest: &DatasetManifest, picked: &[&ManifestRecord]) -> Vec<String> {
    let picked: BTreeSet<&str> = picked.iter().map(|r| r.id.as_str()).collect();
    manifest
        .records()
        .iter()
        .filter(|r| picked.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect()
}

fn assemble(
    manifest: &DatasetManifest,
    protocol: ProtocolKind,
    object: &str,
    seed: u64,
    train: &[&ManifestRecord],
    test: &[&ManifestRecord],
) -> SplitManifest {
    SplitManifest {
        protocol,
        object: object.into(),
        seed,
        run: 0,
        k: None,
        pool_seed: None,
        train: in_manifest_order(manifest, train),
        test: in_manifest_order(manifest, test),
    }
}

pub fn one_class_split(manifest: &DatasetManifest, object: &str, seed: u64) -> Result<SplitManifest> {
    check_object(manifest, object)?;
    let normals = class(manifest, object, Label::Normal);
    let anomalies = class(manifest, object, Label::Anomaly);
    let counts = split_counts(ProtocolKind::OneClass, normals.len(), anomalies.len(), 0)?;
    let normals = shuffled(normals, stream(seed, STREAM_SPLIT, object, Label::Normal));
    let (train, rest) = normals.split_at(counts.train_normal);
    let test: Vec<_> = rest.iter().chain(&anomalies).copied().collect();
    Ok(assemble(manifest, ProtocolKind::OneClass, object, seed, train, &test))
}

pub fn high_shot_split(manifest: &DatasetManifest, object: &str, seed: u64) -> Result<SplitManifest> {
    check_object(manifest, object)?;
    let normals = class(manifest, object, Label::Normal);
    let anomalies = class(manifest, object, Label::Anomaly);
    let c = split_counts(ProtocolKind::HighShot, normals.len(), anomalies.len(), 0)?;
    let normals = shuffled(normals, stream(seed, STREAM_SPLIT, object, Label::Normal));
    let anomalies = shuffled(anomalies, stream(seed, STREAM_SPLIT, object, Label::Anomaly));
    let train: Vec<_> = normals[..c.train_normal]
        .iter()
        .chain(&anomalies[..c.train_anomaly])
        .copied()
        .collect();
    let test: Vec<_> = normals[c.train_normal..]
        .iter()
        .chain(&anomalies[c.train_anomaly..])
        .copied()
        .collect();
    Ok(assemble(manifest, ProtocolKind::HighShot, object, seed, &train, &test))
}

/// The 20% pool of one class (first) and its 80% remainder (second), fixed
/// by `pool_seed` alone.
fn pool_of<'m>(
    manifest: &'m DatasetManifest,
    object: &str,
    label: Label,
    pool_seed: u64,
) -> (Vec<&'m ManifestRecord>, Vec<&'m ManifestRecord>) {
    let recs = shuffled(class(manifest, object, label), stream(pool_seed, STREAM_POOL, object, label));
    let n = recs.len() * 2 / 10;
    let (pool, rest) = recs.split_at(n);
    (pool.to_vec(), rest.to_vec())
}

/// Pool ids per class, `[normal, anomaly]`, in manifest order.
pub fn k_shot_pool(manifest: &DatasetManifest, object: &str, pool_seed: u64) -> Result<[Vec<String>; 2]> {
    check_object(manifest, object)?;
    let (pn, _) = pool_of(manifest, object, Label::Normal, pool_seed);
    let (pa, _) = pool_of(manifest, object, Label::Anomaly, pool_seed);
    Ok([in_manifest_order(manifest, &pn), in_manifest_order(manifest, &pa)])
}

/// `k` records per class drawn by `run_seed` from the pool fixed by
/// `pool_seed`; test is everything outside the pool.
pub fn k_shot_split(
    manifest: &DatasetManifest,
    object: &str,
    k: usize,
    pool_seed: u64,
    run_seed: u64,
) -> Result<SplitManifest> {
    check_object(manifest, object)?;
    let n_normal = class(manifest, object, Label::Normal).len();
    let n_anomaly = class(manifest, object, Label::Anomaly).len();
    split_counts(ProtocolKind::KShot, n_normal, n_anomaly, k)?;
    let mut train = Vec::with_capacity(2 * k);
    let mut test = Vec::new();
    for label in [Label::Normal, Label::Anomaly] {
        let (pool, rest) = pool_of(manifest, object, label, pool_seed);
        let pool = shuffled(pool, stream(run_seed, STREAM_SHOTS, object, label));
        train.extend_from_slice(&pool[..k]);
        test.extend(rest);
    }
    let mut s = assemble(manifest, ProtocolKind::KShot, object, run_seed, &train, &test);
    s.k = Some(k);
    s.pool_seed = Some(pool_seed);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn manifest(obj: &str, normals: usize, anomalies: usize) -> DatasetManifest {
        let mut recs = Vec::new();
        for (label, n) in [(Label::Normal, normals), (Label::Anomaly, anomalies)] {
            for i in 0..n {
                let path = format!("{obj}/{}/{i:05}.ppm", label.as_str());
                recs.push(ManifestRecord {
                    id: path.clone(),
                    path,
                    object: obj.into(),
                    label,
                    mask_path: None,
                    anomaly_class: None,
                });
            }
        }
        DatasetManifest::new(recs).unwrap()
    }

    #[test]
    fn one_class_table_sizes() {
        let m = manifest("pcb1", 1004, 100);
        let s = one_class_split(&m, "pcb1", 3).unwrap();
        assert_eq!(s.train.len(), 903);
        assert_eq!(s.test.len(), 201);
        assert!(s.train.iter().all(|id| m.get(id).unwrap().label == Label::Normal));
        s.validate(&m).unwrap();
        assert_eq!(s, one_class_split(&m, "pcb1", 3).unwrap());
        assert_ne!(s.train, one_class_split(&m, "pcb1", 4).unwrap().train);

        let small = manifest("o", 10, 0);
        let s = one_class_split(&small, "o", 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (9, 1));
        assert!(one_class_split(&manifest("o", 0, 3), "o", 0).is_err());
        assert!(one_class_split(&small, "missing", 0).is_err());
    }

    #[test]
    fn high_shot_sizes() {
        let s = high_shot_split(&manifest("o", 10, 10), "o", 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (12, 8));
        let c = split_counts(ProtocolKind::HighShot, 1004, 100, 0).unwrap();
        assert_eq!((c.train_normal, c.train_anomaly), (602, 60));
        assert!(high_shot_split(&manifest("o", 10, 0), "o", 1).is_err());
    }

    #[test]
    fn k_shot_pool_is_fixed() {
        let m = manifest("o", 100, 50);
        let pool = k_shot_pool(&m, "o", 7).unwrap();
        assert_eq!((pool[0].len(), pool[1].len()), (20, 10));
        let mut trains = Vec::new();
        for r in 1..=5 {
            let s = k_shot_split(&m, "o", 5, 7, r).unwrap();
            assert_eq!(s.train.len(), 10);
            assert_eq!(s.test.len(), 80 + 40);
            assert!(s.train.iter().all(|id| pool[0].contains(id) || pool[1].contains(id)));
            s.validate(&m).unwrap();
            trains.push(s.train);
        }
        trains.sort();
        trains.dedup();
        assert_eq!(trains.len(), 5);
        assert!(k_shot_split(&m, "o", 11, 7, 1).is_err());
        assert!(k_shot_split(&m, "o", 0, 7, 1).is_err());
    }

    #[test]
    fn protocol_names() {
        for p in ProtocolKind::ALL {
            assert_eq!(ProtocolKind::parse(p.as_str()).unwrap(), p);
        }
        assert!(ProtocolKind::parse("two-class").is_err());
    }
}
