use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "anomaly" => Ok(Label::Anomaly),
            _ => Err(invalid!("unknown label '{s}'")),
        }
    }

    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    /// Relative to the dataset root, `/`-separated.
    pub path: String,
    pub object: String,
    pub label: Label,
    pub mask_path: Option<String>,
    /// Defect family, when the layout or generator provides one.
    pub anomaly_class: Option<String>,
}

/// Records sorted by path, with unique paths and ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(mut records: Vec<ManifestRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.path.cmp(&b.path));
        let mut ids = BTreeSet::new();
        for w in records.windows(2) {
            if w[0].path == w[1].path {
                return Err(invalid!("duplicate path '{}'", w[0].path));
            }
        }
        for r in &records {
            if r.id.is_empty() || r.path.is_empty() || r.object.is_empty() {
                return Err(invalid!("record '{}' has an empty id, path or object", r.path));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(invalid!("duplicate id '{}'", r.id));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn objects(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.object.as_str()).collect();
        set.into_iter().collect()
    }

    /// Records of `object` with `label`, in path order.
    pub fn select(&self, object: &str, label: Label) -> Vec<&ManifestRecord> {
        self.records
            .iter()
            .filter(|r| r.object == object && r.label == label)
            .collect()
    }

    /// Anomalies without a mask in objects that ship masks at all.
    pub fn missing_masks(&self) -> Vec<&ManifestRecord> {
        let with_masks: BTreeSet<&str> = self
            .records
            .iter()
            .filter(|r| r.mask_path.is_some())
            .map(|r| r.object.as_str())
            .collect();
        self.records
            .iter()
            .filter(|r| r.label.is_anomaly() && r.mask_path.is_none() && with_masks.contains(r.object.as_str()))
            .collect()
    }

    /// One row per record, with no split assignment.
    pub fn rows(&self) -> Vec<ManifestRow> {
        self.records.iter().map(|r| ManifestRow::from_record(r, None, None)).collect()
    }

    /// Rebuilds a manifest from persisted rows, ignoring split columns.
    /// Rows repeated across runs collapse to one record.
    pub fn from_rows(rows: &[ManifestRow]) -> Result<Self> {
        let mut by_id: BTreeMap<&str, &ManifestRow> = BTreeMap::new();
        for r in rows {
            match by_id.get(r.id.as_str()) {
                Some(prev) if prev.path != r.path || prev.label != r.label || prev.object != r.object => {
                    return Err(invalid!("rows for id '{}' disagree", r.id));
                }
                Some(_) => {}
                None => {
                    by_id.insert(&r.id, r);
                }
            }
        }
        Self::new(
            by_id
                .values()
                .map(|r| ManifestRecord {
                    id: r.id.clone(),
                    path: r.path.clone(),
                    object: r.object.clone(),
                    label: r.label,
                    mask_path: r.mask_path.clone(),
                    anomaly_class: None,
                })
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitRole::Train),
            "test" => Ok(SplitRole::Test),
            _ => Err(invalid!("unknown split '{s}'")),
        }
    }
}

/// One line of the persisted manifest / split table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    pub path: String,
    pub object: String,
    pub label: Label,
    pub mask_path: Option<String>,
    pub split: Option<SplitRole>,
    pub run: Option<usize>,
}

impl ManifestRow {
    pub const HEADER: [&'static str; 7] = ["id", "path", "object", "label", "mask_path", "split", "run"];

    pub fn from_record(r: &ManifestRecord, split: Option<SplitRole>, run: Option<usize>) -> Self {
        Self {
            id: r.id.clone(),
            path: r.path.clone(),
            object: r.object.clone(),
            label: r.label,
            mask_path: r.mask_path.clone(),
            split,
            run,
        }
    }
}

/// Result of interpreting a directory listing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    /// Anomalous images with no mask although their object has a mask tree.
    pub missing_masks: Vec<String>,
    /// Files outside the recognised layout.
    pub ignored: Vec<String>,
}

impl ScanOutcome {
    /// The manifest, or an error naming every anomaly that lacks a mask.
    pub fn into_result(self) -> Result<DatasetManifest> {
        if self.missing_masks.is_empty() {
            Ok(self.manifest)
        } else {
            Err(Error::Protocol(alloc::format!(
                "{} anomalous image(s) without a mask: {}",
                self.missing_masks.len(),
                self.missing_masks.join(", ")
            )))
        }
    }
}

const IMAGE_EXTS: [&str; 3] = ["ppm", "pgm", "png"];

fn split_ext(path: &str) -> Option<(&str, &str)> {
    let (stem, ext) = path.rsplit_once('.')?;
    if stem.ends_with('/') || stem.is_empty() || ext.contains('/') {
        return None;
    }
    Some((stem, ext))
}

/// Builds a manifest from root-relative file paths laid out as
/// `<object>/{normal,anomaly}/...`, with masks mirrored under
/// `<object>/masks/...` (same relative path, any image extension).
/// A first directory below `anomaly/` becomes the anomaly class.
pub fn manifest_from_listing(files: &[String]) -> Result<ScanOutcome> {
    let mut files: Vec<&str> = files.iter().map(|s| s.as_str()).collect();
    files.sort_unstable();
    let mut masks: BTreeMap<(&str, &str), &str> = BTreeMap::new();
    let mut images = Vec::new();
    let mut ignored = Vec::new();
    for &f in &files {
        let parts: Vec<&str> = f.splitn(3, '/').collect();
        let typed = split_ext(f).filter(|(_, e)| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()));
        match (parts.as_slice(), typed) {
            ([object, "masks", rest], Some(_)) => {
                let (stem, _) = split_ext(rest).unwrap_or((rest, ""));
                if masks.insert((object, stem), f).is_some() {
                    return Err(invalid!("two masks for '{object}/{stem}'"));
                }
            }
            ([object, kind @ ("normal" | "anomaly"), rest], Some(_)) => images.push((*object, *kind, *rest, f)),
            _ => ignored.push(f.to_string()),
        }
    }
    let mut records = Vec::with_capacity(images.len());
    let mut missing = Vec::new();
    for (object, kind, rest, path) in images {
        let label = Label::parse(kind)?;
        let (stem, _) = split_ext(rest).unwrap_or((rest, ""));
        let mask_path = match label {
            Label::Anomaly => {
                let mirrored = alloc::format!("anomaly/{stem}");
                masks
                    .get(&(object, stem))
                    .or_else(|| masks.get(&(object, mirrored.as_str())))
                    .map(|m| m.to_string())
            }
            Label::Normal => None,
        };
        let has_mask_tree = masks.keys().any(|(o, _)| *o == object);
        if label.is_anomaly() && mask_path.is_none() && has_mask_tree {
            missing.push(path.to_string());
        }
        let anomaly_class = match label {
            Label::Anomaly => rest.split_once('/').map(|(c, _)| c.to_string()),
            Label::Normal => None,
        };
        let (id, _) = split_ext(path).unwrap_or((path, ""));
        records.push(ManifestRecord {
            id: id.to_string(),
            path: path.to_string(),
            object: object.to_string(),
            label,
            mask_path,
            anomaly_class,
        });
    }
    Ok(ScanOutcome {
        manifest: DatasetManifest::new(records)?,
        missing_masks: missing,
        ignored,
    })
}
