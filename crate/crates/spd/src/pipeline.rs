//! Workflows shared by the CLI and the acceptance run: selecting records,
//! loading images, and fitting or scoring PaDiM on a checkpoint.

use std::path::Path;

use spd_core::imageops::resize;
use spd_core::metrics::{evaluate, pixel_metrics, MetricReport, ScoredSample};
use spd_core::netcore::Checkpoint;
use spd_core::padim::{extract_features_batch, fit, image_score, score_map, AnomalyMap, PadimConfig};
use spd_core::protocol::{
    high_shot_split, k_shot_split, one_class_split, run_seed, DatasetManifest, Label, ManifestRow, ProtocolKind, SplitManifest,
    SplitRole,
};
use spd_core::{BinaryMask, Image};

use crate::error::{invalid, Result};
use crate::padim_file::PadimArtifact;
use crate::pnm::{read_image, read_mask};

/// Rows of one role. Split tables are filtered by run and role; plain
/// manifests give their normal records for training and everything for test.
pub fn select_rows(rows: &[ManifestRow], run: usize, role: SplitRole) -> Result<Vec<ManifestRow>> {
    let split_table = rows.iter().any(|r| r.split.is_some());
    let picked: Vec<ManifestRow> = if split_table {
        rows.iter()
            .filter(|r| r.run.unwrap_or(0) == run && r.split == Some(role))
            .cloned()
            .collect()
    } else {
        rows.iter()
            .filter(|r| role == SplitRole::Test || r.label == Label::Normal)
            .cloned()
            .collect()
    };
    if picked.is_empty() {
        return Err(invalid!("no {} records for run {run}", role.as_str()));
    }
    Ok(picked)
}

/// Images as RGB; grey images are replicated across channels.
pub fn load_images(root: &Path, rows: &[ManifestRow]) -> Result<Vec<Image>> {
    rows.iter()
        .map(|r| {
            let img = read_image(&root.join(&r.path))?;
            if img.channels() == 3 {
                return Ok(img);
            }
            Ok(Image::from_fn(img.height(), img.width(), 3, |y, x, _| img.get(y, x, 0))?)
        })
        .collect()
}

/// Ground-truth masks; normal images without a mask get an empty one.
pub fn load_masks(root: &Path, rows: &[ManifestRow], images: &[Image]) -> Result<Option<Vec<BinaryMask>>> {
    if rows.iter().any(|r| r.label.is_anomaly() && r.mask_path.is_none()) {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(rows.len());
    for (r, img) in rows.iter().zip(images) {
        let m = match &r.mask_path {
            Some(p) => read_mask(&root.join(p))?,
            None => BinaryMask::empty(img.height(), img.width()),
        };
        if (m.height(), m.width()) != (img.height(), img.width()) {
            return Err(invalid!("mask of '{}' is {}x{}, image is {}x{}", r.id, m.height(), m.width(), img.height(), img.width()));
        }
        out.push(m);
    }
    Ok(Some(out))
}

fn to_input(images: &[Image], size: usize) -> Vec<Image> {
    images
        .iter()
        .map(|im| if im.height() == size && im.width() == size { im.clone() } else { resize(im, size) })
        .collect()
}

/// Fits per-cell Gaussians on the features of `normals`.
pub fn fit_padim(ck: &Checkpoint, normals: &[Image], cfg: &PadimConfig) -> Result<PadimArtifact> {
    let input_size = ck.config.network.input_size;
    let grids = extract_features_batch(ck, &to_input(normals, input_size))?;
    Ok(PadimArtifact {
        model: fit(cfg, &grids)?,
        input_size,
        smooth_sigma: cfg.smooth_sigma,
    })
}

/// Anomaly maps at each image's own resolution.
pub fn score_images(ck: &Checkpoint, art: &PadimArtifact, images: &[Image]) -> Result<Vec<AnomalyMap>> {
    if ck.config.network.input_size != art.input_size {
        return Err(invalid!(
            "model was fitted at input size {}, checkpoint uses {}",
            art.input_size,
            ck.config.network.input_size
        ));
    }
    let grids = extract_features_batch(ck, &to_input(images, art.input_size))?;
    grids
        .iter()
        .zip(images)
        .map(|(g, im)| Ok(score_map(&art.model, g, im.height(), im.width(), art.smooth_sigma)?))
        .collect()
}

/// Image-level scores paired with labels.
pub fn image_samples(maps: &[AnomalyMap], labels: &[Label]) -> Vec<ScoredSample> {
    maps.iter()
        .zip(labels)
        .map(|(m, l)| ScoredSample::new(f64::from(image_score(m)), l.is_anomaly()))
        .collect()
}

/// Image and (when masks exist) pixel metrics of a scored test set.
pub struct Evaluation {
    pub image: MetricReport,
    pub pixel: Option<MetricReport>,
}

pub fn evaluate_maps(maps: &[AnomalyMap], labels: &[Label], masks: Option<&[BinaryMask]>) -> Result<Evaluation> {
    let image = evaluate(&image_samples(maps, labels))?;
    let pixel = match masks {
        Some(m) => Some(pixel_metrics(maps, m)?),
        None => None,
    };
    Ok(Evaluation { image, pixel })
}

/// Split for one run of a protocol; the run seed is `seed + run`.
pub fn make_split(
    manifest: &DatasetManifest,
    protocol: ProtocolKind,
    object: &str,
    k: usize,
    seed: u64,
    pool_seed: u64,
    run: usize,
) -> Result<SplitManifest> {
    let rs = run_seed(seed, run);
    let s = match protocol {
        ProtocolKind::OneClass => one_class_split(manifest, object, rs)?,
        ProtocolKind::HighShot => high_shot_split(manifest, object, rs)?,
        ProtocolKind::KShot => k_shot_split(manifest, object, k, pool_seed, rs)?,
    }
    .with_run(run);
    s.validate(manifest)?;
    Ok(s)
}

/// The only object of a manifest, or `requested` if given.
pub fn resolve_object(manifest: &DatasetManifest, requested: Option<String>) -> Result<String> {
    if let Some(o) = requested {
        return Ok(o);
    }
    match manifest.objects().as_slice() {
        [only] => Ok(only.to_string()),
        many => Err(invalid!("manifest has {} objects; pass --object", many.len())),
    }
}
