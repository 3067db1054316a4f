//! Procedural textures with stamped defects, a small stand-in for an
//! industrial inspection dataset.
//!
//! Texture pixels stay inside `[0.13, 0.67]` and every defect paints values
//! outside that band, so the ground-truth mask is exactly the set of pixels
//! that differ from the defect-free twin.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, Label, ManifestRecord};
use crate::error::{invalid, Result};
use crate::image::{BinaryMask, Image, MIN_SIDE};
use crate::rng::RngStream;

#[allow(unused_imports)]
use num_traits::Float;

const STREAM_SYNTH: u64 = 0x5359_4e54_4800_0001;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureFamily {
    Stripes,
    Checker,
    Blobs,
}

impl TextureFamily {
    pub const ALL: [TextureFamily; 3] = [TextureFamily::Stripes, TextureFamily::Checker, TextureFamily::Blobs];

    pub fn as_str(self) -> &'static str {
        match self {
            TextureFamily::Stripes => "stripes",
            TextureFamily::Checker => "checker",
            TextureFamily::Blobs => "blobs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| invalid!("unknown texture '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefectKind {
    /// Dark filled disc.
    Spot,
    /// Bright two-pixel-thick line.
    Scratch,
    /// Flat grey rectangle where the texture is gone.
    MissingPatch,
}

impl DefectKind {
    pub const ALL: [DefectKind; 3] = [DefectKind::Spot, DefectKind::Scratch, DefectKind::MissingPatch];

    pub fn as_str(self) -> &'static str {
        match self {
            DefectKind::Spot => "spot",
            DefectKind::Scratch => "scratch",
            DefectKind::MissingPatch => "missing-patch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| invalid!("unknown defect kind '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpusConfig {
    pub object: String,
    pub count: usize,
    /// Square side in pixels.
    pub size: usize,
    /// Each image picks one family uniformly.
    pub textures: Vec<TextureFamily>,
    /// Empty means a defect-free corpus.
    pub defects: Vec<DefectKind>,
    /// Inclusive range for the longest side of a defect's bounding box.
    pub defect_size: (usize, usize),
    /// Share of images that receive a defect, rounded down.
    pub anomaly_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            object: "synth".into(),
            count: 200,
            size: 64,
            textures: TextureFamily::ALL.to_vec(),
            defects: DefectKind::ALL.to_vec(),
            defect_size: (6, 14),
            anomaly_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(invalid!("corpus needs at least one image"));
        }
        if self.size < MIN_SIDE {
            return Err(invalid!("image size {} is below {}", self.size, MIN_SIDE));
        }
        if self.textures.is_empty() {
            return Err(invalid!("at least one texture family is required"));
        }
        let (lo, hi) = self.defect_size;
        if lo < 3 || lo > hi || hi >= self.size {
            return Err(invalid!(
                "defect size range {lo}..={hi} must satisfy 3 <= min <= max < {}",
                self.size
            ));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return Err(invalid!("anomaly fraction {} outside [0, 1]", self.anomaly_fraction));
        }
        if self.object.is_empty() || self.object.contains('/') {
            return Err(invalid!("object name '{}' is not a plain name", self.object));
        }
        Ok(())
    }

    /// Number of anomalous images.
    pub fn anomaly_count(&self) -> usize {
        if self.defects.is_empty() {
            0
        } else {
            (self.count as f64 * self.anomaly_fraction).floor() as usize
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub images: Vec<Image>,
    /// Empty masks for normals.
    pub masks: Vec<BinaryMask>,
    pub defects: Vec<Option<DefectKind>>,
    /// Root-relative path of each image, aligned with `images`.
    pub paths: Vec<String>,
    pub manifest: DatasetManifest,
}

impl SyntheticCorpus {
    pub fn labels(&self) -> Vec<Label> {
        self.defects
            .iter()
            .map(|d| if d.is_some() { Label::Anomaly } else { Label::Normal })
            .collect()
    }

    /// Indices of normal (`false`) or anomalous (`true`) images.
    pub fn indices(&self, anomalous: bool) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| self.defects[i].is_some() == anomalous)
            .collect()
    }
}

/// A 3-channel texture with values inside `[0.13, 0.67]`.
pub fn render_texture(family: TextureFamily, size: usize, rng: &mut RngStream) -> Image {
    let n = size as f64;
    let tint = [rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0)];
    let pattern: Vec<f64> = match family {
        TextureFamily::Stripes => {
            let freq = rng.uniform(3.0, 6.0);
            let theta = rng.uniform(0.0, PI);
            let phase = rng.uniform(0.0, 2.0 * PI);
            let (s, c) = theta.sin_cos();
            grid(size, |y, x| 0.5 * (1.0 + (2.0 * PI * freq * (x * c + y * s) / n + phase).sin()))
        }
        TextureFamily::Checker => {
            let cell = rng.uniform(n / 8.0, n / 4.0);
            let (oy, ox) = (rng.uniform(0.0, cell), rng.uniform(0.0, cell));
            grid(size, |y, x| {
                let k = ((y + oy) / cell).floor() + ((x + ox) / cell).floor();
                if (k as i64) % 2 == 0 {
                    0.2
                } else {
                    0.9
                }
            })
        }
        TextureFamily::Blobs => {
            let count = 4 + rng.below(5);
            let blobs: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| (rng.uniform(0.0, n), rng.uniform(0.0, n), rng.uniform(n / 12.0, n / 6.0)))
                .collect();
            grid(size, |y, x| {
                let v: f64 = blobs
                    .iter()
                    .map(|&(cy, cx, s)| (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp())
                    .sum();
                v.min(1.0)
            })
        }
    };
    let mut data = Vec::with_capacity(size * size * 3);
    for &p in &pattern {
        for t in tint {
            data.push((0.15 + 0.5 * p * t + rng.uniform(-0.02, 0.02)) as f32);
        }
    }
    Image::new(size, size, 3, data).expect("texture values are in range")
}

fn grid(size: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            out.push(f(y as f64, x as f64));
        }
    }
    out
}

/// Copy of `img` with one defect whose bounding box has longest side
/// `side`, placed uniformly inside the image.
pub fn stamp_defect(img: &Image, kind: DefectKind, side: usize, rng: &mut RngStream) -> Result<Image> {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    if side < 3 || side >= h.min(w) {
        return Err(invalid!("defect side {side} does not fit a {h}x{w} image"));
    }
    let mut data = img.data().to_vec();
    let mut paint = |y: usize, x: usize, v: &[f32]| {
        for c in 0..ch {
            data[(y * w + x) * ch + c] = v[c.min(v.len() - 1)];
        }
    };
    match kind {
        DefectKind::Spot => {
            let v = [rng.uniform(0.0, 0.05) as f32];
            let y0 = rng.below(h - side + 1);
            let x0 = rng.below(w - side + 1);
            let c = (side as f64 - 1.0) / 2.0;
            let r2 = (side as f64 / 2.0).powi(2);
            for dy in 0..side {
                for dx in 0..side {
                    if (dy as f64 - c).powi(2) + (dx as f64 - c).powi(2) <= r2 {
                        paint(y0 + dy, x0 + dx, &v);
                    }
                }
            }
        }
        DefectKind::Scratch => {
            let v = [rng.uniform(0.9, 1.0) as f32];
            // Major axis spans exactly `side` pixels; the minor axis, two
            // pixels thick, spans at most `side`.
            let drift = rng.below(2 * (side - 2) + 1) as isize - (side as isize - 2);
            let horizontal = rng.bernoulli(0.5);
            let (major_len, minor_len) = if horizontal { (w, h) } else { (h, w) };
            let m0 = rng.below(major_len - side + 1);
            let span = drift.unsigned_abs() + 2;
            let n0 = rng.below(minor_len - span + 1) + if drift < 0 { drift.unsigned_abs() } else { 0 };
            for t in 0..side {
                let off = (t as f64 * drift as f64 / (side as f64 - 1.0)).round() as isize;
                let minor = (n0 as isize + off) as usize;
                for m in [minor, minor + 1] {
                    if horizontal {
                        paint(m, m0 + t, &v);
                    } else {
                        paint(m0 + t, m, &v);
                    }
                }
            }
        }
        DefectKind::MissingPatch => {
            let v = [0.85f32];
            let other = side / 2 + rng.below(side - side / 2 + 1);
            let (ph, pw) = if rng.bernoulli(0.5) { (side, other) } else { (other, side) };
            let y0 = rng.below(h - ph + 1);
            let x0 = rng.below(w - pw + 1);
            for y in y0..y0 + ph {
                for x in x0..x0 + pw {
                    paint(y, x, &v);
                }
            }
        }
    }
    Image::new(h, w, ch, data)
}

/// Pixels where any channel differs.
pub fn difference_mask(a: &Image, b: &Image) -> Result<BinaryMask> {
    if (a.height(), a.width(), a.channels()) != (b.height(), b.width(), b.channels()) {
        return Err(invalid!("images differ in shape"));
    }
    let ch = a.channels();
    let data = a
        .data()
        .chunks(ch)
        .zip(b.data().chunks(ch))
        .map(|(p, q)| p != q)
        .collect();
    BinaryMask::new(a.height(), a.width(), data)
}

/// Generates the corpus. Textures depend only on `(seed, index)`, so a
/// defect-free config with the same seed reproduces every anomaly's twin.
pub fn gen_synthetic_corpus(cfg: &SyntheticCorpusConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let base = RngStream::new(cfg.seed, STREAM_SYNTH);
    let mut order: Vec<usize> = (0..cfg.count).collect();
    order.shuffle(&mut base.substream(u64::MAX));
    let mut anomalous = vec![false; cfg.count];
    for &i in &order[..cfg.anomaly_count()] {
        anomalous[i] = true;
    }

    let mut out = SyntheticCorpus {
        images: Vec::with_capacity(cfg.count),
        masks: Vec::with_capacity(cfg.count),
        defects: Vec::with_capacity(cfg.count),
        paths: Vec::with_capacity(cfg.count),
        manifest: DatasetManifest::default(),
    };
    let mut records = Vec::with_capacity(cfg.count);
    for (i, &is_anomaly) in anomalous.iter().enumerate() {
        let item = base.substream(i as u64);
        let mut tex_rng = item.substream(1);
        let family = cfg.textures[tex_rng.below(cfg.textures.len())];
        let normal = render_texture(family, cfg.size, &mut tex_rng);
        let obj = &cfg.object;
        let (image, mask, defect, path, mask_path) = if is_anomaly {
            let mut d_rng = item.substream(2);
            let kind = cfg.defects[d_rng.below(cfg.defects.len())];
            let side = cfg.defect_size.0 + d_rng.below(cfg.defect_size.1 - cfg.defect_size.0 + 1);
            let img = stamp_defect(&normal, kind, side, &mut d_rng)?;
            let mask = difference_mask(&img, &normal)?;
            let k = kind.as_str();
            (
                img,
                mask,
                Some(kind),
                format!("{obj}/anomaly/{k}/{i:05}.ppm"),
                Some(format!("{obj}/masks/{k}/{i:05}.pgm")),
            )
        } else {
            let mask = BinaryMask::empty(cfg.size, cfg.size);
            (normal, mask, None, format!("{obj}/normal/{i:05}.ppm"), None)
        };
        records.push(ManifestRecord {
            id: String::from(&path[..path.len() - 4]),
            path: path.clone(),
            object: obj.clone(),
            label: if defect.is_some() { Label::Anomaly } else { Label::Normal },
            mask_path,
            anomaly_class: defect.map(|d| String::from(d.as_str())),
        });
        out.images.push(image);
        out.masks.push(mask);
        out.defects.push(defect);
        out.paths.push(path);
    }
    out.manifest = DatasetManifest::new(records)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox_side(m: &BinaryMask) -> usize {
        let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.data()[y * m.width() + x] {
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                }
            }
        }
        (y1 - y0 + 1).max(x1 - x0 + 1)
    }

    #[test]
    fn texture_band() {
        for f in TextureFamily::ALL {
            let img = render_texture(f, 32, &mut RngStream::new(1, 2));
            assert!(img.data().iter().all(|&v| (0.13..=0.67).contains(&v)));
        }
    }

    #[test]
    fn each_defect_has_requested_extent() {
        let img = render_texture(TextureFamily::Stripes, 32, &mut RngStream::new(3, 0));
        for kind in DefectKind::ALL {
            for side in 3..20 {
                for s in 0..8 {
                    let d = stamp_defect(&img, kind, side, &mut RngStream::new(s, side as u64)).unwrap();
                    let m = difference_mask(&d, &img).unwrap();
                    assert_eq!(bbox_side(&m), side, "{kind:?} side {side}");
                }
            }
        }
    }

    #[test]
    fn corpus_shape_and_determinism() {
        let cfg = SyntheticCorpusConfig {
            count: 20,
            size: 32,
            defect_size: (4, 8),
            seed: 5,
            ..Default::default()
        };
        let a = gen_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.indices(true).len(), 5);
        assert_eq!(a.manifest.len(), 20);
        let b = gen_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.manifest, b.manifest);
        for i in a.indices(true) {
            assert!(a.masks[i].area() > 0);
        }
        let clean = gen_synthetic_corpus(&SyntheticCorpusConfig {
            defects: Vec::new(),
            ..cfg.clone()
        })
        .unwrap();
        assert!(clean.labels().iter().all(|l| *l == Label::Normal));
        assert!(clean.masks.iter().all(|m| m.area() == 0));
    }

    #[test]
    fn rejects_bad_configs() {
        let ok = SyntheticCorpusConfig::default();
        ok.validate().unwrap();
        for bad in [
            SyntheticCorpusConfig { count: 0, ..ok.clone() },
            SyntheticCorpusConfig {
                defect_size: (10, 64),
                ..ok.clone()
            },
            SyntheticCorpusConfig {
                anomaly_fraction: 1.5,
                ..ok.clone()
            },
            SyntheticCorpusConfig {
                textures: Vec::new(),
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
