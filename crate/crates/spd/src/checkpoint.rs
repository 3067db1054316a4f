//! `.spdckpt` files: one line of compact JSON, then every parameter tensor as
//! little-endian `f32` in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spd_core::imageops::{AugConfig, JitterStrengths, PatchPlacement, SmoothBlendConfig, StrongConfig, WeakConfig};
use spd_core::netcore::{Checkpoint, Network, NetworkConfig, Objective, ParamSet, Precision, TrainConfig};
use spd_core::Tensor;

use crate::error::{invalid, CliError, Result};
use crate::pnm::write_bytes;

#[derive(Serialize, Deserialize)]
struct ShapeEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    shapes: Vec<ShapeEntry>,
    config: TrainConfigJson,
    seed: u64,
    loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct Jitter {
    brightness: f32,
    contrast: f32,
    saturation: f32,
    hue: f32,
}

impl From<JitterStrengths> for Jitter {
    fn from(j: JitterStrengths) -> Self {
        Self {
            brightness: j.brightness,
            contrast: j.contrast,
            saturation: j.saturation,
            hue: j.hue,
        }
    }
}

impl From<Jitter> for JitterStrengths {
    fn from(j: Jitter) -> Self {
        JitterStrengths::new(j.brightness, j.contrast, j.saturation, j.hue)
    }
}

#[derive(Serialize, Deserialize)]
struct SmoothBlendJson {
    area: (f64, f64),
    aspect: (f64, f64),
    mask_sigma: (f64, f64),
    jitter: Jitter,
    in_place: bool,
}

#[derive(Serialize, Deserialize)]
struct WeakJson {
    hflip_p: f64,
    crop_scale: (f64, f64),
    jitter: Jitter,
    jitter_p: f64,
    blur_sigma: (f64, f64),
    blur_p: f64,
}

#[derive(Serialize, Deserialize)]
struct StrongJson {
    crop_scale: (f64, f64),
    crop_ratio: (f64, f64),
    hflip_p: f64,
    jitter: Jitter,
    jitter_p: f64,
    grayscale_p: f64,
    blur_sigma: (f64, f64),
    blur_p: f64,
}

#[derive(Serialize, Deserialize)]
struct AugJson {
    smoothblend: SmoothBlendJson,
    weak: WeakJson,
    strong: StrongJson,
    out_size: usize,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    input_size: usize,
    in_channels: usize,
    widths: Vec<usize>,
    hidden_dim: usize,
    embed_dim: usize,
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct TrainConfigJson {
    objective: String,
    eta: f64,
    tau: f64,
    batch_size: usize,
    steps: usize,
    lr: f64,
    momentum: f64,
    seed: u64,
    precision: String,
    spd_cosine: bool,
    network: NetworkJson,
    aug: AugJson,
}

impl From<&TrainConfig> for TrainConfigJson {
    fn from(c: &TrainConfig) -> Self {
        let (sb, w, s) = (&c.aug.smoothblend, &c.aug.weak, &c.aug.strong);
        Self {
            objective: c.objective.name().into(),
            eta: c.eta,
            tau: c.tau,
            batch_size: c.batch_size,
            steps: c.steps,
            lr: c.lr,
            momentum: c.momentum,
            seed: c.seed,
            precision: match c.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            spd_cosine: c.spd_cosine,
            network: NetworkJson {
                input_size: c.network.input_size,
                in_channels: c.network.in_channels,
                widths: c.network.widths.clone(),
                hidden_dim: c.network.hidden_dim,
                embed_dim: c.network.embed_dim,
                num_classes: c.network.num_classes,
            },
            aug: AugJson {
                smoothblend: SmoothBlendJson {
                    area: sb.area,
                    aspect: sb.aspect,
                    mask_sigma: sb.mask_sigma,
                    jitter: sb.jitter.into(),
                    in_place: sb.placement == PatchPlacement::InPlace,
                },
                weak: WeakJson {
                    hflip_p: w.hflip_p,
                    crop_scale: w.crop_scale,
                    jitter: w.jitter.into(),
                    jitter_p: w.jitter_p,
                    blur_sigma: w.blur_sigma,
                    blur_p: w.blur_p,
                },
                strong: StrongJson {
                    crop_scale: s.crop_scale,
                    crop_ratio: s.crop_ratio,
                    hflip_p: s.hflip_p,
                    jitter: s.jitter.into(),
                    jitter_p: s.jitter_p,
                    grayscale_p: s.grayscale_p,
                    blur_sigma: s.blur_sigma,
                    blur_p: s.blur_p,
                },
                out_size: c.aug.out_size,
            },
        }
    }
}

impl TryFrom<TrainConfigJson> for TrainConfig {
    type Error = CliError;

    fn try_from(j: TrainConfigJson) -> Result<Self> {
        let objective = Objective::parse(&j.objective).ok_or_else(|| invalid!("unknown objective '{}'", j.objective))?;
        let precision = match j.precision.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            p => return Err(invalid!("unknown precision '{p}'")),
        };
        let (sb, w, s) = (j.aug.smoothblend, j.aug.weak, j.aug.strong);
        let cfg = TrainConfig {
            objective,
            eta: j.eta,
            tau: j.tau,
            batch_size: j.batch_size,
            steps: j.steps,
            lr: j.lr,
            momentum: j.momentum,
            seed: j.seed,
            precision,
            spd_cosine: j.spd_cosine,
            network: NetworkConfig {
                input_size: j.network.input_size,
                in_channels: j.network.in_channels,
                widths: j.network.widths,
                hidden_dim: j.network.hidden_dim,
                embed_dim: j.network.embed_dim,
                num_classes: j.network.num_classes,
            },
            aug: AugConfig {
                smoothblend: SmoothBlendConfig {
                    area: sb.area,
                    aspect: sb.aspect,
                    mask_sigma: sb.mask_sigma,
                    jitter: sb.jitter.into(),
                    placement: if sb.in_place {
                        PatchPlacement::InPlace
                    } else {
                        PatchPlacement::Random
                    },
                },
                weak: WeakConfig {
                    hflip_p: w.hflip_p,
                    crop_scale: w.crop_scale,
                    jitter: w.jitter.into(),
                    jitter_p: w.jitter_p,
                    blur_sigma: w.blur_sigma,
                    blur_p: w.blur_p,
                },
                strong: StrongConfig {
                    crop_scale: s.crop_scale,
                    crop_ratio: s.crop_ratio,
                    hflip_p: s.hflip_p,
                    jitter: s.jitter.into(),
                    jitter_p: s.jitter_p,
                    grayscale_p: s.grayscale_p,
                    blur_sigma: s.blur_sigma,
                    blur_p: s.blur_p,
                },
                out_size: j.aug.out_size,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Serializes a checkpoint.
pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let header = Header {
        version: ck.version,
        shapes: ck
            .params
            .iter()
            .map(|(name, t)| ShapeEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        config: (&ck.config).into(),
        seed: ck.seed(),
        loss_history: ck.loss_history.clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for (_, t) in ck.params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint and checks the blobs against the declared network.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| invalid!("checkpoint header is not terminated by a newline"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.version != spd_core::netcore::CHECKPOINT_VERSION {
        return Err(invalid!("unsupported checkpoint version {}", header.version));
    }
    let config = TrainConfig::try_from(header.config)?;
    if config.seed != header.seed {
        return Err(invalid!("header seed {} disagrees with the config seed {}", header.seed, config.seed));
    }
    let net = Network::new(config.network.clone())?;
    let layout: ParamSet<f32> = net.zeros();
    let declared: Vec<(&str, &[usize])> = header.shapes.iter().map(|s| (s.name.as_str(), &s.shape[..])).collect();
    let expected: Vec<(&str, &[usize])> = layout.iter().map(|(n, t)| (n, t.shape())).collect();
    if declared != expected {
        return Err(invalid!("checkpoint shapes do not match the network described by its config"));
    }
    let mut blob = &bytes[nl + 1..];
    let need = 4 * layout.num_scalars();
    if blob.len() != need {
        return Err(invalid!("parameter data is {} bytes, expected {need}", blob.len()));
    }
    let mut params = ParamSet::new();
    for (name, t) in layout.iter() {
        let (chunk, rest) = blob.split_at(4 * t.len());
        blob = rest;
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        params.push(name.to_string(), Tensor::from_vec(t.shape(), data)?);
    }
    if !params.all_finite() {
        return Err(invalid!("checkpoint contains non-finite parameters"));
    }
    Ok(Checkpoint {
        version: header.version,
        config,
        params,
        loss_history: header.loss_history,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_bytes(path, &encode_checkpoint(ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_checkpoint(&bytes).map_err(|e| e.in_file(path))
}
