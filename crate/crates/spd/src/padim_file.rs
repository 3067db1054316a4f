//! `.padim` files: one line of compact JSON, then little-endian `f32` blobs
//! for the means, the packed Cholesky factors and the channel indices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spd_core::padim::GaussianPatchModel;

use crate::error::{invalid, CliError, Result};
use crate::pnm::write_bytes;

pub const PADIM_VERSION: u32 = 1;

/// A fitted model plus the scoring settings it was fitted for.
#[derive(Clone, Debug, PartialEq)]
pub struct PadimArtifact {
    pub model: GaussianPatchModel,
    /// Side length images are resized to before feature extraction.
    pub input_size: usize,
    pub smooth_sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    grid_h: usize,
    grid_w: usize,
    feature_dim: usize,
    d: usize,
    epsilon: f64,
    n_samples: usize,
    input_size: usize,
    smooth_sigma: f64,
    /// Element counts of the three blobs, in file order.
    blobs: [usize; 3],
}

fn push_f32s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f32>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_padim(a: &PadimArtifact) -> Result<Vec<u8>> {
    let m = &a.model;
    let header = Header {
        version: PADIM_VERSION,
        grid_h: m.grid_h,
        grid_w: m.grid_w,
        feature_dim: m.feature_dim,
        d: m.d(),
        epsilon: m.epsilon,
        n_samples: m.n_samples,
        input_size: a.input_size,
        smooth_sigma: a.smooth_sigma,
        blobs: [m.means.len(), m.cholesky.len(), m.channels.len()],
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    push_f32s(&mut out, m.means.iter().copied());
    push_f32s(&mut out, m.cholesky.iter().copied());
    // Indices stay far below 2^24, so f32 holds them exactly.
    push_f32s(&mut out, m.channels.iter().map(|&c| c as f32));
    Ok(out)
}

pub fn decode_padim(bytes: &[u8]) -> Result<PadimArtifact> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| invalid!("model header is not terminated by a newline"))?;
    let h: Header = serde_json::from_slice(&bytes[..nl])?;
    if h.version != PADIM_VERSION {
        return Err(invalid!("unsupported model version {}", h.version));
    }
    let cells = h.grid_h * h.grid_w;
    let expect = [cells * h.d, cells * h.d * (h.d + 1) / 2, h.d];
    if h.blobs != expect {
        return Err(invalid!("blob sizes {:?} do not match the header (expected {expect:?})", h.blobs));
    }
    let body = &bytes[nl + 1..];
    let total: usize = expect.iter().sum();
    if body.len() != 4 * total {
        return Err(invalid!("model data is {} bytes, expected {}", body.len(), 4 * total));
    }
    let floats: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let (means, rest) = floats.split_at(expect[0]);
    let (chol, idx) = rest.split_at(expect[1]);
    let mut channels = Vec::with_capacity(idx.len());
    for &c in idx {
        if !(c >= 0.0 && c.fract() == 0.0 && c < h.feature_dim as f32) {
            return Err(invalid!("invalid channel index {c}"));
        }
        channels.push(c as usize);
    }
    let model = GaussianPatchModel {
        grid_h: h.grid_h,
        grid_w: h.grid_w,
        feature_dim: h.feature_dim,
        channels,
        epsilon: h.epsilon,
        n_samples: h.n_samples,
        means: means.to_vec(),
        cholesky: chol.to_vec(),
    };
    model.validate()?;
    if model.means.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("model means are not finite"));
    }
    Ok(PadimArtifact {
        model,
        input_size: h.input_size,
        smooth_sigma: h.smooth_sigma,
    })
}

pub fn save_padim(path: &Path, a: &PadimArtifact) -> Result<()> {
    write_bytes(path, &encode_padim(a)?)
}

pub fn load_padim(path: &Path) -> Result<PadimArtifact> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_padim(&bytes).map_err(|e| e.in_file(path))
}
