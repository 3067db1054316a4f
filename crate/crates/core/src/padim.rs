//! Per-patch Gaussian anomaly scoring over encoder feature grids.
//!
//! Each grid cell gets a multivariate Gaussian fitted on training normals;
//! a test patch scores its Mahalanobis distance to that cell's Gaussian.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::image::Image;
use crate::linalg::{cholesky_packed, forward_substitute_packed, packed_index};
use crate::netcore::{Checkpoint, Network, ParamSet};
use crate::raster::{blur_plane, resize_plane};
use crate::rng::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

const STREAM_CHANNELS: u64 = 0x5041_4449;

/// Encoder patch features on the shallowest block's grid, stored cell-major
/// (`grid_h × grid_w × dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchFeatureGrid {
    pub grid_h: usize,
    pub grid_w: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl PatchFeatureGrid {
    pub fn new(grid_h: usize, grid_w: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || dim == 0 || data.len() != grid_h * grid_w * dim {
            return Err(shape_err!("feature grid {}x{}x{} with {} values", grid_h, grid_w, dim, data.len()));
        }
        Ok(Self {
            grid_h,
            grid_w,
            dim,
            data,
        })
    }

    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn cell(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PadimConfig {
    /// Ridge added to every covariance diagonal.
    pub epsilon: f64,
    /// Upper bound on the number of randomly kept channels.
    pub max_channels: usize,
    pub seed: u64,
    /// Gaussian smoothing of the upsampled map, in output pixels.
    pub smooth_sigma: f64,
}

impl Default for PadimConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_channels: 100,
            seed: 0,
            smooth_sigma: 4.0,
        }
    }
}

/// Fitted per-cell Gaussians. Means and Cholesky factors are kept in `f32`
/// so the model file round-trips exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPatchModel {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Channel count of the grids the model was fitted on.
    pub feature_dim: usize,
    /// Kept channels, ascending and distinct.
    pub channels: Vec<usize>,
    pub epsilon: f64,
    pub n_samples: usize,
    /// `cells × d`.
    pub means: Vec<f32>,
    /// `cells × d(d+1)/2`, row-major packed lower factors of `Σ + εI`.
    pub cholesky: Vec<f32>,
}

impl GaussianPatchModel {
    pub fn d(&self) -> usize {
        self.channels.len()
    }

    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn packed_len(&self) -> usize {
        let d = self.d();
        d * (d + 1) / 2
    }

    pub fn mean(&self, cell: usize) -> &[f32] {
        let d = self.d();
        &self.means[cell * d..(cell + 1) * d]
    }

    pub fn factor(&self, cell: usize) -> &[f32] {
        let p = self.packed_len();
        &self.cholesky[cell * p..(cell + 1) * p]
    }

    /// Checks internal consistency, e.g. after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 || self.cells() == 0 {
            return Err(invalid!("empty patch model"));
        }
        if self.channels.windows(2).any(|w| w[0] >= w[1]) || self.channels.iter().any(|&c| c >= self.feature_dim) {
            return Err(invalid!("channel indices must be ascending, distinct and below {}", self.feature_dim));
        }
        if self.means.len() != self.cells() * d || self.cholesky.len() != self.cells() * self.packed_len() {
            return Err(shape_err!("patch model blobs do not match {} cells of dimension {}", self.cells(), d));
        }
        for cell in 0..self.cells() {
            let l = self.factor(cell);
            if (0..d).any(|i| !(l[packed_index(i, i)] > 0.0)) {
                return Err(Error::Internal(alloc::format!("cell {cell} has a singular Cholesky factor")));
            }
        }
        Ok(())
    }
}

/// Per-pixel anomaly scores, non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl AnomalyMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape_err!("{}x{} map with {} values", height, width, data.len()));
        }
        if data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid!("anomaly scores must be finite and non-negative"));
        }
        Ok(Self { height, width, data })
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Per-cell sample mean and regularized covariance, before any rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStatistics {
    pub mean: Vec<f64>,
    /// Row-major `d × d`, denominator `n − 1`, plus `εI`.
    pub covariance: Vec<f64>,
}

/// Grids for a batch of images; block outputs are bilinearly resized to the
/// first block's grid and concatenated along channels.
pub fn extract_features_with(net: &Network, params: &ParamSet<f32>, images: &[Image]) -> Result<Vec<PatchFeatureGrid>> {
    const CHUNK: usize = 16;
    let mut grids = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let fwd = net.forward(params, chunk)?;
        for i in 0..chunk.len() {
            let maps = fwd.block_maps(i);
            let (gh, gw) = (maps[0].shape()[1], maps[0].shape()[2]);
            let dim: usize = maps.iter().map(|m| m.shape()[0]).sum();
            let cells = gh * gw;
            let mut data = vec![0.0f32; cells * dim];
            let mut c0 = 0;
            for m in maps {
                let (c, h, w) = (m.shape()[0], m.shape()[1], m.shape()[2]);
                for ci in 0..c {
                    let plane = &m.data()[ci * h * w..(ci + 1) * h * w];
                    let resized;
                    let src: &[f32] = if (h, w) == (gh, gw) {
                        plane
                    } else {
                        resized = resize_plane(plane, h, w, gh, gw);
                        &resized
                    };
                    for (cell, &v) in src.iter().enumerate() {
                        data[cell * dim + c0 + ci] = v;
                    }
                }
                c0 += c;
            }
            grids.push(PatchFeatureGrid::new(gh, gw, dim, data)?);
        }
    }
    Ok(grids)
}

/// Feature grid of one image under a trained checkpoint.
pub fn extract_features(ck: &Checkpoint, img: &Image) -> Result<PatchFeatureGrid> {
    let net = ck.network()?;
    Ok(extract_features_with(&net, &ck.params, core::slice::from_ref(img))?.remove(0))
}

/// Feature grids of many images under a trained checkpoint.
pub fn extract_features_batch(ck: &Checkpoint, images: &[Image]) -> Result<Vec<PatchFeatureGrid>> {
    extract_features_with(&ck.network()?, &ck.params, images)
}

/// `min(max_channels, dim)` distinct channels drawn by `seed`, ascending.
pub fn select_channels(dim: usize, max_channels: usize, seed: u64) -> Vec<usize> {
    let d = max_channels.min(dim);
    let mut all: Vec<usize> = (0..dim).collect();
    if d < dim {
        let mut rng = RngStream::new(seed, STREAM_CHANNELS);
        for i in 0..d {
            let j = i + rng.below(dim - i);
            all.swap(i, j);
        }
        all.truncate(d);
        all.sort_unstable();
    }
    all
}

fn check_grids(grids: &[PatchFeatureGrid]) -> Result<(usize, usize, usize)> {
    let first = grids.first().ok_or_else(|| invalid!("no feature grids"))?;
    let shape = (first.grid_h, first.grid_w, first.dim);
    if grids.iter().any(|g| (g.grid_h, g.grid_w, g.dim) != shape) {
        return Err(shape_err!("feature grids differ in shape"));
    }
    Ok(shape)
}

/// Selected-channel samples of one cell, sorted by bit pattern so the
/// result does not depend on the order of the training images.
fn cell_samples(grids: &[PatchFeatureGrid], cell: usize, channels: &[usize]) -> Vec<Vec<f32>> {
    let mut rows: Vec<Vec<f32>> = grids
        .iter()
        .map(|g| {
            let c = g.cell(cell);
            channels.iter().map(|&k| c[k]).collect()
        })
        .collect();
    rows.sort_unstable_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.to_bits().cmp(&y.to_bits()))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    rows
}

fn statistics_of(rows: &[Vec<f32>], d: usize, epsilon: f64) -> CellStatistics {
    let n = rows.len() as f64;
    let mut mean = vec![0.0f64; d];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0f64; d * d];
    let mut centered = vec![0.0f64; d];
    for r in rows {
        for ((c, &v), &m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = f64::from(v) - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let row = &mut cov[i * d..i * d + i + 1];
            for (dst, &cj) in row.iter_mut().zip(&centered[..=i]) {
                *dst += ci * cj;
            }
        }
    }
    let denom = n - 1.0;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[i * d + j] / denom + if i == j { epsilon } else { 0.0 };
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    CellStatistics { mean, covariance: cov }
}

fn check_fit_inputs(grids: &[PatchFeatureGrid], epsilon: f64) -> Result<(usize, usize, usize)> {
    if grids.len() < 2 {
        return Err(invalid!("fitting needs at least 2 training images, got {}", grids.len()));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(invalid!("epsilon must be finite and >= 0, got {epsilon}"));
    }
    check_grids(grids)
}

/// Exact per-cell statistics on the given channels, for inspection and tests.
pub fn sample_statistics(grids: &[PatchFeatureGrid], channels: &[usize], epsilon: f64) -> Result<Vec<CellStatistics>> {
    let (gh, gw, dim) = check_fit_inputs(grids, epsilon)?;
    if channels.is_empty() || channels.iter().any(|&c| c >= dim) {
        return Err(invalid!("channel indices must be non-empty and below {dim}"));
    }
    Ok((0..gh * gw)
        .map(|cell| statistics_of(&cell_samples(grids, cell, channels), channels.len(), epsilon))
        .collect())
}

/// Fits one Gaussian per grid cell on training-normal grids.
pub fn fit(cfg: &PadimConfig, grids: &[PatchFeatureGrid]) -> Result<GaussianPatchModel> {
    let (gh, gw, dim) = check_fit_inputs(grids, cfg.epsilon)?;
    if cfg.max_channels == 0 {
        return Err(invalid!("max_channels must be >= 1"));
    }
    let channels = select_channels(dim, cfg.max_channels, cfg.seed);
    let d = channels.len();
    let cells = gh * gw;
    let mut means = Vec::with_capacity(cells * d);
    let mut chol = Vec::with_capacity(cells * d * (d + 1) / 2);
    for cell in 0..cells {
        let stats = statistics_of(&cell_samples(grids, cell, &channels), d, cfg.epsilon);
        let l = cholesky_packed(&stats.covariance, d).ok_or_else(|| {
            invalid!("covariance of cell {cell} is not positive definite; use a larger epsilon")
        })?;
        means.extend(stats.mean.iter().map(|&m| m as f32));
        chol.extend(l.iter().map(|&v| v as f32));
    }
    let model = GaussianPatchModel {
        grid_h: gh,
        grid_w: gw,
        feature_dim: dim,
        channels,
        epsilon: cfg.epsilon,
        n_samples: grids.len(),
        means,
        cholesky: chol,
    };
    model.validate()?;
    Ok(model)
}

/// Mahalanobis distance of every cell, on the model grid (`grid_h × grid_w`).
pub fn cell_distances(model: &GaussianPatchModel, grid: &PatchFeatureGrid) -> Result<Vec<f64>> {
    if (grid.grid_h, grid.grid_w, grid.dim) != (model.grid_h, model.grid_w, model.feature_dim) {
        return Err(shape_err!(
            "grid {}x{}x{} does not match model {}x{}x{}",
            grid.grid_h,
            grid.grid_w,
            grid.dim,
            model.grid_h,
            model.grid_w,
            model.feature_dim
        ));
    }
    let d = model.d();
    let mut l = vec![0.0f64; model.packed_len()];
    let mut diff = vec![0.0f64; d];
    let mut out = Vec::with_capacity(model.cells());
    for cell in 0..model.cells() {
        for (dst, &v) in l.iter_mut().zip(model.factor(cell)) {
            *dst = f64::from(v);
        }
        let x = grid.cell(cell);
        for ((dst, &k), &m) in diff.iter_mut().zip(&model.channels).zip(model.mean(cell)) {
            *dst = f64::from(x[k]) - f64::from(m);
        }
        forward_substitute_packed(&l, d, &mut diff);
        let dist = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !dist.is_finite() {
            return Err(Error::Internal(alloc::format!("non-finite distance in cell {cell}")));
        }
        out.push(dist);
    }
    Ok(out)
}

/// Cell distances upsampled to `out_h × out_w` and smoothed.
pub fn score_map(
    model: &GaussianPatchModel,
    grid: &PatchFeatureGrid,
    out_h: usize,
    out_w: usize,
    smooth_sigma: f64,
) -> Result<AnomalyMap> {
    if out_h == 0 || out_w == 0 {
        return Err(invalid!("output size must be positive"));
    }
    if !(smooth_sigma >= 0.0) {
        return Err(invalid!("smoothing sigma must be >= 0, got {smooth_sigma}"));
    }
    let dist: Vec<f32> = cell_distances(model, grid)?.iter().map(|&v| v as f32).collect();
    let up = resize_plane(&dist, model.grid_h, model.grid_w, out_h, out_w);
    let smooth = blur_plane(&up, out_h, out_w, smooth_sigma, smooth_sigma);
    AnomalyMap::new(out_h, out_w, smooth.into_iter().map(|v| v.max(0.0)).collect())
}

/// Image-level score: the map maximum.
pub fn image_score(map: &AnomalyMap) -> f32 {
    map.data.iter().copied().fold(0.0, f32::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(values: &[f32]) -> PatchFeatureGrid {
        PatchFeatureGrid::new(1, 1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn two_sample_toy() {
        let grids = [grid1(&[0.0]), grid1(&[2.0])];
        let s = sample_statistics(&grids, &[0], 0.01).unwrap();
        assert_eq!(s[0].mean, vec![1.0]);
        assert_eq!(s[0].covariance, vec![2.0 + 0.01]);
    }

    #[test]
    fn identical_images_give_ridge_only() {
        let grids = [grid1(&[0.3, -1.5]), grid1(&[0.3, -1.5])];
        let s = sample_statistics(&grids, &[0, 1], 0.01).unwrap();
        assert_eq!(s[0].covariance, vec![0.01, 0.0, 0.0, 0.01]);
        assert_eq!(s[0].mean, vec![f64::from(0.3f32), -1.5]);
    }

    #[test]
    fn scalar_mahalanobis() {
        // mean 1, variance 4 → x = 3 is one standard deviation away.
        let model = GaussianPatchModel {
            grid_h: 1,
            grid_w: 1,
            feature_dim: 1,
            channels: vec![0],
            epsilon: 0.0,
            n_samples: 2,
            means: vec![1.0],
            cholesky: vec![2.0],
        };
        assert_eq!(cell_distances(&model, &grid1(&[3.0])).unwrap(), vec![1.0]);
        assert_eq!(cell_distances(&model, &grid1(&[1.0])).unwrap(), vec![0.0]);
    }

    #[test]
    fn channel_selection() {
        assert_eq!(select_channels(5, 100, 1), vec![0, 1, 2, 3, 4]);
        let c = select_channels(112, 100, 7);
        assert_eq!(c.len(), 100);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c, select_channels(112, 100, 7));
        assert_ne!(c, select_channels(112, 100, 8));
    }

    #[test]
    fn fit_needs_two_images() {
        assert!(fit(&PadimConfig::default(), &[grid1(&[1.0])]).is_err());
    }

    #[test]
    fn score_is_max() {
        let map = AnomalyMap::new(2, 2, vec![0.0, 3.5, 1.0, 0.2]).unwrap();
        assert_eq!(image_score(&map), 3.5);
        assert_eq!(image_score(&AnomalyMap::new(1, 2, vec![0.0, 0.0]).unwrap()), 0.0);
    }
}
