//! Single-plane raster kernels: Gaussian smoothing with reflect padding and
//! half-pixel bilinear resampling.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Mirror index into `0..n` without repeating the edge sample (`d c b | a b c d | c b a`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Truncation radius of a Gaussian kernel: `ceil(3σ)`.
pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Normalized 1-D Gaussian taps over `[-r, r]`, `r = ceil(3σ)`. `σ = 0` yields `[1]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = kernel_radius(sigma) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

fn convolve_rows(src: &[f32], h: usize, w: usize, k: &[f64]) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f64;
            for (t, &kv) in k.iter().enumerate() {
                let xi = reflect_index(x as isize + t as isize - r, w);
                acc += kv * row[xi] as f64;
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

fn convolve_cols(src: &[f32], h: usize, w: usize, k: &[f64]) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0f32; h * w];
    let mut acc = vec![0.0f64; w];
    for y in 0..h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (t, &kv) in k.iter().enumerate() {
            let yi = reflect_index(y as isize + t as isize - r, h);
            let row = &src[yi * w..(yi + 1) * w];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += kv * v as f64;
            }
        }
        for (o, &a) in out[y * w..(y + 1) * w].iter_mut().zip(&acc) {
            *o = a as f32;
        }
    }
    out
}

/// Separable Gaussian blur of one `h × w` plane. A zero sigma skips that axis.
pub fn blur_plane(src: &[f32], h: usize, w: usize, sigma_y: f64, sigma_x: f64) -> Vec<f32> {
    let mut cur = src.to_vec();
    if sigma_x > 0.0 {
        cur = convolve_rows(&cur, h, w, &gaussian_kernel(sigma_x));
    }
    if sigma_y > 0.0 {
        cur = convolve_cols(&cur, h, w, &gaussian_kernel(sigma_y));
    }
    cur
}

/// Sampling positions and weights along one axis for a window `[start, start + extent)`
/// of a length-`n` source resampled to `out` pixels (half-pixel centers).
pub(crate) fn bilinear_taps(n: usize, start: f64, extent: f64, out: usize) -> Vec<(usize, usize, f64)> {
    let step = extent / out as f64;
    // Samples stay inside the window so a crop never reads its surroundings.
    let lo = start.max(0.0);
    let hi = (start + extent - 1.0).min((n - 1) as f64).max(lo);
    (0..out)
        .map(|i| {
            let s = (start + (i as f64 + 0.5) * step - 0.5).clamp(lo, hi);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling of the window `(top, left, win_h, win_w)` of an
/// interleaved `h × w × channels` buffer to `out_h × out_w`.
#[allow(clippy::too_many_arguments)]
pub fn resample_window(
    src: &[f32],
    h: usize,
    w: usize,
    channels: usize,
    top: f64,
    left: f64,
    win_h: f64,
    win_w: f64,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let ys = bilinear_taps(h, top, win_h, out_h);
    let xs = bilinear_taps(w, left, win_w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w * channels);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let at = |y: usize, x: usize| src[(y * w + x) * channels + c] as f64;
                let top_v = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot_v = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push((top_v * (1.0 - fy) + bot_v * fy) as f32);
            }
        }
    }
    out
}

/// Whole-plane bilinear resize.
pub fn resize_plane(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    resample_window(src, h, w, 1, 0.0, 0.0, h as f64, w as f64, out_h, out_w)
}
