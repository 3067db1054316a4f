//! Layer-granular reverse-mode differentiation.
//!
//! A [`Tape`] records one forward pass as a list of nodes. Layer parameters are
//! referenced by [`ParamId`] into a borrowed [`ParamSet`] rather than copied,
//! and [`Tape::backward`] accumulates parameter gradients into a buffer shaped
//! like that set.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::netcore::params::{ParamId, ParamSet};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    /// 3×3 convolution, stride 1, zero padding 1. `x: [Cin, H, W]`, `w: [Cout, Cin, 3, 3]`.
    /// `col` caches the im2col matrix for the backward pass.
    Conv3x3 { x: Var, w: ParamId, b: ParamId, col: Vec<T> },
    Relu(Var),
    /// 2×2 average pooling, stride 2.
    AvgPool2(Var),
    /// `[C, H, W] → [C]`.
    GlobalAvgPool(Var),
    /// `x: [Din]`, `w: [Dout, Din]`.
    Linear { x: Var, w: ParamId, b: ParamId },
    L2Normalize(Var),
    /// Records the blocked input for debugging; no gradient passes.
    StopGrad(#[allow(dead_code)] Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Norm floor used by [`Tape::l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

pub struct Tape<'p, T: Real> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::zero(); c * 9 * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let (x_lo, x_hi) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    for xo in x_lo..x_hi {
                        dst[xo] = src[xo + kx - 1];
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut x = vec![T::zero(); c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let (x_lo, x_hi) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for xo in x_lo..x_hi {
                        dst[xo + kx - 1] += src[xo];
                    }
                }
            }
        }
    }
    x
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn conv3x3(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.params.get(w).shape();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != 3 || ws[3] != 3 {
            return Err(shape_err!("conv3x3 input {:?} with weight {:?}", xs, ws));
        }
        let (cin, h, wd, cout) = (xs[0], xs[1], xs[2], ws[0]);
        let col = im2col(self.value(x).data(), cin, h, wd);
        let hw = h * wd;
        let bias = self.params.get(b).data();
        let mut out = vec![T::zero(); cout * hw];
        for (co, chunk) in out.chunks_exact_mut(hw).enumerate() {
            chunk.fill(bias[co]);
        }
        T::gemm(cout, cin * 9, hw, self.params.get(w).data(), false, &col, false, T::one(), &mut out);
        let value = Tensor::from_vec(&[cout, h, wd], out)?;
        Ok(self.push(value, Op::Conv3x3 { x, w, b, col }, true))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out: Vec<T> = v.data().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect();
        let value = Tensor::from_vec(v.shape(), out).expect("same shape");
        let ng = self.nodes[x.0].needs_grad;
        self.push(value, Op::Relu(x), ng)
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = v.shape();
        if s.len() != 3 || s[1] < 2 || s[2] < 2 {
            return Err(shape_err!("avg_pool2 needs [C, H>=2, W>=2], got {:?}", s));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::of(0.25);
        let d = v.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        for ci in 0..c {
            let plane = &d[ci * h * w..];
            for y in 0..oh {
                for xo in 0..ow {
                    let i = 2 * y * w + 2 * xo;
                    out.push((plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]) * quarter);
                }
            }
        }
        let value = Tensor::from_vec(&[c, oh, ow], out)?;
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(value, Op::AvgPool2(x), ng))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = v.shape();
        if s.len() != 3 {
            return Err(shape_err!("global_avg_pool needs [C, H, W], got {:?}", s));
        }
        let hw = s[1] * s[2];
        let inv = T::one() / T::of(hw as f64);
        let out: Vec<T> = v.data().chunks_exact(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let value = Tensor::from_vec(&[s[0]], out)?;
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(value, Op::GlobalAvgPool(x), ng))
    }

    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let xv = self.value(x);
        let ws = self.params.get(w).shape();
        if ws.len() != 2 || xv.len() != ws[1] {
            return Err(shape_err!("linear input of {} with weight {:?}", xv.len(), ws));
        }
        let mut out = self.params.get(b).data().to_vec();
        T::gemm(ws[0], ws[1], 1, self.params.get(w).data(), false, xv.data(), false, T::one(), &mut out);
        let value = Tensor::from_vec(&[ws[0]], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, true))
    }

    /// `x / max(‖x‖, 1e-12)`.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let norm = v.data().iter().map(|&a| a * a).sum::<T>().sqrt().max(T::of(NORM_EPS));
        let value = v.scale(T::one() / norm);
        let ng = self.nodes[x.0].needs_grad;
        self.push(value, Op::L2Normalize(x), ng)
    }

    /// Identity in the forward pass; blocks every gradient in the backward pass.
    pub fn stop_grad(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::StopGrad(x), false)
    }

    /// Propagates `seeds` (gradients of the loss w.r.t. those nodes) back to
    /// the parameters, adding into `param_grads`.
    pub fn backward(&self, seeds: &[(Var, &Tensor<T>)], param_grads: &mut ParamSet<T>) -> Result<()> {
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            if g.len() != self.value(*v).len() {
                return Err(shape_err!("seed of {} for node of {}", g.len(), self.value(*v).len()));
            }
            accumulate(&mut grads[v.0], g.data());
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input | Op::StopGrad(_) => {}
                &Op::Conv3x3 { x, w, b, ref col } => {
                    let xs = self.value(x).shape();
                    let (cin, h, wd) = (xs[0], xs[1], xs[2]);
                    let hw = h * wd;
                    let cout = node.value.shape()[0];
                    T::gemm(cout, hw, cin * 9, &g, false, col, true, T::one(), param_grads.get_mut(w).data_mut());
                    for (db, gc) in param_grads.get_mut(b).data_mut().iter_mut().zip(g.chunks_exact(hw)) {
                        *db += gc.iter().copied().sum::<T>();
                    }
                    if self.nodes[x.0].needs_grad {
                        let mut dcol = vec![T::zero(); cin * 9 * hw];
                        T::gemm(cin * 9, cout, hw, self.params.get(w).data(), true, &g, false, T::zero(), &mut dcol);
                        accumulate(&mut grads[x.0], &col2im(&dcol, cin, h, wd));
                    }
                }
                &Op::Relu(x) => {
                    let gx: Vec<T> = g
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                        .collect();
                    accumulate(&mut grads[x.0], &gx);
                }
                &Op::AvgPool2(x) => {
                    let s = self.value(x).shape();
                    let (c, h, w) = (s[0], s[1], s[2]);
                    let (oh, ow) = (h / 2, w / 2);
                    let quarter = T::of(0.25);
                    let mut gx = vec![T::zero(); c * h * w];
                    for ci in 0..c {
                        for y in 0..oh {
                            for xo in 0..ow {
                                let gv = g[(ci * oh + y) * ow + xo] * quarter;
                                let i = ci * h * w + 2 * y * w + 2 * xo;
                                gx[i] = gv;
                                gx[i + 1] = gv;
                                gx[i + w] = gv;
                                gx[i + w + 1] = gv;
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], &gx);
                }
                &Op::GlobalAvgPool(x) => {
                    let s = self.value(x).shape();
                    let hw = s[1] * s[2];
                    let inv = T::one() / T::of(hw as f64);
                    let mut gx = Vec::with_capacity(s[0] * hw);
                    for &gc in &g {
                        gx.extend(core::iter::repeat_n(gc * inv, hw));
                    }
                    accumulate(&mut grads[x.0], &gx);
                }
                &Op::Linear { x, w, b } => {
                    let xv = self.value(x).data();
                    let (dout, din) = (g.len(), xv.len());
                    T::gemm(dout, 1, din, &g, false, xv, false, T::one(), param_grads.get_mut(w).data_mut());
                    for (db, &gi) in param_grads.get_mut(b).data_mut().iter_mut().zip(&g) {
                        *db += gi;
                    }
                    if self.nodes[x.0].needs_grad {
                        let mut gx = vec![T::zero(); din];
                        T::gemm(din, dout, 1, self.params.get(w).data(), true, &g, false, T::zero(), &mut gx);
                        accumulate(&mut grads[x.0], &gx);
                    }
                }
                &Op::L2Normalize(x) => {
                    let xv = self.value(x).data();
                    let y = node.value.data();
                    let norm = xv.iter().map(|&a| a * a).sum::<T>().sqrt();
                    let gx: Vec<T> = if norm > T::of(NORM_EPS) {
                        let dot: T = y.iter().zip(&g).map(|(&a, &b)| a * b).sum();
                        g.iter().zip(y).map(|(&gi, &yi)| (gi - yi * dot) / norm).collect()
                    } else {
                        g.iter().map(|&gi| gi / T::of(NORM_EPS)).collect()
                    };
                    accumulate(&mut grads[x.0], &gx);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, g: &[T]) {
    match slot {
        Some(acc) => {
            for (a, &b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}
