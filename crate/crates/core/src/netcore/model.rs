//! The tiny convolutional encoder `f(·)`, projection head `g(·)` and the small
//! heads used by the SimSiam-style and supervised objectives.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::image::Image;
use crate::netcore::params::{ParamId, ParamSet};
use crate::netcore::tape::{Tape, Var};
use crate::real::Real;
use crate::rng::RngStream;
use crate::tensor::Tensor;
#[allow(unused_imports)]
use num_traits::Float;

/// Pixels are standardized as `(x − 0.5) / 0.25` before the first conv.
pub const INPUT_MEAN: f64 = 0.5;
pub const INPUT_STD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub in_channels: usize,
    /// Output channels of each conv → ReLU → pool block.
    pub widths: Vec<usize>,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Size of the supervised class head; 0 leaves it out.
    pub num_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            in_channels: 3,
            widths: vec![16, 32, 64],
            hidden_dim: 64,
            embed_dim: 32,
            num_classes: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(invalid!("encoder widths {:?} must be non-empty and positive", self.widths));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(invalid!("input channels must be 1 or 3, got {}", self.in_channels));
        }
        if self.input_size >> self.widths.len() == 0 {
            return Err(invalid!("input size {} too small for {} pooling blocks", self.input_size, self.widths.len()));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(invalid!("head dimensions must be positive"));
        }
        Ok(())
    }

    /// Dimension of the encoder feature `h`.
    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub blocks: Vec<Dense>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Projector {
    pub hidden: Dense,
    pub out: Dense,
}

/// Linear head on the encoder feature deciding "locally perturbed or not".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuxClassifier(pub Dense);

/// Parameter layout of the whole model. Values live in a separate
/// [`ParamSet`] so one layout can be evaluated in `f32` or `f64`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    config: NetworkConfig,
    specs: Vec<(String, Vec<usize>)>,
    pub encoder: Encoder,
    pub projector: Projector,
    pub predictor: Dense,
    pub aux: AuxClassifier,
    pub classifier: Option<Dense>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
        let dense = |specs: &mut Vec<(String, Vec<usize>)>, name: &str, w_shape: Vec<usize>| {
            let out = w_shape[0];
            specs.push((format!("{name}.w"), w_shape));
            specs.push((format!("{name}.b"), vec![out]));
            Dense {
                w: ParamId(specs.len() - 2),
                b: ParamId(specs.len() - 1),
            }
        };
        let mut cin = config.in_channels;
        let mut blocks = Vec::new();
        for (i, &c) in config.widths.iter().enumerate() {
            blocks.push(dense(&mut specs, &format!("enc.{i}"), vec![c, cin, 3, 3]));
            cin = c;
        }
        let (dh, dm, dz) = (config.feature_dim(), config.hidden_dim, config.embed_dim);
        let projector = Projector {
            hidden: dense(&mut specs, "proj.hidden", vec![dm, dh]),
            out: dense(&mut specs, "proj.out", vec![dz, dm]),
        };
        let predictor = dense(&mut specs, "pred", vec![dz, dz]);
        let aux = AuxClassifier(dense(&mut specs, "aux", vec![2, dh]));
        let classifier = (config.num_classes > 0).then(|| dense(&mut specs, "cls", vec![config.num_classes, dh]));
        Ok(Self {
            config,
            specs,
            encoder: Encoder { blocks },
            projector,
            predictor,
            aux,
            classifier,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn param_specs(&self) -> &[(String, Vec<usize>)] {
        &self.specs
    }

    pub fn zeros<T: Real>(&self) -> ParamSet<T> {
        let mut p = ParamSet::new();
        for (name, shape) in &self.specs {
            p.push(name.clone(), Tensor::zeros(shape));
        }
        p
    }

    /// He-uniform weights, zero biases.
    pub fn init<T: Real>(&self, rng: &mut RngStream) -> ParamSet<T> {
        let mut p = self.zeros::<T>();
        for (i, (name, shape)) in self.specs.iter().enumerate() {
            if name.ends_with(".b") {
                continue;
            }
            let fan_in: usize = shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in p.get_mut(ParamId(i)).data_mut() {
                *v = T::of(rng.uniform(-bound, bound));
            }
        }
        p
    }

    /// Checks that `params` has this network's layout.
    pub fn check_params<T: Real>(&self, params: &ParamSet<T>) -> Result<()> {
        let ok = params.len() == self.specs.len()
            && params.iter().zip(&self.specs).all(|((n, t), (sn, ss))| n == sn && t.shape() == ss.as_slice());
        if !ok {
            return Err(shape_err!("parameter set does not match the network layout"));
        }
        Ok(())
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        let c = &self.config;
        if img.height() != c.input_size || img.width() != c.input_size || img.channels() != c.in_channels {
            return Err(shape_err!(
                "network expects {}x{}x{} images, got {}x{}x{}",
                c.input_size,
                c.input_size,
                c.in_channels,
                img.height(),
                img.width(),
                img.channels()
            ));
        }
        Ok(())
    }

    fn forward_one<'p, T: Real>(&self, tape: &mut Tape<'p, T>, img: &Image) -> Result<ImageOutputs> {
        let mut chw = img.to_chw::<T>();
        let (mean, scale) = (T::of(INPUT_MEAN), T::of(1.0 / INPUT_STD));
        chw.data_mut().iter_mut().for_each(|v| *v = (*v - mean) * scale);
        let mut x = tape.input(chw);
        let mut blocks = Vec::with_capacity(self.encoder.blocks.len());
        for d in &self.encoder.blocks {
            let c = tape.conv3x3(x, d.w, d.b)?;
            let r = tape.relu(c);
            x = tape.avg_pool2(r)?;
            blocks.push(x);
        }
        let h = tape.global_avg_pool(x)?;
        let hid = tape.linear(h, self.projector.hidden.w, self.projector.hidden.b)?;
        let hid = tape.relu(hid);
        let q = tape.linear(hid, self.projector.out.w, self.projector.out.b)?;
        let z = tape.l2_normalize(q);
        let pl = tape.linear(q, self.predictor.w, self.predictor.b)?;
        let p = tape.l2_normalize(pl);
        let aux = tape.linear(h, self.aux.0.w, self.aux.0.b)?;
        let class = match self.classifier {
            Some(d) => Some(tape.linear(h, d.w, d.b)?),
            None => None,
        };
        Ok(ImageOutputs {
            blocks,
            h,
            z,
            p,
            aux,
            class,
        })
    }

    /// Runs every image through the encoder and all heads, keeping the tapes
    /// for a later backward pass.
    pub fn forward<'p, T: Real>(&self, params: &'p ParamSet<T>, images: &[Image]) -> Result<BatchForward<'p, T>> {
        self.check_params(params)?;
        if images.is_empty() {
            return Err(invalid!("empty batch"));
        }
        let mut tapes = Vec::with_capacity(images.len());
        let mut outs = Vec::with_capacity(images.len());
        for img in images {
            self.check_image(img)?;
            let mut tape = Tape::new(params);
            outs.push(self.forward_one(&mut tape, img)?);
            tapes.push(tape);
        }
        Ok(BatchForward { tapes, outs })
    }
}

#[derive(Clone, Debug)]
struct ImageOutputs {
    blocks: Vec<Var>,
    h: Var,
    z: Var,
    p: Var,
    aux: Var,
    class: Option<Var>,
}

/// Forward results for a batch, row `i` belonging to image `i`.
pub struct BatchForward<'p, T: Real> {
    tapes: Vec<Tape<'p, T>>,
    outs: Vec<ImageOutputs>,
}

/// Loss gradients w.r.t. the batch outputs, each `N × D`.
#[derive(Clone, Debug, Default)]
pub struct OutputGrads<T> {
    pub features: Option<Tensor<T>>,
    pub embeddings: Option<Tensor<T>>,
    pub predictions: Option<Tensor<T>>,
    pub aux_logits: Option<Tensor<T>>,
    pub class_logits: Option<Tensor<T>>,
}

impl<T: Real> BatchForward<'_, T> {
    pub fn len(&self) -> usize {
        self.outs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outs.is_empty()
    }

    fn stack(&self, pick: impl Fn(&ImageOutputs) -> Var) -> Tensor<T> {
        let rows: Vec<&[T]> = self.tapes.iter().zip(&self.outs).map(|(t, o)| t.value(pick(o)).data()).collect();
        Tensor::from_rows(&rows).expect("uniform head width")
    }

    /// Encoder features `h`, `N × D_h`.
    pub fn features(&self) -> Tensor<T> {
        self.stack(|o| o.h)
    }

    /// Unit-norm projections `z`, `N × D_z`.
    pub fn embeddings(&self) -> Tensor<T> {
        self.stack(|o| o.z)
    }

    /// Unit-norm predictor outputs (SimSiam-style online branch), `N × D_z`.
    pub fn predictions(&self) -> Tensor<T> {
        self.stack(|o| o.p)
    }

    pub fn aux_logits(&self) -> Tensor<T> {
        self.stack(|o| o.aux)
    }

    pub fn class_logits(&self) -> Option<Tensor<T>> {
        self.outs.first()?.class?;
        Some(self.stack(|o| o.class.expect("uniform heads")))
    }

    /// Pooled output of every encoder block for image `i`, shallowest first.
    pub fn block_maps(&self, i: usize) -> Vec<&Tensor<T>> {
        self.outs[i].blocks.iter().map(|&v| self.tapes[i].value(v)).collect()
    }

    /// Accumulates parameter gradients for the given output gradients.
    pub fn backward(&self, grads: &OutputGrads<T>, acc: &mut ParamSet<T>) -> Result<()> {
        let n = self.len();
        let check = |g: &Option<Tensor<T>>, name: &str| -> Result<()> {
            match g {
                Some(t) if t.rows() != n => Err(shape_err!("{} gradient has {} rows for a batch of {}", name, t.rows(), n)),
                _ => Ok(()),
            }
        };
        check(&grads.features, "feature")?;
        check(&grads.embeddings, "embedding")?;
        check(&grads.predictions, "prediction")?;
        check(&grads.aux_logits, "aux")?;
        check(&grads.class_logits, "class")?;
        for (i, (tape, o)) in self.tapes.iter().zip(&self.outs).enumerate() {
            let mut rows: Vec<(Var, Tensor<T>)> = Vec::new();
            let mut add = |g: &Option<Tensor<T>>, v: Option<Var>| -> Result<()> {
                if let (Some(g), Some(v)) = (g, v) {
                    let row = g.row(i);
                    rows.push((v, Tensor::from_vec(&[row.len()], row.to_vec())?));
                }
                Ok(())
            };
            add(&grads.features, Some(o.h))?;
            add(&grads.embeddings, Some(o.z))?;
            add(&grads.predictions, Some(o.p))?;
            add(&grads.aux_logits, Some(o.aux))?;
            if grads.class_logits.is_some() && o.class.is_none() {
                return Err(invalid!("class gradient given but the network has no class head"));
            }
            add(&grads.class_logits, o.class)?;
            let seeds: Vec<(Var, &Tensor<T>)> = rows.iter().map(|(v, t)| (*v, t)).collect();
            tape.backward(&seeds, acc)?;
        }
        Ok(())
    }
}

impl core::fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(ToString::to_string).collect();
        write!(
            f,
            "{}x{}x{} -> [{}] -> {} -> {}",
            self.input_size,
            self.input_size,
            self.in_channels,
            widths.join(","),
            self.hidden_dim,
            self.embed_dim
        )
    }
}
