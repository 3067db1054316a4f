//! Pre-training loops: a contrastive base objective plus the weighted SPD
//! term, or supervised classification plus the SPD auxiliary head.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::image::Image;
use crate::imageops::{make_spd_triplet, strong_augment, AugConfig};
use crate::netcore::model::{BatchForward, Network, NetworkConfig, OutputGrads};
use crate::netcore::optim::sgd_step;
use crate::netcore::params::ParamSet;
use crate::objectives::{
    combined_loss, cross_entropy, info_nce, simsiam_positive_loss, spd_loss, EmbeddingBatch, LossValue, Role,
};
use crate::real::Real;
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

const STREAM_INIT: u64 = 0x494e_4954;
const STREAM_BATCH: u64 = 0x4241_5443;
const STREAM_AUG: u64 = 0x4155_4720;
const STREAM_EVAL: u64 = 0x4556_414c;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// InfoNCE over two strong views.
    SimClr,
    /// Symmetric negative cosine through a predictor, stop-gradient targets.
    SimSiam,
    /// Class cross-entropy plus the SPD auxiliary classifier.
    SupervisedAux,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::SimClr => "simclr",
            Objective::SimSiam => "simsiam",
            Objective::SupervisedAux => "supervised",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simclr" => Some(Objective::SimClr),
            "simsiam" => Some(Objective::SimSiam),
            "supervised" => Some(Objective::SupervisedAux),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Weight of the SPD term; 0 trains the base objective alone.
    pub eta: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Supervised mode only: also add the cosine SPD loss to the aux term.
    pub spd_cosine: bool,
    pub network: NetworkConfig,
    pub aug: AugConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::SimClr,
            eta: 0.1,
            tau: 0.2,
            batch_size: 16,
            steps: 500,
            lr: 0.03,
            momentum: 0.9,
            seed: 0,
            precision: Precision::F32,
            spd_cosine: false,
            network: NetworkConfig::default(),
            aug: AugConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(invalid!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid!("tau must be > 0, got {}", self.tau));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid!("learning rate must be > 0, got {}", self.lr));
        }
        if !(self.momentum >= 0.0) || !self.momentum.is_finite() {
            return Err(invalid!("momentum must be >= 0, got {}", self.momentum));
        }
        self.network.validate()?;
        self.aug.validate()?;
        if self.aug.out_size != self.network.input_size {
            return Err(invalid!(
                "augmentation output {} differs from the network input {}",
                self.aug.out_size,
                self.network.input_size
            ));
        }
        if self.objective == Objective::SupervisedAux && self.network.num_classes < 2 {
            return Err(invalid!("supervised training needs a class head with >= 2 classes"));
        }
        Ok(())
    }
}

/// Trained weights plus everything needed to rebuild and audit the run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: ParamSet<f32>,
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn network(&self) -> Result<Network> {
        let net = Network::new(self.config.network.clone())?;
        net.check_params(&self.params)?;
        Ok(net)
    }
}

/// Which augmented copy of the batch a block of rows holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    View1,
    View2,
    SpdAnchor,
    SpdPositive,
    SpdNegative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Head {
    Embedding,
    Prediction,
    Aux,
    Class,
}

fn role_source(role: Role) -> (&'static [Segment], Head) {
    use Segment::*;
    match role {
        Role::Anchor | Role::TargetA => (&[View1], Head::Embedding),
        Role::Positive | Role::TargetB => (&[View2], Head::Embedding),
        Role::OnlineA => (&[View1], Head::Prediction),
        Role::OnlineB => (&[View2], Head::Prediction),
        Role::SpdAnchor => (&[SpdAnchor], Head::Embedding),
        Role::SpdPositive => (&[SpdPositive], Head::Embedding),
        Role::SpdNegative => (&[SpdNegative], Head::Embedding),
        Role::ClassLogits => (&[View1], Head::Class),
        // Positives (label 0) stacked above negatives (label 1).
        Role::AuxLogits => (&[SpdPositive, SpdNegative], Head::Aux),
    }
}

/// Equal-sized blocks of images, one block per [`Segment`], forwarded
/// through the network together.
#[derive(Clone, Debug, Default)]
pub struct ViewBatch {
    per: usize,
    segments: Vec<Segment>,
    images: Vec<Image>,
}

impl ViewBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, seg: Segment, imgs: Vec<Image>) -> Result<()> {
        if imgs.is_empty() {
            return Err(invalid!("empty segment {:?}", seg));
        }
        if self.segments.contains(&seg) {
            return Err(invalid!("segment {:?} added twice", seg));
        }
        if !self.segments.is_empty() && imgs.len() != self.per {
            return Err(shape_err!("segment {:?} has {} images, expected {}", seg, imgs.len(), self.per));
        }
        self.per = imgs.len();
        self.segments.push(seg);
        self.images.extend(imgs);
        Ok(())
    }

    /// Images per segment.
    pub fn per_segment(&self) -> usize {
        self.per
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    fn offset(&self, seg: Segment) -> Result<usize> {
        self.segments
            .iter()
            .position(|&s| s == seg)
            .map(|i| i * self.per)
            .ok_or_else(|| invalid!("batch has no {:?} segment", seg))
    }
}

/// Head outputs of a forwarded [`ViewBatch`], addressed by loss role.
pub struct ViewOutputs<T: Real> {
    batch_per: usize,
    offsets: Vec<(Segment, usize)>,
    embeddings: Tensor<T>,
    predictions: Tensor<T>,
    aux: Tensor<T>,
    class: Option<Tensor<T>>,
}

impl<T: Real> ViewOutputs<T> {
    fn new(batch: &ViewBatch, fwd: &BatchForward<'_, T>) -> Self {
        Self {
            batch_per: batch.per,
            offsets: batch.segments.iter().map(|&s| (s, batch.offset(s).expect("listed"))).collect(),
            embeddings: fwd.embeddings(),
            predictions: fwd.predictions(),
            aux: fwd.aux_logits(),
            class: fwd.class_logits(),
        }
    }

    fn offset(&self, seg: Segment) -> Result<usize> {
        self.offsets
            .iter()
            .find(|(s, _)| *s == seg)
            .map(|&(_, o)| o)
            .ok_or_else(|| invalid!("batch has no {:?} segment", seg))
    }

    fn head(&self, head: Head) -> Result<&Tensor<T>> {
        match head {
            Head::Embedding => Ok(&self.embeddings),
            Head::Prediction => Ok(&self.predictions),
            Head::Aux => Ok(&self.aux),
            Head::Class => self.class.as_ref().ok_or_else(|| invalid!("network has no class head")),
        }
    }

    fn gather(&self, role: Role) -> Result<Tensor<T>> {
        let (segs, head) = role_source(role);
        let src = self.head(head)?;
        let mut rows: Vec<&[T]> = Vec::with_capacity(segs.len() * self.batch_per);
        for &s in segs {
            let o = self.offset(s)?;
            rows.extend((o..o + self.batch_per).map(|r| src.row(r)));
        }
        Tensor::from_rows(&rows)
    }

    /// Unit-norm rows feeding `role` (embeddings or predictor outputs).
    pub fn embedding(&self, role: Role) -> Result<EmbeddingBatch<T>> {
        if matches!(role, Role::ClassLogits | Role::AuxLogits) {
            return Err(invalid!("{:?} is a logit role", role));
        }
        EmbeddingBatch::new(self.gather(role)?, role)
    }

    pub fn logits(&self, role: Role) -> Result<Tensor<T>> {
        if !matches!(role, Role::ClassLogits | Role::AuxLogits) {
            return Err(invalid!("{:?} is not a logit role", role));
        }
        self.gather(role)
    }

    fn scatter(&self, loss: &LossValue<T>, total_rows: usize) -> Result<OutputGrads<T>> {
        let mut out = OutputGrads::default();
        for (&role, g) in &loss.grads {
            let (segs, head) = role_source(role);
            let width = self.head(head)?.shape()[1];
            if g.shape() != [segs.len() * self.batch_per, width] {
                return Err(shape_err!("gradient for {:?} has shape {:?}", role, g.shape()));
            }
            let slot = match head {
                Head::Embedding => &mut out.embeddings,
                Head::Prediction => &mut out.predictions,
                Head::Aux => &mut out.aux_logits,
                Head::Class => &mut out.class_logits,
            };
            let dst = slot.get_or_insert_with(|| Tensor::zeros(&[total_rows, width]));
            let mut src_row = 0;
            for &s in segs {
                let o = self.offset(s)?;
                for r in o..o + self.batch_per {
                    for (d, &v) in dst.row_mut(r).iter_mut().zip(g.row(src_row)) {
                        *d += v;
                    }
                    src_row += 1;
                }
            }
        }
        Ok(out)
    }
}

/// Forwards `batch`, evaluates `objective` on the outputs and backpropagates.
/// Returns the loss and the parameter gradient.
pub fn loss_and_grad<T, F>(
    net: &Network,
    params: &ParamSet<T>,
    batch: &ViewBatch,
    objective: F,
) -> Result<(LossValue<T>, ParamSet<T>)>
where
    T: Real,
    F: FnOnce(&ViewOutputs<T>) -> Result<LossValue<T>>,
{
    let fwd = net.forward(params, batch.images())?;
    let outs = ViewOutputs::new(batch, &fwd);
    let loss = objective(&outs)?;
    let grads = outs.scatter(&loss, batch.images().len())?;
    let mut acc = params.zeros_like();
    fwd.backward(&grads, &mut acc)?;
    Ok((loss, acc))
}

/// Loss value only, skipping the backward pass.
pub fn loss_only<T, F>(net: &Network, params: &ParamSet<T>, batch: &ViewBatch, objective: F) -> Result<T>
where
    T: Real,
    F: FnOnce(&ViewOutputs<T>) -> Result<LossValue<T>>,
{
    let fwd = net.forward(params, batch.images())?;
    Ok(objective(&ViewOutputs::new(batch, &fwd))?.value)
}

/// The configured training objective on a prepared batch. `class_labels`
/// is required in supervised mode.
pub fn objective_loss<T: Real>(
    cfg: &TrainConfig,
    out: &ViewOutputs<T>,
    class_labels: Option<&[usize]>,
) -> Result<LossValue<T>> {
    let base = match cfg.objective {
        Objective::SimClr => info_nce(&out.embedding(Role::Anchor)?, &out.embedding(Role::Positive)?, T::of(cfg.tau))?,
        Objective::SimSiam => simsiam_positive_loss(
            &out.embedding(Role::OnlineA)?,
            &out.embedding(Role::OnlineB)?,
            &out.embedding(Role::TargetA)?,
            &out.embedding(Role::TargetB)?,
        )?,
        Objective::SupervisedAux => {
            let labels = class_labels.ok_or_else(|| invalid!("supervised objective needs class labels"))?;
            cross_entropy(&out.logits(Role::ClassLogits)?, labels)?
        }
    };
    if cfg.eta == 0.0 {
        return Ok(base);
    }
    let spd_cos = || {
        spd_loss(
            &out.embedding(Role::SpdAnchor)?,
            &out.embedding(Role::SpdNegative)?,
            &out.embedding(Role::SpdPositive)?,
        )
    };
    let spd = match cfg.objective {
        Objective::SupervisedAux => {
            let n = out.batch_per;
            let aux_labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();
            let aux = cross_entropy(&out.logits(Role::AuxLogits)?, &aux_labels)?.relabel(Role::ClassLogits, Role::AuxLogits);
            if cfg.spd_cosine {
                combined_loss(&aux, &spd_cos()?, T::one())?
            } else {
                aux
            }
        }
        _ => spd_cos()?,
    };
    combined_loss(&base, &spd, T::of(cfg.eta))
}

fn needs_spd_anchor(cfg: &TrainConfig) -> bool {
    cfg.objective != Objective::SupervisedAux || cfg.spd_cosine
}

/// Batch indices for one step: distinct while the corpus allows it.
fn sample_batch(n: usize, size: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let distinct = size.min(n);
    for i in 0..distinct {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    let mut out: Vec<usize> = pool[..distinct].to_vec();
    while out.len() < size {
        out.push(rng.below(n));
    }
    out
}

/// The random views for one training step. Every image slot draws from its
/// own stream, so leaving out the SPD segments (η = 0) does not change the
/// base views.
pub fn build_step_batch(cfg: &TrainConfig, corpus: &[Image], step: usize) -> Result<(ViewBatch, Vec<usize>)> {
    let idx = sample_batch(corpus.len(), cfg.batch_size, &mut RngStream::new(cfg.seed, STREAM_BATCH).substream(step as u64));
    let out = cfg.aug.out_size;
    let aug_root = RngStream::new(cfg.seed, STREAM_AUG).substream(step as u64);
    let mut v1 = Vec::with_capacity(idx.len());
    let mut v2 = Vec::new();
    let (mut sa, mut sp, mut sn) = (Vec::new(), Vec::new(), Vec::new());
    let with_spd = cfg.eta > 0.0;
    for (slot, &i) in idx.iter().enumerate() {
        let img = &corpus[i];
        let rng = aug_root.substream(slot as u64);
        v1.push(strong_augment(img, &mut rng.substream(1), &cfg.aug.strong, out)?);
        if cfg.objective != Objective::SupervisedAux {
            v2.push(strong_augment(img, &mut rng.substream(2), &cfg.aug.strong, out)?);
        }
        if with_spd {
            let t = make_spd_triplet(img, &rng.substream(3), &cfg.aug)?;
            sa.push(t.anchor);
            sp.push(t.positive);
            sn.push(t.negative);
        }
    }
    let mut batch = ViewBatch::new();
    batch.push(Segment::View1, v1)?;
    if !v2.is_empty() {
        batch.push(Segment::View2, v2)?;
    }
    if with_spd {
        if needs_spd_anchor(cfg) {
            batch.push(Segment::SpdAnchor, sa)?;
        }
        batch.push(Segment::SpdPositive, sp)?;
        batch.push(Segment::SpdNegative, sn)?;
    }
    Ok((batch, idx))
}

/// Initial parameters for a run; identical seeds give identical weights.
pub fn init_params<T: Real>(net: &Network, seed: u64) -> ParamSet<T> {
    net.init(&mut RngStream::new(seed, STREAM_INIT))
}

fn run<T: Real>(cfg: &TrainConfig, corpus: &[Image], labels: Option<&[usize]>) -> Result<Checkpoint> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(invalid!("training corpus is empty"));
    }
    if let Some(l) = labels {
        if l.len() != corpus.len() {
            return Err(shape_err!("{} labels for {} images", l.len(), corpus.len()));
        }
        if let Some(&bad) = l.iter().find(|&&y| y >= cfg.network.num_classes) {
            return Err(invalid!("class label {bad} exceeds the {} classes", cfg.network.num_classes));
        }
    }
    let net = Network::new(cfg.network.clone())?;
    let mut params: ParamSet<T> = init_params(&net, cfg.seed);
    let mut velocity = params.zeros_like();
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (batch, idx) = build_step_batch(cfg, corpus, step)?;
        let step_labels: Option<Vec<usize>> = labels.map(|l| idx.iter().map(|&i| l[i]).collect());
        let (loss, grads) = loss_and_grad(&net, &params, &batch, |o| objective_loss(cfg, o, step_labels.as_deref()))
            .map_err(|e| match e {
                Error::InvalidInput(m) if m.starts_with("expected a unit vector") => Error::Training {
                    step,
                    reason: format!("degenerate embeddings: {m}"),
                },
                other => other,
            })?;
        if !loss.value.is_finite() {
            return Err(Error::Training {
                step,
                reason: "loss is not finite".to_string(),
            });
        }
        history.push(loss.value.f64());
        sgd_step(&mut params, &mut velocity, &grads, T::of(cfg.lr), T::of(cfg.momentum), step)?;
    }
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        params: params.cast(),
        loss_history: history,
    })
}

/// Contrastive pre-training (SimCLR- or SimSiam-style) with the SPD term
/// weighted by `eta`.
pub fn train_spd(cfg: &TrainConfig, corpus: &[Image]) -> Result<Checkpoint> {
    if cfg.objective == Objective::SupervisedAux {
        return Err(invalid!("use train_supervised_aux for the supervised objective"));
    }
    match cfg.precision {
        Precision::F32 => run::<f32>(cfg, corpus, None),
        Precision::F64 => run::<f64>(cfg, corpus, None),
    }
}

/// Supervised classification with the SPD auxiliary classifier.
pub fn train_supervised_aux(cfg: &TrainConfig, corpus: &[Image], labels: &[usize]) -> Result<Checkpoint> {
    if cfg.objective != Objective::SupervisedAux {
        return Err(invalid!("train_supervised_aux needs the supervised objective"));
    }
    match cfg.precision {
        Precision::F32 => run::<f32>(cfg, corpus, Some(labels)),
        Precision::F64 => run::<f64>(cfg, corpus, Some(labels)),
    }
}

/// Mean anchor similarity to the SPD negative and positive views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdSimilarity {
    pub cos_negative: f64,
    pub cos_positive: f64,
}

/// Builds one SPD triplet per image (seeded by `seed` and the image index)
/// and reports mean cosine similarities of the embeddings.
pub fn spd_similarity(
    net: &Network,
    params: &ParamSet<f32>,
    images: &[Image],
    aug: &AugConfig,
    seed: u64,
) -> Result<SpdSimilarity> {
    if images.is_empty() {
        return Err(invalid!("no images to evaluate"));
    }
    const CHUNK: usize = 16;
    let root = RngStream::new(seed, STREAM_EVAL);
    let (mut neg, mut pos) = (0.0, 0.0);
    for (c, chunk) in images.chunks(CHUNK).enumerate() {
        let mut views = Vec::with_capacity(3 * chunk.len());
        for (j, img) in chunk.iter().enumerate() {
            let t = make_spd_triplet(img, &root.substream((c * CHUNK + j) as u64), aug)?;
            views.extend([t.anchor, t.positive, t.negative]);
        }
        let z = net.forward(params, &views)?.embeddings();
        for j in 0..chunk.len() {
            let dot = |a: usize, b: usize| -> f64 { z.row(a).iter().zip(z.row(b)).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum() };
            pos += dot(3 * j, 3 * j + 1);
            neg += dot(3 * j, 3 * j + 2);
        }
    }
    let n = images.len() as f64;
    Ok(SpdSimilarity {
        cos_negative: neg / n,
        cos_positive: pos / n,
    })
}

/// Mean of `values[range]`, used to compare early and late training loss.
pub fn window_mean(values: &[f64], start: usize, len: usize) -> Option<f64> {
    let w = values.get(start..start.checked_add(len)?)?;
    (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
}
