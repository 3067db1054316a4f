use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use spd_core::imageops::{cut_paste, make_spd_triplet, resize, AugConfig};
use spd_core::metrics::{evaluate, pr_curve, roc_curve, sweep, toy_model_a, toy_model_b, MetricReport, ScoredSample};
use spd_core::netcore::{train_spd, train_supervised_aux, Objective, TrainConfig};
use spd_core::padim::PadimConfig;
use spd_core::protocol::{
    five_run_average, gen_synthetic_corpus, DatasetManifest, DefectKind, Label, ManifestRow, SplitRole,
    SyntheticCorpusConfig, TextureFamily,
};
use spd_core::{BinaryMask, RngStream};

use super::{
    BenchmarkArgs, Ctx, EvalArgs, OutArgs, PadimFitArgs, PadimKnobs, PadimScoreArgs, PretrainArgs, PreviewArgs, ScanArgs,
    SplitArgs, SynthArgs,
};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{invalid, Result};
use crate::padim_file::{load_padim, save_padim};
use crate::pipeline::{
    evaluate_maps, fit_padim, image_samples, load_images, load_masks, make_split, resolve_object, score_images,
    select_rows,
};
use crate::pnm::{read_image, write_image, write_mask};
use crate::scan::scan_dir;
use crate::tables::{
    read_rows, read_scores, write_aggregate, write_curve, write_metrics, write_rows, write_scores, ScoreRow,
};

fn out_path(ctx: &Ctx, flag: Option<PathBuf>) -> Result<PathBuf> {
    ctx.cfg.require(flag, "out")
}

fn comma_list<T>(s: &str, parse: impl Fn(&str) -> spd_core::Result<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| Ok(parse(t)?))
        .collect()
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let d = SyntheticCorpusConfig::default();
    let c = &ctx.cfg;
    let textures = match c.pick(a.textures, "textures", String::new())? {
        s if s.is_empty() => d.textures.clone(),
        s => comma_list(&s, TextureFamily::parse)?,
    };
    let defects = match c.pick(a.defects, "defects", String::new())? {
        s if s.is_empty() => d.defects.clone(),
        s => comma_list(&s, DefectKind::parse)?,
    };
    let cfg = SyntheticCorpusConfig {
        object: c.pick(a.object, "object", d.object.clone())?,
        count: c.pick(a.count, "count", d.count)?,
        size: c.pick(a.size, "size", d.size)?,
        textures,
        defects,
        defect_size: (
            c.pick(a.defect_min, "defect_min", d.defect_size.0)?,
            c.pick(a.defect_max, "defect_max", d.defect_size.1)?,
        ),
        anomaly_fraction: c.pick(a.anomaly_fraction, "anomaly_fraction", d.anomaly_fraction)?,
        seed: ctx.seed,
    };
    let corpus = gen_synthetic_corpus(&cfg)?;
    for (i, path) in corpus.paths.iter().enumerate() {
        write_image(&out.join(path), &corpus.images[i])?;
    }
    for r in corpus.manifest.records() {
        if let Some(mp) = &r.mask_path {
            let i = corpus.paths.iter().position(|p| *p == r.path).expect("manifest paths come from the corpus");
            write_mask(&out.join(mp), &corpus.masks[i])?;
        }
    }
    write_rows(&out.join("manifest.csv"), &corpus.manifest.rows())?;
    println!(
        "wrote {} images ({} anomalous) to {}",
        corpus.images.len(),
        cfg.anomaly_count(),
        out.display()
    );
    Ok(())
}

pub fn scan(ctx: &Ctx, a: ScanArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let outcome = scan_dir(&a.root)?;
    for f in &outcome.ignored {
        eprintln!("warning: ignored {f}");
    }
    let manifest = outcome.into_result()?;
    write_rows(&out, &manifest.rows())?;
    println!("{} records, {} objects", manifest.len(), manifest.objects().len());
    Ok(())
}

struct ProtocolPlan {
    protocol: spd_core::protocol::ProtocolKind,
    object: String,
    k: usize,
    runs: usize,
    pool_seed: u64,
}

/// Resolves every setting before touching the manifest, so bad values fail
/// as usage errors.
fn plan(ctx: &Ctx, p: super::ProtocolArgs, manifest: &Path) -> Result<(ProtocolPlan, DatasetManifest)> {
    let c = &ctx.cfg;
    let runs = c.pick(p.runs, "runs", 5)?;
    if runs == 0 {
        return Err(invalid!("--runs must be at least 1"));
    }
    let protocol = ctx.protocol(p.protocol)?;
    let k = c.pick(p.k, "k", 5)?;
    let pool_seed = c.pick(p.pool_seed, "pool_seed", ctx.seed)?;
    let object = c.pick(p.object, "object", String::new())?;
    let manifest = DatasetManifest::from_rows(&read_rows(manifest)?)?;
    let object = resolve_object(&manifest, Some(object).filter(|s| !s.is_empty()))?;
    Ok((
        ProtocolPlan {
            protocol,
            object,
            k,
            runs,
            pool_seed,
        },
        manifest,
    ))
}

pub fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let (p, manifest) = plan(ctx, a.protocol, &a.manifest)?;
    let mut rows = Vec::new();
    for run in 0..p.runs {
        let s = make_split(&manifest, p.protocol, &p.object, p.k, ctx.seed, p.pool_seed, run)?;
        rows.extend(s.rows(&manifest));
    }
    write_rows(&out, &rows)?;
    println!("{} runs of {} for '{}'", p.runs, p.protocol.as_str(), p.object);
    Ok(())
}

pub fn augment_preview(ctx: &Ctx, a: PreviewArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let size = ctx.cfg.pick(a.size, "size", 64)?;
    let img = read_image(&a.input)?;
    let aug = AugConfig {
        out_size: size,
        ..AugConfig::default()
    };
    let rng = RngStream::new(ctx.seed, 0);
    let t = make_spd_triplet(&img, &rng, &aug)?;
    let (cp, cp_mask) = cut_paste(&resize(&img, size), &mut rng.substream(9), &aug.smoothblend)?;
    let support = |m: &spd_core::AlphaMask| BinaryMask::new(m.height(), m.width(), m.data().iter().map(|&v| v > 0.0).collect());
    write_image(&out.join("anchor.ppm"), &t.anchor)?;
    write_image(&out.join("positive.ppm"), &t.positive)?;
    write_image(&out.join("negative_base.ppm"), &t.negative_base)?;
    write_image(&out.join("negative.ppm"), &t.negative)?;
    write_mask(&out.join("negative_mask.pgm"), &support(&t.mask)?)?;
    write_image(&out.join("cutpaste.ppm"), &cp)?;
    write_mask(&out.join("cutpaste_mask.pgm"), &support(&cp_mask)?)?;
    println!("wrote previews to {}", out.display());
    Ok(())
}

fn data_rows(ctx: &Ctx, d: &super::DataArgs, role: SplitRole) -> Result<Vec<ManifestRow>> {
    let run = ctx.cfg.pick(d.run, "run", 0)?;
    select_rows(&read_rows(&d.manifest)?, run, role)
}

pub fn pretrain(ctx: &Ctx, a: PretrainArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let c = &ctx.cfg;
    let d = TrainConfig::default();
    let mut tc = TrainConfig {
        objective: ctx.mode(a.mode)?,
        eta: c.pick(a.eta, "eta", d.eta)?,
        tau: c.pick(a.tau, "tau", d.tau)?,
        batch_size: c.pick(a.batch_size, "batch_size", d.batch_size)?,
        steps: c.pick(a.steps, "steps", d.steps)?,
        lr: c.pick(a.lr, "lr", d.lr)?,
        momentum: c.pick(a.momentum, "momentum", d.momentum)?,
        seed: ctx.seed,
        spd_cosine: c.pick(a.spd_cosine, "spd_cosine", d.spd_cosine)?,
        ..d
    };
    let input = c.pick(a.input_size, "input_size", tc.network.input_size)?;
    tc.network.input_size = input;
    tc.aug.out_size = input;
    let rows = data_rows(ctx, &a.data, SplitRole::Train)?;
    let images = load_images(&a.data.data, &rows)?;
    let ck = if tc.objective == Objective::SupervisedAux {
        let objects: Vec<&str> = rows.iter().map(|r| r.object.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        if objects.len() < 2 {
            return Err(invalid!("supervised mode needs at least two objects, found {}", objects.len()));
        }
        let labels: Vec<usize> = rows
            .iter()
            .map(|r| objects.binary_search(&r.object.as_str()).expect("object collected above"))
            .collect();
        tc.network.num_classes = objects.len();
        tc.validate()?;
        train_supervised_aux(&tc, &images, &labels)?
    } else {
        tc.validate()?;
        train_spd(&tc, &images)?
    };
    save_checkpoint(&out, &ck)?;
    let h = &ck.loss_history;
    if let (Some(first), Some(last)) = (h.first(), h.last()) {
        println!("{} steps on {} images, loss {first:.4} -> {last:.4}", h.len(), images.len());
    }
    Ok(())
}

fn padim_config(ctx: &Ctx, k: PadimKnobs) -> Result<PadimConfig> {
    let d = PadimConfig::default();
    let c = &ctx.cfg;
    Ok(PadimConfig {
        epsilon: c.pick(k.epsilon, "epsilon", d.epsilon)?,
        max_channels: c.pick(k.max_channels, "max_channels", d.max_channels)?,
        seed: ctx.seed,
        smooth_sigma: c.pick(k.smooth_sigma, "smooth_sigma", d.smooth_sigma)?,
    })
}

fn normals_only(rows: Vec<ManifestRow>) -> Result<Vec<ManifestRow>> {
    let n: Vec<ManifestRow> = rows.into_iter().filter(|r| r.label == Label::Normal).collect();
    if n.len() < 2 {
        return Err(invalid!("fitting needs at least two normal training images, found {}", n.len()));
    }
    Ok(n)
}

pub fn padim_fit(ctx: &Ctx, a: PadimFitArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let rows = normals_only(data_rows(ctx, &a.data, SplitRole::Train)?)?;
    let images = load_images(&a.data.data, &rows)?;
    let art = fit_padim(&ck, &images, &padim_config(ctx, a.knobs)?)?;
    save_padim(&out, &art)?;
    println!(
        "fitted {}x{} cells, {} channels, on {} images",
        art.model.grid_h,
        art.model.grid_w,
        art.model.d(),
        images.len()
    );
    Ok(())
}

fn write_report(dir: &Path, prefix: &str, samples: &[ScoredSample], report: &MetricReport) -> Result<()> {
    write_metrics(&dir.join(format!("{prefix}_metrics.json")), report)?;
    let pts = sweep(samples)?;
    write_curve(&dir.join(format!("{prefix}_roc.csv")), &roc_curve(&pts))?;
    write_curve(&dir.join(format!("{prefix}_pr.csv")), &pr_curve(&pts))
}

fn print_report(name: &str, r: &MetricReport) {
    println!(
        "{name}: auroc {:.4}  aupr {:.4}  max_f1 {:.4}  (pos {}, neg {})",
        r.auroc, r.aupr, r.max_f1, r.n_pos, r.n_neg
    );
}

pub fn padim_score(ctx: &Ctx, a: PadimScoreArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let art = load_padim(&a.model)?;
    let rows = data_rows(ctx, &a.data, SplitRole::Test)?;
    let images = load_images(&a.data.data, &rows)?;
    let maps = score_images(&ck, &art, &images)?;
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    let samples = image_samples(&maps, &labels);
    let scores: Vec<ScoreRow> = rows
        .iter()
        .zip(&samples)
        .map(|(r, s)| ScoreRow {
            id: r.id.clone(),
            label: r.label.as_str().into(),
            score: s.score,
        })
        .collect();
    write_scores(&out.join("scores.csv"), &scores)?;
    let both = labels.iter().any(|l| l.is_anomaly()) && labels.iter().any(|l| !l.is_anomaly());
    if !both {
        eprintln!("warning: test set has a single class; metrics skipped");
        return Ok(());
    }
    let masks = load_masks(&a.data.data, &rows, &images)?;
    let ev = evaluate_maps(&maps, &labels, masks.as_deref())?;
    write_report(&out, "image", &samples, &ev.image)?;
    print_report("image", &ev.image);
    if let (Some(px), Some(m)) = (&ev.pixel, &masks) {
        let px_samples = spd_core::metrics::pixel_samples(&maps, m)?;
        write_report(&out, "pixel", &px_samples, px)?;
        print_report("pixel", px);
    }
    Ok(())
}

pub fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let rows = read_scores(&a.scores)?;
    let samples: Vec<ScoredSample> = rows
        .iter()
        .map(|r| Ok(ScoredSample::new(r.score, Label::parse(&r.label)?.is_anomaly())))
        .collect::<Result<_>>()?;
    let report = evaluate(&samples)?;
    write_metrics(&out, &report)?;
    if let Some(dir) = a.curves {
        let pts = sweep(&samples)?;
        write_curve(&dir.join("roc.csv"), &roc_curve(&pts))?;
        write_curve(&dir.join("pr.csv"), &pr_curve(&pts))?;
    }
    print_report("scores", &report);
    Ok(())
}

pub fn toy_metrics(ctx: &Ctx, a: OutArgs) -> Result<()> {
    let out = match a.out {
        Some(p) => Some(p),
        None => ctx.cfg.get::<PathBuf>("out")?,
    };
    for (name, samples) in [("model_a", toy_model_a()), ("model_b", toy_model_b())] {
        let report = evaluate(&samples)?;
        print_report(name, &report);
        if let Some(dir) = &out {
            write_report(dir, name, &samples, &report)?;
        }
    }
    Ok(())
}

pub fn benchmark(ctx: &Ctx, a: BenchmarkArgs) -> Result<()> {
    let out = out_path(ctx, a.out)?;
    let pcfg = padim_config(ctx, a.knobs)?;
    let (p, manifest) = plan(ctx, a.protocol, &a.manifest)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let (mut image, mut pixel) = (Vec::new(), Vec::new());
    for run in 0..p.runs {
        let rows = make_split(&manifest, p.protocol, &p.object, p.k, ctx.seed, p.pool_seed, run)?.rows(&manifest);
        let train = normals_only(select_rows(&rows, run, SplitRole::Train)?)?;
        let test = select_rows(&rows, run, SplitRole::Test)?;
        let art = fit_padim(&ck, &load_images(&a.data, &train)?, &pcfg)?;
        let images = load_images(&a.data, &test)?;
        let maps = score_images(&ck, &art, &images)?;
        let labels: Vec<Label> = test.iter().map(|r| r.label).collect();
        let masks = load_masks(&a.data, &test, &images)?;
        let ev = evaluate_maps(&maps, &labels, masks.as_deref())?;
        print_report(&format!("run {run} image"), &ev.image);
        image.push(ev.image);
        pixel.extend(ev.pixel);
    }
    let proto = p.protocol.as_str();
    let maps: Vec<_> = image.iter().map(MetricReport::to_map).collect();
    write_aggregate(&out.join("image.json"), proto, &five_run_average(&maps)?, &image)?;
    if pixel.len() == image.len() {
        let maps: Vec<_> = pixel.iter().map(MetricReport::to_map).collect();
        write_aggregate(&out.join("pixel.json"), proto, &five_run_average(&maps)?, &pixel)?;
    }
    Ok(())
}
