use spd_core::netcore::{grad_check, ParamSet, init_params, loss_and_grad, loss_only, Network, NetworkConfig, Segment, ViewBatch, ViewOutputs};
use spd_core::objectives::{
    combined_loss, cross_entropy, focal_loss, info_nce, simsiam_positive_loss, spd_loss, LossValue, Role,
};
use spd_core::{Image, Result, RngStream};

fn random_image(rng: &mut RngStream, size: usize) -> Image {
    Image::from_fn(size, size, 3, |_, _, _| rng.uniform(0.05, 0.95) as f32).unwrap()
}

fn batch(size: usize, per: usize, seed: u64) -> ViewBatch {
    let mut rng = RngStream::new(seed, 9);
    let mut b = ViewBatch::new();
    for seg in [Segment::View1, Segment::View2, Segment::SpdAnchor, Segment::SpdPositive, Segment::SpdNegative] {
        b.push(seg, (0..per).map(|_| random_image(&mut rng, size)).collect()).unwrap();
    }
    b
}

type LossFn = fn(&ViewOutputs<f64>) -> Result<LossValue<f64>>;

fn nce(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    info_nce(&o.embedding(Role::Anchor)?, &o.embedding(Role::Positive)?, 0.2)
}

fn spd(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    spd_loss(
        &o.embedding(Role::SpdAnchor)?,
        &o.embedding(Role::SpdNegative)?,
        &o.embedding(Role::SpdPositive)?,
    )
}

fn combined(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    combined_loss(&nce(o)?, &spd(o)?, 0.1)
}

/// Stop-gradient targets are constants of the loss, so the finite-difference
/// probe must hold them at their values under the unperturbed parameters.
fn simsiam_fixed_targets(net: &Network, params: &ParamSet<f64>, b: &ViewBatch) -> impl Fn(&ViewOutputs<f64>) -> Result<LossValue<f64>> {
    let mut targets = None;
    loss_only(net, params, b, |o| {
        targets = Some((o.embedding(Role::TargetA)?, o.embedding(Role::TargetB)?));
        simsiam(o)
    })
    .unwrap();
    let (ta, tb) = targets.unwrap();
    move |o| simsiam_positive_loss(&o.embedding(Role::OnlineA)?, &o.embedding(Role::OnlineB)?, &ta, &tb)
}

fn simsiam(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    simsiam_positive_loss(
        &o.embedding(Role::OnlineA)?,
        &o.embedding(Role::OnlineB)?,
        &o.embedding(Role::TargetA)?,
        &o.embedding(Role::TargetB)?,
    )
}

fn focal(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    focal_loss(&o.logits(Role::ClassLogits)?, &[0, 1, 1], 2.0, 0.25)
}

fn ce(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    cross_entropy(&o.logits(Role::ClassLogits)?, &[1, 0, 1])
}

fn aux_ce(o: &ViewOutputs<f64>) -> Result<LossValue<f64>> {
    Ok(cross_entropy(&o.logits(Role::AuxLogits)?, &[0, 0, 0, 1, 1, 1])?.relabel(Role::ClassLogits, Role::AuxLogits))
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let cfg = NetworkConfig {
        input_size: 16,
        num_classes: 2,
        ..NetworkConfig::default()
    };
    let net = Network::new(cfg).unwrap();
    let params = init_params::<f64>(&net, 11);
    let b = batch(16, 3, 5);
    let fixed = simsiam_fixed_targets(&net, &params, &b);
    let losses: [(&str, LossFn, &dyn Fn(&ViewOutputs<f64>) -> Result<LossValue<f64>>); 7] = [
        ("info_nce", nce, &nce),
        ("spd", spd, &spd),
        ("combined", combined, &combined),
        ("simsiam", simsiam, &fixed),
        ("focal", focal, &focal),
        ("cross_entropy", ce, &ce),
        ("aux_cross_entropy", aux_ce, &aux_ce),
    ];
    for (name, f, probe) in losses {
        let (_, grads) = loss_and_grad(&net, &params, &b, f).unwrap();
        let r = grad_check(&params, &grads, |p| loss_only(&net, p, &b, probe), 1e-5, 200, &mut RngStream::new(3, 0)).unwrap();
        println!("{name}: max rel err {:.3e} over {} ({:?})", r.max_rel_err, r.checked, r.worst);
        assert!(r.max_rel_err < 1e-4, "{name}: {r:?}");
    }
}
