use spd_core::netcore::{init_params, Network, NetworkConfig};
use spd_core::padim::{cell_distances, extract_features_with, fit, score_map, PadimConfig, PatchFeatureGrid};
use spd_core::{Image, RngStream};

fn random_grids(n: usize, gh: usize, gw: usize, dim: usize, seed: u64) -> Vec<PatchFeatureGrid> {
    let mut rng = RngStream::new(seed, 0);
    (0..n)
        .map(|_| {
            let data = (0..gh * gw * dim).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
            PatchFeatureGrid::new(gh, gw, dim, data).unwrap()
        })
        .collect()
}

#[test]
fn permutation_leaves_model_bit_identical() {
    let grids = random_grids(12, 3, 2, 5, 1);
    let cfg = PadimConfig {
        max_channels: 4,
        seed: 3,
        ..Default::default()
    };
    let a = fit(&cfg, &grids).unwrap();
    let mut rev = grids.clone();
    rev.reverse();
    rev.swap(0, 5);
    let b = fit(&cfg, &rev).unwrap();
    assert_eq!(a, b);
}

#[test]
fn two_dimensional_distance_matches_explicit_inverse() {
    let grids = random_grids(30, 1, 1, 2, 7);
    let cfg = PadimConfig {
        epsilon: 0.01,
        max_channels: 2,
        ..Default::default()
    };
    let model = fit(&cfg, &grids).unwrap();

    // Mean and covariance by hand, then the 2x2 inverse in closed form.
    let xs: Vec<[f64; 2]> = grids.iter().map(|g| [g.cell(0)[0] as f64, g.cell(0)[1] as f64]).collect();
    let n = xs.len() as f64;
    let m = [xs.iter().map(|x| x[0]).sum::<f64>() / n, xs.iter().map(|x| x[1]).sum::<f64>() / n];
    let mut s = [[0.0; 2]; 2];
    for x in &xs {
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += (x[i] - m[i]) * (x[j] - m[j]) / (n - 1.0);
            }
        }
    }
    s[0][0] += 0.01;
    s[1][1] += 0.01;
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let probe = PatchFeatureGrid::new(1, 1, 2, vec![0.7, -0.4]).unwrap();
    let d = [0.7f32 as f64 - m[0], -0.4f32 as f64 - m[1]];
    let q = (s[1][1] * d[0] * d[0] - 2.0 * s[0][1] * d[0] * d[1] + s[0][0] * d[1] * d[1]) / det;
    let got = cell_distances(&model, &probe).unwrap()[0];
    // Model parameters are stored in f32.
    assert!((got - q.sqrt()).abs() < 1e-4 * q.sqrt().max(1.0), "{got} vs {}", q.sqrt());
}

#[test]
fn features_feed_a_fit_and_score() {
    let net = Network::new(NetworkConfig {
        input_size: 16,
        ..NetworkConfig::default()
    })
    .unwrap();
    let params = init_params(&net, 4);
    let imgs: Vec<Image> = (0..6)
        .map(|i| {
            let mut rng = RngStream::new(i, 0);
            Image::from_fn(16, 16, 3, |_, _, _| rng.uniform(0.2, 0.8) as f32).unwrap()
        })
        .collect();
    let grids = extract_features_with(&net, &params, &imgs).unwrap();
    assert_eq!((grids[0].grid_h, grids[0].grid_w), (8, 8));
    let model = fit(
        &PadimConfig {
            max_channels: 10,
            ..Default::default()
        },
        &grids[..5],
    )
    .unwrap();
    let map = score_map(&model, &grids[5], 16, 16, 2.0).unwrap();
    assert!(map.data.iter().all(|v| v.is_finite() && *v >= 0.0));
}
