use spd::checkpoint::{decode_checkpoint, encode_checkpoint};
use spd::error::CliError;
use spd::padim_file::{decode_padim, encode_padim, PadimArtifact};
use spd::pnm::{decode_image, decode_mask, encode_image, encode_mask};
use spd::tables::{decode_rows, encode_curve, encode_rows};
use spd_core::metrics::{pr_curve, sweep, ScoredSample};
use spd_core::netcore::{init_params, Checkpoint, Network, NetworkConfig, TrainConfig, CHECKPOINT_VERSION};
use spd_core::padim::{fit, PadimConfig, PatchFeatureGrid};
use spd_core::protocol::{gen_synthetic_corpus, SyntheticCorpusConfig};
use spd_core::{BinaryMask, Image, RngStream};

fn small_checkpoint() -> Checkpoint {
    let mut config = TrainConfig::default();
    config.network = NetworkConfig {
        input_size: 16,
        widths: vec![4, 8],
        hidden_dim: 8,
        embed_dim: 4,
        ..NetworkConfig::default()
    };
    config.aug.out_size = 16;
    config.seed = 12;
    let net = Network::new(config.network.clone()).unwrap();
    Checkpoint {
        version: CHECKPOINT_VERSION,
        params: init_params(&net, 12),
        config,
        loss_history: vec![1.5, 1.25],
    }
}

#[test]
fn checkpoint_round_trips_exactly() {
    let ck = small_checkpoint();
    let bytes = encode_checkpoint(&ck).unwrap();
    assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
}

#[test]
fn checkpoint_rejects_damage() {
    let bytes = encode_checkpoint(&small_checkpoint()).unwrap();
    let short = &bytes[..bytes.len() - 4];
    assert!(matches!(decode_checkpoint(short), Err(CliError::Invalid(_))));

    let text = String::from_utf8_lossy(&bytes);
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header = text[..nl].replace("\"version\":1", "\"version\":9");
    let mut bumped = header.into_bytes();
    bumped.extend_from_slice(&bytes[nl..]);
    assert!(decode_checkpoint(&bumped).is_err());

    let mut nan = bytes.clone();
    let at = nan.len() - 4;
    nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(decode_checkpoint(&nan).is_err());
}

#[test]
fn padim_round_trips_exactly() {
    let mut rng = RngStream::new(3, 0);
    let grids: Vec<PatchFeatureGrid> = (0..8)
        .map(|_| PatchFeatureGrid::new(2, 3, 6, (0..36).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap())
        .collect();
    let art = PadimArtifact {
        model: fit(&PadimConfig { max_channels: 4, ..PadimConfig::default() }, &grids).unwrap(),
        input_size: 32,
        smooth_sigma: 2.5,
    };
    let bytes = encode_padim(&art).unwrap();
    assert_eq!(decode_padim(&bytes).unwrap(), art);
    assert!(decode_padim(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn ppm_round_trips_8_bit_values() {
    let img = Image::from_fn(9, 11, 3, |y, x, c| ((y * 31 + x * 7 + c * 50) % 256) as f32 / 255.0).unwrap();
    let bytes = encode_image(&img);
    assert!(bytes.starts_with(b"P6\n11 9\n255\n"));
    assert_eq!(decode_image(&bytes).unwrap(), img);
}

#[test]
fn ppm_header_comments_and_truncation() {
    let mut bytes = b"P6\n# made by hand\n8 8\n# depth\n255\n".to_vec();
    bytes.extend((0..8 * 8 * 3).map(|i| if i == 5 { 255 } else { 0 }));
    let img = decode_image(&bytes).unwrap();
    assert_eq!((img.width(), img.height(), img.get(0, 1, 2)), (8, 8, 1.0));
    assert!(decode_image(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_image(b"P3\n1 1\n255\n0 0 0\n").is_err());
}

#[test]
fn mask_round_trip() {
    let m = BinaryMask::new(2, 3, vec![true, false, false, true, true, false]).unwrap();
    assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
}

#[test]
fn manifest_csv_is_lf_only_and_round_trips() {
    let corpus = gen_synthetic_corpus(&SyntheticCorpusConfig {
        count: 12,
        size: 16,
        defect_size: (3, 5),
        ..SyntheticCorpusConfig::default()
    })
    .unwrap();
    let rows = corpus.manifest.rows();
    let bytes = encode_rows(&rows).unwrap();
    assert!(!bytes.contains(&b'\r'));
    assert!(bytes.starts_with(b"id,path,object,label,mask_path,split,run\n"));
    assert_eq!(decode_rows(&bytes).unwrap(), rows);
}

#[test]
fn curve_csv_marks_the_infinite_threshold() {
    let s = [ScoredSample::new(0.9, true), ScoredSample::new(0.1, false)];
    let text = String::from_utf8(encode_curve(&pr_curve(&sweep(&s).unwrap())).unwrap()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("recall,precision,threshold"));
    assert!(lines.next().unwrap().ends_with(",inf"));
}
