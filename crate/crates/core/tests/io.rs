mod common;

use common::*;
use finegrain::error::Error;
use finegrain::io::fdbk::{decode_fdbk, encode_fdbk};
use finegrain::io::fdmp::{decode_fdmp, encode_fdmp, read_fdmp, write_fdmp, FeatureSet};
use finegrain::io::RunConfig;
use finegrain::ingest::FeatureGrid;
use finegrain::pipeline::{analyze, fit_model, FitConfig};
use finegrain::record::{Domain, FeatureRecord, ProbabilityVector};
use finegrain::synth::{generate_paired_dataset, SynthConfig};
use proptest::prelude::*;
use rand::Rng;

fn small_synth(seed: u64, n: usize) -> finegrain::synth::SynthDataset {
    generate_paired_dataset(&SynthConfig { n_samples: n, seed, ..SynthConfig::default() }).unwrap()
}

#[test]
fn fdmp_round_trip_is_bitwise() {
    let ds = small_synth(3, 500);
    let set = FeatureSet::from_records(Domain::Hi, ds.hi.clone());
    let bytes = encode_fdmp(&set).unwrap();
    let back = decode_fdmp(&bytes).unwrap();
    assert_eq!(back, set);
    assert_eq!(encode_fdmp(&back).unwrap(), bytes);
    for (a, b) in back.records.iter().zip(&ds.hi) {
        for (x, y) in a.features.iter().zip(&b.features) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn fdmp_file_round_trip_with_grid() {
    let mut r = rng(4);
    let recs: Vec<FeatureRecord> = (0..12)
        .map(|i| {
            let f: Vec<f64> = (0..3).map(|_| f64::from(r.gen_range(-4.0f32..4.0))).collect();
            FeatureRecord::new(f, ProbabilityVector::one_hot(i % 2, 2).unwrap(), Domain::Li).unwrap()
        })
        .collect();
    let grid = FeatureGrid::new(3, 4, Domain::Li, recs).unwrap();
    let set = FeatureSet::from_grid(grid);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.fdmp");
    write_fdmp(&set, &path).unwrap();
    let back = read_fdmp(&path).unwrap();
    assert!(back.is_grid());
    assert_eq!(back, set);
    assert!(matches!(back.labels(), Err(Error::LabelsAbsent)));
    let g = back.into_grid().unwrap();
    assert_eq!(g.get(2, 3).coord, Some((2, 3)));
}

#[test]
fn fdmp_rejects_corruption() {
    let ds = small_synth(5, 50);
    let bytes = encode_fdmp(&FeatureSet::from_records(Domain::Li, ds.li)).unwrap();
    for cut in [0, 3, 20, 32, 33, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_fdmp(&bytes[..cut]), Err(Error::Truncated { .. } | Error::BadMagic { .. })), "cut {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_fdmp(&bad), Err(Error::BadMagic { .. })));
    let mut ver = bytes.clone();
    ver[4] = 99;
    assert!(matches!(decode_fdmp(&ver), Err(Error::VersionMismatch { .. })));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_fdmp(&long), Err(Error::TrailingData { .. })));
}

#[test]
fn fdbk_round_trip_preserves_scores() {
    let train = generate_paired_dataset(&SynthConfig { n_samples: 1500, seed: 1, ..SynthConfig::default() }.without_ue()).unwrap();
    let test = small_synth(2, 300);
    for cfg in [
        FitConfig::default(),
        FitConfig { pca_dims: 4, ..FitConfig::default() },
        FitConfig { backend: finegrain::distance::Backend::Knn, k: 10, ..FitConfig::default() },
    ] {
        let (model, _) = fit_model(&train.li, &train.hi, &cfg).unwrap();
        let bytes = encode_fdbk(&model);
        let back = decode_fdbk(&bytes).unwrap();
        assert_eq!(encode_fdbk(&back), bytes);
        let a = analyze(&model, &test.li, Some(&test.hi)).unwrap();
        let b = analyze(&back, &test.li, Some(&test.hi)).unwrap();
        assert_eq!(a, b);
        assert!(decode_fdbk(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[1] = b'?';
        assert!(matches!(decode_fdbk(&bad), Err(Error::BadMagic { .. })));
    }
}

#[test]
fn run_config_round_trip_and_rejections() {
    let cfg = RunConfig::parse("budget = 20\nbackend = knn\nk = 7\n# comment\n").unwrap();
    assert_eq!(cfg.k, 7);
    assert_eq!(RunConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
    assert!(RunConfig::parse("k = 1\nk = 2").is_err());
    assert!(RunConfig::parse("tpr = 1.5").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fdmp_round_trips_arbitrary_sets(
        n in 1usize..40, d in 1usize..9, c in 2usize..6, labeled in any::<bool>(), seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let recs: Vec<FeatureRecord> = (0..n).map(|_| {
            let f: Vec<f64> = (0..d).map(|_| f64::from(r.gen::<f32>() * 100.0 - 50.0)).collect();
            let w: Vec<f64> = (0..c).map(|_| f64::from(r.gen_range(0.01f32..1.0))).collect();
            let s: f32 = w.iter().map(|&v| v as f32).sum();
            let p: Vec<f64> = w.iter().map(|&v| f64::from(v as f32 / s)).collect();
            let rec = FeatureRecord::new(f, ProbabilityVector::from_ingest(p).unwrap(), Domain::Hi).unwrap();
            if labeled { rec.with_label(r.gen_range(0..c)).unwrap() } else { rec }
        }).collect();
        let set = FeatureSet::from_records(Domain::Hi, recs);
        let bytes = encode_fdmp(&set).unwrap();
        let back = decode_fdmp(&bytes).unwrap();
        prop_assert_eq!(encode_fdmp(&back).unwrap(), bytes);
        prop_assert_eq!(back.labels().is_ok(), labeled);
    }
}
