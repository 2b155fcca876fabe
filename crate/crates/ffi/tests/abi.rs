use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use finegrain::io::fdbk::encode_fdbk;
use finegrain::pipeline::{analyze, fit_model, FitConfig};
use finegrain::synth::{generate_paired_dataset, SynthConfig};
use finegrain_ffi::*;

fn last_error() -> String {
    let p = fg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn entropy_and_errors() {
    let p = [0.7, 0.2, 0.1, 0.0, 0.0, 0.0];
    let mut h = 0.0;
    assert_eq!(unsafe { fg_entropy(p.as_ptr(), p.len(), &mut h) }, FgStatus::Ok);
    let oracle: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * f64::ln(v)).sum();
    assert!((h - oracle).abs() < 1e-12);

    let bad = [0.6, 0.6];
    assert_eq!(unsafe { fg_entropy(bad.as_ptr(), 2, &mut h) }, FgStatus::Validation);
    assert!(last_error().contains("validation"));
    assert_eq!(unsafe { fg_entropy(ptr::null(), 2, &mut h) }, FgStatus::NullPointer);
    assert_eq!(unsafe { fg_entropy(p.as_ptr(), 6, ptr::null_mut()) }, FgStatus::NullPointer);
}

#[test]
fn gaussian_bank_round_trip() {
    let rows = [0.0, 0.0, 2.0, 0.0, 10.0, 10.0, 12.0, 10.0];
    let groups = [4u32, 4, 9, 9];
    let mut bank = ptr::null_mut();
    assert_eq!(unsafe { fg_gaussian_bank_fit(rows.as_ptr(), 4, 2, groups.as_ptr(), 1e-3, &mut bank) }, FgStatus::Ok);
    assert_eq!(unsafe { fg_gaussian_bank_dim(bank) }, 2);

    let queries = [1.0, 0.0, 11.0, 10.0, 6.0, 5.0];
    let mut scores = [0.0; 3];
    let mut ids = [0u32; 3];
    let st = unsafe { fg_gaussian_bank_score_batch(bank, queries.as_ptr(), 3, 2, scores.as_mut_ptr(), ids.as_mut_ptr()) };
    assert_eq!(st, FgStatus::Ok);
    assert_eq!(ids[..2], [4, 9]);
    assert!(scores[0] < 1e-9 && scores[1] < 1e-9);
    for i in 0..3 {
        let (mut s, mut g) = (0.0, 0u32);
        let st = unsafe { fg_gaussian_bank_score(bank, queries[2 * i..].as_ptr(), 2, &mut s, &mut g) };
        assert_eq!(st, FgStatus::Ok);
        assert_eq!((s, g), (scores[i], ids[i]));
    }
    let mut s = 0.0;
    assert_eq!(unsafe { fg_gaussian_bank_score(bank, queries.as_ptr(), 3, &mut s, ptr::null_mut()) }, FgStatus::Validation);
    unsafe { fg_gaussian_bank_free(bank) };

    let single = [4u32, 4, 4, 9];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { fg_gaussian_bank_fit(rows.as_ptr(), 4, 2, single.as_ptr(), 1e-3, &mut out) }, FgStatus::Validation);
    assert!(out.is_null());
}

#[test]
fn neighbor_bank() {
    let pts = [0.0, 1.0, 2.0, 3.0];
    let mut bank = ptr::null_mut();
    assert_eq!(unsafe { fg_neighbor_bank_new(pts.as_ptr(), 4, 1, 3, false, &mut bank) }, FgStatus::Ok);
    let mut s = 0.0;
    assert_eq!(unsafe { fg_neighbor_bank_score(bank, pts.as_ptr(), 1, &mut s) }, FgStatus::Ok);
    assert_eq!(s, 2.0);
    unsafe { fg_neighbor_bank_free(bank) };
    assert_eq!(unsafe { fg_neighbor_bank_new(pts.as_ptr(), 4, 1, 5, false, &mut bank) }, FgStatus::Validation);
}

#[test]
fn select_queries_prefix() {
    let tags = [FG_DYNAMIC_UAR; 5];
    let rank = [3.0, 1.0, 4.0, 1.5, 9.0];
    let mut idx = [usize::MAX; 5];
    let mut n = 0;
    let st = unsafe { fg_select_queries(tags.as_ptr(), rank.as_ptr(), 5, 1.0, 5.0, 3.0, idx.as_mut_ptr(), &mut n) };
    assert_eq!(st, FgStatus::Ok);
    assert_eq!(&idx[..n], &[1, 3]);
    let st = unsafe { fg_select_queries(tags.as_ptr(), rank.as_ptr(), 5, 1.0, 5.0, f64::NAN, idx.as_mut_ptr(), &mut n) };
    assert_eq!(st, FgStatus::Ok);
    assert_eq!(&idx[..n], &[1, 3, 0, 2, 4]);
    let bad = [7u8; 5];
    let st = unsafe { fg_select_queries(bad.as_ptr(), rank.as_ptr(), 5, 1.0, 5.0, 3.0, idx.as_mut_ptr(), &mut n) };
    assert_eq!(st, FgStatus::Validation);
}

#[test]
fn model_matches_library() {
    let base = SynthConfig { n_samples: 3000, ..SynthConfig::default() };
    let train = generate_paired_dataset(&SynthConfig { seed: 11, ..base.without_ue() }).unwrap();
    let test = generate_paired_dataset(&SynthConfig { seed: 12, n_samples: 300, ..base }).unwrap();
    let (model, _) = fit_model(&train.li, &train.hi, &FitConfig::default()).unwrap();
    let expected = analyze(&model, &test.li, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("banks.bin");
    let bytes = encode_fdbk(&model);
    std::fs::write(&path, &bytes).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let mut from_file = ptr::null_mut();
    assert_eq!(unsafe { fg_model_load(cpath.as_ptr(), &mut from_file) }, FgStatus::Ok);
    let mut from_bytes = ptr::null_mut();
    assert_eq!(unsafe { fg_model_load_bytes(bytes.as_ptr(), bytes.len(), &mut from_bytes) }, FgStatus::Ok);
    assert_eq!(unsafe { fg_model_n_classes(from_file) }, 6);
    assert_eq!(unsafe { fg_model_li_dim(from_file) }, 16);

    for (r, a) in test.li.iter().zip(&expected) {
        let p = r.probs.as_slice();
        let mut out = FgSample { static_tag: 9, dynamic_tag: 9, eu: 0.0, entropy: 0.0, d_uar: 0.0, d_uai: 0.0 };
        let st = unsafe { fg_model_classify(from_bytes, r.features.as_ptr(), r.dim(), p.as_ptr(), p.len(), &mut out) };
        assert_eq!(st, FgStatus::Ok);
        assert_eq!(out.static_tag, a.static_li.tag as u8);
        assert_eq!(out.dynamic_tag, a.surrogate.label.tag as u8);
        assert!((out.eu - a.static_li.eu_score).abs() <= 1e-9 * a.static_li.eu_score.max(1.0));
        assert_eq!(out.d_uar.is_nan(), a.surrogate.d_uar.is_none());
    }
    unsafe {
        fg_model_free(from_file);
        fg_model_free(from_bytes);
    }

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fg_model_load_bytes(bytes.as_ptr(), 3, &mut m) }, FgStatus::Truncated);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(unsafe { fg_model_load_bytes(bad.as_ptr(), bad.len(), &mut m) }, FgStatus::BadMagic);
    let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fg_model_load(missing.as_ptr(), &mut m) }, FgStatus::Io);
    assert!(m.is_null());
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = crate_dir().join("include/finegrain.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .expect("a C toolchain is available");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_static_library() {
    // test binaries live in target/<profile>/deps; the static library one level up
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libfinegrain_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "link failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
