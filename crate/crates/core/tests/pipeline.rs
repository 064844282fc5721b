mod common;

use std::path::Path;

use common::{max_abs_diff, random_image};
use proptest::prelude::*;
use tomoprior::core::forward_project;
use tomoprior::core::geometry::min_bins;
use tomoprior::evaluation::{generate_longitudinal, Metrics};
use tomoprior::pipeline::{
    decode_image, decode_sinogram, decode_weights, encode_image, encode_sinogram, encode_weights, load_image,
    load_sinogram, run_ksweep, run_protocol, run_simulate, save_image, save_sinogram, RunConfig, RunReport,
};
use tomoprior::prior::{build_eigenspace, reconstruct_unweighted};
use tomoprior::weights::WeightsMap;
use tomoprior::{Error, Geometry, Image, Sinogram};

const SMALL: &str = "
seed = 3
scenario.family = shepp-logan
scenario.size = 32
scenario.preset = needle
scenario.scans = 4
scan.views = 60, 10, 12, 14
solver.max_iters = 60
prior.inner_iters = 30
weights.pilot_iters = 30
output.pgm = false
";

fn small(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::parse(SMALL, None).unwrap();
    cfg.out_dir = dir.to_path_buf();
    cfg
}

fn run(cfg: &RunConfig) -> RunReport {
    run_protocol(cfg).map_err(|f| f.to_string()).unwrap()
}

#[test]
fn image_files_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = random_image(7, 5, 1, -1e3, 1e3);
    img.set(0, 0, -0.0);
    img.set(1, 0, f64::MIN_POSITIVE / 4.0);
    img.set(2, 0, f64::MAX);
    let p = dir.path().join("nested/a.tpri");
    save_image(&p, &img).unwrap();
    let back = load_image(&p).unwrap();
    let bits = |i: &Image| i.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&img));
    assert_eq!((back.width(), back.height()), (7, 5));
}

#[test]
fn sinogram_files_keep_their_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let angles = vec![0.1, 0.7000000000000001, std::f64::consts::FRAC_PI_3, 3.0];
    let g = Geometry::new(angles.clone(), 13, 0.75).unwrap();
    let s = forward_project(&random_image(6, 6, 2, 0.0, 1.0), &g).unwrap();
    let p = dir.path().join("s.tpri");
    save_sinogram(&p, &s).unwrap();
    let back = load_sinogram(&p).unwrap();
    assert_eq!(back.geometry().angles(), angles.as_slice());
    assert_eq!(back.geometry().bin_spacing(), 0.75);
    assert_eq!(back.geometry().num_bins(), 13);
    assert_eq!(back.data(), s.data());
}

#[test]
fn truncated_files_name_both_lengths() {
    let bytes = encode_image(&random_image(4, 3, 3, 0.0, 1.0));
    let cut = &bytes[..bytes.len() - 5];
    match decode_image(cut) {
        Err(Error::Format { message, .. }) => {
            assert!(message.contains(&cut.len().to_string()), "{message}");
            assert!(message.contains(&bytes.len().to_string()), "{message}");
        }
        other => panic!("{other:?}"),
    }
    for n in [0, 3, 10, 19] {
        assert!(matches!(decode_image(&bytes[..n]), Err(Error::Format { .. })));
    }
    let sbytes = encode_sinogram(&Sinogram::zeros(Geometry::equispaced(3, 5, 1.0).unwrap()));
    assert!(matches!(decode_sinogram(&sbytes[..sbytes.len() - 1]), Err(Error::Format { .. })));
}

#[test]
fn kinds_are_not_interchangeable() {
    let img = random_image(4, 4, 4, 0.1, 1.0);
    let bytes = encode_image(&img);
    assert!(matches!(decode_sinogram(&bytes), Err(Error::Format { offset: 8, .. })));
    assert!(matches!(decode_weights(&bytes), Err(Error::Format { offset: 8, .. })));
    let w = WeightsMap::from_image(img.clone()).unwrap();
    assert_eq!(decode_weights(&encode_weights(&w)).unwrap(), w);
    // a weights file must still hold valid weights
    let mut bad = encode_weights(&w);
    let n = bad.len();
    bad[n - 8..].copy_from_slice(&2.0f64.to_le_bytes());
    assert!(matches!(decode_weights(&bad), Err(Error::Format { .. })));
}

#[test]
fn eigenvectors_stay_orthonormal_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let ts: Vec<Image> = (0..5).map(|s| random_image(9, 9, 10 + s, 0.0, 1.0)).collect();
    let prior = build_eigenspace(&ts).unwrap();
    let loaded: Vec<Image> = prior
        .eigvecs
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = dir.path().join(format!("v{i}.tpri"));
            save_image(&p, v).unwrap();
            load_image(&p).unwrap()
        })
        .collect();
    for (i, a) in loaded.iter().enumerate() {
        for (j, b) in loaded.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((a.dot(b) - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn single_scan_protocol_only_runs_dense_cs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse("scenario.size = 32\nscenario.scans = 1\nsolver.max_iters = 40\n", None).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let rep = run(&cfg);
    assert_eq!(rep.records.len(), 1);
    assert_eq!(rep.records[0].stage, "dense-cs");
    assert_eq!(rep.records[0].templates, 0);
}

#[test]
fn protocol_grows_the_template_pool_and_is_reproducible() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run(&small(d1.path()));
    let stages: Vec<(usize, &str, usize)> =
        a.records.iter().map(|r| (r.scan, r.stage.as_str(), r.templates)).collect();
    assert_eq!(
        stages,
        vec![
            (0, "dense-cs", 0),
            (1, "prior", 1),
            (2, "prior", 2),
            (3, "weighted", 3),
            (3, "unweighted", 3),
            (3, "cs", 0)
        ]
    );
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| run(&small(d2.path())));
    assert_eq!(a.to_csv(), b.to_csv());
    let csv = |d: &Path| std::fs::read(d.join("report.csv")).unwrap();
    assert_eq!(csv(d1.path()), csv(d2.path()));
    assert!(d1.path().join("summary.txt").exists());
    assert!(d1.path().join("config.txt").exists());
}

#[test]
fn metrics_can_be_recomputed_from_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run(&small(dir.path()));
    for r in &rep.records {
        let truth = load_image(&dir.path().join(&r.truth_file)).unwrap();
        let img = load_image(&dir.path().join(&r.image_file)).unwrap();
        let m = Metrics::compute(&truth, &img, r.roi.as_ref()).unwrap();
        assert_eq!(m, r.metrics, "{} {}", r.scan, r.stage);
    }
    let w = rep.record(3, "weighted").unwrap();
    assert!(w.weights_file.is_some() && w.weights.is_some() && w.k.is_some());
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let rep = run_simulate(&cfg).unwrap();
    let mut again = RunConfig::parse(&rep.config, None).unwrap();
    again.out_dir = cfg.out_dir.clone();
    assert_eq!(again, cfg);
}

#[test]
fn zero_k_sweep_is_the_unweighted_prior() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let rep = run_ksweep(&cfg, &[0.0]).map_err(|f| f.to_string()).unwrap();
    let rec = &rep.records[0];
    assert_eq!(rec.weights.unwrap().mean_outside, 1.0);
    let swept = load_image(&dir.path().join(&rec.image_file)).unwrap();

    let scans = generate_longitudinal(&cfg.scenario).unwrap();
    let last = scans.len() - 1;
    let g = Geometry::equispaced(cfg.views[last], min_bins(32, 32, cfg.bin_spacing) + 2, cfg.bin_spacing).unwrap();
    let sino = forward_project(&scans[last], &g).unwrap();
    let prior = build_eigenspace(&scans[..last]).unwrap();
    let direct = reconstruct_unweighted(&sino, &prior, cfg.basis, &cfg.prior).unwrap();
    assert!(max_abs_diff(swept.data(), direct.data()) <= 1e-8);
}

#[test]
fn k_sweep_weights_fall_with_k() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run_ksweep(&small(dir.path()), &[5.0, 50.0, 500.0]).map_err(|f| f.to_string()).unwrap();
    let maps: Vec<WeightsMap> = rep
        .records
        .iter()
        .map(|r| tomoprior::pipeline::load_weights(&dir.path().join(r.weights_file.as_ref().unwrap())).unwrap())
        .collect();
    for p in maps.windows(2) {
        assert!(p[0].data().iter().zip(p[1].data()).all(|(a, b)| a >= b));
    }
    assert!(rep.ssim_spread.is_some());
}

#[test]
fn failures_keep_the_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    // fewer than two templates cannot drive a sweep
    let mut short = cfg.clone();
    short.scenario.evolution.truncate(1);
    short.views.truncate(2);
    let err = run_ksweep(&short, &[1.0]).unwrap_err();
    assert!(matches!(err.error, Error::Config(_)));
    assert_eq!(err.report.failed_stage.as_deref(), Some(err.stage.as_str()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoded_images_decode_bitwise(w in 1usize..12, h in 1usize..12, bits in proptest::collection::vec(any::<u64>(), 144)) {
        let data: Vec<f64> = bits[..w * h].iter().map(|b| f64::from_bits(*b)).collect();
        let img = Image::from_vec(w, h, data.clone());
        prop_assume!(img.is_ok());
        let back = decode_image(&encode_image(&img.unwrap())).unwrap();
        let got: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(got, bits[..w * h].to_vec());
    }

    #[test]
    fn encoded_sinograms_decode_exactly(views in 1usize..8, bins in 1usize..10, seed in 0u64..10_000) {
        let mut angles: Vec<f64> = random_image(views, 1, seed, 0.0, std::f64::consts::PI).into_vec();
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        let views = angles.len();
        let g = Geometry::new(angles, bins, 0.5 + (seed % 7) as f64 * 0.1).unwrap();
        let data = random_image(views * bins, 1, seed + 1, -5.0, 5.0).into_vec();
        let s = Sinogram::from_vec(g, data).unwrap();
        let back = decode_sinogram(&encode_sinogram(&s)).unwrap();
        prop_assert_eq!(back.geometry(), s.geometry());
        prop_assert_eq!(back.data(), s.data());
    }
}
