use std::path::Path;
use std::process::{Command, Output};

use tomoprior::evaluation::shepp_logan;
use tomoprior::pipeline::{load_image, load_sinogram, save_image, save_sinogram};
use tomoprior::{Geometry, Sinogram};

fn tomoprior(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tomoprior"))
        .current_dir(dir)
        .env_remove("TOMOPRIOR_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "solver.max_iter = 10\n").unwrap();
    let o = tomoprior(dir.path(), &["--config", "bad.cfg", "simulate"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_iter"));
}

#[test]
fn unreadable_inputs_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.tpri"), b"not an image").unwrap();
    save_image(&dir.path().join("ok.tpri"), &shepp_logan(16).unwrap()).unwrap();
    let garbage = tomoprior(dir.path(), &["evaluate", "--truth", "ok.tpri", "--recon", "junk.tpri"]);
    assert_eq!(code(&garbage), 4);
    let missing = tomoprior(dir.path(), &["evaluate", "--truth", "ok.tpri", "--recon", "absent.tpri"]);
    assert_eq!(code(&missing), 4);
}

#[test]
fn overflowing_measurements_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::for_image(8, 8, 4).unwrap();
    let s = Sinogram::from_vec(g.clone(), vec![1e300; g.len()]).unwrap();
    save_sinogram(&dir.path().join("s.tpri"), &s).unwrap();
    let o = tomoprior(
        dir.path(),
        &["reconstruct", "--method", "cs-dct", "--sino", "s.tpri", "--width", "8", "--height", "8", "--output", "r.tpri"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn project_reconstruct_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let truth = shepp_logan(32).unwrap();
    save_image(&dir.path().join("truth.tpri"), &truth).unwrap();
    let p = tomoprior(dir.path(), &["project", "--input", "truth.tpri", "--views", "90", "--output", "s.tpri"]);
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    assert_eq!(load_sinogram(&dir.path().join("s.tpri")).unwrap().geometry().num_views(), 90);

    let r = tomoprior(
        dir.path(),
        &["reconstruct", "--method", "fbp", "--sino", "s.tpri", "--width", "32", "--height", "32", "--output", "r.tpri"],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(dir.path().join("r.pgm").exists());
    assert_eq!(load_image(&dir.path().join("r.tpri")).unwrap().width(), 32);

    let e = tomoprior(dir.path(), &["evaluate", "--truth", "truth.tpri", "--recon", "r.tpri", "--roi", "8,8,23,23"]);
    assert!(e.status.success());
    let text = String::from_utf8(e.stdout).unwrap();
    let ssim: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("ssim_global = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ssim > 0.5 && ssim <= 1.0, "{text}");
    assert!(text.contains("ssim_roi = "));
}

#[test]
fn simulate_writes_every_scan() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "scenario.size = 24\nscenario.scans = 3\n").unwrap();
    let o = tomoprior(dir.path(), &["--config", "run.cfg", "--out", "out", "--seed", "9", "simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for t in 0..3 {
        let img = load_image(&dir.path().join(format!("out/scan{t}_truth.tpri"))).unwrap();
        assert_eq!((img.width(), img.height()), (24, 24));
    }
    let echoed = std::fs::read_to_string(dir.path().join("out/config.txt")).unwrap();
    assert!(echoed.contains("seed = 9"), "{echoed}");
}
