//! Persistence, configuration, reports and the multi-scan runners.

mod config;
mod io;

pub use config::{parse_roi, RunConfig, PROTOCOL_VIEWS};
pub use io::{
    decode_image, decode_sinogram, decode_weights, encode_image, encode_sinogram, encode_weights,
    load_image, load_sinogram, load_weights, save_image, save_pgm, save_sinogram, save_weights,
    Kind, MAGIC, VERSION,
};

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::core::{forward_project, Geometry, Image, RoI, Sinogram};
use crate::error::{Error, Result};
use crate::evaluation::{generate_longitudinal, Metrics, MAX_INTENSITY};
use crate::prior::{build_eigenspace, reconstruct_unweighted, reconstruct_weighted, EigenspacePrior};
use crate::recon::cs_reconstruct;
use crate::weights::{difference_maps, DifferenceMaps, EigenspaceSource, WeightsMap};

/// Mean weight inside and outside the change region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightsSummary {
    pub mean_inside: Option<f64>,
    /// over the whole image when there is no region
    pub mean_outside: f64,
}

impl WeightsSummary {
    pub fn of(w: &WeightsMap, roi: Option<&RoI>) -> Self {
        let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
        for y in 0..w.height() {
            for x in 0..w.width() {
                let v = w.data()[y * w.width() + x];
                if roi.is_some_and(|r| r.contains(x, y)) {
                    si += v;
                    ni += 1;
                } else {
                    so += v;
                    no += 1;
                }
            }
        }
        Self {
            mean_inside: (ni > 0).then(|| si / ni as f64),
            mean_outside: if no > 0 { so / no as f64 } else { f64::NAN },
        }
    }
}

/// One reconstructed image and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan: usize,
    pub stage: String,
    pub views: usize,
    /// weights sensitivity, for weighted reconstructions
    pub k: Option<f64>,
    /// size of the template pool behind the prior
    pub templates: usize,
    pub metrics: Metrics,
    pub roi: Option<RoI>,
    pub weights: Option<WeightsSummary>,
    pub truth_file: String,
    pub image_file: String,
    pub weights_file: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: String,
    /// configuration echo, parseable by [`RunConfig::parse`]
    pub config: String,
    pub records: Vec<ScanRecord>,
    pub timings: Vec<(String, Duration)>,
    /// max minus min RoI SSIM over a k sweep
    pub ssim_spread: Option<f64>,
    pub calibrated_k: Option<f64>,
    pub failed_stage: Option<String>,
    pub out_dir: PathBuf,
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl RunReport {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: cfg.to_text(),
            out_dir: cfg.out_dir.clone(),
            ..Self::default()
        }
    }

    pub fn record(&self, scan: usize, stage: &str) -> Option<&ScanRecord> {
        self.records.iter().find(|r| r.scan == scan && r.stage == stage)
    }

    /// Metric table; contains no timings so repeated runs compare equal.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "scan,stage,views,k,templates,ssim_global,ssim_roi,rmse,psnr,roi,\
             w_mean_roi,w_mean_outside,truth_file,image_file,weights_file\n",
        );
        for r in &self.records {
            let m = &r.metrics;
            let roi = r
                .roi
                .map(|r| format!("{} {} {} {}", r.x0, r.y0, r.x1, r.y1))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scan,
                r.stage,
                r.views,
                opt(r.k),
                r.templates,
                m.ssim_global,
                opt(m.ssim_roi),
                m.rmse,
                m.psnr,
                roi,
                opt(r.weights.and_then(|w| w.mean_inside)),
                opt(r.weights.map(|w| w.mean_outside)),
                r.truth_file,
                r.image_file,
                opt(r.weights_file.as_deref()),
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("tomoprior {}\n", self.command);
        if let Some(stage) = &self.failed_stage {
            let _ = writeln!(s, "FAILED at stage: {stage}");
        }
        let _ = writeln!(s, "\n{:>4}  {:<18} {:>5} {:>8} {:>8} {:>8} {:>8}", "scan", "stage", "views", "ssim", "ssim_roi", "rmse", "w_roi");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:>4}  {:<18} {:>5} {:>8.4} {:>8} {:>8.4} {:>8}",
                r.scan,
                r.stage,
                r.views,
                r.metrics.ssim_global,
                r.metrics.ssim_roi.map(|v| format!("{v:.4}")).unwrap_or("-".into()),
                r.metrics.rmse,
                r.weights
                    .and_then(|w| w.mean_inside)
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or("-".into()),
            );
        }
        if let Some(d) = self.ssim_spread {
            let _ = writeln!(s, "\nRoI SSIM spread over k: {d:.4}");
        }
        if let Some(k) = self.calibrated_k {
            let _ = writeln!(s, "\ncalibrated k: {k}");
        }
        let _ = writeln!(s, "\ntimings:");
        for (stage, d) in &self.timings {
            let _ = writeln!(s, "  {stage:<32} {:>9.2} s", d.as_secs_f64());
        }
        s
    }

    /// Writes `report.csv`, `summary.txt` and `config.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        fs::write(dir.join("config.txt"), &self.config)?;
        Ok(())
    }
}

/// A runner error together with everything produced before it.
#[derive(Debug)]
pub struct PipelineFailure {
    pub stage: String,
    pub report: RunReport,
    pub error: Error,
}

impl fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for PipelineFailure {}

pub type RunResult = std::result::Result<RunReport, Box<PipelineFailure>>;

struct Run<'a> {
    cfg: &'a RunConfig,
    report: RunReport,
    stage: String,
    started: Instant,
}

impl<'a> Run<'a> {
    fn new(command: &str, cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            report: RunReport::new(command, cfg),
            stage: "setup".into(),
            started: Instant::now(),
        }
    }

    fn begin(&mut self, stage: impl Into<String>) {
        self.finish_stage();
        self.stage = stage.into();
        self.started = Instant::now();
    }

    fn finish_stage(&mut self) {
        let d = self.started.elapsed();
        self.report.timings.push((self.stage.clone(), d));
    }

    /// Writes `name.tpri` (and `name.pgm`) and returns the file name.
    fn emit(&self, name: &str, img: &Image, hi: f64) -> Result<String> {
        let file = format!("{name}.tpri");
        save_image(&self.cfg.out_dir.join(&file), img)?;
        if self.cfg.write_pgm {
            save_pgm(&self.cfg.out_dir.join(format!("{name}.pgm")), &img.map(|v| v.max(0.0)), 0.0, hi)?;
        }
        Ok(file)
    }

    fn emit_weights(&self, name: &str, w: &WeightsMap) -> Result<String> {
        let file = format!("{name}.tpri");
        save_weights(&self.cfg.out_dir.join(&file), w)?;
        if self.cfg.write_pgm {
            save_pgm(&self.cfg.out_dir.join(format!("{name}.pgm")), w.as_image(), 0.0, 1.0)?;
        }
        Ok(file)
    }

    #[allow(clippy::too_many_arguments)]
    fn score(
        &mut self,
        scan: usize,
        stage: &str,
        truth_file: &str,
        truth: &Image,
        recon: &Image,
        roi: Option<RoI>,
        templates: usize,
        weights: Option<(&WeightsMap, f64)>,
    ) -> Result<()> {
        let name = match weights {
            Some((_, k)) if stage.starts_with("k=") => format!("scan{scan}_k{k}"),
            _ => format!("scan{scan}_{stage}"),
        };
        let image_file = self.emit(&name, recon, MAX_INTENSITY)?;
        let weights_file = match weights {
            Some((w, _)) => Some(self.emit_weights(&format!("{name}_weights"), w)?),
            None => None,
        };
        self.report.records.push(ScanRecord {
            scan,
            stage: stage.to_string(),
            views: self.cfg.views[scan],
            k: weights.map(|(_, k)| k),
            templates,
            metrics: Metrics::compute(truth, recon, roi.as_ref())?,
            roi,
            weights: weights.map(|(w, _)| WeightsSummary::of(w, roi.as_ref())),
            truth_file: truth_file.to_string(),
            image_file,
            weights_file,
        });
        Ok(())
    }

    fn close(mut self, result: Result<()>) -> RunResult {
        self.finish_stage();
        match result {
            Ok(()) => {
                self.report.write(&self.cfg.out_dir).map_err(|error| {
                    Box::new(PipelineFailure {
                        stage: "report".into(),
                        report: self.report.clone(),
                        error,
                    })
                })?;
                Ok(self.report)
            }
            Err(error) => {
                self.report.failed_stage = Some(self.stage.clone());
                // best effort: the partial report is still useful
                let _ = self.report.write(&self.cfg.out_dir);
                Err(Box::new(PipelineFailure {
                    stage: self.stage,
                    report: self.report,
                    error,
                }))
            }
        }
    }
}

fn geometry_for(cfg: &RunConfig, scan: usize) -> Result<Geometry> {
    let n = cfg.scenario.size;
    let bins = crate::core::geometry::min_bins(n, n, cfg.bin_spacing) + 2;
    Geometry::equispaced(cfg.views[scan], bins, cfg.bin_spacing)
}

fn measure(cfg: &RunConfig, truth: &Image, scan: usize) -> Result<Sinogram> {
    forward_project(truth, &geometry_for(cfg, scan)?)
}

fn pool_prior(pool: &[Image]) -> Result<EigenspacePrior> {
    if pool.len() == 1 {
        Ok(EigenspacePrior::mean_only(pool[0].clone()))
    } else {
        build_eigenspace(pool)
    }
}

/// Writes every truth scan and returns the scans with their file names.
fn simulate(run: &mut Run) -> Result<(Vec<Image>, Vec<String>)> {
    run.begin("simulate");
    let scans = generate_longitudinal(&run.cfg.scenario)?;
    let files = scans
        .iter()
        .enumerate()
        .map(|(t, s)| run.emit(&format!("scan{t}_truth"), s, MAX_INTENSITY))
        .collect::<Result<Vec<_>>>()?;
    Ok((scans, files))
}

/// Generates the scenario's truth scans into the output directory.
pub fn run_simulate(cfg: &RunConfig) -> RunResult {
    let mut run = Run::new("simulate", cfg);
    let r = simulate(&mut run).map(|_| ());
    run.close(r)
}

/// Escalating-view protocol: a dense CS first scan, few-view unweighted
/// prior scans that feed the template pool, and a weighted final scan
/// compared against an unweighted rerun and plain CS at the same views.
pub fn run_protocol(cfg: &RunConfig) -> RunResult {
    let mut run = Run::new("protocol", cfg);
    let r = protocol_body(&mut run);
    run.close(r)
}

fn protocol_body(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    cfg.validate()?;
    let (scans, truth_files) = simulate(run)?;
    let n = scans.len();
    let size = cfg.scenario.size;
    let step_roi = |t: usize| -> Option<RoI> {
        if t + 1 == n {
            cfg.change_roi()
        } else {
            t.checked_sub(1)
                .and_then(|s| cfg.scenario.change_roi(s, 3, crate::evaluation::DEFAULT_WINDOW).ok())
        }
    };

    run.begin("scan 0 dense cs");
    let sino0 = measure(cfg, &scans[0], 0)?;
    let first = cs_reconstruct(&sino0, size, size, cfg.basis, &cfg.solver)?;
    run.score(0, "dense-cs", &truth_files[0], &scans[0], &first, None, 0, None)?;
    let mut pool = vec![first];
    if n == 1 {
        return Ok(());
    }

    for t in 1..n - 1 {
        run.begin(format!("scan {t} prior"));
        let sino = measure(cfg, &scans[t], t)?;
        let prior = pool_prior(&pool)?;
        let recon = reconstruct_unweighted(&sino, &prior, cfg.basis, &cfg.prior)?;
        run.score(t, "prior", &truth_files[t], &scans[t], &recon, step_roi(t), pool.len(), None)?;
        pool.push(recon);
    }

    let last = n - 1;
    let roi = step_roi(last);
    let sino = measure(cfg, &scans[last], last)?;
    run.begin(format!("scan {last} weights"));
    let dm = difference_maps(&sino, &pool, &cfg.weights, EigenspaceSource::LowQuality)?;
    let weights = dm.weights(cfg.weights.k)?;
    let prior = pool_prior(&pool)?;

    run.begin(format!("scan {last} weighted"));
    let recon = reconstruct_weighted(&sino, &prior, cfg.basis, &weights, &cfg.prior)?;
    let tf = &truth_files[last];
    run.score(last, "weighted", tf, &scans[last], &recon, roi, pool.len(), Some((&weights, cfg.weights.k)))?;

    run.begin(format!("scan {last} unweighted rerun"));
    let recon = reconstruct_unweighted(&sino, &prior, cfg.basis, &cfg.prior)?;
    run.score(last, "unweighted", tf, &scans[last], &recon, roi, pool.len(), None)?;

    run.begin(format!("scan {last} cs"));
    let recon = cs_reconstruct(&sino, size, size, cfg.basis, &cfg.solver)?;
    run.score(last, "cs", tf, &scans[last], &recon, roi, 0, None)
}

/// Last scan as test, earlier truth scans as templates.
fn sweep_inputs(run: &mut Run) -> Result<(Vec<Image>, Vec<String>, Sinogram, DifferenceMaps)> {
    let cfg = run.cfg;
    cfg.validate()?;
    let (scans, files) = simulate(run)?;
    if scans.len() < 3 {
        return Err(Error::config(format!(
            "a k sweep needs at least 3 scans (2 templates and a test), got {}",
            scans.len()
        )));
    }
    let last = scans.len() - 1;
    run.begin("weights difference maps");
    let sino = measure(cfg, &scans[last], last)?;
    let dm = difference_maps(&sino, &scans[..last], &cfg.weights, EigenspaceSource::LowQuality)?;
    Ok((scans, files, sino, dm))
}

/// Weighted reconstructions of the last scan for every `k`; difference
/// maps are computed once and shared.
pub fn run_ksweep(cfg: &RunConfig, k_values: &[f64]) -> RunResult {
    let mut run = Run::new("ksweep", cfg);
    let r = ksweep_body(&mut run, k_values);
    run.close(r)
}

fn ksweep_body(run: &mut Run, k_values: &[f64]) -> Result<()> {
    if k_values.is_empty() {
        return Err(Error::config("k sweep needs at least one k value"));
    }
    let cfg = run.cfg;
    let (scans, files, sino, dm) = sweep_inputs(run)?;
    let last = scans.len() - 1;
    let prior = build_eigenspace(&scans[..last])?;
    let roi = cfg.change_roi();
    for &k in k_values {
        run.begin(format!("k = {k}"));
        let w = dm.weights(k)?;
        let recon = reconstruct_weighted(&sino, &prior, cfg.basis, &w, &cfg.prior)?;
        run.score(last, &format!("k={k}"), &files[last], &scans[last], &recon, roi, last, Some((&w, k)))?;
    }
    let vals: Vec<f64> = run
        .report
        .records
        .iter()
        .map(|r| r.metrics.ssim_roi.unwrap_or(r.metrics.ssim_global))
        .collect();
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    run.report.ssim_spread = Some(hi - lo);
    Ok(())
}

/// Picks `k` by reconstructing the most recent template as if it were the
/// test, against the templates before it; the best global SSIM wins.
pub fn run_calibrate_k(cfg: &RunConfig, candidates: &[f64]) -> RunResult {
    let mut run = Run::new("calibrate-k", cfg);
    let r = calibrate_body(&mut run, candidates);
    run.close(r)
}

fn calibrate_body(run: &mut Run, candidates: &[f64]) -> Result<()> {
    let cfg = run.cfg;
    if candidates.is_empty() {
        return Err(Error::config("calibration needs at least one candidate k"));
    }
    cfg.validate()?;
    let (scans, files) = simulate(run)?;
    if scans.len() < 4 {
        return Err(Error::config(format!(
            "calibration needs at least 4 scans (2 templates, a held-out template and the test), got {}",
            scans.len()
        )));
    }
    let held = scans.len() - 2;
    run.begin("weights difference maps");
    // the held-out template is measured with the test's geometry
    let sino = measure(cfg, &scans[held], scans.len() - 1)?;
    let templates = &scans[..held];
    let dm = difference_maps(&sino, templates, &cfg.weights, EigenspaceSource::LowQuality)?;
    let prior = build_eigenspace(templates)?;
    let roi = cfg.scenario.change_roi(held - 1, 3, crate::evaluation::DEFAULT_WINDOW).ok();
    let mut best: Option<(f64, f64)> = None;
    for &k in candidates {
        run.begin(format!("k = {k}"));
        let w = dm.weights(k)?;
        let recon = reconstruct_weighted(&sino, &prior, cfg.basis, &w, &cfg.prior)?;
        run.score(held, &format!("k={k}"), &files[held], &scans[held], &recon, roi, held, Some((&w, k)))?;
        let rec = run.report.records.last_mut().expect("just scored");
        rec.views = cfg.views[scans.len() - 1];
        let s = rec.metrics.ssim_global;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    run.report.calibrated_k = best.map(|(k, _)| k);
    Ok(())
}
