use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tomoprior::core::{forward_project, geometry::min_bins, Geometry};
use tomoprior::evaluation::{dynamic_range, ssim, ssim_roi, Metrics, DEFAULT_WINDOW, MAX_INTENSITY};
use tomoprior::pipeline::{
    self, load_image, load_sinogram, load_weights, parse_roi, save_image, save_pgm, save_sinogram,
    save_weights, RunConfig, RunReport, RunResult,
};
use tomoprior::prior::{build_eigenspace, reconstruct_unweighted, reconstruct_weighted, EigenspacePrior};
use tomoprior::recon::MethodId;
use tomoprior::weights::compute_weights;
use tomoprior::{Error, Image, Result};

#[derive(Parser)]
#[command(name = "tomoprior", version, about = "Prior-guided few-view tomographic reconstruction")]
struct Cli {
    /// run configuration (`key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the configuration seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory for runner commands
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads
    #[arg(long, global = true, env = "TOMOPRIOR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fbp,
    Art,
    Sart,
    Sirt,
    CsDct,
    CsHaar,
    Prior,
    Wprior,
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario's ground-truth scans
    Simulate,
    /// Forward-project an image
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        views: usize,
        /// detector bins; defaults to full coverage plus a margin
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        bin_spacing: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Reconstruct one sinogram
    Reconstruct {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        sino: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// template images for `prior` and `wprior`
        #[arg(long, value_delimiter = ',')]
        templates: Vec<PathBuf>,
        /// weights map for `wprior`; computed from the templates when absent
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compute a weights map for a test sinogram
    Weights {
        #[arg(long)]
        sino: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        templates: Vec<PathBuf>,
        /// overrides `weights.k`
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a reconstruction against ground truth
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        /// x0,y0,x1,y1 (inclusive)
        #[arg(long)]
        roi: Option<String>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
    /// Run the escalating-view protocol
    Protocol,
    /// Weighted reconstructions of the last scan over several k
    Ksweep {
        /// overrides `ksweep.k`
        #[arg(long, value_delimiter = ',')]
        k: Vec<f64>,
    },
    /// Choose k using a held-out template as test
    CalibrateK {
        #[arg(long, value_delimiter = ',')]
        k: Vec<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p, cli.seed)?,
        None => RunConfig::parse("", cli.seed)?,
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn load_templates(paths: &[PathBuf]) -> Result<Vec<Image>> {
    paths.iter().map(|p| load_image(p)).collect()
}

fn template_prior(templates: &[Image]) -> Result<EigenspacePrior> {
    match templates {
        [] => Err(Error::Config("prior reconstruction needs --templates".into())),
        [one] => Ok(EigenspacePrior::mean_only(one.clone())),
        many => build_eigenspace(many),
    }
}

fn save_with_preview(path: &Path, img: &Image) -> Result<()> {
    save_image(path, img)?;
    save_pgm(&path.with_extension("pgm"), &img.map(|v| v.max(0.0)), 0.0, MAX_INTENSITY)
}

fn finish(result: RunResult) -> Result<RunReport> {
    match result {
        Ok(report) => {
            print!("{}", report.summary());
            println!("report written to {}", report.out_dir.display());
            Ok(report)
        }
        Err(failure) => {
            eprint!("{}", failure.report.summary());
            eprintln!("partial report written to {}", failure.report.out_dir.display());
            Err(failure.error.context(format!("stage `{}`", failure.stage)))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate => finish(pipeline::run_simulate(&load_config(cli)?)).map(drop),
        Command::Protocol => finish(pipeline::run_protocol(&load_config(cli)?)).map(drop),
        Command::Ksweep { k } => {
            let cfg = load_config(cli)?;
            let ks = if k.is_empty() { cfg.k_values.clone() } else { k.clone() };
            finish(pipeline::run_ksweep(&cfg, &ks)).map(drop)
        }
        Command::CalibrateK { k } => {
            let cfg = load_config(cli)?;
            let ks = if k.is_empty() { cfg.k_values.clone() } else { k.clone() };
            finish(pipeline::run_calibrate_k(&cfg, &ks)).map(drop)
        }
        Command::Project {
            input,
            views,
            bins,
            bin_spacing,
            output,
        } => {
            let img = load_image(input)?;
            let nb = bins.unwrap_or(min_bins(img.width(), img.height(), *bin_spacing) + 2);
            let geom = Geometry::equispaced(*views, nb, *bin_spacing)?;
            save_sinogram(output, &forward_project(&img, &geom)?)
        }
        Command::Reconstruct {
            method,
            sino,
            width,
            height,
            templates,
            weights,
            output,
        } => {
            let cfg = load_config(cli)?;
            let sino = load_sinogram(sino)?;
            let (w, h) = (*width, *height);
            let id = |m: MethodId| m.reconstruct(&sino, w, h, &cfg.solver);
            let img = match method {
                Method::Fbp => id(MethodId::Fbp)?,
                Method::Art => id(MethodId::Art)?,
                Method::Sart => id(MethodId::Sart)?,
                Method::Sirt => id(MethodId::Sirt)?,
                Method::CsDct => id(MethodId::CsDct)?,
                Method::CsHaar => id(MethodId::CsHaar)?,
                Method::Prior => {
                    let prior = template_prior(&load_templates(templates)?)?;
                    reconstruct_unweighted(&sino, &prior, cfg.basis, &cfg.prior)?
                }
                Method::Wprior => {
                    let ts = load_templates(templates)?;
                    let prior = template_prior(&ts)?;
                    let wm = match weights {
                        Some(p) => load_weights(p)?,
                        None => compute_weights(&sino, &ts, &cfg.weights)?,
                    };
                    reconstruct_weighted(&sino, &prior, cfg.basis, &wm, &cfg.prior)?
                }
            };
            save_with_preview(output, &img)
        }
        Command::Weights {
            sino,
            templates,
            k,
            output,
        } => {
            let mut cfg = load_config(cli)?;
            if let Some(k) = k {
                cfg.weights.k = *k;
            }
            let sino = load_sinogram(sino)?;
            let wm = compute_weights(&sino, &load_templates(templates)?, &cfg.weights)?;
            save_weights(output, &wm)?;
            save_pgm(&output.with_extension("pgm"), wm.as_image(), 0.0, 1.0)
        }
        Command::Evaluate {
            truth,
            recon,
            roi,
            window,
        } => {
            let truth = load_image(truth)?;
            let recon = load_image(recon)?;
            let roi = roi.as_deref().map(parse_roi).transpose()?;
            let r = dynamic_range(&truth);
            let m = Metrics::compute(&truth, &recon, None)?;
            println!("ssim_global = {}", ssim(&truth, &recon, *window, r)?);
            if let Some(roi) = roi {
                roi.check_within(truth.width(), truth.height())?;
                println!("ssim_roi = {}", ssim_roi(&truth, &recon, &roi, *window, r)?);
            }
            println!("rmse = {}", m.rmse);
            println!("psnr = {}", m.psnr);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
