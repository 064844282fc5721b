//! Line-oriented `key = value` run configuration.
//!
//! `#` starts a comment. Lists are comma-separated. Each `scenario.edit`
//! line describes one scan-to-scan step; several edits within a step are
//! separated by `;`:
//!
//! ```text
//! disk CX CY R VALUE              restore-disk CX CY R
//! needle X0 Y0 X1 Y1              segment X0 Y0 X1 Y1 WIDTH VALUE
//! restore-segment X0 Y0 X1 Y1 WIDTH
//! none
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::core::RoI;
use crate::error::{Error, Result};
use crate::evaluation::{
    Action, Edit, PhantomFamily, PhantomScenario, Shape, DEFAULT_WINDOW, NEEDLE_VALUE, NEEDLE_WIDTH,
};
use crate::prior::PriorParams;
use crate::recon::{MethodId, SolverParams, StepRule};
use crate::transforms::BasisKind;
use crate::weights::WeightsParams;

/// View counts for 128-pixel phantoms in the escalating protocol.
pub const PROTOCOL_VIEWS: [usize; 8] = [180, 20, 25, 30, 35, 40, 45, 60];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: PhantomScenario,
    /// view count of every scan
    pub views: Vec<usize>,
    pub bin_spacing: f64,
    /// sparsifying basis of CS and prior reconstructions
    pub basis: BasisKind,
    /// dense first scan and CS baselines
    pub solver: SolverParams,
    pub prior: PriorParams,
    pub weights: WeightsParams,
    /// change region; derived from the last edit step when absent
    pub roi: Option<RoI>,
    pub k_values: Vec<f64>,
    pub out_dir: PathBuf,
    pub write_pgm: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 0;
        Self {
            seed,
            scenario: PhantomScenario::needle_insertion(PhantomFamily::SheppLogan, 128, 8, seed),
            views: PROTOCOL_VIEWS.to_vec(),
            bin_spacing: 1.0,
            basis: BasisKind::Dct2,
            solver: SolverParams::cs_default(),
            prior: PriorParams::default(),
            weights: WeightsParams::default(),
            roi: None,
            k_values: vec![30.0, 50.0, 150.0, 450.0, 1350.0],
            out_dir: PathBuf::from("out"),
            write_pgm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Preset {
    Needle,
    Drilled,
    Cuts,
    Drift,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "needle" => Ok(Preset::Needle),
            "drilled" => Ok(Preset::Drilled),
            "cuts" => Ok(Preset::Cuts),
            "drift" => Ok(Preset::Drift),
            _ => Err(Error::config(format!("unknown scenario preset `{s}`"))),
        }
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(format!("line {line}: `{key}` has invalid value `{v}`")))
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(line, key, p)).collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("line {line}: `{key}` expects true or false, got `{v}`"))),
    }
}

pub fn parse_roi(v: &str) -> Result<RoI> {
    let p: Vec<usize> = v
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(format!("roi `{v}` is not x0,y0,x1,y1")))?;
    match p[..] {
        [x0, y0, x1, y1] => RoI::new(x0, y0, x1, y1),
        _ => Err(Error::config(format!("roi `{v}` is not x0,y0,x1,y1"))),
    }
}

fn parse_edit(s: &str) -> Result<Edit> {
    let mut it = s.split_whitespace();
    let op = it.next().unwrap_or("");
    let nums: Vec<f64> = it
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(format!("edit `{s}` has a non-numeric argument")))?;
    let edit = match (op, &nums[..]) {
        ("disk", &[cx, cy, r, v]) => Edit::add_disk(cx, cy, r, v),
        ("restore-disk", &[cx, cy, r]) => Edit::remove_disk(cx, cy, r),
        ("needle", &[x0, y0, x1, y1]) => Edit::needle(x0, y0, x1, y1),
        ("segment", &[x0, y0, x1, y1, width, v]) => Edit {
            shape: Shape::Segment { x0, y0, x1, y1, width },
            action: Action::Paint(v),
        },
        ("restore-segment", &[x0, y0, x1, y1, width]) => {
            Edit::restore(Shape::Segment { x0, y0, x1, y1, width })
        }
        _ => return Err(Error::config(format!("cannot parse edit `{s}`"))),
    };
    Ok(edit)
}

fn parse_step(v: &str) -> Result<Vec<Edit>> {
    if v.trim() == "none" {
        return Ok(Vec::new());
    }
    v.split(';').map(|e| parse_edit(e.trim())).collect()
}

fn format_edit(e: &Edit) -> String {
    match (e.shape, e.action) {
        (Shape::Disk { cx, cy, r }, Action::Paint(v)) => format!("disk {cx} {cy} {r} {v}"),
        (Shape::Disk { cx, cy, r }, Action::Restore) => format!("restore-disk {cx} {cy} {r}"),
        (Shape::Segment { x0, y0, x1, y1, width }, Action::Paint(v))
            if width == NEEDLE_WIDTH && v == NEEDLE_VALUE =>
        {
            format!("needle {x0} {y0} {x1} {y1}")
        }
        (Shape::Segment { x0, y0, x1, y1, width }, Action::Paint(v)) => {
            format!("segment {x0} {y0} {x1} {y1} {width} {v}")
        }
        (Shape::Segment { x0, y0, x1, y1, width }, Action::Restore) => {
            format!("restore-segment {x0} {y0} {x1} {y1} {width}")
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses configuration text; `seed` overrides any `seed` line.
    pub fn parse(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut family = PhantomFamily::SheppLogan;
        let mut size = 128usize;
        let mut preset: Option<Preset> = None;
        let mut scans: Option<usize> = None;
        let mut radius = 6.0f64;
        let mut edits: Vec<Vec<Edit>> = Vec::new();
        let mut views: Option<Vec<usize>> = None;
        let mut file_seed = 0u64;
        let mut inner_iters: Option<usize> = None;
        let mut inner_tol: Option<f64> = None;
        let mut pilot_iters: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::config(format!("line {line}: expected `key = value`")))?;
            match key {
                "seed" => file_seed = parse_num(line, key, value)?,
                "scenario.family" => family = value.parse()?,
                "scenario.size" => size = parse_num(line, key, value)?,
                "scenario.preset" => preset = Some(value.parse()?),
                "scenario.scans" => scans = Some(parse_num(line, key, value)?),
                "scenario.radius" => radius = parse_num(line, key, value)?,
                "scenario.edit" => edits.push(
                    parse_step(value).map_err(|e| e.context(format!("line {line}")))?,
                ),
                "scan.views" => views = Some(parse_list(line, key, value)?),
                "geometry.bin_spacing" => cfg.bin_spacing = parse_num(line, key, value)?,
                "recon.basis" => cfg.basis = value.parse()?,
                "solver.max_iters" => cfg.solver.max_iters = parse_num(line, key, value)?,
                "solver.tol" => cfg.solver.tol = parse_num(line, key, value)?,
                "solver.relax" => cfg.solver.relax = parse_num(line, key, value)?,
                "solver.lambda1" => cfg.solver.lambda1 = parse_num(line, key, value)?,
                "solver.step" => {
                    cfg.solver.step_rule = match value {
                        "fixed" => StepRule::Fixed,
                        "backtracking" => StepRule::Backtracking,
                        _ => {
                            return Err(Error::config(format!(
                                "line {line}: solver.step must be fixed or backtracking"
                            )))
                        }
                    }
                }
                "solver.accelerate" => cfg.solver.accelerate = parse_bool(line, key, value)?,
                "prior.lambda1" => cfg.prior.lambda1 = parse_num(line, key, value)?,
                "prior.lambda2" => cfg.prior.lambda2 = parse_num(line, key, value)?,
                "prior.outer_iters" => cfg.prior.outer_iters = parse_num(line, key, value)?,
                "prior.inner_iters" => inner_iters = Some(parse_num(line, key, value)?),
                "prior.inner_tol" => inner_tol = Some(parse_num(line, key, value)?),
                "weights.k" => cfg.weights.k = parse_num(line, key, value)?,
                "weights.methods" => {
                    cfg.weights.methods = value
                        .split(',')
                        .map(|m| m.trim().parse::<MethodId>())
                        .collect::<Result<_>>()?
                }
                "weights.median" => cfg.weights.median = parse_bool(line, key, value)?,
                "weights.pilot_iters" => pilot_iters = Some(parse_num(line, key, value)?),
                "roi" => cfg.roi = Some(parse_roi(value)?),
                "ksweep.k" => cfg.k_values = parse_list(line, key, value)?,
                "output.dir" => cfg.out_dir = PathBuf::from(value),
                "output.pgm" => cfg.write_pgm = parse_bool(line, key, value)?,
                _ => return Err(Error::config(format!("line {line}: unknown key `{key}`"))),
            }
        }

        let seed = seed.unwrap_or(file_seed);
        cfg.seed = seed;
        if preset.is_none() && edits.is_empty() && scans != Some(1) {
            preset = Some(Preset::Needle);
        }
        cfg.scenario = match (preset, edits.is_empty()) {
            (Some(_), false) => {
                return Err(Error::config(
                    "scenario.preset and scenario.edit are mutually exclusive",
                ))
            }
            (Some(p), true) => {
                let n = scans.unwrap_or(PROTOCOL_VIEWS.len());
                match p {
                    Preset::Needle => PhantomScenario::needle_insertion(family, size, n, seed),
                    Preset::Drilled => PhantomScenario::drilled(family, size, n, radius, seed),
                    Preset::Cuts => PhantomScenario::distinct_cuts(family, size, n, seed),
                    Preset::Drift => PhantomScenario::intensity_drift(family, size, n, seed),
                }
            }
            (None, _) => {
                if let Some(n) = scans.filter(|&n| n != edits.len() + 1) {
                    return Err(Error::config(format!(
                        "scenario.scans = {n} but {} edit steps were given",
                        edits.len()
                    )));
                }
                PhantomScenario {
                    base: family,
                    size,
                    evolution: edits,
                    seed,
                }
            }
        };
        let n = cfg.scenario.num_scans();
        cfg.views = match views {
            Some(v) if v.len() == 1 => vec![v[0]; n],
            Some(v) => v,
            None if n == PROTOCOL_VIEWS.len() => PROTOCOL_VIEWS.to_vec(),
            None => {
                let mut v = vec![PROTOCOL_VIEWS[PROTOCOL_VIEWS.len() - 1]; n];
                v[0] = PROTOCOL_VIEWS[0];
                v
            }
        };
        cfg.solver.seed = seed;
        cfg.prior.inner.seed = seed;
        cfg.weights.pilot.seed = seed;
        if let Some(it) = inner_iters {
            cfg.prior.inner.max_iters = it;
        }
        if let Some(t) = inner_tol {
            cfg.prior.inner.tol = t;
        }
        if let Some(it) = pilot_iters {
            cfg.weights.pilot.max_iters = it;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, seed).map_err(|e| e.context(path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let n = self.scenario.num_scans();
        if self.views.len() != n {
            return Err(Error::config(format!(
                "{} view counts given for {n} scans",
                self.views.len()
            )));
        }
        if self.views.iter().any(|&v| v == 0) {
            return Err(Error::config("view counts must be positive"));
        }
        if !(self.bin_spacing > 0.0 && self.bin_spacing.is_finite()) {
            return Err(Error::config("geometry.bin_spacing must be positive"));
        }
        if let Some(roi) = &self.roi {
            roi.check_within(self.scenario.size, self.scenario.size)?;
            if roi.width() < DEFAULT_WINDOW || roi.height() < DEFAULT_WINDOW {
                return Err(Error::config(format!(
                    "roi must be at least {DEFAULT_WINDOW} pixels on each side"
                )));
            }
        }
        if self.k_values.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::config("ksweep.k values must be non-negative"));
        }
        self.solver.validate()?;
        self.prior.validate()?;
        self.weights.validate()
    }

    /// Region of the final scan's change, if any.
    pub fn change_roi(&self) -> Option<RoI> {
        self.roi.or_else(|| {
            let last = self.scenario.evolution.len().checked_sub(1)?;
            self.scenario.change_roi(last, 3, DEFAULT_WINDOW).ok()
        })
    }

    /// Text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sc = &self.scenario;
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "scenario.family = {}", sc.base);
        let _ = writeln!(s, "scenario.size = {}", sc.size);
        for step in &sc.evolution {
            let v = if step.is_empty() {
                "none".to_string()
            } else {
                step.iter().map(format_edit).collect::<Vec<_>>().join("; ")
            };
            let _ = writeln!(s, "scenario.edit = {v}");
        }
        let _ = writeln!(s, "scan.views = {}", join(&self.views));
        let _ = writeln!(s, "geometry.bin_spacing = {}", self.bin_spacing);
        let _ = writeln!(s, "recon.basis = {}", self.basis);
        let sv = &self.solver;
        let _ = writeln!(s, "solver.max_iters = {}", sv.max_iters);
        let _ = writeln!(s, "solver.tol = {}", sv.tol);
        let _ = writeln!(s, "solver.relax = {}", sv.relax);
        let _ = writeln!(s, "solver.lambda1 = {}", sv.lambda1);
        let step = match sv.step_rule {
            StepRule::Fixed => "fixed",
            StepRule::Backtracking => "backtracking",
        };
        let _ = writeln!(s, "solver.step = {step}");
        let _ = writeln!(s, "solver.accelerate = {}", sv.accelerate);
        let p = &self.prior;
        let _ = writeln!(s, "prior.lambda1 = {}", p.lambda1);
        let _ = writeln!(s, "prior.lambda2 = {}", p.lambda2);
        let _ = writeln!(s, "prior.outer_iters = {}", p.outer_iters);
        let _ = writeln!(s, "prior.inner_iters = {}", p.inner.max_iters);
        let _ = writeln!(s, "prior.inner_tol = {}", p.inner.tol);
        let w = &self.weights;
        let _ = writeln!(s, "weights.k = {}", w.k);
        let _ = writeln!(s, "weights.methods = {}", join(&w.methods));
        let _ = writeln!(s, "weights.median = {}", w.median);
        let _ = writeln!(s, "weights.pilot_iters = {}", w.pilot.max_iters);
        if let Some(r) = &self.roi {
            let _ = writeln!(s, "roi = {},{},{},{}", r.x0, r.y0, r.x1, r.y1);
        }
        let _ = writeln!(s, "ksweep.k = {}", join(&self.k_values));
        let _ = writeln!(s, "output.dir = {}", self.out_dir.display());
        let _ = writeln!(s, "output.pgm = {}", self.write_pgm);
        s
    }
}
