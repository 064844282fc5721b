//! Proximal-gradient solver for L1-regularised least squares in a basis Ψ,
//! optionally with a (weighted) quadratic pull towards a target image.
//!
//! Minimises over θ
//!
//! ```text
//! F(θ) = ‖ΦΨθ − y‖² + λ₂ ‖W(Ψθ − p)‖² + λ₁ ‖θ‖₁
//! ```
//!
//! with ISTA or monotone FISTA steps and soft-thresholding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fbp, relative_change, Filter, SolverParams, StepRule};
use crate::core::{Image, LinearOperator, Projector, Sinogram};
use crate::error::{Error, Result};
use crate::transforms::{Basis, BasisKind};

/// The composite operator `ΦΨ` acting on coefficients.
pub struct BasisProjector<'a> {
    pub projector: &'a Projector,
    pub basis: &'a Basis,
}

impl LinearOperator for BasisProjector<'_> {
    fn domain_len(&self) -> usize {
        self.basis.coeff_len()
    }

    fn range_len(&self) -> usize {
        self.projector.geometry().len()
    }

    fn apply(&self, theta: &[f64]) -> Vec<f64> {
        self.projector.forward_raw(&self.basis.synthesize_raw(theta))
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.basis.analyze_raw(&self.projector.back_raw(y))
    }
}

const POWER_MIN_ITERS: usize = 50;
const POWER_MAX_ITERS: usize = 20_000;
const POWER_RTOL: f64 = 1e-10;

/// Largest eigenvalue of `AᵀA` by power iteration from a seeded random start.
///
/// Runs at least 50 iterations and stops once the Rayleigh quotient changes
/// by less than 1e-10 relative.
pub fn power_iteration(op: &dyn LinearOperator, seed: u64) -> Result<f64> {
    let n = op.domain_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);

    let mut estimate = 0.0;
    for iter in 0..POWER_MAX_ITERS {
        let av = op.apply(&v);
        let rq = av.iter().map(|a| a * a).sum::<f64>();
        let w = op.adjoint(&av);
        let wn = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if wn == 0.0 {
            return Ok(0.0);
        }
        let done = iter + 1 >= POWER_MIN_ITERS && (rq - estimate).abs() <= POWER_RTOL * rq;
        estimate = rq;
        if done {
            return Ok(estimate);
        }
        v = w.into_iter().map(|a| a / wn).collect();
    }
    Err(Error::solver(format!(
        "power iteration did not converge in {POWER_MAX_ITERS} iterations (last estimate {estimate:e})"
    )))
}

/// L̂ ≈ λ_max(ΨᵀΦᵀΦΨ).
pub fn lipschitz_estimate(
    geom: &crate::core::Geometry,
    basis: BasisKind,
    width: usize,
    height: usize,
) -> Result<f64> {
    let proj = Projector::new(width, height, geom)?;
    let basis = Basis::new(basis, width, height)?;
    power_iteration(
        &BasisProjector {
            projector: &proj,
            basis: &basis,
        },
        0,
    )
}

/// Quadratic prior term `λ₂ ‖W(x − p)‖²`; `weights_sq` holds `W²`.
pub struct PriorTerm<'a> {
    pub lambda2: f64,
    pub target: &'a [f64],
    pub weights_sq: Option<&'a [f64]>,
}

impl PriorTerm<'_> {
    fn max_weight_sq(&self) -> f64 {
        self.weights_sq
            .map(|w| w.iter().copied().fold(0.0, f64::max))
            .unwrap_or(1.0)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s: f64 = match self.weights_sq {
            Some(w2) => x
                .iter()
                .zip(self.target)
                .zip(w2)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum(),
            None => x.iter().zip(self.target).map(|(a, b)| (a - b) * (a - b)).sum(),
        };
        self.lambda2 * s
    }
}

pub struct CompositeProblem<'a> {
    pub projector: &'a Projector,
    pub basis: &'a Basis,
    pub measurements: &'a [f64],
    pub lambda1: f64,
    pub prior: Option<PriorTerm<'a>>,
}

#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub theta: Vec<f64>,
    /// F after every accepted iterate, starting with F(θ⁰)
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

/// A coefficient vector with its image `Ψθ` and projections `ΦΨθ`.
#[derive(Clone)]
struct Point {
    theta: Vec<f64>,
    x: Vec<f64>,
    ax: Vec<f64>,
}

impl Point {
    /// `p + a (q − p) + b (p − r)`, applied to all three parts.
    fn extrapolate(p: &Point, q: &Point, r: &Point, a: f64, b: f64) -> Point {
        let f = |pv: &[f64], qv: &[f64], rv: &[f64]| -> Vec<f64> {
            pv.iter()
                .zip(qv)
                .zip(rv)
                .map(|((p, q), r)| p + a * (q - p) + b * (p - r))
                .collect()
        };
        Point {
            theta: f(&p.theta, &q.theta, &r.theta),
            x: f(&p.x, &q.x, &r.x),
            ax: f(&p.ax, &q.ax, &r.ax),
        }
    }
}

impl CompositeProblem<'_> {
    fn point(&self, theta: Vec<f64>) -> Point {
        let x = self.basis.synthesize_raw(&theta);
        let ax = self.projector.forward_raw(&x);
        Point { theta, x, ax }
    }

    /// Smooth part of F from an image and its projections.
    fn smooth_at(&self, x: &[f64], ax: &[f64]) -> f64 {
        let mut f: f64 = ax
            .iter()
            .zip(self.measurements)
            .map(|(a, y)| (a - y) * (a - y))
            .sum();
        if let Some(p) = &self.prior {
            f += p.value(x);
        }
        f
    }

    fn grad_at(&self, x: &[f64], ax: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = ax.iter().zip(self.measurements).map(|(a, y)| a - y).collect();
        let mut gx = self.projector.back_raw(&r);
        gx.iter_mut().for_each(|g| *g *= 2.0);
        if let Some(p) = &self.prior {
            let c = 2.0 * p.lambda2;
            match p.weights_sq {
                Some(w2) => {
                    for (((g, a), b), w) in gx.iter_mut().zip(x).zip(p.target).zip(w2) {
                        *g += c * w * (a - b);
                    }
                }
                None => {
                    for ((g, a), b) in gx.iter_mut().zip(x).zip(p.target) {
                        *g += c * (a - b);
                    }
                }
            }
        }
        self.basis.analyze_raw(&gx)
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        let x = self.basis.synthesize_raw(theta);
        let ax = self.projector.forward_raw(&x);
        self.smooth_at(&x, &ax) + self.lambda1 * l1(theta)
    }

    /// Lipschitz constant of the smooth gradient given L̂ for `ΨᵀΦᵀΦΨ`.
    pub fn gradient_lipschitz(&self, operator_estimate: f64) -> f64 {
        let prior = self
            .prior
            .as_ref()
            .map(|p| p.lambda2 * p.max_weight_sq())
            .unwrap_or(0.0);
        2.0 * (operator_estimate + prior)
    }

    /// Proximal gradient from `theta0`.
    pub fn solve(
        &self,
        theta0: Vec<f64>,
        params: &SolverParams,
        operator_estimate: f64,
    ) -> Result<ProxOutcome> {
        params.validate()?;
        let backtrack = params.step_rule == StepRule::Backtracking;
        let mut lip = self.gradient_lipschitz(operator_estimate).max(1e-300);
        let lam = self.lambda1;

        let mut cur = self.point(theta0);
        let mut f_cur = self.smooth_at(&cur.x, &cur.ax) + lam * l1(&cur.theta);
        let mut history = vec![f_cur];
        let mut z = cur.clone();
        let mut t = 1.0f64;
        let mut iterations = 0;

        for _ in 0..params.max_iters {
            iterations += 1;
            let fz = self.smooth_at(&z.x, &z.ax);
            let gz = self.grad_at(&z.x, &z.ax);
            let mut tries = 0;
            let (cand, f_cand) = loop {
                let step = 1.0 / lip;
                let theta: Vec<f64> = z
                    .theta
                    .iter()
                    .zip(&gz)
                    .map(|(zi, gi)| soft_threshold(zi - step * gi, step * lam))
                    .collect();
                let cand = self.point(theta);
                let fc = self.smooth_at(&cand.x, &cand.ax);
                if !backtrack {
                    break (cand, fc);
                }
                let mut lin = 0.0;
                let mut quad = 0.0;
                for ((c, zi), gi) in cand.theta.iter().zip(&z.theta).zip(&gz) {
                    let d = c - zi;
                    lin += gi * d;
                    quad += d * d;
                }
                let bound = fz + lin + 0.5 * lip * quad;
                if fc <= bound + 1e-12 * fz.abs().max(1.0) {
                    break (cand, fc);
                }
                tries += 1;
                if tries > 60 {
                    return Err(Error::solver("backtracking failed to find a descent step"));
                }
                lip *= 2.0;
            };
            let f_cand_total = f_cand + lam * l1(&cand.theta);
            if !f_cand_total.is_finite() {
                return Err(Error::solver("proximal gradient produced a non-finite objective"));
            }

            let accepted = f_cand_total <= f_cur || !params.accelerate;
            let prev = if accepted {
                let prev = std::mem::replace(&mut cur, cand.clone());
                f_cur = f_cand_total;
                prev
            } else {
                cur.clone()
            };
            history.push(f_cur);

            if params.accelerate {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                z = Point::extrapolate(&cur, &cand, &prev, t / t_next, (t - 1.0) / t_next);
                t = t_next;
            } else {
                z = cur.clone();
            }

            if accepted && relative_change(&cur.theta, &prev.theta) < params.tol {
                break;
            }
        }
        Ok(ProxOutcome {
            theta: cur.theta,
            objective: history,
            iterations,
        })
    }
}

/// CS reconstruction in basis `basis`, started from the FBP image.
pub fn cs_reconstruct(
    sino: &Sinogram,
    width: usize,
    height: usize,
    basis: BasisKind,
    params: &SolverParams,
) -> Result<Image> {
    Ok(cs_solve(sino, width, height, basis, params)?.1)
}

pub(crate) fn cs_solve(
    sino: &Sinogram,
    width: usize,
    height: usize,
    basis: BasisKind,
    params: &SolverParams,
) -> Result<(ProxOutcome, Image)> {
    params.validate()?;
    let proj = Projector::new(width, height, sino.geometry())?;
    let basis = Basis::new(basis, width, height)?;
    let lip = power_iteration(
        &BasisProjector {
            projector: &proj,
            basis: &basis,
        },
        params.seed,
    )?;
    let init = fbp(sino, width, height, Filter::RamLak)?;
    let problem = CompositeProblem {
        projector: &proj,
        basis: &basis,
        measurements: sino.data(),
        lambda1: params.lambda1,
        prior: None,
    };
    let out = problem.solve(basis.analyze_raw(init.data()), params, lip)?;
    let img = Image::from_vec(width, height, basis.synthesize_raw(&out.theta))?;
    Ok((out, img))
}
