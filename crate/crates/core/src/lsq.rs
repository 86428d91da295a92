//! Least-squares engines for `min ‖Ab − y‖²`: steepest descent, CG on the
//! normal equations, scalar preconditioning, and a spectral form of SD used
//! for long runs.

use nalgebra::{DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigma_min_inverse_power, singular_values, spectral_norm, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sd,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    #[default]
    ExactLineSearch,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub epsilon: f64,
    /// `None` means 10·M for SD and M for CG
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub step_rule: StepRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_history: bool,
}

impl SolverConfig {
    pub fn sd(epsilon: f64) -> Self {
        SolverConfig {
            method: Method::Sd,
            epsilon,
            max_iters: None,
            step_rule: StepRule::ExactLineSearch,
            seed: 0,
            record_history: false,
        }
    }

    pub fn cg(epsilon: f64) -> Self {
        SolverConfig { method: Method::Cg, ..Self::sd(epsilon) }
    }

    pub fn with_max_iters(mut self, m: usize) -> Self {
        self.max_iters = Some(m);
        self
    }

    pub fn iteration_cap(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or(match self.method {
            Method::Sd => 10 * dim,
            Method::Cg => dim,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == Some(0) {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let StepRule::Fixed(x) = self.step_rule {
            if !(x > 0.0) {
                return Err(Error::Config(format!("fixed step must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub final_residual: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
}

pub fn solve(a: &Mat, y: &DVector<f64>, cfg: &SolverConfig) -> Result<(DVector<f64>, SolveTrace)> {
    match cfg.method {
        Method::Sd => sd_solve(a, y, cfg),
        Method::Cg => cg_solve_normal(a, y, cfg),
    }
}

fn check_shapes(a: &Mat, y: &DVector<f64>) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(Error::Shape(format!("A is {}x{} but y has length {}", a.nrows(), a.ncols(), y.len())));
    }
    Ok(())
}

/// Steepest descent on `f(b) = ‖Ab − y‖²` from `b = 0`; stops once `‖∇f‖ ≤ ε`.
pub fn sd_solve(a: &Mat, y: &DVector<f64>, cfg: &SolverConfig) -> Result<(DVector<f64>, SolveTrace)> {
    check_shapes(a, y)?;
    cfg.validate()?;
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::Parameter("A is the zero matrix".into()));
    }
    let cap = cfg.iteration_cap(a.ncols());
    let mut b = DVector::zeros(a.ncols());
    let mut r = -y.clone();
    let mut history = Vec::new();
    let mut t = 0;
    loop {
        let mut g = a.tr_mul(&r) * 2.0;
        let mut gn = g.norm();
        if gn <= cfg.epsilon || t == cap {
            // the residual is carried by recurrence; confirm against a fresh one
            r = a * &b - y;
            g = a.tr_mul(&r) * 2.0;
            gn = g.norm();
            if gn <= cfg.epsilon || t == cap {
                if cfg.record_history {
                    history.push(r.norm_squared());
                }
                let trace = SolveTrace {
                    iterations: t,
                    final_grad_norm: gn,
                    final_residual: r.norm(),
                    converged: gn <= cfg.epsilon,
                    objective_history: history,
                };
                return Ok((b, trace));
            }
        }
        if cfg.record_history {
            history.push(r.norm_squared());
        }
        let ag = a * &g;
        let xi = match cfg.step_rule {
            StepRule::ExactLineSearch => gn * gn / (2.0 * ag.norm_squared()),
            StepRule::Fixed(x) => x,
        };
        b.axpy(-xi, &g, 1.0);
        r.axpy(-xi, &ag, 1.0);
        t += 1;
        if !xi.is_finite() || !b.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: t, column: None });
        }
        if t % 256 == 0 {
            r = a * &b - y;
        }
    }
}

/// CGNR on `AᵀA b = Aᵀy` from `b = 0`; stops once `‖b_t − b_{t−1}‖ ≤ ε`.
pub fn cg_solve_normal(a: &Mat, y: &DVector<f64>, cfg: &SolverConfig) -> Result<(DVector<f64>, SolveTrace)> {
    check_shapes(a, y)?;
    cfg.validate()?;
    let cap = cfg.iteration_cap(a.ncols());
    let scale = a.norm_squared();
    let mut b = DVector::zeros(a.ncols());
    let mut r = a.tr_mul(y);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut history = Vec::new();
    let mut t = 0;
    let mut converged = rr == 0.0;
    while !converged && t < cap {
        let ap = a * &p;
        let curv = ap.norm_squared();
        if !(curv > f64::EPSILON * f64::EPSILON * scale * p.norm_squared()) {
            return Err(Error::NumericalRank { iteration: t + 1 });
        }
        let alpha = rr / curv;
        b.axpy(alpha, &p, 1.0);
        t += 1;
        if !b.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: t, column: None });
        }
        if cfg.record_history {
            history.push((a * &b - y).norm_squared());
        }
        if alpha * p.norm() <= cfg.epsilon {
            converged = true;
            break;
        }
        r.axpy(-alpha, &a.tr_mul(&ap), 1.0);
        let rr_next = r.norm_squared();
        if rr_next == 0.0 {
            converged = true;
            break;
        }
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    let res = a * &b - y;
    let grad = a.tr_mul(&res) * 2.0;
    let trace = SolveTrace {
        iterations: t,
        final_grad_norm: grad.norm(),
        final_residual: res.norm(),
        converged,
        objective_history: history,
    };
    Ok((b, trace))
}

#[derive(Debug, Clone)]
pub struct Preconditioned {
    pub p: f64,
    pub scaled: Mat,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// `p = 1/σ_min(A)`; results computed on `pA` are multiplied by `p` afterwards.
pub fn precondition_scale(a: &Mat) -> Result<Preconditioned> {
    let (lo, hi) = if a.nrows().max(a.ncols()) <= 512 {
        let s = singular_values(a);
        (*s.last().unwrap_or(&0.0), *s.first().unwrap_or(&0.0))
    } else {
        (sigma_min_inverse_power(a, 1e-6)?, spectral_norm(a, 1e-8))
    };
    if !(lo >= 1e-13 * hi) || hi == 0.0 {
        return Err(Error::Singular(format!("sigma_min {lo:.3e} vs sigma_max {hi:.3e}")));
    }
    let p = 1.0 / lo;
    Ok(Preconditioned { p, scaled: a * p, sigma_min: lo, sigma_max: hi })
}

/// SD with exact line search rewritten in the singular basis of `A`.
///
/// With `A = UΣVᵀ` and `b = Vz`, the gradient in `z` evolves as
/// `g ← g ∘ (1 − 2ξλ)`, `λ = σ²`, so one iteration costs O(M) per
/// right-hand side and the iterates are those of [`sd_solve`] up to rounding.
#[derive(Debug, Clone)]
pub struct SpectralSd {
    u: Mat,
    sigma: Vec<f64>,
    v: Mat,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epsilon: f64,
    pub solution: Mat,
    pub traces: Vec<SolveTrace>,
}

impl SpectralSd {
    pub fn new(a: &Mat) -> Result<Self> {
        if a.nrows() < a.ncols() {
            return Err(Error::Shape("spectral SD needs N >= M".into()));
        }
        let svd = SVD::new(a.clone(), true, true);
        let u = svd.u.ok_or_else(|| Error::Singular("SVD failed".into()))?;
        let vt = svd.v_t.ok_or_else(|| Error::Singular("SVD failed".into()))?;
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let hi = sigma.iter().cloned().fold(0.0, f64::max);
        if sigma.iter().any(|&s| !(s > 1e-13 * hi)) {
            return Err(Error::Singular("A is rank deficient".into()));
        }
        Ok(SpectralSd { u, sigma, v: vt.transpose() })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// Runs SD on every column of `rhs`, snapshotting each column the first
    /// time its gradient norm drops to each tolerance in `epsilons`.
    pub fn solve_many(&self, rhs: &Mat, epsilons: &[f64], max_iters: usize, step: StepRule) -> Result<Vec<Checkpoint>> {
        self.solve_many_with(rhs, epsilons, max_iters, step, true)
    }

    /// `jump = false` forces step-by-step iteration throughout.
    pub fn solve_many_with(
        &self,
        rhs: &Mat,
        epsilons: &[f64],
        max_iters: usize,
        step: StepRule,
        jump: bool,
    ) -> Result<Vec<Checkpoint>> {
        let r = self.sigma.len();
        let m = rhs.ncols();
        if rhs.nrows() != self.u.nrows() {
            return Err(Error::Shape(format!("rhs has {} rows, A has {}", rhs.nrows(), self.u.nrows())));
        }
        let mut eps: Vec<f64> = epsilons.to_vec();
        eps.sort_by(|x, y| y.total_cmp(x));
        let c = self.u.tr_mul(rhs); // r × m
        let lam: Vec<f64> = self.sigma.iter().map(|s| s * s).collect();

        let snaps: Vec<Vec<Snapshot>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let g0: Vec<f64> = (0..r).map(|i| -2.0 * self.sigma[i] * c[(i, j)]).collect();
                sd_column(g0, &lam, &eps, max_iters, step, jump).map_err(|e| match e {
                    Error::Divergence { iteration, .. } => Error::Divergence { iteration, column: Some(j) },
                    other => other,
                })
            })
            .collect::<Result<_>>()?;

        let mut out = Vec::with_capacity(eps.len());
        for (e_idx, &epsilon) in eps.iter().enumerate() {
            let mut z = Mat::zeros(r, m);
            let mut traces = Vec::with_capacity(m);
            for j in 0..m {
                let snap = &snaps[j][e_idx];
                let mut res2 = (rhs.column(j).norm_squared() - c.column(j).norm_squared()).max(0.0);
                for i in 0..r {
                    // g = 2(λz − σc)  ⇒  z = c/σ + g/(2λ), and σz − c = g/(2σ)
                    z[(i, j)] = c[(i, j)] / self.sigma[i] + snap.g[i] / (2.0 * lam[i]);
                    let e = snap.g[i] / (2.0 * self.sigma[i]);
                    res2 += e * e;
                }
                traces.push(SolveTrace {
                    iterations: snap.iterations,
                    final_grad_norm: snap.grad_norm,
                    final_residual: res2.sqrt(),
                    converged: snap.grad_norm <= epsilon,
                    objective_history: Vec::new(),
                });
            }
            out.push(Checkpoint { epsilon, solution: &self.v * z, traces });
        }
        Ok(out)
    }

    pub fn solve(&self, y: &DVector<f64>, cfg: &SolverConfig) -> Result<(DVector<f64>, SolveTrace)> {
        cfg.validate()?;
        let rhs = Mat::from_column_slice(y.len(), 1, y.as_slice());
        let mut cps = self.solve_many(&rhs, &[cfg.epsilon], cfg.iteration_cap(self.sigma.len()), cfg.step_rule)?;
        let cp = cps.pop().expect("one checkpoint");
        Ok((cp.solution.column(0).into_owned(), cp.traces.into_iter().next().unwrap()))
    }
}

#[derive(Debug, Clone)]
struct Snapshot {
    g: Vec<f64>,
    iterations: usize,
    grad_norm: f64,
}

/// Relative agreement of alternate step sizes that counts as a 2-cycle.
const CYCLE_TOL: f64 = 1e-14;
/// Gradient components below this are flushed to zero; subnormal arithmetic
/// is slow and the values sit far below the rounding error of the sums.
const FLUSH: f64 = 1e-280;

fn norm_sq(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum()
}

/// SD on one right-hand side in the singular basis, with gradient `g` and
/// eigenvalues `lam` of `AᵀA`.
///
/// Exact line search settles into alternating steps `a, b`. Once two
/// consecutive pairs agree to `CYCLE_TOL`, the gradient after `2m` more
/// steps is `g∘p^m` with `p = (1 − aλ)(1 − bλ)`; every term of its norm is
/// nonincreasing in `m` when `|p| ≤ 1`, so the first iteration below each
/// tolerance is found by bisection instead of stepping.
fn sd_column(mut g: Vec<f64>, lam: &[f64], eps: &[f64], max_iters: usize, step: StepRule, jump: bool) -> Result<Vec<Snapshot>> {
    let mut snaps: Vec<Snapshot> = Vec::with_capacity(eps.len());
    let mut t = 0usize;
    let mut gg = norm_sq(&g);
    let mut steps: Vec<f64> = Vec::with_capacity(4);
    let record = |snaps: &mut Vec<Snapshot>, g: &[f64], gg: f64, t: usize, force: bool| {
        while snaps.len() < eps.len() && (gg.sqrt() <= eps[snaps.len()] || force) {
            snaps.push(Snapshot { g: g.to_vec(), iterations: t, grad_norm: gg.sqrt() });
        }
    };
    record(&mut snaps, &g, gg, 0, false);
    while snaps.len() < eps.len() && t < max_iters {
        if gg == 0.0 {
            break;
        }
        let two_xi = match step {
            StepRule::ExactLineSearch => {
                let glg: f64 = g.iter().zip(lam).map(|(v, l)| l * v * v).sum();
                gg / glg
            }
            StepRule::Fixed(x) => 2.0 * x,
        };
        let cycle = jump
            && match step {
                StepRule::Fixed(_) => true,
                StepRule::ExactLineSearch => {
                    steps.len() == 3
                        && (two_xi - steps[1]).abs() <= CYCLE_TOL * two_xi
                        && (steps[2] - steps[0]).abs() <= CYCLE_TOL * steps[2]
                }
            };
        if cycle {
            // the step after `two_xi` repeats the one before it
            let (a, b) = (two_xi, if steps.is_empty() { two_xi } else { steps[steps.len() - 1] });
            if let Some((s, g_new)) = cycle_jump(&g, lam, a, b, eps[snaps.len()], max_iters - t) {
                t += s;
                g = g_new;
                gg = norm_sq(&g);
                steps.clear();
                if !gg.is_finite() {
                    return Err(Error::Divergence { iteration: t, column: None });
                }
                record(&mut snaps, &g, gg, t, false);
                continue;
            }
        }
        for (v, l) in g.iter_mut().zip(lam) {
            let nv = *v * (1.0 - two_xi * l);
            *v = if nv.abs() < FLUSH { 0.0 } else { nv };
        }
        t += 1;
        gg = norm_sq(&g);
        if !gg.is_finite() {
            return Err(Error::Divergence { iteration: t, column: None });
        }
        if steps.len() == 3 {
            steps.remove(0);
        }
        steps.push(two_xi);
        record(&mut snaps, &g, gg, t, false);
    }
    record(&mut snaps, &g, gg, t, true);
    Ok(snaps)
}

fn pow_u64(mut x: f64, mut m: u64) -> f64 {
    let mut acc = 1.0;
    while m > 0 {
        if m & 1 == 1 {
            acc *= x;
        }
        x *= x;
        m >>= 1;
    }
    acc
}

/// Advances a 2-cycle `a, b, a, …` to the first iterate with gradient norm
/// at most `eps`, or by `budget` steps. `None` when some `|p_i| > 1`.
fn cycle_jump(g: &[f64], lam: &[f64], a: f64, b: f64, eps: f64, budget: usize) -> Option<(usize, Vec<f64>)> {
    let q: Vec<f64> = lam.iter().map(|l| 1.0 - a * l).collect();
    let p: Vec<f64> = lam.iter().zip(&q).map(|(l, qi)| qi * (1.0 - b * l)).collect();
    if g.iter().zip(&p).any(|(v, pi)| *v != 0.0 && pi.abs() > 1.0) {
        return None;
    }
    let state = |s: usize| -> Vec<f64> {
        let m = (s / 2) as u64;
        g.iter()
            .zip(&p)
            .zip(&q)
            .map(|((v, pi), qi)| {
                let x = v * pow_u64(*pi, m);
                let x = if s % 2 == 1 { x * qi } else { x };
                if x.abs() < FLUSH { 0.0 } else { x }
            })
            .collect()
    };
    let below = |s: usize| norm_sq(&state(s)).sqrt() <= eps;
    // first s ≥ 1 of the given parity with norm ≤ eps, within budget
    let first = |odd: usize| -> Option<usize> {
        let lo_m = if odd == 1 { 0 } else { 1 };
        let hi_m = (budget.checked_sub(odd)?) / 2;
        if hi_m < lo_m || !below(2 * hi_m + odd) {
            return None;
        }
        let (mut lo, mut hi) = (lo_m, hi_m);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if below(2 * mid + odd) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(2 * lo + odd)
    };
    let s = match (first(0), first(1)) {
        (Some(x), Some(y)) => x.min(y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => budget,
    };
    if s == 0 {
        return None;
    }
    Some((s, state(s)))
}
