//! Error tables, the decode benchmark, and the sensitivity example.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brs::{generator_matrix, CodeParams};
use crate::error::{Error, Result};
use crate::field::{choose_field, PointSet};
use crate::inverse::{error_report, estimate_inverse, reference_inverse, theoretical_bounds, ErrorReport};
use crate::linalg::{gaussian_matrix, max_abs, Mat};
use crate::lsq::{Method, SolverConfig, SpectralSd, StepRule};
use crate::protocol::{allocate_tasks, column_blocks, coordinator_decode, naive_decode, worker_encode, Generator};

/// Orders of magnitude printed in the SD table, for ε = 1e-1..1e-5.
pub const REFERENCE_SD_ORDERS: [i32; 5] = [-2, -5, -7, -9, -12];
/// CG table, `err_ℓ2` and `err_F` rows, for ε = 1e-3..1e-7.
pub const REFERENCE_CG_ORDERS: [i32; 5] = [-3, -5, -8, -11, -12];
/// CG table, `err_rF` row.
pub const REFERENCE_CG_RF_ORDERS: [i32; 5] = [-3, -5, -7, -10, -12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    #[serde(default = "default_order")]
    pub n: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// entries are `scale · 𝒩(0,1)`
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_sd_eps")]
    pub sd_epsilons: Vec<f64>,
    #[serde(default = "default_cg_eps")]
    pub cg_epsilons: Vec<f64>,
    #[serde(default = "default_sd_cap")]
    pub sd_max_iters: usize,
    /// `None` keeps the library default of N iterations
    #[serde(default = "default_cg_cap")]
    pub cg_max_iters: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_order() -> usize {
    100
}
fn default_trials() -> usize {
    20
}
fn default_scale() -> f64 {
    50.0
}
fn default_sd_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}
fn default_cg_eps() -> Vec<f64> {
    vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
}
fn default_sd_cap() -> usize {
    1_000_000_000_000
}

fn default_cg_cap() -> Option<usize> {
    Some(100_000)
}

impl Default for TableSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: Method,
    pub epsilon: f64,
    pub trials: usize,
    pub mean_err_l2: f64,
    pub mean_err_f: f64,
    pub mean_err_rf: f64,
    pub mean_iterations: f64,
    /// columns that stopped on the iteration cap rather than the tolerance
    pub unconverged_columns: usize,
    pub mean_bound_err_f: f64,
    pub mean_bound_err_rf: Option<f64>,
    /// trials whose errors sat within their own bound
    pub trials_within_bound: usize,
}

/// Seeded `scale·𝒩(0,1)` test matrix of one trial.
pub fn trial_matrix(n: usize, scale: f64, seed: u64, trial: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(trial as u64));
    gaussian_matrix(n, n, scale, &mut rng)
}

#[derive(Clone)]
struct TrialOutcome {
    report: ErrorReport,
    iterations: f64,
    unconverged: usize,
    bound_f: f64,
    bound_rf: Option<f64>,
    within: bool,
}

fn outcome(a: &Mat, approx: &Mat, reference: &Mat, eps: f64, method: Method, iters: &[usize], conv: &[bool]) -> Result<TrialOutcome> {
    let report = error_report(approx, reference)?;
    let b = theoretical_bounds(a, eps, method);
    let within = report.err_f <= b.err_f && b.err_rf.is_none_or(|r| report.err_rf <= r);
    Ok(TrialOutcome {
        report,
        iterations: iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64,
        unconverged: conv.iter().filter(|c| !**c).count(),
        bound_f: b.err_f,
        bound_rf: b.err_rf,
        within,
    })
}

fn summarize(method: Method, eps: f64, outs: &[TrialOutcome]) -> TableRow {
    let t = outs.len() as f64;
    let mean = |f: &dyn Fn(&TrialOutcome) -> f64| outs.iter().map(f).sum::<f64>() / t;
    TableRow {
        method,
        epsilon: eps,
        trials: outs.len(),
        mean_err_l2: mean(&|o| o.report.err_l2),
        mean_err_f: mean(&|o| o.report.err_f),
        mean_err_rf: mean(&|o| o.report.err_rf),
        mean_iterations: mean(&|o| o.iterations),
        unconverged_columns: outs.iter().map(|o| o.unconverged).sum(),
        mean_bound_err_f: mean(&|o| o.bound_f),
        mean_bound_err_rf: outs.iter().map(|o| o.bound_rf).sum::<Option<f64>>().map(|s| s / t),
        trials_within_bound: outs.iter().filter(|o| o.within).count(),
    }
}

/// SD rows for every ε from one SD run per trial, checkpointed as the
/// gradient norm passes each tolerance.
pub fn sd_rows(spec: &TableSpec) -> Result<Vec<TableRow>> {
    let mut eps = spec.sd_epsilons.clone();
    eps.sort_by(|x, y| y.total_cmp(x));
    let per_trial = (0..spec.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<TrialOutcome>> {
            let a = trial_matrix(spec.n, spec.scale, spec.seed, trial);
            let reference = reference_inverse(&a)?;
            let sd = SpectralSd::new(&a)?;
            let cps = sd.solve_many(&Mat::identity(spec.n, spec.n), &eps, spec.sd_max_iters, StepRule::ExactLineSearch)?;
            cps.iter()
                .map(|cp| {
                    let iters: Vec<usize> = cp.traces.iter().map(|t| t.iterations).collect();
                    let conv: Vec<bool> = cp.traces.iter().map(|t| t.converged).collect();
                    outcome(&a, &cp.solution, &reference, cp.epsilon, Method::Sd, &iters, &conv)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(eps
        .iter()
        .enumerate()
        .map(|(e, &epsilon)| {
            let outs: Vec<TrialOutcome> = per_trial.iter().map(|t| t[e].clone()).collect();
            summarize(Method::Sd, epsilon, &outs)
        })
        .collect())
}

pub fn cg_rows(spec: &TableSpec) -> Result<Vec<TableRow>> {
    let mut eps = spec.cg_epsilons.clone();
    eps.sort_by(|x, y| y.total_cmp(x));
    let mut rows = Vec::new();
    for &epsilon in &eps {
        let mut cfg = SolverConfig::cg(epsilon);
        cfg.max_iters = spec.cg_max_iters;
        let outs = (0..spec.trials)
            .map(|trial| {
                let a = trial_matrix(spec.n, spec.scale, spec.seed, trial);
                let reference = reference_inverse(&a)?;
                let est = estimate_inverse(&a, &cfg, None)?;
                let iters: Vec<usize> = est.per_column_traces.iter().map(|t| t.iterations).collect();
                let conv: Vec<bool> = est.per_column_traces.iter().map(|t| t.converged).collect();
                outcome(&a, &est.matrix, &reference, epsilon, Method::Cg, &iters, &conv)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize(Method::Cg, epsilon, &outs));
    }
    Ok(rows)
}

pub fn run_tables(spec: &TableSpec) -> Result<Vec<TableRow>> {
    if spec.n == 0 || spec.trials == 0 {
        return Err(Error::Config("tables need n >= 1 and trials >= 1".into()));
    }
    let mut rows = sd_rows(spec)?;
    rows.extend(cg_rows(spec)?);
    Ok(rows)
}

/// Exponent of a value in scientific notation, the sense of "O(10^k)".
pub fn order_of(x: f64) -> i32 {
    x.abs().log10().floor() as i32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    #[serde(default = "default_bench_n")]
    pub n: usize,
    #[serde(default = "default_bench_s")]
    pub s_values: Vec<usize>,
    /// columns per block; the decoded matrix is kT × kT
    #[serde(default = "default_bench_t")]
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_bench_n() -> usize {
    200
}
fn default_bench_s() -> Vec<usize> {
    vec![40, 80, 120]
}
fn default_bench_t() -> usize {
    2
}

impl Default for BenchSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub t_structured: f64,
    pub t_naive: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDetail {
    pub row: BenchRow,
    /// complex multiply-adds, leading terms only
    pub ops_structured: f64,
    pub ops_naive: f64,
    pub balanced_mask: bool,
    pub p_condition: f64,
    pub gi_condition: f64,
    pub structured_err_rf: Option<f64>,
    pub naive_err_rf: Option<f64>,
    pub error: Option<String>,
}

/// Generator used by the benchmark: the balanced BRS code when `n | kd`,
/// otherwise the unbalanced mask of the same `d`.
pub fn bench_generator(n: usize, k: usize, seed: u64) -> Result<crate::brs::BrsGenerator> {
    let params = CodeParams::brs(n, k).or_else(|_| CodeParams::brs_unbalanced(n, k))?;
    let spec = choose_field(n, 1, seed)?;
    generator_matrix(&params, &PointSet::build(spec, n)?)
}

/// Times the streaming decode against the materialized `I_T ⊗ G_I^{-1}`
/// decode on the same responses (the first k non-straggling workers).
pub fn bench_one(n: usize, s: usize, t: usize, seed: u64) -> Result<BenchDetail> {
    if s >= n {
        return Err(Error::Config(format!("s={s} must be below n={n}")));
    }
    let k = n - s;
    let brs = bench_generator(n, k, seed)?;
    let balanced = brs.params.balanced;
    let p_condition = brs.p_condition;
    let gen: Generator = brs.into();
    let order = k * t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(n as u64 * 7919 + s as u64));
    let x = gaussian_matrix(order, order, 1.0, &mut rng);
    let tasks = allocate_tasks(&gen);
    let blocks = column_blocks(&x, k);
    // stragglers are the last s workers
    let encs = (0..k).map(|w| worker_encode(&blocks, &gen, &tasks, w)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<usize> = (0..k).collect();
    let gi_condition = crate::linalg::condition_number(&crate::brs::rows_of(gen.matrix(), &rows));

    let t0 = Instant::now();
    let structured = coordinator_decode(&encs, &gen);
    let t_structured = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let naive = naive_decode(&encs, &gen);
    let t_naive = t0.elapsed().as_secs_f64();

    let (kf, tf, nf) = (k as f64, t as f64, order as f64);
    let ops_structured = tf * nf * (kf * kf + kf * kf);
    let ops_naive = kf * kf * kf + (kf * tf) * (kf * tf) * nf;
    let rel = |m: &Mat| crate::linalg::relative_frobenius(m, &x);
    let (max_abs_diff, error) = match (&structured, &naive) {
        (Ok(a), Ok(b)) => (max_abs(&(a - b)), None),
        (Err(e), _) | (_, Err(e)) => (f64::NAN, Some(e.to_string())),
    };
    Ok(BenchDetail {
        row: BenchRow { n, k, s, t_structured, t_naive, max_abs_diff },
        ops_structured,
        ops_naive,
        balanced_mask: balanced,
        p_condition,
        gi_condition,
        structured_err_rf: structured.as_ref().ok().map(rel),
        naive_err_rf: naive.as_ref().ok().map(rel),
        error,
    })
}

pub fn bench_decode(spec: &BenchSpec) -> Result<Vec<BenchDetail>> {
    spec.s_values.iter().map(|&s| bench_one(spec.n, s, spec.t, spec.seed)).collect()
}

/// The two 4×4 matrices that differ only in their last two columns.
pub fn sensitivity_matrices() -> (Mat, Mat) {
    let q1 = Mat::from_row_slice(4, 4, &[6., 2., 2., -5., 0., -1., 2., 0., -5., 6., -1., -3., 5., -3., -4., 3.]);
    let q2 = Mat::from_row_slice(4, 4, &[6., 2., -1., -3., 0., -1., 5., 6., -5., 6., 3., -2., 5., -3., 1., 6.]);
    (q1, q2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub direct_norm_q1: f64,
    pub direct_norm_q2: f64,
    pub direct_norm_sq_q1: f64,
    pub direct_norm_sq_q2: f64,
    pub direct_support_diff: usize,
    pub estimated_norm_q1: f64,
    pub estimated_norm_q2: f64,
    pub estimated_support_diff: usize,
    pub epsilon: f64,
}

pub fn sensitivity(epsilon: f64) -> Result<SensitivityReport> {
    let (q1, q2) = sensitivity_matrices();
    let (d1, d2) = (reference_inverse(&q1)?, reference_inverse(&q2)?);
    let cfg = SolverConfig::cg(epsilon).with_max_iters(400);
    let (e1, e2) = (estimate_inverse(&q1, &cfg, None)?.matrix, estimate_inverse(&q2, &cfg, None)?.matrix);
    Ok(SensitivityReport {
        direct_norm_q1: d1.norm(),
        direct_norm_q2: d2.norm(),
        direct_norm_sq_q1: d1.norm_squared(),
        direct_norm_sq_q2: d2.norm_squared(),
        direct_support_diff: error_report(&d1, &d2)?.support_diff,
        estimated_norm_q1: e1.norm(),
        estimated_norm_q2: e2.norm(),
        estimated_support_diff: error_report(&e1, &e2)?.support_diff,
        epsilon,
    })
}
