//! Column-wise inverse and pseudoinverse estimation, error metrics, bounds,
//! and block partitioning.

use std::ops::Range;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, lu_inverse, singular_values, spectral_norm, Mat};
use crate::lsq::{solve, Method, SolveTrace, SolverConfig};

pub const SUPPORT_DIFF_TOL: f64 = 1e-9;
const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverseEstimate {
    pub matrix: Mat,
    pub columns: Range<usize>,
    pub per_column_traces: Vec<SolveTrace>,
    pub config: SolverConfig,
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// Column `i` of the result minimizes `‖Ab − e_i‖²`; `columns` restricts the
/// work to one consecutive block.
pub fn estimate_inverse(a: &Mat, cfg: &SolverConfig, columns: Option<Range<usize>>) -> Result<InverseEstimate> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::Shape(format!("A is {}x{}, expected square", n, a.ncols())));
    }
    cfg.validate()?;
    let cols = columns.unwrap_or(0..n);
    if cols.end > n || cols.start > cols.end {
        return Err(Error::Parameter(format!("column range {cols:?} outside 0..{n}")));
    }
    if n <= 512 {
        let kappa = condition_number(a);
        if !(kappa < CONDITION_LIMIT) {
            return Err(Error::Singular(format!("condition number {kappa:.3e} exceeds {CONDITION_LIMIT:.0e}")));
        }
    }
    let solved: Vec<Result<(DVector<f64>, SolveTrace)>> = cols
        .clone()
        .into_par_iter()
        .map(|i| {
            solve(a, &unit(n, i), cfg).map_err(|e| match e {
                Error::Divergence { iteration, .. } => Error::Divergence { iteration, column: Some(i) },
                other => other,
            })
        })
        .collect();
    let mut matrix = Mat::zeros(n, cols.len());
    let mut traces = Vec::with_capacity(cols.len());
    for (c, res) in solved.into_iter().enumerate() {
        let (b, tr) = res?;
        matrix.set_column(c, &b);
        traces.push(tr);
    }
    Ok(InverseEstimate { matrix, columns: cols, per_column_traces: traces, config: cfg.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub err_l2: f64,
    pub err_f: f64,
    pub err_rf: f64,
    pub support_diff: usize,
}

pub fn error_report(approx: &Mat, reference: &Mat) -> Result<ErrorReport> {
    if approx.shape() != reference.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", approx.shape(), reference.shape())));
    }
    let diff = approx - reference;
    let err_f = diff.norm();
    let err_l2 = spectral_norm(&diff, 1e-8);
    let denom = reference.norm();
    let err_rf = if denom > 0.0 { err_f / denom } else { err_f };
    let support_diff = diff.iter().filter(|x| x.abs() > SUPPORT_DIFF_TOL).count();
    Ok(ErrorReport { err_l2, err_f, err_rf, support_diff })
}

/// Direct inverse used as the reference in every report.
pub fn reference_inverse(a: &Mat) -> Result<Mat> {
    lu_inverse(a).ok_or_else(|| Error::Singular("LU found a zero pivot".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub kappa: f64,
    pub err_f: f64,
    pub err_rf: Option<f64>,
}

/// Error bounds for Algorithm 1 with SD or CG at tolerance `epsilon`.
pub fn theoretical_bounds(a: &Mat, epsilon: f64, method: Method) -> BoundRecord {
    let s = singular_values(a);
    let (hi, lo) = (s[0], s[s.len() - 1]);
    let n = a.ncols() as f64;
    let (err_f, err_rf) = match method {
        Method::Sd => (epsilon * (n / 2.0).sqrt() / (lo * lo), Some(epsilon * (n / 2.0).sqrt() / lo)),
        Method::Cg => (n * epsilon, None),
    };
    BoundRecord { sigma_min: lo, sigma_max: hi, kappa: hi / lo, err_f, err_rf }
}

/// Bounds for the left pseudoinverse of an N×M matrix estimated with SD.
pub fn pseudoinverse_bounds(a: &Mat, epsilon: f64) -> BoundRecord {
    let s = singular_values(a);
    let (hi, lo) = (s[0], s[s.len() - 1]);
    let m = a.ncols() as f64;
    let kappa = hi / lo;
    let base = m.sqrt() * epsilon * kappa / 2f64.sqrt();
    BoundRecord { sigma_min: lo, sigma_max: hi, kappa, err_f: base / lo.powi(3), err_rf: Some(base / (lo * lo)) }
}

/// Real-column counts of the γ sub-blocks of a width-`t` block.
///
/// With `Γ̃ = ⌊t/γ⌋` and `γ̃ = t mod γ`, the leading `γ − γ̃` sub-blocks hold
/// `Γ̃` columns plus one zero column and the rest hold `Γ̃ + 1`, so all share
/// width `⌈t/γ⌉`.
pub fn sub_block_layout(t: usize, gamma: usize) -> Vec<usize> {
    let base = t / gamma;
    let extra = t % gamma;
    if extra == 0 {
        return vec![base; gamma];
    }
    (0..gamma).map(|i| if i < gamma - extra { base } else { base + 1 }).collect()
}

#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub rows: usize,
    pub source_cols: usize,
    /// width of each of the k blocks after zero padding
    pub block_width: usize,
    pub sub_width: usize,
    pub layout: Vec<usize>,
    /// `blocks[i][j]`: sub-block j of block i, each rows × sub_width
    pub blocks: Vec<Vec<Mat>>,
    pub pad_cols: usize,
}

pub fn partition_blocks(x: &Mat, k: usize, gamma: usize) -> Result<BlockPartition> {
    if k == 0 || gamma == 0 {
        return Err(Error::Parameter("k and gamma must be at least 1".into()));
    }
    let (rows, c) = x.shape();
    let t = c.div_ceil(k);
    let layout = sub_block_layout(t, gamma);
    let sub_width = t.div_ceil(gamma);
    let mut blocks = Vec::with_capacity(k);
    for i in 0..k {
        let mut subs = Vec::with_capacity(gamma);
        let mut offset = i * t;
        for &real in &layout {
            let mut sb = Mat::zeros(rows, sub_width);
            for cc in 0..real {
                if offset + cc < c {
                    sb.set_column(cc, &x.column(offset + cc));
                }
            }
            offset += real;
            subs.push(sb);
        }
        blocks.push(subs);
    }
    let pad_cols = k * gamma * sub_width - c;
    Ok(BlockPartition { rows, source_cols: c, block_width: t, sub_width, layout, blocks, pad_cols })
}

impl BlockPartition {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// Block `i` reassembled from its sub-blocks, `rows × block_width`.
    pub fn block(&self, i: usize) -> Mat {
        join_sub_blocks(&self.blocks[i], &self.layout)
    }

    pub fn departition(&self) -> Mat {
        let mut out = Mat::zeros(self.rows, self.source_cols);
        for i in 0..self.k() {
            let b = self.block(i);
            for cc in 0..self.block_width {
                let dst = i * self.block_width + cc;
                if dst < self.source_cols {
                    out.set_column(dst, &b.column(cc));
                }
            }
        }
        out
    }
}

pub fn split_sub_blocks(block: &Mat, gamma: usize) -> (Vec<Mat>, Vec<usize>) {
    let p = partition_blocks(block, 1, gamma).expect("gamma >= 1");
    (p.blocks.into_iter().next().unwrap(), p.layout)
}

pub fn join_sub_blocks(subs: &[Mat], layout: &[usize]) -> Mat {
    let rows = subs.first().map_or(0, |s| s.nrows());
    let t: usize = layout.iter().sum();
    let mut out = Mat::zeros(rows, t);
    let mut offset = 0;
    for (sb, &real) in subs.iter().zip(layout) {
        for cc in 0..real {
            out.set_column(offset + cc, &sb.column(cc));
        }
        offset += real;
    }
    out
}

/// Algorithm 3: rows of `B̂^{-1}` from `min ‖cB − e_iᵀ‖²`, then `Â† = B̂^{-1}Aᵀ`.
pub fn estimate_pseudoinverse(a: &Mat, cfg: &SolverConfig) -> Result<Mat> {
    let (n, m) = a.shape();
    if n <= m {
        return Err(Error::Shape(format!("need N > M, got {n}x{m}")));
    }
    cfg.validate()?;
    let b = a.tr_mul(a);
    let kappa = condition_number(&b);
    if !(kappa < CONDITION_LIMIT) {
        return Err(Error::Singular(format!("AᵀA has condition {kappa:.3e}; A is rank deficient")));
    }
    let bt = b.transpose();
    let rows: Vec<Result<DVector<f64>>> = (0..m)
        .into_par_iter()
        .map(|i| solve(&bt, &unit(m, i), cfg).map(|(c, _)| c))
        .collect();
    let mut binv = Mat::zeros(m, m);
    for (i, r) in rows.into_iter().enumerate() {
        binv.set_row(i, &r?.transpose());
    }
    Ok(binv * a.transpose())
}
