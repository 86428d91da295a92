//! Balanced Reed-Solomon generators: mask, column polynomials, `G = HP`,
//! restricted inverses and MDS checks, plus the cyclic alternative.

use itertools::Itertools;
use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, PointSet};
use crate::io::cmat_to_pairs;
use crate::linalg::{binomial, condition_number, lu_inverse, CMat};
use crate::vandermonde::{poly_eval, poly_from_roots, vandermonde, vandermonde_inverse, vandermonde_solve};

pub const SUPPORT_TOL: f64 = 1e-9;
pub const MDS_CONDITION_LIMIT: f64 = 1e10;
const P_CONDITION_WARN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub d: usize,
    /// largest row weight; every row has exactly w when `balanced`
    pub w: usize,
    #[serde(default = "yes")]
    pub balanced: bool,
}

fn yes() -> bool {
    true
}

impl CodeParams {
    /// The MDS setting `d = s + 1`.
    pub fn brs(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Parameter(format!("need 1 <= k <= n, got n={n}, k={k}")));
        }
        Self::new(n, k, n - k + 1)
    }

    /// Arbitrary column weight `d`; `d != s + 1` is the extended regime.
    pub fn new(n: usize, k: usize, d: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Parameter(format!("need 1 <= k <= n, got n={n}, k={k}")));
        }
        let s = n - k;
        if d == 0 || d > n {
            return Err(Error::Parameter(format!("column weight d={d} outside 1..={n}")));
        }
        if s == 0 {
            if d != 1 {
                return Err(Error::Parameter("an uncoded scheme (n = k) has d = 1".into()));
            }
        } else if d < n.div_ceil(2) {
            return Err(Error::Parameter(format!(
                "d={d} < ceil(n/2)={}: the cyclic mask construction is only guaranteed for d >= n/2",
                n.div_ceil(2)
            )));
        }
        if d < s + 1 {
            return Err(Error::Parameter(format!(
                "d={d} is below n-k+1={}; no MDS generator has columns this sparse",
                s + 1
            )));
        }
        if !(k * d).is_multiple_of(n) {
            return Err(Error::Parameter(format!("row weight w = kd/n = {}/{} is not an integer", k * d, n)));
        }
        Ok(CodeParams { n, k, s, d, w: k * d / n, balanced: true })
    }

    /// `d = n − k + 1` with no divisibility or `d ≥ n/2` requirement, for
    /// parameter sets where no balanced mask exists. Row weights then differ
    /// by at most one.
    pub fn brs_unbalanced(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Parameter(format!("need 1 <= k <= n, got n={n}, k={k}")));
        }
        let d = n - k + 1;
        Ok(CodeParams { n, k, s: n - k, d, w: (k * d).div_ceil(n), balanced: false })
    }

    pub fn is_extended(&self) -> bool {
        self.d != self.s + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMatrix {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// row-major 0/1
    pub bits: Vec<u8>,
}

impl MaskMatrix {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.k + col] == 1
    }

    pub fn row_weights(&self) -> Vec<usize> {
        (0..self.n).map(|i| (0..self.k).filter(|&j| self.get(i, j)).count()).collect()
    }

    pub fn col_weights(&self) -> Vec<usize> {
        (0..self.k).map(|j| (0..self.n).filter(|&i| self.get(i, j)).count()).collect()
    }

    pub fn total(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.k).map(|r| r.to_vec()).collect()
    }
}

/// Column `j` gets ones at rows `(i + j·d) mod n`, `i = 0..d`.
pub fn mask_matrix(params: &CodeParams) -> Result<MaskMatrix> {
    let CodeParams { n, k, d, .. } = *params;
    let p = if params.balanced { CodeParams::new(n, k, d)? } else { CodeParams::brs_unbalanced(n, k)? };
    let mut bits = vec![0u8; n * k];
    for j in 0..k {
        for i in 0..d {
            bits[((i + j * d) % n) * k + j] = 1;
        }
    }
    let mask = MaskMatrix { n, k, d, bits };
    debug_assert!(!p.balanced || mask.row_weights().iter().all(|&r| r == p.w));
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPolynomial {
    pub column: usize,
    /// ascending monomial coefficients, padded to length k
    pub coeffs: Vec<Complex64>,
    pub zero_rows: Vec<usize>,
    /// point index where the polynomial equals one
    pub norm_row: usize,
}

impl ColumnPolynomial {
    pub fn degree(&self) -> usize {
        self.zero_rows.len()
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        poly_eval(&self.coeffs, x)
    }
}

fn normalization_row(j: usize, mask: &MaskMatrix) -> Result<usize> {
    if j < mask.n && mask.get(j, j) {
        return Ok(j);
    }
    (0..mask.n).find(|&i| mask.get(i, j)).ok_or_else(|| Error::Construction {
        column: j,
        reason: "empty column".into(),
    })
}

/// `p_j(x) = Π_{i: M_ij = 0} (x − β_i)/(β_r − β_i)` with `r = j` when `M_jj = 1`.
///
/// When `M_jj = 0` the product is normalized at the first row of the
/// column's support instead; this rescales the column and keeps its support.
pub fn column_polynomial(j: usize, mask: &MaskMatrix, points: &PointSet) -> Result<ColumnPolynomial> {
    if j >= mask.k {
        return Err(Error::Parameter(format!("column {j} out of range for k={}", mask.k)));
    }
    if points.len() < mask.n {
        return Err(Error::Parameter(format!("{} points for {} rows", points.len(), mask.n)));
    }
    let beta = &points.embedded;
    let zero_rows: Vec<usize> = (0..mask.n).filter(|&i| !mask.get(i, j)).collect();
    let norm_row = normalization_row(j, mask)?;
    let roots: Vec<Complex64> = zero_rows.iter().map(|&i| beta[i]).collect();
    let scale = roots
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &r| acc * (beta[norm_row] - r));
    if scale.norm() < 1e-300 {
        return Err(Error::Construction { column: j, reason: "vanishing normalization".into() });
    }
    let mut coeffs: Vec<Complex64> = poly_from_roots(&roots).into_iter().map(|c| c / scale).collect();
    if coeffs.len() > mask.k {
        return Err(Error::Construction {
            column: j,
            reason: format!("degree {} exceeds k-1 = {}", coeffs.len() - 1, mask.k - 1),
        });
    }
    coeffs.resize(mask.k, Complex64::new(0.0, 0.0));
    Ok(ColumnPolynomial { column: j, coeffs, zero_rows, norm_row })
}

#[derive(Debug, Clone)]
pub struct BrsGenerator {
    pub params: CodeParams,
    pub mask: MaskMatrix,
    pub points: PointSet,
    pub g: CMat,
    pub h: CMat,
    pub p: CMat,
    pub p_inv: Option<CMat>,
    pub p_condition: f64,
    pub polys: Vec<ColumnPolynomial>,
    pub warnings: Vec<String>,
}

pub fn generator_matrix(params: &CodeParams, points: &PointSet) -> Result<BrsGenerator> {
    let mask = mask_matrix(params)?;
    let (n, k) = (params.n, params.k);
    let polys = (0..k)
        .map(|j| column_polynomial(j, &mask, points))
        .collect::<Result<Vec<_>>>()?;
    let beta = &points.embedded[..n];
    // evaluate the product form directly so zero rows are exact zeros
    let g = CMat::from_fn(n, k, |i, j| {
        let pj = &polys[j];
        if mask.get(i, j) {
            pj.zero_rows.iter().fold(Complex64::new(1.0, 0.0), |acc, &z| {
                acc * (beta[i] - beta[z]) / (beta[pj.norm_row] - beta[z])
            })
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let h = vandermonde(beta, k);
    let p = CMat::from_fn(k, k, |i, j| polys[j].coeffs[i]);
    let mut warnings = Vec::new();
    if params.is_extended() {
        warnings.push(format!(
            "extended regime: d={} != s+1={}, column polynomials have degree {} < k-1",
            params.d,
            params.s + 1,
            n - params.d
        ));
    }
    let supports: std::collections::BTreeSet<Vec<bool>> =
        (0..k).map(|j| (0..n).map(|i| mask.get(i, j)).collect()).collect();
    if supports.len() < k {
        warnings.push(format!(
            "mask has {} distinct column supports for k={k} columns; columns sharing a support are proportional",
            supports.len()
        ));
    }
    for pj in &polys {
        if pj.norm_row != pj.column {
            warnings.push(format!(
                "column {} is zero at its own point; normalized at row {}",
                pj.column, pj.norm_row
            ));
        }
    }
    let p_condition = condition_number(&p);
    let p_inv = if p_condition.is_finite() && p_condition < 1e15 { lu_inverse(&p) } else { None };
    if p_inv.is_none() {
        warnings.push(format!("coefficient factor P is singular (condition {p_condition:.2e})"));
    } else if p_condition > P_CONDITION_WARN {
        warnings.push(format!("coefficient factor P is ill-conditioned (condition {p_condition:.2e})"));
    }
    Ok(BrsGenerator { params: *params, mask, points: points.clone(), g, h, p, p_inv, p_condition, polys, warnings })
}

fn check_subset(n: usize, k: usize, rows: &[usize]) -> Result<()> {
    if rows.len() != k {
        return Err(Error::ThresholdNotMet { have: rows.len(), need: k });
    }
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != rows.len() || sorted.last().is_some_and(|&r| r >= n) {
        return Err(Error::Parameter(format!("rows {rows:?} are not {k} distinct indices below {n}")));
    }
    Ok(())
}

impl BrsGenerator {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    fn p_inv(&self) -> Result<&CMat> {
        self.p_inv
            .as_ref()
            .ok_or_else(|| Error::Singular("generator has no usable P^{-1}".into()))
    }

    pub fn nodes(&self, rows: &[usize]) -> Vec<Complex64> {
        rows.iter().map(|&i| self.points.embedded[i]).collect()
    }

    /// `G_I^{-1} = P^{-1} · H_I^{-1}`.
    pub fn restricted_inverse(&self, rows: &[usize]) -> Result<CMat> {
        check_subset(self.n(), self.k(), rows)?;
        let vinv = vandermonde_inverse(&self.nodes(rows))?;
        Ok(self.p_inv()? * vinv)
    }

    /// `G_I^{-1} · rhs` without forming any inverse: Björck–Pereyra, then `P^{-1}`.
    pub fn apply_restricted_inverse(&self, rows: &[usize], mut rhs: CMat) -> Result<CMat> {
        check_subset(self.n(), self.k(), rows)?;
        let p_inv = self.p_inv()?;
        vandermonde_solve(&self.nodes(rows), &mut rhs)?;
        Ok(p_inv * rhs)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "points": self.points,
            "mask": self.mask.rows(),
            "G": cmat_to_pairs(&self.g),
            "H": cmat_to_pairs(&self.h),
            "P": cmat_to_pairs(&self.p),
            "warnings": self.warnings,
        })
    }
}

pub fn rows_of(g: &CMat, rows: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), g.ncols(), |i, j| g[(rows[i], j)])
}

pub fn nnz(g: &CMat) -> usize {
    g.iter().filter(|z| z.norm() > SUPPORT_TOL).count()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdsReport {
    pub n: usize,
    pub k: usize,
    pub total_subsets: u128,
    pub checked: usize,
    pub exhaustive: bool,
    pub invertible: usize,
    pub min_abs_det: f64,
    pub max_condition: f64,
    /// first few subsets over the condition limit
    pub failures: Vec<Vec<usize>>,
    pub passed: bool,
}

impl MdsReport {
    pub fn summary(&self) -> String {
        format!("{}/{} subsets invertible", self.invertible, self.checked)
    }
}

/// Checks every k-row restriction (or a seeded sample) for invertibility.
pub fn verify_mds(g: &CMat, max_subsets: usize, seed: u64) -> MdsReport {
    let (n, k) = (g.nrows(), g.ncols());
    let total = binomial(n, k);
    let exhaustive = total <= max_subsets as u128;
    let subsets: Vec<Vec<usize>> = if exhaustive {
        (0..n).combinations(k).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..max_subsets)
            .map(|_| {
                let mut s = sample(&mut rng, n, k).into_vec();
                s.sort_unstable();
                s
            })
            .collect()
    };
    let stats: Vec<(f64, f64)> = subsets
        .par_iter()
        .map(|rows| {
            let sub = rows_of(g, rows);
            let det = if k == 0 { 1.0 } else { sub.clone().lu().determinant().modulus() };
            (det, condition_number(&sub))
        })
        .collect();
    let mut failures = Vec::new();
    let mut invertible = 0;
    let mut min_abs_det = f64::INFINITY;
    let mut max_condition: f64 = 0.0;
    for (rows, &(det, cond)) in subsets.iter().zip(&stats) {
        min_abs_det = min_abs_det.min(det);
        max_condition = max_condition.max(if cond.is_nan() { f64::INFINITY } else { cond });
        if cond < MDS_CONDITION_LIMIT {
            invertible += 1;
        } else if failures.len() < 16 {
            failures.push(rows.clone());
        }
    }
    MdsReport {
        n,
        k,
        total_subsets: total,
        checked: subsets.len(),
        exhaustive,
        invertible,
        min_abs_det,
        max_condition,
        passed: invertible == subsets.len(),
        failures,
    }
}

#[derive(Debug, Clone)]
pub struct CyclicGenerator {
    pub n: usize,
    pub s: usize,
    /// ascending coefficients of `Π_{i=1..s} (x − β_i)`
    pub g1: Vec<Complex64>,
    pub circulant: CMat,
    pub erased: Vec<usize>,
    pub g: CMat,
}

/// Circulant of the shifts of `g₁` with `s` columns erased (default: the last `s`).
pub fn cyclic_generator(n: usize, s: usize, spec: FieldSpec, erased: Option<Vec<usize>>) -> Result<CyclicGenerator> {
    if s >= n {
        return Err(Error::Parameter(format!("s={s} must be below n={n}")));
    }
    let points = PointSet::build(spec, s)?;
    let g1 = poly_from_roots(&points.embedded);
    let circulant = CMat::from_fn(n, n, |r, c| {
        let idx = (r + n - c) % n;
        g1.get(idx).copied().unwrap_or(Complex64::new(0.0, 0.0))
    });
    let erased = erased.unwrap_or_else(|| (n - s..n).collect());
    let mut sorted = erased.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != s || sorted.iter().any(|&c| c >= n) {
        return Err(Error::Parameter(format!("erase exactly {s} distinct columns below {n}")));
    }
    let kept: Vec<usize> = (0..n).filter(|c| !sorted.contains(c)).collect();
    let g = CMat::from_fn(n, kept.len(), |r, c| circulant[(r, kept[c])]);
    Ok(CyclicGenerator { n, s, g1, circulant, erased: sorted, g })
}

impl CyclicGenerator {
    pub fn row_weights(&self) -> Vec<usize> {
        (0..self.n)
            .map(|r| self.g.row(r).iter().filter(|z| z.norm() > SUPPORT_TOL).count())
            .collect()
    }

    pub fn support(&self) -> usize {
        self.g1.iter().filter(|z| z.norm() > SUPPORT_TOL).count()
    }
}
