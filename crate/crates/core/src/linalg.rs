//! Dense helpers shared by the solvers, codes and reports.

use nalgebra::{ComplexField, DMatrix, DVector, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// LU with partial pivoting. `None` when a pivot vanishes.
pub fn lu_inverse<T: ComplexField>(a: &DMatrix<T>) -> Option<DMatrix<T>> {
    if !a.is_square() {
        return None;
    }
    a.clone().lu().try_inverse()
}

pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("LU solve hit a zero pivot".into()))
}

pub fn singular_values<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(a.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Largest over smallest singular value; infinite for singular input.
pub fn condition_number<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Spectral norm by power iteration on AᵀA, stopping on relative change below `tol`.
pub fn spectral_norm(a: &Mat, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let fro = a.norm();
    if fro == 0.0 {
        return 0.0;
    }
    // deterministic start with no exact zeros against any singular vector in practice
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7548776662466927).fract());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..5000 {
        let av = a * &v;
        let w = a.tr_mul(&av);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        v = w / wn;
        if (next - est).abs() <= tol * next {
            est = next;
            break;
        }
        est = next;
    }
    est.min(fro)
}

/// Smallest singular value by inverse power iteration on AᵀA.
pub fn sigma_min_inverse_power(a: &Mat, tol: f64) -> Result<f64> {
    let gram = a.tr_mul(a);
    let lu = gram.clone().lu();
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = lu
            .solve(&v)
            .ok_or_else(|| Error::Singular("AᵀA is singular".into()))?;
        let wn = w.norm();
        if !wn.is_finite() || wn == 0.0 {
            return Err(Error::Singular("inverse power iteration broke down".into()));
        }
        let next = 1.0 / wn;
        v = w / wn;
        if (next - lambda).abs() <= tol * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda.sqrt())
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        scale * z
    })
}

pub fn to_complex(a: &Mat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Real part of `a`, failing when the imaginary residue exceeds `tol` relative to the result.
pub fn real_part_checked(a: &CMat, tol: f64) -> Result<Mat> {
    let re = a.map(|z| z.re);
    let im = a.map(|z| z.im).norm();
    let scale = re.norm().max(1.0);
    if im > tol * scale || !im.is_finite() {
        return Err(Error::NumericalIntegrity(format!(
            "imaginary residue {im:.3e} exceeds {tol:.1e} relative"
        )));
    }
    Ok(re)
}

pub fn relative_frobenius(approx: &Mat, reference: &Mat) -> f64 {
    let denom = reference.norm();
    let diff = (approx - reference).norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

pub fn max_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().map(|z| z.clone().modulus()).fold(0.0, f64::max)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Mat::from_diagonal(&DVector::from_vec(vec![3.0, -7.0, 1.0]));
        assert!((spectral_norm(&a, 1e-12) - 7.0).abs() < 1e-6);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian_matrix(12, 9, 1.0, &mut rng);
        let s = singular_values(&a);
        assert!((spectral_norm(&a, 1e-12) - s[0]).abs() < 1e-6 * s[0]);
    }

    #[test]
    fn inverse_power_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian_matrix(10, 10, 1.0, &mut rng);
        let s = singular_values(&a);
        let lo = sigma_min_inverse_power(&a, 1e-12).unwrap();
        assert!((lo - s[s.len() - 1]).abs() < 1e-5 * s[0]);
    }

    #[test]
    fn binomial_small() {
        assert_eq!(binomial(9, 6), 84);
        assert_eq!(binomial(200, 0), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn imaginary_residue_rejected() {
        let mut a = to_complex(&Mat::identity(2, 2));
        assert!(real_part_checked(&a, 1e-8).is_ok());
        a[(0, 1)] = Complex64::new(0.0, 1e-3);
        assert!(real_part_checked(&a, 1e-8).is_err());
    }
}
