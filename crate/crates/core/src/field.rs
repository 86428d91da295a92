//! Prime-field parameters and their embedding into complex roots of unity.
//!
//! Integers live in F_q only long enough to pick points; everything
//! downstream works with `e^{2πi·e/q}`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub q: u64,
    pub beta: u64,
}

/// How exponents are assigned to points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMode {
    /// `β_j = β^j mod q`
    #[default]
    PrimitiveRoot,
    /// `β_j = j`, skipping the primitive root
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PointSetRecord", try_from = "PointSetRecord")]
pub struct PointSet {
    pub q: u64,
    pub beta: u64,
    pub exponents: Vec<u64>,
    pub embedded: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct PointSetRecord {
    q: u64,
    beta: u64,
    n: usize,
    exponents: Vec<u64>,
}

impl From<PointSet> for PointSetRecord {
    fn from(p: PointSet) -> Self {
        PointSetRecord { q: p.q, beta: p.beta, n: p.exponents.len(), exponents: p.exponents }
    }
}

impl TryFrom<PointSetRecord> for PointSet {
    type Error = Error;

    fn try_from(r: PointSetRecord) -> Result<Self> {
        if r.n != r.exponents.len() {
            return Err(Error::Format(format!("n = {} but {} exponents", r.n, r.exponents.len())));
        }
        PointSet::from_exponents(r.q, r.beta, r.exponents)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaMultiset {
    pub residues: Vec<u64>,
    pub values: Vec<Complex64>,
    pub seed: u64,
}

pub fn embed(exponent: u64, q: u64) -> Complex64 {
    let e = exponent % q;
    Complex64::from_polar(1.0, TAU * e as f64 / q as f64)
}

pub fn is_prime(m: u64) -> bool {
    if m < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= m {
        if m.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn next_prime_above(n: u64) -> u64 {
    let mut q = n + 1;
    while !is_prime(q) {
        q += 1;
    }
    q
}

pub fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    let m128 = m as u128;
    let mut b = base as u128 % m128;
    let mut acc = 1u128 % m128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}

fn prime_factors(mut m: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= m {
        if m.is_multiple_of(d) {
            out.push(d);
            while m.is_multiple_of(d) {
                m /= d;
            }
        }
        d += 1;
    }
    if m > 1 {
        out.push(m);
    }
    out
}

pub fn is_primitive_root(beta: u64, q: u64) -> bool {
    if !is_prime(q) || beta.is_multiple_of(q) {
        return false;
    }
    if q == 2 {
        return beta % 2 == 1;
    }
    pow_mod(beta, q - 1, q) == 1
        && prime_factors(q - 1).iter().all(|&p| pow_mod(beta, (q - 1) / p, q) != 1)
}

pub fn primitive_roots(q: u64) -> Vec<u64> {
    if q == 2 {
        return vec![1];
    }
    (2..q).filter(|&b| is_primitive_root(b, q)).collect()
}

/// Smallest prime above `n` and a seeded primitive root of it.
pub fn choose_field(n: usize, gamma: usize, seed: u64) -> Result<FieldSpec> {
    if n == 0 || gamma == 0 || gamma > n {
        return Err(Error::Parameter(format!("need 1 <= gamma <= n, got n={n}, gamma={gamma}")));
    }
    let q = next_prime_above(n as u64);
    let roots = primitive_roots(q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = roots[rng.random_range(0..roots.len())];
    Ok(FieldSpec { q, beta })
}

impl PointSet {
    pub fn build(spec: FieldSpec, n: usize) -> Result<Self> {
        Self::build_with_mode(spec, n, PointMode::PrimitiveRoot)
    }

    pub fn build_with_mode(spec: FieldSpec, n: usize, mode: PointMode) -> Result<Self> {
        if n as u64 >= spec.q {
            return Err(Error::Parameter(format!(
                "{n} points do not fit in F_{}^x without collisions",
                spec.q
            )));
        }
        if mode == PointMode::PrimitiveRoot && !is_primitive_root(spec.beta, spec.q) {
            return Err(Error::Parameter(format!("{} is not a primitive root mod {}", spec.beta, spec.q)));
        }
        let exponents = (1..=n as u64)
            .map(|j| match mode {
                PointMode::PrimitiveRoot => pow_mod(spec.beta, j, spec.q),
                PointMode::Direct => j,
            })
            .collect();
        Self::from_exponents(spec.q, spec.beta, exponents)
    }

    pub fn from_exponents(q: u64, beta: u64, exponents: Vec<u64>) -> Result<Self> {
        let mut seen = exponents.iter().map(|e| e % q).collect::<Vec<_>>();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != exponents.len() {
            return Err(Error::Parameter("duplicate exponents give colliding points".into()));
        }
        let embedded = exponents.iter().map(|&e| embed(e, q)).collect();
        Ok(PointSet { q, beta, exponents, embedded })
    }

    pub fn len(&self) -> usize {
        self.embedded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embedded.is_empty()
    }

    /// Points reordered as `new[j] = old[perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::Shape(format!("permutation of length {} for {} points", perm.len(), self.len())));
        }
        let exponents = perm.iter().map(|&i| self.exponents[i]).collect();
        Self::from_exponents(self.q, self.beta, exponents)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min((self.embedded[i] - self.embedded[j]).norm());
            }
        }
        best
    }
}

/// γ blinding values drawn uniformly from the embedded nonzero field elements.
pub fn sample_eta(spec: FieldSpec, gamma: usize, seed: u64) -> Result<EtaMultiset> {
    if gamma == 0 {
        return Err(Error::Parameter("gamma must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let residues: Vec<u64> = (0..gamma).map(|_| rng.random_range(1..spec.q.max(2))).collect();
    let values = residues.iter().map(|&m| embed(m, spec.q)).collect();
    Ok(EtaMultiset { residues, values, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_order(b: u64, q: u64) -> u64 {
        let mut x = b % q;
        let mut ord = 1;
        while x != 1 {
            x = x * b % q;
            ord += 1;
        }
        ord
    }

    #[test]
    fn field_for_nine_workers() {
        let roots: Vec<u64> = (1..11).filter(|&b| brute_force_order(b, 11) == 10).collect();
        assert_eq!(roots, vec![2, 6, 7, 8]);
        for seed in 0..20 {
            let f = choose_field(9, 6, seed).unwrap();
            assert_eq!(f.q, 11);
            assert!(roots.contains(&f.beta));
        }
    }

    #[test]
    fn tiny_fields() {
        assert_eq!(choose_field(2, 1, 0).unwrap(), FieldSpec { q: 3, beta: 2 });
        assert_eq!(choose_field(1, 1, 9).unwrap(), FieldSpec { q: 2, beta: 1 });
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(choose_field(3, 4, 0).is_err());
        assert!(choose_field(3, 0, 0).is_err());
    }

    #[test]
    fn exponents_by_hand() {
        let p = PointSet::build(FieldSpec { q: 11, beta: 2 }, 3).unwrap();
        assert_eq!(p.exponents, vec![2, 4, 8]);
        let p = PointSet::build(FieldSpec { q: 3, beta: 2 }, 1).unwrap();
        let want = Complex64::from_polar(1.0, 4.0 * std::f64::consts::PI / 3.0);
        assert!((p.embedded[0] - want).norm() < 1e-15);
    }

    #[test]
    fn too_many_points() {
        assert!(PointSet::build(FieldSpec { q: 11, beta: 2 }, 11).is_err());
    }

    #[test]
    fn direct_mode_uses_consecutive_exponents() {
        let p = PointSet::build_with_mode(FieldSpec { q: 7, beta: 3 }, 4, PointMode::Direct).unwrap();
        assert_eq!(p.exponents, vec![1, 2, 3, 4]);
    }

    #[test]
    fn eta_membership() {
        let spec = FieldSpec { q: 11, beta: 2 };
        let eta = sample_eta(spec, 5, 7).unwrap();
        assert_eq!(eta.values.len(), 5);
        let elems: Vec<Complex64> = (1..11).map(|m| embed(m, 11)).collect();
        for v in &eta.values {
            assert!(elems.iter().any(|e| (e - v).norm() < 1e-14));
        }
        assert_eq!(eta, sample_eta(spec, 5, 7).unwrap());
        let one = sample_eta(spec, 1, 123).unwrap();
        assert!((one.values[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_shape() {
        let p = PointSet::build(FieldSpec { q: 11, beta: 2 }, 3).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v, serde_json::json!({"q": 11, "beta": 2, "n": 3, "exponents": [2, 4, 8]}));
        let back: PointSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn permuted_points() {
        let p = PointSet::build(FieldSpec { q: 11, beta: 2 }, 3).unwrap();
        let r = p.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(r.exponents, vec![8, 2, 4]);
    }
}
