//! Vandermonde systems over complex nodes, `V_ij = x_i^j`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

const DUPLICATE_TOL: f64 = 1e-12;

pub fn vandermonde(nodes: &[Complex64], cols: usize) -> CMat {
    CMat::from_fn(nodes.len(), cols, |i, j| nodes[i].powu(j as u32))
}

pub fn check_distinct(nodes: &[Complex64]) -> Result<()> {
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if (nodes[i] - nodes[j]).norm() < DUPLICATE_TOL {
                return Err(Error::Singular(format!("nodes {i} and {j} coincide")));
            }
        }
    }
    Ok(())
}

/// Leja ordering: start at the largest node, then repeatedly take the node
/// farthest (in product of distances) from those already chosen.
pub fn leja_order(nodes: &[Complex64]) -> Vec<usize> {
    let k = nodes.len();
    if k == 0 {
        return Vec::new();
    }
    let first = (0..k)
        .max_by(|&a, &b| nodes[a].norm().total_cmp(&nodes[b].norm()))
        .unwrap();
    let mut order = vec![first];
    let mut used = vec![false; k];
    used[first] = true;
    // running sum of log-distances to the chosen set
    let mut score = vec![0.0f64; k];
    for _ in 1..k {
        let last = nodes[*order.last().unwrap()];
        let mut best = None;
        for i in 0..k {
            if used[i] {
                continue;
            }
            score[i] += (nodes[i] - last).norm().ln();
            if best.is_none_or(|b: usize| score[i] > score[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        order.push(b);
    }
    order
}

/// Ascending coefficients of `Π (x − r)`.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        c.push(Complex64::new(0.0, 0.0));
        for m in (1..c.len()).rev() {
            let lower = c[m - 1];
            c[m] = lower - r * c[m];
        }
        c[0] = -r * c[0];
    }
    c
}

pub fn poly_eval(coeffs: &[Complex64], x: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Inverse of the square Vandermonde matrix in O(k²).
///
/// Column `i` of the inverse holds the monomial coefficients of the
/// Lagrange basis polynomial for node `i`; each comes from one synthetic
/// division of the master polynomial.
pub fn vandermonde_inverse(nodes: &[Complex64]) -> Result<CMat> {
    let k = nodes.len();
    check_distinct(nodes)?;
    let leja: Vec<Complex64> = leja_order(nodes).into_iter().map(|i| nodes[i]).collect();
    let master = poly_from_roots(&leja);
    let mut inv = CMat::zeros(k, k);
    let mut quot = vec![Complex64::new(0.0, 0.0); k];
    for (i, &xi) in nodes.iter().enumerate() {
        quot[k - 1] = master[k];
        for j in (1..k).rev() {
            quot[j - 1] = master[j] + xi * quot[j];
        }
        let denom = nodes
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != i)
            .fold(Complex64::new(1.0, 0.0), |acc, (_, &xm)| acc * (xi - xm));
        for j in 0..k {
            inv[(j, i)] = quot[j] / denom;
        }
    }
    Ok(inv)
}

/// Solves `V a = f` in place for every column of `rhs` (Björck–Pereyra).
pub fn vandermonde_solve(nodes: &[Complex64], rhs: &mut CMat) -> Result<()> {
    let k = nodes.len();
    if rhs.nrows() != k {
        return Err(Error::Shape(format!("{} nodes but {} right-hand rows", k, rhs.nrows())));
    }
    check_distinct(nodes)?;
    let order = leja_order(nodes);
    let nodes: Vec<Complex64> = order.iter().map(|&i| nodes[i]).collect();
    let m = rhs.ncols();
    let mut f = vec![Complex64::new(0.0, 0.0); k];
    for c in 0..m {
        for (dst, &src) in order.iter().enumerate() {
            f[dst] = rhs[(src, c)];
        }
        for s in 0..k.saturating_sub(1) {
            for i in (s + 1..k).rev() {
                f[i] = (f[i] - f[i - 1]) / (nodes[i] - nodes[i - s - 1]);
            }
        }
        for s in (0..k.saturating_sub(1)).rev() {
            for i in s..k - 1 {
                let next = f[i + 1];
                f[i] -= nodes[s] * next;
            }
        }
        rhs.column_mut(c).copy_from_slice(&f);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_inverse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_unit_nodes(k: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * TAU)).collect()
    }

    #[test]
    fn single_node() {
        let inv = vandermonde_inverse(&[c(1.0, 0.0)]).unwrap();
        assert_eq!(inv[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn two_node_closed_form() {
        let inv = vandermonde_inverse(&[c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        let want = [[0.5, 0.5], [0.5, -0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - c(want[i][j], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn duplicate_nodes_rejected() {
        assert!(vandermonde_inverse(&[c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn roots_expand() {
        let p = poly_from_roots(&[c(1.0, 0.0), c(2.0, 0.0)]);
        // (x-1)(x-2) = 2 - 3x + x²
        assert_eq!(p, vec![c(2.0, 0.0), c(-3.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn eight_random_nodes_match_lu() {
        let nodes = random_unit_nodes(8, 11);
        let v = vandermonde(&nodes, 8);
        let fast = vandermonde_inverse(&nodes).unwrap();
        let slow = lu_inverse(&v).unwrap();
        assert!((&fast - &slow).norm() / slow.norm() < 1e-9);
    }

    #[test]
    fn spread_nodes_up_to_64() {
        for k in [16usize, 32, 64] {
            let q = crate::field::next_prime_above(k as u64);
            let nodes: Vec<Complex64> = (1..=k as u64).map(|e| crate::field::embed(e, q)).collect();
            let v = vandermonde(&nodes, k);
            let inv = vandermonde_inverse(&nodes).unwrap();
            let err = (&inv * &v - CMat::identity(k, k)).norm();
            assert!(err < 1e-8, "k={k} err={err}");
        }
    }

    #[test]
    fn leja_starts_at_largest() {
        let nodes = [c(0.5, 0.0), c(0.0, 2.0), c(-1.0, 0.0)];
        let o = leja_order(&nodes);
        assert_eq!(o[0], 1);
        let mut sorted = o.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn near_full_circle_is_stable() {
        // 60 of the 61st roots of unity: well conditioned, but a naive
        // master polynomial loses every digit
        let nodes: Vec<Complex64> = (1..=60).map(|e| crate::field::embed(e, 61)).collect();
        let v = vandermonde(&nodes, 60);
        let inv = vandermonde_inverse(&nodes).unwrap();
        assert!((&inv * &v - CMat::identity(60, 60)).norm() < 1e-10);
    }

    #[test]
    fn bjorck_pereyra_solves() {
        let nodes = random_unit_nodes(7, 3);
        let v = vandermonde(&nodes, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = CMat::from_fn(7, 3, |_, _| c(rng.random(), rng.random()));
        let mut f = &v * &x;
        vandermonde_solve(&nodes, &mut f).unwrap();
        assert!((&f - &x).norm() / x.norm() < 1e-9);
    }
}
