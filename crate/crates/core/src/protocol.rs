//! Task allocation, worker-side encoding of computed blocks, and the
//! coordinator's decode from any `k` responses.

use std::collections::BTreeMap;

use nalgebra::LU;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::brs::{rows_of, verify_mds, BrsGenerator, CyclicGenerator, MdsReport};
use crate::error::{Error, Result};
use crate::io::{cmat_from_row_major, cmat_row_major, read_framed, write_framed};
use crate::linalg::{lu_inverse, CMat, Mat};

/// Relative imaginary residue tolerated on the decoded real output.
pub const DECODE_RESIDUE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum Generator {
    Brs(Box<BrsGenerator>),
    /// any other MDS generator; decoded with a dense LU of `G_I`
    Dense(CMat),
}

impl From<BrsGenerator> for Generator {
    fn from(g: BrsGenerator) -> Self {
        Generator::Brs(Box::new(g))
    }
}

impl From<CyclicGenerator> for Generator {
    fn from(g: CyclicGenerator) -> Self {
        Generator::Dense(g.g)
    }
}

impl Generator {
    pub fn matrix(&self) -> &CMat {
        match self {
            Generator::Brs(b) => &b.g,
            Generator::Dense(g) => g,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix().nrows()
    }

    pub fn k(&self) -> usize {
        self.matrix().ncols()
    }

    pub fn entry(&self, worker: usize, block: usize) -> Complex64 {
        self.matrix()[(worker, block)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAllocation {
    /// 0-based block indices requested from each worker
    pub per_worker: Vec<Vec<usize>>,
}

impl TaskAllocation {
    /// How many workers hold each block.
    pub fn replication(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for set in &self.per_worker {
            for &j in set {
                c[j] += 1;
            }
        }
        c
    }
}

pub fn allocate_tasks(gen: &Generator) -> TaskAllocation {
    let per_worker = match gen {
        Generator::Brs(b) => (0..b.n()).map(|i| (0..b.k()).filter(|&j| b.mask.get(i, j)).collect()).collect(),
        Generator::Dense(g) => {
            let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
            (0..g.nrows())
                .map(|i| (0..g.ncols()).filter(|&j| g[(i, j)].norm() > 1e-12 * scale).collect())
                .collect()
        }
    };
    TaskAllocation { per_worker }
}

/// `W_ι`, a `T × N` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerEncoding {
    pub worker: usize,
    pub w: CMat,
}

#[derive(Serialize, Deserialize)]
struct EncodingHeader {
    worker: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N")]
    n: usize,
}

impl WorkerEncoding {
    pub fn symbol_count(&self) -> usize {
        self.w.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = EncodingHeader { worker: self.worker, t: self.w.nrows(), n: self.w.ncols() };
        write_framed(&h, cmat_row_major(&self.w))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, vals): (EncodingHeader, _) = read_framed(bytes)?;
        Ok(WorkerEncoding { worker: h.worker, w: cmat_from_row_major(h.t, h.n, &vals)? })
    }
}

/// `W_ι = Σ_{j∈𝒥_ι} G[ι,j] · 𝒜̂_jᵀ`.
pub fn worker_encode(blocks: &BTreeMap<usize, Mat>, gen: &Generator, tasks: &TaskAllocation, worker: usize) -> Result<WorkerEncoding> {
    let set = tasks
        .per_worker
        .get(worker)
        .ok_or_else(|| Error::Parameter(format!("no worker {worker}")))?;
    let mut w: Option<CMat> = None;
    for &j in set {
        let b = blocks.get(&j).ok_or(Error::IncompleteTask { worker, block: j })?;
        let acc = w.get_or_insert_with(|| CMat::zeros(b.ncols(), b.nrows()));
        if acc.shape() != (b.ncols(), b.nrows()) {
            return Err(Error::Shape(format!("block {j} is {}x{}, expected {}x{}", b.nrows(), b.ncols(), acc.ncols(), acc.nrows())));
        }
        let c = gen.entry(worker, j);
        for r in 0..b.nrows() {
            for t in 0..b.ncols() {
                acc[(t, r)] += c * b[(r, t)];
            }
        }
    }
    let w = w.ok_or_else(|| Error::Parameter(format!("worker {worker} has no tasks")))?;
    if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalIntegrity(format!("worker {worker} produced non-finite values")));
    }
    Ok(WorkerEncoding { worker, w })
}

enum Restricted<'a> {
    Brs(&'a BrsGenerator),
    Dense(LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>),
}

fn responders<'a>(encodings: &'a [WorkerEncoding], gen: &Generator) -> Result<(&'a [WorkerEncoding], Vec<usize>, usize, usize)> {
    let k = gen.k();
    if encodings.len() < k {
        return Err(Error::ThresholdNotMet { have: encodings.len(), need: k });
    }
    let used = &encodings[..k];
    let rows: Vec<usize> = used.iter().map(|e| e.worker).collect();
    let (t, n) = used[0].w.shape();
    if used.iter().any(|e| e.w.shape() != (t, n)) {
        return Err(Error::Shape("worker encodings differ in shape".into()));
    }
    Ok((used, rows, t, n))
}

/// Recovers `Â^{-1}` (`N × kT`) from the first `k` encodings in response order.
///
/// Row `t` of every `W_ι` is handled on its own: the `k × N` slab is solved
/// against `G_I`, giving column `t` of each block. Nothing larger than one
/// slab plus `G_I` is formed.
pub fn coordinator_decode(encodings: &[WorkerEncoding], gen: &Generator) -> Result<Mat> {
    let (used, rows, t, n) = responders(encodings, gen)?;
    let k = gen.k();
    let solver = match gen {
        Generator::Brs(b) => Restricted::Brs(b),
        Generator::Dense(g) => {
            let lu = rows_of(g, &rows).lu();
            if !lu.is_invertible() {
                return Err(Error::Singular(format!("G restricted to {rows:?}")));
            }
            Restricted::Dense(lu)
        }
    };
    let mut out = Mat::zeros(n, k * t);
    let (mut re2, mut im2) = (0.0, 0.0);
    let mut slab = CMat::zeros(k, n);
    for tt in 0..t {
        for (r, e) in used.iter().enumerate() {
            slab.row_mut(r).copy_from(&e.w.row(tt));
        }
        let x = match &solver {
            Restricted::Brs(b) => b.apply_restricted_inverse(&rows, slab.clone())?,
            Restricted::Dense(lu) => lu.solve(&slab).ok_or_else(|| Error::Singular("G_I".into()))?,
        };
        for j in 0..k {
            for c in 0..n {
                let z = x[(j, c)];
                re2 += z.re * z.re;
                im2 += z.im * z.im;
                out[(c, j * t + tt)] = z.re;
            }
        }
    }
    let (re, im) = (re2.sqrt(), im2.sqrt());
    if !(im <= DECODE_RESIDUE_TOL * re.max(1.0)) {
        return Err(Error::NumericalIntegrity(format!("imaginary residue {im:.3e} against real norm {re:.3e}")));
    }
    Ok(out)
}

/// Reference decode that materializes `I_T ⊗ G_I^{-1}` and multiplies it
/// into the stacked responses.
pub fn naive_decode(encodings: &[WorkerEncoding], gen: &Generator) -> Result<Mat> {
    let (used, rows, t, n) = responders(encodings, gen)?;
    let k = gen.k();
    let ginv = lu_inverse(&rows_of(gen.matrix(), &rows)).ok_or_else(|| Error::Singular(format!("G restricted to {rows:?}")))?;
    let kron = CMat::identity(t, t).kronecker(&ginv);
    let stacked = CMat::from_fn(k * t, n, |r, c| used[r % k].w[(r / k, c)]);
    let x = kron * stacked;
    let mut out = Mat::zeros(n, k * t);
    for r in 0..k * t {
        let (tt, j) = (r / k, r % k);
        for c in 0..n {
            out[(c, j * t + tt)] = x[(r, c)].re;
        }
    }
    Ok(out)
}

/// Encode and decode closed over a generator that passed the MDS check.
#[derive(Debug, Clone)]
pub struct EncodingPair {
    pub gen: Generator,
    pub tasks: TaskAllocation,
    pub report: MdsReport,
}

pub fn build_encoding_pair(gen: Generator, max_subsets: usize, seed: u64) -> Result<EncodingPair> {
    let report = verify_mds(gen.matrix(), max_subsets, seed);
    if !report.passed {
        return Err(Error::UnusableGenerator(format!(
            "{} (worst condition {:.2e}, e.g. rows {:?})",
            report.summary(),
            report.max_condition,
            report.failures.first()
        )));
    }
    let tasks = allocate_tasks(&gen);
    Ok(EncodingPair { gen, tasks, report })
}

impl EncodingPair {
    pub fn encode(&self, blocks: &BTreeMap<usize, Mat>, worker: usize) -> Result<WorkerEncoding> {
        worker_encode(blocks, &self.gen, &self.tasks, worker)
    }

    pub fn decode(&self, encodings: &[WorkerEncoding]) -> Result<Mat> {
        coordinator_decode(encodings, &self.gen)
    }
}

/// Column blocks `𝒜̂_j` of an `N × kT` matrix.
pub fn column_blocks(x: &Mat, k: usize) -> BTreeMap<usize, Mat> {
    let t = x.ncols() / k;
    (0..k).map(|j| (j, x.columns(j * t, t).into_owned())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brs::{cyclic_generator, generator_matrix, CodeParams};
    use crate::field::{choose_field, PointSet};
    use crate::linalg::{gaussian_matrix, relative_frobenius, to_complex};
    use itertools::Itertools;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brs(n: usize, k: usize, d: Option<usize>) -> Generator {
        let params = match d {
            Some(d) => CodeParams::new(n, k, d).unwrap(),
            None => CodeParams::brs(n, k).unwrap(),
        };
        let spec = choose_field(n, 1, 3).unwrap();
        generator_matrix(&params, &PointSet::build(spec, n).unwrap()).unwrap().into()
    }

    fn encode_all(gen: &Generator, x: &Mat) -> Vec<WorkerEncoding> {
        let tasks = allocate_tasks(gen);
        let blocks = column_blocks(x, gen.k());
        (0..gen.n()).map(|i| worker_encode(&blocks, gen, &tasks, i).unwrap()).collect()
    }

    #[test]
    fn nine_six_allocation() {
        let t = allocate_tasks(&brs(9, 6, Some(6)));
        assert_eq!(t.per_worker[0], vec![0, 1, 3, 4]);
        assert!(t.replication(6).iter().all(|&c| c == 6));
        assert!(t.per_worker.iter().all(|s| s.len() == 4));
    }

    #[test]
    fn identity_allocation_and_decode() {
        let gen = brs(4, 4, None);
        let t = allocate_tasks(&gen);
        assert_eq!(t.per_worker, vec![vec![0], vec![1], vec![2], vec![3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian_matrix(8, 8, 1.0, &mut rng);
        let out = coordinator_decode(&encode_all(&gen, &x), &gen).unwrap();
        assert!(relative_frobenius(&out, &x) < 1e-12);
    }

    #[test]
    fn single_task_and_zero_blocks() {
        let gen = brs(4, 4, None);
        let t = allocate_tasks(&gen);
        let b = Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let blocks: BTreeMap<_, _> = (0..4).map(|j| (j, b.clone())).collect();
        let w = worker_encode(&blocks, &gen, &t, 2).unwrap();
        assert!((&w.w - to_complex(&b.transpose()) * gen.entry(2, 2)).norm() < 1e-14);
        let zeros: BTreeMap<_, _> = (0..4).map(|j| (j, Mat::zeros(3, 2))).collect();
        assert!(worker_encode(&zeros, &gen, &t, 1).unwrap().w.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn missing_block_is_incomplete_task() {
        let gen = brs(6, 3, None);
        let t = allocate_tasks(&gen);
        let blocks: BTreeMap<_, _> = [(0, Mat::zeros(2, 2))].into_iter().collect();
        let j = *t.per_worker[0].iter().find(|&&j| j != 0).unwrap();
        assert!(matches!(
            worker_encode(&blocks, &gen, &t, 0),
            Err(Error::IncompleteTask { worker: 0, block }) if block == j
        ));
    }

    #[test]
    fn encode_matches_kronecker_oracle() {
        let gen = brs(6, 3, None);
        let (n_rows, k, t) = (12, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = gaussian_matrix(n_rows, k * t, 1.0, &mut rng);
        let enc = encode_all(&gen, &x);
        // (I_T ⊗ G) times the stacked transposes, row t·n + ι
        let kron = CMat::identity(t, t).kronecker(gen.matrix());
        let stacked = CMat::from_fn(k * t, n_rows, |r, c| x[(c, (r % k) * t + r / k)].into());
        let full = kron * stacked;
        for e in &enc {
            for tt in 0..t {
                let want = full.row(tt * gen.n() + e.worker);
                assert!((e.w.row(tt) - want).norm() < 1e-12 * want.norm().max(1.0));
            }
            assert_eq!(e.symbol_count(), n_rows * t);
        }
    }

    #[test]
    fn extended_9_6_6_is_not_decodable() {
        let gen = brs(9, 6, Some(6));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_matrix(12, 12, 1.0, &mut rng);
        let enc = encode_all(&gen, &x);
        // the extended (9,6,6) code is not MDS; count how many subsets decode
        let mut ok = 0;
        for rows in (0..9).combinations(6) {
            let sel: Vec<_> = rows.iter().map(|&i| enc[i].clone()).collect();
            if let Ok(out) = coordinator_decode(&sel, &gen) {
                if relative_frobenius(&out, &x) < 1e-8 {
                    ok += 1;
                }
            }
        }
        assert!(ok < 84);
    }

    #[test]
    fn every_subset_decodes_10_5() {
        let gen = brs(10, 5, None);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_matrix(10, 10, 1.0, &mut rng);
        let enc = encode_all(&gen, &x);
        for rows in (0..10).combinations(5) {
            let sel: Vec<_> = rows.iter().map(|&i| enc[i].clone()).collect();
            let out = coordinator_decode(&sel, &gen).unwrap();
            assert!(relative_frobenius(&out, &x) < 1e-8, "{rows:?}");
        }
    }

    #[test]
    fn below_threshold() {
        let gen = brs(6, 3, None);
        let x = Mat::identity(6, 6);
        let enc = encode_all(&gen, &x);
        assert!(matches!(coordinator_decode(&enc[..2], &gen), Err(Error::ThresholdNotMet { have: 2, need: 3 })));
    }

    #[test]
    fn naive_agrees() {
        let gen = brs(10, 5, None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian_matrix(10, 10, 1.0, &mut rng);
        let enc = encode_all(&gen, &x);
        let sel = vec![enc[9].clone(), enc[2].clone(), enc[4].clone(), enc[7].clone(), enc[0].clone()];
        let a = coordinator_decode(&sel, &gen).unwrap();
        let b = naive_decode(&sel, &gen).unwrap();
        assert!(relative_frobenius(&a, &x) < 1e-9);
        assert!(relative_frobenius(&b, &x) < 1e-9);
    }

    #[test]
    fn cyclic_pair_random_subsets() {
        let spec = choose_field(6, 1, 0).unwrap();
        let gen: Generator = cyclic_generator(6, 2, spec, None).unwrap().into();
        let pair = build_encoding_pair(gen, 1000, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian_matrix(8, 8, 1.0, &mut rng);
        let blocks = column_blocks(&x, 4);
        let enc: Vec<_> = (0..6).map(|i| pair.encode(&blocks, i).unwrap()).collect();
        for _ in 0..50 {
            let rows = rand::seq::index::sample(&mut rng, 6, 4).into_vec();
            let sel: Vec<_> = rows.iter().map(|&i| enc[i].clone()).collect();
            assert!(relative_frobenius(&pair.decode(&sel).unwrap(), &x) < 1e-8);
        }
    }

    #[test]
    fn singular_generator_rejected() {
        let mut g = CMat::identity(4, 2);
        g[(2, 0)] = Complex64::new(1.0, 0.0);
        assert!(matches!(build_encoding_pair(Generator::Dense(g), 100, 0), Err(Error::UnusableGenerator(_))));
    }

    #[test]
    fn wire_round_trip() {
        let e = WorkerEncoding { worker: 3, w: CMat::from_fn(2, 3, |i, j| Complex64::new(i as f64, j as f64)) };
        assert_eq!(WorkerEncoding::from_bytes(&e.to_bytes().unwrap()).unwrap(), e);
    }
}
