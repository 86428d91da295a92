//! Polynomial coded matrix multiplication and the coded left pseudoinverse.
//!
//! Round 1 recovers `B = AᵀA` with a polynomial code, round 2 is the coded
//! inversion of `B`, and round 3 multiplies the estimate by `Aᵀ` with a second
//! polynomial code that reuses the workers' cached `Ã^b_i`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::brs::{generator_matrix, CodeParams};
use crate::error::{Error, Result};
use crate::field::{embed, next_prime_above, PointSet};
use crate::inverse::{estimate_inverse, reference_inverse};
use crate::linalg::{real_part_checked, to_complex, CMat, Mat};
use crate::lsq::SolverConfig;
use crate::protocol::{allocate_tasks, coordinator_decode, worker_encode, Generator};
use crate::sharing::Party;
use crate::sim::{sample_stragglers, BlockSolver, StragglerModel};
use crate::vandermonde::{check_distinct, vandermonde_solve};

const RESIDUE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmmParams {
    pub k_bar: usize,
    pub a: usize,
    pub b: usize,
    /// evaluation point of each worker
    pub points: Vec<Complex64>,
    /// column width of each partition of A
    pub t_bar: usize,
}

impl CmmParams {
    pub fn new(k_bar: usize, a: usize, b: usize, points: Vec<Complex64>, t_bar: usize) -> Result<Self> {
        if k_bar == 0 {
            return Err(Error::Parameter("k_bar must be at least 1".into()));
        }
        let mut exps: Vec<usize> = (0..k_bar).flat_map(|j| (0..k_bar).map(move |l| j * a + l * b)).collect();
        exps.sort_unstable();
        exps.dedup();
        if exps.len() != k_bar * k_bar {
            return Err(Error::Parameter(format!("a={a}, b={b} give colliding exponents for k_bar={k_bar}")));
        }
        check_distinct(&points)?;
        Ok(CmmParams { k_bar, a, b, points, t_bar })
    }

    /// `(a, b) = (1, k̄)` at the roots of unity `e^{2πi·i/q′}`, `i = 1..n`.
    pub fn standard(k_bar: usize, n: usize, t_bar: usize) -> Result<Self> {
        let q = next_prime_above(n as u64);
        let points = (1..=n as u64).map(|i| embed(i, q)).collect();
        Self::new(k_bar, 1, k_bar.max(1), points, t_bar)
    }

    pub fn exponent(&self, j: usize, l: usize) -> usize {
        j * self.a + l * self.b
    }

    pub fn degree(&self) -> usize {
        (self.k_bar - 1) * (self.a + self.b)
    }

    /// Responses needed to interpolate every coefficient.
    pub fn recovery_threshold(&self) -> usize {
        self.degree() + 1
    }

    pub fn workers(&self) -> usize {
        self.points.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmEncoding {
    pub worker: usize,
    pub a_enc: CMat,
    pub b_enc: CMat,
}

fn encode_with<T>(parts: &[T], x: Complex64, step: usize, to_c: impl Fn(&T) -> CMat) -> CMat {
    let xs = x.powu(step as u32);
    let mut pow = Complex64::new(1.0, 0.0);
    let mut acc: Option<CMat> = None;
    for p in parts {
        let term = to_c(p) * pow;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
        pow *= xs;
    }
    acc.expect("at least one partition")
}

/// `Ã^a_i = Σ_j A_j γ_i^{ja}` and `Ã^b_i = Σ_j A_j γ_i^{jb}` (0-based j).
pub fn cmm_encode(parts: &[Mat], params: &CmmParams, worker: usize) -> Result<CmmEncoding> {
    if parts.len() != params.k_bar {
        return Err(Error::Shape(format!("{} partitions for k_bar={}", parts.len(), params.k_bar)));
    }
    let rows = parts[0].nrows();
    if parts.iter().any(|p| p.shape() != (rows, params.t_bar)) {
        return Err(Error::Shape(format!("partitions must all be {rows}x{}", params.t_bar)));
    }
    let x = *params.points.get(worker).ok_or_else(|| Error::Parameter(format!("no worker {worker}")))?;
    Ok(CmmEncoding {
        worker,
        a_enc: encode_with(parts, x, params.a, to_complex),
        b_enc: encode_with(parts, x, params.b, to_complex),
    })
}

/// `(Ã^a_i)ᵀ Ã^b_i` (plain transpose, no conjugation).
pub fn cmm_worker_multiply(enc: &CmmEncoding) -> CMat {
    enc.a_enc.transpose() * &enc.b_enc
}

/// Coefficients `C_0..C_{count-1}` of a matrix polynomial from its values at
/// `count` distinct points.
pub fn interpolate_coefficients(points: &[Complex64], values: &[&CMat], count: usize) -> Result<Vec<CMat>> {
    if points.len() < count || values.len() < count {
        return Err(Error::ThresholdNotMet { have: points.len().min(values.len()), need: count });
    }
    let (r, c) = values[0].shape();
    let mut rhs = CMat::from_fn(count, r * c, |i, e| values[i][(e / c, e % c)]);
    vandermonde_solve(&points[..count], &mut rhs)?;
    Ok((0..count).map(|i| CMat::from_fn(r, c, |a, b| rhs[(i, a * c + b)])).collect())
}

/// Assembles `AᵀA` from the first `recovery_threshold` products, given as
/// `(worker, product)` in response order.
pub fn cmm_decode(products: &[(usize, CMat)], params: &CmmParams) -> Result<Mat> {
    let need = params.recovery_threshold();
    if products.len() < need {
        return Err(Error::ThresholdNotMet { have: products.len(), need });
    }
    let used = &products[..need];
    let pts: Vec<Complex64> = used.iter().map(|(w, _)| params.points[*w]).collect();
    let vals: Vec<&CMat> = used.iter().map(|(_, p)| p).collect();
    let coeffs = interpolate_coefficients(&pts, &vals, need)?;
    let (kb, t) = (params.k_bar, params.t_bar);
    let mut out = CMat::zeros(kb * t, kb * t);
    for j in 0..kb {
        for l in 0..kb {
            out.view_mut((j * t, l * t), (t, t)).copy_from(&coeffs[params.exponent(j, l)]);
        }
    }
    real_part_checked(&out, RESIDUE_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmmMessage {
    EncodingA,
    EncodingB,
    GramProduct,
    SharedGram,
    SharedData,
    InverseEncoding,
    EncodingBinv,
    FinalProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmmEvent {
    pub round: usize,
    pub kind: CmmMessage,
    pub sender: Party,
    pub receiver: Party,
    pub symbol_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmmConfig {
    pub workers: usize,
    pub k_bar: usize,
    #[serde(default)]
    pub a: Option<usize>,
    #[serde(default)]
    pub b: Option<usize>,
    pub solver: SolverConfig,
    #[serde(default)]
    pub block_solver: BlockSolver,
    /// one model per round; a single entry applies to every round
    #[serde(default)]
    pub stragglers: Vec<StragglerModel>,
    /// column weight of the round-2 BRS mask; defaults to n − k + 1
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl CmmConfig {
    fn model(&self, round: usize) -> StragglerModel {
        match self.stragglers.len() {
            0 => StragglerModel::None,
            1 => self.stragglers[0].clone(),
            _ => self.stragglers.get(round - 1).cloned().unwrap_or(StragglerModel::None),
        }
    }

    /// Non-straggling workers of a round, fastest first.
    fn responders(&self, round: usize) -> Result<Vec<usize>> {
        let s = sample_stragglers(&self.model(round), self.workers, self.seed.wrapping_add(round as u64))?;
        let mut live: Vec<usize> = (0..self.workers).filter(|w| !s.set.contains(w)).collect();
        live.sort_by(|&x, &y| s.delays[x].total_cmp(&s.delays[y]).then(x.cmp(&y)));
        Ok(live)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PseudoinverseResult {
    /// `M × N`
    pub estimate: Mat,
    pub gram: Mat,
    pub gram_inverse: Mat,
    pub transcript: Vec<CmmEvent>,
    pub responders: Vec<Vec<usize>>,
}

struct Layout {
    m: usize,
    padded: usize,
    parts: Vec<Mat>,
    params: CmmParams,
    k: usize,
}

fn layout(a: &Mat, cfg: &CmmConfig) -> Result<Layout> {
    let (n_rows, m) = a.shape();
    if n_rows <= m {
        return Err(Error::Shape(format!("need N > M, got {n_rows}x{m}")));
    }
    let k = cfg.k_bar * cfg.k_bar;
    if cfg.k_bar == 0 || cfg.workers < k {
        return Err(Error::Config(format!("{} workers cannot cover k = k_bar^2 = {k}", cfg.workers)));
    }
    let padded = m.div_ceil(k) * k;
    let t_bar = padded / cfg.k_bar;
    let mut ap = Mat::zeros(n_rows, padded);
    ap.columns_mut(0, m).copy_from(a);
    let parts = (0..cfg.k_bar).map(|j| ap.columns(j * t_bar, t_bar).into_owned()).collect();
    let mut params = CmmParams::standard(cfg.k_bar, cfg.workers, t_bar)?;
    if cfg.a.is_some() || cfg.b.is_some() {
        params = CmmParams::new(cfg.k_bar, cfg.a.unwrap_or(params.a), cfg.b.unwrap_or(params.b), params.points, t_bar)?;
    }
    Ok(Layout { m, padded, parts, params, k })
}

fn send(tr: &mut Vec<CmmEvent>, round: usize, kind: CmmMessage, sender: Party, receiver: Party, symbol_count: usize) {
    tr.push(CmmEvent { round, kind, sender, receiver, symbol_count });
}

/// Round 1: every worker gets both encodings; the first responders' products give `AᵀA`.
fn gram_round(lay: &Layout, cfg: &CmmConfig, tr: &mut Vec<CmmEvent>) -> Result<(Mat, Vec<CmmEncoding>, Vec<usize>)> {
    let encs = (0..cfg.workers)
        .map(|i| cmm_encode(&lay.parts, &lay.params, i))
        .collect::<Result<Vec<_>>>()?;
    for e in &encs {
        send(tr, 1, CmmMessage::EncodingA, Party::Coordinator, Party::Worker(e.worker), e.a_enc.len());
        send(tr, 1, CmmMessage::EncodingB, Party::Coordinator, Party::Worker(e.worker), e.b_enc.len());
    }
    let resp = cfg.responders(1)?;
    let need = lay.params.recovery_threshold();
    if resp.len() < need {
        return Err(Error::RoundThresholdNotMet { round: 1, have: resp.len(), need });
    }
    let products: Vec<(usize, CMat)> = resp[..need].iter().map(|&w| (w, cmm_worker_multiply(&encs[w]))).collect();
    for (w, p) in &products {
        send(tr, 1, CmmMessage::GramProduct, Party::Worker(*w), Party::Coordinator, p.len());
    }
    let mut gram = cmm_decode(&products, &lay.params)?;
    // padded columns of A are zero; put ones on their diagonal so the Gram matrix stays invertible
    for i in lay.m..lay.padded {
        gram[(i, i)] = 1.0;
    }
    Ok((gram, encs, resp))
}

fn round_two_generator(cfg: &CmmConfig, k: usize) -> Result<Generator> {
    let n = cfg.workers;
    let params = CodeParams::new(n, k, cfg.d.unwrap_or(n - k + 1))?;
    let spec = crate::field::choose_field(n, 1, cfg.seed)?;
    let g = generator_matrix(&params, &PointSet::build(spec, n)?)?;
    Ok(g.into())
}

/// Column blocks of `X̂ ≈ (Bᵀ)^{-1}`, i.e. the rows `ĉ_i` of `B̂^{-1}`, one per block index.
fn gram_inverse_blocks(bt: &Mat, cfg: &CmmConfig, needed: impl Iterator<Item = usize>, width: usize) -> Result<BTreeMap<usize, Mat>> {
    let oracle = match cfg.block_solver {
        BlockSolver::Oracle => Some(reference_inverse(bt)?),
        BlockSolver::Iterative => None,
    };
    needed
        .map(|j| {
            let m = match &oracle {
                Some(inv) => inv.columns(j * width, width).into_owned(),
                None => estimate_inverse(bt, &cfg.solver, Some(j * width..(j + 1) * width))?.matrix,
            };
            Ok((j, m))
        })
        .collect()
}

/// Round 2 shared by both variants: workers solve their blocks, `post` maps
/// each block before encoding, and the coordinator decodes from k responses.
fn coded_round(
    gram: &Mat,
    cfg: &CmmConfig,
    k: usize,
    post: impl Fn(&Mat) -> Mat,
    tr: &mut Vec<CmmEvent>,
) -> Result<(Mat, Vec<usize>)> {
    let gen = round_two_generator(cfg, k)?;
    let tasks = allocate_tasks(&gen);
    let resp = cfg.responders(2)?;
    if resp.len() < k {
        return Err(Error::RoundThresholdNotMet { round: 2, have: resp.len(), need: k });
    }
    let used = &resp[..k];
    let width = gram.ncols() / k;
    let needed: std::collections::BTreeSet<usize> = used.iter().flat_map(|&w| tasks.per_worker[w].iter().copied()).collect();
    let blocks = gram_inverse_blocks(&gram.transpose(), cfg, needed.into_iter(), width)?;
    let blocks: BTreeMap<usize, Mat> = blocks.iter().map(|(&j, m)| (j, post(m))).collect();
    let encs = used
        .iter()
        .map(|&w| worker_encode(&blocks, &gen, &tasks, w))
        .collect::<Result<Vec<_>>>()?;
    for e in &encs {
        send(tr, 2, CmmMessage::InverseEncoding, Party::Worker(e.worker), Party::Coordinator, e.symbol_count());
    }
    Ok((coordinator_decode(&encs, &gen)?, resp))
}

/// Three rounds: CMM for `AᵀA`, coded inversion, CMM for `B̂^{-1}Aᵀ`.
///
/// Round 3 encodes the k̄ column blocks `D_j` of `B̂^{-1}` that match A's
/// partition; worker i returns `B̃^a_i (Ã^b_i)ᵀ = Σ_{j,l} D_j A_lᵀ γ_i^{ja+lb}`
/// and the coordinator keeps the diagonal terms `Σ_j D_j A_jᵀ`.
pub fn three_round_pseudoinverse(a: &Mat, cfg: &CmmConfig) -> Result<PseudoinverseResult> {
    let lay = layout(a, cfg)?;
    let mut tr = Vec::new();
    let (gram, encs, r1) = gram_round(&lay, cfg, &mut tr)?;

    for w in 0..cfg.workers {
        send(&mut tr, 2, CmmMessage::SharedGram, Party::Coordinator, Party::Worker(w), gram.len());
    }
    let (x_hat, r2) = coded_round(&gram, cfg, lay.k, |m| m.clone(), &mut tr)?;
    let binv = x_hat.transpose();

    let t = lay.params.t_bar;
    let d_parts: Vec<Mat> = (0..cfg.k_bar).map(|j| binv.columns(j * t, t).into_owned()).collect();
    let r3 = cfg.responders(3)?;
    let need = lay.params.recovery_threshold();
    let mut products = Vec::new();
    for (w, enc) in encs.iter().enumerate() {
        let b_enc = encode_with(&d_parts, lay.params.points[w], lay.params.a, to_complex);
        send(&mut tr, 3, CmmMessage::EncodingBinv, Party::Coordinator, Party::Worker(w), b_enc.len());
        if r3[..need.min(r3.len())].contains(&w) {
            products.push((w, b_enc * enc.b_enc.transpose()));
        }
    }
    if r3.len() < need {
        return Err(Error::RoundThresholdNotMet { round: 3, have: r3.len(), need });
    }
    products.sort_by_key(|(w, _)| r3.iter().position(|x| x == w));
    for (w, p) in &products {
        send(&mut tr, 3, CmmMessage::FinalProduct, Party::Worker(*w), Party::Coordinator, p.len());
    }
    let pts: Vec<Complex64> = products.iter().map(|(w, _)| lay.params.points[*w]).collect();
    let vals: Vec<&CMat> = products.iter().map(|(_, p)| p).collect();
    let coeffs = interpolate_coefficients(&pts, &vals, need)?;
    let mut sum = CMat::zeros(lay.padded, a.nrows());
    for j in 0..cfg.k_bar {
        sum += &coeffs[lay.params.exponent(j, j)];
    }
    let full = real_part_checked(&sum, RESIDUE_TOL)?;
    Ok(PseudoinverseResult {
        estimate: full.rows(0, lay.m).into_owned(),
        gram: gram.view((0, 0), (lay.m, lay.m)).into_owned(),
        gram_inverse: binv.view((0, 0), (lay.m, lay.m)).into_owned(),
        transcript: tr,
        responders: vec![r1, r2, r3],
    })
}

/// Two rounds: CMM for `AᵀA`, then workers hold `B` and `A` and encode
/// `(A𝒜̂_j)ᵀ` directly, so the coded decode returns `(B̂^{-1}Aᵀ)ᵀ`.
pub fn two_round_pseudoinverse(a: &Mat, cfg: &CmmConfig) -> Result<PseudoinverseResult> {
    let lay = layout(a, cfg)?;
    let mut tr = Vec::new();
    let (gram, _, r1) = gram_round(&lay, cfg, &mut tr)?;
    let mut ap = Mat::zeros(a.nrows(), lay.padded);
    ap.columns_mut(0, lay.m).copy_from(a);
    for w in 0..cfg.workers {
        send(&mut tr, 2, CmmMessage::SharedGram, Party::Coordinator, Party::Worker(w), gram.len());
        send(&mut tr, 2, CmmMessage::SharedData, Party::Coordinator, Party::Worker(w), ap.len());
    }
    let (y, r2) = coded_round(&gram, cfg, lay.k, |blk| &ap * blk, &mut tr)?;
    let width = lay.padded / lay.k;
    let gram_t = gram.transpose();
    let binv = gram_inverse_blocks(&gram_t, cfg, 0..lay.k, width)?;
    let mut x_hat = Mat::zeros(lay.padded, lay.padded);
    for (j, m) in binv {
        x_hat.columns_mut(j * width, width).copy_from(&m);
    }
    Ok(PseudoinverseResult {
        estimate: y.transpose().rows(0, lay.m).into_owned(),
        gram: gram.view((0, 0), (lay.m, lay.m)).into_owned(),
        gram_inverse: x_hat.transpose().view((0, 0), (lay.m, lay.m)).into_owned(),
        transcript: tr,
        responders: vec![r1, r2],
    })
}
