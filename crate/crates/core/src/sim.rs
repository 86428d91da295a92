//! Deterministic simulation of the four-phase federated protocol.
//!
//! Clients own column blocks of `A`; each client's servers act as workers.
//! Time is simulated: unit costs per transmitted symbol and per solver
//! iteration, plus an optional random delay per worker.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brs::{cyclic_generator, generator_matrix, CodeParams};
use crate::error::{Error, Result};
use crate::field::{choose_field, sample_eta, PointSet};
use crate::inverse::{error_report, estimate_inverse, reference_inverse, ErrorReport};
use crate::linalg::Mat;
use crate::lsq::SolverConfig;
use crate::protocol::{allocate_tasks, coordinator_decode, worker_encode, Generator, WorkerEncoding};
use crate::sharing::{decrypt_block, encrypt_block, generate_prp, ChannelKey, Party, Payload, SecureChannel};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StragglerModel {
    #[default]
    None,
    /// 0-based worker indices
    FixedSet(Vec<usize>),
    RandomSubset { s: usize, seed: u64 },
    /// i.i.d. exponential response delays; workers slower than `deadline` straggle
    ExpDelay {
        rate: f64,
        #[serde(default)]
        deadline: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSolver {
    #[default]
    Iterative,
    /// exact columns of the LU inverse
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Brs,
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub per_symbol: f64,
    pub per_iteration: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing { per_symbol: 1e-6, per_iteration: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// server count per client; k = number of clients, n = the sum
    pub servers_per_client: Vec<usize>,
    #[serde(rename = "N")]
    pub order: usize,
    pub gamma: usize,
    #[serde(default)]
    pub straggler_model: StragglerModel,
    pub solver: SolverConfig,
    #[serde(default)]
    pub block_solver: BlockSolver,
    #[serde(default)]
    pub generator: GeneratorKind,
    /// column weight of the BRS mask; defaults to n − k + 1
    #[serde(default)]
    pub d: Option<usize>,
    /// shuffle the evaluation points among workers
    #[serde(default)]
    pub permute_points: bool,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkConfig {
    pub fn k(&self) -> usize {
        self.servers_per_client.len()
    }

    pub fn n(&self) -> usize {
        self.servers_per_client.iter().sum()
    }

    /// Width of each client block after padding the order up to a multiple of k.
    pub fn block_width(&self) -> usize {
        self.order.div_ceil(self.k().max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n(), self.k());
        if k == 0 || self.servers_per_client.contains(&0) {
            return Err(Error::Config("every client needs at least one server".into()));
        }
        if n < k {
            return Err(Error::Config(format!("n={n} below k={k}")));
        }
        if self.order == 0 || self.gamma == 0 {
            return Err(Error::Config("N and gamma must be positive".into()));
        }
        if self.block_solver == BlockSolver::Iterative {
            self.solver.validate()?;
        }
        match &self.straggler_model {
            StragglerModel::FixedSet(s) if s.iter().any(|&w| w >= n) || s.len() > n => {
                return Err(Error::Config(format!("straggler set {s:?} not within {n} workers")));
            }
            StragglerModel::RandomSubset { s, .. } if *s > n => {
                return Err(Error::Config(format!("cannot pick {s} of {n} workers")));
            }
            StragglerModel::ExpDelay { rate, deadline } if !(*rate > 0.0) || deadline.is_some_and(|d| !(d >= 0.0)) => {
                return Err(Error::Config("exp_delay needs rate > 0 and deadline >= 0".into()));
            }
            _ => {}
        }
        if !(self.timing.per_symbol >= 0.0 && self.timing.per_iteration >= 0.0) {
            return Err(Error::Config("timing costs must be non-negative".into()));
        }
        Ok(())
    }

    /// Owning client of each worker.
    pub fn worker_clients(&self) -> Vec<usize> {
        self.servers_per_client
            .iter()
            .enumerate()
            .flat_map(|(c, &m)| std::iter::repeat_n(c, m))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stragglers {
    pub set: BTreeSet<usize>,
    /// extra response delay per worker (zero unless the model draws delays)
    pub delays: Vec<f64>,
}

pub fn sample_stragglers(model: &StragglerModel, n: usize, seed: u64) -> Result<Stragglers> {
    let mut delays = vec![0.0; n];
    let set = match model {
        StragglerModel::None => BTreeSet::new(),
        StragglerModel::FixedSet(s) => {
            if s.len() > n || s.iter().any(|&w| w >= n) {
                return Err(Error::Config(format!("straggler set {s:?} not within {n} workers")));
            }
            s.iter().copied().collect()
        }
        StragglerModel::RandomSubset { s, seed } => {
            if *s > n {
                return Err(Error::Config(format!("cannot pick {s} of {n} workers")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            sample(&mut rng, n, *s).into_iter().collect()
        }
        StragglerModel::ExpDelay { rate, deadline } => {
            let exp = Exp::new(*rate).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for d in delays.iter_mut() {
                *d = exp.sample(&mut rng);
            }
            let limit = deadline.unwrap_or(f64::INFINITY);
            (0..n).filter(|&i| delays[i] > limit).collect()
        }
    };
    Ok(Stragglers { set, delays })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    FieldParameters,
    Permutation,
    EncryptedBlock,
    Encoding,
    Decode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub phase: Phase,
    pub kind: MessageKind,
    pub sender: Party,
    pub receiver: Party,
    pub symbol_count: usize,
    pub sim_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<Event>,
    pub straggler_set: Vec<usize>,
    /// workers whose encodings were decoded, in arrival order
    pub responders: Vec<usize>,
    pub decode_time: Option<f64>,
}

impl Transcript {
    /// Routes a message, refusing anything the coordinator must never see.
    fn deliver(&mut self, ev: Event) -> Result<()> {
        let private = matches!(ev.kind, MessageKind::Permutation | MessageKind::EncryptedBlock);
        if private && ev.receiver == Party::Coordinator {
            return Err(Error::Protocol(format!("{:?} from {} may not reach the coordinator", ev.kind, ev.sender)));
        }
        if let Some(last) = self.events.last() {
            if ev.phase < last.phase {
                return Err(Error::Protocol(format!("phase {:?} after {:?}", ev.phase, last.phase)));
            }
        }
        self.events.push(ev);
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn phase_end(&self, phase: Phase) -> f64 {
        self.events.iter().filter(|e| e.phase == phase).map(|e| e.sim_time).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadTable {
    pub phase_a: usize,
    pub phase_b: usize,
    pub phase_c: usize,
    pub phase_d: usize,
    /// size of each encrypted-block message, grouped by sending client
    pub phase_b_per_client: BTreeMap<usize, Vec<usize>>,
    /// encoding symbols sent by each worker
    pub phase_c_per_worker: BTreeMap<usize, usize>,
}

impl LoadTable {
    /// Checks the `N·T` per-client and `N²/k` per-worker equalities.
    pub fn verify(&self, order: usize, k: usize) -> Result<()> {
        let t = order / k;
        for (c, sizes) in &self.phase_b_per_client {
            if let Some(&bad) = sizes.iter().find(|&&s| s != order * t) {
                return Err(Error::NumericalIntegrity(format!("client {c} sent {bad} symbols, expected N*T = {}", order * t)));
            }
        }
        for (w, &s) in &self.phase_c_per_worker {
            if s * k != order * order {
                return Err(Error::NumericalIntegrity(format!("worker {w} sent {s} symbols, expected N^2/k = {}", order * order / k)));
            }
        }
        Ok(())
    }
}

pub fn account_communication(tr: &Transcript) -> LoadTable {
    let mut t = LoadTable::default();
    for e in &tr.events {
        match e.phase {
            Phase::A => t.phase_a += e.symbol_count,
            Phase::B => t.phase_b += e.symbol_count,
            Phase::C => t.phase_c += e.symbol_count,
            Phase::D => t.phase_d += e.symbol_count,
        }
        match (e.kind, e.sender) {
            (MessageKind::EncryptedBlock, Party::Client(c)) => {
                t.phase_b_per_client.entry(c).or_default().push(e.symbol_count);
            }
            (MessageKind::Encoding, Party::Worker(w)) => {
                *t.phase_c_per_worker.entry(w).or_default() += e.symbol_count;
            }
            _ => {}
        }
    }
    t
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    pub estimate: Option<Mat>,
    pub transcript: Transcript,
    pub error_report: Option<ErrorReport>,
    pub threshold_met: bool,
    /// k, the number of encodings the decode needs
    pub recovery_threshold: usize,
    pub load: LoadTable,
    pub generator_warnings: Vec<String>,
}

impl SimResult {
    /// The estimate, or the threshold error if too few workers responded.
    pub fn require_estimate(&self) -> Result<&Mat> {
        self.estimate.as_ref().ok_or(Error::ThresholdNotMet {
            have: self.transcript.responders.len(),
            need: self.recovery_threshold,
        })
    }
}

/// Clients hold the column blocks of `A` (padded to `diag(A, I)` when k ∤ N).
pub fn run_protocol_blocks(blocks: &[Mat], cfg: &NetworkConfig) -> Result<SimResult> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    if blocks.iter().any(|b| b.nrows() != rows) || rows != cols {
        return Err(Error::Shape(format!("client blocks do not form a square matrix ({rows} rows, {cols} columns)")));
    }
    let mut a = Mat::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        a.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    run_protocol(&a, cfg)
}

fn pad_identity(a: &Mat, size: usize) -> Mat {
    let mut p = Mat::identity(size, size);
    p.view_mut((0, 0), a.shape()).copy_from(a);
    p
}

fn build_generator(cfg: &NetworkConfig, points: &PointSet) -> Result<(Generator, Vec<String>)> {
    let (n, k) = (cfg.n(), cfg.k());
    match cfg.generator {
        GeneratorKind::Brs => {
            let params = CodeParams::new(n, k, cfg.d.unwrap_or(n - k + 1))?;
            let g = generator_matrix(&params, points)?;
            let w = g.warnings.clone();
            Ok((g.into(), w))
        }
        GeneratorKind::Cyclic => {
            let spec = crate::field::FieldSpec { q: points.q, beta: points.beta };
            Ok((cyclic_generator(n, n - k, spec, None)?.into(), Vec::new()))
        }
    }
}

pub fn run_protocol(a: &Mat, cfg: &NetworkConfig) -> Result<SimResult> {
    cfg.validate()?;
    if !a.is_square() || a.nrows() != cfg.order {
        return Err(Error::Shape(format!("A is {}x{}, config says N={}", a.nrows(), a.ncols(), cfg.order)));
    }
    let (n, k, gamma) = (cfg.n(), cfg.k(), cfg.gamma);
    let t = cfg.block_width();
    let order = k * t;
    let ap = pad_identity(a, order);
    let sym = cfg.timing.per_symbol;
    let clients: Vec<Party> = (0..k).map(Party::Client).collect();
    let mut tr = Transcript::default();

    // (a) field parameters to every client
    let spec = choose_field(n, gamma, cfg.seed)?;
    let mut points = PointSet::build(spec, n.max(gamma))?;
    if cfg.permute_points {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        let perm: Vec<usize> = sample(&mut rng, points.len(), points.len()).into_vec();
        points = points.permuted(&perm)?;
    }
    let eta = sample_eta(spec, gamma, cfg.seed.wrapping_add(1))?;
    let mut channel = SecureChannel::new(ChannelKey(cfg.seed));
    let rec = channel.secure_broadcast(Party::Coordinator, &clients, Payload::FieldParameters { spec, eta: eta.clone() })?;
    for &r in &rec.recipients {
        tr.deliver(Event {
            phase: Phase::A,
            kind: MessageKind::FieldParameters,
            sender: Party::Coordinator,
            receiver: r,
            symbol_count: rec.symbols_each,
            sim_time: rec.symbols_each as f64 * sym,
        })?;
    }

    // (b) encrypted blocks and permutations between clients
    let start_b = tr.phase_end(Phase::A);
    let block_of = |c: usize| ap.columns(c * t, t).into_owned();
    let prps = (0..k)
        .map(|c| generate_prp(gamma, cfg.seed.wrapping_add(1000 + c as u64)))
        .collect::<Result<Vec<_>>>()?;
    let encrypted = (0..k)
        .into_par_iter()
        .map(|c| encrypt_block(&block_of(c), &points.embedded, &eta, &prps[c], c))
        .collect::<Result<Vec<_>>>()?;
    for c in 0..k {
        let others: Vec<Party> = clients.iter().copied().filter(|&p| p != Party::Client(c)).collect();
        let rec = channel.secure_broadcast(Party::Client(c), &others, Payload::Permutation { client_id: c, prp: prps[c].clone() })?;
        for &r in &others {
            tr.deliver(Event {
                phase: Phase::B,
                kind: MessageKind::Permutation,
                sender: Party::Client(c),
                receiver: r,
                symbol_count: rec.symbols_each,
                sim_time: start_b + rec.symbols_each as f64 * sym,
            })?;
            tr.deliver(Event {
                phase: Phase::B,
                kind: MessageKind::EncryptedBlock,
                sender: Party::Client(c),
                receiver: r,
                symbol_count: encrypted[c].symbol_count(),
                sim_time: start_b + (rec.symbols_each + encrypted[c].symbol_count()) as f64 * sym,
            })?;
        }
    }
    // every client rebuilds A from the f_ι it holds; all copies must agree bit for bit
    let rebuild = |_client: usize| -> Result<Mat> {
        let mut full = Mat::zeros(order, order);
        for (c, enc) in encrypted.iter().enumerate() {
            let blk = decrypt_block(enc, &prps[c], &eta, &points.embedded)?;
            full.columns_mut(c * t, t).copy_from(&blk);
        }
        Ok(full)
    };
    let shared = rebuild(0)?;
    for c in 1..k {
        if rebuild(c)? != shared {
            return Err(Error::NumericalIntegrity(format!("client {c} decrypted a different matrix")));
        }
    }

    // (c) block computation, encoding, straggling
    let (gen, generator_warnings) = build_generator(cfg, &points)?;
    let tasks = allocate_tasks(&gen);
    let stragglers = sample_stragglers(&cfg.straggler_model, n, cfg.seed.wrapping_add(2))?;
    let live: Vec<usize> = (0..n).filter(|w| !stragglers.set.contains(w)).collect();
    let needed: BTreeSet<usize> = live.iter().flat_map(|&w| tasks.per_worker[w].iter().copied()).collect();
    let oracle = match cfg.block_solver {
        BlockSolver::Oracle => Some(reference_inverse(&shared)?),
        BlockSolver::Iterative => None,
    };
    // one computation per block index, so workers sharing a task agree exactly
    let computed = needed
        .par_iter()
        .map(|&j| -> Result<(usize, (Mat, usize))> {
            let cols = j * t..(j + 1) * t;
            match &oracle {
                Some(inv) => Ok((j, (inv.columns(j * t, t).into_owned(), t))),
                None => {
                    let est = estimate_inverse(&shared, &cfg.solver, Some(cols))?;
                    let iters = est.per_column_traces.iter().map(|tr| tr.iterations).sum();
                    Ok((j, (est.matrix, iters)))
                }
            }
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let blocks: BTreeMap<usize, Mat> = computed.iter().map(|(&j, (m, _))| (j, m.clone())).collect();
    let start_c = tr.phase_end(Phase::B);
    let mut arrivals: Vec<(f64, WorkerEncoding)> = live
        .iter()
        .map(|&w| {
            let enc = worker_encode(&blocks, &gen, &tasks, w)?;
            let work: usize = tasks.per_worker[w].iter().map(|j| computed[j].1).sum();
            let time = start_c
                + work as f64 * cfg.timing.per_iteration
                + stragglers.delays[w]
                + enc.symbol_count() as f64 * sym;
            Ok((time, enc))
        })
        .collect::<Result<Vec<_>>>()?;
    arrivals.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.worker.cmp(&y.1.worker)));
    for (time, enc) in &arrivals {
        tr.deliver(Event {
            phase: Phase::C,
            kind: MessageKind::Encoding,
            sender: Party::Worker(enc.worker),
            receiver: Party::Coordinator,
            symbol_count: enc.symbol_count(),
            sim_time: *time,
        })?;
    }
    tr.straggler_set = stragglers.set.iter().copied().collect();

    // (d) decode from the first k arrivals
    let load_and = |tr: Transcript, estimate: Option<Mat>, report: Option<ErrorReport>, met: bool| SimResult {
        load: account_communication(&tr),
        estimate,
        transcript: tr,
        error_report: report,
        threshold_met: met,
        recovery_threshold: k,
        generator_warnings: generator_warnings.clone(),
    };
    if arrivals.len() < k {
        tr.responders = arrivals.iter().map(|(_, e)| e.worker).collect();
        return Ok(load_and(tr, None, None, false));
    }
    let encs: Vec<WorkerEncoding> = arrivals.iter().take(k).map(|(_, e)| e.clone()).collect();
    let decode_at = arrivals[k - 1].0;
    let full = coordinator_decode(&encs, &gen)?;
    let estimate = full.view((0, 0), (cfg.order, cfg.order)).into_owned();
    tr.responders = encs.iter().map(|e| e.worker).collect();
    tr.decode_time = Some(decode_at);
    tr.deliver(Event {
        phase: Phase::D,
        kind: MessageKind::Decode,
        sender: Party::Coordinator,
        receiver: Party::Coordinator,
        symbol_count: 0,
        sim_time: decode_at,
    })?;
    let report = error_report(&estimate, &reference_inverse(a)?)?;
    Ok(load_and(tr, Some(estimate), Some(report), true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, relative_frobenius};

    fn matrix(n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gaussian_matrix(n, n, 1.0, &mut rng) + Mat::identity(n, n) * (2.0 * (n as f64).sqrt())
    }

    fn cfg(servers: Vec<usize>, order: usize, gamma: usize, model: StragglerModel) -> NetworkConfig {
        NetworkConfig {
            servers_per_client: servers,
            order,
            gamma,
            straggler_model: model,
            solver: SolverConfig::cg(1e-12),
            block_solver: BlockSolver::Oracle,
            generator: GeneratorKind::Brs,
            d: None,
            permute_points: false,
            timing: Timing::default(),
            seed: 11,
        }
    }

    #[test]
    fn uncoded_iterative_run() {
        let a = matrix(16, 1);
        let mut c = cfg(vec![1; 4], 16, 2, StragglerModel::None);
        c.block_solver = BlockSolver::Iterative;
        c.solver = SolverConfig::sd(1e-10).with_max_iters(200_000);
        let r = run_protocol(&a, &c).unwrap();
        assert!(r.threshold_met);
        assert!(r.error_report.unwrap().err_rf < 1e-6);
    }

    #[test]
    fn stragglers_do_not_change_output() {
        let a = matrix(12, 2);
        let base = run_protocol(&a, &cfg(vec![2; 3], 12, 2, StragglerModel::None)).unwrap();
        let e0 = base.estimate.clone().unwrap();
        assert!(base.error_report.unwrap().err_rf < 1e-8);
        for s in [vec![0, 5, 3], vec![1, 2, 4], vec![5]] {
            let r = run_protocol(&a, &cfg(vec![2; 3], 12, 2, StragglerModel::FixedSet(s))).unwrap();
            assert!(relative_frobenius(r.estimate.as_ref().unwrap(), &e0) < 1e-8);
        }
        let too_many = run_protocol(&a, &cfg(vec![2; 3], 12, 2, StragglerModel::FixedSet(vec![0, 1, 2, 3]))).unwrap();
        assert!(!too_many.threshold_met);
        assert!(matches!(too_many.require_estimate(), Err(Error::ThresholdNotMet { .. })));
    }

    #[test]
    fn padding_when_k_does_not_divide_n() {
        let a = matrix(10, 3);
        let r = run_protocol(&a, &cfg(vec![2; 3], 10, 3, StragglerModel::RandomSubset { s: 3, seed: 4 })).unwrap();
        assert!(r.error_report.unwrap().err_rf < 1e-8);
    }

    #[test]
    fn transcript_deterministic_and_ordered() {
        let a = matrix(9, 4);
        let c = cfg(vec![2; 3], 9, 3, StragglerModel::ExpDelay { rate: 2.0, deadline: Some(5.0) });
        let r1 = run_protocol(&a, &c).unwrap();
        let r2 = run_protocol(&a, &c).unwrap();
        let (mut b1, mut b2) = (Vec::new(), Vec::new());
        r1.transcript.write_jsonl(&mut b1).unwrap();
        r2.transcript.write_jsonl(&mut b2).unwrap();
        assert_eq!(b1, b2);
        let phases: Vec<Phase> = r1.transcript.events.iter().map(|e| e.phase).collect();
        assert!(phases.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(phases.last(), Some(&Phase::D));
        assert!(r1
            .transcript
            .events
            .iter()
            .all(|e| e.receiver != Party::Coordinator || e.kind == MessageKind::Encoding || e.kind == MessageKind::Decode));
    }

    #[test]
    fn load_table_examples() {
        let a = matrix(16, 5);
        let r = run_protocol(&a, &cfg(vec![1; 4], 16, 2, StragglerModel::None)).unwrap();
        assert!(r.load.phase_c_per_worker.values().all(|&s| s == 64));
        assert!(r.load.phase_b_per_client.values().flatten().all(|&s| s == 64));
        r.load.verify(16, 4).unwrap();
        assert_eq!(account_communication(&Transcript::default()), LoadTable::default());
    }

    #[test]
    fn straggler_sampling() {
        let s = sample_stragglers(&StragglerModel::FixedSet(vec![3]), 6, 0).unwrap();
        assert_eq!(s.set, BTreeSet::from([3]));
        let m = StragglerModel::RandomSubset { s: 2, seed: 7 };
        let a = sample_stragglers(&m, 9, 0).unwrap();
        assert_eq!(a.set.len(), 2);
        assert_eq!(a, sample_stragglers(&m, 9, 99).unwrap());
        let e = sample_stragglers(&StragglerModel::ExpDelay { rate: 1.0, deadline: None }, 20, 3).unwrap();
        assert!(e.set.is_empty());
        assert!(matches!(sample_stragglers(&StragglerModel::FixedSet(vec![0; 7]), 6, 0), Err(Error::Config(_))));
    }

    #[test]
    fn coordinator_cannot_receive_blocks() {
        let mut tr = Transcript::default();
        let ev = Event {
            phase: Phase::B,
            kind: MessageKind::EncryptedBlock,
            sender: Party::Client(0),
            receiver: Party::Coordinator,
            symbol_count: 4,
            sim_time: 0.0,
        };
        assert!(matches!(tr.deliver(ev), Err(Error::Protocol(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let c = cfg(vec![2, 1], 6, 1, StragglerModel::RandomSubset { s: 1, seed: 3 });
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"N\":6"));
        assert_eq!(serde_json::from_str::<NetworkConfig>(&s).unwrap(), c);
        let bad = s.replace("\"gamma\"", "\"gama\"");
        assert!(serde_json::from_str::<NetworkConfig>(&bad).is_err());
    }
}
