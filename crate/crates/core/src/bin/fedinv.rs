//! Experiment runner: error tables, decode benchmark, simulation, and the
//! single-matrix commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fedinv::brs::{cyclic_generator, generator_matrix, verify_mds, CodeParams};
use fedinv::cmm::{three_round_pseudoinverse, two_round_pseudoinverse, CmmConfig};
use fedinv::error::codes;
use fedinv::experiments::{
    bench_decode, order_of, run_tables, BenchSpec, TableRow, TableSpec, REFERENCE_CG_ORDERS, REFERENCE_CG_RF_ORDERS,
    REFERENCE_SD_ORDERS,
};
use fedinv::field::{choose_field, PointSet};
use fedinv::inverse::{error_report, estimate_inverse, pseudoinverse_bounds, reference_inverse, theoretical_bounds};
use fedinv::io::{load_config, load_matrix, save_matrix};
use fedinv::linalg::{condition_number, gaussian_matrix, Mat};
use fedinv::lsq::{Method, SolverConfig, StepRule};
use fedinv::sim::{run_protocol, NetworkConfig, StragglerModel};
use fedinv::{Error, Result};

const AGREEMENT_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "fedinv", version, about = "Coded federated matrix inversion experiments")]
struct Cli {
    /// overrides the seed of the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON parameters, or {"kind", "params", "output_dir"}
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (default: the config's output_dir, else ".")
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// SD and CG error tables on seeded Gaussian matrices
    Tables(TablesArgs),
    /// Streaming decode against the materialized Kronecker decode
    BenchDecode(BenchArgs),
    /// Run the four-phase protocol on one matrix
    Simulate(SimulateArgs),
    /// Estimate an inverse column by column
    Invert(InvertArgs),
    /// Coded left pseudoinverse of a tall matrix
    Pseudoinverse(PinvArgs),
    /// Check every k-row restriction of a generator
    VerifyCode(VerifyArgs),
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    only: Option<MethodArg>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    n: Option<usize>,
    /// comma-separated straggler counts
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<usize>>,
    #[arg(long)]
    t: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// matrix file (.csv or binary); a seeded Gaussian matrix otherwise
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// comma-separated 0-based straggling workers; replaces the config's model
    #[arg(long, value_delimiter = ',')]
    stragglers: Option<Vec<usize>>,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct PinvArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// size of the random input when no file is given
    #[arg(long, default_value_t = 24)]
    rows: usize,
    #[arg(long, default_value_t = 9)]
    cols: usize,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    cyclic: bool,
    #[arg(long)]
    max_subsets: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sd,
    Cg,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sd => Method::Sd,
            MethodArg::Cg => Method::Cg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Invert,
    Simulate,
    Pseudoinverse,
    Tables,
    BenchDecode,
    VerifyCode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSpec {
    kind: Kind,
    #[serde(default)]
    params: Value,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InvertSpec {
    #[serde(default)]
    input: Option<PathBuf>,
    #[serde(default = "default_invert_solver")]
    solver: SolverConfig,
}

fn default_invert_solver() -> SolverConfig {
    SolverConfig::cg(1e-10)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySpec {
    n: usize,
    k: usize,
    #[serde(default)]
    d: Option<usize>,
    #[serde(default)]
    cyclic: bool,
    #[serde(default = "default_max_subsets")]
    max_subsets: usize,
    #[serde(default)]
    seed: u64,
}

fn default_max_subsets() -> usize {
    100_000
}

struct Ctx {
    seed: Option<u64>,
    config: Option<(Value, Option<PathBuf>)>,
    out: PathBuf,
}

impl Ctx {
    /// The command's parameters: the config file's, or `fallback` without one.
    fn params<T: DeserializeOwned>(&self, kind: Kind, fallback: Option<Value>) -> Result<T> {
        let v = match &self.config {
            Some((v, _)) => v.clone(),
            None => fallback.ok_or_else(|| Error::Config(format!("{kind:?} needs --config")))?,
        };
        let v = unwrap_spec(v, kind)?;
        serde_path_to_error::deserialize(v).map_err(path_error)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Strips an `ExperimentSpec` wrapper, checking its kind.
fn unwrap_spec(v: Value, kind: Kind) -> Result<Value> {
    let wrapped = v.as_object().is_some_and(|o| o.contains_key("kind"));
    if !wrapped {
        return Ok(v);
    }
    let spec: ExperimentSpec = serde_path_to_error::deserialize(v).map_err(path_error)?;
    if spec.kind != kind {
        return Err(Error::Config(format!("config is for {:?}, command is {kind:?}", spec.kind)));
    }
    Ok(if spec.params.is_null() { json!({}) } else { spec.params })
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    Error::Config(format!("at `{}`: {}", e.path(), e.inner()))
}

fn output_dir_of(v: &Value) -> Option<PathBuf> {
    v.get("kind")?;
    serde_json::from_value::<ExperimentSpec>(v.clone()).ok()?.output_dir
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn random_matrix(rows: usize, cols: usize, scale: f64, seed: u64) -> Mat {
    gaussian_matrix(rows, cols, scale, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Serialize)]
struct TableCsvRow {
    method: Method,
    epsilon: f64,
    trials: usize,
    mean_err_l2: f64,
    mean_err_f: f64,
    mean_err_rf: f64,
    mean_iterations: f64,
    unconverged_columns: usize,
    bound_err_f: f64,
    bound_err_rf: Option<f64>,
    trials_within_bound: usize,
    reference_order: Option<i32>,
    reference_order_rf: Option<i32>,
}

fn reference_orders(row: &TableRow) -> (Option<i32>, Option<i32>) {
    let idx = |grid: &[f64]| grid.iter().position(|e| (e / row.epsilon - 1.0).abs() < 1e-9);
    match row.method {
        Method::Sd => idx(&[1e-1, 1e-2, 1e-3, 1e-4, 1e-5]).map_or((None, None), |i| (Some(REFERENCE_SD_ORDERS[i]), Some(REFERENCE_SD_ORDERS[i]))),
        Method::Cg => idx(&[1e-3, 1e-4, 1e-5, 1e-6, 1e-7])
            .map_or((None, None), |i| (Some(REFERENCE_CG_ORDERS[i]), Some(REFERENCE_CG_RF_ORDERS[i]))),
    }
}

fn cmd_tables(ctx: &Ctx, args: &TablesArgs) -> Result<i32> {
    let mut spec: TableSpec = ctx.params(Kind::Tables, Some(json!({})))?;
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    match args.only {
        Some(MethodArg::Sd) => spec.cg_epsilons.clear(),
        Some(MethodArg::Cg) => spec.sd_epsilons.clear(),
        None => {}
    }
    let rows = run_tables(&spec)?;
    let mut violations = Vec::new();
    for method in [Method::Sd, Method::Cg] {
        let name = match method {
            Method::Sd => "tables_sd.csv",
            Method::Cg => "tables_cg.csv",
        };
        let mut f = BufWriter::new(File::create(ctx.path(name))?);
        writeln!(
            f,
            "# A: {n}x{n}, i.i.d. entries {s}*N(0,1) (standard deviation {s}); {t} trials; seed {seed}",
            n = spec.n,
            s = spec.scale,
            t = spec.trials,
            seed = spec.seed
        )?;
        let mut w = csv::Writer::from_writer(f);
        for r in rows.iter().filter(|r| r.method == method) {
            let (o, orf) = reference_orders(r);
            if method == Method::Sd && r.trials_within_bound < r.trials {
                violations.push(r.epsilon);
            }
            w.serialize(TableCsvRow {
                method,
                epsilon: r.epsilon,
                trials: r.trials,
                mean_err_l2: r.mean_err_l2,
                mean_err_f: r.mean_err_f,
                mean_err_rf: r.mean_err_rf,
                mean_iterations: r.mean_iterations,
                unconverged_columns: r.unconverged_columns,
                bound_err_f: r.mean_bound_err_f,
                bound_err_rf: r.mean_bound_err_rf,
                trials_within_bound: r.trials_within_bound,
                reference_order: o,
                reference_order_rf: orf,
            })
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    let comparisons: Vec<Value> = rows
        .iter()
        .map(|r| {
            let (o, orf) = reference_orders(r);
            json!({
                "method": r.method, "epsilon": r.epsilon,
                "order_err_l2": order_of(r.mean_err_l2), "order_err_f": order_of(r.mean_err_f),
                "order_err_rf": order_of(r.mean_err_rf), "reference_order": o, "reference_order_rf": orf,
            })
        })
        .collect();
    write_json(&ctx.path("summary.json"), &json!({ "spec": spec, "rows": rows, "orders": comparisons, "sd_bound_violations": violations }))?;
    for r in &rows {
        println!(
            "{:?} eps={:.0e}  err_l2={:.2e} err_F={:.2e} err_rF={:.2e}  iters={:.1}  within bound {}/{}",
            r.method, r.epsilon, r.mean_err_l2, r.mean_err_f, r.mean_err_rf, r.mean_iterations, r.trials_within_bound, r.trials
        );
    }
    if violations.is_empty() {
        Ok(codes::OK)
    } else {
        eprintln!("SD error above its bound at eps {violations:?}");
        Ok(codes::NUMERICAL)
    }
}

fn cmd_bench(ctx: &Ctx, args: &BenchArgs) -> Result<i32> {
    let mut spec: BenchSpec = ctx.params(Kind::BenchDecode, Some(json!({})))?;
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(s) = &args.s {
        spec.s_values = s.clone();
    }
    if let Some(t) = args.t {
        spec.t = t;
    }
    let details = bench_decode(&spec)?;
    let mut w = csv::Writer::from_path(ctx.path("bench_decode.csv")).map_err(csv_err)?;
    for d in &details {
        w.serialize(&d.row).map_err(csv_err)?;
    }
    w.flush()?;
    write_json(&ctx.path("summary.json"), &json!({ "spec": spec, "units": "seconds; ops are complex multiply-adds", "runs": details }))?;
    let mut code = codes::OK;
    for d in &details {
        let r = &d.row;
        println!(
            "n={} k={} s={}  structured {:.3e}s  naive {:.3e}s  ops {:.3e} vs {:.3e}  max|diff|={:.3e}",
            r.n, r.k, r.s, r.t_structured, r.t_naive, d.ops_structured, d.ops_naive, r.max_abs_diff
        );
        if let Some(e) = &d.error {
            eprintln!("  decode failed: {e}");
        }
        if r.max_abs_diff.is_nan() || r.max_abs_diff >= AGREEMENT_TOL {
            code = codes::NUMERICAL;
        }
    }
    Ok(code)
}

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<i32> {
    let mut cfg: NetworkConfig = ctx.params(Kind::Simulate, None)?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(s) = &args.stragglers {
        cfg.straggler_model = StragglerModel::FixedSet(s.clone());
    }
    cfg.validate()?;
    let a = match &args.input {
        Some(p) => load_matrix(p)?,
        None => random_matrix(cfg.order, cfg.order, args.scale, cfg.seed),
    };
    let res = run_protocol(&a, &cfg)?;
    res.transcript.write_jsonl(BufWriter::new(File::create(ctx.path("transcript.jsonl"))?))?;
    if let Some(est) = &res.estimate {
        save_matrix(est, &ctx.path("estimate.csv"))?;
    }
    write_json(
        &ctx.path("summary.json"),
        &json!({
            "config": cfg, "threshold_met": res.threshold_met, "recovery_threshold": res.recovery_threshold,
            "stragglers": res.transcript.straggler_set, "responders": res.transcript.responders,
            "decode_time": res.transcript.decode_time, "error_report": res.error_report, "load": res.load,
            "generator_warnings": res.generator_warnings,
        }),
    )?;
    println!(
        "n={} k={} N={}  responders {}/{}  threshold {}",
        cfg.n(),
        cfg.k(),
        cfg.order,
        res.transcript.responders.len(),
        cfg.n(),
        if res.threshold_met { "met" } else { "NOT met" }
    );
    if let Some(r) = &res.error_report {
        println!("err_l2={:.3e} err_F={:.3e} err_rF={:.3e}", r.err_l2, r.err_f, r.err_rf);
    }
    res.require_estimate()?;
    Ok(codes::OK)
}

fn cmd_invert(ctx: &Ctx, args: &InvertArgs) -> Result<i32> {
    let fallback = args.input.as_ref().map(|_| json!({}));
    let mut spec: InvertSpec = ctx.params(Kind::Invert, fallback)?;
    if let Some(p) = &args.input {
        spec.input = Some(p.clone());
    }
    if let Some(m) = args.method {
        spec.solver.method = m.into();
    }
    if let Some(e) = args.epsilon {
        spec.solver.epsilon = e;
    }
    if let Some(m) = args.max_iters {
        spec.solver.max_iters = Some(m);
    }
    if let Some(s) = ctx.seed {
        spec.solver.seed = s;
    }
    if spec.solver.method == Method::Cg && matches!(spec.solver.step_rule, StepRule::Fixed(_)) {
        return Err(Error::Config("a fixed step applies to SD only".into()));
    }
    let path = spec.input.clone().ok_or_else(|| Error::Config("invert needs --input or `input`".into()))?;
    let a = load_matrix(&path)?;
    let est = estimate_inverse(&a, &spec.solver, None)?;
    let reference = reference_inverse(&a)?;
    let report = error_report(&est.matrix, &reference)?;
    let bounds = theoretical_bounds(&a, spec.solver.epsilon, spec.solver.method);
    save_matrix(&est.matrix, &ctx.path("inverse.csv"))?;
    let iterations: Vec<usize> = est.per_column_traces.iter().map(|t| t.iterations).collect();
    let summary = json!({
        "input": path, "solver": spec.solver,
        "frobenius_norm": est.matrix.norm(), "frobenius_norm_squared": est.matrix.norm_squared(),
        "reference_frobenius_norm": reference.norm(), "reference_frobenius_norm_squared": reference.norm_squared(),
        "condition_number": condition_number(&a), "iterations": iterations,
        "error_report": report, "bounds": bounds,
    });
    write_json(&ctx.path("summary.json"), &summary)?;
    println!(
        "‖Â⁻¹‖_F = {:.6}  ‖Â⁻¹‖_F² = {:.4}  κ(A) = {:.4}",
        est.matrix.norm(),
        est.matrix.norm_squared(),
        condition_number(&a)
    );
    println!("err_l2={:.3e} err_F={:.3e} err_rF={:.3e}  bound err_F={:.3e}", report.err_l2, report.err_f, report.err_rf, bounds.err_f);
    Ok(codes::OK)
}

fn cmd_pinv(ctx: &Ctx, args: &PinvArgs) -> Result<i32> {
    let mut cfg: CmmConfig = ctx.params(Kind::Pseudoinverse, None)?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let a = match &args.input {
        Some(p) => load_matrix(p)?,
        None => random_matrix(args.rows, args.cols, 1.0, cfg.seed),
    };
    let res = match args.rounds {
        3 => three_round_pseudoinverse(&a, &cfg)?,
        2 => two_round_pseudoinverse(&a, &cfg)?,
        r => return Err(Error::Config(format!("--rounds must be 2 or 3, got {r}"))),
    };
    save_matrix(&res.estimate, &ctx.path("pseudoinverse.csv"))?;
    let mut f = BufWriter::new(File::create(ctx.path("transcript.jsonl"))?);
    for ev in &res.transcript {
        serde_json::to_writer(&mut f, ev)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    let m = a.ncols();
    let left = &res.estimate * &a - Mat::identity(m, m);
    let direct = a.clone().pseudo_inverse(1e-13).map_err(|e| Error::Singular(e.to_string()))?;
    let report = error_report(&res.estimate, &direct)?;
    let bounds = pseudoinverse_bounds(&a, cfg.solver.epsilon);
    write_json(
        &ctx.path("summary.json"),
        &json!({
            "rows": a.nrows(), "cols": m, "rounds": args.rounds, "config": cfg,
            "left_identity_residual_f": left.norm(), "error_report": report, "bounds": bounds,
            "responders": res.responders,
        }),
    )?;
    println!(
        "{}x{} with {} workers, {} rounds  ‖Â†A − I‖_F = {:.3e}  err_rF = {:.3e}",
        a.nrows(),
        m,
        cfg.workers,
        args.rounds,
        left.norm(),
        report.err_rf
    );
    Ok(codes::OK)
}

fn cmd_verify(ctx: &Ctx, args: &VerifyArgs) -> Result<i32> {
    let fallback = match (args.n, args.k) {
        (Some(n), Some(k)) => Some(json!({ "n": n, "k": k })),
        _ => None,
    };
    let mut spec: VerifySpec = ctx.params(Kind::VerifyCode, fallback)?;
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(k) = args.k {
        spec.k = k;
    }
    if args.d.is_some() {
        spec.d = args.d;
    }
    if args.cyclic {
        spec.cyclic = true;
    }
    if let Some(m) = args.max_subsets {
        spec.max_subsets = m;
    }
    if let Some(s) = ctx.seed {
        spec.seed = s;
    }
    let field = choose_field(spec.n, 1, spec.seed)?;
    let (g, generator) = if spec.cyclic {
        let c = cyclic_generator(spec.n, spec.n - spec.k.min(spec.n), field, None)?;
        let info = json!({ "kind": "cyclic", "n": c.n, "s": c.s, "erased": c.erased, "support": c.support() });
        (c.g, info)
    } else {
        let params = match spec.d {
            Some(d) => CodeParams::new(spec.n, spec.k, d)?,
            None => CodeParams::brs(spec.n, spec.k)?,
        };
        let b = generator_matrix(&params, &PointSet::build(field, spec.n)?)?;
        for w in &b.warnings {
            eprintln!("warning: {w}");
        }
        let info = b.to_json();
        (b.g, info)
    };
    let report = verify_mds(&g, spec.max_subsets, spec.seed);
    write_json(&ctx.path("generator.json"), &generator)?;
    write_json(&ctx.path("summary.json"), &json!({ "spec": spec, "report": report }))?;
    println!("{}", report.summary());
    Ok(if report.passed { codes::OK } else { codes::NUMERICAL })
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(p) => {
            let v: Value = load_config(p)?;
            let dir = output_dir_of(&v);
            Some((v, dir))
        }
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.1.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    let ctx = Ctx { seed: cli.seed, config, out };
    match &cli.cmd {
        Cmd::Tables(a) => cmd_tables(&ctx, a),
        Cmd::BenchDecode(a) => cmd_bench(&ctx, a),
        Cmd::Simulate(a) => cmd_simulate(&ctx, a),
        Cmd::Invert(a) => cmd_invert(&ctx, a),
        Cmd::Pseudoinverse(a) => cmd_pinv(&ctx, a),
        Cmd::VerifyCode(a) => cmd_verify(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { codes::CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
