//! The `gwi` command-line front end.
//!
//! Every output starts with a provenance record (tool version, seed and the
//! SHA-256 of the effective configuration). The worker count and output
//! location are not part of that configuration, so payloads are identical
//! across `--threads` values.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::harness::{run_convergence_experiment, ConvergenceConfig};
use crate::model::{
    classify_criticality, detect_case, is_lower_unipotent, is_strongly_critical, reducible_normal_form,
    spectral_radius, Case, GwiModel, SumMode,
};
use crate::moments::{growth_exponents, leading_asymptotic, mean_polynomial, moment_growth_targets, moment_table};
use crate::rng;
use crate::sde::{map_limit_paths, LimitSystem, TimeGrid};
use crate::simulate::{
    simulate_batch, weighted_sum_identity_1, weighted_sum_identity_2, weighted_sum_identity_3, write_long_csv,
    SimOptions,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One file with a `replica` column.
    Long,
    /// One file per replica.
    PerReplica,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumModeArg {
    Aggregated,
    Individual,
}

#[derive(Debug, Parser)]
#[command(name = "gwi", version, about = "Simulate and verify critical multi-type Galton-Watson processes with immigration")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlobalArgs {
    /// Seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 or absent picks the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// JSON file whose keys override the command-line values.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate trajectories of a model.
    Simulate(SimulateArgs),
    /// Exact mean and covariance tables and growth exponents.
    Moments(MomentsArgs),
    /// Simulate a limit diffusion.
    Sde(SdeArgs),
    /// Randomized battery of the exact weighted-sum identities.
    Identities(IdentitiesArgs),
    /// Monte Carlo convergence experiment against the limit diffusion.
    Converge(ConvergeArgs),
    /// Criticality, normal form, case and growth exponents of a model.
    Classify(ClassifyArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of generations K.
    #[arg(long, default_value_t = 100)]
    generations: u64,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    #[arg(long, value_enum, default_value_t = Layout::Long)]
    layout: Layout,
    #[arg(long, value_enum, default_value_t = SumModeArg::Aggregated)]
    sum_mode: SumModeArg,
    /// Comma-separated X_0; zero when absent.
    #[arg(long, value_delimiter = ',')]
    initial: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 20)]
    k_max: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SdeArgs {
    /// Derive the system from this model instead of the parameter flags.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    case: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    v: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    a21: f64,
    #[arg(long, default_value_t = 0.0)]
    a31: f64,
    #[arg(long, default_value_t = 0.0)]
    a32: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    paths: u64,
    /// Write every m-th grid point.
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentitiesArgs {
    #[arg(long, default_value_t = 100)]
    max_k: u64,
    #[arg(long, default_value_t = 500)]
    trials: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 7, 64])]
    n_values: Vec<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    case: u8,
    #[arg(long, value_delimiter = ',', default_values_t = [125u64, 250, 500, 1000, 2000])]
    n_list: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
    t_points: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    replicas: u64,
    #[arg(long, default_value_t = 2000)]
    sde_paths: u64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

/// Runs the CLI on `args` (including the program name) and returns the exit code:
/// 0 on success, 2 on a validation error, 1 on a runtime error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let msg = msg.trim_start_matches("error: ");
            eprintln!("error: validation: {}", one_line(msg));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Validation(m)) => {
            eprintln!("error: validation: {}", one_line(&m));
            2
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: runtime: {}", one_line(&m));
            1
        }
    }
}

/// Overlays the keys of the `--config` file on the command-line values.
///
/// Relative paths in the file are resolved against the file's directory.
fn merge_config<S: Serialize + for<'de> Deserialize<'de>>(
    global: GlobalArgs,
    sub: S,
) -> Result<(GlobalArgs, S), CliError> {
    let Some(path) = global.config.clone() else { return Ok((global, sub)) };
    let text = fs::read_to_string(&path).map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    let overrides: Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let Value::Object(mut g) = serde_json::to_value(&global).map_err(runtime)? else { unreachable!() };
    let Value::Object(mut s) = serde_json::to_value(&sub).map_err(runtime)? else { unreachable!() };
    for (key, mut value) in overrides {
        if matches!(key.as_str(), "model" | "out") {
            if let Value::String(p) = &value {
                if Path::new(p).is_relative() {
                    value = Value::String(base.join(p).to_string_lossy().into_owned());
                }
            }
        }
        if g.contains_key(&key) || matches!(key.as_str(), "threads" | "out") {
            g.insert(key, value);
        } else {
            s.insert(key, value);
        }
    }
    let mut global: GlobalArgs =
        serde_json::from_value(Value::Object(g)).map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    global.config = Some(path.clone());
    let sub = serde_json::from_value(Value::Object(s)).map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    Ok((global, sub))
}

/// Where and how results are written, plus the provenance of the run.
struct Output {
    dir: Option<PathBuf>,
    format: Format,
    seed: u64,
    config_hash: String,
}

impl Output {
    fn new<S: Serialize>(global: &GlobalArgs, command: &str, args: &S, model: Option<&GwiModel>) -> Result<Self, CliError> {
        if let Some(dir) = &global.out {
            fs::create_dir_all(dir).map_err(|e| validation(format!("output directory {}: {e}", dir.display())))?;
        }
        let hashed = json!({
            "command": command,
            "seed": global.seed,
            "format": global.format,
            "args": args,
            "model": model.map(GwiModel::to_file_spec),
        });
        let digest = Sha256::digest(serde_json::to_vec(&hashed).map_err(runtime)?);
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Output { dir: global.out.clone(), format: global.format, seed: global.seed, config_hash })
    }

    fn csv_header(&self) -> String {
        format!("# gwi {VERSION} seed={} config={}\n", self.seed, self.config_hash)
    }

    fn provenance(&self) -> Value {
        json!({ "tool": "gwi", "version": VERSION, "seed": self.seed, "config_sha256": self.config_hash })
    }

    /// Writes `body` (already formatted) to `name` in the output directory or to stdout.
    fn emit(&self, name: &str, body: &[u8]) -> Result<(), CliError> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(name);
                fs::write(&path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))
            }
            None => io::stdout().lock().write_all(body).map_err(runtime),
        }
    }

    fn emit_csv(&self, name: &str, body: &[u8]) -> Result<(), CliError> {
        let mut out = self.csv_header().into_bytes();
        out.extend_from_slice(body);
        self.emit(name, &out)
    }

    fn emit_json(&self, name: &str, mut payload: Map<String, Value>) -> Result<(), CliError> {
        payload.insert("provenance".into(), self.provenance());
        let mut text = serde_json::to_string_pretty(&Value::Object(payload)).map_err(runtime)?;
        text.push('\n');
        self.emit(name, text.as_bytes())
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let global = cli.global;
    let threads = global.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(runtime)?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => merge_config(global, a).and_then(|(g, a)| simulate(&g, &a)),
        Command::Moments(a) => merge_config(global, a).and_then(|(g, a)| moments(&g, &a)),
        Command::Sde(a) => merge_config(global, a).and_then(|(g, a)| sde(&g, &a)),
        Command::Identities(a) => merge_config(global, a).and_then(|(g, a)| identities(&g, &a)),
        Command::Converge(a) => merge_config(global, a).and_then(|(g, a)| converge(&g, &a)),
        Command::Classify(a) => merge_config(global, a).and_then(|(g, a)| classify(&g, &a)),
    })
}

fn load_model(path: &Path) -> Result<GwiModel, CliError> {
    GwiModel::load(path).map_err(validation)
}

fn simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let out = Output::new(global, "simulate", args, Some(&model))?;
    if args.layout == Layout::PerReplica && out.dir.is_none() {
        return Err(validation("--layout per-replica needs --out"));
    }
    let options = SimOptions {
        initial: args.initial.clone(),
        sum_mode: match args.sum_mode {
            SumModeArg::Aggregated => SumMode::Aggregated,
            SumModeArg::Individual => SumMode::Individual,
        },
    };
    let batch = simulate_batch(&model, args.generations, global.seed, args.replicas, &options).map_err(|e| match e {
        crate::simulate::SimulationError::InitialDimension { .. } => validation(e),
        e => runtime(e),
    })?;
    match (out.format, args.layout) {
        (Format::Csv, Layout::Long) => {
            let mut buf = Vec::new();
            write_long_csv(&batch, &mut buf).map_err(runtime)?;
            out.emit_csv("trajectories.csv", &buf)
        }
        (Format::Csv, Layout::PerReplica) => {
            for t in &batch {
                let mut buf = Vec::new();
                t.write_csv(&mut buf).map_err(runtime)?;
                out.emit_csv(&format!("trajectory_{}.csv", t.replica), &buf)?;
            }
            Ok(())
        }
        (Format::Json, Layout::Long) => {
            let trajectories: Vec<Value> =
                batch.iter().map(|t| json!({ "replica": t.replica, "states": t.states })).collect();
            let mut payload = Map::new();
            payload.insert("trajectories".into(), Value::Array(trajectories));
            out.emit_json("trajectories.json", payload)
        }
        (Format::Json, Layout::PerReplica) => {
            for t in &batch {
                let mut payload = Map::new();
                payload.insert("replica".into(), json!(t.replica));
                payload.insert("states".into(), json!(t.states));
                out.emit_json(&format!("trajectory_{}.json", t.replica), payload)?;
            }
            Ok(())
        }
    }
}

/// Exponent table of a lower-unipotent model; `None` otherwise.
fn exponent_table(model: &GwiModel) -> Result<Option<Value>, CliError> {
    if !is_lower_unipotent(model.mean_matrix()) {
        return Ok(None);
    }
    let exps = growth_exponents(model.mean_matrix(), model.immigration_mean()).map_err(runtime)?;
    let p = model.p();
    let polys = (0..p).map(|i| mean_polynomial(model, i)).collect::<Result<Vec<_>, _>>().map_err(runtime)?;
    let leading = (0..p).map(|i| leading_asymptotic(model, i)).collect::<Result<Vec<_>, _>>().map_err(runtime)?;
    let targets = moment_growth_targets(model).map_err(runtime)?;
    Ok(Some(json!({
        "eta": exps.eta,
        "first_immigrant": exps.first_immigrant.iter().map(|r| r + 1).collect::<Vec<_>>(),
        "mean_polynomial": polys.iter().map(|q| &q.coefficients).collect::<Vec<_>>(),
        "leading_term": leading,
        "growth_targets": targets,
    })))
}

fn moments(global: &GlobalArgs, args: &MomentsArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let out = Output::new(global, "moments", args, Some(&model))?;
    let table = moment_table(&model, args.k_max);
    let exponents = exponent_table(&model)?;
    let p = model.p();
    match out.format {
        Format::Csv => {
            let mut header = vec!["k".to_string()];
            header.extend((1..=p).map(|i| format!("EX_{i}")));
            header.extend((1..=p).flat_map(|i| (1..=p).map(move |j| format!("VarX_{i}{j}"))));
            let mut buf = header.join(",") + "\n";
            for row in &table {
                let mut cells = vec![row.k.to_string()];
                cells.extend(row.mean.iter().map(f64::to_string));
                cells.extend((0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| row.variance[(i, j)].to_string()));
                buf.push_str(&cells.join(","));
                buf.push('\n');
            }
            out.emit_csv("moments.csv", buf.as_bytes())?;
            if out.dir.is_some() {
                let mut payload = Map::new();
                payload.insert("exponents".into(), exponents.unwrap_or(Value::Null));
                out.emit_json("exponents.json", payload)?;
            }
            Ok(())
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .iter()
                .map(|r| {
                    let var: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| r.variance[(i, j)]).collect()).collect();
                    json!({ "k": r.k, "mean": r.mean.as_slice(), "variance": var })
                })
                .collect();
            let mut payload = Map::new();
            payload.insert("table".into(), Value::Array(rows));
            payload.insert("exponents".into(), exponents.unwrap_or(Value::Null));
            out.emit_json("moments.json", payload)
        }
    }
}

fn limit_system(args: &SdeArgs) -> Result<(LimitSystem, Option<GwiModel>), CliError> {
    if let Some(path) = &args.model {
        let model = load_model(path)?;
        let system = LimitSystem::from_model(&model).map_err(validation)?;
        return Ok((system, Some(model)));
    }
    let case = args.case.ok_or_else(|| validation("sde needs --model or --case"))?;
    let case = Case::try_from(case).map_err(validation)?;
    let triple = |name: &str, v: &Option<Vec<f64>>| -> Result<[f64; 3], CliError> {
        let v = v.as_ref().ok_or_else(|| validation(format!("--{name} is required with --case")))?;
        <[f64; 3]>::try_from(v.as_slice()).map_err(|_| validation(format!("--{name} needs 3 values")))
    };
    let system =
        LimitSystem::new(case, triple("b", &args.b)?, triple("v", &args.v)?, args.a21, args.a31, args.a32).map_err(validation)?;
    Ok((system, None))
}

fn sde(global: &GlobalArgs, args: &SdeArgs) -> Result<(), CliError> {
    let (system, model) = limit_system(args)?;
    let out = Output::new(global, "sde", args, model.as_ref())?;
    if args.every == 0 {
        return Err(validation("--every must be positive"));
    }
    let grid = TimeGrid::uniform(args.horizon, args.dt).map_err(validation)?;
    let keep: Vec<usize> = (0..grid.len()).filter(|m| m % args.every == 0 || *m == grid.len() - 1).collect();
    let paths = map_limit_paths(&system, &grid, global.seed, args.paths, |p| keep.iter().map(|&m| p.values[m]).collect::<Vec<_>>());
    let times: Vec<f64> = keep.iter().map(|&m| grid.times()[m]).collect();
    match out.format {
        Format::Csv => {
            let mut buf = String::from("path,t,X1,X2,X3\n");
            for (pi, values) in paths.iter().enumerate() {
                for (t, x) in times.iter().zip(values) {
                    buf.push_str(&format!("{pi},{t},{},{},{}\n", x[0], x[1], x[2]));
                }
            }
            out.emit_csv("sde_paths.csv", buf.as_bytes())
        }
        Format::Json => {
            let mut payload = Map::new();
            payload.insert("system".into(), json!(system));
            payload.insert("times".into(), json!(times));
            payload.insert("paths".into(), json!(paths));
            out.emit_json("sde_paths.json", payload)
        }
    }
}

fn identities(global: &GlobalArgs, args: &IdentitiesArgs) -> Result<(), CliError> {
    let out = Output::new(global, "identities", args, None)?;
    if args.max_k == 0 || args.n_values.is_empty() || args.n_values.contains(&0) {
        return Err(validation("--max-k and every --n-values entry must be positive"));
    }
    let mut rng = rng::stream(global.seed, 0);
    let mut failures: BTreeMap<&str, u64> = [("formula_1", 0), ("formula_2", 0), ("formula_3", 0)].into_iter().collect();
    for _ in 0..args.trials {
        let k = rng.random_range(1..=args.max_k);
        let n = args.n_values[rng.random_range(0..args.n_values.len())];
        let values: Vec<i64> = (0..=k).map(|_| rng.random_range(-1000..=1000)).collect();
        let f = |l: u64| num_rational::Ratio::from_integer(i128::from(values[l as usize]));
        let checks = [
            ("formula_1", weighted_sum_identity_1(f, k, n)),
            ("formula_2", weighted_sum_identity_2(f, k, n)),
            ("formula_3", weighted_sum_identity_3(f, k, n)),
        ];
        for (name, (lhs, rhs)) in checks {
            if lhs != rhs {
                *failures.get_mut(name).expect("known formula") += 1;
            }
        }
    }
    match out.format {
        Format::Csv => {
            let mut buf = String::from("identity,trials,failures\n");
            for (name, f) in &failures {
                buf.push_str(&format!("{name},{},{f}\n", args.trials));
            }
            out.emit_csv("identities.csv", buf.as_bytes())?;
        }
        Format::Json => {
            let mut payload = Map::new();
            payload.insert("trials".into(), json!(args.trials));
            payload.insert("failures".into(), json!(failures));
            out.emit_json("identities.json", payload)?;
        }
    }
    let total: u64 = failures.values().sum();
    if total > 0 {
        return Err(runtime(format!("{total} identity checks were not exact")));
    }
    Ok(())
}

fn converge(global: &GlobalArgs, args: &ConvergeArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let out = Output::new(global, "converge", args, Some(&model))?;
    let case = Case::try_from(args.case).map_err(validation)?;
    let config = ConvergenceConfig {
        n_list: args.n_list.clone(),
        t_points: args.t_points.clone(),
        replicas: args.replicas,
        sde_paths: args.sde_paths,
        dt: args.dt,
        seed: global.seed,
        ci_level: args.ci_level,
    };
    let report = run_convergence_experiment(&model, case, &config).map_err(|e| match e {
        crate::harness::HarnessError::Simulation(_) => runtime(e),
        e => validation(e),
    })?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(runtime)?;
    let mut payload = Map::new();
    payload.insert("report".into(), serde_json::to_value(&report).map_err(runtime)?);
    if out.dir.is_some() {
        out.emit_csv("report.csv", &csv)?;
        return out.emit_json("report.json", payload);
    }
    match out.format {
        Format::Csv => out.emit_csv("report.csv", &csv),
        Format::Json => out.emit_json("report.json", payload),
    }
}

fn classify(global: &GlobalArgs, args: &ClassifyArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let out = Output::new(global, "classify", args, Some(&model))?;
    let a = model.mean_matrix();
    let radius = spectral_radius(a).map_err(validation)?;
    let criticality = classify_criticality(a).map_err(validation)?;
    let strongly = is_strongly_critical(a).map_err(validation)?;
    let nf = reducible_normal_form(a).map_err(validation)?;
    let case = if model.p() == 3 { detect_case(a).ok() } else { None };
    let exponents = match case {
        Some(id) => {
            let m = model.permuted(&id.permutation).map_err(runtime)?;
            Some(growth_exponents(m.mean_matrix(), m.immigration_mean()).map_err(runtime)?.eta)
        }
        None if is_lower_unipotent(a) => Some(growth_exponents(a, model.immigration_mean()).map_err(runtime)?.eta),
        None => None,
    };
    let one_based = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
    match out.format {
        Format::Csv => {
            let join = |v: &[String]| v.join(" ");
            let fmt_u = |v: &[usize]| join(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
            let mut buf = String::from("field,value\n");
            buf.push_str(&format!("p,{}\n", model.p()));
            buf.push_str(&format!("spectral_radius,{radius}\n"));
            buf.push_str(&format!("criticality,{}\n", json!(criticality).as_str().unwrap_or_default()));
            buf.push_str(&format!("strongly_critical,{strongly}\n"));
            buf.push_str(&format!("normal_form_order,{}\n", fmt_u(&one_based(&nf.order))));
            buf.push_str(&format!("block_sizes,{}\n", fmt_u(&nf.block_sizes)));
            buf.push_str(&format!("case,{}\n", case.map(|c| c.case.to_string()).unwrap_or_default()));
            buf.push_str(&format!(
                "permutation,{}\n",
                case.map(|c| fmt_u(&one_based(&c.permutation))).unwrap_or_default()
            ));
            buf.push_str(&format!(
                "exponents,{}\n",
                exponents.as_ref().map(|e| join(&e.iter().map(u32::to_string).collect::<Vec<_>>())).unwrap_or_default()
            ));
            out.emit_csv("classify.csv", buf.as_bytes())
        }
        Format::Json => {
            let mut payload = Map::new();
            payload.insert("p".into(), json!(model.p()));
            payload.insert("spectral_radius".into(), json!(radius));
            payload.insert("criticality".into(), json!(criticality));
            payload.insert("strongly_critical".into(), json!(strongly));
            payload.insert("normal_form".into(), json!({ "order": one_based(&nf.order), "block_sizes": nf.block_sizes }));
            payload.insert("case".into(), json!(case.map(|c| c.case.number())));
            payload.insert("permutation".into(), json!(case.map(|c| one_based(&c.permutation))));
            payload.insert("exponents".into(), json!(exponents));
            out.emit_json("classify.json", payload)
        }
    }
}
