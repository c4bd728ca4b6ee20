//! Command implementations behind the `mdcuts` binary.
//!
//! Every command writes its outputs into files and finishes with a
//! `manifest.json` listing the resolved configuration, the SHA-256 of the
//! input and every artifact written, so a run can be replayed later.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use markdown_cuts::driver::bench::{bench_pool, BenchMode};
use markdown_cuts::driver::compare::{compare_strategies, geometric_stats, DEFAULT_TARGETS};
use markdown_cuts::driver::{self, DriverConfig, MasterVariant, RunFailure, Strategy};
use markdown_cuts::gen::{self, GenSpec};
use markdown_cuts::master::MasterOptions;
use markdown_cuts::primal::PrimalSolution;
use markdown_cuts::{CutPool, Error, Instance, Offer};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "MDCUTS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mdcuts", version, about = "Cutting-plane Lagrangian solver for markdown pricing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an instance from a JSON generator spec.
    Generate(GenerateArgs),
    /// Run the cutting-plane loop on an instance.
    Solve(SolveArgs),
    /// Replay master solves on a frozen cut pool.
    Bench(BenchArgs),
    /// Run several strategies on one or more instances.
    Compare(CompareArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Generator spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Instance file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolverFlags {
    /// Outer iterations (exact relaxation evaluations).
    #[arg(long, default_value_t = 10)]
    pub outer: usize,
    /// Heuristic cuts per outer iteration.
    #[arg(long, default_value_t = 100)]
    pub inner: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tol_e: f64,
    /// none, random, max-violation, feasibility or mixed.
    #[arg(long, default_value = "max-violation")]
    pub strategy: String,
    /// aggregated, partial:M or disaggregated.
    #[arg(long, default_value = "aggregated")]
    pub master: String,
    /// Multiplier box; the instance value is used when absent.
    #[arg(long)]
    pub lambda_bar: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to $MDCUTS_THREADS, then to all cores.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl SolverFlags {
    pub fn driver_config(&self) -> anyhow::Result<DriverConfig> {
        let strategy: Strategy = self.strategy.parse()?;
        let master: MasterVariant = self.master.parse()?;
        let cfg = DriverConfig {
            outer_limit: self.outer,
            inner_limit: self.inner,
            tol_mu: self.tol_mu,
            tol_e: self.tol_e,
            strategy,
            lambda_bar: self.lambda_bar,
            master,
            seed: self.seed,
            ..DriverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Directory receiving trace, summary, solution, pool and manifest.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub flags: SolverFlags,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Pool file written by `solve`.
    #[arg(long)]
    pub pool: PathBuf,
    /// `heuristic` or `partial:M1,M2,...`.
    #[arg(long, default_value = "heuristic")]
    pub mode: String,
    /// Seed of the random article partitions.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Instance files; time-to-gap statistics aggregate over all of them.
    #[arg(long, required = true, num_args = 1..)]
    pub instance: Vec<PathBuf>,
    /// Comma-separated strategies.
    #[arg(long, default_value = "none,random,max-violation,feasibility", value_delimiter = ',')]
    pub strategies: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub flags: SolverFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the replayed outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    /// SHA-256 of each input file, in argument order.
    pub input_hashes: Vec<String>,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub tool_version: String,
}

impl RunManifest {
    fn new(subcommand: &str, config: &impl Serialize, inputs: &[&Path], seed: u64) -> anyhow::Result<Self> {
        Ok(Self {
            subcommand: subcommand.into(),
            config: serde_json::to_value(config)?,
            input_hashes: inputs.iter().map(|p| file_hash(p)).collect::<anyhow::Result<_>>()?,
            seed,
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    fn write(&mut self, path: &Path, contents: &str) -> anyhow::Result<()> {
        fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(path.to_path_buf());
        Ok(())
    }

    fn finish(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Selected offers of the final primal solution.
#[derive(Serialize)]
struct SolutionFile<'a> {
    #[serde(flatten)]
    primal: &'a PrimalSolution,
    offers: Option<&'a [Offer]>,
}

/// Exit code for a failed command: numerical aborts are told apart from
/// everything caused by the inputs.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        e.downcast_ref::<Error>().is_some_and(Error::is_numerical)
            || e.downcast_ref::<RunFailure>().is_some_and(|f| f.error.is_numerical())
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

/// Thread count from the flag, then the environment; `None` leaves the default.
pub fn resolve_threads(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag.filter(|&t| t > 0));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let t: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?;
            Ok((t > 0).then_some(t))
        }
        Err(_) => Ok(None),
    }
}

fn pool_for(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = resolve_threads(threads)? {
        b = b.num_threads(t);
    }
    Ok(b.build()?)
}

fn load_instance(path: &Path, lambda_bar: Option<f64>) -> anyhow::Result<Instance> {
    let mut inst = Instance::load(path).with_context(|| format!("loading instance {}", path.display()))?;
    if let Some(lb) = lambda_bar {
        inst.lambda_bar = lb;
    }
    Ok(inst)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<RunManifest> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = GenSpec::from_json(&text).context("parsing generator spec")?;
    let instance = gen::generate(&spec)?;
    let mut manifest = RunManifest::new("generate", args, &[&args.spec], spec.seed)?;
    manifest.write(&args.out, &instance.to_json()?)?;
    manifest.config["instance_hash"] = serde_json::Value::String(file_hash(&args.out)?);
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    manifest.finish(dir)?;
    log::info!("wrote {} ({} articles)", args.out.display(), instance.num_articles());
    Ok(manifest)
}

pub fn cmd_solve(args: &SolveArgs) -> anyhow::Result<RunManifest> {
    let cfg = args.flags.driver_config()?;
    let instance = load_instance(&args.instance, args.flags.lambda_bar)?;
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::new("solve", args, &[&args.instance], cfg.seed)?;
    let threads = pool_for(args.flags.threads)?;
    let result = threads.install(|| driver::run(&instance, &cfg));
    let trace_path = args.out_dir.join("trace.ndjson");
    let outcome = match result {
        Ok(o) => o,
        Err(failure) => {
            manifest.write(&trace_path, &failure.trace.to_ndjson())?;
            manifest.finish(&args.out_dir)?;
            return Err(failure.into());
        }
    };
    manifest.write(&trace_path, &outcome.trace.to_ndjson())?;
    manifest.write(&args.out_dir.join("summary.json"), &(serde_json::to_string_pretty(&outcome.summary)? + "\n"))?;
    let solution = SolutionFile { primal: &outcome.primal, offers: outcome.primal.offers.as_deref() };
    manifest.write(&args.out_dir.join("solution.json"), &(serde_json::to_string_pretty(&solution)? + "\n"))?;
    manifest.write(&args.out_dir.join("pool.json"), &outcome.pool.to_json()?)?;
    manifest.finish(&args.out_dir)?;
    let s = &outcome.summary;
    log::info!(
        "{:?}: dual {:.6e} mu {:.6e} gap {:?} after {} outer iterations",
        s.status,
        s.dual_bound,
        s.mu,
        s.gap_d_j,
        s.outer_iterations
    );
    Ok(manifest)
}

pub fn cmd_bench(args: &BenchArgs) -> anyhow::Result<RunManifest> {
    let mode: BenchMode = args.mode.parse()?;
    let text = fs::read_to_string(&args.pool).with_context(|| format!("reading {}", args.pool.display()))?;
    let pool = CutPool::from_json(&text).context("parsing pool file")?;
    let report = bench_pool(&pool, &mode, args.seed, &MasterOptions::default())?;
    let mut manifest = RunManifest::new("bench", args, &[&args.pool], args.seed)?;
    manifest.write(&args.out, &report.to_csv())?;
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    manifest.finish(dir)?;
    log::info!("best bound {:.9e} ({})", report.best_bound, report.best_source);
    Ok(manifest)
}

#[derive(Serialize)]
struct TimeToGapRow {
    strategy: String,
    target: f64,
    /// Milliseconds per instance; `null` where the target was never reached.
    times_ms: Vec<Option<f64>>,
    /// Over instances that reached the target.
    geometric_mean_ms: Option<f64>,
    geometric_std: Option<f64>,
    reached: usize,
}

pub fn cmd_compare(args: &CompareArgs) -> anyhow::Result<RunManifest> {
    let base = args.flags.driver_config()?;
    let configs = args
        .strategies
        .iter()
        .map(|s| Ok((s.clone(), DriverConfig { strategy: s.parse()?, ..base.clone() })))
        .collect::<anyhow::Result<Vec<_>>>()?;
    create_dir(&args.out_dir)?;
    let inputs: Vec<&Path> = args.instance.iter().map(PathBuf::as_path).collect();
    let mut manifest = RunManifest::new("compare", args, &inputs, base.seed)?;
    let threads = pool_for(args.flags.threads)?;
    let mut tables = Vec::new();
    for (idx, path) in args.instance.iter().enumerate() {
        let instance = load_instance(path, args.flags.lambda_bar)?;
        let cmp = threads.install(|| compare_strategies(&instance, &configs))?;
        manifest.write(&args.out_dir.join(format!("curves_{idx}.csv")), &cmp.to_csv())?;
        tables.push(cmp.time_to_gap(&DEFAULT_TARGETS));
    }
    let mut rows = Vec::new();
    for (s, (name, _)) in configs.iter().enumerate() {
        for (t, &target) in DEFAULT_TARGETS.iter().enumerate() {
            let times: Vec<Option<f64>> = tables.iter().map(|tab| tab[s].times_ms[t]).collect();
            // zero-time hits would break the log; clamp to a microsecond
            let reached: Vec<f64> = times.iter().flatten().map(|v| v.max(1e-3)).collect();
            let stats = geometric_stats(&reached);
            rows.push(TimeToGapRow {
                strategy: name.clone(),
                target,
                times_ms: times,
                geometric_mean_ms: stats.map(|s| s.0),
                geometric_std: stats.map(|s| s.1),
                reached: reached.len(),
            });
        }
    }
    manifest.write(&args.out_dir.join("time_to_gap.json"), &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    manifest.finish(&args.out_dir)?;
    Ok(manifest)
}

pub fn cmd_replay(args: &ReplayArgs) -> anyhow::Result<RunManifest> {
    let text = fs::read_to_string(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let recorded: RunManifest = serde_json::from_str(&text).context("parsing manifest")?;
    if recorded.tool_version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, replaying with {}", recorded.tool_version, env!("CARGO_PKG_VERSION"));
    }
    let config = recorded.config.clone();
    let out = |name: &str| args.out_dir.join(name);
    let replayed = match recorded.subcommand.as_str() {
        "generate" => {
            let mut a: GenerateArgs = serde_json::from_value(config)?;
            create_dir(&args.out_dir)?;
            a.out = out(a.out.file_name().map(|s| s.to_string_lossy().into_owned()).as_deref().unwrap_or("instance.json"));
            cmd_generate(&a)?
        }
        "solve" => {
            let mut a: SolveArgs = serde_json::from_value(config)?;
            a.out_dir = args.out_dir.clone();
            cmd_solve(&a)?
        }
        "bench" => {
            let mut a: BenchArgs = serde_json::from_value(config)?;
            create_dir(&args.out_dir)?;
            a.out = out(a.out.file_name().map(|s| s.to_string_lossy().into_owned()).as_deref().unwrap_or("bench.csv"));
            cmd_bench(&a)?
        }
        "compare" => {
            let mut a: CompareArgs = serde_json::from_value(config)?;
            a.out_dir = args.out_dir.clone();
            cmd_compare(&a)?
        }
        other => bail!("manifest names unknown subcommand '{other}'"),
    };
    if replayed.input_hashes != recorded.input_hashes {
        return Err(anyhow!("input files changed since the manifest was written"));
    }
    Ok(replayed)
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<RunManifest> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Replay(a) => cmd_replay(a),
    }
}
