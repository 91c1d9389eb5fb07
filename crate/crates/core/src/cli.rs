//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::lrt::{lrt_pvalue, LrtOptions, LrtResult, LrtTail};
use crate::baselines::mcmc::{mc_confset, mh_sample, McmcOptions, ProposalMode};
use crate::baselines::mle::DEFAULT_STARTS;
use crate::confset::{
    project_interval, scan_grid_with, Axis, Condition, ConfidenceSet, EvidenceEngine, EvidenceOptions, GridSpec,
    Interval, Method, ParamGrid, ScanOptions, DEFAULT_TIE_TOL,
};
use crate::data::{combine_named, parse_dataset, DatasetCatalog};
use crate::error::{domain, Error, Result};
use crate::io::{self, write_atomic, Format};
use crate::model::{simulate_with, Dataset, ParamPoint, DEFAULT_PRUNE_TOL};
use crate::rng::{stream, Purpose};

#[derive(Debug, Parser)]
#[command(
    name = "serocs",
    version,
    about = "Finite-sample confidence sets for seroprevalence studies"
)]
pub struct Cli {
    /// Suppress progress messages on standard error.
    #[arg(long, global = true, env = "SEROCS_QUIET")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a parameter grid and write the confidence set.
    Scan(ScanArgs),
    /// Project a saved confidence set onto one axis.
    Project(ProjectArgs),
    /// Simulated likelihood-ratio test at a list of points.
    Lrt(LrtArgs),
    /// Metropolis-Hastings chain and the Monte Carlo confidence set.
    Mcmc(McmcArgs),
    /// Empirical coverage at a fixed parameter.
    Coverage(CoverageArgs),
    /// Time evidence evaluation.
    Bench(BenchArgs),
    /// List or validate datasets.
    #[command(subcommand)]
    Datasets(DatasetsCommand),
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Built-in dataset name.
    #[arg(long, env = "SEROCS_DATASET", conflicts_with_all = ["dataset_file", "combine"])]
    pub dataset: Option<String>,
    /// Dataset document (TOML or JSON).
    #[arg(long, env = "SEROCS_DATASET_FILE", conflicts_with = "combine")]
    pub dataset_file: Option<PathBuf>,
    /// Combine built-ins, e.g. `santa-clara+la-county`.
    #[arg(long, env = "SEROCS_COMBINE")]
    pub combine: Option<String>,
    /// Count the common calibration study once when combining.
    #[arg(long, env = "SEROCS_SHARED_CALIBRATION")]
    pub shared_calibration: bool,
}

impl DatasetArgs {
    pub fn resolve(&self) -> Result<Dataset> {
        let catalog = DatasetCatalog::new();
        if let Some(path) = &self.dataset_file {
            return parse_dataset(&fs::read_to_string(path)?);
        }
        if let Some(spec) = &self.combine {
            return combine_named(&catalog, spec, self.shared_calibration);
        }
        match &self.dataset {
            Some(name) => catalog.get(name).cloned(),
            None => Err(domain("no dataset given; use --dataset, --dataset-file or --combine")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Grid, e.g. `p=0:0.05:0.0005,q=0.6:1:0.005,pi=0:0.2:0.001`.
    #[arg(long, env = "SEROCS_GRID")]
    pub grid: Option<GridSpec>,
    #[arg(long, default_value_t = 0.05, env = "SEROCS_ALPHA")]
    pub alpha: f64,
    /// Per-factor log-probability cutoff for pruning.
    #[arg(long, default_value_t = DEFAULT_PRUNE_TOL, env = "SEROCS_PRUNE_TOL", allow_hyphen_values = true)]
    pub prune_tol: f64,
    #[arg(long, default_value_t = 1, env = "SEROCS_WORKERS")]
    pub workers: usize,
    #[arg(long, default_value_t = 0, env = "SEROCS_SEED")]
    pub seed: u64,
}

impl EngineArgs {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!("--alpha {} outside (0, 1)", self.alpha)));
        }
        if self.workers == 0 {
            return Err(domain("--workers must be at least 1"));
        }
        if self.prune_tol.is_nan() || self.prune_tol >= 0.0 {
            return Err(domain("--prune-tol must be negative"));
        }
        Ok(())
    }

    fn grid(&self, dataset: &Dataset) -> Result<ParamGrid> {
        match &self.grid {
            Some(spec) => ParamGrid::from_spec(spec, &dataset.design),
            None => Ok(ParamGrid::default_for(&dataset.design)),
        }
    }

    fn evidence(&self) -> EvidenceOptions {
        EvidenceOptions {
            prune_tol: self.prune_tol,
            tie_tol: DEFAULT_TIE_TOL,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| domain(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, env = "SEROCS_OUT")]
    pub out: Option<PathBuf>,
    /// Output format; defaults to the extension of `--out`, else csv.
    #[arg(long, env = "SEROCS_FORMAT")]
    pub format: Option<Format>,
}

impl OutputArgs {
    fn format(&self) -> Format {
        self.format
            .or_else(|| self.out.as_deref().and_then(Format::from_path))
            .unwrap_or_default()
    }
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_enum, default_value_t = Method::Both, env = "SEROCS_METHOD")]
    pub method: Method,
    /// Also print the prevalence projection sliced at these values, e.g. `p=0.005`.
    #[arg(long, env = "SEROCS_CONDITION")]
    pub condition: Option<Condition>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Saved confidence set (CSV or JSON).
    #[arg(env = "SEROCS_INPUT")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Axis::Pi, env = "SEROCS_AXIS")]
    pub axis: Axis,
    #[arg(long, value_enum, default_value_t = Method::Alt, env = "SEROCS_METHOD")]
    pub method: Method,
    #[arg(long, env = "SEROCS_CONDITION")]
    pub condition: Option<Condition>,
}

#[derive(Debug, Args)]
pub struct LrtArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// CSV of points with columns p,q and k or pi.
    #[arg(long, env = "SEROCS_POINTS", conflicts_with = "sample")]
    pub points: Option<PathBuf>,
    /// Number of grid points to draw uniformly at random.
    #[arg(long, env = "SEROCS_SAMPLE")]
    pub sample: Option<usize>,
    /// Simulations per point.
    #[arg(long, short = 'r', default_value_t = 200, env = "SEROCS_R")]
    pub r: usize,
    #[arg(long, default_value_t = DEFAULT_STARTS, env = "SEROCS_STARTS")]
    pub starts: usize,
    #[arg(long, value_enum, default_value_t = LrtTail::Upper, env = "SEROCS_LRT_TAIL")]
    pub lrt_tail: LrtTail,
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Chain CSV (post-burn-in rows).
    #[arg(long, env = "SEROCS_OUT")]
    pub out: Option<PathBuf>,
    /// Full log-likelihood trace CSV.
    #[arg(long, env = "SEROCS_TRACE_OUT")]
    pub trace_out: Option<PathBuf>,
    /// Monte Carlo confidence set CSV over the grid.
    #[arg(long, env = "SEROCS_SET_OUT")]
    pub set_out: Option<PathBuf>,
    #[arg(long, default_value_t = 200_000, env = "SEROCS_ITERS")]
    pub iters: usize,
    /// Burn-in fraction.
    #[arg(long, default_value_t = 0.2, env = "SEROCS_BURN")]
    pub burn: f64,
    #[arg(long, default_value_t = 0.25, env = "SEROCS_PROPOSAL_SD")]
    pub proposal_sd: f64,
    #[arg(long, value_enum, default_value_t = ProposalMode::RandomWalk, env = "SEROCS_PROPOSAL")]
    pub proposal: ProposalMode,
    #[arg(long, env = "SEROCS_CONDITION")]
    pub condition: Option<Condition>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Study design taken from this built-in dataset.
    #[arg(long, env = "SEROCS_DATASET_DESIGN")]
    pub dataset_design: Option<String>,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// True parameter as `p,q,pi`.
    #[arg(long, env = "SEROCS_THETA")]
    pub theta: String,
    #[arg(long, default_value_t = 500, env = "SEROCS_REPS")]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, value_enum, default_value_t = Method::Alt, env = "SEROCS_METHOD")]
    pub method: Method,
    /// Number of random grid points to time.
    #[arg(long, default_value_t = 20, env = "SEROCS_BENCH_POINTS")]
    pub points: usize,
    /// Also time a full scan of the grid.
    #[arg(long, env = "SEROCS_BENCH_SCAN")]
    pub scan: bool,
}

#[derive(Debug, Subcommand)]
pub enum DatasetsCommand {
    /// Print the built-in datasets.
    List,
    /// Check a dataset document and print it in canonical form.
    Validate {
        #[arg(env = "SEROCS_DATASET_FILE")]
        file: PathBuf,
    },
}

/// Progress reporter that writes to standard error at most once per second.
struct Reporter {
    quiet: bool,
    last: Mutex<Instant>,
    label: &'static str,
}

impl Reporter {
    fn new(quiet: bool, label: &'static str) -> Self {
        Self {
            quiet,
            last: Mutex::new(Instant::now()),
            label,
        }
    }

    fn tick(&self, done: usize, total: usize) {
        if self.quiet {
            return;
        }
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if last.elapsed() >= Duration::from_secs(1) {
            *last = Instant::now();
            eprintln!("{}: {done}/{total}", self.label);
        }
    }
}

fn format_intervals(v: &[Interval]) -> String {
    if v.is_empty() {
        "empty".to_string()
    } else {
        v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct ScanMeta<'a> {
    version: &'a str,
    dataset: &'a str,
    design: crate::model::StudyDesign,
    observed: crate::model::PositiveCounts,
    alpha: f64,
    method: Method,
    prune_tol: f64,
    seed: u64,
    workers: usize,
    grid_points: usize,
    p_axis: (f64, f64, usize),
    q_axis: (f64, f64, usize),
    k_axis: (u32, u32, usize),
    elapsed_seconds: f64,
    max_mass_deficit: f64,
    members_basic: usize,
    members_alt: usize,
}

fn print_projections(set: &ConfidenceSet, condition: Option<&Condition>, out: &mut dyn Write) -> Result<()> {
    for method in [Method::Basic, Method::Alt] {
        let computed = match method {
            Method::Basic => set.method.includes_basic(),
            _ => set.method.includes_alt(),
        };
        if !computed {
            continue;
        }
        let all = project_interval(set, Axis::Pi, &Condition::default(), method)?;
        writeln!(out, "{method} pi: {}", format_intervals(&all))?;
        if let Some(c) = condition {
            let sliced = project_interval(set, Axis::Pi, c, method)?;
            writeln!(
                out,
                "{method} pi | {}: {}",
                condition_label(c),
                format_intervals(&sliced)
            )?;
        }
    }
    Ok(())
}

fn condition_label(c: &Condition) -> String {
    let mut parts = Vec::new();
    if let Some(p) = c.p {
        parts.push(format!("p={p}"));
    }
    if let Some(q) = c.q {
        parts.push(format!("q={q}"));
    }
    if let Some(pi) = c.pi {
        parts.push(format!("pi={pi}"));
    }
    parts.join(",")
}

fn cmd_scan(args: &ScanArgs, quiet: bool, out: &mut dyn Write) -> Result<()> {
    args.engine.validate()?;
    let dataset = args.data.resolve()?;
    let grid = args.engine.grid(&dataset)?;
    let options = ScanOptions {
        alpha: args.engine.alpha,
        method: args.method,
        workers: args.engine.workers,
        evidence: args.engine.evidence(),
    };
    let reporter = Reporter::new(quiet, "scan");
    let progress = |done: usize, total: usize| reporter.tick(done, total);
    let start = Instant::now();
    let set = scan_grid_with(&grid, &dataset, &options, Some(&progress))?;
    let elapsed = start.elapsed().as_secs_f64();

    let path = args
        .output
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.confset.{}", dataset.label, ext(args.output.format()))));
    io::write_confset(&set, &path, args.output.format())?;
    let axis = |v: &[f64]| (v[0], v[v.len() - 1], v.len());
    let meta = ScanMeta {
        version: io::TOOL_VERSION,
        dataset: &dataset.label,
        design: dataset.design,
        observed: dataset.observed,
        alpha: options.alpha,
        method: options.method,
        prune_tol: options.evidence.prune_tol,
        seed: args.engine.seed,
        workers: options.workers,
        grid_points: grid.len(),
        p_axis: axis(&grid.p_values),
        q_axis: axis(&grid.q_values),
        k_axis: (
            grid.k_values[0],
            grid.k_values[grid.k_values.len() - 1],
            grid.k_values.len(),
        ),
        elapsed_seconds: elapsed,
        max_mass_deficit: set.max_mass_deficit(),
        members_basic: set.member_count(Method::Basic),
        members_alt: set.member_count(Method::Alt),
    };
    let meta_text = serde_json::to_string_pretty(&meta)? + "\n";
    write_atomic(&sidecar_path(&path), |w| Ok(w.write_all(meta_text.as_bytes())?))?;

    writeln!(out, "dataset: {}", dataset.label)?;
    writeln!(out, "grid points: {}", grid.len())?;
    writeln!(out, "output: {}", path.display())?;
    print_projections(&set, args.condition.as_ref(), out)?;
    Ok(())
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn cmd_project(args: &ProjectArgs, out: &mut dyn Write) -> Result<()> {
    let set = io::read_confset(&args.input)?;
    let cond = args.condition.unwrap_or_default();
    let intervals = project_interval(&set, args.axis, &cond, args.method)?;
    writeln!(out, "{} {}: {}", args.method, args.axis, format_intervals(&intervals))?;
    Ok(())
}

fn sample_grid_points(grid: &ParamGrid, n: usize, seed: u64) -> Vec<ParamPoint> {
    let mut rng = stream(seed, Purpose::Sampling, 0);
    let mut idx = sample(&mut rng, grid.len(), n.min(grid.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| grid.point(i)).collect()
}

fn cmd_lrt(args: &LrtArgs, quiet: bool, out: &mut dyn Write) -> Result<()> {
    args.engine.validate()?;
    let dataset = args.data.resolve()?;
    let points = match (&args.points, args.sample) {
        (Some(path), _) => io::read_points(&fs::read_to_string(path)?, &dataset.design)?,
        (None, Some(n)) => sample_grid_points(&args.engine.grid(&dataset)?, n, args.engine.seed),
        (None, None) => return Err(domain("give --points FILE or --sample N")),
    };
    let opts = LrtOptions {
        tail: args.lrt_tail,
        alpha: args.engine.alpha,
        starts: args.starts,
    };
    let reporter = Reporter::new(quiet, "lrt");
    let pool = args.engine.pool()?;
    let mut results: Vec<LrtResult> = Vec::with_capacity(points.len());
    pool.install(|| -> Result<()> {
        for (i, theta) in points.iter().enumerate() {
            results.push(lrt_pvalue(
                theta,
                &dataset,
                args.r,
                crate::rng::child_seed(args.engine.seed, i as u64),
                &opts,
            )?);
            reporter.tick(i + 1, points.len());
        }
        Ok(())
    })?;
    let text = io::lrt_to_csv(&results, &dataset.design)?;
    match &args.output.out {
        Some(path) => {
            write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
            let rejected = results.iter().filter(|r| r.reject).count();
            writeln!(out, "points: {}, rejected: {rejected}", results.len())?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_mcmc(args: &McmcArgs, out: &mut dyn Write) -> Result<()> {
    args.engine.validate()?;
    let dataset = args.data.resolve()?;
    let opts = McmcOptions {
        iters: args.iters,
        burn_frac: args.burn,
        proposal_sd: args.proposal_sd,
        mode: args.proposal,
        seed: args.engine.seed,
    };
    let chain = mh_sample(&dataset, &opts)?;
    if let Some(path) = &args.out {
        let text = io::chain_to_csv(&chain)?;
        write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    if let Some(path) = &args.trace_out {
        let text = io::trace_to_csv(&chain)?;
        write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    let grid = args.engine.grid(&dataset)?;
    let set = args.engine.pool()?.install(|| mc_confset(&chain, &dataset, &grid))?;
    if let Some(path) = &args.set_out {
        let text = io::mc_confset_to_csv(&set)?;
        write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    let ci = chain.credible_interval(0.95)?;
    writeln!(out, "acceptance rate: {}", chain.acceptance_rate)?;
    writeln!(out, "post-burn samples: {}", chain.samples.len())?;
    writeln!(out, "credible pi: {ci}")?;
    writeln!(out, "mc threshold: {}", set.threshold)?;
    writeln!(
        out,
        "mc pi: {}",
        format_intervals(&set.project(Axis::Pi, &Condition::default())?)
    )?;
    if let Some(c) = &args.condition {
        writeln!(
            out,
            "mc pi | {}: {}",
            condition_label(c),
            format_intervals(&set.project(Axis::Pi, c)?)
        )?;
    }
    Ok(())
}

fn parse_theta(text: &str, design: &crate::model::StudyDesign) -> Result<ParamPoint> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| domain(format!("--theta `{text}` must be p,q,pi")))?;
    match v.as_slice() {
        [p, q, pi] => {
            let theta = ParamPoint::from_prevalence(*p, *q, *pi, design)?;
            design.check_theta(&theta)?;
            Ok(theta)
        }
        _ => Err(domain(format!("--theta `{text}` must be p,q,pi"))),
    }
}

/// Coverage of `theta` by both constructions over simulated datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub reps: usize,
    pub basic: f64,
    pub alt: f64,
}

pub fn coverage(
    dataset: &Dataset,
    theta: &ParamPoint,
    reps: usize,
    alpha: f64,
    evidence: EvidenceOptions,
    seed: u64,
) -> Result<Coverage> {
    if reps == 0 {
        return Err(domain("--reps must be at least 1"));
    }
    dataset.design.check_theta(theta)?;
    let hits: Vec<(bool, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Purpose::Coverage, i);
            let s = simulate_with(theta, &dataset.design, &mut rng);
            let engine = EvidenceEngine::new(dataset.design, s, evidence)?;
            let summary = engine.evaluate(theta)?;
            Ok((summary.basic() > alpha, summary.alt() > alpha))
        })
        .collect::<Result<_>>()?;
    let count = |f: fn(&(bool, bool)) -> bool| hits.iter().filter(|h| f(h)).count() as f64 / reps as f64;
    Ok(Coverage {
        reps,
        basic: count(|h| h.0),
        alt: count(|h| h.1),
    })
}

fn cmd_coverage(args: &CoverageArgs, out: &mut dyn Write) -> Result<()> {
    args.engine.validate()?;
    let dataset = match &args.dataset_design {
        Some(name) => DatasetCatalog::new().get(name).cloned()?,
        None => args.data.resolve()?,
    };
    let theta = parse_theta(&args.theta, &dataset.design)?;
    let cov = args.engine.pool()?.install(|| {
        coverage(
            &dataset,
            &theta,
            args.reps,
            args.engine.alpha,
            args.engine.evidence(),
            args.engine.seed,
        )
    })?;
    writeln!(out, "theta: p={} q={} k={}", theta.p, theta.q, theta.k)?;
    writeln!(out, "reps: {}", cov.reps)?;
    writeln!(out, "coverage basic: {}", cov.basic)?;
    writeln!(out, "coverage alt: {}", cov.alt)?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs, quiet: bool, out: &mut dyn Write) -> Result<()> {
    args.engine.validate()?;
    let dataset = args.data.resolve()?;
    let grid = args.engine.grid(&dataset)?;
    let engine = EvidenceEngine::for_dataset(&dataset, args.engine.evidence())?;
    let points = sample_grid_points(&grid, args.points.max(1), args.engine.seed);
    let mut times = Vec::with_capacity(points.len());
    for theta in &points {
        let t = Instant::now();
        let summary = engine.evaluate(theta)?;
        let value = match args.method {
            Method::Basic => summary.basic(),
            _ => summary.alt(),
        };
        std::hint::black_box(value);
        times.push(t.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let max = times.iter().cloned().fold(0.0, f64::max);
    writeln!(out, "method: {}", args.method)?;
    writeln!(out, "points timed: {}", times.len())?;
    writeln!(out, "per-theta seconds mean: {mean}")?;
    writeln!(out, "per-theta seconds max: {max}")?;
    if args.scan {
        let options = ScanOptions {
            alpha: args.engine.alpha,
            method: args.method,
            workers: args.engine.workers,
            evidence: args.engine.evidence(),
        };
        let reporter = Reporter::new(quiet, "bench scan");
        let progress = |d: usize, t: usize| reporter.tick(d, t);
        let t = Instant::now();
        scan_grid_with(&grid, &dataset, &options, Some(&progress))?;
        let secs = t.elapsed().as_secs_f64();
        writeln!(out, "scan seconds: {secs}")?;
        writeln!(out, "scan per-theta seconds: {}", secs / grid.len() as f64)?;
    }
    Ok(())
}

fn cmd_datasets(cmd: &DatasetsCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        DatasetsCommand::List => {
            for d in DatasetCatalog::new().iter() {
                writeln!(
                    out,
                    "{}\tdesign=({}, {}, {})\tobserved=({}, {}, {})",
                    d.label,
                    d.design.n_cal_neg,
                    d.design.n_cal_pos,
                    d.design.n_main,
                    d.observed.s_cal_neg,
                    d.observed.s_cal_pos,
                    d.observed.s_main
                )?;
            }
        }
        DatasetsCommand::Validate { file } => {
            let d = parse_dataset(&fs::read_to_string(file)?)?;
            out.write_all(crate::data::serialize_dataset(&d).as_bytes())?;
        }
    }
    Ok(())
}

/// Runs a parsed command, writing machine output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Scan(a) => cmd_scan(a, cli.quiet, out),
        Command::Project(a) => cmd_project(a, out),
        Command::Lrt(a) => cmd_lrt(a, cli.quiet, out),
        Command::Mcmc(a) => cmd_mcmc(a, out),
        Command::Coverage(a) => cmd_coverage(a, out),
        Command::Bench(a) => cmd_bench(a, cli.quiet, out),
        Command::Datasets(c) => cmd_datasets(c, out),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock).and_then(|_| lock.flush().map_err(Error::from)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
