//! The `valsched` command line.
//!
//! Exit codes: 0 success, 1 domain error (invalid pipeline, illegal schedule,
//! missing inputs), 2 usage or parse error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use valsched::cost::{benchmark, MachineModel};
use valsched::learner::{
    bootstrap, evaluate_round, exhaustive_optima, fit_table, value_iteration_round, RoundConfig, RoundReport,
};
use valsched::model::{self, Optimizer, TrainConfig};
use valsched::pipeline::{validate, Pipeline};
use valsched::rng::SearchRng;
use valsched::schedule::{parse_schedule, write_schedule, ScheduleError, ScheduleSpace};
use valsched::search::{beam_search, greedy_schedule, NoiseConfig, ValueFunction};
use valsched::text::parse_pipeline;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) | CliError::Parse(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "valsched", version, about = "Value-function guided schedule search for tensor pipelines")]
pub struct Cli {
    /// Worker threads; 0 picks one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a pipeline file for structural problems.
    Validate { pipeline: PathBuf },
    /// Cost a complete schedule.
    Bench {
        pipeline: PathBuf,
        schedule: PathBuf,
        /// Also write the per-stage breakdown as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Bootstrap and run value-iteration rounds over a directory of pipelines.
    Train(TrainArgs),
    /// Schedule a pipeline with a trained model.
    Schedule {
        pipeline: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Beam width; omit for greedy.
        #[arg(long, conflicts_with = "greedy")]
        beam: Option<usize>,
        #[arg(long)]
        greedy: bool,
        /// Where to write the schedule (defaults to standard output only).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Summarize the round CSVs of a training output directory.
    Report {
        dir: PathBuf,
        /// Also write the summary to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct MachineArgs {
    /// File of `key=value` machine overrides.
    #[arg(long)]
    pub machine: Option<PathBuf>,
    #[arg(long)]
    pub flop_cost: Option<String>,
    #[arg(long)]
    pub mem_byte_cost: Option<String>,
    #[arg(long)]
    pub cache_byte_cost: Option<String>,
    #[arg(long)]
    pub cache_size: Option<String>,
    #[arg(long)]
    pub cores: Option<String>,
    #[arg(long)]
    pub task_overhead: Option<String>,
    #[arg(long)]
    pub vec_widths: Option<String>,
}

impl MachineArgs {
    pub fn resolve(&self) -> Result<MachineModel> {
        let mut m = MachineModel::default();
        if let Some(path) = &self.machine {
            let text = read(path)?;
            m.apply_overrides(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        }
        let flags = [
            ("flop_cost", &self.flop_cost),
            ("mem_byte_cost", &self.mem_byte_cost),
            ("cache_byte_cost", &self.cache_byte_cost),
            ("cache_size", &self.cache_size),
            ("cores", &self.cores),
            ("task_overhead", &self.task_overhead),
            ("vec_widths", &self.vec_widths),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                m.set(key, v).map_err(|e| CliError::Usage(format!("--{}: {e}", key.replace('_', "-"))))?;
            }
        }
        m.check().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(m)
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Directory of `.pipe` files.
    pub pipelines: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub rounds: usize,
    /// Random schedules per pipeline for the bootstrap table.
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    /// Noisy rollouts per pipeline per round.
    #[arg(long, default_value_t = 100)]
    pub rollouts: usize,
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// `adam` or `sgd`.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    /// Largest schedule space enumerated for the reported optimum.
    #[arg(long, default_value_t = 1_000_000)]
    pub exhaustive_limit: u128,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub machine: MachineArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli, out)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<i32> {
    match &cli.command {
        Command::Validate { pipeline } => cmd_validate(pipeline, out),
        Command::Bench {
            pipeline,
            schedule,
            csv,
            machine,
        } => cmd_bench(pipeline, schedule, csv.as_deref(), &machine.resolve()?, out).map(|_| 0),
        Command::Train(args) => cmd_train(args, cli.jobs, out).map(|_| 0),
        Command::Schedule {
            pipeline,
            model,
            beam,
            greedy: _,
            out: path,
            machine,
        } => cmd_schedule(pipeline, model, *beam, path.as_deref(), &machine.resolve()?, out).map(|_| 0),
        Command::Report { dir, out: path } => cmd_report(dir, path.as_deref(), out).map(|_| 0),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Domain(format!("write failed: {e}"))
}

fn load_pipeline(path: &Path) -> Result<Pipeline> {
    parse_pipeline(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_space(path: &Path) -> Result<Arc<ScheduleSpace>> {
    let p = load_pipeline(path)?;
    ScheduleSpace::new(p).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

pub fn cmd_validate(path: &Path, out: &mut (dyn Write + Send)) -> Result<i32> {
    let p = load_pipeline(path)?;
    let report = validate(&p);
    if report.violations.is_empty() {
        writeln!(out, "ok: pipeline `{}` ({} stages)", p.name, p.stages.len()).map_err(io)?;
        Ok(0)
    } else {
        write!(out, "{report}").map_err(io)?;
        if !report.to_string().ends_with('\n') {
            writeln!(out).map_err(io)?;
        }
        Ok(1)
    }
}

pub fn cmd_bench(
    pipeline: &Path,
    schedule: &Path,
    csv: Option<&Path>,
    m: &MachineModel,
    out: &mut (dyn Write + Send),
) -> Result<()> {
    let space = load_space(pipeline)?;
    let s = parse_schedule(&space, &read(schedule)?).map_err(|e| match e {
        ScheduleError::Parse { .. } => CliError::Parse(format!("{}: {e}", schedule.display())),
        other => CliError::Domain(format!("{}: {other}", schedule.display())),
    })?;
    let cost = benchmark(&s, m).map_err(|e| CliError::Domain(e.to_string()))?;
    writeln!(out, "total {}", cost.total).map_err(io)?;
    let mut table = String::from("stage,compute,memory,overhead,total\n");
    for c in &cost.per_stage {
        writeln!(
            out,
            "  {:<16} compute {:>14}  memory {:>14}  overhead {:>14}  total {:>14}",
            c.stage,
            c.compute.to_string(),
            c.memory.to_string(),
            c.overhead.to_string(),
            c.total().to_string()
        )
        .map_err(io)?;
        table.push_str(&format!("{},{},{},{},{}\n", c.stage, c.compute, c.memory, c.overhead, c.total()));
    }
    if let Some(path) = csv {
        write_file(path, table.as_bytes())?;
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Pipeline files (`*.pipe`) of a directory, sorted by file name.
pub fn pipeline_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pipe"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Domain(format!("no .pipe files in {}", dir.display())));
    }
    Ok(files)
}

fn train_config(args: &TrainArgs) -> Result<RoundConfig> {
    let optimizer = match args.optimizer.as_str() {
        "adam" => Optimizer::Adam,
        "sgd" => Optimizer::Sgd,
        other => return Err(CliError::Usage(format!("unknown optimizer `{other}`"))),
    };
    let defaults = TrainConfig::default();
    let learning_rate = args.learning_rate.unwrap_or(match optimizer {
        Optimizer::Adam => defaults.learning_rate,
        Optimizer::Sgd => 1e-2,
    });
    let cfg = RoundConfig {
        schedules_per_pipeline: args.rollouts,
        beam_width: args.beam,
        noise: NoiseConfig { epsilon: args.epsilon },
        train: TrainConfig {
            optimizer,
            learning_rate,
            epochs: args.epochs,
            batch_size: args.batch_size,
            ..defaults
        },
        hidden: args.hidden,
        seed: args.seed,
    };
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    if args.bootstrap == 0 {
        return Err(CliError::Usage("--bootstrap must be at least 1".into()));
    }
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs, jobs: usize, out: &mut (dyn Write + Send)) -> Result<()> {
    let cfg = train_config(args)?;
    let m = args.machine.resolve()?;
    let files = pipeline_files(&args.pipelines)?;
    let mut inputs = Vec::new();
    let mut spaces = Vec::new();
    for f in &files {
        let text = read(f)?;
        inputs.push(json!({
            "file": f.file_name().map(|n| n.to_string_lossy().into_owned()),
            "sha256": sha256_hex(text.as_bytes()),
        }));
        spaces.push(load_space(f)?);
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::Domain(format!("{}: {e}", args.out.display())))?;

    let optima = exhaustive_optima(&spaces, &m, args.exhaustive_limit);
    let learn = |e: valsched::learner::LearnError| CliError::Domain(e.to_string());
    let mut outputs = Vec::new();
    let mut rounds = Vec::new();
    let emit = |name: String, bytes: Vec<u8>, outputs: &mut Vec<Value>| -> Result<()> {
        write_file(&args.out.join(&name), &bytes)?;
        outputs.push(json!({ "file": name, "sha256": sha256_hex(&bytes) }));
        Ok(())
    };

    let mut table = bootstrap(&spaces, args.bootstrap, &m, args.seed);
    let (mut params, metrics) = fit_table(&spaces, &table, &m, &cfg, 0).map_err(learn)?;
    let report = evaluate_round(&spaces, &params, &m, cfg.beam_width, &optima, 0).map_err(learn)?;
    writeln!(
        out,
        "round 0: {} targets, holdout r2 {:.4}, median rel err {:.4}, mean greedy {:.3}, mean beam {:.3}",
        table.len(),
        metrics.r2,
        metrics.median_rel_error,
        report.mean_greedy(),
        report.mean_beam()
    )
    .map_err(io)?;
    emit("v0.ckpt".into(), model::to_bytes(&params), &mut outputs)?;
    emit("targets0.tsv".into(), table.to_tsv().into_bytes(), &mut outputs)?;
    emit("round0.csv".into(), report.to_csv().into_bytes(), &mut outputs)?;
    rounds.push(round_json(0, &metrics, &report, 0));

    for r in 1..=args.rounds {
        let o = value_iteration_round(&spaces, &params, &table, &m, &cfg, r, &optima).map_err(learn)?;
        writeln!(
            out,
            "round {r}: {} targets, {} benchmarked, holdout r2 {:.4}, median rel err {:.4}, mean greedy {:.3}, mean beam {:.3}",
            o.table.len(),
            o.benchmarked,
            o.metrics.r2,
            o.metrics.median_rel_error,
            o.report.mean_greedy(),
            o.report.mean_beam()
        )
        .map_err(io)?;
        emit(format!("v{r}.ckpt"), model::to_bytes(&o.params), &mut outputs)?;
        emit(format!("targets{r}.tsv"), o.table.to_tsv().into_bytes(), &mut outputs)?;
        emit(format!("round{r}.csv"), o.report.to_csv().into_bytes(), &mut outputs)?;
        rounds.push(round_json(r, &o.metrics, &o.report, o.benchmarked));
        table = o.table;
        params = o.params;
    }

    let manifest = json!({
        "tool": "valsched",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "train",
        "config": {
            "rounds": args.rounds,
            "bootstrap": args.bootstrap,
            "rollouts": args.rollouts,
            "beam": args.beam,
            "epsilon": args.epsilon,
            "hidden": args.hidden,
            "epochs": args.epochs,
            "learning_rate": cfg.train.learning_rate,
            "batch_size": args.batch_size,
            "optimizer": args.optimizer,
            "clip_norm": cfg.train.clip_norm,
            "holdout_fraction": cfg.train.holdout_fraction,
            "patience": cfg.train.patience,
            "exhaustive_limit": args.exhaustive_limit.to_string(),
            "seed": args.seed,
            "jobs": jobs,
        },
        "machine": m.to_text(),
        "inputs": inputs,
        "outputs": outputs,
        "rounds": rounds,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&args.out.join("manifest.json"), text.as_bytes())?;
    Ok(())
}

fn round_json(round: usize, m: &model::TrainMetrics, r: &RoundReport, benchmarked: usize) -> Value {
    json!({
        "round": round,
        "benchmarked": benchmarked,
        "train_mse": m.train_mse,
        "holdout_mse": m.holdout_mse,
        "r2": m.r2,
        "median_rel_error": m.median_rel_error,
        "epochs_run": m.epochs_run,
        "mean_greedy": r.mean_greedy(),
        "mean_beam": r.mean_beam(),
    })
}

pub fn cmd_schedule(
    pipeline: &Path,
    model_path: &Path,
    beam: Option<usize>,
    dest: Option<&Path>,
    m: &MachineModel,
    out: &mut (dyn Write + Send),
) -> Result<()> {
    let space = load_space(pipeline)?;
    let params = model::load(model_path).map_err(|e| CliError::Domain(e.to_string()))?;
    let start = Instant::now();
    let (state, visited) = match beam {
        None => {
            let r = greedy_schedule(&space, &params, None, &mut SearchRng::new(0));
            (r.state, Some(r.visited))
        }
        Some(b) => {
            let init = valsched::schedule::ScheduleState::initial(&space);
            let r = beam_search(&init, &params, b).map_err(|e| CliError::Usage(e.to_string()))?;
            (r.state, None)
        }
    };
    let elapsed = start.elapsed();
    let predicted = params.value(&state);
    let cost = benchmark(&state, m).map_err(|e| CliError::Domain(e.to_string()))?;
    let text = write_schedule(&state);
    if let Some(path) = dest {
        write_file(path, text.as_bytes())?;
    } else {
        write!(out, "{text}").map_err(io)?;
    }
    writeln!(out, "predicted {predicted:.3}").map_err(io)?;
    writeln!(out, "cost {}", cost.total).map_err(io)?;
    if let Some(v) = visited {
        writeln!(out, "visited {v}").map_err(io)?;
    }
    writeln!(out, "wall {:.3}s", elapsed.as_secs_f64()).map_err(io)?;
    Ok(())
}

pub const SUMMARY_HEADER: &str = "round,mean_greedy,mean_beam,mean_exhaustive_ratio";

/// One row per `round<i>.csv`, in round order.
pub fn summarize(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
    let mut reports: Vec<RoundReport> = Vec::new();
    for e in entries.filter_map(|e| e.ok()) {
        let name = e.file_name().to_string_lossy().into_owned();
        let is_round = name
            .strip_prefix("round")
            .and_then(|r| r.strip_suffix(".csv"))
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
        if is_round {
            let text = read(&e.path())?;
            reports.push(RoundReport::parse_csv(&text).map_err(|err| CliError::Parse(format!("{name}: {err}")))?);
        }
    }
    if reports.is_empty() {
        return Err(CliError::Domain(format!("no round CSVs in {}", dir.display())));
    }
    reports.sort_by_key(|r| r.round);
    let mut text = format!("{SUMMARY_HEADER}\n");
    for r in &reports {
        let ex = r.mean_exhaustive_ratio().map(|x| format!("{x:.6}")).unwrap_or_default();
        text.push_str(&format!("{},{:.3},{:.3},{}\n", r.round, r.mean_greedy(), r.mean_beam(), ex));
    }
    Ok(text)
}

pub fn cmd_report(dir: &Path, dest: Option<&Path>, out: &mut (dyn Write + Send)) -> Result<()> {
    let text = summarize(dir)?;
    if let Some(path) = dest {
        write_file(path, text.as_bytes())?;
    }
    write!(out, "{text}").map_err(io)?;
    Ok(())
}
