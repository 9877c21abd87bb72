use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use slash::bench::{run_bench, summary_csv};
use slash::data::{check_kinds, prepare, prepare_all, read_jsonl, write_jsonl, PreparedQuery, QueryRecord};
use slash::ground::{ground_with, GroundOptions, GroundProgram, DEFAULT_ATOM_BUDGET};
use slash::lang::{parse_program, parse_query, print_program, ParseError};
use slash::learning::{
    bind_probs, coordinate_descent, eval_accuracy, init_models, solve_query, write_metrics_csv, EntailmentScaling, Mode,
    TrainConfig, TrainError,
};
use slash::npp::{load_checkpoint, save_checkpoint, OptimizerKind};
use slash::same::{shrinkage_report, SameFallback, SameRule, DEFAULT_SLACK};
use slash::solver::{SolveError, DEFAULT_SOLUTION_BUDGET};
use slash::task::{gen_sum, split, sum_program, InputKind};
use slash::wmc::query_prob;

#[derive(Parser)]
#[command(name = "slash", version, about = "Probabilistic answer set programs with neural-probabilistic predicates")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a program, then print it in canonical form.
    Parse {
        #[arg(long)]
        program: PathBuf,
    },
    /// Print the ground program.
    Ground {
        #[command(flatten)]
        prog: ProgramArgs,
        #[arg(long)]
        query: Option<String>,
    },
    /// Enumerate the potential solutions of a query, one per line.
    Solve {
        #[command(flatten)]
        prog: ProgramArgs,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Query probabilities for a JSONL file of query records.
    Prob {
        #[command(flatten)]
        prog: ProgramArgs,
        #[arg(long)]
        queries: PathBuf,
        /// Model parameters; without it the program's uniform choices are used.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Learn NPP parameters from query records.
    Train {
        #[command(flatten)]
        prog: ProgramArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainArgs,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Per-epoch potential-solution counts (epoch,mean_solutions,min,max).
        #[arg(long)]
        shrinkage: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Digit accuracy of a checkpoint on labelled records.
    Eval {
        #[command(flatten)]
        prog: ProgramArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Generate a synthetic sumN task (program.slash, train.jsonl, test.jsonl).
    Gen {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every mode on the same task and compare.
    Bench {
        /// Directory written by `gen`; otherwise the task is generated in memory.
        #[arg(long)]
        task_dir: Option<PathBuf>,
        #[command(flatten)]
        task: TaskArgs,
        /// Comma-separated subset of exact, topk, same.
        #[arg(long, value_delimiter = ',', default_value = "exact,topk,same")]
        modes: Vec<ModeName>,
        #[command(flatten)]
        opts: TrainArgs,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ProgramArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ATOM_BUDGET)]
    atom_budget: usize,
}

#[derive(Args, Clone)]
struct ModeArgs {
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeName,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.99)]
    threshold: f64,
    #[arg(long, default_value = "cover")]
    same_rule: SameRule,
    #[arg(long, default_value = "exact")]
    same_fallback: SameFallback,
    #[arg(long, default_value_t = DEFAULT_SOLUTION_BUDGET)]
    solution_budget: usize,
}

impl ModeArgs {
    fn resolve(&self, name: ModeName) -> anyhow::Result<Mode> {
        Ok(match name {
            ModeName::Exact => Mode::Exact,
            ModeName::Topk => {
                if self.k == 0 {
                    bail!(Usage("--k must be at least 1".into()));
                }
                Mode::TopK(self.k)
            }
            ModeName::Same => {
                if !(self.threshold > 0.0 && self.threshold <= 1.0) {
                    bail!(Usage("--threshold must lie in (0, 1]".into()));
                }
                Mode::Same {
                    threshold: self.threshold,
                    rule: self.same_rule,
                    fallback: self.same_fallback,
                }
            }
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeName {
    Exact,
    Topk,
    Same,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingName {
    Plain,
    LogLikelihood,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, value_enum, default_value = "sgd")]
    optimizer: OptimizerName,
    /// Weighting of each query's entailment gradient.
    #[arg(long, value_enum, default_value = "plain")]
    scaling: ScalingName,
    /// Leave the timing columns empty so equal seeds give identical files.
    #[arg(long)]
    no_timing: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64, mode: Mode, solution_budget: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed,
            mode,
            entailment_scaling: match self.scaling {
                ScalingName::Plain => EntailmentScaling::Plain,
                ScalingName::LogLikelihood => EntailmentScaling::LogLikelihoodWeighted,
            },
            optimizer: match self.optimizer {
                OptimizerName::Sgd => OptimizerKind::Sgd,
                OptimizerName::Adam => OptimizerKind::adam(),
            },
            solution_budget,
            timing: !self.no_timing,
        }
    }
}

#[derive(Args)]
struct TaskArgs {
    /// Digits per query.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(2..=4))]
    n: u32,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Standard deviation of the feature noise.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Emit discrete bin inputs (for tabular NPPs) instead of features.
    #[arg(long)]
    bins: bool,
}

impl TaskArgs {
    fn generate(&self, seed: u64) -> anyhow::Result<(String, Vec<QueryRecord>, Vec<QueryRecord>)> {
        if !(0.0..1.0).contains(&self.noise) {
            bail!(Usage("--noise must lie in [0, 1)".into()));
        }
        let input = if self.bins {
            InputKind::Bins { flip: self.noise }
        } else {
            InputKind::Features { noise: self.noise }
        };
        let n = self.n as usize;
        let (train, test) = split(gen_sum(n, self.samples, seed, input), 0.8, seed);
        Ok((sum_program(n), train, test))
    }
}

/// Invalid invocation detected after argument parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(SolveError::Budget { .. }) = cause.downcast_ref::<SolveError>() {
            return 3;
        }
        if let Some(TrainError::Config(_)) = cause.downcast_ref::<TrainError>() {
            return 1;
        }
        if let Some(TrainError::Solve(SolveError::Budget { .. })) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
    }
    2
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_program(args: &ProgramArgs) -> anyhow::Result<GroundProgram> {
    let text = read(&args.program)?;
    let program = parse_program(&text).map_err(|e: ParseError| anyhow::anyhow!("{}:{e}", args.program.display()))?;
    let opts = GroundOptions {
        atom_budget: args.atom_budget,
    };
    Ok(ground_with(&program, None, &opts)?)
}

fn load_records(path: &Path) -> anyhow::Result<Vec<QueryRecord>> {
    Ok(read_jsonl(path)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Parse { program } => {
            let text = read(&program)?;
            let p = parse_program(&text).map_err(|e| anyhow::anyhow!("{}:{e}", program.display()))?;
            emit(&print_program(&p))?;
        }
        Cmd::Ground { prog, query } => {
            let gp = load_program(&prog)?;
            let gp = match query {
                Some(q) => gp.with_query(&parse_query(&q)?)?,
                None => gp,
            };
            emit(&gp.to_string())?;
        }
        Cmd::Solve { prog, query, mode } => {
            let gp = load_program(&prog)?;
            let record = QueryRecord {
                id: "query".into(),
                constraint: query,
                data: Default::default(),
                labels: None,
            };
            let q = prepare_uniform(&gp, &record)?;
            let solved = solve_query(&gp, &q, mode.resolve(mode.mode)?, mode.solution_budget)?;
            let mut text = String::new();
            for s in &solved.solutions {
                text.push_str(&format!("P={} {}\n", s.prob, s.describe(&solved.program)));
            }
            emit(&text)?;
        }
        Cmd::Prob {
            prog,
            queries,
            checkpoint,
            mode,
        } => {
            let gp = load_program(&prog)?;
            let m = mode.resolve(mode.mode)?;
            let models = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            if models.is_some() {
                check_kinds(&gp)?;
            }
            for rec in load_records(&queries)? {
                let (bound, q) = match &models {
                    Some(models) => {
                        let q = prepare(&gp, &rec)?;
                        (bind_probs(&gp, models, &q)?, q)
                    }
                    None => (gp.clone(), prepare_uniform(&gp, &rec)?),
                };
                let solved = solve_query(&bound, &q, m, mode.solution_budget)?;
                let p = query_prob(&solved.solutions);
                let line = serde_json::json!({
                    "id": rec.id,
                    "prob": p.value,
                    "num_solutions": p.num_solutions(),
                    "log_prob": p.log_value(),
                });
                emit(&format!("{line}\n"))?;
            }
        }
        Cmd::Train {
            prog,
            train,
            test,
            opts,
            mode,
            metrics,
            shrinkage,
            checkpoint,
        } => {
            let gp = load_program(&prog)?;
            check_kinds(&gp)?;
            let train = prepare_all(&gp, &load_records(&train)?)?;
            let test = test.map(|t| load_records(&t).and_then(|r| Ok(prepare_all(&gp, &r)?))).transpose()?;
            let cfg = opts.config(cli.seed, mode.resolve(mode.mode)?, mode.solution_budget);
            let mut models = init_models(&gp, &train, cfg.seed);
            let trace = coordinate_descent(&gp, &mut models, &train, test.as_deref(), &cfg)?;
            if let Some(path) = metrics {
                write(&path, &write_metrics_csv(&trace, cfg.timing))?;
            }
            if let Some(path) = shrinkage {
                write(&path, &shrinkage_report(&trace.prune, DEFAULT_SLACK).to_csv())?;
            }
            if let Some(path) = checkpoint {
                save_checkpoint(&models, &path)?;
            }
            if let Some(acc) = trace.final_accuracy() {
                emit(&format!("test accuracy {acc}\n"))?;
            }
        }
        Cmd::Eval { prog, checkpoint, test } => {
            let gp = load_program(&prog)?;
            check_kinds(&gp)?;
            let models = load_checkpoint(&checkpoint)?;
            let test = prepare_all(&gp, &load_records(&test)?)?;
            let acc = eval_accuracy(&gp, &models, &test)?;
            emit(&format!("accuracy {} ({}/{})\n", acc.fraction(), acc.correct, acc.total))?;
        }
        Cmd::Gen { task, out } => {
            let (program, train, test) = task.generate(cli.seed)?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            write(&out.join("program.slash"), &program)?;
            write_jsonl(&out.join("train.jsonl"), &train)?;
            write_jsonl(&out.join("test.jsonl"), &test)?;
        }
        Cmd::Bench {
            task_dir,
            task,
            modes,
            opts,
            mode,
            out,
        } => {
            let (program, train, test) = match task_dir {
                Some(dir) => (
                    read(&dir.join("program.slash"))?,
                    load_records(&dir.join("train.jsonl"))?,
                    load_records(&dir.join("test.jsonl"))?,
                ),
                None => task.generate(cli.seed)?,
            };
            let p = parse_program(&program)?;
            let gp = ground_with(&p, None, &GroundOptions::default())?;
            check_kinds(&gp)?;
            let train = prepare_all(&gp, &train)?;
            let test = prepare_all(&gp, &test)?;
            let modes: Vec<Mode> = modes.iter().map(|&n| mode.resolve(n)).collect::<anyhow::Result<_>>()?;
            let cfg = opts.config(cli.seed, Mode::Exact, mode.solution_budget);
            cfg.validate()?;
            let result = run_bench(&gp, &train, &test, &modes, &cfg);
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            for r in &result.runs {
                if let Some(trace) = r.trace() {
                    let name = r.mode.label();
                    write(&out.join(format!("metrics_{name}.csv")), &write_metrics_csv(trace, cfg.timing))?;
                    write(
                        &out.join(format!("shrinkage_{name}.csv")),
                        &shrinkage_report(&trace.prune, DEFAULT_SLACK).to_csv(),
                    )?;
                }
            }
            let summary = summary_csv(&result, cfg.timing);
            write(&out.join("summary.csv"), &summary)?;
            emit(&summary)?;
        }
    }
    Ok(())
}

/// Binds a record without requiring data: probabilities stay as in `gp`.
fn prepare_uniform(gp: &GroundProgram, rec: &QueryRecord) -> anyhow::Result<PreparedQuery> {
    let q = parse_query(&rec.constraint)?;
    Ok(PreparedQuery {
        id: rec.id.clone(),
        constraints: gp.ground_query(&q)?,
        inputs: vec![None; gp.npps.len()],
        labels: vec![None; gp.npps.len()],
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
