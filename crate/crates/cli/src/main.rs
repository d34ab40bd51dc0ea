use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use qbfrank::cegar::{QbfStatus, DEFAULT_N_MAX};
use qbfrank::datagen::{self, GenSpec, SplitCounts};
use qbfrank::eval::{self, EvalError, EvalReport, Heuristic, HeuristicConfig, DEFAULT_GNN_ITERATIONS};
use qbfrank::formula::{Assignment, Block};
use qbfrank::gnn::{self, GraphEncoding, WeightBundle, DEFAULT_DIM};
use qbfrank::ndarray::Array2;

#[derive(Parser)]
#[command(name = "qbfrank", version, about = "2QBF CEGAR solving with ranking heuristics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of UNSAT formulas and their SAT twins.
    Gen(GenArgs),
    /// (Re)compute ranking labels for a dataset.
    Label {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Solve one QDIMACS formula.
    Solve(SolveArgs),
    /// Report CEGAR iteration counts of heuristic configurations.
    Eval(EvalArgs),
    /// Run a GNN weight bundle on one formula.
    Infer(InferArgs),
    /// Write a randomly initialised weight bundle.
    InitBundle(InitBundleArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training UNSAT formulas.
    #[arg(long, default_value_t = 1000)]
    unsat: usize,
    /// Training SAT formulas.
    #[arg(long, default_value_t = 1000)]
    sat: usize,
    /// Test UNSAT formulas [default: 3/5 of --unsat].
    #[arg(long)]
    test_unsat: Option<usize>,
    /// Test SAT formulas [default: 3/5 of --sat].
    #[arg(long)]
    test_sat: Option<usize>,
    #[arg(long, default_value_t = 8)]
    n_forall: usize,
    #[arg(long, default_value_t = 10)]
    n_exists: usize,
    #[arg(long, default_value_t = 2)]
    forall_per_clause: usize,
    #[arg(long, default_value_t = 3)]
    exists_per_clause: usize,
    /// Skip label files.
    #[arg(long)]
    no_labels: bool,
}

#[derive(clap::Args)]
struct RankerArgs {
    /// none, maxsat, hardness or gnn.
    #[arg(long, default_value = "none")]
    candidate: Heuristic,
    /// none, maxsat or gnn.
    #[arg(long, default_value = "none")]
    counter: Heuristic,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: usize,
    /// Weight bundle for gnn rankers.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GNN_ITERATIONS)]
    gnn_iters: usize,
}

impl RankerArgs {
    fn config(&self) -> HeuristicConfig {
        HeuristicConfig {
            candidate: self.candidate,
            counterexample: self.counter,
            n_max: self.n_max,
            bundle: self.bundle.clone(),
            gnn_iterations: self.gnn_iters,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    file: PathBuf,
    #[command(flatten)]
    rankers: RankerArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print every candidate/counterexample round.
    #[arg(long)]
    trace: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Splits to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "TestU,TestS")]
    split: Vec<String>,
    /// Configurations as candidate/counterexample, e.g. maxsat/none.
    #[arg(long, value_delimiter = ',', default_value = "none/none")]
    config: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: usize,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GNN_ITERATIONS)]
    gnn_iters: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also write the full reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Vote,
    Witness,
    ScoreForall,
    ScoreExists,
}

#[derive(clap::Args)]
struct InferArgs {
    file: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GNN_ITERATIONS)]
    iters: usize,
    #[arg(long, value_enum, default_value = "vote")]
    head: HeadArg,
}

#[derive(clap::Args)]
struct InitBundleArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    arch: u32,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Width of the scoring heads [default: dim].
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn gen(args: GenArgs) -> Result<()> {
    let counts = SplitCounts {
        train_unsat: args.unsat,
        train_sat: args.sat,
        test_unsat: args.test_unsat.unwrap_or(args.unsat * 3 / 5),
        test_sat: args.test_sat.unwrap_or(args.sat * 3 / 5),
    };
    let spec = GenSpec {
        n_forall: args.n_forall,
        n_exists: args.n_exists,
        forall_per_clause: args.forall_per_clause,
        exists_per_clause: args.exists_per_clause,
        seed: args.seed,
    };
    let manifest = datagen::emit_dataset(&args.out, counts, spec, args.seed, !args.no_labels)?;
    for split in &manifest.splits {
        println!("{:<7} {:>5} {}", split.name, split.instances.len(), split.label);
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let f = datagen::read_formula(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let rankers = args.rankers.config().build()?;
    let result = rankers.solve(&f, args.seed)?;
    if args.trace {
        for (i, round) in result.trace.iter().enumerate() {
            let show = |a: &Option<Assignment>| a.as_ref().map_or("-".to_string(), |a| a.to_bits());
            println!("round {i}: candidate {} counter {}", show(&round.candidate), show(&round.counter));
        }
    }
    println!("{}", result.status);
    if let Some(w) = &result.witness {
        println!("witness {}", w.to_bits());
    }
    println!("iterations {}", result.iterations);
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut reports = Vec::new();
    for split in &args.split {
        for spec in &args.config {
            let Some((c, e)) = spec.split_once('/') else {
                bail!("config {spec:?} is not of the form candidate/counterexample");
            };
            let config = HeuristicConfig {
                candidate: c.parse()?,
                counterexample: e.parse()?,
                n_max: args.n_max,
                bundle: args.bundle.clone(),
                gnn_iterations: args.gnn_iters,
            };
            info!("evaluating {} on {split}", config.label());
            reports.push(eval::evaluate_split(&args.dir, split, &config, &args.seeds, args.jobs)?);
        }
    }
    print!("{}", EvalReport::table(&reports));
    if let Some(path) = args.json {
        fs::write(&path, serde_json::to_string_pretty(&reports)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn block_matrix(n: usize, block: Block) -> Result<(Vec<Assignment>, Array2<f32>)> {
    if n > datagen::MAX_LABEL_BLOCK {
        bail!("block of {n} variables too large to score exhaustively");
    }
    let all: Vec<Assignment> = (0..1u64 << n).map(|i| Assignment::from_index(block, n, i)).collect();
    let m = Array2::from_shape_fn((all.len(), n), |(r, c)| f32::from(u8::from(all[r].values()[c])));
    Ok((all, m))
}

fn infer(args: InferArgs) -> Result<()> {
    let f = datagen::read_formula(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let bundle = WeightBundle::load(&args.bundle)?;
    let state = gnn::run_embedding(&GraphEncoding::encode(&f), &bundle, args.iters)?;
    match args.head {
        HeadArg::Vote => {
            let logit = gnn::head_vote(&state, &bundle)?;
            let verdict = if logit > 0.0 { QbfStatus::Sat } else { QbfStatus::Unsat };
            println!("logit {logit:.6}");
            println!("{verdict}");
        }
        HeadArg::Witness => {
            let probs = gnn::head_witness(&state, &bundle)?;
            for (v, row) in f.universals().iter().zip(probs.rows()) {
                println!("{} {:.6}", v.get(), row[1]);
            }
        }
        HeadArg::ScoreForall | HeadArg::ScoreExists => {
            let forall = matches!(args.head, HeadArg::ScoreForall);
            let block = if forall { Block::Universal } else { Block::Existential };
            let (all, m) = block_matrix(f.block_vars(block).len(), block)?;
            let scores = if forall {
                gnn::head_score_forall(&state, &bundle, m.view())?
            } else {
                gnn::head_score_exists(&state, &bundle, m.view())?
            };
            for (a, s) in all.iter().zip(scores) {
                println!("{} {s:.6}", a.to_bits());
            }
        }
    }
    Ok(())
}

fn init_bundle(args: InitBundleArgs) -> Result<()> {
    let bundle = WeightBundle::random(args.arch, args.dim, args.k.unwrap_or(args.dim), args.seed)?;
    bundle.save(&args.out)?;
    println!("{} tensors, architecture {}, d = {}", bundle.tensors().len(), args.arch, args.dim);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Label { dir } => {
            let n = datagen::label_dataset(&dir)?;
            println!("labelled {n} instances");
            Ok(())
        }
        Command::Solve(args) => solve(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Infer(args) => infer(args),
        Command::InitBundle(args) => init_bundle(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let disagreement = matches!(
                err.downcast_ref::<EvalError>(),
                Some(EvalError::StatusMismatch { .. } | EvalError::BadWitness { .. })
            );
            ExitCode::from(if disagreement { 1 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn test_counts_default_to_three_fifths() {
        let cli = Cli::try_parse_from(["qbfrank", "gen", "--out", "d", "--unsat", "10", "--sat", "5"]).unwrap();
        let Command::Gen(args) = cli.command else { panic!("expected gen") };
        assert_eq!((args.test_unsat, args.test_sat), (None, None));
        assert_eq!((args.unsat * 3 / 5, args.sat * 3 / 5), (6, 3));
    }
}
