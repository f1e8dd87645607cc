use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use taxorank::cli::{cmd_evaluate, cmd_gradcheck, cmd_rank, cmd_train, format_gradcheck};
use taxorank::config::{EmbeddingKind, RunConfig};
use taxorank::Error;

#[derive(Parser)]
#[command(name = "taxorank", version, about = "Neural hypernym ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder and write the best checkpoint.
    Train(TrainArgs),
    /// Rank candidate hypernyms for a list of query terms.
    Rank(RankArgs),
    /// Score a prediction file against a gold standard.
    Evaluate(EvaluateArgs),
    /// Check analytic gradients of every encoder against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["tea", "gru", "lstm", "cnn", "rcnn"])]
    encoder: Option<String>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_parser = ["word", "sense"])]
    embedding_kind: Option<String>,
    /// Training pairs: query, tab, gold hypernyms.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation pairs; defaults to a seeded tenth of the training data.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Search learning rate, dropout and (for CNNs) filter width.
    #[arg(long)]
    grid: bool,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Queries, one per line; text after the first tab is ignored.
    #[arg(long)]
    terms: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Overrides the embeddings recorded in the checkpoint.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_parser = ["word", "sense"], requires = "embeddings")]
    embedding_kind: Option<String>,
    /// Prediction file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    gold: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let overrides = [
        ("seed", args.seed.map(|s| s.to_string())),
        ("encoder", args.encoder),
        ("embeddings", path(&args.embeddings)),
        ("embedding_kind", args.embedding_kind),
        ("data", path(&args.data)),
        ("gold", path(&args.gold)),
        ("vocab", path(&args.vocab)),
        ("out", path(&args.out)),
        ("epochs", args.epochs.map(|e| e.to_string())),
        ("hidden_dim", args.hidden_dim.map(|h| h.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    let stderr = io::stderr();
    let summary = cmd_train(&cfg, args.grid, &mut stderr.lock())?;
    let ck = &summary.checkpoint;
    println!(
        "trained {} on {} pairs ({} validation, {} skipped); best epoch {} val MRR {:.4}",
        ck.encoder.config.kind,
        summary.train_pairs,
        summary.valid_pairs,
        summary.skipped_pairs,
        ck.best_epoch,
        ck.best_mrr
    );
    Ok(())
}

fn rank(args: RankArgs) -> Result<(), Error> {
    let kind: EmbeddingKind = match &args.embedding_kind {
        Some(k) => k.parse()?,
        None => EmbeddingKind::Word,
    };
    let embeddings = args.embeddings.as_deref().map(|p| (p, kind));
    let summary = match &args.out {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            let s = cmd_rank(
                &args.checkpoint,
                &args.terms,
                &args.vocab,
                embeddings,
                &mut out,
            )?;
            out.flush()?;
            s
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            cmd_rank(
                &args.checkpoint,
                &args.terms,
                &args.vocab,
                embeddings,
                &mut out,
            )?
        }
    };
    eprintln!(
        "ranked {} queries ({} unrepresentable, {} candidates skipped)",
        summary.queries, summary.unrepresentable, summary.skipped_candidates
    );
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train(args) => train(args)?,
        Command::Rank(args) => rank(args)?,
        Command::Evaluate(args) => println!("{}", cmd_evaluate(&args.predictions, &args.gold)?),
        Command::Gradcheck(args) => {
            let lines = cmd_gradcheck(args.seed, args.seeds, args.inject_fault)?;
            for line in &lines {
                println!("{}", format_gradcheck(line));
            }
            if !lines.iter().all(|l| l.passed()) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
