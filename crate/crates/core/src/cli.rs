//! The `train`, `rank`, `evaluate` and `gradcheck` commands.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::{EmbeddingKind, RunConfig};
use crate::embed::{load_sense_embeddings, load_word_embeddings, EmbeddingTable};
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::io::{
    align_predictions, open, read_gold, read_pairs, read_predictions, read_terms, read_vocab,
    write_predictions,
};
use crate::metrics::{evaluate, EvalReport};
use crate::ranker::gradcheck::{check_encoder, TOLERANCE};
use crate::ranker::{
    fit, split_train_valid, CandidateIndex, EpochRecord, Model, TrainingPair, TOP_K,
};

pub fn load_embeddings(path: &Path, kind: EmbeddingKind) -> Result<EmbeddingTable> {
    let source = open(path)?;
    match kind {
        EmbeddingKind::Word => load_word_embeddings(source, None),
        EmbeddingKind::Sense => load_sense_embeddings(source),
    }
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("missing required setting {key}")))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: Checkpoint,
    pub train_pairs: usize,
    pub valid_pairs: usize,
    pub skipped_pairs: usize,
}

struct Prepared {
    table: Arc<EmbeddingTable>,
    train: Vec<TrainingPair>,
    valid: Vec<TrainingPair>,
    vocab: Vec<String>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let table = Arc::new(load_embeddings(
        required(&cfg.embeddings, "embeddings")?,
        cfg.embedding_kind,
    )?);
    let data = read_pairs(open(required(&cfg.data, "data")?)?)?;
    if data.is_empty() {
        return Err(Error::Config("training data is empty".into()));
    }
    let vocab = read_vocab(open(required(&cfg.vocab, "vocab")?)?)?;
    let (train, valid) = match &cfg.gold {
        Some(path) => (data, read_pairs(open(path)?)?),
        None => split_train_valid(&data, cfg.trainer.seed),
    };
    Ok(Prepared {
        table,
        train,
        valid,
        vocab,
    })
}

fn run_once(cfg: &RunConfig, data: &Prepared, log: &mut dyn Write) -> Result<(Checkpoint, usize)> {
    let encoder_config = cfg.encoder_config(data.table.dim());
    let mut model = Model::new(encoder_config, Arc::clone(&data.table), cfg.trainer.seed)?;
    let mut log_err = None;
    let outcome = fit(
        &mut model,
        &data.train,
        &data.valid,
        &data.vocab,
        &cfg.trainer,
        |r: &EpochRecord| {
            let loss = r
                .stats
                .map_or_else(|| "-".to_string(), |s| format!("{:.6}", s.mean_loss));
            if let Err(e) = writeln!(
                log,
                "epoch {}\tloss {}\tval_mrr {:.4}",
                r.epoch, loss, r.val_mrr
            ) {
                log_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let checkpoint = Checkpoint {
        run: cfg.clone(),
        encoder: model.encoder,
        seed: cfg.trainer.seed,
        best_epoch: outcome.best_epoch as u64,
        epochs_trained: cfg.trainer.epochs as u64,
        best_mrr: outcome.best_mrr,
    };
    Ok((checkpoint, outcome.skipped_pairs))
}

/// The tuning grid: learning rate x dropout, and filter width for CNNs.
pub fn grid(cfg: &RunConfig) -> Vec<RunConfig> {
    let widths: Vec<Vec<usize>> = if cfg.encoder == EncoderKind::Cnn {
        vec![vec![2], vec![3], vec![4]]
    } else {
        vec![cfg.filter_widths.clone()]
    };
    let mut out = Vec::new();
    for lr in [1e-3, 1e-2] {
        for dropout in [0.1, 0.2] {
            for w in &widths {
                let mut c = cfg.clone();
                c.trainer.learning_rate = lr;
                c.trainer.dropout = dropout;
                c.filter_widths = w.clone();
                out.push(c);
            }
        }
    }
    out
}

/// Trains a model (or every grid point with `use_grid`), writes the checkpoint
/// with the best validation MRR to `cfg.out`, and logs one line per epoch.
pub fn cmd_train(cfg: &RunConfig, use_grid: bool, log: &mut dyn Write) -> Result<TrainSummary> {
    let out = required(&cfg.out, "out")?.to_path_buf();
    let data = prepare(cfg)?;
    let candidates = if use_grid {
        grid(cfg)
    } else {
        vec![cfg.clone()]
    };

    let mut best: Option<(Checkpoint, usize)> = None;
    for c in &candidates {
        if use_grid {
            writeln!(
                log,
                "grid learning_rate={} dropout={} filter_widths={:?}",
                c.trainer.learning_rate, c.trainer.dropout, c.filter_widths
            )?;
        }
        let (ck, skipped) = run_once(c, &data, log)?;
        if use_grid {
            writeln!(log, "grid best_val_mrr {:.4}", ck.best_mrr)?;
        }
        if best.as_ref().is_none_or(|(b, _)| ck.best_mrr > b.best_mrr) {
            best = Some((ck, skipped));
        }
    }
    let (checkpoint, skipped_pairs) = best.expect("at least one run");
    checkpoint.save(&out)?;
    Ok(TrainSummary {
        checkpoint,
        train_pairs: data.train.len(),
        valid_pairs: data.valid.len(),
        skipped_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSummary {
    pub queries: usize,
    pub unrepresentable: usize,
    pub skipped_candidates: usize,
}

/// Ranks every query in `terms` and writes one prediction line per query.
pub fn cmd_rank(
    checkpoint: &Path,
    terms: &Path,
    vocab: &Path,
    embeddings: Option<(&Path, EmbeddingKind)>,
    out: &mut dyn Write,
) -> Result<RankSummary> {
    let ck = Checkpoint::load(checkpoint)?;
    let table = match embeddings {
        Some((path, kind)) => load_embeddings(path, kind)?,
        None => load_embeddings(
            required(&ck.run.embeddings, "embeddings")?,
            ck.run.embedding_kind,
        )?,
    };
    let model = Model::from_encoder(ck.encoder, Arc::new(table))?;
    let vocab = read_vocab(open(vocab)?)?;
    let queries = read_terms(open(terms)?)?;
    let index = CandidateIndex::build(&model, &vocab);

    let lists = queries
        .par_iter()
        .map(|q| match index.rank(&model, q, TOP_K) {
            Ok(list) => Ok(Some(list)),
            Err(Error::Unrepresentable(_)) | Err(Error::ZeroNorm) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    write_predictions(&mut *out, &lists)?;
    Ok(RankSummary {
        queries: queries.len(),
        unrepresentable: lists.iter().filter(|l| l.is_none()).count(),
        skipped_candidates: index.skipped(),
    })
}

pub fn cmd_evaluate(predictions: &Path, gold: &Path) -> Result<EvalReport> {
    let gold = read_gold(open(gold)?)?;
    let preds = align_predictions(read_predictions(open(predictions)?)?, &gold)?;
    Ok(evaluate(&preds, &gold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckLine {
    pub kind: EncoderKind,
    /// Worst parameter error over all seeds; `None` for parameter-free encoders.
    pub param_error: Option<f64>,
    pub input_error: f64,
}

impl GradCheckLine {
    pub fn max_error(&self) -> f64 {
        self.param_error.unwrap_or(0.0).max(self.input_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

/// Runs the hinge-objective gradient check for all five encoders over
/// `seeds` toy configurations each.
pub fn cmd_gradcheck(
    first_seed: u64,
    seeds: usize,
    inject_fault: bool,
) -> Result<Vec<GradCheckLine>> {
    EncoderKind::ALL
        .par_iter()
        .map(|&kind| {
            let mut line = GradCheckLine {
                kind,
                param_error: None,
                input_error: 0.0,
            };
            for s in 0..seeds as u64 {
                let out = check_encoder(kind, first_seed + s, inject_fault)?;
                line.input_error = line.input_error.max(out.input_error);
                if let Some(e) = out.param_error {
                    line.param_error = Some(line.param_error.unwrap_or(0.0).max(e));
                }
            }
            Ok(line)
        })
        .collect()
}

pub fn format_gradcheck(line: &GradCheckLine) -> String {
    let params = line
        .param_error
        .map_or_else(|| "n/a (no parameters)".to_string(), |e| format!("{e:.3e}"));
    format!(
        "{:<5} params {:<20} inputs {:.3e}  {}",
        line.kind.name(),
        params,
        line.input_error,
        if line.passed() { "ok" } else { "FAIL" }
    )
}
