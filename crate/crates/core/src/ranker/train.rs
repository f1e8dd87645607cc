use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::{
    cosine_with_grad, hinge_loss, pair_margin, sample_indices, CandidateIndex, Model, TrainingPair,
    TOP_K,
};
use crate::embed::{lookup_term, normalize_term, EmbeddingTable, TermSequence};
use crate::error::{Error, Result};
use crate::metrics::reciprocal_rank;
use crate::nn::{adagrad_step, dropout, seeded_rng, OptimizerConfig, ParamSet, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            margin: 0.1,
            negatives_per_positive: 10,
            epochs: 50,
            batch_size: 20,
            learning_rate: 1e-2,
            epsilon: 1e-6,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        if self.negatives_per_positive == 0 || self.batch_size == 0 {
            return bad("negatives and batch size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return bad("learning rate and epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean hinge loss over all (pair, gold, negative) triples.
    pub mean_loss: f64,
    /// Triples with a positive loss.
    pub violations: usize,
    pub triples: usize,
}

struct Positive {
    name: String,
    seq: TermSequence,
}

struct PreparedPair {
    term: TermSequence,
    positives: Vec<Positive>,
    /// Sorted candidate indices that may not be drawn as negatives.
    excluded: Vec<usize>,
}

/// Training data resolved against an embedding table and candidate
/// vocabulary once, then reused for every epoch.
pub struct Trainer {
    cfg: TrainerConfig,
    candidates: Vec<(String, TermSequence)>,
    pairs: Vec<PreparedPair>,
    skipped_pairs: usize,
}

impl Trainer {
    /// Pairs whose term, or every gold hypernym, cannot be looked up are
    /// dropped and counted; so are pairs with no feasible negative.
    pub fn new(
        table: &EmbeddingTable,
        data: &[TrainingPair],
        vocab: &[String],
        cfg: &TrainerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut candidates = Vec::new();
        let mut by_name: HashMap<String, usize> = HashMap::new();
        for name in vocab {
            let key = normalize_term(name);
            if by_name.contains_key(&key) {
                continue;
            }
            if let Ok(seq) = lookup_term(table, name) {
                by_name.insert(key, candidates.len());
                candidates.push((name.clone(), seq));
            }
        }

        let mut pairs = Vec::with_capacity(data.len());
        let mut skipped_pairs = 0;
        for pair in data {
            let Ok(term) = lookup_term(table, &pair.term) else {
                skipped_pairs += 1;
                continue;
            };
            let positives: Vec<Positive> = pair
                .gold
                .iter()
                .filter_map(|g| {
                    lookup_term(table, g).ok().map(|seq| Positive {
                        name: g.clone(),
                        seq,
                    })
                })
                .collect();
            let mut excluded: Vec<usize> = pair
                .gold
                .iter()
                .chain(std::iter::once(&pair.term))
                .filter_map(|g| by_name.get(&normalize_term(g)).copied())
                .collect();
            excluded.sort_unstable();
            excluded.dedup();
            if positives.is_empty() || excluded.len() >= candidates.len() {
                skipped_pairs += 1;
                continue;
            }
            pairs.push(PreparedPair {
                term,
                positives,
                excluded,
            });
        }
        if pairs.is_empty() {
            return Err(Error::Config("no usable training pairs".into()));
        }
        Ok(Trainer {
            cfg: cfg.clone(),
            candidates,
            pairs,
            skipped_pairs,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn skipped_pairs(&self) -> usize {
        self.skipped_pairs
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    fn perturb(&self, seq: &TermSequence, rng: &mut Rng) -> Result<TermSequence> {
        if self.cfg.dropout == 0.0 {
            return Ok(seq.clone());
        }
        let vectors = seq
            .vectors
            .iter()
            .map(|v| dropout(v, self.cfg.dropout, rng, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(TermSequence {
            tokens: seq.tokens.clone(),
            vectors,
            oov_mask: seq.oov_mask.clone(),
        })
    }

    /// One pass over the shuffled data. Gradients are summed over a batch of
    /// `batch_size` pairs and applied with AdaGrad.
    pub fn train_epoch(&self, model: &mut Model, epoch: u64) -> Result<EpochStats> {
        let mut rng = seeded_rng(self.cfg.seed);
        rng.set_stream(epoch.wrapping_add(1));
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut rng);

        let opt = self.cfg.optimizer();
        let trainable = !model.encoder.params.tensors().is_empty();
        model.encoder.params.zero_grad();

        let (mut total, mut triples, mut violations) = (0.0, 0usize, 0usize);
        for (done, &pi) in order.iter().enumerate() {
            let pair = &self.pairs[pi];
            let encoder = &mut model.encoder;
            let (e_t, cache_t) = encoder.forward(&self.perturb(&pair.term, &mut rng)?)?;
            let mut d_t = vec![0.0; e_t.len()];

            for positive in &pair.positives {
                let (e_p, cache_p) = encoder.forward(&self.perturb(&positive.seq, &mut rng)?)?;
                let (s_pos, g_tp, g_pp) = cosine_with_grad(&e_t, &e_p)?;
                let mut d_p = vec![0.0; e_p.len()];
                let negatives = sample_indices(
                    &mut rng,
                    self.candidates.len(),
                    &pair.excluded,
                    self.cfg.negatives_per_positive,
                )?;
                for a in negatives {
                    let (name, seq) = &self.candidates[a];
                    let (e_a, cache_a) = encoder.forward(&self.perturb(seq, &mut rng)?)?;
                    let (s_neg, g_ta, g_aa) = cosine_with_grad(&e_t, &e_a)?;
                    let loss = hinge_loss(
                        s_pos,
                        s_neg,
                        pair_margin(&positive.name, name, self.cfg.margin),
                    );
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss);
                    }
                    total += loss;
                    triples += 1;
                    if loss > 0.0 {
                        violations += 1;
                        for i in 0..d_t.len() {
                            d_t[i] += g_ta[i] - g_tp[i];
                            d_p[i] -= g_pp[i];
                        }
                        if trainable {
                            encoder.backward(&cache_a, &g_aa)?;
                        }
                    }
                }
                if trainable && d_p.iter().any(|&g| g != 0.0) {
                    encoder.backward(&cache_p, &d_p)?;
                }
            }
            if trainable && d_t.iter().any(|&g| g != 0.0) {
                encoder.backward(&cache_t, &d_t)?;
            }

            if (done + 1) % self.cfg.batch_size == 0 || done + 1 == order.len() {
                for t in model.encoder.params.tensors_mut() {
                    adagrad_step(t, &opt)?;
                }
            }
        }
        model.epochs_trained += 1;
        Ok(EpochStats {
            mean_loss: if triples == 0 {
                0.0
            } else {
                total / triples as f64
            },
            violations,
            triples,
        })
    }
}

/// One training epoch over `data`. Builds a [`Trainer`] each call; keep a
/// `Trainer` around when running many epochs.
pub fn train_epoch(
    model: &mut Model,
    data: &[TrainingPair],
    vocab: &[String],
    cfg: &TrainerConfig,
    epoch: u64,
) -> Result<EpochStats> {
    Trainer::new(model.table(), data, vocab, cfg)?.train_epoch(model, epoch)
}

/// Mean reciprocal rank (fraction, not percent) of the pairs' gold hypernyms
/// among the top candidates. Unrepresentable queries score zero.
pub fn validation_mrr(model: &Model, pairs: &[TrainingPair], vocab: &[String]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let index = CandidateIndex::build(model, vocab);
    let mut sum = 0.0;
    for pair in pairs {
        match index.rank(model, &pair.term, TOP_K) {
            Ok(list) => sum += reciprocal_rank(&list.candidates(), &pair.gold, TOP_K)?,
            Err(Error::Unrepresentable(_)) | Err(Error::ZeroNorm) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(sum / pairs.len() as f64)
}

/// Seeded 90/10 split. When the data is too small to hold out a tenth, the
/// training pairs double as validation pairs.
pub fn split_train_valid(
    pairs: &[TrainingPair],
    seed: u64,
) -> (Vec<TrainingPair>, Vec<TrainingPair>) {
    let mut shuffled = pairs.to_vec();
    let mut rng = seeded_rng(seed);
    shuffled.shuffle(&mut rng);
    let n_valid = pairs.len() / 10;
    if n_valid == 0 {
        return (shuffled.clone(), shuffled);
    }
    let valid = shuffled.split_off(pairs.len() - n_valid);
    (shuffled, valid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `None` for epoch 0, the untrained model.
    pub stats: Option<EpochStats>,
    pub val_mrr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_mrr: f64,
    pub skipped_pairs: usize,
}

/// Trains for `cfg.epochs` epochs, scoring validation MRR after each, and
/// leaves `model` holding the parameters of the best epoch (epoch 0 being the
/// initial model). Later epochs must strictly improve to replace an earlier
/// best.
pub fn fit<F>(
    model: &mut Model,
    train: &[TrainingPair],
    valid: &[TrainingPair],
    vocab: &[String],
    cfg: &TrainerConfig,
    mut on_epoch: F,
) -> Result<FitOutcome>
where
    F: FnMut(&EpochRecord),
{
    let trainer = Trainer::new(model.table(), train, vocab, cfg)?;
    let initial = EpochRecord {
        epoch: 0,
        stats: None,
        val_mrr: validation_mrr(model, valid, vocab)?,
    };
    on_epoch(&initial);
    let mut best = (0, initial.val_mrr, model.encoder.params.clone());
    let mut history = vec![initial];

    for epoch in 1..=cfg.epochs {
        let stats = trainer.train_epoch(model, epoch as u64)?;
        let record = EpochRecord {
            epoch,
            stats: Some(stats),
            val_mrr: validation_mrr(model, valid, vocab)?,
        };
        on_epoch(&record);
        if record.val_mrr > best.1 {
            best = (epoch, record.val_mrr, model.encoder.params.clone());
        }
        history.push(record);
    }

    model.encoder.params = best.2;
    Ok(FitOutcome {
        history,
        best_epoch: best.0,
        best_mrr: best.1,
        skipped_pairs: trainer.skipped_pairs(),
    })
}
