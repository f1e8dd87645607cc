//! Siamese cosine scoring, max-margin training and top-k hypernym ranking.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::embed::{lookup_term, normalize_term, EmbeddingTable, TermSequence};
use crate::encoders::{Encoder, EncoderConfig};
use crate::error::{Error, Result};

pub mod gradcheck;
mod train;

pub use train::{
    fit, split_train_valid, train_epoch, validation_mrr, EpochRecord, EpochStats, FitOutcome,
    Trainer, TrainerConfig,
};

/// Number of candidates kept per query.
pub const TOP_K: usize = 15;

/// Cosine similarity. Zero-norm inputs and overflow are rejected.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let c = dot / (nx * ny);
    if !c.is_finite() {
        return Err(Error::NonFiniteScore);
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// Cosine similarity with its gradients w.r.t. both arguments.
pub(crate) fn cosine_with_grad(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let c = dot / (nx * ny);
    if !c.is_finite() {
        return Err(Error::NonFiniteScore);
    }
    let dx = x
        .iter()
        .zip(y)
        .map(|(a, b)| b / (nx * ny) - c * a / (nx * nx))
        .collect();
    let dy = x
        .iter()
        .zip(y)
        .map(|(a, b)| a / (nx * ny) - c * b / (ny * ny))
        .collect();
    Ok((c, dx, dy))
}

/// `max(0, margin + s_neg - s_pos)`.
pub fn hinge_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin + s_neg - s_pos).max(0.0)
}

/// The margin between a positive and a sampled negative: `delta` when they
/// differ, zero when the negative is the positive itself.
pub fn pair_margin(positive: &str, negative: &str, delta: f64) -> f64 {
    if normalize_term(positive) == normalize_term(negative) {
        0.0
    } else {
        delta
    }
}

/// Draws `k` indices uniformly with replacement from `0..n` minus `excluded`
/// (sorted, distinct, in range).
pub(crate) fn sample_indices(
    rng: &mut crate::nn::Rng,
    n: usize,
    excluded: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if excluded.len() >= n {
        return Err(Error::NoNegatives);
    }
    if excluded.len() * 2 > n {
        let feasible: Vec<usize> = (0..n)
            .filter(|i| excluded.binary_search(i).is_err())
            .collect();
        return Ok((0..k)
            .map(|_| feasible[rng.random_range(0..feasible.len())])
            .collect());
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.random_range(0..n);
        if excluded.binary_search(&i).is_err() {
            out.push(i);
        }
    }
    Ok(out)
}

/// `k` uniform draws with replacement from `vocab` minus the gold set and the
/// query itself.
pub fn sample_negatives<'a>(
    rng: &mut crate::nn::Rng,
    vocab: &'a [String],
    gold: &BTreeSet<String>,
    query: &str,
    k: usize,
) -> Result<Vec<&'a str>> {
    let blocked: HashSet<String> = gold
        .iter()
        .map(|g| normalize_term(g))
        .chain([normalize_term(query)])
        .collect();
    let excluded: Vec<usize> = vocab
        .iter()
        .enumerate()
        .filter(|(_, v)| blocked.contains(&normalize_term(v)))
        .map(|(i, _)| i)
        .collect();
    Ok(sample_indices(rng, vocab.len(), &excluded, k)?
        .into_iter()
        .map(|i| vocab[i].as_str())
        .collect())
}

/// A query term and its gold hypernyms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub term: String,
    pub gold: BTreeSet<String>,
}

impl TrainingPair {
    pub fn new<I, S>(term: impl Into<String>, gold: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let term = term.into();
        let query = normalize_term(&term);
        let gold: BTreeSet<String> = gold
            .into_iter()
            .map(Into::into)
            .filter(|g: &String| normalize_term(g) != query)
            .collect();
        if gold.is_empty() {
            return Err(Error::EmptyGold(term));
        }
        Ok(TrainingPair { term, gold })
    }
}

/// A trained (or freshly initialized) encoder bound to its embedding table.
#[derive(Debug, Clone)]
pub struct Model {
    pub encoder: Encoder,
    table: Arc<EmbeddingTable>,
    pub epochs_trained: usize,
}

impl Model {
    pub fn new(config: EncoderConfig, table: Arc<EmbeddingTable>, seed: u64) -> Result<Self> {
        Self::from_encoder(Encoder::new(config, seed)?, table)
    }

    pub fn from_encoder(encoder: Encoder, table: Arc<EmbeddingTable>) -> Result<Self> {
        if encoder.config.input_dim != table.dim() {
            return Err(Error::DimMismatch {
                expected: encoder.config.input_dim,
                found: table.dim(),
            });
        }
        Ok(Model {
            encoder,
            table,
            epochs_trained: 0,
        })
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn table_arc(&self) -> Arc<EmbeddingTable> {
        Arc::clone(&self.table)
    }

    pub fn lookup(&self, term: &str) -> Result<TermSequence> {
        lookup_term(&self.table, term)
    }

    /// Encoding of a term with dropout disabled.
    pub fn encode_term(&self, term: &str) -> Result<Vec<f64>> {
        self.encoder.encode(&self.lookup(term)?)
    }

    /// Cosine between the encodings of `term` and `candidate`.
    pub fn score(&self, term: &str, candidate: &str) -> Result<f64> {
        cosine(&self.encode_term(term)?, &self.encode_term(candidate)?)
    }
}

/// Top candidates for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: String,
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn candidates(&self) -> Vec<String> {
        self.items.iter().map(|(c, _)| c.clone()).collect()
    }
}

fn by_score_then_name(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

#[derive(Debug, Clone)]
struct Candidate {
    name: String,
    normalized: String,
    encoding: Vec<f64>,
}

/// Candidate encodings computed once and reused across queries.
#[derive(Debug, Clone)]
pub struct CandidateIndex {
    entries: Vec<Candidate>,
    skipped: usize,
}

impl CandidateIndex {
    /// Encodes every candidate in parallel. Candidates that cannot be looked
    /// up, or encode to the zero vector, are skipped and counted.
    pub fn build(model: &Model, vocab: &[String]) -> Self {
        let encoded: Vec<Option<Candidate>> = vocab
            .par_iter()
            .map(|name| {
                let encoding = model.encode_term(name).ok()?;
                if encoding.iter().all(|&v| v == 0.0) {
                    return None;
                }
                Some(Candidate {
                    name: name.clone(),
                    normalized: normalize_term(name),
                    encoding,
                })
            })
            .collect();
        let skipped = encoded.iter().filter(|c| c.is_none()).count();
        CandidateIndex {
            entries: encoded.into_iter().flatten().collect(),
            skipped,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Scores every candidate against `term`, drops the term itself, and keeps
    /// the best `topk` ordered by score, then name.
    pub fn rank(&self, model: &Model, term: &str, topk: usize) -> Result<RankedList> {
        let query = model.encode_term(term)?;
        let own = normalize_term(term);
        let mut items = self
            .entries
            .iter()
            .filter(|c| c.normalized != own)
            .map(|c| Ok((c.name.clone(), cosine(&query, &c.encoding)?)))
            .collect::<Result<Vec<_>>>()?;
        items.sort_by(by_score_then_name);
        items.dedup_by(|a, b| a.0 == b.0);
        items.truncate(topk);
        Ok(RankedList {
            query: term.to_string(),
            items,
        })
    }
}

/// Ranks `vocab` for a single term. Use [`CandidateIndex`] directly when
/// ranking many queries against the same vocabulary.
pub fn rank_candidates(
    model: &Model,
    term: &str,
    vocab: &[String],
    topk: usize,
) -> Result<RankedList> {
    CandidateIndex::build(model, vocab).rank(model, term, topk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EncoderKind, EncoderParams};
    use crate::nn::seeded_rng;

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[3.0, -1.0], &[3.0, -1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(
            (cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs()
                < 1e-15
        );
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroNorm)
        ));
        assert!(matches!(
            cosine(&[1e200, 1.0], &[1e200, 1.0]),
            Err(Error::NonFiniteScore)
        ));
    }

    #[test]
    fn cosine_gradient_matches_differences() {
        let x = [0.3, -1.2, 0.5];
        let y = [1.0, 0.4, -0.7];
        let (c, dx, dy) = cosine_with_grad(&x, &y).unwrap();
        assert!((c - cosine(&x, &y).unwrap()).abs() < 1e-15);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let num = (cosine(&xp, &y).unwrap() - cosine(&xm, &y).unwrap()) / (2.0 * h);
            assert!((num - dx[i]).abs() < 1e-8);
            let mut yp = y;
            let mut ym = y;
            yp[i] += h;
            ym[i] -= h;
            let num = (cosine(&x, &yp).unwrap() - cosine(&x, &ym).unwrap()) / (2.0 * h);
            assert!((num - dy[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(1.0, 0.0, 0.5), 0.0);
        assert!((hinge_loss(0.2, 0.4, 0.1) - 0.3).abs() < 1e-12);
        let m = pair_margin("video game", "video_game", 0.1);
        assert_eq!(m, 0.0);
        assert_eq!(hinge_loss(0.7, 0.7, m), 0.0);
        assert_eq!(pair_margin("a", "b", 0.1), 0.1);
    }

    #[test]
    fn singleton_feasible_set() {
        let vocab = vec!["a".to_string(), "b".to_string()];
        let gold = BTreeSet::from(["a".to_string()]);
        let mut rng = seeded_rng(0);
        assert_eq!(
            sample_negatives(&mut rng, &vocab, &gold, "c", 3).unwrap(),
            vec!["b", "b", "b"]
        );
        let gold = BTreeSet::from(["a".to_string(), "b".to_string()]);
        assert!(matches!(
            sample_negatives(&mut rng, &vocab, &gold, "c", 1),
            Err(Error::NoNegatives)
        ));
    }

    #[test]
    fn query_is_never_sampled() {
        let vocab: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let gold = BTreeSet::from(["a".to_string()]);
        let mut rng = seeded_rng(4);
        let draws = sample_negatives(&mut rng, &vocab, &gold, "b", 500).unwrap();
        assert!(draws.iter().all(|d| *d == "c" || *d == "d"));
    }

    #[test]
    fn sampling_is_deterministic() {
        let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let gold = BTreeSet::from(["w3".to_string()]);
        let a = sample_negatives(&mut seeded_rng(9), &vocab, &gold, "q", 50).unwrap();
        let b = sample_negatives(&mut seeded_rng(9), &vocab, &gold, "q", 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_exclusion_path_is_uniform_over_feasible() {
        let mut rng = seeded_rng(1);
        let excluded: Vec<usize> = (0..8).collect();
        let draws = sample_indices(&mut rng, 10, &excluded, 2000).unwrap();
        assert!(draws.iter().all(|&i| i == 8 || i == 9));
        let eights = draws.iter().filter(|&&i| i == 8).count();
        assert!((eights as f64 / 2000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn training_pair_drops_self_hypernym() {
        let p = TrainingPair::new("dog", ["animal", "Dog"]).unwrap();
        assert_eq!(p.gold, BTreeSet::from(["animal".to_string()]));
        assert!(TrainingPair::new("dog", ["dog"]).is_err());
    }

    fn tea_model(entries: Vec<(&str, Vec<f64>)>) -> Model {
        let table = EmbeddingTable::from_entries(2, entries).unwrap();
        Model::new(
            EncoderConfig::new(EncoderKind::Tea, 2, 2),
            Arc::new(table),
            0,
        )
        .unwrap()
    }

    #[test]
    fn tea_ranking_by_cosine() {
        let m = tea_model(vec![
            ("q", vec![1.0, 0.0]),
            ("first", vec![1.0, 0.0]),
            ("second", vec![1.0, 1.0]),
            ("third", vec![0.0, 1.0]),
        ]);
        let vocab: Vec<String> = ["third", "second", "first", "q"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let list = rank_candidates(&m, "q", &vocab, TOP_K).unwrap();
        assert_eq!(list.candidates(), ["first", "second", "third"]);
        assert!((list.items[0].1 - 1.0).abs() < 1e-12);
        assert!((list.items[1].1 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(list.items[2].1.abs() < 1e-12);
    }

    #[test]
    fn single_candidate_and_truncation() {
        let m = tea_model(vec![("q", vec![1.0, 0.0]), ("a", vec![0.5, 0.5])]);
        let list = rank_candidates(&m, "q", &["a".to_string()], 15).unwrap();
        assert_eq!(list.items.len(), 1);
        let list = rank_candidates(&m, "q", &["a".to_string(), "zz".to_string()], 15).unwrap();
        assert_eq!(list.items.len(), 1);
        let index = CandidateIndex::build(&m, &["a".to_string(), "zz".to_string()]);
        assert_eq!(index.skipped(), 1);
    }

    #[test]
    fn ties_break_by_name() {
        let m = tea_model(vec![
            ("q", vec![1.0, 0.0]),
            ("b", vec![2.0, 1.0]),
            ("a", vec![2.0, 1.0]),
        ]);
        let vocab = vec!["b".to_string(), "a".to_string()];
        let list = rank_candidates(&m, "q", &vocab, 15).unwrap();
        assert_eq!(list.candidates(), ["a", "b"]);
    }

    #[test]
    fn tea_scores_are_order_invariant() {
        let m = tea_model(vec![("a", vec![1.0, 0.2]), ("b", vec![-0.3, 0.9])]);
        assert!((m.score("a b", "b a").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.score("a", "a").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unrepresentable_term_errors() {
        let m = tea_model(vec![("a", vec![1.0, 0.2])]);
        assert!(matches!(m.score("zz", "a"), Err(Error::Unrepresentable(_))));
        assert!(rank_candidates(&m, "zz", &["a".to_string()], 15).is_err());
    }

    #[test]
    fn model_rejects_dimension_mismatch() {
        let table = EmbeddingTable::from_entries(2, vec![("a", vec![1.0, 0.0])]).unwrap();
        assert!(Model::new(
            EncoderConfig::new(EncoderKind::Gru, 3, 4),
            Arc::new(table),
            0
        )
        .is_err());
    }

    #[test]
    fn params_survive_encoder_round_trip() {
        let c = EncoderConfig::new(EncoderKind::Lstm, 2, 3);
        let p = EncoderParams::init(&c, 3).unwrap();
        let enc = Encoder::from_parts(c.clone(), p.clone()).unwrap();
        assert_eq!(enc.params, p);
        let other = EncoderParams::init(&EncoderConfig::new(EncoderKind::Lstm, 2, 4), 3).unwrap();
        assert!(Encoder::from_parts(c, other).is_err());
    }
}
