//! Gold-standard IR metrics over ranked hypernym lists.
//!
//! Per-query metrics are fractions in `[0, 1]`; [`EvalReport`] scales their
//! means to percent.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Deepest rank that counts for any metric.
pub const DEFAULT_CUTOFF: usize = 15;

fn check_gold(gold: &BTreeSet<String>) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::EmptyGold(String::new()));
    }
    Ok(())
}

/// Average precision at `cutoff`, normalized by `min(|gold|, cutoff)`.
pub fn average_precision<S: AsRef<str>>(
    ranked: &[S],
    gold: &BTreeSet<String>,
    cutoff: usize,
) -> Result<f64> {
    check_gold(gold)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, c) in ranked.iter().take(cutoff).enumerate() {
        if gold.contains(c.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / gold.len().min(cutoff) as f64)
}

/// `1 / r` for the first gold hit at rank `r <= cutoff`, else 0.
pub fn reciprocal_rank<S: AsRef<str>>(
    ranked: &[S],
    gold: &BTreeSet<String>,
    cutoff: usize,
) -> Result<f64> {
    check_gold(gold)?;
    Ok(ranked
        .iter()
        .take(cutoff)
        .position(|c| gold.contains(c.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// Gold hits among the first `k` ranks, divided by `k`. Missing ranks count as
/// misses.
pub fn precision_at_k<S: AsRef<str>>(
    ranked: &[S],
    gold: &BTreeSet<String>,
    k: usize,
) -> Result<f64> {
    check_gold(gold)?;
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|c| gold.contains(c.as_ref()))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Queries in file order, each with a non-empty gold set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldStandard {
    entries: Vec<(String, BTreeSet<String>)>,
    index: HashMap<String, usize>,
}

impl GoldStandard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<I, S>(&mut self, query: impl Into<String>, gold: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let query = query.into();
        if self.index.contains_key(&query) {
            return Err(Error::Config(format!("duplicate query {query:?}")));
        }
        let gold: BTreeSet<String> = gold.into_iter().map(Into::into).collect();
        if gold.is_empty() {
            return Err(Error::EmptyGold(query));
        }
        self.index.insert(query.clone(), self.entries.len());
        self.entries.push((query, gold));
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.index.get(query).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(q, g)| (q.as_str(), g))
    }
}

/// Mean metrics in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub mrr: f64,
    pub p1: f64,
    pub p3: f64,
    pub p5: f64,
    pub p15: f64,
    pub queries_evaluated: usize,
    pub queries_skipped: usize,
}

/// Averages per-query metrics over every gold query. Queries without a
/// prediction score zero and are counted as skipped.
pub fn evaluate(predictions: &HashMap<String, Vec<String>>, gold: &GoldStandard) -> EvalReport {
    let mut sums = [0.0f64; 6];
    let (mut evaluated, mut skipped) = (0, 0);
    for (query, gold_set) in gold.iter() {
        let Some(ranked) = predictions.get(query) else {
            skipped += 1;
            continue;
        };
        evaluated += 1;
        // Gold sets are non-empty by construction, so these cannot fail.
        let per_query = [
            average_precision(ranked, gold_set, DEFAULT_CUTOFF),
            reciprocal_rank(ranked, gold_set, DEFAULT_CUTOFF),
            precision_at_k(ranked, gold_set, 1),
            precision_at_k(ranked, gold_set, 3),
            precision_at_k(ranked, gold_set, 5),
            precision_at_k(ranked, gold_set, 15),
        ];
        for (s, m) in sums.iter_mut().zip(per_query) {
            *s += m.expect("non-empty gold set");
        }
    }
    let n = gold.len().max(1) as f64;
    let pct = |s: f64| 100.0 * s / n;
    EvalReport {
        map: pct(sums[0]),
        mrr: pct(sums[1]),
        p1: pct(sums[2]),
        p3: pct(sums[3]),
        p5: pct(sums[4]),
        p15: pct(sums[5]),
        queries_evaluated: evaluated,
        queries_skipped: skipped,
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
            "MAP", "MRR", "P@1", "P@3", "P@5", "P@15"
        )?;
        writeln!(
            f,
            "{:>8.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}{:>8.2}",
            self.map, self.mrr, self.p1, self.p3, self.p5, self.p15
        )?;
        write!(
            f,
            "queries evaluated: {}  skipped: {}",
            self.queries_evaluated, self.queries_skipped
        )
    }
}
