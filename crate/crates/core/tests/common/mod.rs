//! Synthetic datasets shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use taxorank::{EmbeddingTable, TrainingPair};

pub struct ToySet {
    pub table: Arc<EmbeddingTable>,
    pub pairs: Vec<TrainingPair>,
    /// Candidate hypernyms.
    pub vocab: Vec<String>,
}

impl ToySet {
    /// Writes `emb.txt`, `pairs.tsv` and `vocab.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) {
        let mut emb = Vec::new();
        self.table.write_to(&mut emb).unwrap();
        fs::write(dir.join("emb.txt"), emb).unwrap();
        let pairs: String = self
            .pairs
            .iter()
            .map(|p| {
                let gold: Vec<&str> = p.gold.iter().map(String::as_str).collect();
                format!("{}\t{}\n", p.term, gold.join("\t"))
            })
            .collect();
        fs::write(dir.join("pairs.tsv"), pairs).unwrap();
        fs::write(dir.join("vocab.txt"), self.vocab.join("\n") + "\n").unwrap();
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    let n = Normal::new(0.0, sigma).unwrap();
    (0..dim).map(|_| n.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn plus(a: &[f64], b: &[f64], scale: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| scale * x + y).collect()
}

/// `clusters * per_cluster` single-token terms `t{c}x{i}` with vectors
/// centroid + N(0, sigma^2); the centroids are the hypernyms `class{c}`.
pub fn toy_taxonomy(
    seed: u64,
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    sigma: f64,
) -> ToySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut pairs = Vec::new();
    let mut vocab = Vec::new();
    for c in 0..clusters {
        let centroid = gaussian(&mut rng, dim, 1.0);
        let hyper = format!("class{c}");
        for i in 0..per_cluster {
            let term = format!("t{c}x{i}");
            let noise = gaussian(&mut rng, dim, sigma);
            entries.push((term.clone(), plus(&centroid, &noise, 1.0)));
            pairs.push(TrainingPair::new(term, [hyper.clone()]).unwrap());
        }
        entries.push((hyper.clone(), centroid));
        vocab.push(hyper);
    }
    ToySet {
        table: Arc::new(EmbeddingTable::from_entries(dim, entries).unwrap()),
        pairs,
        vocab,
    }
}

/// The standard toy taxonomy: 60 terms in 6 clusters, dim 10, sigma 0.1.
pub fn standard_taxonomy(seed: u64) -> ToySet {
    toy_taxonomy(seed, 6, 10, 10, 0.1)
}

/// Two-word phrases `m{j}y{a} h{k}y{b}` whose hypernym `class{k}` is fixed by
/// the head (second) word. Modifiers come from a different cluster and have
/// `modifier_scale` times the norm of heads, so averaging the two words
/// points at the wrong class.
pub struct HeadWordSet {
    pub table: Arc<EmbeddingTable>,
    pub train: Vec<TrainingPair>,
    pub test: Vec<TrainingPair>,
    pub vocab: Vec<String>,
}

pub fn head_word_set(
    seed: u64,
    clusters: usize,
    words_per_cluster: usize,
    modifier_scale: f64,
) -> HeadWordSet {
    let dim = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..clusters)
        .map(|_| unit(gaussian(&mut rng, dim, 1.0)))
        .collect();
    let mut entries = Vec::new();
    let mut vocab = Vec::new();
    for (c, centroid) in centroids.iter().enumerate() {
        vocab.push(format!("class{c}"));
        entries.push((format!("class{c}"), centroid.clone()));
        for i in 0..words_per_cluster {
            let head = plus(centroid, &gaussian(&mut rng, dim, 0.1), 1.0);
            let modifier = plus(centroid, &gaussian(&mut rng, dim, 0.1), modifier_scale);
            entries.push((format!("h{c}y{i}"), head));
            entries.push((format!("m{c}y{i}"), modifier));
        }
    }

    let mut phrases = Vec::new();
    for k in 0..clusters {
        for b in 0..words_per_cluster {
            for j in (0..clusters).filter(|&j| j != k) {
                let a = rng.random_range(0..words_per_cluster);
                phrases.push(
                    TrainingPair::new(format!("m{j}y{a} h{k}y{b}"), [format!("class{k}")]).unwrap(),
                );
            }
        }
    }
    // Seeded 80/20 split.
    let mut order: Vec<usize> = (0..phrases.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_test = phrases.len() / 5;
    let test = order[..n_test]
        .iter()
        .map(|&i| phrases[i].clone())
        .collect();
    let train = order[n_test..]
        .iter()
        .map(|&i| phrases[i].clone())
        .collect();
    HeadWordSet {
        table: Arc::new(EmbeddingTable::from_entries(dim, entries).unwrap()),
        train,
        test,
        vocab,
    }
}

/// Metrics recomputed from their definitions by enumerating ranks.
pub mod oracle {
    use std::collections::BTreeSet;

    fn relevant_in_top(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> usize {
        (0..k.min(ranked.len()))
            .filter(|&i| gold.contains(&ranked[i]))
            .count()
    }

    pub fn average_precision(ranked: &[String], gold: &BTreeSet<String>, cutoff: usize) -> f64 {
        let mut sum = 0.0;
        for k in 1..=ranked.len().min(cutoff) {
            if gold.contains(&ranked[k - 1]) {
                sum += relevant_in_top(ranked, gold, k) as f64 / k as f64;
            }
        }
        sum / gold.len().min(cutoff) as f64
    }

    pub fn reciprocal_rank(ranked: &[String], gold: &BTreeSet<String>, cutoff: usize) -> f64 {
        for k in 1..=ranked.len().min(cutoff) {
            if gold.contains(&ranked[k - 1]) {
                return 1.0 / k as f64;
            }
        }
        0.0
    }

    pub fn precision_at(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
        relevant_in_top(ranked, gold, k) as f64 / k as f64
    }
}

/// A duplicate-free ranked list of length 0..=20 and a gold set of size 1..=5,
/// both drawn from a 30-item pool.
pub fn random_metric_instance(rng: &mut ChaCha8Rng) -> (Vec<String>, BTreeSet<String>) {
    let mut pool: Vec<String> = (0..30).map(|i| format!("c{i}")).collect();
    let len = rng.random_range(0..=20);
    for i in 0..len {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let ranked = pool[..len].to_vec();
    let n_gold = rng.random_range(1..=5);
    let mut gold = BTreeSet::new();
    while gold.len() < n_gold {
        gold.insert(format!("c{}", rng.random_range(0..30)));
    }
    (ranked, gold)
}
