//! Training steps against hand-derived updates, loss behaviour over epochs,
//! and encoder outputs recomputed from scratch.

mod common;

use std::sync::Arc;

use taxorank::encoders::EncoderParams;
use taxorank::ranker::{cosine, fit, rank_candidates, train_epoch, Trainer, TrainerConfig};
use taxorank::{EmbeddingTable, EncoderConfig, EncoderKind, Model, TermSequence, TrainingPair};

use common::{head_word_set, standard_taxonomy};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// d cos(a, b) / d a.
fn dcos(a: &[f64], b: &[f64]) -> Vec<f64> {
    let (na, nb, c) = (norm(a), norm(b), cos(a, b));
    a.iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - c * x / (na * na))
        .collect()
}

fn three_words() -> Arc<EmbeddingTable> {
    Arc::new(
        EmbeddingTable::from_entries(
            2,
            vec![
                ("q", vec![1.0, 0.5]),
                ("p", vec![0.2, 1.0]),
                ("n", vec![0.9, 0.6]),
            ],
        )
        .unwrap(),
    )
}

fn one_pair() -> (Vec<TrainingPair>, Vec<String>) {
    (
        vec![TrainingPair::new("q", ["p"]).unwrap()],
        vec!["p".into(), "n".into()],
    )
}

fn step_config() -> TrainerConfig {
    TrainerConfig {
        negatives_per_positive: 1,
        dropout: 0.0,
        learning_rate: 0.1,
        ..TrainerConfig::default()
    }
}

#[test]
fn cnn_single_step_matches_hand_derivation() {
    let table = three_words();
    let mut config = EncoderConfig::new(EncoderKind::Cnn, 2, 2);
    config.cnn_filter_widths = vec![1];
    let mut model = Model::new(config, table.clone(), 0).unwrap();
    let w0 = [0.3, -0.2, 0.5, 0.4];
    let b0 = [0.1, -0.1];
    if let EncoderParams::Cnn(p) = &mut model.encoder.params {
        p.filters[0].values_mut().copy_from_slice(&w0);
        p.biases[0].values_mut().copy_from_slice(&b0);
    }

    // Width 1 on a one-token term: e(x) = tanh(W x + b).
    let enc = |x: &[f64]| -> Vec<f64> {
        (0..2)
            .map(|m| (w0[2 * m] * x[0] + w0[2 * m + 1] * x[1] + b0[m]).tanh())
            .collect()
    };
    let (xq, xp, xn) = (
        table.get("q").unwrap(),
        table.get("p").unwrap(),
        table.get("n").unwrap(),
    );
    let (eq, ep, en) = (enc(xq), enc(xp), enc(xn));
    let loss = 0.1 - cos(&eq, &ep) + cos(&eq, &en);
    assert!(loss > 0.0, "fixture must violate the margin");

    let dq: Vec<f64> = dcos(&eq, &en)
        .iter()
        .zip(dcos(&eq, &ep))
        .map(|(a, b)| a - b)
        .collect();
    let dp: Vec<f64> = dcos(&ep, &eq).iter().map(|g| -g).collect();
    let dn = dcos(&en, &eq);
    let (mut gw, mut gb) = ([0.0; 4], [0.0; 2]);
    for (x, e, up) in [(xq, &eq, &dq), (xp, &ep, &dp), (xn, &en, &dn)] {
        for m in 0..2 {
            let dz = up[m] * (1.0 - e[m] * e[m]);
            gb[m] += dz;
            gw[2 * m] += dz * x[0];
            gw[2 * m + 1] += dz * x[1];
        }
    }
    // First AdaGrad step: acc = g^2.
    let update = |v: f64, g: f64| {
        if g == 0.0 {
            v
        } else {
            v - 0.1 * g / (g.abs() + 1e-6)
        }
    };

    let (pairs, vocab) = one_pair();
    let stats = train_epoch(&mut model, &pairs, &vocab, &step_config(), 1).unwrap();
    assert!((stats.mean_loss - loss).abs() < 1e-12);
    assert_eq!((stats.triples, stats.violations), (1, 1));
    let EncoderParams::Cnn(p) = &model.encoder.params else {
        unreachable!()
    };
    for i in 0..4 {
        let expected = update(w0[i], gw[i]);
        assert!(
            (p.filters[0].values()[i] - expected).abs() < 1e-12,
            "w[{i}]"
        );
        assert!((p.filters[0].adagrad_acc()[i] - gw[i] * gw[i]).abs() < 1e-15);
    }
    for m in 0..2 {
        assert!(
            (p.biases[0].values()[m] - update(b0[m], gb[m])).abs() < 1e-12,
            "b[{m}]"
        );
    }
}

#[test]
fn tea_step_reports_hinge_loss_and_mean_gradients() {
    let table = three_words();
    let mut model =
        Model::new(EncoderConfig::new(EncoderKind::Tea, 2, 2), table.clone(), 0).unwrap();
    let (pairs, vocab) = one_pair();
    let stats = train_epoch(&mut model, &pairs, &vocab, &step_config(), 1).unwrap();
    let (xq, xp, xn) = (
        table.get("q").unwrap(),
        table.get("p").unwrap(),
        table.get("n").unwrap(),
    );
    let expected = (0.1 - cos(xq, xp) + cos(xq, xn)).max(0.0);
    assert!((stats.mean_loss - expected).abs() < 1e-12);
    assert_eq!(model.encode_term("q").unwrap(), xq);

    // Upstream gradient is split evenly over known tokens; OOV tokens get none.
    let seq = TermSequence {
        tokens: vec!["a".into(), "zz".into(), "b".into()],
        vectors: vec![vec![1.0, 2.0], vec![0.0, 0.0], vec![3.0, -1.0]],
        oov_mask: vec![false, true, false],
    };
    let (out, cache) = model.encoder.forward(&seq).unwrap();
    assert_eq!(out, vec![2.0, 0.5]);
    let grads = model.encoder.backward(&cache, &[0.4, -0.2]).unwrap();
    assert_eq!(
        grads,
        vec![vec![0.2, -0.1], vec![0.0, 0.0], vec![0.2, -0.1]]
    );
}

/// Hinge loss summed over every gold hypernym and every non-gold candidate,
/// without dropout or sampling.
fn exhaustive_loss(model: &Model, pairs: &[TrainingPair], vocab: &[String], margin: f64) -> f64 {
    let enc: Vec<Vec<f64>> = vocab
        .iter()
        .map(|v| model.encode_term(v).unwrap())
        .collect();
    let mut total = 0.0;
    for pair in pairs {
        let e = model.encode_term(&pair.term).unwrap();
        let scores: Vec<f64> = enc.iter().map(|c| cosine(&e, c).unwrap()).collect();
        for (gi, _) in vocab
            .iter()
            .enumerate()
            .filter(|(_, v)| pair.gold.contains(*v))
        {
            for (ni, _) in vocab
                .iter()
                .enumerate()
                .filter(|(_, v)| !pair.gold.contains(*v))
            {
                total += (margin + scores[ni] - scores[gi]).max(0.0);
            }
        }
    }
    total
}

fn non_increasing(losses: &[f64]) -> bool {
    losses.windows(2).all(|w| w[1] <= w[0] + 1e-9)
}

fn loss_curve(
    kind: EncoderKind,
    seed: u64,
    table: Arc<EmbeddingTable>,
    pairs: &[TrainingPair],
    vocab: &[String],
) -> Vec<f64> {
    let mut model = Model::new(
        EncoderConfig::new(kind, table.dim(), 20),
        table.clone(),
        seed,
    )
    .unwrap();
    let cfg = TrainerConfig {
        seed,
        ..TrainerConfig::default()
    };
    let trainer = Trainer::new(&table, pairs, vocab, &cfg).unwrap();
    let mut losses = vec![exhaustive_loss(&model, pairs, vocab, cfg.margin)];
    for epoch in 1..=8 {
        trainer.train_epoch(&mut model, epoch).unwrap();
        losses.push(exhaustive_loss(&model, pairs, vocab, cfg.margin));
    }
    losses
}

#[test]
fn exhaustive_loss_does_not_increase_on_toy_taxonomy() {
    for kind in EncoderKind::ALL {
        let ok = (0..5)
            .filter(|&seed| {
                let toy = standard_taxonomy(seed);
                non_increasing(&loss_curve(
                    kind,
                    seed,
                    toy.table.clone(),
                    &toy.pairs,
                    &toy.vocab,
                ))
            })
            .count();
        assert!(ok >= 4, "{kind}: {ok}/5 seeds");
    }
}

#[test]
fn exhaustive_loss_does_not_increase_on_head_word_phrases() {
    for kind in EncoderKind::ALL {
        let mut ok = 0;
        for seed in 0..5 {
            let set = head_word_set(seed, 6, 5, 3.0);
            let curve = loss_curve(kind, seed, set.table.clone(), &set.train, &set.vocab);
            if non_increasing(&curve) {
                ok += 1;
            } else {
                eprintln!("{kind} seed {seed}: {curve:?}");
            }
        }
        assert!(ok >= 4, "{kind}: {ok}/5 seeds");
    }
}

#[test]
fn trained_models_put_gold_first_on_separable_data() {
    let toy = standard_taxonomy(5);
    for kind in EncoderKind::ALL {
        let mut model = Model::new(EncoderConfig::new(kind, 10, 20), toy.table.clone(), 5).unwrap();
        let cfg = TrainerConfig {
            epochs: 5,
            seed: 5,
            ..TrainerConfig::default()
        };
        fit(&mut model, &toy.pairs, &toy.pairs, &toy.vocab, &cfg, |_| {}).unwrap();
        for pair in &toy.pairs {
            let top = &rank_candidates(&model, &pair.term, &toy.vocab, 1)
                .unwrap()
                .items[0]
                .0;
            assert!(
                pair.gold.contains(top),
                "{kind}: {} ranked {top} first",
                pair.term
            );
        }
    }
}

/// Row-major `m x`.
fn matvec(m: &[f64], x: &[f64]) -> Vec<f64> {
    m.chunks(x.len()).map(|row| dot(row, x)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn gru_scores_match_an_independent_recurrence() {
    let table = head_word_set(2, 3, 3, 3.0).table;
    for seed in 0..10 {
        let model = Model::new(
            EncoderConfig::new(EncoderKind::Gru, 10, 7),
            table.clone(),
            seed,
        )
        .unwrap();
        let EncoderParams::Gru(p) = &model.encoder.params else {
            unreachable!()
        };
        let run = |term: &str| -> Vec<f64> {
            let mut h = vec![0.0; 7];
            for tok in term.split(' ') {
                let x = table.get(tok).unwrap();
                let pre = |w: &taxorank::ParamTensor,
                           u: &taxorank::ParamTensor,
                           b: &taxorank::ParamTensor,
                           hh: &[f64]|
                 -> Vec<f64> {
                    let (a, c) = (matvec(w.values(), x), matvec(u.values(), hh));
                    (0..7).map(|i| a[i] + c[i] + b.values()[i]).collect()
                };
                let r: Vec<f64> = pre(&p.w_r, &p.u_r, &p.b_r, &h)
                    .into_iter()
                    .map(sigmoid)
                    .collect();
                let z: Vec<f64> = pre(&p.w_z, &p.u_z, &p.b_z, &h)
                    .into_iter()
                    .map(sigmoid)
                    .collect();
                let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
                let cand: Vec<f64> = pre(&p.w_h, &p.u_h, &p.b_h, &rh)
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                h = (0..7)
                    .map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i])
                    .collect();
            }
            h
        };
        for (term, hyper) in [
            ("m0y1 h1y2", "class1"),
            ("h2y0 m1y1 h0y0", "class0"),
            ("h1y1", "class2"),
        ] {
            let expected = cos(&run(term), &run(hyper));
            let got = model.score(term, hyper).unwrap();
            assert!(
                (got - expected).abs() < 1e-12,
                "seed {seed} {term}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn tea_rankings_ignore_a_global_rescaling() {
    let set = head_word_set(4, 6, 5, 3.0);
    let scaled = EmbeddingTable::from_entries(
        10,
        set.table
            .tokens()
            .map(|t| {
                (
                    t.to_string(),
                    set.table
                        .get(t)
                        .unwrap()
                        .iter()
                        .map(|x| x * 7.5)
                        .collect::<Vec<_>>(),
                )
            })
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let config = EncoderConfig::new(EncoderKind::Tea, 10, 10);
    let a = Model::new(config.clone(), set.table.clone(), 0).unwrap();
    let b = Model::new(config, Arc::new(scaled), 0).unwrap();
    for pair in set.test.iter().chain(&set.train) {
        let ra = rank_candidates(&a, &pair.term, &set.vocab, 15)
            .unwrap()
            .candidates();
        let rb = rank_candidates(&b, &pair.term, &set.vocab, 15)
            .unwrap()
            .candidates();
        assert_eq!(ra, rb, "{}", pair.term);
    }
}
