//! Finite-difference check of the full hinge objective
//! `max(0, margin + cos(e_t, e_a) - cos(e_t, e_p))` through every encoder,
//! at toy sizes.

use rand::Rng as _;

use super::{cosine_with_grad, hinge_loss};
use crate::embed::TermSequence;
use crate::encoders::{Encoder, EncoderConfig, EncoderKind, EncoderParams, ForwardCache};
use crate::error::{Error, Result};
use crate::nn::{grad_check, seeded_rng, ParamSet, ParamTensor, Rng};

/// Step for central differences.
pub const STEP: f64 = 1e-4;
/// Largest acceptable relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Larger than any cosine gap, so the hinge is always active.
const MARGIN: f64 = 2.5;
/// Minimum gap between a CNN channel's maximum and runner-up.
const MIN_POOL_GAP: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOutcome {
    pub kind: EncoderKind,
    pub config: EncoderConfig,
    /// `None` for parameter-free encoders.
    pub param_error: Option<f64>,
    pub input_error: f64,
}

impl GradCheckOutcome {
    pub fn max_error(&self) -> f64 {
        self.param_error.unwrap_or(0.0).max(self.input_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

/// Term, positive and negative sequences stored as tensors so the generic
/// checker can perturb them.
struct Inputs(Vec<ParamTensor>);

impl ParamSet for Inputs {
    fn tensors(&self) -> Vec<&ParamTensor> {
        self.0.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.0.iter_mut().collect()
    }
}

impl Inputs {
    fn sequences(&self) -> [TermSequence; 3] {
        let seq = |t: &ParamTensor| {
            TermSequence::from_vectors(t.values().chunks(t.cols()).map(<[f64]>::to_vec).collect())
        };
        [seq(&self.0[0]), seq(&self.0[1]), seq(&self.0[2])]
    }
}

fn loss(encoder: &Encoder, seqs: &[TermSequence; 3]) -> f64 {
    let run = || -> Result<f64> {
        let t = encoder.encode(&seqs[0])?;
        let p = encoder.encode(&seqs[1])?;
        let a = encoder.encode(&seqs[2])?;
        let (s_pos, _, _) = cosine_with_grad(&t, &p)?;
        let (s_neg, _, _) = cosine_with_grad(&t, &a)?;
        Ok(hinge_loss(s_pos, s_neg, MARGIN))
    };
    run().unwrap_or(f64::NAN)
}

/// Accumulates analytic gradients of the hinge into `encoder` and returns the
/// gradients w.r.t. the three input sequences.
fn analytic(encoder: &mut Encoder, seqs: &[TermSequence; 3]) -> Result<[Vec<Vec<f64>>; 3]> {
    let (t, ct) = encoder.forward(&seqs[0])?;
    let (p, cp) = encoder.forward(&seqs[1])?;
    let (a, ca) = encoder.forward(&seqs[2])?;
    for cache in [&ct, &cp, &ca] {
        if let ForwardCache::Cnn(c) = cache {
            if c.min_pool_margin() < MIN_POOL_GAP {
                return Err(Error::Config("near-tie in max pooling".into()));
            }
        }
    }
    let (_, g_tp, g_pp) = cosine_with_grad(&t, &p)?;
    let (_, g_ta, g_aa) = cosine_with_grad(&t, &a)?;
    let d_t: Vec<f64> = g_ta.iter().zip(&g_tp).map(|(x, y)| x - y).collect();
    let d_p: Vec<f64> = g_pp.iter().map(|g| -g).collect();
    Ok([
        encoder.backward(&ct, &d_t)?,
        encoder.backward(&cp, &d_p)?,
        encoder.backward(&ca, &g_aa)?,
    ])
}

fn toy_config(kind: EncoderKind, rng: &mut Rng) -> EncoderConfig {
    let input_dim = rng.random_range(2..=4);
    let mut config = EncoderConfig::new(kind, input_dim, rng.random_range(3..=6));
    match kind {
        EncoderKind::Cnn => {
            if rng.random_bool(0.5) {
                config.cnn_filter_widths = vec![rng.random_range(1..=3)];
            } else {
                config.cnn_filter_widths = vec![1, rng.random_range(2..=3)];
                config.hidden_dim = if rng.random_bool(0.5) { 4 } else { 6 };
            }
        }
        EncoderKind::Rcnn => config.rcnn_order = rng.random_range(1..=3),
        _ => {}
    }
    config
}

fn random_params(config: &EncoderConfig, rng: &mut Rng) -> Result<EncoderParams> {
    let mut params = EncoderParams::init(config, rng.random())?;
    // Non-zero biases so every term of the backward pass is exercised.
    for t in params.tensors_mut() {
        if t.shape().len() == 1 {
            t.values_mut()
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
    Ok(params)
}

fn random_inputs(dim: usize, rng: &mut Rng) -> Inputs {
    Inputs(
        (0..3)
            .map(|i| {
                let len = rng.random_range(1..=4);
                let values = (0..len * dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                ParamTensor::from_values(&format!("input{i}"), &[len, dim], values)
                    .expect("positive shape")
            })
            .collect(),
    )
}

/// Checks parameter and input gradients of the hinge objective for one
/// randomly drawn toy configuration.
///
/// With `inject_fault`, one analytic gradient element is shifted by 0.1 before
/// comparison, which must make the check fail.
pub fn check_encoder(kind: EncoderKind, seed: u64, inject_fault: bool) -> Result<GradCheckOutcome> {
    let mut rng = seeded_rng(seed);
    let config = toy_config(kind, &mut rng);

    // Redraw until max pooling has no near-ties (only ever retries for CNN).
    let (mut encoder, mut inputs, dx) = loop {
        let mut encoder = Encoder::from_parts(config.clone(), random_params(&config, &mut rng)?)?;
        let inputs = random_inputs(config.input_dim, &mut rng);
        match analytic(&mut encoder, &inputs.sequences()) {
            Ok(dx) => break (encoder, inputs, dx),
            Err(Error::Config(_)) | Err(Error::ZeroNorm) => continue,
            Err(e) => return Err(e),
        }
    };

    for (tensor, grads) in inputs.0.iter_mut().zip(&dx) {
        let flat: Vec<f64> = grads.iter().flatten().copied().collect();
        tensor.grad_mut().copy_from_slice(&flat);
    }
    if inject_fault {
        match encoder.params.tensors_mut().into_iter().next() {
            Some(t) => t.grad_mut()[0] += 0.1,
            None => inputs.0[0].grad_mut()[0] += 0.1,
        }
    }

    let param_error = if encoder.params.tensors().is_empty() {
        None
    } else {
        let seqs = inputs.sequences();
        let config = encoder.config.clone();
        Some(grad_check(&mut encoder.params, STEP, |p| {
            let enc = Encoder {
                config: config.clone(),
                params: p.clone(),
            };
            loss(&enc, &seqs)
        })?)
    };
    let input_error = grad_check(&mut inputs, STEP, |i| loss(&encoder, &i.sequences()))?;

    Ok(GradCheckOutcome {
        kind,
        config,
        param_error,
        input_error,
    })
}
