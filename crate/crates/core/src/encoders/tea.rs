//! Term embedding averaging: the parameter-free baseline.

use crate::embed::TermSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TeaCache {
    oov_mask: Vec<bool>,
    known: usize,
    dim: usize,
}

pub(crate) fn forward(seq: &TermSequence) -> Result<(Vec<f64>, TeaCache)> {
    let known = seq.known_count();
    if seq.is_empty() || known == 0 {
        return Err(Error::Unrepresentable(seq.tokens.join(" ")));
    }
    let dim = seq.vectors[0].len();
    let mut mean = vec![0.0; dim];
    for (v, _) in seq
        .vectors
        .iter()
        .zip(&seq.oov_mask)
        .filter(|(_, &oov)| !oov)
    {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let k = known as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Ok((
        mean,
        TeaCache {
            oov_mask: seq.oov_mask.clone(),
            known,
            dim,
        },
    ))
}

/// Mean of the in-vocabulary token vectors.
pub fn encode_tea(seq: &TermSequence) -> Result<Vec<f64>> {
    forward(seq).map(|(out, _)| out)
}

pub(crate) fn backward(cache: &TeaCache, upstream: &[f64]) -> Vec<Vec<f64>> {
    let k = cache.known as f64;
    cache
        .oov_mask
        .iter()
        .map(|&oov| {
            if oov {
                vec![0.0; cache.dim]
            } else {
                upstream.iter().map(|u| u / k).collect()
            }
        })
        .collect()
}
