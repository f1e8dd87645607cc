//! Wide temporal convolution with tanh and one-max pooling over time.
//!
//! Each filter width `w` owns `hidden / k` channels. The sequence is padded
//! with `w - 1` zero vectors on both sides, so a sequence of length `l`
//! yields `l + w - 1` windows per channel. Pooled channels of all widths are
//! concatenated in width order.

use super::{check_inputs, SeedSeq};
use crate::embed::TermSequence;
use crate::error::Result;
use crate::nn::{InitScheme, ParamSet, ParamTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub widths: Vec<usize>,
    /// One tensor per width, shape `[maps, width, input_dim]`.
    pub filters: Vec<ParamTensor>,
    /// One tensor per width, length `maps`.
    pub biases: Vec<ParamTensor>,
}

impl CnnParams {
    pub(crate) fn new(
        input: usize,
        hidden: usize,
        widths: &[usize],
        seeds: &mut SeedSeq,
        scheme: InitScheme,
    ) -> Self {
        let maps = hidden / widths.len();
        let mut filters = Vec::with_capacity(widths.len());
        let mut biases = Vec::with_capacity(widths.len());
        for &w in widths {
            filters.push(seeds.matrix(&format!("cnn.w{w}"), &[maps, w, input], scheme));
            biases.push(seeds.bias(&format!("cnn.b{w}"), maps));
        }
        CnnParams {
            widths: widths.to_vec(),
            filters,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.filters[0].shape()[2]
    }

    pub fn maps_per_width(&self) -> usize {
        self.filters[0].shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.maps_per_width() * self.widths.len()
    }
}

impl ParamSet for CnnParams {
    fn tensors(&self) -> Vec<&ParamTensor> {
        self.filters
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.filters
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CnnCache {
    inputs: Vec<Vec<f64>>,
    /// Per width, per channel: (argmax window, pooled tanh value).
    pooled: Vec<Vec<(usize, f64)>>,
    /// Per width, per channel: full feature map after tanh.
    maps: Vec<Vec<Vec<f64>>>,
}

impl CnnCache {
    /// Per width, per channel tanh responses at every window position.
    pub fn feature_maps(&self) -> &[Vec<Vec<f64>>] {
        &self.maps
    }

    /// Smallest gap between a channel's maximum and its runner-up. Finite
    /// differences are only meaningful when this is not tiny.
    pub fn min_pool_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for (per_width, pooled) in self.maps.iter().zip(&self.pooled) {
            for (map, &(arg, best)) in per_width.iter().zip(pooled) {
                for (pos, &v) in map.iter().enumerate() {
                    if pos != arg {
                        margin = margin.min(best - v);
                    }
                }
            }
        }
        margin
    }
}

/// Token `t` of the zero-padded sequence, or `None` inside the padding.
fn padded(inputs: &[Vec<f64>], width: usize, pos: usize) -> Option<&[f64]> {
    pos.checked_sub(width - 1)
        .and_then(|t| inputs.get(t))
        .map(Vec::as_slice)
}

pub(crate) fn forward(p: &CnnParams, seq: &TermSequence) -> Result<(Vec<f64>, CnnCache)> {
    check_inputs(seq, p.input_dim())?;
    let (d, maps, l) = (p.input_dim(), p.maps_per_width(), seq.len());
    let mut out = Vec::with_capacity(p.hidden_dim());
    let mut pooled = Vec::with_capacity(p.widths.len());
    let mut all_maps = Vec::with_capacity(p.widths.len());
    for ((&w, filter), bias) in p.widths.iter().zip(&p.filters).zip(&p.biases) {
        let windows = l + w - 1;
        let mut width_pooled = Vec::with_capacity(maps);
        let mut width_maps = Vec::with_capacity(maps);
        for ch in 0..maps {
            let kernel = &filter.values()[ch * w * d..(ch + 1) * w * d];
            let map: Vec<f64> = (0..windows)
                .map(|start| {
                    let mut a = bias.values()[ch];
                    for k in 0..w {
                        if let Some(x) = padded(&seq.vectors, w, start + k) {
                            a += kernel[k * d..(k + 1) * d]
                                .iter()
                                .zip(x)
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                    a.tanh()
                })
                .collect();
            // Earliest position wins ties.
            let (arg, best) =
                map.iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                    );
            out.push(best);
            width_pooled.push((arg, best));
            width_maps.push(map);
        }
        pooled.push(width_pooled);
        all_maps.push(width_maps);
    }
    Ok((
        out,
        CnnCache {
            inputs: seq.vectors.clone(),
            pooled,
            maps: all_maps,
        },
    ))
}

pub fn encode_cnn(p: &CnnParams, seq: &TermSequence) -> Result<Vec<f64>> {
    forward(p, seq).map(|(out, _)| out)
}

pub(crate) fn backward(p: &mut CnnParams, cache: &CnnCache, upstream: &[f64]) -> Vec<Vec<f64>> {
    let (d, maps) = (p.input_dim(), p.maps_per_width());
    let mut dx: Vec<Vec<f64>> = vec![vec![0.0; d]; cache.inputs.len()];
    for (wi, &w) in p.widths.iter().enumerate() {
        let (filter, bias) = (&mut p.filters[wi], &mut p.biases[wi]);
        for ch in 0..maps {
            let (start, s) = cache.pooled[wi][ch];
            let da = upstream[wi * maps + ch] * (1.0 - s * s);
            if da == 0.0 {
                continue;
            }
            bias.grad_mut()[ch] += da;
            for k in 0..w {
                let Some(t) = (start + k)
                    .checked_sub(w - 1)
                    .filter(|&t| t < cache.inputs.len())
                else {
                    continue;
                };
                let off = ch * w * d + k * d;
                let x = &cache.inputs[t];
                for j in 0..d {
                    filter.grad_mut()[off + j] += da * x[j];
                    dx[t][j] += da * filter.values()[off + j];
                }
            }
        }
    }
    dx
}
