//! Recurrent convolution with adaptive gated decay.
//!
//! A gate `lambda_t = sigmoid(Wg x_t + Ug h_{t-1} + bg)` decays `n` accumulators:
//!
//! ```text
//! c1_t = lambda_t * c1_{t-1} + (1 - lambda_t) * W1 x_t
//! cm_t = lambda_t * cm_{t-1} + (1 - lambda_t) * (c(m-1)_{t-1} + Wm x_t)   m = 2..n
//! h_t  = tanh(cn_t + b)
//! ```
//!
//! so `cm` holds a weighted average of m-gram features.

use super::{check_inputs, SeedSeq};
use crate::embed::TermSequence;
use crate::error::Result;
use crate::nn::{
    mat_t_vec_acc, mat_vec_acc, outer_acc, sigmoid, vec_acc, InitScheme, ParamSet, ParamTensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RcnnParams {
    pub w_gate: ParamTensor,
    pub u_gate: ParamTensor,
    pub b_gate: ParamTensor,
    /// `W1..Wn`, each `[hidden, input]`.
    pub levels: Vec<ParamTensor>,
    pub bias: ParamTensor,
}

impl RcnnParams {
    pub(crate) fn new(
        input: usize,
        hidden: usize,
        order: usize,
        seeds: &mut SeedSeq,
        scheme: InitScheme,
    ) -> Self {
        let w_gate = seeds.matrix("rcnn.w_gate", &[hidden, input], scheme);
        let u_gate = seeds.matrix("rcnn.u_gate", &[hidden, hidden], scheme);
        let b_gate = seeds.bias("rcnn.b_gate", hidden);
        let levels = (1..=order)
            .map(|m| seeds.matrix(&format!("rcnn.w{m}"), &[hidden, input], scheme))
            .collect();
        let bias = seeds.bias("rcnn.b", hidden);
        RcnnParams {
            w_gate,
            u_gate,
            b_gate,
            levels,
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_gate.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_gate.rows()
    }

    pub fn order(&self) -> usize {
        self.levels.len()
    }
}

impl ParamSet for RcnnParams {
    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut v = vec![&self.w_gate, &self.u_gate, &self.b_gate];
        v.extend(self.levels.iter());
        v.push(&self.bias);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = vec![&mut self.w_gate, &mut self.u_gate, &mut self.b_gate];
        v.extend(self.levels.iter_mut());
        v.push(&mut self.bias);
        v
    }
}

#[derive(Debug, Clone)]
pub struct RcnnCache {
    inputs: Vec<Vec<f64>>,
    h_prev: Vec<Vec<f64>>,
    /// Accumulators before step t, indexed `[t][level]`.
    c_prev: Vec<Vec<Vec<f64>>>,
    /// `W_m x_t`, indexed `[t][level]`.
    projections: Vec<Vec<Vec<f64>>>,
    gates: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl RcnnCache {
    pub fn gates(&self) -> &[Vec<f64>] {
        &self.gates
    }
}

pub(crate) fn forward(p: &RcnnParams, seq: &TermSequence) -> Result<(Vec<f64>, RcnnCache)> {
    check_inputs(seq, p.input_dim())?;
    let (hidden, order) = (p.hidden_dim(), p.order());
    let mut h = vec![0.0; hidden];
    let mut c = vec![vec![0.0; hidden]; order];
    let mut cache = RcnnCache {
        inputs: seq.vectors.clone(),
        h_prev: Vec::with_capacity(seq.len()),
        c_prev: Vec::with_capacity(seq.len()),
        projections: Vec::with_capacity(seq.len()),
        gates: Vec::with_capacity(seq.len()),
        outputs: Vec::with_capacity(seq.len()),
    };
    for x in &seq.vectors {
        let mut a = p.b_gate.values().to_vec();
        mat_vec_acc(&mut a, &p.w_gate, x);
        mat_vec_acc(&mut a, &p.u_gate, &h);
        let gate: Vec<f64> = a.into_iter().map(sigmoid).collect();

        let projections: Vec<Vec<f64>> = p
            .levels
            .iter()
            .map(|w| {
                let mut z = vec![0.0; hidden];
                mat_vec_acc(&mut z, w, x);
                z
            })
            .collect();

        let next: Vec<Vec<f64>> = (0..order)
            .map(|m| {
                (0..hidden)
                    .map(|k| {
                        let feed = if m == 0 {
                            projections[0][k]
                        } else {
                            c[m - 1][k] + projections[m][k]
                        };
                        gate[k] * c[m][k] + (1.0 - gate[k]) * feed
                    })
                    .collect()
            })
            .collect();
        let h_next: Vec<f64> = next[order - 1]
            .iter()
            .zip(p.bias.values())
            .map(|(c, b)| (c + b).tanh())
            .collect();

        cache.h_prev.push(std::mem::replace(&mut h, h_next.clone()));
        cache.c_prev.push(std::mem::replace(&mut c, next));
        cache.projections.push(projections);
        cache.gates.push(gate);
        cache.outputs.push(h_next);
    }
    Ok((h, cache))
}

/// Final hidden state of the gated-decay recurrence from zero states.
pub fn encode_rcnn(p: &RcnnParams, seq: &TermSequence) -> Result<Vec<f64>> {
    forward(p, seq).map(|(h, _)| h)
}

pub(crate) fn backward(p: &mut RcnnParams, cache: &RcnnCache, upstream: &[f64]) -> Vec<Vec<f64>> {
    let (hidden, order) = (p.hidden_dim(), p.order());
    let steps = cache.inputs.len();
    let mut dx_all = vec![Vec::new(); steps];
    let mut dh = upstream.to_vec();
    // Gradient w.r.t. each accumulator at the current step.
    let mut dc = vec![vec![0.0; hidden]; order];
    for t in (0..steps).rev() {
        let (x, gate) = (&cache.inputs[t], &cache.gates[t]);
        let (c_prev, proj) = (&cache.c_prev[t], &cache.projections[t]);
        let h = &cache.outputs[t];

        let dpre: Vec<f64> = (0..hidden).map(|k| dh[k] * (1.0 - h[k] * h[k])).collect();
        vec_acc(&mut p.bias, &dpre);
        for k in 0..hidden {
            dc[order - 1][k] += dpre[k];
        }

        let mut dx = vec![0.0; x.len()];
        let mut dgate = vec![0.0; hidden];
        let mut dc_prev = vec![vec![0.0; hidden]; order];
        for m in 0..order {
            let mut dproj = vec![0.0; hidden];
            for k in 0..hidden {
                let feed = if m == 0 {
                    proj[0][k]
                } else {
                    c_prev[m - 1][k] + proj[m][k]
                };
                dgate[k] += dc[m][k] * (c_prev[m][k] - feed);
                dc_prev[m][k] += dc[m][k] * gate[k];
                let through = dc[m][k] * (1.0 - gate[k]);
                dproj[k] = through;
                if m > 0 {
                    dc_prev[m - 1][k] += through;
                }
            }
            outer_acc(&mut p.levels[m], &dproj, x);
            mat_t_vec_acc(&mut dx, &p.levels[m], &dproj);
        }

        let da: Vec<f64> = (0..hidden)
            .map(|k| dgate[k] * gate[k] * (1.0 - gate[k]))
            .collect();
        outer_acc(&mut p.w_gate, &da, x);
        outer_acc(&mut p.u_gate, &da, &cache.h_prev[t]);
        vec_acc(&mut p.b_gate, &da);
        mat_t_vec_acc(&mut dx, &p.w_gate, &da);
        let mut dh_prev = vec![0.0; hidden];
        mat_t_vec_acc(&mut dh_prev, &p.u_gate, &da);

        dx_all[t] = dx;
        dh = dh_prev;
        dc = dc_prev;
    }
    dx_all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(order: usize, scheme: InitScheme, seed: u64) -> RcnnParams {
        RcnnParams::new(3, 4, order, &mut SeedSeq::new(seed), scheme)
    }

    fn seq() -> TermSequence {
        TermSequence::from_vectors(vec![
            vec![0.3, -0.2, 0.9],
            vec![-1.0, 0.5, 0.1],
            vec![0.0, 0.4, -0.6],
        ])
    }

    #[test]
    fn saturated_gate_keeps_zero_accumulators() {
        let mut p = params(2, InitScheme::XavierUniform, 1);
        p.b_gate.values_mut().iter_mut().for_each(|b| *b = 50.0);
        p.bias.values_mut().copy_from_slice(&[0.1, -0.2, 0.3, 1.5]);
        let h = encode_rcnn(&p, &seq()).unwrap();
        for (h, b) in h.iter().zip(p.bias.values()) {
            assert!((h - b.tanh()).abs() < 1e-9);
        }
    }

    #[test]
    fn open_gate_collapses_to_affine_map() {
        let mut p = params(1, InitScheme::XavierUniform, 2);
        p.b_gate.values_mut().iter_mut().for_each(|b| *b = -50.0);
        p.bias.values_mut().copy_from_slice(&[0.5, 0.0, -0.5, 0.25]);
        let x = vec![0.7, -0.3, 0.2];
        let h = encode_rcnn(&p, &TermSequence::from_vectors(vec![x.clone()])).unwrap();
        let mut expected = p.bias.values().to_vec();
        mat_vec_acc(&mut expected, &p.levels[0], &x);
        for (h, e) in h.iter().zip(expected) {
            assert!((h - e.tanh()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_params_encode_to_zero() {
        let p = params(1, InitScheme::Zeros, 0);
        assert_eq!(encode_rcnn(&p, &seq()).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn gates_and_outputs_in_range() {
        let p = params(3, InitScheme::XavierUniform, 6);
        let (h, cache) = forward(&p, &seq()).unwrap();
        assert!(cache.gates().iter().flatten().all(|&g| g > 0.0 && g < 1.0));
        assert!(h.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn second_level_uses_previous_step_of_first() {
        // With order 2 and one step, c2_1 = (1-l) * (c1_0 + W2 x) = (1-l) * W2 x.
        let mut p = params(2, InitScheme::XavierUniform, 3);
        p.levels[0].values_mut().iter_mut().for_each(|v| *v = 10.0);
        let x = vec![0.2, 0.1, -0.4];
        let (h, cache) = forward(&p, &TermSequence::from_vectors(vec![x.clone()])).unwrap();
        let mut w2x = vec![0.0; 4];
        mat_vec_acc(&mut w2x, &p.levels[1], &x);
        for k in 0..4 {
            let g = cache.gates()[0][k];
            assert!((h[k] - ((1.0 - g) * w2x[k]).tanh()).abs() < 1e-12);
        }
    }
}
