//! Gated recurrent unit. The term representation is the last hidden state.

use super::{check_inputs, check_len, SeedSeq};
use crate::embed::TermSequence;
use crate::error::Result;
use crate::nn::{
    mat_t_vec_acc, mat_vec_acc, outer_acc, sigmoid, vec_acc, InitScheme, ParamSet, ParamTensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: ParamTensor,
    pub u_r: ParamTensor,
    pub b_r: ParamTensor,
    pub w_z: ParamTensor,
    pub u_z: ParamTensor,
    pub b_z: ParamTensor,
    pub w_h: ParamTensor,
    pub u_h: ParamTensor,
    pub b_h: ParamTensor,
}

impl GruParams {
    pub(crate) fn new(
        input: usize,
        hidden: usize,
        seeds: &mut SeedSeq,
        scheme: InitScheme,
    ) -> Self {
        let (wx, wh) = ([hidden, input], [hidden, hidden]);
        GruParams {
            w_r: seeds.matrix("gru.w_r", &wx, scheme),
            u_r: seeds.matrix("gru.u_r", &wh, scheme),
            b_r: seeds.bias("gru.b_r", hidden),
            w_z: seeds.matrix("gru.w_z", &wx, scheme),
            u_z: seeds.matrix("gru.u_z", &wh, scheme),
            b_z: seeds.bias("gru.b_z", hidden),
            w_h: seeds.matrix("gru.w_h", &wx, scheme),
            u_h: seeds.matrix("gru.u_h", &wh, scheme),
            b_h: seeds.bias("gru.b_h", hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_r.rows()
    }
}

impl ParamSet for GruParams {
    fn tensors(&self) -> Vec<&ParamTensor> {
        vec![
            &self.w_r, &self.u_r, &self.b_r, &self.w_z, &self.u_z, &self.b_z, &self.w_h, &self.u_h,
            &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

/// Gate activations and new state of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

fn gate(w: &ParamTensor, u: &ParamTensor, b: &ParamTensor, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = b.values().to_vec();
    mat_vec_acc(&mut a, w, x);
    mat_vec_acc(&mut a, u, h);
    a
}

fn step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruStep {
    let reset: Vec<f64> = gate(&p.w_r, &p.u_r, &p.b_r, x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let update: Vec<f64> = gate(&p.w_z, &p.u_z, &p.b_z, x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let gated: Vec<f64> = reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let candidate: Vec<f64> = gate(&p.w_h, &p.u_h, &p.b_h, x, &gated)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let h = (0..h_prev.len())
        .map(|i| (1.0 - update[i]) * h_prev[i] + update[i] * candidate[i])
        .collect();
    GruStep {
        reset,
        update,
        candidate,
        h,
    }
}

/// One GRU step from `h_prev` on input `x`.
pub fn gru_step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<GruStep> {
    check_len(x, p.input_dim())?;
    check_len(h_prev, p.hidden_dim())?;
    Ok(step(p, x, h_prev))
}

#[derive(Debug, Clone)]
pub struct GruCache {
    inputs: Vec<Vec<f64>>,
    prev: Vec<Vec<f64>>,
    steps: Vec<GruStep>,
}

pub(crate) fn forward(p: &GruParams, seq: &TermSequence) -> Result<(Vec<f64>, GruCache)> {
    check_inputs(seq, p.input_dim())?;
    let mut h = vec![0.0; p.hidden_dim()];
    let mut prev = Vec::with_capacity(seq.len());
    let mut steps = Vec::with_capacity(seq.len());
    for x in &seq.vectors {
        let s = step(p, x, &h);
        prev.push(std::mem::replace(&mut h, s.h.clone()));
        steps.push(s);
    }
    Ok((
        h,
        GruCache {
            inputs: seq.vectors.clone(),
            prev,
            steps,
        },
    ))
}

/// Runs the recurrence from a zero state and returns the final hidden state.
pub fn encode_gru(p: &GruParams, seq: &TermSequence) -> Result<Vec<f64>> {
    forward(p, seq).map(|(h, _)| h)
}

pub(crate) fn backward(p: &mut GruParams, cache: &GruCache, upstream: &[f64]) -> Vec<Vec<f64>> {
    let hidden = p.hidden_dim();
    let mut dx_all = vec![Vec::new(); cache.steps.len()];
    let mut dh = upstream.to_vec();
    for t in (0..cache.steps.len()).rev() {
        let s = &cache.steps[t];
        let (x, h_prev) = (&cache.inputs[t], &cache.prev[t]);
        let mut dx = vec![0.0; x.len()];
        let mut dh_prev: Vec<f64> = (0..hidden).map(|i| dh[i] * (1.0 - s.update[i])).collect();

        // Candidate branch.
        let da_h: Vec<f64> = (0..hidden)
            .map(|i| dh[i] * s.update[i] * (1.0 - s.candidate[i] * s.candidate[i]))
            .collect();
        let gated: Vec<f64> = s.reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
        outer_acc(&mut p.w_h, &da_h, x);
        outer_acc(&mut p.u_h, &da_h, &gated);
        vec_acc(&mut p.b_h, &da_h);
        mat_t_vec_acc(&mut dx, &p.w_h, &da_h);
        let mut d_gated = vec![0.0; hidden];
        mat_t_vec_acc(&mut d_gated, &p.u_h, &da_h);
        for i in 0..hidden {
            dh_prev[i] += d_gated[i] * s.reset[i];
        }

        // Update gate.
        let da_z: Vec<f64> = (0..hidden)
            .map(|i| dh[i] * (s.candidate[i] - h_prev[i]) * s.update[i] * (1.0 - s.update[i]))
            .collect();
        outer_acc(&mut p.w_z, &da_z, x);
        outer_acc(&mut p.u_z, &da_z, h_prev);
        vec_acc(&mut p.b_z, &da_z);
        mat_t_vec_acc(&mut dx, &p.w_z, &da_z);
        mat_t_vec_acc(&mut dh_prev, &p.u_z, &da_z);

        // Reset gate.
        let da_r: Vec<f64> = (0..hidden)
            .map(|i| d_gated[i] * h_prev[i] * s.reset[i] * (1.0 - s.reset[i]))
            .collect();
        outer_acc(&mut p.w_r, &da_r, x);
        outer_acc(&mut p.u_r, &da_r, h_prev);
        vec_acc(&mut p.b_r, &da_r);
        mat_t_vec_acc(&mut dx, &p.w_r, &da_r);
        mat_t_vec_acc(&mut dh_prev, &p.u_r, &da_r);

        dx_all[t] = dx;
        dh = dh_prev;
    }
    dx_all
}
