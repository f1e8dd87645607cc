//! LSTM cell with separate input and recurrent weights for each gate.
//!
//! Gates: input `i`, forget `f`, output `u`; `g` is the cell candidate.
//! `c_t = f * c_{t-1} + i * g`, `h_t = tanh(c_t) * u`.

use super::{check_inputs, check_len, SeedSeq};
use crate::embed::TermSequence;
use crate::error::Result;
use crate::nn::{
    mat_t_vec_acc, mat_vec_acc, outer_acc, sigmoid, vec_acc, InitScheme, ParamSet, ParamTensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: ParamTensor,
    pub u_i: ParamTensor,
    pub b_i: ParamTensor,
    pub w_f: ParamTensor,
    pub u_f: ParamTensor,
    pub b_f: ParamTensor,
    pub w_u: ParamTensor,
    pub u_u: ParamTensor,
    pub b_u: ParamTensor,
    pub w_c: ParamTensor,
    pub u_c: ParamTensor,
    pub b_c: ParamTensor,
}

impl LstmParams {
    pub(crate) fn new(
        input: usize,
        hidden: usize,
        seeds: &mut SeedSeq,
        scheme: InitScheme,
    ) -> Self {
        let (wx, wh) = ([hidden, input], [hidden, hidden]);
        LstmParams {
            w_i: seeds.matrix("lstm.w_i", &wx, scheme),
            u_i: seeds.matrix("lstm.u_i", &wh, scheme),
            b_i: seeds.bias("lstm.b_i", hidden),
            w_f: seeds.matrix("lstm.w_f", &wx, scheme),
            u_f: seeds.matrix("lstm.u_f", &wh, scheme),
            b_f: seeds.bias("lstm.b_f", hidden),
            w_u: seeds.matrix("lstm.w_u", &wx, scheme),
            u_u: seeds.matrix("lstm.u_u", &wh, scheme),
            b_u: seeds.bias("lstm.b_u", hidden),
            w_c: seeds.matrix("lstm.w_c", &wx, scheme),
            u_c: seeds.matrix("lstm.u_c", &wh, scheme),
            b_c: seeds.bias("lstm.b_c", hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.rows()
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<&ParamTensor> {
        vec![
            &self.w_i, &self.u_i, &self.b_i, &self.w_f, &self.u_f, &self.b_f, &self.w_u, &self.u_u,
            &self.b_u, &self.w_c, &self.u_c, &self.b_c,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![
            &mut self.w_i,
            &mut self.u_i,
            &mut self.b_i,
            &mut self.w_f,
            &mut self.u_f,
            &mut self.b_f,
            &mut self.w_u,
            &mut self.u_u,
            &mut self.b_u,
            &mut self.w_c,
            &mut self.u_c,
            &mut self.b_c,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

fn affine(w: &ParamTensor, u: &ParamTensor, b: &ParamTensor, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = b.values().to_vec();
    mat_vec_acc(&mut a, w, x);
    mat_vec_acc(&mut a, u, h);
    a
}

fn step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let sig = |v: Vec<f64>| v.into_iter().map(sigmoid).collect::<Vec<_>>();
    let input_gate = sig(affine(&p.w_i, &p.u_i, &p.b_i, x, h_prev));
    let forget_gate = sig(affine(&p.w_f, &p.u_f, &p.b_f, x, h_prev));
    let output_gate = sig(affine(&p.w_u, &p.u_u, &p.b_u, x, h_prev));
    let candidate: Vec<f64> = affine(&p.w_c, &p.u_c, &p.b_c, x, h_prev)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let c: Vec<f64> = (0..c_prev.len())
        .map(|k| forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k])
        .collect();
    let h = c
        .iter()
        .zip(&output_gate)
        .map(|(c, u)| c.tanh() * u)
        .collect();
    LstmStep {
        input_gate,
        forget_gate,
        output_gate,
        candidate,
        c,
        h,
    }
}

pub fn lstm_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep> {
    check_len(x, p.input_dim())?;
    check_len(h_prev, p.hidden_dim())?;
    check_len(c_prev, p.hidden_dim())?;
    Ok(step(p, x, h_prev, c_prev))
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Vec<Vec<f64>>,
    h_prev: Vec<Vec<f64>>,
    c_prev: Vec<Vec<f64>>,
    steps: Vec<LstmStep>,
}

pub(crate) fn forward(p: &LstmParams, seq: &TermSequence) -> Result<(Vec<f64>, LstmCache)> {
    check_inputs(seq, p.input_dim())?;
    let hidden = p.hidden_dim();
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let mut cache = LstmCache {
        inputs: seq.vectors.clone(),
        h_prev: Vec::with_capacity(seq.len()),
        c_prev: Vec::with_capacity(seq.len()),
        steps: Vec::with_capacity(seq.len()),
    };
    for x in &seq.vectors {
        let s = step(p, x, &h, &c);
        cache.h_prev.push(std::mem::replace(&mut h, s.h.clone()));
        cache.c_prev.push(std::mem::replace(&mut c, s.c.clone()));
        cache.steps.push(s);
    }
    Ok((h, cache))
}

/// Final hidden state of the LSTM run from zero hidden and cell states.
pub fn encode_lstm(p: &LstmParams, seq: &TermSequence) -> Result<Vec<f64>> {
    forward(p, seq).map(|(h, _)| h)
}

pub(crate) fn backward(p: &mut LstmParams, cache: &LstmCache, upstream: &[f64]) -> Vec<Vec<f64>> {
    let hidden = p.hidden_dim();
    let mut dx_all = vec![Vec::new(); cache.steps.len()];
    let mut dh = upstream.to_vec();
    let mut dc_next = vec![0.0; hidden];
    for t in (0..cache.steps.len()).rev() {
        let s = &cache.steps[t];
        let (x, h_prev, c_prev) = (&cache.inputs[t], &cache.h_prev[t], &cache.c_prev[t]);
        let mut da_i = vec![0.0; hidden];
        let mut da_f = vec![0.0; hidden];
        let mut da_u = vec![0.0; hidden];
        let mut da_c = vec![0.0; hidden];
        let mut dc_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let tc = s.c[k].tanh();
            let (i, f, u, g) = (
                s.input_gate[k],
                s.forget_gate[k],
                s.output_gate[k],
                s.candidate[k],
            );
            let dc = dc_next[k] + dh[k] * u * (1.0 - tc * tc);
            da_u[k] = dh[k] * tc * u * (1.0 - u);
            da_f[k] = dc * c_prev[k] * f * (1.0 - f);
            da_i[k] = dc * g * i * (1.0 - i);
            da_c[k] = dc * i * (1.0 - g * g);
            dc_prev[k] = dc * f;
        }
        let mut dx = vec![0.0; x.len()];
        let mut dh_prev = vec![0.0; hidden];
        for (w, u, b, da) in [
            (&mut p.w_i, &mut p.u_i, &mut p.b_i, &da_i),
            (&mut p.w_f, &mut p.u_f, &mut p.b_f, &da_f),
            (&mut p.w_u, &mut p.u_u, &mut p.b_u, &da_u),
            (&mut p.w_c, &mut p.u_c, &mut p.b_c, &da_c),
        ] {
            outer_acc(w, da, x);
            outer_acc(u, da, h_prev);
            vec_acc(b, da);
            mat_t_vec_acc(&mut dx, w, da);
            mat_t_vec_acc(&mut dh_prev, u, da);
        }
        dx_all[t] = dx;
        dh = dh_prev;
        dc_next = dc_prev;
    }
    dx_all
}
