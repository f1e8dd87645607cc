//! Term encoders mapping a [`TermSequence`] to a fixed-size vector.
//!
//! Every encoder has a forward pass that records what its backward pass
//! needs, and a backward pass that accumulates parameter gradients into the
//! tensors' `grad` buffers and returns gradients for each input vector.

use std::fmt;
use std::str::FromStr;

use crate::embed::TermSequence;
use crate::error::{Error, Result};
use crate::nn::{init_params, InitScheme, ParamSet, ParamTensor};

pub mod cnn;
pub mod gru;
pub mod lstm;
pub mod rcnn;
pub mod tea;

pub use cnn::{encode_cnn, CnnCache, CnnParams};
pub use gru::{encode_gru, gru_step, GruCache, GruParams, GruStep};
pub use lstm::{encode_lstm, lstm_step, LstmCache, LstmParams, LstmStep};
pub use rcnn::{encode_rcnn, RcnnCache, RcnnParams};
pub use tea::{encode_tea, TeaCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EncoderKind {
    Tea,
    Gru,
    Lstm,
    Cnn,
    Rcnn,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 5] = [
        EncoderKind::Tea,
        EncoderKind::Gru,
        EncoderKind::Lstm,
        EncoderKind::Cnn,
        EncoderKind::Rcnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Tea => "tea",
            EncoderKind::Gru => "gru",
            EncoderKind::Lstm => "lstm",
            EncoderKind::Cnn => "cnn",
            EncoderKind::Rcnn => "rcnn",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown encoder {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub cnn_filter_widths: Vec<usize>,
    pub rcnn_order: usize,
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind, input_dim: usize, hidden_dim: usize) -> Self {
        EncoderConfig {
            kind,
            input_dim,
            hidden_dim,
            cnn_filter_widths: vec![3],
            rcnn_order: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        match self.kind {
            EncoderKind::Cnn => {
                let k = self.cnn_filter_widths.len();
                if k == 0 || self.cnn_filter_widths.contains(&0) {
                    return Err(Error::Config("CNN needs positive filter widths".into()));
                }
                if !self.hidden_dim.is_multiple_of(k) {
                    return Err(Error::Config(format!(
                        "hidden_dim {} not divisible by {k} filter widths",
                        self.hidden_dim
                    )));
                }
            }
            EncoderKind::Rcnn if self.rcnn_order == 0 => {
                return Err(Error::Config("rcnn_order must be at least 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            EncoderKind::Tea => self.input_dim,
            _ => self.hidden_dim,
        }
    }
}

/// Trainable parameters of one encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Tea,
    Gru(GruParams),
    Lstm(LstmParams),
    Cnn(CnnParams),
    Rcnn(RcnnParams),
}

/// Hands out seeds for consecutive tensors of one model.
pub(crate) struct SeedSeq(u64);

impl SeedSeq {
    pub(crate) fn new(seed: u64) -> Self {
        SeedSeq(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub(crate) fn matrix(
        &mut self,
        name: &str,
        shape: &[usize],
        scheme: InitScheme,
    ) -> ParamTensor {
        self.0 = self.0.wrapping_add(1);
        init_params(name, shape, self.0, scheme).expect("validated shape")
    }

    pub(crate) fn bias(&mut self, name: &str, len: usize) -> ParamTensor {
        init_params(name, &[len], 0, InitScheme::Zeros).expect("validated shape")
    }
}

impl EncoderParams {
    /// Xavier-uniform weights and zero biases.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        Self::with_scheme(config, seed, InitScheme::XavierUniform)
    }

    /// All-zero parameters of the right shapes.
    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        Self::with_scheme(config, 0, InitScheme::Zeros)
    }

    fn with_scheme(config: &EncoderConfig, seed: u64, scheme: InitScheme) -> Result<Self> {
        config.validate()?;
        let (d, h) = (config.input_dim, config.hidden_dim);
        let mut seeds = SeedSeq::new(seed);
        Ok(match config.kind {
            EncoderKind::Tea => EncoderParams::Tea,
            EncoderKind::Gru => EncoderParams::Gru(GruParams::new(d, h, &mut seeds, scheme)),
            EncoderKind::Lstm => EncoderParams::Lstm(LstmParams::new(d, h, &mut seeds, scheme)),
            EncoderKind::Cnn => EncoderParams::Cnn(CnnParams::new(
                d,
                h,
                &config.cnn_filter_widths,
                &mut seeds,
                scheme,
            )),
            EncoderKind::Rcnn => {
                EncoderParams::Rcnn(RcnnParams::new(d, h, config.rcnn_order, &mut seeds, scheme))
            }
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            EncoderParams::Tea => EncoderKind::Tea,
            EncoderParams::Gru(_) => EncoderKind::Gru,
            EncoderParams::Lstm(_) => EncoderKind::Lstm,
            EncoderParams::Cnn(_) => EncoderKind::Cnn,
            EncoderParams::Rcnn(_) => EncoderKind::Rcnn,
        }
    }

    fn check_kind(&self, config: &EncoderConfig) -> Result<()> {
        if self.kind() != config.kind {
            return Err(Error::KindMismatch {
                expected: config.kind.to_string(),
                found: self.kind().to_string(),
            });
        }
        Ok(())
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<&ParamTensor> {
        match self {
            EncoderParams::Tea => Vec::new(),
            EncoderParams::Gru(p) => p.tensors(),
            EncoderParams::Lstm(p) => p.tensors(),
            EncoderParams::Cnn(p) => p.tensors(),
            EncoderParams::Rcnn(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            EncoderParams::Tea => Vec::new(),
            EncoderParams::Gru(p) => p.tensors_mut(),
            EncoderParams::Lstm(p) => p.tensors_mut(),
            EncoderParams::Cnn(p) => p.tensors_mut(),
            EncoderParams::Rcnn(p) => p.tensors_mut(),
        }
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub enum ForwardCache {
    Tea(TeaCache),
    Gru(GruCache),
    Lstm(LstmCache),
    Cnn(CnnCache),
    Rcnn(RcnnCache),
}

impl ForwardCache {
    pub fn kind(&self) -> EncoderKind {
        match self {
            ForwardCache::Tea(_) => EncoderKind::Tea,
            ForwardCache::Gru(_) => EncoderKind::Gru,
            ForwardCache::Lstm(_) => EncoderKind::Lstm,
            ForwardCache::Cnn(_) => EncoderKind::Cnn,
            ForwardCache::Rcnn(_) => EncoderKind::Rcnn,
        }
    }
}

pub(crate) fn check_inputs(seq: &TermSequence, input_dim: usize) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::EmptyTerm);
    }
    if seq.oov_mask.len() != seq.len() {
        return Err(Error::DimMismatch {
            expected: seq.len(),
            found: seq.oov_mask.len(),
        });
    }
    for v in &seq.vectors {
        if v.len() != input_dim {
            return Err(Error::DimMismatch {
                expected: input_dim,
                found: v.len(),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Runs the encoder selected by `config.kind`, keeping the cache for
/// [`encoder_backward`].
pub fn forward(
    config: &EncoderConfig,
    params: &EncoderParams,
    seq: &TermSequence,
) -> Result<(Vec<f64>, ForwardCache)> {
    params.check_kind(config)?;
    check_inputs(seq, config.input_dim)?;
    Ok(match params {
        EncoderParams::Tea => {
            let (out, cache) = tea::forward(seq)?;
            (out, ForwardCache::Tea(cache))
        }
        EncoderParams::Gru(p) => {
            let (out, cache) = gru::forward(p, seq)?;
            (out, ForwardCache::Gru(cache))
        }
        EncoderParams::Lstm(p) => {
            let (out, cache) = lstm::forward(p, seq)?;
            (out, ForwardCache::Lstm(cache))
        }
        EncoderParams::Cnn(p) => {
            let (out, cache) = cnn::forward(p, seq)?;
            (out, ForwardCache::Cnn(cache))
        }
        EncoderParams::Rcnn(p) => {
            let (out, cache) = rcnn::forward(p, seq)?;
            (out, ForwardCache::Rcnn(cache))
        }
    })
}

/// Forward pass without a cache.
pub fn encode(
    config: &EncoderConfig,
    params: &EncoderParams,
    seq: &TermSequence,
) -> Result<Vec<f64>> {
    forward(config, params, seq).map(|(out, _)| out)
}

/// Backpropagates `upstream` (the gradient of a scalar loss w.r.t. the
/// encoder output) through the pass recorded in `cache`.
///
/// Parameter gradients are added to each tensor's `grad`; the returned vectors
/// are the gradients w.r.t. each input vector.
pub fn encoder_backward(
    config: &EncoderConfig,
    params: &mut EncoderParams,
    cache: &ForwardCache,
    upstream: &[f64],
) -> Result<Vec<Vec<f64>>> {
    params.check_kind(config)?;
    if cache.kind() != config.kind {
        return Err(Error::KindMismatch {
            expected: config.kind.to_string(),
            found: cache.kind().to_string(),
        });
    }
    check_len(upstream, config.output_dim())?;
    Ok(match (params, cache) {
        (EncoderParams::Tea, ForwardCache::Tea(c)) => tea::backward(c, upstream),
        (EncoderParams::Gru(p), ForwardCache::Gru(c)) => gru::backward(p, c, upstream),
        (EncoderParams::Lstm(p), ForwardCache::Lstm(c)) => lstm::backward(p, c, upstream),
        (EncoderParams::Cnn(p), ForwardCache::Cnn(c)) => cnn::backward(p, c, upstream),
        (EncoderParams::Rcnn(p), ForwardCache::Rcnn(c)) => rcnn::backward(p, c, upstream),
        _ => unreachable!("kinds checked above"),
    })
}

/// An encoder configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: EncoderParams,
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        let params = EncoderParams::init(&config, seed)?;
        Ok(Encoder { config, params })
    }

    pub fn from_parts(config: EncoderConfig, params: EncoderParams) -> Result<Self> {
        config.validate()?;
        params.check_kind(&config)?;
        let expected = EncoderParams::zeros(&config)?;
        let shapes = |p: &EncoderParams| -> Vec<Vec<usize>> {
            p.tensors().iter().map(|t| t.shape().to_vec()).collect()
        };
        if shapes(&expected) != shapes(&params) {
            return Err(Error::Config("parameter shapes do not match config".into()));
        }
        Ok(Encoder { config, params })
    }

    pub fn encode(&self, seq: &TermSequence) -> Result<Vec<f64>> {
        encode(&self.config, &self.params, seq)
    }

    pub fn forward(&self, seq: &TermSequence) -> Result<(Vec<f64>, ForwardCache)> {
        forward(&self.config, &self.params, seq)
    }

    pub fn backward(&mut self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
        encoder_backward(&self.config, &mut self.params, cache, upstream)
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }
}
