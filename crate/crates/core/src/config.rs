//! Flat `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors. The same keys are used for the snapshot stored in checkpoints.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::ranker::TrainerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Word,
    Sense,
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Ok(EmbeddingKind::Word),
            "sense" => Ok(EmbeddingKind::Sense),
            _ => Err(Error::Config(format!("unknown embedding kind {s:?}"))),
        }
    }
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Word => "word",
            EmbeddingKind::Sense => "sense",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub embedding_kind: EmbeddingKind,
    /// Training pairs.
    pub data: Option<PathBuf>,
    /// Optional validation pairs; without it a seeded tenth of `data` is held out.
    pub gold: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub encoder: EncoderKind,
    pub hidden_dim: usize,
    pub filter_widths: Vec<usize>,
    pub rcnn_order: usize,
    pub trainer: TrainerConfig,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embeddings: None,
            embedding_kind: EmbeddingKind::Word,
            data: None,
            gold: None,
            vocab: None,
            encoder: EncoderKind::Gru,
            hidden_dim: 200,
            filter_widths: vec![3],
            rcnn_order: 2,
            trainer: TrainerConfig::default(),
            out: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.trainer;
        match key {
            "embeddings" => self.embeddings = path(value),
            "embedding_kind" => self.embedding_kind = value.parse()?,
            "data" => self.data = path(value),
            "gold" => self.gold = path(value),
            "vocab" => self.vocab = path(value),
            "out" => self.out = path(value),
            "encoder" => self.encoder = value.parse()?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "filter_widths" => {
                self.filter_widths = value
                    .split(',')
                    .map(|w| num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "rcnn_order" => self.rcnn_order = num(key, value)?,
            "margin" => t.margin = num(key, value)?,
            "negatives" => t.negatives_per_positive = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "epsilon" => t.epsilon = num(key, value)?,
            "dropout" => t.dropout = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key in a fixed order; `parse(to_text())` restores the config.
    pub fn to_text(&self) -> String {
        let t = &self.trainer;
        let widths: Vec<String> = self.filter_widths.iter().map(usize::to_string).collect();
        let mut s = String::new();
        for (k, v) in [
            ("embeddings", show(&self.embeddings)),
            ("embedding_kind", self.embedding_kind.name().to_string()),
            ("data", show(&self.data)),
            ("gold", show(&self.gold)),
            ("vocab", show(&self.vocab)),
            ("out", show(&self.out)),
            ("encoder", self.encoder.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("filter_widths", widths.join(",")),
            ("rcnn_order", self.rcnn_order.to_string()),
            ("margin", t.margin.to_string()),
            ("negatives", t.negatives_per_positive.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("dropout", t.dropout.to_string()),
            ("seed", t.seed.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            kind: self.encoder,
            input_dim,
            hidden_dim: self.hidden_dim,
            cnn_filter_widths: self.filter_widths.clone(),
            rcnn_order: self.rcnn_order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        self.trainer.validate()
    }
}
