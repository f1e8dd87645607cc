//! Hypernym discovery as learning to rank.
//!
//! Terms (words or multi-word phrases) are looked up in a pre-trained
//! embedding table, encoded into fixed-size vectors by one of five encoders
//! (embedding averaging, GRU, LSTM, CNN, RCNN), and compared to candidate
//! hypernyms by cosine similarity. Encoder parameters are trained with a
//! max-margin ranking loss and diagonal AdaGrad; ranked predictions are scored
//! with MAP, MRR and precision at k.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embed;
pub mod encoders;
mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod ranker;

pub use embed::{EmbeddingTable, TermSequence};
pub use encoders::{Encoder, EncoderConfig, EncoderKind, EncoderParams};
pub use error::{Error, Result};
pub use metrics::{EvalReport, GoldStandard};
pub use nn::{OptimizerConfig, ParamTensor};
pub use ranker::{Model, RankedList, TrainerConfig, TrainingPair};
