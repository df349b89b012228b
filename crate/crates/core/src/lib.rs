//! Two-phase frame-level expression classification: debiased meta
//! pseudo-label pretraining of a teacher/student pair, followed by a
//! self-attention temporal encoder over the frozen student's features and
//! sliding-window smoothing of the predicted label tracks.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod evalpost;
pub mod gradcheck;
pub mod nets;
pub mod pipeline;
pub mod seed;
pub mod spatial;
pub mod synthdata;
pub mod temporal;
mod table;

pub use error::{Error, Result};
