//! Gramian angular field encoding of EEG windows and a small convolutional
//! classifier with contextual attention, trained by hand-written backprop.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod gaf;
pub mod nn;
pub mod train_eval;

pub use error::{Error, Result};
