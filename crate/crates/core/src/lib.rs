//! Top-p truncated hidden Markov models.
//!
//! Every distribution of an HMM (prior, transition columns, emission columns)
//! is cut down to the smallest set of most likely events carrying at least
//! mass `p` and renormalized. The truncated matrices are stored in compressed
//! row form so forward inference costs time proportional to the kept entries.
//! The [`analysis`] module measures the resulting total variation error and
//! evaluates the bounds `(k+1)(1-p)` and `(1-p)/gamma`, where `gamma` is the
//! minimal mixing rate of the transition matrix.

pub mod analysis;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod generators;
pub mod hmm;
pub mod matrix;
pub mod model_io;
pub mod sparse;
pub mod topp;

pub use dist::{top_p_distribution, top_p_set, total_variation, Distribution, TopPResult};
pub use error::{Error, Result};
pub use hmm::{ForwardMessage, Hmm};
pub use matrix::DenseMatrix;
pub use sparse::{sparse_filter_step, sparse_predict_step, CsrMatrix};
pub use topp::{build_top_p_hmm, sparsity, TopPHmm, TopPReport, TruncationMode};
