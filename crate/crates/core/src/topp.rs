//! Top-p HMMs: every distribution of a model replaced by its top-p
//! distribution, with the resulting matrices stored in compressed row form.

use std::fmt;
use std::str::FromStr;

use crate::dist::{top_p_truncate, Distribution, top_p_distribution};
use crate::error::{check_p, Error, Result};
use crate::hmm::Hmm;
use crate::matrix::DenseMatrix;
use crate::sparse::CsrMatrix;

/// Where truncation is applied during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationMode {
    /// Only the model parameters are truncated; forward messages propagate
    /// through the truncated transition untouched.
    #[default]
    Model,
    /// Messages propagate through the original transition and the message is
    /// re-truncated to its top-p distribution after every step.
    Message,
}

impl fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Model => "model",
            Self::Message => "message",
        })
    }
}

impl FromStr for TruncationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Self::Model),
            "message" => Ok(Self::Message),
            other => Err(Error::InvalidParameter(format!("unknown truncation mode {other:?} (expected model or message)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopPReport {
    pub p: f64,
    pub transition_sparsity: f64,
    pub observation_sparsity: f64,
    /// Smallest kept mass over the prior and all truncated columns.
    pub min_kept_mass: f64,
    /// Kept mass of every transition column, by current state.
    pub per_column_kept_mass: Vec<f64>,
    pub observation_kept_mass: Vec<f64>,
    pub prior_kept_mass: f64,
}

#[derive(Debug, Clone)]
pub struct TopPHmm<'a> {
    pub base: &'a Hmm,
    pub p: f64,
    pub prior: Distribution,
    pub transition_csr: CsrMatrix,
    pub observation_csr: CsrMatrix,
    pub report: TopPReport,
}

impl TopPHmm<'_> {
    /// The truncated model as an ordinary dense HMM.
    pub fn as_hmm(&self) -> Hmm {
        Hmm::new(self.prior.clone(), self.transition_csr.to_dense(), self.observation_csr.to_dense())
            .and_then(|h| h.with_labels(self.base.state_labels().map(<[_]>::to_vec), self.base.obs_labels().map(<[_]>::to_vec)))
            .expect("top-p columns are stochastic")
    }
}

/// Truncated columns of a column-stochastic matrix as sparse `(row, value)`
/// lists, plus the kept mass of each column.
fn truncate_columns(m: &DenseMatrix, p: f64) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
    (0..m.n_cols())
        .map(|j| {
            let (probs, kept_mass, mut kept) = top_p_truncate(&m.column(j), p);
            kept.sort_unstable();
            (kept.into_iter().map(|i| (i, probs[i])).collect(), kept_mass)
        })
        .unzip()
}

/// Applies the top-p transform independently to the prior, to every
/// transition column and to every observation column.
pub fn build_top_p_hmm(model: &Hmm, p: f64) -> Result<TopPHmm<'_>> {
    check_p(p)?;
    let prior = top_p_distribution(model.prior(), p)?;
    let (t_cols, per_column_kept_mass) = truncate_columns(model.transition(), p);
    let (b_cols, observation_kept_mass) = truncate_columns(model.observation(), p);
    let transition_csr = CsrMatrix::from_sparse_columns(model.n_states(), &t_cols)?;
    let observation_csr = CsrMatrix::from_sparse_columns(model.n_obs(), &b_cols)?;

    let min_kept_mass = per_column_kept_mass
        .iter()
        .chain(&observation_kept_mass)
        .fold(prior.kept_mass, |a, &b| a.min(b));
    let report = TopPReport {
        p,
        transition_sparsity: sparsity(&transition_csr),
        observation_sparsity: sparsity(&observation_csr),
        min_kept_mass,
        per_column_kept_mass,
        observation_kept_mass,
        prior_kept_mass: prior.kept_mass,
    };
    Ok(TopPHmm { base: model, p, prior: prior.distribution, transition_csr, observation_csr, report })
}

/// Ratio of zero entries: `1 - stored / (rows * cols)`.
pub fn sparsity(m: &CsrMatrix) -> f64 {
    m.sparsity()
}
