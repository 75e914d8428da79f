//! Hidden Markov models and exact dense forward inference.
//!
//! Matrices are stored column-stochastic: column `j` of the transition matrix
//! is the next-state distribution given current state `j`, and column `j` of
//! the observation matrix is the emission distribution of state `j`. Row `i`
//! of the transition matrix therefore collects `P(next = i | current = j)`
//! over all `j`, so one matrix-vector product advances the forward message.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dist::Distribution;
use crate::error::{check_dim, Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    prior: Distribution,
    transition: DenseMatrix,
    observation: DenseMatrix,
    state_labels: Option<Vec<String>>,
    obs_labels: Option<Vec<String>>,
}

impl Hmm {
    pub fn new(prior: Distribution, transition: DenseMatrix, observation: DenseMatrix) -> Result<Self> {
        let n = prior.len();
        if transition.n_rows() != n || transition.n_cols() != n {
            return Err(Error::InvalidModel(format!(
                "transition matrix is {}x{}, expected {n}x{n}",
                transition.n_rows(),
                transition.n_cols()
            )));
        }
        if observation.n_cols() != n || observation.n_rows() == 0 {
            return Err(Error::InvalidModel(format!(
                "observation matrix is {}x{}, expected (observations)x{n}",
                observation.n_rows(),
                observation.n_cols()
            )));
        }
        transition.validate_column_stochastic("transition")?;
        observation.validate_column_stochastic("observation")?;
        Ok(Self { prior, transition, observation, state_labels: None, obs_labels: None })
    }

    pub fn with_labels(mut self, state_labels: Option<Vec<String>>, obs_labels: Option<Vec<String>>) -> Result<Self> {
        if let Some(l) = &state_labels {
            check_dim(self.n_states(), l.len())?;
        }
        if let Some(l) = &obs_labels {
            check_dim(self.n_obs(), l.len())?;
        }
        self.state_labels = state_labels;
        self.obs_labels = obs_labels;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.prior.len()
    }

    pub fn n_obs(&self) -> usize {
        self.observation.n_rows()
    }

    pub fn prior(&self) -> &Distribution {
        &self.prior
    }

    pub fn transition(&self) -> &DenseMatrix {
        &self.transition
    }

    pub fn observation(&self) -> &DenseMatrix {
        &self.observation
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn obs_labels(&self) -> Option<&[String]> {
        self.obs_labels.as_deref()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.as_ref()?.iter().position(|l| l == label)
    }

    pub fn initial_message(&self) -> ForwardMessage {
        ForwardMessage { dist: self.prior.clone(), time: 0 }
    }

    /// One prediction step: `P(S_t) = sum_j P(S_t | s_j) P(s_j)`.
    pub fn predict_step(&self, msg: &ForwardMessage) -> Result<ForwardMessage> {
        let next = self.transition.matvec(msg.dist.probs())?;
        Ok(ForwardMessage { dist: Distribution::from_normalized_unchecked(next), time: msg.time + 1 })
    }

    /// `P(O_t) = sum_s P(O_t | s) P(s)`.
    pub fn observation_distribution(&self, msg: &ForwardMessage) -> Result<Distribution> {
        let probs = self.observation.matvec(msg.dist.probs())?;
        Ok(Distribution::from_normalized_unchecked(probs))
    }

    /// Prediction followed by a Bayes update on `obs`. The normalizer is
    /// discarded. Evidence with zero likelihood is an error.
    pub fn filter_step(&self, msg: &ForwardMessage, obs: usize) -> Result<ForwardMessage> {
        if obs >= self.n_obs() {
            return Err(Error::InvalidParameter(format!("observation {obs} out of range for {} observations", self.n_obs())));
        }
        let mut post = self.transition.matvec(msg.dist.probs())?;
        let time = msg.time + 1;
        post.iter_mut().zip(self.observation.row(obs)).for_each(|(x, l)| *x *= l);
        normalize_evidence(&mut post, obs, time)?;
        Ok(ForwardMessage { dist: Distribution::from_normalized_unchecked(post), time })
    }

    /// Samples `steps` consecutive `(state, observation)` pairs, starting with
    /// a state drawn from the prior. Deterministic for a given seed.
    pub fn sample_trajectory(&self, steps: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
        if steps == 0 {
            return Err(Error::InvalidParameter("a trajectory needs at least one step".into()));
        }
        let weighted = |col: Vec<f64>| {
            WeightedIndex::new(col).map_err(|e| Error::InvalidModel(format!("cannot sample column: {e}")))
        };
        let transitions = self.transition.columns().into_iter().map(weighted).collect::<Result<Vec<_>>>()?;
        let emissions = self.observation.columns().into_iter().map(weighted).collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut state = weighted(self.prior.probs().to_vec())?.sample(&mut rng);
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            if t > 0 {
                state = transitions[state].sample(&mut rng);
            }
            out.push((state, emissions[state].sample(&mut rng)));
        }
        Ok(out)
    }
}

/// Normalizes a posterior in place, or reports impossible evidence.
pub(crate) fn normalize_evidence(post: &mut [f64], obs: usize, time: usize) -> Result<()> {
    let total: f64 = post.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateEvidence { obs, time });
    }
    post.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

/// State distribution at a given time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardMessage {
    pub dist: Distribution,
    pub time: usize,
}

impl ForwardMessage {
    pub fn new(dist: Distribution, time: usize) -> Self {
        Self { dist, time }
    }
}
