//! Discrete probability distributions, the top-p transform and total variation.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_p, Error, Result};

/// Allowed deviation of a distribution's total mass from one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A finite discrete probability vector indexed by event id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates that every entry lies in `[0, 1]` and that the entries sum to
    /// one within [`SUM_TOLERANCE`]. Non-normalized input is rejected, never
    /// rescaled.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probabilities(&probs)?;
        Ok(Self { probs })
    }

    /// Scales a non-negative vector to unit mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no events".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {w} is not a finite non-negative number")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("total weight is zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("a distribution needs at least one event".into()));
        }
        Ok(Self { probs: vec![1.0 / n as f64; n] })
    }

    pub fn point_mass(n: usize, event: usize) -> Result<Self> {
        if event >= n {
            return Err(Error::InvalidParameter(format!("event {event} out of range for {n} events")));
        }
        let mut probs = vec![0.0; n];
        probs[event] = 1.0;
        Ok(Self { probs })
    }

    /// Wraps a vector the caller has already normalized.
    pub(crate) fn from_normalized_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(validate_probabilities(&probs).is_ok());
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&x| x > 0.0).count()
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

pub(crate) fn validate_probabilities(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("no events".into()));
    }
    for (i, &x) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidDistribution(format!("entry {i} = {x} is outside [0, 1]")));
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("entries sum to {total}, not 1")));
    }
    Ok(())
}

/// Result of truncating a distribution to its top-p set.
#[derive(Debug, Clone, PartialEq)]
pub struct TopPResult {
    pub distribution: Distribution,
    /// Mass `P(Y)` accumulated before the cut, which is at least `p`.
    pub kept_mass: f64,
    /// Event ids of the top-p set, ascending.
    pub kept_indices: Vec<usize>,
}

/// Event ids by descending probability; equal probabilities keep ascending id
/// order.
fn sorted_order(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    order
}

/// Walks the sorted order and accumulates mass until `sum >= p`. Zero entries
/// end the walk, so they are never part of the set even when rounding leaves
/// the total non-zero mass a hair below `p`. Returns the prefix and its mass.
fn accumulate(probs: &[f64], p: f64) -> (Vec<usize>, f64) {
    let mut sum = 0.0;
    let mut kept = Vec::new();
    for j in sorted_order(probs) {
        if probs[j] == 0.0 {
            break;
        }
        sum += probs[j];
        kept.push(j);
        if sum >= p {
            break;
        }
    }
    (kept, sum)
}

/// Truncates a raw probability vector in place of allocating a
/// [`Distribution`]. Entries outside the top-p set become exact zeros; kept
/// entries are divided by the accumulated mass.
pub(crate) fn top_p_truncate(probs: &[f64], p: f64) -> (Vec<f64>, f64, Vec<usize>) {
    let (kept, sum) = accumulate(probs, p);
    let mut out = vec![0.0; probs.len()];
    for &j in &kept {
        out[j] = probs[j] / sum;
    }
    (out, sum, kept)
}

/// Top-p set of `dist`, in sorted (descending probability) order.
pub fn top_p_set(dist: &Distribution, p: f64) -> Result<Vec<usize>> {
    check_p(p)?;
    Ok(accumulate(dist.probs(), p).0)
}

/// Top-p distribution of `dist`: `P(x)/P(Y)` on the top-p set `Y`, zero
/// elsewhere.
pub fn top_p_distribution(dist: &Distribution, p: f64) -> Result<TopPResult> {
    check_p(p)?;
    let (probs, kept_mass, mut kept_indices) = top_p_truncate(dist.probs(), p);
    kept_indices.sort_unstable();
    Ok(TopPResult {
        distribution: Distribution::from_normalized_unchecked(probs),
        kept_mass,
        kept_indices,
    })
}

/// Half the L1 distance between two distributions over the same events.
pub fn total_variation(a: &Distribution, b: &Distribution) -> Result<f64> {
    total_variation_slices(a.probs(), b.probs())
}

pub fn total_variation_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}
