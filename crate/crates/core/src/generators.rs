//! Model generators: the six-state weather fixture, the synthetic Bell and
//! Uniform HMMs, and a bigram language model built from a text corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::hmm::Hmm;
use crate::matrix::DenseMatrix;

pub const WEATHER_STATES: [&str; 6] = ["partly_cloudy", "light_rain", "foggy", "sunny", "heavy_rain", "thunderstorm"];
pub const WEATHER_OBSERVATIONS: [&str; 2] = ["raincoat", "no_raincoat"];

/// Weather transitions; row = next state, column = current state.
const WEATHER_TRANSITION: [[f64; 6]; 6] = [
    [0.3, 0.2, 0.3, 0.3, 0.1, 0.1],
    [0.2, 0.2, 0.2, 0.25, 0.2, 0.2],
    [0.1, 0.1, 0.2, 0.15, 0.1, 0.1],
    [0.2, 0.1, 0.1, 0.2, 0.1, 0.1],
    [0.1, 0.2, 0.1, 0.06, 0.2, 0.3],
    [0.1, 0.2, 0.1, 0.04, 0.3, 0.2],
];

/// `P(raincoat | state)`. Rainy states always wear one; sunny is 0.35 and
/// partly cloudy and foggy are set to the same value.
const RAINCOAT: [f64; 6] = [0.35, 1.0, 0.35, 0.35, 1.0, 1.0];

/// Six-state weather HMM with a uniform prior and a raincoat / no-raincoat
/// emission model.
pub fn make_weather_hmm() -> Hmm {
    let transition = DenseMatrix::from_rows(&WEATHER_TRANSITION.map(Vec::from)).expect("square table");
    let observation = DenseMatrix::from_rows(&[RAINCOAT.to_vec(), RAINCOAT.iter().map(|r| 1.0 - r).collect()]).expect("2x6 table");
    Hmm::new(Distribution::uniform(6).expect("six states"), transition, observation)
        .and_then(|h| {
            h.with_labels(
                Some(WEATHER_STATES.iter().map(|s| s.to_string()).collect()),
                Some(WEATHER_OBSERVATIONS.iter().map(|s| s.to_string()).collect()),
            )
        })
        .expect("weather fixture is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellSpec {
    pub n_states: usize,
    pub heavy_count: usize,
    pub heavy_mass: f64,
    pub seed: u64,
}

impl Default for BellSpec {
    fn default() -> Self {
        Self { n_states: 800, heavy_count: 5, heavy_mass: 0.9, seed: 0 }
    }
}

impl BellSpec {
    pub fn validate(&self) -> Result<()> {
        if self.heavy_count == 0 || self.heavy_count >= self.n_states {
            return Err(Error::InvalidParameter(format!(
                "heavy_count must lie in [1, n_states), got {} with {} states",
                self.heavy_count, self.n_states
            )));
        }
        if !(self.heavy_mass > 0.0 && self.heavy_mass < 1.0) {
            return Err(Error::InvalidParameter(format!("heavy_mass must lie in (0, 1), got {}", self.heavy_mass)));
        }
        Ok(())
    }

    pub fn heavy_value(&self) -> f64 {
        self.heavy_mass / self.heavy_count as f64
    }

    pub fn light_value(&self) -> f64 {
        (1.0 - self.heavy_mass) / (self.n_states - self.heavy_count) as f64
    }
}

/// Square matrix where every column puts `heavy_value` on a freshly sampled
/// set of `heavy_count` rows and `light_value` everywhere else.
fn bell_matrix(spec: &BellSpec, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = spec.n_states;
    let mut m = DenseMatrix::from_row_major(n, n, vec![spec.light_value(); n * n]).expect("n x n");
    for j in 0..n {
        for i in index::sample(rng, n, spec.heavy_count) {
            m.set(i, j, spec.heavy_value());
        }
    }
    m
}

/// Bell HMM: each transition and each emission column concentrates
/// `heavy_mass` on a few seeded states and spreads the rest uniformly.
/// One observation per state; uniform prior.
pub fn make_bell_hmm(spec: &BellSpec) -> Result<Hmm> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let transition = bell_matrix(spec, &mut rng);
    let observation = bell_matrix(spec, &mut rng);
    Hmm::new(Distribution::uniform(spec.n_states)?, transition, observation)
}

/// Uniform HMM: every prior, transition and emission distribution uniform;
/// one observation per state.
pub fn make_uniform_hmm(n: usize) -> Result<Hmm> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("a uniform HMM needs at least 2 states, got {n}")));
    }
    let m = DenseMatrix::from_row_major(n, n, vec![1.0 / n as f64; n * n])?;
    Hmm::new(Distribution::uniform(n)?, m.clone(), m)
}

/// Additive smoothing of bigram counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Smoothing {
    /// One pseudo-count per vocabulary entry (Laplace).
    #[default]
    AddOne,
    /// `1/V` pseudo-count per vocabulary entry, i.e. one pseudo-observation
    /// per column in total.
    Perks,
    Additive(f64),
}

impl Smoothing {
    pub fn pseudo_count(&self, vocab_size: usize) -> f64 {
        match *self {
            Self::AddOne => 1.0,
            Self::Perks => 1.0 / vocab_size as f64,
            Self::Additive(a) => a,
        }
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AddOne => f.write_str("add-one"),
            Self::Perks => f.write_str("perks"),
            Self::Additive(a) => write!(f, "{a}"),
        }
    }
}

impl FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add-one" | "laplace" => Ok(Self::AddOne),
            "perks" => Ok(Self::Perks),
            other => match other.parse::<f64>() {
                Ok(a) if a > 0.0 && a.is_finite() => Ok(Self::Additive(a)),
                _ => Err(Error::InvalidParameter(format!(
                    "smoothing must be add-one, perks or a positive pseudo-count, got {other:?}"
                ))),
            },
        }
    }
}

pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub text: String,
    pub lowercase: bool,
    /// Tokens seen fewer times are merged into [`UNKNOWN_TOKEN`].
    pub min_count: usize,
    pub smoothing: Smoothing,
}

impl CorpusSpec {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), lowercase: false, min_count: 1, smoothing: Smoothing::AddOne }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(std::fs::read_to_string(path)?))
    }
}

/// Bigram language model as an HMM. States are vocabulary tokens in sorted
/// order; column `j` of the transition holds the smoothed relative frequencies
/// of the successors of token `j`; every state emits its own token; the prior
/// is the unigram distribution.
pub fn hmm_from_corpus(spec: &CorpusSpec) -> Result<Hmm> {
    let tokens: Vec<String> = spec
        .text
        .split_whitespace()
        .map(|t| if spec.lowercase { t.to_lowercase() } else { t.to_string() })
        .collect();
    if tokens.is_empty() {
        return Err(Error::InvalidCorpus("corpus contains no tokens".into()));
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let threshold = spec.min_count.max(1);
    let mut vocab: Vec<&str> = counts.iter().filter(|(_, &c)| c >= threshold).map(|(t, _)| *t).collect();
    if vocab.len() < counts.len() && !vocab.contains(&UNKNOWN_TOKEN) {
        vocab.push(UNKNOWN_TOKEN);
        vocab.sort_unstable();
    }
    let v = vocab.len();
    if v < 2 {
        return Err(Error::InvalidCorpus(format!("vocabulary has {v} token(s), at least 2 are needed")));
    }
    let position: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let unk = position.get(UNKNOWN_TOKEN).copied();
    let ids: Vec<usize> = tokens
        .iter()
        .map(|t| position.get(t.as_str()).copied().or(unk).expect("rare tokens map to <unk>"))
        .collect();

    let mut bigrams = vec![0.0f64; v * v];
    let mut outgoing = vec![0.0f64; v];
    for w in ids.windows(2) {
        bigrams[w[1] * v + w[0]] += 1.0;
        outgoing[w[0]] += 1.0;
    }
    let alpha = spec.smoothing.pseudo_count(v);
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("smoothing pseudo-count must be positive, got {alpha}")));
    }
    for (k, x) in bigrams.iter_mut().enumerate() {
        *x = (*x + alpha) / (outgoing[k % v] + alpha * v as f64);
    }
    let transition = DenseMatrix::from_row_major(v, v, bigrams)?;

    let mut unigram = vec![0.0; v];
    for &i in &ids {
        unigram[i] += 1.0;
    }
    let prior = Distribution::normalized(unigram)?;
    let labels: Vec<String> = vocab.iter().map(|t| t.to_string()).collect();
    Hmm::new(prior, transition, DenseMatrix::identity(v))?.with_labels(Some(labels.clone()), Some(labels))
}
