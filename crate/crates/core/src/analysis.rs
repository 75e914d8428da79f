//! Error analysis for top-p inference: the minimal mixing rate of a
//! transition matrix, the resulting error bounds, and measured total variation
//! between exact and truncated forward messages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};

use crate::dist::{top_p_truncate, total_variation_slices};
use crate::error::{check_p, Error, Result};
use crate::hmm::{normalize_evidence, Hmm};
use crate::matrix::DenseMatrix;
use crate::sparse::{bayes_update, renormalize, CsrMatrix};
use crate::topp::{TopPHmm, TruncationMode};

/// Slack allowed when checking measured distances against a bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Minimal mixing rate `min_{i1,i2} sum_j min(T[j][i1], T[j][i2])` together
/// with a pair of current states attaining it.
pub fn mixing_rate_with_pair(t: &DenseMatrix) -> Result<(f64, (usize, usize))> {
    t.validate_column_stochastic("transition")?;
    if t.n_rows() != t.n_cols() {
        return Err(Error::InvalidModel("transition matrix must be square".into()));
    }
    let n = t.n_cols();
    // Rows of the transpose are columns of `t`, contiguous in memory.
    let cols = t.transpose();
    let mut best = 1.0f64;
    let mut arg = (0, 0);
    for a in 0..n {
        let ca = cols.row(a);
        for b in a + 1..n {
            let cb = cols.row(b);
            // Partial sums only grow, so a pair can be dropped once it reaches
            // the current minimum.
            let mut overlap = 0.0;
            let mut pruned = false;
            for (chunk_a, chunk_b) in ca.chunks(64).zip(cb.chunks(64)) {
                overlap += chunk_a.iter().zip(chunk_b).map(|(x, y)| x.min(*y)).sum::<f64>();
                if overlap >= best {
                    pruned = true;
                    break;
                }
            }
            if !pruned {
                best = overlap;
                arg = (a, b);
            }
        }
    }
    Ok((best.clamp(0.0, 1.0), arg))
}

pub fn minimal_mixing_rate(t: &DenseMatrix) -> Result<f64> {
    Ok(mixing_rate_with_pair(t)?.0)
}

/// Plain O(n^3) scan over all column pairs, without pruning.
pub fn minimal_mixing_rate_reference(t: &DenseMatrix) -> Result<f64> {
    t.validate_column_stochastic("transition")?;
    let n = t.n_cols();
    let mut best = 1.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let overlap: f64 = (0..t.n_rows()).map(|j| t.get(j, a).min(t.get(j, b))).sum();
            best = best.min(overlap);
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Error bounds for top-p inference at a given `p` and mixing rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    pub p: f64,
    pub gamma: f64,
}

impl ErrorBounds {
    /// Additive bound `(k + 1)(1 - p)` after `k` steps.
    pub fn linear_bound(&self, k: usize) -> f64 {
        (k as f64 + 1.0) * (1.0 - self.p)
    }

    /// Step-independent bound `(1 - p) / gamma`; infinite when `gamma = 0`.
    pub fn mixing_bound(&self) -> f64 {
        let eps = 1.0 - self.p;
        if eps == 0.0 {
            0.0
        } else if self.gamma == 0.0 {
            f64::INFINITY
        } else {
            eps / self.gamma
        }
    }

    pub fn has_mixing_guarantee(&self) -> bool {
        self.mixing_bound().is_finite()
    }

    pub fn effective_bound(&self, k: usize) -> f64 {
        self.linear_bound(k).min(self.mixing_bound())
    }
}

pub fn error_bounds(p: f64, gamma: f64) -> Result<ErrorBounds> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(ErrorBounds { p, gamma })
}

/// Observations fed to both chains every `period` steps, drawn once from the
/// original model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationSchedule {
    pub period: usize,
    pub seed: u64,
}

impl ObservationSchedule {
    /// Observation ids indexed by time step; `None` where no evidence arrives.
    pub fn observations(&self, model: &Hmm, horizon: usize) -> Result<Vec<Option<usize>>> {
        if self.period == 0 {
            return Err(Error::InvalidParameter("observation period must be at least 1".into()));
        }
        let traj = model.sample_trajectory(horizon + 1, self.seed)?;
        Ok(traj
            .iter()
            .enumerate()
            .map(|(t, &(_, o))| (t > 0 && t % self.period == 0).then_some(o))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvTrajectory {
    /// `(time, tv)` for every step from 0 to the horizon.
    pub points: Vec<(usize, f64)>,
}

impl TvTrajectory {
    pub fn final_tv(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }

    pub fn max_tv(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn mean_tv(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len().max(1) as f64
    }
}

/// The two propagation kernels compared by [`tv_trajectory`] and timed by the
/// experiment runner. Buffers are reused across steps.
pub(crate) struct DenseChain<'a> {
    pub model: &'a Hmm,
    pub msg: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> DenseChain<'a> {
    pub fn new(model: &'a Hmm) -> Self {
        let n = model.n_states();
        Self { model, msg: model.prior().probs().to_vec(), scratch: vec![0.0; n] }
    }

    pub fn step(&mut self, obs: Option<usize>, time: usize) -> Result<()> {
        self.model.transition().matvec_into(&self.msg, &mut self.scratch)?;
        if let Some(o) = obs {
            self.scratch.iter_mut().zip(self.model.observation().row(o)).for_each(|(x, l)| *x *= l);
            normalize_evidence(&mut self.scratch, o, time)?;
        }
        std::mem::swap(&mut self.msg, &mut self.scratch);
        Ok(())
    }
}

pub(crate) struct SparseChain {
    transition: CsrMatrix,
    observation: CsrMatrix,
    truncate_messages: Option<f64>,
    pub msg: Vec<f64>,
    scratch: Vec<f64>,
}

impl SparseChain {
    pub fn new(truncated: &TopPHmm<'_>, mode: TruncationMode) -> Self {
        let n = truncated.base.n_states();
        match mode {
            TruncationMode::Model => Self {
                transition: truncated.transition_csr.clone(),
                observation: truncated.observation_csr.clone(),
                truncate_messages: None,
                msg: truncated.prior.probs().to_vec(),
                scratch: vec![0.0; n],
            },
            TruncationMode::Message => Self {
                transition: CsrMatrix::from_dense(truncated.base.transition(), 0.0),
                observation: CsrMatrix::from_dense(truncated.base.observation(), 0.0),
                truncate_messages: Some(truncated.p),
                msg: truncated.prior.probs().to_vec(),
                scratch: vec![0.0; n],
            },
        }
    }

    pub fn step(&mut self, obs: Option<usize>, time: usize) -> Result<()> {
        self.transition.spmv_into(&self.msg, &mut self.scratch)?;
        match obs {
            Some(o) => {
                bayes_update(&self.observation, o, &self.scratch, &mut self.msg);
                normalize_evidence(&mut self.msg, o, time)?;
            }
            None => {
                renormalize(&mut self.scratch)?;
                std::mem::swap(&mut self.msg, &mut self.scratch);
            }
        }
        if let Some(p) = self.truncate_messages {
            self.msg = top_p_truncate(&self.msg, p).0;
        }
        Ok(())
    }
}

/// Runs exact dense inference on `original` and sparse inference on
/// `truncated` side by side and records their total variation at every step.
pub fn tv_trajectory(
    original: &Hmm,
    truncated: &TopPHmm<'_>,
    horizon: usize,
    schedule: Option<ObservationSchedule>,
    mode: TruncationMode,
) -> Result<TvTrajectory> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if original.n_states() != truncated.base.n_states() {
        return Err(Error::DimensionMismatch { expected: original.n_states(), found: truncated.base.n_states() });
    }
    let observations = match schedule {
        Some(s) => s.observations(original, horizon)?,
        None => vec![None; horizon + 1],
    };
    let mut dense = DenseChain::new(original);
    let mut sparse = SparseChain::new(truncated, mode);
    let mut points = Vec::with_capacity(horizon + 1);
    points.push((0, total_variation_slices(&dense.msg, &sparse.msg)?));
    for (t, &obs) in observations.iter().enumerate().skip(1) {
        dense.step(obs, t)?;
        sparse.step(obs, t)?;
        points.push((t, total_variation_slices(&dense.msg, &sparse.msg)?));
    }
    Ok(TvTrajectory { points })
}

/// Outcome of checking a trajectory against the applicable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub mixing_ok: bool,
    pub linear_ok: bool,
    /// Whether the linear bound is enforced rather than only reported.
    pub linear_enforced: bool,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.mixing_ok && (self.linear_ok || !self.linear_enforced)
    }
}

/// Checks every step against `(1-p)/gamma` and `(k+1)(1-p)`. The linear bound
/// is enforced only for message truncation without evidence, the setting in
/// which it is derived.
pub fn check_bounds(traj: &TvTrajectory, bounds: &ErrorBounds, mode: TruncationMode, filtering: bool) -> BoundCheck {
    let mixing = bounds.mixing_bound();
    BoundCheck {
        mixing_ok: traj.points.iter().all(|&(_, tv)| tv <= mixing + BOUND_SLACK),
        linear_ok: traj.points.iter().all(|&(k, tv)| tv <= bounds.linear_bound(k) + BOUND_SLACK),
        linear_enforced: mode == TruncationMode::Message && !filtering,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub gamma: f64,
    /// Largest observed `tv(T phi, T psi) / tv(phi, psi)`.
    pub max_ratio: f64,
    pub pairs_checked: usize,
    pub violations: usize,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn random_simplex_point(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Checks `tv(T phi, T psi) <= (1 - gamma) tv(phi, psi)` on `trials` random
/// pairs drawn from a flat Dirichlet, plus the pair of point masses at the
/// states attaining `gamma`.
pub fn check_contraction(t: &DenseMatrix, trials: usize, seed: u64) -> Result<ContractionReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let (gamma, (a, b)) = mixing_rate_with_pair(t)?;
    let n = t.n_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(trials + 1);
    if n > 1 {
        let mut pa = vec![0.0; n];
        let mut pb = vec![0.0; n];
        pa[a] = 1.0;
        pb[b] = 1.0;
        pairs.push((pa, pb));
    }
    for _ in 0..trials {
        pairs.push((random_simplex_point(n, &mut rng), random_simplex_point(n, &mut rng)));
    }

    let mut report = ContractionReport { gamma, max_ratio: 0.0, pairs_checked: 0, violations: 0 };
    for (phi, psi) in &pairs {
        let before = total_variation_slices(phi, psi)?;
        if before == 0.0 {
            continue;
        }
        let after = total_variation_slices(&t.matvec(phi)?, &t.matvec(psi)?)?;
        report.pairs_checked += 1;
        report.max_ratio = report.max_ratio.max(after / before);
        if after > (1.0 - gamma) * before + BOUND_SLACK {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{make_uniform_hmm, make_weather_hmm};
    use crate::topp::build_top_p_hmm;

    #[test]
    fn mixing_rate_fixtures() {
        assert_eq!(minimal_mixing_rate(make_uniform_hmm(20).unwrap().transition()).unwrap(), 1.0);
        assert_eq!(minimal_mixing_rate(&DenseMatrix::identity(5)).unwrap(), 0.0);
        let (g, pair) = mixing_rate_with_pair(make_weather_hmm().transition()).unwrap();
        assert!((g - 0.6).abs() < 1e-12);
        assert!(pair == (3, 4) || pair == (3, 5), "{pair:?}");
    }

    #[test]
    fn pruned_scan_matches_reference() {
        let h = make_weather_hmm();
        let a = minimal_mixing_rate(h.transition()).unwrap();
        let b = minimal_mixing_rate_reference(h.transition()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn non_stochastic_rejected() {
        let m = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.5]]).unwrap();
        assert!(minimal_mixing_rate(&m).is_err());
        assert!(minimal_mixing_rate_reference(&m).is_err());
    }

    #[test]
    fn bounds() {
        let b = error_bounds(0.9, 0.6).unwrap();
        assert!((b.mixing_bound() - 1.0 / 6.0).abs() < 1e-12);
        assert!((b.linear_bound(0) - 0.1).abs() < 1e-12);
        assert_eq!(b.effective_bound(0), b.linear_bound(0));
        assert_eq!(b.effective_bound(10), b.mixing_bound());

        let exact = error_bounds(1.0, 0.0).unwrap();
        assert_eq!((exact.linear_bound(50), exact.mixing_bound()), (0.0, 0.0));
        let none = error_bounds(0.9, 0.0).unwrap();
        assert!(!none.has_mixing_guarantee());
        assert!((none.effective_bound(3) - 0.4).abs() < 1e-12);

        assert!(error_bounds(0.0, 0.5).is_err());
        assert!(error_bounds(0.9, 1.5).is_err());
    }

    #[test]
    fn p_one_trajectory_is_flat() {
        let h = make_weather_hmm();
        let q = build_top_p_hmm(&h, 1.0).unwrap();
        let traj = tv_trajectory(&h, &q, 30, None, TruncationMode::Model).unwrap();
        assert_eq!(traj.points.len(), 31);
        assert!(traj.points.iter().all(|&(_, tv)| tv < 1e-12));
    }

    #[test]
    fn weather_trajectory_respects_mixing_bound() {
        let h = make_weather_hmm();
        let q = build_top_p_hmm(&h, 0.9).unwrap();
        let bounds = error_bounds(0.9, 0.6).unwrap();
        for mode in [TruncationMode::Model, TruncationMode::Message] {
            let traj = tv_trajectory(&h, &q, 50, None, mode).unwrap();
            assert!(traj.max_tv() <= 1.0 / 6.0 + BOUND_SLACK);
            let check = check_bounds(&traj, &bounds, mode, false);
            assert!(check.passed(), "{mode}: {check:?}");
            assert!(check.linear_ok);
        }
    }

    #[test]
    fn filtering_trajectory_uses_shared_observations() {
        let h = make_weather_hmm();
        let q = build_top_p_hmm(&h, 0.9).unwrap();
        let schedule = ObservationSchedule { period: 5, seed: 3 };
        let obs = schedule.observations(&h, 50).unwrap();
        assert_eq!(obs.iter().filter(|o| o.is_some()).count(), 10);
        assert!(obs[0].is_none() && obs[5].is_some() && obs[6].is_none());
        let traj = tv_trajectory(&h, &q, 50, Some(schedule), TruncationMode::Model).unwrap();
        assert_eq!(traj.points.len(), 51);
        assert!(ObservationSchedule { period: 0, seed: 0 }.observations(&h, 5).is_err());
    }

    #[test]
    fn contraction_fixtures() {
        let uniform = check_contraction(make_uniform_hmm(10).unwrap().transition(), 200, 1).unwrap();
        assert!(uniform.max_ratio < 1e-12);
        let identity = check_contraction(&DenseMatrix::identity(6), 200, 1).unwrap();
        assert!((identity.max_ratio - 1.0).abs() < 1e-12);
        assert!(identity.passed());
        let weather = check_contraction(make_weather_hmm().transition(), 1000, 1).unwrap();
        assert!(weather.passed());
        assert!(weather.max_ratio <= 0.4 + BOUND_SLACK);
        assert!(check_contraction(&DenseMatrix::identity(2), 0, 1).is_err());
    }

    #[test]
    fn horizon_must_be_positive() {
        let h = make_weather_hmm();
        let q = build_top_p_hmm(&h, 0.9).unwrap();
        assert!(tv_trajectory(&h, &q, 0, None, TruncationMode::Model).is_err());
    }
}
