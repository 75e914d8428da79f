//! Experiment runner: exact dense inference against top-p sparse inference,
//! with per-step wall-clock timing, total variation, sparsity and bounds.

use std::hint::black_box;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{
    check_bounds, error_bounds, minimal_mixing_rate, tv_trajectory, BoundCheck, DenseChain, ObservationSchedule,
    SparseChain,
};
use crate::error::{check_p, Error, Result};
use crate::generators::{hmm_from_corpus, make_bell_hmm, make_uniform_hmm, make_weather_hmm, BellSpec, CorpusSpec};
use crate::hmm::Hmm;
use crate::model_io::read_model;
use crate::topp::{build_top_p_hmm, TopPHmm, TruncationMode};

/// Above this many states the mixing rate is only computed on request.
pub const GAMMA_AUTO_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Bell(BellSpec),
    Uniform { n_states: usize },
    Weather,
    Corpus(CorpusSpec),
    File(PathBuf),
}

impl ModelSource {
    pub fn name(&self) -> String {
        match self {
            Self::Bell(_) => "bell".into(),
            Self::Uniform { .. } => "uniform".into(),
            Self::Weather => "weather".into(),
            Self::Corpus(_) => "lm".into(),
            Self::File(p) => p.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn load(&self) -> Result<Hmm> {
        match self {
            Self::Bell(spec) => make_bell_hmm(spec),
            Self::Uniform { n_states } => make_uniform_hmm(*n_states),
            Self::Weather => Ok(make_weather_hmm()),
            Self::Corpus(spec) => hmm_from_corpus(spec),
            Self::File(path) => read_model(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaPolicy {
    /// Compute for models up to [`GAMMA_AUTO_LIMIT`] states.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model_name: String,
    pub p_values: Vec<f64>,
    pub horizon: usize,
    pub obs_period: Option<usize>,
    pub mode: TruncationMode,
    pub seed: u64,
    pub repetitions: usize,
    pub gamma: GammaPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model_name: "model".into(),
            p_values: vec![0.5, 0.7, 0.9],
            horizon: 50,
            obs_period: None,
            mode: TruncationMode::Model,
            seed: 0,
            repetitions: 5,
            gamma: GammaPolicy::Auto,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.p_values.is_empty() {
            return Err(Error::InvalidParameter("at least one p value is required".into()));
        }
        self.p_values.iter().try_for_each(|&p| check_p(p))?;
        if self.obs_period == Some(0) {
            return Err(Error::InvalidParameter("observation period must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    fn schedule(&self) -> Option<ObservationSchedule> {
        self.obs_period.map(|period| ObservationSchedule { period, seed: self.seed })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub tv: f64,
    pub dense_cumulative_ms: f64,
    pub topp_cumulative_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sparsity: f64,
    pub gamma: Option<f64>,
    pub bound_mixing: Option<f64>,
    pub bound_linear: f64,
    pub tv_final: f64,
    pub tv_max: f64,
    pub tv_mean: f64,
    pub speedup: f64,
    pub bound_check: Option<BoundCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed { steps: Vec<StepRecord>, summary: Summary },
    Failed(String),
}

/// Result of one `(model, p)` configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub model: String,
    pub p: f64,
    pub mode: TruncationMode,
    pub obs_period: Option<usize>,
    pub outcome: Outcome,
}

impl ExperimentRecord {
    pub fn summary(&self) -> Option<&Summary> {
        match &self.outcome {
            Outcome::Completed { summary, .. } => Some(summary),
            Outcome::Failed(_) => None,
        }
    }

    /// True when a bound that applies to this run was exceeded.
    pub fn violates_bounds(&self) -> bool {
        self.summary().and_then(|s| s.bound_check.as_ref()).is_some_and(|c| !c.passed())
    }
}

/// Element-wise median of per-run cumulative times.
fn median_per_step(runs: &[Vec<f64>]) -> Vec<f64> {
    let steps = runs.first().map_or(0, Vec::len);
    (0..steps)
        .map(|t| {
            let mut xs: Vec<f64> = runs.iter().map(|r| r[t]).collect();
            xs.sort_by(f64::total_cmp);
            let m = xs.len() / 2;
            if xs.len() % 2 == 1 {
                xs[m]
            } else {
                0.5 * (xs[m - 1] + xs[m])
            }
        })
        .collect()
}

/// One discarded warm-up run, then the median of `repetitions` timed runs.
fn timed<F: FnMut() -> Result<Vec<f64>>>(repetitions: usize, mut run: F) -> Result<Vec<f64>> {
    run()?;
    let runs = (0..repetitions).map(|_| run()).collect::<Result<Vec<_>>>()?;
    Ok(median_per_step(&runs))
}

/// Cumulative milliseconds after each step; index 0 is the start.
fn time_dense(model: &Hmm, observations: &[Option<usize>]) -> Result<Vec<f64>> {
    let mut chain = DenseChain::new(model);
    let mut cumulative = Vec::with_capacity(observations.len());
    cumulative.push(0.0);
    let start = Instant::now();
    for (t, &obs) in observations.iter().enumerate().skip(1) {
        chain.step(obs, t)?;
        cumulative.push(start.elapsed().as_secs_f64() * 1e3);
    }
    black_box(&chain.msg);
    Ok(cumulative)
}

fn time_sparse(truncated: &TopPHmm<'_>, mode: TruncationMode, observations: &[Option<usize>]) -> Result<Vec<f64>> {
    let mut chain = SparseChain::new(truncated, mode);
    let mut cumulative = Vec::with_capacity(observations.len());
    cumulative.push(0.0);
    let start = Instant::now();
    for (t, &obs) in observations.iter().enumerate().skip(1) {
        chain.step(obs, t)?;
        cumulative.push(start.elapsed().as_secs_f64() * 1e3);
    }
    black_box(&chain.msg);
    Ok(cumulative)
}

/// Median cumulative dense timing, shared by every p value of a model.
pub fn dense_timing(model: &Hmm, config: &ExperimentConfig) -> Result<Vec<f64>> {
    let observations = observations_for(model, config)?;
    timed(config.repetitions, || time_dense(model, &observations))
}

fn observations_for(model: &Hmm, config: &ExperimentConfig) -> Result<Vec<Option<usize>>> {
    match config.schedule() {
        Some(s) => s.observations(model, config.horizon),
        None => Ok(vec![None; config.horizon + 1]),
    }
}

pub fn model_gamma(model: &Hmm, policy: GammaPolicy) -> Result<Option<f64>> {
    let wanted = match policy {
        GammaPolicy::Always => true,
        GammaPolicy::Never => false,
        GammaPolicy::Auto => model.n_states() <= GAMMA_AUTO_LIMIT,
    };
    wanted.then(|| minimal_mixing_rate(model.transition())).transpose()
}

fn run_one(
    model: &Hmm,
    p: f64,
    config: &ExperimentConfig,
    gamma: Option<f64>,
    observations: &[Option<usize>],
    dense_ms: &[f64],
) -> Result<(Vec<StepRecord>, Summary)> {
    let truncated = build_top_p_hmm(model, p)?;
    let traj = tv_trajectory(model, &truncated, config.horizon, config.schedule(), config.mode)?;
    let topp_ms = timed(config.repetitions, || time_sparse(&truncated, config.mode, observations))?;

    let steps = traj
        .points
        .iter()
        .map(|&(step, tv)| StepRecord { step, tv, dense_cumulative_ms: dense_ms[step], topp_cumulative_ms: topp_ms[step] })
        .collect();
    let bounds = error_bounds(p, gamma.unwrap_or(0.0))?;
    let bound_check = gamma.map(|_| check_bounds(&traj, &bounds, config.mode, config.obs_period.is_some()));
    let total = |ms: &[f64]| ms.last().copied().unwrap_or(0.0);
    let summary = Summary {
        sparsity: truncated.report.transition_sparsity,
        gamma,
        bound_mixing: gamma.map(|_| bounds.mixing_bound()),
        bound_linear: bounds.linear_bound(config.horizon),
        tv_final: traj.final_tv(),
        tv_max: traj.max_tv(),
        tv_mean: traj.mean_tv(),
        speedup: total(dense_ms) / total(&topp_ms),
        bound_check,
    };
    Ok((steps, summary))
}

/// Runs every p value of `config` against `model`. Degenerate evidence or
/// other per-configuration failures become failure records.
pub fn run_experiment(model: &Hmm, config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let gamma = model_gamma(model, config.gamma)?;
    let observations = observations_for(model, config)?;
    let dense_ms = timed(config.repetitions, || time_dense(model, &observations))?;

    Ok(config
        .p_values
        .iter()
        .map(|&p| ExperimentRecord {
            model: config.model_name.clone(),
            p,
            mode: config.mode,
            obs_period: config.obs_period,
            outcome: match run_one(model, p, config, gamma, &observations, &dense_ms) {
                Ok((steps, summary)) => Outcome::Completed { steps, summary },
                Err(e) => Outcome::Failed(e.to_string()),
            },
        })
        .collect())
}

#[derive(Debug, Default, Serialize)]
struct CsvRow<'a> {
    kind: &'a str,
    model: &'a str,
    p: f64,
    mode: String,
    obs_period: Option<usize>,
    step: Option<usize>,
    tv: Option<f64>,
    dense_cumulative_ms: Option<f64>,
    topp_cumulative_ms: Option<f64>,
    sparsity: Option<f64>,
    gamma: Option<f64>,
    bound_mixing: Option<f64>,
    bound_linear: Option<f64>,
    tv_final: Option<f64>,
    tv_max: Option<f64>,
    tv_mean: Option<f64>,
    speedup: Option<f64>,
    error: Option<&'a str>,
}

/// Writes step rows followed by a summary row (or a failure row) for each
/// record, in record order.
pub fn write_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        let base = CsvRow { model: &r.model, p: r.p, mode: r.mode.to_string(), obs_period: r.obs_period, ..Default::default() };
        match &r.outcome {
            Outcome::Completed { steps, summary: s } => {
                for st in steps {
                    w.serialize(CsvRow {
                        kind: "step",
                        step: Some(st.step),
                        tv: Some(st.tv),
                        dense_cumulative_ms: Some(st.dense_cumulative_ms),
                        topp_cumulative_ms: Some(st.topp_cumulative_ms),
                        mode: base.mode.clone(),
                        ..base
                    })?;
                }
                let last = steps.last();
                w.serialize(CsvRow {
                    kind: "summary",
                    step: last.map(|s| s.step),
                    tv: last.map(|s| s.tv),
                    dense_cumulative_ms: last.map(|s| s.dense_cumulative_ms),
                    topp_cumulative_ms: last.map(|s| s.topp_cumulative_ms),
                    sparsity: Some(s.sparsity),
                    gamma: s.gamma,
                    bound_mixing: s.bound_mixing,
                    bound_linear: Some(s.bound_linear),
                    tv_final: Some(s.tv_final),
                    tv_max: Some(s.tv_max),
                    tv_mean: Some(s.tv_mean),
                    speedup: Some(s.speedup),
                    ..base
                })?;
            }
            Outcome::Failed(msg) => w.serialize(CsvRow { kind: "failure", error: Some(msg), ..base })?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(p_values: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig { model_name: "weather".into(), p_values, horizon: 10, repetitions: 2, ..Default::default() }
    }

    #[test]
    fn median_of_runs() {
        let runs = vec![vec![0.0, 3.0, 5.0], vec![0.0, 1.0, 9.0], vec![0.0, 2.0, 4.0]];
        assert_eq!(median_per_step(&runs), vec![0.0, 2.0, 5.0]);
        assert_eq!(median_per_step(&runs[..2]), vec![0.0, 2.0, 7.0]);
    }

    #[test]
    fn config_validation() {
        assert!(quick(vec![0.9]).validate().is_ok());
        assert!(ExperimentConfig { horizon: 0, ..quick(vec![0.9]) }.validate().is_err());
        assert!(quick(vec![]).validate().is_err());
        assert!(quick(vec![1.2]).validate().is_err());
        assert!(ExperimentConfig { obs_period: Some(0), ..quick(vec![0.9]) }.validate().is_err());
        assert!(ExperimentConfig { repetitions: 0, ..quick(vec![0.9]) }.validate().is_err());
    }

    #[test]
    fn weather_run_produces_monotone_times_and_bounds() {
        let h = make_weather_hmm();
        let records = run_experiment(&h, &quick(vec![0.7, 0.9, 1.0])).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            let Outcome::Completed { steps, summary } = &r.outcome else { panic!("{:?}", r.outcome) };
            assert_eq!(steps.len(), 11);
            assert!(steps.windows(2).all(|w| w[0].dense_cumulative_ms <= w[1].dense_cumulative_ms));
            assert!(steps.windows(2).all(|w| w[0].topp_cumulative_ms <= w[1].topp_cumulative_ms));
            assert!((summary.gamma.unwrap() - 0.6).abs() < 1e-12);
            assert!(!r.violates_bounds());
        }
        assert!(records[2].summary().unwrap().tv_max < 1e-12);
    }

    #[test]
    fn horizon_one_exact() {
        let h = make_weather_hmm();
        let records = run_experiment(&h, &ExperimentConfig { horizon: 1, ..quick(vec![1.0]) }).unwrap();
        assert!(records[0].summary().unwrap().tv_final < 1e-12);
    }

    #[test]
    fn degenerate_evidence_becomes_failure_row() {
        let h = make_uniform_hmm(50).unwrap();
        let config = ExperimentConfig { obs_period: Some(1), horizon: 40, seed: 1, ..quick(vec![0.5, 1.0]) };
        let records = run_experiment(&h, &config).unwrap();
        assert!(matches!(&records[0].outcome, Outcome::Failed(msg) if msg.contains("degenerate evidence")));
        assert!(matches!(records[1].outcome, Outcome::Completed { .. }));

        let mut buf = Vec::new();
        write_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l.starts_with("failure,")));
    }

    #[test]
    fn csv_layout() {
        let h = make_weather_hmm();
        let records = run_experiment(&h, &quick(vec![0.9])).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "kind,model,p,mode,obs_period,step,tv,dense_cumulative_ms,topp_cumulative_ms,sparsity,gamma,bound_mixing,bound_linear,tv_final,tv_max,tv_mean,speedup,error"
        );
        assert_eq!(text.lines().filter(|l| l.starts_with("step,weather,0.9,model,,")).count(), 11);
        assert_eq!(text.lines().filter(|l| l.starts_with("summary,")).count(), 1);
    }

    #[test]
    fn gamma_policy() {
        let h = make_weather_hmm();
        assert!(model_gamma(&h, GammaPolicy::Never).unwrap().is_none());
        assert!(model_gamma(&h, GammaPolicy::Auto).unwrap().is_some());
    }

    #[test]
    fn source_names() {
        assert_eq!(ModelSource::Weather.name(), "weather");
        assert_eq!(ModelSource::File("runs/bell7.json".into()).name(), "bell7");
        assert_eq!(ModelSource::Uniform { n_states: 4 }.load().unwrap().n_states(), 4);
    }
}
