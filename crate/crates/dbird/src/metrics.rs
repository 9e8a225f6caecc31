//! Posterior summaries and simulation scoring.
//!
//! The replication study is *paired*: every model variant fits the same
//! simulated dataset within a replication, so per-replication comparisons
//! (which model had the lowest error on this cohort?) are free of
//! between-dataset noise.

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::data::{ModelSpec, ModelVariant};
use crate::gibbs::{run_chain_with, ChainOptions, EngineError, McmcConfig, PosteriorDraws};
use crate::sim::{simulate_cohort, SimConfig, SimError};
use crate::stream::{derive_seed, role};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("credible level must lie strictly between 0 and 1, got {0}")]
    LevelOutOfRange(f64),
    #[error("{context}: shape {expected:?} does not match {got:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("replication study needs at least one replication")]
    NoReplications,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Linear-interpolation quantile of an ascending-sorted slice (the same
/// estimator R calls type 7): index `h = (n-1)p`, interpolated between the
/// bracketing order statistics. Returns `None` for an empty slice or a
/// probability outside `[0, 1]`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        Some(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    } else {
        Some(sorted[lo])
    }
}

/// Per-cell posterior summaries of ability: mean, spread, and a central
/// credible interval at `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSummary {
    pub level: f64,
    pub mean: Array2<f64>,
    /// Sample standard deviation of the kept draws (zero for a single draw).
    pub sd: Array2<f64>,
    pub lower: Array2<f64>,
    pub upper: Array2<f64>,
}

/// Summarizes the ability draws cell by cell.
pub fn summarize_draws(draws: &PosteriorDraws, level: f64) -> Result<IntervalSummary, MetricsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::LevelOutOfRange(level));
    }
    let (n, t_len) = (draws.n_students(), draws.n_times());
    let k = draws.n_kept();
    let tail = 0.5 * (1.0 - level);
    let mut mean = Array2::zeros((n, t_len));
    let mut sd = Array2::zeros((n, t_len));
    let mut lower = Array2::zeros((n, t_len));
    let mut upper = Array2::zeros((n, t_len));
    let mut cell = Vec::with_capacity(k);
    for i in 0..n {
        for t in 0..t_len {
            draws.fill_theta_cell(i, t, &mut cell);
            let m = cell.iter().sum::<f64>() / k as f64;
            let var = if k > 1 {
                cell.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64
            } else {
                0.0
            };
            cell.sort_unstable_by(f64::total_cmp);
            mean[[i, t]] = m;
            sd[[i, t]] = var.sqrt();
            lower[[i, t]] = quantile_type7(&cell, tail).expect("non-empty draws");
            upper[[i, t]] = quantile_type7(&cell, 1.0 - tail).expect("non-empty draws");
        }
    }
    Ok(IntervalSummary { level, mean, sd, lower, upper })
}

/// Mean squared error between an estimate and the truth, cell-averaged.
pub fn mse(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64, MetricsError> {
    if estimate.dim() != truth.dim() {
        return Err(MetricsError::DimensionMismatch {
            context: "mse",
            expected: estimate.dim(),
            got: truth.dim(),
        });
    }
    if estimate.is_empty() {
        return Err(MetricsError::EmptyInput("estimate"));
    }
    let total: f64 = estimate.iter().zip(truth.iter()).map(|(e, t)| (e - t).powi(2)).sum();
    Ok(total / estimate.len() as f64)
}

/// Fraction of cells whose closed interval `[lower, upper]` contains the
/// truth.
pub fn empirical_coverage(
    summary: &IntervalSummary,
    truth: &Array2<f64>,
) -> Result<f64, MetricsError> {
    if summary.lower.dim() != truth.dim() {
        return Err(MetricsError::DimensionMismatch {
            context: "empirical_coverage",
            expected: summary.lower.dim(),
            got: truth.dim(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput("truth"));
    }
    let mut hits = 0usize;
    for ((lo, hi), v) in summary.lower.iter().zip(summary.upper.iter()).zip(truth.iter()) {
        if *lo <= *v && *v <= *hi {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean credible-interval width across cells.
pub fn mean_interval_width(summary: &IntervalSummary) -> Result<f64, MetricsError> {
    if summary.lower.is_empty() {
        return Err(MetricsError::EmptyInput("summary"));
    }
    let total: f64 =
        summary.lower.iter().zip(summary.upper.iter()).map(|(lo, hi)| hi - lo).sum();
    Ok(total / summary.lower.len() as f64)
}

/// Mean and sample standard deviation across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub sd: f64,
}

impl SummaryStat {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// Scores for one model variant, aggregated over replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub variant: ModelVariant,
    pub mse: SummaryStat,
    pub coverage: SummaryStat,
    pub interval_width: SummaryStat,
    pub per_rep_mse: Vec<f64>,
    pub per_rep_coverage: Vec<f64>,
    pub per_rep_width: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyConfig {
    /// Cohort design; the seed field is overridden per replication.
    pub sim: SimConfig,
    /// Sampler schedule; the seed field is overridden per fit.
    pub mcmc: McmcConfig,
    pub chain_options: ChainOptions,
    pub n_reps: usize,
    pub level: f64,
    /// Master seed; everything else derives from it.
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(sim: SimConfig, mcmc: McmcConfig, n_reps: usize, seed: u64) -> Self {
        Self { sim, mcmc, chain_options: ChainOptions::default(), n_reps, level: 0.95, seed }
    }
}

/// Outcome of a paired replication study over the three model variants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub n_reps: usize,
    pub level: f64,
    /// Ordered: the full model, then the pooled and heteroskedastic
    /// random-walk baselines.
    pub models: Vec<ModelMetrics>,
    /// Replications where the full model strictly beat *both* baselines on
    /// MSE.
    pub full_model_wins: usize,
    pub full_model_win_fraction: f64,
    /// Set when `n_reps == 1`: the sd columns are degenerate, not estimates.
    pub single_replication: bool,
}

impl StudyResult {
    /// Plain-text summary table, one row per model.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>20} {:>20} {:>20}\n",
            "model", "MSE", "coverage", "interval width"
        ));
        for m in &self.models {
            out.push_str(&format!(
                "{:<12} {:>20} {:>20} {:>20}\n",
                m.variant.label(),
                format!("{:.5} ± {:.5}", m.mse.mean, m.mse.sd),
                format!("{:.4} ± {:.4}", m.coverage.mean, m.coverage.sd),
                format!("{:.4} ± {:.4}", m.interval_width.mean, m.interval_width.sd),
            ));
        }
        out.push_str(&format!(
            "\n{} has the lowest MSE in {}/{} replications ({:.1}%).\n",
            ModelVariant::DBird.label(),
            self.full_model_wins,
            self.n_reps,
            100.0 * self.full_model_win_fraction
        ));
        if self.single_replication {
            out.push_str("note: single replication — spread columns are not estimates.\n");
        }
        out
    }
}

/// Runs the paired study: each replication simulates one cohort and fits all
/// three variants to it. Deterministic in `config.seed`.
pub fn replicate_study(config: &StudyConfig) -> Result<StudyResult, MetricsError> {
    if config.n_reps == 0 {
        return Err(MetricsError::NoReplications);
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(MetricsError::LevelOutOfRange(config.level));
    }
    let variants = [ModelVariant::DBird, ModelVariant::GlobalRw, ModelVariant::HeteroRw];
    let mut metrics: Vec<ModelMetrics> = variants
        .iter()
        .map(|v| ModelMetrics {
            variant: *v,
            mse: SummaryStat { mean: 0.0, sd: 0.0 },
            coverage: SummaryStat { mean: 0.0, sd: 0.0 },
            interval_width: SummaryStat { mean: 0.0, sd: 0.0 },
            per_rep_mse: Vec::with_capacity(config.n_reps),
            per_rep_coverage: Vec::with_capacity(config.n_reps),
            per_rep_width: Vec::with_capacity(config.n_reps),
        })
        .collect();
    let mut full_model_wins = 0usize;

    for rep in 0..config.n_reps {
        let rep_seed = derive_seed(config.seed, role::REPLICATION, rep as u64);
        let sim_config = SimConfig { seed: rep_seed, ..config.sim };
        let (latents, data) = simulate_cohort(&sim_config)?;
        let mut rep_mse = [0.0f64; 3];
        for (m, variant) in variants.iter().enumerate() {
            let spec = ModelSpec::for_variant(*variant);
            let chain_seed = derive_seed(rep_seed, role::REPLICATION, 1 + m as u64);
            let mcmc = McmcConfig { seed: chain_seed, ..config.mcmc };
            let draws = run_chain_with(&data, &spec, &mcmc, &config.chain_options)?;
            let summary = summarize_draws(&draws, config.level)?;
            let err = mse(&summary.mean, &latents.theta)?;
            metrics[m].per_rep_mse.push(err);
            metrics[m].per_rep_coverage.push(empirical_coverage(&summary, &latents.theta)?);
            metrics[m].per_rep_width.push(mean_interval_width(&summary)?);
            rep_mse[m] = err;
        }
        if rep_mse[0] < rep_mse[1] && rep_mse[0] < rep_mse[2] {
            full_model_wins += 1;
        }
    }

    for m in &mut metrics {
        m.mse = SummaryStat::from_samples(&m.per_rep_mse);
        m.coverage = SummaryStat::from_samples(&m.per_rep_coverage);
        m.interval_width = SummaryStat::from_samples(&m.per_rep_width);
    }
    Ok(StudyResult {
        n_reps: config.n_reps,
        level: config.level,
        models: metrics,
        full_model_wins,
        full_model_win_fraction: full_model_wins as f64 / config.n_reps as f64,
        single_replication: config.n_reps == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ItemBank, Observation, ResponseDataset};
    use crate::gibbs::run_chain;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn quantiles_interpolate_between_order_statistics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile_type7(&xs, 0.25).unwrap(), 1.75, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_type7(&xs, 0.75).unwrap(), 3.25, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_type7(&xs, 0.0).unwrap(), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(quantile_type7(&xs, 1.0).unwrap(), 4.0, epsilon = 0.0);
        assert_abs_diff_eq!(quantile_type7(&xs, 0.5).unwrap(), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_type7(&[7.0], 0.3).unwrap(), 7.0, epsilon = 0.0);
        assert!(quantile_type7(&[], 0.5).is_none());
        assert!(quantile_type7(&xs, 1.5).is_none());
        assert!(quantile_type7(&xs, f64::NAN).is_none());
    }

    #[test]
    fn mse_matches_hand_computation() {
        let estimate = array![[0.0, 1.0], [2.0, 3.0]];
        let truth = array![[0.0, 1.0], [2.0, 4.0]];
        assert_abs_diff_eq!(mse(&estimate, &truth).unwrap(), 0.25, epsilon = 1e-15);
        let wrong = Array2::<f64>::zeros((1, 2));
        assert!(matches!(
            mse(&estimate, &wrong),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coverage_uses_closed_intervals() {
        let summary = IntervalSummary {
            level: 0.95,
            mean: Array2::zeros((1, 3)),
            sd: Array2::zeros((1, 3)),
            lower: array![[0.0, 0.0, 0.0]],
            upper: array![[1.0, 1.0, 1.0]],
        };
        // At the boundary, inside, and outside: boundaries count as covered.
        let truth = array![[1.0, 0.5, 1.5]];
        assert_abs_diff_eq!(
            empirical_coverage(&summary, &truth).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mean_interval_width(&summary).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn summaries_come_from_the_kept_draws() {
        let mut obs = Vec::new();
        for i in 0..2 {
            for t in 0..3 {
                obs.push(Observation::new(i, t, t, u8::from((i + t) % 2 == 0)));
            }
        }
        let data =
            ResponseDataset::new(2, 3, obs, ItemBank::new(vec![-0.5, 0.0, 0.5]).unwrap()).unwrap();
        let config = McmcConfig { n_burn: 20, n_keep: 50, thin: 1, seed: 99 };
        let draws = run_chain(&data, &ModelSpec::dbird(), &config).unwrap();
        let summary = summarize_draws(&draws, 0.9).unwrap();
        let mut cell = Vec::new();
        for i in 0..2 {
            for t in 0..3 {
                assert!(summary.lower[[i, t]] <= summary.mean[[i, t]]);
                assert!(summary.mean[[i, t]] <= summary.upper[[i, t]]);
                assert!(summary.sd[[i, t]] > 0.0);
                draws.fill_theta_cell(i, t, &mut cell);
                cell.sort_unstable_by(f64::total_cmp);
                assert_abs_diff_eq!(
                    summary.lower[[i, t]],
                    quantile_type7(&cell, 0.05).unwrap(),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    summary.upper[[i, t]],
                    quantile_type7(&cell, 0.95).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
        for level in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(
                summarize_draws(&draws, level),
                Err(MetricsError::LevelOutOfRange(_))
            ));
        }
    }

    fn tiny_study_config(n_reps: usize) -> StudyConfig {
        let sim = SimConfig {
            n_students: 6,
            n_times: 6,
            items_per_time: 2,
            group_split: 3,
            ..SimConfig::default()
        };
        let mcmc = McmcConfig { n_burn: 30, n_keep: 30, thin: 1, seed: 0 };
        StudyConfig::new(sim, mcmc, n_reps, 424_242)
    }

    #[test]
    fn replication_study_is_paired_and_deterministic() {
        let config = tiny_study_config(2);
        let a = replicate_study(&config).unwrap();
        let b = replicate_study(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.models.len(), 3);
        assert_eq!(a.models[0].variant, ModelVariant::DBird);
        for m in &a.models {
            assert_eq!(m.per_rep_mse.len(), 2);
            assert!(m.per_rep_mse.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!(m.per_rep_coverage.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(m.per_rep_width.iter().all(|v| *v > 0.0));
        }
        assert!(!a.single_replication);
        assert!(a.full_model_wins <= 2);
        let table = a.text_table();
        assert!(table.contains("D-BIRD"));
        assert!(table.contains("Global-RW"));
        assert!(table.contains("Hetero-RW"));
    }

    #[test]
    fn single_replication_is_flagged() {
        let result = replicate_study(&tiny_study_config(1)).unwrap();
        assert!(result.single_replication);
        for m in &result.models {
            assert_eq!(m.mse.sd, 0.0);
        }
        assert!(result.text_table().contains("single replication"));
    }

    #[test]
    fn degenerate_study_configs_are_refused() {
        assert!(matches!(
            replicate_study(&tiny_study_config(0)),
            Err(MetricsError::NoReplications)
        ));
        let mut bad_level = tiny_study_config(1);
        bad_level.level = 1.0;
        assert!(matches!(
            replicate_study(&bad_level),
            Err(MetricsError::LevelOutOfRange(_))
        ));
    }
}
