//! Acceptance suite: one numbered criterion per release promise, each run at
//! its stated tolerance and time budget against an independent oracle
//! (analytic moments, dense linear algebra, tensor-grid quadrature, or a
//! bisection root finder). Every criterion executes even if an earlier one
//! fails, and each prints exactly one `[PASS]`/`[FAIL]`/`[SKIP]` line.
//!
//! Run with `cargo test --test acceptance`. Criterion 5 (full-scale
//! replication) is a multi-day job and only runs when
//! `DBIRD_ACCEPTANCE_FULL_SCALE=1` is set.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dbird::gibbs::{recenter, ChainState};
use dbird::gmrf::{factorize, sample_canonical, solve, SymTridiagonal};
use dbird::pg::{draw_pg1, pg_mean};
use dbird::rasch::{map_ability, AssessmentSlice};
use dbird::sim::{simulate_cohort, SimConfig};
use dbird::{
    replicate_study, run_chain_with, ChainOptions, FixedVariances, ItemBank, McmcConfig,
    ModelSpec, Observation, ResponseDataset, StudyConfig,
};
use dbird_cli::commands::SS_FLOOR;
use dbird_cli::io::{dense_ids, read_dataset, write_dataset, TimeEncoding};

enum Verdict {
    Pass(String),
    Skip(String),
}

type CriterionFn = fn() -> Result<Verdict, String>;

fn main() {
    let criteria: &[(&str, CriterionFn)] = &[
        ("1 pg-sampler-moments", c1_pg_sampler_moments),
        ("2 gmrf-oracle-equivalence", c2_gmrf_oracle_equivalence),
        ("3 posterior-vs-quadrature", c3_posterior_vs_quadrature),
        ("4 desk-scale-recovery", c4_desk_scale_recovery),
        ("5 full-scale-recovery", c5_full_scale_recovery),
        ("6 static-map-estimates", c6_static_map_estimates),
        ("7 invariant-suite", c7_invariant_suite),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(Ok(Verdict::Pass(detail))) => println!("[PASS] criterion {name}: {detail}"),
            Ok(Ok(Verdict::Skip(detail))) => println!("[SKIP] criterion {name}: {detail}"),
            Ok(Err(msg)) => {
                failures += 1;
                println!("[FAIL] criterion {name}: {msg}");
            }
            Err(payload) => {
                failures += 1;
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "non-string panic".into());
                println!("[FAIL] criterion {name}: panicked: {msg}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}

/// Collects every violated sub-check so a failing criterion reports all of
/// its problems at once.
struct Checks {
    problems: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self { problems: Vec::new() }
    }

    fn require(&mut self, ok: bool, problem: impl FnOnce() -> String) {
        if !ok {
            self.problems.push(problem());
        }
    }

    fn budget(&mut self, started: Instant, limit: Duration) -> f64 {
        let elapsed = started.elapsed();
        self.require(elapsed < limit, || {
            format!("ran {:.1}s, budget {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64())
        });
        elapsed.as_secs_f64()
    }

    fn into_verdict(self, detail: String) -> Result<Verdict, String> {
        if self.problems.is_empty() {
            Ok(Verdict::Pass(detail))
        } else {
            Err(self.problems.join("; "))
        }
    }
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

// ---------------------------------------------------------------------------
// 1. Exact Pólya-Gamma sampler: sample moments vs analytic moments.

fn c1_pg_sampler_moments() -> Result<Verdict, String> {
    const N_DRAWS: usize = 100_000;
    let started = Instant::now();
    let mut checks = Checks::new();
    let mut rng = ChaCha8Rng::seed_from_u64(271_828);
    let mut worst_z = 0.0f64;
    let mut var_error = 0.0f64;

    for c in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let draws: Vec<f64> = (0..N_DRAWS)
            .map(|_| draw_pg1(c, &mut rng))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let (mean, var) = mean_and_var(&draws);
        let target = pg_mean(1.0, c).map_err(|e| e.to_string())?;
        let se = (var / N_DRAWS as f64).sqrt();
        let z = (mean - target).abs() / se;
        worst_z = worst_z.max(z);
        checks.require(z <= 3.0, || {
            format!("mean at c={c} is {mean:.6}, analytic {target:.6} ({z:.2} SE away)")
        });
        if c == 0.0 {
            var_error = (var - 1.0 / 24.0).abs() / (1.0 / 24.0);
            checks.require(var_error <= 0.05, || {
                format!("variance at c=0 is {var:.6}, off 1/24 by {:.1}%", 100.0 * var_error)
            });
        }
    }

    let secs = checks.budget(started, Duration::from_secs(5));
    checks.into_verdict(format!(
        "10^5 draws at c∈{{0,0.5,1,2,5}}: worst mean error {worst_z:.2} SE, \
         Var(c=0) off by {:.2}% (≤5%), {secs:.1}s (<5s)",
        100.0 * var_error
    ))
}

// ---------------------------------------------------------------------------
// 2. Tridiagonal solver and sampler vs a dense-matrix oracle.

fn dense_from_tridiagonal(q: &SymTridiagonal) -> DMatrix<f64> {
    let n = q.dim();
    let mut dense = DMatrix::zeros(n, n);
    for i in 0..n {
        dense[(i, i)] = q.diag[i];
        if i + 1 < n {
            dense[(i, i + 1)] = q.offdiag[i];
            dense[(i + 1, i)] = q.offdiag[i];
        }
    }
    dense
}

fn c2_gmrf_oracle_equivalence() -> Result<Verdict, String> {
    let started = Instant::now();
    let mut checks = Checks::new();
    let mut rng = ChaCha8Rng::seed_from_u64(314_159);

    // Random diagonally dominant (hence SPD) tridiagonal systems vs a dense
    // Cholesky solve.
    let mut max_diff = 0.0f64;
    for case in 0..100 {
        let dim: usize = if case == 0 { 200 } else { rng.gen_range(1..=200) };
        let offdiag: Vec<f64> = (0..dim.saturating_sub(1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..dim)
            .map(|i| {
                let left = if i > 0 { offdiag[i - 1].abs() } else { 0.0 };
                let right = if i < dim - 1 { offdiag[i].abs() } else { 0.0 };
                left + right + rng.gen_range(0.5..2.5)
            })
            .collect();
        let rhs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let q = SymTridiagonal::new(diag, offdiag).map_err(|e| e.to_string())?;
        let factor = factorize(&q).map_err(|e| e.to_string())?;
        let x = solve(&factor, &rhs).map_err(|e| e.to_string())?;

        let dense = dense_from_tridiagonal(&q);
        let chol = dense.clone().cholesky().ok_or("dense oracle: not SPD")?;
        let x_dense = chol.solve(&DVector::from_vec(rhs));
        for i in 0..dim {
            max_diff = max_diff.max((x[i] - x_dense[i]).abs());
        }
    }
    checks.require(max_diff <= 1e-10, || {
        format!("solve differs from the dense oracle by {max_diff:.3e} (limit 1e-10)")
    });

    // Canonical sampling on a fixed 3×3 system: empirical mean and covariance
    // vs Q⁻¹b and Q⁻¹, entrywise within 5%.
    const N_DRAWS: usize = 100_000;
    let q3 = SymTridiagonal::new(vec![2.0, 2.5, 2.2], vec![-1.1, -1.1]).map_err(|e| e.to_string())?;
    let b3 = [1.0, 1.5, 0.75];
    let dense = dense_from_tridiagonal(&q3);
    let cov_true = dense.try_inverse().ok_or("3×3 oracle: singular")?;
    let mean_true = &cov_true * DVector::from_row_slice(&b3);

    let mut sums = [0.0f64; 3];
    let mut cross = [[0.0f64; 3]; 3];
    for _ in 0..N_DRAWS {
        let x = sample_canonical(&q3, &b3, &mut rng).map_err(|e| e.to_string())?;
        for i in 0..3 {
            sums[i] += x[i];
            for j in 0..3 {
                cross[i][j] += x[i] * x[j];
            }
        }
    }
    let n = N_DRAWS as f64;
    let mut worst_rel = 0.0f64;
    for i in 0..3 {
        let mean_i = sums[i] / n;
        let rel = (mean_i - mean_true[i]).abs() / mean_true[i].abs();
        worst_rel = worst_rel.max(rel);
        checks.require(rel <= 0.05, || {
            format!("sample mean[{i}] = {mean_i:.4}, analytic {:.4} ({:.1}% off)", mean_true[i], 100.0 * rel)
        });
        for j in 0..3 {
            let cov_ij = (cross[i][j] - sums[i] * sums[j] / n) / (n - 1.0);
            let rel = (cov_ij - cov_true[(i, j)]).abs() / cov_true[(i, j)].abs();
            worst_rel = worst_rel.max(rel);
            checks.require(rel <= 0.05, || {
                format!(
                    "sample cov[{i},{j}] = {cov_ij:.4}, analytic {:.4} ({:.1}% off)",
                    cov_true[(i, j)],
                    100.0 * rel
                )
            });
        }
    }

    let secs = checks.budget(started, Duration::from_secs(30));
    checks.into_verdict(format!(
        "100 systems (dim ≤ 200) within {max_diff:.1e} of dense solve; \
         3×3 moments within {:.1}% at 10^5 draws (≤5%), {secs:.1}s (<30s)",
        100.0 * worst_rel
    ))
}

// ---------------------------------------------------------------------------
// 3. Fixed-variance posterior vs an exact tensor-grid quadrature.

/// Log unnormalized posterior for the single-student two-period instance:
/// θ₀ ~ N(0, 1), θ₁ | θ₀ ~ N(θ₀, 0.25), Bernoulli-logit responses.
fn quadrature_instance_logpost(t0: f64, t1: f64) -> f64 {
    let mut lp = -0.5 * t0 * t0 - (t1 - t0).powi(2) / (2.0 * 0.25);
    for (d, y) in [(-1.0, 1.0), (0.0, 1.0), (1.0, 0.0)] {
        let psi: f64 = t0 - d;
        lp += y * psi - ln_1p_exp(psi);
    }
    for (d, y) in [(-1.0, 1.0), (0.0, 0.0)] {
        let psi: f64 = t1 - d;
        lp += y * psi - ln_1p_exp(psi);
    }
    lp
}

fn ln_1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Posterior means of (θ₀, θ₁) by 400²-point tensor quadrature on [-6, 6]².
fn quadrature_means() -> (f64, f64) {
    const POINTS: usize = 400;
    let grid: Vec<f64> =
        (0..POINTS).map(|k| -6.0 + 12.0 * k as f64 / (POINTS - 1) as f64).collect();
    let mut log_weights = Vec::with_capacity(POINTS * POINTS);
    let mut max_lp = f64::NEG_INFINITY;
    for &t0 in &grid {
        for &t1 in &grid {
            let lp = quadrature_instance_logpost(t0, t1);
            max_lp = max_lp.max(lp);
            log_weights.push(lp);
        }
    }
    let (mut total, mut sum0, mut sum1) = (0.0, 0.0, 0.0);
    let mut idx = 0;
    for &t0 in &grid {
        for &t1 in &grid {
            let w = (log_weights[idx] - max_lp).exp();
            total += w;
            sum0 += w * t0;
            sum1 += w * t1;
            idx += 1;
        }
    }
    (sum0 / total, sum1 / total)
}

fn c3_posterior_vs_quadrature() -> Result<Verdict, String> {
    let started = Instant::now();
    let mut checks = Checks::new();

    let (q0, q1) = quadrature_means();
    // Guard the oracle itself against grid-convention drift: these values were
    // frozen from an independent implementation of the same integral.
    checks.require((q0 - 0.159_499_017_170_811_16).abs() < 1e-9, || {
        format!("quadrature E[θ₀] = {q0:.12} drifted from its frozen value")
    });
    checks.require((q1 - 0.098_114_250_233_051_01).abs() < 1e-9, || {
        format!("quadrature E[θ₁] = {q1:.12} drifted from its frozen value")
    });

    let bank = ItemBank::new(vec![-1.0, 0.0, 1.0]).map_err(|e| e.to_string())?;
    let observations = vec![
        Observation::new(0, 0, 0, 1),
        Observation::new(0, 0, 1, 1),
        Observation::new(0, 0, 2, 0),
        Observation::new(0, 1, 0, 1),
        Observation::new(0, 1, 1, 0),
    ];
    let data = ResponseDataset::new(1, 2, observations, bank).map_err(|e| e.to_string())?;
    let config = McmcConfig { n_burn: 2_000, n_keep: 20_000, thin: 1, seed: 0 };
    let options = ChainOptions {
        fixed_variances: Some(FixedVariances {
            sigma2_mu_init: 1.0,
            sigma2_dmu: 1.0,
            sigma2_beta_init: 1.0,
            sigma2_dbeta: 0.25,
        }),
        ss_floor: None,
    };
    let draws = run_chain_with(&data, &ModelSpec::hetero_rw(), &config, &options)
        .map_err(|e| e.to_string())?;
    let theta_mean = draws.theta_mean();
    let (err0, err1) = ((theta_mean[[0, 0]] - q0).abs(), (theta_mean[[0, 1]] - q1).abs());
    checks.require(err0 <= 0.02, || {
        format!("E[θ₀]: sampler {:.4} vs quadrature {q0:.4} (|Δ| = {err0:.4} > 0.02)", theta_mean[[0, 0]])
    });
    checks.require(err1 <= 0.02, || {
        format!("E[θ₁]: sampler {:.4} vs quadrature {q1:.4} (|Δ| = {err1:.4} > 0.02)", theta_mean[[0, 1]])
    });

    let secs = checks.budget(started, Duration::from_secs(60));
    checks.into_verdict(format!(
        "20,000 kept draws vs 400² quadrature: |Δθ₀| = {err0:.4}, |Δθ₁| = {err1:.4} (≤0.02), {secs:.1}s (<1min)"
    ))
}

// ---------------------------------------------------------------------------
// 4. Desk-scale paired replication study: ordering and coverage.

fn c4_desk_scale_recovery() -> Result<Verdict, String> {
    let started = Instant::now();
    let mut checks = Checks::new();

    let mcmc = McmcConfig { n_burn: 2_000, n_keep: 2_000, thin: 1, seed: 0 };
    let mut study = StudyConfig::new(SimConfig::desk_scale(), mcmc, 20, 0);
    study.chain_options.ss_floor = Some(1e-10);
    let result = replicate_study(&study).map_err(|e| e.to_string())?;
    let full = &result.models[0];
    let global = &result.models[1];
    let hetero = &result.models[2];

    checks.require(
        full.mse.mean < global.mse.mean && full.mse.mean < hetero.mse.mean,
        || {
            format!(
                "mean MSE not lowest: full {:.4} vs pooled {:.4} / heteroskedastic {:.4}",
                full.mse.mean, global.mse.mean, hetero.mse.mean
            )
        },
    );
    checks.require(result.full_model_win_fraction >= 0.80, || {
        format!(
            "full model beat both baselines in only {}/{} replications",
            result.full_model_wins, result.n_reps
        )
    });
    checks.require(
        (0.90..=0.99).contains(&full.coverage.mean),
        || format!("full-model coverage {:.4} outside [0.90, 0.99]", full.coverage.mean),
    );
    checks.require(
        full.interval_width.mean <= global.interval_width.mean,
        || {
            format!(
                "full-model interval width {:.4} exceeds pooled baseline {:.4}",
                full.interval_width.mean, global.interval_width.mean
            )
        },
    );

    let secs = checks.budget(started, Duration::from_secs(7_200));
    checks.into_verdict(format!(
        "20 reps at 40×40×5: MSE {:.4}/{:.4}/{:.4}, wins {}/{}, EC {:.3}, \
         MCIW {:.3} vs {:.3}, {:.0}s (<2h)",
        full.mse.mean,
        global.mse.mean,
        hetero.mse.mean,
        result.full_model_wins,
        result.n_reps,
        full.coverage.mean,
        full.interval_width.mean,
        global.interval_width.mean,
        secs
    ))
}

// ---------------------------------------------------------------------------
// 5. Full-scale replication (opt-in: multi-day on a single core).

fn c5_full_scale_recovery() -> Result<Verdict, String> {
    if std::env::var("DBIRD_ACCEPTANCE_FULL_SCALE").map_or(true, |v| v != "1") {
        return Ok(Verdict::Skip(
            "full-scale study (150×100×10, 250 reps, 10k+10k sweeps) takes days on one core; \
             set DBIRD_ACCEPTANCE_FULL_SCALE=1 to run it"
                .into(),
        ));
    }

    let started = Instant::now();
    let mut checks = Checks::new();
    let mut study = StudyConfig::new(SimConfig::default(), McmcConfig::default(), 250, 0);
    study.chain_options.ss_floor = Some(1e-10);
    let result = replicate_study(&study).map_err(|e| e.to_string())?;

    // Published reference cells with their reported SDs; each recovered mean
    // must land within two SDs.
    let reference: [(&str, [(f64, f64); 3]); 3] = [
        ("MSE", [(0.216, 0.008), (0.270, 0.011), (0.260, 0.013)]),
        ("EC", [(0.960, 0.004), (0.944, 0.005), (0.901, 0.038)]),
        ("MCIW", [(1.791, 0.03), (1.993, 0.054), (1.801, 0.134)]),
    ];
    for (m, model) in result.models.iter().enumerate() {
        let recovered = [model.mse.mean, model.coverage.mean, model.interval_width.mean];
        for (metric_idx, (metric_name, cells)) in reference.iter().enumerate() {
            let (target, sd) = cells[m];
            let got = recovered[metric_idx];
            checks.require((got - target).abs() <= 2.0 * sd, || {
                format!(
                    "{} {metric_name} = {got:.4}, reference {target} ± {:.3}",
                    model.variant.label(),
                    2.0 * sd
                )
            });
        }
    }

    let secs = started.elapsed().as_secs_f64();
    checks.into_verdict(format!("250 reps at 150×100×10 within 2 SD of every reference cell, {secs:.0}s"))
}

// ---------------------------------------------------------------------------
// 6. Static MAP estimates vs a bisection oracle.

/// Bisection on the gradient over [-60, 60]; the objective is strictly
/// concave so the gradient has exactly one sign change.
fn bisect_map(slice: &AssessmentSlice) -> f64 {
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    assert!(slice.gradient(lo) > 0.0 && slice.gradient(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slice.gradient(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c6_static_map_estimates() -> Result<Verdict, String> {
    let started = Instant::now();
    let mut checks = Checks::new();

    // Prior mode: no responses.
    let empty = map_ability(&AssessmentSlice::new(vec![]).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    checks.require(empty.theta == 0.0, || format!("empty slice gave {} instead of 0", empty.theta));

    // Symmetric split around zero.
    let symmetric =
        map_ability(&AssessmentSlice::new(vec![(-0.7, 1), (0.7, 0)]).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    checks.require(symmetric.theta.abs() < 1e-9, || {
        format!("symmetric slice gave {:.2e} instead of ~0", symmetric.theta)
    });

    // One correct difficulty-0 item under the N(0, 25) prior. The bisection
    // oracle is authoritative; the root is also pinned at high precision and
    // against its headline two-decimal value (2.29287… reads as ≈2.294 only
    // after coarse rounding, hence the wide last tolerance).
    let single = AssessmentSlice::new(vec![(0.0, 1)]).map_err(|e| e.to_string())?;
    let fit = map_ability(&single).map_err(|e| e.to_string())?;
    let oracle = bisect_map(&single);
    checks.require((fit.theta - oracle).abs() < 1e-4, || {
        format!("single-item MAP {:.6} vs bisection {oracle:.6}", fit.theta)
    });
    checks.require((fit.theta - 2.292_873_151_052_469_4).abs() < 1e-9, || {
        format!("single-item MAP {:.10} drifted from its frozen root", fit.theta)
    });
    checks.require((fit.theta - 2.294).abs() < 2e-3, || {
        format!("single-item MAP {:.6} is not ≈2.294", fit.theta)
    });

    // Random slices: Newton agrees with bisection and lands on a stationary
    // point.
    let mut rng = ChaCha8Rng::seed_from_u64(161_803);
    let mut worst_gap = 0.0f64;
    let mut worst_gradient = 0.0f64;
    for _ in 0..50 {
        let n_items = rng.gen_range(1..=8);
        let items: Vec<(f64, u8)> = (0..n_items)
            .map(|_| (rng.gen_range(-2.0..2.0), u8::from(rng.gen_bool(0.5))))
            .collect();
        let slice = AssessmentSlice::new(items).map_err(|e| e.to_string())?;
        let fit = map_ability(&slice).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((fit.theta - bisect_map(&slice)).abs());
        worst_gradient = worst_gradient.max(fit.gradient.abs());
    }
    checks.require(worst_gap < 1e-4, || {
        format!("worst Newton-vs-bisection gap {worst_gap:.2e} exceeds 1e-4")
    });
    checks.require(worst_gradient < 1e-8, || {
        format!("worst gradient at optimum {worst_gradient:.2e} exceeds 1e-8")
    });

    let secs = checks.budget(started, Duration::from_secs(1));
    checks.into_verdict(format!(
        "prior mode and symmetric cases exact, single-item root {:.4} matches bisection, \
         50 random slices within {worst_gap:.1e} with gradients ≤ {worst_gradient:.1e}, {secs:.2}s (<1s)",
        fit.theta
    ))
}

// ---------------------------------------------------------------------------
// 7. Structural invariants: recentering, determinism, positivity, IO
// round-trip, linear sweep cost.

fn small_cohort_dataset(n_students: usize, seed: u64) -> ResponseDataset {
    let config = SimConfig {
        n_students,
        n_times: 8,
        items_per_time: 2,
        group_split: n_students / 2,
        seed,
        ..SimConfig::desk_scale()
    };
    simulate_cohort(&config).expect("simulation succeeds").1
}

fn c7_invariant_suite() -> Result<Verdict, String> {
    let started = Instant::now();
    let mut checks = Checks::new();
    let data = small_cohort_dataset(6, 17);

    // The chains here run on deliberately tiny data, where a per-student
    // innovation update has only seven degrees of freedom and its scaled
    // inverse-χ² draw can spiral toward zero. Fit with the same
    // sum-of-squares floor the CLI applies, so a stochastic collapse is a
    // counted event rather than an abort; collapse-as-error has its own
    // dedicated engine tests.
    let floor = ChainOptions { fixed_variances: None, ss_floor: Some(SS_FLOOR) };

    // (a) Recentering: per-time deviation means vanish and θ is untouched.
    let mut state = ChainState::new(&data, ModelSpec::dbird());
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for value in state.beta.iter_mut() {
        *value = rng.gen_range(-2.0..2.0);
    }
    if let Some(mu) = state.mu.as_mut() {
        for value in mu.iter_mut() {
            *value = rng.gen_range(-1.0..1.0);
        }
    }
    let theta_before: Vec<f64> = (0..6)
        .flat_map(|i| (0..8).map(move |t| (i, t)))
        .map(|(i, t)| state.theta(i, t))
        .collect();
    recenter(&mut state).map_err(|e| e.to_string())?;
    let mut worst_mean = 0.0f64;
    for t in 0..8 {
        let mean = (0..6).map(|i| state.beta[[i, t]]).sum::<f64>() / 6.0;
        worst_mean = worst_mean.max(mean.abs());
    }
    checks.require(worst_mean <= 1e-12, || {
        format!("deviations not centered: worst per-time mean {worst_mean:.2e}")
    });
    let worst_theta_shift = theta_before
        .iter()
        .zip((0..6).flat_map(|i| (0..8).map(move |t| (i, t))))
        .map(|(before, (i, t))| (before - state.theta(i, t)).abs())
        .fold(0.0f64, f64::max)
        ;
    checks.require(worst_theta_shift <= 1e-14, || {
        format!("recentering moved θ by {worst_theta_shift:.2e}")
    });

    // ... and it holds in every retained draw of a live chain.
    let config = McmcConfig { n_burn: 50, n_keep: 100, thin: 1, seed: 4 };
    let draws =
        run_chain_with(&data, &ModelSpec::dbird(), &config, &floor).map_err(|e| e.to_string())?;
    let mut worst_kept_mean = 0.0f64;
    for k in 0..draws.n_kept() {
        for t in 0..8 {
            let mean = (0..6).map(|i| draws.beta_draws()[[k, i, t]]).sum::<f64>() / 6.0;
            worst_kept_mean = worst_kept_mean.max(mean.abs());
        }
    }
    checks.require(worst_kept_mean <= 1e-12, || {
        format!("a retained sweep violates centering by {worst_kept_mean:.2e}")
    });

    // (b) Determinism at any worker count: identical draws from 1- and
    // 4-thread pools.
    let pool_of = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("pool builds")
    };
    let serial = pool_of(1)
        .install(|| run_chain_with(&data, &ModelSpec::dbird(), &config, &floor))
        .map_err(|e| e.to_string())?;
    let parallel = pool_of(4)
        .install(|| run_chain_with(&data, &ModelSpec::dbird(), &config, &floor))
        .map_err(|e| e.to_string())?;
    checks.require(serial == parallel, || "1-thread and 4-thread runs disagree".into());
    checks.require(serial == draws, || "pool run differs from the ambient-pool run".into());

    // (c) Every retained variance draw is strictly positive, on all variants.
    for spec in [ModelSpec::dbird(), ModelSpec::global_rw(), ModelSpec::hetero_rw()] {
        let draws = run_chain_with(&data, &spec, &config, &floor).map_err(|e| e.to_string())?;
        let mut all_positive = draws.sigma2_dbeta_draws().iter().all(|v| *v > 0.0)
            && draws.sigma2_beta_init_draws().iter().all(|v| *v > 0.0);
        if let Some(dmu) = draws.sigma2_dmu_draws() {
            all_positive &= dmu.iter().all(|v| *v > 0.0);
        }
        if let Some(mu_init) = draws.sigma2_mu_init_draws() {
            all_positive &= mu_init.iter().all(|v| *v > 0.0);
        }
        checks.require(all_positive, || {
            format!("{} retained a non-positive variance draw", spec.variant.label())
        });
    }

    // (d) Dataset CSV round-trip is lossless and canonical.
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let ids = dense_ids(data.n_students(), data.item_bank().len());
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    write_dataset(&dir_a, &data, &ids).map_err(|e| e.to_string())?;
    let (reread, reread_ids) = read_dataset(&dir_a, TimeEncoding::Index).map_err(|e| e.to_string())?;
    write_dataset(&dir_b, &reread, &reread_ids).map_err(|e| e.to_string())?;
    checks.require(reread == data, || "dataset changed across a CSV round-trip".into());
    let bytes_equal = std::fs::read(dir_a.join("responses.csv")).unwrap()
        == std::fs::read(dir_b.join("responses.csv")).unwrap()
        && std::fs::read(dir_a.join("items.csv")).unwrap()
            == std::fs::read(dir_b.join("items.csv")).unwrap();
    checks.require(bytes_equal, || "re-written CSV files are not byte-identical".into());

    // (e) Sweep cost is linear in N: doubling the cohort roughly doubles the
    // wall time. These runs use full desk-sized sessions (40 time points,
    // five items each) so every measurement spans hundreds of milliseconds,
    // and share one single-thread pool so the ratio is not skewed by thread
    // fan-out.
    let timing_config = McmcConfig { n_burn: 0, n_keep: 400, thin: 1, seed: 0 };
    let time_fit = |n_students: usize, pool: &rayon::ThreadPool| {
        let sim = SimConfig {
            n_students,
            group_split: n_students / 2,
            seed: 29,
            ..SimConfig::desk_scale()
        };
        let (_, data) = simulate_cohort(&sim).expect("simulation succeeds");
        let warmup = McmcConfig { n_burn: 0, n_keep: 10, thin: 1, seed: 0 };
        pool.install(|| run_chain_with(&data, &ModelSpec::dbird(), &warmup, &floor))
            .expect("warmup runs");
        let clock = Instant::now();
        pool.install(|| run_chain_with(&data, &ModelSpec::dbird(), &timing_config, &floor))
            .expect("timed run");
        clock.elapsed().as_secs_f64()
    };
    let pool = pool_of(1);
    let t_half = time_fit(20, &pool);
    let t_full = time_fit(40, &pool);
    let ratio = t_full / t_half;
    checks.require((1.6..=2.6).contains(&ratio), || {
        format!("doubling N changed sweep time by ×{ratio:.2} ({t_half:.2}s → {t_full:.2}s), outside [1.6, 2.6]")
    });

    // (f) With a single student the pooled and per-student baselines define
    // the same model, so their posterior means must agree.
    let solo_config = SimConfig {
        n_students: 1,
        n_times: 8,
        items_per_time: 4,
        group_split: 1,
        seed: 5,
        ..SimConfig::desk_scale()
    };
    let (_, solo) = simulate_cohort(&solo_config).map_err(|e| e.to_string())?;
    let eq_config = McmcConfig { n_burn: 300, n_keep: 1_500, thin: 1, seed: 3 };
    let hetero = run_chain_with(&solo, &ModelSpec::hetero_rw(), &eq_config, &floor)
        .map_err(|e| e.to_string())?;
    let global = run_chain_with(&solo, &ModelSpec::global_rw(), &eq_config, &floor)
        .map_err(|e| e.to_string())?;
    let mut cell = Vec::new();
    let mut worst_equiv = 0.0f64;
    for t in 0..8 {
        hetero.fill_theta_cell(0, t, &mut cell);
        let (m1, v1) = mean_and_var(&cell);
        global.fill_theta_cell(0, t, &mut cell);
        let (m2, v2) = mean_and_var(&cell);
        let se = ((v1 + v2) / eq_config.n_keep as f64).sqrt();
        worst_equiv = worst_equiv.max((m1 - m2).abs() / se);
    }
    checks.require(worst_equiv <= 3.0, || {
        format!("single-student baselines disagree by {worst_equiv:.2} MC standard errors")
    });

    let secs = started.elapsed().as_secs_f64();
    checks.into_verdict(format!(
        "recentering ≤ {worst_kept_mean:.1e}, θ shift ≤ {worst_theta_shift:.1e}, \
         worker-count determinism exact, variances positive, CSV round-trip byte-stable, \
         N-doubling time ratio ×{ratio:.2}, single-student equivalence {worst_equiv:.2} SE, {secs:.0}s"
    ))
}
