//! Relative-error metric, the temperature sweep, and report tables.

mod config;
mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{parse_override, Evaluator, ExperimentConfig};
pub use report::{write_failure_marker, write_report, FAILURE_MARKER, SUMMARY_FILE, TABLE_FILES};

use crate::analytic::{eta_se, game_value, GameParams, TimeGrid, Variant};
use crate::error::{Error, Result};
use crate::learner::{self, LearnerConfig};
use crate::rng::Substream;
use crate::simulate::{exact_expected_reward, mc_expected_reward, MeanField, PolicyParams};

pub const VERSION: &str = concat!("entropic-mfg v", env!("CARGO_PKG_VERSION"));

/// Relative error `|J(R̂, m) − J(R*, m*)| / |J(R*, m*)|` against the
/// discretized Shannon equilibrium `R*` with `m* ≡ E[ξ]`, both sides
/// evaluated by the same estimator on the same random numbers.
#[derive(Debug, Clone)]
pub struct ErrorMetric {
    params: GameParams,
    grid: TimeGrid,
    evaluator: Evaluator,
    n_paths: usize,
    seed: Substream,
    reference: f64,
    reference_stderr: f64,
}

impl ErrorMetric {
    pub fn new(
        params: &GameParams,
        grid: &TimeGrid,
        evaluator: Evaluator,
        n_paths: usize,
        seed: Substream,
        sigma_floor: f64,
    ) -> Result<Self> {
        let star = PolicyParams::discretized_equilibrium(params, grid, sigma_floor)?;
        let m_star = MeanField::constant(grid, params.xi_mean);
        let mut metric = ErrorMetric {
            params: *params,
            grid: *grid,
            evaluator,
            n_paths,
            seed,
            reference: 0.0,
            reference_stderr: 0.0,
        };
        let (j, se) = metric.evaluate(&star, &m_star)?;
        if j.is_nan() || j.abs() < 1e-12 {
            return Err(Error::DegenerateReference(j.abs()));
        }
        metric.reference = j;
        metric.reference_stderr = se;
        Ok(metric)
    }

    /// `J(policy, mean_field)` and its standard error (zero when exact).
    pub fn evaluate(&self, policy: &PolicyParams, mean_field: &MeanField) -> Result<(f64, f64)> {
        match self.evaluator {
            Evaluator::MonteCarlo => {
                let est = mc_expected_reward(
                    &self.params,
                    &self.grid,
                    policy,
                    mean_field,
                    self.n_paths,
                    self.seed,
                )?;
                Ok((est.mean, est.stderr))
            }
            Evaluator::Exact => Ok((
                exact_expected_reward(&self.params, &self.grid, policy, mean_field)?,
                0.0,
            )),
        }
    }

    /// Non-finite payoffs (a blown-up policy) give an infinite error.
    pub fn relative_error(&self, policy: &PolicyParams, mean_field: &MeanField) -> Result<f64> {
        let (j, _) = self.evaluate(policy, mean_field)?;
        let err = (j - self.reference).abs() / self.reference.abs();
        Ok(if err.is_finite() { err } else { f64::INFINITY })
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn reference_stderr(&self) -> f64 {
        self.reference_stderr
    }
}

/// Monte Carlo relative error with `n_eval_paths` paths on substream `seed`.
pub fn relative_error(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    n_eval_paths: usize,
    seed: u64,
) -> Result<f64> {
    let floor = crate::simulate::DEFAULT_SIGMA_FLOOR;
    ErrorMetric::new(
        params,
        grid,
        Evaluator::MonteCarlo,
        n_eval_paths,
        Substream::root(seed),
        floor,
    )?
    .relative_error(policy, mean_field)
}

/// `λ_SE/(D² η^SE_{sδ})` for `s < N`; zeros when `λ_SE = 0`.
pub fn analytic_schedule(params: &GameParams, grid: &TimeGrid) -> Result<Vec<f64>> {
    (0..grid.n_steps())
        .map(|s| {
            if params.lambda_se == 0.0 {
                Ok(0.0)
            } else {
                Ok(params.lambda_se / (params.d * params.d * eta_se(params, grid.time(s))?))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub i: usize,
    pub total_iter: usize,
    pub rel_error: f64,
}

/// Error of `R̂^I_k` against the updated mean field `m^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterPoint {
    pub k: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRun {
    pub lambda_se: f64,
    pub seed: u64,
    pub n_eval_paths: usize,
    pub learned: PolicyParams,
    pub true_m_hat: f64,
    pub analytic_sigma2: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub outer: Vec<OuterPoint>,
    /// `m⁰ … m^K`.
    pub mean_fields: Vec<MeanField>,
    pub reference: f64,
    pub reference_stderr: f64,
    /// Continuous-time game value at `t = 0`, for comparison.
    pub closed_form_value: Option<f64>,
    pub diverged_at: Option<(usize, usize)>,
    pub runtime_secs: f64,
}

impl LambdaRun {
    pub fn final_error(&self) -> f64 {
        self.outer.last().map_or(f64::INFINITY, |p| p.rel_error)
    }

    /// First outer iteration whose boundary error is below `threshold`.
    pub fn first_outer_below(&self, threshold: f64) -> Option<usize> {
        self.outer
            .iter()
            .find(|p| p.rel_error < threshold)
            .map(|p| p.k)
    }

    pub fn inner_errors(&self, k: usize) -> Vec<f64> {
        self.curve
            .iter()
            .filter(|c| c.k == k)
            .map(|c| c.rel_error)
            .collect()
    }

    /// For each completed outer iteration `k`: the change in error when the
    /// mean field is updated (same policy `R̂^I_k`, `m^{k−1}` → `m^k`), and
    /// the spread (max − min) of the inner errors over the second half of
    /// iteration `k`.
    pub fn boundary_jumps(&self) -> Vec<BoundaryJump> {
        self.outer
            .iter()
            .filter_map(|p| {
                let inner = self.inner_errors(p.k);
                let last = *inner.last()?;
                let tail = &inner[inner.len() / 2..];
                let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
                Some(BoundaryJump {
                    k: p.k,
                    jump: (p.rel_error - last).abs(),
                    inner_range: max - min,
                })
            })
            .collect()
    }

    /// Learned schedule is nonincreasing and within `tol` (relative) of the
    /// analytic one at every step.
    pub fn schedule_matches(&self, tol: f64) -> bool {
        let s = &self.learned.sigma2;
        s.windows(2).all(|w| w[1] <= w[0])
            && s.iter()
                .zip(&self.analytic_sigma2)
                .all(|(l, a)| *a > 0.0 && ((l - a) / a).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryJump {
    pub k: usize,
    pub jump: f64,
    pub inner_range: f64,
}

impl BoundaryJump {
    pub fn is_jump(&self) -> bool {
        self.jump >= 2.0 * self.inner_range
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub runs: Vec<LambdaRun>,
    pub notes: Vec<String>,
}

const REPORT_NOTES: [&str; 3] = [
    "variance_schedule.csv holds the learned exploration variances sigma2_s (figure panels label this {V_s}).",
    "For lambda_se = 0 the error denominator uses the quadratic-only equilibrium: gain B/D^2 with variances at the floor.",
    "Relative errors compare J(R,m) with J(R*,m*) under the same estimator and random numbers; closed_form_value is the continuous-time game value for reference.",
];

/// Learns one temperature and evaluates its trace.
pub fn run_lambda(cfg: &ExperimentConfig, lambda_se: f64) -> Result<LambdaRun> {
    let started = Instant::now();
    let params = GameParams {
        lambda_se,
        ..cfg.game
    };
    let grid = cfg.grid()?;
    let learner_cfg = LearnerConfig {
        seed: cfg.seed,
        ..cfg.learner.clone()
    };
    let outcome = learner::run(&params, &grid, &learner_cfg)?;
    let metric = ErrorMetric::new(
        &params,
        &grid,
        cfg.evaluator,
        cfg.n_eval_paths,
        Substream::root(cfg.seed).child(0xE7A1),
        learner_cfg.sigma_floor,
    )?;
    let trace = &outcome.trace;
    let period = learner_cfg.inner_iterations + 1;
    let curve = trace
        .records
        .par_iter()
        .map(|r| {
            Ok(CurvePoint {
                k: r.k,
                i: r.i,
                total_iter: (r.k - 1) * period + r.i,
                rel_error: metric.relative_error(&r.policy, &trace.mean_fields[r.mean_field_id])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outer = trace
        .final_policies
        .iter()
        .enumerate()
        .filter_map(|(idx, pol)| trace.mean_fields.get(idx + 1).map(|m| (idx + 1, pol, m)))
        .map(|(k, pol, m)| {
            Ok(OuterPoint {
                k,
                rel_error: metric.relative_error(pol, m)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let closed_form_value = if lambda_se > 0.0 {
        Some(game_value(&params, Variant::Se, 0.0, &grid)?)
    } else {
        None
    };
    Ok(LambdaRun {
        lambda_se,
        seed: cfg.seed,
        n_eval_paths: cfg.n_eval_paths,
        learned: outcome.policy,
        true_m_hat: params.b / (params.d * params.d),
        analytic_sigma2: analytic_schedule(&params, &grid)?,
        curve,
        outer,
        mean_fields: outcome.trace.mean_fields,
        reference: metric.reference(),
        reference_stderr: metric.reference_stderr(),
        closed_form_value,
        diverged_at: outcome.diverged_at,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// Runs the whole sweep; temperatures run in parallel.
pub fn reproduce(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs = cfg
        .lambda_se_values
        .par_iter()
        .map(|&l| run_lambda(cfg, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        version: VERSION.to_string(),
        config: cfg.clone(),
        runs,
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outer-iteration budget for reaching the threshold at the temperatures the
/// reference experiment reports on.
pub fn outer_budget(lambda_se: f64) -> Option<usize> {
    if lambda_se == 1.0 {
        Some(5)
    } else if lambda_se == 3.0 {
        Some(3)
    } else {
        None
    }
}

/// Single-seed threshold checks used by `--check`.
pub fn check_report(report: &ExperimentReport, threshold: f64) -> Vec<Check> {
    let mut checks = Vec::new();
    for run in report.runs.iter().filter(|r| r.lambda_se > 0.0) {
        let l = run.lambda_se;
        checks.push(Check {
            name: format!("lambda_se={l}: finite run"),
            passed: run.diverged_at.is_none(),
            detail: format!("diverged_at={:?}", run.diverged_at),
        });
        checks.push(Check {
            name: format!("lambda_se={l}: final relative error < {threshold}"),
            passed: run.final_error() < threshold,
            detail: format!("final error {:.6}", run.final_error()),
        });
        if let Some(budget) = outer_budget(l) {
            let reached = run.first_outer_below(threshold);
            checks.push(Check {
                name: format!("lambda_se={l}: threshold reached by outer iteration {budget}"),
                passed: reached.is_some_and(|k| k <= budget),
                detail: format!("first below at {reached:?}"),
            });
        }
        checks.push(Check {
            name: format!("lambda_se={l}: learned gain in [0.70, 0.80]"),
            passed: (0.70..=0.80).contains(&run.learned.m_hat),
            detail: format!("m_hat {:.6} (true {})", run.learned.m_hat, run.true_m_hat),
        });
        checks.push(Check {
            name: format!("lambda_se={l}: schedule nonincreasing and within 5%"),
            passed: run.schedule_matches(0.05),
            detail: format!(
                "learned {:?} analytic {:?}",
                run.learned.sigma2, run.analytic_sigma2
            ),
        });
    }
    checks
}
