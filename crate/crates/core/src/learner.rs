//! Mean-field policy gradient with exploration.
//!
//! The outer loop is fictitious play: the agent improves its policy against a
//! frozen mean field for `I` steps, then the mean field is recomputed assuming
//! everyone plays the improved policy. Each step ascends a sphere-smoothed
//! zeroth-order gradient estimate built from single-trajectory rewards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{GameParams, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::Substream;
use crate::simulate::{
    pairwise_sum, propagate_mean_field, propagate_mean_field_mc, rollout_reward, InitialLaw,
    MeanField, PolicyParams, DEFAULT_SIGMA_FLOOR,
};

/// Gaussian initializer `𝒟` for `R̂⁰`: `M̂⁰ ~ Normal(m_hat_mean, m_hat_std²)`,
/// each `σ̂²_s ~ Normal(sigma2_mean, sigma2_std²)` clamped to the floor.
/// Zero standard deviations give a point mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub m_hat_mean: f64,
    pub m_hat_std: f64,
    pub sigma2_mean: f64,
    pub sigma2_std: f64,
    /// Explicit per-step means for `σ̂²`, overriding `sigma2_mean`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_means: Option<Vec<f64>>,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            m_hat_mean: 0.5,
            m_hat_std: 1.0,
            sigma2_mean: 0.5,
            sigma2_std: 0.1f64.sqrt(),
            sigma2_means: None,
        }
    }
}

impl InitSpec {
    /// Point mass at `policy`.
    pub fn point(policy: &PolicyParams) -> Self {
        InitSpec {
            m_hat_mean: policy.m_hat,
            m_hat_std: 0.0,
            sigma2_mean: 0.0,
            sigma2_std: 0.0,
            sigma2_means: Some(policy.sigma2.clone()),
        }
    }

    pub fn sample(&self, n_steps: usize, floor: f64, substream: Substream) -> PolicyParams {
        let mut rng = substream.rng();
        let m_hat = self.m_hat_mean + self.m_hat_std * rng.sample::<f64, _>(StandardNormal);
        let sigma2 = (0..n_steps)
            .map(|s| {
                let mean = self
                    .sigma2_means
                    .as_ref()
                    .map_or(self.sigma2_mean, |v| v[s]);
                mean + self.sigma2_std * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        PolicyParams { m_hat, sigma2 }.projected(floor)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("init.m_hat_std", self.m_hat_std),
            ("init.sigma2_std", self.sigma2_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !self.m_hat_mean.is_finite() || !self.sigma2_mean.is_finite() {
            return Err(Error::config("init", "means must be finite"));
        }
        if let Some(v) = &self.sigma2_means {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("init.sigma2_means", "entries must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldUpdate {
    Exact,
    MonteCarlo { n_paths: usize },
}

/// How each gradient sample is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `(1/r²) ĵ(R̂ + U) U`.
    #[default]
    OnePoint,
    /// `(1/2r²) (ĵ(R̂ + U) − ĵ(R̂ − U)) U` with both rollouts on the same noise.
    TwoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// `K`.
    pub outer_iterations: usize,
    /// `I`.
    pub inner_iterations: usize,
    /// `n`.
    pub n_trajectories: usize,
    /// Smoothing radius `r`.
    pub radius: f64,
    /// Learning rate `η`.
    pub step_size: f64,
    #[serde(default = "default_floor")]
    pub sigma_floor: f64,
    #[serde(default)]
    pub init: InitSpec,
    /// Initial beliefs `m⁰`, constant over the grid.
    #[serde(default)]
    pub initial_mean_field: f64,
    #[serde(default = "default_true")]
    pub resample_each_outer: bool,
    #[serde(default = "default_update")]
    pub mean_field_update: MeanFieldUpdate,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub seed: u64,
}

fn default_floor() -> f64 {
    DEFAULT_SIGMA_FLOOR
}

fn default_true() -> bool {
    true
}

fn default_update() -> MeanFieldUpdate {
    MeanFieldUpdate::Exact
}

impl Default for LearnerConfig {
    /// `K = 10, I = 400, n = 50, r = 0.01, η = 0.05`, `m⁰ ≡ 0`.
    fn default() -> Self {
        LearnerConfig {
            outer_iterations: 10,
            inner_iterations: 400,
            n_trajectories: 50,
            radius: 0.01,
            step_size: 0.05,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            init: InitSpec::default(),
            initial_mean_field: 0.0,
            resample_each_outer: true,
            mean_field_update: MeanFieldUpdate::Exact,
            estimator: Estimator::OnePoint,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 {
            return Err(Error::config("learner.outer_iterations", "must be >= 1"));
        }
        if self.n_trajectories == 0 {
            return Err(Error::config("learner.n_trajectories", "must be >= 1"));
        }
        for (name, v) in [
            ("learner.radius", self.radius),
            ("learner.step_size", self.step_size),
            ("learner.sigma_floor", self.sigma_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if !self.initial_mean_field.is_finite() {
            return Err(Error::config(
                "learner.initial_mean_field",
                "must be finite",
            ));
        }
        if let MeanFieldUpdate::MonteCarlo { n_paths: 0 } = self.mean_field_update {
            return Err(Error::config(
                "learner.mean_field_update",
                "n_paths must be >= 1",
            ));
        }
        self.init.validate()
    }
}

/// Uniform draw from the sphere of radius `r` in `ℝ^dim`.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R) -> Vec<f64> {
    assert!(
        dim >= 1 && r > 0.0,
        "sample_sphere needs dim >= 1 and r > 0"
    );
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return g.into_iter().map(|x| r * x / norm).collect();
        }
    }
}

/// Sphere-smoothed gradient estimate of an arbitrary noisy objective
/// `f(point, rng)`. Sample `j` draws its direction and its objective noise
/// from `substream.child(j)`.
pub fn estimate_gradient_with<F>(
    f: F,
    point: &[f64],
    n: usize,
    r: f64,
    estimator: Estimator,
    substream: Substream,
) -> Vec<f64>
where
    F: Fn(&[f64], &mut ChaCha8Rng) -> f64 + Sync,
{
    let dim = point.len();
    let samples: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let sub = substream.child(j);
            let u = sample_sphere(dim, r, &mut sub.child(0).rng());
            let plus: Vec<f64> = point.iter().zip(&u).map(|(x, d)| x + d).collect();
            let weight = match estimator {
                Estimator::OnePoint => f(&plus, &mut sub.child(1).rng()) / (r * r),
                Estimator::TwoPoint => {
                    let minus: Vec<f64> = point.iter().zip(&u).map(|(x, d)| x - d).collect();
                    let hi = f(&plus, &mut sub.child(1).rng());
                    let lo = f(&minus, &mut sub.child(1).rng());
                    (hi - lo) / (2.0 * r * r)
                }
            };
            u.into_iter().map(|d| weight * d).collect()
        })
        .collect();
    (0..dim)
        .map(|c| {
            let col: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            pairwise_sum(&col) / n as f64
        })
        .collect()
}

/// Gradient estimate of `J(·, m)` at `policy` from `cfg.n_trajectories`
/// single-trajectory rewards. Perturbed variances are clamped to the floor
/// before each rollout.
pub fn estimate_gradient(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    cfg: &LearnerConfig,
    substream: Substream,
) -> Result<Vec<f64>> {
    policy.check_grid(grid)?;
    mean_field.check_grid(grid)?;
    let law = InitialLaw::from_params(params);
    let floor = cfg.sigma_floor;
    let objective = |flat: &[f64], rng: &mut ChaCha8Rng| {
        let candidate = PolicyParams::from_flat(flat).projected(floor);
        rollout_reward(&law, params, grid, &candidate, mean_field, rng)
    };
    Ok(estimate_gradient_with(
        objective,
        &policy.flatten(),
        cfg.n_trajectories,
        cfg.radius,
        cfg.estimator,
        substream,
    ))
}

/// `R̂ + η·estimate`, variances clamped to the floor.
pub fn gradient_step(policy: &PolicyParams, estimate: &[f64], cfg: &LearnerConfig) -> PolicyParams {
    let flat: Vec<f64> = policy
        .flatten()
        .iter()
        .zip(estimate)
        .map(|(x, g)| x + cfg.step_size * g)
        .collect();
    PolicyParams::from_flat(&flat).projected(cfg.sigma_floor)
}

/// Iterates of one inner loop. A run that produces a non-finite policy stops
/// early; `iterates` then holds the finite prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRun {
    pub iterates: Vec<PolicyParams>,
    pub diverged: bool,
}

fn is_finite(policy: &PolicyParams) -> bool {
    policy.m_hat.is_finite() && policy.sigma2.iter().all(|v| v.is_finite())
}

/// Runs `I` gradient steps against a frozen mean field starting from `start`,
/// returning the iterates `R̂⁰ … R̂^I`.
pub fn inner_loop_from(
    params: &GameParams,
    grid: &TimeGrid,
    mean_field: &MeanField,
    start: PolicyParams,
    cfg: &LearnerConfig,
    substream: Substream,
) -> Result<InnerRun> {
    let mut iterates = Vec::with_capacity(cfg.inner_iterations + 1);
    let mut current = start;
    for i in 0..cfg.inner_iterations {
        let g = estimate_gradient(
            params,
            grid,
            &current,
            mean_field,
            cfg,
            substream.child(i as u64),
        )?;
        let next = gradient_step(&current, &g, cfg);
        iterates.push(std::mem::replace(&mut current, next));
        if !is_finite(&current) {
            return Ok(InnerRun {
                iterates,
                diverged: true,
            });
        }
    }
    iterates.push(current);
    Ok(InnerRun {
        iterates,
        diverged: false,
    })
}

/// Draws `R̂⁰ ~ 𝒟` and improves it against `mean_field`.
pub fn inner_loop(
    params: &GameParams,
    grid: &TimeGrid,
    mean_field: &MeanField,
    cfg: &LearnerConfig,
    substream: Substream,
) -> Result<InnerRun> {
    let start = cfg
        .init
        .sample(grid.n_steps(), cfg.sigma_floor, substream.child(0));
    inner_loop_from(params, grid, mean_field, start, cfg, substream.child(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerRecord {
    /// Outer iteration, `1..=K`.
    pub k: usize,
    /// Inner iterate, `0..=I`.
    pub i: usize,
    pub policy: PolicyParams,
    /// Index into [`LearningTrace::mean_fields`] of the frozen mean field.
    pub mean_field_id: usize,
    /// Filled in by an error monitor, e.g. the harness.
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningTrace {
    /// `K·(I+1)` records in iteration order.
    pub records: Vec<InnerRecord>,
    /// `m⁰ … m^K`.
    pub mean_fields: Vec<MeanField>,
    /// `R̂^I` of each outer iteration.
    pub final_policies: Vec<PolicyParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningOutcome {
    pub policy: PolicyParams,
    pub mean_field: MeanField,
    pub trace: LearningTrace,
    /// `(k, i)` of the first non-finite iterate, if the run blew up.
    pub diverged_at: Option<(usize, usize)>,
}

fn update_mean_field(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    prev: &MeanField,
    cfg: &LearnerConfig,
    substream: Substream,
) -> Result<MeanField> {
    match cfg.mean_field_update {
        MeanFieldUpdate::Exact => propagate_mean_field(params, grid, policy, prev),
        MeanFieldUpdate::MonteCarlo { n_paths } => {
            propagate_mean_field_mc(params, grid, policy, prev, n_paths, substream)
        }
    }
}

/// `K` rounds of fictitious play. A pure function of its arguments.
pub fn run(params: &GameParams, grid: &TimeGrid, cfg: &LearnerConfig) -> Result<LearningOutcome> {
    params.validate()?;
    grid.check_matches(params)?;
    cfg.validate()?;
    let root = Substream::root(cfg.seed);
    let mut mean_fields = vec![MeanField::constant(grid, cfg.initial_mean_field)];
    let mut records = Vec::with_capacity(cfg.outer_iterations * (cfg.inner_iterations + 1));
    let mut final_policies: Vec<PolicyParams> = Vec::with_capacity(cfg.outer_iterations);
    let mut diverged_at = None;
    for k in 1..=cfg.outer_iterations {
        let outer = root.child(k as u64);
        let prev = &mean_fields[k - 1];
        let inner = match final_policies.last() {
            Some(last) if !cfg.resample_each_outer => {
                inner_loop_from(params, grid, prev, last.clone(), cfg, outer.child(1))?
            }
            _ => inner_loop(params, grid, prev, cfg, outer)?,
        };
        let n_iterates = inner.iterates.len();
        records.extend(
            inner
                .iterates
                .iter()
                .enumerate()
                .map(|(i, policy)| InnerRecord {
                    k,
                    i,
                    policy: policy.clone(),
                    mean_field_id: k - 1,
                    rel_error: None,
                }),
        );
        let last = inner
            .iterates
            .into_iter()
            .last()
            .expect("inner loop yields at least R̂⁰");
        if inner.diverged {
            diverged_at = Some((k, n_iterates));
            final_policies.push(last);
            break;
        }
        let next = update_mean_field(params, grid, &last, prev, cfg, outer.child(2))?;
        final_policies.push(last);
        mean_fields.push(next);
    }
    Ok(LearningOutcome {
        policy: final_policies.last().expect("K >= 1").clone(),
        mean_field: mean_fields.last().expect("m⁰ exists").clone(),
        trace: LearningTrace {
            records,
            mean_fields,
            final_policies,
        },
        diverged_at,
    })
}
