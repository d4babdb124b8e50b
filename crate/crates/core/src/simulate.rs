//! Euler–Maruyama dynamics of the discretized game.
//!
//! On the grid `t_s = s·δ` the state follows
//!
//! ```text
//! x_{s+1} = x_s + drift_s δ + sqrt(diffusion2_s) ΔW_s,   ΔW_s ~ Normal(0, δ)
//! ```
//!
//! where `drift_s` and `diffusion2_s` are the first and second moments of the
//! action under `π_s = Normal(M̂ (m_s − x_s), σ̂²_s)` pushed through the model,
//! evaluated in closed form (no inner sampling over actions). The realized
//! reward of one path is
//!
//! ```text
//! ĵ = Σ_{s<N} [ −(Q/2)(x_s − m_s)² + (λ_SE/2) ln(2πe σ̂²_s) ] δ − (Q̄/2)(x_N − m_N)²
//! ```

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{ne_policy_se, GameParams, GaussianFeedbackPolicy, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::Substream;

/// Default lower bound on every exploration variance.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

/// Population mean states `m_0, …, m_N` on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    values: Vec<f64>,
}

impl MeanField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Contract(format!(
                "a mean field needs at least 2 points, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(
                "mean field",
                format!("m_{bad} = {} is not finite", values[bad]),
            ));
        }
        Ok(MeanField { values })
    }

    pub fn constant(grid: &TimeGrid, m: f64) -> Self {
        MeanField {
            values: vec![m; grid.n_steps() + 1],
        }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        MeanField {
            values: grid.times().map(f).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.values.len() != grid.n_steps() + 1 {
            return Err(Error::Contract(format!(
                "mean field has {} points but the grid has {} nodes",
                self.values.len(),
                grid.n_steps() + 1
            )));
        }
        Ok(())
    }

    /// Linear interpolation between grid nodes.
    pub fn interpolate(&self, grid: &TimeGrid, t: f64) -> f64 {
        let pos = (t / grid.dt()).clamp(0.0, grid.n_steps() as f64);
        let s = (pos.floor() as usize).min(grid.n_steps() - 1);
        let frac = pos - s as f64;
        self.values[s] + frac * (self.values[s + 1] - self.values[s])
    }

    /// Largest pointwise distance to another path.
    pub fn max_abs_diff(&self, other: &MeanField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Learnable policy parameters `R̂ = (M̂, σ̂²_0, …, σ̂²_{N−1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub m_hat: f64,
    pub sigma2: Vec<f64>,
}

impl PolicyParams {
    /// Length of the flattened parameter vector, `1 + N`.
    pub fn dim(&self) -> usize {
        1 + self.sigma2.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.m_hat);
        v.extend_from_slice(&self.sigma2);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        PolicyParams {
            m_hat: flat[0],
            sigma2: flat[1..].to_vec(),
        }
    }

    /// Clamps every variance to at least `floor`.
    pub fn project(&mut self, floor: f64) {
        for v in &mut self.sigma2 {
            if v.is_nan() || *v < floor {
                *v = floor;
            }
        }
    }

    pub fn projected(mut self, floor: f64) -> Self {
        self.project(floor);
        self
    }

    /// Samples a continuous-time feedback policy at the left end of each step.
    pub fn from_feedback(policy: &GaussianFeedbackPolicy, grid: &TimeGrid) -> Self {
        PolicyParams {
            m_hat: policy.mean_coeff,
            sigma2: (0..grid.n_steps())
                .map(|s| policy.variance.at(grid.time(s)))
                .collect(),
        }
    }

    /// The discretized Shannon equilibrium `R*`: `M* = B/D²`,
    /// `σ²*_s = λ_SE/(D² η^SE_{sδ})`. With `λ_SE = 0` the variances collapse
    /// to `floor`.
    pub fn discretized_equilibrium(
        params: &GameParams,
        grid: &TimeGrid,
        floor: f64,
    ) -> Result<Self> {
        if params.lambda_se > 0.0 {
            Ok(Self::from_feedback(&ne_policy_se(params)?, grid).projected(floor))
        } else {
            params.validate()?;
            Ok(PolicyParams {
                m_hat: params.b / (params.d * params.d),
                sigma2: vec![floor; grid.n_steps()],
            })
        }
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.sigma2.len() != grid.n_steps() {
            return Err(Error::Contract(format!(
                "policy has {} variances but the grid has {} steps",
                self.sigma2.len(),
                grid.n_steps()
            )));
        }
        Ok(())
    }

    /// Every variance must be strictly positive and finite, and the gain finite.
    pub fn check_positive(&self) -> Result<()> {
        if !self.m_hat.is_finite() {
            return Err(Error::domain(
                "m_hat",
                format!("gain {} is not finite", self.m_hat),
            ));
        }
        if let Some(s) = self
            .sigma2
            .iter()
            .position(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::domain(
                "sigma2",
                format!("σ̂²_{s} = {} must be strictly positive", self.sigma2[s]),
            ));
        }
        Ok(())
    }

    /// Parses `{"m_hat": …, "sigma2": [...]}` and checks positivity.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let p: PolicyParams = serde_json::from_str(text)?;
        if p.sigma2.is_empty() {
            return Err(Error::Contract(
                "sigma2 must have one entry per step".into(),
            ));
        }
        p.check_positive()?;
        Ok(p)
    }
}

/// Law of the initial state `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Gaussian { mean: f64, std_dev: f64 },
    Point(f64),
}

impl InitialLaw {
    /// Gaussian with the moments carried by the game parameters.
    pub fn from_params(params: &GameParams) -> Self {
        let var = params.xi_variance();
        if var > 0.0 {
            InitialLaw::Gaussian {
                mean: params.xi_mean,
                std_dev: var.sqrt(),
            }
        } else {
            InitialLaw::Point(params.xi_mean)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::Gaussian { mean, std_dev } => Normal::new(mean, std_dev)
                .expect("finite positive standard deviation")
                .sample(rng),
            InitialLaw::Point(x) => x,
        }
    }
}

/// Drift and squared diffusion of one Euler step, with the policy integrated out:
/// `drift = (A + B M̂)(m_s − x_s)`, `diffusion2 = D² (M̂² (m_s − x_s)² + σ̂²_s)`.
pub fn step_moments(
    params: &GameParams,
    m_hat: f64,
    sigma2: f64,
    m_s: f64,
    x_s: f64,
) -> (f64, f64) {
    let gap = m_s - x_s;
    let mean_u = m_hat * gap;
    let drift = params.a * gap + params.b * mean_u;
    let diffusion2 = params.d * params.d * (mean_u * mean_u + sigma2);
    (drift, diffusion2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub seed_id: Substream,
}

fn check_aligned(grid: &TimeGrid, policy: &PolicyParams, mean_field: &MeanField) -> Result<()> {
    policy.check_grid(grid)?;
    mean_field.check_grid(grid)
}

/// Deterministic Euler kernel: `x_0` and standard-normal draws `z_s` given.
/// Increments are `ΔW_s = sqrt(δ) z_s`.
pub fn euler_path(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    x0: f64,
    normals: &[f64],
) -> Result<Vec<f64>> {
    check_aligned(grid, policy, mean_field)?;
    if normals.len() != grid.n_steps() {
        return Err(Error::Contract(format!(
            "{} normal draws for {} steps",
            normals.len(),
            grid.n_steps()
        )));
    }
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let m = mean_field.values();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut x = x0;
    states.push(x);
    for (s, z) in normals.iter().enumerate() {
        let (drift, diff2) = step_moments(params, policy.m_hat, policy.sigma2[s], m[s], x);
        x += drift * dt + diff2.sqrt() * sqrt_dt * z;
        states.push(x);
    }
    Ok(states)
}

pub fn simulate_trajectory(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    substream: Substream,
) -> Result<Trajectory> {
    simulate_trajectory_with(
        &InitialLaw::from_params(params),
        params,
        grid,
        policy,
        mean_field,
        substream,
    )
}

pub fn simulate_trajectory_with(
    law: &InitialLaw,
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    substream: Substream,
) -> Result<Trajectory> {
    let mut rng = substream.rng();
    let x0 = law.sample(&mut rng);
    let normals: Vec<f64> = (0..grid.n_steps())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Ok(Trajectory {
        states: euler_path(params, grid, policy, mean_field, x0, &normals)?,
        seed_id: substream,
    })
}

/// Entropy of `Normal(·, σ²)`: `½ ln(2πe σ²)`.
pub fn gaussian_entropy(sigma2: f64) -> f64 {
    0.5 * (2.0 * PI * E * sigma2).ln()
}

/// `ĵ` of one trajectory.
pub fn realized_reward(
    params: &GameParams,
    grid: &TimeGrid,
    traj: &Trajectory,
    policy: &PolicyParams,
    mean_field: &MeanField,
) -> Result<f64> {
    check_aligned(grid, policy, mean_field)?;
    policy.check_positive()?;
    if traj.states.len() != grid.n_steps() + 1 {
        return Err(Error::Contract(format!(
            "trajectory has {} states for {} steps",
            traj.states.len(),
            grid.n_steps()
        )));
    }
    Ok(reward_of_states(
        params,
        grid,
        &traj.states,
        policy,
        mean_field,
    ))
}

fn reward_of_states(
    params: &GameParams,
    grid: &TimeGrid,
    states: &[f64],
    policy: &PolicyParams,
    mean_field: &MeanField,
) -> f64 {
    let m = mean_field.values();
    let n = grid.n_steps();
    let mut running = 0.0;
    for s in 0..n {
        let dev = states[s] - m[s];
        running += -0.5 * params.q * dev * dev + entropy_bonus(params, policy.sigma2[s]);
    }
    let dev_t = states[n] - m[n];
    running * grid.dt() - 0.5 * params.q_bar * dev_t * dev_t
}

fn entropy_bonus(params: &GameParams, sigma2: f64) -> f64 {
    if params.lambda_se == 0.0 {
        0.0
    } else {
        params.lambda_se * gaussian_entropy(sigma2)
    }
}

/// Simulates one path from `rng` and returns its realized reward without
/// storing the states. Inputs are assumed aligned and positive.
pub fn rollout_reward<R: Rng + ?Sized>(
    law: &InitialLaw,
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    rng: &mut R,
) -> f64 {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let m = mean_field.values();
    let n = grid.n_steps();
    let mut x = law.sample(rng);
    let mut running = 0.0;
    for s in 0..n {
        let dev = x - m[s];
        running += -0.5 * params.q * dev * dev + entropy_bonus(params, policy.sigma2[s]);
        let (drift, diff2) = step_moments(params, policy.m_hat, policy.sigma2[s], m[s], x);
        let z: f64 = rng.sample(StandardNormal);
        x += drift * dt + diff2.sqrt() * sqrt_dt * z;
    }
    let dev_t = x - m[n];
    running * dt - 0.5 * params.q_bar * dev_t * dev_t
}

/// Monte Carlo estimate of the expected reward `J(R̂, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean and standard error, reduced pairwise.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Path `j` uses substream `seed.child(j)`; paths run in parallel and the
/// reduction is order-fixed, so results do not depend on the thread count.
pub fn mc_expected_reward(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    n_paths: usize,
    seed: Substream,
) -> Result<McEstimate> {
    mc_expected_reward_with(
        &InitialLaw::from_params(params),
        params,
        grid,
        policy,
        mean_field,
        n_paths,
        seed,
    )
}

pub fn mc_expected_reward_with(
    law: &InitialLaw,
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    n_paths: usize,
    seed: Substream,
) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(Error::domain(
            "n_paths",
            format!("need at least 2 paths, got {n_paths}"),
        ));
    }
    check_aligned(grid, policy, mean_field)?;
    policy.check_positive()?;
    let rewards: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|j| {
            rollout_reward(
                law,
                params,
                grid,
                policy,
                mean_field,
                &mut seed.child(j).rng(),
            )
        })
        .collect();
    let (mean, stderr) = mean_and_stderr(&rewards);
    Ok(McEstimate {
        mean,
        stderr,
        n_paths,
    })
}

/// Exact expectation of `ĵ` under the Euler scheme, from the first two
/// moments of `x_s` (any initial law with the parameters' `E[ξ]`, `E[ξ²]`).
pub fn exact_expected_reward(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
) -> Result<f64> {
    check_aligned(grid, policy, mean_field)?;
    policy.check_positive()?;
    let dt = grid.dt();
    let m = mean_field.values();
    let a = params.a + params.b * policy.m_hat;
    let d2 = params.d * params.d;
    let g2 = policy.m_hat * policy.m_hat;
    let mut mu = params.xi_mean;
    let mut p = params.xi_second_moment;
    let mut running = 0.0;
    for s in 0..grid.n_steps() {
        let dev2 = p - 2.0 * m[s] * mu + m[s] * m[s];
        running += -0.5 * params.q * dev2 + entropy_bonus(params, policy.sigma2[s]);
        let keep = 1.0 - a * dt;
        let push = a * m[s] * dt;
        let p_next = keep * keep * p
            + 2.0 * keep * push * mu
            + push * push
            + d2 * (g2 * dev2 + policy.sigma2[s]) * dt;
        mu = keep * mu + push;
        p = p_next;
    }
    let n = grid.n_steps();
    let dev2_t = p - 2.0 * m[n] * mu + m[n] * m[n];
    Ok(running * dt - 0.5 * params.q_bar * dev2_t)
}

/// Fictitious-play update of the mean field: the exact expectation of the
/// discrete dynamics when everyone plays `policy` against `prev`,
/// `m_0 = E[ξ]`, `m_{s+1} = m_s + (A + B M̂)(prev_s − m_s) δ`.
pub fn propagate_mean_field(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    prev: &MeanField,
) -> Result<MeanField> {
    prev.check_grid(grid)?;
    let dt = grid.dt();
    let a = params.a + params.b * policy.m_hat;
    let mut values = Vec::with_capacity(prev.len());
    let mut m = params.xi_mean;
    values.push(m);
    for &p in &prev.values()[..grid.n_steps()] {
        m += a * (p - m) * dt;
        values.push(m);
    }
    MeanField::new(values)
}

/// Monte Carlo variant of [`propagate_mean_field`]: the sample mean of
/// `n_paths` simulated population paths against `prev`.
pub fn propagate_mean_field_mc(
    params: &GameParams,
    grid: &TimeGrid,
    policy: &PolicyParams,
    prev: &MeanField,
    n_paths: usize,
    seed: Substream,
) -> Result<MeanField> {
    check_aligned(grid, policy, prev)?;
    if n_paths == 0 {
        return Err(Error::domain("n_paths", "need at least 1 path"));
    }
    let paths: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|j| simulate_trajectory(params, grid, policy, prev, seed.child(j)).map(|t| t.states))
        .collect::<Result<_>>()?;
    let values = (0..=grid.n_steps())
        .map(|s| {
            let col: Vec<f64> = paths.iter().map(|p| p[s]).collect();
            pairwise_sum(&col) / n_paths as f64
        })
        .collect();
    MeanField::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (GameParams, TimeGrid) {
        let p = GameParams::reference(1.0);
        let g = TimeGrid::from_step(p.horizon, 0.02).unwrap();
        (p, g)
    }

    #[test]
    fn step_moments_cases() {
        let (p, _) = setup();
        assert_eq!(step_moments(&p, 0.75, 0.3, 0.2, 0.2), (0.0, 4.0 * 0.3));
        let (drift, diff2) = step_moments(&p, 0.0, 0.3, 1.2, 0.2);
        assert_eq!(drift, 2.0);
        assert!((diff2 - 1.2).abs() < 1e-15);
        let (drift, _) = step_moments(&p, 0.75, 0.3, 1.0, 0.0);
        assert_eq!(drift, 4.25);
    }

    #[test]
    fn pinned_path_stays_put() {
        let (mut p, g) = setup();
        p.xi_mean = 0.4;
        p.xi_second_moment = 0.16;
        let pol = PolicyParams {
            m_hat: 0.5,
            sigma2: vec![1e-300; 5],
        };
        let mf = MeanField::constant(&g, 0.4);
        let t = simulate_trajectory(&p, &g, &pol, &mf, Substream::root(3)).unwrap();
        assert!(t.states.iter().all(|x| (x - 0.4).abs() < 1e-140));
    }

    #[test]
    fn trajectories_are_reproducible() {
        let (p, g) = setup();
        let pol = PolicyParams::discretized_equilibrium(&p, &g, DEFAULT_SIGMA_FLOOR).unwrap();
        let mf = MeanField::constant(&g, 0.1);
        let s = Substream::root(11).child(4);
        let a = simulate_trajectory(&p, &g, &pol, &mf, s).unwrap();
        let b = simulate_trajectory(&p, &g, &pol, &mf, s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 6);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let (p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.5,
            sigma2: vec![0.1; 4],
        };
        let mf = MeanField::constant(&g, 0.1);
        assert!(matches!(
            simulate_trajectory(&p, &g, &pol, &mf, Substream::root(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn reward_null_case_and_nonpositive_variance() {
        let (p, g) = setup();
        let mf = MeanField::constant(&g, 0.1);
        let traj = Trajectory {
            states: vec![0.1; 6],
            seed_id: Substream::root(0),
        };
        let pol = PolicyParams {
            m_hat: 0.3,
            sigma2: vec![1.0 / (2.0 * PI * E); 5],
        };
        assert!(realized_reward(&p, &g, &traj, &pol, &mf).unwrap().abs() < 1e-15);
        let bad = PolicyParams {
            m_hat: 0.3,
            sigma2: vec![0.1, 0.1, -0.1, 0.1, 0.1],
        };
        assert!(matches!(
            realized_reward(&p, &g, &traj, &bad, &mf),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn reward_decomposes_into_quadratic_and_entropy() {
        let (p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.6,
            sigma2: vec![0.3, 0.25, 0.2, 0.15, 0.1],
        };
        let mf = MeanField::from_fn(&g, |t| 0.1 - t);
        let traj = simulate_trajectory(&p, &g, &pol, &mf, Substream::root(5)).unwrap();
        let with = realized_reward(&p, &g, &traj, &pol, &mf).unwrap();
        let without = realized_reward(
            &GameParams {
                lambda_se: 0.0,
                ..p
            },
            &g,
            &traj,
            &pol,
            &mf,
        )
        .unwrap();
        let entropy: f64 =
            pol.sigma2.iter().map(|&v| gaussian_entropy(v)).sum::<f64>() * g.dt() * p.lambda_se;
        assert!((with - without - entropy).abs() < 1e-14);

        let scaled = GameParams {
            q: 3.0 * p.q,
            q_bar: 3.0 * p.q_bar,
            lambda_se: 0.0,
            ..p
        };
        let tripled = realized_reward(&scaled, &g, &traj, &pol, &mf).unwrap();
        assert!((tripled - 3.0 * without).abs() < 1e-13);
    }

    #[test]
    fn rollout_matches_stored_trajectory() {
        let (p, g) = setup();
        let pol = PolicyParams::discretized_equilibrium(&p, &g, DEFAULT_SIGMA_FLOOR).unwrap();
        let mf = MeanField::constant(&g, 0.0);
        let s = Substream::root(9).child(2);
        let traj = simulate_trajectory(&p, &g, &pol, &mf, s).unwrap();
        let r1 = realized_reward(&p, &g, &traj, &pol, &mf).unwrap();
        let r2 = rollout_reward(
            &InitialLaw::from_params(&p),
            &p,
            &g,
            &pol,
            &mf,
            &mut s.rng(),
        );
        assert_eq!(r1, r2);
    }

    #[test]
    fn mc_rejects_single_path_and_degenerate_paths_have_no_spread() {
        let (mut p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.75,
            sigma2: vec![1e-300; 5],
        };
        let mf = MeanField::constant(&g, 0.1);
        assert!(mc_expected_reward(&p, &g, &pol, &mf, 1, Substream::root(0)).is_err());
        p.xi_second_moment = 0.01;
        let est = mc_expected_reward(&p, &g, &pol, &mf, 2, Substream::root(0)).unwrap();
        assert!(est.stderr < 1e-100);
    }

    #[test]
    fn exact_expectation_agrees_with_monte_carlo() {
        let (p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.2,
            sigma2: vec![0.6, 0.5, 0.4, 0.3, 0.2],
        };
        let mf = MeanField::from_fn(&g, |t| 0.05 + t);
        let exact = exact_expected_reward(&p, &g, &pol, &mf).unwrap();
        let est = mc_expected_reward(&p, &g, &pol, &mf, 40_000, Substream::root(1)).unwrap();
        assert!(
            (est.mean - exact).abs() < 4.0 * est.stderr,
            "{exact} vs {est:?}"
        );
    }

    #[test]
    fn mean_field_update_fixed_points() {
        let (p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.75,
            sigma2: vec![0.1; 5],
        };
        let eq = MeanField::constant(&g, p.xi_mean);
        assert_eq!(propagate_mean_field(&p, &g, &pol, &eq).unwrap(), eq);

        let decoupled = PolicyParams {
            m_hat: -p.a / p.b,
            sigma2: vec![0.1; 5],
        };
        let wild = MeanField::from_fn(&g, |t| 5.0 * (30.0 * t).sin());
        let out = propagate_mean_field(&p, &g, &decoupled, &wild).unwrap();
        assert!(out.max_abs_diff(&eq) < 1e-15);
    }

    #[test]
    fn mean_field_iteration_contracts_geometrically() {
        let (p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.75,
            sigma2: vec![0.1; 5],
        };
        let target = MeanField::constant(&g, 0.1);
        let mut m = MeanField::constant(&g, 0.0);
        let mut errs = Vec::new();
        for _ in 0..12 {
            m = propagate_mean_field(&p, &g, &pol, &m).unwrap();
            errs.push(m.max_abs_diff(&target));
        }
        // the recursion is nilpotent-like on a finite grid: error shrinks every sweep
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        assert!(errs[11] < 1e-10, "{errs:?}");
    }

    #[test]
    fn mc_mean_field_update_tracks_exact_update() {
        let (p, g) = setup();
        let pol = PolicyParams {
            m_hat: 0.5,
            sigma2: vec![0.2; 5],
        };
        let prev = MeanField::constant(&g, 0.0);
        let exact = propagate_mean_field(&p, &g, &pol, &prev).unwrap();
        let mc = propagate_mean_field_mc(&p, &g, &pol, &prev, 40_000, Substream::root(2)).unwrap();
        assert!(mc.max_abs_diff(&exact) < 0.03, "{mc:?} vs {exact:?}");
    }

    #[test]
    fn policy_json_parsing() {
        let p = PolicyParams::from_json_str(r#"{"m_hat": 0.7, "sigma2": [0.1, 0.2]}"#).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(PolicyParams::from_flat(&p.flatten()), p);
        let err =
            PolicyParams::from_json_str(r#"{"m_hat": 0.7, "sigma2": [0.1, 0.0]}"#).unwrap_err();
        assert!(err.to_string().contains("strictly positive"), "{err}");
        assert!(PolicyParams::from_json_str(r#"{"m_hat": 0.7}"#).is_err());
    }

    #[test]
    fn interpolation_hits_nodes() {
        let (_, g) = setup();
        let mf = MeanField::from_fn(&g, |t| t * t);
        for s in 0..=5 {
            let t = g.time(s);
            assert!((mf.interpolate(&g, t) - t * t).abs() < 1e-15);
        }
        assert!((mf.interpolate(&g, 0.01) - 0.5 * 0.0004).abs() < 1e-15);
    }
}
