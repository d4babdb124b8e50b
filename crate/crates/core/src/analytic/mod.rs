//! Closed-form equilibrium objects of the entropy-regularized LQ game.
//!
//! Two variants are covered:
//!
//! * **SE**: Shannon entropy only. The value ansatz is
//!   `Ṽ(t, x) = −(η_t/2)(x − m*)² + γ_t` with `η` solving the linear backward
//!   Riccati equation `η̇ = (2A + B²/D²) η − Q`, `η_T = Q̄`.
//! * **EE**: Shannon plus cross-entropy (`λ_CE ≥ 0`). Same structure with the
//!   rate `2A + (B²/D²)(λ_SE + λ_CE)/λ_SE` and an extra term in `γ` driven by
//!   the equilibrium population variance `κ_s`.
//!
//! `η` is always evaluated in closed form. Every time integral (`γ`, `κ`,
//! payoffs) is a composite trapezoid on the simulation grid refined by
//! [`TimeGrid::refinement`].

mod params;
mod payoff;

pub use params::{GameParams, TimeGrid, DEFAULT_REFINEMENT};
pub use payoff::{policy_payoff, policy_payoff_closed_form, ClosedForm};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which entropy regularization the game carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Se,
    Ee,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Se => f.write_str("se"),
            Variant::Ee => f.write_str("ee"),
        }
    }
}

/// Closed-form solution of `η̇ = rate·η − source`, `η_T = terminal`:
///
/// ```text
/// η_t = terminal·e^{−rate (T−t)} + (source/rate)(1 − e^{−rate (T−t)})
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Riccati {
    pub terminal: f64,
    pub source: f64,
    pub rate: f64,
    pub horizon: f64,
}

impl Riccati {
    pub fn value(&self, t: f64) -> f64 {
        let tau = self.horizon - t;
        let decay = (-self.rate * tau).exp();
        // 1 − e^{−x} without cancellation for small x
        let rise = -(-self.rate * tau).exp_m1();
        self.terminal * decay + self.source / self.rate * rise
    }

    /// Long-horizon limit `source / rate`.
    pub fn stationary(&self) -> f64 {
        self.source / self.rate
    }

    fn se(params: &GameParams) -> Self {
        Riccati {
            terminal: params.q_bar,
            source: params.q,
            rate: 2.0 * params.a + params.b * params.b / (params.d * params.d),
            horizon: params.horizon,
        }
    }

    fn ee(params: &GameParams) -> Self {
        Riccati {
            terminal: params.q_bar,
            source: params.q,
            rate: 2.0 * params.a
                + params.b * params.b / (params.d * params.d) * params.temperature_ratio(),
            horizon: params.horizon,
        }
    }

    pub fn for_variant(params: &GameParams, variant: Variant) -> Self {
        match variant {
            Variant::Se => Self::se(params),
            Variant::Ee => Self::ee(params),
        }
    }
}

/// Time profile of a Gaussian policy's variance.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceSchedule {
    Constant(f64),
    /// `values[s]` on `[s·dt, (s+1)·dt)`; the last value also holds at `T`.
    Piecewise {
        dt: f64,
        values: Vec<f64>,
    },
    /// `scale / η(t)`: the equilibrium exploration schedule.
    InverseRiccati {
        scale: f64,
        eta: Riccati,
    },
    /// Linear from `start` at `t = 0` to `end` at `t = horizon`.
    Linear {
        start: f64,
        end: f64,
        horizon: f64,
    },
}

impl VarianceSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            VarianceSchedule::Constant(v) => *v,
            VarianceSchedule::Piecewise { dt, values } => values[piece_index(t, *dt, values.len())],
            VarianceSchedule::InverseRiccati { scale, eta } => scale / eta.value(t),
            VarianceSchedule::Linear {
                start,
                end,
                horizon,
            } => start + (end - start) * (t / horizon),
        }
    }

    /// Value at `t` for a quadrature panel centred at `panel_mid`. Identical to
    /// [`VarianceSchedule::at`] except that step schedules take the value of
    /// the step containing the panel, so panel endpoints sitting on a jump use
    /// the one-sided limit from inside the panel.
    pub(crate) fn within_panel(&self, t: f64, panel_mid: f64) -> f64 {
        match self {
            VarianceSchedule::Piecewise { .. } => self.at(panel_mid),
            _ => self.at(t),
        }
    }
}

fn piece_index(t: f64, dt: f64, len: usize) -> usize {
    let raw = (t / dt + 1e-9).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(len - 1)
    }
}

/// Feedback law `u | x ~ Normal(M·(m − x), σ²(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFeedbackPolicy {
    /// Gain `M` applied to `m − x`.
    pub mean_coeff: f64,
    pub variance: VarianceSchedule,
    /// Mean state the feedback is taken against at equilibrium (`m* = E[ξ]`).
    pub reference_mean: f64,
}

impl GaussianFeedbackPolicy {
    pub fn mean_action(&self, m: f64, x: f64) -> f64 {
        self.mean_coeff * (m - x)
    }
}

/// `η^SE_t`.
pub fn eta_se(params: &GameParams, t: f64) -> Result<f64> {
    params.validate()?;
    params.check_time("t", t)?;
    Ok(Riccati::se(params).value(t))
}

/// `η^EE_t`; coincides with [`eta_se`] when `λ_CE = 0`.
pub fn eta_ee(params: &GameParams, t: f64) -> Result<f64> {
    params.require_exploration()?;
    params.check_time("t", t)?;
    Ok(Riccati::ee(params).value(t))
}

/// Composite trapezoid of `f` over `[a, b]` with panels no wider than `h`.
pub(crate) fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = panel_count(a, b, h);
    let w = (b - a) / panels as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for j in 1..panels {
        acc += f(a + w * j as f64);
    }
    acc * w
}

pub(crate) fn panel_count(a: f64, b: f64, h: f64) -> usize {
    (((b - a) / h) - 1e-9).ceil().max(1.0) as usize
}

/// `γ` for total temperature `temp`: `(temp/2) ln(2π temp / D²)(T − t) − (temp/2)∫_t^T ln η`.
fn gamma_entropy_part(
    params: &GameParams,
    eta: &Riccati,
    temp: f64,
    t: f64,
    grid: &TimeGrid,
) -> f64 {
    let d2 = params.d * params.d;
    let log_integral = trapezoid(|z| eta.value(z).ln(), t, params.horizon, grid.quad_step());
    0.5 * temp * (2.0 * PI * temp / d2).ln() * (params.horizon - t) - 0.5 * temp * log_integral
}

/// `γ^SE_t`.
pub fn gamma_se(params: &GameParams, t: f64, grid: &TimeGrid) -> Result<f64> {
    params.require_exploration()?;
    params.check_time("t", t)?;
    grid.check_matches(params)?;
    Ok(gamma_entropy_part(
        params,
        &Riccati::se(params),
        params.lambda_se,
        t,
        grid,
    ))
}

/// Constants of the equilibrium variance equation under enhanced entropy.
///
/// `K` is minus the mean-reversion rate of the equilibrium state,
/// `K = −(A + (B²/D²)(λ_SE + λ_CE)/λ_SE)`, and `M = ((B/D)(λ_SE + λ_CE)/λ_SE)²`
/// is the feedback contribution to the diffusion, so that
/// `d Var[X*_s]/ds = (2K + M) Var[X*_s] + (λ_SE + λ_CE)/η^EE_s`.
pub fn ee_constants(params: &GameParams) -> Result<(f64, f64)> {
    params.require_exploration()?;
    let ratio = params.temperature_ratio();
    let k = -(params.a + params.b * params.b / (params.d * params.d) * ratio);
    let m = (params.b / params.d * ratio).powi(2);
    Ok((k, m))
}

/// Walks the equilibrium variance `κ` from `start` to `end` on panels of
/// width at most `h`, calling `visit(z, κ_z)` at every node.
///
/// The trapezoid of `∫ e^{r(s−z)} g(z) dz` is accumulated recursively:
/// `κ_{j+1} = e^{rw} κ_j + (w/2)(e^{rw} g_j + g_{j+1})`.
fn walk_variance(
    params: &GameParams,
    start: f64,
    end: f64,
    h: f64,
    mut visit: impl FnMut(f64, f64),
) -> Result<f64> {
    let (k, m) = ee_constants(params)?;
    let rate = 2.0 * k + m;
    let eta = Riccati::ee(params);
    let temp = params.lambda_se + params.lambda_ce;
    let source = |z: f64| temp / eta.value(z);

    let mut kappa = params.xi_variance();
    visit(start, kappa);
    if end <= start {
        return Ok(kappa);
    }
    let panels = panel_count(start, end, h);
    let w = (end - start) / panels as f64;
    let growth = (rate * w).exp();
    let mut z = start;
    let mut g = source(z);
    for j in 1..=panels {
        let z_next = if j == panels {
            end
        } else {
            start + w * j as f64
        };
        let g_next = source(z_next);
        kappa = growth * kappa + 0.5 * w * (growth * g + g_next);
        visit(z_next, kappa);
        z = z_next;
        g = g_next;
    }
    debug_assert!((z - end).abs() < 1e-12);
    Ok(kappa)
}

/// `Var[X*_s]` (`κ^EE_s`) for the equilibrium started at time `t` from `ξ`.
pub fn state_variance_ee(params: &GameParams, s: f64, t: f64, grid: &TimeGrid) -> Result<f64> {
    params.require_exploration()?;
    grid.check_matches(params)?;
    params.check_time("t", t)?;
    if !(s.is_finite() && s >= t && s <= params.horizon) {
        return Err(Error::domain(
            "s",
            format!("s = {s} not in [{t}, {}]", params.horizon),
        ));
    }
    walk_variance(params, t, s, grid.quad_step(), |_, _| {})
}

/// `γ^EE_t`: the entropy part with total temperature `λ_SE + λ_CE`, plus
/// `(B²/2D²)(λ_CE (λ_SE+λ_CE)/λ_SE²) ∫_t^T η_z κ_z dz`.
pub fn gamma_ee(params: &GameParams, t: f64, grid: &TimeGrid) -> Result<f64> {
    params.require_exploration()?;
    params.check_time("t", t)?;
    grid.check_matches(params)?;
    let eta = Riccati::ee(params);
    let temp = params.lambda_se + params.lambda_ce;
    let mut value = gamma_entropy_part(params, &eta, temp, t, grid);
    if params.lambda_ce > 0.0 {
        let coeff = params.b * params.b / (2.0 * params.d * params.d) * params.lambda_ce * temp
            / (params.lambda_se * params.lambda_se);
        let mut nodes = Vec::new();
        walk_variance(params, t, params.horizon, grid.quad_step(), |z, kappa| {
            nodes.push(eta.value(z) * kappa)
        })?;
        let panels = nodes.len() - 1;
        if panels > 0 {
            let w = (params.horizon - t) / panels as f64;
            let inner: f64 =
                nodes[1..panels].iter().sum::<f64>() + 0.5 * (nodes[0] + nodes[panels]);
            value += coeff * inner * w;
        }
    }
    Ok(value)
}

/// NE policy of the Shannon game: `Normal((B/D²)(m* − x), λ_SE/(D² η^SE_s))`.
pub fn ne_policy_se(params: &GameParams) -> Result<GaussianFeedbackPolicy> {
    params.require_exploration()?;
    let d2 = params.d * params.d;
    Ok(GaussianFeedbackPolicy {
        mean_coeff: params.b / d2,
        variance: VarianceSchedule::InverseRiccati {
            scale: params.lambda_se / d2,
            eta: Riccati::se(params),
        },
        reference_mean: params.xi_mean,
    })
}

/// NE policy of the enhanced-entropy game:
/// `Normal(((λ_SE+λ_CE)/λ_SE)(B/D²)(m* − x), (λ_SE+λ_CE)/(D² η^EE_s))`.
pub fn ne_policy_ee(params: &GameParams) -> Result<GaussianFeedbackPolicy> {
    params.require_exploration()?;
    let d2 = params.d * params.d;
    Ok(GaussianFeedbackPolicy {
        mean_coeff: params.temperature_ratio() * params.b / d2,
        variance: VarianceSchedule::InverseRiccati {
            scale: (params.lambda_se + params.lambda_ce) / d2,
            eta: Riccati::ee(params),
        },
        reference_mean: params.xi_mean,
    })
}

pub fn ne_policy(params: &GameParams, variant: Variant) -> Result<GaussianFeedbackPolicy> {
    match variant {
        Variant::Se => ne_policy_se(params),
        Variant::Ee => ne_policy_ee(params),
    }
}

/// `V*(t) = E[Ṽ(t, ξ)] = −(η_t/2) Var[ξ] + γ_t`.
pub fn game_value(params: &GameParams, variant: Variant, t: f64, grid: &TimeGrid) -> Result<f64> {
    let (eta, gamma) = match variant {
        Variant::Se => (eta_se(params, t)?, gamma_se(params, t, grid)?),
        Variant::Ee => (eta_ee(params, t)?, gamma_ee(params, t, grid)?),
    };
    Ok(-0.5 * eta * params.xi_variance() + gamma)
}

/// Everything the closed form says about one variant, sampled on a grid.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub variant: Variant,
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub policy: GaussianFeedbackPolicy,
    /// Policy variance at each grid time.
    pub policy_variance: Vec<f64>,
    /// `V*(0)`.
    pub game_value: f64,
    /// Equilibrium mean, equal to `E[ξ]` at every time.
    pub m_star: f64,
    /// `Var[X*_s]` at each grid time, started from `ξ` at `t = 0`.
    pub variance_path: Vec<f64>,
}

pub fn solve(
    params: &GameParams,
    variant: Variant,
    grid: &TimeGrid,
) -> Result<EquilibriumSolution> {
    params.require_exploration()?;
    grid.check_matches(params)?;
    let times: Vec<f64> = grid.times().collect();
    let eta_fn = Riccati::for_variant(params, variant);
    let eta = times.iter().map(|&t| eta_fn.value(t)).collect();
    let gamma = times
        .iter()
        .map(|&t| match variant {
            Variant::Se => gamma_se(params, t, grid),
            Variant::Ee => gamma_ee(params, t, grid),
        })
        .collect::<Result<Vec<_>>>()?;
    let policy = ne_policy(params, variant)?;
    let policy_variance = times.iter().map(|&t| policy.variance.at(t)).collect();

    // The Shannon game is the enhanced one with λ_CE = 0.
    let variance_params = match variant {
        Variant::Se => GameParams {
            lambda_ce: 0.0,
            ..*params
        },
        Variant::Ee => *params,
    };
    let variance_path = times
        .iter()
        .map(|&s| state_variance_ee(&variance_params, s, 0.0, grid))
        .collect::<Result<Vec<_>>>()?;

    Ok(EquilibriumSolution {
        variant,
        game_value: game_value(params, variant, 0.0, grid)?,
        times,
        eta,
        gamma,
        policy,
        policy_variance,
        m_star: params.xi_mean,
        variance_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GameParams {
        GameParams {
            a: 2.0,
            b: 3.0,
            d: 2.0,
            q: 3.0,
            q_bar: 2.0,
            lambda_se: 1.0,
            lambda_ce: 0.0,
            horizon: 0.1,
            xi_mean: 0.1,
            xi_second_moment: 1.0,
        }
    }

    fn grid(p: &GameParams) -> TimeGrid {
        TimeGrid::new(p.horizon, 5).unwrap()
    }

    /// Backward Euler-free oracle: RK4 on `η̇ = rate η − Q` from `η_T = Q̄`.
    fn eta_by_ode(p: &GameParams, rate: f64, t: f64, h: f64) -> f64 {
        let f = |eta: f64| rate * eta - p.q;
        let steps = ((p.horizon - t) / h).round() as usize;
        let h = (p.horizon - t) / steps as f64;
        let mut eta = p.q_bar;
        for _ in 0..steps {
            // integrate backwards: dη/d(−s) = −f
            let k1 = -f(eta);
            let k2 = -f(eta + 0.5 * h * k1);
            let k3 = -f(eta + 0.5 * h * k2);
            let k4 = -f(eta + h * k3);
            eta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        eta
    }

    #[test]
    fn eta_terminal_and_initial_values() {
        let p = small();
        assert_eq!(eta_se(&p, 0.1).unwrap(), 2.0);
        let e0 = eta_se(&p, 0.0).unwrap();
        let closed = 2.0 * (-0.625f64).exp() + 0.48 * (1.0 - (-0.625f64).exp());
        assert!((e0 - closed).abs() < 1e-14);
        assert!((e0 - 1.2935974).abs() < 1e-7, "{e0}");
        let oracle = eta_by_ode(&p, 6.25, 0.0, 1e-6);
        assert!((e0 - oracle).abs() < 1e-9);
    }

    #[test]
    fn eta_fixed_point_is_constant() {
        let mut p = small();
        p.q = p.q_bar * 6.25;
        for t in [0.0, 0.03, 0.1] {
            assert!((eta_se(&p, t).unwrap() - p.q_bar).abs() < 1e-13);
        }
    }

    #[test]
    fn eta_rejects_out_of_range_time() {
        let p = small();
        assert!(matches!(eta_se(&p, -0.01), Err(Error::Domain { .. })));
        assert!(matches!(eta_se(&p, 0.2), Err(Error::Domain { .. })));
        assert!(eta_ee(&p, f64::NAN).is_err());
    }

    #[test]
    fn eta_ee_matches_ode_oracle() {
        let mut p = small();
        p.lambda_ce = 1.0;
        let rate = 2.0 * 2.0 + 2.25 * 2.0;
        let oracle = eta_by_ode(&p, rate, 0.0, 1e-6);
        assert!((eta_ee(&p, 0.0).unwrap() - oracle).abs() < 1e-6);
        assert_eq!(eta_ee(&p, 0.1).unwrap(), 2.0);
    }

    #[test]
    fn eta_long_horizon_limit() {
        let mut p = small();
        p.horizon = 10.0;
        let v = eta_se(&p, 0.0).unwrap();
        assert!((v - 0.48).abs() < 1e-6, "{v}");
    }

    #[test]
    fn gamma_vanishes_at_horizon() {
        let p = small();
        let g = grid(&p);
        assert_eq!(gamma_se(&p, 0.1, &g).unwrap(), 0.0);
        assert_eq!(gamma_ee(&p, 0.1, &g).unwrap(), 0.0);
    }

    #[test]
    fn gamma_se_matches_fine_quadrature() {
        let p = small();
        let g = grid(&p);
        let eta = Riccati::se(&p);
        // 1e-7 step oracle
        let n = 1_000_000;
        let h = 0.1 / n as f64;
        let mut integral = 0.5 * (eta.value(0.0).ln() + eta.value(0.1).ln());
        for j in 1..n {
            integral += eta.value(h * j as f64).ln();
        }
        integral *= h;
        let oracle = 0.5 * (2.0 * PI / 4.0).ln() * 0.1 - 0.5 * integral;
        assert!((gamma_se(&p, 0.0, &g).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn gamma_null_case() {
        // 2πλ/D² = 1 and η ≡ 1
        let mut p = small();
        p.q_bar = 1.0;
        p.q = 6.25;
        p.lambda_se = 4.0 / (2.0 * PI);
        let g = grid(&p);
        assert!(gamma_se(&p, 0.0, &g).unwrap().abs() < 1e-14);
    }

    #[test]
    fn se_policy_coefficients() {
        let p = small();
        let pol = ne_policy_se(&p).unwrap();
        assert_eq!(pol.mean_coeff, 0.75);
        assert!((pol.variance.at(0.1) - 0.125).abs() < 1e-15);
        assert_eq!(pol.reference_mean, 0.1);
        // Q/(2A+B²/D²) = 0.48 < Q̄ so η increases and the variance decreases
        let g = grid(&p);
        let v: Vec<f64> = g.times().map(|t| pol.variance.at(t)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }

    #[test]
    fn ee_constants_arithmetic() {
        let p = small();
        let (k, m) = ee_constants(&p).unwrap();
        assert!((k + 4.25).abs() < 1e-14);
        assert!((m - 2.25).abs() < 1e-14);
    }

    #[test]
    fn ee_policy_gain_doubles_with_equal_temperatures() {
        let mut p = small();
        p.lambda_ce = 1.0;
        assert!((ne_policy_ee(&p).unwrap().mean_coeff - 1.5).abs() < 1e-15);
    }

    #[test]
    fn ee_policy_variance_increases_with_cross_temperature() {
        let mut prev = 0.0;
        for ce in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let mut p = small();
            p.lambda_ce = ce;
            let v = ne_policy_ee(&p).unwrap().variance.at(0.05);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn ee_reduces_to_se() {
        let p = small();
        let g = grid(&p);
        for t in [0.0, 0.013, 0.05, 0.1] {
            assert!((eta_ee(&p, t).unwrap() - eta_se(&p, t).unwrap()).abs() <= 1e-12);
            assert!((gamma_ee(&p, t, &g).unwrap() - gamma_se(&p, t, &g).unwrap()).abs() <= 1e-9);
        }
        assert_eq!(ne_policy_se(&p).unwrap(), ne_policy_ee(&p).unwrap());
        let v_se = game_value(&p, Variant::Se, 0.0, &g).unwrap();
        let v_ee = game_value(&p, Variant::Ee, 0.0, &g).unwrap();
        assert!((v_se - v_ee).abs() < 1e-12);
    }

    #[test]
    fn state_variance_edges() {
        let p = small();
        let g = grid(&p);
        assert_eq!(
            state_variance_ee(&p, 0.04, 0.04, &g).unwrap(),
            p.xi_variance()
        );
        let mut det = p;
        det.xi_second_moment = det.xi_mean * det.xi_mean;
        assert!(state_variance_ee(&det, 0.05, 0.0, &g).unwrap() > 0.0);
        assert!(state_variance_ee(&p, 0.01, 0.02, &g).is_err());
    }

    #[test]
    fn state_variance_matches_rk4_of_its_ode() {
        let mut p = small();
        p.lambda_ce = 1.0;
        let g = grid(&p);
        let (k, m) = ee_constants(&p).unwrap();
        let eta = Riccati::ee(&p);
        let f = |s: f64, v: f64| (2.0 * k + m) * v + 2.0 / eta.value(s);
        let n = 10_000;
        let h = 0.1 / n as f64;
        let mut v = p.xi_variance();
        for j in 0..n {
            let s = h * j as f64;
            let k1 = f(s, v);
            let k2 = f(s + 0.5 * h, v + 0.5 * h * k1);
            let k3 = f(s + 0.5 * h, v + 0.5 * h * k2);
            let k4 = f(s + h, v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((state_variance_ee(&p, 0.1, 0.0, &g).unwrap() - v).abs() < 1e-8);
    }

    #[test]
    fn game_value_edges() {
        let mut p = small();
        p.xi_second_moment = p.xi_mean * p.xi_mean;
        let g = grid(&p);
        assert!(game_value(&p, Variant::Se, 0.1, &g).unwrap().abs() < 1e-15);
        let p = small();
        let v = game_value(&p, Variant::Se, 0.0, &g).unwrap();
        let expect = -0.5 * eta_se(&p, 0.0).unwrap() * 0.99 + gamma_se(&p, 0.0, &g).unwrap();
        assert_eq!(v, expect);
    }

    #[test]
    fn solve_collects_consistent_paths() {
        let p = small();
        let g = grid(&p);
        let sol = solve(&p, Variant::Se, &g).unwrap();
        assert_eq!(sol.eta.len(), 6);
        assert_eq!(*sol.eta.last().unwrap(), 2.0);
        assert_eq!(*sol.gamma.last().unwrap(), 0.0);
        assert_eq!(sol.m_star, 0.1);
        assert_eq!(sol.variance_path[0], 0.99);
        assert!(sol.policy_variance.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn piecewise_schedule_indexing() {
        let s = VarianceSchedule::Piecewise {
            dt: 0.02,
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
        };
        assert_eq!(s.at(0.0), 1.0);
        assert_eq!(s.at(0.02), 2.0);
        assert_eq!(s.at(0.06), 4.0);
        assert_eq!(s.at(0.0999), 5.0);
        assert_eq!(s.at(0.1), 5.0);
    }
}
