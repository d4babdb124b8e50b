//! Expected payoff of an arbitrary Gaussian feedback policy against a given
//! mean-field path.
//!
//! Under `u | x ~ Normal(M̂ (m_s − x), σ̂²_s)` the state solves
//!
//! ```text
//! dX = (A + B M̂)(m_s − X) ds + D sqrt(M̂² (X − m_s)² + σ̂²_s) dW
//! ```
//!
//! so its first two moments `m̂_s = E[X_s]`, `P_s = E[X_s²]` solve the linear system
//!
//! ```text
//! m̂' = a (m_s − m̂)
//! P'  = 2a (m_s m̂ − P) + D² (M̂² (P − 2 m_s m̂ + m_s²) + σ̂²_s),   a = A + B M̂
//! ```
//!
//! and the payoff is assembled from `E[(X_s − m_s)²] = P − 2 m_s m̂ + m_s²`.
//! The mean field is interpolated linearly between grid nodes.

use std::f64::consts::{E, PI};

use super::{panel_count, GameParams, GaussianFeedbackPolicy, TimeGrid};
use crate::error::{Error, Result};
use crate::simulate::MeanField;

/// Time-integrated payoff contributions evaluated on quadrature nodes.
struct Nodes {
    z: Vec<f64>,
    m: Vec<f64>,
}

fn nodes(grid: &TimeGrid, mean_field: &MeanField) -> Nodes {
    let h = grid.quad_step();
    let panels = panel_count(0.0, grid.horizon(), h);
    let w = grid.horizon() / panels as f64;
    let z: Vec<f64> = (0..=panels)
        .map(|j| {
            if j == panels {
                grid.horizon()
            } else {
                w * j as f64
            }
        })
        .collect();
    let m = z.iter().map(|&t| mean_field.interpolate(grid, t)).collect();
    Nodes { z, m }
}

fn check_inputs(
    params: &GameParams,
    policy: &GaussianFeedbackPolicy,
    mean_field: &MeanField,
    grid: &TimeGrid,
) -> Result<()> {
    params.validate()?;
    grid.check_matches(params)?;
    mean_field.check_grid(grid)?;
    for s in 0..grid.n_steps() {
        let (t0, t1) = (grid.time(s), grid.time(s + 1));
        let mid = 0.5 * (t0 + t1);
        for t in [t0, mid, t1] {
            let v = policy.variance.within_panel(t, mid);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(
                    "policy variance",
                    format!("σ̂²({t}) = {v}; entropy needs a strictly positive variance"),
                ));
            }
        }
    }
    Ok(())
}

/// `J_SE(0, π̂ | μ)` by integrating the moment equations with classical RK4
/// on the refined grid. Running integrals use the trapezoid rule on the same
/// nodes.
pub fn policy_payoff(
    params: &GameParams,
    policy: &GaussianFeedbackPolicy,
    mean_field: &MeanField,
    grid: &TimeGrid,
) -> Result<f64> {
    check_inputs(params, policy, mean_field, grid)?;
    let Nodes { z, m } = nodes(grid, mean_field);
    let gain = policy.mean_coeff;
    let a = params.a + params.b * gain;
    let d2 = params.d * params.d;
    let m_at = |t: f64| mean_field.interpolate(grid, t);

    let rhs = |t: f64, mid: f64, mu: f64, p: f64| -> (f64, f64) {
        let mt = m_at(t);
        let dev2 = p - 2.0 * mt * mu + mt * mt;
        let s2 = policy.variance.within_panel(t, mid);
        (
            a * (mt - mu),
            2.0 * a * (mt * mu - p) + d2 * (gain * gain * dev2 + s2),
        )
    };

    let mut mu = params.xi_mean;
    let mut p = params.xi_second_moment;
    let mut running = 0.0;
    let mut entropy = 0.0;
    let deviation = |mu: f64, p: f64, mt: f64| p - 2.0 * mt * mu + mt * mt;
    let mut dev_prev = deviation(mu, p, m[0]);

    for j in 0..z.len() - 1 {
        let (t0, t1) = (z[j], z[j + 1]);
        let h = t1 - t0;
        let mid = 0.5 * (t0 + t1);
        let (k1m, k1p) = rhs(t0, mid, mu, p);
        let (k2m, k2p) = rhs(mid, mid, mu + 0.5 * h * k1m, p + 0.5 * h * k1p);
        let (k3m, k3p) = rhs(mid, mid, mu + 0.5 * h * k2m, p + 0.5 * h * k2p);
        let (k4m, k4p) = rhs(t1, mid, mu + h * k3m, p + h * k3p);
        mu += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);

        let dev_next = deviation(mu, p, m[j + 1]);
        running += 0.5 * h * (dev_prev + dev_next);
        dev_prev = dev_next;

        let s0 = policy.variance.within_panel(t0, mid);
        let s1 = policy.variance.within_panel(t1, mid);
        entropy += 0.5 * h * ((2.0 * PI * E * s0).ln() + (2.0 * PI * E * s1).ln());
    }

    Ok(
        -0.5 * params.q * running + 0.5 * params.lambda_se * entropy
            - 0.5 * params.q_bar * dev_prev,
    )
}

/// Variants of the closed-form moment expressions, for comparison with
/// [`policy_payoff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedForm {
    /// `m̂_s = e^{K̂s}E[ξ] + ∫ e^{K̂(s−z)} K̂ m_z dz`, cross term of `d(s)` without a factor 2.
    PlusIntegral,
    /// `m̂_s = e^{K̂s}E[ξ] − ∫ e^{K̂(s−z)} K̂ m_z dz`, same `d(s)`.
    MinusIntegral,
    /// The minus-integral `m̂_s` with the factor 2 that differentiating `(∫ g)²` produces.
    Corrected,
}

/// Payoff from closed-form moments (`K̂ = −(A + B M̂)`):
///
/// ```text
/// φ²_s = e^{(2K̂ + D²M̂²)s} (E[ξ²] + ∫_0^s e^{−D²M̂² z} d(z) dz)
/// d(s) = −2E[ξ] e^{−K̂s} K̂ m_s + c·G(s) e^{−K̂s} K̂ m_s
///        + e^{−2K̂s} D² (M̂² m_s² − 2M̂² m_s m̂_s + σ̂²_s),   G(s) = ∫_0^s e^{−K̂z} K̂ m_z dz
/// ```
///
/// with `c = 1` for the uncorrected forms and `c = 2` for [`ClosedForm::Corrected`].
pub fn policy_payoff_closed_form(
    params: &GameParams,
    policy: &GaussianFeedbackPolicy,
    mean_field: &MeanField,
    grid: &TimeGrid,
    form: ClosedForm,
) -> Result<f64> {
    check_inputs(params, policy, mean_field, grid)?;
    let Nodes { z, m } = nodes(grid, mean_field);
    let gain = policy.mean_coeff;
    let k_hat = -(params.a + params.b * gain);
    let d2 = params.d * params.d;
    let diff = d2 * gain * gain;
    let (mean_sign, cross) = match form {
        ClosedForm::PlusIntegral => (1.0, 1.0),
        ClosedForm::MinusIntegral => (-1.0, 1.0),
        ClosedForm::Corrected => (-1.0, 2.0),
    };
    let n = z.len();
    let sigma = |j: usize| {
        // step schedules: average of the two one-sided limits at jumps
        let lo = if j > 0 { 0.5 * (z[j - 1] + z[j]) } else { z[0] };
        let hi = if j + 1 < n {
            0.5 * (z[j] + z[j + 1])
        } else {
            z[n - 1]
        };
        0.5 * (policy.variance.within_panel(z[j], lo) + policy.variance.within_panel(z[j], hi))
    };

    // G(s) and m̂_s
    let g_int = |j: usize| (-k_hat * z[j]).exp() * k_hat * m[j];
    let mut big_g = vec![0.0; n];
    for j in 1..n {
        big_g[j] = big_g[j - 1] + 0.5 * (z[j] - z[j - 1]) * (g_int(j - 1) + g_int(j));
    }
    let m_hat: Vec<f64> = (0..n)
        .map(|j| (k_hat * z[j]).exp() * (params.xi_mean + mean_sign * big_g[j]))
        .collect();

    let d = |j: usize| {
        let e1 = (-k_hat * z[j]).exp();
        -2.0 * params.xi_mean * e1 * k_hat * m[j]
            + cross * big_g[j] * e1 * k_hat * m[j]
            + (-2.0 * k_hat * z[j]).exp()
                * d2
                * (gain * gain * m[j] * m[j] - 2.0 * gain * gain * m[j] * m_hat[j] + sigma(j))
    };
    let weighted = |j: usize| (-diff * z[j]).exp() * d(j);
    let mut inner = 0.0;
    let mut phi2 = vec![params.xi_second_moment; n];
    for j in 1..n {
        inner += 0.5 * (z[j] - z[j - 1]) * (weighted(j - 1) + weighted(j));
        phi2[j] = ((2.0 * k_hat + diff) * z[j]).exp() * (params.xi_second_moment + inner);
    }

    let dev = |j: usize| phi2[j] - 2.0 * m[j] * m_hat[j] + m[j] * m[j];
    let mut running = 0.0;
    let mut entropy = 0.0;
    for j in 1..n {
        let h = z[j] - z[j - 1];
        let mid = 0.5 * (z[j - 1] + z[j]);
        running += 0.5 * h * (dev(j - 1) + dev(j));
        let s0 = policy.variance.within_panel(z[j - 1], mid);
        let s1 = policy.variance.within_panel(z[j], mid);
        entropy += 0.5 * h * ((2.0 * PI * E * s0).ln() + (2.0 * PI * E * s1).ln());
    }
    Ok(-0.5 * params.q * running + 0.5 * params.lambda_se * entropy
        - 0.5 * params.q_bar * dev(n - 1))
}
