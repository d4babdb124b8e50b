use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the linear-quadratic game together with the entropy
/// temperatures and the first two moments of the initial state.
///
/// State dynamics under a randomized policy `π_s`:
///
/// ```text
/// dX = ∫ (A (m_s − X) + B u) π_s(u) du ds + D sqrt(∫ u² π_s(u) du) dW
/// ```
///
/// with running reward `−(Q/2)(X − m_s)²` and terminal reward `−(Q̄/2)(X_T − m_T)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    /// Mean-reversion strength toward the population mean.
    #[serde(rename = "A")]
    pub a: f64,
    /// Control gain in the drift.
    #[serde(rename = "B")]
    pub b: f64,
    /// Noise gain applied to the action second moment.
    #[serde(rename = "D")]
    pub d: f64,
    /// Running penalty weight.
    #[serde(rename = "Q")]
    pub q: f64,
    /// Terminal penalty weight.
    #[serde(rename = "Q_bar")]
    pub q_bar: f64,
    /// Shannon entropy temperature.
    #[serde(default)]
    pub lambda_se: f64,
    /// Cross-entropy temperature.
    #[serde(default)]
    pub lambda_ce: f64,
    /// Horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// `E[ξ]`.
    pub xi_mean: f64,
    /// `E[ξ²]`.
    pub xi_second_moment: f64,
}

impl GameParams {
    /// The experiment model: `T = 0.1, A = 2, B = 3, D = 2, Q = 3, Q̄ = 2,
    /// E[ξ] = 0.1, E[ξ²] = 1`, with the given Shannon temperature and no
    /// cross-entropy.
    pub fn reference(lambda_se: f64) -> Self {
        GameParams {
            a: 2.0,
            b: 3.0,
            d: 2.0,
            q: 3.0,
            q_bar: 2.0,
            lambda_se,
            lambda_ce: 0.0,
            horizon: 0.1,
            xi_mean: 0.1,
            xi_second_moment: 1.0,
        }
    }

    /// Checks the structural invariants. `lambda_se = 0` passes here: the
    /// learner accepts it as "no entropy bonus"; equilibrium formulas call
    /// [`GameParams::require_exploration`] on top of this.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("A", self.a),
            ("B", self.b),
            ("D", self.d),
            ("Q", self.q),
            ("Q_bar", self.q_bar),
            ("T", self.horizon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        for (name, v) in [("lambda_se", self.lambda_se), ("lambda_ce", self.lambda_ce)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !self.xi_mean.is_finite() || !self.xi_second_moment.is_finite() {
            return Err(Error::config("xi_mean", "initial moments must be finite"));
        }
        let var = self.xi_second_moment - self.xi_mean * self.xi_mean;
        if var < -1e-12 * self.xi_second_moment.abs().max(1.0) {
            return Err(Error::config(
                "xi_second_moment",
                format!(
                    "E[ξ²] = {} is below E[ξ]² = {}",
                    self.xi_second_moment,
                    self.xi_mean * self.xi_mean
                ),
            ));
        }
        Ok(())
    }

    /// Equilibrium policies have variance `∝ λ_SE`, so they need `λ_SE > 0`.
    pub fn require_exploration(&self) -> Result<()> {
        self.validate()?;
        if self.lambda_se <= 0.0 {
            return Err(Error::domain(
                "lambda_se",
                "equilibrium policies are undefined without Shannon exploration (lambda_se must be > 0)",
            ));
        }
        Ok(())
    }

    /// `Var[ξ]`, clamped at zero against rounding.
    pub fn xi_variance(&self) -> f64 {
        (self.xi_second_moment - self.xi_mean * self.xi_mean).max(0.0)
    }

    /// `(λ_SE + λ_CE) / λ_SE`, the factor by which cross-entropy amplifies
    /// the equilibrium feedback.
    pub fn temperature_ratio(&self) -> f64 {
        (self.lambda_se + self.lambda_ce) / self.lambda_se
    }

    pub(crate) fn check_time(&self, what: &'static str, t: f64) -> Result<()> {
        if !(t.is_finite() && (0.0..=self.horizon).contains(&t)) {
            return Err(Error::domain(
                what,
                format!("t = {t} not in [0, {}]", self.horizon),
            ));
        }
        Ok(())
    }
}

/// Uniform time grid `t_s = s·δ`, `s = 0..=N`, `δ = T/N`.
///
/// `refinement` is the number of quadrature panels per simulation step used
/// by every time integral in [`crate::analytic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    refinement: usize,
}

pub const DEFAULT_REFINEMENT: usize = 100;

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::with_refinement(horizon, n_steps, DEFAULT_REFINEMENT)
    }

    pub fn with_refinement(horizon: f64, n_steps: usize, refinement: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config(
                "T",
                format!("horizon must be > 0, got {horizon}"),
            ));
        }
        if n_steps == 0 {
            return Err(Error::config("n_steps", "need at least one step"));
        }
        if refinement == 0 {
            return Err(Error::config(
                "refinement",
                "need at least one panel per step",
            ));
        }
        Ok(TimeGrid {
            horizon,
            n_steps,
            refinement,
        })
    }

    /// Grid with step as close as possible to `dt`; fails unless `T/dt` is an
    /// integer to within 1e-9.
    pub fn from_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", format!("step must be > 0, got {dt}")));
        }
        let ratio = horizon / dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(
                "dt",
                format!("T/dt = {ratio} is not a whole number of steps"),
            ));
        }
        Self::new(horizon, n as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// `t_s`; exact at both ends (`t_0 = 0`, `t_N = T`).
    pub fn time(&self, s: usize) -> f64 {
        if s >= self.n_steps {
            self.horizon
        } else {
            self.horizon * s as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|s| self.time(s))
    }

    /// Quadrature panel width.
    pub fn quad_step(&self) -> f64 {
        self.dt() / self.refinement as f64
    }

    /// Same grid with a different quadrature refinement.
    pub fn refined(&self, refinement: usize) -> Result<Self> {
        Self::with_refinement(self.horizon, self.n_steps, refinement)
    }

    pub(crate) fn check_matches(&self, params: &GameParams) -> Result<()> {
        if (self.horizon - params.horizon).abs() > 1e-12 * params.horizon {
            return Err(Error::Contract(format!(
                "grid horizon {} differs from game horizon {}",
                self.horizon, params.horizon
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let g = TimeGrid::from_step(0.1, 0.02).unwrap();
        assert_eq!(g.n_steps(), 5);
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(5), 0.1);
        assert!((g.dt() * 5.0 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn non_integer_step_count_is_rejected() {
        assert!(TimeGrid::from_step(0.1, 0.03).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut p = GameParams::reference(1.0);
        p.a = 0.0;
        match p.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "A"),
            other => panic!("unexpected {other:?}"),
        }
        let mut p = GameParams::reference(1.0);
        p.xi_second_moment = 0.001;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_shannon_temperature_is_valid_but_not_for_equilibria() {
        let p = GameParams::reference(0.0);
        assert!(p.validate().is_ok());
        assert!(p.require_exploration().is_err());
    }

    #[test]
    fn reference_model_variance() {
        assert!((GameParams::reference(1.0).xi_variance() - 0.99).abs() < 1e-15);
    }
}
