//! The symmetric Gaussian bifurcating autoregressive (BAR) model.
//!
//! Both children of a node with trait `x` are `a·x + ε` with independent
//! `ε ~ N(0, σ²)`, so the joint kernel factorises as `P(x,dy,dz) = Q(x,dy)Q(x,dz)`
//! with `Q(x,·) = N(ax, σ²)`. The invariant law of `Q` is `N(0, σ_a²)` where
//! `σ_a² = σ²/(1-a²)`, and `Qⁿf(x) = E[f(aⁿx + √(1-a²ⁿ)·σ_a·G)]`.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::tree_sim::{InitialSampler, NodeRng, TransitionKernel};

/// Relative tolerance for the boundary cases `2α² = 1` and `ρ₀ = σ_a`.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarModel {
    a: f64,
    sigma: f64,
}

impl BarModel {
    pub fn new(a: f64, sigma: f64) -> Result<Self> {
        if !a.is_finite() || a.abs() >= 1.0 {
            return Err(Error::InvalidModel(format!("need |a| < 1, got a = {a}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "need sigma > 0, got sigma = {sigma}"
            )));
        }
        Ok(BarModel { a, sigma })
    }

    /// Noise-free model (`σ = 0`). Only the transition is meaningful; the
    /// invariant law degenerates to a point mass at 0.
    pub fn noiseless(a: f64) -> Result<Self> {
        if !a.is_finite() || a.abs() >= 1.0 {
            return Err(Error::InvalidModel(format!("need |a| < 1, got a = {a}")));
        }
        Ok(BarModel { a, sigma: 0.0 })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Standard deviation of the invariant law, `σ(1-a²)^{-1/2}`.
    pub fn sigma_a(&self) -> f64 {
        self.sigma / (1.0 - self.a * self.a).sqrt()
    }

    /// Geometric ergodic rate of `Q`, equal to `|a|`.
    pub fn alpha(&self) -> f64 {
        self.a.abs()
    }

    pub fn regime(&self) -> AlphaRegime {
        AlphaRegime::classify(self.alpha())
    }

    /// Draws both children of a node with trait `x`.
    #[inline]
    pub fn bar_transition(&self, x: f64, rng: &mut NodeRng) -> (f64, f64) {
        let mean = self.a * x;
        let e0: f64 = StandardNormal.sample(rng);
        let e1: f64 = StandardNormal.sample(rng);
        (mean + self.sigma * e0, mean + self.sigma * e1)
    }

    /// Density of the invariant law `N(0, σ_a²)`.
    pub fn invariant_density(&self, x: f64) -> f64 {
        let one_minus = 1.0 - self.a * self.a;
        let var = self.sigma * self.sigma;
        one_minus.sqrt() / (2.0 * PI * var).sqrt() * (-one_minus * x * x / (2.0 * var)).exp()
    }

    /// Density of `Q(x, ·)` with respect to Lebesgue measure, i.e. `N(ax, σ²)` at `y`.
    pub fn q_lebesgue_density(&self, x: f64, y: f64) -> f64 {
        let var = self.sigma * self.sigma;
        let d = y - self.a * x;
        (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    /// Density `q(x, y)` of `Q(x, ·)` with respect to the invariant law.
    pub fn q_mu_density(&self, x: f64, y: f64) -> f64 {
        let a = self.a;
        let var = self.sigma * self.sigma;
        (-(a * a * y * y + a * a * x * x - 2.0 * a * x * y) / (2.0 * var)).exp()
            / (1.0 - a * a).sqrt()
    }

    /// `Qⁿf(x)` by Gauss–Hermite quadrature.
    pub fn q_power_apply(
        &self,
        f: impl Fn(f64) -> f64,
        n: u32,
        x: f64,
        quad: &QuadratureRule,
    ) -> Result<f64> {
        if n == 0 {
            return Ok(f(x));
        }
        let a_n = self.a.powi(n as i32);
        let sd = (1.0 - a_n * a_n).sqrt() * self.sigma_a();
        let value = quad.expect_normal(a_n * x, sd, f);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::IntegrandGrowth(format!("Q^{n} f({x}) = {value}")))
        }
    }

    /// `𝔥(x) = ‖q(x, ·)‖_{L²(μ)}` in closed form.
    pub fn h_function(&self, x: f64) -> f64 {
        let a2 = self.a * self.a;
        let var = self.sigma * self.sigma;
        (1.0 - a2 * a2).powf(-0.25) * (a2 * (1.0 - a2) / (1.0 + a2) * x * x / (2.0 * var)).exp()
    }

    /// Sampler for the stationary root law `N(0, σ_a²)`.
    pub fn stationary(&self) -> GaussianInitial {
        GaussianInitial {
            m0: 0.0,
            rho0: self.sigma_a(),
        }
    }

    fn validate(&self) -> Result<()> {
        BarModel::new(self.a, self.sigma).map(|_| ())
    }
}

impl TransitionKernel for BarModel {
    #[inline]
    fn branch(&self, parent: f64, rng: &mut NodeRng) -> (f64, f64) {
        self.bar_transition(parent, rng)
    }

    fn descriptor(&self) -> String {
        format!("symmetric-bar(a={}, sigma={})", self.a, self.sigma)
    }
}

/// Gaussian root law `N(m0, rho0²)`; `rho0 = 0` is a point mass at `m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianInitial {
    pub m0: f64,
    pub rho0: f64,
}

impl GaussianInitial {
    pub fn new(m0: f64, rho0: f64) -> Result<Self> {
        if !m0.is_finite() || !rho0.is_finite() || rho0 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "initial law needs finite m0 and rho0 >= 0, got ({m0}, {rho0})"
            )));
        }
        Ok(GaussianInitial { m0, rho0 })
    }
}

impl InitialSampler for GaussianInitial {
    fn sample(&self, rng: &mut NodeRng) -> f64 {
        if self.rho0 == 0.0 {
            return self.m0;
        }
        let g: f64 = StandardNormal.sample(rng);
        self.m0 + self.rho0 * g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRegime {
    SubCritical,
    Critical,
    SuperCritical,
}

impl AlphaRegime {
    /// Compares `2α²` with 1.
    pub fn classify(alpha: f64) -> Self {
        let two_alpha_sq = 2.0 * alpha * alpha;
        if (two_alpha_sq - 1.0).abs() <= BOUNDARY_TOL {
            AlphaRegime::Critical
        } else if two_alpha_sq < 1.0 {
            AlphaRegime::SubCritical
        } else {
            AlphaRegime::SuperCritical
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarAssumptionReport {
    /// Smallest `k ≥ 1` with `a^{2k} < 1/5`.
    pub k1_min: Option<u32>,
    pub initial_ok: bool,
    #[serde(rename = "C0")]
    pub c0: f64,
    /// Upper bound `C0²` for `C1`.
    #[serde(rename = "C1_bound")]
    pub c1_bound: f64,
    /// Upper bound `4 C0² ⟨μ, 𝔥²⟩` for `C2`.
    #[serde(rename = "C2_bound")]
    pub c2_bound: f64,
    pub h_sq_mu_norm: f64,
    pub alpha_regime: AlphaRegime,
}

pub fn check_assumptions(
    model: &BarModel,
    initial: &GaussianInitial,
    quad: &QuadratureRule,
) -> Result<BarAssumptionReport> {
    model.validate()?;
    let a2 = model.a * model.a;

    let k1_min = (1..=u32::MAX).find(|&k| a2.powi(k as i32) < 0.2);

    let sigma_a = model.sigma_a();
    let initial_ok = initial.rho0 < sigma_a
        || ((initial.rho0 - sigma_a).abs() <= BOUNDARY_TOL * sigma_a && initial.m0 == 0.0);

    let c0 = (1.0 + (1.0 - a2).sqrt()) / (2.0 * PI * model.sigma * model.sigma).sqrt();
    let h_sq_mu_norm = h_sq_mu_norm(model, quad)?;

    Ok(BarAssumptionReport {
        k1_min,
        initial_ok,
        c0,
        c1_bound: c0 * c0,
        c2_bound: 4.0 * c0 * c0 * h_sq_mu_norm,
        h_sq_mu_norm,
        alpha_regime: model.regime(),
    })
}

/// `⟨μ, 𝔥²⟩`, integrated against the Gaussian that carries the combined exponent.
fn h_sq_mu_norm(model: &BarModel, quad: &QuadratureRule) -> Result<f64> {
    let a2 = model.a * model.a;
    // μ(x)𝔥(x)² ∝ exp(-κ x² / 2σ²)
    let kappa = (1.0 - a2) - 2.0 * a2 * (1.0 - a2) / (1.0 + a2);
    if kappa <= 0.0 {
        return Err(Error::IntegrandGrowth(format!(
            "<mu, h^2> diverges: combined exponent {kappa} is not negative"
        )));
    }
    let sd = model.sigma / kappa.sqrt();
    // log-space ratio: for |a| near 1 the nodes reach where 𝔥² overflows and μ underflows
    let log_ratio = |x: f64| {
        let log_mu = model.invariant_density(0.0).ln()
            - (1.0 - a2) * x * x / (2.0 * model.sigma * model.sigma);
        let log_h = model.h_function(0.0).ln()
            + a2 * (1.0 - a2) / (1.0 + a2) * x * x / (2.0 * model.sigma * model.sigma);
        let log_carrier = -x * x / (2.0 * sd * sd) - (2.0 * PI * sd * sd).sqrt().ln();
        log_mu + 2.0 * log_h - log_carrier
    };
    let value = quad.expect_normal(0.0, sd, |x| log_ratio(x).exp());
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::IntegrandGrowth("<mu, h^2>".into()))
    }
}
