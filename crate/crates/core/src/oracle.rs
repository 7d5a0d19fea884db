//! Exact first and second moments of generation sums `M_{G_n}(f)` under the
//! BAR model, started from a fixed root state `x`.
//!
//! For a general bifurcating kernel the moments involve `P(u ⊗ v)`; the BAR
//! kernel factorises, so `P(u ⊗ v) = Qu · Qv` and every term reduces to nested
//! one-dimensional Gaussian integrals:
//!
//! ```text
//! E_x[M_{G_n}(f)]            = 2ⁿ Qⁿf(x)
//! E_x[M_{G_n}(f)²]           = 2ⁿ Qⁿ(f²)(x) + Σ_{k<n} 2^{n+k} Q^{n-k-1}((Q^{k+1}f)²)(x)
//! E_x[M_{G_n}(f) M_{G_m}(g)] = 2ⁿ Q^m(g·Q^{n-m}f)(x)
//!                              + Σ_{k<m} 2^{n+k} Q^{m-k-1}(Q^{k+1}g · Q^{n-m+k+1}f)(x)
//! ```
//!
//! Each value is computed with two Gauss–Hermite rules (order and order/2);
//! their difference is reported as the quadrature error estimate.

use serde::{Deserialize, Serialize};

use crate::bar_model::BarModel;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Default cap on `n` for the nested second-moment formulas.
pub const DEFAULT_MOMENT_CAP: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOracleResult {
    pub value: f64,
    pub quadrature_error_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct MomentOracle {
    model: BarModel,
    fine: QuadratureRule,
    coarse: QuadratureRule,
    cap: u32,
}

impl MomentOracle {
    pub fn new(model: BarModel) -> Self {
        Self::with_order(model, QuadratureRule::DEFAULT_ORDER).expect("default order is positive")
    }

    pub fn with_order(model: BarModel, order: usize) -> Result<Self> {
        Ok(MomentOracle {
            model,
            fine: QuadratureRule::gauss_hermite(order)?,
            coarse: QuadratureRule::gauss_hermite((order / 2).max(1))?,
            cap: DEFAULT_MOMENT_CAP,
        })
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = cap;
        self
    }

    pub fn model(&self) -> &BarModel {
        &self.model
    }

    fn both(&self, eval: impl Fn(&QuadratureRule) -> Result<f64>) -> Result<MomentOracleResult> {
        let value = eval(&self.fine)?;
        let coarse = eval(&self.coarse)?;
        Ok(MomentOracleResult {
            value,
            quadrature_error_estimate: (value - coarse).abs(),
        })
    }

    fn check_cap(&self, n: u32) -> Result<()> {
        if n > self.cap {
            return Err(Error::MomentCap { n, cap: self.cap });
        }
        Ok(())
    }

    /// `E_x[M_{G_n}(f)]`.
    pub fn mean_mgn(&self, f: impl Fn(f64) -> f64, n: u32, x: f64) -> Result<MomentOracleResult> {
        self.both(|quad| mean_mgn(&f, n, x, &self.model, quad))
    }

    /// `E_x[M_{G_n}(f)²]`.
    pub fn second_moment_mgn(
        &self,
        f: impl Fn(f64) -> f64,
        n: u32,
        x: f64,
    ) -> Result<MomentOracleResult> {
        self.check_cap(n)?;
        self.both(|quad| second_moment_mgn(&f, n, x, &self.model, quad))
    }

    /// `E_x[M_{G_n}(f) M_{G_m}(g)]` for `n ≥ m`.
    pub fn cross_moment_mgn_mgm(
        &self,
        f: impl Fn(f64) -> f64,
        g: impl Fn(f64) -> f64,
        n: u32,
        m: u32,
        x: f64,
    ) -> Result<MomentOracleResult> {
        self.check_cap(n)?;
        self.both(|quad| cross_moment_mgn_mgm(&f, &g, n, m, x, &self.model, quad))
    }
}

fn pow2(k: u32) -> f64 {
    (k as f64).exp2()
}

// Inner integrals cannot return a Result from inside a quadrature closure;
// failures become NaN and surface through the outer finiteness check.
fn q_or_nan(
    model: &BarModel,
    f: &dyn Fn(f64) -> f64,
    n: u32,
    y: f64,
    quad: &QuadratureRule,
) -> f64 {
    model.q_power_apply(f, n, y, quad).unwrap_or(f64::NAN)
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::IntegrandGrowth(format!("{what} = {value}")))
    }
}

pub fn mean_mgn(
    f: &dyn Fn(f64) -> f64,
    n: u32,
    x: f64,
    model: &BarModel,
    quad: &QuadratureRule,
) -> Result<f64> {
    finite(pow2(n) * model.q_power_apply(f, n, x, quad)?, "E[M_Gn(f)]")
}

pub fn second_moment_mgn(
    f: &dyn Fn(f64) -> f64,
    n: u32,
    x: f64,
    model: &BarModel,
    quad: &QuadratureRule,
) -> Result<f64> {
    let mut total = pow2(n) * model.q_power_apply(|y| f(y) * f(y), n, x, quad)?;
    for k in 0..n {
        let squared_image = |y: f64| {
            let v = q_or_nan(model, f, k + 1, y, quad);
            v * v
        };
        total += pow2(n + k) * model.q_power_apply(squared_image, n - k - 1, x, quad)?;
    }
    finite(total, "E[M_Gn(f)^2]")
}

pub fn cross_moment_mgn_mgm(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    n: u32,
    m: u32,
    x: f64,
    model: &BarModel,
    quad: &QuadratureRule,
) -> Result<f64> {
    if m > n {
        return Err(Error::InvalidConfig(format!(
            "cross moment needs n >= m, got n = {n}, m = {m}"
        )));
    }
    let lead = |y: f64| g(y) * q_or_nan(model, f, n - m, y, quad);
    let mut total = pow2(n) * model.q_power_apply(lead, m, x, quad)?;
    for k in 0..m {
        let product = |y: f64| {
            q_or_nan(model, g, k + 1, y, quad) * q_or_nan(model, f, n - m + k + 1, y, quad)
        };
        total += pow2(n + k) * model.q_power_apply(product, m - k - 1, x, quad)?;
    }
    finite(total, "E[M_Gn(f) M_Gm(g)]")
}
