//! Smoothing kernels, the bandwidth schedule `h_n = 2^{-nγ}`, the Parzen
//! density estimator and its bias.
//!
//! The estimator is written in the classical form
//! `μ̂(x) = |A|⁻¹ h^{-d} Σ_u K((x - X_u)/h)`. Splitting `h^{-d}` into two
//! `h^{-d/2}` factors, one of them inside a rescaled kernel
//! `K_h(y) = h^{-d/2} K(y/h)`, gives the same value.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quadrature::CompositeLegendre;

const NORM_TOL: f64 = 1e-8;

type KernelFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A smoothing kernel `K` on `ℝ^d` with its norms and declared order.
#[derive(Clone)]
pub struct SmoothingKernel {
    name: String,
    dim: usize,
    eval: Arc<KernelFn>,
    eval_1d: Option<fn(f64) -> f64>,
    l1_norm: f64,
    l2_norm_sq: f64,
    sup_norm: f64,
    order: f64,
    support_radius: f64,
    // d = 1 only: quadrature nodes with weights premultiplied by K(z)
    weighted: Vec<(f64, f64)>,
}

impl fmt::Debug for SmoothingKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothingKernel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("l1_norm", &self.l1_norm)
            .field("l2_norm_sq", &self.l2_norm_sq)
            .field("sup_norm", &self.sup_norm)
            .field("order", &self.order)
            .finish()
    }
}

fn gaussian_1d(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

fn epanechnikov_1d(z: f64) -> f64 {
    if z.abs() < 1.0 {
        0.75 * (1.0 - z * z)
    } else {
        0.0
    }
}

impl SmoothingKernel {
    /// Standard normal density, order 2.
    pub fn gaussian() -> Self {
        Self::build_1d("gaussian", gaussian_1d, 2.0, 12.0)
            .expect("built-in gaussian kernel is valid")
    }

    /// `¾(1 - z²)` on `[-1, 1]`, order 2.
    pub fn epanechnikov() -> Self {
        Self::build_1d("epanechnikov", epanechnikov_1d, 2.0, 1.0)
            .expect("built-in epanechnikov kernel is valid")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            other => Err(Error::InvalidKernel(format!("unknown kernel `{other}`"))),
        }
    }

    fn build_1d(name: &str, f: fn(f64) -> f64, order: f64, support_radius: f64) -> Result<Self> {
        let mut k = Self::custom(name, 1, move |z: &[f64]| f(z[0]), order, support_radius)?;
        k.eval_1d = Some(f);
        Ok(k)
    }

    /// A user kernel supported (numerically) in `[-R, R]^d`.
    ///
    /// Norms are computed by tensor Gauss–Legendre quadrature, which is only
    /// provided for `d ≤ 2`. Construction fails unless `∫K = 1`, the moments of
    /// order `1..⌈s⌉-1` vanish and `|z|K(z)` is negligible at the support edge,
    /// all to `1e-8`.
    pub fn custom<F>(name: &str, dim: usize, f: F, order: f64, support_radius: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidKernel(format!(
                "numerical norms are available for d = 1 or 2, got d = {dim}"
            )));
        }
        if !(order.is_finite() && order > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "order must be positive, got {order}"
            )));
        }
        let (panels, points) = if dim == 1 { (240, 10) } else { (60, 8) };
        let rule = CompositeLegendre::new(support_radius, panels, points)?;
        let grid: Vec<(Vec<f64>, f64)> = match dim {
            1 => rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(&z, &w)| (vec![z], w))
                .collect(),
            _ => {
                let mut g = Vec::with_capacity(rule.nodes().len().pow(2));
                for (&z1, &w1) in rule.nodes().iter().zip(rule.weights()) {
                    for (&z2, &w2) in rule.nodes().iter().zip(rule.weights()) {
                        g.push((vec![z1, z2], w1 * w2));
                    }
                }
                g
            }
        };

        let mut mass = 0.0;
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut sup: f64 = 0.0;
        let max_moment = order.ceil() as i32 - 1;
        let mut moments = vec![vec![0.0; max_moment.max(0) as usize]; dim];
        for (z, w) in &grid {
            let k = f(z);
            if !k.is_finite() {
                return Err(Error::InvalidKernel(format!(
                    "{name}: non-finite value at {z:?}"
                )));
            }
            mass += w * k;
            l1 += w * k.abs();
            l2 += w * k * k;
            sup = sup.max(k.abs());
            for (axis, row) in moments.iter_mut().enumerate() {
                for (j, m) in row.iter_mut().enumerate() {
                    *m += w * z[axis].powi(j as i32 + 1) * k;
                }
            }
        }
        sup = sup.max(f(&vec![0.0; dim]).abs());
        if (mass - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidKernel(format!(
                "{name}: integral is {mass}, not 1"
            )));
        }
        for row in &moments {
            if let Some((j, m)) = row.iter().enumerate().find(|(_, m)| m.abs() > NORM_TOL) {
                return Err(Error::InvalidKernel(format!(
                    "{name}: moment of order {} is {m}, inconsistent with declared order {order}",
                    j + 1
                )));
            }
        }
        let mut edge = vec![0.0; dim];
        edge[0] = support_radius;
        if (support_radius * f(&edge)).abs() > NORM_TOL {
            return Err(Error::InvalidKernel(format!(
                "{name}: |z|K(z) does not vanish at the support radius {support_radius}"
            )));
        }

        let weighted = if dim == 1 {
            grid.iter()
                .map(|(z, w)| (z[0], w * f(z)))
                .filter(|&(_, wk)| wk != 0.0)
                .collect()
        } else {
            Vec::new()
        };

        Ok(SmoothingKernel {
            name: name.to_string(),
            dim,
            eval: Arc::new(f),
            eval_1d: None,
            l1_norm: l1,
            l2_norm_sq: l2,
            sup_norm: sup,
            order,
            support_radius,
            weighted,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// `‖K‖₂²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_norm_sq
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        (self.eval)(z)
    }

    /// `K(z)` for a one-dimensional kernel.
    #[inline]
    pub fn evaluate_1d(&self, z: f64) -> f64 {
        match self.eval_1d {
            Some(f) => f(z),
            None => (self.eval)(std::slice::from_ref(&z)),
        }
    }

    /// `∫ K(z) g(z) dz` for a one-dimensional kernel.
    pub fn integrate_against(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::InvalidKernel(format!(
                "kernel-space quadrature is one-dimensional, kernel has d = {}",
                self.dim
            )));
        }
        let value: f64 = self.weighted.iter().map(|&(z, wk)| wk * g(z)).sum();
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::IntegrandGrowth(format!(
                "kernel integral against {} is {value}",
                self.name
            )))
        }
    }

    /// `Σ_u K((x - X_u)/h)` over one-dimensional states, summed in order.
    #[inline]
    pub fn kernel_sum(&self, states: &[f64], x: f64, h: f64) -> f64 {
        let inv_h = 1.0 / h;
        match self.eval_1d {
            Some(f) => states.iter().map(|&s| f((x - s) * inv_h)).sum(),
            None => states
                .iter()
                .map(|&s| self.evaluate_1d((x - s) * inv_h))
                .sum(),
        }
    }
}

/// `h_n = 2^{-nγ}` on `ℝ^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    pub gamma: f64,
    pub dim: usize,
}

impl BandwidthSchedule {
    /// Schedule with `0 < γ < 1/d`.
    pub fn new(gamma: f64, dim: usize) -> Result<Self> {
        let s = BandwidthSchedule { gamma, dim };
        if dim == 0 || !(gamma > 0.0 && gamma < 1.0 / dim as f64) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < gamma < 1/d, got gamma = {gamma}, d = {dim}"
            )));
        }
        Ok(s)
    }

    pub fn bandwidth(&self, n: u32) -> f64 {
        bandwidth(n, self)
    }
}

pub fn bandwidth(n: u32, schedule: &BandwidthSchedule) -> f64 {
    (-(n as f64) * schedule.gamma).exp2()
}

/// Which of the bandwidth conditions hold for a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// `γ ∈ (0, 1/d)`.
    pub gamma_in_range: bool,
    /// `γ > 1/(2s + d)`.
    pub bias_ok: bool,
    /// `2^{dγ} > 2α²`; vacuous unless `2α² > 1`.
    pub supercritical_ok: bool,
    pub admissible: bool,
    /// `(1 + log₂ α²)/d`, only in the super-critical regime.
    pub gamma_lower_bound_supercritical: Option<f64>,
}

pub fn admissible_bandwidth(schedule: &BandwidthSchedule, s: f64, alpha: f64) -> RegimeReport {
    let d = schedule.dim as f64;
    let gamma = schedule.gamma;
    let gamma_in_range = schedule.dim > 0 && gamma > 0.0 && gamma < 1.0 / d;
    let bias_ok = gamma > 1.0 / (2.0 * s + d);
    let two_alpha_sq = 2.0 * alpha * alpha;
    let (supercritical_ok, lower) = if two_alpha_sq > 1.0 {
        (
            (d * gamma).exp2() > two_alpha_sq,
            Some((1.0 + (alpha * alpha).log2()) / d),
        )
    } else {
        (true, None)
    };
    RegimeReport {
        gamma_in_range,
        bias_ok,
        supercritical_ok,
        admissible: gamma_in_range && bias_ok && supercritical_ok,
        gamma_lower_bound_supercritical: lower,
    }
}

fn check_points(points: &[f64], dim: usize, what: &'static str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty(what));
    }
    if !points.len().is_multiple_of(dim) {
        return Err(Error::Mismatch(format!(
            "{what}: {} coordinates is not a multiple of d = {dim}",
            points.len()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// `μ̂(x) = |sample|⁻¹ h^{-d} Σ_u K((x - X_u)/h)` at every query point.
///
/// Points are flattened row-major, `d` coordinates each.
pub fn density_estimate(
    sample: &[f64],
    x_points: &[f64],
    h: f64,
    kernel: &SmoothingKernel,
) -> Result<Vec<f64>> {
    density_estimate_with(sample, x_points, h, kernel, Execution::Sequential)
}

/// [`density_estimate`] with the query points partitioned across threads.
pub fn density_estimate_with(
    sample: &[f64],
    x_points: &[f64],
    h: f64,
    kernel: &SmoothingKernel,
    exec: Execution,
) -> Result<Vec<f64>> {
    let d = kernel.dim();
    check_points(sample, d, "sample")?;
    check_points(x_points, d, "query points")?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let n_sample = sample.len() / d;
    let n_query = x_points.len() / d;
    let scale = 1.0 / (n_sample as f64 * h.powi(d as i32));

    const BLOCK: usize = 64;
    let blocks = n_query.div_ceil(BLOCK);
    let partial = exec.map_indexed(blocks, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(n_query);
        let mut acc = vec![0.0; hi - lo];
        let mut z = vec![0.0; d];
        // sample-major: one pass over the sample per block of queries
        for u in sample.chunks_exact(d) {
            for (q, slot) in (lo..hi).zip(acc.iter_mut()) {
                let x = &x_points[q * d..(q + 1) * d];
                if d == 1 {
                    *slot += kernel.evaluate_1d((x[0] - u[0]) / h);
                } else {
                    for k in 0..d {
                        z[k] = (x[k] - u[k]) / h;
                    }
                    *slot += kernel.evaluate(&z);
                }
            }
        }
        acc
    });
    Ok(partial.into_iter().flatten().map(|s| s * scale).collect())
}

/// `B_h(x) = ∫ K(y)(μ(x - hy) - μ(x)) dy`, the smoothing bias of a density at `x`.
pub fn bias_term(
    x: f64,
    h: f64,
    kernel: &SmoothingKernel,
    density: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let at_x = density(x);
    kernel.integrate_against(|y| density(x - h * y) - at_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bar_model::BarModel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_kernel_norms() {
        let k = SmoothingKernel::gaussian();
        assert_relative_eq!(
            k.l2_norm_sq(),
            1.0 / (2.0 * PI.sqrt()),
            max_relative = 1e-12
        );
        assert_relative_eq!(k.l1_norm(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(k.sup_norm(), 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-12);
        assert_eq!(k.order(), 2.0);
        assert!(k.integrate_against(|y| y).unwrap().abs() < 1e-14);
        assert_relative_eq!(
            k.integrate_against(|y| y * y).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn epanechnikov_kernel_norms() {
        let k = SmoothingKernel::epanechnikov();
        assert_relative_eq!(k.l2_norm_sq(), 0.6, max_relative = 1e-12);
        assert_relative_eq!(
            k.integrate_against(|y| y * y).unwrap(),
            0.2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn custom_kernels_are_validated() {
        // unnormalised
        assert!(
            SmoothingKernel::custom("half", 1, |z| 0.5 * gaussian_1d(z[0]), 2.0, 12.0).is_err()
        );
        // skewed: first moment non-zero, declared order 2
        let skew = |z: &[f64]| if (0.0..1.0).contains(&z[0]) { 1.0 } else { 0.0 };
        assert!(SmoothingKernel::custom("skew", 1, skew, 2.0, 2.0).is_err());
        // the same kernel is fine at order 1
        assert!(SmoothingKernel::custom("skew", 1, skew, 1.0, 2.0).is_ok());
        // heavy tail cut off too early
        assert!(SmoothingKernel::custom("gauss", 1, |z| gaussian_1d(z[0]), 2.0, 3.0).is_err());
        assert!(SmoothingKernel::custom("g3", 3, |_| 0.0, 2.0, 1.0).is_err());
        let product = SmoothingKernel::custom(
            "gauss2",
            2,
            |z| gaussian_1d(z[0]) * gaussian_1d(z[1]),
            2.0,
            10.0,
        )
        .unwrap();
        assert_relative_eq!(product.l2_norm_sq(), 1.0 / (4.0 * PI), max_relative = 1e-9);
    }

    #[test]
    fn bandwidth_values() {
        let s = BandwidthSchedule::new(0.201, 1).unwrap();
        assert_eq!(bandwidth(0, &s), 1.0);
        assert_relative_eq!(bandwidth(15, &s), 0.123707, epsilon = 1e-6);
        assert_eq!(BandwidthSchedule::new(0.5, 1).unwrap().bandwidth(4), 0.25);
        assert!(BandwidthSchedule::new(1.0, 1).is_err());
        assert!(BandwidthSchedule::new(0.6, 2).is_err());
        assert!(BandwidthSchedule::new(0.0, 1).is_err());
    }

    #[test]
    fn regime_classification() {
        let sched = |g| BandwidthSchedule { gamma: g, dim: 1 };
        let r = admissible_bandwidth(&sched(0.201), 2.0, 0.5);
        assert!(r.admissible && r.supercritical_ok && r.gamma_lower_bound_supercritical.is_none());
        let r = admissible_bandwidth(&sched(0.696), 2.0, 0.9);
        assert!(r.admissible);
        assert!((r.gamma_lower_bound_supercritical.unwrap() - 0.69599).abs() < 1e-5);
        let r = admissible_bandwidth(&sched(0.201), 2.0, 0.9);
        assert!(!r.supercritical_ok && !r.admissible && r.bias_ok);
        let r = admissible_bandwidth(&sched(0.19), 2.0, 0.5);
        assert!(!r.bias_ok && !r.admissible);
        let r = admissible_bandwidth(&sched(1.2), 2.0, 0.5);
        assert!(!r.gamma_in_range && !r.admissible);
    }

    #[test]
    fn estimate_examples() {
        let k = SmoothingKernel::gaussian();
        let x = 0.37;
        let one = density_estimate(&[x], &[x], 0.5, &k).unwrap();
        assert_relative_eq!(one[0], 0.797885, epsilon = 1e-6);
        let two = density_estimate(&[x + 1.0, x - 1.0], &[x], 1.0, &k).unwrap();
        assert_relative_eq!(two[0], 0.241971, epsilon = 1e-6);
    }

    #[test]
    fn estimate_integrates_to_one() {
        let k = SmoothingKernel::gaussian();
        let sample = [-1.2, 0.3, 0.31, 2.2, 4.0];
        let grid: Vec<f64> = (0..=4000).map(|i| -8.0 + i as f64 * 0.005).collect();
        let est = density_estimate(&sample, &grid, 0.4, &k).unwrap();
        let area: f64 = est.iter().sum::<f64>() * 0.005;
        assert!((area - 1.0).abs() < 1e-3);
    }

    #[test]
    fn estimate_errors() {
        let k = SmoothingKernel::gaussian();
        assert!(matches!(
            density_estimate(&[], &[0.0], 1.0, &k),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            density_estimate(&[f64::NAN], &[0.0], 1.0, &k),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            density_estimate(&[0.0], &[f64::INFINITY], 1.0, &k),
            Err(Error::NonFinite(_))
        ));
        assert!(density_estimate(&[0.0], &[0.0], 0.0, &k).is_err());
    }

    #[test]
    fn parallel_estimate_matches_sequential() {
        let k = SmoothingKernel::gaussian();
        let sample: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let grid: Vec<f64> = (0..300).map(|i| -4.0 + i as f64 * 0.03).collect();
        let seq = density_estimate_with(&sample, &grid, 0.3, &k, Execution::Sequential).unwrap();
        let par = density_estimate_with(&sample, &grid, 0.3, &k, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn two_dimensional_estimate() {
        let k = SmoothingKernel::custom(
            "gauss2",
            2,
            |z| gaussian_1d(z[0]) * gaussian_1d(z[1]),
            2.0,
            10.0,
        )
        .unwrap();
        let est = density_estimate(&[1.0, 2.0], &[1.0, 2.0], 0.5, &k).unwrap();
        assert_relative_eq!(est[0], 4.0 / (2.0 * PI), max_relative = 1e-14);
    }

    #[test]
    fn bias_examples() {
        let k = SmoothingKernel::gaussian();
        let constant = bias_term(0.7, 0.3, &k, |_| 0.25).unwrap();
        assert!(constant.abs() < 1e-15);
        let linear = bias_term(0.7, 0.3, &k, |y| 0.1 + 0.02 * y).unwrap();
        assert!(linear.abs() < 1e-14);
    }

    #[test]
    fn bias_matches_second_order_taylor() {
        // B_h(x) ≈ h²/2 μ''(x) for an order-2 kernel with unit variance
        let m = BarModel::new(0.5, 1.0).unwrap();
        let k = SmoothingKernel::gaussian();
        let x = -1.3;
        let v = m.sigma_a().powi(2);
        let mu2 = m.invariant_density(x) * (x * x / (v * v) - 1.0 / v);
        let h = 2f64.powi(-6);
        let b = bias_term(x, h, &k, |y| m.invariant_density(y)).unwrap();
        assert_relative_eq!(b / (h * h), 0.5 * mu2, max_relative = 1e-3);
    }
}
