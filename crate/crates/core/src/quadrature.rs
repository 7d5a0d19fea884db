//! Gauss–Hermite and composite Gauss–Legendre rules.
//!
//! Nodes are found by Newton iteration on the three-term recurrences of the
//! orthonormal polynomials, which keeps full double precision well past order
//! 128.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const NEWTON_EPS: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 200;

/// Gauss–Hermite rule for `∫ e^{-t²} f(t) dt` over the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Order used by the moment oracle unless the caller asks otherwise.
    pub const DEFAULT_ORDER: usize = 64;

    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig(
                "quadrature order must be positive".into(),
            ));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // π^{-1/4}
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..NEWTON_MAX_ITER {
                let (p1, p2) = hermite_orthonormal(n, z, pim4);
                pp = (2.0 * nf).sqrt() * p2;
                let step = p1 / pp;
                z -= step;
                if step.abs() <= NEWTON_EPS * z.abs().max(1.0) {
                    let (_, p2) = hermite_orthonormal(n, z, pim4);
                    pp = (2.0 * nf).sqrt() * p2;
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        // Ascending node order.
        nodes.reverse();
        weights.reverse();
        Ok(QuadratureRule {
            order,
            nodes,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{-t²} f(t) dt`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// `E[f(mean + sd·G)]` for a standard normal `G`.
    pub fn expect_normal(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = sd * std::f64::consts::SQRT_2;
        self.integrate(|t| f(mean + scale * t)) / PI.sqrt()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss_hermite(Self::DEFAULT_ORDER).expect("positive order")
    }
}

/// Returns `(p_n(z), p_{n-1}(z))` for the orthonormal Hermite polynomials.
fn hermite_orthonormal(n: usize, z: f64, p0: f64) -> (f64, f64) {
    let mut p1 = p0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Composite Gauss–Legendre rule on a symmetric interval `[-radius, radius]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CompositeLegendre {
    pub fn new(radius: f64, panels: usize, points_per_panel: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || panels == 0 || points_per_panel == 0 {
            return Err(Error::InvalidConfig(format!(
                "composite rule needs a positive radius and counts (radius={radius}, panels={panels}, points={points_per_panel})"
            )));
        }
        let (base_x, base_w) = gauss_legendre_unit(points_per_panel);
        let width = 2.0 * radius / panels as f64;
        let mut nodes = Vec::with_capacity(panels * points_per_panel);
        let mut weights = Vec::with_capacity(panels * points_per_panel);
        for p in 0..panels {
            let mid = -radius + (p as f64 + 0.5) * width;
            for (x, w) in base_x.iter().zip(&base_w) {
                nodes.push(mid + 0.5 * width * x);
                weights.push(0.5 * width * w);
            }
        }
        Ok(CompositeLegendre { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..NEWTON_MAX_ITER {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / pp;
            z -= step;
            if step.abs() <= NEWTON_EPS {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}
