//! Monte Carlo check of the exact generation-sum moments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bar_model::BarModel;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::oracle::{MomentOracle, MomentOracleResult};
use crate::tree_sim::{simulate_generations, PointMass, ReplicateSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    One,
    Id,
    Square,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::One, TestFunction::Id, TestFunction::Square];

    pub fn apply(self, y: f64) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Id => y,
            TestFunction::Square => y * y,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TestFunction::One => "one",
            TestFunction::Id => "id",
            TestFunction::Square => "square",
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(TestFunction::One),
            "id" => Ok(TestFunction::Id),
            "square" => Ok(TestFunction::Square),
            _ => Err(Error::InvalidConfig(format!(
                "unknown test function `{s}` (one, id, square)"
            ))),
        }
    }
}

/// `M_{G_g}(f)` for `g = 0..=n_max`, one vector per replicate, each tree
/// rooted at the fixed state `x`.
pub fn generation_sums(
    model: &BarModel,
    f: TestFunction,
    n_max: u32,
    x: f64,
    replicates: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be positive".into()));
    }
    // validate the depth once so the per-replicate stream cannot fail
    simulate_generations(
        model,
        &PointMass(x),
        n_max,
        ReplicateSeed::new(master_seed, 0),
        exec,
    )?;
    let root = PointMass(x);
    Ok(exec.map_indexed(replicates, |r| {
        let seed = ReplicateSeed::new(master_seed, r as u64);
        simulate_generations(model, &root, n_max, seed, Execution::Sequential)
            .expect("depth checked")
            .map(|g| g.sum(|y| f.apply(y)))
            .collect()
    }))
}

/// One oracle-versus-simulation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub quantity: String,
    pub oracle: f64,
    pub quadrature_error: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
    /// `(monte_carlo - oracle) / standard_error`; `0` when both agree exactly
    /// with no sampling spread.
    pub z_score: f64,
}

impl MomentRow {
    fn new(quantity: String, oracle: MomentOracleResult, draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = if draws.len() > 1 {
            draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se = (var / n).sqrt();
        let diff = mean - oracle.value;
        let tol = 1e-9 * oracle.value.abs().max(1.0);
        let z_score = if se > 0.0 {
            diff / se
        } else if diff.abs() <= tol {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        MomentRow {
            quantity,
            oracle: oracle.value,
            quadrature_error: oracle.quadrature_error_estimate,
            monte_carlo: mean,
            standard_error: se,
            z_score,
        }
    }

    pub fn within(&self, standard_errors: f64) -> bool {
        self.z_score.abs() <= standard_errors
    }
}

/// Mean and second moment of `M_{G_n}(f)`, plus the cross moment with
/// `M_{G_m}(f)` when `m` is given.
#[allow(clippy::too_many_arguments)]
pub fn compare_moments(
    model: &BarModel,
    f: TestFunction,
    n: u32,
    m: Option<u32>,
    x: f64,
    replicates: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<MomentRow>> {
    if let Some(m) = m {
        if m > n {
            return Err(Error::InvalidConfig(format!(
                "m = {m} must not exceed n = {n}"
            )));
        }
    }
    let oracle = MomentOracle::new(*model);
    let fx = |y: f64| f.apply(y);
    let mean = oracle.mean_mgn(fx, n, x)?;
    let second = oracle.second_moment_mgn(fx, n, x)?;
    let sums = generation_sums(model, f, n, x, replicates, master_seed, exec)?;
    let last: Vec<f64> = sums.iter().map(|s| s[n as usize]).collect();
    let squares: Vec<f64> = last.iter().map(|v| v * v).collect();
    let mut rows = vec![
        MomentRow::new(format!("E[M_G{n}({f})]"), mean, &last),
        MomentRow::new(format!("E[M_G{n}({f})^2]"), second, &squares),
    ];
    if let Some(m) = m {
        let cross = oracle.cross_moment_mgn_mgm(fx, fx, n, m, x)?;
        let products: Vec<f64> = sums.iter().map(|s| s[n as usize] * s[m as usize]).collect();
        rows.push(MomentRow::new(
            format!("E[M_G{n}({f}) M_G{m}({f})]"),
            cross,
            &products,
        ));
    }
    Ok(rows)
}
