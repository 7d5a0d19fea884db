//! Monte Carlo runner for the density-estimator CLT and its exports.
//!
//! Each replicate `r` simulates a BAR tree to depth `n` from
//! `ReplicateSeed(master_seed, r)`, evaluates `μ̂(x)` over `G_n` or `T_n` at
//! bandwidth `h_n`, and records `ζ_n`. Replicates run in parallel and are
//! stored by index, so the output does not depend on scheduling.

pub mod config;
pub mod export;
pub mod moments;
pub mod stats;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bar_model::{check_assumptions, BarAssumptionReport};
use crate::error::Result;
use crate::exec::Execution;
use crate::fluctuations::{
    cross_generation_pairs, theoretical_limit, zeta, FluctuationSample, GaussianLimit,
};
use crate::quadrature::QuadratureRule;
use crate::smoothing::{admissible_bandwidth, RegimeReport};
use crate::tree_sim::{simulate_generations, ReplicateSeed, Scope};

pub use config::{ExperimentConfig, InitialSpec, ResolvedConfig};
pub use stats::{
    ecdf, histogram, independence_report, ks_critical_value, ks_distance, Ecdf, Histogram,
    IndependenceReport,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltRunResult {
    pub config: ExperimentConfig,
    pub samples: Vec<FluctuationSample>,
    pub theoretical: GaussianLimit,
    pub ks_distance: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub admissibility: RegimeReport,
    pub assumptions: BarAssumptionReport,
    pub wall_time_seconds: f64,
}

impl CltRunResult {
    pub fn zetas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.zeta).collect()
    }

    /// Passes the asymptotic 1% KS criterion against the theoretical limit.
    pub fn ks_passes(&self) -> bool {
        self.ks_distance < ks_critical_value(self.samples.len())
    }

    /// `(ζ over G_n, ζ over G_{n-1})` per replicate.
    pub fn generation_pairs(&self) -> Result<Vec<(f64, f64)>> {
        cross_generation_pairs(&self.samples)
    }

    pub fn independence(&self) -> Result<IndependenceReport> {
        independence_report(&self.generation_pairs()?)
    }
}

pub fn run_clt_experiment(config: &ExperimentConfig) -> Result<CltRunResult> {
    run_clt_experiment_with(config, Execution::Parallel)
}

/// Runs the experiment with replicates distributed according to `exec`.
pub fn run_clt_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<CltRunResult> {
    let start = Instant::now();
    let ResolvedConfig {
        model,
        schedule,
        kernel,
        initial,
    } = config.resolve()?;

    let quad = QuadratureRule::default();
    let assumptions = check_assumptions(&model, &initial, &quad)?;
    let admissibility = admissible_bandwidth(&schedule, kernel.order(), model.alpha());
    let theoretical = theoretical_limit(config.x, &kernel, &model);

    let n = config.n;
    let x = config.x;
    let mu_x = model.invariant_density(x);
    let h_n = schedule.bandwidth(n);
    let h_prev = schedule.bandwidth(n.saturating_sub(1));
    let cardinality = config.scope.cardinality(n);

    let replicate = |r: usize| -> FluctuationSample {
        let seed = ReplicateSeed::new(config.master_seed, r as u64);
        let stream = simulate_generations(&model, &initial, n, seed, Execution::Sequential)
            .expect("depth validated by resolve");
        let mut sum = 0.0;
        let mut prev_sum = None;
        for buffer in stream {
            let g = buffer.generation();
            if config.record_previous_generation && g + 1 == n {
                prev_sum = Some(kernel.kernel_sum(buffer.states(), x, h_prev));
            }
            match config.scope {
                Scope::Tree => sum += kernel.kernel_sum(buffer.states(), x, h_n),
                Scope::Generation if g == n => sum = kernel.kernel_sum(buffer.states(), x, h_n),
                Scope::Generation => {}
            }
        }
        let mu_hat = sum / (cardinality as f64 * h_n);
        let zeta_previous = prev_sum.map(|s| {
            let size = 1u64 << (n - 1);
            zeta(s / (size as f64 * h_prev), mu_x, size, h_prev, 1)
        });
        FluctuationSample {
            replicate_index: r as u64,
            zeta: zeta(mu_hat, mu_x, cardinality, h_n, 1),
            zeta_previous,
            scope: config.scope,
            n,
            gamma: config.gamma,
            x,
            seed: config.master_seed,
        }
    };

    let samples = exec.map_indexed(config.n0, replicate);
    let zetas: Vec<f64> = samples.iter().map(|s| s.zeta).collect();
    let ks = ks_distance(&zetas, theoretical.variance)?;
    let (sample_mean, sample_variance) = stats::mean_variance(&zetas);

    Ok(CltRunResult {
        config: config.clone(),
        samples,
        theoretical,
        ks_distance: ks,
        sample_mean,
        sample_variance,
        admissibility,
        assumptions,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bar_model::BarModel;
    use crate::smoothing::{density_estimate, SmoothingKernel};
    use crate::tree_sim::simulate_tree;

    fn small(scope: Scope) -> ExperimentConfig {
        ExperimentConfig {
            n: 8,
            n0: 12,
            scope,
            record_previous_generation: true,
            ..ExperimentConfig::reference(31)
        }
    }

    #[test]
    fn single_replicate_run() {
        let cfg = ExperimentConfig {
            n0: 1,
            n: 6,
            ..ExperimentConfig::reference(1)
        };
        let r = run_clt_experiment(&cfg).unwrap();
        assert_eq!(r.samples.len(), 1);
        let z = r.samples[0].zeta;
        let phi = statrs::distribution::ContinuousCDF::cdf(
            &statrs::distribution::Normal::new(0.0, r.theoretical.variance.sqrt()).unwrap(),
            z,
        );
        assert!((r.ks_distance - phi.max(1.0 - phi)).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&r.ks_distance));
        assert_eq!(r.sample_variance, 0.0);
    }

    #[test]
    fn replicates_match_a_direct_recomputation() {
        for scope in [Scope::Generation, Scope::Tree] {
            let cfg = small(scope);
            let r = run_clt_experiment(&cfg).unwrap();
            let model = BarModel::new(cfg.a, cfg.sigma).unwrap();
            let k = SmoothingKernel::gaussian();
            let h = (-(cfg.n as f64) * cfg.gamma).exp2();
            for s in &r.samples {
                let tree = simulate_tree(
                    &model,
                    &model.stationary(),
                    cfg.n,
                    ReplicateSeed::new(cfg.master_seed, s.replicate_index),
                    Execution::Sequential,
                )
                .unwrap();
                let pool: Vec<f64> = match scope {
                    Scope::Generation => tree[cfg.n as usize].states().to_vec(),
                    Scope::Tree => tree.iter().flat_map(|g| g.states().to_vec()).collect(),
                };
                let mu_hat = density_estimate(&pool, &[cfg.x], h, &k).unwrap()[0];
                let z = zeta(
                    mu_hat,
                    model.invariant_density(cfg.x),
                    pool.len() as u64,
                    h,
                    1,
                );
                assert!((z - s.zeta).abs() < 1e-10 * z.abs().max(1.0));
            }
        }
    }

    #[test]
    fn inadmissible_runs_still_complete() {
        let cfg = ExperimentConfig {
            a: 0.9,
            n: 6,
            n0: 4,
            ..ExperimentConfig::reference(5)
        };
        let r = run_clt_experiment(&cfg).unwrap();
        assert!(!r.admissibility.admissible);
        assert_eq!(r.samples.len(), 4);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = small(Scope::Tree);
        let a = run_clt_experiment_with(&cfg, Execution::Sequential).unwrap();
        let b = run_clt_experiment_with(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.independence().unwrap(), b.independence().unwrap());
    }
}
