//! The fluctuation statistic `ζ_n`, the centred additive functional
//! `N_{n,∅}(𝔣)` and their Gaussian limits.
//!
//! Kernel function sequences use `f^x_ℓ(y) = h_ℓ^{-d/2} K((x - y)/h_ℓ)` with
//! `h_ℓ = 2^{-ℓγ}`; generation `n - ℓ` is summed against `f_{ℓ,n}`.

use serde::{Deserialize, Serialize};

use crate::bar_model::BarModel;
use crate::error::{Error, Result};
use crate::smoothing::{BandwidthSchedule, SmoothingKernel};
use crate::tree_sim::{GenerationBuffer, Scope};

/// `|A_n|^{1/2} h_n^{d/2} (μ̂ - μ(x))`.
pub fn zeta(mu_hat: f64, mu_x: f64, cardinality: u64, h_n: f64, d: usize) -> f64 {
    (cardinality as f64).sqrt() * h_n.powf(d as f64 / 2.0) * (mu_hat - mu_x)
}

/// One replicate's fluctuation and where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSample {
    pub replicate_index: u64,
    pub zeta: f64,
    /// `ζ_{n-1}` over `G_{n-1}`, when the run recorded it.
    pub zeta_previous: Option<f64>,
    pub scope: Scope,
    pub n: u32,
    pub gamma: f64,
    pub x: f64,
    pub seed: u64,
}

/// Centred normal law `N(0, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLimit {
    pub mean: f64,
    pub variance: f64,
}

/// Limit law of `ζ_n`: `N(0, μ(x)‖K‖₂²)`, the same for `G_n` and `T_n`.
pub fn theoretical_limit(x: f64, kernel: &SmoothingKernel, model: &BarModel) -> GaussianLimit {
    GaussianLimit {
        mean: 0.0,
        variance: model.invariant_density(x) * kernel.l2_norm_sq(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceTag {
    /// `f_{ℓ,n} = f^x_{n-ℓ}`: each generation at its own bandwidth.
    Shift,
    /// `f_{ℓ,n} = f^x_n`: the whole tree at the final bandwidth.
    Id,
    /// `f_{ℓ,n} = f^x_n 1{ℓ = 0}`: the last generation only.
    GenOnly,
}

#[derive(Debug, Clone)]
pub struct FunctionSequenceVariant {
    pub tag: SequenceTag,
    pub x: f64,
    pub kernel: SmoothingKernel,
    pub schedule: BandwidthSchedule,
}

impl FunctionSequenceVariant {
    pub fn new(
        tag: SequenceTag,
        x: f64,
        kernel: SmoothingKernel,
        schedule: BandwidthSchedule,
    ) -> Result<Self> {
        if kernel.dim() != 1 || schedule.dim != 1 {
            return Err(Error::InvalidKernel(
                "kernel function sequences are implemented for d = 1".into(),
            ));
        }
        Ok(FunctionSequenceVariant {
            tag,
            x,
            kernel,
            schedule,
        })
    }

    /// Bandwidth of `f_{ℓ,n}`, or `None` where the function is zero.
    pub fn bandwidth_of(&self, ell: u32, n: u32) -> Option<f64> {
        if ell > n {
            return None;
        }
        match self.tag {
            SequenceTag::Shift => Some(self.schedule.bandwidth(n - ell)),
            SequenceTag::Id => Some(self.schedule.bandwidth(n)),
            SequenceTag::GenOnly => (ell == 0).then(|| self.schedule.bandwidth(n)),
        }
    }

    /// `f_{ℓ,n}(y)`.
    pub fn evaluate(&self, ell: u32, n: u32, y: f64) -> f64 {
        match self.bandwidth_of(ell, n) {
            Some(h) => self.kernel.evaluate_1d((self.x - y) / h) / h.sqrt(),
            None => 0.0,
        }
    }

    /// `⟨μ, f_{ℓ,n}⟩ = h^{1/2} ∫ K(z) μ(x - hz) dz`.
    pub fn mu_mean(&self, ell: u32, n: u32, model: &BarModel) -> Result<f64> {
        match self.bandwidth_of(ell, n) {
            Some(h) => Ok(h.sqrt()
                * self
                    .kernel
                    .integrate_against(|z| model.invariant_density(self.x - h * z))?),
            None => Ok(0.0),
        }
    }

    /// `[⟨μ, f_{0,n}⟩, …, ⟨μ, f_{n,n}⟩]`.
    pub fn mu_means(&self, n: u32, model: &BarModel) -> Result<Vec<f64>> {
        (0..=n).map(|ell| self.mu_mean(ell, n, model)).collect()
    }

    /// `‖f_{ℓ,n}‖²_{L²(μ)} = ∫ K(z)² μ(x - hz) dz`.
    pub fn l2_mu_norm_sq(&self, ell: u32, n: u32, model: &BarModel) -> Result<f64> {
        match self.bandwidth_of(ell, n) {
            Some(h) => self.kernel.integrate_against(|z| {
                self.kernel.evaluate_1d(z) * model.invariant_density(self.x - h * z)
            }),
            None => Ok(0.0),
        }
    }
}

/// `N_{n,∅}(𝔣) = |G_n|^{-1/2} Σ_{ℓ=0}^{n} M_{G_{n-ℓ}}(f_{ℓ,n} - ⟨μ, f_{ℓ,n}⟩)`.
pub fn additive_statistic<I>(
    generations: I,
    fseq: &FunctionSequenceVariant,
    n: u32,
    mu_means: &[f64],
) -> Result<f64>
where
    I: IntoIterator,
    I::Item: AsRef<GenerationBuffer>,
{
    if mu_means.len() != n as usize + 1 {
        return Err(Error::Mismatch(format!(
            "need {} centring constants, got {}",
            n + 1,
            mu_means.len()
        )));
    }
    let mut total = 0.0;
    let mut seen = 0usize;
    for buffer in generations {
        let buffer = buffer.as_ref();
        let g = buffer.generation();
        if g > n {
            break;
        }
        seen += 1;
        let ell = n - g;
        if let Some(h) = fseq.bandwidth_of(ell, n) {
            let raw = fseq.kernel.kernel_sum(buffer.states(), fseq.x, h) / h.sqrt();
            total += raw - buffer.states().len() as f64 * mu_means[ell as usize];
        }
        if g == n {
            return Ok(total / ((1u64 << n) as f64).sqrt());
        }
    }
    Err(Error::IncompleteStream {
        needed: n,
        got: seen,
    })
}

/// Limit `σ²` of `Σ_ℓ 2^{-ℓ}‖f_{ℓ,n}‖²_{L²(μ)}` for the built-in sequences.
pub fn asymptotic_variance(fseq: &FunctionSequenceVariant, model: &BarModel) -> f64 {
    let base = model.invariant_density(fseq.x) * fseq.kernel.l2_norm_sq();
    match fseq.tag {
        SequenceTag::Shift | SequenceTag::Id => 2.0 * base,
        SequenceTag::GenOnly => base,
    }
}

/// Finite-`n` partial sum `σ_n² = Σ_{ℓ=0}^{n} 2^{-ℓ}‖f_{ℓ,n}‖²_{L²(μ)}`.
pub fn variance_partial_sum(
    fseq: &FunctionSequenceVariant,
    n: u32,
    model: &BarModel,
) -> Result<f64> {
    let mut sum = 0.0;
    for ell in 0..=n {
        sum += (-(ell as f64)).exp2() * fseq.l2_mu_norm_sq(ell, n, model)?;
    }
    Ok(sum)
}

/// Pairs `(ζ over G_n, ζ over G_{n-1})` per replicate.
pub fn cross_generation_pairs(samples: &[FluctuationSample]) -> Result<Vec<(f64, f64)>> {
    samples
        .iter()
        .map(|s| {
            s.zeta_previous.map(|prev| (s.zeta, prev)).ok_or_else(|| {
                Error::Mismatch(format!(
                    "replicate {} has no previous-generation fluctuation",
                    s.replicate_index
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::smoothing::density_estimate;
    use crate::tree_sim::{collect_statistic, simulate_tree, ReplicateSeed};
    use approx::assert_relative_eq;

    fn variant(tag: SequenceTag, x: f64) -> FunctionSequenceVariant {
        FunctionSequenceVariant::new(
            tag,
            x,
            SmoothingKernel::gaussian(),
            BandwidthSchedule::new(0.201, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(0.3, 0.3, 100, 0.5, 1), 0.0);
        let h = (-15.0 * 0.201f64).exp2();
        assert_relative_eq!(zeta(0.01, 0.0, 1 << 15, h, 1), 0.636682, epsilon = 1e-6);
        let one = zeta(0.21, 0.2, 64, 0.3, 1);
        let two = zeta(0.22, 0.2, 64, 0.3, 1);
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-12);
    }

    #[test]
    fn limit_variances() {
        let k = SmoothingKernel::gaussian();
        let m = BarModel::new(0.5, 1.0).unwrap();
        assert_relative_eq!(
            theoretical_limit(-1.3, &k, &m).variance,
            0.051713,
            epsilon = 1e-6
        );
        let m0 = BarModel::new(0.0, 1.0).unwrap();
        assert_relative_eq!(
            theoretical_limit(0.0, &k, &m0).variance,
            0.112540,
            epsilon = 1e-6
        );
        let ratio =
            theoretical_limit(0.4, &k, &m).variance / theoretical_limit(1.9, &k, &m).variance;
        assert_relative_eq!(
            ratio,
            m.invariant_density(0.4) / m.invariant_density(1.9),
            max_relative = 1e-14
        );
        assert_eq!(theoretical_limit(0.4, &k, &m).mean, 0.0);
    }

    #[test]
    fn variant_limits() {
        let m = BarModel::new(0.5, 1.0).unwrap();
        let gen_only = asymptotic_variance(&variant(SequenceTag::GenOnly, -1.3), &m);
        let shift = asymptotic_variance(&variant(SequenceTag::Shift, -1.3), &m);
        let id = asymptotic_variance(&variant(SequenceTag::Id, -1.3), &m);
        assert_relative_eq!(gen_only, 0.051713, epsilon = 1e-6);
        assert_relative_eq!(shift, 0.1034265, epsilon = 1e-6);
        assert_eq!(gen_only, shift / 2.0);
        assert_eq!(id, shift);
    }

    #[test]
    fn partial_sums_approach_their_limits() {
        let m = BarModel::new(0.5, 1.0).unwrap();
        let g = variant(SequenceTag::GenOnly, -1.3);
        let s20 = variance_partial_sum(&g, 20, &m).unwrap();
        assert!((s20 - asymptotic_variance(&g, &m)).abs() < 5e-3);

        // at x = 0 each ‖f^x_h‖² grows as h shrinks, so the shift sums increase
        let s = variant(SequenceTag::Shift, 0.0);
        let limit = asymptotic_variance(&s, &m);
        let sums: Vec<f64> = (0..=40)
            .map(|n| variance_partial_sum(&s, n, &m).unwrap())
            .collect();
        assert!(sums.windows(2).all(|w| w[1] > w[0]));
        assert!(sums.iter().all(|&v| v < limit));
        assert!((sums[40] - limit).abs() < 1e-3);

        // σ_n² ≤ 2 sup_ℓ ‖f_{ℓ,n}‖²
        for x in [-1.3, 0.0, 2.0] {
            let s = variant(SequenceTag::Shift, x);
            for n in [3, 10, 25] {
                let sup = (0..=n)
                    .map(|l| s.l2_mu_norm_sq(l, n, &m).unwrap())
                    .fold(0.0, f64::max);
                assert!(variance_partial_sum(&s, n, &m).unwrap() <= 2.0 * sup);
            }
        }
    }

    #[test]
    fn centring_constants_match_closed_form() {
        // Gaussian K against Gaussian μ: ⟨μ, f^x_h⟩ = h^{1/2} N(x; 0, σ_a² + h²)
        let m = BarModel::new(0.7, 1.3).unwrap();
        let s = variant(SequenceTag::Shift, -0.8);
        let v = m.sigma_a().powi(2);
        for n in [0, 5, 15] {
            let h = s.schedule.bandwidth(n);
            let vv = v + h * h;
            let closed =
                h.sqrt() * (-0.64 / (2.0 * vv)).exp() / (2.0 * std::f64::consts::PI * vv).sqrt();
            assert_relative_eq!(s.mu_mean(0, n, &m).unwrap(), closed, max_relative = 1e-12);
        }
    }

    fn bar_tree(a: f64, n: u32, rep: u64) -> (BarModel, Vec<GenerationBuffer>) {
        let m = BarModel::new(a, 1.0).unwrap();
        let tree = simulate_tree(
            &m,
            &m.stationary(),
            n,
            ReplicateSeed::new(5, rep),
            Execution::Sequential,
        )
        .unwrap();
        (m, tree)
    }

    #[test]
    fn gen_only_reduces_to_last_generation_sum() {
        let (m, tree) = bar_tree(0.5, 9, 0);
        let n = 9;
        let g = variant(SequenceTag::GenOnly, -1.3);
        let means = g.mu_means(n, &m).unwrap();
        let got = additive_statistic(&tree, &g, n, &means).unwrap();
        let direct = collect_statistic(
            &tree,
            |y| g.evaluate(0, n, y) - means[0],
            Scope::Generation,
            n,
        )
        .unwrap();
        assert_relative_eq!(
            got,
            direct / 2f64.powi(n as i32).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn id_variant_is_the_rescaled_tree_sum() {
        for rep in 0..5 {
            let (m, tree) = bar_tree(0.7, 10, rep);
            let n = 10;
            let id = variant(SequenceTag::Id, 0.4);
            let means = id.mu_means(n, &m).unwrap();
            let got = additive_statistic(&tree, &id, n, &means).unwrap();
            let t = Scope::Tree.cardinality(n) as f64;
            let m_t = collect_statistic(&tree, |y| id.evaluate(0, n, y) - means[0], Scope::Tree, n)
                .unwrap();
            let expected = (2.0 - (-(n as f64)).exp2()).sqrt() * m_t / t.sqrt();
            assert_relative_eq!(got, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn constants_are_centred_away() {
        // a flat kernel over the whole state range makes every f_{ℓ,n} constant
        let flat = SmoothingKernel::custom(
            "flat",
            1,
            |z: &[f64]| if z[0].abs() < 1e6 { 0.5e-6 } else { 0.0 },
            1.0,
            1e6,
        )
        .unwrap();
        let sched = BandwidthSchedule::new(0.1, 1).unwrap();
        let seq = FunctionSequenceVariant::new(SequenceTag::Shift, 0.0, flat, sched).unwrap();
        let n = 6;
        let (_, tree) = bar_tree(0.5, n, 3);
        let means: Vec<f64> = (0..=n).map(|l| seq.evaluate(l, n, 0.0)).collect();
        assert!(additive_statistic(&tree, &seq, n, &means).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zeta_equals_additive_form_plus_bias() {
        let n = 10;
        let (m, tree) = bar_tree(0.5, n, 1);
        let g = variant(SequenceTag::GenOnly, -1.3);
        let k = &g.kernel;
        let h = g.schedule.bandwidth(n);
        let mu_x = m.invariant_density(-1.3);
        let mu_hat = density_estimate(tree[n as usize].states(), &[-1.3], h, k).unwrap()[0];
        let z = zeta(mu_hat, mu_x, 1 << n, h, 1);
        let means = g.mu_means(n, &m).unwrap();
        let big_n = additive_statistic(&tree, &g, n, &means).unwrap();
        let bias = crate::smoothing::bias_term(-1.3, h, k, |y| m.invariant_density(y)).unwrap();
        let rebuilt = big_n + (2f64.powi(n as i32)).sqrt() * h.sqrt() * bias;
        assert_relative_eq!(z, rebuilt, epsilon = 1e-10);
    }

    #[test]
    fn pairs_require_previous_generation() {
        let mut s = FluctuationSample {
            replicate_index: 0,
            zeta: 0.1,
            zeta_previous: Some(0.2),
            scope: Scope::Generation,
            n: 3,
            gamma: 0.2,
            x: 0.0,
            seed: 1,
        };
        assert_eq!(cross_generation_pairs(&[s]).unwrap(), vec![(0.1, 0.2)]);
        s.zeta_previous = None;
        assert!(cross_generation_pairs(&[s]).is_err());
    }
}
