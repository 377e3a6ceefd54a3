//! Validity and distribution metrics: the triangle-inequality test,
//! pooled edge-weight statistics, density histograms, and the KDE
//! random-sampling baseline.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::data::{edge_index, GraphSample};

/// Tolerance on triangle-inequality comparisons; admits only true
/// floating-point ties at the weight magnitudes in play.
pub const TRIANGLE_EPS: f64 = 1e-9;

/// The four node triples of the complete 4-node graph, in canonical order.
pub const NODE_TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("degenerate support: pooled weights have zero variance")]
    DegenerateSupport,
}

/// A triangle-inequality violation: the offending node triple and the slack
/// (sum of the two smaller edges minus the largest; negative when violated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleViolation {
    pub triple: (usize, usize, usize),
    pub slack: f64,
}

/// Outcome of the triangle-inequality test on one graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleReport {
    pub valid: bool,
    pub first_violation: Option<TriangleViolation>,
}

/// Check all four node triples; within a triple, checking the largest edge
/// against the sum of the other two covers all three orderings. Reports the
/// first violating triple in canonical order.
pub fn triangle_valid(sample: &GraphSample) -> TriangleReport {
    let w = sample.weights();
    for &(a, b, c) in &NODE_TRIPLES {
        let e = [
            w[edge_index(a, b)],
            w[edge_index(a, c)],
            w[edge_index(b, c)],
        ];
        let max = e[0].max(e[1]).max(e[2]);
        let slack = (e[0] + e[1] + e[2] - max) - max;
        if slack < -TRIANGLE_EPS {
            return TriangleReport {
                valid: false,
                first_violation: Some(TriangleViolation {
                    triple: (a, b, c),
                    slack,
                }),
            };
        }
    }
    TriangleReport {
        valid: true,
        first_violation: None,
    }
}

/// Fraction of samples passing the triangle test.
pub fn valid_fraction(samples: &[GraphSample]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySampleSet);
    }
    let valid = samples.iter().filter(|s| triangle_valid(s).valid).count();
    Ok(valid as f64 / samples.len() as f64)
}

/// Population standard deviation over all 6N pooled edge weights.
pub fn pooled_weight_std(samples: &[GraphSample]) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySampleSet);
    }
    Ok(std_of(&pool_weights(samples), 0))
}

/// Flatten all edge weights into one sequence, sample-major.
pub fn pool_weights(samples: &[GraphSample]) -> Vec<f64> {
    samples
        .iter()
        .flat_map(|s| s.weights().iter().copied())
        .collect()
}

/// Standard deviation with `ddof` delta degrees of freedom.
fn std_of(values: &[f64], ddof: usize) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - ddof as f64)).sqrt()
}

/// Gaussian kernel density estimate over the pooled training weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    support: Vec<f64>,
    bandwidth: f64,
}

impl KdeModel {
    /// Fit with Scott's rule bandwidth, sigma_hat * n^(-1/5), where
    /// sigma_hat is the sample standard deviation of the pooled weights.
    pub fn fit(samples: &[GraphSample]) -> Result<Self, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::EmptySampleSet);
        }
        let support = pool_weights(samples);
        let sigma = std_of(&support, 1);
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(EvalError::DegenerateSupport);
        }
        let bandwidth = sigma * (support.len() as f64).powf(-0.2);
        Ok(Self { support, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Mixture density at a point.
    pub fn density(&self, x: f64) -> f64 {
        let norm = 1.0 / (self.bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        let mean: f64 = self
            .support
            .iter()
            .map(|&s| {
                let u = (x - s) / self.bandwidth;
                (-0.5 * u * u).exp()
            })
            .sum::<f64>()
            / self.support.len() as f64;
        norm * mean
    }

    /// Draw six independent edge weights (random support point plus Gaussian
    /// noise of the bandwidth's width), clamping negatives to zero. Redraws
    /// in the all-zero case.
    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 6] {
        loop {
            let mut raw = [0.0; 6];
            for w in &mut raw {
                let center = self.support[rng.random_range(0..self.support.len())];
                let noise: f64 = StandardNormal.sample(rng);
                *w = (center + self.bandwidth * noise).max(0.0);
            }
            if raw.iter().sum::<f64>() > 0.0 {
                return raw;
            }
        }
    }

    /// Draw one graph: independent edges, clamped and renormalized to sum
    /// one, mirroring the generators' post-processing.
    pub fn sample_graph<R: Rng + ?Sized>(&self, rng: &mut R) -> GraphSample {
        let raw = self.sample_raw(rng);
        GraphSample::from_raw(raw).expect("positive sum by construction")
    }
}

/// Piecewise-constant density over sorted bin edges, integrating to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl DensityHistogram {
    /// Histogram of raw values over an explicit range. Values outside the
    /// range are clamped into the boundary bins.
    pub fn from_values(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptySampleSet);
        }
        if bins < 2 {
            return Err(EvalError::TooFewBins(bins));
        }
        // Pad a degenerate range so a single repeated value lands in one bin.
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let total = values.len() as f64;
        let densities = counts.iter().map(|&c| c as f64 / (total * width)).collect();
        let bin_edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Ok(Self { bin_edges, densities })
    }

    /// Histogram of the pooled edge weights of a sample set, spanning the
    /// data range.
    pub fn from_samples(samples: &[GraphSample], bins: usize) -> Result<Self, EvalError> {
        let values = pool_weights(samples);
        if values.is_empty() {
            return Err(EvalError::EmptySampleSet);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::from_values(&values, bins, lo, hi)
    }

    /// Integral of the density over its support; one by construction.
    pub fn integral(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(w: [f64; 6]) -> GraphSample {
        let sum: f64 = w.iter().sum();
        GraphSample::from_raw(w).unwrap_or_else(|_| panic!("bad sample, sum {sum}"))
    }

    #[test]
    fn uniform_graph_is_valid() {
        let report = triangle_valid(&sample([1.0; 6]));
        assert!(report.valid);
        assert!(report.first_violation.is_none());
    }

    #[test]
    fn forced_violation_is_reported_on_first_triple() {
        // Edge (0,1) dominates triple (0,1,2): 0.5 > 0.1 + 0.1.
        let report = triangle_valid(&sample([0.5, 0.1, 0.1, 0.1, 0.1, 0.1]));
        assert!(!report.valid);
        let v = report.first_violation.unwrap();
        assert_eq!(v.triple, (0, 1, 2));
        assert!(v.slack < 0.0);
    }

    #[test]
    fn dataset_samples_are_always_valid() {
        // Great-circle distances are a metric, and uniform scaling preserves
        // the triangle inequality.
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ports.csv");
        let ports = crate::data::load_ports(&path).unwrap();
        let dataset = crate::data::build_dataset(300, 11, &ports, 100.0).unwrap();
        assert_eq!(valid_fraction(&dataset.samples).unwrap(), 1.0);
    }

    #[test]
    fn valid_fraction_counts() {
        let good = sample([1.0; 6]);
        let bad = sample([0.5, 0.1, 0.1, 0.1, 0.1, 0.1]);
        assert_eq!(valid_fraction(&[good, bad]).unwrap(), 0.5);
        assert_eq!(valid_fraction(&[good]).unwrap(), 1.0);
        assert_eq!(valid_fraction(&[]).unwrap_err(), EvalError::EmptySampleSet);
    }

    #[test]
    fn pooled_std_closed_forms() {
        assert_eq!(pooled_weight_std(&[sample([1.0; 6])]).unwrap(), 0.0);
        // Three weights at w and three at 0 pool to a two-point set
        // {0, 1/3} with population std 1/6.
        let s = sample([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(pooled_weight_std(&[s]).unwrap(), 1.0 / 6.0, epsilon = 1e-12);
        assert!(pooled_weight_std(&[]).is_err());
    }

    #[test]
    fn kde_single_point_peak_and_integral() {
        // All support mass at 1/6: density peak is 1/(h sqrt(2 pi))... but a
        // constant support has zero variance, so fit must reject it.
        let uniform = sample([1.0; 6]);
        assert_eq!(KdeModel::fit(&[uniform]).unwrap_err(), EvalError::DegenerateSupport);

        // Two-point support: check the closed-form mixture density at a
        // support point and the integral over a wide grid.
        let s = sample([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let kde = KdeModel::fit(&[s]).unwrap();
        assert!(kde.bandwidth() > 0.0);
        let h = kde.bandwidth();
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        let expected = norm
            * ((0.0f64).exp() * 0.5 + (-0.5 * (1.0 / 3.0 / h).powi(2)).exp() * 0.5);
        assert_relative_eq!(kde.density(1.0 / 3.0), expected, max_relative = 1e-12);

        // Trapezoid integral over [-1, 2].
        let n = 20_000;
        let step = 3.0 / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let x = -1.0 + i as f64 * step;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * kde.density(x) * step
            })
            .sum();
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn kde_samples_respect_graph_contract() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ports.csv");
        let ports = crate::data::load_ports(&path).unwrap();
        let dataset = crate::data::build_dataset(100, 13, &ports, 100.0).unwrap();
        let kde = KdeModel::fit(&dataset.samples).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let g = kde.sample_graph(&mut rng);
            assert!(g.weights().iter().all(|&w| w >= 0.0));
            assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn histogram_single_value_and_integral() {
        let h = DensityHistogram::from_values(&[0.25; 10], 5, 0.25, 0.25).unwrap();
        assert_abs_diff_eq!(h.integral(), 1.0, epsilon = 1e-9);
        assert_eq!(h.densities.iter().filter(|&&d| d > 0.0).count(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let h = DensityHistogram::from_values(&values, 10, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(h.integral(), 1.0, epsilon = 1e-9);
        // Law of large numbers: each density near 1.
        for d in &h.densities {
            assert_abs_diff_eq!(*d, 1.0, epsilon = 0.05);
        }

        assert!(matches!(
            DensityHistogram::from_values(&values, 1, 0.0, 1.0),
            Err(EvalError::TooFewBins(1))
        ));
        assert!(matches!(
            DensityHistogram::from_values(&[], 10, 0.0, 1.0),
            Err(EvalError::EmptySampleSet)
        ));
    }

    /// Brute-force oracle: all 12 directed inequalities over the 4 triples.
    fn oracle_valid(w: &[f64; 6]) -> bool {
        for &(a, b, c) in &NODE_TRIPLES {
            let perms = [(a, b, c), (a, c, b), (b, c, a)];
            for (x, y, z) in perms {
                let lhs = w[edge_index(x, y)];
                let rhs = w[edge_index(x, z)] + w[edge_index(z, y)];
                if lhs > rhs + TRIANGLE_EPS {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn validator_agrees_with_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let mut w = [0.0; 6];
            for x in &mut w {
                *x = rng.random_range(0.0..1.0f64).powi(3);
            }
            let sum: f64 = w.iter().sum();
            if sum <= 1e-12 {
                continue;
            }
            for x in &mut w {
                *x /= sum;
            }
            let s = GraphSample::from_normalized(w).unwrap();
            assert_eq!(triangle_valid(&s).valid, oracle_valid(&w));
        }
    }

    #[test]
    fn permutation_and_scale_invariance() {
        // Relabeling nodes permutes the weights but never the verdict, and
        // the triangle inequality is homogeneous under positive scaling.
        let perms4 = all_node_permutations();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let mut w = [0.0; 6];
            for x in &mut w {
                *x = rng.random_range(0.0..1.0f64).powi(2);
            }
            let sum: f64 = w.iter().sum();
            for x in &mut w {
                *x /= sum;
            }
            let base = triangle_valid(&GraphSample::from_normalized(w).unwrap()).valid;
            for perm in &perms4 {
                let mut pw = [0.0; 6];
                for (k, &(a, b)) in crate::data::EDGE_PAIRS.iter().enumerate() {
                    pw[edge_index(perm[a], perm[b])] = w[k];
                }
                let verdict = triangle_valid(&GraphSample::from_normalized(pw).unwrap()).valid;
                assert_eq!(verdict, base, "permutation {perm:?} changed the verdict");
            }
            // Scale invariance via the raw constructor.
            for &c in &[1e-6, 0.37, 42.0] {
                let scaled: [f64; 6] = std::array::from_fn(|k| w[k] * c);
                let verdict = triangle_valid(&GraphSample::from_raw(scaled).unwrap()).valid;
                assert_eq!(verdict, base, "scale {c} changed the verdict");
            }
        }
    }

    fn all_node_permutations() -> Vec<[usize; 4]> {
        let mut perms = Vec::new();
        let mut nodes = [0, 1, 2, 3];
        permute(&mut nodes, 0, &mut perms);
        perms
    }

    fn permute(nodes: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
        if k == 4 {
            out.push(*nodes);
            return;
        }
        for i in k..4 {
            nodes.swap(k, i);
            permute(nodes, k + 1, out);
            nodes.swap(k, i);
        }
    }
}
