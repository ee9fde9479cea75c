//! Small statistics toolkit: deterministic reductions, regression, and
//! weighted empirical laws with Kolmogorov-Smirnov queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise (cascade) summation. Result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Bernoulli proportion `k / n` with the binomial standard error.
    pub fn proportion(k: usize, n: usize) -> Self {
        let p = k as f64 / n as f64;
        Self {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            se: self.se * factor.abs(),
            n: self.n,
        }
    }

    /// Number of combined standard errors separating two independent estimates.
    pub fn z_against(&self, other: &MeanSe) -> f64 {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        (self.mean - other.mean).abs() / se
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let nf = n as f64;
    let mx = pairwise_sum(xs) / nf;
    let my = pairwise_sum(ys) / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let slope_se = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        n,
    }
}

/// A one-dimensional law that can be sampled by inversion.
pub trait Law: Sync {
    fn cdf(&self, x: f64) -> f64;
    /// Generalised inverse of the CDF, `u` in `[0, 1)`.
    fn quantile(&self, u: f64) -> f64;
}

/// Dirac mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass(pub f64);

impl Law for PointMass {
    fn cdf(&self, x: f64) -> f64 {
        if x >= self.0 {
            1.0
        } else {
            0.0
        }
    }

    fn quantile(&self, _u: f64) -> f64 {
        self.0
    }
}

/// Law given by a closure CDF; used for closed-form oracles in KS checks.
pub struct CdfFn<F: Fn(f64) -> f64 + Sync>(pub F);

/// Weighted sample, sorted by position, weights normalised to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    weights: Vec<f64>,
    /// cumulative weights, last entry 1
    cumulative: Vec<f64>,
    n_effective: f64,
}

impl EmpiricalDistribution {
    pub fn uniform(samples: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; samples.len()];
        Self::weighted(samples, w)
    }

    pub fn weighted(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        if samples.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "sample/weight length mismatch".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let mut pairs: Vec<(f64, f64)> = samples.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = pairwise_sum(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let samples: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
        let sum_sq: f64 = pairwise_sum(&weights.iter().map(|w| w * w).collect::<Vec<_>>());
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        // absorb rounding so the CDF ends exactly at one
        let last = *cumulative.last().unwrap();
        cumulative.iter_mut().for_each(|c| *c /= last);
        Ok(Self {
            samples,
            weights,
            cumulative,
            n_effective: 1.0 / sum_sq,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Kish effective sample size `1 / sum w_i^2`.
    pub fn n_effective(&self) -> f64 {
        self.n_effective
    }

    pub fn mean(&self) -> f64 {
        let terms: Vec<f64> = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .collect();
        pairwise_sum(&terms)
    }

    /// Kolmogorov-Smirnov distance to a continuous law.
    pub fn ks_to<L: Law + ?Sized>(&self, law: &L) -> f64 {
        let mut d: f64 = 0.0;
        let mut below = 0.0;
        let mut i = 0;
        while i < self.samples.len() {
            // group ties
            let x = self.samples[i];
            let mut j = i;
            while j < self.samples.len() && self.samples[j] == x {
                j += 1;
            }
            let f = law.cdf(x);
            let above = self.cumulative[j - 1];
            d = d.max((f - below).abs()).max((above - f).abs());
            below = above;
            i = j;
        }
        d
    }

    /// Two-sample Kolmogorov-Smirnov distance.
    pub fn ks_between(&self, other: &EmpiricalDistribution) -> f64 {
        let (a, b) = (self, other);
        let (mut i, mut j) = (0usize, 0usize);
        let (mut fa, mut fb) = (0.0f64, 0.0f64);
        let mut d: f64 = 0.0;
        while i < a.samples.len() || j < b.samples.len() {
            let x = match (a.samples.get(i), b.samples.get(j)) {
                (Some(&p), Some(&q)) => p.min(q),
                (Some(&p), None) => p,
                (None, Some(&q)) => q,
                (None, None) => unreachable!(),
            };
            while i < a.samples.len() && a.samples[i] == x {
                fa = a.cumulative[i];
                i += 1;
            }
            while j < b.samples.len() && b.samples[j] == x {
                fb = b.cumulative[j];
                j += 1;
            }
            d = d.max((fa - fb).abs());
        }
        d
    }
}

impl Law for EmpiricalDistribution {
    fn cdf(&self, x: f64) -> f64 {
        let k = self.samples.partition_point(|s| *s <= x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        let k = self.cumulative.partition_point(|c| *c <= u);
        self.samples[k.min(self.samples.len() - 1)]
    }
}

impl<F: Fn(f64) -> f64 + Sync> Law for CdfFn<F> {
    fn cdf(&self, x: f64) -> f64 {
        (self.0)(x)
    }

    fn quantile(&self, u: f64) -> f64 {
        // bracket then bisect; only used by tests and oracles
        let (mut lo, mut hi) = (-1.0, 1.0);
        while (self.0)(lo) > u {
            lo *= 2.0;
        }
        while (self.0)(hi) < u {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.0)(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn regression_identity() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 + 1.4 * x).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope - 1.4).abs() < 1e-12);
        assert!((fit.intercept - 0.3).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_to_self_cdf_is_one_over_n() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let emp = EmpiricalDistribution::uniform(xs).unwrap();
        let uniform = CdfFn(|x: f64| x.clamp(0.0, 1.0));
        assert!((emp.ks_to(&uniform) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn weights_are_normalised_and_sorted() {
        let emp =
            EmpiricalDistribution::weighted(vec![3.0, 1.0, 2.0], vec![2.0, 1.0, 1.0]).unwrap();
        assert_eq!(emp.samples(), &[1.0, 2.0, 3.0]);
        assert!((emp.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(emp.weights()[2], 0.5);
        assert!((emp.n_effective() - 1.0 / (0.0625 + 0.0625 + 0.25)).abs() < 1e-12);
        assert_eq!(emp.quantile(0.0), 1.0);
        assert_eq!(emp.quantile(0.3), 2.0);
        assert_eq!(emp.quantile(0.99), 3.0);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn two_sample_ks_symmetric_and_bounded(
            a in prop::collection::vec(-5.0f64..5.0, 1..40),
            b in prop::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let ea = EmpiricalDistribution::uniform(a).unwrap();
            let eb = EmpiricalDistribution::uniform(b).unwrap();
            let d1 = ea.ks_between(&eb);
            let d2 = eb.ks_between(&ea);
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&d1));
            prop_assert!(ea.ks_between(&ea) < 1e-12);
        }

        #[test]
        fn pairwise_sum_matches_naive(xs in prop::collection::vec(-1e3f64..1e3, 0..500)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() < 1e-8);
        }
    }
}
