//! Brownian motion with drift plus compound Poisson jumps: Laplace exponent,
//! convex conjugates, Esscher tilting and dual reflection.
//!
//! The generator's drift `b` is given in compensated form (small jumps
//! `|x| < 1` compensated, as in the usual Levy-Khintchine triplet). For a
//! finite jump measure the compensator is a constant, so it is folded into
//! an effective drift once at construction and the exponent is evaluated as
//!
//! ```text
//! psi(theta) = drift * theta + sigma^2 theta^2 / 2 + rate * (M(theta) - 1)
//! ```
//!
//! with `M` the moment generating function of the jump distribution.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect_increasing, safeguarded_newton};
use crate::stats::normal_cdf;

/// Relative width of the band around `r = Gamma(c)` treated as critical.
pub const CRITICAL_REL_TOL: f64 = 1e-9;

/// Law of a single jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpDistribution {
    /// Two-sided exponential: with probability `p` an `Exp(eta_plus)` jump up,
    /// otherwise an `Exp(eta_minus)` jump down.
    #[serde(rename = "double_exp")]
    DoubleExponential {
        p: f64,
        eta_plus: f64,
        eta_minus: f64,
    },
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// Atoms `(location, probability)`.
    Discrete {
        atoms: Vec<(f64, f64)>,
    },
}

impl JumpDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidModel(format!(
                        "double_exp p = {p} not in [0, 1]"
                    )));
                }
                if !(eta_plus.is_finite()
                    && *eta_plus > 0.0
                    && eta_minus.is_finite()
                    && *eta_minus > 0.0)
                {
                    return Err(Error::InvalidModel(
                        "double_exp rates must be positive".into(),
                    ));
                }
            }
            JumpDistribution::Gaussian { mean, std } => {
                if !mean.is_finite() || !(std.is_finite() && *std > 0.0) {
                    return Err(Error::InvalidModel(
                        "gaussian jumps need finite mean and std > 0".into(),
                    ));
                }
            }
            JumpDistribution::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidModel(
                        "discrete jump law without atoms".into(),
                    ));
                }
                if atoms
                    .iter()
                    .any(|(x, q)| !x.is_finite() || !(q.is_finite() && *q >= 0.0))
                {
                    return Err(Error::InvalidModel(
                        "discrete atoms need finite locations and q >= 0".into(),
                    ));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "discrete probabilities sum to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Open interval on which the MGF is finite.
    pub fn mgf_domain(&self) -> (f64, f64) {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                let upper = if *p > 0.0 { *eta_plus } else { f64::INFINITY };
                let lower = if *p < 1.0 {
                    -*eta_minus
                } else {
                    f64::NEG_INFINITY
                };
                (lower, upper)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `(M(theta), M'(theta), M''(theta))`; caller guarantees the domain.
    pub fn mgf_derivatives(&self, theta: f64) -> (f64, f64, f64) {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                let (mut m, mut d1, mut d2) = (0.0, 0.0, 0.0);
                if *p > 0.0 {
                    let a = eta_plus - theta;
                    m += p * eta_plus / a;
                    d1 += p * eta_plus / (a * a);
                    d2 += 2.0 * p * eta_plus / (a * a * a);
                }
                if *p < 1.0 {
                    let q = 1.0 - p;
                    let a = eta_minus + theta;
                    m += q * eta_minus / a;
                    d1 -= q * eta_minus / (a * a);
                    d2 += 2.0 * q * eta_minus / (a * a * a);
                }
                (m, d1, d2)
            }
            JumpDistribution::Gaussian { mean, std } => {
                let m = (mean * theta + 0.5 * std * std * theta * theta).exp();
                let k1 = mean + std * std * theta;
                (m, m * k1, m * (k1 * k1 + std * std))
            }
            JumpDistribution::Discrete { atoms } => {
                atoms.iter().fold((0.0, 0.0, 0.0), |acc, (x, q)| {
                    let e = q * (theta * x).exp();
                    (acc.0 + e, acc.1 + e * x, acc.2 + e * x * x)
                })
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => p / eta_plus - (1.0 - p) / eta_minus,
            JumpDistribution::Gaussian { mean, .. } => *mean,
            JumpDistribution::Discrete { atoms } => atoms.iter().map(|(x, q)| x * q).sum(),
        }
    }

    /// `E[J; |J| < 1]`, the compensator of a unit-rate jump measure.
    pub fn small_jump_mean(&self) -> f64 {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                // int_0^1 x eta e^{-eta x} dx
                let part = |eta: f64| (1.0 - (-eta).exp() * (1.0 + eta)) / eta;
                p * part(*eta_plus) - (1.0 - p) * part(*eta_minus)
            }
            JumpDistribution::Gaussian { mean, std } => {
                let lo = (-1.0 - mean) / std;
                let hi = (1.0 - mean) / std;
                let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                mean * (normal_cdf(hi) - normal_cdf(lo)) + std * (pdf(lo) - pdf(hi))
            }
            JumpDistribution::Discrete { atoms } => atoms
                .iter()
                .filter(|(x, _)| x.abs() < 1.0)
                .map(|(x, q)| x * q)
                .sum(),
        }
    }

    /// Law reweighted by `e^{theta x} / M(theta)`.
    pub fn tilt(&self, theta: f64) -> JumpDistribution {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                let up = if *p > 0.0 {
                    p * eta_plus / (eta_plus - theta)
                } else {
                    0.0
                };
                let down = if *p < 1.0 {
                    (1.0 - p) * eta_minus / (eta_minus + theta)
                } else {
                    0.0
                };
                JumpDistribution::DoubleExponential {
                    p: up / (up + down),
                    eta_plus: eta_plus - theta,
                    eta_minus: eta_minus + theta,
                }
            }
            JumpDistribution::Gaussian { mean, std } => JumpDistribution::Gaussian {
                mean: mean + std * std * theta,
                std: *std,
            },
            JumpDistribution::Discrete { atoms } => {
                let w: Vec<f64> = atoms.iter().map(|(x, q)| q * (theta * x).exp()).collect();
                let total: f64 = w.iter().sum();
                JumpDistribution::Discrete {
                    atoms: atoms
                        .iter()
                        .zip(&w)
                        .map(|((x, _), wi)| (*x, wi / total))
                        .collect(),
                }
            }
        }
    }

    /// Law of `-J`.
    pub fn reflect(&self) -> JumpDistribution {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => JumpDistribution::DoubleExponential {
                p: 1.0 - p,
                eta_plus: *eta_minus,
                eta_minus: *eta_plus,
            },
            JumpDistribution::Gaussian { mean, std } => JumpDistribution::Gaussian {
                mean: -mean,
                std: *std,
            },
            JumpDistribution::Discrete { atoms } => JumpDistribution::Discrete {
                atoms: atoms.iter().rev().map(|(x, q)| (-x, *q)).collect(),
            },
        }
    }

    /// `P(J <= x)`. Discrete laws are right-continuous step functions.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                if x < 0.0 {
                    (1.0 - p) * (eta_minus * x).exp()
                } else {
                    (1.0 - p) + p * (1.0 - (-eta_plus * x).exp())
                }
            }
            JumpDistribution::Gaussian { mean, std } => normal_cdf((x - mean) / std),
            JumpDistribution::Discrete { atoms } => {
                atoms.iter().filter(|(a, _)| *a <= x).map(|(_, q)| q).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpDistribution::DoubleExponential {
                p,
                eta_plus,
                eta_minus,
            } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<f64>() < *p {
                    e / eta_plus
                } else {
                    -e / eta_minus
                }
            }
            JumpDistribution::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            JumpDistribution::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (x, q) in atoms {
                    acc += q;
                    if u < acc {
                        return *x;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }
}

/// Compound Poisson part: jumps arrive at `rate` with law `dist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub rate: f64,
    pub dist: JumpDistribution,
}

/// JSON model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub b: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpSpec>,
    #[serde(default)]
    pub center: bool,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<LevyTriplet> {
        let model = LevyTriplet::new(self.b, self.sigma, self.jump)?;
        Ok(if self.center { model.center() } else { model })
    }

    pub fn from_json(text: &str) -> Result<LevyTriplet> {
        let doc: ModelDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
        doc.into_model()
    }
}

/// One-dimensional Levy process with `sigma > 0` and finite jump activity.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    b: f64,
    sigma: f64,
    jumps: Option<JumpSpec>,
    /// `b - rate * E[J; |J| < 1]`
    drift: f64,
}

/// Position of `r` relative to the phase boundary `r = Gamma(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Subcritical,
    Critical,
    Supercritical,
}

impl LevyTriplet {
    pub fn new(b: f64, sigma: f64, jumps: Option<JumpSpec>) -> Result<Self> {
        let jumps = Self::check_parts(b, sigma, jumps)?;
        let compensator = jumps
            .as_ref()
            .map_or(0.0, |j| j.rate * j.dist.small_jump_mean());
        Ok(Self {
            b,
            sigma,
            drift: b - compensator,
            jumps,
        })
    }

    /// Build from the uncompensated drift.
    pub fn with_effective_drift(drift: f64, sigma: f64, jumps: Option<JumpSpec>) -> Result<Self> {
        let jumps = Self::check_parts(drift, sigma, jumps)?;
        let compensator = jumps
            .as_ref()
            .map_or(0.0, |j| j.rate * j.dist.small_jump_mean());
        Ok(Self {
            b: drift + compensator,
            sigma,
            drift,
            jumps,
        })
    }

    pub fn brownian(b: f64, sigma: f64) -> Result<Self> {
        Self::new(b, sigma, None)
    }

    fn check_parts(b: f64, sigma: f64, jumps: Option<JumpSpec>) -> Result<Option<JumpSpec>> {
        if !b.is_finite() {
            return Err(Error::InvalidModel("drift must be finite".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma = {sigma}, need sigma > 0"
            )));
        }
        match jumps {
            Some(j) => {
                if !(j.rate.is_finite() && j.rate >= 0.0) {
                    return Err(Error::InvalidModel(format!("jump rate {} < 0", j.rate)));
                }
                j.dist.validate()?;
                Ok(if j.rate == 0.0 { None } else { Some(j) })
            }
            None => Ok(None),
        }
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jumps(&self) -> Option<&JumpSpec> {
        self.jumps.as_ref()
    }

    pub fn jump_rate(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.rate)
    }

    /// Uncompensated drift used by the simulators.
    pub fn effective_drift(&self) -> f64 {
        self.drift
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            b: self.b,
            sigma: self.sigma,
            jump: self.jumps.clone(),
            center: false,
        }
    }

    /// `(theta*_-, theta*_+)`; infinite endpoints are `+-inf`.
    pub fn theta_star(&self) -> (f64, f64) {
        self.jumps
            .as_ref()
            .map_or((f64::NEG_INFINITY, f64::INFINITY), |j| j.dist.mgf_domain())
    }

    fn check_domain(&self, theta: f64) -> Result<()> {
        let (lower, upper) = self.theta_star();
        if theta > lower && theta < upper && theta.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                theta,
                lower,
                upper,
            })
        }
    }

    /// `(psi, psi', psi'')` without the domain check.
    fn exponent(&self, theta: f64) -> (f64, f64, f64) {
        let s2 = self.sigma * self.sigma;
        let mut v = self.drift * theta + 0.5 * s2 * theta * theta;
        let mut d1 = self.drift + s2 * theta;
        let mut d2 = s2;
        if let Some(j) = &self.jumps {
            let (m, m1, m2) = j.dist.mgf_derivatives(theta);
            v += j.rate * (m - 1.0);
            d1 += j.rate * m1;
            d2 += j.rate * m2;
        }
        (v, d1, d2)
    }

    /// Laplace exponent, `E e^{theta X_t} = e^{t psi(theta)}`.
    pub fn psi(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(self.exponent(theta).0)
    }

    pub fn psi_prime(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(self.exponent(theta).1)
    }

    pub fn psi_second(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(self.exponent(theta).2)
    }

    /// `E X_1 = psi'(0)`.
    pub fn mean(&self) -> f64 {
        self.exponent(0.0).1
    }

    /// Same process with the drift shifted so that `E X_1 = 0`.
    pub fn center(&self) -> LevyTriplet {
        let jump_mean = self.jumps.as_ref().map_or(0.0, |j| j.rate * j.dist.mean());
        Self::with_effective_drift(-jump_mean, self.sigma, self.jumps.clone())
            .expect("centering keeps a valid triplet")
    }

    /// Triplet of the dual process `-X`.
    pub fn dual_reflect(&self) -> LevyTriplet {
        let jumps = self.jumps.as_ref().map(|j| JumpSpec {
            rate: j.rate,
            dist: j.dist.reflect(),
        });
        LevyTriplet {
            b: -self.b,
            sigma: self.sigma,
            jumps,
            drift: -self.drift,
        }
    }

    /// Solves `psi'(theta) = alpha`. The second component is `false` when the
    /// supremum is attained at a finite domain endpoint.
    pub fn conjugate_point(&self, alpha: f64) -> Result<(f64, bool)> {
        let (lower, upper) = self.theta_star();
        let slope = |t: f64| self.exponent(t).1 - alpha;
        let g0 = slope(0.0);
        if g0 == 0.0 {
            return Ok((0.0, true));
        }
        // grow a bracket from 0 towards the side where the root lies
        let (toward, edge) = if g0 < 0.0 {
            (1.0, upper)
        } else {
            (-1.0, lower)
        };
        let mut inner = 0.0;
        let mut found = None;
        for k in 0..1100 {
            let cand = if edge.is_finite() {
                edge * (1.0 - 0.5f64.powi(k + 1))
            } else {
                toward * 2f64.powi(k - 1)
            };
            let g = slope(cand);
            if g == 0.0 {
                return Ok((cand, true));
            }
            if (toward > 0.0 && g >= 0.0) || (toward < 0.0 && g <= 0.0) {
                found = Some(cand);
                break;
            }
            inner = cand;
            if edge.is_finite() && (edge - cand).abs() < 1e-15 * (1.0 + edge.abs()) {
                break;
            }
        }
        let Some(outer) = found else {
            // psi' stays below alpha up to the endpoint: supremum at the edge
            return Ok((inner, false));
        };
        let (lo, hi) = if toward > 0.0 {
            (inner, outer)
        } else {
            (outer, inner)
        };
        let root = safeguarded_newton(
            |t| {
                let (_, d1, d2) = self.exponent(t);
                (d1 - alpha, d2)
            },
            lo,
            hi,
            0.5 * (lo + hi),
        )?;
        Ok((root, true))
    }

    /// Convex conjugate `Gamma(alpha) = sup_theta alpha theta - psi(theta)`.
    pub fn legendre(&self, alpha: f64) -> Result<f64> {
        let (theta, _) = self.conjugate_point(alpha)?;
        // psi(0) = 0, so the supremum is never negative
        Ok((alpha * theta - self.exponent(theta).0).max(0.0))
    }

    /// Conjugate of the dual exponent, `sup_theta alpha theta - psi(-theta)`.
    pub fn legendre_dual(&self, alpha: f64) -> Result<f64> {
        self.dual_reflect().legendre(alpha)
    }

    /// The `c >= 0` with `Gamma(c) = r`.
    pub fn gamma_inverse(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidArgument(format!("rate r = {r} must be >= 0")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        let mut g_hi = self.legendre(hi)?;
        let mut doublings = 0;
        while g_hi < r {
            hi *= 2.0;
            g_hi = self.legendre(hi)?;
            doublings += 1;
            if doublings > 200 {
                return Err(Error::Range { r, sup: g_hi });
            }
        }
        let mut failure = None;
        let c = bisect_increasing(
            |c| match self.legendre(c) {
                Ok(g) => g - r,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            0.0,
            hi,
            1e-13 * hi.max(1.0),
            400,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(c),
        }
    }

    /// Where `r` sits relative to `Gamma(c)`, with the critical band
    /// `|r - Gamma(c)| <= 1e-9 max(1, r)`.
    pub fn phase(&self, c: f64, r: f64) -> Result<Phase> {
        let gamma_c = self.legendre(c)?;
        Ok(classify(gamma_c, r))
    }

    /// Smaller root of `psi(theta) - c theta = -r`, the tilt that builds the
    /// QSD with absorption rate `r`. At the phase boundary this is `theta_c`
    /// with `psi'(theta_c) = c`.
    pub fn qsd_theta(&self, c: f64, r: f64) -> Result<f64> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "velocity c = {c} must be > 0"
            )));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidArgument(format!("rate r = {r} must be > 0")));
        }
        let (theta_c, interior) = self.conjugate_point(c)?;
        let gamma_c = (c * theta_c - self.exponent(theta_c).0).max(0.0);
        match classify(gamma_c, r) {
            Phase::Supercritical => return Err(Error::NoRoot { r, gamma_c }),
            Phase::Critical => return Ok(theta_c),
            Phase::Subcritical => {}
        }
        let _ = interior;
        // f increases on (theta*_-, theta_c): f(theta_c) = Gamma(c) - r > 0
        let f = |t: f64| {
            let (v, d1, _) = self.exponent(t);
            (-(v - c * t + r), c - d1)
        };
        let (lower, _) = self.theta_star();
        let mut lo = theta_c.min(0.0);
        let mut width = 1.0;
        let mut steps = 0;
        while f(lo).0 >= 0.0 {
            lo = if lower.is_finite() {
                lower + 0.5 * (lo - lower)
            } else {
                lo - width
            };
            width *= 2.0;
            steps += 1;
            if steps > 1100 {
                return Err(Error::Convergence {
                    what: "qsd_theta bracket",
                    iterations: steps,
                });
            }
        }
        safeguarded_newton(f, lo, theta_c, lo.max(0.0).min(theta_c))
    }

    /// Esscher transform of `X_t - c t` by `e^{theta X_t}`.
    pub fn esscher_tilt(&self, theta: f64, c: f64) -> Result<TiltedModel> {
        self.check_domain(theta)?;
        let s2 = self.sigma * self.sigma;
        let jumps = self.jumps.as_ref().map(|j| {
            let (m, _, _) = j.dist.mgf_derivatives(theta);
            JumpSpec {
                rate: j.rate * m,
                dist: j.dist.tilt(theta),
            }
        });
        let tilted =
            LevyTriplet::with_effective_drift(self.drift + s2 * theta - c, self.sigma, jumps)?;
        Ok(TiltedModel {
            base: self.clone(),
            theta,
            c,
            tilted,
        })
    }
}

fn classify(gamma_c: f64, r: f64) -> Phase {
    if (r - gamma_c).abs() <= CRITICAL_REL_TOL * r.abs().max(1.0) {
        Phase::Critical
    } else if r < gamma_c {
        Phase::Subcritical
    } else {
        Phase::Supercritical
    }
}

/// Law of `X_t - c t` under the measure with density
/// `exp(theta X_t - psi(theta) t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedModel {
    pub base: LevyTriplet,
    pub theta: f64,
    pub c: f64,
    /// `X_t - c t` under the tilted measure, as a triplet with no extra velocity.
    pub tilted: LevyTriplet,
}

impl TiltedModel {
    /// `psi'(theta) - c`.
    pub fn unit_mean(&self) -> f64 {
        self.tilted.mean()
    }

    /// `psi_c(theta) = psi(theta) - c theta`.
    pub fn psi_c(&self) -> f64 {
        self.base.exponent(self.theta).0 - self.c * self.theta
    }

    /// Log of `dP/dQ` on `F_t` for a path with `Y_t - Y_0 = displacement`.
    pub fn log_weight(&self, displacement: f64, t: f64) -> f64 {
        -self.theta * displacement + self.psi_c() * t
    }

    /// The dual-reflected tilted process, used by the QSD construction
    /// (drift `c - psi'(theta)`, jumps `e^{-theta x} pi(-dx)`).
    pub fn dual(&self) -> LevyTriplet {
        self.tilted.dual_reflect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bm() -> LevyTriplet {
        LevyTriplet::brownian(0.0, 1.0).unwrap()
    }

    fn double_exp(eta_plus: f64, eta_minus: f64) -> LevyTriplet {
        LevyTriplet::new(
            0.0,
            1.0,
            Some(JumpSpec {
                rate: 1.0,
                dist: JumpDistribution::DoubleExponential {
                    p: 0.5,
                    eta_plus,
                    eta_minus,
                },
            }),
        )
        .unwrap()
        .center()
    }

    fn asym_discrete() -> LevyTriplet {
        LevyTriplet::new(
            0.0,
            1.0,
            Some(JumpSpec {
                rate: 1.0,
                dist: JumpDistribution::Discrete {
                    atoms: vec![(1.0, 0.8), (-2.0, 0.2)],
                },
            }),
        )
        .unwrap()
        .center()
    }

    /// Brute-force sup over a uniform theta grid; independent of Newton.
    fn grid_sup(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        (0..=n)
            .map(|i| f(lo + (hi - lo) * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn brownian_closed_forms() {
        let m = bm();
        assert!((m.psi(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.psi_prime(2.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(m.psi(0.0).unwrap(), 0.0);
        assert_eq!(m.theta_star(), (f64::NEG_INFINITY, f64::INFINITY));
        for c in [0.1, 0.5, 1.0, 2.0, 5.0] {
            assert!((m.legendre(c).unwrap() - c * c / 2.0).abs() < 1e-10);
        }
        assert!((m.legendre_dual(1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((m.gamma_inverse(1.0).unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(m.gamma_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn centering() {
        let m = LevyTriplet::brownian(0.7, 1.0).unwrap().center();
        assert_eq!(m.b(), 0.0);
        let unchanged = bm().center();
        assert_eq!(unchanged, bm());
        let d = asym_discrete();
        assert!(d.psi_prime(0.0).unwrap().abs() < 1e-12);
        // E J = 0.8 - 0.4 = 0.4; compensator only sees the atom at +1? no: |1| is not < 1
        assert!((d.effective_drift() + 0.4).abs() < 1e-15);
        let de = double_exp(3.0, 5.0);
        assert!(de.psi_prime(0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn compensator_round_trip() {
        let jumps = Some(JumpSpec {
            rate: 2.0,
            dist: JumpDistribution::Gaussian {
                mean: 0.3,
                std: 0.5,
            },
        });
        let m = LevyTriplet::new(0.25, 1.2, jumps.clone()).unwrap();
        let again = LevyTriplet::with_effective_drift(m.effective_drift(), 1.2, jumps).unwrap();
        assert!((again.b() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn theta_star_endpoints() {
        assert_eq!(double_exp(3.0, 5.0).theta_star(), (-5.0, 3.0));
        assert_eq!(
            asym_discrete().theta_star(),
            (f64::NEG_INFINITY, f64::INFINITY)
        );
        let m = double_exp(3.0, 5.0);
        assert!(matches!(m.psi(3.0), Err(Error::Domain { .. })));
        assert!(matches!(m.psi(-5.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn one_sided_double_exponential_domain() {
        let m = LevyTriplet::new(
            0.0,
            1.0,
            Some(JumpSpec {
                rate: 1.0,
                dist: JumpDistribution::DoubleExponential {
                    p: 1.0,
                    eta_plus: 2.0,
                    eta_minus: 1.0,
                },
            }),
        )
        .unwrap();
        assert_eq!(m.theta_star(), (f64::NEG_INFINITY, 2.0));
        assert!(m.psi(-40.0).is_ok());
    }

    #[test]
    fn psi_prime_matches_finite_difference() {
        let h = 1e-5;
        for m in [double_exp(3.0, 3.0), asym_discrete(), double_exp(2.0, 4.0)] {
            for theta in [-1.0, -0.3, 0.0, 0.7, 1.5] {
                let fd = (m.psi(theta + h).unwrap() - m.psi(theta - h).unwrap()) / (2.0 * h);
                assert!((fd - m.psi_prime(theta).unwrap()).abs() < 1e-6, "{theta}");
            }
        }
    }

    #[test]
    fn legendre_matches_grid_search() {
        for (m, alpha) in [
            (double_exp(3.0, 3.0), 0.5),
            (double_exp(3.0, 5.0), 1.3),
            (double_exp(3.0, 5.0), -0.8),
            (asym_discrete(), 0.5),
            (asym_discrete(), 2.0),
        ] {
            let (lo, hi) = m.theta_star();
            let (lo, hi) = (lo.max(-10.0) + 1e-9, hi.min(10.0) - 1e-9);
            let oracle = grid_sup(|t| alpha * t - m.psi(t).unwrap(), lo, hi, 100_000);
            assert!(
                (m.legendre(alpha).unwrap() - oracle).abs() < 1e-6,
                "alpha={alpha}"
            );
        }
    }

    #[test]
    fn legendre_dual_matches_grid_search() {
        let m = asym_discrete();
        for alpha in [0.4, 1.0, 2.5] {
            let oracle = grid_sup(|t| alpha * t - m.psi(-t).unwrap(), -10.0, 10.0, 100_000);
            assert!((m.legendre_dual(alpha).unwrap() - oracle).abs() < 1e-6);
        }
        let sym = double_exp(3.0, 3.0);
        for alpha in [0.2, 1.0, 3.0] {
            assert!(
                (sym.legendre(alpha).unwrap() - sym.legendre_dual(alpha).unwrap()).abs() < 1e-10
            );
        }
    }

    #[test]
    fn qsd_theta_brownian_roots() {
        let m = bm();
        assert!((m.qsd_theta(1.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.qsd_theta(1.0, 0.375).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(m.qsd_theta(1.0, 0.6), Err(Error::NoRoot { .. })));
        assert!(matches!(
            m.qsd_theta(0.0, 0.6),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(m.phase(1.0, 0.5).unwrap(), Phase::Critical);
        assert_eq!(m.phase(1.0, 0.5 + 2e-10).unwrap(), Phase::Critical);
        assert_eq!(m.phase(1.0, 0.5 + 1e-6).unwrap(), Phase::Supercritical);
    }

    #[test]
    fn esscher_identity_and_mean() {
        let m = double_exp(3.0, 5.0);
        let id = m.esscher_tilt(0.0, 0.0).unwrap();
        assert_eq!(id.tilted, m);
        let t = bm().esscher_tilt(1.0, 0.0).unwrap();
        assert!((t.unit_mean() - 1.0).abs() < 1e-15);
        let t = m.esscher_tilt(1.2, 0.4).unwrap();
        assert!((t.unit_mean() - (m.psi_prime(1.2).unwrap() - 0.4)).abs() < 1e-12);
        assert_eq!(t.tilted.sigma(), m.sigma());
    }

    #[test]
    fn dual_reflection() {
        let d = LevyTriplet::new(
            0.0,
            1.0,
            Some(JumpSpec {
                rate: 1.0,
                dist: JumpDistribution::Discrete {
                    atoms: vec![(1.0, 1.0)],
                },
            }),
        )
        .unwrap();
        let r = d.dual_reflect();
        assert_eq!(
            r.jumps().unwrap().dist,
            JumpDistribution::Discrete {
                atoms: vec![(-1.0, 1.0)]
            }
        );
        let sym = double_exp(3.0, 3.0);
        assert_eq!(sym.dual_reflect(), sym);
        let m = asym_discrete();
        assert_eq!(m.dual_reflect().dual_reflect(), m);
        for theta in [-1.0, 0.5, 2.0] {
            assert!((m.dual_reflect().psi(theta).unwrap() - m.psi(-theta).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn model_document_parsing() {
        let m = ModelDocument::from_json(
            r#"{"b": 0.3, "sigma": 1.0, "jump": {"rate": 1.0,
                "dist": {"type": "double_exp", "p": 0.5, "eta_plus": 3.0, "eta_minus": 5.0}},
                "center": true}"#,
        )
        .unwrap();
        assert!(m.mean().abs() < 1e-12);
        assert_eq!(m.theta_star(), (-5.0, 3.0));
        let g = ModelDocument::from_json(r#"{"b": 0.0, "sigma": 2.0}"#).unwrap();
        assert_eq!(g, LevyTriplet::brownian(0.0, 2.0).unwrap());
        assert!(ModelDocument::from_json(r#"{"b": 0.0, "sigma": 0.0}"#).is_err());
        let disc = ModelDocument::from_json(
            r#"{"b": 0, "sigma": 1, "jump": {"rate": 2, "dist": {"type": "discrete", "atoms": [[1, 0.8], [-2, 0.2]]}}}"#,
        )
        .unwrap();
        assert_eq!(disc.jump_rate(), 2.0);
        assert!(ModelDocument::from_json(
            r#"{"b": 0, "sigma": 1, "jump": {"rate": 2, "dist": {"type": "discrete", "atoms": [[1, 0.5]]}}}"#,
        )
        .is_err());
    }

    fn models() -> Vec<LevyTriplet> {
        vec![
            bm(),
            double_exp(3.0, 3.0),
            double_exp(2.0, 5.0),
            asym_discrete(),
            LevyTriplet::new(
                0.0,
                0.8,
                Some(JumpSpec {
                    rate: 1.5,
                    dist: JumpDistribution::Gaussian {
                        mean: -0.4,
                        std: 0.6,
                    },
                }),
            )
            .unwrap()
            .center(),
        ]
    }

    proptest! {
        #[test]
        fn psi_is_convex(k in 0usize..5, a in -0.95f64..0.95, b in -0.95f64..0.95, t in 0.0f64..1.0) {
            let m = &models()[k];
            let (lo, hi) = m.theta_star();
            let scale = |u: f64| if u < 0.0 { u * lo.abs().min(3.0) } else { u * hi.min(3.0) };
            let (x, y) = (scale(a), scale(b));
            let mid = m.psi(t * x + (1.0 - t) * y).unwrap();
            prop_assert!(mid <= t * m.psi(x).unwrap() + (1.0 - t) * m.psi(y).unwrap() + 1e-12);
        }

        #[test]
        fn fenchel_young(k in 0usize..5, alpha in -3.0f64..3.0, u in -0.95f64..0.95) {
            let m = &models()[k];
            let (lo, hi) = m.theta_star();
            let theta = if u < 0.0 { u * lo.abs().min(3.0) } else { u * hi.min(3.0) };
            let gamma = m.legendre(alpha).unwrap();
            prop_assert!(alpha * theta <= m.psi(theta).unwrap() + gamma + 1e-10);
            let (opt, _) = m.conjugate_point(alpha).unwrap();
            prop_assert!((alpha * opt - m.psi(opt).unwrap() - gamma).abs() < 1e-8);
        }

        #[test]
        fn legendre_nonnegative_monotone(k in 0usize..5, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let m = &models()[k];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (gl, gh) = (m.legendre(lo).unwrap(), m.legendre(hi).unwrap());
            prop_assert!(gl >= 0.0);
            prop_assert!(gl <= gh + 1e-12);
            prop_assert!(m.legendre(0.0).unwrap().abs() < 1e-14);
        }

        #[test]
        fn gamma_inverse_round_trip(k in 0usize..5, r in 0.01f64..4.0) {
            let m = &models()[k];
            let c = m.gamma_inverse(r).unwrap();
            prop_assert!((m.legendre(c).unwrap() - r).abs() < 1e-8);
        }

        #[test]
        fn qsd_theta_residual(k in 0usize..5, c in 0.2f64..2.5, frac in 0.02f64..1.0) {
            let m = &models()[k];
            let gamma_c = m.legendre(c).unwrap();
            let r = frac * gamma_c;
            prop_assume!(r > 0.0);
            let theta = m.qsd_theta(c, r).unwrap();
            let (theta_c, _) = m.conjugate_point(c).unwrap();
            if m.phase(c, r).unwrap() != Phase::Critical {
                prop_assert!((m.psi(theta).unwrap() - c * theta + r).abs() < 1e-10);
            }
            prop_assert!(theta <= theta_c + 1e-10);
        }

        #[test]
        fn esscher_exponent_shift(k in 0usize..5, theta in -0.9f64..0.9, c in 0.0f64..2.0, u in -0.9f64..0.9) {
            let m = &models()[k];
            let (lo, hi) = m.theta_star();
            let theta = if theta < 0.0 { theta * lo.abs().min(2.0) } else { theta * hi.min(2.0) };
            let tilted = m.esscher_tilt(theta, c).unwrap();
            // keep theta + u inside the base domain
            let (tlo, thi) = tilted.tilted.theta_star();
            let u = if u < 0.0 { u * tlo.abs().min(2.0) } else { u * thi.min(2.0) };
            let lhs = tilted.tilted.psi(u).unwrap();
            let rhs = m.psi(theta + u).unwrap() - m.psi(theta).unwrap() - c * u;
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
