//! Path-level Monte Carlo for `X_t - c t`.
//!
//! Between jumps the process is a Brownian motion with constant drift, so
//! everything a step needs about the diffusive piece (did it cross zero, when,
//! how low did it go) can be drawn exactly from the Brownian bridge between the
//! two endpoints. Jumps are placed at exact exponential times. The grid step
//! `dt` only decides how often observers get to look at the path.

use rand::Rng;
use rand_distr::{Distribution, Exp1, InverseGaussian, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{JumpDistribution, LevyTriplet, TiltedModel};
use crate::rng::{purpose, stream, StreamRng};
use crate::stats::{pairwise_sum, EmpiricalDistribution, Law, MeanSe};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub bridge_correction: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            seed: 0,
            bridge_correction: true,
        }
    }
}

impl PathConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            dt,
            horizon,
            seed,
            bridge_correction: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} must be > 0",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon = {} must be >= 0",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// What an observer wants after looking at a piece of path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    Continue,
    /// Stop `offset` time units into the piece, at `position`.
    Stop {
        offset: f64,
        position: f64,
    },
}

/// Watches the pieces of a path as [`Motion::evolve`] generates them.
pub trait Observer {
    /// Diffusive piece from `a` to `b` over time `h` with volatility `sigma`.
    fn diffusive<R: Rng + ?Sized>(
        &mut self,
        a: f64,
        b: f64,
        h: f64,
        sigma: f64,
        rng: &mut R,
    ) -> Flow;

    fn jumped(&mut self, _before: f64, _after: f64) -> Flow {
        Flow::Continue
    }
}

/// Watches nothing.
pub struct Free;

impl Observer for Free {
    fn diffusive<R: Rng + ?Sized>(&mut self, _: f64, _: f64, _: f64, _: f64, _: &mut R) -> Flow {
        Flow::Continue
    }
}

/// Absorption at the first passage below zero.
///
/// With `bridge` set the diffusive piece is checked for an excursion below
/// zero between its endpoints and the hitting time is drawn from the bridge
/// first-passage law; otherwise only endpoints are inspected.
pub struct KillAtZero {
    pub bridge: bool,
}

impl Observer for KillAtZero {
    fn diffusive<R: Rng + ?Sized>(
        &mut self,
        a: f64,
        b: f64,
        h: f64,
        sigma: f64,
        rng: &mut R,
    ) -> Flow {
        if !self.bridge {
            return if b <= 0.0 {
                Flow::Stop {
                    offset: h,
                    position: b,
                }
            } else {
                Flow::Continue
            };
        }
        let crossed = b <= 0.0 || rng.random::<f64>() < bridge_crossing_probability(a, b, h, sigma);
        if crossed {
            Flow::Stop {
                offset: bridge_hitting_time(a, b, h, sigma, rng),
                position: 0.0,
            }
        } else {
            Flow::Continue
        }
    }

    fn jumped(&mut self, _before: f64, after: f64) -> Flow {
        if after <= 0.0 {
            Flow::Stop {
                offset: 0.0,
                position: after,
            }
        } else {
            Flow::Continue
        }
    }
}

/// `P(min of the bridge a -> b over time h <= 0)` for `a, b > 0`.
pub fn bridge_crossing_probability(a: f64, b: f64, h: f64, sigma: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 1.0;
    }
    (-2.0 * a * b / (sigma * sigma * h)).exp()
}

/// First time a Brownian bridge from `a > 0` to `b` over `[0, h]` reaches
/// zero, given that it does. For `b > 0` the reflection principle reduces
/// this to the bridge towards `-b`.
pub fn bridge_hitting_time<R: Rng + ?Sized>(
    a: f64,
    b: f64,
    h: f64,
    sigma: f64,
    rng: &mut R,
) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let shape = a * a / (sigma * sigma * h);
    let end = b.abs();
    // y = s / (h - s) is inverse Gaussian (Levy when the bridge ends at 0)
    let y = if end > 0.0 {
        match InverseGaussian::new(a / end, shape) {
            Ok(ig) => ig.sample(rng),
            Err(_) => 0.0,
        }
    } else {
        let z: f64 = StandardNormal.sample(rng);
        shape / (z * z)
    };
    if y.is_finite() {
        (h * y / (1.0 + y)).min(h)
    } else {
        h
    }
}

/// Minimum of a Brownian bridge from `a` to `b` over time `h`.
pub fn bridge_minimum<R: Rng + ?Sized>(a: f64, b: f64, h: f64, sigma: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    0.5 * (a + b - ((b - a).powi(2) - 2.0 * sigma * sigma * h * u.ln()).sqrt())
}

/// Maximum of a Brownian bridge from `a` to `b` over time `h`.
pub fn bridge_maximum<R: Rng + ?Sized>(a: f64, b: f64, h: f64, sigma: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    0.5 * (a + b + ((b - a).powi(2) - 2.0 * sigma * sigma * h * u.ln()).sqrt())
}

/// Outcome of [`Motion::evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Done(f64),
    Stopped { elapsed: f64, position: f64 },
}

/// `X_t - c t` in a form ready for simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub drift: f64,
    pub sigma: f64,
    pub jump_rate: f64,
    pub jumps: Option<JumpDistribution>,
}

impl Motion {
    pub fn new(model: &LevyTriplet, c: f64) -> Self {
        Self {
            drift: model.effective_drift() - c,
            sigma: model.sigma(),
            jump_rate: model.jump_rate(),
            jumps: model.jumps().map(|j| j.dist.clone()),
        }
    }

    /// Runs the path from `x` for time `h`, reporting every piece to `obs`.
    pub fn evolve<R: Rng + ?Sized, O: Observer>(
        &self,
        mut x: f64,
        h: f64,
        rng: &mut R,
        obs: &mut O,
    ) -> Step {
        let mut elapsed = 0.0;
        while elapsed < h {
            let remaining = h - elapsed;
            let wait = if self.jump_rate > 0.0 {
                let e: f64 = Exp1.sample(rng);
                e / self.jump_rate
            } else {
                f64::INFINITY
            };
            let piece = wait.min(remaining);
            let z: f64 = StandardNormal.sample(rng);
            let end = x + self.drift * piece + self.sigma * piece.sqrt() * z;
            if let Flow::Stop { offset, position } = obs.diffusive(x, end, piece, self.sigma, rng) {
                return Step::Stopped {
                    elapsed: elapsed + offset,
                    position,
                };
            }
            x = end;
            elapsed += piece;
            if wait < remaining {
                let jump = self.jumps.as_ref().map_or(0.0, |d| d.sample(rng));
                let after = x + jump;
                if let Flow::Stop { offset, position } = obs.jumped(x, after) {
                    return Step::Stopped {
                        elapsed: elapsed + offset,
                        position,
                    };
                }
                x = after;
            } else {
                break;
            }
        }
        Step::Done(x)
    }

    /// Exact draw of the displacement over time `t`, path not needed.
    pub fn increment<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let mut x = self.drift * t + self.sigma * t.sqrt() * z;
        if let (Some(d), true) = (&self.jumps, self.jump_rate * t > 0.0) {
            let n = Poisson::new(self.jump_rate * t).map_or(0.0, |p| p.sample(rng)) as u64;
            for _ in 0..n {
                x += d.sample(rng);
            }
        }
        x
    }
}

/// Grid times `dt, 2 dt, ...` up to `horizon`, last step possibly shorter.
fn grid_steps(dt: f64, horizon: f64) -> impl Iterator<Item = (f64, f64)> {
    let n = if horizon <= 0.0 {
        0
    } else {
        ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
    };
    (0..n).map(move |k| {
        let t0 = k as f64 * dt;
        let t1 = if k + 1 == n {
            horizon
        } else {
            (k + 1) as f64 * dt
        };
        (t0, t1 - t0)
    })
}

/// Samples `f(rng, i)` for `i < n`, each index on its own stream.
pub fn par_indexed<T, F>(n: usize, seed: u64, offset: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, offset + i as u64);
            f(&mut rng, i)
        })
        .collect()
}

/// Grid skeleton of a path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

/// Skeleton of `X_t - c t` started at `x0` on the grid of `cfg`.
pub fn simulate_path(
    model: &LevyTriplet,
    c: f64,
    x0: f64,
    cfg: &PathConfig,
) -> Result<SampledPath> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, purpose::PATHS);
    Ok(sample_skeleton(&Motion::new(model, c), x0, cfg, &mut rng))
}

pub fn sample_skeleton<R: Rng + ?Sized>(
    motion: &Motion,
    x0: f64,
    cfg: &PathConfig,
    rng: &mut R,
) -> SampledPath {
    let mut times = vec![0.0];
    let mut positions = vec![x0];
    let mut x = x0;
    for (t0, h) in grid_steps(cfg.dt, cfg.horizon) {
        if let Step::Done(next) = motion.evolve(x, h, rng, &mut Free) {
            x = next;
        }
        times.push(t0 + h);
        positions.push(x);
    }
    SampledPath { times, positions }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KilledPathResult {
    pub survived: bool,
    /// Absorption time, or the horizon for survivors.
    pub tau: f64,
    /// Position at `min(tau, horizon)`.
    pub terminal: f64,
    /// Position at the requested checkpoint, if alive there.
    pub checkpoint: Option<f64>,
}

fn check_start(x0: f64) -> Result<()> {
    if x0.is_finite() && x0 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "start x0 = {x0} must be > 0"
        )))
    }
}

/// One path of `X_t - c t` from `x0 > 0`, absorbed below zero.
pub fn simulate_killed(
    model: &LevyTriplet,
    c: f64,
    x0: f64,
    cfg: &PathConfig,
) -> Result<KilledPathResult> {
    cfg.validate()?;
    check_start(x0)?;
    let mut rng = stream(cfg.seed, purpose::PATHS);
    Ok(run_killed(&Motion::new(model, c), x0, cfg, None, &mut rng))
}

/// Killed path with an optional checkpoint time at which the position is
/// recorded; the path continues to the horizon afterwards.
pub fn run_killed<R: Rng + ?Sized>(
    motion: &Motion,
    x0: f64,
    cfg: &PathConfig,
    checkpoint: Option<f64>,
    rng: &mut R,
) -> KilledPathResult {
    let mut obs = KillAtZero {
        bridge: cfg.bridge_correction,
    };
    let mut x = x0;
    let mut seen = None;
    if checkpoint == Some(0.0) {
        seen = Some(x0);
    }
    for (t0, h) in grid_steps(cfg.dt, cfg.horizon) {
        // split the step at the checkpoint so it is observed exactly
        let pieces = match checkpoint {
            Some(tc) if tc > t0 && tc < t0 + h => [(t0, tc - t0), (tc, t0 + h - tc)],
            _ => [(t0, h), (t0 + h, 0.0)],
        };
        for (start, len) in pieces {
            if len <= 0.0 {
                continue;
            }
            match motion.evolve(x, len, rng, &mut obs) {
                Step::Done(next) => x = next,
                Step::Stopped { elapsed, position } => {
                    return KilledPathResult {
                        survived: false,
                        tau: start + elapsed,
                        terminal: position,
                        checkpoint: seen,
                    };
                }
            }
            if checkpoint.is_some_and(|tc| (start + len - tc).abs() <= 1e-12 * (1.0 + tc)) {
                seen = Some(x);
            }
        }
    }
    KilledPathResult {
        survived: true,
        tau: cfg.horizon,
        terminal: x,
        checkpoint: seen,
    }
}

/// Conditioned law at `t` together with the survival probability.
#[derive(Debug, Clone)]
pub struct YaglomEstimate {
    pub t: f64,
    pub distribution: EmpiricalDistribution,
    pub survival: MeanSe,
    pub n_paths: usize,
    pub n_survivors: usize,
}

/// Empirical law of `X_t - c t` given survival to `t`, from `x0`.
pub fn yaglom_mc(
    model: &LevyTriplet,
    c: f64,
    x0: f64,
    t: f64,
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<YaglomEstimate> {
    yaglom_sample(model, c, x0, t, None, n_paths, cfg)
}

/// As [`yaglom_mc`], sampling under the Esscher tilt by `theta` and
/// reweighting survivors by `dP/dQ`. With `theta = theta_c` the tilted
/// motion has no drift, so far more paths survive to large `t`.
pub fn yaglom_mc_tilted(
    model: &LevyTriplet,
    c: f64,
    x0: f64,
    t: f64,
    theta: f64,
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<YaglomEstimate> {
    let tilt = model.esscher_tilt(theta, c)?;
    yaglom_sample(model, c, x0, t, Some(&tilt), n_paths, cfg)
}

fn yaglom_sample(
    model: &LevyTriplet,
    c: f64,
    x0: f64,
    t: f64,
    tilt: Option<&TiltedModel>,
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<YaglomEstimate> {
    cfg.validate()?;
    check_start(x0)?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    if t <= 0.0 {
        return Ok(YaglomEstimate {
            t: 0.0,
            distribution: EmpiricalDistribution::uniform(vec![x0])?,
            survival: MeanSe::proportion(n_paths, n_paths),
            n_paths,
            n_survivors: n_paths,
        });
    }
    let motion = match tilt {
        Some(tm) => Motion::new(&tm.tilted, 0.0),
        None => Motion::new(model, c),
    };
    let run_cfg = cfg.with_horizon(t);
    let outcomes = par_indexed(n_paths, cfg.seed, purpose::PATHS, |rng, _| {
        let res = run_killed(&motion, x0, &run_cfg, None, rng);
        let weight = match (res.survived, tilt) {
            (false, _) => 0.0,
            (true, None) => 1.0,
            (true, Some(tm)) => tm.log_weight(res.terminal - x0, t).exp(),
        };
        (res.terminal, weight)
    });
    let weights: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let survival = MeanSe::from_samples(&weights);
    let (xs, ws): (Vec<f64>, Vec<f64>) = outcomes.into_iter().filter(|o| o.1 > 0.0).unzip();
    if xs.is_empty() {
        return Err(Error::AllAbsorbed { t, n_paths });
    }
    let n_survivors = xs.len();
    let distribution = match tilt {
        Some(_) => EmpiricalDistribution::weighted(xs, ws)?,
        None => EmpiricalDistribution::uniform(xs)?,
    };
    Ok(YaglomEstimate {
        t,
        distribution,
        survival,
        n_paths,
        n_survivors,
    })
}

/// First-passage times below zero, censored at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstPassageSample {
    pub taus: Vec<f64>,
    pub censored: Vec<bool>,
    pub horizon: f64,
}

impl FirstPassageSample {
    pub fn censored_fraction(&self) -> f64 {
        self.censored.iter().filter(|c| **c).count() as f64 / self.taus.len().max(1) as f64
    }

    /// Exponential hazard fitted to the observed exposure: events per unit time.
    pub fn tail_rate(&self) -> f64 {
        let events = self.censored.iter().filter(|c| !**c).count() as f64;
        events / pairwise_sum(&self.taus)
    }

    /// Mean of `tau` with censored runs completed by the fitted exponential
    /// tail: `horizon + 1 / rate`.
    pub fn mean_censor_corrected(&self) -> MeanSe {
        let rate = self.tail_rate();
        let tail = if rate > 0.0 { 1.0 / rate } else { 0.0 };
        let completed: Vec<f64> = self
            .taus
            .iter()
            .zip(&self.censored)
            .map(|(t, c)| if *c { t + tail } else { *t })
            .collect();
        MeanSe::from_samples(&completed)
    }
}

/// `tau` for `n_paths` paths from `x0`.
pub fn first_passage_mc(
    model: &LevyTriplet,
    c: f64,
    x0: f64,
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<FirstPassageSample> {
    check_start(x0)?;
    first_passage_from(model, c, &crate::stats::PointMass(x0), n_paths, cfg)
}

/// `tau` for `n_paths` paths with starting points drawn from `start`.
pub fn first_passage_from<L: Law + ?Sized>(
    model: &LevyTriplet,
    c: f64,
    start: &L,
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<FirstPassageSample> {
    cfg.validate()?;
    let motion = Motion::new(model, c);
    let runs = par_indexed(n_paths, cfg.seed, purpose::PATHS, |rng, _| {
        let x0 = start.quantile(rng.random::<f64>()).max(f64::MIN_POSITIVE);
        run_killed(&motion, x0, cfg, None, rng)
    });
    Ok(FirstPassageSample {
        taus: runs.iter().map(|r| r.tau).collect(),
        censored: runs.iter().map(|r| r.survived).collect(),
        horizon: cfg.horizon,
    })
}

/// Draws of `X_t - c t - x0`, no killing.
pub fn sample_increments(model: &LevyTriplet, c: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let motion = Motion::new(model, c);
    par_indexed(n, seed, purpose::PATHS, |rng, _| motion.increment(t, rng))
}

/// `E f(X_t - c t)` estimated twice: directly, and under the Esscher tilt by
/// `theta` with the likelihood-ratio weight `exp(-theta Y_t + psi_c(theta) t)`.
pub fn girsanov_check<F>(
    model: &LevyTriplet,
    theta: f64,
    c: f64,
    t: f64,
    n: usize,
    seed: u64,
    f: F,
) -> Result<(MeanSe, MeanSe)>
where
    F: Fn(f64) -> f64 + Sync,
{
    let tilt = model.esscher_tilt(theta, c)?;
    let plain: Vec<f64> = sample_increments(model, c, t, n, seed)
        .into_iter()
        .map(&f)
        .collect();
    let q = Motion::new(&tilt.tilted, 0.0);
    let reweighted = par_indexed(n, seed, purpose::CONTROL, |rng, _| {
        let y = q.increment(t, rng);
        f(y) * tilt.log_weight(y, t).exp()
    });
    Ok((
        MeanSe::from_samples(&plain),
        MeanSe::from_samples(&reweighted),
    ))
}

/// Watches the running minimum of a path started at 0 and records the depth
/// intervals crossed continuously.
struct LadderWatch {
    min: f64,
    x_max: f64,
    segments: Vec<(f64, f64)>,
}

impl LadderWatch {
    fn creep(&mut self, new_min: f64) {
        let (lo, hi) = (-self.min, -new_min);
        match self.segments.last_mut() {
            Some(last) if last.1 == lo => last.1 = hi,
            _ => self.segments.push((lo, hi)),
        }
        self.min = new_min;
    }
}

impl Observer for LadderWatch {
    fn diffusive<R: Rng + ?Sized>(
        &mut self,
        a: f64,
        b: f64,
        h: f64,
        sigma: f64,
        rng: &mut R,
    ) -> Flow {
        let m = bridge_minimum(a, b, h, sigma, rng);
        if m < self.min {
            self.creep(m);
        }
        if -self.min >= self.x_max {
            Flow::Stop {
                offset: h,
                position: b,
            }
        } else {
            Flow::Continue
        }
    }

    fn jumped(&mut self, _before: f64, after: f64) -> Flow {
        if after < self.min {
            // overshoot: the skipped depths are never visited continuously
            self.min = after;
        }
        if -self.min >= self.x_max {
            Flow::Stop {
                offset: 0.0,
                position: after,
            }
        } else {
            Flow::Continue
        }
    }
}

/// Renewal function of the descending ladder heights on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRenewal {
    pub xs: Vec<f64>,
    pub h: Vec<f64>,
    /// Fraction of paths stopped by the horizon before reaching `max(xs)`.
    pub truncated_fraction: f64,
}

/// Renewal function `h(x) = E int 1{H_t <= x} dt` of the descending ladder
/// height process `H` of `X~ = -(X_t - c t)` under the tilt, with the local
/// time normalised so that `H` has unit drift.
///
/// Under that normalisation the renewal density at `y` is the probability
/// that `X~` creeps downward across `-y`, so `h(x)` is the expected length of
/// `[0, x]` covered by the depths the running minimum of `X~` passes through
/// continuously. Each path contributes exactly the union of its creeping
/// intervals, so the estimate is nondecreasing in `x` with `h(0) = 0`.
pub fn ladder_renewal(
    tilted: &TiltedModel,
    xs: &[f64],
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<LadderRenewal> {
    cfg.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be >= 1".into()));
    }
    let dual = tilted.dual();
    if dual.mean() < -1e-9 {
        return Err(Error::InvalidArgument(format!(
            "ladder process drifts to -inf (mean {})",
            dual.mean()
        )));
    }
    let x_max = xs.iter().copied().fold(0.0, f64::max);
    let motion = Motion::new(&dual, 0.0);
    let runs = par_indexed(n_paths, cfg.seed, purpose::LADDER, |rng, _| {
        let mut watch = LadderWatch {
            min: 0.0,
            x_max,
            segments: Vec::new(),
        };
        let mut x = 0.0;
        let mut truncated = x_max > 0.0;
        for (_, h) in grid_steps(cfg.dt, cfg.horizon) {
            match motion.evolve(x, h, rng, &mut watch) {
                Step::Done(next) => x = next,
                Step::Stopped { .. } => {
                    truncated = false;
                    break;
                }
            }
        }
        (watch.segments, truncated)
    });
    let truncated = runs.iter().filter(|r| r.1).count();
    let mut los: Vec<f64> = Vec::new();
    let mut his: Vec<f64> = Vec::new();
    for (segs, _) in &runs {
        for (lo, hi) in segs {
            los.push(*lo);
            his.push(*hi);
        }
    }
    let (los_sorted, his_sorted) = (sorted_with_prefix(los), sorted_with_prefix(his));
    let n = n_paths as f64;
    let h = xs
        .iter()
        .map(|&x| {
            if x <= 0.0 {
                0.0
            } else {
                ((los_sorted.positive_part_sum(x) - his_sorted.positive_part_sum(x)) / n).max(0.0)
            }
        })
        .collect();
    Ok(LadderRenewal {
        xs: xs.to_vec(),
        h,
        truncated_fraction: truncated as f64 / n,
    })
}

struct SortedPrefix {
    values: Vec<f64>,
    prefix: Vec<f64>,
}

fn sorted_with_prefix(mut values: Vec<f64>) -> SortedPrefix {
    values.sort_by(f64::total_cmp);
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in &values {
        prefix.push(prefix.last().unwrap() + v);
    }
    SortedPrefix { values, prefix }
}

impl SortedPrefix {
    /// `sum_i (x - v_i)^+`.
    fn positive_part_sum(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|v| *v < x);
        k as f64 * x - self.prefix[k]
    }
}
