//! The F-KPP equation `u_t = L* u + r (u^2 - u)` on a truncated line, its
//! front speed, and travelling waves built from Galton-Watson level counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::branching::{gw_counts, BranchingConfig, GwCounts};
use crate::error::{Error, Result};
use crate::levy::{JumpDistribution, LevyTriplet};
use crate::paths::{par_indexed, Free, Motion, Step};
use crate::rng::purpose;
use crate::roots::bisect_increasing;
use crate::stats::{linear_fit, MeanSe};

/// Jump cells lighter than this are dropped before renormalising.
pub const JUMP_TAIL_CUT: f64 = 1e-14;

/// Finite-difference form of
/// `L* f = (sigma^2 / 2) f'' + a f' + rate * (E f(x - J) - f(x))`
/// on a uniform grid, with `a = -drift` for the uncompensated drift.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointStencil {
    pub dx: f64,
    pub diffusion: f64,
    pub advection: f64,
    pub jump_rate: f64,
    /// `(index offset, weight)`, weights summing to 1.
    pub jump_weights: Vec<(i64, f64)>,
}

/// Stencil of the adjoint generator for grid spacing `dx`.
pub fn discretize_adjoint(model: &LevyTriplet, dx: f64) -> Result<AdjointStencil> {
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid spacing {dx} must be > 0"
        )));
    }
    let jump_weights = match model.jumps() {
        Some(j) => reflected_jump_weights(&j.dist, dx),
        None => Vec::new(),
    };
    Ok(AdjointStencil {
        dx,
        diffusion: 0.5 * model.sigma() * model.sigma(),
        advection: -model.effective_drift(),
        jump_rate: model.jump_rate(),
        jump_weights,
    })
}

/// Weights of `f(x - J)` on the grid. Continuous laws are binned into cells
/// of width `dx` centred on the nodes; atoms are split linearly between the
/// two neighbouring nodes, which keeps the mean exact.
fn reflected_jump_weights(dist: &JumpDistribution, dx: f64) -> Vec<(i64, f64)> {
    let mut weights: Vec<(i64, f64)> = Vec::new();
    match dist {
        JumpDistribution::Discrete { atoms } => {
            for (z, q) in atoms {
                let s = -z / dx;
                let lo = s.floor();
                let frac = s - lo;
                weights.push((lo as i64, q * (1.0 - frac)));
                if frac > 0.0 {
                    weights.push((lo as i64 + 1, q * frac));
                }
            }
        }
        _ => {
            // J in ((k - 1/2) dx, (k + 1/2) dx] moves f by -k nodes
            let mass = |k: i64| dist.cdf((k as f64 + 0.5) * dx) - dist.cdf((k as f64 - 0.5) * dx);
            let mut k = 0i64;
            loop {
                let m = mass(k);
                if m > JUMP_TAIL_CUT || k == 0 {
                    weights.push((-k, m));
                } else if dist.cdf((k as f64 - 0.5) * dx) > 1.0 - JUMP_TAIL_CUT {
                    break;
                }
                k += 1;
            }
            let mut k = -1i64;
            loop {
                let m = mass(k);
                if m > JUMP_TAIL_CUT {
                    weights.push((-k, m));
                } else if dist.cdf((k as f64 + 0.5) * dx) < JUMP_TAIL_CUT {
                    break;
                }
                k -= 1;
            }
        }
    }
    weights.sort_by_key(|w| w.0);
    let mut merged: Vec<(i64, f64)> = Vec::with_capacity(weights.len());
    for (k, w) in weights {
        match merged.last_mut() {
            Some(last) if last.0 == k => last.1 += w,
            _ => merged.push((k, w)),
        }
    }
    let total: f64 = merged.iter().map(|w| w.1).sum();
    merged.iter_mut().for_each(|w| w.1 /= total);
    merged
}

impl AdjointStencil {
    /// Same operator plus `extra * f'`.
    pub fn with_extra_advection(&self, extra: f64) -> Self {
        Self {
            advection: self.advection + extra,
            ..self.clone()
        }
    }

    fn self_weight(&self) -> f64 {
        self.jump_weights
            .iter()
            .find(|w| w.0 == 0)
            .map_or(0.0, |w| w.1)
    }

    /// Largest `dt` for which explicit Euler with reaction rate `r` is
    /// monotone.
    pub fn max_stable_dt(&self, r: f64) -> f64 {
        let dx = self.dx;
        let rate = 2.0 * self.diffusion / (dx * dx)
            + self.advection.abs() / dx
            + self.jump_rate * (1.0 - self.self_weight())
            + r;
        1.0 / rate
    }

    /// `(L* f)_i` for node `i`, indices outside the grid clamped to the ends.
    pub fn apply_at(&self, f: &[f64], i: usize) -> f64 {
        self.apply_with(f, i, false)
    }

    /// As [`apply_at`](Self::apply_at) but with a central first difference.
    /// Second-order accurate, not monotone; used for residuals.
    pub fn apply_central_at(&self, f: &[f64], i: usize) -> f64 {
        self.apply_with(f, i, true)
    }

    fn apply_with(&self, f: &[f64], i: usize, central: bool) -> f64 {
        let n = f.len() as i64;
        let at = |k: i64| f[k.clamp(0, n - 1) as usize];
        let i = i as i64;
        let dx = self.dx;
        let mut out = self.diffusion * (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (dx * dx);
        out += if central {
            self.advection * (at(i + 1) - at(i - 1)) / (2.0 * dx)
        } else if self.advection > 0.0 {
            self.advection * (at(i + 1) - at(i)) / dx
        } else {
            self.advection * (at(i) - at(i - 1)) / dx
        };
        if self.jump_rate > 0.0 {
            let fi = at(i);
            let mut acc = 0.0;
            for (k, w) in &self.jump_weights {
                acc += w * (at(i + k) - fi);
            }
            out += self.jump_rate * acc;
        }
        out
    }

    /// `L* f` at every node.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..f.len()).map(|i| self.apply_at(f, i)).collect()
    }
}

/// Uniform grid `x_min + i dx`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    pub fn spanning(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(x_max > x_min && dx > 0.0) {
            return Err(Error::InvalidArgument(
                "grid needs x_max > x_min and dx > 0".into(),
            ));
        }
        let n = ((x_max - x_min) / dx).round() as usize + 1;
        if n < 3 {
            return Err(Error::InvalidArgument("grid needs at least 3 nodes".into()));
        }
        Ok(Self { x_min, dx, n })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontState {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub time: f64,
    /// `(t, x)` with `u(t, x) = 1/2`.
    pub front_trace: Vec<(f64, f64)>,
    /// Total magnitude removed by clipping to `[0, 1]`.
    pub clipped: f64,
}

/// Largest `x` with `u` crossing `1/2` from below, linearly interpolated.
pub fn front_position(grid: &Grid, u: &[f64]) -> Option<f64> {
    let i = u.iter().position(|v| *v >= 0.5)?;
    if i == 0 {
        return Some(grid.x(0));
    }
    let (a, b) = (u[i - 1], u[i]);
    Some(grid.x(i - 1) + grid.dx * (0.5 - a) / (b - a))
}

/// Explicit Euler for `u_t = L* u + r (u^2 - u)` with `u = 0` at the left end
/// and `u = 1` at the right end. The front is recorded every `record_every`
/// time units.
pub fn run_front(
    model: &LevyTriplet,
    r: f64,
    u0: &[f64],
    grid: &Grid,
    t_end: f64,
    dt: f64,
    record_every: f64,
) -> Result<FrontState> {
    if u0.len() != grid.n {
        return Err(Error::InvalidArgument(
            "initial profile does not match the grid".into(),
        ));
    }
    let stencil = discretize_adjoint(model, grid.dx)?;
    let max_dt = stencil.max_stable_dt(r);
    if !(dt > 0.0 && dt <= max_dt) {
        return Err(Error::Stability { dt, max_dt });
    }
    let mut u = u0.to_vec();
    let last = grid.n - 1;
    u[0] = 0.0;
    u[last] = 1.0;
    let mut next = u.clone();
    let mut time = 0.0;
    let mut clipped = 0.0;
    let mut trace = Vec::new();
    let mut next_record = 0.0;
    let steps = (t_end / dt).ceil() as usize;
    for step in 0..=steps {
        if time + 1e-9 * dt >= next_record {
            if let Some(x) = front_position(grid, &u) {
                trace.push((time, x));
            }
            next_record += record_every;
        }
        if step == steps {
            break;
        }
        let h = dt.min(t_end - time);
        if h <= 0.0 {
            break;
        }
        for i in 1..last {
            let v = u[i] + h * (stencil.apply_at(&u, i) + r * (u[i] * u[i] - u[i]));
            if !(-0.05..=1.05).contains(&v) {
                return Err(Error::Blowup {
                    t: time + h,
                    value: v,
                });
            }
            let c = v.clamp(0.0, 1.0);
            clipped += (v - c).abs();
            next[i] = c;
        }
        std::mem::swap(&mut u, &mut next);
        time += h;
    }
    Ok(FrontState {
        grid: *grid,
        u,
        time,
        front_trace: trace,
        clipped,
    })
}

/// Indicator of `[0, inf)` on the grid.
pub fn step_profile(grid: &Grid) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|x| if *x >= 0.0 { 1.0 } else { 0.0 })
        .collect()
}

/// Least-squares front speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontSpeed {
    pub speed: f64,
    pub se: f64,
    pub r_squared: f64,
    pub n: usize,
    pub window: (f64, f64),
}

/// Regression of front position on time over the last half of the trace.
pub fn front_speed(trace: &[(f64, f64)]) -> Result<FrontSpeed> {
    let t_end = trace.last().map_or(0.0, |p| p.0);
    let t_start = trace.first().map_or(0.0, |p| p.0);
    let from = 0.5 * (t_start + t_end);
    let (ts, xs): (Vec<f64>, Vec<f64>) = trace.iter().filter(|p| p.0 >= from).copied().unzip();
    if ts.len() < 10 {
        return Err(Error::InsufficientTrace {
            needed: 10,
            got: ts.len(),
        });
    }
    let fit = linear_fit(&ts, &xs);
    Ok(FrontSpeed {
        speed: fit.slope,
        se: fit.slope_se,
        r_squared: fit.r_squared,
        n: fit.n,
        window: (from, t_end),
    })
}

/// Travelling-wave profile on a symmetric grid around 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveProfile {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// Standard error of each `w` from the level-count sample.
    pub se: Vec<f64>,
    pub s: f64,
    pub c: f64,
    pub r: f64,
    pub n_runs: usize,
    pub n_decided: usize,
}

impl WaveProfile {
    /// Linear interpolation; 1 beyond the right end, the leftmost value
    /// beyond the left end.
    pub fn value(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x >= self.x[n - 1] {
            return 1.0;
        }
        if x <= self.x[0] {
            return self.w[0];
        }
        let k = self.x.partition_point(|g| *g <= x);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        self.w[k - 1] + (self.w[k] - self.w[k - 1]) * (x - x0) / (x1 - x0)
    }

    pub fn is_monotone(&self) -> bool {
        self.w.windows(2).all(|p| p[0] <= p[1])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,w,se\n");
        for i in 0..self.x.len() {
            out.push_str(&format!("{},{},{}\n", self.x[i], self.w[i], self.se[i]));
        }
        out
    }
}

/// Largest undecided fraction accepted by [`tw_from_gw`].
pub const MAX_UNDECIDED_FRACTION: f64 = 0.05;

/// `ĝ(u) = mean u^G` and its derivative.
fn pgf(sample: &[u64], u: f64) -> (f64, f64, f64) {
    let vals: Vec<f64> = sample.iter().map(|g| u.powf(*g as f64)).collect();
    let est = MeanSe::from_samples(&vals);
    let deriv = sample
        .iter()
        .map(|g| {
            if *g == 0 {
                0.0
            } else {
                *g as f64 * u.powf(*g as f64 - 1.0)
            }
        })
        .sum::<f64>()
        / sample.len() as f64;
    (est.mean, est.se, deriv)
}

/// Wave built from level counts: `w(x) = ĝ_x^{-1}(s)` for `x > 0`,
/// `w(0) = s`, and `w(-y) = ĝ_y(s)`, where `ĝ_x(u) = E u^{G_x}`.
///
/// `levels` must be a uniform grid `dx, 2 dx, ..`, so the profile lives on a
/// uniform grid symmetric about 0.
#[allow(clippy::too_many_arguments)]
pub fn tw_from_gw(
    model: &LevyTriplet,
    c: f64,
    r: f64,
    s: f64,
    levels: &[f64],
    n_runs: usize,
    cfg: &BranchingConfig,
) -> Result<WaveProfile> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level s = {s} must be in (0, 1)"
        )));
    }
    let gw = gw_counts(model, c, r, levels, n_runs, cfg)?;
    wave_from_counts(&gw, c, r, s)
}

/// The inversion step of [`tw_from_gw`] on an existing sample.
pub fn wave_from_counts(gw: &GwCounts, c: f64, r: f64, s: f64) -> Result<WaveProfile> {
    if gw.undecided_fraction() > MAX_UNDECIDED_FRACTION {
        return Err(Error::TooManyUndecided {
            undecided: gw.undecided,
            total: gw.n_runs,
            limit: MAX_UNDECIDED_FRACTION,
        });
    }
    if gw.counts.is_empty() {
        return Err(Error::TooManyUndecided {
            undecided: gw.undecided,
            total: gw.n_runs,
            limit: MAX_UNDECIDED_FRACTION,
        });
    }
    let m = gw.levels.len();
    let mut right = Vec::with_capacity(m);
    let mut left = Vec::with_capacity(m);
    for j in 0..m {
        let sample = gw.level_samples(j);
        let floor = pgf(&sample, 1e-12).0;
        if s < floor {
            return Err(Error::UndefinedInversion {
                x: gw.levels[j],
                s,
                floor,
            });
        }
        let w = bisect_increasing(|u| pgf(&sample, u).0 - s, 1e-12, 1.0, 1e-8, 200)?;
        let (_, se_g, d) = pgf(&sample, w);
        right.push((w, if d > 0.0 { se_g / d } else { 0.0 }));
        let (g, se, _) = pgf(&sample, s);
        left.push((g, se));
    }
    let mut x = Vec::with_capacity(2 * m + 1);
    let mut w = Vec::with_capacity(2 * m + 1);
    let mut se = Vec::with_capacity(2 * m + 1);
    for j in (0..m).rev() {
        x.push(-gw.levels[j]);
        w.push(left[j].0);
        se.push(left[j].1);
    }
    x.push(0.0);
    w.push(s);
    se.push(0.0);
    for (level, (wj, sej)) in gw.levels.iter().zip(&right) {
        x.push(*level);
        w.push(*wj);
        se.push(*sej);
    }
    Ok(WaveProfile {
        x,
        w,
        se,
        s,
        c,
        r,
        n_runs: gw.n_runs,
        n_decided: gw.counts.len(),
    })
}

/// `L* w + c w' + r w (w - 1)` at the interior nodes of the profile.
pub fn wave_residual(model: &LevyTriplet, profile: &WaveProfile) -> Result<Vec<f64>> {
    let n = profile.x.len();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "profile needs at least 3 nodes".into(),
        ));
    }
    let dx = profile.x[1] - profile.x[0];
    let stencil = discretize_adjoint(model, dx)?.with_extra_advection(profile.c);
    let w = &profile.w;
    Ok((1..n - 1)
        .map(|i| stencil.apply_central_at(w, i) + profile.r * w[i] * (w[i] - 1.0))
        .collect())
}

pub fn mean_square(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len().max(1) as f64
}

/// Best horizontal alignment of two profiles: the shift (a multiple of the
/// first profile's spacing) minimising the sup distance over the overlap,
/// and that distance.
pub fn shift_distance(a: &WaveProfile, b: &WaveProfile) -> (f64, f64) {
    let dx = a.x[1] - a.x[0];
    let span = a.x[a.x.len() - 1] - a.x[0];
    let max_k = (0.5 * span / dx) as i64;
    let mut best = (0.0, f64::INFINITY);
    for k in -max_k..=max_k {
        let shift = k as f64 * dx;
        let lo = a.x[0].max(b.x[0] - shift);
        let hi = a.x[a.x.len() - 1].min(b.x[b.x.len() - 1] - shift);
        if hi - lo < 0.5 * span {
            continue;
        }
        let d =
            a.x.iter()
                .filter(|x| **x >= lo && **x <= hi)
                .map(|x| (a.value(*x) - b.value(x + shift)).abs())
                .fold(0.0, f64::max);
        if d < best.1 {
            best = (shift, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McKeanReport {
    pub t: f64,
    pub probes: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<MeanSe>,
    /// `|lhs - rhs| / sqrt(se_rhs^2 + se_w^2)` per probe.
    pub z: Vec<f64>,
    pub max_abs_discrepancy: f64,
    /// Fraction of particle positions that fell outside the profile's range.
    pub exit_fraction: f64,
}

impl McKeanReport {
    pub fn within(&self, k: f64) -> bool {
        self.z.iter().all(|z| *z <= k)
    }
}

/// Compares `w(x)` with `E prod_i w(x + Y^i_t)` for the BLP driven by
/// `-X_t + c t` from 0, one coupled BLP per run for all probes.
#[allow(clippy::too_many_arguments)]
pub fn mckean_fixed_point_check(
    model: &LevyTriplet,
    c: f64,
    r: f64,
    profile: &WaveProfile,
    probes: &[f64],
    t: f64,
    n_runs: usize,
    cfg: &BranchingConfig,
) -> Result<McKeanReport> {
    if t < 0.0 || n_runs == 0 {
        return Err(Error::InvalidArgument("need t >= 0 and n_runs >= 1".into()));
    }
    let motion = Motion::new(&model.dual_reflect(), -c);
    let (lo, hi) = (profile.x[0], profile.x[profile.x.len() - 1]);
    let runs = par_indexed(n_runs, cfg.seed, purpose::MCKEAN, |rng, _| {
        let positions = blp_positions(&motion, r, t, cfg.dt, rng);
        let exits = probes
            .iter()
            .map(|x| {
                positions
                    .iter()
                    .filter(|y| x + **y < lo || x + **y > hi)
                    .count()
            })
            .sum::<usize>();
        let products: Vec<f64> = probes
            .iter()
            .map(|x| positions.iter().map(|y| profile.value(x + y)).product())
            .collect();
        (products, exits, positions.len() * probes.len())
    });
    let exits: usize = runs.iter().map(|r| r.1).sum();
    let total: usize = runs.iter().map(|r| r.2).sum();
    let mut rhs = Vec::with_capacity(probes.len());
    let mut lhs = Vec::with_capacity(probes.len());
    let mut z = Vec::with_capacity(probes.len());
    let mut max_abs: f64 = 0.0;
    for (j, x) in probes.iter().enumerate() {
        let vals: Vec<f64> = runs.iter().map(|r| r.0[j]).collect();
        let est = MeanSe::from_samples(&vals);
        let w = profile.value(*x);
        let se_w = interpolated_se(profile, *x);
        let se = (est.se * est.se + se_w * se_w).sqrt();
        let d = (w - est.mean).abs();
        max_abs = max_abs.max(d);
        z.push(if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
        lhs.push(w);
        rhs.push(est);
    }
    Ok(McKeanReport {
        t,
        probes: probes.to_vec(),
        lhs,
        rhs,
        z,
        max_abs_discrepancy: max_abs,
        exit_fraction: exits as f64 / total.max(1) as f64,
    })
}

fn interpolated_se(profile: &WaveProfile, x: f64) -> f64 {
    let n = profile.x.len();
    if x <= profile.x[0] || x >= profile.x[n - 1] {
        return 0.0;
    }
    let k = profile.x.partition_point(|g| *g <= x);
    profile.se[k - 1].max(profile.se[k])
}

/// Particle positions at `t` of an unkilled BLP from 0.
fn blp_positions<R: Rng + ?Sized>(
    motion: &Motion,
    r: f64,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Vec<f64> {
    use rand_distr::{Distribution, Exp1};
    let clock = |now: f64, rng: &mut R| {
        if r > 0.0 {
            let e: f64 = Exp1.sample(rng);
            now + e / r
        } else {
            f64::INFINITY
        }
    };
    let mut out = Vec::new();
    let first = clock(0.0, rng);
    let mut work = vec![(0.0f64, 0.0f64, first)];
    let _ = dt;
    while let Some((mut x, mut now, mut next)) = work.pop() {
        loop {
            let end = next.min(t);
            if let Step::Done(y) = motion.evolve(x, end - now, rng, &mut Free) {
                x = y;
            }
            if next < t {
                now = end;
                work.push((x, now, clock(now, rng)));
                next = clock(now, rng);
            } else {
                out.push(x);
                break;
            }
        }
    }
    out
}
