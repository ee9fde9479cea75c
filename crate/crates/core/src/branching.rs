//! Branching Levy processes: binary splitting at rate `r`, each particle
//! moving as an independent copy of the motion.
//!
//! Branch times are drawn per particle and honoured exactly; between them a
//! particle moves with [`Motion::evolve`], so killing and level crossings are
//! exact as well. Every run has its own random stream.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{LevyTriplet, Phase};
use crate::paths::{
    bridge_maximum, par_indexed, run_killed, Flow, Free, KillAtZero, Motion, Observer, PathConfig,
    Step,
};
use crate::rng::{purpose, stream};
use crate::stats::MeanSe;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingConfig {
    pub r: f64,
    pub cap: usize,
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    pub bridge_correction: bool,
}

impl BranchingConfig {
    pub fn new(r: f64, cap: usize, t_max: f64, dt: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            r,
            cap,
            t_max,
            dt,
            seed,
            bridge_correction: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "branching rate r = {} must be >= 0",
                self.r
            )));
        }
        if self.cap == 0 {
            return Err(Error::InvalidArgument("cap must be >= 1".into()));
        }
        self.path_config().validate()
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    fn path_config(&self) -> PathConfig {
        PathConfig {
            dt: self.dt,
            horizon: self.t_max,
            seed: self.seed,
            bridge_correction: self.bridge_correction,
        }
    }
}

/// Particle positions at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleSystem {
    pub time: f64,
    pub particles: Vec<f64>,
    pub frozen: Vec<f64>,
    pub total_born: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtinctionOutcome {
    Extinct { time: f64 },
    SurvivedCap { time: f64 },
    Undecided { horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Particle {
    x: f64,
    next_branch: f64,
    /// Running maximum along the lineage.
    mark: f64,
}

fn branch_clock<R: Rng + ?Sized>(now: f64, r: f64, rng: &mut R) -> f64 {
    if r > 0.0 {
        let e: f64 = Exp1.sample(rng);
        now + e / r
    } else {
        f64::INFINITY
    }
}

/// Observer that also reports the lineage maximum.
trait Tracker: Observer {
    fn mark(&self, old: f64) -> f64 {
        old
    }
}

impl Tracker for Free {}
impl Tracker for KillAtZero {}

/// Raises the lineage maximum; stops the particle once it reaches `top`.
struct MaxWatch {
    mark: f64,
    top: f64,
}

impl Observer for MaxWatch {
    fn diffusive<R: Rng + ?Sized>(
        &mut self,
        a: f64,
        b: f64,
        h: f64,
        sigma: f64,
        rng: &mut R,
    ) -> Flow {
        let m = bridge_maximum(a, b, h, sigma, rng);
        self.mark = self.mark.max(m);
        if self.mark >= self.top {
            Flow::Stop {
                offset: h,
                position: b,
            }
        } else {
            Flow::Continue
        }
    }

    fn jumped(&mut self, _before: f64, after: f64) -> Flow {
        self.mark = self.mark.max(after);
        if self.mark >= self.top {
            Flow::Stop {
                offset: 0.0,
                position: after,
            }
        } else {
            Flow::Continue
        }
    }
}

impl Tracker for MaxWatch {
    fn mark(&self, _old: f64) -> f64 {
        self.mark
    }
}

/// Advances every particle from `t0` to `t1`, splitting at branch times.
/// Stopped particles are dropped after `on_mark(old, new)` sees their last
/// move; `on_mark` also sees every completed move of a survivor.
#[allow(clippy::too_many_arguments)]
fn advance<R, O, F, M>(
    particles: &mut Vec<Particle>,
    motion: &Motion,
    r: f64,
    t0: f64,
    t1: f64,
    rng: &mut R,
    make: F,
    mut on_mark: M,
) -> u64
where
    R: Rng + ?Sized,
    O: Tracker,
    F: Fn(&Particle) -> O,
    M: FnMut(f64, f64),
{
    let mut work: Vec<(Particle, f64)> = particles.drain(..).rev().map(|p| (p, t0)).collect();
    let mut born = 0;
    while let Some((mut p, mut now)) = work.pop() {
        loop {
            let end = p.next_branch.min(t1);
            let mut obs = make(&p);
            let step = motion.evolve(p.x, end - now, rng, &mut obs);
            let new_mark = obs.mark(p.mark);
            on_mark(p.mark, new_mark);
            p.mark = new_mark;
            match step {
                Step::Done(x) => p.x = x,
                Step::Stopped { .. } => break,
            }
            if p.next_branch < t1 {
                now = end;
                let child = Particle {
                    next_branch: branch_clock(now, r, rng),
                    ..p
                };
                p.next_branch = branch_clock(now, r, rng);
                work.push((child, now));
                born += 1;
            } else {
                particles.push(p);
                break;
            }
        }
    }
    born
}

fn grid(dt: f64, t_max: f64) -> Vec<(f64, f64)> {
    let n = if t_max <= 0.0 {
        0
    } else {
        ((t_max / dt) - 1e-9).ceil().max(1.0) as usize
    };
    (0..n)
        .map(|k| {
            let t0 = k as f64 * dt;
            let t1 = if k + 1 == n {
                t_max
            } else {
                (k + 1) as f64 * dt
            };
            (t0, t1)
        })
        .collect()
}

fn ancestor<R: Rng + ?Sized>(x0: f64, r: f64, rng: &mut R) -> Vec<Particle> {
    vec![Particle {
        x: x0,
        next_branch: branch_clock(0.0, r, rng),
        mark: x0,
    }]
}

/// Snapshots of an unkilled BLP for `X_t` on the grid of `cfg`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlpRun {
    pub snapshots: Vec<ParticleSystem>,
    /// Set when the population exceeded `cap` and the run was cut short.
    pub truncated: bool,
}

pub fn run_blp(model: &LevyTriplet, r: f64, x0: f64, cfg: &BranchingConfig) -> Result<BlpRun> {
    let cfg = cfg.with_r(r);
    cfg.validate()?;
    let mut rng = stream(cfg.seed, purpose::BRANCHING);
    Ok(run_blp_with(&Motion::new(model, 0.0), x0, &cfg, &mut rng))
}

fn run_blp_with<R: Rng + ?Sized>(
    motion: &Motion,
    x0: f64,
    cfg: &BranchingConfig,
    rng: &mut R,
) -> BlpRun {
    let mut particles = ancestor(x0, cfg.r, rng);
    let mut born = 1;
    let snapshot = |time, ps: &[Particle], born| ParticleSystem {
        time,
        particles: ps.iter().map(|p| p.x).collect(),
        frozen: Vec::new(),
        total_born: born,
    };
    let mut snapshots = vec![snapshot(0.0, &particles, born)];
    for (t0, t1) in grid(cfg.dt, cfg.t_max) {
        born += advance(
            &mut particles,
            motion,
            cfg.r,
            t0,
            t1,
            rng,
            |_| Free,
            |_, _| {},
        );
        snapshots.push(snapshot(t1, &particles, born));
        if particles.len() > cfg.cap {
            return BlpRun {
                snapshots,
                truncated: true,
            };
        }
    }
    BlpRun {
        snapshots,
        truncated: false,
    }
}

/// `R_t / t` over independent runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub t: f64,
    pub speed: MeanSe,
    /// Runs in which the population was pruned to the top `cap` particles.
    pub pruned_runs: usize,
}

/// Mean of `max_i X^i_t / t` for the BLP started at 0. Once the population
/// exceeds `cap` only the `cap` highest particles are kept, which can only
/// lower the estimate.
pub fn max_speed_estimate(
    model: &LevyTriplet,
    r: f64,
    t: f64,
    n_runs: usize,
    cfg: &BranchingConfig,
) -> Result<SpeedEstimate> {
    let cfg = BranchingConfig {
        t_max: t,
        ..cfg.with_r(r)
    };
    cfg.validate()?;
    if t <= 0.0 || n_runs == 0 {
        return Err(Error::InvalidArgument("need t > 0 and n_runs >= 1".into()));
    }
    let motion = Motion::new(model, 0.0);
    let runs = par_indexed(n_runs, cfg.seed, purpose::BRANCHING, |rng, _| {
        let mut particles = ancestor(0.0, r, rng);
        let mut pruned = false;
        for (t0, t1) in grid(cfg.dt, t) {
            advance(&mut particles, &motion, r, t0, t1, rng, |_| Free, |_, _| {});
            if particles.len() > cfg.cap {
                particles.select_nth_unstable_by(cfg.cap, |a, b| b.x.total_cmp(&a.x));
                particles.truncate(cfg.cap);
                pruned = true;
            }
        }
        let max = particles
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max);
        (max / t, pruned)
    });
    let speeds: Vec<f64> = runs.iter().map(|r| r.0).collect();
    Ok(SpeedEstimate {
        t,
        speed: MeanSe::from_samples(&speeds),
        pruned_runs: runs.iter().filter(|r| r.1).count(),
    })
}

/// A killed run: outcome and the number of particles in the window at each
/// grid time (index 0 is time 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KilledBlpRun {
    pub outcome: ExtinctionOutcome,
    pub times: Vec<f64>,
    pub window_counts: Vec<usize>,
}

/// BLP driven by `X_t - c t` from `x0 > 0`, particles absorbed below zero.
pub fn run_blp_killed(
    model: &LevyTriplet,
    c: f64,
    r: f64,
    x0: f64,
    window: (f64, f64),
    cfg: &BranchingConfig,
) -> Result<KilledBlpRun> {
    let cfg = cfg.with_r(r);
    cfg.validate()?;
    if !(x0.is_finite() && x0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "start x0 = {x0} must be > 0"
        )));
    }
    let mut rng = stream(cfg.seed, purpose::BRANCHING);
    Ok(killed_run(
        &Motion::new(model, c),
        x0,
        window,
        &cfg,
        &mut rng,
    ))
}

fn killed_run<R: Rng + ?Sized>(
    motion: &Motion,
    x0: f64,
    window: (f64, f64),
    cfg: &BranchingConfig,
    rng: &mut R,
) -> KilledBlpRun {
    let in_window = |ps: &[Particle]| {
        ps.iter()
            .filter(|p| p.x >= window.0 && p.x <= window.1)
            .count()
    };
    let mut particles = ancestor(x0, cfg.r, rng);
    let mut times = vec![0.0];
    let mut window_counts = vec![in_window(&particles)];
    let bridge = cfg.bridge_correction;
    for (t0, t1) in grid(cfg.dt, cfg.t_max) {
        advance(
            &mut particles,
            motion,
            cfg.r,
            t0,
            t1,
            rng,
            |_| KillAtZero { bridge },
            |_, _| {},
        );
        times.push(t1);
        window_counts.push(in_window(&particles));
        if particles.is_empty() {
            return KilledBlpRun {
                outcome: ExtinctionOutcome::Extinct { time: t1 },
                times,
                window_counts,
            };
        }
        if particles.len() >= cfg.cap {
            return KilledBlpRun {
                outcome: ExtinctionOutcome::SurvivedCap { time: t1 },
                times,
                window_counts,
            };
        }
    }
    KilledBlpRun {
        outcome: ExtinctionOutcome::Undecided { horizon: cfg.t_max },
        times,
        window_counts,
    }
}

/// Both sides of the many-to-one identity
/// `E #{particles in A at t} = e^{rt} P(X_t - ct in A, tau > t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManyToOne {
    pub lhs: MeanSe,
    pub rhs: MeanSe,
}

impl ManyToOne {
    pub fn z_score(&self) -> f64 {
        self.lhs.z_against(&self.rhs)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn many_to_one_check(
    model: &LevyTriplet,
    c: f64,
    r: f64,
    x0: f64,
    window: (f64, f64),
    t: f64,
    n_runs: usize,
    n_paths: usize,
    cfg: &BranchingConfig,
) -> Result<ManyToOne> {
    let cfg = BranchingConfig {
        t_max: t,
        cap: usize::MAX,
        ..cfg.with_r(r)
    };
    cfg.validate()?;
    let motion = Motion::new(model, c);
    let counts = par_indexed(n_runs, cfg.seed, purpose::BRANCHING, |rng, _| {
        let run = killed_run(&motion, x0, window, &cfg, rng);
        // extinct runs stop early with a zero final count
        if run.times.last() == Some(&t) {
            *run.window_counts.last().unwrap() as f64
        } else {
            0.0
        }
    });
    let path_cfg = cfg.path_config();
    let hits = par_indexed(n_paths, cfg.seed, purpose::PATHS, |rng, _| {
        let res = run_killed(&motion, x0, &path_cfg, None, rng);
        (res.survived && res.terminal >= window.0 && res.terminal <= window.1) as u8 as f64
    });
    Ok(ManyToOne {
        lhs: MeanSe::from_samples(&counts),
        rhs: MeanSe::from_samples(&hits).scaled((r * t).exp()),
    })
}

/// Outcome fractions for one `(c, r)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub r: f64,
    pub c: f64,
    pub n_runs: usize,
    pub extinct_frac: f64,
    pub survived_frac: f64,
    pub undecided_frac: f64,
    pub gamma_of_c: f64,
}

/// Largest undecided fraction still allowed for an extinction verdict.
pub const UNDECIDED_TOLERANCE: f64 = 0.05;

impl PhaseCell {
    /// Empirical verdict: any run reaching the cap is evidence of survival
    /// (`Supercritical`); no survivor and few undecided runs is extinction
    /// (`Subcritical`); anything else is inconclusive.
    pub fn verdict(&self) -> Option<Phase> {
        if self.survived_frac > 0.0 {
            Some(Phase::Supercritical)
        } else if self.undecided_frac < UNDECIDED_TOLERANCE {
            Some(Phase::Subcritical)
        } else {
            None
        }
    }

    /// The verdict the theory predicts from `Gamma(c) - r`.
    pub fn predicted(&self) -> Phase {
        if self.r > self.gamma_of_c {
            Phase::Supercritical
        } else {
            Phase::Subcritical
        }
    }

    pub fn agrees(&self) -> bool {
        self.verdict() == Some(self.predicted())
    }
}

/// Runs `n_runs` killed BLPs from `x0` and tallies the outcomes.
pub fn extinction_cell(
    model: &LevyTriplet,
    c: f64,
    r: f64,
    x0: f64,
    n_runs: usize,
    cfg: &BranchingConfig,
) -> Result<PhaseCell> {
    let cfg = cfg.with_r(r);
    cfg.validate()?;
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be >= 1".into()));
    }
    let motion = Motion::new(model, c);
    let outcomes = par_indexed(n_runs, cfg.seed, purpose::BRANCHING, |rng, _| {
        killed_run(&motion, x0, (0.0, 0.0), &cfg, rng).outcome
    });
    let frac = |f: fn(&ExtinctionOutcome) -> bool| {
        outcomes.iter().filter(|o| f(o)).count() as f64 / n_runs as f64
    };
    Ok(PhaseCell {
        r,
        c,
        n_runs,
        extinct_frac: frac(|o| matches!(o, ExtinctionOutcome::Extinct { .. })),
        survived_frac: frac(|o| matches!(o, ExtinctionOutcome::SurvivedCap { .. })),
        undecided_frac: frac(|o| matches!(o, ExtinctionOutcome::Undecided { .. })),
        gamma_of_c: model.legendre(c)?,
    })
}

/// Phase diagram over `cs x rs`, row-major in `c`.
pub fn extinction_scan(
    model: &LevyTriplet,
    cs: &[f64],
    rs: &[f64],
    x0: f64,
    n_runs: usize,
    cfg: &BranchingConfig,
) -> Result<Vec<PhaseCell>> {
    let mut cells = Vec::with_capacity(cs.len() * rs.len());
    for (i, &c) in cs.iter().enumerate() {
        for (j, &r) in rs.iter().enumerate() {
            let cell_cfg = BranchingConfig {
                seed: cfg.seed.wrapping_add(((i * rs.len() + j) as u64) << 20),
                ..*cfg
            };
            cells.push(extinction_cell(model, c, r, x0, n_runs, &cell_cfg)?);
        }
    }
    Ok(cells)
}

/// Galton-Watson level counts `G_x` from one coupled BLP per run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwCounts {
    pub levels: Vec<f64>,
    /// `counts[run][j]` is `G_{levels[j]}` for a decided run.
    pub counts: Vec<Vec<u64>>,
    pub undecided: usize,
    pub n_runs: usize,
}

impl GwCounts {
    pub fn undecided_fraction(&self) -> f64 {
        self.undecided as f64 / self.n_runs.max(1) as f64
    }

    pub fn level_samples(&self, j: usize) -> Vec<u64> {
        self.counts.iter().map(|c| c[j]).collect()
    }
}

/// For each level `x`, the number of lineages of the BLP driven by
/// `-X_t + c t` from 0 that reach `x`, i.e. the number of particles frozen at
/// `x` when every particle is stopped on first passage above it.
///
/// One BLP serves all levels: a particle's lineage maximum is tracked and
/// `G_x` counts the moves that take it across `x`. Particles stop at the
/// highest level. Runs still active at `t_max` or at `cap` live particles are
/// undecided and left out of `counts`.
pub fn gw_counts(
    model: &LevyTriplet,
    c: f64,
    r: f64,
    levels: &[f64],
    n_runs: usize,
    cfg: &BranchingConfig,
) -> Result<GwCounts> {
    let cfg = cfg.with_r(r);
    cfg.validate()?;
    if levels.is_empty() || levels.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument("levels must be positive".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "levels must be strictly increasing".into(),
        ));
    }
    let top = *levels.last().unwrap();
    let motion = Motion::new(&model.dual_reflect(), -c);
    let runs = par_indexed(n_runs, cfg.seed, purpose::GW, |rng, _| {
        let mut counts = vec![0u64; levels.len()];
        let mut particles = ancestor(0.0, r, rng);
        for (t0, t1) in grid(cfg.dt, cfg.t_max) {
            advance(
                &mut particles,
                &motion,
                r,
                t0,
                t1,
                rng,
                |p| MaxWatch { mark: p.mark, top },
                |old, new| {
                    if new > old {
                        let lo = levels.partition_point(|x| *x <= old);
                        let hi = levels.partition_point(|x| *x <= new);
                        for c in &mut counts[lo..hi] {
                            *c += 1;
                        }
                    }
                },
            );
            if particles.is_empty() {
                return Some(counts);
            }
            if particles.len() >= cfg.cap {
                return None;
            }
        }
        None
    });
    let undecided = runs.iter().filter(|r| r.is_none()).count();
    Ok(GwCounts {
        levels: levels.to_vec(),
        counts: runs.into_iter().flatten().collect(),
        undecided,
        n_runs,
    })
}
