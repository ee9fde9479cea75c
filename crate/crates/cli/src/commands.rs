//! One function per subcommand. Each writes its tables and a JSON summary
//! and returns whether its checks passed.

use anyhow::Result;
use levywave_core::branching::extinction_scan;
use levywave_core::fkpp::{
    discretize_adjoint, front_speed, mckean_fixed_point_check, mean_square, run_front,
    step_profile, tw_from_gw, wave_residual, Grid,
};
use levywave_core::qsd::yaglom_convergence;
use levywave_core::qsd::{default_grid, qsd_closed_form_brownian, qsd_density_formula, verify_qsd};
use levywave_core::stats::Law;
use levywave_core::{BranchingConfig, Error, LevyTriplet, PathConfig, Phase};
use serde_json::json;

use crate::args::{CheckArgs, FrontArgs, GammaArgs, PhaseArgs, QsdArgs, TwArgs, YaglomArgs};
use crate::criteria::{Harness, CRITERIA};
use crate::output::{num, Output};

/// What a command reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub pass: bool,
    pub lines: Vec<String>,
}

impl Report {
    fn ok(lines: Vec<String>) -> Self {
        Self { pass: true, lines }
    }
}

fn opt(x: Result<f64, Error>) -> String {
    x.map_or_else(|_| "nan".to_string(), num)
}

fn is_brownian(model: &LevyTriplet) -> bool {
    model.jump_rate() == 0.0
}

pub fn gamma(model: &LevyTriplet, a: &GammaArgs, out: &Output) -> Result<Report> {
    let rows: Vec<Vec<String>> = a
        .alphas
        .iter()
        .map(|&al| {
            vec![
                num(al),
                opt(model.legendre(al)),
                opt(model.legendre_dual(al)),
            ]
        })
        .collect();
    out.write_csv("gamma.csv", &["alpha", "gamma", "gamma_dual"], &rows)?;
    let inv: Vec<Vec<String>> = a
        .rates
        .iter()
        .map(|&r| vec![num(r), opt(model.gamma_inverse(r))])
        .collect();
    out.write_csv("gamma_inverse.csv", &["r", "c"], &inv)?;
    out.write_json(
        "summary.json",
        json!({
            "command": "gamma",
            "model": model.to_document(),
            "theta_star": [model.theta_star().0, model.theta_star().1],
            "mean": model.mean(),
        }),
    )?;
    let mut lines = vec![format!(
        "{} alpha values, {} inverse queries",
        rows.len(),
        inv.len()
    )];
    lines.extend(inv.iter().map(|r| format!("Gamma^-1({}) = {}", r[0], r[1])));
    Ok(Report::ok(lines))
}

pub fn phase(model: &LevyTriplet, a: &PhaseArgs, out: &Output) -> Result<Report> {
    let cfg = BranchingConfig::new(0.0, a.cap, a.t_max, a.dt, a.common.seed)?;
    let cells = extinction_scan(model, &a.cs, &a.rs, a.x0, a.n_runs, &cfg)?;
    let mut rows = Vec::with_capacity(cells.len());
    let mut wrong = 0;
    let mut scored = 0;
    for cell in &cells {
        let off = (cell.r - cell.gamma_of_c).abs() > a.band;
        let agrees = cell.agrees();
        if off {
            scored += 1;
            wrong += usize::from(!agrees);
        }
        rows.push(vec![
            num(cell.c),
            num(cell.r),
            num(cell.gamma_of_c),
            format!("{:?}", cell.predicted()),
            cell.verdict().map_or("none".into(), |p| format!("{p:?}")),
            num(cell.extinct_frac),
            num(cell.survived_frac),
            num(cell.undecided_frac),
            agrees.to_string(),
            off.to_string(),
        ]);
    }
    out.write_csv(
        "phase.csv",
        &[
            "c",
            "r",
            "gamma_c",
            "predicted",
            "verdict",
            "extinct",
            "survived",
            "undecided",
            "agrees",
            "scored",
        ],
        &rows,
    )?;
    let boundary: Vec<_> =
        a.cs.iter()
            .map(|c| json!({"c": c, "gamma_c": model.legendre(*c).ok()}))
            .collect();
    out.write_json(
        "summary.json",
        json!({
            "command": "phase",
            "model": model.to_document(),
            "boundary": boundary,
            "scored_cells": scored,
            "misclassified": wrong,
            "pass": wrong == 0,
        }),
    )?;
    Ok(Report {
        pass: wrong == 0,
        lines: vec![format!(
            "{wrong} of {scored} off-critical cells misclassified"
        )],
    })
}

pub fn qsd(model: &LevyTriplet, a: &QsdArgs, out: &Output) -> Result<Report> {
    let gamma_c = model.legendre(a.c)?;
    if model.phase(a.c, a.r)? == Phase::Supercritical {
        out.write_json(
            "summary.json",
            json!({
                "command": "qsd",
                "model": model.to_document(),
                "regime": "non-existence",
                "c": a.c, "r": a.r, "gamma_c": gamma_c,
            }),
        )?;
        return Ok(Report::ok(vec![format!(
            "non-existence regime: r = {} > Gamma(c) = {gamma_c}; no QSD with absorption rate r",
            a.r
        )]));
    }
    let theta = model.qsd_theta(a.c, a.r)?;
    let grid = default_grid(a.grid_top.unwrap_or(20.0 / theta), a.grid_points);
    let cfg = PathConfig::new(a.dt, a.horizon, a.common.seed)?;
    let density = qsd_density_formula(model, a.c, a.r, Some(&grid), a.n_paths, &cfg)?;
    let exact = if is_brownian(model) {
        Some(qsd_closed_form_brownian(model.sigma(), a.c, a.r, &grid)?)
    } else {
        None
    };
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let mut row = vec![
                num(grid[i]),
                num(density.values[i]),
                num(density.cdf(grid[i])),
            ];
            if let Some(e) = &exact {
                row.push(num(e.values[i]));
            }
            row
        })
        .collect();
    let header: &[&str] = if exact.is_some() {
        &["x", "density", "cdf", "closed_form"]
    } else {
        &["x", "density", "cdf"]
    };
    out.write_csv("qsd.csv", header, &rows)?;
    let mut pass = true;
    let mut lines = vec![format!("theta = {theta}, mean = {:.4}", density.mean())];
    let ks_exact = exact.as_ref().map(|e| {
        grid.iter()
            .map(|x| (density.cdf(*x) - e.cdf(*x)).abs())
            .fold(0.0, f64::max)
    });
    if let Some(ks) = ks_exact {
        lines.push(format!("KS to the closed form {ks:.4}"));
    }
    let verify = if a.verify_t > 0.0 {
        let sim = PathConfig::new(0.1, 30.0 / a.r.max(0.05), a.common.seed.wrapping_add(1))?;
        let rep = verify_qsd(model, a.c, a.r, &density, a.verify_t, a.verify_paths, &sim)?;
        let ok = rep.survival_z() <= 3.0 && rep.tau_relative_error() <= 0.05;
        pass &= ok;
        lines.push(format!(
            "P(tau > {}) = {:.4} vs {:.4}, E tau = {:.4} vs {:.4}",
            a.verify_t, rep.survival.mean, rep.expected_survival, rep.mean_tau.mean, rep.target_tau
        ));
        Some(json!({
            "t": rep.t,
            "survival": rep.survival,
            "expected_survival": rep.expected_survival,
            "survival_z": rep.survival_z(),
            "ks_to_start": rep.ks,
            "mean_tau": rep.mean_tau,
            "target_tau": rep.target_tau,
            "tau_relative_error": rep.tau_relative_error(),
            "censored_fraction": rep.censored_fraction,
            "pass": ok,
        }))
    } else {
        None
    };
    out.write_json(
        "summary.json",
        json!({
            "command": "qsd",
            "model": model.to_document(),
            "regime": "existence",
            "c": a.c, "r": a.r, "gamma_c": gamma_c, "theta": theta,
            "normalization": density.normalization,
            "mean": density.mean(),
            "ks_closed_form": ks_exact,
            "verification": verify,
            "pass": pass,
        }),
    )?;
    Ok(Report { pass, lines })
}

pub fn yaglom(model: &LevyTriplet, a: &YaglomArgs, out: &Output) -> Result<Report> {
    let gamma_c = model.legendre(a.c)?;
    let theta = if a.no_tilt {
        None
    } else {
        Some(model.qsd_theta(a.c, gamma_c)?)
    };
    let horizon = a.schedule.iter().copied().fold(0.0, f64::max);
    let cfg = PathConfig::new(a.dt, horizon, a.common.seed)?;
    let points = yaglom_convergence(model, a.c, a.x0, &a.schedule, a.n_paths, theta, &cfg)?;
    let minimal = if is_brownian(model) {
        Some(qsd_closed_form_brownian(
            model.sigma(),
            a.c,
            gamma_c,
            &default_grid(40.0 / a.c.max(0.1), 40_000),
        )?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for p in &points {
        let ks_min = minimal.as_ref().map(|m| p.distribution.ks_to(m));
        rows.push(vec![
            num(p.t),
            num(p.survival.mean),
            num(p.survival.se),
            num(p.distribution.mean()),
            num(p.distribution.n_effective()),
            num(p.ks_to_final),
            ks_min.map_or("nan".into(), num),
        ]);
        lines.push(format!(
            "t = {}: survival {:.3e}, mean {:.4}, KS to last {:.4}{}",
            p.t,
            p.survival.mean,
            p.distribution.mean(),
            p.ks_to_final,
            ks_min.map_or(String::new(), |k| format!(", KS to minimal QSD {k:.4}"))
        ));
    }
    out.write_csv(
        "yaglom.csv",
        &[
            "t",
            "survival",
            "survival_se",
            "mean",
            "n_effective",
            "ks_to_final",
            "ks_to_minimal",
        ],
        &rows,
    )?;
    out.write_json(
        "summary.json",
        json!({
            "command": "yaglom",
            "model": model.to_document(),
            "c": a.c, "x0": a.x0, "gamma_c": gamma_c, "tilt": theta,
            "schedule": a.schedule,
        }),
    )?;
    Ok(Report::ok(lines))
}

pub fn front(model: &LevyTriplet, a: &FrontArgs, out: &Output) -> Result<Report> {
    let grid = Grid::spanning(a.x_min, a.x_max, a.dx)?;
    let stencil = discretize_adjoint(model, a.dx)?;
    let dt = a.dt.unwrap_or(0.9 * stencil.max_stable_dt(a.r));
    let state = run_front(
        model,
        a.r,
        &step_profile(&grid),
        &grid,
        a.t_end,
        dt,
        a.record_every,
    )?;
    let speed = front_speed(&state.front_trace)?;
    let target = model.gamma_inverse(a.r)?;
    let rel = (speed.speed / target - 1.0).abs();
    let trace: Vec<Vec<String>> = state
        .front_trace
        .iter()
        .map(|(t, x)| vec![num(*t), num(*x)])
        .collect();
    out.write_csv("front_trace.csv", &["t", "x"], &trace)?;
    let profile: Vec<Vec<String>> = grid
        .points()
        .iter()
        .zip(&state.u)
        .map(|(x, u)| vec![num(*x), num(*u)])
        .collect();
    out.write_csv("profile.csv", &["x", "u"], &profile)?;
    let pass = rel <= 0.08;
    out.write_json(
        "summary.json",
        json!({
            "command": "front",
            "model": model.to_document(),
            "r": a.r, "dt": dt, "dx": a.dx,
            "speed": speed.speed, "speed_se": speed.se, "r_squared": speed.r_squared,
            "fit_window": [speed.window.0, speed.window.1],
            "gamma_inverse": target, "relative_error": rel,
            "clipped": state.clipped,
            "pass": pass,
        }),
    )?;
    Ok(Report {
        pass,
        lines: vec![format!(
            "front speed {:.4} vs Gamma^-1(r) = {target:.4} ({:.2}%)",
            speed.speed,
            100.0 * rel
        )],
    })
}

pub fn tw(model: &LevyTriplet, a: &TwArgs, out: &Output) -> Result<Report> {
    let c = match a.c {
        Some(c) => c,
        None => model.gamma_inverse(a.r)?,
    };
    let levels: Vec<f64> = (1..=a.n_levels).map(|i| a.dx * i as f64).collect();
    let cfg = BranchingConfig::new(a.r, a.cap, a.t_max, a.dt, a.common.seed)?;
    let wave = tw_from_gw(model, c, a.r, a.s, &levels, a.n_runs, &cfg)?;
    let control = tw_from_gw(model, c, a.r, a.s, &levels, 2 * a.n_runs, &cfg)?;
    let ms = mean_square(&wave_residual(model, &wave)?);
    let ms_control = mean_square(&wave_residual(model, &control)?);
    let mk_cfg = BranchingConfig {
        seed: a.common.seed.wrapping_add(1),
        ..cfg
    };
    let mk = mckean_fixed_point_check(
        model,
        c,
        a.r,
        &control,
        &a.probes,
        a.mckean_t,
        a.mckean_runs,
        &mk_cfg,
    )?;
    let rows: Vec<Vec<String>> = (0..control.x.len())
        .map(|i| {
            vec![
                num(control.x[i]),
                num(wave.w[i]),
                num(control.w[i]),
                num(control.se[i]),
            ]
        })
        .collect();
    out.write_csv("wave.csv", &["x", "w", "w_control", "se_control"], &rows)?;
    let monotone = wave.is_monotone() && wave.w.iter().all(|w| *w > 0.0 && *w <= 1.0);
    let residual_ok = ms <= 3.0 * ms_control;
    let mckean_ok = mk.within(3.0);
    let pass = monotone && residual_ok && mckean_ok;
    out.write_json(
        "summary.json",
        json!({
            "command": "tw",
            "model": model.to_document(),
            "c": c, "r": a.r, "s": a.s,
            "n_runs": a.n_runs, "decided": wave.n_decided,
            "monotone": monotone,
            "residual_ms": ms, "residual_ms_control": ms_control, "residual_pass": residual_ok,
            "mckean": mk,
            "pass": pass,
        }),
    )?;
    Ok(Report {
        pass,
        lines: vec![
            format!("c = {c:.4}, monotone = {monotone}"),
            format!("residual ms {ms:.3e}, control {ms_control:.3e}"),
            format!(
                "McKean z at probes: {:?}",
                mk.z.iter()
                    .map(|z| (z * 100.0).round() / 100.0)
                    .collect::<Vec<_>>()
            ),
        ],
    })
}

pub fn check(model: &LevyTriplet, a: &CheckArgs, out: &Output) -> Result<Report> {
    let ids: Vec<u8> = if a.criteria.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        a.criteria.clone()
    };
    let harness = Harness::new(a.profile, a.common.seed, model);
    let outcomes = harness.run_all(&ids);
    let pass = outcomes.iter().all(|o| o.pass);
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.id.to_string(),
                o.name.clone(),
                o.pass.to_string(),
                o.detail.clone(),
            ]
        })
        .collect();
    out.write_csv("criteria.csv", &["id", "name", "pass", "detail"], &rows)?;
    out.write_json(
        "summary.json",
        json!({
            "command": "check",
            "profile": a.profile,
            "model": model.to_document(),
            "criteria": outcomes,
            "pass": pass,
        }),
    )?;
    Ok(Report {
        pass,
        lines: outcomes.iter().map(|o| o.to_string()).collect(),
    })
}
