use std::path::Path;

use delayspread_core::immature::{
    conservation_residual, conservation_residual_scalar, v_wave_profile, MatureHistory, VbarCycle,
};
use delayspread_core::kinetics::{fixed_point, iterate_kinetic, qbar, FIXED_POINT_RTOL, QBAR_RTOL, THRESHOLD_BAND};
use delayspread_core::quadrature::TIME_RTOL;
use delayspread_core::spatial::{
    critical_tail, empirical_speed, iterate_q, plateau, Grid, Trajectory, YearOperator, EDGE_MARGIN_STDS,
};
use delayspread_core::speed::{
    compare_tau_average, cstar, cstar_scaling, cstar_with_diffusion, cstar_with_eta, h_limit_infimum, phi_profile,
    EtaAllocation, SpeedResult, MU_RTOL,
};
use delayspread_core::{validate, Model, ModelParams};
use serde_json::json;

use crate::config::{Config, Initial, RunSettings};
use crate::output::{num, opt, OutputDir};

/// Run failure, carrying its process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Validation(String),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Validation(e) => write!(f, "assumption check failed: {e}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<delayspread_core::Error> for Failure {
    fn from(e: delayspread_core::Error) -> Self {
        use delayspread_core::Error as E;
        match e {
            E::InvalidParams(_) => Failure::Config(e.into()),
            E::AssumptionsViolated(v) => Failure::Validation(v.join(", ")),
            other => Failure::Numerical(other.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

const DEFAULT_YEARS: usize = 40;
const DEFAULT_QUAD: usize = 32;
const DEFAULT_DX: f64 = 0.05;
const CONSERVATION_QUAD: usize = 64;
const SPEED_TOLERANCE: f64 = 0.05;

fn build_model(cfg: &Config) -> Result<Model, Failure> {
    let params = ModelParams::from_spec(&cfg.params)?;
    let report = validate(&params);
    if !report.all_passed() {
        return Err(Failure::Validation(report.failed().join(", ")));
    }
    Ok(Model::new(params)?)
}

pub fn validate_cmd(cfg: &Config, out: &Path) -> Outcome {
    let params = ModelParams::from_spec(&cfg.params)?;
    let report = validate(&params);
    let out = OutputDir::create(out)?;
    out.json(
        "validation.json",
        &json!({
            "params": cfg.params,
            "all_passed": report.all_passed(),
            "report": report,
        }),
    )?;
    for check in &report.checks {
        println!(
            "{:<20} {}  {}",
            check.name,
            if check.passed { "ok  " } else { "FAIL" },
            check.detail
        );
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Validation(report.failed().join(", ")))
    }
}

pub fn kinetics_cmd(cfg: &Config, out: &Path) -> Outcome {
    let model = build_model(cfg)?;
    let kin = fixed_point(&model)?;
    let start = kin.ustar.map_or(kin.density_scale, |u| 0.5 * u);
    let len = cfg.run.orbit_len.unwrap_or(200);
    let orbit = iterate_kinetic(&model, start, len);
    let last = orbit[len];
    let out = OutputDir::create(out)?;
    out.csv(
        "orbit.csv",
        &["n", "z_n"],
        orbit.iter().enumerate().map(|(n, z)| vec![n.to_string(), num(*z)]),
    )?;
    out.json(
        "kinetics.json",
        &json!({
            "params": cfg.params,
            "result": kin,
            "orbit": {
                "start": start,
                "iterations": len,
                "final": last,
                "final_step_residual": (qbar(&model, last) - last).abs(),
            },
            "tolerances": {
                "qbar_rtol": QBAR_RTOL,
                "fixed_point_rtol": FIXED_POINT_RTOL,
                "threshold_band": THRESHOLD_BAND,
                "time_rtol": TIME_RTOL,
            },
        }),
    )?;
    println!(
        "L = {:.6}, u* = {}",
        kin.threshold,
        kin.ustar.map_or("none (extinction)".into(), |u| format!("{u:.6}"))
    );
    Ok(())
}

pub fn speed_cmd(cfg: &Config, out: &Path) -> Outcome {
    let model = build_model(cfg)?;
    let res = cstar(&model)?;
    let profile = phi_profile(&model, res.mustar / 20.0, res.mustar * 20.0, 201)?;
    let out = OutputDir::create(out)?;
    out.csv(
        "phi_profile.csv",
        &["mu", "phi"],
        profile.iter().map(|(m, p)| vec![num(*m), num(*p)]),
    )?;
    out.json(
        "speed.json",
        &json!({
            "params": cfg.params,
            "cstar": res.cstar,
            "mustar": res.mustar,
            "bracket": res.bracket,
            "evaluations": res.evaluations,
            "tolerances": { "mu_rtol": res.mu_rtol, "time_rtol": TIME_RTOL },
        }),
    )?;
    println!("c* = {:.8}, mu* = {:.8}", res.cstar, res.mustar);
    Ok(())
}

struct Simulation {
    model: Model,
    speed: SpeedResult,
    ustar: f64,
    grid: Grid,
    quad_n: usize,
    level: f64,
    initial: Initial,
    years: usize,
    monotone_basin: Option<bool>,
    traj: Trajectory,
}

fn simulate_front(cfg: &Config) -> Result<Simulation, Failure> {
    let model = build_model(cfg)?;
    let speed = cstar(&model)?;
    let kin = fixed_point(&model)?;
    let ustar = kin
        .ustar
        .ok_or_else(|| Failure::Numerical(anyhow::anyhow!("no positive fixed point")))?;
    let run = &cfg.run;
    let years = run.years.unwrap_or(DEFAULT_YEARS);
    let half_width = run
        .grid_halfwidth
        .unwrap_or_else(|| (1.5 * speed.cstar * years as f64).ceil().max(20.0));
    let grid = match run.grid_n {
        Some(n) => Grid::new(half_width, n)?,
        None => Grid::with_spacing(half_width, DEFAULT_DX)?,
    };
    let quad_n = run.quad_n.unwrap_or(DEFAULT_QUAD);
    let level = run.front_level.unwrap_or(0.5 * ustar);
    if !(level > 0.0 && level < ustar) {
        return Err(Failure::Config(anyhow::anyhow!(
            "front level {level} must lie in (0, u* = {ustar})"
        )));
    }
    let initial = run.initial.unwrap_or(Initial::CriticalTail);
    let field0 = match initial {
        Initial::CriticalTail => critical_tail(grid, ustar, 2.0, speed.mustar),
        Initial::Plateau => plateau(grid, ustar, 2.0, 1.0),
    };
    let op = YearOperator::new(&model, grid, quad_n)?;
    let traj = iterate_q(&op, &field0, years, level);
    Ok(Simulation {
        model,
        speed,
        ustar,
        grid,
        quad_n,
        level,
        initial,
        years,
        monotone_basin: kin.monotone_basin_ok,
        traj,
    })
}

fn contamination(sim: &Simulation) -> Outcome {
    match sim.traj.contaminated_at {
        Some(year) => Err(Failure::Numerical(anyhow::anyhow!(
            "front within {:.3} of the domain edge from year {year}; widen the grid",
            sim.traj.edge_margin
        ))),
        None => Ok(()),
    }
}

fn simulation_settings(sim: &Simulation) -> serde_json::Value {
    json!({
        "grid": sim.grid,
        "quad_n": sim.quad_n,
        "years": sim.years,
        "front_level": sim.level,
        "initial": sim.initial,
        "ustar": sim.ustar,
        "edge_margin": sim.traj.edge_margin,
        "edge_margin_stds": EDGE_MARGIN_STDS,
        "usable_years": sim.traj.usable_years,
        "contaminated_at": sim.traj.contaminated_at,
        // Outside the monotone basin the order-based speed theory does not
        // apply; the run is still reported.
        "regime": if sim.monotone_basin == Some(false) { "non-monotone" } else { "monotone" },
    })
}

pub fn simulate_cmd(cfg: &Config, out: &Path) -> Outcome {
    let sim = simulate_front(cfg)?;
    let out = OutputDir::create(out)?;
    let mut header = vec!["x".to_string()];
    header.extend((0..=sim.years).map(|n| format!("u_year{n}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "snapshots.csv",
        &header,
        (0..sim.grid.n_points).map(|i| {
            let mut row = vec![num(sim.grid.x(i))];
            row.extend(sim.traj.snapshots.iter().map(|s| num(s.values[i])));
            row
        }),
    )?;
    out.csv(
        "fronts.csv",
        &["n", "front_x"],
        sim.traj
            .front_positions
            .iter()
            .enumerate()
            .map(|(n, f)| vec![n.to_string(), opt(*f)]),
    )?;
    let last = sim.traj.snapshots.last().expect("trajectory has year 0");
    let rows: Vec<(f64, f64)> = (0..sim.grid.n_points)
        .map(|i| (sim.grid.x(i), last.values[i]))
        .collect();
    out.two_column("final_profile.dat", &format!("x u after {} years", sim.years), &rows)?;

    let est = empirical_speed(&sim.traj);
    let comparison = est.as_ref().ok().map(|e| {
        let rel = (e.slope - sim.speed.cstar) / sim.speed.cstar;
        json!({
            "empirical": e,
            "relative_difference": rel,
            "within_tolerance": rel.abs() <= SPEED_TOLERANCE,
        })
    });
    out.json(
        "simulate.json",
        &json!({
            "params": cfg.params,
            "settings": simulation_settings(&sim),
            "cstar": sim.speed.cstar,
            "mustar": sim.speed.mustar,
            "comparison": comparison,
            "tolerances": {
                "relative_speed": SPEED_TOLERANCE,
                "mu_rtol": MU_RTOL,
            },
        }),
    )?;
    contamination(&sim)?;
    let e = est?;
    println!(
        "empirical speed {:.5} ± {:.1e} vs c* {:.5} ({:+.3}%)",
        e.slope,
        e.stderr,
        sim.speed.cstar,
        100.0 * (e.slope - sim.speed.cstar) / sim.speed.cstar
    );
    Ok(())
}

pub fn immature_cmd(cfg: &Config, out: &Path) -> Outcome {
    let periods = cfg.run.periods.unwrap_or(30);
    let years = cfg.run.years.unwrap_or(DEFAULT_YEARS);
    if years <= periods {
        return Err(Failure::Config(anyhow::anyhow!(
            "immature profiles after {periods} periods need at least {} simulated years, got {years}",
            periods + 1
        )));
    }
    let sim = simulate_front(cfg)?;
    contamination(&sim)?;
    let model = &sim.model;
    let t = model.period();
    let phases: Vec<f64> = cfg
        .run
        .phases
        .clone()
        .unwrap_or_else(|| [0.25, 0.3, 0.45, 0.65].iter().map(|p| p * t).collect());

    let cycle = VbarCycle::new(model, sim.ustar)?;
    let samples = cycle.samples(model, 400);
    let t_beta = model.season().t_beta;
    let checkpoints = [t_beta, 0.5 * (t_beta + t), t];
    let scalar_residual = checkpoints
        .iter()
        .map(|&s| conservation_residual_scalar(model, sim.ustar, s))
        .fold(cycle.periodicity_defect, f64::max);
    let snapshot = &sim.traj.snapshots[sim.years / 2];
    let quad = sim.quad_n.max(CONSERVATION_QUAD);
    let spatial_residual = [t_beta, t]
        .iter()
        .map(|&s| conservation_residual(model, snapshot, s, quad))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let history = MatureHistory::from_trajectory(&sim.traj);
    let profiles = v_wave_profile(
        model,
        &history,
        &sim.traj.front_positions,
        sim.ustar,
        &phases,
        periods,
        quad,
    )?;

    let out = OutputDir::create(out)?;
    out.csv(
        "vbar.csv",
        &["t", "vbar"],
        samples.iter().map(|(s, v)| vec![num(*s), num(*v)]),
    )?;
    let mut header = vec!["x".to_string()];
    header.extend(phases.iter().map(|p| format!("v_phase{p}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "immature_profiles.csv",
        &header,
        (0..sim.grid.n_points).map(|i| {
            let mut row = vec![num(sim.grid.x(i))];
            row.extend(profiles.iter().map(|p| num(p.profile.values[i])));
            row
        }),
    )?;
    let tail = profiles.iter().map(|p| p.tail_ratio).fold(0.0, f64::max);
    let plateau_err = profiles.iter().map(|p| p.plateau_relative_error).fold(0.0, f64::max);
    let drift = profiles.iter().map(|p| p.drift).fold(0.0, f64::max);
    out.json(
        "immature.json",
        &json!({
            "params": cfg.params,
            "settings": simulation_settings(&sim),
            "periods": periods,
            "vbar": cycle,
            "conservation": {
                "scalar_residual": scalar_residual,
                "spatial_residual": spatial_residual,
                "spatial_year": sim.years / 2,
                "n_quad": quad,
            },
            "profiles": profiles,
            "summary": {
                "tail_ratio": tail,
                "plateau_relative_error": plateau_err,
                "drift": drift,
            },
            "tolerances": {
                "conservation": 1e-6,
                "tail_ratio": 1e-3,
                "plateau_relative_error": 0.02,
                "drift": 0.01,
            },
        }),
    )?;
    println!(
        "conservation {scalar_residual:.1e} (scalar) / {spatial_residual:.1e} (front); tail {tail:.1e}, plateau error {:.3}%, drift {:.3}%",
        100.0 * plateau_err,
        100.0 * drift
    );
    Ok(())
}

/// Shape of the delay across the maturation window.
fn delay_shape(model: &Model) -> (&'static str, bool) {
    let s = model.season();
    let delay = &model.params().delay;
    let slopes: Vec<f64> = (0..=50)
        .map(|i| delay.derivative(s.t_alpha + (s.t_beta - s.t_alpha) * i as f64 / 50.0))
        .collect();
    let (lo, hi) = slopes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let linear = hi - lo <= 1e-9;
    let (a, b) = (delay.value(s.t_alpha), delay.value(s.t_beta));
    let shape = if a < b {
        "increasing"
    } else if a > b {
        "decreasing"
    } else {
        "level"
    };
    (shape, linear)
}

pub fn prop_delay_cmd(cfg: &Config, out: &Path) -> Outcome {
    let model = build_model(cfg)?;
    let cmp = compare_tau_average(&model)?;
    let (shape, linear) = delay_shape(&model);
    let margin = 10.0 * cmp.mu_rtol;
    // An increasing delay predicts a slower spread than its average; a
    // linearly decreasing one predicts a faster spread.
    let (predicted, consistent) = match (shape, linear) {
        ("increasing", _) => ("cstar_tau < cstar_tau_average", Some(cmp.relative_difference < -margin)),
        ("decreasing", true) => ("cstar_tau > cstar_tau_average", Some(cmp.relative_difference > margin)),
        _ => ("none", None),
    };
    let out = OutputDir::create(out)?;
    out.csv(
        "prop_delay.csv",
        &[
            "tau_t_alpha",
            "tau_t_beta",
            "tau_average",
            "cstar_tau",
            "cstar_tau_average",
            "relative_difference",
            "predicted",
            "consistent",
        ],
        [vec![
            num(cmp.tau_at_t_alpha),
            num(cmp.tau_at_t_beta),
            num(cmp.tau_average),
            num(cmp.cstar_tau),
            num(cmp.cstar_tau_average),
            num(cmp.relative_difference),
            predicted.to_string(),
            consistent.map_or_else(String::new, |c| c.to_string()),
        ]],
    )?;
    out.json(
        "prop_delay.json",
        &json!({
            "params": cfg.params,
            "comparison": cmp,
            "delay_shape": shape,
            "linear_on_window": linear,
            "predicted": predicted,
            "consistent": consistent,
            "tolerances": { "mu_rtol": cmp.mu_rtol, "required_margin": margin },
        }),
    )?;
    println!(
        "c*(tau) {:.6} vs c*(tau_av) {:.6} ({:+.3e}); {shape} delay, predicted {predicted}, consistent {}",
        cmp.cstar_tau,
        cmp.cstar_tau_average,
        cmp.relative_difference,
        consistent.map_or("n/a".into(), |c| c.to_string())
    );
    Ok(())
}

pub fn prop_mortality_cmd(cfg: &Config, out: &Path) -> Outcome {
    let model = build_model(cfg)?;
    let mean = cfg.run.eta_mean.unwrap_or(0.1);
    let allocations = [
        ("uniform", EtaAllocation::uniform(model.period(), mean)?),
        ("inside", EtaAllocation::on_window(&model, mean)?),
        ("outside", EtaAllocation::off_window(&model, mean)?),
    ];
    let rows = allocations
        .iter()
        .map(|(name, alloc)| Ok((*name, cstar_with_eta(&model, alloc)?.cstar)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let (uniform, inside, outside) = (rows[0].1, rows[1].1, rows[2].1);
    let consistent = outside < uniform && outside < inside;
    let baseline = cstar(&model)?.cstar;
    // Same placements for extra adult diffusion; no direction is asserted.
    let diffusion = allocations
        .iter()
        .map(|(name, alloc)| Ok((name.to_string(), cstar_with_diffusion(&model, &alloc.eta)?.cstar)))
        .collect::<Result<std::collections::BTreeMap<_, _>, Failure>>()?;
    let s = model.season();
    let out = OutputDir::create(out)?;
    out.csv(
        "prop_mortality.csv",
        &["allocation", "eta_mean", "cstar"],
        rows.iter().map(|(name, c)| vec![name.to_string(), num(mean), num(*c)]),
    )?;
    out.json(
        "prop_mortality.json",
        &json!({
            "params": cfg.params,
            "eta_mean": mean,
            "baseline_cstar": baseline,
            "inside_window": [model.params().alpha, s.t_beta],
            "outside_window": [s.t_beta, model.period() + model.params().alpha],
            "cstar": { "uniform": uniform, "inside": inside, "outside": outside },
            "predicted": "outside allocation spreads slowest",
            "consistent": consistent,
            "extra_diffusion_cstar": diffusion,
            "tolerances": { "mu_rtol": MU_RTOL },
        }),
    )?;
    println!("c*: outside {outside:.6}, uniform {uniform:.6}, inside {inside:.6}; consistent {consistent}");
    Ok(())
}

pub fn prop_scaling_cmd(cfg: &Config, out: &Path) -> Outcome {
    let model = build_model(cfg)?;
    let ks = cfg
        .run
        .scaling_k
        .clone()
        .unwrap_or_else(|| vec![1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 1e4]);
    if ks.is_empty() || ks.iter().any(|&k| k.is_nan() || k <= 0.0) || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Config(anyhow::anyhow!(
            "scaling_k must be positive and strictly increasing"
        )));
    }
    let values = ks
        .iter()
        .map(|&k| cstar_scaling(&model, k))
        .collect::<Result<Vec<_>, _>>()?;
    let worst_step = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let limit = h_limit_infimum(&model)?;
    let last = values[values.len() - 1];
    let gap = (last - limit.cstar).abs() / limit.cstar;
    let non_increasing = values.len() < 2 || worst_step <= 1e-10;
    let out = OutputDir::create(out)?;
    out.csv(
        "prop_scaling.csv",
        &["k", "cstar_over_sqrtk"],
        ks.iter().zip(&values).map(|(k, v)| vec![num(*k), num(*v)]),
    )?;
    out.json(
        "prop_scaling.json",
        &json!({
            "params": cfg.params,
            "k": ks,
            "cstar_over_sqrtk": values,
            "largest_increase": if values.len() < 2 { None } else { Some(worst_step) },
            "non_increasing": non_increasing,
            "limit_infimum": limit.cstar,
            "limit_minimiser": limit.mustar,
            "relative_gap_at_largest_k": gap,
            "tolerances": { "step": 1e-10, "limit_gap": 0.01, "mu_rtol": MU_RTOL },
        }),
    )?;
    println!(
        "c*(k)/sqrt(k) from {:.6} to {last:.6}, non-increasing {non_increasing}; limit {:.6} (gap {gap:.2e})",
        values[0], limit.cstar
    );
    Ok(())
}

/// Flags given on the command line win over the config's `run` block.
pub fn merge_run(mut run: RunSettings, flags: RunSettings) -> RunSettings {
    macro_rules! take {
        ($($f:ident),*) => { $( if flags.$f.is_some() { run.$f = flags.$f; } )* };
    }
    take!(
        grid_n,
        grid_halfwidth,
        quad_n,
        years,
        front_level,
        initial,
        eta_mean,
        scaling_k,
        phases,
        periods,
        orbit_len
    );
    run
}
