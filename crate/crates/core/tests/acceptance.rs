//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use delayspread_core::immature::{
    conservation_residual, conservation_residual_scalar, v_wave_profile, MatureHistory, VbarCycle,
};
use delayspread_core::kinetics::{compute_l, fixed_point, iterate_kinetic, qbar};
use delayspread_core::quadrature::GaussLegendre;
use delayspread_core::spatial::{
    critical_tail, empirical_speed, gaussian_step, iterate_q, plateau, Field, Grid, Trajectory, YearOperator,
};
use delayspread_core::speed::{
    compare_tau_average, cstar, cstar_scaling, cstar_with_eta, h_limit_infimum, mgf_k, EtaAllocation, MU_RTOL,
};
use delayspread_core::{Model, ParamsSpec, PeriodicSpec};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const SIM_YEARS: usize = 40;
const SIM_DX: f64 = 0.05;
const SIM_QUAD: usize = 32;
const CONSERVATION_QUAD: usize = 64;

fn canonical_spec() -> ParamsSpec {
    ParamsSpec::constant(1.0, 0.2, 0.3, 1.0, 0.2, 0.5, 0.3, 0.4, 22.5, 1.0)
}

fn canonical() -> Model {
    Model::from_spec(&canonical_spec()).unwrap()
}

/// Canonical model with `P` rescaled so the threshold number equals `target`.
fn with_threshold(target: f64) -> Model {
    let base = canonical();
    let p = base.params().birth_spec.amplitude() * target / compute_l(&base);
    let mut spec = canonical_spec();
    spec.birth = spec.birth.with_amplitude(p);
    Model::from_spec(&spec).unwrap()
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, passed: bool, detail: String) {
        if !passed {
            self.failures += 1;
        }
        println!("[{}] {id:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }
}

/// Shared simulation of the canonical front.
struct Front {
    model: Model,
    cstar: f64,
    ustar: f64,
    grid: Grid,
    traj: Trajectory,
    seconds: f64,
}

fn simulate_front(dx: f64, half_width_factor: f64) -> Front {
    let model = canonical();
    let speed = cstar(&model).unwrap();
    let ustar = fixed_point(&model).unwrap().ustar.unwrap();
    let half_width = (half_width_factor * 1.5 * speed.cstar * SIM_YEARS as f64).ceil();
    let grid = Grid::with_spacing(half_width, dx).unwrap();
    let start = Instant::now();
    let op = YearOperator::new(&model, grid, SIM_QUAD).unwrap();
    let field0 = critical_tail(grid, ustar, 2.0, speed.mustar);
    let traj = iterate_q(&op, &field0, SIM_YEARS, 0.5 * ustar);
    Front {
        cstar: speed.cstar,
        ustar,
        grid,
        traj,
        seconds: start.elapsed().as_secs_f64(),
        model,
    }
}

fn variational_empirical(r: &mut Report, front: &Front) {
    let est = empirical_speed(&front.traj);
    let (passed, detail) = match est {
        Ok(e) => {
            let rel = (e.slope - front.cstar) / front.cstar;
            (
                rel.abs() <= 0.05 && front.seconds <= 60.0 && front.grid.dx <= SIM_DX,
                format!(
                    "empirical {:.5} ± {:.1e} (years {}-{}) vs c* {:.5}, relative {:+.3}% (tol 5%), dx {:.4}, half-width {}, {:.1}s",
                    e.slope,
                    e.stderr,
                    e.first_year,
                    e.last_year,
                    front.cstar,
                    100.0 * rel,
                    front.grid.dx,
                    front.grid.half_width,
                    front.seconds
                ),
            )
        }
        Err(err) => (false, err.to_string()),
    };
    r.line(1, "variational-empirical speed agreement", passed, detail);

    // Informational: compactly supported data lag behind by a slowly growing
    // logarithmic delay and are not used for the criterion.
    let op = YearOperator::new(&front.model, front.grid, SIM_QUAD).unwrap();
    let compact = iterate_q(
        &op,
        &plateau(front.grid, front.ustar, 2.0, 1.0),
        SIM_YEARS,
        0.5 * front.ustar,
    );
    if let Ok(e) = empirical_speed(&compact) {
        println!(
            "       compactly supported start: slope {:.5}, relative {:+.3}%",
            e.slope,
            100.0 * (e.slope - front.cstar) / front.cstar
        );
    }
}

fn threshold_dichotomy(r: &mut Report) {
    let start = Instant::now();
    let above = with_threshold(1.2);
    let ustar = fixed_point(&above).unwrap().ustar.unwrap();
    let orbit = iterate_kinetic(&above, 0.5 * ustar, 1000);
    let converged_at = orbit.iter().position(|&z| (qbar(&above, z) - z).abs() / ustar < 1e-10);

    let below = with_threshold(0.8);
    let l = compute_l(&below);
    let k = below.kbar_m(0.0, 1.0);
    let delta = (1.0 - k) * (1.0 - l);
    let orbit = iterate_kinetic(&below, 1.0, 200);
    let worst_ratio = orbit
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let no_fixed_point = fixed_point(&below).unwrap().ustar.is_none();
    let seconds = start.elapsed().as_secs_f64();
    // The bound equals Q̄'(0), which the ratio approaches from below as the
    // orbit nears zero; allow for rounding at that limit.
    let passed = converged_at.is_some()
        && worst_ratio <= (1.0 - delta) * (1.0 + 1e-12)
        && no_fixed_point
        && orbit[200] < 1e-6
        && seconds <= 5.0;
    r.line(
        2,
        "threshold dichotomy",
        passed,
        format!(
            "L=1.2: residual < 1e-10 after {} iterations (limit 1000); L=0.8: max ratio {:.6} <= 1 - (1-k)(1-L) = {:.6}, z_200 = {:.2e}; {:.2}s",
            converged_at.map_or("no".into(), |n| n.to_string()),
            worst_ratio,
            1.0 - delta,
            orbit[200],
            seconds
        ),
    );
}

fn harmonic_delay_model() -> Model {
    let mut spec = canonical_spec();
    spec.tau = PeriodicSpec::Harmonic {
        mean: 0.4,
        amplitude: 0.05,
        phase: 0.9,
    };
    Model::from_spec(&spec).unwrap()
}

fn conservation(r: &mut Report, front: &Front) {
    let mut scalar_worst: f64 = 0.0;
    let mut spatial_worst: f64 = 0.0;
    for model in [canonical(), harmonic_delay_model()] {
        let ustar = fixed_point(&model).unwrap().ustar.unwrap();
        let t_beta = model.season().t_beta;
        for t in [t_beta, 0.5 * (t_beta + 1.0), 1.0] {
            scalar_worst = scalar_worst.max(conservation_residual_scalar(&model, ustar, t));
        }
        scalar_worst = scalar_worst.max(VbarCycle::new(&model, ustar).unwrap().periodicity_defect);
    }
    for t in [front.model.season().t_beta, 1.0] {
        let res = conservation_residual(&front.model, &front.traj.snapshots[20], t, CONSERVATION_QUAD).unwrap();
        spatial_worst = spatial_worst.max(res);
    }
    // A time-varying delay, where the two quadrature rules do not coincide
    // under the change of variables.
    let model = harmonic_delay_model();
    let ustar = fixed_point(&model).unwrap().ustar.unwrap();
    let grid = Grid::new(60.0, 2048).unwrap();
    let op = YearOperator::new(&model, grid, SIM_QUAD).unwrap();
    let traj = iterate_q(&op, &plateau(grid, ustar, 2.0, 1.0), 12, 0.5 * ustar);
    for t in [model.season().t_beta, 1.0] {
        let res = conservation_residual(&model, &traj.snapshots[12], t, CONSERVATION_QUAD).unwrap();
        spatial_worst = spatial_worst.max(res);
    }
    r.line(
        3,
        "conservation identity",
        scalar_worst <= 1e-6 && spatial_worst <= 1e-6,
        format!(
            "scalar periodic solution {scalar_worst:.2e}, simulated fronts {spatial_worst:.2e} (tol 1e-6, n_quad {CONSERVATION_QUAD})"
        ),
    );
}

fn delay_average(r: &mut Report) {
    let start = Instant::now();
    let increasing = harmonic_delay_model();
    let a = compare_tau_average(&increasing).unwrap();
    let time_a = start.elapsed().as_secs_f64();
    let margin = -a.relative_difference;
    let pass_i = a.tau_at_t_alpha < a.tau_at_t_beta && margin > 10.0 * MU_RTOL && time_a <= 10.0;

    let start = Instant::now();
    let mut spec = canonical_spec();
    spec.tau = PeriodicSpec::Linear([0.47, -0.1, 0.1, 0.9]);
    let decreasing = Model::from_spec(&spec).unwrap();
    let b = compare_tau_average(&decreasing).unwrap();
    let time_b = start.elapsed().as_secs_f64();
    let s = decreasing.season();
    let linear_on_window = [s.t_alpha, s.t_beta]
        .iter()
        .all(|&t| (decreasing.params().delay.derivative(t) + 0.1).abs() < 1e-12);
    let pass_ii = b.relative_difference > 10.0 * MU_RTOL && linear_on_window && time_b <= 10.0;
    r.line(
        4,
        "averaged delay comparison",
        pass_i && pass_ii,
        format!(
            "(i) tau {:.4}->{:.4}: c*(tau) {:.6} < c*(tau_av) {:.6}, margin {:.2e} (need > {:.0e}), {:.2}s; \
             (ii) tau = 0.47 - 0.1 s: c*(tau) {:.6} > c*(tau_av) {:.6}, margin {:.2e}, {:.2}s",
            a.tau_at_t_alpha,
            a.tau_at_t_beta,
            a.cstar_tau,
            a.cstar_tau_average,
            margin,
            10.0 * MU_RTOL,
            time_a,
            b.cstar_tau,
            b.cstar_tau_average,
            b.relative_difference,
            time_b
        ),
    );
}

fn mortality_allocation(r: &mut Report) {
    let model = canonical();
    let mean = 0.1;
    let speeds: Vec<(String, f64)> = [
        ("uniform", EtaAllocation::uniform(1.0, mean).unwrap()),
        ("inside", EtaAllocation::on_window(&model, mean).unwrap()),
        ("outside", EtaAllocation::off_window(&model, mean).unwrap()),
    ]
    .into_iter()
    .map(|(name, alloc)| (name.to_string(), cstar_with_eta(&model, &alloc).unwrap().cstar))
    .collect();
    let (uniform, inside, outside) = (speeds[0].1, speeds[1].1, speeds[2].1);
    r.line(
        5,
        "extra mortality allocation",
        outside < uniform && outside < inside,
        format!("mean C = {mean}: outside {outside:.6} < uniform {uniform:.6}, inside {inside:.6}"),
    );
}

fn diffusion_scaling(r: &mut Report) {
    let model = canonical();
    let ks = [1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 1e4];
    let values: Vec<f64> = ks.iter().map(|&k| cstar_scaling(&model, k).unwrap()).collect();
    let worst_step = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let limit = h_limit_infimum(&model).unwrap().cstar;
    let rel = (values[6] - limit).abs() / limit;
    r.line(
        6,
        "large adult diffusion scaling",
        worst_step <= 1e-10 && rel <= 0.01,
        format!(
            "c*(k)/sqrt(k) = [{}], largest increase {:.2e} (tol 1e-10); k=1e4 vs inf H(nu, inf) = {:.6}: relative {:.2e} (tol 1%)",
            values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "),
            worst_step,
            limit,
            rel
        ),
    );
}

/// Smooth random field with values in `[0, 1]`.
fn random_smooth(rng: &mut StdRng, grid: Grid) -> Field {
    let bumps: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-0.6..0.6) * grid.half_width,
                rng.random_range(0.5..6.0),
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    let f = Field::from_fn(grid, |x| {
        bumps.iter().map(|(c, w, h)| h * (-((x - c) / w).powi(2)).exp()).sum()
    });
    let m = f.max();
    f.scaled(1.0 / m)
}

fn random_rough(rng: &mut StdRng, grid: Grid) -> Field {
    Field {
        grid,
        values: (0..grid.n_points).map(|_| rng.random::<f64>()).collect(),
    }
}

fn operator_laws(r: &mut Report) {
    let model = canonical();
    let kin = fixed_point(&model).unwrap();
    let ustar = kin.ustar.unwrap();
    let grid = Grid::new(40.0, 1024).unwrap();
    let op = YearOperator::new(&model, grid, 16).unwrap();
    let mut rng = StdRng::seed_from_u64(20_241_019);
    let (mut order, mut shift, mut sublinear) = (f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for trial in 0..100 {
        let (a, b) = if trial % 2 == 0 {
            (random_smooth(&mut rng, grid), random_smooth(&mut rng, grid))
        } else {
            (random_rough(&mut rng, grid), random_rough(&mut rng, grid))
        };
        let hi = a.scaled(ustar);
        let lo = Field {
            grid,
            values: hi.values.iter().zip(&b.values).map(|(x, y)| x * y).collect(),
        };
        let (q_lo, q_hi) = (op.apply(&lo), op.apply(&hi));
        order = order.max(
            q_lo.values
                .iter()
                .zip(&q_hi.values)
                .map(|(l, h)| l - h)
                .fold(f64::NEG_INFINITY, f64::max),
        );

        let k = rng.random_range(0..600) as isize - 300;
        shift = shift.max(op.apply(&hi.roll(k)).max_diff(&q_hi.roll(k)));

        let lambda = rng.random_range(0.01..0.99);
        let q_scaled = op.apply(&hi.scaled(lambda));
        sublinear = sublinear.max(
            q_hi.values
                .iter()
                .zip(&q_scaled.values)
                .map(|(q, qs)| lambda * q - qs)
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    r.line(
        7,
        "operator laws",
        kin.monotone_basin_ok == Some(true) && order <= 1e-10 && shift <= 1e-10 && sublinear <= 1e-10,
        format!(
            "100 trials: order violation {order:.1e}, shift mismatch {shift:.1e}, sublinearity violation {sublinear:.1e} (tol 1e-10)"
        ),
    );
}

/// `∫ e^{μy} K(y) dy` from a kernel assembled on a grid: sampled Gaussians
/// composed by discrete convolution, summed over Gauss–Legendre nodes in the
/// maturation time, then integrated by the trapezoid rule.
fn brute_force_mgf(model: &Model, mus: &[f64]) -> (Vec<f64>, f64) {
    let t = model.period();
    let (half, dy) = (30.0f64, 0.02f64);
    let n = (2.0 * half / dy).round() as usize + 1;
    let ys: Vec<f64> = (0..n).map(|i| -half + i as f64 * dy).collect();
    let gauss = |v: f64, y: f64| (-y * y / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let year_var = model.mature_variance(0.0, t);
    let mut kernel: Vec<f64> = ys.iter().map(|&y| model.kbar_m(0.0, t) * gauss(year_var, y)).collect();
    let season = model.season();
    for (s, w) in GaussLegendre::new(32).on(season.t_alpha, season.t_beta) {
        let born = model.birth_time(s);
        let (_, sigma) = model.epsilon_sigma(s);
        let v1 = model.mature_variance(0.0, born);
        let v2 = 2.0 * sigma + model.mature_variance(s, t);
        let g1: Vec<f64> = ys.iter().map(|&y| gauss(v1, y)).collect();
        let g2: Vec<f64> = ys.iter().map(|&y| gauss(v2, y)).collect();
        let weight = w * model.d_r0(s) * model.kbar_m(s, t) * model.kbar_m(0.0, born);
        let offset = (n - 1) / 2;
        for (i, k) in kernel.iter_mut().enumerate() {
            // (g1 * g2)(y_i) = Σ_j g1(y_j) g2(y_i − y_j) dy on the same lattice.
            let mut conv = 0.0;
            for (j, a) in g1.iter().enumerate() {
                let idx = i as isize - j as isize + offset as isize;
                if idx >= 0 && (idx as usize) < n {
                    conv += a * g2[idx as usize];
                }
            }
            *k += weight * conv * dy;
        }
    }
    let asym = (0..n)
        .map(|i| (kernel[i] - kernel[n - 1 - i]).abs())
        .fold(0.0, f64::max);
    let mgfs = mus
        .iter()
        .map(|&mu| {
            let vals: Vec<f64> = ys.iter().zip(&kernel).map(|(y, k)| (mu * y).exp() * k).collect();
            dy * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]))
        })
        .collect();
    (mgfs, asym)
}

fn kernel_oracle(r: &mut Report) {
    let model = canonical();
    let mus = [0.1, 0.5, 1.0, 2.0];
    let (brute, asym) = brute_force_mgf(&model, &mus);
    let rels: Vec<f64> = mus
        .iter()
        .zip(&brute)
        .map(|(&mu, b)| (mgf_k(&model, mu) - b).abs() / b)
        .collect();
    let worst = rels.iter().copied().fold(0.0, f64::max);
    r.line(
        8,
        "kernel moment oracle",
        worst <= 1e-6,
        format!(
            "relative errors at mu = 0.1, 0.5, 1, 2: [{}] (tol 1e-6); kernel asymmetry {asym:.1e}",
            rels.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

fn immature_wave(r: &mut Report, front: &Front) {
    let periods = 30;
    let history = MatureHistory::from_trajectory(&front.traj);
    let phases = [0.25, 0.3, 0.45, 0.65];
    let profiles = v_wave_profile(
        &front.model,
        &history,
        &front.traj.front_positions,
        front.ustar,
        &phases,
        periods,
        CONSERVATION_QUAD,
    )
    .unwrap();
    let tail = profiles.iter().map(|p| p.tail_ratio).fold(0.0, f64::max);
    let plateau = profiles.iter().map(|p| p.plateau_relative_error).fold(0.0, f64::max);
    let drift = profiles.iter().map(|p| p.drift).fold(0.0, f64::max);
    r.line(
        9,
        "immature wave limits",
        tail <= 1e-3 && plateau <= 0.02 && drift <= 0.01,
        format!(
            "after {periods} periods at phases {phases:?}: right tail {tail:.1e} (tol 1e-3), plateau vs periodic solution {:.3}% (tol 2%), period drift {:.3}% (tol 1%)",
            100.0 * plateau,
            100.0 * drift
        ),
    );
}

fn semigroup_and_grid(r: &mut Report, front: &Front) {
    let grid = Grid::new(40.0, 2048).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_smooth(&mut rng, grid);
        let (v1, v2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let (d1, d2) = (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0));
        let two = gaussian_step(&gaussian_step(&f, v1, d1), v2, d2);
        let one = gaussian_step(&f, v1 + v2, d1 * d2);
        worst = worst.max(two.max_diff(&one));
    }
    let coarse = empirical_speed(&front.traj).unwrap().slope;
    let fine_front = simulate_front(0.5 * front.grid.dx, 1.0);
    let fine = empirical_speed(&fine_front.traj).unwrap().slope;
    let wide_front = simulate_front(front.grid.dx, 2.0);
    let wide = empirical_speed(&wide_front.traj).unwrap().slope;
    let change = (fine - coarse).abs() / coarse;
    let widen = (wide - coarse).abs() / coarse;
    r.line(
        10,
        "semigroup composition and grid convergence",
        worst <= 1e-10 && change < 0.01 && widen < 0.01,
        format!(
            "two-step vs one-step {worst:.1e} (tol 1e-10); halving dx changes speed by {:.1e}, doubling the domain by {:.1e} (tol 1%)",
            change, widen
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut report = Report { failures: 0 };
    let front = simulate_front(SIM_DX, 1.0);
    variational_empirical(&mut report, &front);
    threshold_dichotomy(&mut report);
    conservation(&mut report, &front);
    delay_average(&mut report);
    mortality_allocation(&mut report);
    diffusion_scaling(&mut report);
    operator_laws(&mut report);
    kernel_oracle(&mut report);
    immature_wave(&mut report, &front);
    semigroup_and_grid(&mut report, &front);
    println!(
        "acceptance: {} of 10 criteria passed in {:.1}s",
        10 - report.failures,
        start.elapsed().as_secs_f64()
    );
    if report.failures > 0 {
        std::process::exit(1);
    }
}
