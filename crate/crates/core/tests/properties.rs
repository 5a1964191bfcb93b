use delayspread_core::immature::{ImmatureSolver, MatureHistory};
use delayspread_core::kinetics::{compute_l, fixed_point, qbar};
use delayspread_core::spatial::{plateau, Field, Grid, YearOperator};
use delayspread_core::speed::{cstar, ln_mgf, phi};
use delayspread_core::{Model, ParamsSpec, PeriodicSpec};
use proptest::prelude::*;

/// Random valid models: harmonic delay and adult mortality around the
/// canonical values, varying breeding amplitude.
fn models() -> impl Strategy<Value = Model> {
    (
        0.0..0.06f64,
        0.0..1.0f64,
        0.0..0.2f64,
        0.0..1.0f64,
        10.0..40.0f64,
        0.05..0.5f64,
    )
        .prop_map(
            |(tau_amp, tau_phase, death_amp, death_phase, amplitude, juvenile_diffusion)| {
                let mut spec =
                    ParamsSpec::constant(1.0, 0.2, 0.3, 1.0, juvenile_diffusion, 0.5, 0.3, 0.4, amplitude, 1.0);
                spec.tau = PeriodicSpec::Harmonic {
                    mean: 0.4,
                    amplitude: tau_amp,
                    phase: tau_phase,
                };
                spec.mature_death = PeriodicSpec::Harmonic {
                    mean: 0.5,
                    amplitude: death_amp,
                    phase: death_phase,
                };
                Model::from_spec(&spec).unwrap()
            },
        )
}

fn canonical() -> Model {
    Model::from_spec(&ParamsSpec::constant(1.0, 0.2, 0.3, 1.0, 0.2, 0.5, 0.3, 0.4, 22.5, 1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn maturation_time_is_increasing(model in models()) {
        let p = model.params();
        let times: Vec<f64> = (0..100)
            .map(|i| model.maturation_time(p.alpha + (p.beta - p.alpha) * i as f64 / 99.0).unwrap())
            .collect();
        prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((times[0] - model.season().t_alpha).abs() < 1e-12);
        prop_assert!((times[99] - model.season().t_beta).abs() < 1e-12);
    }

    #[test]
    fn survival_and_dispersal_ranges(model in models()) {
        let p = model.params();
        let (_, (_, tau_max)) = p.delay.sampled_extrema(10_000);
        let (_, (_, di_max)) = p.immature_diffusion.sampled_extrema(10_000);
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            let (eps, sigma) = model.epsilon_sigma(t);
            prop_assert!(eps > 0.0 && eps <= 1.0);
            prop_assert!(sigma >= 0.0 && sigma <= tau_max * di_max * (1.0 + 1e-12));
        }
    }

    #[test]
    fn survival_composes(model in models(), a in 0.0..3.0f64, b in 0.0..3.0f64, c in 0.0..3.0f64) {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let whole = model.kbar_m(v[0], v[2]);
        let parts = model.kbar_m(v[0], v[1]) * model.kbar_m(v[1], v[2]);
        prop_assert!((whole - parts).abs() <= 1e-12);
    }

    #[test]
    fn recruitment_supported_on_maturation_window(model in models(), t in 0.0..1.0f64) {
        let s = model.season();
        if t < s.t_alpha || t > s.t_beta {
            prop_assert_eq!(model.d_r0(t), 0.0);
        } else {
            prop_assert!(model.d_r0(t) >= 0.0);
        }
    }

    #[test]
    fn kinetic_map_is_sublinear(model in models(), z in 0.01..5.0f64, lambda in 0.01..0.99f64) {
        prop_assert!(qbar(&model, lambda * z) >= lambda * qbar(&model, z) - 1e-12);
    }

    #[test]
    fn sign_near_zero_follows_threshold(model in models()) {
        let l = compute_l(&model);
        let z = 1e-8;
        prop_assert_eq!((qbar(&model, z) - z).signum(), (l - 1.0).signum());
    }

    #[test]
    fn kinetic_map_monotone_on_basin(model in models()) {
        let kin = fixed_point(&model).unwrap();
        if let (Some(u), Some(true)) = (kin.ustar, kin.monotone_basin_ok) {
            let values: Vec<f64> = (0..=100).map(|i| qbar(&model, u * i as f64 / 100.0)).collect();
            prop_assert!(values.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn speed_is_the_minimum_of_the_profile(model in models()) {
        prop_assume!(compute_l(&model) > 1.0 + 1e-3);
        let r = cstar(&model).unwrap();
        for i in 1..40 {
            let mu = 0.05 * i as f64;
            prop_assert!(phi(&model, mu).unwrap() >= r.cstar - 1e-12);
        }
        let h = 1e-3;
        let mu = r.mustar;
        let d2 = ln_mgf(&model, mu + h) - 2.0 * ln_mgf(&model, mu) + ln_mgf(&model, mu - h);
        prop_assert!(d2 / (h * h) >= -1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn spatial_map_is_order_preserving_and_sublinear(
        heights in proptest::collection::vec(0.0..1.0f64, 8),
        lambda in 0.05..0.95f64,
    ) {
        let model = canonical();
        let u = fixed_point(&model).unwrap().ustar.unwrap();
        let grid = Grid::new(30.0, 512).unwrap();
        let op = YearOperator::new(&model, grid, 16).unwrap();
        let hi = Field::from_fn(grid, |x| {
            let i = (((x + 30.0) / 60.0) * 8.0).floor().clamp(0.0, 7.0) as usize;
            u * heights[i]
        });
        let lo = hi.scaled(lambda);
        let (q_hi, q_lo) = (op.apply(&hi), op.apply(&lo));
        for (h, l) in q_hi.values.iter().zip(&q_lo.values) {
            prop_assert!(*l <= *h + 1e-10);
            prop_assert!(*l >= lambda * *h - 1e-10);
            prop_assert!(*h <= u + 1e-8);
        }
    }
}

#[test]
fn plateau_approaches_fixed_point() {
    let model = canonical();
    let u = fixed_point(&model).unwrap().ustar.unwrap();
    let grid = Grid::new(60.0, 2048).unwrap();
    let op = YearOperator::new(&model, grid, 32).unwrap();
    let traj = delayspread_core::spatial::iterate_q(&op, &plateau(grid, 0.5 * u, 10.0, 1.0), 25, 0.25 * u);
    let last = traj.snapshots.last().unwrap();
    let centre = last.values[grid.n_points / 2];
    assert!((centre - u).abs() < 0.01 * u, "centre {centre} vs {u}");
    assert!(traj.contaminated_at.is_none());
}

#[test]
fn immature_initial_data_is_forgotten() {
    let model = canonical();
    let u = fixed_point(&model).unwrap().ustar.unwrap();
    let grid = Grid::new(30.0, 512).unwrap();
    let solver = ImmatureSolver::new(&model, grid, 16).unwrap();
    let history = MatureHistory::constant(grid, u, 4);
    let a = Field::from_fn(grid, |x| (-x * x).exp());
    let b = Field::from_fn(grid, |x| 0.3 * (-(x - 2.0).powi(2) / 3.0).exp());
    let diff0 = a.max_diff(&b);
    for t in [0.5, 1.7, 3.2] {
        let va = solver.v_evolve(Some(&a), &history, t).unwrap();
        let vb = solver.v_evolve(Some(&b), &history, t).unwrap();
        assert!(va.max_diff(&vb) <= diff0 * (-0.3 * t).exp() + 1e-12);
    }
}
