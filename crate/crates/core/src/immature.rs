//! The immature density `v`, reconstructed from a known adult trajectory.
//!
//! `v` solves `v_t = D_I v_xx − d_I v + Z` with source
//! `Z(s,·) = b(s, u(s,·)) − R(s, u(s−τ(s),·))`: births during `[α, β]` and
//! removal by maturation during `[t_α, t_β]`. With `K_I(t,s)` the juvenile
//! propagator (Gaussian of variance `2∫_s^t D_I`, decay `exp(−∫_s^t d_I)`),
//!
//! ```text
//! v(t) = K_I(t,0)v0 + ∫_0^t K_I(t,s) Z(s) ds.
//! ```
//!
//! Every juvenile matures within its birth year, so after `t_β` a year's
//! births and maturations cancel exactly (the change of variables
//! `a = s − τ(s)` turns one integral into the other, using
//! `K_I(t,s)K_I(s,a) = K_I(t,a)`). Only the year containing `t` contributes
//! to `v(t)` beyond the `v0` term.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetics::mature_path;
use crate::model::Model;
use crate::quadrature::{integrate, GaussLegendre, TIME_RTOL};
use crate::spatial::{gaussian_multiplier, Field, Grid, Spectral, Trajectory};

/// Year-start adult snapshots `u(nT, ·)`. Within a year, adults at times
/// before `t_α` are recovered exactly from the year-start snapshot by one
/// Gaussian step, which covers every source evaluation.
#[derive(Clone, Debug)]
pub struct MatureHistory {
    pub year_starts: Vec<Field>,
}

impl MatureHistory {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        MatureHistory {
            year_starts: traj.snapshots.clone(),
        }
    }

    /// Constant adult density `z` at every year start.
    pub fn constant(grid: Grid, z: f64, years: usize) -> Self {
        MatureHistory {
            year_starts: vec![Field::constant(grid, z); years],
        }
    }

    pub fn grid(&self) -> Grid {
        self.year_starts[0].grid
    }
}

/// Adults at local time `a ≤ t_α` of a year that started with `start`.
pub fn mature_before_recruitment(model: &Model, start: &Field, a: f64) -> Field {
    assert!(
        a <= model.season().t_alpha,
        "no closed form after recruitment starts (a = {a})"
    );
    crate::spatial::gaussian_step(start, model.mature_variance(0.0, a), model.kbar_m(0.0, a))
}

/// Reconstructs `v` on a fixed grid with fixed quadrature size.
#[derive(Clone, Debug)]
pub struct ImmatureSolver<'m> {
    model: &'m Model,
    grid: Grid,
    spectral: Spectral,
    k2: Vec<f64>,
    n_quad: usize,
}

/// One source contribution: the adult density at `adult_time` is turned into
/// births with weight `weight`, which then travel as juveniles from
/// `born` to the evaluation time.
struct SourceNode {
    adult_time: f64,
    born: f64,
    weight: f64,
}

impl<'m> ImmatureSolver<'m> {
    pub fn new(model: &'m Model, grid: Grid, n_quad: usize) -> Result<Self> {
        if n_quad < 8 {
            return Err(Error::InvalidParams(format!("n_quad must be >= 8, got {n_quad}")));
        }
        Ok(ImmatureSolver {
            model,
            grid,
            spectral: Spectral::new(grid.n_points),
            k2: grid.wavenumbers_squared(),
            n_quad,
        })
    }

    /// Birth nodes on `[α, upper]` (positive weights).
    fn birth_nodes(&self, upper: f64) -> Vec<SourceNode> {
        let p = self.model.params();
        let upper = upper.min(p.beta);
        if upper <= p.alpha {
            return Vec::new();
        }
        GaussLegendre::new(self.n_quad)
            .on(p.alpha, upper)
            .into_iter()
            .map(|(a, w)| SourceNode {
                adult_time: a,
                born: a,
                weight: w * p.breeding.value(a),
            })
            .collect()
    }

    /// Maturation nodes on `[t_α, upper]` (negative weights). The juvenile
    /// leg from birth to maturation and the leg from maturation to the
    /// evaluation time are merged into one propagator.
    fn maturation_nodes(&self, upper: f64) -> Vec<SourceNode> {
        let season = self.model.season();
        let p = self.model.params();
        let upper = upper.min(season.t_beta);
        if upper <= season.t_alpha {
            return Vec::new();
        }
        GaussLegendre::new(self.n_quad)
            .on(season.t_alpha, upper)
            .into_iter()
            .map(|(s, w)| {
                let born = self.model.birth_time(s);
                SourceNode {
                    adult_time: born,
                    born,
                    weight: -w * (1.0 - p.delay.derivative(s)) * p.breeding.value(born),
                }
            })
            .collect()
    }

    /// `Σ_j weight_j·K_I(t, born_j)[h(u(adult_time_j))]` as a spectrum.
    fn accumulate(&self, start: &Field, nodes: &[SourceNode], t: f64) -> Vec<Complex<f64>> {
        let model = self.model;
        let h = &model.params().birth;
        let start_spec = self.spectral.forward(&start.values);
        let parts: Vec<Vec<Complex<f64>>> = nodes
            .par_iter()
            .map(|node| {
                let to_adult = gaussian_multiplier(
                    &self.k2,
                    model.mature_variance(0.0, node.adult_time),
                    model.kbar_m(0.0, node.adult_time),
                );
                let adults = self
                    .spectral
                    .inverse(start_spec.iter().zip(&to_adult).map(|(c, m)| c * m).collect());
                let births: Vec<f64> = adults.iter().map(|&a| h.value(a.max(0.0))).collect();
                let juvenile = gaussian_multiplier(
                    &self.k2,
                    model.immature_variance(node.born, t),
                    node.weight * model.immature_survival(node.born, t),
                );
                let mut spec = self.spectral.forward(&births);
                for (c, m) in spec.iter_mut().zip(&juvenile) {
                    *c *= m;
                }
                spec
            })
            .collect();
        let mut total = vec![Complex::new(0.0, 0.0); self.grid.n_points];
        for part in &parts {
            for (t, c) in total.iter_mut().zip(part) {
                *t += c;
            }
        }
        total
    }

    /// `(∫ K_I(t,a) b(a, u(a)) da, ∫ K_I(t,s) R(s, u(s−τ(s))) ds)` over one
    /// year started from `start`, at local time `t`.
    pub fn source_parts(&self, start: &Field, t: f64) -> (Field, Field) {
        let births = self.accumulate(start, &self.birth_nodes(t), t);
        let mut maturations = self.accumulate(start, &self.maturation_nodes(t), t);
        for c in maturations.iter_mut() {
            *c = -*c;
        }
        (
            Field {
                grid: self.grid,
                values: self.spectral.inverse(births),
            },
            Field {
                grid: self.grid,
                values: self.spectral.inverse(maturations),
            },
        )
    }

    /// `v(t)` from `v0` at time 0 and the adult history. Time `t` is global;
    /// the year containing `t` must be in `history`.
    pub fn v_evolve(&self, v0: Option<&Field>, history: &MatureHistory, t: f64) -> Result<Field> {
        let period = self.model.period();
        if t < 0.0 {
            return Err(Error::InvalidParams(format!("time must be >= 0, got {t}")));
        }
        let year = (t / period).floor() as usize;
        let local = t - year as f64 * period;
        let start = history.year_starts.get(year).ok_or_else(|| {
            Error::InsufficientData(format!(
                "adult history covers {} years, time {t} needs year {year}",
                history.year_starts.len()
            ))
        })?;
        if start.grid != self.grid {
            return Err(Error::InvalidParams("adult history grid does not match".into()));
        }
        let mut nodes = self.birth_nodes(local);
        nodes.extend(self.maturation_nodes(local));
        let mut total = self.accumulate(start, &nodes, local);
        if let Some(v0) = v0 {
            let m = gaussian_multiplier(
                &self.k2,
                self.model.immature_variance(0.0, t),
                self.model.immature_survival(0.0, t),
            );
            for ((c, v), m) in total.iter_mut().zip(self.spectral.forward(&v0.values)).zip(&m) {
                *c += v * m;
            }
        }
        Ok(Field {
            grid: self.grid,
            values: self.spectral.inverse(total),
        })
    }
}

/// `Z(s,·)` at local time `s` for a year started from `start`.
pub fn source_term(model: &Model, start: &Field, s: f64) -> Field {
    let p = model.params();
    let season = model.season();
    let h = &p.birth;
    if (p.alpha..=p.beta).contains(&s) {
        let adults = mature_before_recruitment(model, start, s);
        let rate = p.breeding.value(s);
        return Field {
            grid: start.grid,
            values: adults.values.iter().map(|&a| rate * h.value(a.max(0.0))).collect(),
        };
    }
    if (season.t_alpha..=season.t_beta).contains(&s) {
        let born = model.birth_time(s);
        let adults = mature_before_recruitment(model, start, born);
        let births = Field {
            grid: start.grid,
            values: adults.values.iter().map(|&a| h.value(a.max(0.0))).collect(),
        };
        let weight = (1.0 - p.delay.derivative(s)) * p.breeding.value(born);
        let (eps, sigma) = model.epsilon_sigma(s);
        return crate::spatial::gaussian_step(&births, 2.0 * sigma, -weight * eps);
    }
    Field::zeros(start.grid)
}

/// Grid-max of `|births − maturations|` transported to local time `t ≥ t_β`,
/// relative to the grid-max of the births. Births are integrated over the
/// breeding window and maturations over the maturation window, with
/// independent Gauss–Legendre rules.
pub fn conservation_residual(model: &Model, start: &Field, t: f64, n_quad: usize) -> Result<f64> {
    if t < model.season().t_beta {
        return Err(Error::InvalidParams(format!(
            "conservation holds once all juveniles have matured (t >= {}), got {t}",
            model.season().t_beta
        )));
    }
    let solver = ImmatureSolver::new(model, start.grid, n_quad)?;
    let (births, maturations) = solver.source_parts(start, t);
    let scale = births.max();
    if scale == 0.0 {
        return Ok(births.max_diff(&maturations));
    }
    Ok(births.max_diff(&maturations) / scale)
}

/// Scalar conservation residual for a spatially constant adult density `z`
/// at the start of the year, by adaptive quadrature.
pub fn conservation_residual_scalar(model: &Model, z: f64, t: f64) -> f64 {
    let (births, maturations) = scalar_parts(model, z, t);
    if births == 0.0 {
        return maturations.abs();
    }
    (births - maturations).abs() / births
}

fn scalar_parts(model: &Model, z: f64, t: f64) -> (f64, f64) {
    let p = model.params();
    let season = model.season();
    let h = &p.birth;
    let births = if t > p.alpha {
        integrate(
            |a| model.immature_survival(a, t) * p.breeding.value(a) * h.value(z * model.kbar_m(0.0, a)),
            p.alpha,
            t.min(p.beta),
            TIME_RTOL * 1e-3,
        )
    } else {
        0.0
    };
    let maturations = if t > season.t_alpha {
        integrate(
            |s| {
                let born = model.birth_time(s);
                model.immature_survival(s, t) * model.recruitment_factor(s) * h.value(z * model.kbar_m(0.0, born))
            },
            season.t_alpha,
            t.min(season.t_beta),
            TIME_RTOL * 1e-3,
        )
    } else {
        0.0
    };
    (births, maturations)
}

/// The periodic immature density `v̄(t)` driven by the periodic adult
/// density started from `u*`.
#[derive(Clone, Debug, Serialize)]
pub struct VbarCycle {
    pub ustar: f64,
    pub period: f64,
    /// `|v̄(T) − v̄(0)| / max v̄` over the sampled cycle.
    pub periodicity_defect: f64,
    pub max_value: f64,
}

/// Samples at which `max v̄` is estimated.
pub const VBAR_SAMPLES: usize = 400;

impl VbarCycle {
    /// Refuses `ustar` unless the adult path it starts is periodic to `1e-8`.
    pub fn new(model: &Model, ustar: f64) -> Result<Self> {
        let t = model.period();
        let end = mature_path(model, ustar, t);
        if (end - ustar).abs() > 1e-8 * ustar.max(1e-300) {
            return Err(Error::InvalidParams(format!(
                "adult density {ustar} is not periodic: one year maps it to {end}"
            )));
        }
        let mut cycle = VbarCycle {
            ustar,
            period: t,
            periodicity_defect: 0.0,
            max_value: 0.0,
        };
        let max_value = (0..=VBAR_SAMPLES)
            .map(|i| cycle.value(model, t * i as f64 / VBAR_SAMPLES as f64))
            .fold(0.0, f64::max);
        cycle.max_value = max_value;
        cycle.periodicity_defect = if max_value > 0.0 {
            (cycle.value(model, t) - cycle.value(model, 0.0)).abs() / max_value
        } else {
            0.0
        };
        Ok(cycle)
    }

    /// `v̄(t) = ∫_0^t e^{−∫_s^t d_I} Z̄(s) ds` for `t` reduced into `[0, T]`.
    pub fn value(&self, model: &Model, t: f64) -> f64 {
        let local = if t == self.period { t } else { t.rem_euclid(self.period) };
        let (births, maturations) = scalar_parts(model, self.ustar, local);
        births - maturations
    }

    /// `(t, v̄(t))` at `n + 1` equally spaced times over one period.
    pub fn samples(&self, model: &Model, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let t = self.period * i as f64 / n as f64;
                (t, self.value(model, t))
            })
            .collect()
    }
}

/// Co-moving immature profile at one phase of the year.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseProfile {
    pub phase: f64,
    pub vbar: f64,
    /// `v` at the domain centre, well behind both fronts.
    pub plateau: f64,
    pub plateau_relative_error: f64,
    /// Largest `v` on the outer 5% of the domain, relative to `max v`.
    pub tail_ratio: f64,
    /// Max-norm difference between this period's profile and the previous
    /// period's, aligned by the measured adult front displacement, relative
    /// to `max v`.
    pub drift: f64,
    #[serde(skip)]
    pub profile: Field,
}

/// Immature profiles after `n_periods` years at each phase in `phases`.
///
/// The previous period's profile is aligned to the current one by the
/// displacement of the adult front between the two year starts, applied as
/// a spectral shift.
pub fn v_wave_profile(
    model: &Model,
    history: &MatureHistory,
    fronts: &[Option<f64>],
    ustar: f64,
    phases: &[f64],
    n_periods: usize,
    n_quad: usize,
) -> Result<Vec<PhaseProfile>> {
    if n_periods < 2 || history.year_starts.len() <= n_periods {
        return Err(Error::InsufficientData(format!(
            "need adult history through year {n_periods}, have {} years",
            history.year_starts.len()
        )));
    }
    let (prev_front, front) = match (
        fronts.get(n_periods - 1).copied().flatten(),
        fronts.get(n_periods).copied().flatten(),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InsufficientData(
                "adult front missing at the compared years".into(),
            ))
        }
    };
    let grid = history.grid();
    let solver = ImmatureSolver::new(model, grid, n_quad)?;
    let cycle = VbarCycle::new(model, ustar)?;
    let t = model.period();
    let centre = grid.n_points / 2;
    let outer = 0.95 * grid.half_width;
    phases
        .iter()
        .map(|&phase| {
            let now = solver.v_evolve(None, history, n_periods as f64 * t + phase)?;
            let before = solver.v_evolve(None, history, (n_periods - 1) as f64 * t + phase)?;
            let aligned = crate::spatial::spectral_shift(&before, front - prev_front);
            let vmax = now.max();
            let vbar = cycle.value(model, phase);
            let plateau = 0.5 * (now.values[centre - 1] + now.values[centre]);
            let tail = now
                .max_on(outer, grid.half_width)
                .max(now.max_on(-grid.half_width, -outer));
            // Compare on the right half, where the shifted front sits; the
            // left half moves the other way.
            let right = |f: &Field| Field {
                grid,
                values: f.values[centre..].to_vec(),
            };
            let drift = right(&now)
                .values
                .iter()
                .zip(&right(&aligned).values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / vmax;
            Ok(PhaseProfile {
                phase,
                vbar,
                plateau,
                plateau_relative_error: (plateau - vbar).abs() / vbar.abs().max(f64::MIN_POSITIVE),
                tail_ratio: tail / vmax,
                drift,
                profile: now,
            })
        })
        .collect()
}
