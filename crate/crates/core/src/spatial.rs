//! The yearly map `Q` on a one-dimensional periodic grid.
//!
//! All dispersal kernels are Gaussians, so every convolution is a spectral
//! multiplier `decay·exp(−k²v/2)` (variance `v`). On the periodic grid these
//! multipliers compose exactly, which makes the discrete map exactly
//! translation equivariant under integer shifts. The domain must be wide
//! enough that the wrap-around is negligible; [`iterate_q`] monitors this.
//!
//! One year of `Q` is
//!
//! ```text
//! Q[φ] = G(V_T, k̄(0,T))φ
//!      + Σ_j w_j (1−τ'(s_j)) p(b_j) · G(2σ_j + V(s_j,T), ε_j k̄(s_j,T)) h(G(V(0,b_j), k̄(0,b_j))φ)
//! ```
//!
//! with Gauss–Legendre nodes `s_j` on the maturation window, birth times
//! `b_j = s_j − τ(s_j)`, and `G(v, d)` the Gaussian step of variance `v` and
//! decay `d`.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BirthFn, Model};
use crate::quadrature::GaussLegendre;

/// Uniform cell-centred grid on `[−L, L)` with periodic wrap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub half_width: f64,
    pub n_points: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParams(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "grid size must be a power of two >= 2, got {n_points}"
            )));
        }
        Ok(Grid {
            half_width,
            n_points,
            dx: 2.0 * half_width / n_points as f64,
        })
    }

    /// Smallest power-of-two grid on `[−L, L)` with spacing at most `dx`.
    pub fn with_spacing(half_width: f64, dx: f64) -> Result<Self> {
        let n = ((2.0 * half_width / dx).ceil() as usize).next_power_of_two();
        Self::new(half_width, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Squared angular wavenumbers in FFT order.
    pub fn wavenumbers_squared(&self) -> Vec<f64> {
        let n = self.n_points;
        let base = 2.0 * std::f64::consts::PI / (n as f64 * self.dx);
        (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                (m * base).powi(2)
            })
            .collect()
    }

    /// Signed angular wavenumbers in FFT order; the Nyquist mode gets zero so
    /// shifts of real fields stay real.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let base = 2.0 * std::f64::consts::PI / (n as f64 * self.dx);
        (0..n)
            .map(|j| {
                if j == n / 2 {
                    0.0
                } else if j < n / 2 {
                    j as f64 * base
                } else {
                    (j as f64 - n as f64) * base
                }
            })
            .collect()
    }
}

/// Density values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.n_points],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.n_points],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Field {
            grid,
            values: grid.xs().into_iter().map(f).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Periodic shift by `k` cells: `out[i] = self[i − k]`.
    pub fn roll(&self, k: isize) -> Field {
        let n = self.values.len() as isize;
        let values = (0..n).map(|i| self.values[(i - k).rem_euclid(n) as usize]).collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    /// Maximum absolute difference.
    pub fn max_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Values in `[from, to]` of `x`.
    pub fn max_on(&self, from: f64, to: f64) -> f64 {
        self.grid
            .xs()
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x >= from && **x <= to)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cached forward/inverse FFT plans for one grid size.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex<f64>> {
        assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, normalised, real part.
    pub fn inverse(&self, mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
        assert_eq!(spectrum.len(), self.n);
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }
}

/// Spectral multiplier of the Gaussian step with variance `v` and decay `d`.
pub fn gaussian_multiplier(k2: &[f64], variance: f64, decay: f64) -> Vec<f64> {
    k2.iter().map(|k| decay * (-0.5 * k * variance).exp()).collect()
}

/// `decay·(G_v ∗ field)` with `G_v` the centred Gaussian of variance `v`.
/// Zero variance is the point-mass kernel.
///
/// # Panics
/// If `variance < 0`.
pub fn gaussian_step(field: &Field, variance: f64, decay: f64) -> Field {
    assert!(variance >= 0.0, "gaussian_step requires variance >= 0 (got {variance})");
    if variance == 0.0 {
        return field.scaled(decay);
    }
    let spectral = Spectral::new(field.grid.n_points);
    let mult = gaussian_multiplier(&field.grid.wavenumbers_squared(), variance, decay);
    let mut spec = spectral.forward(&field.values);
    for (c, m) in spec.iter_mut().zip(&mult) {
        *c *= m;
    }
    Field {
        grid: field.grid,
        values: spectral.inverse(spec),
    }
}

/// Shift by a real distance `d` (`out(x) = field(x − d)`) via the spectral
/// phase factor.
pub fn spectral_shift(field: &Field, distance: f64) -> Field {
    let spectral = Spectral::new(field.grid.n_points);
    let mut spec = spectral.forward(&field.values);
    for (c, k) in spec.iter_mut().zip(field.grid.wavenumbers()) {
        *c *= Complex::from_polar(1.0, -k * distance);
    }
    Field {
        grid: field.grid,
        values: spectral.inverse(spec),
    }
}

#[derive(Clone, Debug)]
struct NodeTerms {
    /// Quadrature weight times `(1 − τ'(s))·p(s − τ(s))`.
    weight: f64,
    /// Adults from the start of the year to the birth time.
    inner: Vec<f64>,
    /// Juvenile survival and dispersal, then adult survival and dispersal
    /// from maturation to the end of the year.
    outer: Vec<f64>,
}

/// Precomputed one-year operator `Q` for a model, grid, and quadrature size.
#[derive(Clone, Debug)]
pub struct YearOperator {
    grid: Grid,
    spectral: Spectral,
    survival: Vec<f64>,
    nodes: Vec<NodeTerms>,
    birth: BirthFn,
    n_quad: usize,
    /// Standard deviation of the widest kernel applied in one year.
    kernel_std: f64,
}

impl YearOperator {
    pub fn new(model: &Model, grid: Grid, n_quad: usize) -> Result<Self> {
        if n_quad < 8 {
            return Err(Error::InvalidParams(format!("n_quad must be >= 8, got {n_quad}")));
        }
        let t = model.period();
        let season = model.season();
        let params = model.params();
        let k2 = grid.wavenumbers_squared();
        let year_variance = model.mature_variance(0.0, t);
        let survival = gaussian_multiplier(&k2, year_variance, model.kbar_m(0.0, t));
        let mut kernel_var = year_variance;
        let nodes = GaussLegendre::new(n_quad)
            .on(season.t_alpha, season.t_beta)
            .into_iter()
            .map(|(s, w)| {
                let born = model.birth_time(s);
                let (eps, sigma) = model.epsilon_sigma(s);
                let outer_var = 2.0 * sigma + model.mature_variance(s, t);
                let inner_var = model.mature_variance(0.0, born);
                kernel_var = kernel_var.max(inner_var + outer_var);
                NodeTerms {
                    weight: w * (1.0 - params.delay.derivative(s)) * params.breeding.value(born),
                    inner: gaussian_multiplier(&k2, inner_var, model.kbar_m(0.0, born)),
                    outer: gaussian_multiplier(&k2, outer_var, eps * model.kbar_m(s, t)),
                }
            })
            .collect();
        Ok(YearOperator {
            grid,
            spectral: Spectral::new(grid.n_points),
            survival,
            nodes,
            birth: params.birth.clone(),
            n_quad,
            kernel_std: kernel_var.sqrt(),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    /// Standard deviation of the widest one-year dispersal kernel.
    pub fn kernel_std(&self) -> f64 {
        self.kernel_std
    }

    /// `Q[φ]`. Node contributions are computed in parallel and summed in node
    /// order, so the result does not depend on thread scheduling.
    pub fn apply(&self, field: &Field) -> Field {
        assert_eq!(field.grid, self.grid, "field grid does not match the operator");
        let spectrum = self.spectral.forward(&field.values);
        let contributions: Vec<Vec<Complex<f64>>> = self
            .nodes
            .par_iter()
            .map(|node| {
                if node.weight == 0.0 {
                    return Vec::new();
                }
                let adults = self
                    .spectral
                    .inverse(spectrum.iter().zip(&node.inner).map(|(c, m)| c * m).collect());
                let births: Vec<f64> = adults.iter().map(|&a| self.birth.value(a.max(0.0))).collect();
                let mut out = self.spectral.forward(&births);
                for (c, m) in out.iter_mut().zip(&node.outer) {
                    *c *= node.weight * m;
                }
                out
            })
            .collect();
        let mut total: Vec<Complex<f64>> = spectrum.iter().zip(&self.survival).map(|(c, m)| c * m).collect();
        for contribution in contributions.iter().filter(|c| !c.is_empty()) {
            for (t, c) in total.iter_mut().zip(contribution) {
                *t += c;
            }
        }
        let values = self.spectral.inverse(total).into_iter().map(|v| v.max(0.0)).collect();
        Field {
            grid: self.grid,
            values,
        }
    }
}

/// One application of `Q`.
pub fn apply_q(model: &Model, field: &Field, n_quad: usize) -> Result<Field> {
    Ok(YearOperator::new(model, field.grid, n_quad)?.apply(field))
}

/// Rightmost point where `field` crosses `level` from above, by linear
/// interpolation. `None` when there is no crossing or the field is still at
/// or above `level` at the right edge.
pub fn front_position(field: &Field, level: f64) -> Option<f64> {
    let v = &field.values;
    let n = v.len();
    if v[n - 1] >= level {
        return None;
    }
    (0..n - 1).rev().find(|&i| v[i] >= level && v[i + 1] < level).map(|i| {
        let frac = (v[i] - level) / (v[i] - v[i + 1]);
        field.grid.x(i) + frac * field.grid.dx
    })
}

/// Leftmost crossing of `level` from below, mirror of [`front_position`].
pub fn back_position(field: &Field, level: f64) -> Option<f64> {
    let v = &field.values;
    if v[0] >= level {
        return None;
    }
    (0..v.len() - 1).find(|&i| v[i] < level && v[i + 1] >= level).map(|i| {
        let frac = (level - v[i]) / (v[i + 1] - v[i]);
        field.grid.x(i) + frac * field.grid.dx
    })
}

/// Yearly snapshots of `Qⁿ[φ]` with front positions.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Field>,
    pub front_positions: Vec<Option<f64>>,
    pub level: f64,
    /// Number of leading years whose fronts stayed at least
    /// [`EDGE_MARGIN_STDS`] kernel standard deviations from both domain edges.
    pub usable_years: usize,
    /// First year whose front came too close to an edge, if any.
    pub contaminated_at: Option<usize>,
    pub edge_margin: f64,
}

/// Required distance between fronts and domain edges, in kernel standard
/// deviations.
pub const EDGE_MARGIN_STDS: f64 = 10.0;

/// Iterates `Q` for `n_years`, tracking the front at `level`.
pub fn iterate_q(op: &YearOperator, field0: &Field, n_years: usize, level: f64) -> Trajectory {
    let margin = EDGE_MARGIN_STDS * op.kernel_std();
    let edge = op.grid().half_width;
    let mut snapshots = Vec::with_capacity(n_years + 1);
    let mut fronts = Vec::with_capacity(n_years + 1);
    let mut contaminated_at = None;
    let mut field = field0.clone();
    for year in 0..=n_years {
        if year > 0 {
            field = op.apply(&field);
        }
        let front = front_position(&field, level);
        let back = back_position(&field, level);
        let too_close = front.is_some_and(|f| f > edge - margin)
            || back.is_some_and(|b| b < -edge + margin)
            || field.values[0] >= level
            || field.values[field.values.len() - 1] >= level;
        if too_close && contaminated_at.is_none() {
            contaminated_at = Some(year);
        }
        fronts.push(front);
        snapshots.push(field.clone());
    }
    Trajectory {
        snapshots,
        front_positions: fronts,
        level,
        usable_years: contaminated_at.unwrap_or(n_years + 1),
        contaminated_at,
        edge_margin: margin,
    }
}

/// Least-squares slope of front position against year.
#[derive(Clone, Debug, Serialize)]
pub struct SpeedEstimate {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub first_year: usize,
    pub last_year: usize,
    pub points: usize,
}

/// Minimum number of retained front positions.
pub const MIN_FRONT_POINTS: usize = 10;

/// Slope of the front over the usable years after discarding the first third
/// as transient.
pub fn empirical_speed(traj: &Trajectory) -> Result<SpeedEstimate> {
    let usable = traj.usable_years.min(traj.front_positions.len());
    let start = usable / 3;
    let points: Vec<(f64, f64)> = (start..usable)
        .filter_map(|n| traj.front_positions[n].map(|x| (n as f64, x)))
        .collect();
    let mut est = fit_line(&points)?;
    est.first_year = points[0].0 as usize;
    est.last_year = points[points.len() - 1].0 as usize;
    Ok(est)
}

/// Ordinary least squares fit `x ≈ intercept + slope·n`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<SpeedEstimate> {
    let m = points.len();
    if m < MIN_FRONT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{m} front positions retained, need at least {MIN_FRONT_POINTS}"
        )));
    }
    let mf = m as f64;
    let nbar = points.iter().map(|p| p.0).sum::<f64>() / mf;
    let xbar = points.iter().map(|p| p.1).sum::<f64>() / mf;
    let sxx: f64 = points.iter().map(|p| (p.0 - nbar).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - nbar) * (p.1 - xbar)).sum();
    let slope = sxy / sxx;
    let intercept = xbar - slope * nbar;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (mf - 2.0) / sxx).sqrt();
    Ok(SpeedEstimate {
        slope,
        stderr,
        intercept,
        first_year: points[0].0 as usize,
        last_year: points[m - 1].0 as usize,
        points: m,
    })
}

/// `height` on `|x| ≤ radius`, with a smooth cosine ramp of width `ramp` to
/// zero outside.
pub fn plateau(grid: Grid, height: f64, radius: f64, ramp: f64) -> Field {
    Field::from_fn(grid, |x| {
        let r = x.abs();
        if r <= radius {
            height
        } else if r >= radius + ramp {
            0.0
        } else {
            0.5 * height * (1.0 + (std::f64::consts::PI * (r - radius) / ramp).cos())
        }
    })
}

/// `height` on `|x| ≤ radius` and `height·(1 + μr)e^{−μr}` at distance `r`
/// beyond it: a plateau with the critical exponential tail of a minimal-speed
/// front, which avoids the slow logarithmic lag of compactly supported data.
pub fn critical_tail(grid: Grid, height: f64, radius: f64, mu: f64) -> Field {
    Field::from_fn(grid, |x| {
        let r = (x.abs() - radius).max(0.0);
        height * (1.0 + mu * r) * (-mu * r).exp()
    })
}
