//! Time-periodic scalar coefficients.
//!
//! Every seasonal coefficient of the model (diffusion and death rates, the
//! maturation delay, the breeding rate) is a `C¹`, `T`-periodic function of
//! time. [`PeriodicFn`] stores the description it was built from
//! ([`PeriodicSpec`], which is also its serialized form) together with a
//! representation that supports exact evaluation, differentiation and
//! integration:
//!
//! * constants and harmonics have closed forms;
//! * linear-on-interval, periodic cubic splines and quartic bumps are
//!   piecewise polynomials on one period, integrated with their exact
//!   antiderivatives;
//! * sums and scalings compose the above.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Serialized description of a periodic coefficient.
///
/// The period is not part of the description; it is supplied when the
/// function is built (it is the model's year length).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodicSpec {
    /// `{"const": c}`
    Const(f64),
    /// `{"linear": [a, b, t0, t1]}`: equal to `a + b·t` on `[t0, t1]`,
    /// closed by a cubic Hermite blend on `[t1, t0 + T]` so that the
    /// periodic extension is `C¹`.
    Linear([f64; 4]),
    /// `{"spline": {"knots": [...], "values": [...]}}`: periodic cubic
    /// spline through the knots (which must lie in `[0, T)`).
    Spline { knots: Vec<f64>, values: Vec<f64> },
    /// `mean + amplitude·cos(2π(t − phase)/T)`.
    Harmonic { mean: f64, amplitude: f64, phase: f64 },
    /// Quartic bump `A·16(t−a)²(b−t)²/(b−a)⁴` on `[a, b]`, zero elsewhere.
    /// The support may wrap past `T`.
    Bump { amplitude: f64, start: f64, end: f64 },
    /// Pointwise sum.
    Sum(Vec<PeriodicSpec>),
    /// `factor · base`.
    Scaled { factor: f64, base: Box<PeriodicSpec> },
}

/// A `T`-periodic `C¹` function of time.
#[derive(Clone, Debug)]
pub struct PeriodicFn {
    period: f64,
    spec: PeriodicSpec,
    repr: Repr,
}

#[derive(Clone, Debug)]
enum Repr {
    Const(f64),
    Harmonic { mean: f64, amplitude: f64, phase: f64 },
    Piecewise(Piecewise),
    Sum(Vec<PeriodicFn>),
    Scaled(f64, Box<PeriodicFn>),
}

impl PeriodicFn {
    /// Builds the function described by `spec` with period `period`.
    pub fn build(period: f64, spec: &PeriodicSpec) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidParams(format!("period must be positive, got {period}")));
        }
        let repr = match spec {
            PeriodicSpec::Const(c) => {
                finite("const", *c)?;
                Repr::Const(*c)
            }
            PeriodicSpec::Linear([a, b, t0, t1]) => {
                Repr::Piecewise(Piecewise::linear_on_interval(period, *a, *b, *t0, *t1)?)
            }
            PeriodicSpec::Spline { knots, values } => {
                Repr::Piecewise(Piecewise::periodic_spline(period, knots, values)?)
            }
            PeriodicSpec::Harmonic { mean, amplitude, phase } => {
                finite("harmonic.mean", *mean)?;
                finite("harmonic.amplitude", *amplitude)?;
                finite("harmonic.phase", *phase)?;
                Repr::Harmonic {
                    mean: *mean,
                    amplitude: *amplitude,
                    phase: *phase,
                }
            }
            PeriodicSpec::Bump { amplitude, start, end } => {
                Repr::Piecewise(Piecewise::bump(period, *amplitude, *start, *end)?)
            }
            PeriodicSpec::Sum(parts) => Repr::Sum(
                parts
                    .iter()
                    .map(|p| PeriodicFn::build(period, p))
                    .collect::<Result<_>>()?,
            ),
            PeriodicSpec::Scaled { factor, base } => {
                finite("scaled.factor", *factor)?;
                Repr::Scaled(*factor, Box::new(PeriodicFn::build(period, base)?))
            }
        };
        Ok(PeriodicFn {
            period,
            spec: spec.clone(),
            repr,
        })
    }

    pub fn constant(period: f64, value: f64) -> Result<Self> {
        Self::build(period, &PeriodicSpec::Const(value))
    }

    pub fn harmonic(period: f64, mean: f64, amplitude: f64, phase: f64) -> Result<Self> {
        Self::build(period, &PeriodicSpec::Harmonic { mean, amplitude, phase })
    }

    pub fn linear_on_interval(period: f64, intercept: f64, slope: f64, t0: f64, t1: f64) -> Result<Self> {
        Self::build(period, &PeriodicSpec::Linear([intercept, slope, t0, t1]))
    }

    pub fn spline(period: f64, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(period, &PeriodicSpec::Spline { knots, values })
    }

    pub fn bump(period: f64, amplitude: f64, start: f64, end: f64) -> Result<Self> {
        Self::build(period, &PeriodicSpec::Bump { amplitude, start, end })
    }

    /// Pointwise sum `self + other`. Periods must agree.
    pub fn plus(&self, other: &PeriodicFn) -> Result<Self> {
        if (self.period - other.period).abs() > 1e-14 * self.period {
            return Err(Error::InvalidParams(
                "cannot add periodic functions with different periods".into(),
            ));
        }
        Ok(PeriodicFn {
            period: self.period,
            spec: PeriodicSpec::Sum(vec![self.spec.clone(), other.spec.clone()]),
            repr: Repr::Sum(vec![self.clone(), other.clone()]),
        })
    }

    /// `factor · self`.
    pub fn scaled(&self, factor: f64) -> Self {
        PeriodicFn {
            period: self.period,
            spec: PeriodicSpec::Scaled {
                factor,
                base: Box::new(self.spec.clone()),
            },
            repr: Repr::Scaled(factor, Box::new(self.clone())),
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spec(&self) -> &PeriodicSpec {
        &self.spec
    }

    /// The constant value, if the function is a constant (possibly scaled or
    /// summed from constants).
    pub fn as_constant(&self) -> Option<f64> {
        match &self.repr {
            Repr::Const(c) => Some(*c),
            Repr::Harmonic { mean, amplitude, .. } if *amplitude == 0.0 => Some(*mean),
            Repr::Sum(parts) => parts.iter().map(|p| p.as_constant()).sum(),
            Repr::Scaled(k, base) => base.as_constant().map(|c| k * c),
            _ => None,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.repr {
            Repr::Const(c) => *c,
            Repr::Harmonic { mean, amplitude, phase } => mean + amplitude * (self.omega() * (t - phase)).cos(),
            Repr::Piecewise(pw) => pw.value(self.reduce(t)),
            Repr::Sum(parts) => parts.iter().map(|p| p.value(t)).sum(),
            Repr::Scaled(k, base) => k * base.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match &self.repr {
            Repr::Const(_) => 0.0,
            Repr::Harmonic { amplitude, phase, .. } => -amplitude * self.omega() * (self.omega() * (t - phase)).sin(),
            Repr::Piecewise(pw) => pw.derivative(self.reduce(t)),
            Repr::Sum(parts) => parts.iter().map(|p| p.derivative(t)).sum(),
            Repr::Scaled(k, base) => k * base.derivative(t),
        }
    }

    /// `∫_a^b f(t) dt` (signed; `a > b` is allowed).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        match &self.repr {
            Repr::Const(c) => c * (b - a),
            Repr::Harmonic { mean, amplitude, phase } => {
                let w = self.omega();
                mean * (b - a) + amplitude / w * ((w * (b - phase)).sin() - (w * (a - phase)).sin())
            }
            Repr::Piecewise(pw) => self.piecewise_antiderivative(pw, b) - self.piecewise_antiderivative(pw, a),
            Repr::Sum(parts) => parts.iter().map(|p| p.integral(a, b)).sum(),
            Repr::Scaled(k, base) => k * base.integral(a, b),
        }
    }

    /// Mean value over one period.
    pub fn mean(&self) -> f64 {
        self.integral(0.0, self.period) / self.period
    }

    /// Minimum and maximum over `n` uniform samples of one period, with the
    /// times at which they occur.
    pub fn sampled_extrema(&self, n: usize) -> ((f64, f64), (f64, f64)) {
        sampled_extrema(self.period, n, |t| self.value(t))
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    fn reduce(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    fn piecewise_antiderivative(&self, pw: &Piecewise, t: f64) -> f64 {
        let cycles = (t / self.period).floor();
        let r = t - cycles * self.period;
        let r = r.clamp(0.0, self.period);
        cycles * pw.total() + pw.cumulative_to(r)
    }
}

impl Serialize for PeriodicFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

/// Extrema of `f` over `n` uniform samples of `[0, period)`:
/// `((t_min, f_min), (t_max, f_max))`.
pub fn sampled_extrema(period: f64, n: usize, f: impl Fn(f64) -> f64) -> ((f64, f64), (f64, f64)) {
    let mut lo = (0.0, f64::INFINITY);
    let mut hi = (0.0, f64::NEG_INFINITY);
    for i in 0..n {
        let t = period * i as f64 / n as f64;
        let v = f(t);
        if v < lo.1 {
            lo = (t, v);
        }
        if v > hi.1 {
            hi = (t, v);
        }
    }
    (lo, hi)
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be finite, got {x}")))
    }
}

type Poly = [f64; 5];

/// Piecewise polynomial (degree ≤ 4) on `[0, T]`, each piece expressed in the
/// local variable `t − breaks[i]`.
#[derive(Clone, Debug)]
struct Piecewise {
    breaks: Vec<f64>,
    coeffs: Vec<Poly>,
    cumulative: Vec<f64>,
}

impl Piecewise {
    /// Assembles a piecewise polynomial from contiguous segments covering
    /// `[start, start + T]`, given as `(length, coefficients)`. Segments that
    /// cross a multiple of `T` are split and re-expanded.
    fn from_segments(period: f64, start: f64, segments: &[(f64, Poly)]) -> Self {
        let mut pieces: Vec<(f64, f64, Poly)> = Vec::new();
        let mut pos = start.rem_euclid(period);
        for &(len, poly) in segments {
            let mut consumed = 0.0;
            while len - consumed > 1e-15 * period {
                let room = period - pos;
                let take = (len - consumed).min(room);
                let local = if consumed == 0.0 {
                    poly
                } else {
                    taylor_shift(&poly, consumed)
                };
                if take > 0.0 {
                    pieces.push((pos, pos + take, local));
                }
                consumed += take;
                pos += take;
                if pos >= period * (1.0 - 1e-15) {
                    pos = 0.0;
                }
            }
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = Vec::with_capacity(pieces.len() + 1);
        let mut coeffs = Vec::with_capacity(pieces.len());
        for (begin, _, poly) in &pieces {
            breaks.push(*begin);
            coeffs.push(*poly);
        }
        breaks[0] = 0.0;
        breaks.push(period);
        let mut cumulative = vec![0.0; breaks.len()];
        for i in 0..coeffs.len() {
            cumulative[i + 1] = cumulative[i] + poly_integral(&coeffs[i], breaks[i + 1] - breaks[i]);
        }
        Piecewise {
            breaks,
            coeffs,
            cumulative,
        }
    }

    fn linear_on_interval(period: f64, a: f64, b: f64, t0: f64, t1: f64) -> Result<Self> {
        for (n, x) in [("a", a), ("b", b), ("t0", t0), ("t1", t1)] {
            finite(&format!("linear.{n}"), x)?;
        }
        let len = t1 - t0;
        if !(len > 0.0 && len < period) {
            return Err(Error::InvalidParams(format!(
                "linear interval [{t0}, {t1}] must have length in (0, T)"
            )));
        }
        let y0 = a + b * t0;
        let y1 = a + b * t1;
        let line = [y0, b, 0.0, 0.0, 0.0];
        // Blend from (t1, y1) back to (t0 + T, y0) with slope b at both ends.
        let blend = hermite(y1, y0, b, b, period - len);
        Ok(Self::from_segments(period, t0, &[(len, line), (period - len, blend)]))
    }

    fn bump(period: f64, amplitude: f64, start: f64, end: f64) -> Result<Self> {
        finite("bump.amplitude", amplitude)?;
        finite("bump.start", start)?;
        finite("bump.end", end)?;
        let w = end - start;
        if !(w > 0.0 && w <= period) {
            return Err(Error::InvalidParams(format!(
                "bump support [{start}, {end}] must have length in (0, T]"
            )));
        }
        let c = 16.0 * amplitude;
        let quartic = [0.0, 0.0, c / (w * w), -2.0 * c / (w * w * w), c / (w * w * w * w)];
        let mut segments = vec![(w, quartic)];
        if period - w > 0.0 {
            segments.push((period - w, [0.0; 5]));
        }
        Ok(Self::from_segments(period, start, &segments))
    }

    fn periodic_spline(period: f64, knots: &[f64], values: &[f64]) -> Result<Self> {
        let m = knots.len();
        if m < 3 || values.len() != m {
            return Err(Error::InvalidParams(
                "spline needs at least 3 knots and one value per knot".into(),
            ));
        }
        for (i, (&t, &y)) in knots.iter().zip(values).enumerate() {
            finite("spline.knot", t)?;
            finite("spline.value", y)?;
            if !(0.0..period).contains(&t) || (i > 0 && t <= knots[i - 1]) {
                return Err(Error::InvalidParams(
                    "spline knots must be strictly increasing within [0, T)".into(),
                ));
            }
        }
        // Interval lengths, with the wrap interval last.
        let h: Vec<f64> = (0..m)
            .map(|i| {
                if i + 1 < m {
                    knots[i + 1] - knots[i]
                } else {
                    knots[0] + period - knots[m - 1]
                }
            })
            .collect();
        let slope = |i: usize| (values[(i + 1) % m] - values[i]) / h[i];
        // Cyclic system for the second derivatives.
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for i in 0..m {
            let prev = (i + m - 1) % m;
            let next = (i + 1) % m;
            a[(i, prev)] += h[prev];
            a[(i, i)] += 2.0 * (h[prev] + h[i]);
            a[(i, next)] += h[i];
            rhs[i] = 6.0 * (slope(i) - slope(prev));
        }
        let second = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidParams("singular spline system".into()))?;
        let segments: Vec<(f64, Poly)> = (0..m)
            .map(|i| {
                let (mi, mn) = (second[i], second[(i + 1) % m]);
                let hi = h[i];
                let c1 = slope(i) - hi * (2.0 * mi + mn) / 6.0;
                (hi, [values[i], c1, mi / 2.0, (mn - mi) / (6.0 * hi), 0.0])
            })
            .collect();
        Ok(Self::from_segments(period, knots[0], &segments))
    }

    fn locate(&self, t: f64) -> usize {
        let i = self.breaks.partition_point(|&b| b <= t);
        i.saturating_sub(1).min(self.coeffs.len() - 1)
    }

    fn value(&self, t: f64) -> f64 {
        let i = self.locate(t);
        poly_value(&self.coeffs[i], t - self.breaks[i])
    }

    fn derivative(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let c = &self.coeffs[i];
        let u = t - self.breaks[i];
        c[1] + u * (2.0 * c[2] + u * (3.0 * c[3] + u * 4.0 * c[4]))
    }

    fn cumulative_to(&self, t: f64) -> f64 {
        let i = self.locate(t);
        self.cumulative[i] + poly_integral(&self.coeffs[i], t - self.breaks[i])
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }
}

/// Cubic Hermite interpolant on `[0, h]` in the local variable.
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> Poly {
    let d = (y1 - y0) / h;
    let c2 = (3.0 * d - 2.0 * m0 - m1) / h;
    let c3 = (m0 + m1 - 2.0 * d) / (h * h);
    [y0, m0, c2, c3, 0.0]
}

fn poly_value(c: &Poly, u: f64) -> f64 {
    c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * c[4])))
}

/// `∫_0^u p`.
fn poly_integral(c: &Poly, u: f64) -> f64 {
    u * (c[0] + u * (c[1] / 2.0 + u * (c[2] / 3.0 + u * (c[3] / 4.0 + u * c[4] / 5.0))))
}

/// Coefficients of `u ↦ p(u + d)`.
fn taylor_shift(c: &Poly, d: f64) -> Poly {
    const BINOM: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    let mut out = [0.0; 5];
    for (i, &ci) in c.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate().take(i + 1) {
            *o += ci * BINOM[i][j] * d.powi((i - j) as i32);
        }
    }
    out
}
