//! Scalar root finding and minimisation.

use crate::error::{Error, Result};

/// Root of `f` on `[a, b]` by bisection. `f(a)` and `f(b)` must differ in
/// sign (a zero at either end is returned directly). Stops when the bracket
/// is narrower than `xtol`, or when it can no longer be split in floating
/// point.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::Bracket(format!(
            "no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}"
        )));
    }
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= xtol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(Error::NoConvergence {
        what: "bisection",
        iterations: 2000,
    })
}

/// Result of a one-dimensional minimisation.
#[derive(Clone, Copy, Debug)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`,
/// stopping when the bracket width falls below `rtol·|x|`.
pub fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> Minimum {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while (b - a) > rtol * 0.5 * (c.abs() + d.abs()) && evaluations < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    let (x, value) = if fc <= fd { (c, fc) } else { (d, fd) };
    Minimum {
        x,
        value,
        bracket: (a, b),
        evaluations,
    }
}

/// Samples of a geometric scan used to bracket a minimum over `(0, ∞)`.
#[derive(Clone, Debug)]
pub struct GeometricBracket {
    /// `(x, f(x))` in increasing `x`.
    pub samples: Vec<(f64, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// Brackets a minimiser of `f` on `(0, ∞)` by doubling from `seed` until
/// `f` increases, halving instead if it already increases at the seed.
/// At most `max_steps` doublings (or halvings) are tried.
pub fn bracket_geometric(f: impl Fn(f64) -> f64, seed: f64, max_steps: usize) -> Result<GeometricBracket> {
    let f0 = f(seed);
    let f1 = f(2.0 * seed);
    let mut samples = vec![(seed, f0), (2.0 * seed, f1)];
    if !(f0.is_finite() && f1.is_finite()) {
        return Err(Error::Bracket(format!("non-finite objective near seed {seed}")));
    }
    if f1 < f0 {
        let (mut prev, mut cur) = ((seed, f0), (2.0 * seed, f1));
        for _ in 0..max_steps {
            let x = 2.0 * cur.0;
            let next = (x, f(x));
            samples.push(next);
            if !next.1.is_finite() || next.1 >= cur.1 {
                return Ok(GeometricBracket {
                    samples,
                    lower: prev.0,
                    upper: x,
                });
            }
            prev = cur;
            cur = next;
        }
    } else {
        let (mut prev, mut cur) = ((2.0 * seed, f1), (seed, f0));
        for _ in 0..max_steps {
            let x = 0.5 * cur.0;
            let next = (x, f(x));
            samples.insert(0, next);
            if next.1.is_finite() && next.1 >= cur.1 {
                return Ok(GeometricBracket {
                    samples,
                    lower: x,
                    upper: prev.0,
                });
            }
            prev = cur;
            cur = next;
        }
    }
    Err(Error::Bracket(format!(
        "no interior minimum found within {max_steps} doublings from {seed}"
    )))
}
