//! The spatially homogeneous yearly map `Q̄`, the threshold number `L`, and
//! the positive fixed point `u*`.
//!
//! For a spatially constant adult density `z` at the start of the year,
//!
//! ```text
//! Q̄[z] = z·k̄(0,T) + ∫_{t_α}^{t_β} k̄(s,T)·(1−τ'(s))·ε(s)·p(s−τ(s))·h(z·k̄(0,s−τ(s))) ds
//! ```
//!
//! where `k̄(a,b)` is adult survival from `a` to `b`. Its slope at zero is
//! `k + (1−k)·L` with `k = k̄(0,T)`, so `Q̄` grows near zero exactly when
//! `L > 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::quadrature::integrate;
use crate::solve::bisect;

/// Relative tolerance of the time integral inside `Q̄`. Tighter than the
/// generic time tolerance so orbit residuals can be resolved to `1e-10`.
pub const QBAR_RTOL: f64 = 1e-13;

/// `|L − 1|` below which persistence is reported as indeterminate.
pub const THRESHOLD_BAND: f64 = 1e-6;

/// Relative tolerance of the fixed-point bisection.
pub const FIXED_POINT_RTOL: f64 = 1e-13;

/// `Q̄[z]`.
///
/// # Panics
/// If `z < 0`.
pub fn qbar(model: &Model, z: f64) -> f64 {
    assert!(z >= 0.0, "qbar requires z >= 0 (got {z})");
    if z == 0.0 {
        return 0.0;
    }
    let t = model.period();
    let season = model.season();
    let h = &model.params().birth;
    let recruits = integrate(
        |s| {
            let born = model.birth_time(s);
            model.kbar_m(s, t) * model.recruitment_factor(s) * h.value(z * model.kbar_m(0.0, born))
        },
        season.t_alpha,
        season.t_beta,
        QBAR_RTOL,
    );
    z * model.kbar_m(0.0, t) + recruits
}

/// The threshold number `L = [k/(1−k)]·∫ dR0(s)/k̄(s−τ(s), s) ds`.
pub fn compute_l(model: &Model) -> f64 {
    let k = model.kbar_m(0.0, model.period());
    let season = model.season();
    let integral = integrate(
        |s| model.d_r0(s) / model.kbar_m(model.birth_time(s), s),
        season.t_alpha,
        season.t_beta,
        QBAR_RTOL,
    );
    k / (1.0 - k) * integral
}

/// `Q̄'(0) = k + ∫ k̄(s,T)·dR0(s)·k̄(0, s−τ(s)) ds`, computed directly from
/// the linearised integrand.
pub fn slope_at_zero(model: &Model) -> f64 {
    let t = model.period();
    let season = model.season();
    model.kbar_m(0.0, t)
        + integrate(
            |s| model.kbar_m(s, t) * model.d_r0(s) * model.kbar_m(0.0, model.birth_time(s)),
            season.t_alpha,
            season.t_beta,
            QBAR_RTOL,
        )
}

/// Threshold analysis of `Q̄`.
#[derive(Clone, Debug, Serialize)]
pub struct KineticResult {
    /// Threshold number `L`.
    #[serde(rename = "L")]
    pub threshold: f64,
    /// Annual adult survival `k̄(0,T)`.
    pub annual_survival: f64,
    /// `Q̄'(0) = k + (1−k)·L`.
    pub slope_at_zero: f64,
    /// Minimal positive fixed point, present iff `L > 1`.
    pub ustar: Option<f64>,
    /// `|Q̄[u*] − u*| / u*`.
    pub fixed_point_residual: Option<f64>,
    /// Whether `u*·k̄(0,α) ≤ z*`, under which orbits from `(0, u*]` increase
    /// monotonically to `u*`.
    pub monotone_basin_ok: Option<bool>,
    /// Density scale `z*` (the maximiser of `h`) used to seed the search.
    pub density_scale: f64,
    pub tolerance: f64,
}

/// Minimal positive fixed point of `Q̄` when `L > 1`.
///
/// Scans upward from `1e-8·z*` in steps of ×1.1 until `Q̄[z] − z` turns
/// negative, then bisects.
pub fn fixed_point(model: &Model) -> Result<KineticResult> {
    let l = compute_l(model);
    let k = model.kbar_m(0.0, model.period());
    if (l - 1.0).abs() <= THRESHOLD_BAND {
        return Err(Error::Indeterminate {
            threshold: l,
            band: THRESHOLD_BAND,
        });
    }
    let scale = model.params().birth.mode().unwrap_or(1.0);
    let mut result = KineticResult {
        threshold: l,
        annual_survival: k,
        slope_at_zero: k + (1.0 - k) * l,
        ustar: None,
        fixed_point_residual: None,
        monotone_basin_ok: None,
        density_scale: scale,
        tolerance: FIXED_POINT_RTOL,
    };
    if l < 1.0 {
        return Ok(result);
    }
    let g = |z: f64| qbar(model, z) - z;
    let mut lo = 1e-8 * scale;
    if g(lo) <= 0.0 {
        return Err(Error::Bracket(format!(
            "Q̄[z] − z is not positive at z = {lo:e} although L = {l}"
        )));
    }
    let mut hi = lo * 1.1;
    let mut steps = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 1.1;
        steps += 1;
        if steps > 2000 {
            return Err(Error::Bracket("no sign change of Q̄[z] − z found".into()));
        }
    }
    let ustar = bisect(g, lo, hi, FIXED_POINT_RTOL * lo)?;
    result.ustar = Some(ustar);
    result.fixed_point_residual = Some(g(ustar).abs() / ustar);
    result.monotone_basin_ok = model
        .params()
        .birth
        .mode()
        .map(|zstar| ustar * model.kbar_m(0.0, model.params().alpha) <= zstar);
    Ok(result)
}

/// The orbit `z0, Q̄[z0], …, Q̄ⁿ[z0]` (length `n + 1`).
pub fn iterate_kinetic(model: &Model, z0: f64, n: usize) -> Vec<f64> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(z0);
    let mut z = z0;
    for _ in 0..n {
        z = qbar(model, z);
        orbit.push(z);
    }
    orbit
}

/// The periodic adult density over one year started from `u*`: the solution
/// of `u' = −d_M u + (recruits)` with `u(0) = z`, evaluated at `t ∈ [0, T]`.
pub fn mature_path(model: &Model, z: f64, t: f64) -> f64 {
    let season = model.season();
    let h = &model.params().birth;
    let upper = t.min(season.t_beta);
    let recruits = if upper > season.t_alpha {
        integrate(
            |s| {
                let born = model.birth_time(s);
                model.kbar_m(s, t) * model.recruitment_factor(s) * h.value(z * model.kbar_m(0.0, born))
            },
            season.t_alpha,
            upper,
            QBAR_RTOL,
        )
    } else {
        0.0
    };
    z * model.kbar_m(0.0, t) + recruits
}
