//! Spreading speed `c* = inf_{μ>0} Φ(μ)` with `Φ(μ) = ln(mgf(μ))/μ`, where
//! `mgf(μ) = ∫ e^{μy} K(y) dy` is the moment generating function of the
//! yearly linearised kernel
//!
//! ```text
//! mgf(μ) = exp(A(0,T)) + ∫_{t_α}^{t_β} dR0(s)·exp(A(s,T) + A(0,s−τ(s)) + μ²σ(s)) ds,
//! A(a,b) = ∫_a^b (μ²D_M − d_M).
//! ```
//!
//! Also hosts the comparison experiments: averaged delay, extra adult
//! mortality allocations, and the large-diffusion scaling limit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetics::compute_l;
use crate::model::{Model, ModelParams};
use crate::periodic::PeriodicFn;
use crate::quadrature::{integrate, TIME_RTOL};
use crate::solve::{bracket_geometric, golden_section};

/// First `μ` of the geometric scan.
pub const MU_SEED: f64 = 1e-3;
/// Maximum number of doublings in the scan.
pub const MAX_DOUBLINGS: usize = 60;
/// Relative tolerance of the golden-section search in `μ`.
pub const MU_RTOL: f64 = 1e-8;

/// `ln mgf` for separate adult and juvenile moment weights: the adult
/// exponent uses `wa·D_M` and the juvenile one `wj·σ`. With `wa = wj = μ²`
/// this is `ln mgf(μ)`.
fn ln_mgf_weighted(model: &Model, wa: f64, wj: f64) -> f64 {
    let p = model.params();
    let t = model.period();
    let season = model.season();
    let a = |from: f64, to: f64| wa * p.mature_diffusion.integral(from, to) - p.mature_death.integral(from, to);
    let exponent = |s: f64| {
        let born = model.birth_time(s);
        let (_, sigma) = model.epsilon_sigma(s);
        a(s, t) + a(0.0, born) + wj * sigma
    };
    let first = a(0.0, t);
    // Shift by the largest sampled exponent so large μ neither overflows nor
    // underflows.
    let mut shift = first;
    for i in 0..=32 {
        let s = season.t_alpha + (season.t_beta - season.t_alpha) * i as f64 / 32.0;
        shift = shift.max(exponent(s));
    }
    let rest = integrate(
        |s| {
            let rate = model.d_r0(s);
            if rate == 0.0 {
                0.0
            } else {
                rate * (exponent(s) - shift).exp()
            }
        },
        season.t_alpha,
        season.t_beta,
        TIME_RTOL,
    );
    shift + ((first - shift).exp() + rest).ln()
}

/// `ln mgf(μ)`.
pub fn ln_mgf(model: &Model, mu: f64) -> f64 {
    assert!(mu >= 0.0, "mgf requires mu >= 0 (got {mu})");
    ln_mgf_weighted(model, mu * mu, mu * mu)
}

/// `mgf(μ) = ∫ e^{μy} K(y) dy`.
pub fn mgf_k(model: &Model, mu: f64) -> f64 {
    ln_mgf(model, mu).exp()
}

fn require_persistence(model: &Model) -> Result<f64> {
    let l = compute_l(model);
    if l <= 1.0 {
        return Err(Error::NoPersistence { threshold: l });
    }
    Ok(l)
}

/// `Φ(μ) = ln(mgf(μ))/μ`. Refused when `L ≤ 1`.
pub fn phi(model: &Model, mu: f64) -> Result<f64> {
    require_persistence(model)?;
    assert!(mu > 0.0, "phi requires mu > 0 (got {mu})");
    Ok(ln_mgf(model, mu) / mu)
}

/// Minimal speed and its minimiser.
#[derive(Clone, Debug, Serialize)]
pub struct SpeedResult {
    pub cstar: f64,
    pub mustar: f64,
    /// `(μ, Φ(μ))` samples of the geometric scan, increasing in `μ`.
    pub profile: Vec<(f64, f64)>,
    /// Interval known to contain the minimiser.
    pub bracket: (f64, f64),
    pub mu_rtol: f64,
    pub evaluations: usize,
}

/// Minimises `ln_m(μ)/μ` over `μ > 0`: geometric scan from [`MU_SEED`],
/// then golden section.
pub fn minimize_speed(ln_m: impl Fn(f64) -> f64) -> Result<SpeedResult> {
    let phi = |mu: f64| ln_m(mu) / mu;
    let scan = bracket_geometric(phi, MU_SEED, MAX_DOUBLINGS)?;
    let min = golden_section(phi, scan.lower, scan.upper, MU_RTOL);
    let cstar = min.value;
    if !(cstar.is_finite() && cstar > 0.0) {
        return Err(Error::Bracket(format!("minimum of the dispersion relation is {cstar}")));
    }
    Ok(SpeedResult {
        cstar,
        mustar: min.x,
        evaluations: scan.samples.len() + min.evaluations,
        profile: scan.samples,
        bracket: min.bracket,
        mu_rtol: MU_RTOL,
    })
}

/// `c*` for the model.
pub fn cstar(model: &Model) -> Result<SpeedResult> {
    require_persistence(model)?;
    minimize_speed(|mu| ln_mgf(model, mu))
}

/// `(μ, Φ(μ))` on a geometric grid, for profile dumps.
pub fn phi_profile(model: &Model, mu_min: f64, mu_max: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    require_persistence(model)?;
    let ratio = (mu_max / mu_min).ln();
    Ok((0..n)
        .map(|i| {
            let mu = mu_min * (ratio * i as f64 / (n.max(2) - 1) as f64).exp();
            (mu, ln_mgf(model, mu) / mu)
        })
        .collect())
}

fn constant_coefficients(model: &Model) -> Result<(f64, f64, f64, f64)> {
    let p = model.params();
    match (
        p.mature_diffusion.as_constant(),
        p.immature_diffusion.as_constant(),
        p.mature_death.as_constant(),
        p.immature_death.as_constant(),
    ) {
        (Some(dm), Some(di), Some(mm), Some(mi)) => Ok((dm, di, mm, mi)),
        _ => Err(Error::InvalidParams(
            "the delay-averaging comparison needs constant D_M, D_I, d_M, d_I".into(),
        )),
    }
}

/// `l(μ) = (d_M − d_I) + μ²(D_I − D_M)`, the exponent rate of the delay in
/// the recruitment term for constant coefficients.
pub fn delay_exponent(model: &Model, mu: f64) -> Result<f64> {
    let (dm, di, mm, mi) = constant_coefficients(model)?;
    Ok((mm - mi) + mu * mu * (di - dm))
}

/// Mean of `τ` over the maturation window.
pub fn tau_average(model: &Model) -> f64 {
    let s = model.season();
    model.params().delay.integral(s.t_alpha, s.t_beta) / (s.t_beta - s.t_alpha)
}

/// `ln mgf` with `(1 − τ'(s))·e^{l(μ)τ(s)}` replaced by `e^{l(μ)τ_av}` in the
/// recruitment integral; the window and the breeding weight `p(s − τ(s))`
/// are kept.
fn ln_mgf_tau_average(model: &Model, mu: f64, tau_av: f64) -> Result<f64> {
    let (dm, _, mm, _) = constant_coefficients(model)?;
    let p = model.params();
    let season = model.season();
    let t = model.period();
    let l = delay_exponent(model, mu)?;
    let a = mu * mu * dm - mm;
    let weight = integrate(
        |s| p.breeding.value(model.birth_time(s)),
        season.t_alpha,
        season.t_beta,
        TIME_RTOL,
    );
    Ok(a * t + (1.0 + p.birth.slope_at_zero() * (l * tau_av).exp() * weight).ln())
}

/// `c*` with the delay replaced by its window average inside the recruitment
/// integral. Needs constant diffusion and death rates.
pub fn cstar_tau_average(model: &Model) -> Result<SpeedResult> {
    constant_coefficients(model)?;
    require_persistence(model)?;
    let tau_av = tau_average(model);
    ln_mgf_tau_average(model, MU_SEED, tau_av)?;
    minimize_speed(|mu| ln_mgf_tau_average(model, mu, tau_av).unwrap_or(f64::NAN))
}

/// Speeds with the true and the averaged delay.
#[derive(Clone, Debug, Serialize)]
pub struct TauComparison {
    pub tau_average: f64,
    pub tau_at_t_alpha: f64,
    pub tau_at_t_beta: f64,
    pub cstar_tau: f64,
    pub cstar_tau_average: f64,
    /// `(c*(τ) − c*(τ_av)) / c*(τ_av)`.
    pub relative_difference: f64,
    pub mu_rtol: f64,
}

pub fn compare_tau_average(model: &Model) -> Result<TauComparison> {
    let with_tau = cstar(model)?;
    let with_avg = cstar_tau_average(model)?;
    let s = model.season();
    Ok(TauComparison {
        tau_average: tau_average(model),
        tau_at_t_alpha: model.params().delay.value(s.t_alpha),
        tau_at_t_beta: model.params().delay.value(s.t_beta),
        cstar_tau: with_tau.cstar,
        cstar_tau_average: with_avg.cstar,
        relative_difference: (with_tau.cstar - with_avg.cstar) / with_avg.cstar,
        mu_rtol: MU_RTOL,
    })
}

/// Extra adult mortality `η ≥ 0` with prescribed yearly mean `C`.
#[derive(Clone, Debug)]
pub struct EtaAllocation {
    pub eta: PeriodicFn,
    pub mean: f64,
}

impl EtaAllocation {
    /// Checks `η ≥ 0` on a dense scan and `(1/T)∫η = C` to `1e-10`.
    pub fn new(eta: PeriodicFn, mean: f64) -> Result<Self> {
        let ((_, lo), _) = eta.sampled_extrema(10_000);
        if lo < -1e-14 {
            return Err(Error::InvalidParams(format!(
                "extra mortality must be >= 0, found {lo}"
            )));
        }
        if (eta.mean() - mean).abs() > 1e-10 * mean.abs().max(1.0) {
            return Err(Error::InvalidParams(format!(
                "extra mortality has mean {} but {} was requested",
                eta.mean(),
                mean
            )));
        }
        Ok(EtaAllocation { eta, mean })
    }

    /// `η ≡ C`.
    pub fn uniform(period: f64, mean: f64) -> Result<Self> {
        Self::new(PeriodicFn::constant(period, mean)?, mean)
    }

    /// A quartic bump on `[start, end]` (may wrap past `T`) scaled to mean `C`.
    pub fn concentrated(period: f64, mean: f64, start: f64, end: f64) -> Result<Self> {
        let amplitude = mean * period * 30.0 / (16.0 * (end - start));
        Self::new(PeriodicFn::bump(period, amplitude, start, end)?, mean)
    }

    /// Bump supported on `[α, t_β]`, the breeding-to-maturation stretch.
    pub fn on_window(model: &Model, mean: f64) -> Result<Self> {
        Self::concentrated(model.period(), mean, model.params().alpha, model.season().t_beta)
    }

    /// Bump supported on `[t_β, T + α]`, outside the breeding-to-maturation
    /// stretch.
    pub fn off_window(model: &Model, mean: f64) -> Result<Self> {
        let t = model.period();
        Self::concentrated(t, mean, model.season().t_beta, t + model.params().alpha)
    }
}

fn with_params(model: &Model, edit: impl FnOnce(&mut ModelParams) -> Result<()>) -> Result<Model> {
    let mut params = model.params().clone();
    edit(&mut params)?;
    Model::new(params)
}

/// `c*` with adult mortality `d_M + η`.
pub fn cstar_with_eta(model: &Model, alloc: &EtaAllocation) -> Result<SpeedResult> {
    let perturbed = with_params(model, |p| {
        p.mature_death = p.mature_death.plus(&alloc.eta)?;
        Ok(())
    })?;
    cstar(&perturbed)
}

/// `c*` with adult diffusion `D_M + ξ`.
pub fn cstar_with_diffusion(model: &Model, extra: &PeriodicFn) -> Result<SpeedResult> {
    let perturbed = with_params(model, |p| {
        p.mature_diffusion = p.mature_diffusion.plus(extra)?;
        Ok(())
    })?;
    cstar(&perturbed)
}

/// Copy of the model with `D_M` multiplied by `k`.
pub fn scale_mature_diffusion(model: &Model, k: f64) -> Result<Model> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidParams(format!(
            "diffusion scale must be positive, got {k}"
        )));
    }
    with_params(model, |p| {
        p.mature_diffusion = p.mature_diffusion.scaled(k);
        Ok(())
    })
}

/// `c*(k)/√k` with `D_M` replaced by `k·D_M`.
pub fn cstar_scaling(model: &Model, k: f64) -> Result<f64> {
    Ok(cstar(&scale_mature_diffusion(model, k)?)?.cstar / k.sqrt())
}

/// `H(ν, k) = (1/ν)·ln mgf` with adult weight `ν²` and juvenile weight
/// `ν²/k`, so that `c*(k)/√k = inf_ν H(ν, k)`. `k = ∞` drops the juvenile
/// dispersal.
pub fn h_scaled(model: &Model, nu: f64, k: f64) -> f64 {
    let wj = if k.is_infinite() { 0.0 } else { nu * nu / k };
    ln_mgf_weighted(model, nu * nu, wj) / nu
}

/// `H(ν, ∞)`.
pub fn h_limit(model: &Model, nu: f64) -> f64 {
    h_scaled(model, nu, f64::INFINITY)
}

/// `inf_ν H(ν, ∞)`, the large-diffusion limit of `c*(k)/√k`.
pub fn h_limit_infimum(model: &Model) -> Result<SpeedResult> {
    require_persistence(model)?;
    minimize_speed(|nu| ln_mgf_weighted(model, nu * nu, 0.0))
}
