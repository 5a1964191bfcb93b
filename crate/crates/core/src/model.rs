//! Model parameters, standing assumptions, and the derived scalar quantities
//! shared by every other module.
//!
//! Time runs over a year `[0, T]`. Adults breed during `[α, β]`; a juvenile
//! born at time `a` matures at the time `t` solving `t − τ(t) = a`, so the
//! breeding window maps onto the maturation window `[t_α, t_β]`. The
//! quantities computed here are
//!
//! * `ε(t) = exp(−∫_{t−τ(t)}^t d_I)`, juvenile survival to maturity,
//! * `σ(t) = ∫_{t−τ(t)}^t D_I`, the juvenile dispersal parameter (the
//!   juvenile kernel is a Gaussian of variance `2σ`),
//! * `k̄_M(s, t) = exp(−∫_s^t d_M)`, adult survival from `s` to `t`,
//! * the linearised recruitment rate `(1 − τ'(s))·ε(s)·p(s − τ(s))·h'(0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::periodic::{sampled_extrema, PeriodicFn, PeriodicSpec};
use crate::solve::{bisect, golden_section};

/// Samples per period used by the pointwise assumption checks.
pub const CHECK_SAMPLES: usize = 10_000;

/// Serialized form of the birth density dependence `h` and the breeding
/// amplitude `P` (the breeding rate is `p(t) = P·bump(t)` on `[α, β]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BirthSpec {
    /// `h(z) = z·e^{−qz}`.
    Ricker {
        #[serde(rename = "P")]
        amplitude: f64,
        q: f64,
    },
    /// Monotone cubic interpolation of `(z, h)` pairs starting at `(0, 0)`,
    /// continued by `h_n·z_n/z` beyond the last knot.
    Tabulated {
        #[serde(rename = "P")]
        amplitude: f64,
        z: Vec<f64>,
        h: Vec<f64>,
    },
    /// `h(z) = z`. Not unimodal; only accepted by
    /// [`Model::new_relaxed`] for linearised studies.
    Linear {
        #[serde(rename = "P")]
        amplitude: f64,
    },
}

impl BirthSpec {
    pub fn amplitude(&self) -> f64 {
        match self {
            BirthSpec::Ricker { amplitude, .. }
            | BirthSpec::Tabulated { amplitude, .. }
            | BirthSpec::Linear { amplitude } => *amplitude,
        }
    }

    pub fn with_amplitude(&self, p: f64) -> BirthSpec {
        let mut out = self.clone();
        match &mut out {
            BirthSpec::Ricker { amplitude, .. }
            | BirthSpec::Tabulated { amplitude, .. }
            | BirthSpec::Linear { amplitude } => *amplitude = p,
        }
        out
    }
}

/// The density dependence `h` of the birth rate `b(t, u) = p(t)·h(u)`.
#[derive(Clone, Debug)]
pub enum BirthFn {
    Ricker { q: f64 },
    Tabulated { z: Vec<f64>, h: Vec<f64>, slopes: Vec<f64> },
    Linear,
}

impl BirthFn {
    pub fn from_spec(spec: &BirthSpec) -> Result<Self> {
        match spec {
            BirthSpec::Ricker { q, .. } => {
                if !(q.is_finite() && *q > 0.0) {
                    return Err(Error::InvalidParams(format!("Ricker q must be positive, got {q}")));
                }
                Ok(BirthFn::Ricker { q: *q })
            }
            BirthSpec::Tabulated { z, h, .. } => tabulated(z, h),
            BirthSpec::Linear { .. } => Ok(BirthFn::Linear),
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            BirthFn::Ricker { q } => z * (-q * z).exp(),
            BirthFn::Linear => z,
            BirthFn::Tabulated { z: zs, h, slopes } => {
                let n = zs.len();
                if z <= 0.0 {
                    return slopes[0] * z;
                }
                if z >= zs[n - 1] {
                    return h[n - 1] * zs[n - 1] / z;
                }
                let i = zs.partition_point(|&k| k <= z) - 1;
                let dz = zs[i + 1] - zs[i];
                let t = (z - zs[i]) / dz;
                let (t2, t3) = (t * t, t * t * t);
                h[i] * (2.0 * t3 - 3.0 * t2 + 1.0)
                    + slopes[i] * dz * (t3 - 2.0 * t2 + t)
                    + h[i + 1] * (-2.0 * t3 + 3.0 * t2)
                    + slopes[i + 1] * dz * (t3 - t2)
            }
        }
    }

    /// `h'(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            BirthFn::Ricker { .. } | BirthFn::Linear => 1.0,
            BirthFn::Tabulated { slopes, .. } => slopes[0],
        }
    }

    /// The maximiser `z*` of `h`, if `h` has one.
    pub fn mode(&self) -> Option<f64> {
        match self {
            BirthFn::Ricker { q } => Some(1.0 / q),
            BirthFn::Linear => None,
            BirthFn::Tabulated { z, h, .. } => {
                let i = h.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)?;
                Some(z[i])
            }
        }
    }
}

/// Fritsch–Carlson monotone cubic slopes, with the right-end slope matched to
/// the `c/z` tail.
fn tabulated(z: &[f64], h: &[f64]) -> Result<BirthFn> {
    let n = z.len();
    if n < 3 || h.len() != n {
        return Err(Error::InvalidParams(
            "tabulated birth needs at least 3 (z, h) pairs".into(),
        ));
    }
    if z[0] != 0.0 || h[0] != 0.0 {
        return Err(Error::InvalidParams("tabulated birth must start at (0, 0)".into()));
    }
    if z.windows(2).any(|w| w[1] <= w[0]) || h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParams(
            "tabulated birth needs increasing z and nonnegative h".into(),
        ));
    }
    let delta: Vec<f64> = (0..n - 1).map(|i| (h[i + 1] - h[i]) / (z[i + 1] - z[i])).collect();
    let mut m = vec![0.0; n];
    let (h0, h1) = (z[1] - z[0], z[2] - z[1]);
    m[0] = (((2.0 * h0 + h1) * delta[0] - h0 * delta[1]) / (h0 + h1)).max(0.0);
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let (w1, w2) = (
                2.0 * (z[i + 1] - z[i]) + (z[i] - z[i - 1]),
                (z[i + 1] - z[i]) + 2.0 * (z[i] - z[i - 1]),
            );
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[n - 1] = -h[n - 1] / z[n - 1];
    Ok(BirthFn::Tabulated {
        z: z.to_vec(),
        h: h.to_vec(),
        slopes: m,
    })
}

/// Serialized parameter bundle, with the JSON key names of the config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    #[serde(rename = "T")]
    pub period: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "D_M")]
    pub mature_diffusion: PeriodicSpec,
    #[serde(rename = "D_I")]
    pub immature_diffusion: PeriodicSpec,
    #[serde(rename = "d_M")]
    pub mature_death: PeriodicSpec,
    #[serde(rename = "d_I")]
    pub immature_death: PeriodicSpec,
    pub tau: PeriodicSpec,
    pub birth: BirthSpec,
}

impl ParamsSpec {
    /// Constant coefficients with a Ricker birth function.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        period: f64,
        alpha: f64,
        beta: f64,
        mature_diffusion: f64,
        immature_diffusion: f64,
        mature_death: f64,
        immature_death: f64,
        tau: f64,
        amplitude: f64,
        q: f64,
    ) -> Self {
        ParamsSpec {
            period,
            alpha,
            beta,
            mature_diffusion: PeriodicSpec::Const(mature_diffusion),
            immature_diffusion: PeriodicSpec::Const(immature_diffusion),
            mature_death: PeriodicSpec::Const(mature_death),
            immature_death: PeriodicSpec::Const(immature_death),
            tau: PeriodicSpec::Const(tau),
            birth: BirthSpec::Ricker { amplitude, q },
        }
    }
}

/// Full parameter bundle with built coefficient functions.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub period: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mature_diffusion: PeriodicFn,
    pub immature_diffusion: PeriodicFn,
    pub mature_death: PeriodicFn,
    pub immature_death: PeriodicFn,
    pub delay: PeriodicFn,
    /// Breeding rate `p(t)`: a quartic bump on `[α, β]` of amplitude `P`.
    pub breeding: PeriodicFn,
    pub birth: BirthFn,
    pub birth_spec: BirthSpec,
}

impl ModelParams {
    pub fn from_spec(spec: &ParamsSpec) -> Result<Self> {
        let t = spec.period;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParams(format!("T must be positive, got {t}")));
        }
        if !(spec.alpha.is_finite() && spec.beta.is_finite() && spec.alpha < spec.beta) {
            return Err(Error::InvalidParams(format!(
                "breeding window [{}, {}] must be a nonempty interval",
                spec.alpha, spec.beta
            )));
        }
        let amplitude = spec.birth.amplitude();
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "birth amplitude P must be >= 0, got {amplitude}"
            )));
        }
        Ok(ModelParams {
            period: t,
            alpha: spec.alpha,
            beta: spec.beta,
            mature_diffusion: PeriodicFn::build(t, &spec.mature_diffusion)?,
            immature_diffusion: PeriodicFn::build(t, &spec.immature_diffusion)?,
            mature_death: PeriodicFn::build(t, &spec.mature_death)?,
            immature_death: PeriodicFn::build(t, &spec.immature_death)?,
            delay: PeriodicFn::build(t, &spec.tau)?,
            breeding: PeriodicFn::bump(t, amplitude, spec.alpha, spec.beta)?,
            birth: BirthFn::from_spec(&spec.birth)?,
            birth_spec: spec.birth.clone(),
        })
    }

    pub fn to_spec(&self) -> ParamsSpec {
        ParamsSpec {
            period: self.period,
            alpha: self.alpha,
            beta: self.beta,
            mature_diffusion: self.mature_diffusion.spec().clone(),
            immature_diffusion: self.immature_diffusion.spec().clone(),
            mature_death: self.mature_death.spec().clone(),
            immature_death: self.immature_death.spec().clone(),
            tau: self.delay.spec().clone(),
            birth: self.birth_spec.clone(),
        }
    }

    /// Copy with the breeding amplitude `P` replaced.
    pub fn with_birth_amplitude(&self, amplitude: f64) -> Result<Self> {
        let mut spec = self.to_spec();
        spec.birth = spec.birth.with_amplitude(amplitude);
        ModelParams::from_spec(&spec)
    }
}

/// Maturation window `[t_α, t_β]`, the image of the breeding window under
/// `a ↦ t` with `t − τ(t) = a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeasonStructure {
    pub t_alpha: f64,
    pub t_beta: f64,
}

/// Outcome of one assumption check.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    /// Time (or density, for birth-shape checks) of the worst violation, or
    /// of the tightest sample when the check passes.
    pub witness: Option<f64>,
    pub detail: String,
}

/// Pass/fail list of the standing assumptions.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub season: Option<SeasonStructure>,
    pub samples_per_period: usize,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.to_string())
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_COEFFICIENT_SIGNS: &str = "coefficient_signs";
pub const CHECK_MATURATION_ORDER: &str = "maturation_order";
pub const CHECK_SEASON_ORDERING: &str = "season_ordering";
pub const CHECK_BREEDING_SUPPORT: &str = "breeding_support";
pub const CHECK_BIRTH_UNIMODAL: &str = "birth_unimodal";
pub const CHECK_BIRTH_SUBLINEAR: &str = "birth_sublinear";

const BIRTH_CHECKS: [&str; 2] = [CHECK_BIRTH_UNIMODAL, CHECK_BIRTH_SUBLINEAR];

/// Checks every standing assumption. Never fails: a failing report is a
/// valid result.
pub fn validate(params: &ModelParams) -> ValidationReport {
    let mut checks = Vec::new();
    let t = params.period;

    // Signs of the coefficients.
    let mut worst: Option<(f64, String)> = None;
    let sign_cases: [(&str, &PeriodicFn, bool); 6] = [
        ("D_M", &params.mature_diffusion, false),
        ("D_I", &params.immature_diffusion, false),
        ("d_M", &params.mature_death, true),
        ("d_I", &params.immature_death, true),
        ("tau", &params.delay, true),
        ("p", &params.breeding, false),
    ];
    for (name, f, strict) in sign_cases {
        let ((tmin, vmin), _) = f.sampled_extrema(CHECK_SAMPLES);
        let bad = if strict { vmin <= 0.0 } else { vmin < -1e-14 };
        if bad && worst.is_none() {
            worst = Some((tmin, format!("{name} = {vmin:.6e} at t = {tmin:.6}")));
        }
    }
    checks.push(AssumptionCheck {
        name: CHECK_COEFFICIENT_SIGNS,
        description: "D_M, D_I, p >= 0 and d_M, d_I, tau > 0",
        passed: worst.is_none(),
        witness: worst.as_ref().map(|w| w.0),
        detail: worst
            .map(|w| w.1)
            .unwrap_or_else(|| "all coefficient signs hold".into()),
    });

    // τ' < 1: dense scan, then local refinement around the largest sample.
    let ((_, _), (t_hi, _)) = sampled_extrema(t, CHECK_SAMPLES, |s| params.delay.derivative(s));
    let h = t / CHECK_SAMPLES as f64;
    let refined = golden_section(|s| -params.delay.derivative(s), t_hi - h, t_hi + h, 1e-12);
    let (t_max, max_slope) = (refined.x.rem_euclid(t), -refined.value);
    let (t_max, max_slope) = if max_slope >= params.delay.derivative(t_hi) {
        (t_max, max_slope)
    } else {
        (t_hi, params.delay.derivative(t_hi))
    };
    let order_ok = max_slope < 1.0;
    checks.push(AssumptionCheck {
        name: CHECK_MATURATION_ORDER,
        description: "tau'(t) < 1 for all t",
        passed: order_ok,
        witness: Some(t_max),
        detail: format!("max tau' = {max_slope:.9} at t = {t_max:.6}"),
    });

    // Season ordering 0 < α ≤ β < t_α ≤ t_β < T.
    let season = season_structure(params).ok();
    let (ordering_ok, detail, witness) = match season {
        Some(s) => {
            let ok = 0.0 < params.alpha
                && params.alpha <= params.beta
                && params.beta < s.t_alpha
                && s.t_alpha <= s.t_beta
                && s.t_beta < t;
            (
                ok,
                format!(
                    "alpha = {}, beta = {}, t_alpha = {:.12}, t_beta = {:.12}, T = {}",
                    params.alpha, params.beta, s.t_alpha, s.t_beta, t
                ),
                Some(s.t_alpha),
            )
        }
        None => (false, "maturation window could not be computed".into(), None),
    };
    checks.push(AssumptionCheck {
        name: CHECK_SEASON_ORDERING,
        description: "0 < alpha <= beta < t_alpha <= t_beta < T with t - tau(t) = alpha, beta",
        passed: ordering_ok,
        witness,
        detail,
    });

    // p vanishes off [α, β].
    let mut support_violation: Option<(f64, f64)> = None;
    for i in 0..CHECK_SAMPLES {
        let s = t * i as f64 / CHECK_SAMPLES as f64;
        if (s < params.alpha || s > params.beta) && params.breeding.value(s).abs() > 1e-14 {
            support_violation = Some((s, params.breeding.value(s)));
            break;
        }
    }
    checks.push(AssumptionCheck {
        name: CHECK_BREEDING_SUPPORT,
        description: "p(t) = 0 on [0, alpha] and [beta, T]",
        passed: support_violation.is_none(),
        witness: support_violation.map(|v| v.0),
        detail: match support_violation {
            Some((s, v)) => format!("p({s:.6}) = {v:.6e}"),
            None => "p vanishes outside the breeding window".into(),
        },
    });

    checks.extend(birth_checks(&params.birth));

    ValidationReport {
        checks,
        season,
        samples_per_period: CHECK_SAMPLES,
    }
}

fn birth_checks(h: &BirthFn) -> Vec<AssumptionCheck> {
    let mode = h.mode();
    let scale = mode.unwrap_or(1.0);
    let n = 4000;
    let zs: Vec<f64> = (0..=n).map(|i| 20.0 * scale * i as f64 / n as f64).collect();

    let mut unimodal_fail: Option<(f64, String)> = None;
    if h.value(0.0) != 0.0 {
        unimodal_fail = Some((0.0, format!("h(0) = {}", h.value(0.0))));
    }
    if unimodal_fail.is_none() {
        match mode {
            None => unimodal_fail = Some((f64::INFINITY, "h has no interior maximiser".into())),
            Some(zstar) => {
                for w in zs.windows(2) {
                    let (h0, h1) = (h.value(w[0]), h.value(w[1]));
                    let bad = if w[1] <= zstar {
                        h1 <= h0
                    } else {
                        w[0] >= zstar && h1 > h0
                    };
                    if bad {
                        unimodal_fail = Some((w[1], format!("monotonicity broken near z = {:.6}", w[1])));
                        break;
                    }
                }
                let far = 1e6 * zstar;
                if unimodal_fail.is_none() && h.value(far) > 1e-3 * h.value(zstar) {
                    unimodal_fail = Some((far, format!("h does not decay: h({far:.3e}) = {:.3e}", h.value(far))));
                }
            }
        }
    }

    let hmax = zs.iter().map(|&z| h.value(z)).fold(0.0, f64::max);
    let mut sublinear_fail: Option<(f64, String)> = None;
    'outer: for k in 1..20 {
        let lambda = k as f64 / 20.0;
        for &z in &zs {
            if h.value(lambda * z) < lambda * h.value(z) - 1e-12 * hmax {
                sublinear_fail = Some((z, format!("h({lambda}·z) < {lambda}·h(z) at z = {z:.6}")));
                break 'outer;
            }
        }
    }

    vec![
        AssumptionCheck {
            name: CHECK_BIRTH_UNIMODAL,
            description: "h(0) = 0 = h(inf), increasing below z*, decreasing above",
            passed: unimodal_fail.is_none(),
            witness: unimodal_fail.as_ref().map(|f| f.0).or(mode),
            detail: unimodal_fail
                .map(|f| f.1)
                .unwrap_or_else(|| format!("unimodal with z* = {}", mode.unwrap_or(f64::NAN))),
        },
        AssumptionCheck {
            name: CHECK_BIRTH_SUBLINEAR,
            description: "h(lambda z) >= lambda h(z) for lambda in (0,1)",
            passed: sublinear_fail.is_none(),
            witness: sublinear_fail.as_ref().map(|f| f.0),
            detail: sublinear_fail
                .map(|f| f.1)
                .unwrap_or_else(|| "sublinear on sampled grid".into()),
        },
    ]
}

/// Solves `t − τ(t) = a` for `t ≥ a` by bisection.
fn solve_maturation(params: &ModelParams, a: f64, xtol: f64) -> Result<f64> {
    let ((_, tau_min), (_, tau_max)) = params.delay.sampled_extrema(CHECK_SAMPLES);
    if tau_min <= 0.0 {
        return Err(Error::InvalidParams("tau must be positive".into()));
    }
    let hi = a + tau_max * (1.0 + 1e-9) + 1e-12;
    bisect(|t| t - params.delay.value(t) - a, a, hi, xtol)
}

fn season_structure(params: &ModelParams) -> Result<SeasonStructure> {
    Ok(SeasonStructure {
        t_alpha: solve_maturation(params, params.alpha, 0.0)?,
        t_beta: solve_maturation(params, params.beta, 0.0)?,
    })
}

/// Validated model: parameters known to satisfy the standing assumptions,
/// plus the maturation window.
#[derive(Clone, Debug)]
pub struct Model {
    params: ModelParams,
    season: SeasonStructure,
    report: ValidationReport,
}

impl Model {
    /// Validates `params` and refuses them if any assumption fails.
    pub fn new(params: ModelParams) -> Result<Self> {
        let report = validate(&params);
        if !report.all_passed() {
            return Err(Error::AssumptionsViolated(report.failed()));
        }
        Self::assemble(params, report)
    }

    /// Like [`Model::new`] but tolerates failures of the birth-shape checks
    /// (unimodality, sublinearity). Used for linearised birth functions.
    pub fn new_relaxed(params: ModelParams) -> Result<Self> {
        let report = validate(&params);
        let structural: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed && !BIRTH_CHECKS.contains(&c.name))
            .map(|c| c.name.to_string())
            .collect();
        if !structural.is_empty() {
            return Err(Error::AssumptionsViolated(structural));
        }
        Self::assemble(params, report)
    }

    pub fn from_spec(spec: &ParamsSpec) -> Result<Self> {
        Self::new(ModelParams::from_spec(spec)?)
    }

    fn assemble(params: ModelParams, report: ValidationReport) -> Result<Self> {
        let season = report
            .season
            .ok_or_else(|| Error::InvalidParams("maturation window undefined".into()))?;
        Ok(Model { params, season, report })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn season(&self) -> SeasonStructure {
        self.season
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn period(&self) -> f64 {
        self.params.period
    }

    /// Maturation time of a juvenile born at `a ∈ [α, β]`, with residual
    /// `|t − τ(t) − a| ≤ 1e-12`.
    pub fn maturation_time(&self, a: f64) -> Result<f64> {
        let p = &self.params;
        if !(p.alpha..=p.beta).contains(&a) {
            return Err(Error::InvalidParams(format!(
                "birth time {a} outside breeding window [{}, {}]",
                p.alpha, p.beta
            )));
        }
        bisect(
            |t| t - p.delay.value(t) - a,
            self.season.t_alpha,
            self.season.t_beta,
            0.0,
        )
        .or_else(|_| solve_maturation(p, a, 0.0))
    }

    /// Birth time `s − τ(s)` of the cohort maturing at `s`.
    pub fn birth_time(&self, s: f64) -> f64 {
        s - self.params.delay.value(s)
    }

    /// `(ε(t), σ(t))`: juvenile survival and dispersal parameter for the
    /// cohort maturing at `t`.
    pub fn epsilon_sigma(&self, t: f64) -> (f64, f64) {
        let born = self.birth_time(t);
        let eps = (-self.params.immature_death.integral(born, t)).exp();
        let sigma = self.params.immature_diffusion.integral(born, t);
        (eps, sigma)
    }

    /// Adult survival `exp(−∫_s^t d_M)` from `s` to `t`.
    ///
    /// # Panics
    /// If `s > t`.
    pub fn kbar_m(&self, s: f64, t: f64) -> f64 {
        assert!(s <= t, "kbar_m requires s <= t (got s = {s}, t = {t})");
        (-self.params.mature_death.integral(s, t)).exp()
    }

    /// Variance `2∫_s^t D_M` of the adult dispersal kernel from `s` to `t`.
    pub fn mature_variance(&self, s: f64, t: f64) -> f64 {
        2.0 * self.params.mature_diffusion.integral(s, t)
    }

    /// Juvenile kernel variance `2∫_s^t D_I`.
    pub fn immature_variance(&self, s: f64, t: f64) -> f64 {
        2.0 * self.params.immature_diffusion.integral(s, t)
    }

    /// Juvenile survival `exp(−∫_s^t d_I)`.
    pub fn immature_survival(&self, s: f64, t: f64) -> f64 {
        (-self.params.immature_death.integral(s, t)).exp()
    }

    /// `(1 − τ'(s))·ε(s)·p(s − τ(s))` for `s` in the maturation window,
    /// zero outside. Multiplying by `h(·)` gives the recruitment rate of a
    /// spatially constant population.
    pub fn recruitment_factor(&self, s: f64) -> f64 {
        if s < self.season.t_alpha || s > self.season.t_beta {
            return 0.0;
        }
        let p = &self.params;
        let (eps, _) = self.epsilon_sigma(s);
        (1.0 - p.delay.derivative(s)) * eps * p.breeding.value(self.birth_time(s))
    }

    /// Linearised recruitment rate `(1 − τ'(s))·ε(s)·p(s − τ(s))·h'(0)`.
    pub fn d_r0(&self, s: f64) -> f64 {
        self.recruitment_factor(s) * self.params.birth.slope_at_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    pub(crate) fn canonical() -> ParamsSpec {
        ParamsSpec::constant(1.0, 0.2, 0.3, 1.0, 0.2, 0.5, 0.3, 0.4, 22.5, 1.0)
    }

    #[test]
    fn canonical_config_passes_with_shifted_window() {
        let params = ModelParams::from_spec(&canonical()).unwrap();
        let report = validate(&params);
        assert!(report.all_passed(), "{:?}", report.failed());
        let s = report.season.unwrap();
        assert!((s.t_alpha - 0.6).abs() < 1e-14);
        assert!((s.t_beta - 0.7).abs() < 1e-14);
    }

    #[test]
    fn fast_oscillating_delay_breaks_maturation_order() {
        let mut spec = canonical();
        spec.tau = PeriodicSpec::Harmonic {
            mean: 0.4,
            amplitude: 0.2,
            phase: 0.25,
        };
        let report = validate(&ModelParams::from_spec(&spec).unwrap());
        let c = report.check(CHECK_MATURATION_ORDER).unwrap();
        assert!(!c.passed);
        // max τ' = 0.4π at t = 0 (mod 1); oracle: the derivative peak.
        let w = c.witness.unwrap();
        assert!(w.min(1.0 - w) < 1e-6, "witness {w}");
        assert!(c.detail.contains(&format!("{:.6}", 0.4 * std::f64::consts::PI)));
        assert!(Model::new(ModelParams::from_spec(&spec).unwrap()).is_err());
    }

    #[test]
    fn long_breeding_window_still_disjoint() {
        let mut spec = canonical();
        spec.beta = 0.5;
        let report = validate(&ModelParams::from_spec(&spec).unwrap());
        assert!(report.check(CHECK_SEASON_ORDERING).unwrap().passed);
        let s = report.season.unwrap();
        assert!((s.t_beta - 0.9).abs() < 1e-14);
    }

    #[test]
    fn overlapping_seasons_fail() {
        let mut spec = canonical();
        spec.tau = PeriodicSpec::Const(0.05);
        let report = validate(&ModelParams::from_spec(&spec).unwrap());
        assert!(!report.check(CHECK_SEASON_ORDERING).unwrap().passed);
    }

    #[test]
    fn maturation_time_examples() {
        let model = Model::from_spec(&canonical()).unwrap();
        assert!((model.maturation_time(0.25).unwrap() - 0.65).abs() < 1e-14);
        assert!(model.maturation_time(0.35).is_err());

        let mut spec = canonical();
        spec.tau = PeriodicSpec::Linear([0.5, -0.1, 0.4, 0.9]);
        let model = Model::from_spec(&spec).unwrap();
        let t = model.maturation_time(0.2).unwrap();
        assert!((t - 0.7 / 1.1).abs() < 1e-13);
        assert!((t - model.params().delay.value(t) - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn maturation_time_spline_endpoint() {
        let mut spec = canonical();
        spec.tau = PeriodicSpec::Spline {
            knots: vec![0.0, 0.25, 0.5, 0.75],
            values: vec![0.4, 0.38, 0.41, 0.45],
        };
        let model = Model::from_spec(&spec).unwrap();
        // Independent oracle: plain bisection at a much tighter tolerance.
        let tau = &model.params().delay;
        let (mut lo, mut hi) = (0.3, 0.95);
        while hi - lo > 1e-14 {
            let m = 0.5 * (lo + hi);
            if m - tau.value(m) < 0.3 {
                lo = m
            } else {
                hi = m
            }
        }
        let t = model.maturation_time(0.3).unwrap();
        assert!((t - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((t - model.season().t_beta).abs() < 1e-12);
    }

    #[test]
    fn epsilon_sigma_constant_and_varying() {
        let model = Model::from_spec(&canonical()).unwrap();
        let (e, s) = model.epsilon_sigma(0.65);
        assert!((e - (-0.12f64).exp()).abs() < 1e-15);
        assert!((s - 0.08).abs() < 1e-15);

        let mut spec = canonical();
        spec.immature_diffusion = PeriodicSpec::Const(0.0);
        spec.immature_death = PeriodicSpec::Harmonic {
            mean: 0.3,
            amplitude: 0.25,
            phase: 0.0,
        };
        let model = Model::from_spec(&spec).unwrap();
        let (e, s) = model.epsilon_sigma(0.65);
        assert_eq!(s, 0.0);
        let oracle = integrate(
            |x| 0.3 + 0.25 * (2.0 * std::f64::consts::PI * x).cos(),
            0.25,
            0.65,
            1e-14,
        );
        assert!((e - (-oracle).exp()).abs() < 1e-13);
    }

    #[test]
    fn kbar_composition_and_identity() {
        let mut spec = canonical();
        spec.mature_death = PeriodicSpec::Harmonic {
            mean: 0.5,
            amplitude: 0.2,
            phase: 0.1,
        };
        let model = Model::from_spec(&spec).unwrap();
        assert_eq!(model.kbar_m(0.4, 0.4), 1.0);
        let whole = model.kbar_m(0.3, 0.9);
        let parts = model.kbar_m(0.3, 0.6) * model.kbar_m(0.6, 0.9);
        assert!((whole - parts).abs() < 1e-12);
        let oracle = integrate(|x| model.params().mature_death.value(x), 0.3, 0.9, 1e-14);
        assert!((whole - (-oracle).exp()).abs() < 1e-13);
        let constant = Model::from_spec(&canonical()).unwrap();
        assert!((constant.kbar_m(0.0, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    #[should_panic]
    fn kbar_rejects_reversed_interval() {
        let model = Model::from_spec(&canonical()).unwrap();
        model.kbar_m(0.9, 0.3);
    }

    #[test]
    fn linear_recruitment_rate() {
        let model = Model::from_spec(&canonical()).unwrap();
        assert_eq!(model.d_r0(0.5), 0.0);
        assert_eq!(model.d_r0(0.8), 0.0);
        // p(0.25) is the bump peak P.
        let expected = (-0.12f64).exp() * 22.5;
        assert!((model.d_r0(0.65) - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_birth_only_relaxed() {
        let mut spec = canonical();
        spec.birth = BirthSpec::Linear { amplitude: 1.0 };
        let params = ModelParams::from_spec(&spec).unwrap();
        assert!(!validate(&params).check(CHECK_BIRTH_UNIMODAL).unwrap().passed);
        assert!(Model::new(params.clone()).is_err());
        assert!(Model::new_relaxed(params).is_ok());
    }

    #[test]
    fn tabulated_birth_shape() {
        let z = vec![0.0, 0.5, 1.0, 2.0, 4.0];
        let h = vec![0.0, 0.4, 0.5, 0.35, 0.15];
        let b = BirthFn::from_spec(&BirthSpec::Tabulated {
            amplitude: 1.0,
            z: z.clone(),
            h: h.clone(),
        })
        .unwrap();
        for (zi, hi) in z.iter().zip(&h) {
            assert!((b.value(*zi) - hi).abs() < 1e-14);
        }
        assert_eq!(b.mode(), Some(1.0));
        // Three-point end slope: (1.5·0.8 − 0.5·0.2) / 1.
        assert!((b.slope_at_zero() - 1.1).abs() < 1e-14);
        let checks = birth_checks(&b);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn json_roundtrip_of_spec() {
        let text = r#"{"T": 1.0, "alpha": 0.2, "beta": 0.3,
            "D_M": {"const": 1.0}, "D_I": {"const": 0.2},
            "d_M": {"const": 0.5}, "d_I": {"const": 0.3},
            "tau": {"linear": [0.5, -0.1, 0.4, 0.9]},
            "birth": {"ricker": {"P": 22.5, "q": 1.0}}}"#;
        let spec: ParamsSpec = serde_json::from_str(text).unwrap();
        let params = ModelParams::from_spec(&spec).unwrap();
        assert_eq!(params.to_spec(), spec);
    }
}
