//! Numerical integration in time.
//!
//! Two rules are used throughout: an adaptive Gauss–Kronrod (7/15) integrator
//! for scalar time integrals with a relative tolerance, and fixed
//! Gauss–Legendre rules for the spatial operators, where the same nodes must
//! be reused every year so the yearly map is deterministic.

use std::f64::consts::PI;

/// Default relative tolerance for time integrals.
pub const TIME_RTOL: f64 = 1e-10;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: u32 = 40;

/// One Gauss–Kronrod 7/15 panel. The returned error is `|kronrod − gauss|`,
/// raised to the rounding level `50·ε·∫|f|` so panels are never refined
/// below what floating point can resolve.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let (fl, fr) = (f(c - x), f(c + x));
        kronrod += WGK[j] * (fl + fr);
        abs += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (fl + fr);
        }
    }
    let err = ((kronrod - gauss) * h).abs();
    let rounding = 50.0 * f64::EPSILON * abs * h.abs();
    (kronrod * h, if err <= rounding { 0.0 } else { err })
}

/// Maximum number of panel bisections per integral. Integrands whose
/// rounding noise exceeds the requested tolerance stop here instead of
/// refining indefinitely.
const MAX_SPLITS: usize = 20_000;

/// `∫_a^b f` by adaptive Gauss–Kronrod bisection with relative tolerance
/// `rtol` (an absolute floor of `rtol·1e-3` times the first panel's
/// magnitude keeps vanishing integrals from recursing forever).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, err) = gk15(&f, a, b);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    if err <= rtol * scale {
        return whole;
    }
    let floor = rtol * 1e-3 * scale;
    let mut budget = MAX_SPLITS;
    refine(&f, a, b, whole, err, rtol, floor, 0, &mut budget)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    estimate: f64,
    err: f64,
    rtol: f64,
    floor: f64,
    depth: u32,
    budget: &mut usize,
) -> f64 {
    if err <= (rtol * estimate.abs()).max(floor) || depth >= MAX_DEPTH || *budget == 0 {
        return estimate;
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let (left, el) = gk15(f, a, m);
    let (right, er) = gk15(f, m, b);
    let sum = left + right;
    if el + er <= (rtol * sum.abs()).max(floor) {
        return sum;
    }
    refine(f, a, m, left, el, rtol, floor * 0.5, depth + 1, budget)
        + refine(f, m, b, right, er, rtol, floor * 0.5, depth + 1, budget)
}

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on the Legendre polynomial from the
    /// Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`, in increasing node order.
    pub fn on(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (c + h * x, h * w))
            .collect()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        self.on(a, b).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}
