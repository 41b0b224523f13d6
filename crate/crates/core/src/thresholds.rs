//! Closed-form criteria: existence of forced-period solutions, amplitude
//! bounds, the period floor and sufficient conditions for pull-in.
//!
//! Every quantity is computable for every parameter set. When a hypothesis
//! behind a bound does not hold, the report carries a flag instead of failing.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{voltage_extrema, ModelParams, Stiffness};

/// Nodes of the uniform sign-change sweeps.
pub const SCAN_NODES: usize = 10_000;
/// Width to which roots found by the sweeps are bisected.
pub const ROOT_TOL: f64 = 1e-12;
/// Slack admitted by [`period_floor_check`].
pub const PERIOD_FLOOR_TOL: f64 = 1e-9;
/// Far end of the scanned window on the negative axis.
pub const NEG_WINDOW: f64 = -1e6;

/// `A_alpha`: the largest `V_M^2` for which the graphene law is guaranteed a
/// solution with the forcing period. Equals `max (x - alpha x^2)(1 - x)^2`
/// over `[0, 1)`. Returns NaN for negative `alpha`.
pub fn a_alpha(alpha: f64) -> f64 {
    if !(alpha >= 0.0) {
        return f64::NAN;
    }
    let mu = (4.0 * alpha * alpha - 4.0 * alpha + 9.0).sqrt();
    if alpha < 0.5 {
        // Two factors of the closed form vanish as alpha -> 0; rationalized here.
        4.0 * (1.0 - alpha).powi(2) * (5.0 - 2.0 * alpha + mu)
            / ((2.0 * alpha + 3.0 + mu) * (mu + 3.0 - 6.0 * alpha).powi(2))
    } else {
        (2.0 * alpha + 3.0 - mu) * (5.0 - 2.0 * alpha + mu) * (6.0 * alpha - 3.0 + mu).powi(2)
            / (4096.0 * alpha.powi(3))
    }
}

/// Static pull-in bound on `lambda^2` for constant voltage, no damping and
/// zero initial data. Finite at `alpha = 0` where it equals `1/8`.
pub fn static_threshold(alpha: f64) -> f64 {
    if !(alpha >= 0.0) {
        return f64::NAN;
    }
    let mu = (4.0 * alpha * alpha - 6.0 * alpha + 9.0).sqrt();
    if alpha < 0.5 {
        let d = (2.0 * alpha + 3.0) * mu + 4.0 * alpha * alpha - 24.0 * alpha + 9.0;
        1.5 * (2.0 * alpha - 3.0).powi(2) / ((2.0 * alpha + 3.0 + mu) * d)
    } else {
        (2.0 * alpha + 3.0 - mu) * (-4.0 * alpha * alpha + 24.0 * alpha - 9.0 + 2.0 * alpha * mu + 3.0 * mu)
            / (648.0 * alpha * alpha)
    }
}

/// Verdict of the forced-period existence test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Existence {
    /// `h(x)(1-x)^2 = V_M^2` has the root `witness` in `[0, 1)`.
    Guaranteed { witness: f64 },
    /// `h(x)(1-x)^2 = V_m^2` has no root left of 1, while `h(witness) = 0`.
    RuledOut { witness: f64 },
    Undetermined,
}

/// Sign of `h(x)(1-x)^2 - level` as `x -> -inf`, when known analytically.
fn tail_sign(p: &ModelParams, level: f64) -> Option<f64> {
    match &p.stiffness {
        Stiffness::Graphene if p.alpha > 0.0 => Some(1.0),
        Stiffness::Graphene | Stiffness::Linear => Some(-1.0),
        Stiffness::Custom(t) => {
            let h = t.left_value();
            if h > 0.0 {
                Some(1.0)
            } else if h < 0.0 {
                Some(-1.0)
            } else if level > 0.0 {
                Some(-1.0)
            } else {
                None
            }
        }
    }
}

fn bisect_root(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while (b - a).abs() > ROOT_TOL * a.abs().max(b.abs()).max(1.0) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// First root of `f` on the ordered nodes, by sign change and bisection.
fn scan_root(f: &impl Fn(f64) -> f64, nodes: &[f64]) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for &x in nodes {
        let fx = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if let Some((xp, fp)) = prev {
            if (fp > 0.0) != (fx > 0.0) {
                return Some(bisect_root(f, xp, x));
            }
        }
        prev = Some((x, fx));
    }
    None
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-14 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn uniform(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| a + (b - a) * i as f64 / count as f64).collect()
}

/// Nodes covering `[NEG_WINDOW, 1)`: geometric on `[NEG_WINDOW, -10]`, uniform on `[-10, 1)`.
fn negative_nodes() -> Vec<f64> {
    let decades = (-NEG_WINDOW / 10.0).log10();
    let mut nodes: Vec<f64> = (0..SCAN_NODES)
        .map(|i| -10.0 * 10f64.powf(decades * (1.0 - i as f64 / SCAN_NODES as f64)))
        .collect();
    nodes.extend(uniform(-10.0, 1.0, SCAN_NODES).into_iter().filter(|&x| x < 1.0));
    nodes
}

/// Forced-period existence test for the stiffness in `p`.
///
/// `Guaranteed` scans `[0, 1)` for a root of `h(x)(1-x)^2 - V_M^2`, with a
/// golden-section refinement of the largest node so that tangential contact
/// is not missed. `RuledOut` requires the `V_m` equation to have no root on
/// the scanned window nor in the tail, and `h` to vanish somewhere left of 1.
pub fn existence_check(p: &ModelParams) -> Existence {
    let (v_min, v_max) = voltage_extrema(p);
    let upper = |x: f64| p.h(x) * (1.0 - x).powi(2) - v_max * v_max;
    let nodes = uniform(0.0, 1.0, SCAN_NODES);
    let inside: Vec<f64> = nodes[..SCAN_NODES].to_vec();
    if let Some(r) = scan_root(&upper, &inside) {
        return Existence::Guaranteed { witness: r };
    }
    let (k, _) = inside
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, upper(x)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let a = inside[k.saturating_sub(1)];
    let b = nodes[(k + 1).min(SCAN_NODES)];
    let (xm, fm) = golden_max(&upper, a, b);
    if fm >= 0.0 {
        return Existence::Guaranteed { witness: xm };
    }

    let lower = |x: f64| p.h(x) * (1.0 - x).powi(2) - v_min * v_min;
    let neg = negative_nodes();
    let lower_root = scan_root(&lower, &neg).is_some()
        || match tail_sign(p, v_min * v_min) {
            Some(s) => (lower(neg[0]) > 0.0) != (s > 0.0),
            None => true,
        };
    if lower_root {
        return Existence::Undetermined;
    }
    let h = |x: f64| p.h(x);
    let h_root = scan_root(&h, &neg);
    match h_root {
        Some(w) => Existence::RuledOut { witness: w },
        None => Existence::Undetermined,
    }
}

/// Upper amplitude bound for periodic solutions: either `max x <= -1/alpha`,
/// or `0 <= max x <= bound`. `bound` is `None` when the second branch is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeUpper {
    pub negative_branch: f64,
    pub bound: Option<f64>,
}

pub fn amplitude_upper(p: &ModelParams) -> Result<AmplitudeUpper> {
    let alpha = p.alpha;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("amplitude bounds need alpha > 0".into()));
    }
    let (v_min, _) = voltage_extrema(p);
    let cut = 2.0 * v_min * alpha.sqrt();
    Ok(AmplitudeUpper {
        negative_branch: -1.0 / alpha,
        bound: (cut <= 1.0).then(|| (1.0 / alpha).min(1.0 - cut)),
    })
}

/// Candidate lower bounds on `min x` for a periodic solution of period `period`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeLower {
    /// Conservative floor on `x(t0)`, used in all bounds below.
    pub floor: f64,
    /// The alternative floor `-1/alpha`, reported for reference.
    pub floor_alt: f64,
    /// Bound built on `alpha V_M / (1 + alpha)`.
    pub first: f64,
    /// Term built on `alpha V_M / (alpha - 1)`; `None` at `alpha = 1`.
    pub second_alpha_term: Option<f64>,
    /// Term built on `V_M / V_m`; `None` when `V_m = 0`.
    pub second_ratio_term: Option<f64>,
    /// Largest available second-form term.
    pub second: Option<f64>,
}

pub fn amplitude_lower(p: &ModelParams, period: f64) -> Result<AmplitudeLower> {
    let (alpha, c) = (p.alpha, p.c);
    if !(alpha > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidParameter("lower amplitude bounds need alpha > 0 and c > 0".into()));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
    }
    let (v_min, v_max) = voltage_extrema(p);
    let floor = (-1.0 - (1.0 + 4.0 * alpha * v_max * v_max).sqrt()) / (2.0 * alpha);
    let root_t = period.sqrt();
    // a vanishing V_M kills every correction, whatever the denominators
    let term = |ratio: f64, scale: f64| if v_max == 0.0 { floor } else { -scale * ratio * ratio + floor };
    let first = term(alpha * v_max / (1.0 + alpha), root_t / (2.0 * c));
    let second_alpha_term = (alpha != 1.0 || v_max == 0.0)
        .then(|| term(if v_max == 0.0 { 0.0 } else { alpha * v_max / (alpha - 1.0) }, root_t / (2.0 * c)));
    let second_ratio_term = (v_min > 0.0 || v_max == 0.0)
        .then(|| term(if v_max == 0.0 { 0.0 } else { v_max / v_min }, root_t / (8.0 * alpha * c)));
    let second = match (second_alpha_term, second_ratio_term) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    Ok(AmplitudeLower { floor, floor_alt: -1.0 / alpha, first, second_alpha_term, second_ratio_term, second })
}

/// Whether a claimed period of a nonnegative orbit started from rest respects
/// the floor `T >= pi`.
pub fn period_floor_check(claimed_period: f64) -> bool {
    claimed_period >= PI - PERIOD_FLOOR_TOL
}

/// Sufficient pull-in condition with a bound on the pull-in time from rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullIn {
    /// False when `delta >= 1` or the stiffness is tabulated.
    pub applicable: bool,
    pub sufficient: bool,
    pub time_bound: Option<f64>,
}

/// `t - (1 - e^{-ct})/c`, accurate for small `ct`.
fn damped_ramp(c: f64, t: f64) -> f64 {
    let u = c * t;
    if u < 1e-3 {
        // alternating series in u; five terms reach double precision here
        t * u * (0.5 - u / 6.0 + u * u / 24.0 - u.powi(3) / 120.0 + u.powi(4) / 720.0)
    } else {
        t + (-u).exp_m1() / c
    }
}

pub fn pull_in_sufficient(p: &ModelParams) -> PullIn {
    let slope_alpha = match p.stiffness {
        Stiffness::Graphene => p.alpha,
        Stiffness::Linear => 0.0,
        Stiffness::Custom(_) => return PullIn { applicable: false, sufficient: false, time_bound: None },
    };
    if p.delta >= 1.0 {
        return PullIn { applicable: false, sufficient: false, time_bound: None };
    }
    let drive = p.lambda * (1.0 - p.delta);
    let k = drive * drive - (1.0 + slope_alpha);
    if !(drive > (1.0 + slope_alpha).sqrt()) || !(k > 0.0) {
        return PullIn { applicable: true, sufficient: false, time_bound: None };
    }
    let t0 = (2.0 / k).sqrt();
    if p.c == 0.0 {
        return PullIn { applicable: true, sufficient: true, time_bound: Some(t0) };
    }
    let g = |t: f64| k * damped_ramp(p.c, t) / p.c - 1.0;
    let (mut lo, mut hi) = (0.0, t0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-14 * hi {
        let m = 0.5 * (lo + hi);
        if g(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    PullIn { applicable: true, sufficient: true, time_bound: Some(hi) }
}

/// All analytical quantities for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(rename = "V_m")]
    pub v_min: f64,
    #[serde(rename = "V_M")]
    pub v_max: f64,
    #[serde(rename = "A_alpha")]
    pub a_alpha: f64,
    pub exists_t_periodic: Existence,
    pub amp_upper: Option<AmplitudeUpper>,
    pub amp_lower_bounds: Option<AmplitudeLower>,
    pub period_floor: f64,
    pub pull_in_sufficient: bool,
    pub pull_in_time_bound: Option<f64>,
    pub static_threshold: f64,
    pub flags: Vec<String>,
}

impl ThresholdReport {
    pub fn new(p: &ModelParams) -> Self {
        let mut flags = Vec::new();
        let (v_min, v_max) = voltage_extrema(p);
        let alpha_eff = match p.stiffness {
            Stiffness::Graphene => p.alpha,
            Stiffness::Linear => 0.0,
            Stiffness::Custom(_) => {
                flags.push("custom stiffness: closed forms below assume the graphene law".to_string());
                p.alpha
            }
        };
        if p.delta >= 1.0 {
            flags.push("delta >= 1: V_m = 0 (the voltage changes sign)".to_string());
            flags.push("delta >= 1: pull-in criterion not applicable".to_string());
        }
        let amp_upper = amplitude_upper(p).ok();
        if amp_upper.is_none() {
            flags.push("alpha = 0: amplitude bounds not applicable".to_string());
        }
        let amp_lower_bounds = amplitude_lower(p, p.period()).ok();
        if p.c == 0.0 {
            flags.push("c = 0: lower amplitude bounds not applicable".to_string());
        }
        if let Some(lb) = &amp_lower_bounds {
            if lb.second_ratio_term.is_none() {
                flags.push("V_m = 0: V_M/V_m term of the second lower bound unavailable".to_string());
            }
            if lb.second_alpha_term.is_none() {
                flags.push("alpha = 1: alpha/(alpha - 1) term of the second lower bound unavailable".to_string());
            }
        }
        if let Some(up) = &amp_upper {
            if up.bound.is_none() {
                flags.push("2 V_m sqrt(alpha) > 1: nonnegative-maximum branch is empty".to_string());
            }
        }
        if p.c != 0.0 || p.delta != 0.0 {
            flags.push("static threshold assumes c = 0, delta = 0 and zero initial data".to_string());
        }
        flags.push("period floor applies to nonnegative orbits started from rest".to_string());
        let pull = pull_in_sufficient(p);
        Self {
            v_min,
            v_max,
            a_alpha: a_alpha(alpha_eff),
            exists_t_periodic: existence_check(p),
            amp_upper,
            amp_lower_bounds,
            period_floor: PI,
            pull_in_sufficient: pull.sufficient,
            pull_in_time_bound: pull.time_bound,
            static_threshold: static_threshold(alpha_eff),
            flags,
        }
    }
}
