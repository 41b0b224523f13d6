//! Stroboscopic Poincaré map, Newton shooting for fixed points of its
//! `n`-fold composition, and Floquet multipliers.
//!
//! The section is taken at `t = kT` with `t = 0` at peak voltage. Every map
//! evaluation restarts the integrator at local time zero, so `map_apply`,
//! `find_orbit` and `pss_scan` agree bit-for-bit on the same input.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{Integrator, IntegratorConfig, OutcomeKind, PeriodStep};
use crate::model::{ModelParams, State};

/// Newton stops once `|F| = |P^n(s) - s|` drops below this.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Forward-difference step for the Newton Jacobian.
pub const FD_STEP: f64 = 1e-7;
/// Multipliers with modulus up to `1 + STABILITY_TOL` count as stable.
pub const STABILITY_TOL: f64 = 1e-7;
/// A divisor `m | n` is the minimal period when `|P^m(s) - s|` is below this.
pub const PERIOD_MATCH_TOL: f64 = 1e-8;

/// The `n`-fold stroboscopic map for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareMapSpec {
    pub params: ModelParams,
    #[serde(default)]
    pub cfg: IntegratorConfig,
    pub n: usize,
}

impl PoincareMapSpec {
    pub fn new(params: ModelParams, cfg: IntegratorConfig, n: usize) -> Result<Self> {
        let spec = Self { params, cfg, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("period multiple n must be at least 1".into()));
        }
        self.params.validate()?;
        self.cfg.validate()
    }

    /// Same map with a different period multiple.
    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    /// Same map with a different damping.
    pub fn with_c(&self, c: f64) -> Self {
        Self { params: self.params.with_c(c), ..self.clone() }
    }

    fn integrator(&self) -> Result<Integrator<'_>> {
        Integrator::new(&self.params, &self.cfg)
    }
}

/// A fixed point of the `n`-fold map together with its linear stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "OrbitRecord", from = "OrbitRecord")]
pub struct PeriodicOrbit {
    /// Minimal period multiple.
    pub n: usize,
    /// Point on the section (`t = 0`).
    pub point: State,
    /// Eigenvalues of the monodromy matrix, larger modulus first.
    pub multipliers: [Complex64; 2],
    pub stable: bool,
    /// `|P^n(point) - point|` at the accepted iterate.
    pub residual: f64,
}

#[derive(Serialize, Deserialize)]
struct OrbitRecord {
    n: usize,
    x: f64,
    v: f64,
    multipliers: [[f64; 2]; 2],
    stable: bool,
    residual: f64,
}

impl From<PeriodicOrbit> for OrbitRecord {
    fn from(o: PeriodicOrbit) -> Self {
        Self {
            n: o.n,
            x: o.point.x,
            v: o.point.v,
            multipliers: o.multipliers.map(|m| [m.re, m.im]),
            stable: o.stable,
            residual: o.residual,
        }
    }
}

impl From<OrbitRecord> for PeriodicOrbit {
    fn from(r: OrbitRecord) -> Self {
        Self {
            n: r.n,
            point: State::new(r.x, r.v, 0.0),
            multipliers: r.multipliers.map(|[re, im]| Complex64::new(re, im)),
            stable: r.stable,
            residual: r.residual,
        }
    }
}

impl PeriodicOrbit {
    pub fn xv(&self) -> [f64; 2] {
        [self.point.x, self.point.v]
    }

    /// Product of the multipliers, i.e. the monodromy determinant.
    pub fn det(&self) -> f64 {
        (self.multipliers[0] * self.multipliers[1]).re
    }

    /// Multiplier closest to `+1`, with its distance.
    pub fn leading_to_one(&self) -> (Complex64, f64) {
        let d: Vec<f64> = self.multipliers.iter().map(|m| (m - 1.0).norm()).collect();
        if d[0] <= d[1] {
            (self.multipliers[0], d[0])
        } else {
            (self.multipliers[1], d[1])
        }
    }
}

/// Apply the `n`-fold map once.
pub fn map_apply(spec: &PoincareMapSpec, s: [f64; 2]) -> Result<PeriodStep> {
    spec.integrator()?.periods(s[0], s[1], spec.n)
}

fn shoot(it: &Integrator<'_>, s: [f64; 2], n: usize) -> Result<Option<[f64; 2]>> {
    Ok(match it.periods(s[0], s[1], n)? {
        PeriodStep::Point { x, v } => Some([x, v]),
        PeriodStep::Event(_) => None,
    })
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Eigenvalues of a real 2x2 matrix, larger modulus first.
pub fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [Complex64; 2] {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
        let small = if big != 0.0 { det / big } else { 0.0 };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
    }
}

/// Monodromy matrix of the `n`-fold map at `s`, from the variational equations.
pub fn monodromy(spec: &PoincareMapSpec, s: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    let it = spec.integrator()?;
    match it.periods_with_jacobian(s[0], s[1], spec.n)? {
        Some((_, jac)) => Ok(jac),
        None => Err(Error::EventInterrupted(format!(
            "monodromy shot from ({}, {}) hit the pull-in or escape threshold",
            s[0], s[1]
        ))),
    }
}

fn newton(it: &Integrator<'_>, guess: [f64; 2], n: usize) -> Result<([f64; 2], f64)> {
    let event = |s: [f64; 2]| {
        Error::EventInterrupted(format!("shot from ({}, {}) over {n} periods hit an event", s[0], s[1]))
    };
    let residual_at = |s: [f64; 2]| -> Result<Option<[f64; 2]>> {
        Ok(shoot(it, s, n)?.map(|img| [img[0] - s[0], img[1] - s[1]]))
    };

    let mut s = guess;
    let mut f = residual_at(s)?.ok_or_else(|| event(s))?;
    for _ in 0..NEWTON_MAX_ITER {
        let r = norm(f);
        if r < NEWTON_TOL {
            return Ok((s, r));
        }
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut sp = s;
            let h = FD_STEP * s[k].abs().max(1.0);
            sp[k] += h;
            let fp = residual_at(sp)?.ok_or_else(|| event(sp))?;
            jac[0][k] = (fp[0] - f[0]) / h;
            jac[1][k] = (fp[1] - f[1]) / h;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NoConvergence { iterations: NEWTON_MAX_ITER, residual: r });
        }
        let dx = -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
        let dv = -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det;

        // Full step unless the shot leaves the physical window, then back off.
        let mut lam = 1.0;
        loop {
            let cand = [s[0] + lam * dx, s[1] + lam * dv];
            if let Some(fc) = residual_at(cand)? {
                s = cand;
                f = fc;
                break;
            }
            lam *= 0.5;
            if lam < 1.0 / 64.0 {
                return Err(event(cand));
            }
        }
        if !s[0].is_finite() || !s[1].is_finite() {
            return Err(Error::NoConvergence { iterations: NEWTON_MAX_ITER, residual: f64::INFINITY });
        }
    }
    let r = norm(f);
    if r < NEWTON_TOL {
        return Ok((s, r));
    }
    Err(Error::NoConvergence { iterations: NEWTON_MAX_ITER, residual: r })
}

fn divisors(n: usize) -> Vec<usize> {
    (1..n).filter(|m| n % m == 0).collect()
}

/// Newton shooting for a fixed point of the `n`-fold map from `guess`.
///
/// After convergence the proper divisors of `n` are tried in ascending order
/// and the orbit is reported with its minimal period.
pub fn find_orbit(spec: &PoincareMapSpec, guess: [f64; 2]) -> Result<PeriodicOrbit> {
    spec.validate()?;
    let it = spec.integrator()?;
    let (mut s, mut residual) = newton(&it, guess, spec.n)?;
    let mut n = spec.n;
    for m in divisors(spec.n) {
        if let Some(img) = shoot(&it, s, m)? {
            if norm([img[0] - s[0], img[1] - s[1]]) < PERIOD_MATCH_TOL {
                if let Ok((sm, rm)) = newton(&it, s, m) {
                    s = sm;
                    residual = rm;
                    n = m;
                    break;
                }
            }
        }
    }
    let jac = monodromy(&spec.with_n(n), s)?;
    let multipliers = eigenvalues_2x2(&jac);
    let stable = multipliers.iter().all(|m| m.norm() <= 1.0 + STABILITY_TOL);
    Ok(PeriodicOrbit { n, point: State::new(s[0], s[1], 0.0), multipliers, stable, residual })
}

/// The `n` section points of an orbit, starting at `orbit.point`.
pub fn cycle_points(spec: &PoincareMapSpec, orbit: &PeriodicOrbit) -> Result<Vec<[f64; 2]>> {
    let it = spec.integrator()?;
    let mut pts = Vec::with_capacity(orbit.n);
    let mut s = orbit.xv();
    pts.push(s);
    for _ in 1..orbit.n {
        s = shoot(&it, s, 1)?.ok_or_else(|| Error::EventInterrupted("cycle point shot hit an event".into()))?;
        pts.push(s);
    }
    Ok(pts)
}

/// Section points visited from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTrace {
    pub seed_id: usize,
    /// Points `P^{kn}(seed)` for `k = 0..`, the seed itself first.
    pub points: Vec<[f64; 2]>,
    pub termination: OutcomeKind,
}

/// Iterate the map from every seed. Seeds run in parallel on the current
/// rayon pool; the result is ordered by seed index.
pub fn pss_scan(spec: &PoincareMapSpec, seeds: &[[f64; 2]], iterations: usize) -> Result<Vec<SeedTrace>> {
    spec.validate()?;
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    let it = spec.integrator()?;
    Ok(seeds
        .par_iter()
        .enumerate()
        .map(|(seed_id, &seed)| {
            let mut points = Vec::with_capacity(iterations + 1);
            points.push(seed);
            let mut s = seed;
            let mut termination = OutcomeKind::Completed;
            for _ in 0..iterations {
                match it.periods(s[0], s[1], spec.n) {
                    Ok(PeriodStep::Point { x, v }) => {
                        s = [x, v];
                        points.push(s);
                    }
                    Ok(PeriodStep::Event(kind)) => {
                        termination = kind;
                        break;
                    }
                    // A stalled step sits at the wall; treat it as collapse.
                    Err(_) => {
                        termination = OutcomeKind::PullIn(f64::NAN);
                        break;
                    }
                }
            }
            SeedTrace { seed_id, points, termination }
        })
        .collect())
}

/// Seeds evenly spaced on the segment from `a` to `b`, endpoints included.
pub fn seed_line(a: [f64; 2], b: [f64; 2], count: usize) -> Vec<[f64; 2]> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            })
            .collect(),
    }
}

/// Write scan output as CSV with header `seed_id,k,x,v`.
pub fn write_pss_csv<W: Write>(mut w: W, traces: &[SeedTrace]) -> std::io::Result<()> {
    writeln!(w, "seed_id,k,x,v")?;
    for tr in traces {
        for (k, p) in tr.points.iter().enumerate() {
            writeln!(w, "{},{},{:?},{:?}", tr.seed_id, k, p[0], p[1])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(c: f64, alpha: f64, lambda: f64, delta: f64, omega: f64, n: usize) -> PoincareMapSpec {
        PoincareMapSpec::new(
            ModelParams::graphene(c, alpha, lambda, delta, omega).unwrap(),
            IntegratorConfig::default(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn map_is_rotation_for_free_linear_oscillator() {
        let s = spec(0.0, 0.0, 0.0, 0.0, 1.3, 1);
        let t = 2.0 * std::f64::consts::PI / 1.3;
        match map_apply(&s, [0.1, 0.0]).unwrap() {
            PeriodStep::Point { x, v } => {
                assert_abs_diff_eq!(x, 0.1 * t.cos(), epsilon = 1e-9);
                assert_abs_diff_eq!(v, -0.1 * t.sin(), epsilon = 1e-9);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn strong_dc_voltage_pulls_in_within_one_period() {
        let s = spec(0.0, 0.5, 2.0, 0.0, 1.0, 1);
        assert!(matches!(map_apply(&s, [0.0, 0.0]).unwrap(), PeriodStep::Event(OutcomeKind::PullIn(_))));
    }

    #[test]
    fn damped_free_origin_is_a_stable_fixed_point() {
        let s = spec(0.2, 0.0, 0.0, 0.0, 1.3, 1);
        let o = find_orbit(&s, [0.05, -0.02]).unwrap();
        assert_eq!(o.n, 1);
        assert!(o.point.x.abs() < 1e-9 && o.point.v.abs() < 1e-9);
        assert!(o.stable);
        assert!(o.multipliers.iter().all(|m| m.norm() < 1.0));
        let expected = (-0.2 * s.params.period()).exp();
        assert_abs_diff_eq!(o.det(), expected, epsilon = 1e-9);
    }

    #[test]
    fn central_orbit_at_section_parameters_is_stable() {
        let s = spec(0.0, 0.5, 0.01, 30.0, 1.3, 1);
        let o = find_orbit(&s, [0.0, 0.0]).unwrap();
        assert!(o.point.x.abs() < 0.1);
        assert!(o.stable);
        assert_abs_diff_eq!(o.det(), 1.0, epsilon = 1e-6);
        // conservative multipliers on the unit circle as a conjugate pair
        assert_abs_diff_eq!(o.multipliers[0].im, -o.multipliers[1].im, epsilon = 1e-9);
    }

    #[test]
    fn reports_minimal_period() {
        let s = spec(0.0, 0.5, 0.01, 30.0, 1.3, 4);
        let o = find_orbit(&s, [0.0, 0.0]).unwrap();
        assert_eq!(o.n, 1);
    }

    #[test]
    fn eigenvalues_of_rotation_and_diagonal() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let e = eigenvalues_2x2(&[[c, -s], [s, c]]);
        assert_abs_diff_eq!(e[0].re, c, epsilon = 1e-15);
        assert_abs_diff_eq!(e[0].im.abs(), s, epsilon = 1e-15);
        let e = eigenvalues_2x2(&[[2.0, 0.0], [0.0, 0.5]]);
        assert_eq!(e, [Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)]);
    }

    #[test]
    fn orbit_json_layout() {
        let o = PeriodicOrbit {
            n: 3,
            point: State::new(0.25, -0.5, 0.0),
            multipliers: [Complex64::new(0.5, 0.25), Complex64::new(0.5, -0.25)],
            stable: true,
            residual: 1e-12,
        };
        let v: serde_json::Value = serde_json::to_value(&o).unwrap();
        assert_eq!(v["n"], 3);
        assert_eq!(v["multipliers"][1][1], -0.25);
        let back: PeriodicOrbit = serde_json::from_value(v).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn scan_is_ordered_and_csv_has_header() {
        let s = spec(0.0, 0.0, 0.0, 0.0, 1.0, 1);
        let seeds = seed_line([0.05, 0.0], [0.15, 0.0], 3);
        let tr = pss_scan(&s, &seeds, 4).unwrap();
        assert_eq!(tr.iter().map(|t| t.seed_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        let mut buf = Vec::new();
        write_pss_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed_id,k,x,v\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 5);
    }
}
