//! Continuation of a periodic orbit in the damping `c` and location of the
//! critical damping where it is lost in a saddle-node fold.
//!
//! An orbit "exists" at `c` when Newton shooting from the previous solution
//! converges; that is the only decidable proxy available for the fold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::PeriodStep;
use crate::poincare::{find_orbit, map_apply, PeriodicOrbit, PoincareMapSpec, PERIOD_MATCH_TOL};

/// Growth factor of the damping step after a success.
pub const STEP_GROWTH: f64 = 1.2;
/// Largest absolute step in `c`.
pub const MAX_STEP: f64 = 1e-3;
/// Smallest step, relative to the current `c`, before the orbit is declared lost.
pub const MIN_REL_STEP: f64 = 1e-9;
/// First step when starting from `c = 0`.
pub const FIRST_STEP: f64 = 1e-6;
/// Target relative width of the final bracket around `c*`.
pub const C_STAR_REL_TOL: f64 = 1e-3;

/// One Newton solve in the audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub c: f64,
    pub converged: bool,
    /// Final residual, or the last one seen before failure; `None` when the
    /// shot left the physical window.
    pub residual: Option<f64>,
}

/// Result of [`continue_in_c`].
#[derive(Debug, Clone, PartialEq)]
pub enum Continued {
    /// The orbit survived up to the requested damping.
    Reached { orbit: PeriodicOrbit, steps: Vec<ContinuationStep> },
    /// Newton stopped converging between `c_last` and `c_fail`.
    Lost { c_last: f64, c_fail: f64, orbit_at_last: PeriodicOrbit, steps: Vec<ContinuationStep> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub n: usize,
    pub omega: f64,
    pub c_star: f64,
    /// `(c_exists, c_gone)`.
    pub bracket: (f64, f64),
    pub orbit_at_last: PeriodicOrbit,
    /// Distance of the multiplier nearest `+1` from `+1` at the last surviving `c`.
    pub multiplier_gap: f64,
    pub steps: Vec<ContinuationStep>,
}

fn check_seed(spec: &PoincareMapSpec, seed: &PeriodicOrbit) -> Result<()> {
    let shifted = spec.with_n(seed.n);
    let residual = match map_apply(&shifted, seed.xv())? {
        PeriodStep::Point { x, v } => (x - seed.point.x).hypot(v - seed.point.v),
        PeriodStep::Event(_) => f64::INFINITY,
    };
    if residual > PERIOD_MATCH_TOL {
        return Err(Error::SeedInvalid { residual });
    }
    Ok(())
}

/// Newton at damping `c` from `guess`, requiring the period multiple to stay `n`.
fn attempt(spec: &PoincareMapSpec, c: f64, guess: &PeriodicOrbit) -> (ContinuationStep, Option<PeriodicOrbit>) {
    match find_orbit(&spec.with_c(c).with_n(guess.n), guess.xv()) {
        Ok(o) if o.n == guess.n => (ContinuationStep { c, converged: true, residual: Some(o.residual) }, Some(o)),
        Ok(o) => (ContinuationStep { c, converged: false, residual: Some(o.residual) }, None),
        Err(Error::NoConvergence { residual, .. }) => {
            (ContinuationStep { c, converged: false, residual: Some(residual).filter(|r| r.is_finite()) }, None)
        }
        Err(_) => (ContinuationStep { c, converged: false, residual: None }, None),
    }
}

fn continue_until(
    spec: &PoincareMapSpec,
    seed: &PeriodicOrbit,
    c_target: f64,
    min_rel_step: f64,
) -> Result<Continued> {
    spec.validate()?;
    check_seed(spec, seed)?;
    let mut c = spec.params.c;
    if !(c_target >= c) {
        return Err(Error::InvalidParameter(format!("target damping {c_target} is below the seed damping {c}")));
    }
    let mut orbit = seed.clone();
    let mut steps = Vec::new();
    let mut step = if c > 0.0 { (c * (STEP_GROWTH - 1.0)).min(MAX_STEP) } else { FIRST_STEP.min(MAX_STEP) };
    while c < c_target {
        let c_next = (c + step).min(c_target);
        let (rec, found) = attempt(spec, c_next, &orbit);
        steps.push(rec);
        match found {
            Some(o) => {
                orbit = o;
                c = c_next;
                step = (step * STEP_GROWTH).min(MAX_STEP);
            }
            None => {
                if step < min_rel_step * c.max(f64::MIN_POSITIVE) || step < 1e-300 {
                    return Ok(Continued::Lost { c_last: c, c_fail: c_next, orbit_at_last: orbit, steps });
                }
                step *= 0.5;
            }
        }
    }
    Ok(Continued::Reached { orbit, steps })
}

/// Follow `seed` (converged at `spec.params.c`) up to `c_target`.
pub fn continue_in_c(spec: &PoincareMapSpec, seed: &PeriodicOrbit, c_target: f64) -> Result<Continued> {
    continue_until(spec, seed, c_target, MIN_REL_STEP)
}

/// Locate the damping at which the orbit through `seed` disappears, given an
/// upper bracket `c_hi` where it no longer exists.
///
/// The continuation itself already shrinks its step far below
/// [`C_STAR_REL_TOL`], so the bisection pass is usually a no-op. Stopping the
/// continuation early is not an option: the leading multiplier only reaches
/// `+1` in a very thin layer below the fold.
pub fn find_c_star(spec: &PoincareMapSpec, seed: &PeriodicOrbit, c_hi: f64) -> Result<ContinuationResult> {
    let (mut lo, mut hi, mut orbit, mut steps) =
        match continue_until(spec, seed, c_hi, MIN_REL_STEP)? {
            Continued::Reached { .. } => return Err(Error::BracketInvalid { c_hi }),
            Continued::Lost { c_last, c_fail, orbit_at_last, steps } => (c_last, c_fail, orbit_at_last, steps),
        };
    while hi - lo > C_STAR_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        let (rec, found) = attempt(spec, mid, &orbit);
        steps.push(rec);
        match found {
            Some(o) => {
                orbit = o;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    let multiplier_gap = orbit.leading_to_one().1;
    Ok(ContinuationResult {
        n: orbit.n,
        omega: spec.params.omega,
        c_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        orbit_at_last: orbit,
        multiplier_gap,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{IntegratorConfig, ModelParams};

    fn free_spec(c: f64) -> PoincareMapSpec {
        PoincareMapSpec::new(ModelParams::graphene(c, 0.0, 0.0, 0.0, 1.3).unwrap(), IntegratorConfig::default(), 1)
            .unwrap()
    }

    #[test]
    fn free_origin_persists_for_all_damping() {
        let spec = free_spec(0.0);
        let seed = find_orbit(&spec, [0.0, 0.0]).unwrap();
        match continue_in_c(&spec, &seed, 0.01).unwrap() {
            Continued::Reached { orbit, steps } => {
                assert!(orbit.point.x.abs() < 1e-12);
                assert!(steps.iter().all(|s| s.converged));
                assert!((steps.last().unwrap().c - 0.01).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bracket_invalid_when_orbit_survives() {
        let spec = free_spec(0.0);
        let seed = find_orbit(&spec, [0.0, 0.0]).unwrap();
        assert_eq!(find_c_star(&spec, &seed, 0.002).unwrap_err(), Error::BracketInvalid { c_hi: 0.002 });
    }

    #[test]
    fn bad_seed_is_rejected() {
        let spec = free_spec(0.0);
        let mut seed = find_orbit(&spec, [0.0, 0.0]).unwrap();
        seed.point.x = 0.05;
        assert!(matches!(continue_in_c(&spec, &seed, 0.01), Err(Error::SeedInvalid { .. })));
    }
}
