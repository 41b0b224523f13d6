//! Adaptive time stepping of the forced oscillator with event detection.
//!
//! Trajectories stop at the first of two events: pull-in, when `x` reaches
//! [`IntegratorConfig::pull_in_threshold`], and escape, when `x` falls to
//! [`IntegratorConfig::escape_floor`]. Event times are refined on the
//! continuous extension of the step that crossed the threshold.
//!
//! The stroboscopic map is evaluated one forcing period at a time, always
//! starting from local time 0 (the voltage peak), so that `k` applications of
//! the one-period map and `strobe` agree to the last bit.

pub mod dop853;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use dop853::{Dop853, System};

/// Event times are refined to this width.
pub const EVENT_TIME_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step; `None` means a twentieth of the forcing period.
    pub max_step: Option<f64>,
    pub pull_in_threshold: f64,
    pub escape_floor: f64,
    /// Default horizon for open-ended simulations.
    pub max_time: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: None,
            pull_in_threshold: 1.0 - 1e-3,
            escape_floor: -5.0,
            max_time: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be strictly positive");
        }
        if !(self.pull_in_threshold > 0.0 && self.pull_in_threshold < 1.0) {
            return bad("pull_in_threshold must lie in (0, 1)");
        }
        if !(self.escape_floor < 0.0) {
            return bad("escape_floor must be negative");
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad("max_step must be positive");
            }
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return bad("max_time must be positive");
            }
        }
        Ok(())
    }

    pub fn max_step_for(&self, p: &ModelParams) -> f64 {
        self.max_step.unwrap_or(p.period() / 20.0)
    }
}

/// How a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeKind {
    Completed,
    PullIn(f64),
    Escape(f64),
}

impl OutcomeKind {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeKind::Completed => "completed",
            OutcomeKind::PullIn(_) => "pull_in",
            OutcomeKind::Escape(_) => "escape",
        }
    }

    pub fn event_time(&self) -> Option<f64> {
        match *self {
            OutcomeKind::Completed => None,
            OutcomeKind::PullIn(t) | OutcomeKind::Escape(t) => Some(t),
        }
    }

    pub fn is_event(&self) -> bool {
        !matches!(self, OutcomeKind::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    pub kind: OutcomeKind,
    pub final_state: State,
    pub samples: Vec<State>,
}

/// JSON form of an outcome: `{"kind": ..., "t_event": ..., "final": [x, v]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub kind: String,
    pub t_event: Option<f64>,
    #[serde(rename = "final")]
    pub final_xv: [f64; 2],
}

impl TrajectoryOutcome {
    pub fn record(&self) -> OutcomeRecord {
        OutcomeRecord {
            kind: self.kind.name().to_string(),
            t_event: self.kind.event_time(),
            final_xv: [self.final_state.x, self.final_state.v],
        }
    }
}

/// Stroboscopic samples at `t = kT`, possibly cut short by an event.
#[derive(Debug, Clone, PartialEq)]
pub struct StrobeResult {
    pub samples: Vec<State>,
    /// `Completed` when all requested samples were produced.
    pub termination: OutcomeKind,
}

/// Image of a point under whole forcing periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodStep {
    Point { x: f64, v: f64 },
    /// Event, with the time measured from the start of the first period.
    Event(OutcomeKind),
}

struct Flow<'a>(&'a ModelParams);

impl System<2> for Flow<'_> {
    #[inline]
    fn eval(&self, t: f64, y: &[f64; 2]) -> Option<[f64; 2]> {
        self.0.field(t, y[0], y[1])
    }
}

/// Flow augmented with the variational equations `Phi' = J(t, x) Phi`.
struct Variational<'a>(&'a ModelParams);

impl System<6> for Variational<'_> {
    #[inline]
    fn eval(&self, t: f64, y: &[f64; 6]) -> Option<[f64; 6]> {
        let p = self.0;
        let [dx, dv] = p.field(t, y[0], y[1])?;
        let gap = 1.0 - y[0];
        let volt = crate::model::voltage(p, t);
        let dh = match &p.stiffness {
            crate::model::Stiffness::Graphene => 1.0 - 2.0 * p.alpha * y[0].abs(),
            crate::model::Stiffness::Linear => 1.0,
            crate::model::Stiffness::Custom(_) => {
                let e = 1e-6;
                (p.h(y[0] + e) - p.h(y[0] - e)) / (2.0 * e)
            }
        };
        let a = -dh + 2.0 * volt * volt / (gap * gap * gap);
        let b = -p.c;
        // columns (y2, y3) and (y4, y5) of Phi
        Some([dx, dv, y[3], a * y[2] + b * y[3], y[5], a * y[4] + b * y[5]])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RunSummary {
    pub kind: OutcomeKind,
    pub final_state: State,
    pub samples: Vec<State>,
    pub max_abs_x: f64,
    pub max_x: f64,
}

/// Steps shorter than this on either side of a kink are not split.
const KINK_GUARD: f64 = 1e-9;

/// One accepted step. With `split`, a step that carries `x` across zero is
/// redone so that it ends on the crossing: the graphene law `x|x|` has a jump
/// in its second derivative there, and stepping over it degrades the error
/// estimate of a high-order pair.
fn step_split<S: System<N>, const N: usize>(st: &mut Dop853<N>, sys: &S, t_limit: f64, split: bool) -> Result<()> {
    st.step(sys, t_limit)?;
    if !split {
        return Ok(());
    }
    let (t0, x0, t1, x1) = (st.t_prev(), st.y_prev()[0], st.t, st.y[0]);
    if x0 * x1 < 0.0 {
        let tc = bisect(t0, t1, |t| (st.interpolate(sys, t)[0] > 0.0) == (x0 > 0.0));
        if tc - t0 > KINK_GUARD && t1 - tc > KINK_GUARD {
            st.rewind();
            st.step(sys, tc)?;
        }
    }
    Ok(())
}

/// Integrator bound to one parameter set.
pub struct Integrator<'a> {
    p: &'a ModelParams,
    cfg: &'a IntegratorConfig,
    h_max: f64,
    split: bool,
}

impl<'a> Integrator<'a> {
    pub fn new(p: &'a ModelParams, cfg: &'a IntegratorConfig) -> Result<Self> {
        p.validate()?;
        cfg.validate()?;
        let split = matches!(p.stiffness, crate::model::Stiffness::Graphene) && p.alpha != 0.0;
        Ok(Self { p, cfg, h_max: cfg.max_step_for(p), split })
    }

    pub fn params(&self) -> &ModelParams {
        self.p
    }

    pub fn config(&self) -> &IntegratorConfig {
        self.cfg
    }

    fn classify(&self, x: f64) -> Option<bool> {
        if x >= self.cfg.pull_in_threshold {
            Some(true)
        } else if x <= self.cfg.escape_floor {
            Some(false)
        } else {
            None
        }
    }

    /// Core driver: integrate from `s0` to `t_end`, emitting `sample_times`
    /// (ascending) and tracking `max |x|` over the continuous trajectory.
    pub(crate) fn run(&self, s0: State, t_end: f64, sample_times: &[f64]) -> Result<RunSummary> {
        let cfg = self.cfg;
        let mut samples = Vec::with_capacity(sample_times.len());
        let mut next = 0;
        let mut max_abs_x = s0.x.abs();
        let mut max_x = s0.x;

        if let Some(pull) = self.classify(s0.x) {
            let kind = if pull { OutcomeKind::PullIn(s0.t) } else { OutcomeKind::Escape(s0.t) };
            return Ok(RunSummary { kind, final_state: s0, samples, max_abs_x, max_x });
        }
        while next < sample_times.len() && sample_times[next] <= s0.t {
            if sample_times[next] == s0.t {
                samples.push(s0);
            }
            next += 1;
        }
        if t_end <= s0.t {
            return Ok(RunSummary { kind: OutcomeKind::Completed, final_state: s0, samples, max_abs_x, max_x });
        }

        let flow = Flow(self.p);
        let mut st = Dop853::new(&flow, s0.t, [s0.x, s0.v], cfg.rel_tol, cfg.abs_tol, self.h_max, None)?;
        while st.t < t_end {
            step_split(&mut st, &flow, t_end, self.split)?;
            let (t0, y0) = (st.t_prev(), *st.y_prev());
            let (t1, y1) = (st.t, st.y);

            // turning point inside the step: x peaks where v changes sign
            let mut crossing_end = None;
            let mut turning = None;
            if y0[1] * y1[1] < 0.0 {
                let tt = bisect(t0, t1, |t| (st.interpolate(&flow, t)[1] > 0.0) == (y0[1] > 0.0));
                let yt = st.interpolate(&flow, tt);
                if self.classify(yt[0]).is_some() {
                    crossing_end = Some(tt);
                }
                turning = Some(yt[0]);
            }
            if crossing_end.is_none() && self.classify(y1[0]).is_some() {
                crossing_end = Some(t1);
            }

            if let Some(t_hi) = crossing_end {
                let probe = |st: &mut Dop853<2>, t: f64| st.interpolate(&flow, t);
                let end = probe(&mut st, t_hi);
                let pull = self.classify(end[0]).unwrap();
                let thr = if pull { cfg.pull_in_threshold } else { cfg.escape_floor };
                let inside = |x: f64| if pull { x < thr } else { x > thr };
                let (mut lo, mut hi) = (t0, t_hi);
                while hi - lo > EVENT_TIME_TOL * 0.5 {
                    let mid = 0.5 * (lo + hi);
                    if inside(probe(&mut st, mid)[0]) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let ye = if hi == t1 { y1 } else { probe(&mut st, hi) };
                // samples strictly before the event
                while next < sample_times.len() && sample_times[next] < hi {
                    let ts = sample_times[next];
                    if ts > t0 {
                        let y = probe(&mut st, ts);
                        samples.push(State::new(y[0], y[1], ts));
                    }
                    next += 1;
                }
                max_abs_x = max_abs_x.max(ye[0].abs());
                max_x = max_x.max(ye[0]);
                let kind = if pull { OutcomeKind::PullIn(hi) } else { OutcomeKind::Escape(hi) };
                return Ok(RunSummary { kind, final_state: State::new(ye[0], ye[1], hi), samples, max_abs_x, max_x });
            }

            max_abs_x = max_abs_x.max(y1[0].abs());
            max_x = max_x.max(y1[0]);
            if let Some(xt) = turning {
                max_abs_x = max_abs_x.max(xt.abs());
                max_x = max_x.max(xt);
            }
            while next < sample_times.len() && sample_times[next] <= t1 {
                let ts = sample_times[next];
                let y = if ts == t1 { y1 } else { st.interpolate(&flow, ts) };
                samples.push(State::new(y[0], y[1], ts));
                next += 1;
            }
        }
        Ok(RunSummary {
            kind: OutcomeKind::Completed,
            final_state: State::new(st.y[0], st.y[1], st.t),
            samples,
            max_abs_x,
            max_x,
        })
    }

    /// Integrate from `s0` to `t_end`, sampling the trajectory at `sample_times`.
    pub fn integrate(&self, s0: State, t_end: f64, sample_times: &[f64]) -> Result<TrajectoryOutcome> {
        if sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("sample times must be ascending".into()));
        }
        if t_end < s0.t {
            return Err(Error::InvalidParameter("t_end precedes the initial time".into()));
        }
        let r = self.run(s0, t_end, sample_times)?;
        Ok(TrajectoryOutcome { kind: r.kind, final_state: r.final_state, samples: r.samples })
    }

    /// One forcing period from section phase.
    pub(crate) fn one_period(&self, x: f64, v: f64) -> Result<RunSummary> {
        self.run(State::new(x, v, 0.0), self.p.period(), &[])
    }

    /// `n` applications of the one-period map.
    pub fn periods(&self, x: f64, v: f64, n: usize) -> Result<PeriodStep> {
        let t_per = self.p.period();
        let (mut x, mut v) = (x, v);
        for k in 0..n {
            let r = self.one_period(x, v)?;
            let (kind, s) = (r.kind, r.final_state);
            if let Some(te) = kind.event_time() {
                let t = k as f64 * t_per + te;
                return Ok(PeriodStep::Event(match kind {
                    OutcomeKind::PullIn(_) => OutcomeKind::PullIn(t),
                    _ => OutcomeKind::Escape(t),
                }));
            }
            x = s.x;
            v = s.v;
        }
        Ok(PeriodStep::Point { x, v })
    }

    /// Stroboscopic samples of the trajectory through `s0` at `t = s0.t + kT`, `k = 0..=n`.
    pub fn strobe(&self, s0: State, n: usize) -> Result<StrobeResult> {
        let t_per = self.p.period();
        let phase = s0.t / t_per;
        if (phase - phase.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "strobe start t = {} is not a multiple of the forcing period",
                s0.t
            )));
        }
        let mut samples = Vec::with_capacity(n + 1);
        samples.push(s0);
        let (mut x, mut v) = (s0.x, s0.v);
        for k in 0..n {
            let r = self.one_period(x, v)?;
            let (kind, s) = (r.kind, r.final_state);
            if let Some(te) = kind.event_time() {
                let t = s0.t + k as f64 * t_per + te;
                let termination = match kind {
                    OutcomeKind::PullIn(_) => OutcomeKind::PullIn(t),
                    _ => OutcomeKind::Escape(t),
                };
                return Ok(StrobeResult { samples, termination });
            }
            x = s.x;
            v = s.v;
            samples.push(State::new(x, v, s0.t + (k + 1) as f64 * t_per));
        }
        Ok(StrobeResult { samples, termination: OutcomeKind::Completed })
    }

    /// The `n`-period map together with its Jacobian, from the variational
    /// equations. `None` when the shot hits an event.
    pub fn periods_with_jacobian(&self, x: f64, v: f64, n: usize) -> Result<Option<([f64; 2], [[f64; 2]; 2])>> {
        let sys = Variational(self.p);
        let t_per = self.p.period();
        let mut y = [x, v, 1.0, 0.0, 0.0, 1.0];
        let mut jac = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..n {
            let mut st = Dop853::new(&sys, 0.0, y, self.cfg.rel_tol, self.cfg.abs_tol, self.h_max, None)?;
            while st.t < t_per {
                step_split(&mut st, &sys, t_per, self.split)?;
                if self.classify(st.y[0]).is_some() {
                    return Ok(None);
                }
            }
            // Phi over this period, columns (y2,y3) and (y4,y5)
            let phi = [[st.y[2], st.y[4]], [st.y[3], st.y[5]]];
            jac = matmul(&phi, &jac);
            y = [st.y[0], st.y[1], 1.0, 0.0, 0.0, 1.0];
        }
        Ok(Some(([y[0], y[1]], jac)))
    }
}

fn matmul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Bisection for the switch point of a predicate that holds at `lo` and fails at `hi`.
fn bisect(mut lo: f64, mut hi: f64, mut holds: impl FnMut(f64) -> bool) -> f64 {
    while hi - lo > EVENT_TIME_TOL * 0.5 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Free-function form of [`Integrator::integrate`].
pub fn integrate(
    p: &ModelParams,
    cfg: &IntegratorConfig,
    s0: State,
    t_end: f64,
    sample_times: &[f64],
) -> Result<TrajectoryOutcome> {
    Integrator::new(p, cfg)?.integrate(s0, t_end, sample_times)
}

/// Free-function form of [`Integrator::strobe`].
pub fn strobe(p: &ModelParams, cfg: &IntegratorConfig, s0: State, n: usize) -> Result<StrobeResult> {
    Integrator::new(p, cfg)?.strobe(s0, n)
}
