//! Dimensionless equation of motion for the forced parallel-plate oscillator
//!
//! ```text
//! x'' + c x' + h(x) = V(t)^2 / (1 - x)^2,    V(t) = lambda (1 + delta cos(omega t))
//! ```
//!
//! with displacement normalised by the gap, so the fixed plate sits at `x = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible `1 - x` before the electrostatic term is treated as singular.
pub const SINGULAR_FLOOR: f64 = 1e-12;

/// Restoring-force law `h(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stiffness {
    /// `h(x) = x - alpha x |x|`
    Graphene,
    /// `h(x) = x`; `alpha` is ignored.
    Linear,
    /// Tabulated `h`, interpolated by a natural cubic spline and held constant
    /// outside the table.
    Custom(TabulatedStiffness),
}

/// Natural cubic spline through `(x[i], h[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableNodes", into = "TableNodes")]
pub struct TabulatedStiffness {
    x: Vec<f64>,
    h: Vec<f64>,
    // second derivatives at the nodes
    m: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableNodes {
    x: Vec<f64>,
    h: Vec<f64>,
}

impl TryFrom<TableNodes> for TabulatedStiffness {
    type Error = Error;
    fn try_from(t: TableNodes) -> Result<Self> {
        TabulatedStiffness::new(t.x, t.h)
    }
}

impl From<TabulatedStiffness> for TableNodes {
    fn from(t: TabulatedStiffness) -> Self {
        TableNodes { x: t.x, h: t.h }
    }
}

impl TabulatedStiffness {
    pub fn new(x: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if x.len() != h.len() {
            return Err(Error::InvalidParameter(format!(
                "stiffness table has {} abscissae but {} values",
                x.len(),
                h.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidParameter(
                "stiffness table needs at least two nodes".into(),
            ));
        }
        if x.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("stiffness table must be finite".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "stiffness table abscissae must be strictly increasing".into(),
            ));
        }
        let m = natural_spline_moments(&x, &h);
        Ok(Self { x, h, m })
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.h)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.h[0];
        }
        if x >= self.x[n - 1] {
            return self.h[n - 1];
        }
        // partition_point gives the first node strictly greater than x
        let hi = self.x.partition_point(|&xi| xi <= x).min(n - 1);
        let lo = hi - 1;
        let dx = self.x[hi] - self.x[lo];
        let a = (self.x[hi] - x) / dx;
        let b = (x - self.x[lo]) / dx;
        a * self.h[lo]
            + b * self.h[hi]
            + ((a * a * a - a) * self.m[lo] + (b * b * b - b) * self.m[hi]) * dx * dx / 6.0
    }

    /// Value held constant left of the table.
    pub fn left_value(&self) -> f64 {
        self.h[0]
    }
}

fn natural_spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let lower = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        if i > 1 {
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
    }
    for i in (1..n - 1).rev() {
        let next = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
        m[i] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

impl Stiffness {
    #[inline]
    pub fn eval(&self, alpha: f64, x: f64) -> f64 {
        match self {
            Stiffness::Graphene => x - alpha * x * x.abs(),
            Stiffness::Linear => x,
            Stiffness::Custom(t) => t.eval(x),
        }
    }
}

/// Dimensionless parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelParams")]
pub struct ModelParams {
    pub c: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    pub omega: f64,
    pub stiffness: Stiffness,
}

#[derive(Deserialize)]
struct RawModelParams {
    c: f64,
    alpha: f64,
    lambda: f64,
    delta: f64,
    omega: f64,
    #[serde(default = "default_stiffness")]
    stiffness: Stiffness,
}

fn default_stiffness() -> Stiffness {
    Stiffness::Graphene
}

impl TryFrom<RawModelParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawModelParams) -> Result<Self> {
        ModelParams::new(r.c, r.alpha, r.lambda, r.delta, r.omega, r.stiffness)
    }
}

impl ModelParams {
    pub fn new(
        c: f64,
        alpha: f64,
        lambda: f64,
        delta: f64,
        omega: f64,
        stiffness: Stiffness,
    ) -> Result<Self> {
        let p = Self { c, alpha, lambda, delta, omega, stiffness };
        p.validate()?;
        Ok(p)
    }

    /// Graphene stiffness with the given group.
    pub fn graphene(c: f64, alpha: f64, lambda: f64, delta: f64, omega: f64) -> Result<Self> {
        Self::new(c, alpha, lambda, delta, omega, Stiffness::Graphene)
    }

    /// Build from the `(V_d, f)` voltage form `V(t) = V_d + f cos(omega t)`.
    pub fn from_dc_and_amplitude(
        c: f64,
        alpha: f64,
        v_d: f64,
        f: f64,
        omega: f64,
        stiffness: Stiffness,
    ) -> Result<Self> {
        let delta = if v_d == 0.0 {
            if f == 0.0 {
                0.0
            } else {
                return Err(Error::UndefinedRatio { v_ac: f });
            }
        } else {
            f / v_d
        };
        Self::new(c, alpha, v_d, delta, omega, stiffness)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        };
        check(self.c.is_finite() && self.c >= 0.0, "c must be finite and >= 0")?;
        check(self.alpha.is_finite() && self.alpha >= 0.0, "alpha must be finite and >= 0")?;
        check(self.lambda.is_finite() && self.lambda >= 0.0, "lambda must be finite and >= 0")?;
        check(self.delta.is_finite() && self.delta >= 0.0, "delta must be finite and >= 0")?;
        check(self.omega.is_finite() && self.omega > 0.0, "omega must be finite and > 0")?;
        check(self.period().is_finite(), "forcing period must be finite")
    }

    /// Forcing period `2 pi / omega`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..self.clone() }
    }

    /// Restoring force `h(x)`.
    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        self.stiffness.eval(self.alpha, x)
    }

    /// Vector field at `(t, x, v)`, or `None` when `1 - x` is under the singular floor.
    #[inline]
    pub fn field(&self, t: f64, x: f64, v: f64) -> Option<[f64; 2]> {
        let gap = 1.0 - x;
        if gap.abs() < SINGULAR_FLOOR {
            return None;
        }
        let volt = voltage(self, t);
        Some([v, -self.c * v - self.h(x) + volt * volt / (gap * gap)])
    }
}

/// Phase-space point with its time stamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub v: f64,
    pub t: f64,
}

impl State {
    pub const fn new(x: f64, v: f64, t: f64) -> Self {
        Self { x, v, t }
    }

    pub fn xv(&self) -> (f64, f64) {
        (self.x, self.v)
    }
}

/// `V(t) = lambda (1 + delta cos(omega t))`.
#[inline]
pub fn voltage(p: &ModelParams, t: f64) -> f64 {
    p.lambda * (1.0 + p.delta * (p.omega * t).cos())
}

/// `(V_m, V_M)`, the minimum and maximum of `|V(t)|` over a period.
///
/// When `|delta| > 1` the waveform changes sign and `V_m = 0`.
pub fn voltage_extrema(p: &ModelParams) -> (f64, f64) {
    let d = p.delta.abs();
    let v_max = p.lambda * (1.0 + d);
    let v_min = if d <= 1.0 { p.lambda * (1.0 - d) } else { 0.0 };
    (v_min, v_max)
}

/// Right-hand side `(dx/dt, dv/dt)` of the first-order system.
pub fn rhs(p: &ModelParams, s: &State) -> Result<(f64, f64)> {
    p.field(s.t, s.x, s.v)
        .map(|[dx, dv]| (dx, dv))
        .ok_or(Error::Singular { x: s.x, floor: SINGULAR_FLOOR })
}

/// Dimensional device description in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// mass (kg)
    pub m: f64,
    /// viscous damping (kg/s)
    pub c_phys: f64,
    /// Young's modulus (Pa)
    #[serde(rename = "E")]
    pub e: f64,
    /// second-order elastic stiffness (Pa)
    #[serde(rename = "D")]
    pub d_elastic: f64,
    /// spring cross-section (m^2)
    #[serde(rename = "A_c")]
    pub a_c: f64,
    /// spring length (m)
    #[serde(rename = "L")]
    pub l: f64,
    /// plate gap (m)
    pub d: f64,
    /// permittivity (F/m)
    pub eps0: f64,
    /// plate area (m^2)
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "V_dc")]
    pub v_dc: f64,
    #[serde(rename = "V_ac")]
    pub v_ac: f64,
    /// forcing angular frequency (rad/s)
    pub omega_phys: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("E", self.e),
            ("A_c", self.a_c),
            ("L", self.l),
            ("d", self.d),
            ("eps0", self.eps0),
            ("A", self.a),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        let nonneg = [
            ("D", self.d_elastic),
            ("c_phys", self.c_phys),
            ("V_dc", self.v_dc),
            ("V_ac", self.v_ac),
            ("omega_phys", self.omega_phys),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Time unit `sqrt(m L / (E A_c))`: one dimensionless time unit in seconds.
    pub fn time_scale(&self) -> f64 {
        (self.m * self.l / (self.e * self.a_c)).sqrt()
    }

    /// Voltage unit: physical volts per unit of dimensionless voltage.
    pub fn voltage_scale(&self) -> f64 {
        (2.0 * self.e * self.a_c * self.d.powi(3) / (self.eps0 * self.a * self.l)).sqrt()
    }
}

/// Map a physical device onto the dimensionless group `(c, alpha, lambda, delta, omega)`.
pub fn nondimensionalize(pp: &PhysicalParams) -> Result<ModelParams> {
    pp.validate()?;
    let alpha = pp.d_elastic * pp.d / (pp.e * pp.l);
    let c = pp.c_phys * (pp.l / (pp.m * pp.e * pp.a_c)).sqrt();
    let lambda = pp.v_dc / pp.voltage_scale();
    let delta = if pp.v_dc == 0.0 {
        if pp.v_ac == 0.0 {
            0.0
        } else {
            return Err(Error::UndefinedRatio { v_ac: pp.v_ac });
        }
    } else {
        pp.v_ac / pp.v_dc
    };
    // a zero physical frequency is constant forcing; keep the period finite
    let omega = pp.omega_phys * pp.time_scale();
    if omega <= 0.0 {
        return Err(Error::InvalidParameter(
            "omega_phys must be > 0 for a periodic forcing".into(),
        ));
    }
    ModelParams::graphene(c, alpha, lambda, delta, omega)
}
