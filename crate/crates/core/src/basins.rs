//! Classification of a grid of initial conditions by their long-time fate.
//!
//! Without attractors a cell is `Bounded` when it survives the iteration
//! budget, with the largest `|x|` seen along the continuous trajectory as its
//! amplitude. With attractors (the damped case) the section point is compared
//! against every attractor cycle at the end of each block of iterations, and
//! a cell is assigned once two consecutive checks agree.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{Integrator, IntegratorConfig, OutcomeKind};
use crate::model::ModelParams;
use crate::poincare::{cycle_points, PeriodicOrbit, PoincareMapSpec};

fn default_match_tol() -> f64 {
    1e-4
}

fn default_block() -> usize {
    50
}

/// Rectangle of initial conditions and the classification budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub nx: usize,
    pub nv: usize,
    /// Poincaré iterations per cell.
    pub iterations: usize,
    #[serde(default)]
    pub attractors: Option<Vec<PeriodicOrbit>>,
    /// Distance in `(x, v)` below which a section point matches a cycle point.
    #[serde(default = "default_match_tol")]
    pub match_tol: f64,
    /// Iterations between attractor checks.
    #[serde(default = "default_block")]
    pub block: usize,
}

impl GridSpec {
    /// Conservative-mode grid with default matching settings.
    pub fn new(x_range: (f64, f64), v_range: (f64, f64), nx: usize, nv: usize, iterations: usize) -> Self {
        Self { x_range, v_range, nx, nv, iterations, attractors: None, match_tol: 1e-4, block: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for (name, (lo, hi)) in [("x_range", self.x_range), ("v_range", self.v_range)] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("{name} must satisfy lo < hi, got ({lo}, {hi})"));
            }
        }
        if self.nx < 2 || self.nv < 2 {
            return bad(format!("grid needs at least 2x2 cells, got {}x{}", self.nx, self.nv));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.match_tol > 0.0) {
            return bad(format!("match_tol must be positive, got {}", self.match_tol));
        }
        if self.block == 0 {
            return bad("block must be at least 1".into());
        }
        Ok(())
    }

    /// Initial condition at the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let dx = (self.x_range.1 - self.x_range.0) / self.nx as f64;
        let dv = (self.v_range.1 - self.v_range.0) / self.nv as f64;
        [self.x_range.0 + (i as f64 + 0.5) * dx, self.v_range.0 + (j as f64 + 0.5) * dv]
    }

    pub fn len(&self) -> usize {
        self.nx * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    PullIn,
    Escape,
    Bounded,
    Attractor(usize),
    Unresolved,
}

impl CellClass {
    pub fn label(&self) -> String {
        match self {
            CellClass::PullIn => "pull_in".into(),
            CellClass::Escape => "escape".into(),
            CellClass::Bounded => "bounded".into(),
            CellClass::Attractor(id) => format!("attractor_{id}"),
            CellClass::Unresolved => "unresolved".into(),
        }
    }

    /// Pull-in or escape.
    pub fn is_unstable(&self) -> bool {
        matches!(self, CellClass::PullIn | CellClass::Escape)
    }

    /// Raster color. Attractors 0 and 1 are blue and red, unstable cells
    /// white, unresolved gray, bounded black; further attractors cycle through
    /// green, orange, purple and teal.
    pub fn color(&self) -> [u8; 3] {
        const EXTRA: [[u8; 3]; 4] = [[0, 160, 0], [255, 140, 0], [128, 0, 128], [0, 160, 160]];
        match self {
            CellClass::Attractor(0) => [0, 0, 255],
            CellClass::Attractor(1) => [255, 0, 0],
            CellClass::Attractor(k) => EXTRA[(k - 2) % EXTRA.len()],
            CellClass::PullIn | CellClass::Escape => [255, 255, 255],
            CellClass::Unresolved => [128, 128, 128],
            CellClass::Bounded => [0, 0, 0],
        }
    }
}

/// Something about a cell worth a second look.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellNote {
    /// The integrator gave up; the cell is `Unresolved`.
    IntegratorFailure,
    /// A surviving trajectory whose maximum stayed at or below `-1/alpha`.
    NegativeBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub class: CellClass,
    /// Largest `|x|` along the trajectory; present for bounded and attractor cells.
    pub amplitude: Option<f64>,
    pub t_event: Option<f64>,
    pub note: Option<CellNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub spec: GridSpec,
    /// Row-major in `v`: cell `(i, j)` is at `j * nx + i`.
    pub cells: Vec<CellRecord>,
}

impl BasinGrid {
    pub fn cell(&self, i: usize, j: usize) -> &CellRecord {
        &self.cells[j * self.spec.nx + i]
    }

    /// Fraction of cells with the given class.
    pub fn fraction(&self, class: CellClass) -> f64 {
        self.cells.iter().filter(|c| c.class == class).count() as f64 / self.cells.len() as f64
    }

    /// Index of the cell whose rectangle contains `(x, v)`, if inside the window.
    pub fn locate(&self, x: f64, v: f64) -> Option<(usize, usize)> {
        let s = &self.spec;
        let fi = (x - s.x_range.0) / (s.x_range.1 - s.x_range.0) * s.nx as f64;
        let fj = (v - s.v_range.0) / (s.v_range.1 - s.v_range.0) * s.nv as f64;
        (fi >= 0.0 && fj >= 0.0 && fi < s.nx as f64 && fj < s.nv as f64).then(|| (fi as usize, fj as usize))
    }

    /// CSV with header `i,j,x0,v0,class,amplitude,t_event`; absent values are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,x0,v0,class,amplitude,t_event")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for j in 0..self.spec.nv {
            for i in 0..self.spec.nx {
                let c = self.cell(i, j);
                let [x0, v0] = self.spec.cell_center(i, j);
                writeln!(
                    w,
                    "{i},{j},{x0:?},{v0:?},{},{},{}",
                    c.class.label(),
                    opt(c.amplitude),
                    opt(c.t_event)
                )?;
            }
        }
        Ok(())
    }

    /// Plain PGM of the amplitude, top row at the largest `v`. Amplitudes map
    /// linearly onto `1..=255` over their observed range; cells without an
    /// amplitude are 0.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let amps = self.cells.iter().filter_map(|c| c.amplitude);
        let (lo, hi) = amps.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        writeln!(w, "P2\n{} {}\n255", self.spec.nx, self.spec.nv)?;
        for j in (0..self.spec.nv).rev() {
            let row: Vec<String> = (0..self.spec.nx)
                .map(|i| match self.cell(i, j).amplitude {
                    None => 0,
                    Some(a) if hi > lo => 1 + ((a - lo) / (hi - lo) * 254.0).round() as u32,
                    Some(_) => 255,
                })
                .map(|g| g.to_string())
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Plain PPM of the classes using [`CellClass::color`], top row at the largest `v`.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "P3\n{} {}\n255", self.spec.nx, self.spec.nv)?;
        for j in (0..self.spec.nv).rev() {
            let row: Vec<String> = (0..self.spec.nx)
                .map(|i| {
                    let [r, g, b] = self.cell(i, j).class.color();
                    format!("{r} {g} {b}")
                })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Grid classifier with the attractor cycles precomputed.
pub struct Classifier<'a> {
    it: Integrator<'a>,
    spec: &'a GridSpec,
    cycles: Vec<Vec<[f64; 2]>>,
}

impl<'a> Classifier<'a> {
    pub fn new(p: &'a ModelParams, cfg: &'a IntegratorConfig, spec: &'a GridSpec) -> Result<Self> {
        spec.validate()?;
        let it = Integrator::new(p, cfg)?;
        let mut cycles = Vec::new();
        for orbit in spec.attractors.iter().flatten() {
            let map = PoincareMapSpec::new(p.clone(), cfg.clone(), 1)?;
            cycles.push(cycle_points(&map, orbit)?);
        }
        Ok(Self { it, spec, cycles })
    }

    fn nearest_attractor(&self, s: [f64; 2]) -> Option<usize> {
        self.cycles.iter().position(|pts| {
            pts.iter().any(|q| (s[0] - q[0]).hypot(s[1] - q[1]) < self.spec.match_tol)
        })
    }

    pub fn classify(&self, s0: [f64; 2]) -> CellRecord {
        let damped = !self.cycles.is_empty();
        let period = self.it.params().period();
        let alpha = self.it.params().alpha;
        let (mut x, mut v) = (s0[0], s0[1]);
        let mut amplitude = x.abs();
        let mut max_x = x;
        let mut candidate = None;
        for k in 0..self.spec.iterations {
            let r = match self.it.one_period(x, v) {
                Ok(r) => r,
                Err(_) => {
                    return CellRecord {
                        class: CellClass::Unresolved,
                        amplitude: None,
                        t_event: None,
                        note: Some(CellNote::IntegratorFailure),
                    }
                }
            };
            amplitude = amplitude.max(r.max_abs_x);
            max_x = max_x.max(r.max_x);
            let t_event = r.kind.event_time().map(|te| k as f64 * period + te);
            match r.kind {
                OutcomeKind::PullIn(_) => {
                    return CellRecord { class: CellClass::PullIn, amplitude: None, t_event, note: None }
                }
                OutcomeKind::Escape(_) => {
                    return CellRecord { class: CellClass::Escape, amplitude: None, t_event, note: None }
                }
                OutcomeKind::Completed => {}
            }
            x = r.final_state.x;
            v = r.final_state.v;
            if damped && (k + 1) % self.spec.block == 0 {
                let hit = self.nearest_attractor([x, v]);
                if let (Some(id), Some(prev)) = (hit, candidate) {
                    if id == prev {
                        return self.survivor(CellClass::Attractor(id), amplitude, max_x, alpha);
                    }
                }
                candidate = hit;
            }
        }
        if damped {
            CellRecord { class: CellClass::Unresolved, amplitude: None, t_event: None, note: None }
        } else {
            self.survivor(CellClass::Bounded, amplitude, max_x, alpha)
        }
    }

    fn survivor(&self, class: CellClass, amplitude: f64, max_x: f64, alpha: f64) -> CellRecord {
        let note = (alpha > 0.0 && max_x <= -1.0 / alpha).then_some(CellNote::NegativeBranch);
        CellRecord { class, amplitude: Some(amplitude), t_event: None, note }
    }
}

/// Classify a single initial condition.
pub fn classify_cell(p: &ModelParams, cfg: &IntegratorConfig, spec: &GridSpec, s0: [f64; 2]) -> Result<CellRecord> {
    Ok(Classifier::new(p, cfg, spec)?.classify(s0))
}

/// Classify every cell center. Cells run in parallel on the current rayon
/// pool; the grid is assembled by cell index, so the result does not depend
/// on scheduling.
pub fn sweep(p: &ModelParams, cfg: &IntegratorConfig, spec: &GridSpec) -> Result<BasinGrid> {
    sweep_with_progress(p, cfg, spec, &|_, _| {})
}

/// [`sweep`] with `progress(done, total)` called after each finished cell.
/// Calls may arrive from several threads and out of order.
pub fn sweep_with_progress(
    p: &ModelParams,
    cfg: &IntegratorConfig,
    spec: &GridSpec,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<BasinGrid> {
    let cls = Classifier::new(p, cfg, spec)?;
    let total = spec.len();
    let done = AtomicUsize::new(0);
    let cells = (0..total)
        .into_par_iter()
        .map(|idx| {
            let rec = cls.classify(spec.cell_center(idx % spec.nx, idx / spec.nx));
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            rec
        })
        .collect();
    Ok(BasinGrid { spec: spec.clone(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poincare::find_orbit;

    #[test]
    fn cell_centers_are_sampled() {
        let g = GridSpec::new((0.0, 1.0), (-1.0, 1.0), 4, 2, 1);
        assert_eq!(g.cell_center(0, 0), [0.125, -0.5]);
        assert_eq!(g.cell_center(3, 1), [0.875, 0.5]);
    }

    #[test]
    fn free_oscillator_cells_are_bounded() {
        let p = ModelParams::graphene(0.0, 0.0, 0.0, 0.0, 1.3).unwrap();
        let cfg = IntegratorConfig::default();
        let spec = GridSpec::new((-0.1, 0.1), (-0.1, 0.1), 2, 2, 5);
        let g = sweep(&p, &cfg, &spec).unwrap();
        assert!(g.cells.iter().all(|c| c.class == CellClass::Bounded));
        // energy circle through (0.05, 0.05)
        let r = 0.05f64.hypot(0.05);
        for c in &g.cells {
            assert!((c.amplitude.unwrap() - r).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_cell_amplitude() {
        let p = ModelParams::graphene(0.0, 0.0, 0.0, 0.0, 1.3).unwrap();
        let spec = GridSpec::new((0.0, 0.2), (-0.1, 0.1), 2, 2, 3);
        let rec = classify_cell(&p, &IntegratorConfig::default(), &spec, [0.1, 0.0]).unwrap();
        assert_eq!(rec.class, CellClass::Bounded);
        assert!((rec.amplitude.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn strong_voltage_cell_pulls_in() {
        let p = ModelParams::graphene(0.0, 0.5, 2.0, 0.0, 1.3).unwrap();
        let spec = GridSpec::new((-0.1, 0.1), (-0.1, 0.1), 2, 2, 3);
        let rec = classify_cell(&p, &IntegratorConfig::default(), &spec, [0.0, 0.0]).unwrap();
        assert_eq!(rec.class, CellClass::PullIn);
        assert!(rec.amplitude.is_none());
        assert!(rec.t_event.unwrap() <= 0.8f64.sqrt());
    }

    #[test]
    fn damped_free_oscillator_has_one_global_sink() {
        let p = ModelParams::graphene(0.2, 0.5, 0.0, 0.0, 1.3).unwrap();
        let cfg = IntegratorConfig::default();
        let map = PoincareMapSpec::new(p.clone(), cfg.clone(), 1).unwrap();
        let origin = find_orbit(&map, [0.01, 0.0]).unwrap();
        let mut spec = GridSpec::new((-0.1, 0.1), (-0.1, 0.1), 3, 3, 400);
        spec.attractors = Some(vec![origin]);
        spec.block = 10;
        let g = sweep(&p, &cfg, &spec).unwrap();
        assert!(g.cells.iter().all(|c| c.class == CellClass::Attractor(0)), "{:?}", g.cells);
    }

    #[test]
    fn exports_have_expected_shape() {
        let p = ModelParams::graphene(0.0, 0.0, 0.0, 0.0, 1.3).unwrap();
        let spec = GridSpec::new((-0.1, 0.1), (-0.1, 0.1), 3, 2, 2);
        let g = sweep(&p, &IntegratorConfig::default(), &spec).unwrap();
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("i,j,x0,v0,class,amplitude,t_event\n"));
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
        let mut pgm = Vec::new();
        g.write_pgm(&mut pgm).unwrap();
        let pgm = String::from_utf8(pgm).unwrap();
        assert!(pgm.starts_with("P2\n3 2\n255\n"));
        let mut ppm = Vec::new();
        g.write_ppm(&mut ppm).unwrap();
        let ppm = String::from_utf8(ppm).unwrap();
        assert!(ppm.starts_with("P3\n3 2\n255\n"));
        assert_eq!(ppm.lines().nth(3).unwrap(), "0 0 0 0 0 0 0 0 0");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(GridSpec::new((0.1, 0.0), (0.0, 1.0), 2, 2, 1).validate().is_err());
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), 1, 2, 1).validate().is_err());
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), 2, 2, 0).validate().is_err());
    }
}
