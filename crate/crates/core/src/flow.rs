//! Time integration of `∂ₜg = −S(g)` by classical RK4.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::chern::{self, build_stack, ChernStack, DerivKind, ProbeOptions};
use crate::error::{HrfError, Result};
use crate::grid::{GridSpec, TensorField};
use crate::linalg;
use crate::metric::{self, MetricField};
use crate::models::MetricModel;

/// Where frozen shell cells take their values from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BoundaryData {
    /// Shell held at the initial metric.
    #[default]
    HoldInitial,
    /// Shell fed by the model's exact solution at each stage time.
    Exact { model: MetricModel },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticsLevel {
    /// Curvature sups, Ricci extremes, equivalence.
    #[default]
    Basic,
    /// Adds `|∇Rm|`, `|∇T|` and the pinching ratio.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// `dt = cfl·h²/sup λ_max(g⁻¹)`; also the bound for a fixed `dt`.
    pub cfl: f64,
    /// Fixed step; when absent the CFL rule is re-evaluated every step.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub boundary: BoundaryData,
    /// Smallest admissible metric eigenvalue after each stage.
    pub floor: f64,
    /// Record a diagnostics row every this many steps (0: first and last only).
    pub cadence: usize,
    /// Keep a trajectory snapshot every this many steps (0: first and last only).
    pub snapshot_every: usize,
    pub max_steps: usize,
    pub diagnostics: DiagnosticsLevel,
    pub seed: u64,
    pub pinching_samples: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            cfl: 0.1,
            dt: None,
            t_end: 0.0,
            boundary: BoundaryData::HoldInitial,
            floor: 1e-8,
            cadence: 0,
            snapshot_every: 0,
            max_steps: 1_000_000,
            diagnostics: DiagnosticsLevel::Basic,
            seed: 0x5eed,
            pinching_samples: 2000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(HrfError::Config(format!("flow.cfl = {} must lie in (0, 0.5]", self.cfl)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(HrfError::Config(format!("flow.dt = {dt} must be positive")));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(HrfError::Config(format!("flow.t_end = {} must be finite and non-negative", self.t_end)));
        }
        if !(self.floor > 0.0) {
            return Err(HrfError::Config(format!("flow.floor = {} must be positive", self.floor)));
        }
        Ok(())
    }
}

/// One point of a trajectory. The Chern stack is built on first use.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub g: MetricField,
    pub g0: Arc<MetricField>,
    stack: OnceLock<Arc<ChernStack>>,
}

impl FlowState {
    pub fn new(g0: MetricField) -> Self {
        let g0 = Arc::new(g0);
        Self { t: 0.0, g: (*g0).clone(), g0, stack: OnceLock::new() }
    }

    pub fn at(t: f64, g: MetricField, g0: Arc<MetricField>) -> Self {
        Self { t, g, g0, stack: OnceLock::new() }
    }

    pub fn grid(&self) -> &GridSpec {
        self.g.grid()
    }

    pub fn stack(&self) -> Result<Arc<ChernStack>> {
        if let Some(s) = self.stack.get() {
            return Ok(s.clone());
        }
        let s = Arc::new(build_stack(&self.g)?);
        Ok(self.stack.get_or_init(|| s).clone())
    }

    /// Drops the cached stack.
    pub fn release(&mut self) {
        self.stack = OnceLock::new();
    }
}

/// `−S(g)`.
pub fn rhs(g: &MetricField) -> Result<TensorField> {
    Ok(chern::second_ricci(g)?.scaled(-1.0))
}

/// Largest step allowed by the CFL rule for coefficient `cfl`.
pub fn cfl_limit(g: &MetricField, cfl: f64) -> f64 {
    let h = g.grid().h();
    cfl * h * h / g.max_inverse_eigenvalue()
}

fn shell_points(grid: &GridSpec) -> Vec<usize> {
    if grid.is_periodic() {
        return Vec::new();
    }
    (0..grid.npts()).filter(|&p| grid.in_shell(p)).collect()
}

/// Stateful RK4 stepper.
pub struct Stepper {
    cfg: FlowConfig,
    shell: Vec<usize>,
    g0: Arc<MetricField>,
    ws: chern::RicciWorkspace,
    k: Vec<TensorField>,
}

impl Stepper {
    pub fn new(cfg: FlowConfig, g0: Arc<MetricField>) -> Result<Self> {
        cfg.validate()?;
        if let BoundaryData::Exact { model } = &cfg.boundary {
            if !model.has_exact_solution() {
                return Err(HrfError::Config(format!("model {model:?} has no exact solution for the boundary feed")));
            }
        }
        let k = (0..4).map(|_| TensorField::zeros(*g0.grid(), &metric::METRIC_SLOTS)).collect();
        Ok(Self { shell: shell_points(g0.grid()), cfg, g0, ws: chern::RicciWorkspace::new(), k })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    fn apply_boundary(&self, g: &mut MetricField, t: f64) {
        let n = g.n();
        match &self.cfg.boundary {
            BoundaryData::HoldInitial => {
                for &p in &self.shell {
                    g.set_mat(p, &self.g0.mat(p));
                }
            }
            BoundaryData::Exact { model } => {
                let grid = *g.grid();
                for &p in &self.shell {
                    let m = model.exact(n, grid.coords(p), t).expect("checked at construction");
                    g.set_mat(p, &m);
                }
            }
        }
    }

    fn stage(&self, g: &MetricField, k: &TensorField, a: f64, t: f64) -> Result<MetricField> {
        let mut f = g.field().clone();
        f.axpy(a, k);
        let mut out = MetricField::new_unchecked(f);
        out.symmetrize();
        self.apply_boundary(&mut out, t);
        out.validate_floor(self.cfg.floor)?;
        Ok(out)
    }

    /// Step size the configuration asks for at metric `g`.
    pub fn dt_for(&self, g: &MetricField) -> Result<f64> {
        let limit = cfl_limit(g, self.cfg.cfl);
        match self.cfg.dt {
            Some(dt) if dt > limit * (1.0 + 1e-12) => Err(HrfError::Cfl { dt, limit }),
            Some(dt) => Ok(dt),
            None => Ok(limit),
        }
    }

    fn eval_rhs(&mut self, g: &MetricField, slot: usize) -> Result<()> {
        chern::second_ricci_into(g, &mut self.ws, &mut self.k[slot])?;
        self.k[slot].data_mut().iter_mut().for_each(|v| *v = -*v);
        Ok(())
    }

    /// One RK4 step of size `dt` (checked against the CFL bound).
    pub fn step(&mut self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let limit = cfl_limit(&state.g, self.cfg.cfl);
        if dt > limit * (1.0 + 1e-12) {
            return Err(HrfError::Cfl { dt, limit });
        }
        let t = state.t;
        let g = &state.g;
        self.eval_rhs(g, 0)?;
        let g2 = self.stage(g, &self.k[0], 0.5 * dt, t + 0.5 * dt)?;
        self.eval_rhs(&g2, 1)?;
        drop(g2);
        let g3 = self.stage(g, &self.k[1], 0.5 * dt, t + 0.5 * dt)?;
        self.eval_rhs(&g3, 2)?;
        drop(g3);
        let g4 = self.stage(g, &self.k[2], dt, t + dt)?;
        self.eval_rhs(&g4, 3)?;
        drop(g4);
        let mut f = g.field().clone();
        f.axpy(dt / 6.0, &self.k[0]);
        f.axpy(dt / 3.0, &self.k[1]);
        f.axpy(dt / 3.0, &self.k[2]);
        f.axpy(dt / 6.0, &self.k[3]);
        let mut out = MetricField::new_unchecked(f);
        out.symmetrize();
        self.apply_boundary(&mut out, t + dt);
        out.validate_floor(self.cfg.floor)?;
        Ok(FlowState::at(t + dt, out, self.g0.clone()))
    }
}

/// Why a run stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Halt {
    Completed,
    MaxSteps,
    Cfl { dt: f64, limit: f64 },
    Positivity { point: usize, coords: [f64; 4], eigenvalue: f64 },
}

impl Halt {
    pub fn is_breach(&self) -> bool {
        matches!(self, Halt::Cfl { .. } | Halt::Positivity { .. })
    }
}

/// One diagnostics row. Sups are over the diagnostic region of the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub sup_rm: f64,
    pub sup_t2: f64,
    pub sup_grad_rm: Option<f64>,
    pub sup_grad_t: Option<f64>,
    pub ric_lambda_min: f64,
    pub ric_lambda_max: f64,
    pub pinching: Option<f64>,
    /// `sup max(λ_max(g₀⁻¹g), λ_max(g⁻¹g₀)) − 1`
    pub equivalence: f64,
    /// `sup |g − g₀|` over all points and components.
    pub sup_dg: f64,
}

pub const DIAGNOSTICS_COLUMNS: [&str; 12] = [
    "step",
    "t",
    "dt",
    "sup_rm",
    "sup_t2",
    "sup_grad_rm",
    "sup_grad_t",
    "ric_lambda_min",
    "ric_lambda_max",
    "pinching",
    "equivalence",
    "sup_dg",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{:.17e},{:.17e},{},{:.17e},{:.17e}",
            self.step,
            self.t,
            self.dt,
            self.sup_rm,
            self.sup_t2,
            opt(self.sup_grad_rm),
            opt(self.sup_grad_t),
            self.ric_lambda_min,
            self.ric_lambda_max,
            opt(self.pinching),
            self.equivalence,
            self.sup_dg
        )
    }
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, rows: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(w, "{}", DIAGNOSTICS_COLUMNS.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Pointwise `|∇A|² + |∇̄A|²`.
pub fn full_gradient_norm_sq(stack: &ChernStack, field: &TensorField) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..field.npts()).collect();
    full_gradient_norm_sq_on(stack, field, &all)
}

/// `|∇A|² + |∇̄A|²` at `points`, in the same order.
pub fn full_gradient_norm_sq_on(stack: &ChernStack, field: &TensorField, points: &[usize]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; points.len()];
    for kind in [DerivKind::Hol, DerivKind::Anti] {
        let d = stack.nabla(field, kind)?;
        for (a, v) in acc.iter_mut().zip(metric::norm_sq_on(&d, &stack.g, points)?) {
            *a += v;
        }
    }
    Ok(acc)
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

pub fn sup_over(values: &[f64], points: &[usize]) -> f64 {
    points.iter().map(|&p| values[p]).fold(0.0, f64::max)
}

/// `sup_p max(λ_max(g₀⁻¹g), λ_max(g⁻¹g₀)) − 1` over `points`.
pub fn equivalence_excess(g: &MetricField, g0: &MetricField, points: &[usize]) -> f64 {
    let n = g.n();
    let mut worst: f64 = 0.0;
    for &p in points {
        let a = g.mat(p);
        let b = g0.mat(p);
        let up = linalg::gen_eigs(n, &a, &b).map(|e| e.1).unwrap_or(f64::INFINITY);
        let down = linalg::gen_eigs(n, &b, &a).map(|e| e.1).unwrap_or(f64::INFINITY);
        worst = worst.max(up.max(down) - 1.0);
    }
    worst
}

pub fn diagnostics(state: &FlowState, step: usize, dt: f64, cfg: &FlowConfig) -> Result<DiagnosticsRecord> {
    let stack = state.stack()?;
    let pts = state.grid().diagnostic_points();
    let g = &state.g;
    let rm = metric::norm_sq_on(&stack.rm, g, &pts)?;
    let t2 = metric::norm_sq_on(&stack.torsion, g, &pts)?;
    let ext = chern::ricci_extremes_on(&stack, &pts)?;
    let (grad_rm, grad_t, pinching) = if cfg.diagnostics == DiagnosticsLevel::Full {
        let grm = full_gradient_norm_sq_on(&stack, &stack.rm, &pts)?;
        let gt = full_gradient_norm_sq_on(&stack, &stack.torsion, &pts)?;
        let pin = chern::pinching_ratio_on(&stack, &pts, cfg.pinching_samples, cfg.seed).ok().map(|p| p.ratio);
        (Some(max_of(&grm).sqrt()), Some(max_of(&gt).sqrt()), pin)
    } else {
        (None, None, None)
    };
    Ok(DiagnosticsRecord {
        step,
        t: state.t,
        dt,
        sup_rm: max_of(&rm).sqrt(),
        sup_t2: max_of(&t2),
        sup_grad_rm: grad_rm,
        sup_grad_t: grad_t,
        ric_lambda_min: ext.global_min,
        ric_lambda_max: ext.global_max,
        pinching,
        equivalence: equivalence_excess(g, &state.g0, &pts),
        sup_dg: g.field().sub(state.g0.field()).max_abs(),
    })
}

#[derive(Debug)]
pub struct FlowRun {
    pub trajectory: Vec<FlowState>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub halt: Halt,
    pub steps: usize,
}

impl FlowRun {
    pub fn last(&self) -> &FlowState {
        self.trajectory.last().expect("trajectory holds the initial state")
    }
}

/// Advances `initial` to `cfg.t_end` or until a guard trips. Breaches are
/// reported in [`FlowRun::halt`]; the states reached so far are kept.
pub fn run(initial: FlowState, cfg: &FlowConfig) -> Result<FlowRun> {
    run_with(initial, cfg, |_| Ok(()))
}

/// As [`run`], calling `on_snapshot` for every kept snapshot as it is taken.
pub fn run_with(initial: FlowState, cfg: &FlowConfig, mut on_snapshot: impl FnMut(&FlowState) -> Result<()>) -> Result<FlowRun> {
    let mut stepper = Stepper::new(cfg.clone(), initial.g0.clone())?;
    let mut diags = vec![diagnostics(&initial, 0, 0.0, cfg)?];
    on_snapshot(&initial)?;
    let mut traj = vec![initial];
    let mut state = traj[0].clone();
    state.release();
    let mut steps = 0usize;
    let mut last_dt = 0.0;
    let halt = loop {
        if state.t >= cfg.t_end {
            break Halt::Completed;
        }
        if steps >= cfg.max_steps {
            break Halt::MaxSteps;
        }
        let mut dt = match stepper.dt_for(&state.g) {
            Ok(dt) => dt,
            Err(HrfError::Cfl { dt, limit }) => break Halt::Cfl { dt, limit },
            Err(e) => return Err(e),
        };
        if state.t + dt >= cfg.t_end {
            dt = cfg.t_end - state.t;
        }
        match stepper.step(&state, dt) {
            Ok(next) => state = next,
            Err(HrfError::NotPositive { point, coords, eigenvalue }) => {
                break Halt::Positivity { point, coords, eigenvalue }
            }
            Err(HrfError::Cfl { dt, limit }) => break Halt::Cfl { dt, limit },
            Err(e) => return Err(e),
        }
        steps += 1;
        last_dt = dt;
        let done = state.t >= cfg.t_end;
        if (cfg.cadence > 0 && steps % cfg.cadence == 0) || done {
            diags.push(diagnostics(&state, steps, dt, cfg)?);
        }
        if (cfg.snapshot_every > 0 && steps % cfg.snapshot_every == 0) || done {
            let mut snap = state.clone();
            snap.release();
            on_snapshot(&snap)?;
            traj.push(snap);
        }
        state.release();
    };
    if halt != Halt::Completed && traj.last().map(|s| s.t) != Some(state.t) {
        if let Ok(d) = diagnostics(&state, steps, last_dt, cfg) {
            diags.push(d);
        }
        on_snapshot(&state)?;
        traj.push(state);
    }
    Ok(FlowRun { trajectory: traj, diagnostics: diags, halt, steps })
}

/// Runs the same configuration with a fresh stepper and returns the final
/// state only; used where only endpoints matter.
pub fn evolve(g0: MetricField, cfg: &FlowConfig) -> Result<FlowState> {
    let mut stepper = Stepper::new(cfg.clone(), Arc::new(g0.clone()))?;
    let mut state = FlowState::new(g0);
    let mut steps = 0;
    while state.t < cfg.t_end {
        if steps >= cfg.max_steps {
            return Err(HrfError::Config(format!("flow.max_steps = {} reached before t_end", cfg.max_steps)));
        }
        let mut dt = stepper.dt_for(&state.g)?;
        if state.t + dt >= cfg.t_end {
            dt = cfg.t_end - state.t;
        }
        state = stepper.step(&state, dt)?;
        steps += 1;
    }
    Ok(state)
}

/// Default probe options for flow-side curvature probes.
pub fn probe_options(seed: u64) -> ProbeOptions {
    ProbeOptions { seed, ..ProbeOptions::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_rhs_is_zero_and_kahler_rhs_is_minus_ricci() {
        let grid = GridSpec::periodic(2, 8).unwrap();
        assert_eq!(rhs(&MetricField::identity(grid)).unwrap().max_abs(), 0.0);
        let grid = GridSpec::periodic(2, 16).unwrap();
        let g = MetricModel::KahlerPotential { id: 0, eps: 0.02 }.sample(grid).unwrap();
        let r = rhs(&g).unwrap();
        let ric = chern::first_ricci_from_det(&g).unwrap();
        let tol = chern::truncation_tolerance(&g);
        let mut diff = r.clone();
        diff.axpy(1.0, &ric);
        assert!(diff.max_abs() < tol, "{} vs {tol}", diff.max_abs());
    }

    #[test]
    fn non_kahler_rhs_differs_from_ricci() {
        // window of the N = 64 torus; 4 ghost cells cover two chained stencils
        let grid = GridSpec::window(2, 64, &[10, 20, 30, 40], &[16, 16, 16, 16]).unwrap();
        let g = MetricModel::NonKahlerPerturbed { eps: 0.1 }.sample(grid).unwrap();
        let r = rhs(&g).unwrap();
        let ric = chern::first_ricci_from_det(&g).unwrap();
        let mut diff = r.clone();
        diff.axpy(1.0, &ric);
        let core = grid.interior_points(2);
        let tol = chern::truncation_tolerance(&g);
        assert!(diff.max_abs_on(&core) > 10.0 * tol, "{} vs {tol}", diff.max_abs_on(&core));
    }

    #[test]
    fn fixed_dt_above_cfl_is_rejected() {
        let g = MetricField::identity(GridSpec::periodic(1, 16).unwrap());
        let cfg = FlowConfig { dt: Some(1.0), t_end: 1.0, ..Default::default() };
        let mut stepper = Stepper::new(cfg, Arc::new(g.clone())).unwrap();
        assert!(matches!(stepper.step(&FlowState::new(g), 1.0), Err(HrfError::Cfl { .. })));
    }

    #[test]
    fn invalid_config_names_the_field() {
        let e = FlowConfig { cfl: 0.7, ..Default::default() }.validate().unwrap_err();
        assert!(e.to_string().contains("flow.cfl"));
    }

    #[test]
    fn flat_run_is_a_fixed_point() {
        let g = MetricField::identity(GridSpec::periodic(1, 16).unwrap());
        let cfg = FlowConfig { t_end: 0.01, cadence: 5, ..Default::default() };
        let r = run(FlowState::new(g), &cfg).unwrap();
        assert_eq!(r.halt, Halt::Completed);
        assert!((r.last().t - 0.01).abs() < 1e-15);
        for d in &r.diagnostics {
            assert_eq!(d.sup_dg, 0.0);
            assert_eq!(d.sup_rm, 0.0);
        }
    }

    #[test]
    fn positivity_breach_is_a_halt_not_a_crash() {
        // huge negative curvature and a tight floor
        let grid = GridSpec::periodic(1, 16).unwrap();
        let g = MetricModel::NonKahlerPerturbed { eps: 0.4 }.sample(grid).unwrap();
        let cfg = FlowConfig { t_end: 1.0, floor: 0.9, ..Default::default() };
        let r = run(FlowState::new(g), &cfg).unwrap();
        assert!(matches!(r.halt, Halt::Positivity { .. }), "{:?}", r.halt);
        assert!(!r.trajectory.is_empty());
    }

    #[test]
    fn rescaled_step_is_bit_exact() {
        let grid = GridSpec::periodic(2, 8).unwrap();
        let g = MetricModel::NonKahlerPerturbed { eps: 0.1 }.sample(grid).unwrap();
        let cfg = FlowConfig { t_end: 1e-3, ..Default::default() };
        let a = evolve(g.clone(), &cfg).unwrap();
        let cfg4 = FlowConfig { t_end: 1e-3 / 4.0, ..Default::default() };
        let b = evolve(g.scaled(0.25), &cfg4).unwrap();
        assert_eq!(b.t * 4.0, a.t);
        assert_eq!(b.g.field().scaled(4.0), *a.g.field());
    }

    #[test]
    fn diagnostics_csv_has_stable_header() {
        let mut buf = Vec::new();
        let row = DiagnosticsRecord {
            step: 1,
            t: 0.5,
            dt: 0.1,
            sup_rm: 0.0,
            sup_t2: 0.0,
            sup_grad_rm: None,
            sup_grad_t: Some(1.0),
            ric_lambda_min: -1.0,
            ric_lambda_max: 0.0,
            pinching: None,
            equivalence: 0.0,
            sup_dg: 0.0,
        };
        write_diagnostics_csv(&mut buf, &[row]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), DIAGNOSTICS_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap().split(',').count(), DIAGNOSTICS_COLUMNS.len());
    }
}
