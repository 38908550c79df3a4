//! Run monitors for the a-priori estimates and preserved curvature
//! conditions of the flow, and the exhaustion-function utilities used to
//! build complete conformal metrics on sublevel sets.
//!
//! Every monitor produces a [`MonitorSeries`] whose verdict is a pure
//! function of its rows and rule, so a series read back from disk gives the
//! same verdict.

use std::collections::BTreeMap;
use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::chern::{self, ChernStack, DerivKind, ProbeOptions};
use crate::error::{HrfError, Result};
use crate::flow::{self, FlowState};
use crate::grid::{GridSpec, TensorField, C64};
use crate::linalg::{self, Mat, ZERO};
use crate::metric::{self, MetricField};

/// Below this the bisectional and Ricci gates treat a value as zero.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;

/// How a series is judged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Rows with `t > 0` past `skip_fraction` of the final time must stay
    /// within `factor` times their median.
    MedianBound { factor: f64, skip_fraction: f64 },
    /// Passes while no value exceeds `eps`.
    Exceedance { eps: f64 },
    /// Every value at most `bound`.
    UpperBound { bound: f64 },
    /// `value ≤ base + c₂√(k·t)` with the smallest such `c₂` at most `cap`.
    Pinching { base: f64, k: f64, cap: f64 },
    /// Strictly negative for every row with `t ≥ t1`.
    NegativeAfter { t1: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The input violates the hypotheses of the estimate; the series is reported
    /// but nothing is asserted.
    Refused,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Refused => "REFUSED",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Hypothesis {
    NotRequired,
    Verified(String),
    Failed(String),
}

/// Row flags and verdict recomputed from a series.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub counted: Vec<bool>,
    pub row_ok: Vec<bool>,
    pub verdict: Verdict,
    /// Rule-derived constant: the median, the first exceedance time or `c₂`.
    pub derived: Option<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

impl Rule {
    pub fn evaluate(&self, times: &[f64], values: &[f64]) -> Evaluation {
        let len = times.len();
        let t_last = times.last().copied().unwrap_or(0.0);
        let mut counted = vec![true; len];
        let mut row_ok = vec![true; len];
        let mut derived = None;
        match *self {
            Rule::MedianBound { factor, skip_fraction } => {
                for (c, &t) in counted.iter_mut().zip(times) {
                    *c = t > 0.0 && t >= skip_fraction * t_last;
                }
                let mut kept: Vec<f64> = values.iter().zip(&counted).filter(|(_, c)| **c).map(|(v, _)| *v).collect();
                if !kept.is_empty() {
                    let med = median(&mut kept);
                    derived = Some(med);
                    for i in 0..len {
                        row_ok[i] = !counted[i] || values[i] <= factor * med;
                    }
                }
            }
            Rule::Exceedance { eps } => {
                for i in 0..len {
                    row_ok[i] = values[i] <= eps;
                    if !row_ok[i] && derived.is_none() {
                        derived = Some(times[i]);
                    }
                }
            }
            Rule::UpperBound { bound } => {
                for i in 0..len {
                    row_ok[i] = values[i] <= bound;
                }
            }
            Rule::Pinching { base, k, cap } => {
                let mut c2: f64 = 0.0;
                for i in 0..len {
                    let excess = values[i] - base;
                    if excess > 0.0 {
                        let scale = (k * times[i]).sqrt();
                        c2 = if scale > 0.0 { c2.max(excess / scale) } else { f64::INFINITY };
                    }
                }
                derived = Some(c2);
                for i in 0..len {
                    row_ok[i] = values[i] <= base + c2.min(cap) * (k * times[i]).sqrt();
                }
            }
            Rule::NegativeAfter { t1 } => {
                for i in 0..len {
                    counted[i] = times[i] >= t1;
                    row_ok[i] = !counted[i] || values[i] < 0.0;
                }
            }
        }
        let any_counted = counted.iter().any(|&c| c);
        let all_ok = row_ok.iter().zip(&counted).all(|(ok, c)| *ok || !*c) && values.iter().all(|v| !v.is_nan());
        let verdict = if any_counted && all_ok { Verdict::Pass } else { Verdict::Fail };
        Evaluation { counted, row_ok, verdict, derived }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub rule: Rule,
    pub hypothesis: Hypothesis,
    /// Side measurements (`K`, tolerances, hypothesis probes).
    pub measured: BTreeMap<String, f64>,
}

impl MonitorSeries {
    fn new(name: &str, rule: Rule) -> Self {
        Self {
            name: name.to_string(),
            times: Vec::new(),
            values: Vec::new(),
            rule,
            hypothesis: Hypothesis::NotRequired,
            measured: BTreeMap::new(),
        }
    }

    fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(HrfError::Insufficient(format!(
                    "monitor {}: time stamps must increase strictly ({t} after {last})",
                    self.name
                )));
            }
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn evaluate(&self) -> Evaluation {
        let mut e = self.rule.evaluate(&self.times, &self.values);
        if matches!(self.hypothesis, Hypothesis::Failed(_)) {
            e.verdict = Verdict::Refused;
        }
        e
    }

    pub fn verdict(&self) -> Verdict {
        self.evaluate().verdict
    }
}

pub const MONITOR_COLUMNS: [&str; 5] = ["name", "t", "value", "counted", "row_ok"];

pub fn write_monitor_csv<W: Write>(mut w: W, series: &[MonitorSeries]) -> Result<()> {
    writeln!(w, "{}", MONITOR_COLUMNS.join(","))?;
    for s in series {
        let e = s.evaluate();
        for i in 0..s.times.len() {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{},{}",
                s.name, s.times[i], s.values[i], e.counted[i] as u8, e.row_ok[i] as u8
            )?;
        }
    }
    Ok(())
}

/// Reads `(name, times, values)` groups back from monitor CSV text, in file order.
pub fn read_monitor_csv(text: &str) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == MONITOR_COLUMNS.join(",") => {}
        other => return Err(HrfError::Format(format!("unexpected monitor CSV header {other:?}"))),
    }
    let mut out: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != MONITOR_COLUMNS.len() {
            return Err(HrfError::Format(format!("monitor CSV line {}: expected 5 cells", lineno + 2)));
        }
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| HrfError::Format(format!("monitor CSV line {}: bad number {s:?}", lineno + 2)))
        };
        let (t, v) = (num(cells[1])?, num(cells[2])?);
        match out.last_mut() {
            Some((name, ts, vs)) if name == cells[0] => {
                ts.push(t);
                vs.push(v);
            }
            _ => out.push((cells[0].to_string(), vec![t], vec![v])),
        }
    }
    Ok(out)
}

fn diag_points(state: &FlowState) -> Vec<usize> {
    state.grid().diagnostic_points()
}

/// `sup (|Rm| + |T|²)` over `points`.
pub fn curvature_bound(stack: &ChernStack, points: &[usize]) -> Result<f64> {
    let rm = metric::norm_sq_on(&stack.rm, &stack.g, points)?;
    let t2 = metric::norm_sq_on(&stack.torsion, &stack.g, points)?;
    Ok(rm.iter().zip(&t2).map(|(a, b)| a.sqrt() + b).fold(0.0, f64::max))
}

/// Points whose lattice index lies at least `margin` of the box away from
/// every face along every axis.
pub fn interior_box_points(grid: &GridSpec, margin: f64) -> Vec<usize> {
    let res = grid.res() as f64;
    (0..grid.npts())
        .filter(|&p| {
            grid.coords(p)[..grid.axes()].iter().all(|&x| {
                let x = (x * res).round() / res;
                x >= margin - 1e-12 && x <= 1.0 - margin + 1e-12
            })
        })
        .collect()
}

/// `sup |∇ᵐA|` with `∇` running over both types of derivative.
fn sup_derivative_norm(stack: &ChernStack, field: &TensorField, m: usize, points: &[usize]) -> Result<f64> {
    let mut fields = vec![field.clone()];
    for _ in 0..m {
        let mut next = Vec::with_capacity(fields.len() * 2);
        for f in &fields {
            for kind in [DerivKind::Hol, DerivKind::Anti] {
                next.push(stack.nabla(f, kind)?);
            }
        }
        fields = next;
    }
    let mut acc = vec![0.0; points.len()];
    for f in &fields {
        for (a, v) in acc.iter_mut().zip(metric::norm_sq_on(f, &stack.g, points)?) {
            *a += v;
        }
    }
    Ok(acc.into_iter().fold(0.0, f64::max).sqrt())
}

/// Series `t^{m/2}(sup|∇ᵐRm| + sup|∇ᵐT|)` over the snapshots with `t > 0`.
pub fn shi_monitor(trajectory: &[FlowState], m: usize) -> Result<MonitorSeries> {
    if !(1..=2).contains(&m) {
        return Err(HrfError::Config(format!("shi monitor order m = {m} must be 1 or 2")));
    }
    let mut s = MonitorSeries::new(&format!("shi_m{m}"), Rule::MedianBound { factor: 3.0, skip_fraction: 0.1 });
    for state in trajectory.iter().filter(|st| st.t > 0.0) {
        let stack = state.stack()?;
        let pts = diag_points(state);
        let v = sup_derivative_norm(&stack, &stack.rm, m, &pts)? + sup_derivative_norm(&stack, &stack.torsion, m, &pts)?;
        s.push(state.t, state.t.powf(m as f64 / 2.0) * v)?;
    }
    Ok(s)
}

/// Series `sup max(λ_max(g₀⁻¹g), λ_max(g⁻¹g₀)) − 1`; the derived value is
/// the first time it exceeds `eps`.
pub fn equivalence_monitor(trajectory: &[FlowState], eps: f64) -> Result<MonitorSeries> {
    let mut s = MonitorSeries::new("equivalence", Rule::Exceedance { eps });
    for state in trajectory {
        let all: Vec<usize> = (0..state.grid().npts()).collect();
        s.push(state.t, flow::equivalence_excess(&state.g, &state.g0, &all))?;
    }
    Ok(s)
}

/// Tolerance for Ricci eigenvalues relative to `g` at `points`: the metric
/// truncation tolerance there divided by `(inf λ_min(g))²`, which makes it
/// scale like the eigenvalues under `g ↦ c·g`.
pub fn ricci_tolerance(g: &MetricField, points: &[usize]) -> f64 {
    let n = g.n();
    let lmin = points.iter().map(|&p| linalg::herm_eigs(n, &g.mat(p)).0).fold(f64::INFINITY, f64::min);
    chern::truncation_tolerance_on(g, points) / (lmin * lmin)
}

/// Checks non-positive bisectional curvature at `t = 0`.
fn bisectional_gate(state: &FlowState, probe: &ProbeOptions, tol: f64, out: &mut MonitorSeries) -> Result<Option<String>> {
    let stack = state.stack()?;
    let b = chern::bisectional_sup_on(&stack, &diag_points(state), probe);
    out.measured.insert("bisectional_sup_t0".into(), b.kappa);
    let gate = tol.max(ROUNDOFF_FLOOR);
    Ok((b.kappa > gate).then(|| format!("sampled bisectional curvature {:.3e} exceeds {gate:.3e} at t = 0", b.kappa)))
}

/// Series of the largest Ricci eigenvalue relative to `g` over the
/// diagnostic region. Passes while it stays below ten times
/// [`ricci_tolerance`] of the initial metric.
pub fn preserved_ricci_monitor(trajectory: &[FlowState], probe: &ProbeOptions) -> Result<MonitorSeries> {
    let first = trajectory.first().ok_or_else(|| HrfError::Insufficient("empty trajectory".into()))?;
    let tol = ricci_tolerance(&first.g0, &diag_points(first));
    let mut s = MonitorSeries::new("preserved_ricci", Rule::UpperBound { bound: 10.0 * tol.max(ROUNDOFF_FLOOR) });
    s.measured.insert("tolerance".into(), tol);
    s.hypothesis = match bisectional_gate(first, probe, tol, &mut s)? {
        Some(why) => Hypothesis::Failed(why),
        None => Hypothesis::Verified("non-positive bisectional curvature at t = 0".into()),
    };
    for state in trajectory {
        let stack = state.stack()?;
        s.push(state.t, chern::ricci_extremes_on(&stack, &diag_points(state))?.global_max)?;
    }
    Ok(s)
}

/// Series of the sampled pinching ratio. `K = sup(|Rm| + |T|²)` at `t = 0`
/// and the derived constant is the smallest `c₂` with
/// `ratio ≤ 20 + c₂√(Kt)` on every row.
pub fn pinching_monitor(trajectory: &[FlowState], samples: usize, probe: &ProbeOptions, cap: f64) -> Result<MonitorSeries> {
    let first = trajectory.first().ok_or_else(|| HrfError::Insufficient("empty trajectory".into()))?;
    let k = curvature_bound(&*first.stack()?, &diag_points(first))?;
    let tol = ricci_tolerance(&first.g0, &diag_points(first));
    let mut s = MonitorSeries::new("pinching", Rule::Pinching { base: 20.0, k, cap });
    s.measured.insert("K".into(), k);
    s.hypothesis = match bisectional_gate(first, probe, tol, &mut s)? {
        Some(why) => Hypothesis::Failed(why),
        None => Hypothesis::Verified("non-positive bisectional curvature at t = 0".into()),
    };
    for state in trajectory {
        let stack = state.stack()?;
        let pin = chern::pinching_ratio_on(&stack, &diag_points(state), samples, probe.seed)?;
        s.push(state.t, pin.ratio)?;
    }
    Ok(s)
}

/// Series of the largest Ricci eigenvalue on the interior sub-box that
/// keeps `interior_margin` of the box clear on every side. Refuses input
/// that is not quasi-negative (Ricci non-positive everywhere, negative
/// somewhere) with non-positive bisectional curvature. `t1` defaults to
/// `0.01/K`.
pub fn quasi_negative_monitor(
    trajectory: &[FlowState],
    interior_margin: f64,
    t1: Option<f64>,
    probe: &ProbeOptions,
) -> Result<MonitorSeries> {
    if !(0.0..0.5).contains(&interior_margin) {
        return Err(HrfError::Config(format!("interior margin {interior_margin} must lie in [0, 0.5)")));
    }
    let first = trajectory.first().ok_or_else(|| HrfError::Insufficient("empty trajectory".into()))?;
    let stack0 = first.stack()?;
    let dpts = diag_points(first);
    let k = curvature_bound(&stack0, &dpts)?;
    let tol = ricci_tolerance(&first.g0, &dpts).max(ROUNDOFF_FLOOR);
    let ext = chern::ricci_extremes_on(&stack0, &dpts)?;
    let most_negative = dpts.iter().map(|&p| ext.lambda_max[p]).fold(f64::INFINITY, f64::min);
    if ext.global_max > tol {
        return Err(HrfError::Hypothesis(format!(
            "Ricci curvature is not non-positive at t = 0 (largest eigenvalue {:.3e} > {tol:.3e})",
            ext.global_max
        )));
    }
    if !(most_negative < -chern::PINCHING_RICCI_THRESHOLD) {
        return Err(HrfError::Hypothesis(format!(
            "Ricci curvature is not negative anywhere at t = 0 (most negative largest eigenvalue {most_negative:.3e})"
        )));
    }
    let t1 = t1.unwrap_or(0.01 / k);
    let mut s = MonitorSeries::new("quasi_negative", Rule::NegativeAfter { t1 });
    if let Some(why) = bisectional_gate(first, probe, tol, &mut s)? {
        return Err(HrfError::Hypothesis(why));
    }
    s.hypothesis = Hypothesis::Verified(format!(
        "Ricci <= {tol:.1e} everywhere and <= {most_negative:.3e} somewhere; bisectional curvature non-positive"
    ));
    s.measured.insert("K".into(), k);
    s.measured.insert("t1".into(), t1);
    s.measured.insert("ricci_max_t0".into(), ext.global_max);
    let inner = interior_box_points(first.grid(), interior_margin);
    if inner.is_empty() {
        return Err(HrfError::Insufficient("interior sub-box holds no grid points".into()));
    }
    for state in trajectory {
        let stack = state.stack()?;
        s.push(state.t, chern::ricci_extremes_on(&stack, &inner)?.global_max)?;
    }
    Ok(s)
}

/// Panels and Gauss–Legendre degree of the default 𝔉 quadrature.
pub const DEFAULT_PANELS: usize = 32;
const GL_DEGREE: usize = 12;

/// The cut-off `f`, bump `φ` and their product integral `𝔉` for one `κ`.
#[derive(Clone, Debug)]
pub struct ExhaustionProfile {
    kappa: f64,
    a: f64,
    b: f64,
    rule: GaussLegendre,
    /// `∫_a^{x_j} φ f'` at the panel edges `x_j`.
    edges: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ExhaustionProfile {
    pub fn new(kappa: f64) -> Result<Self> {
        Self::with_panels(kappa, DEFAULT_PANELS)
    }

    pub fn with_panels(kappa: f64, panels: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.125) {
            return Err(HrfError::Config(format!("exhaustion kappa = {kappa} must lie in (0, 1/8)")));
        }
        if panels == 0 {
            return Err(HrfError::Config("exhaustion quadrature needs at least one panel".into()));
        }
        let a = 1.0 - kappa + kappa * kappa;
        let b = 1.0 - kappa + 2.0 * kappa * kappa;
        let rule = GaussLegendre::new(NonZeroUsize::new(GL_DEGREE).expect("nonzero degree"));
        let edges: Vec<f64> = (0..=panels).map(|j| a + (b - a) * j as f64 / panels as f64).collect();
        let mut profile = Self { kappa, a, b, rule, edges, cumulative: vec![0.0] };
        let mut acc = 0.0;
        for j in 0..panels {
            acc += profile.integrate(profile.edges[j], profile.edges[j + 1]);
            profile.cumulative.push(acc);
        }
        Ok(profile)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `1 − κ + κ²`, below which `𝔉` vanishes.
    pub fn support_start(&self) -> f64 {
        self.a
    }

    /// `1 − κ + 2κ²`, above which `φ = 1`.
    pub fn plateau_start(&self) -> f64 {
        self.b
    }

    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        self.rule.integrate(lo, hi, |s| self.phi(s, 0) * self.f(s, 1))
    }

    /// `k`-th derivative of `f`, `k ≤ 3`; `+∞` at and beyond `s = 1`.
    pub fn f(&self, s: f64, k: usize) -> f64 {
        if s <= 1.0 - self.kappa {
            return 0.0;
        }
        if s >= 1.0 {
            return f64::INFINITY;
        }
        // v = 1 − u with u = (s − 1 + κ)/κ, so 1 − u² = v(2 − v)
        let v = (1.0 - s) / self.kappa;
        let w = 2.0 - v;
        let ik = 1.0 / self.kappa;
        match k {
            0 => -(v * w).ln(),
            1 => ik * (1.0 / v - 1.0 / w),
            2 => ik * ik * (1.0 / (v * v) + 1.0 / (w * w)),
            3 => ik * ik * ik * (2.0 / (v * v * v) - 2.0 / (w * w * w)),
            _ => panic!("f derivative order {k} not supported"),
        }
    }

    /// `k`-th derivative of the quintic smoothstep `φ`, `k ≤ 2`.
    pub fn phi(&self, s: f64, k: usize) -> f64 {
        let width = self.b - self.a;
        if s <= self.a {
            return 0.0;
        }
        if s >= self.b {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        let x = (s - self.a) / width;
        match k {
            0 => x * x * x * (10.0 + x * (-15.0 + 6.0 * x)),
            1 => 30.0 * x * x * (1.0 - x) * (1.0 - x) / width,
            2 => 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (width * width),
            _ => panic!("phi derivative order {k} not supported"),
        }
    }

    /// `𝔉(s) = ∫₀ˢ φ f'`.
    pub fn frak(&self, s: f64) -> f64 {
        if s <= self.a {
            return 0.0;
        }
        if s >= 1.0 {
            return f64::INFINITY;
        }
        let panels = self.edges.len() - 1;
        if s < self.b {
            let j = (((s - self.a) / (self.b - self.a)) * panels as f64).floor() as usize;
            let j = j.min(panels - 1);
            return self.cumulative[j] + self.integrate(self.edges[j], s);
        }
        self.cumulative[panels] + self.f(s, 0) - self.f(self.b, 0)
    }

    /// `𝔉^{(k)}(s)` for `k ≤ 3`.
    pub fn frak_deriv(&self, s: f64, k: usize) -> f64 {
        match k {
            0 => self.frak(s),
            1 => self.phi(s, 0) * self.f(s, 1),
            2 => self.phi(s, 1) * self.f(s, 1) + self.phi(s, 0) * self.f(s, 2),
            3 => self.phi(s, 2) * self.f(s, 1) + 2.0 * self.phi(s, 1) * self.f(s, 2) + self.phi(s, 0) * self.f(s, 3),
            _ => panic!("frak derivative order {k} not supported"),
        }
    }

    /// Dense sample of `[0, 1)`: uniform, refined on `[1 − 2κ, 1)` and
    /// geometric towards `s = 1`.
    pub fn dense_samples(&self, per_segment: usize) -> Vec<f64> {
        let mut s: Vec<f64> = (0..per_segment).map(|i| i as f64 / per_segment as f64).collect();
        let lo = 1.0 - 2.0 * self.kappa;
        s.extend((0..per_segment).map(|i| lo + 2.0 * self.kappa * i as f64 / per_segment as f64));
        s.extend((0..per_segment).map(|i| self.a + (self.b - self.a) * i as f64 / per_segment as f64));
        s.extend((0..=120).map(|j| 1.0 - self.kappa * 10f64.powf(-(j as f64) / 10.0)));
        s.retain(|&x| (0.0..1.0).contains(&x));
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// Largest change of `𝔉` over `samples` when the panel count doubles.
    pub fn refinement_change(&self, samples: &[f64]) -> Result<f64> {
        let fine = Self::with_panels(self.kappa, 2 * (self.edges.len() - 1))?;
        Ok(samples
            .iter()
            .filter(|&&s| s < 1.0)
            .map(|&s| (self.frak(s) - fine.frak(s)).abs())
            .fold(0.0, f64::max))
    }
}

/// Sampled checks of the exhaustion profile for one `κ`.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    pub kappa: f64,
    pub samples: usize,
    /// `max |𝔉|` on `[0, 1 − κ + κ²]`; zero by construction.
    pub zero_region_max: f64,
    /// `min 𝔉'` over the sample.
    pub min_derivative: f64,
    /// `max φ'·κ²`, at most 2.
    pub max_phi_slope: f64,
    /// `sup e^{−k𝔉}|𝔉^{(k)}|` for `k = 1, 2, 3`.
    pub weighted_sup: [f64; 3],
    /// `sup (e^{𝔉(s+τ)−𝔉(s−τ)} − 1)/κ` with `τ = κ(1 − s)/4`, `s ∈ (1 − 2κ, 1)`.
    pub c2: f64,
    /// `inf τ e^{𝔉(s−τ)}/κ²` over the same `s`.
    pub c3: f64,
    pub quadrature_change: f64,
}

impl ProfileReport {
    /// 𝔉 vanishes below the support, is non-decreasing, the slope bound
    /// holds, every weighted sup is finite and the quadrature is converged to `1e-8`.
    pub fn holds(&self) -> bool {
        self.zero_region_max == 0.0
            && self.min_derivative >= 0.0
            && self.max_phi_slope <= 2.0
            && self.weighted_sup.iter().all(|v| v.is_finite())
            && self.c2.is_finite()
            && self.c3 > 0.0
            && self.quadrature_change < 1e-8
    }
}

pub fn profile_report(profile: &ExhaustionProfile, per_segment: usize) -> Result<ProfileReport> {
    let kappa = profile.kappa;
    let samples = profile.dense_samples(per_segment);
    let mut zero_region_max: f64 = 0.0;
    let mut min_derivative = f64::INFINITY;
    let mut max_phi_slope: f64 = 0.0;
    let mut weighted = [0.0f64; 3];
    let mut c2: f64 = 0.0;
    let mut c3 = f64::INFINITY;
    for &s in &samples {
        let big = profile.frak(s);
        if s <= profile.a {
            zero_region_max = zero_region_max.max(big.abs());
        }
        min_derivative = min_derivative.min(profile.frak_deriv(s, 1));
        max_phi_slope = max_phi_slope.max(profile.phi(s, 1) * kappa * kappa);
        for (k, w) in weighted.iter_mut().enumerate() {
            let k = k + 1;
            let d = profile.frak_deriv(s, k);
            let v = if d == 0.0 { 0.0 } else { (-(k as f64) * big).exp() * d.abs() };
            *w = w.max(v);
        }
        if s > 1.0 - 2.0 * kappa {
            let tau = kappa * (1.0 - s) / 4.0;
            let lo = profile.frak(s - tau);
            c2 = c2.max(((profile.frak(s + tau) - lo).exp() - 1.0) / kappa);
            c3 = c3.min(tau * lo.exp() / (kappa * kappa));
        }
    }
    Ok(ProfileReport {
        kappa,
        samples: samples.len(),
        zero_region_max,
        min_derivative,
        max_phi_slope,
        weighted_sup: weighted,
        c2,
        c3,
        quadrature_change: profile.refinement_change(&samples)?,
    })
}

pub const PROFILE_COLUMNS: [&str; 10] = ["s", "f", "phi", "F", "dF", "d2F", "d3F", "w1", "w2", "w3"];

/// Tabulates the profile at `samples` as CSV.
pub fn write_profile_table<W: Write>(mut w: W, profile: &ExhaustionProfile, samples: &[f64]) -> Result<()> {
    writeln!(w, "{}", PROFILE_COLUMNS.join(","))?;
    for &s in samples {
        let big = profile.frak(s);
        let d: Vec<f64> = (1..=3).map(|k| profile.frak_deriv(s, k)).collect();
        let weighted: Vec<f64> =
            (0..3).map(|k| if d[k] == 0.0 { 0.0 } else { (-((k + 1) as f64) * big).exp() * d[k] }).collect();
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            s,
            profile.f(s, 0),
            profile.phi(s, 0),
            big,
            d[0],
            d[1],
            d[2],
            weighted[0],
            weighted[1],
            weighted[2]
        )?;
    }
    Ok(())
}

/// `ρ = √(1 + L²|z − c|²)` on `ℂⁿ`, an exhaustion with bounded `|∂ρ|²` and
/// `|√−1∂∂̄ρ|` for the flat metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialExhaustion {
    pub center: [f64; 4],
    pub scale: f64,
}

impl RadialExhaustion {
    fn w(&self, n: usize, x: [f64; 4]) -> [C64; 2] {
        let mut w = [ZERO; 2];
        for (i, wi) in w.iter_mut().enumerate().take(n) {
            *wi = C64::new(x[2 * i] - self.center[2 * i], x[2 * i + 1] - self.center[2 * i + 1]) * self.scale;
        }
        w
    }

    pub fn rho(&self, n: usize, x: [f64; 4]) -> f64 {
        let w = self.w(n, x);
        (1.0 + w.iter().take(n).map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `∂_i ρ`.
    pub fn d_rho(&self, n: usize, x: [f64; 4]) -> [C64; 2] {
        let w = self.w(n, x);
        let rho = self.rho(n, x);
        let mut out = [ZERO; 2];
        for i in 0..n {
            out[i] = w[i].conj() * (self.scale / (2.0 * rho));
        }
        out
    }

    /// `∂_i∂_{j̄} ρ`.
    pub fn ddbar_rho(&self, n: usize, x: [f64; 4]) -> Mat {
        let w = self.w(n, x);
        let rho = self.rho(n, x);
        let l2 = self.scale * self.scale;
        let mut m = linalg::zero();
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { 1.0 / (2.0 * rho) } else { 0.0 };
                m[i][j] = (C64::new(delta, 0.0) - w[i].conj() * w[j] / (4.0 * rho * rho * rho)) * l2;
            }
        }
        m
    }

    pub fn sample(&self, grid: GridSpec) -> TensorField {
        let n = grid.n();
        TensorField::scalar_from_fn(grid, |x| C64::new(self.rho(n, x), 0.0))
    }

    /// `|∂ρ|² + |√−1∂∂̄ρ|` for the flat metric, the norm of the Hessian
    /// taken as its Frobenius norm.
    pub fn flat_bound_at(&self, n: usize, x: [f64; 4]) -> f64 {
        let d = self.d_rho(n, x);
        let h = self.ddbar_rho(n, x);
        let grad: f64 = d.iter().take(n).map(|c| c.norm_sqr()).sum();
        let mut hess = 0.0;
        for row in h.iter().take(n) {
            for c in row.iter().take(n) {
                hess += c.norm_sqr();
            }
        }
        grad + hess.sqrt()
    }
}

/// `|Rm(h)| + |T(h)|²` for `h = e^{2F}δ` from `F`, `∂F` and `∂∂̄F` at a
/// point: `|Rm| = 2√n e^{−2F}|∂∂̄F|`, `|T|² = 8(n − 1)e^{−2F}|∂F|²`.
pub fn conformal_flat_curvature(n: usize, big_f: f64, df: &[C64; 2], ddf: &Mat) -> f64 {
    let mut hess = 0.0;
    for row in ddf.iter().take(n) {
        for c in row.iter().take(n) {
            hess += c.norm_sqr();
        }
    }
    let grad: f64 = df.iter().take(n).map(|c| c.norm_sqr()).sum();
    let e = (-2.0 * big_f).exp();
    2.0 * (n as f64).sqrt() * e * hess.sqrt() + 8.0 * (n as f64 - 1.0) * e * grad
}

/// `h = e^{2F}g₀` with `F = 𝔉(ρ/ρ₀)` on a grid lying inside `{ρ < ρ₀}`.
pub fn conformal_metric(g0: &MetricField, profile: &ExhaustionProfile, rho: &TensorField, rho0: f64) -> Result<MetricField> {
    if rho.grid() != g0.grid() || rho.rank() != 0 {
        return Err(HrfError::Shape("rho must be a scalar field on the metric's grid".into()));
    }
    let mut field = g0.field().clone();
    let npts = rho.npts();
    let mut factor = vec![0.0; npts];
    for (p, fp) in factor.iter_mut().enumerate() {
        let r = rho.comp(0)[p].re;
        if !(r >= 1.0) {
            return Err(HrfError::Config(format!("exhaustion function must be >= 1, got {r} at point {p}")));
        }
        if !(r < rho0) {
            return Err(HrfError::Config(format!(
                "grid point {p} has rho = {r} outside the sublevel set rho < rho0 = {rho0}"
            )));
        }
        *fp = (2.0 * profile.frak(r / rho0)).exp();
    }
    for c in 0..field.ncomp() {
        for (v, f) in field.comp_mut(c).iter_mut().zip(&factor) {
            *v *= *f;
        }
    }
    MetricField::new(field)
}

/// Outcome of comparing `sup(|Rm(h)| + |T(h)|²)` with `2K₀`.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureCheck {
    pub sup: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Discrete route: builds the Chern stack of `h` and takes the sup over `points`.
pub fn exhaustion_curvature_check(h: &MetricField, k0: f64, points: &[usize]) -> Result<CurvatureCheck> {
    let stack = chern::build_stack(h)?;
    let sup = curvature_bound(&stack, points)?;
    Ok(CurvatureCheck { sup, bound: 2.0 * k0, pass: sup <= 2.0 * k0 })
}

/// Semi-analytic route for the flat base and a [`RadialExhaustion`]:
/// `sup(|Rm(h)| + |T(h)|²)` over `{ρ < ρ₀}` from the closed forms, sampled
/// along a ray (the data are `U(n)`-invariant).
pub fn flat_exhaustion_sup(profile: &ExhaustionProfile, radial: &RadialExhaustion, n: usize, rho0: f64, samples: &[f64]) -> f64 {
    let mut sup: f64 = 0.0;
    for &s in samples {
        if s <= profile.support_start() || s * rho0 < 1.0 {
            continue;
        }
        let r = ((s * rho0).powi(2) - 1.0).sqrt() / radial.scale;
        let mut x = radial.center;
        x[0] += r;
        let d_rho = radial.d_rho(n, x);
        let dd_rho = radial.ddbar_rho(n, x);
        let f1 = profile.frak_deriv(s, 1);
        let f2 = profile.frak_deriv(s, 2);
        let mut df = [ZERO; 2];
        let mut ddf = linalg::zero();
        for i in 0..n {
            df[i] = d_rho[i] * (f1 / rho0);
            for j in 0..n {
                ddf[i][j] = d_rho[i] * d_rho[j].conj() * (f2 / (rho0 * rho0)) + dd_rho[i][j] * (f1 / rho0);
            }
        }
        sup = sup.max(conformal_flat_curvature(n, profile.frak(s), &df, &ddf));
    }
    sup
}

/// `K₀` for the flat base: `sup(|∂ρ|² + |√−1∂∂̄ρ|)` along a ray out to
/// `ρ = rho_max` (the curvature term vanishes).
pub fn flat_k0(radial: &RadialExhaustion, n: usize, rho_max: f64) -> f64 {
    let r_max = (rho_max * rho_max - 1.0).max(0.0).sqrt() / radial.scale;
    (0..=4000)
        .map(|i| {
            let mut x = radial.center;
            x[0] += r_max * i as f64 / 4000.0;
            radial.flat_bound_at(n, x)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub kappa: f64,
    pub n: usize,
    pub k0: f64,
    /// Smallest `ρ₀` found by bisection with `sup ≤ 2K₀`.
    pub rho0: f64,
    pub sup_at_threshold: f64,
    /// `(ρ₀, sup)` at multiples of the threshold.
    pub beyond: Vec<(f64, f64)>,
}

impl ThresholdReport {
    pub fn holds_beyond(&self) -> bool {
        self.beyond.iter().all(|&(_, s)| s <= 2.0 * self.k0)
    }
}

/// Bisects over `ρ₀` for the first value where the conformal flat metric
/// satisfies `sup(|Rm| + |T|²) ≤ 2K₀`, then re-checks at multiples of it.
pub fn flat_threshold(profile: &ExhaustionProfile, radial: &RadialExhaustion, n: usize, per_segment: usize) -> Result<ThresholdReport> {
    let samples = profile.dense_samples(per_segment);
    let k0 = flat_k0(radial, n, 1e6);
    let passes = |r0: f64| flat_exhaustion_sup(profile, radial, n, r0, &samples) <= 2.0 * k0;
    let mut hi = 2.0;
    while !passes(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(HrfError::Insufficient("no rho0 below 1e12 meets the curvature bound".into()));
        }
    }
    let mut lo = hi / 2.0;
    if passes(lo) {
        lo = 1.0;
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let beyond = [1.0, 1.5, 2.0, 4.0, 16.0, 256.0]
        .iter()
        .map(|m| (hi * m, flat_exhaustion_sup(profile, radial, n, hi * m, &samples)))
        .collect();
    Ok(ThresholdReport {
        kappa: profile.kappa,
        n,
        k0,
        rho0: hi,
        sup_at_threshold: flat_exhaustion_sup(profile, radial, n, hi, &samples),
        beyond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;
    use crate::models::MetricModel;

    fn profile(kappa: f64) -> ExhaustionProfile {
        ExhaustionProfile::new(kappa).unwrap()
    }

    #[test]
    fn kappa_out_of_range_is_rejected() {
        for k in [0.0, -0.1, 0.125, 0.5, f64::NAN] {
            assert!(matches!(ExhaustionProfile::new(k), Err(HrfError::Config(_))), "{k}");
        }
    }

    #[test]
    fn profile_vanishes_below_support_and_is_monotone() {
        for kappa in [1.0 / 16.0, 1.0 / 32.0] {
            let p = profile(kappa);
            let r = profile_report(&p, 4000).unwrap();
            assert!(r.holds(), "{r:?}");
            assert_eq!(p.frak(p.support_start()), 0.0);
            assert!(p.frak(p.plateau_start()) > 0.0);
        }
    }

    #[test]
    fn shifted_ratio_constants_are_near_their_limits() {
        let r = profile_report(&profile(1.0 / 16.0), 4000).unwrap();
        // τ e^{𝔉(s−τ)} → κ²·e^{𝔉(b)−f(b)}/8 and e^{Δ𝔉} − 1 → κ/2 as s → 1
        assert!(r.c2 > 0.4 && r.c2 < 1.0, "{}", r.c2);
        assert!(r.c3 > 0.05 && r.c3 < 0.2, "{}", r.c3);
    }

    #[test]
    fn derivatives_match_finite_differences_of_the_integral() {
        let p = profile(1.0 / 16.0);
        let d = 1e-6;
        let a = p.support_start();
        let b = p.plateau_start();
        for s in [a + 0.3 * (b - a), a + 0.7 * (b - a), 0.97, 0.99] {
            let fd = (p.frak(s + d) - p.frak(s - d)) / (2.0 * d);
            assert!((fd - p.frak_deriv(s, 1)).abs() < 1e-6 * (1.0 + fd.abs()), "s={s}: {fd} vs {}", p.frak_deriv(s, 1));
            for k in 1..3 {
                let fd = (p.frak_deriv(s + d, k) - p.frak_deriv(s - d, k)) / (2.0 * d);
                let an = p.frak_deriv(s, k + 1);
                assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "s={s} k={k}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn quadrature_refinement_is_below_1e_8() {
        let p = profile(1.0 / 32.0);
        assert!(p.refinement_change(&p.dense_samples(2000)).unwrap() < 1e-8);
    }

    #[test]
    fn radial_derivatives_match_finite_differences() {
        let rad = RadialExhaustion { center: [0.5, 0.5, 0.4, 0.6], scale: 3.0 };
        let n = 2;
        let x = [0.71, 0.36, 0.52, 0.44];
        let d = 1e-5;
        let bump = |x: [f64; 4], a: usize, s: f64| {
            let mut y = x;
            y[a] += s;
            y
        };
        // ∂_i = (∂_x − i∂_y)/2
        let dz = |f: &dyn Fn([f64; 4]) -> C64, x: [f64; 4], i: usize| {
            let fx = (f(bump(x, 2 * i, d)) - f(bump(x, 2 * i, -d))) / (2.0 * d);
            let fy = (f(bump(x, 2 * i + 1, d)) - f(bump(x, 2 * i + 1, -d))) / (2.0 * d);
            (fx - C64::i() * fy) * 0.5
        };
        let rho = |x: [f64; 4]| C64::new(rad.rho(n, x), 0.0);
        let an = rad.d_rho(n, x);
        for i in 0..n {
            assert!((dz(&rho, x, i) - an[i]).norm() < 1e-8);
        }
        let hess = rad.ddbar_rho(n, x);
        for i in 0..n {
            for j in 0..n {
                let dj = |y: [f64; 4]| rad.d_rho(n, y)[i];
                // ∂_{j̄} of ∂_i ρ
                let fx = (dj(bump(x, 2 * j, d)) - dj(bump(x, 2 * j, -d))) / (2.0 * d);
                let fy = (dj(bump(x, 2 * j + 1, d)) - dj(bump(x, 2 * j + 1, -d))) / (2.0 * d);
                let num = (fx + C64::i() * fy) * 0.5;
                assert!((num - hess[i][j]).norm() < 1e-7, "{i}{j}: {num} vs {}", hess[i][j]);
            }
        }
        // K₀ of the flat base is attained at the centre: √n/2·L²
        let k0 = flat_k0(&rad, n, 1e3);
        assert!((k0 - 9.0 * 2f64.sqrt() / 2.0).abs() < 1e-9, "{k0}");
    }

    #[test]
    fn conformal_closed_form_matches_the_chern_stack() {
        // smooth periodic conformal factor, both routes
        let grid = GridSpec::periodic(2, 24).unwrap();
        let tau = std::f64::consts::TAU;
        let big_f = |x: [f64; 4]| 0.1 * (tau * x[0]).sin() * (tau * x[3]).cos() + 0.05 * (tau * x[1]).cos();
        let h = MetricField::from_fn(grid.clone(), |x| linalg::scale(2, &linalg::identity(2), (2.0 * big_f(x)).exp())).unwrap();
        let stack = chern::build_stack(&h).unwrap();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for p in (0..grid.npts()).step_by(37) {
            let x = grid.coords(p);
            // F_x, F_y by axis, then ∂_i = (∂_x − i∂_y)/2
            let g0 = [
                0.1 * tau * (tau * x[0]).cos() * (tau * x[3]).cos(),
                -0.05 * tau * (tau * x[1]).sin(),
                0.0,
                -0.1 * tau * (tau * x[0]).sin() * (tau * x[3]).sin(),
            ];
            let mut hxx = [[0.0; 4]; 4];
            hxx[0][0] = -0.1 * tau * tau * (tau * x[0]).sin() * (tau * x[3]).cos();
            hxx[1][1] = -0.05 * tau * tau * (tau * x[1]).cos();
            hxx[3][3] = -0.1 * tau * tau * (tau * x[0]).sin() * (tau * x[3]).cos();
            hxx[0][3] = -0.1 * tau * tau * (tau * x[0]).cos() * (tau * x[3]).sin();
            hxx[3][0] = hxx[0][3];
            let mut df = [ZERO; 2];
            let mut ddf = linalg::zero();
            for i in 0..2 {
                df[i] = C64::new(g0[2 * i], -g0[2 * i + 1]) * 0.5;
                for j in 0..2 {
                    // ∂_i∂_{j̄} = ¼(∂_{x_i} − i∂_{y_i})(∂_{x_j} + i∂_{y_j})
                    let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
                    ddf[i][j] = C64::new(hxx[xi][xj] + hxx[yi][yj], hxx[xi][yj] - hxx[yi][xj]) * 0.25;
                }
            }
            let closed = conformal_flat_curvature(2, big_f(x), &df, &ddf);
            let discrete = curvature_bound(&stack, &[p]).unwrap();
            worst = worst.max((closed - discrete).abs());
            scale = scale.max(closed);
        }
        assert!(scale > 0.5, "{scale}");
        assert!(worst < 1e-3 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn conformal_metric_is_the_identity_where_the_profile_vanishes() {
        let grid = GridSpec::periodic(1, 16).unwrap();
        let rad = RadialExhaustion { center: [0.5, 0.5, 0.0, 0.0], scale: 1.0 };
        let rho = rad.sample(grid.clone());
        let g0 = MetricField::identity(grid);
        let p = profile(1.0 / 16.0);
        let h = conformal_metric(&g0, &p, &rho, 10.0).unwrap();
        assert_eq!(h, g0);
        assert!(matches!(conformal_metric(&g0, &p, &rho, 1.1), Err(HrfError::Config(_))));
    }

    #[test]
    fn flat_threshold_exists_and_bound_holds_beyond_it() {
        let rad = RadialExhaustion { center: [0.5; 4], scale: 1.0 };
        for kappa in [1.0 / 16.0, 1.0 / 32.0] {
            let r = flat_threshold(&profile(kappa), &rad, 2, 2000).unwrap();
            assert!(r.rho0 > 1.0 && r.rho0.is_finite(), "{r:?}");
            assert!(r.holds_beyond(), "{r:?}");
            // far out the conformal factor flattens
            assert!(r.beyond.last().unwrap().1 < r.sup_at_threshold);
        }
    }

    #[test]
    fn rules_are_pure_functions_of_the_series() {
        let t = [0.0, 0.1, 0.2, 0.3, 0.4];
        let e = Rule::MedianBound { factor: 3.0, skip_fraction: 0.1 }.evaluate(&t, &[9.0, 1.0, 1.0, 2.0, 1.5]);
        assert_eq!(e.verdict, Verdict::Pass);
        assert_eq!(e.counted, vec![false, true, true, true, true]);
        let e = Rule::MedianBound { factor: 3.0, skip_fraction: 0.1 }.evaluate(&t, &[0.0, 1.0, 1.0, 9.0, 1.5]);
        assert_eq!(e.verdict, Verdict::Fail);
        let e = Rule::Exceedance { eps: 0.5 }.evaluate(&t, &[0.0, 0.2, 0.6, 0.7, 0.1]);
        assert_eq!((e.verdict, e.derived), (Verdict::Fail, Some(0.2)));
        let e = Rule::Pinching { base: 20.0, k: 1.0, cap: 100.0 }.evaluate(&t, &[1.0, 21.0, 1.0, 1.0, 1.0]);
        assert_eq!(e.verdict, Verdict::Pass);
        assert!((e.derived.unwrap() - 1.0 / 0.1f64.sqrt()).abs() < 1e-12);
        let e = Rule::Pinching { base: 20.0, k: 1.0, cap: 100.0 }.evaluate(&t, &[21.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(e.verdict, Verdict::Fail);
        let e = Rule::NegativeAfter { t1: 0.15 }.evaluate(&t, &[0.0, 0.0, -1e-9, -1.0, -2.0]);
        assert_eq!(e.verdict, Verdict::Pass);
    }

    #[test]
    fn monitor_csv_round_trips_to_the_same_verdict() {
        let mut s = MonitorSeries::new("x", Rule::UpperBound { bound: 1.0 });
        for (t, v) in [(0.0, 0.5), (0.25, 0.9), (0.5, 1.0 + 1e-15)] {
            s.push(t, v).unwrap();
        }
        let mut buf = Vec::new();
        write_monitor_csv(&mut buf, &[s.clone()]).unwrap();
        let back = read_monitor_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].1, s.times);
        assert_eq!(back[0].2, s.values);
        assert_eq!(s.rule.evaluate(&back[0].1, &back[0].2), s.evaluate());
        assert!(s.push(0.5, 0.0).is_err());
    }

    fn flat_trajectory(n: usize) -> Vec<FlowState> {
        let grid = GridSpec::periodic(n, 8).unwrap();
        let cfg = FlowConfig { t_end: 1e-3, snapshot_every: 2, ..Default::default() };
        flow::run(FlowState::new(MetricField::identity(grid)), &cfg).unwrap().trajectory
    }

    #[test]
    fn flat_monitors() {
        let traj = flat_trajectory(2);
        let shi = shi_monitor(&traj, 1).unwrap();
        assert!(shi.values.iter().all(|&v| v == 0.0));
        assert_eq!(shi.verdict(), Verdict::Pass);
        let eq = equivalence_monitor(&traj, 0.1).unwrap();
        assert!(eq.values.iter().all(|&v| v == 0.0));
        let ric = preserved_ricci_monitor(&traj, &ProbeOptions::default()).unwrap();
        assert_eq!(ric.verdict(), Verdict::Pass);
        assert!(matches!(
            quasi_negative_monitor(&traj, 0.25, None, &ProbeOptions::default()),
            Err(HrfError::Hypothesis(_))
        ));
        assert!(matches!(
            pinching_monitor(&traj, 100, &ProbeOptions::default(), 100.0),
            Err(HrfError::NoAdmissiblePoints(_))
        ));
    }

    #[test]
    fn positive_ricci_input_is_refused() {
        // a periodic perturbation has curvature of both signs
        let grid = GridSpec::periodic(1, 64).unwrap();
        let g = MetricModel::NonKahlerPerturbed { eps: 0.2 }.sample(grid).unwrap();
        let traj = vec![FlowState::new(g)];
        let ric = preserved_ricci_monitor(&traj, &ProbeOptions { pairs_per_point: 50, ..Default::default() }).unwrap();
        assert_eq!(ric.verdict(), Verdict::Refused, "{:?}", ric.measured);
    }

    fn poincare_run(scale: f64, t_end: f64) -> Vec<FlowState> {
        let model = MetricModel::poincare_default();
        let grid = GridSpec::frozen(1, 32, 2).unwrap();
        let g0 = model.sample(grid).unwrap().scaled(scale);
        let boundary = if scale == 1.0 { flow::BoundaryData::Exact { model } } else { flow::BoundaryData::HoldInitial };
        let cfg = FlowConfig { t_end, dt: Some(2e-5 * scale), cfl: 0.5, boundary, snapshot_every: 250, ..Default::default() };
        flow::run(FlowState::new(g0), &cfg).unwrap().trajectory
    }

    #[test]
    fn poincare_monitors_match_the_einstein_oracle() {
        let traj = poincare_run(1.0, 0.05);
        let probe = ProbeOptions { pairs_per_point: 100, ..Default::default() };
        let eq = equivalence_monitor(&traj, 1.0).unwrap();
        let (t, v) = (*eq.times.last().unwrap(), *eq.values.last().unwrap());
        assert!((v - 2.0 * t).abs() < 0.01 * 2.0 * t, "{v} vs {}", 2.0 * t);
        let ric = preserved_ricci_monitor(&traj, &probe).unwrap();
        assert_eq!(ric.verdict(), Verdict::Pass);
        for (t, v) in ric.times.iter().zip(&ric.values) {
            assert!((v + 2.0 / (1.0 + 2.0 * t)).abs() < 1e-3, "t={t}: {v}");
        }
        let pin = pinching_monitor(&traj, 200, &probe, 100.0).unwrap();
        assert_eq!(pin.verdict(), Verdict::Pass);
        assert_eq!(pin.evaluate().derived, Some(0.0));
        assert_eq!(shi_monitor(&traj, 1).unwrap().verdict(), Verdict::Pass);
        let qn = quasi_negative_monitor(&traj, 0.25, None, &probe).unwrap();
        assert_eq!(qn.verdict(), Verdict::Pass);
    }

    #[test]
    fn verdicts_survive_parabolic_rescaling() {
        // both runs hold the shell so the semi-discrete systems are exact rescalings
        let probe = ProbeOptions { pairs_per_point: 100, ..Default::default() };
        let hold = |scale: f64| {
            let grid = GridSpec::frozen(1, 32, 2).unwrap();
            let g0 = MetricModel::poincare_default().sample(grid).unwrap().scaled(scale);
            let cfg = FlowConfig { t_end: 0.01 * scale, dt: Some(2e-5 * scale), cfl: 0.5, snapshot_every: 100, ..Default::default() };
            flow::run(FlowState::new(g0), &cfg).unwrap().trajectory
        };
        let (a, b) = (hold(1.0), hold(4.0));
        let (ra, rb) = (preserved_ricci_monitor(&a, &probe).unwrap(), preserved_ricci_monitor(&b, &probe).unwrap());
        assert_eq!(ra.verdict(), rb.verdict());
        if let (Rule::UpperBound { bound: x }, Rule::UpperBound { bound: y }) = (&ra.rule, &rb.rule) {
            assert!((x - 4.0 * y).abs() < 1e-9 * x);
        }
        for (va, vb) in ra.values.iter().zip(&rb.values) {
            assert!((va - 4.0 * vb).abs() < 1e-9 * va.abs());
        }
        let (pa, pb) = (pinching_monitor(&a, 200, &probe, 100.0).unwrap(), pinching_monitor(&b, 200, &probe, 100.0).unwrap());
        assert_eq!(pa.verdict(), pb.verdict());
        for (va, vb) in pa.values.iter().zip(&pb.values) {
            assert!((va - vb).abs() < 1e-9, "{va} vs {vb}");
        }
        let (ea, eb) = (equivalence_monitor(&a, 0.5).unwrap(), equivalence_monitor(&b, 0.5).unwrap());
        for (va, vb) in ea.values.iter().zip(&eb.values) {
            assert!((va - vb).abs() < 1e-9, "{va} vs {vb}");
        }
    }

    #[test]
    fn interior_box_keeps_the_middle_half() {
        let grid = GridSpec::periodic(1, 8).unwrap();
        let pts = interior_box_points(&grid, 0.25);
        // indices 2..=6 along each axis
        assert_eq!(pts.len(), 25);
    }
}
