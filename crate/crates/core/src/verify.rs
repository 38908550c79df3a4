//! Residual checks for the structure identities and evolution equations,
//! with refinement studies.
//!
//! Every check is evaluated on a *window*: a frozen sub-box of the lattice
//! padded with enough ghost cells that the values on its core equal what the
//! full periodic computation would produce. Using the same physical core box
//! at every resolution makes the residual sequences nested and comparable.

use serde::Serialize;

use crate::chern::{self, build_stack, ChernStack, DerivKind, LaplacianOrder};
use crate::error::{HrfError, Result};
use crate::flow::{FlowConfig, FlowState, Stepper};
use crate::grid::{Dir, GridSpec, Slot, TensorField, C64, STENCIL_RADIUS};
use crate::linalg::ZERO;
use crate::metric::{self, MetricField};
use crate::models::MetricModel;

/// Outcome of one residual check across resolutions.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub name: String,
    pub resolutions: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Size of the largest individual term, per resolution.
    pub scales: Vec<f64>,
    /// Observed order between successive resolutions.
    pub orders: Vec<f64>,
    /// Order from the finest pair (`None` when residuals sit at roundoff).
    pub observed_order: Option<f64>,
    pub sup_residual: f64,
    pub tolerance: f64,
    pub min_order: Option<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
    pub sub_reports: Vec<ResidualReport>,
}

/// Residuals below this are treated as roundoff when measuring order.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// `log(r_a/r_b)/log(N_b/N_a)`.
pub fn observed_order(res_a: usize, r_a: f64, res_b: usize, r_b: f64) -> f64 {
    (r_a / r_b).ln() / (res_b as f64 / res_a as f64).ln()
}

impl ResidualReport {
    pub fn new(name: &str, resolutions: Vec<usize>, residuals: Vec<f64>, scales: Vec<f64>, tolerance: f64, min_order: Option<f64>) -> Self {
        let orders: Vec<f64> = resolutions
            .windows(2)
            .zip(residuals.windows(2))
            .map(|(n, r)| observed_order(n[0], r[0], n[1], r[1]))
            .collect();
        let sup = residuals.last().copied().unwrap_or(f64::NAN);
        let at_roundoff = residuals.iter().all(|&r| r < ROUNDOFF_FLOOR);
        let observed = if at_roundoff { None } else { orders.last().copied().filter(|o| o.is_finite()) };
        let order_ok = match (min_order, observed) {
            (None, _) => true,
            (Some(_), None) => at_roundoff,
            (Some(m), Some(o)) => o >= m,
        };
        let passed = sup <= tolerance && order_ok;
        Self {
            name: name.to_string(),
            resolutions,
            residuals,
            scales,
            orders,
            observed_order: observed,
            sup_residual: sup,
            tolerance,
            min_order,
            passed,
            notes: Vec::new(),
            sub_reports: Vec::new(),
        }
    }

    /// Report whose verdict is the conjunction of its parts; residuals are the
    /// pointwise maxima.
    pub fn combine(name: &str, parts: Vec<ResidualReport>, tolerance: f64, min_order: Option<f64>) -> Self {
        let resolutions = parts.first().map(|p| p.resolutions.clone()).unwrap_or_default();
        let k = resolutions.len();
        let residuals = (0..k).map(|i| parts.iter().map(|p| p.residuals[i]).fold(0.0, f64::max)).collect();
        let scales = (0..k).map(|i| parts.iter().map(|p| p.scales[i]).fold(0.0, f64::max)).collect();
        let mut r = Self::new(name, resolutions, residuals, scales, tolerance, min_order);
        r.passed = r.passed && parts.iter().all(|p| p.passed);
        r.sub_reports = parts;
        r
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn summary_line(&self) -> String {
        let order = self.observed_order.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into());
        format!(
            "{} {}: residual {:.3e} (tol {:.1e}), order {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.sup_residual,
            self.tolerance,
            order
        )
    }
}

/// Physical core box on which residuals are measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoreBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl CoreBox {
    /// Default box of side 1/4; its corners are multiples of 1/8.
    pub fn standard() -> Self {
        Self { lo: [0.25, 0.5, 0.625, 0.125], hi: [0.5, 0.75, 0.875, 0.375] }
    }

    /// Box of side 1/8 inside [`CoreBox::standard`].
    pub fn small() -> Self {
        Self { lo: [0.25, 0.5, 0.625, 0.125], hi: [0.375, 0.625, 0.75, 0.25] }
    }

    /// Window of resolution `res` covering the box plus `ghost` cells, and the
    /// core point indices. Falls back to the whole periodic grid when the
    /// padded box would wrap around.
    pub fn window(&self, n: usize, res: usize, ghost: usize) -> Result<(GridSpec, Vec<usize>)> {
        if ghost < STENCIL_RADIUS {
            return Err(HrfError::InvalidGrid(format!("ghost depth {ghost} below stencil radius")));
        }
        let mut origin = [0i64; 4];
        let mut shape = [1usize; 4];
        let mut wraps = false;
        for a in 0..2 * n {
            let lo = self.lo[a] * res as f64;
            let hi = self.hi[a] * res as f64;
            if (lo - lo.round()).abs() > 1e-9 || (hi - hi.round()).abs() > 1e-9 || hi <= lo {
                return Err(HrfError::InvalidGrid(format!(
                    "core box axis {a} [{}, {}] is not aligned with N = {res}",
                    self.lo[a], self.hi[a]
                )));
            }
            origin[a] = lo.round() as i64 - ghost as i64;
            shape[a] = (hi.round() - lo.round()) as usize + 1 + 2 * ghost;
            wraps |= shape[a] >= res;
        }
        if wraps {
            // the padded box covers the torus: the full periodic grid is cheaper
            let grid = GridSpec::periodic(n, res)?;
            let core = grid.points_in_box(&self.lo[..2 * n], &self.hi[..2 * n]);
            return Ok((grid, core));
        }
        let grid = GridSpec::window(n, res, &origin, &shape)?;
        let core = grid.interior_points(ghost - STENCIL_RADIUS);
        Ok((grid, core))
    }
}

/// Largest modulus over `core` of `f(p, idx)` for all index tuples of length
/// `rank`; also returns the largest modulus of `scale(p, idx)`.
fn sup_expr(
    n: usize,
    rank: usize,
    core: &[usize],
    mut f: impl FnMut(usize, &[usize]) -> (C64, f64),
) -> (f64, f64) {
    let count = n.pow(rank as u32);
    let mut idx = vec![0usize; rank];
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &p in core {
        for c in 0..count {
            crate::grid::component_multi(n, rank, c, &mut idx);
            let (r, s) = f(p, &idx);
            worst = worst.max(r.norm());
            scale = scale.max(s);
        }
    }
    (worst, scale)
}

/// `R_{i j̄}{}^{l̄}{}_{k̄} = g^{p l̄} R_{i j̄ p k̄}`.
fn rm_bar_up(stack: &ChernStack, p: usize, i: usize, j: usize, l: usize, k: usize) -> C64 {
    let n = stack.n();
    let mut s = ZERO;
    for q in 0..n {
        s += stack.ginv.get(p, &[q, l]) * stack.rm.get(p, &[i, j, q, k]);
    }
    s
}

/// Analytic test fields for the commutation formulas with wavenumber `k`.
/// They are periodic on the unit torus when `k` is a multiple of `2π`.
pub fn commutation_test_fields(grid: GridSpec, k: f64) -> [TensorField; 4] {
    let mk = |slot: Slot, shift: f64| {
        TensorField::from_fn(grid, &[slot], move |x, out| {
            out[0] = C64::new((k * (x[0] + x[3]) + shift).sin(), 0.4 * (k * x[1]).cos());
            if out.len() > 1 {
                out[1] = C64::new(0.3 * (k * (x[2] - x[1]) + shift).cos(), 0.5 * (k * x[0] + 2.0 * shift).sin());
            }
        })
    };
    [mk(Slot::Up, 0.1), mk(Slot::Lo, 0.7), mk(Slot::UpBar, 1.3), mk(Slot::LoBar, 2.1)]
}

/// Wavenumber of the test fields used on windows.
pub const TEST_FIELD_WAVENUMBER: f64 = 1.0;

/// `[∇_i, ∇_{j̄}]A − (curvature term)` for the four formulas, in the order
/// vector, `(1,0)`-form, conjugate vector, `(0,1)`-form. Each entry is
/// `(sup residual, sup of the curvature term)`.
pub fn commutation_residuals(stack: &ChernStack, fields: &[TensorField; 4], core: &[usize]) -> Result<[(f64, f64); 4]> {
    let n = stack.n();
    let mut out = [(0.0, 0.0); 4];
    for (which, f) in fields.iter().enumerate() {
        let mut comm = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let a = stack.nabla_dir(&stack.nabla_dir(f, Dir::Anti(j))?, Dir::Hol(i))?;
                let b = stack.nabla_dir(&stack.nabla_dir(f, Dir::Hol(i))?, Dir::Anti(j))?;
                comm.push(a.sub(&b));
            }
        }
        out[which] = sup_expr(n, 3, core, |p, idx| {
            let (i, j, l) = (idx[0], idx[1], idx[2]);
            let lhs = comm[i * n + j].get(p, &[l]);
            let mut rhs = ZERO;
            for k in 0..n {
                rhs += match which {
                    0 => stack.rm_up.get(p, &[i, j, k, l]) * f.get(p, &[k]),
                    // here l plays k and k plays l: −R_{i j̄ l}^k a_k
                    1 => -stack.rm_up.get(p, &[i, j, l, k]) * f.get(p, &[k]),
                    2 => -rm_bar_up(stack, p, i, j, l, k) * f.get(p, &[k]),
                    _ => rm_bar_up(stack, p, i, j, k, l) * f.get(p, &[k]),
                };
            }
            (lhs - rhs, rhs.norm())
        });
    }
    Ok(out)
}

/// The five torsion-Bianchi identities (the third in both of its forms, the
/// larger residual reported). Entries are `(sup residual, sup term)`.
pub fn torsion_bianchi_residuals(stack: &ChernStack, core: &[usize]) -> Result<[(f64, f64); 5]> {
    let n = stack.n();
    let r = |p: usize, i: usize, j: usize, k: usize, l: usize| stack.rm.get(p, &[i, j, k, l]);
    // (∇̄ T)_{j̄ i k l̄}
    let dbar_t = stack.nabla(&stack.torsion_low, DerivKind::Anti)?;
    // (∇ T̄)_{i j̄ l̄ k}, T̄_{j̄ l̄ k} = conj(T_{j l k̄})
    let d_tbar = stack.nabla(&stack.torsion_low.conj(), DerivKind::Hol)?;
    let mut out = [(0.0, 0.0); 5];
    out[0] = sup_expr(n, 4, core, |p, x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let a = r(p, i, j, k, l) - r(p, k, j, i, l);
        let b = dbar_t.get(p, &[j, i, k, l]);
        (a + b, a.norm().max(b.norm()))
    });
    out[1] = sup_expr(n, 4, core, |p, x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let a = r(p, i, j, k, l) - r(p, i, l, k, j);
        let b = d_tbar.get(p, &[i, j, l, k]);
        (a + b, a.norm().max(b.norm()))
    });
    out[2] = sup_expr(n, 4, core, |p, x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let a = r(p, i, j, k, l) - r(p, k, l, i, j);
        let first = a + dbar_t.get(p, &[j, i, k, l]) + d_tbar.get(p, &[k, j, l, i]);
        let second = a + d_tbar.get(p, &[i, j, l, k]) + dbar_t.get(p, &[l, i, k, j]);
        let res = if first.norm() >= second.norm() { first } else { second };
        (res, a.norm())
    });
    drop(dbar_t);
    drop(d_tbar);
    let d_r = stack.nabla(&stack.rm, DerivKind::Hol)?;
    out[3] = sup_expr(n, 5, core, |p, x| {
        let (q, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
        let a = d_r.get(p, &[q, i, j, k, l]) - d_r.get(p, &[i, q, j, k, l]);
        let mut t = ZERO;
        for s in 0..n {
            t += stack.torsion.get(p, &[q, i, s]) * r(p, s, j, k, l);
        }
        (a + t, a.norm().max(t.norm()))
    });
    drop(d_r);
    let db_r = stack.nabla(&stack.rm, DerivKind::Anti)?;
    out[4] = sup_expr(n, 5, core, |p, x| {
        let (q, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
        let a = db_r.get(p, &[q, i, j, k, l]) - db_r.get(p, &[j, i, q, k, l]);
        let mut t = ZERO;
        for s in 0..n {
            t += stack.torsion.get(p, &[q, j, s]).conj() * r(p, i, s, k, l);
        }
        (a + t, a.norm().max(t.norm()))
    });
    Ok(out)
}

/// `−S(g)` minus the right side of the parabolic form built from the
/// reference connection. Returns `(sup residual, sup |S|)`.
pub fn parabolic_residual(stack: &ChernStack, reference: &ChernStack, core: &[usize]) -> Result<(f64, f64)> {
    let n = stack.n();
    let g = stack.g.field();
    let mut second = Vec::with_capacity(n * n);
    let mut d_hol = Vec::with_capacity(n);
    let mut d_anti = Vec::with_capacity(n);
    for k in 0..n {
        d_hol.push(reference.nabla_dir(g, Dir::Hol(k))?);
        d_anti.push(reference.nabla_dir(g, Dir::Anti(k))?);
    }
    for k in 0..n {
        for l in 0..n {
            let mut a = reference.nabla_dir(&d_anti[l], Dir::Hol(k))?;
            let b = reference.nabla_dir(&d_hol[k], Dir::Anti(l))?;
            a.axpy(1.0, &b);
            second.push(a);
        }
    }
    let gi = |p: usize, a: usize, b: usize| stack.ginv.get(p, &[a, b]);
    let gg = |p: usize, a: usize, b: usize| g.get(p, &[a, b]);
    Ok(sup_expr(n, 2, core, |p, x| {
        let (i, j) = (x[0], x[1]);
        let lhs = -stack.s.get(p, &[i, j]);
        let mut rhs = ZERO;
        for k in 0..n {
            for l in 0..n {
                let w = gi(p, k, l);
                rhs += w * 0.5 * second[k * n + l].get(p, &[i, j]);
                for pp in 0..n {
                    for q in 0..n {
                        rhs -= w * gi(p, pp, q) * d_hol[k].get(p, &[i, q]) * d_anti[l].get(p, &[pp, j]);
                    }
                }
                let mut c = ZERO;
                for pp in 0..n {
                    c += gg(p, pp, j) * reference.rm_up.get(p, &[k, l, i, pp]);
                    c += gg(p, i, pp) * reference.rm_up.get(p, &[l, k, j, pp]).conj();
                }
                rhs -= w * 0.5 * c;
            }
        }
        (lhs - rhs, lhs.norm())
    }))
}

/// Trace-of-curvature Ricci minus `−∂∂̄ log det g`.
pub fn ricci_agreement_residual(stack: &ChernStack, core: &[usize]) -> Result<(f64, f64)> {
    let det_route = chern::first_ricci_from_det(&stack.g)?;
    Ok(sup_expr(stack.n(), 2, core, |p, x| {
        let a = stack.ric.get(p, x);
        (a - det_route.get(p, x), a.norm())
    }))
}

/// `g^{p q̄}∇_p R_{i q̄ k}{}^r − ∇_i S_k{}^r + g^{p q̄}T^s_{p i} R_{s q̄ k}{}^r`.
pub fn contraction_residual(stack: &ChernStack, core: &[usize]) -> Result<(f64, f64)> {
    let n = stack.n();
    let s_up = raise_last(stack, &stack.s)?;
    let d_s = stack.nabla(&s_up, DerivKind::Hol)?;
    let d_r = stack.nabla(&stack.rm_up, DerivKind::Hol)?;
    Ok(sup_expr(n, 3, core, |p, x| {
        let (i, k, r) = (x[0], x[1], x[2]);
        let mut lhs = ZERO;
        let mut tr = ZERO;
        for a in 0..n {
            for b in 0..n {
                let w = stack.ginv.get(p, &[a, b]);
                lhs += w * d_r.get(p, &[a, i, b, k, r]);
                for s in 0..n {
                    tr += w * stack.torsion.get(p, &[a, i, s]) * stack.rm_up.get(p, &[s, b, k, r]);
                }
            }
        }
        let rhs = d_s.get(p, &[i, k, r]) - tr;
        (lhs - rhs, lhs.norm().max(rhs.norm()))
    }))
}

/// `A_k{}^r = g^{r l̄} A_{k l̄}` for a `(Lo, LoBar)` field.
fn raise_last(stack: &ChernStack, a: &TensorField) -> Result<TensorField> {
    let n = stack.n();
    let grid = *stack.grid();
    let mut out = TensorField::zeros(grid, &[Slot::Lo, Slot::Up]);
    for p in 0..grid.npts() {
        for k in 0..n {
            for r in 0..n {
                let mut v = ZERO;
                for l in 0..n {
                    v += stack.ginv.get(p, &[r, l]) * a.get(p, &[k, l]);
                }
                out.set(p, &[k, r], v);
            }
        }
    }
    Ok(out)
}

/// Ghost cells needed by the identity checks (two chained derivatives of
/// the curvature).
pub const IDENTITY_GHOST: usize = 6;

/// Per-resolution identity residuals on the core box.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityResiduals {
    pub res: usize,
    pub commutation: [(f64, f64); 4],
    pub bianchi: [(f64, f64); 5],
    pub parabolic: (f64, f64),
    pub ricci: (f64, f64),
    pub contraction: (f64, f64),
}

pub fn identity_residuals(model: &MetricModel, reference: &MetricModel, n: usize, res: usize, region: &CoreBox) -> Result<IdentityResiduals> {
    let (grid, core) = region.window(n, res, IDENTITY_GHOST)?;
    let stack = build_stack(&model.sample(grid)?)?;
    let fields = commutation_test_fields(grid, TEST_FIELD_WAVENUMBER);
    let commutation = commutation_residuals(&stack, &fields, &core)?;
    drop(fields);
    let bianchi = torsion_bianchi_residuals(&stack, &core)?;
    let ricci = ricci_agreement_residual(&stack, &core)?;
    let contraction = contraction_residual(&stack, &core)?;
    let ref_stack = build_stack(&reference.sample(grid)?)?;
    let parabolic = parabolic_residual(&stack, &ref_stack, &core)?;
    Ok(IdentityResiduals { res, commutation, bianchi, parabolic, ricci, contraction })
}

/// Settings of an identity refinement study.
#[derive(Clone, Debug)]
pub struct IdentitySuite {
    pub model: MetricModel,
    pub reference: MetricModel,
    pub n: usize,
    pub resolutions: Vec<usize>,
    pub region: CoreBox,
    pub tolerance: f64,
    pub min_order: f64,
}

impl IdentitySuite {
    pub fn standard() -> Self {
        Self {
            model: MetricModel::NonKahlerPerturbed { eps: 0.1 },
            reference: MetricModel::KahlerPotential { id: 1, eps: 0.03 },
            n: 2,
            resolutions: vec![16, 32, 64],
            region: CoreBox::standard(),
            tolerance: 1e-5,
            min_order: 3.5,
        }
    }

    pub fn run(&self) -> Result<Vec<ResidualReport>> {
        let rows = self
            .resolutions
            .iter()
            .map(|&res| identity_residuals(&self.model, &self.reference, self.n, res, &self.region))
            .collect::<Result<Vec<_>>>()?;
        let res = self.resolutions.clone();
        let tol = self.tolerance;
        let ord = Some(self.min_order);
        let series = |name: &str, get: &dyn Fn(&IdentityResiduals) -> (f64, f64)| {
            ResidualReport::new(
                name,
                res.clone(),
                rows.iter().map(|r| get(r).0).collect(),
                rows.iter().map(|r| get(r).1).collect(),
                tol,
                ord,
            )
        };
        let names = ["vector", "form", "conjugate_vector", "conjugate_form"];
        let comm: Vec<_> = (0..4).map(|i| series(&format!("commutation/{}", names[i]), &|r| r.commutation[i])).collect();
        let spread = {
            let last = &rows[rows.len() - 1].commutation;
            let hi = last.iter().map(|c| c.0).fold(0.0, f64::max);
            let lo = last.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
            hi / lo
        };
        let commutation = ResidualReport::combine("commutation", comm, tol, ord)
            .with_note(format!("finest-grid spread between the four formulas: {spread:.2}x"));
        let bianchi: Vec<_> = (0..5).map(|i| series(&format!("torsion_bianchi/{}", i + 1), &|r| r.bianchi[i])).collect();
        let bianchi = ResidualReport::combine("torsion_bianchi", bianchi, tol, ord);
        let parabolic = series("parabolic_form", &|r| r.parabolic);
        let ricci = series("ricci_two_formulas", &|r| r.ricci);
        let contraction = series("contraction_identity", &|r| r.contraction);
        Ok(vec![commutation, bianchi, parabolic, ricci, contraction])
    }
}

/// Quantity whose evolution equation is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Evolution {
    Trace,
    Psi,
    Rm,
    Ric,
    Higher,
}

impl Evolution {
    pub fn ghost(self) -> usize {
        match self {
            Evolution::Trace => 4,
            Evolution::Psi => 6,
            Evolution::Rm | Evolution::Ric => 8,
            Evolution::Higher => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Evolution::Trace => "trace",
            Evolution::Psi => "psi",
            Evolution::Rm => "rm",
            Evolution::Ric => "ric",
            Evolution::Higher => "higher",
        }
    }
}

/// Snapshot metrics restricted to a window, with the stack built lazily.
struct WindowState {
    g: MetricField,
    stack: ChernStack,
}

fn window_state(state: &FlowState, grid: GridSpec) -> Result<WindowState> {
    let g = state.g.extract_window(grid)?;
    let stack = build_stack(&g)?;
    Ok(WindowState { g, stack })
}

/// Scalar `tr_g g₀`.
fn trace_quantity(stack: &ChernStack, g0: &MetricField) -> TensorField {
    let n = stack.n();
    let grid = *stack.grid();
    TensorField::scalar_from_fn_indexed(grid, |p| {
        let mut s = ZERO;
        for i in 0..n {
            for j in 0..n {
                s += stack.ginv.get(p, &[i, j]) * g0.field().get(p, &[i, j]);
            }
        }
        s
    })
}

fn psi_norm_quantity(stack: &ChernStack, reference: &ChernStack) -> Result<TensorField> {
    let psi = chern::psi(stack, reference)?;
    let v = metric::norm_sq_field(&psi, &stack.g)?;
    Ok(TensorField::scalar_from_fn_indexed(*stack.grid(), |p| C64::new(v[p], 0.0)))
}

/// Scalar Laplacian `g^{r s̄} ∂_r ∂_{s̄} f`.
fn scalar_laplacian(stack: &ChernStack, f: &TensorField) -> Result<TensorField> {
    stack.laplacian(f, LaplacianOrder::HolAnti)
}

fn quantity(which: Evolution, ws: &WindowState, g0: &WindowState) -> Result<TensorField> {
    match which {
        Evolution::Trace => Ok(trace_quantity(&ws.stack, &g0.g)),
        Evolution::Psi => psi_norm_quantity(&ws.stack, &g0.stack),
        Evolution::Rm => Ok(ws.stack.rm.clone()),
        Evolution::Ric => Ok(ws.stack.ric.clone()),
        Evolution::Higher => ws.stack.nabla(&ws.stack.rm, DerivKind::Hol),
    }
}

/// Right side of the evolution equation at one snapshot (without `∂ₜ`).
fn evolution_rhs(which: Evolution, ws: &WindowState, g0: &WindowState, order: LaplacianOrder) -> Result<TensorField> {
    let st = &ws.stack;
    let n = st.n();
    let grid = *st.grid();
    let npts = grid.npts();
    let gi = |p: usize, a: usize, b: usize| st.ginv.get(p, &[a, b]);
    match which {
        Evolution::Trace => {
            let q = trace_quantity(st, &g0.g);
            let mut out = scalar_laplacian(st, &q)?;
            let psi = chern::psi(st, &g0.stack)?;
            for p in 0..npts {
                let mut v = ZERO;
                for k in 0..n {
                    for l in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                let w = gi(p, k, l) * gi(p, i, j);
                                for a in 0..n {
                                    for b in 0..n {
                                        v -= w * g0.g.field().get(p, &[a, b]) * psi.get(p, &[k, i, a]) * psi.get(p, &[l, j, b]).conj();
                                    }
                                }
                                v += w * g0.stack.rm.get(p, &[k, l, i, j]);
                            }
                        }
                    }
                }
                out.data_mut()[p] += v;
            }
            Ok(out)
        }
        Evolution::Psi => {
            let q = psi_norm_quantity(st, &g0.stack)?;
            let mut out = scalar_laplacian(st, &q)?;
            let psi = chern::psi(st, &g0.stack)?;
            let grad = crate::flow::full_gradient_norm_sq(st, &psi)?;
            let d_rt = st.nabla(&g0.stack.rm_up, DerivKind::Hol)?;
            for p in 0..npts {
                let mut bracket = ZERO;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                let w = gi(p, i, j) * gi(p, k, l);
                                for r in 0..n {
                                    for s in 0..n {
                                        let ws_ = w * ws.g.field().get(p, &[r, s]) * psi.get(p, &[j, l, s]).conj();
                                        let mut inner = ZERO;
                                        for a in 0..n {
                                            for b in 0..n {
                                                let h = gi(p, a, b);
                                                inner += h * d_rt.get(p, &[a, i, b, k, r]);
                                                for c in 0..n {
                                                    inner += h * st.torsion.get(p, &[a, i, c]) * st.rm_up.get(p, &[c, b, k, r]);
                                                }
                                            }
                                        }
                                        bracket += ws_ * inner;
                                    }
                                }
                            }
                        }
                    }
                }
                out.data_mut()[p] += C64::new(2.0 * bracket.re - grad[p], 0.0);
            }
            Ok(out)
        }
        Evolution::Rm => {
            let mut out = st.laplacian(&st.rm, order)?;
            let d_r = st.nabla(&st.rm, DerivKind::Hol)?;
            let db_r = st.nabla(&st.rm, DerivKind::Anti)?;
            let s_up = raise_last(st, &st.s)?; // S_i^p
            let t = |p: usize, a: usize, b: usize, c: usize| st.torsion.get(p, &[a, b, c]);
            let rm = |p: usize, a: usize, b: usize, c: usize, d: usize| st.rm.get(p, &[a, b, c, d]);
            let ru = |p: usize, a: usize, b: usize, c: usize, d: usize| st.rm_up.get(p, &[a, b, c, d]);
            let mut idx = [0usize; 4];
            let mut add = vec![ZERO; npts * n.pow(4)];
            for p in 0..npts {
                // S^{q̄}_{j̄} = g^{p q̄} S_{p j̄}, i.e. conj(S_j^q) for Hermitian S
                for c in 0..n.pow(4) {
                    crate::grid::component_multi(n, 4, c, &mut idx);
                    let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
                    let mut v = ZERO;
                    for r in 0..n {
                        for s in 0..n {
                            let w = gi(p, r, s);
                            let mut b = ZERO;
                            for a in 0..n {
                                b += t(p, r, i, a) * db_r.get(p, &[s, a, j, k, l]);
                                b += t(p, s, j, a).conj() * d_r.get(p, &[r, i, a, k, l]);
                                for q in 0..n {
                                    b += t(p, r, i, a) * t(p, s, j, q).conj() * rm(p, a, q, k, l);
                                }
                                b += ru(p, i, j, r, a) * rm(p, a, s, k, l);
                                b += ru(p, r, j, k, a) * rm(p, i, s, a, l);
                                b -= rm(p, r, j, a, l) * ru(p, i, s, k, a);
                            }
                            v += w * b;
                        }
                    }
                    let mut h = ZERO;
                    for a in 0..n {
                        h += s_up.get(p, &[i, a]) * rm(p, a, j, k, l);
                        h += s_up.get(p, &[k, a]) * rm(p, i, j, a, l);
                        h += s_bar_up(st, p, j, a) * rm(p, i, a, k, l);
                        h += s_bar_up(st, p, l, a) * rm(p, i, j, k, a);
                    }
                    v -= h * 0.5;
                    add[c * npts + p] = v;
                }
            }
            for (o, a) in out.data_mut().iter_mut().zip(add) {
                *o += a;
            }
            Ok(out)
        }
        Evolution::Ric => {
            let mut out = st.laplacian(&st.ric, order)?;
            let d_r = st.nabla(&st.ric, DerivKind::Hol)?;
            let db_r = st.nabla(&st.ric, DerivKind::Anti)?;
            let s_up = raise_last(st, &st.s)?;
            let ric_up = raise_last(st, &st.ric)?; // R_p^k
            let t = |p: usize, a: usize, b: usize, c: usize| st.torsion.get(p, &[a, b, c]);
            for p in 0..npts {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = ZERO;
                        for r in 0..n {
                            for s in 0..n {
                                let w = gi(p, r, s);
                                let mut b = ZERO;
                                for a in 0..n {
                                    b += t(p, r, i, a) * db_r.get(p, &[s, a, j]);
                                    b += t(p, s, j, a).conj() * d_r.get(p, &[r, i, a]);
                                    for q in 0..n {
                                        b += t(p, r, i, a) * t(p, s, j, q).conj() * st.ric.get(p, &[a, q]);
                                    }
                                }
                                v += w * b;
                            }
                        }
                        for k in 0..n {
                            for a in 0..n {
                                v += st.rm_up.get(p, &[i, j, k, a]) * ric_up.get(p, &[a, k]);
                            }
                        }
                        let mut h = ZERO;
                        for a in 0..n {
                            h += s_up.get(p, &[i, a]) * st.ric.get(p, &[a, j]);
                            h += s_bar_up(st, p, j, a) * st.ric.get(p, &[i, a]);
                        }
                        v -= h * 0.5;
                        let c = i * n + j;
                        out.data_mut()[c * npts + p] += v;
                    }
                }
            }
            Ok(out)
        }
        Evolution::Higher => {
            let d_r = st.nabla(&st.rm, DerivKind::Hol)?;
            st.laplacian(&d_r, order)
        }
    }
}

/// `S^{q̄}{}_{j̄} = g^{p q̄} S_{p j̄}`.
fn s_bar_up(st: &ChernStack, p: usize, j: usize, q: usize) -> C64 {
    let mut v = ZERO;
    for a in 0..st.n() {
        v += st.ginv.get(p, &[a, q]) * st.s.get(p, &[a, j]);
    }
    v
}

/// Fourth-order centred time derivative from five equally spaced values.
fn time_derivative(fields: &[TensorField], spacing: f64) -> TensorField {
    const W: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    let mut out = TensorField::zeros(*fields[0].grid(), fields[0].slots());
    for (f, w) in fields.iter().zip(W) {
        if w != 0.0 {
            out.axpy(w / (12.0 * spacing), f);
        }
    }
    out
}

/// Residual of one evolution equation from equally spaced snapshots.
#[derive(Clone, Debug, Serialize)]
pub struct EvolutionResidual {
    pub which: Evolution,
    pub res: usize,
    pub spacing: f64,
    /// Residual with time spacing `spacing`.
    pub residual: f64,
    /// Residual with spacing `2·spacing`, when nine snapshots are available.
    pub residual_double: Option<f64>,
    /// `sup |∂ₜ Q|`.
    pub scale: f64,
    /// Residual with the one-sided Laplacian `g^{r s̄}∇_r∇_{s̄}`, reported
    /// alongside when another ordering was requested for a tensor quantity.
    pub residual_one_sided: Option<f64>,
    /// Calibration constant of the schematic check (`Higher` only): the
    /// larger of the curvature and torsion constants.
    pub calibration: Option<f64>,
    pub calibration_rm: Option<f64>,
    pub calibration_t: Option<f64>,
    /// Time-residual domination flag: halving the spacing changed the
    /// residual by more than 4x.
    pub time_dominated: bool,
}

fn check_spacing(traj: &[FlowState]) -> Result<f64> {
    if traj.len() < 5 || traj.len() % 2 == 0 {
        return Err(HrfError::Insufficient(format!(
            "evolution checks need an odd number (>= 5) of equally spaced snapshots, got {}",
            traj.len()
        )));
    }
    let d = traj[1].t - traj[0].t;
    for w in traj.windows(2) {
        if ((w[1].t - w[0].t) - d).abs() > 1e-9 * d.abs().max(1e-300) {
            return Err(HrfError::Insufficient("snapshots are not equally spaced".into()));
        }
    }
    if !(d > 0.0) {
        return Err(HrfError::Insufficient("snapshot times must increase".into()));
    }
    Ok(d)
}

/// Evolution residual measured on the core box of the snapshots' lattice.
pub fn check_evolution(traj: &[FlowState], which: Evolution, region: &CoreBox, order: LaplacianOrder) -> Result<EvolutionResidual> {
    let spacing = check_spacing(traj)?;
    let grid0 = *traj[0].grid();
    if !grid0.is_periodic() {
        return Err(HrfError::InvalidGrid("evolution checks run on periodic trajectories".into()));
    }
    let (grid, core) = region.window(grid0.n(), grid0.res(), which.ghost())?;
    let g0_state = FlowState::new((*traj[0].g0).clone());
    let g0w = window_state(&g0_state, grid)?;
    let mid = traj.len() / 2;
    let mut q = Vec::with_capacity(traj.len());
    for s in traj {
        let ws = window_state(s, grid)?;
        q.push(quantity(which, &ws, &g0w)?);
    }
    let centre = window_state(&traj[mid], grid)?;
    let rhs = evolution_rhs(which, &centre, &g0w, order)?;
    let sup_diff = |dq: &TensorField| -> Result<f64> {
        let d = dq.sub(&rhs);
        if d.rank() == 0 {
            Ok(d.max_abs_on(&core))
        } else {
            Ok(metric::sup_norm_on(&d, &centre.g, &core)?)
        }
    };
    let fine = time_derivative(&q[mid - 2..=mid + 2], spacing);
    let residual = sup_diff(&fine)?;
    let scale = if fine.rank() == 0 { fine.max_abs_on(&core) } else { metric::sup_norm_on(&fine, &centre.g, &core)? };
    let residual_double = if traj.len() >= 9 {
        let picks: Vec<TensorField> = (0..5).map(|m| q[mid - 4 + 2 * m].clone()).collect();
        Some(sup_diff(&time_derivative(&picks, 2.0 * spacing))?)
    } else {
        None
    };
    let time_dominated = residual_double.map(|d| d > 4.0 * residual).unwrap_or(false);
    let residual_one_sided = if order != LaplacianOrder::HolAnti && matches!(which, Evolution::Rm | Evolution::Ric) {
        let alt = evolution_rhs(which, &centre, &g0w, LaplacianOrder::HolAnti)?;
        Some(metric::sup_norm_on(&fine.sub(&alt), &centre.g, &core)?)
    } else {
        None
    };
    let (calibration, calibration_rm, calibration_t) = if which == Evolution::Higher {
        let (crm, ct) = schematic_constants(traj, &grid, &core, spacing, &fine, &rhs, &centre)?;
        (Some(crm.max(ct)), Some(crm), Some(ct))
    } else {
        (None, None, None)
    };
    Ok(EvolutionResidual {
        which,
        res: grid0.res(),
        spacing,
        residual,
        residual_double,
        scale,
        residual_one_sided,
        calibration,
        calibration_rm,
        calibration_t,
        time_dominated,
    })
}

/// `|∇A|` over both derivative types at `points`.
fn grad_norm(st: &ChernStack, f: &TensorField, points: &[usize]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; points.len()];
    for kind in [DerivKind::Hol, DerivKind::Anti] {
        let d = st.nabla(f, kind)?;
        for (a, v) in acc.iter_mut().zip(metric::norm_sq_on(&d, &st.g, points)?) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// `|∇²A|` over all four derivative-type combinations at `points`.
fn hessian_norm(st: &ChernStack, f: &TensorField, points: &[usize]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; points.len()];
    for k1 in [DerivKind::Hol, DerivKind::Anti] {
        let d1 = st.nabla(f, k1)?;
        for k2 in [DerivKind::Hol, DerivKind::Anti] {
            let d2 = st.nabla(&d1, k2)?;
            for (a, v) in acc.iter_mut().zip(metric::norm_sq_on(&d2, &st.g, points)?) {
                *a += v;
            }
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// Looseness constants `sup|E| / sup B` of the schematic first-order
/// evolution equations for `∇Rm` and `∇T`, where `E` is the part of
/// `(∂ₜ − Δ)∇A` not written out and `B` is the pointwise sum of the norms
/// of the schematic product terms.
fn schematic_constants(
    traj: &[FlowState],
    grid: &GridSpec,
    core: &[usize],
    spacing: f64,
    dt_grad_rm: &TensorField,
    lap_grad_rm: &TensorField,
    centre: &WindowState,
) -> Result<(f64, f64)> {
    let st = &centre.stack;
    let g = &centre.g;
    let e_rm = metric::norm_sq_on(&dt_grad_rm.sub(lap_grad_rm), g, core)?;
    let mid = traj.len() / 2;
    let mut dts = Vec::with_capacity(5);
    for s in &traj[mid - 2..=mid + 2] {
        let ws = window_state(s, *grid)?;
        dts.push(ws.stack.nabla(&ws.stack.torsion, DerivKind::Hol)?);
    }
    let dt_grad_t = time_derivative(&dts, spacing);
    drop(dts);
    let grad_t_hol = st.nabla(&st.torsion, DerivKind::Hol)?;
    let lap_grad_t = st.laplacian(&grad_t_hol, LaplacianOrder::Symmetric)?;
    let e_t = metric::norm_sq_on(&dt_grad_t.sub(&lap_grad_t), g, core)?;

    let rm = metric::norm_sq_on(&st.rm, g, core)?;
    let t = metric::norm_sq_on(&st.torsion, g, core)?;
    let d_rm = grad_norm(st, &st.rm, core)?;
    let d_t = grad_norm(st, &st.torsion, core)?;
    let dd_rm = hessian_norm(st, &st.rm, core)?;
    let dd_t = hessian_norm(st, &st.torsion, core)?;
    let mut sup_e_rm: f64 = 0.0;
    let mut sup_b_rm: f64 = 0.0;
    let mut sup_e_t: f64 = 0.0;
    let mut sup_b_t: f64 = 0.0;
    for p in 0..core.len() {
        let (rm, t) = (rm[p].sqrt(), t[p].sqrt());
        let b_rm = t * dd_rm[p] + d_t[p] * d_rm[p] + 2.0 * rm * d_rm[p] + t * t * d_rm[p] + 2.0 * t * d_t[p] * rm;
        let b_t = 2.0 * t * dd_t[p] + d_t[p] * d_t[p] + t * d_rm[p] + d_t[p] * rm;
        sup_e_rm = sup_e_rm.max(e_rm[p].sqrt());
        sup_b_rm = sup_b_rm.max(b_rm);
        sup_e_t = sup_e_t.max(e_t[p].sqrt());
        sup_b_t = sup_b_t.max(b_t);
    }
    let ratio = |e: f64, b: f64| if e == 0.0 { 0.0 } else { e / b };
    Ok((ratio(sup_e_rm, sup_b_rm), ratio(sup_e_t, sup_b_t)))
}

/// Nine snapshots `t = 0, Δ, …, 8Δ` of the flow from `model` on the periodic
/// `res`-torus, with fixed step `dt = Δ` chosen from the CFL rule at `t = 0`.
pub fn evolution_trajectory(model: &MetricModel, n: usize, res: usize, cfl: f64) -> Result<Vec<FlowState>> {
    let grid = GridSpec::periodic(n, res)?;
    let g0 = model.sample(grid)?;
    let dt = 0.5 * crate::flow::cfl_limit(&g0, cfl);
    let cfg = FlowConfig { cfl, dt: Some(dt), t_end: 8.0 * dt, ..FlowConfig::default() };
    let mut state = FlowState::new(g0);
    let mut stepper = Stepper::new(cfg, state.g0.clone())?;
    let mut traj = vec![state.clone()];
    for k in 1..=8 {
        state = stepper.step(&state, dt)?;
        state.t = k as f64 * dt;
        traj.push(state.clone());
    }
    Ok(traj)
}

/// Settings of the evolution refinement study.
#[derive(Clone, Debug)]
pub struct EvolutionSuite {
    pub model: MetricModel,
    pub n: usize,
    pub resolutions: Vec<usize>,
    pub region: CoreBox,
    pub higher_region: CoreBox,
    pub cfl: f64,
    pub order: LaplacianOrder,
    pub min_order: f64,
    pub max_calibration: f64,
}

impl EvolutionSuite {
    pub fn standard() -> Self {
        Self {
            model: MetricModel::NonKahlerPerturbed { eps: 0.1 },
            n: 2,
            resolutions: vec![16, 24, 32],
            region: CoreBox::standard(),
            higher_region: CoreBox::small(),
            cfl: 0.1,
            order: LaplacianOrder::Symmetric,
            min_order: 2.0,
            max_calibration: 10.0,
        }
    }

    /// One report per evolution equation, plus the schematic check.
    pub fn run(&self, kinds: &[Evolution]) -> Result<(Vec<ResidualReport>, Vec<Vec<EvolutionResidual>>)> {
        let mut table: Vec<Vec<EvolutionResidual>> = vec![Vec::new(); kinds.len()];
        for &res in &self.resolutions {
            let traj = evolution_trajectory(&self.model, self.n, res, self.cfl)?;
            for (slot, &k) in kinds.iter().enumerate() {
                let region = if k == Evolution::Higher { &self.higher_region } else { &self.region };
                table[slot].push(check_evolution(&traj, k, region, self.order)?);
            }
        }
        let mut reports = Vec::new();
        for (slot, &k) in kinds.iter().enumerate() {
            let rows = &table[slot];
            let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
            let scales: Vec<f64> = rows.iter().map(|r| r.scale).collect();
            let mut rep = ResidualReport::new(
                &format!("evolution/{}", k.name()),
                self.resolutions.clone(),
                residuals,
                scales,
                f64::INFINITY,
                if k == Evolution::Higher { None } else { Some(self.min_order) },
            );
            if rows.iter().any(|r| r.time_dominated) {
                rep.notes.push("time differencing dominates at some resolution (halving the spacing changed the residual by more than 4x)".into());
            }
            if let Some(r) = rows.last().and_then(|r| r.residual_one_sided) {
                rep.notes.push(format!("with the one-sided Laplacian the finest residual is {r:.3e}"));
            }
            if k == Evolution::Higher {
                let c = rows.last().and_then(|r| r.calibration).unwrap_or(f64::NAN);
                rep.passed = c <= self.max_calibration;
                rep.notes.push(format!("calibration constant {c:.3} (cap {})", self.max_calibration));
            }
            reports.push(rep);
        }
        Ok((reports, table))
    }
}

/// Physical interior on which exact-solution errors are compared.
pub const ORACLE_INTERIOR: [f64; 2] = [0.125, 0.875];

/// One frozen-boundary run against a model's exact solution.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRun {
    pub res: usize,
    pub t_end: f64,
    pub steps: usize,
    /// Range of `−λ` over the interior at `t = 0`, with `Ric = λ·g` pointwise.
    pub lambda_range: (f64, f64),
    /// `sup |g − g_exact| / sup |g_exact|` over the interior at `t_end`.
    pub error: f64,
}

/// Runs `model` on the frozen `res`-grid to `t_end` with the shell fed by the
/// exact solution, and measures the interior relative error.
pub fn exact_solution_run(model: &MetricModel, n: usize, res: usize, t_end: f64, cfl: f64) -> Result<OracleRun> {
    if !model.has_exact_solution() {
        return Err(HrfError::Config(format!("model {model:?} has no exact solution")));
    }
    let grid = GridSpec::frozen(n, res, STENCIL_RADIUS)?;
    let g0 = model.sample(grid)?;
    let lo = [ORACLE_INTERIOR[0]; 4];
    let hi = [ORACLE_INTERIOR[1]; 4];
    let pts = grid.points_in_box(&lo, &hi);
    let stack = build_stack(&g0)?;
    let ext = chern::ricci_extremes_on(&stack, &pts)?;
    drop(stack);
    let cfg = FlowConfig {
        cfl,
        t_end,
        boundary: crate::flow::BoundaryData::Exact { model: model.clone() },
        ..FlowConfig::default()
    };
    let mut stepper = Stepper::new(cfg, std::sync::Arc::new(g0.clone()))?;
    let mut state = FlowState::new(g0);
    let mut steps = 0;
    while state.t < t_end {
        let mut dt = stepper.dt_for(&state.g)?;
        if state.t + dt >= t_end {
            dt = t_end - state.t;
        }
        state = stepper.step(&state, dt)?;
        steps += 1;
    }
    let exact = model
        .sample_exact(grid, state.t)
        .ok_or_else(|| HrfError::Config("exact solution unavailable".into()))??;
    let diff = state.g.field().sub(exact.field());
    let error = diff.max_abs_on(&pts) / exact.field().max_abs_on(&pts);
    Ok(OracleRun { res, t_end: state.t, steps, lambda_range: (-ext.global_max, -ext.global_min), error })
}

/// Applies the coordinate rotation `w = i z` to a periodic field: samples move
/// to the rotated lattice points and each index picks up the Jacobian phase.
pub fn rotate_quarter(field: &TensorField) -> Result<TensorField> {
    let grid = *field.grid();
    if !grid.is_periodic() {
        return Err(HrfError::InvalidGrid("quarter rotation needs a periodic grid".into()));
    }
    let n = grid.n();
    let res = grid.res();
    let npts = grid.npts();
    // phase per index: upper i, upper-barred −i, lower −i, lower-barred i
    let i = C64::new(0.0, 1.0);
    let phase = field.slots().iter().fold(C64::new(1.0, 0.0), |acc, s| {
        acc * match s {
            Slot::Up | Slot::LoBar => i,
            Slot::Lo | Slot::UpBar => -i,
        }
    });
    let mut out = TensorField::zeros(grid, field.slots());
    let mut idx = [0usize; 4];
    for p in 0..npts {
        let src = grid.multi_index(p);
        // new sample at (x', y') is the old one at (y', −x')
        for a in 0..n {
            idx[2 * a] = src[2 * a + 1];
            idx[2 * a + 1] = (res - src[2 * a]) % res;
        }
        let q = grid.linear_index(&idx);
        for c in 0..field.ncomp() {
            out.data_mut()[c * npts + p] = field.data()[c * npts + q] * phase;
        }
    }
    Ok(out)
}

/// Commutation, torsion-Bianchi and parabolic residuals on the full
/// periodic grid (used by the rotation-invariance check).
pub fn full_grid_identity_residuals(g: &MetricField, g0: &MetricField, fields: &[TensorField; 4]) -> Result<Vec<f64>> {
    let stack = build_stack(g)?;
    let all: Vec<usize> = (0..g.grid().npts()).collect();
    let mut out: Vec<f64> = commutation_residuals(&stack, fields, &all)?.iter().map(|c| c.0).collect();
    out.extend(torsion_bianchi_residuals(&stack, &all)?.iter().map(|c| c.0));
    let ref_stack = build_stack(g0)?;
    out.push(parabolic_residual(&stack, &ref_stack, &all)?.0);
    out.push(ricci_agreement_residual(&stack, &all)?.0);
    Ok(out)
}

pub fn rotate_metric(g: &MetricField) -> Result<MetricField> {
    MetricField::new(rotate_quarter(g.field())?)
}
