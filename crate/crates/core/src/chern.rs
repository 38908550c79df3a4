//! Chern connection, torsion and curvature of a Hermitian metric field, and
//! the pointwise curvature probes built on them.
//!
//! Index conventions (all components row-major in slot order):
//!
//! * `Γ^k_{ij} = g^{k l̄} ∂_i g_{j l̄}` in slots `(Lo i, Lo j, Up k)`
//! * `T^k_{ij} = Γ^k_{ij} − Γ^k_{ji}`, lowered `T_{ij k̄} = g_{p k̄} T^p_{ij}`
//! * `R_{i j̄ k l̄} = −∂_i∂_{j̄} g_{k l̄} + g^{p q̄} ∂_i g_{k q̄} ∂_{j̄} g_{p l̄}`,
//!   which equals `−∂_{j̄}Γ^p_{ik} g_{p l̄}` and is conjugation-symmetric
//!   sample by sample
//! * `R_{i j̄ k}{}^l = g^{l q̄} R_{i j̄ k q̄}`
//! * `Ric_{i j̄} = g^{k l̄} R_{i j̄ k l̄}`, `S_{i j̄} = g^{k l̄} R_{k l̄ i j̄}`
//!
//! Second derivatives are always compositions of the first-derivative
//! stencils.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HrfError, Result};
use crate::grid::{component_multi, partial, Dir, GridSpec, Slot, TensorField, C64};
use crate::linalg::{self, Mat, ZERO};
use crate::metric::{MetricField, PointMetric, METRIC_SLOTS};

pub const GAMMA_SLOTS: [Slot; 3] = [Slot::Lo, Slot::Lo, Slot::Up];
pub const TORSION_LOW_SLOTS: [Slot; 3] = [Slot::Lo, Slot::Lo, Slot::LoBar];
pub const RM_SLOTS: [Slot; 4] = [Slot::Lo, Slot::LoBar, Slot::Lo, Slot::LoBar];
pub const RM_UP_SLOTS: [Slot; 4] = [Slot::Lo, Slot::LoBar, Slot::Lo, Slot::Up];
pub const INV_SLOTS: [Slot; 2] = [Slot::Up, Slot::UpBar];

/// Full Chern-geometry stack of one metric field.
#[derive(Clone, Debug)]
pub struct ChernStack {
    pub g: MetricField,
    /// `g^{k l̄}`
    pub ginv: TensorField,
    /// `Γ^k_{ij}`
    pub gamma: TensorField,
    /// `T^k_{ij}`
    pub torsion: TensorField,
    /// `T_{ij k̄}`
    pub torsion_low: TensorField,
    /// `R_{i j̄ k}{}^l`
    pub rm_up: TensorField,
    /// `R_{i j̄ k l̄}`
    pub rm: TensorField,
    /// First (Chern-)Ricci `R_{i j̄}`
    pub ric: TensorField,
    /// Second Ricci `S_{i j̄}`
    pub s: TensorField,
}

/// `∂_{j̄} g` for every `j`.
pub(crate) fn antihol_metric_derivatives(g: &MetricField) -> Vec<TensorField> {
    (0..g.n()).map(|j| partial(g.field(), Dir::Anti(j)).expect("axis in range")).collect()
}

/// `(∂_k g)_{a b̄} = conj((∂_{k̄} g)_{b ā})` read from the antiholomorphic
/// derivatives at point `p`.
#[inline]
pub(crate) fn hol_metric_derivative_at(dbar: &[TensorField], n: usize, p: usize, k: usize, a: usize, b: usize) -> C64 {
    dbar[k].comp(b * n + a)[p].conj()
}

/// Pointwise metric data at every point, or the positivity failure.
pub(crate) fn point_metrics(g: &MetricField) -> Result<Vec<PointMetric>> {
    (0..g.field().npts()).map(|p| g.point(p)).collect()
}

/// Reusable scratch space for [`second_ricci_into`].
#[derive(Debug, Default)]
pub struct RicciWorkspace {
    ginv: Vec<C64>,
    dbar: Vec<C64>,
    d: Vec<C64>,
}

impl RicciWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(buf: &mut Vec<C64>, len: usize) {
        buf.clear();
        buf.resize(len, ZERO);
    }
}

/// Second Ricci curvature `S_{i j̄}` without materialising the full stack.
pub fn second_ricci(g: &MetricField) -> Result<TensorField> {
    let mut out = TensorField::zeros(*g.grid(), &METRIC_SLOTS);
    second_ricci_into(g, &mut RicciWorkspace::new(), &mut out)?;
    Ok(out)
}

/// Writes `S_{i j̄}` of `g` into `out` (same grid, metric slots), reusing
/// `ws` between calls:
/// `S_{i j̄} = g^{k l̄}(−∂_k∂_{l̄} g_{i j̄} + g^{a b̄} ∂_k g_{i b̄} ∂_{l̄} g_{a j̄})`.
pub fn second_ricci_into(g: &MetricField, ws: &mut RicciWorkspace, out: &mut TensorField) -> Result<()> {
    let n = g.n();
    let grid = *g.grid();
    let npts = grid.npts();
    let m = n * n;
    if out.grid() != &grid || out.slots() != METRIC_SLOTS {
        return Err(HrfError::Shape("second Ricci output must be a metric-shaped field on the same grid".into()));
    }
    RicciWorkspace::fit(&mut ws.ginv, m * npts);
    for p in 0..npts {
        let pm = g.point(p)?;
        for k in 0..n {
            for l in 0..n {
                ws.ginv[(k * n + l) * npts + p] = pm.ginv[k][l];
            }
        }
    }
    RicciWorkspace::fit(&mut ws.dbar, n * m * npts);
    let src = g.field().data();
    for j in 0..n {
        for c in 0..m {
            let dst = &mut ws.dbar[(j * m + c) * npts..(j * m + c + 1) * npts];
            crate::grid::add_complex_derivative(&grid, &src[c * npts..(c + 1) * npts], dst, Dir::Anti(j));
        }
    }
    let od = out.data_mut();
    od.iter_mut().for_each(|v| *v = ZERO);
    // quadratic part
    let dbar = &ws.dbar;
    let gi = &ws.ginv;
    let db = |j: usize, a: usize, b: usize, p: usize| dbar[(j * m + a * n + b) * npts + p];
    for p in 0..npts {
        let mut gm = [[ZERO; 2]; 2];
        for a in 0..n {
            for b in 0..n {
                gm[a][b] = gi[(a * n + b) * npts + p];
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut q = ZERO;
                for k in 0..n {
                    for l in 0..n {
                        let mut inner = ZERO;
                        for a in 0..n {
                            for b in 0..n {
                                inner += gm[a][b] * db(k, b, i, p).conj() * db(l, a, j, p);
                            }
                        }
                        q += gm[k][l] * inner;
                    }
                }
                od[(i * n + j) * npts + p] = q;
            }
        }
    }
    // second-derivative part, one (k, l) at a time
    RicciWorkspace::fit(&mut ws.d, m * npts);
    for k in 0..n {
        for l in 0..n {
            ws.d.iter_mut().for_each(|v| *v = ZERO);
            for c in 0..m {
                let src = &ws.dbar[(l * m + c) * npts..(l * m + c + 1) * npts];
                let dst = &mut ws.d[c * npts..(c + 1) * npts];
                crate::grid::add_complex_derivative(&grid, src, dst, Dir::Hol(k));
            }
            let w = &ws.ginv[(k * n + l) * npts..(k * n + l + 1) * npts];
            for c in 0..m {
                let dc = &ws.d[c * npts..(c + 1) * npts];
                let oc = &mut od[c * npts..(c + 1) * npts];
                for p in 0..npts {
                    oc[p] -= w[p] * dc[p];
                }
            }
        }
    }
    Ok(())
}

/// Builds the full stack. Fails with the worst point if `g` is not positive.
pub fn build_stack(g: &MetricField) -> Result<ChernStack> {
    let n = g.n();
    let grid = *g.grid();
    let npts = grid.npts();
    let pms = point_metrics(g)?;
    let dbar = antihol_metric_derivatives(g);

    let mut ginv = TensorField::zeros(grid, &INV_SLOTS);
    let mut gamma = TensorField::zeros(grid, &GAMMA_SLOTS);
    {
        let gi = ginv.data_mut();
        for (p, pm) in pms.iter().enumerate() {
            for k in 0..n {
                for l in 0..n {
                    gi[(k * n + l) * npts + p] = pm.ginv[k][l];
                }
            }
        }
        let gd = gamma.data_mut();
        for (p, pm) in pms.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut v = ZERO;
                        for l in 0..n {
                            v += pm.ginv[k][l] * hol_metric_derivative_at(&dbar, n, p, i, j, l);
                        }
                        gd[((i * n + j) * n + k) * npts + p] = v;
                    }
                }
            }
        }
    }

    let mut torsion = TensorField::zeros(grid, &GAMMA_SLOTS);
    let mut torsion_low = TensorField::zeros(grid, &TORSION_LOW_SLOTS);
    for (p, pm) in pms.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = gamma.comp((i * n + j) * n + k)[p] - gamma.comp((j * n + i) * n + k)[p];
                    torsion.comp_mut((i * n + j) * n + k)[p] = t;
                }
                for k in 0..n {
                    let mut v = ZERO;
                    for q in 0..n {
                        v += pm.g[q][k] * torsion.comp((i * n + j) * n + q)[p];
                    }
                    torsion_low.comp_mut((i * n + j) * n + k)[p] = v;
                }
            }
        }
    }

    let mut rm = TensorField::zeros(grid, &RM_SLOTS);
    for i in 0..n {
        for j in 0..n {
            let d = partial(&dbar[j], Dir::Hol(i))?;
            for (p, pm) in pms.iter().enumerate() {
                for k in 0..n {
                    for l in 0..n {
                        let mut r = -d.comp(k * n + l)[p];
                        for a in 0..n {
                            for b in 0..n {
                                r += pm.ginv[a][b]
                                    * hol_metric_derivative_at(&dbar, n, p, i, k, b)
                                    * dbar[j].comp(a * n + l)[p];
                            }
                        }
                        rm.comp_mut(((i * n + j) * n + k) * n + l)[p] = r;
                    }
                }
            }
        }
    }

    let mut rm_up = TensorField::zeros(grid, &RM_UP_SLOTS);
    let mut ric = TensorField::zeros(grid, &METRIC_SLOTS);
    let mut s = TensorField::zeros(grid, &METRIC_SLOTS);
    for (p, pm) in pms.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = ZERO;
                        for q in 0..n {
                            v += pm.ginv[l][q] * rm.comp(((i * n + j) * n + k) * n + q)[p];
                        }
                        rm_up.comp_mut(((i * n + j) * n + k) * n + l)[p] = v;
                    }
                }
                let mut r = ZERO;
                let mut sv = ZERO;
                for k in 0..n {
                    for l in 0..n {
                        r += pm.ginv[k][l] * rm.comp(((i * n + j) * n + k) * n + l)[p];
                        sv += pm.ginv[k][l] * rm.comp(((k * n + l) * n + i) * n + j)[p];
                    }
                }
                ric.comp_mut(i * n + j)[p] = r;
                s.comp_mut(i * n + j)[p] = sv;
            }
        }
    }

    Ok(ChernStack { g: g.clone(), ginv, gamma, torsion, torsion_low, rm_up, rm, ric, s })
}

/// Which derivative type a full covariant derivative adds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivKind {
    Hol,
    Anti,
}

/// Ordering of the two covariant derivatives in the rough Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianOrder {
    /// `g^{r s̄} ∇_r ∇_{s̄}`
    HolAnti,
    /// `g^{r s̄} ∇_{s̄} ∇_r`
    AntiHol,
    /// Average of the two.
    Symmetric,
}

impl ChernStack {
    pub fn n(&self) -> usize {
        self.g.n()
    }
    pub fn grid(&self) -> &GridSpec {
        self.g.grid()
    }

    pub fn point_metric(&self, p: usize) -> PointMetric {
        let n = self.n();
        let npts = self.grid().npts();
        let mut ginv = linalg::zero();
        for k in 0..n {
            for l in 0..n {
                ginv[k][l] = self.ginv.data()[(k * n + l) * npts + p];
            }
        }
        PointMetric { n, g: self.g.mat(p), ginv }
    }

    /// `Γ^k_{ij}` at point `p`.
    #[inline]
    pub fn gamma_at(&self, p: usize, i: usize, j: usize, k: usize) -> C64 {
        let n = self.n();
        self.gamma.comp((i * n + j) * n + k)[p]
    }

    /// Directional Chern covariant derivative `∇_dir A`; same slots as `A`.
    pub fn nabla_dir(&self, field: &TensorField, dir: Dir) -> Result<TensorField> {
        if field.grid() != self.grid() {
            return Err(HrfError::Shape("field and stack live on different grids".into()));
        }
        let mut out = partial(field, dir)?;
        let n = self.n();
        let rank = field.rank();
        let ncomp = field.ncomp();
        let npts = field.npts();
        let slots = field.slots().to_vec();
        let active: Vec<(usize, Slot)> = slots
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, s)| match dir {
                Dir::Hol(_) => matches!(s, Slot::Up | Slot::Lo),
                Dir::Anti(_) => matches!(s, Slot::UpBar | Slot::LoBar),
            })
            .collect();
        if active.is_empty() {
            return Ok(out);
        }
        let d = dir.axis();
        let mut idx = [0usize; 8];
        let od = out.data_mut();
        let src = field.data();
        for c in 0..ncomp {
            component_multi(n, rank, c, &mut idx);
            for &(s, slot) in &active {
                let stride = n.pow((rank - 1 - s) as u32);
                let cur = idx[s];
                let base = c - cur * stride;
                for m in 0..n {
                    let x = &src[(base + m * stride) * npts..(base + m * stride + 1) * npts];
                    let o = &mut od[c * npts..(c + 1) * npts];
                    match slot {
                        // ∇_d X^k ∋ Γ^k_{d m} X^m
                        Slot::Up => {
                            let gm = self.gamma.comp((d * n + m) * n + cur);
                            for p in 0..npts {
                                o[p] += gm[p] * x[p];
                            }
                        }
                        // ∇_d a_j ∋ −Γ^m_{d j} a_m
                        Slot::Lo => {
                            let gm = self.gamma.comp((d * n + cur) * n + m);
                            for p in 0..npts {
                                o[p] -= gm[p] * x[p];
                            }
                        }
                        // ∇_{d̄} X^{k̄} ∋ conj(Γ^k_{d m}) X^{m̄}
                        Slot::UpBar => {
                            let gm = self.gamma.comp((d * n + m) * n + cur);
                            for p in 0..npts {
                                o[p] += gm[p].conj() * x[p];
                            }
                        }
                        // ∇_{d̄} a_{j̄} ∋ −conj(Γ^m_{d j}) a_{m̄}
                        Slot::LoBar => {
                            let gm = self.gamma.comp((d * n + cur) * n + m);
                            for p in 0..npts {
                                o[p] -= gm[p].conj() * x[p];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Full covariant derivative with the new index prepended (`Lo` for
    /// `∇`, `LoBar` for `∇̄`).
    pub fn nabla(&self, field: &TensorField, kind: DerivKind) -> Result<TensorField> {
        let n = self.n();
        let (slot, mk): (Slot, fn(usize) -> Dir) = match kind {
            DerivKind::Hol => (Slot::Lo, Dir::Hol),
            DerivKind::Anti => (Slot::LoBar, Dir::Anti),
        };
        let mut slots = vec![slot];
        slots.extend_from_slice(field.slots());
        let mut data = Vec::with_capacity(n * field.data().len());
        for d in 0..n {
            data.extend_from_slice(self.nabla_dir(field, mk(d))?.data());
        }
        TensorField::from_data(*self.grid(), &slots, data)
    }

    /// Rough Laplacian `Δ A = g^{r s̄} ∇_r ∇_{s̄} A` (or the other ordering).
    pub fn laplacian(&self, field: &TensorField, order: LaplacianOrder) -> Result<TensorField> {
        let n = self.n();
        let npts = field.npts();
        let ncomp = field.ncomp();
        let (hol_first, anti_first, weight) = match order {
            LaplacianOrder::HolAnti => (false, true, 1.0),
            LaplacianOrder::AntiHol => (true, false, 1.0),
            LaplacianOrder::Symmetric => (true, true, 0.5),
        };
        let d_anti: Vec<TensorField> = if anti_first {
            (0..n).map(|s| self.nabla_dir(field, Dir::Anti(s))).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let d_hol: Vec<TensorField> = if hol_first {
            (0..n).map(|r| self.nabla_dir(field, Dir::Hol(r))).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let mut out = TensorField::zeros(*self.grid(), field.slots());
        for r in 0..n {
            for s in 0..n {
                let w = self.ginv.comp(r * n + s);
                let mut terms = Vec::with_capacity(2);
                if anti_first {
                    terms.push(self.nabla_dir(&d_anti[s], Dir::Hol(r))?);
                }
                if hol_first {
                    terms.push(self.nabla_dir(&d_hol[r], Dir::Anti(s))?);
                }
                let od = out.data_mut();
                for second in &terms {
                    for c in 0..ncomp {
                        let src = second.comp(c);
                        let o = &mut od[c * npts..(c + 1) * npts];
                        for p in 0..npts {
                            o[p] += w[p] * src[p] * weight;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `R(X, Ȳ, Z, W̄) = R_{i j̄ k l̄} X^i conj(Y^j) Z^k conj(W^l)` at point `p`.
    pub fn curvature_form(&self, p: usize, x: &[C64; 2], y: &[C64; 2], z: &[C64; 2], w: &[C64; 2]) -> C64 {
        let n = self.n();
        let mut s = ZERO;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.rm.comp(((i * n + j) * n + k) * n + l)[p] * x[i] * y[j].conj() * z[k] * w[l].conj();
                    }
                }
            }
        }
        s
    }

    pub fn ricci_mat(&self, p: usize) -> Mat {
        mat_at(&self.ric, self.n(), p)
    }

    pub fn second_ricci_mat(&self, p: usize) -> Mat {
        mat_at(&self.s, self.n(), p)
    }
}

pub(crate) fn mat_at(f: &TensorField, n: usize, p: usize) -> Mat {
    let mut m = linalg::zero();
    for i in 0..n {
        for j in 0..n {
            m[i][j] = f.comp(i * n + j)[p];
        }
    }
    m
}

/// `Ψ^k_{ij} = Γ̃^k_{ij} − Γ^k_{ij}` (reference minus evolving connection).
pub fn psi(stack: &ChernStack, reference: &ChernStack) -> Result<TensorField> {
    if stack.grid() != reference.grid() {
        return Err(HrfError::Shape("psi needs both stacks on one grid".into()));
    }
    Ok(reference.gamma.sub(&stack.gamma))
}

/// `−∂_i ∂_{j̄} log det g`.
pub fn first_ricci_from_det(g: &MetricField) -> Result<TensorField> {
    let n = g.n();
    let grid = *g.grid();
    g.validate()?;
    let logdet = TensorField::from_data(
        grid,
        &[],
        (0..grid.npts()).map(|p| C64::new(linalg::det(n, &g.mat(p)).re.ln(), 0.0)).collect(),
    )?;
    let mut out = TensorField::zeros(grid, &METRIC_SLOTS);
    for j in 0..n {
        let dj = partial(&logdet, Dir::Anti(j))?;
        for i in 0..n {
            let d = partial(&dj, Dir::Hol(i))?;
            for (o, v) in out.comp_mut(i * n + j).iter_mut().zip(d.comp(0)) {
                *o = -v;
            }
        }
    }
    Ok(out)
}

/// Ricci eigenvalue extremes relative to `g`.
#[derive(Clone, Debug)]
pub struct RicciExtremes {
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
    pub global_min: f64,
    pub global_max: f64,
    /// Point attaining `global_max`.
    pub argmax: usize,
}

/// Per-point generalized eigenvalues of `Ric` against `g`.
pub fn ricci_extremes(stack: &ChernStack) -> Result<RicciExtremes> {
    let all: Vec<usize> = (0..stack.grid().npts()).collect();
    ricci_extremes_on(stack, &all)
}

/// As [`ricci_extremes`]; the global extremes are taken over `points` only.
pub fn ricci_extremes_on(stack: &ChernStack, points: &[usize]) -> Result<RicciExtremes> {
    let n = stack.n();
    let npts = stack.grid().npts();
    let mut lo = vec![0.0; npts];
    let mut hi = vec![0.0; npts];
    for p in 0..npts {
        let a = linalg::hermitian_part(n, &stack.ricci_mat(p));
        let (l, h) = linalg::gen_eigs(n, &a, &stack.g.mat(p)).ok_or_else(|| HrfError::NotPositive {
            point: p,
            coords: stack.grid().coords(p),
            eigenvalue: linalg::herm_eigs(n, &stack.g.mat(p)).0,
        })?;
        lo[p] = l;
        hi[p] = h;
    }
    let mut gmin = f64::INFINITY;
    let mut gmax = f64::NEG_INFINITY;
    let mut argmax = points.first().copied().unwrap_or(0);
    for &p in points {
        gmin = gmin.min(lo[p]);
        if hi[p] > gmax {
            gmax = hi[p];
            argmax = p;
        }
    }
    Ok(RicciExtremes { lambda_min: lo, lambda_max: hi, global_min: gmin, global_max: gmax, argmax })
}

/// Result of the bisectional-curvature probe. `kappa` is the best ratio
/// found, a lower bound for the true supremum.
#[derive(Clone, Debug, Serialize)]
pub struct BisectionalSup {
    pub kappa: f64,
    pub point: usize,
    pub x: [C64; 2],
    pub y: [C64; 2],
}

#[derive(Clone, Debug)]
pub struct ProbeOptions {
    pub seed: u64,
    /// Random `(X, Y)` pairs per sampled point.
    pub pairs_per_point: usize,
    /// Maximum number of grid points sampled.
    pub max_points: usize,
    /// Points refined by multi-start ascent.
    pub refine_points: usize,
    pub starts: usize,
    pub iterations: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { seed: 0x5eed, pairs_per_point: 1000, max_points: 64, refine_points: 4, starts: 32, iterations: 200 }
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> [C64; 2] {
    let mut v = [ZERO; 2];
    for c in v.iter_mut().take(n) {
        *c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    if v.iter().take(n).all(|c| c.norm() == 0.0) {
        v[0] = C64::new(1.0, 0.0);
    }
    v
}

/// `g(X, X̄)`.
fn g_norm_sq(pm: &PointMetric, x: &[C64; 2]) -> f64 {
    let mut s = ZERO;
    for i in 0..pm.n {
        for j in 0..pm.n {
            s += pm.g[i][j] * x[i] * x[j].conj();
        }
    }
    s.re
}

fn unit(pm: &PointMetric, x: [C64; 2]) -> [C64; 2] {
    let s = g_norm_sq(pm, &x).sqrt();
    [x[0] / s, x[1] / s]
}

/// `B(X, X̄, Y, Ȳ) = |X|²|Y|² + |g(X, Ȳ)|²`.
pub fn b_form(pm: &PointMetric, x: &[C64; 2], y: &[C64; 2]) -> f64 {
    let mut inner = ZERO;
    for i in 0..pm.n {
        for l in 0..pm.n {
            inner += pm.g[i][l] * x[i] * y[l].conj();
        }
    }
    g_norm_sq(pm, x) * g_norm_sq(pm, y) + inner.norm_sqr()
}

fn bisectional_ratio(stack: &ChernStack, pm: &PointMetric, p: usize, x: &[C64; 2], y: &[C64; 2]) -> f64 {
    stack.curvature_form(p, x, x, y, y).re / b_form(pm, x, y)
}

/// Hermitian matrices `(A, M)` of `X ↦ R(X,X̄,Y,Ȳ)` and `X ↦ B(X,X̄,Y,Ȳ)` in
/// the variable `w = X̄`.
fn forms_for_fixed(stack: &ChernStack, pm: &PointMetric, p: usize, y: &[C64; 2]) -> (Mat, Mat) {
    let n = stack.n();
    let mut a = linalg::zero();
    let mut m = linalg::zero();
    let mut c = [ZERO; 2];
    for (i, ci) in c.iter_mut().enumerate().take(n) {
        for l in 0..n {
            *ci += pm.g[i][l] * y[l].conj();
        }
    }
    let yy = g_norm_sq(pm, y);
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..n {
                for l in 0..n {
                    s += stack.rm.comp(((i * n + j) * n + k) * n + l)[p] * y[k] * y[l].conj();
                }
            }
            a[i][j] = s;
            m[i][j] = pm.g[i][j] * yy + c[i] * c[j].conj();
        }
    }
    (linalg::hermitian_part(n, &a), linalg::hermitian_part(n, &m))
}

/// Block-coordinate ascent of `R/B`: alternately maximises over `X` and `Y`
/// exactly (a 2×2 generalized eigenproblem each).
fn ascend(stack: &ChernStack, pm: &PointMetric, p: usize, mut x: [C64; 2], mut y: [C64; 2], iters: usize) -> (f64, [C64; 2], [C64; 2]) {
    let n = stack.n();
    let mut best = bisectional_ratio(stack, pm, p, &x, &y);
    for _ in 0..iters {
        let (a, m) = forms_for_fixed(stack, pm, p, &y);
        if let Some((_, w)) = linalg::gen_max_vec(n, &a, &m) {
            x = unit(pm, [w[0].conj(), w[1].conj()]);
        }
        let (a, m) = forms_for_fixed(stack, pm, p, &x);
        if let Some((_, w)) = linalg::gen_max_vec(n, &a, &m) {
            y = unit(pm, [w[0].conj(), w[1].conj()]);
        }
        let r = bisectional_ratio(stack, pm, p, &x, &y);
        if r <= best + 1e-15 * best.abs().max(1e-300) {
            best = best.max(r);
            break;
        }
        best = r;
    }
    (best, x, y)
}

fn sample_points(points: &[usize], max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if points.len() <= max {
        return points.to_vec();
    }
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, points.len(), max).into_iter().map(|i| points[i]).collect();
    chosen.sort_unstable();
    chosen
}

/// Heuristic maximiser of `R(X,X̄,Y,Ȳ)/B(X,X̄,Y,Ȳ)` over the given points.
pub fn bisectional_sup_on(stack: &ChernStack, points: &[usize], opts: &ProbeOptions) -> BisectionalSup {
    let n = stack.n();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pts = sample_points(points, opts.max_points, &mut rng);
    let mut per_point: Vec<(f64, usize, [C64; 2], [C64; 2])> = Vec::with_capacity(pts.len());
    for &p in &pts {
        let pm = stack.point_metric(p);
        let mut best = (f64::NEG_INFINITY, p, [ZERO; 2], [ZERO; 2]);
        for _ in 0..opts.pairs_per_point {
            let x = unit(&pm, random_vector(&mut rng, n));
            let y = unit(&pm, random_vector(&mut rng, n));
            let r = bisectional_ratio(stack, &pm, p, &x, &y);
            if r > best.0 {
                best = (r, p, x, y);
            }
        }
        per_point.push(best);
    }
    per_point.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut result = per_point
        .first()
        .map(|b| BisectionalSup { kappa: b.0, point: b.1, x: b.2, y: b.3 })
        .unwrap_or(BisectionalSup { kappa: f64::NEG_INFINITY, point: 0, x: [ZERO; 2], y: [ZERO; 2] });
    for cand in per_point.iter().take(opts.refine_points) {
        let p = cand.1;
        let pm = stack.point_metric(p);
        let mut starts = vec![(cand.2, cand.3)];
        for _ in 1..opts.starts {
            starts.push((unit(&pm, random_vector(&mut rng, n)), unit(&pm, random_vector(&mut rng, n))));
        }
        for (x0, y0) in starts {
            let (r, x, y) = ascend(stack, &pm, p, x0, y0, opts.iterations);
            if r > result.kappa {
                result = BisectionalSup { kappa: r, point: p, x, y };
            }
        }
    }
    result
}

/// [`bisectional_sup_on`] over the default diagnostic region.
pub fn bisectional_sup(stack: &ChernStack, opts: &ProbeOptions) -> BisectionalSup {
    bisectional_sup_on(stack, &stack.grid().diagnostic_points(), opts)
}

/// Largest sampled value of `|R_{u v̄ x x̄}|² / (|g_{x x̄}|² |R_{u ū}| |R_{v v̄}|)`.
#[derive(Clone, Debug, Serialize)]
pub struct PinchingSup {
    pub ratio: f64,
    pub point: usize,
    pub u: [C64; 2],
    pub v: [C64; 2],
    pub x: [C64; 2],
    pub admissible_points: usize,
}

/// Ricci threshold below which a point or direction counts as negatively
/// curved for the pinching probe.
pub const PINCHING_RICCI_THRESHOLD: f64 = 1e-6;

/// Samples the pinching ratio at points where `Ric` has a direction with
/// `Ric(X,X̄) < −threshold·g(X,X̄)`. Triples with `|R_{uū}|` or `|R_{vv̄}|`
/// below `threshold` (unit vectors) are skipped.
pub fn pinching_ratio_on(stack: &ChernStack, points: &[usize], samples: usize, seed: u64) -> Result<PinchingSup> {
    let n = stack.n();
    let ext = ricci_extremes_on(stack, points)?;
    let admissible: Vec<usize> =
        points.iter().copied().filter(|&p| ext.lambda_min[p] < -PINCHING_RICCI_THRESHOLD).collect();
    if admissible.is_empty() {
        return Err(HrfError::NoAdmissiblePoints(format!(
            "no point with Ricci eigenvalue below -{PINCHING_RICCI_THRESHOLD:e} among {} probed",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_points(&admissible, 64, &mut rng);
    let per = (samples / pts.len()).max(1);
    let mut best = PinchingSup { ratio: f64::NEG_INFINITY, point: pts[0], u: [ZERO; 2], v: [ZERO; 2], x: [ZERO; 2], admissible_points: admissible.len() };
    for &p in &pts {
        let pm = stack.point_metric(p);
        let ric = stack.ricci_mat(p);
        let ric_form = |u: &[C64; 2]| {
            let mut s = ZERO;
            for i in 0..n {
                for j in 0..n {
                    s += ric[i][j] * u[i] * u[j].conj();
                }
            }
            s.re
        };
        for t in 0..per {
            let (u, v, x) = if t == 0 {
                let e = unit(&pm, random_vector(&mut rng, n));
                (e, e, e)
            } else {
                (
                    unit(&pm, random_vector(&mut rng, n)),
                    unit(&pm, random_vector(&mut rng, n)),
                    unit(&pm, random_vector(&mut rng, n)),
                )
            };
            let ru = ric_form(&u).abs();
            let rv = ric_form(&v).abs();
            if ru < PINCHING_RICCI_THRESHOLD || rv < PINCHING_RICCI_THRESHOLD {
                continue;
            }
            let num = stack.curvature_form(p, &u, &v, &x, &x).norm_sqr();
            let gx = g_norm_sq(&pm, &x);
            let r = num / (gx * gx * ru * rv);
            if r > best.ratio {
                best = PinchingSup { ratio: r, point: p, u, v, x, admissible_points: admissible.len() };
            }
        }
    }
    if !best.ratio.is_finite() {
        return Err(HrfError::NoAdmissiblePoints("every sampled triple had a degenerate Ricci factor".into()));
    }
    Ok(best)
}

pub fn pinching_ratio(stack: &ChernStack, samples: usize, seed: u64) -> Result<PinchingSup> {
    pinching_ratio_on(stack, &stack.grid().diagnostic_points(), samples, seed)
}

/// Default truncation tolerance `50·h⁴·M₆`, with `M₆` the largest sixth
/// derivative of any metric component along any real axis, estimated by the
/// seven-point undivided difference.
pub fn truncation_tolerance(g: &MetricField) -> f64 {
    let all: Vec<usize> = (0..g.grid().npts()).collect();
    truncation_tolerance_on(g, &all)
}

/// As [`truncation_tolerance`] with `M₆` estimated at `points` only.
pub fn truncation_tolerance_on(g: &MetricField, points: &[usize]) -> f64 {
    const W6: [f64; 7] = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];
    let grid = g.grid();
    let h = grid.h();
    let f = g.field();
    let mut m6: f64 = 0.0;
    for a in 0..grid.axes() {
        let stride = grid.stride(a) as isize;
        let len = grid.shape()[a];
        for &p in points {
            let idx = grid.multi_index(p)[a];
            let rows: Vec<usize> = if grid.is_periodic() {
                (-3..=3)
                    .map(|k| {
                        let j = (idx as isize + k).rem_euclid(len as isize);
                        (p as isize + (j - idx as isize) * stride) as usize
                    })
                    .collect()
            } else if idx >= 3 && idx + 3 < len {
                (-3..=3).map(|k| (p as isize + k * stride) as usize).collect()
            } else {
                continue;
            };
            for c in 0..f.ncomp() {
                let comp = f.comp(c);
                let s: C64 = rows.iter().zip(W6).map(|(&q, w)| comp[q] * w).sum();
                m6 = m6.max(s.norm() / h.powi(6));
            }
        }
    }
    50.0 * h.powi(4) * m6
}
