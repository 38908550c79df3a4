//! Hermitian metric fields and metric-weighted tensor norms.

use crate::error::{HrfError, Result};
use crate::grid::{component_multi, GridSpec, Slot, TensorField, C64};
use crate::linalg::{self, Mat, ZERO};

pub const METRIC_SLOTS: [Slot; 2] = [Slot::Lo, Slot::LoBar];

/// `g_{i j̄}` per grid point, stored as a `(Lo, LoBar)` tensor field.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    field: TensorField,
}

impl MetricField {
    /// Wraps a `(Lo, LoBar)` field after checking Hermiticity and positivity.
    pub fn new(field: TensorField) -> Result<Self> {
        if field.slots() != METRIC_SLOTS {
            return Err(HrfError::Shape(format!("metric needs (Lo, LoBar) slots, got {:?}", field.slots())));
        }
        let g = Self { field };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn new_unchecked(field: TensorField) -> Self {
        Self { field }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 4]) -> Mat) -> Result<Self> {
        let n = grid.n();
        let field = TensorField::from_fn(grid, &METRIC_SLOTS, |x, out| {
            let m = f(x);
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = m[i][j];
                }
            }
        });
        Self::new(field)
    }

    pub fn constant(grid: GridSpec, m: Mat) -> Result<Self> {
        Self::from_fn(grid, |_| m)
    }

    pub fn identity(grid: GridSpec) -> Self {
        let n = grid.n();
        Self::new_unchecked(TensorField::from_fn(grid, &METRIC_SLOTS, |_, out| {
            for i in 0..n {
                out[i * n + i] = C64::new(1.0, 0.0);
            }
        }))
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }
    pub fn n(&self) -> usize {
        self.field.grid().n()
    }
    pub fn field(&self) -> &TensorField {
        &self.field
    }
    pub fn into_field(self) -> TensorField {
        self.field
    }
    pub fn mat(&self, p: usize) -> Mat {
        let n = self.n();
        let np = self.field.npts();
        let d = self.field.data();
        let mut m = linalg::zero();
        for i in 0..n {
            for j in 0..n {
                m[i][j] = d[(i * n + j) * np + p];
            }
        }
        m
    }

    pub fn set_mat(&mut self, p: usize, m: &Mat) {
        let n = self.n();
        let np = self.field.npts();
        let d = self.field.data_mut();
        for i in 0..n {
            for j in 0..n {
                d[(i * n + j) * np + p] = m[i][j];
            }
        }
    }

    /// Smallest eigenvalue over the grid and the point where it occurs.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let n = self.n();
        let mut best = (f64::INFINITY, 0);
        for p in 0..self.field.npts() {
            let (lo, _) = linalg::herm_eigs(n, &self.mat(p));
            if !(lo >= best.0) {
                best = (lo, p);
            }
        }
        best
    }

    /// `sup_grid λ_max(g⁻¹)`.
    pub fn max_inverse_eigenvalue(&self) -> f64 {
        1.0 / self.min_eigenvalue().0
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_floor(0.0)
    }

    /// Checks Hermiticity (to roundoff) and `λ_min > floor` everywhere.
    pub fn validate_floor(&self, floor: f64) -> Result<()> {
        let n = self.n();
        for p in 0..self.field.npts() {
            let m = self.mat(p);
            let scale = m[0][0].norm().max(m[n - 1][n - 1].norm()).max(1e-300);
            for i in 0..n {
                for j in 0..n {
                    if (m[i][j] - m[j][i].conj()).norm() > 1e-10 * scale {
                        return Err(HrfError::Shape(format!("metric not Hermitian at point {p}")));
                    }
                }
            }
        }
        let (lo, p) = self.min_eigenvalue();
        if !(lo > floor) {
            return Err(HrfError::NotPositive { point: p, coords: self.grid().coords(p), eigenvalue: lo });
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> MetricField {
        Self::new_unchecked(self.field.scaled(c))
    }

    /// Projects every sample onto its Hermitian part.
    pub fn symmetrize(&mut self) {
        let n = self.n();
        for p in 0..self.field.npts() {
            let m = linalg::hermitian_part(n, &self.mat(p));
            self.set_mat(p, &m);
        }
    }

    pub fn point(&self, p: usize) -> Result<PointMetric> {
        PointMetric::new(self.n(), self.mat(p)).ok_or_else(|| HrfError::NotPositive {
            point: p,
            coords: self.grid().coords(p),
            eigenvalue: linalg::herm_eigs(self.n(), &self.mat(p)).0,
        })
    }

    pub fn extract_window(&self, window: GridSpec) -> Result<MetricField> {
        Ok(Self::new_unchecked(self.field.extract_window(window)?))
    }
}

/// Metric data at one point: `g_{i j̄}` and `g^{k l̄}`.
#[derive(Clone, Copy, Debug)]
pub struct PointMetric {
    pub n: usize,
    /// `g[i][j] = g_{i j̄}`
    pub g: Mat,
    /// `ginv[k][l] = g^{k l̄}`, so that `Σ_l g^{k l̄} g_{j l̄} = δ^k_j`.
    pub ginv: Mat,
}

impl PointMetric {
    pub fn new(n: usize, g: Mat) -> Option<Self> {
        linalg::cholesky(n, &g)?;
        let inv = linalg::inverse(n, &g)?;
        let mut ginv = linalg::zero();
        for k in 0..n {
            for l in 0..n {
                ginv[k][l] = inv[l][k];
            }
        }
        Some(Self { n, g, ginv })
    }

    /// Weight matrix `W` such that `|A|² = Σ A_I conj(A_J) Π_s W_s[I_s][J_s]`.
    pub fn slot_weight(&self, slot: Slot) -> Mat {
        let mut w = linalg::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                w[i][j] = match slot {
                    Slot::Lo => self.ginv[i][j],
                    Slot::LoBar => self.ginv[j][i],
                    Slot::Up => self.g[i][j],
                    Slot::UpBar => self.g[j][i],
                };
            }
        }
        w
    }

    /// Pointwise squared norm of a tensor given by its components.
    pub fn norm_sq(&self, slots: &[Slot], comps: &[C64]) -> f64 {
        let n = self.n;
        let rank = slots.len();
        if rank == 0 {
            return comps[0].norm_sqr();
        }
        let len = comps.len();
        let mut bufs = [[ZERO; MAX_COMPONENTS]; 2];
        bufs[0][..len].copy_from_slice(comps);
        let mut idx = [0usize; 8];
        for (s, slot) in slots.iter().enumerate() {
            let w = self.slot_weight(*slot);
            let stride = n.pow((rank - 1 - s) as u32);
            let (a, b) = bufs.split_at_mut(1);
            let (cur, next) = if s % 2 == 0 { (&a[0], &mut b[0]) } else { (&b[0], &mut a[0]) };
            for (cidx, out) in next[..len].iter_mut().enumerate() {
                component_multi(n, rank, cidx, &mut idx);
                let j = idx[s];
                let base = cidx - j * stride;
                let mut acc = ZERO;
                for i in 0..n {
                    acc += w[i][j] * cur[base + i * stride];
                }
                *out = acc;
            }
        }
        let fin = &bufs[rank % 2][..len];
        comps.iter().zip(fin).map(|(a, c)| (a.conj() * c).re).sum::<f64>().max(0.0)
    }

    /// Smallest eigenvalue of `g`.
    pub fn lambda_min(&self) -> f64 {
        linalg::herm_eigs(self.n, &self.g).0
    }
}

/// Largest component count a pointwise norm handles (rank 8 at `n = 2`).
const MAX_COMPONENTS: usize = 256;

/// Pointwise squared `g`-norm of `field` at every point.
pub fn norm_sq_field(field: &TensorField, g: &MetricField) -> Result<Vec<f64>> {
    if field.grid() != g.grid() {
        return Err(HrfError::Shape("field and metric live on different grids".into()));
    }
    let mut buf = vec![ZERO; field.ncomp()];
    let mut out = Vec::with_capacity(field.npts());
    for p in 0..field.npts() {
        let pm = g.point(p)?;
        field.gather(p, &mut buf);
        out.push(pm.norm_sq(field.slots(), &buf));
    }
    Ok(out)
}

/// Pointwise squared `g`-norm of `field` at the given points, in order.
pub fn norm_sq_on(field: &TensorField, g: &MetricField, points: &[usize]) -> Result<Vec<f64>> {
    if field.grid() != g.grid() {
        return Err(HrfError::Shape("field and metric live on different grids".into()));
    }
    let mut buf = vec![ZERO; field.ncomp()];
    points
        .iter()
        .map(|&p| {
            let pm = g.point(p)?;
            field.gather(p, &mut buf);
            Ok(pm.norm_sq(field.slots(), &buf))
        })
        .collect()
}

/// Supremum over the grid of the pointwise `g`-norm.
pub fn sup_norm(field: &TensorField, g: &MetricField) -> Result<f64> {
    let all: Vec<usize> = (0..field.npts()).collect();
    sup_norm_on(field, g, &all)
}

/// Supremum of the pointwise `g`-norm over the given points.
pub fn sup_norm_on(field: &TensorField, g: &MetricField, points: &[usize]) -> Result<f64> {
    if field.grid() != g.grid() {
        return Err(HrfError::Shape("field and metric live on different grids".into()));
    }
    let mut buf = vec![ZERO; field.ncomp()];
    let mut best: f64 = 0.0;
    for &p in points {
        let pm = g.point(p)?;
        field.gather(p, &mut buf);
        best = best.max(pm.norm_sq(field.slots(), &buf).sqrt());
    }
    Ok(best)
}
