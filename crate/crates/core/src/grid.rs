//! Uniform lattices on the unit box of `C^n` and complex-valued tensor fields
//! sampled on them.
//!
//! Real axes are ordered `(x_1, y_1, x_2, y_2)` with `z_a = x_a + i y_a`; the
//! last axis varies fastest. A grid is either the full periodic torus or a
//! box with a frozen shell. A frozen grid may also be a *window*: a sub-box of
//! the `N`-lattice addressed by its lattice origin, used to evaluate local
//! quantities without materialising the whole torus.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HrfError, Result};

pub type C64 = Complex64;

/// Radius of the first-derivative stencil.
pub const STENCIL_RADIUS: usize = 2;

/// Cells inside the frozen shell that diagnostics skip in addition to the
/// shell itself.
pub const DIAGNOSTIC_MARGIN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Frozen { shell: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    n: usize,
    res: usize,
    boundary: Boundary,
    origin: [i64; 4],
    shape: [usize; 4],
}

impl GridSpec {
    pub fn periodic(n: usize, res: usize) -> Result<Self> {
        Self::validate_dims(n, res)?;
        let mut shape = [1; 4];
        shape[..2 * n].iter_mut().for_each(|s| *s = res);
        Ok(Self { n, res, boundary: Boundary::Periodic, origin: [0; 4], shape })
    }

    /// Full unit box with a frozen shell of `shell` cells.
    pub fn frozen(n: usize, res: usize, shell: usize) -> Result<Self> {
        Self::validate_dims(n, res)?;
        if shell < STENCIL_RADIUS {
            return Err(HrfError::InvalidGrid(format!(
                "frozen shell width {shell} is below the stencil radius {STENCIL_RADIUS}"
            )));
        }
        let mut shape = [1; 4];
        shape[..2 * n].iter_mut().for_each(|s| *s = res);
        Ok(Self { n, res, boundary: Boundary::Frozen { shell }, origin: [0; 4], shape })
    }

    pub fn new(n: usize, res: usize, boundary: Boundary) -> Result<Self> {
        match boundary {
            Boundary::Periodic => Self::periodic(n, res),
            Boundary::Frozen { shell } => Self::frozen(n, res, shell),
        }
    }

    /// Sub-box of the `res`-lattice starting at lattice index `origin` with
    /// `shape` samples per real axis. Only the first `2n` entries are read.
    pub fn window(n: usize, res: usize, origin: &[i64], shape: &[usize]) -> Result<Self> {
        Self::validate_dims(n, res)?;
        let mut o = [0i64; 4];
        let mut s = [1usize; 4];
        for a in 0..2 * n {
            if shape[a] < 2 * STENCIL_RADIUS + 1 {
                return Err(HrfError::InvalidGrid(format!(
                    "window axis {a} has {} samples; at least {} are needed",
                    shape[a],
                    2 * STENCIL_RADIUS + 1
                )));
            }
            o[a] = origin[a];
            s[a] = shape[a];
        }
        Ok(Self { n, res, boundary: Boundary::Frozen { shell: STENCIL_RADIUS }, origin: o, shape: s })
    }

    /// Rebuilds a grid from its stored parts (snapshot headers).
    pub fn from_parts(n: usize, res: usize, boundary: Boundary, origin: &[i64], shape: &[usize]) -> Result<Self> {
        let full = Self::new(n, res, boundary)?;
        if origin.iter().all(|&o| o == 0) && shape == full.shape() {
            return Ok(full);
        }
        if boundary != (Boundary::Frozen { shell: STENCIL_RADIUS }) {
            return Err(HrfError::InvalidGrid("a sub-box grid must be a frozen window".into()));
        }
        Self::window(n, res, origin, shape)
    }

    fn validate_dims(n: usize, res: usize) -> Result<()> {
        if !(1..=2).contains(&n) {
            return Err(HrfError::InvalidGrid(format!("complex dimension must be 1 or 2, got {n}")));
        }
        if res < 8 {
            return Err(HrfError::InvalidGrid(format!("resolution N must be at least 8, got {res}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn res(&self) -> usize {
        self.res
    }
    pub fn h(&self) -> f64 {
        1.0 / self.res as f64
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }
    pub fn origin(&self) -> &[i64] {
        &self.origin[..self.axes()]
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.axes()]
    }
    pub fn axes(&self) -> usize {
        2 * self.n
    }
    pub fn npts(&self) -> usize {
        self.shape().iter().product()
    }
    pub fn shell(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => 0,
            Boundary::Frozen { shell } => shell,
        }
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..self.axes()].iter().product()
    }

    pub fn multi_index(&self, mut p: usize) -> [usize; 4] {
        let mut idx = [0; 4];
        for a in (0..self.axes()).rev() {
            idx[a] = p % self.shape[a];
            p /= self.shape[a];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx[..self.axes()].iter().zip(self.shape()).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    /// Lattice index of point `p` along every axis (not reduced modulo `N`).
    pub fn lattice_index(&self, p: usize) -> [i64; 4] {
        let idx = self.multi_index(p);
        let mut out = [0; 4];
        for a in 0..self.axes() {
            out[a] = self.origin[a] + idx[a] as i64;
        }
        out
    }

    /// Real coordinates `(x_1, y_1, x_2, y_2)` of point `p`.
    pub fn coords(&self, p: usize) -> [f64; 4] {
        let li = self.lattice_index(p);
        let h = self.h();
        let mut x = [0.0; 4];
        for a in 0..self.axes() {
            x[a] = li[a] as f64 * h;
        }
        x
    }

    /// Complex coordinates `z_a` of point `p`.
    pub fn z(&self, p: usize) -> [C64; 2] {
        let x = self.coords(p);
        [C64::new(x[0], x[1]), C64::new(x[2], x[3])]
    }

    /// Distance in cells from point `p` to the nearest box face; `usize::MAX`
    /// on a periodic grid.
    pub fn cells_to_edge(&self, p: usize) -> usize {
        if self.is_periodic() {
            return usize::MAX;
        }
        let idx = self.multi_index(p);
        (0..self.axes())
            .map(|a| idx[a].min(self.shape[a] - 1 - idx[a]))
            .min()
            .unwrap_or(0)
    }

    pub fn in_shell(&self, p: usize) -> bool {
        self.cells_to_edge(p) < self.shell()
    }

    /// Points at least `shell + margin` cells from every face.
    pub fn is_interior(&self, p: usize, margin: usize) -> bool {
        self.is_periodic() || self.cells_to_edge(p) >= self.shell() + margin
    }

    /// Default diagnostic region: shell plus [`DIAGNOSTIC_MARGIN`] excluded.
    pub fn diagnostic_points(&self) -> Vec<usize> {
        self.interior_points(DIAGNOSTIC_MARGIN)
    }

    pub fn interior_points(&self, margin: usize) -> Vec<usize> {
        (0..self.npts()).filter(|&p| self.is_interior(p, margin)).collect()
    }

    /// Points whose coordinates lie in the sub-box `[lo_a, hi_a]` on every
    /// axis (coordinates taken literally, not modulo 1).
    pub fn points_in_box(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let eps = 1e-12;
        (0..self.npts())
            .filter(|&p| {
                let x = self.coords(p);
                (0..self.axes()).all(|a| x[a] >= lo[a] - eps && x[a] <= hi[a] + eps)
            })
            .collect()
    }
}

/// Kind of a tensor index slot.
///
/// `Lo`: lower holomorphic (`a_i`), `LoBar`: lower antiholomorphic (`a_{j̄}`),
/// `Up`: upper holomorphic (`X^k`), `UpBar`: upper antiholomorphic (`X^{k̄}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Lo,
    LoBar,
    Up,
    UpBar,
}

impl Slot {
    pub fn code(self) -> u8 {
        match self {
            Slot::Lo => b'l',
            Slot::LoBar => b'b',
            Slot::Up => b'u',
            Slot::UpBar => b'v',
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            b'l' => Some(Slot::Lo),
            b'b' => Some(Slot::LoBar),
            b'u' => Some(Slot::Up),
            b'v' => Some(Slot::UpBar),
            _ => None,
        }
    }

    /// Slot kind after complex conjugation of the component.
    pub fn conj(self) -> Self {
        match self {
            Slot::Lo => Slot::LoBar,
            Slot::LoBar => Slot::Lo,
            Slot::Up => Slot::UpBar,
            Slot::UpBar => Slot::Up,
        }
    }
}

/// `(#upper, #lower-holomorphic, #lower-antiholomorphic)` plus upper-barred.
pub fn valence_counts(slots: &[Slot]) -> [usize; 4] {
    let mut c = [0; 4];
    for s in slots {
        match s {
            Slot::Up => c[0] += 1,
            Slot::Lo => c[1] += 1,
            Slot::LoBar => c[2] += 1,
            Slot::UpBar => c[3] += 1,
        }
    }
    c
}

/// Complex tensor field stored component-major: component `c` occupies
/// `data[c * npts .. (c + 1) * npts]`. Components are ordered row-major over
/// the slot indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: GridSpec,
    slots: Vec<Slot>,
    data: Vec<C64>,
}

impl TensorField {
    pub fn zeros(grid: GridSpec, slots: &[Slot]) -> Self {
        let ncomp = grid.n().pow(slots.len() as u32);
        Self { grid, slots: slots.to_vec(), data: vec![C64::new(0.0, 0.0); ncomp * grid.npts()] }
    }

    pub fn scalar(grid: GridSpec) -> Self {
        Self::zeros(grid, &[])
    }

    pub fn from_data(grid: GridSpec, slots: &[Slot], data: Vec<C64>) -> Result<Self> {
        let ncomp = grid.n().pow(slots.len() as u32);
        if data.len() != ncomp * grid.npts() {
            return Err(HrfError::Shape(format!(
                "expected {} samples, got {}",
                ncomp * grid.npts(),
                data.len()
            )));
        }
        Ok(Self { grid, slots: slots.to_vec(), data })
    }

    /// Scalar field from a function of the point's real coordinates.
    pub fn scalar_from_fn(grid: GridSpec, f: impl Fn([f64; 4]) -> C64) -> Self {
        let data = (0..grid.npts()).map(|p| f(grid.coords(p))).collect();
        Self { grid, slots: Vec::new(), data }
    }

    /// Scalar field from a function of the linear point index.
    pub fn scalar_from_fn_indexed(grid: GridSpec, f: impl Fn(usize) -> C64) -> Self {
        let data = (0..grid.npts()).map(f).collect();
        Self { grid, slots: Vec::new(), data }
    }

    /// Field from a function returning all components at a point.
    pub fn from_fn(grid: GridSpec, slots: &[Slot], f: impl Fn([f64; 4], &mut [C64])) -> Self {
        let mut out = Self::zeros(grid, slots);
        let ncomp = out.ncomp();
        let npts = grid.npts();
        let mut buf = vec![C64::new(0.0, 0.0); ncomp];
        for p in 0..npts {
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            f(grid.coords(p), &mut buf);
            for c in 0..ncomp {
                out.data[c * npts + p] = buf[c];
            }
        }
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }
    pub fn rank(&self) -> usize {
        self.slots.len()
    }
    pub fn ncomp(&self) -> usize {
        self.grid.n().pow(self.slots.len() as u32)
    }
    pub fn npts(&self) -> usize {
        self.grid.npts()
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn comp(&self, c: usize) -> &[C64] {
        let n = self.npts();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [C64] {
        let n = self.npts();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn component_index(&self, idx: &[usize]) -> usize {
        component_index(self.grid.n(), idx)
    }

    pub fn get(&self, p: usize, idx: &[usize]) -> C64 {
        self.data[self.component_index(idx) * self.npts() + p]
    }

    pub fn set(&mut self, p: usize, idx: &[usize], v: C64) {
        let c = self.component_index(idx);
        let n = self.npts();
        self.data[c * n + p] = v;
    }

    /// All components at point `p`, in component order.
    pub fn gather(&self, p: usize, out: &mut [C64]) {
        let n = self.npts();
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.data[c * n + p];
        }
    }

    pub fn scatter(&mut self, p: usize, vals: &[C64]) {
        let n = self.npts();
        for (c, v) in vals.iter().enumerate() {
            self.data[c * n + p] = *v;
        }
    }

    pub fn same_shape(&self, other: &TensorField) -> bool {
        self.grid == other.grid && self.slots == other.slots
    }

    pub fn axpy(&mut self, alpha: f64, other: &TensorField) {
        assert!(self.same_shape(other), "axpy on mismatched fields");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        assert!(self.same_shape(other), "sub on mismatched fields");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { grid: self.grid, slots: self.slots.clone(), data }
    }

    pub fn scaled(&self, s: f64) -> TensorField {
        Self { grid: self.grid, slots: self.slots.clone(), data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn conj(&self) -> TensorField {
        let slots: Vec<Slot> = self.slots.iter().map(|s| s.conj()).collect();
        Self { grid: self.grid, slots, data: self.data.iter().map(|v| v.conj()).collect() }
    }

    /// Largest absolute component value over the given points.
    pub fn max_abs_on(&self, points: &[usize]) -> f64 {
        let n = self.npts();
        let mut m: f64 = 0.0;
        for c in 0..self.ncomp() {
            for &p in points {
                m = m.max(self.data[c * n + p].norm());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// Copy of this periodic field restricted to a window of the same lattice;
    /// samples outside `[0, N)` wrap around.
    pub fn extract_window(&self, window: GridSpec) -> Result<TensorField> {
        if !self.grid.is_periodic() {
            return Err(HrfError::InvalidGrid("window extraction needs a periodic source field".into()));
        }
        if window.n() != self.grid.n() || window.res() != self.grid.res() {
            return Err(HrfError::InvalidGrid("window lattice differs from source lattice".into()));
        }
        if window == self.grid {
            return Ok(self.clone());
        }
        let res = self.grid.res() as i64;
        let mut out = TensorField::zeros(window, &self.slots);
        let src_n = self.npts();
        let dst_n = window.npts();
        let mut src_idx = [0usize; 4];
        for p in 0..dst_n {
            let li = window.lattice_index(p);
            for a in 0..window.axes() {
                src_idx[a] = li[a].rem_euclid(res) as usize;
            }
            let q = self.grid.linear_index(&src_idx);
            for c in 0..self.ncomp() {
                out.data[c * dst_n + p] = self.data[c * src_n + q];
            }
        }
        Ok(out)
    }
}

pub fn component_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Inverse of [`component_index`] for a tensor of the given rank.
pub fn component_multi(n: usize, rank: usize, mut c: usize, out: &mut [usize]) {
    for s in (0..rank).rev() {
        out[s] = c % n;
        c /= n;
    }
}

/// Direction of a complex derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    /// `∂_a = ½(∂_{x_a} − i ∂_{y_a})`
    Hol(usize),
    /// `∂_{ā} = ½(∂_{x_a} + i ∂_{y_a})`
    Anti(usize),
}

impl Dir {
    pub fn axis(self) -> usize {
        match self {
            Dir::Hol(a) | Dir::Anti(a) => a,
        }
    }
}

const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];

/// Offset of the first tap and the five weights (scaled by 12) of the
/// 4th-order first-derivative stencil at position `j` of a line of length
/// `len`.
#[inline]
fn stencil(j: usize, len: usize, periodic: bool) -> (isize, [f64; 5]) {
    if periodic || (j >= 2 && j + 2 < len) {
        return (-2, CENTRAL);
    }
    if j == 0 {
        (0, EDGE0)
    } else if j == 1 {
        (-1, EDGE1)
    } else if j + 2 == len {
        let w = EDGE1;
        (-3, [-w[4], -w[3], -w[2], -w[1], -w[0]])
    } else {
        let w = EDGE0;
        (-4, [-w[4], -w[3], -w[2], -w[1], -w[0]])
    }
}

/// `dst += coef * ∂_{axis} src` for one component slice.
pub fn add_axis_derivative(grid: &GridSpec, src: &[C64], dst: &mut [C64], axis: usize, coef: C64) {
    let len = grid.shape()[axis];
    let stride = grid.stride(axis);
    let outer = grid.npts() / (len * stride);
    let periodic = grid.is_periodic();
    let scale = coef / (12.0 * grid.h());
    let edge_rows: &[usize] = if len >= 4 { &[0, 1, len - 2, len - 1] } else { &[] };
    for o in 0..outer {
        let base = o * len * stride;
        if stride == 1 {
            let line = &src[base..base + len];
            let out = &mut dst[base..base + len];
            for j in 2..len - 2 {
                let s = (line[j + 1] - line[j - 1]) * 8.0 + (line[j - 2] - line[j + 2]);
                out[j] += s * scale;
            }
        } else {
            for j in 2..len - 2 {
                let (r0, r1, r3, r4) =
                    ((j - 2) * stride + base, (j - 1) * stride + base, (j + 1) * stride + base, (j + 2) * stride + base);
                let out = &mut dst[base + j * stride..base + (j + 1) * stride];
                let (a, b, c, d) = (&src[r0..r0 + stride], &src[r1..r1 + stride], &src[r3..r3 + stride], &src[r4..r4 + stride]);
                for t in 0..stride {
                    let s = (c[t] - b[t]) * 8.0 + (a[t] - d[t]);
                    out[t] += s * scale;
                }
            }
        }
        for &j in edge_rows {
            let (off, w) = stencil(j, len, periodic);
            let mut rows = [0usize; 5];
            for (k, r) in rows.iter_mut().enumerate() {
                let jj = j as isize + off + k as isize;
                let jj = if periodic { jj.rem_euclid(len as isize) } else { jj } as usize;
                *r = base + jj * stride;
            }
            let out = base + j * stride;
            if periodic {
                for t in 0..stride {
                    let s = (src[rows[3] + t] - src[rows[1] + t]) * 8.0 + (src[rows[0] + t] - src[rows[4] + t]);
                    dst[out + t] += s * scale;
                }
                continue;
            }
            for t in 0..stride {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..5 {
                    s += src[rows[k] + t] * w[k];
                }
                dst[out + t] += s * scale;
            }
        }
    }
}

/// `dst += ∂_dir src` for one component slice.
pub fn add_complex_derivative(grid: &GridSpec, src: &[C64], dst: &mut [C64], dir: Dir) {
    let (a, sign) = match dir {
        Dir::Hol(a) => (a, -1.0),
        Dir::Anti(a) => (a, 1.0),
    };
    add_axis_derivative(grid, src, dst, 2 * a, C64::new(0.5, 0.0));
    add_axis_derivative(grid, src, dst, 2 * a + 1, C64::new(0.0, 0.5 * sign));
}

fn check_axis(grid: &GridSpec, dir: Dir) -> Result<()> {
    if dir.axis() >= grid.n() {
        return Err(HrfError::AxisOutOfRange { axis: dir.axis(), n: grid.n() });
    }
    Ok(())
}

/// Componentwise complex partial derivative; the result has the same slots.
pub fn partial(field: &TensorField, dir: Dir) -> Result<TensorField> {
    check_axis(field.grid(), dir)?;
    let mut out = TensorField::zeros(*field.grid(), field.slots());
    for c in 0..field.ncomp() {
        let n = field.npts();
        let src = &field.data[c * n..(c + 1) * n];
        add_complex_derivative(&field.grid, src, &mut out.data[c * n..(c + 1) * n], dir);
    }
    Ok(out)
}

/// `∂_a f = ½(∂_{x_a} − i∂_{y_a}) f`, componentwise.
pub fn d_hol(field: &TensorField, axis: usize) -> Result<TensorField> {
    partial(field, Dir::Hol(axis))
}

/// `∂_{ā} f = ½(∂_{x_a} + i∂_{y_a}) f`, componentwise.
pub fn d_antihol(field: &TensorField, axis: usize) -> Result<TensorField> {
    partial(field, Dir::Anti(axis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(GridSpec::periodic(1, 4).is_err());
        assert!(GridSpec::periodic(3, 16).is_err());
        assert!(GridSpec::frozen(1, 16, 1).is_err());
        assert!(GridSpec::frozen(2, 8, 2).is_ok());
    }

    #[test]
    fn point_counts_and_indexing() {
        let g = GridSpec::periodic(2, 8).unwrap();
        assert_eq!(g.npts(), 8usize.pow(4));
        for p in [0, 17, 4095] {
            assert_eq!(g.linear_index(&g.multi_index(p)), p);
        }
        let f = TensorField::zeros(g, &[Slot::Lo, Slot::LoBar]);
        assert_eq!(f.ncomp(), 4);
        assert_eq!(f.data().len(), 4 * 4096);
    }

    #[test]
    fn constant_has_zero_derivative() {
        for g in [GridSpec::periodic(1, 16).unwrap(), GridSpec::frozen(2, 8, 2).unwrap()] {
            let f = TensorField::scalar_from_fn(g, |_| c(3.5, -1.25));
            for a in 0..g.n() {
                assert_eq!(d_hol(&f, a).unwrap().max_abs(), 0.0);
                assert_eq!(d_antihol(&f, a).unwrap().max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn axis_out_of_range() {
        let g = GridSpec::periodic(1, 16).unwrap();
        let f = TensorField::scalar(g);
        assert!(matches!(d_hol(&f, 1), Err(HrfError::AxisOutOfRange { .. })));
    }

    #[test]
    fn exp_wave_holomorphic_derivative() {
        let g = GridSpec::periodic(1, 32).unwrap();
        let f = TensorField::scalar_from_fn(g, |x| (c(0.0, 2.0 * PI * x[0])).exp());
        let d = d_hol(&f, 0).unwrap();
        let tol = 10.0 * (2.0 * PI * g.h()).powi(4);
        let mut err: f64 = 0.0;
        for p in 0..g.npts() {
            let x = g.coords(p);
            let exact = c(0.0, PI) * c(0.0, 2.0 * PI * x[0]).exp();
            err = err.max((d.comp(0)[p] - exact).norm());
        }
        assert!(err <= tol, "err {err} tol {tol}");
    }

    #[test]
    fn sine_in_y_derivative() {
        let g = GridSpec::periodic(1, 32).unwrap();
        let f = TensorField::scalar_from_fn(g, |x| c((2.0 * PI * x[1]).sin(), 0.0));
        let d = d_hol(&f, 0).unwrap();
        let tol = 10.0 * (2.0 * PI * g.h()).powi(4);
        for p in 0..g.npts() {
            let x = g.coords(p);
            // ½(∂x − i∂y) sin(2πy) = −iπ cos(2πy)
            let exact = c(0.0, -PI * (2.0 * PI * x[1]).cos());
            assert!((d.comp(0)[p] - exact).norm() <= tol);
        }
    }

    #[test]
    fn antiholomorphic_derivative_of_windowed_holomorphic_sample() {
        // e^{2πi z} is holomorphic; on an interior box it has ∂̄ = 0 up to
        // truncation.
        let g = GridSpec::frozen(1, 64, 2).unwrap();
        let f = TensorField::scalar_from_fn(g, |x| (c(0.0, 2.0 * PI) * c(x[0], x[1])).exp());
        let d = d_antihol(&f, 0).unwrap();
        let scale = f.max_abs() * 2.0 * PI;
        let interior = g.diagnostic_points();
        assert!(d.max_abs_on(&interior) <= scale * 10.0 * (2.0 * PI * g.h()).powi(4));
        let dh = d_hol(&f, 0).unwrap();
        assert!(dh.max_abs_on(&interior) > 1.0);
    }

    #[test]
    fn conjugation_symmetry_of_derivatives() {
        let g = GridSpec::frozen(2, 8, 2).unwrap();
        let f = TensorField::scalar_from_fn(g, |x| c(x[0] * x[3] + x[1].sin(), x[2] * x[2] - x[1]));
        for a in 0..2 {
            let lhs = d_antihol(&f.conj(), a).unwrap();
            let rhs = d_hol(&f, a).unwrap().conj();
            assert!(lhs.sub(&rhs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn observed_order_of_derivative() {
        let mut errs = Vec::new();
        for res in [16, 32, 64] {
            let g = GridSpec::periodic(1, res).unwrap();
            let f = TensorField::scalar_from_fn(g, |x| {
                c((2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(), (2.0 * PI * (x[0] + x[1])).cos())
            });
            let d = d_antihol(&f, 0).unwrap();
            let mut e: f64 = 0.0;
            for p in 0..g.npts() {
                let x = g.coords(p);
                let (sx, cx) = (2.0 * PI * x[0]).sin_cos();
                let (sy, cy) = (2.0 * PI * x[1]).sin_cos();
                let s = (2.0 * PI * (x[0] + x[1])).sin();
                let fx = c(2.0 * PI * cx * cy, -2.0 * PI * s);
                let fy = c(-2.0 * PI * sx * sy, -2.0 * PI * s);
                let exact = (fx + c(0.0, 1.0) * fy) * 0.5;
                e = e.max((d.comp(0)[p] - exact).norm());
            }
            errs.push(e);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 3.5, "{errs:?}");
        }
    }

    #[test]
    fn window_extraction_wraps() {
        let g = GridSpec::periodic(1, 8).unwrap();
        let f = TensorField::scalar_from_fn(g, |x| c(x[0], x[1]));
        let w = GridSpec::window(1, 8, &[-2, 6], &[5, 5]).unwrap();
        let fw = f.extract_window(w).unwrap();
        // window point (0,0) is lattice (-2, 6) -> (6, 6)
        assert_eq!(fw.comp(0)[0], c(6.0 / 8.0, 6.0 / 8.0));
    }

    proptest::proptest! {
        #[test]
        fn periodic_derivative_is_shift_equivariant(seed in 0u64..1000, axis in 0usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = GridSpec::periodic(2, 8).unwrap();
            let vals: Vec<C64> = (0..g.npts()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = TensorField::from_data(g, &[], vals).unwrap();
            let shift = |fld: &TensorField| {
                let mut out = TensorField::scalar(g);
                for p in 0..g.npts() {
                    let mut idx = g.multi_index(p);
                    idx[axis] = (idx[axis] + 1) % 8;
                    out.data_mut()[g.linear_index(&idx)] = fld.data()[p];
                }
                out
            };
            for dir in [Dir::Hol(axis / 2), Dir::Anti(axis / 2)] {
                let a = partial(&shift(&f), dir).unwrap();
                let b = shift(&partial(&f, dir).unwrap());
                proptest::prop_assert!(a.sub(&b).max_abs() == 0.0);
            }
        }
    }
}
