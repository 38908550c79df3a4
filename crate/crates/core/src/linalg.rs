//! Closed-form linear algebra on 1×1 and 2×2 complex matrices.
//!
//! Matrices are stored as `[[C64; 2]; 2]` together with the active size `n`;
//! entries outside the leading `n×n` block are ignored.

use crate::grid::C64;

pub type Mat = [[C64; 2]; 2];

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn zero() -> Mat {
    [[ZERO; 2]; 2]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zero();
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = ONE;
    }
    m
}

pub fn det(n: usize, m: &Mat) -> C64 {
    if n == 1 {
        m[0][0]
    } else {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

pub fn inverse(n: usize, m: &Mat) -> Option<Mat> {
    let d = det(n, m);
    if d.norm() == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = zero();
    if n == 1 {
        out[0][0] = ONE / d;
    } else {
        let inv = ONE / d;
        out[0][0] = m[1][1] * inv;
        out[1][1] = m[0][0] * inv;
        out[0][1] = -m[0][1] * inv;
        out[1][0] = -m[1][0] * inv;
    }
    Some(out)
}

pub fn mul(n: usize, a: &Mat, b: &Mat) -> Mat {
    let mut out = zero();
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..n {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn adjoint(n: usize, a: &Mat) -> Mat {
    let mut out = zero();
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

pub fn scale(n: usize, a: &Mat, s: f64) -> Mat {
    let mut out = zero();
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[i][j] * s;
        }
    }
    out
}

/// Average of `a` and its conjugate transpose.
pub fn hermitian_part(n: usize, a: &Mat) -> Mat {
    let mut out = zero();
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (a[i][j] + a[j][i].conj()) * 0.5;
        }
    }
    out
}

/// Eigenvalues `(λ_min, λ_max)` of a Hermitian matrix.
pub fn herm_eigs(n: usize, a: &Mat) -> (f64, f64) {
    if n == 1 {
        return (a[0][0].re, a[0][0].re);
    }
    let mean = 0.5 * (a[0][0].re + a[1][1].re);
    let half = 0.5 * (a[0][0].re - a[1][1].re);
    let r = half.hypot(a[0][1].norm());
    (mean - r, mean + r)
}

/// Eigenpair of the largest eigenvalue of a Hermitian matrix.
pub fn herm_max_eigvec(n: usize, a: &Mat) -> (f64, [C64; 2]) {
    if n == 1 {
        return (a[0][0].re, [ONE, ZERO]);
    }
    let (_, lmax) = herm_eigs(n, a);
    // (a - λ) v = 0: use the row with the larger off-diagonal pivot.
    let b = a[0][1];
    let v = if b.norm() > 1e-300 {
        let v0 = [b, C64::new(lmax - a[0][0].re, 0.0)];
        let v1 = [C64::new(lmax - a[1][1].re, 0.0), a[1][0]];
        if norm2(&v0) >= norm2(&v1) {
            v0
        } else {
            v1
        }
    } else if a[0][0].re >= a[1][1].re {
        [ONE, ZERO]
    } else {
        [ZERO, ONE]
    };
    let s = norm2(&v).sqrt();
    (lmax, [v[0] / s, v[1] / s])
}

fn norm2(v: &[C64; 2]) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

/// Lower-triangular `L` with `m = L L*`, or `None` if `m` is not positive
/// definite.
pub fn cholesky(n: usize, m: &Mat) -> Option<Mat> {
    let mut l = zero();
    let a = m[0][0].re;
    if !(a > 0.0) {
        return None;
    }
    l[0][0] = C64::new(a.sqrt(), 0.0);
    if n == 2 {
        l[1][0] = m[1][0] / l[0][0].re;
        let d = m[1][1].re - l[1][0].norm_sqr();
        if !(d > 0.0) {
            return None;
        }
        l[1][1] = C64::new(d.sqrt(), 0.0);
    }
    Some(l)
}

fn lower_inverse(n: usize, l: &Mat) -> Mat {
    let mut out = zero();
    out[0][0] = ONE / l[0][0];
    if n == 2 {
        out[1][1] = ONE / l[1][1];
        out[1][0] = -l[1][0] * out[0][0] * out[1][1];
    }
    out
}

/// `L⁻¹ A L⁻*` for the Cholesky factor of `m`.
fn reduce(n: usize, a: &Mat, m: &Mat) -> Option<(Mat, Mat)> {
    let l = cholesky(n, m)?;
    let li = lower_inverse(n, &l);
    let c = mul(n, &mul(n, &li, a), &adjoint(n, &li));
    Some((hermitian_part(n, &c), li))
}

/// Extremes of `w* A w / w* M w` for Hermitian `A` and positive `M`.
pub fn gen_eigs(n: usize, a: &Mat, m: &Mat) -> Option<(f64, f64)> {
    let (c, _) = reduce(n, a, m)?;
    Some(herm_eigs(n, &c))
}

/// Maximiser `w` (normalised so that `w* M w = 1`) of `w* A w / w* M w`.
pub fn gen_max_vec(n: usize, a: &Mat, m: &Mat) -> Option<(f64, [C64; 2])> {
    let (c, li) = reduce(n, a, m)?;
    let (lam, u) = herm_max_eigvec(n, &c);
    // w = L⁻* u
    let lia = adjoint(n, &li);
    let mut w = [ZERO; 2];
    for i in 0..n {
        for j in 0..n {
            w[i] += lia[i][j] * u[j];
        }
    }
    Some((lam, w))
}

/// `w* A w` for a Hermitian form.
pub fn quad_form(n: usize, a: &Mat, w: &[C64; 2]) -> f64 {
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..n {
            s += w[i].conj() * a[i][j] * w[j];
        }
    }
    s.re
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_roundtrip() {
        let m = [[c(2.0, 0.0), c(0.3, -0.4)], [c(0.3, 0.4), c(1.5, 0.0)]];
        let inv = inverse(2, &m).unwrap();
        let p = mul(2, &m, &inv);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p[i][j] - c(e, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn eigenvalues_of_hermitian() {
        let m = [[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(2.0, 0.0)]];
        let (lo, hi) = herm_eigs(2, &m);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
        let (l, v) = herm_max_eigvec(2, &m);
        assert!((l - 3.0).abs() < 1e-14);
        let mv = [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
        assert!((mv[0] - v[0] * 3.0).norm() < 1e-13 && (mv[1] - v[1] * 3.0).norm() < 1e-13);
    }

    #[test]
    fn generalized_eigen_against_scaling() {
        let m = [[c(2.0, 0.0), c(0.3, -0.4)], [c(0.3, 0.4), c(1.5, 0.0)]];
        let a = scale(2, &m, -3.0);
        let (lo, hi) = gen_eigs(2, &a, &m).unwrap();
        assert!((lo + 3.0).abs() < 1e-13 && (hi + 3.0).abs() < 1e-13);
        let a2 = [[c(1.0, 0.0), ZERO], [ZERO, c(-1.0, 0.0)]];
        let (l, w) = gen_max_vec(2, &a2, &m).unwrap();
        assert!((quad_form(2, &a2, &w) - l).abs() < 1e-12);
        assert!((quad_form(2, &m, &w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = [[c(1.0, 0.0), c(2.0, 0.0)], [c(2.0, 0.0), c(1.0, 0.0)]];
        assert!(cholesky(2, &m).is_none());
    }
}
