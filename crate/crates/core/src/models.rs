//! Closed-form model metrics used as initial data and as oracles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{HrfError, Result};
use crate::grid::{GridSpec, C64};
use crate::linalg::{self, Mat, ONE};
use crate::metric::MetricField;

/// One plane wave `amp·cos(2π m·x + phase)` of a periodic Kähler potential.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Mode {
    m: [f64; 4],
    amp: f64,
    phase: f64,
}

const POTENTIAL_0: [Mode; 3] = [
    Mode { m: [1.0, 0.0, 0.0, 1.0], amp: 1.0, phase: 0.3 },
    Mode { m: [0.0, 1.0, -1.0, 0.0], amp: 0.8, phase: -1.1 },
    Mode { m: [0.0, 0.0, 1.0, 0.0], amp: 0.6, phase: 0.0 },
];
const POTENTIAL_1: [Mode; 2] = [
    Mode { m: [1.0, 1.0, 0.0, 0.0], amp: 0.7, phase: 0.0 },
    Mode { m: [0.0, 0.0, 0.0, 1.0], amp: 1.0, phase: 0.5 },
];

/// Mixed wavenumbers: the discrete mixed partials of its samples do not
/// commute exactly, so the sampled metric carries truncation-level torsion.
const POTENTIAL_2: [Mode; 2] = [
    Mode { m: [2.0, 1.0, 0.0, 1.0], amp: 0.5, phase: 0.2 },
    Mode { m: [1.0, 0.0, 1.0, -2.0], amp: 0.5, phase: -0.7 },
];

fn potential_modes(id: u32) -> Option<&'static [Mode]> {
    match id {
        0 => Some(&POTENTIAL_0),
        1 => Some(&POTENTIAL_1),
        2 => Some(&POTENTIAL_2),
        _ => None,
    }
}

/// Built-in initial metrics. Box coordinates are `[0,1)^{2n}`; `center`
/// fields default to the box centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricModel {
    Flat,
    /// `e^u δ` with `u = amplitude·(|z − c|²/width²)²`: plurisubharmonic,
    /// strictly so away from the centre.
    ConformalBump { amplitude: f64, width: f64 },
    /// `R²/(R² − |z − c|²)²` (`n = 1`); Kähler–Einstein with `Ric = −2g`.
    Poincare { center: [f64; 2], radius: f64 },
    /// Ball metric `(3/2)·i∂∂̄(−log(1 − |w|²))`, `w = (z − c)/R` (`n = 2`);
    /// Kähler–Einstein with `Ric = −2g`.
    ComplexHyperbolic { radius: f64 },
    /// `1 ⊕ Poincaré(z₂)` (`n = 2`).
    ProductFlatPoincare { radius: f64 },
    /// `δ + ε·i∂∂̄ψ` for a built-in periodic potential `ψ`.
    KahlerPotential { id: u32, eps: f64 },
    /// Periodic non-Kähler perturbation `δ + ε·P(x)`.
    NonKahlerPerturbed { eps: f64 },
}

impl MetricModel {
    /// Validates parameters for complex dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(HrfError::Config(msg));
        match *self {
            MetricModel::Flat => Ok(()),
            MetricModel::ConformalBump { amplitude, width } => {
                if !(amplitude >= 0.0) || !(width > 0.0) {
                    return bad(format!("conformal bump needs amplitude >= 0 and width > 0, got {amplitude}, {width}"));
                }
                Ok(())
            }
            MetricModel::Poincare { center, radius } => {
                if n != 1 {
                    return bad("poincare model needs n = 1".into());
                }
                let far = corner_distance_sq(&[center[0], center[1], 0.0, 0.0], 1);
                if !(radius * radius > far) {
                    return bad(format!(
                        "poincare radius {radius} does not contain the unit box (needs > {:.4})",
                        far.sqrt()
                    ));
                }
                Ok(())
            }
            MetricModel::ComplexHyperbolic { radius } => {
                if n != 2 {
                    return bad("complex_hyperbolic model needs n = 2".into());
                }
                if !(radius * radius > corner_distance_sq(&[0.5; 4], 2)) {
                    return bad(format!("complex_hyperbolic radius {radius} must exceed 1"));
                }
                Ok(())
            }
            MetricModel::ProductFlatPoincare { radius } => {
                if n != 2 {
                    return bad("product_flat_poincare model needs n = 2".into());
                }
                if !(radius * radius > 0.5) {
                    return bad(format!("product_flat_poincare radius {radius} must exceed sqrt(1/2)"));
                }
                Ok(())
            }
            MetricModel::KahlerPotential { id, eps } => {
                let modes = potential_modes(id).ok_or_else(|| HrfError::Config(format!("unknown potential id {id}")))?;
                // eigenvalues of δ + ε Σ ... are ≥ 1 − |ε| Σ amp |m|²
                let bound: f64 = modes.iter().map(|md| md.amp * md.m.iter().map(|v| v * v).sum::<f64>()).sum();
                if !(eps.abs() * bound < 1.0) {
                    return bad(format!("kahler potential eps {eps} too large (|eps| must be < {:.4})", 1.0 / bound));
                }
                Ok(())
            }
            MetricModel::NonKahlerPerturbed { eps } => {
                if !(eps.abs() < 0.5) {
                    return bad(format!("non-Kähler perturbation eps {eps} must satisfy |eps| < 0.5"));
                }
                Ok(())
            }
        }
    }

    /// Whether the model is periodic on the unit box.
    pub fn is_periodic(&self) -> bool {
        matches!(self, MetricModel::Flat | MetricModel::KahlerPotential { .. } | MetricModel::NonKahlerPerturbed { .. })
    }

    /// Whether the model is Kähler by construction.
    pub fn is_kahler(&self, n: usize) -> bool {
        n == 1 || !matches!(self, MetricModel::ConformalBump { .. } | MetricModel::NonKahlerPerturbed { .. })
    }

    /// `g_{i j̄}` at real coordinates `x`.
    pub fn eval(&self, n: usize, x: [f64; 4]) -> Mat {
        match *self {
            MetricModel::Flat => linalg::identity(n),
            MetricModel::ConformalBump { amplitude, width } => {
                let r2 = dist_sq(&x, &[0.5; 4], n) / (width * width);
                let u = amplitude * r2 * r2;
                linalg::scale(n, &linalg::identity(n), u.exp())
            }
            MetricModel::Poincare { center, radius } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                let mut m = linalg::zero();
                m[0][0] = C64::new(radius * radius / (radius * radius - r2).powi(2), 0.0);
                m
            }
            MetricModel::ComplexHyperbolic { radius } => ball_metric(n, x, radius),
            MetricModel::ProductFlatPoincare { radius } => {
                let mut m = linalg::zero();
                m[0][0] = ONE;
                let r2 = (x[2] - 0.5).powi(2) + (x[3] - 0.5).powi(2);
                m[1][1] = C64::new(radius * radius / (radius * radius - r2).powi(2), 0.0);
                m
            }
            MetricModel::KahlerPotential { id, eps } => {
                let modes = potential_modes(id).unwrap_or(&[]);
                let mut m = linalg::identity(n);
                for md in modes {
                    let arg = 2.0 * PI * (0..2 * n).map(|a| md.m[a] * x[a]).sum::<f64>() + md.phase;
                    // ψ_mode = amp/π² cos(arg), i∂_i∂_{j̄}ψ_mode = −¼ α_i conj(α_j) ψ_mode,
                    // α_i = 2π(m_{x_i} − i m_{y_i})
                    let psi = md.amp / (PI * PI) * arg.cos();
                    for i in 0..n {
                        for j in 0..n {
                            let ai = C64::new(md.m[2 * i], -md.m[2 * i + 1]) * (2.0 * PI);
                            let aj = C64::new(md.m[2 * j], -md.m[2 * j + 1]) * (2.0 * PI);
                            m[i][j] -= ai * aj.conj() * (0.25 * eps * psi);
                        }
                    }
                }
                m
            }
            MetricModel::NonKahlerPerturbed { eps } => non_kahler(n, x, eps),
        }
    }

    /// Exact solution of the flow at time `t` when one is known.
    pub fn exact(&self, n: usize, x: [f64; 4], t: f64) -> Option<Mat> {
        match self {
            MetricModel::Flat => Some(self.eval(n, x)),
            MetricModel::Poincare { .. } | MetricModel::ComplexHyperbolic { .. } => {
                Some(linalg::scale(n, &self.eval(n, x), 1.0 + 2.0 * t))
            }
            MetricModel::ProductFlatPoincare { .. } => {
                let mut m = self.eval(n, x);
                m[1][1] *= 1.0 + 2.0 * t;
                Some(m)
            }
            _ => None,
        }
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact(1, [0.5; 4], 0.0).is_some() || self.exact(2, [0.5; 4], 0.0).is_some()
    }

    /// Einstein constant `λ` with `Ric = −λ g` for the Kähler–Einstein models.
    pub fn einstein_constant(&self) -> Option<f64> {
        match self {
            MetricModel::Poincare { .. } | MetricModel::ComplexHyperbolic { .. } => Some(2.0),
            _ => None,
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Result<MetricField> {
        self.validate(grid.n())?;
        let n = grid.n();
        MetricField::from_fn(grid, |x| self.eval(n, x))
    }

    pub fn sample_exact(&self, grid: GridSpec, t: f64) -> Option<Result<MetricField>> {
        let n = grid.n();
        self.exact(n, [0.5; 4], t)?;
        Some(MetricField::from_fn(grid, |x| self.exact(n, x, t).unwrap_or_else(|| linalg::identity(n))))
    }

    /// Default poincare patch used throughout the examples.
    pub fn poincare_default() -> Self {
        MetricModel::Poincare { center: [0.5, 0.5], radius: 1.0 }
    }
}

fn dist_sq(x: &[f64; 4], c: &[f64; 4], n: usize) -> f64 {
    (0..2 * n).map(|a| (x[a] - c[a]).powi(2)).sum()
}

fn corner_distance_sq(c: &[f64; 4], n: usize) -> f64 {
    (0..2 * n).map(|a| c[a].max(1.0 - c[a]).powi(2)).sum()
}

fn ball_metric(n: usize, x: [f64; 4], radius: f64) -> Mat {
    let a = (n as f64 + 1.0) / 2.0;
    let w = [
        C64::new(x[0] - 0.5, x[1] - 0.5) / radius,
        C64::new(x[2] - 0.5, x[3] - 0.5) / radius,
    ];
    let s = 1.0 - (0..n).map(|i| w[i].norm_sqr()).sum::<f64>();
    let mut m = linalg::zero();
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            m[i][j] = (C64::new(delta / s, 0.0) + w[i].conj() * w[j] / (s * s)) * (a / (radius * radius));
        }
    }
    m
}

fn non_kahler(n: usize, x: [f64; 4], eps: f64) -> Mat {
    let tp = 2.0 * PI;
    let mut m = linalg::identity(n);
    if n == 1 {
        let u = 0.5 * (tp * x[0]).sin() + 0.3 * (tp * (x[0] + x[1])).cos();
        m[0][0] = C64::new((eps * u).exp(), 0.0);
        return m;
    }
    let p11 = 0.5 * (tp * x[2]).sin() + 0.3 * (tp * (x[1] + x[3])).cos();
    let p22 = 0.4 * (tp * x[0]).cos() + 0.3 * (tp * x[3]).sin();
    let p12 = C64::new(0.3 * (tp * (x[0] - x[3])).cos(), 0.3 * (tp * x[2]).sin());
    m[0][0] += C64::new(eps * p11, 0.0);
    m[1][1] += C64::new(eps * p22, 0.0);
    m[0][1] = p12 * eps;
    m[1][0] = m[0][1].conj();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_wavenumber_potentials_have_no_discrete_torsion() {
        // with |m_i| ∈ {0, 1} every stencil factor is the same, so the
        // discrete mixed partials commute exactly
        let grid = GridSpec::periodic(2, 16).unwrap();
        let torsion = |id| {
            let g = MetricModel::KahlerPotential { id, eps: 0.02 }.sample(grid).unwrap();
            let st = crate::chern::build_stack(&g).unwrap();
            st.torsion.max_abs()
        };
        assert!(torsion(0) < 1e-13);
        assert!(torsion(1) < 1e-13);
        assert!(torsion(2) > 1e-4);
    }

    #[test]
    fn models_are_positive_on_the_box() {
        let cases = [
            (1, MetricModel::Flat),
            (2, MetricModel::Flat),
            (1, MetricModel::poincare_default()),
            (2, MetricModel::ComplexHyperbolic { radius: 1.5 }),
            (2, MetricModel::ProductFlatPoincare { radius: 1.0 }),
            (2, MetricModel::KahlerPotential { id: 0, eps: 0.15 }),
            (2, MetricModel::KahlerPotential { id: 1, eps: 0.15 }),
            (2, MetricModel::NonKahlerPerturbed { eps: 0.1 }),
            (2, MetricModel::ConformalBump { amplitude: 1.0, width: 1.0 }),
        ];
        for (n, m) in cases {
            let grid = GridSpec::frozen(n, 8, 2).unwrap();
            m.sample(grid).unwrap_or_else(|e| panic!("{m:?}: {e}"));
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(MetricModel::Poincare { center: [0.5, 0.5], radius: 0.5 }.validate(1).is_err());
        assert!(MetricModel::ComplexHyperbolic { radius: 1.5 }.validate(1).is_err());
        assert!(MetricModel::KahlerPotential { id: 0, eps: 1.0 }.validate(2).is_err());
        assert!(MetricModel::KahlerPotential { id: 7, eps: 0.1 }.validate(2).is_err());
    }

    #[test]
    fn ball_metric_reduces_to_poincare_in_one_dimension() {
        let x = [0.3, 0.7, 0.0, 0.0];
        let a = ball_metric(1, x, 1.3)[0][0];
        let b = MetricModel::Poincare { center: [0.5, 0.5], radius: 1.3 }.eval(1, x)[0][0];
        assert!((a - b).norm() < 1e-14);
    }
}
