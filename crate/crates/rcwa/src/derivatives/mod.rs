//! Finite-difference gradients over solver figures of merit, first-order
//! optimizers, and the two inverse-design workflows built on them.

mod deflector;
mod ocd;
mod optim;

pub use deflector::{
    binary_push, deflector_efficiency, deflector_geometry, optimize_deflector, random_binary_baseline, DeflectorRun, DeflectorSetup,
};
pub use ocd::{draw_from_priors, draw_initial, spectrum_fit, FitRun, OcdStack, OCD_PRIORS};
pub use optim::{Algorithm, OptimizerState};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::kspace::SimConfig;
use crate::scattering::Solver;

/// How a parameter enters the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Per-cell material value; the topology is free to change.
    Topological,
    /// A length or thickness of a fixed primitive.
    Shape,
}

/// Named real parameters with box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub kinds: Vec<ParamKind>,
}

impl ParamVector {
    pub fn new(names: Vec<String>, values: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, kinds: Vec<ParamKind>) -> Result<Self> {
        let n = values.len();
        if names.len() != n || lo.len() != n || hi.len() != n || kinds.len() != n {
            return Err(Error::Shape("parameter fields differ in length".into()));
        }
        for i in 0..n {
            if !(lo[i] <= hi[i]) {
                return Err(Error::Domain(format!("{}: empty bounds [{}, {}]", names[i], lo[i], hi[i])));
            }
            if kinds[i] == ParamKind::Shape && lo[i] <= 0.0 {
                return Err(Error::Domain(format!("{}: shape parameters must stay positive", names[i])));
            }
        }
        let mut p = ParamVector { names, values, lo, hi, kinds };
        p.project();
        Ok(p)
    }

    /// Per-cell values sharing one range.
    pub fn topological(prefix: &str, values: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        let n = values.len();
        Self::new(
            (0..n).map(|i| format!("{prefix}{i}")).collect(),
            values,
            vec![lo; n],
            vec![hi; n],
            vec![ParamKind::Topological; n],
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Clamps every value into its bounds.
    pub fn project(&mut self) {
        for (v, (&lo, &hi)) in self.values.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Default step: 1e−3 absolute for topological values, 1e−4 relative to
    /// max(|p|, 1) for shape values.
    pub fn default_step(&self, i: usize) -> f64 {
        match self.kinds[i] {
            ParamKind::Topological => 1e-3,
            ParamKind::Shape => 1e-4 * self.values[i].abs().max(1.0),
        }
    }
}

/// Central-difference gradient and the coordinates whose stencil was clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// True where p ± h left the bounds and the stencil was shortened.
    pub clamped: Vec<bool>,
}

/// Central differences `(f(p + h e_i) − f(p − h e_i)) / 2h` for every i.
///
/// `h = None` uses [`ParamVector::default_step`] per coordinate; `Some(h)` uses
/// the same absolute step everywhere. A stencil point outside the bounds is
/// moved onto the bound and the quotient uses the actual spacing. The 2n
/// evaluations run on the current rayon pool.
pub fn fd_gradient<F>(f: F, p: &ParamVector, h: Option<f64>) -> Result<Gradient>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if let Some(h) = h {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
        }
    }
    let stencils: Vec<(f64, f64, bool)> = (0..p.len())
        .map(|i| {
            let step = h.unwrap_or_else(|| p.default_step(i));
            let x = p.values[i];
            let (a, b) = ((x - step).max(p.lo[i]), (x + step).min(p.hi[i]));
            (a, b, a != x - step || b != x + step)
        })
        .collect();
    if let Some(i) = stencils.iter().position(|s| s.1 <= s.0) {
        return Err(Error::Domain(format!("{}: bounds leave no room for a difference", p.names[i])));
    }
    let evals: Vec<f64> = (0..2 * p.len())
        .into_par_iter()
        .map(|k| {
            let (i, upper) = (k / 2, k % 2 == 1);
            let mut x = p.values.clone();
            x[i] = if upper { stencils[i].1 } else { stencils[i].0 };
            f(&x)
        })
        .collect::<Result<_>>()?;
    let values = stencils
        .iter()
        .enumerate()
        .map(|(i, &(a, b, _))| (evals[2 * i + 1] - evals[2 * i]) / (b - a))
        .collect();
    Ok(Gradient {
        values,
        clamped: stencils.iter().map(|s| s.2).collect(),
    })
}

/// Per-coordinate Richardson self-consistency between steps h and h/2:
/// |g_h − g_{h/2}| ≤ max(1e−4, 1e−2 |g_{h/2}|).
pub fn richardson_consistent(g_h: &[f64], g_half: &[f64]) -> Vec<bool> {
    g_h.iter()
        .zip(g_half)
        .map(|(&a, &b)| (a - b).abs() <= 1e-4f64.max(1e-2 * b.abs()))
        .collect()
}

/// Gradients at h and h/2 and their per-coordinate agreement.
pub fn richardson_check<F>(f: F, p: &ParamVector, h: f64) -> Result<(Gradient, Gradient, Vec<bool>)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let a = fd_gradient(&f, p, Some(h))?;
    let b = fd_gradient(&f, p, Some(0.5 * h))?;
    let ok = richardson_consistent(&a.values, &b.values);
    Ok((a, b, ok))
}

/// Maps design parameters to a device: geometry plus per-layer thickness.
pub trait Design: Sync {
    fn realize(&self, values: &[f64]) -> Result<(Geometry, Vec<f64>)>;
}

/// Quantity a design is scored on.
#[derive(Debug, Clone, PartialEq)]
pub enum FomKind {
    /// Transmitted efficiency of the physical order (px, py).
    Deflection { px: i64, py: i64 },
    /// Mean squared error of the specular reflectance DE_r(0,0) over a
    /// wavelength grid against `target`.
    SpectrumMse { wavelengths: Vec<f64>, target: Vec<f64> },
}

/// A figure of merit together with the simulation template it is evaluated
/// under. The template's thickness list is replaced by the design's.
#[derive(Debug, Clone)]
pub struct FomSpec {
    pub kind: FomKind,
    pub template: SimConfig,
}

impl FomSpec {
    pub fn new(kind: FomKind, template: SimConfig) -> Result<Self> {
        match &kind {
            FomKind::Deflection { px, py } => {
                let (m, n) = (template.fto.m as i64, template.fto.n as i64);
                if px.abs() > m || py.abs() > n {
                    return Err(Error::Domain(format!(
                        "order ({px}, {py}) lies outside the truncation ±{m}, ±{n}"
                    )));
                }
            }
            FomKind::SpectrumMse { wavelengths, target } => {
                if wavelengths.is_empty() || wavelengths.len() != target.len() {
                    return Err(Error::Shape("wavelength grid and target spectrum differ in length".into()));
                }
                if wavelengths.iter().any(|&w| !(w > 0.0)) || wavelengths.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Domain("wavelength grid must be positive and strictly increasing".into()));
                }
            }
        }
        Ok(FomSpec { kind, template })
    }

    /// Scores one parameter vector.
    pub fn evaluate(&self, solver: &Solver, design: &dyn Design, values: &[f64]) -> Result<f64> {
        let (geometry, thickness) = design.realize(values)?;
        let mut cfg = self.template.clone();
        cfg.thickness = thickness;
        match &self.kind {
            FomKind::Deflection { px, py } => Ok(solver.solve_efficiencies(&geometry, &cfg)?.de_t_order(*px, *py)),
            FomKind::SpectrumMse { wavelengths, target } => {
                let spectrum = reflectance_spectrum(solver, &geometry, &cfg, wavelengths)?;
                Ok(mse(&spectrum, target))
            }
        }
    }
}

/// DE_r(0,0) at each wavelength.
pub fn reflectance_spectrum(solver: &Solver, geometry: &Geometry, template: &SimConfig, wavelengths: &[f64]) -> Result<Vec<f64>> {
    wavelengths
        .iter()
        .map(|&w| {
            let mut cfg = template.clone();
            cfg.wavelength = w;
            Ok(solver.solve_efficiencies(geometry, &cfg)?.de_r_order(0, 0))
        })
        .collect()
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: Vec<f64>) -> ParamVector {
        let n = values.len();
        ParamVector::new(
            (0..n).map(|i| format!("p{i}")).collect(),
            values,
            vec![-10.0; n],
            vec![10.0; n],
            vec![ParamKind::Topological; n],
        )
        .unwrap()
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let p = pv(vec![0.3, -1.2, 2.5]);
        let g = fd_gradient(|x: &[f64]| Ok(x.iter().map(|v| v * v).sum()), &p, Some(0.1)).unwrap();
        for (gi, xi) in g.values.iter().zip(&p.values) {
            assert!((gi - 2.0 * xi).abs() < 1e-12);
        }
        assert!(g.clamped.iter().all(|&c| !c));
    }

    #[test]
    fn zero_or_negative_step_is_rejected() {
        let p = pv(vec![1.0]);
        assert!(matches!(fd_gradient(|_: &[f64]| Ok(0.0), &p, Some(0.0)), Err(Error::Domain(_))));
        assert!(matches!(fd_gradient(|_: &[f64]| Ok(0.0), &p, Some(-1e-3)), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_direction_has_zero_gradient() {
        let p = pv(vec![1.0, 2.0]);
        let g = fd_gradient(|x: &[f64]| Ok(x[0].sin()), &p, None).unwrap();
        assert!(g.values[1].abs() <= 1e-10);
    }

    #[test]
    fn clamped_stencil_is_flagged_and_uses_actual_spacing() {
        let p = ParamVector::topological("n", vec![1.0, 2.0], 1.0, 3.6).unwrap();
        let g = fd_gradient(|x: &[f64]| Ok(3.0 * x[0] + x[1] * x[1]), &p, None).unwrap();
        assert!(g.clamped[0] && !g.clamped[1]);
        assert!((g.values[0] - 3.0).abs() < 1e-12);
        assert!((g.values[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn default_steps_follow_kind() {
        let p = ParamVector::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![2.0, 250.0, 0.5],
            vec![1.0, 1.0, 0.1],
            vec![3.0, 1000.0, 1.0],
            vec![ParamKind::Topological, ParamKind::Shape, ParamKind::Shape],
        )
        .unwrap();
        assert_eq!(p.default_step(0), 1e-3);
        assert!((p.default_step(1) - 2.5e-2).abs() < 1e-15);
        assert_eq!(p.default_step(2), 1e-4);
    }

    #[test]
    fn richardson_tolerance() {
        assert_eq!(richardson_consistent(&[1.0, 0.0, 5.0], &[1.005, 5e-5, 5.2]), vec![true, true, false]);
    }

    #[test]
    fn fom_validation() {
        let cfg = SimConfig::new(900.0, [1000.0, 1.0], crate::kspace::Truncation::new(2, 0), vec![]);
        assert!(FomSpec::new(FomKind::Deflection { px: 3, py: 0 }, cfg.clone()).is_err());
        assert!(FomSpec::new(FomKind::Deflection { px: 1, py: 0 }, cfg.clone()).is_ok());
        let bad = FomKind::SpectrumMse {
            wavelengths: vec![500.0, 400.0],
            target: vec![0.1, 0.2],
        };
        assert!(FomSpec::new(bad, cfg.clone()).is_err());
        let zero = FomKind::SpectrumMse {
            wavelengths: vec![0.0, 400.0],
            target: vec![0.1, 0.2],
        };
        assert!(FomSpec::new(zero, cfg).is_err());
    }

    #[test]
    fn bounds_are_enforced_on_construction() {
        let p = ParamVector::topological("n", vec![0.5, 4.0], 1.0, 3.6).unwrap();
        assert_eq!(p.values, vec![1.0, 3.6]);
        assert!(ParamVector::new(vec!["w".into()], vec![1.0], vec![0.0], vec![2.0], vec![ParamKind::Shape]).is_err());
    }
}
