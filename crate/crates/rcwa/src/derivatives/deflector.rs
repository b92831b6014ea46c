//! Gray-scale beam-deflector optimization followed by binarization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::FourierMode;
use crate::geometry::{Geometry, Grid, UCell};
use crate::kspace::{SimConfig, Truncation};
use crate::linalg::c64;
use crate::scattering::Solver;

use super::{fd_gradient, Algorithm, Design, FomKind, FomSpec, OptimizerState, ParamVector};

/// One-layer 1-D deflector: a row of `cells` pixels between two half spaces,
/// illuminated at normal incidence from the superstrate.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectorSetup {
    pub wavelength: f64,
    /// Target deflection angle in radians.
    pub deflect_angle: f64,
    pub cells: usize,
    pub fto: usize,
    pub thickness: f64,
    pub n_i: f64,
    pub n_ii: f64,
    pub n_air: f64,
    pub n_si: f64,
    /// 0 for TE, 1 for TM.
    pub pol: f64,
    pub mode: FourierMode,
    /// Absolute FD step on the refractive index; `None` uses the default.
    pub fd_step: Option<f64>,
}

impl DeflectorSetup {
    /// Silicon pillars on silica, transmitting into air, TM, CFS.
    pub fn new(wavelength: f64, deflect_angle_deg: f64, cells: usize, fto: usize) -> Self {
        DeflectorSetup {
            wavelength,
            deflect_angle: deflect_angle_deg.to_radians(),
            cells,
            fto,
            thickness: 325.0,
            n_i: 1.45,
            n_ii: 1.0,
            n_air: 1.0,
            n_si: 3.6,
            pol: 1.0,
            mode: FourierMode::Cfs,
            fd_step: None,
        }
    }

    /// Λx = λ / sin θ_d, so that the first transmitted order leaves at θ_d.
    pub fn period(&self) -> f64 {
        (self.wavelength / self.deflect_angle.sin()).abs()
    }

    pub fn config(&self) -> Result<SimConfig> {
        SimConfig::new(
            self.wavelength,
            [self.period(), 1.0],
            Truncation::new(self.fto, 0),
            vec![self.thickness],
        )
        .with_indices(self.n_i, self.n_ii)
        .with_pol(self.pol)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells < 2 {
            return Err(Error::Domain(format!("a deflector needs at least 2 cells, got {}", self.cells)));
        }
        if !(self.n_air >= 1.0 && self.n_si > self.n_air) {
            return Err(Error::Domain(format!(
                "material range [{}, {}] is empty or below vacuum",
                self.n_air, self.n_si
            )));
        }
        if !(self.thickness > 0.0) {
            return Err(Error::Domain(format!("thickness must be positive, got {}", self.thickness)));
        }
        self.config()?.validate()
    }

    fn fom(&self) -> Result<FomSpec> {
        FomSpec::new(FomKind::Deflection { px: 1, py: 0 }, self.config()?)
    }
}

impl Design for DeflectorSetup {
    fn realize(&self, values: &[f64]) -> Result<(Geometry, Vec<f64>)> {
        Ok((deflector_geometry(values)?, vec![self.thickness]))
    }
}

/// One raster row of refractive indices, stored as permittivity n².
pub fn deflector_geometry(indices: &[f64]) -> Result<Geometry> {
    let row = Grid::row(indices.iter().map(|&n| c64::new(n * n, 0.0)).collect())?;
    Ok(Geometry::Raster(UCell::from_layers(vec![row])?))
}

/// Snaps each cell to the nearer of `n_air` and `n_si`. Values at the
/// threshold go to `n_si`; the default threshold is the midpoint.
pub fn binary_push(pattern: &[f64], n_air: f64, n_si: f64, threshold: Option<f64>) -> Vec<f64> {
    let t = threshold.unwrap_or(0.5 * (n_air + n_si));
    pattern.iter().map(|&v| if v >= t { n_si } else { n_air }).collect()
}

/// Efficiency of a single pattern.
pub fn deflector_efficiency(setup: &DeflectorSetup, solver: &Solver, pattern: &[f64]) -> Result<f64> {
    setup.fom()?.evaluate(solver, setup, pattern)
}

/// Trajectory of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflectorRun {
    pub seed: u64,
    pub initial: Vec<f64>,
    /// Gray-scale DE_t(+1) before each epoch's update, then after the last.
    pub efficiency: Vec<f64>,
    pub final_pattern: Vec<f64>,
    pub binary_pattern: Vec<f64>,
    pub binary_efficiency: f64,
}

/// Maximizes DE_t(+1) over per-cell refractive indices in [n_air, n_si].
///
/// # Arguments
///
/// * `initial` - starting pattern; `None` draws every cell uniformly from
///   [n_air, n_si] with a ChaCha8 stream seeded by `seed`.
pub fn optimize_deflector(
    setup: &DeflectorSetup,
    epochs: usize,
    algorithm: Algorithm,
    lr: f64,
    seed: u64,
    initial: Option<Vec<f64>>,
) -> Result<DeflectorRun> {
    setup.validate()?;
    let solver = Solver::new(setup.mode);
    let fom = setup.fom()?;
    let initial = match initial {
        Some(v) if v.len() != setup.cells => {
            return Err(Error::Shape(format!("initial pattern has {} cells, expected {}", v.len(), setup.cells)))
        }
        Some(v) => v,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..setup.cells).map(|_| rng.random_range(setup.n_air..=setup.n_si)).collect()
        }
    };
    let mut p = ParamVector::topological("n", initial, setup.n_air, setup.n_si)?;
    let initial = p.values.clone();
    let mut opt = OptimizerState::new(algorithm, lr, p.len())?;
    let eval = |x: &[f64]| fom.evaluate(&solver, setup, x);
    let mut efficiency = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        efficiency.push(eval(&p.values)?);
        let g = fd_gradient(&eval, &p, setup.fd_step)?;
        let descent: Vec<f64> = g.values.iter().map(|v| -v).collect();
        opt.step(&mut p, &descent)?;
    }
    efficiency.push(eval(&p.values)?);
    let binary_pattern = binary_push(&p.values, setup.n_air, setup.n_si, None);
    let binary_efficiency = eval(&binary_pattern)?;
    Ok(DeflectorRun {
        seed,
        initial,
        efficiency,
        final_pattern: p.values,
        binary_pattern,
        binary_efficiency,
    })
}

/// Efficiencies of `count` patterns whose cells are air or silicon with equal
/// probability.
pub fn random_binary_baseline(setup: &DeflectorSetup, count: usize, seed: u64) -> Result<Vec<f64>> {
    setup.validate()?;
    let solver = Solver::new(setup.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let pattern: Vec<f64> = (0..setup.cells)
                .map(|_| if rng.random_bool(0.5) { setup.n_si } else { setup.n_air })
                .collect();
            deflector_efficiency(setup, &solver, &pattern)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_from_deflection_angle() {
        let s = DeflectorSetup::new(1100.0, 70.0, 64, 10);
        assert!((s.period() - 1170.595_549_7).abs() < 1e-6, "{}", s.period());
        let s = DeflectorSetup::new(900.0, 50.0, 64, 10);
        assert!((s.period() - 1174.866_560_4).abs() < 1e-6, "{}", s.period());
    }

    #[test]
    fn binary_push_ties_and_fixed_points() {
        let b = binary_push(&[1.0, 3.6, 2.3, 2.2999, 2.3001], 1.0, 3.6, None);
        assert_eq!(b, vec![1.0, 3.6, 3.6, 1.0, 3.6]);
        let already = vec![3.6, 1.0, 1.0, 3.6];
        assert_eq!(binary_push(&already, 1.0, 3.6, None), already);
        assert_eq!(binary_push(&[2.0], 1.0, 3.6, Some(1.5)), vec![3.6]);
    }

    #[test]
    fn too_few_cells_is_rejected() {
        let s = DeflectorSetup::new(900.0, 50.0, 1, 5);
        assert!(optimize_deflector(&s, 1, Algorithm::Adam, 0.5, 0, None).is_err());
    }

    #[test]
    fn all_silicon_start_is_optimizer_independent() {
        let s = DeflectorSetup::new(900.0, 50.0, 8, 5);
        let first: Vec<f64> = Algorithm::ALL
            .iter()
            .map(|&a| optimize_deflector(&s, 1, a, 0.5, 0, Some(vec![3.6; 8])).unwrap().efficiency[0])
            .collect();
        assert!(first.iter().all(|&e| e == first[0]));
    }

    #[test]
    fn short_run_improves_and_stays_in_range() {
        let s = DeflectorSetup::new(900.0, 50.0, 16, 8);
        let run = optimize_deflector(&s, 6, Algorithm::Adam, 0.5, 3, None).unwrap();
        assert_eq!(run.efficiency.len(), 7);
        assert!(run.efficiency.last().unwrap() > &run.efficiency[0]);
        assert!(run.final_pattern.iter().all(|&n| (1.0..=3.6).contains(&n)));
        assert!(run.binary_pattern.iter().all(|&n| n == 1.0 || n == 3.6));
        assert!((0.0..=1.0).contains(&run.binary_efficiency));
    }
}
