//! Spectrum fitting on a two-layer critical-dimension stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fourier::FourierMode;
use crate::geometry::{draw, Geometry, Rectangle};
use crate::kspace::{SimConfig, Truncation};
use crate::linalg::c64;
use crate::scattering::Solver;

use super::{fd_gradient, reflectance_spectrum, Algorithm, Design, FomKind, FomSpec, OptimizerState, ParamKind, ParamVector};

/// (name, prior mean, prior std, ground truth) for P1–P8.
pub const OCD_PRIORS: [(&str, f64, f64, f64); 8] = [
    ("P1", 100.0, 3.0, 101.5),
    ("P2", 80.0, 3.0, 81.5),
    ("P3", 100.0, 3.0, 98.5),
    ("P4", 80.0, 3.0, 81.5),
    ("P5", 30.0, 2.0, 31.0),
    ("P6", 50.0, 1.0, 49.5),
    ("P7", 200.0, 10.0, 205.0),
    ("P8", 300.0, 10.0, 305.0),
];

/// Two patterned layers on a substrate, normal incidence from air.
///
/// Layer 1 (thickness P7): two P1×P2 and P3×P4 blocks of `n_block` in
/// `n_fill`, centered at (Λx/4, Λy/2) and (3Λx/4, Λy/2).
/// Layer 2 (thickness P8): air with two lines of `n_line` spanning Y, widths
/// P5 and P6, at the same x positions.
#[derive(Debug, Clone, PartialEq)]
pub struct OcdStack {
    pub period: [f64; 2],
    pub n_fill: f64,
    pub n_block: f64,
    pub n_line: f64,
    pub n_substrate: f64,
    pub fto: Truncation,
    pub mode: FourierMode,
    pub wavelengths: Vec<f64>,
}

impl Default for OcdStack {
    fn default() -> Self {
        OcdStack {
            period: [300.0, 200.0],
            n_fill: 1.45,
            n_block: 2.0,
            n_line: 3.5,
            n_substrate: 3.5,
            fto: Truncation::new(1, 1),
            mode: FourierMode::Cfs,
            wavelengths: (0..32).map(|i| 400.0 + 400.0 * i as f64 / 31.0).collect(),
        }
    }
}

impl OcdStack {
    pub fn template(&self) -> SimConfig {
        SimConfig::new(self.wavelengths[0], self.period, self.fto, vec![])
            .with_indices(1.0, self.n_substrate)
            .with_psi(std::f64::consts::FRAC_PI_4)
    }

    /// Parameter vector with shape bounds that keep the primitives inside
    /// their half of the cell.
    pub fn params(&self, values: Vec<f64>) -> Result<ParamVector> {
        if values.len() != 8 {
            return Err(Error::Shape(format!("stack takes 8 parameters, got {}", values.len())));
        }
        let [px, py] = self.period;
        let hi = vec![px / 2.0, py, px / 2.0, py, px / 2.0, px / 2.0, 10.0 * px, 10.0 * px];
        ParamVector::new(
            OCD_PRIORS.iter().map(|p| p.0.to_string()).collect(),
            values,
            vec![1.0; 8],
            hi,
            vec![ParamKind::Shape; 8],
        )
    }

    pub fn ground_truth(&self) -> Vec<f64> {
        OCD_PRIORS.iter().map(|p| p.3).collect()
    }

    pub fn fom(&self, target: Vec<f64>) -> Result<FomSpec> {
        FomSpec::new(
            FomKind::SpectrumMse {
                wavelengths: self.wavelengths.clone(),
                target,
            },
            self.template(),
        )
    }

    /// DE_r(0,0) over the wavelength grid.
    pub fn spectrum(&self, solver: &Solver, values: &[f64]) -> Result<Vec<f64>> {
        let (geometry, thickness) = self.realize(values)?;
        let mut cfg = self.template();
        cfg.thickness = thickness;
        reflectance_spectrum(solver, &geometry, &cfg, &self.wavelengths)
    }
}

impl Design for OcdStack {
    fn realize(&self, v: &[f64]) -> Result<(Geometry, Vec<f64>)> {
        if v.len() != 8 {
            return Err(Error::Shape(format!("stack takes 8 parameters, got {}", v.len())));
        }
        let [px, py] = self.period;
        let eps = |n: f64| c64::new(n * n, 0.0);
        let (xa, xb, yc) = (px / 4.0, 3.0 * px / 4.0, py / 2.0);
        let layout = draw(
            self.period,
            vec![
                (
                    eps(self.n_fill),
                    vec![
                        Rectangle::new(xa, yc, v[0], v[1], eps(self.n_block))?,
                        Rectangle::new(xb, yc, v[2], v[3], eps(self.n_block))?,
                    ],
                ),
                (
                    eps(1.0),
                    vec![
                        Rectangle::new(xa, yc, v[4], py, eps(self.n_line))?,
                        Rectangle::new(xb, yc, v[5], py, eps(self.n_line))?,
                    ],
                ),
            ],
        );
        Ok((Geometry::Vector(layout), vec![v[6], v[7]]))
    }
}

/// Initial estimate P̂₀ drawn from the per-parameter normal priors.
pub fn draw_initial(seed: u64) -> Vec<f64> {
    let priors: Vec<(f64, f64)> = OCD_PRIORS.iter().map(|p| (p.1, p.2)).collect();
    draw_from_priors(&priors, seed).expect("finite priors")
}

/// One normal draw per (mean, std) pair from a ChaCha8 stream seeded by `seed`.
pub fn draw_from_priors(priors: &[(f64, f64)], seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    priors
        .iter()
        .map(|&(mean, std)| {
            if !(std >= 0.0) {
                return Err(Error::Domain(format!("prior N({mean}, {std}): negative or NaN std")));
            }
            Normal::new(mean, std)
                .map(|d| d.sample(&mut rng))
                .map_err(|e| Error::Domain(format!("prior N({mean}, {std}): {e}")))
        })
        .collect()
}

/// Loss trajectory of one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRun {
    pub algorithm: Algorithm,
    pub lr: f64,
    /// Loss at P̂ᵢ for i = 0..=iterations.
    pub loss: Vec<f64>,
    /// Parameter values at every iterate, aligned with `loss`.
    pub params: Vec<Vec<f64>>,
}

impl FitRun {
    pub fn initial_loss(&self) -> f64 {
        self.loss[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss.last().unwrap()
    }

    pub fn final_params(&self) -> &[f64] {
        self.params.last().unwrap()
    }
}

/// Fits the stack's parameters to a target reflectance spectrum by descending
/// the MSE with finite-difference gradients.
pub fn spectrum_fit(
    stack: &OcdStack,
    solver: &Solver,
    target: &[f64],
    initial: Vec<f64>,
    algorithm: Algorithm,
    lr: f64,
    iterations: usize,
) -> Result<FitRun> {
    let fom = stack.fom(target.to_vec())?;
    let mut p = stack.params(initial)?;
    let mut opt = OptimizerState::new(algorithm, lr, p.len())?;
    let eval = |x: &[f64]| fom.evaluate(solver, stack, x);
    let mut loss = Vec::with_capacity(iterations + 1);
    let mut params = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        loss.push(eval(&p.values)?);
        params.push(p.values.clone());
        let g = fd_gradient(&eval, &p, None)?;
        opt.step(&mut p, &g.values)?;
    }
    loss.push(eval(&p.values)?);
    params.push(p.values);
    Ok(FitRun {
        algorithm,
        lr,
        loss,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priors_draw_is_seeded() {
        assert_eq!(draw_initial(4), draw_initial(4));
        assert_ne!(draw_initial(4), draw_initial(5));
        assert!(draw_from_priors(&[(1.0, -1.0)], 0).is_err());
        let p = draw_initial(0);
        for (v, prior) in p.iter().zip(OCD_PRIORS) {
            assert!((v - prior.1).abs() < 6.0 * prior.2);
        }
    }

    #[test]
    fn ground_truth_is_a_zero_loss_fixed_point() {
        let stack = OcdStack {
            wavelengths: vec![450.0, 600.0, 750.0],
            ..OcdStack::default()
        };
        let solver = Solver::with_cache(stack.mode);
        let truth = stack.ground_truth();
        let target = stack.spectrum(&solver, &truth).unwrap();
        let run = spectrum_fit(&stack, &solver, &target, truth.clone(), Algorithm::Momentum, 1e2, 3).unwrap();
        assert!(run.initial_loss() <= 1e-20);
        assert!(run.loss.iter().all(|&l| l >= 0.0));
        for (a, b) in run.final_params().iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn stack_is_lossless_and_energy_conserving() {
        let stack = OcdStack::default();
        let (g, d) = stack.realize(&stack.ground_truth()).unwrap();
        let mut cfg = stack.template();
        cfg.thickness = d;
        for w in [400.0, 612.0, 800.0] {
            cfg.wavelength = w;
            let r = Solver::new(stack.mode).solve(&g, &cfg).unwrap();
            assert!((r.total_r() + r.total_t() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let stack = OcdStack::default();
        assert!(stack.params(vec![1.0; 7]).is_err());
        assert!(stack.realize(&[1.0; 9]).is_err());
    }
}
