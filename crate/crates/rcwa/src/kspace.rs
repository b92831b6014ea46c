//! Simulation parameters and the wavevector data derived from them.
//!
//! In-plane wavevectors follow the Bloch condition
//! k̃x,m = n_I sinθ cosφ − m λ/Λx and k̃y,n = n_I sinθ sinφ − n λ/Λy, all
//! normalized by k₀ = 2π/λ. Harmonics are flattened with
//! idx(n, m) = (n + N)(2M + 1) + (m + M).

use crate::error::{Error, Result};
use crate::linalg::{c64, ZERO};
use std::f64::consts::FRAC_PI_2;

/// Smallest |k̃z| kept as-is; anything below is nudged to −j·WOOD_FLOOR.
pub const WOOD_FLOOR: f64 = 1e-10;

/// Fourier truncation orders: M along X, N along Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub m: usize,
    pub n: usize,
}

impl Truncation {
    pub fn new(m: usize, n: usize) -> Self {
        Truncation { m, n }
    }

    /// Number of retained harmonics ξ = (2M+1)(2N+1).
    pub fn xi(&self) -> usize {
        (2 * self.m + 1) * (2 * self.n + 1)
    }

    pub fn idx(&self, n: i64, m: i64) -> usize {
        let (mm, nn) = (self.m as i64, self.n as i64);
        assert!(m.abs() <= mm && n.abs() <= nn, "order ({n}, {m}) outside truncation");
        ((n + nn) * (2 * mm + 1) + (m + mm)) as usize
    }

    /// Harmonic pairs (n, m) in flattened order.
    pub fn orders(&self) -> impl Iterator<Item = (i64, i64)> {
        let (mm, nn) = (self.m as i64, self.n as i64);
        (-nn..=nn).flat_map(move |n| (-mm..=mm).map(move |m| (n, m)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    #[default]
    Double,
    /// Emulated single precision: intermediate matrices are rounded to f32.
    Single,
}

/// Incidence and stack scalars. Angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub wavelength: f64,
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
    pub n_i: f64,
    pub n_ii: f64,
    pub period: [f64; 2],
    pub fto: Truncation,
    pub thickness: Vec<f64>,
    pub precision: Precision,
}

/// ψ = (π/2)(1 − pol); pol = 0 is TE, pol = 1 is TM.
pub fn psi_from_pol(pol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pol) {
        return Err(Error::Domain(format!("pol must lie in [0, 1], got {pol}")));
    }
    Ok(FRAC_PI_2 * (1.0 - pol))
}

impl SimConfig {
    /// Normal incidence, TM (ψ = 0), vacuum on both sides, double precision.
    pub fn new(wavelength: f64, period: [f64; 2], fto: Truncation, thickness: Vec<f64>) -> Self {
        SimConfig {
            wavelength,
            theta: 0.0,
            phi: 0.0,
            psi: 0.0,
            n_i: 1.0,
            n_ii: 1.0,
            period,
            fto,
            thickness,
            precision: Precision::Double,
        }
    }

    pub fn with_angles(mut self, theta: f64, phi: f64) -> Self {
        self.theta = theta;
        self.phi = phi;
        self
    }

    pub fn with_psi(mut self, psi: f64) -> Self {
        self.psi = psi;
        self
    }

    pub fn with_pol(self, pol: f64) -> Result<Self> {
        Ok(self.with_psi(psi_from_pol(pol)?))
    }

    pub fn with_indices(mut self, n_i: f64, n_ii: f64) -> Self {
        self.n_i = n_i;
        self.n_ii = n_ii;
        self
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{what} must be positive and finite, got {v}")))
            }
        };
        pos(self.wavelength, "wavelength")?;
        pos(self.period[0], "period x")?;
        pos(self.period[1], "period y")?;
        pos(self.n_i, "superstrate index")?;
        pos(self.n_ii, "substrate index")?;
        if let Some(d) = self.thickness.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::Domain(format!("thickness must be ≥ 0, got {d}")));
        }
        if !self.theta.is_finite() || self.theta.cos() <= 1e-12 {
            return Err(Error::Domain(format!(
                "incidence angle {} rad is grazing or beyond; |θ| must stay below 90°",
                self.theta
            )));
        }
        if !(self.phi.is_finite() && self.psi.is_finite()) {
            return Err(Error::Domain("azimuth and polarization angles must be finite".into()));
        }
        Ok(())
    }
}

/// Flags raised by numerical safeguards during a solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Warnings {
    pub wood_anomaly: bool,
    pub regularized_mode: bool,
    pub eigen_residual: bool,
}

impl Warnings {
    pub fn merge(&mut self, o: Warnings) {
        self.wood_anomaly |= o.wood_anomaly;
        self.regularized_mode |= o.regularized_mode;
        self.eigen_residual |= o.eigen_residual;
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.wood_anomaly {
            v.push("wood_anomaly");
        }
        if self.regularized_mode {
            v.push("regularized_mode");
        }
        if self.eigen_residual {
            v.push("eigen_residual");
        }
        v
    }
}

/// Normalized wavevectors and diagonal admittances, one entry per harmonic.
#[derive(Debug, Clone)]
pub struct KSpace {
    pub fto: Truncation,
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub kz_i: Vec<c64>,
    pub kz_ii: Vec<c64>,
    pub y_i: Vec<c64>,
    pub z_i: Vec<c64>,
    pub y_ii: Vec<c64>,
    pub z_ii: Vec<c64>,
    /// Flattened index of the (0, 0) harmonic.
    pub center: usize,
    pub fc: Vec<f64>,
    pub fs: Vec<f64>,
    pub warnings: Warnings,
}

/// k̃z on the outgoing branch: real ≥ 0 when propagating, −j·(positive) when evanescent.
pub fn kz_branch(n: f64, kx: f64, ky: f64, warnings: &mut Warnings) -> c64 {
    let a = n * n - kx * kx - ky * ky;
    let kz = if a > 0.0 {
        c64::new(a.sqrt(), 0.0)
    } else {
        c64::new(0.0, -(-a).sqrt())
    };
    if kz.norm() < WOOD_FLOOR {
        warnings.wood_anomaly = true;
        c64::new(0.0, -WOOD_FLOOR)
    } else {
        kz
    }
}

pub fn build_kspace(config: &SimConfig) -> Result<KSpace> {
    config.validate()?;
    let fto = config.fto;
    let st = config.theta.sin();
    let (sp, cp) = config.phi.sin_cos();
    let kx0 = config.n_i * st * cp;
    let ky0 = config.n_i * st * sp;
    let lam = config.wavelength;
    let mut warnings = Warnings::default();
    let xi = fto.xi();
    let (mut kx, mut ky) = (Vec::with_capacity(xi), Vec::with_capacity(xi));
    let (mut fc, mut fs) = (Vec::with_capacity(xi), Vec::with_capacity(xi));
    for (n, m) in fto.orders() {
        let x = kx0 - m as f64 * lam / config.period[0];
        let y = ky0 - n as f64 * lam / config.period[1];
        kx.push(x);
        ky.push(y);
        // At k∥ = 0 the in-plane direction is undefined; the incidence azimuth is used.
        let (c, s) = if x == 0.0 && y == 0.0 {
            (cp, sp)
        } else {
            let r = x.hypot(y);
            (x / r, y / r)
        };
        fc.push(c);
        fs.push(s);
    }
    let side = |n: f64, w: &mut Warnings| -> (Vec<c64>, Vec<c64>, Vec<c64>) {
        let kz: Vec<c64> = kx.iter().zip(&ky).map(|(&x, &y)| kz_branch(n, x, y, w)).collect();
        let z = kz.iter().map(|k| k / (n * n)).collect();
        (kz.clone(), kz, z)
    };
    let (kz_i, y_i, z_i) = side(config.n_i, &mut warnings);
    let (kz_ii, y_ii, z_ii) = side(config.n_ii, &mut warnings);
    Ok(KSpace {
        fto,
        kx,
        ky,
        kz_i,
        kz_ii,
        y_i,
        z_i,
        y_ii,
        z_ii,
        center: fto.idx(0, 0),
        fc,
        fs,
        warnings,
    })
}

/// Incident field at the top boundary, stacked as (E_s, E_p, Ĥ_s-row, Ĥ_p-row) blocks.
pub fn incident_excitation(config: &SimConfig) -> Vec<c64> {
    let xi = config.fto.xi();
    let c = config.fto.idx(0, 0);
    let (sp, cp) = config.psi.sin_cos();
    let ct = config.theta.cos();
    let n = config.n_i;
    let mut e = vec![ZERO; 4 * xi];
    e[c] = c64::new(sp, 0.0);
    e[xi + c] = c64::new(cp * ct, 0.0);
    e[2 * xi + c] = c64::new(0.0, sp * n * ct);
    e[3 * xi + c] = c64::new(0.0, -cp * n);
    e
}
