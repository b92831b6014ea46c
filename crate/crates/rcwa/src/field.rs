//! Field reconstruction inside the grating layers.
//!
//! In a layer, with z measured from its top,
//!
//! ```text
//! S(z) =  W (e^{−k₀qz} c⁺ + e^{−k₀q(d−z)} c⁻)
//! U(z) = −V e^{−k₀qz} c⁺ + V e^{−k₀q(d−z)} c⁻
//! ```
//!
//! where U = jη₀H. The normal components follow from the curl equations:
//! S_z = ⟦ε⟧⁻¹ (jK̃x U_y − jK̃y U_x) and U_z = jK̃x S_y − jK̃y S_x.
//! Magnetic components are reported as η₀H = −jU.

use crate::error::{Error, Result};
use crate::kspace::KSpace;
use crate::linalg::{c64, J, ZERO};
use crate::scattering::ScatterResult;

pub const COMPONENTS: [&str; 6] = ["Ex", "Ey", "Ez", "Hx", "Hy", "Hz"];

/// Sampled fields, axes (z, y, x, component).
#[derive(Debug, Clone)]
pub struct FieldCell {
    pub res: [usize; 3],
    pub period: [f64; 2],
    pub thickness: Vec<f64>,
    /// z of each layer's top, measured from the superstrate interface.
    pub offsets: Vec<f64>,
    pub data: Vec<c64>,
}

impl FieldCell {
    pub fn nz(&self) -> usize {
        self.res[2] * self.thickness.len()
    }

    pub fn get(&self, z: usize, y: usize, x: usize, comp: usize) -> c64 {
        let [rx, ry, _] = self.res;
        self.data[((z * ry + y) * rx + x) * 6 + comp]
    }

    /// Physical position of sample (z, y, x).
    pub fn coords(&self, z: usize, y: usize, x: usize) -> [f64; 3] {
        let [rx, ry, rz] = self.res;
        let layer = z / rz;
        let d = self.thickness[layer];
        [
            sample(x, rx, self.period[0]),
            sample(y, ry, self.period[1]),
            self.offsets[layer] + sample(z % rz, rz, d),
        ]
    }
}

fn sample(i: usize, res: usize, len: f64) -> f64 {
    (i as f64 + 0.5) * len / res as f64
}

/// Fourier amplitudes of the six components at depth z inside `layer`:
/// (S_x, S_y, S_z, η₀H_x, η₀H_y, η₀H_z).
pub fn layer_harmonics(result: &ScatterResult, layer: usize, z: f64) -> Result<[Vec<c64>; 6]> {
    let state = result
        .layers
        .get(layer)
        .ok_or_else(|| Error::State(format!("no modal coefficients stored for layer {layer}")))?;
    let k = &result.kspace;
    let modes = &state.eigen.modes;
    let (d, k0) = (state.eigen.thickness, result.config.k0());
    let n = k.fto.xi();
    let (mut up, mut down) = (Vec::with_capacity(2 * n), Vec::with_capacity(2 * n));
    for (i, q) in modes.q.iter().enumerate() {
        up.push((-q * (k0 * z)).exp() * state.c_plus[i]);
        down.push((-q * (k0 * (d - z))).exp() * state.c_minus[i]);
    }
    let sum: Vec<c64> = up.iter().zip(&down).map(|(a, b)| a + b).collect();
    let diff: Vec<c64> = up.iter().zip(&down).map(|(a, b)| b - a).collect();
    let s = modes.w.matvec(&sum);
    let u = modes.v.matvec(&diff);
    let (sx, sy) = s.split_at(n);
    let (ux, uy) = u.split_at(n);
    let rhs: Vec<c64> = (0..n).map(|i| J * (k.kx[i] * uy[i] - k.ky[i] * ux[i])).collect();
    let sz = modes.e_inv.matvec(&rhs);
    let uz: Vec<c64> = (0..n).map(|i| J * (k.kx[i] * sy[i] - k.ky[i] * sx[i])).collect();
    let h = |v: &[c64]| v.iter().map(|x| -J * x).collect::<Vec<_>>();
    Ok([sx.to_vec(), sy.to_vec(), sz, h(ux), h(uy), h(&uz)])
}

/// Tangential (E_x, E_y, η₀H_x, η₀H_y) amplitudes from boundary-row values
/// (E_s, E_p, h_s, h_p), where the h rows equal −U projected on (s, p).
fn sp_to_xy(k: &KSpace, e_s: &[c64], e_p: &[c64], h_s: &[c64], h_p: &[c64]) -> [Vec<c64>; 4] {
    let n = k.fto.xi();
    let mut out: [Vec<c64>; 4] = Default::default();
    for i in 0..n {
        let (c, s) = (k.fc[i], k.fs[i]);
        out[0].push(e_p[i] * c - e_s[i] * s);
        out[1].push(e_p[i] * s + e_s[i] * c);
        let ux = -(h_s[i] * c - h_p[i] * s);
        let uy = -(h_s[i] * s + h_p[i] * c);
        out[2].push(-J * ux);
        out[3].push(-J * uy);
    }
    out
}

/// Tangential amplitudes on the superstrate side of the top interface.
pub fn superstrate_tangential(result: &ScatterResult) -> [Vec<c64>; 4] {
    let k = &result.kspace;
    let n = k.fto.xi();
    let e = crate::kspace::incident_excitation(&result.config);
    let e_s: Vec<c64> = (0..n).map(|i| e[i] + result.r_s[i]).collect();
    let e_p: Vec<c64> = (0..n).map(|i| e[n + i] - J * k.z_i[i] * result.r_p[i]).collect();
    let h_s: Vec<c64> = (0..n).map(|i| e[2 * n + i] - J * k.y_i[i] * result.r_s[i]).collect();
    let h_p: Vec<c64> = (0..n).map(|i| e[3 * n + i] + result.r_p[i]).collect();
    sp_to_xy(k, &e_s, &e_p, &h_s, &h_p)
}

/// Tangential amplitudes on the substrate side of the bottom interface.
pub fn substrate_tangential(result: &ScatterResult) -> [Vec<c64>; 4] {
    let k = &result.kspace;
    let n = k.fto.xi();
    let e_p: Vec<c64> = (0..n).map(|i| J * k.z_ii[i] * result.t_p[i]).collect();
    let h_s: Vec<c64> = (0..n).map(|i| J * k.y_ii[i] * result.t_s[i]).collect();
    sp_to_xy(k, &result.t_s, &e_p, &h_s, &result.t_p)
}

/// Phase tables e^{−jk x} per sample and harmonic column.
struct Synth {
    px: Vec<Vec<c64>>,
    py: Vec<Vec<c64>>,
}

impl Synth {
    fn new(k: &KSpace, k0: f64, period: [f64; 2], rx: usize, ry: usize) -> Self {
        let (mm, nn) = (2 * k.fto.m + 1, 2 * k.fto.n + 1);
        let px = (0..rx)
            .map(|i| {
                let x = sample(i, rx, period[0]);
                (0..mm).map(|m| (-J * (k0 * k.kx[m] * x)).exp()).collect()
            })
            .collect();
        let py = (0..ry)
            .map(|j| {
                let y = sample(j, ry, period[1]);
                (0..nn).map(|n| (-J * (k0 * k.ky[n * mm] * y)).exp()).collect()
            })
            .collect();
        Synth { px, py }
    }

    fn eval(&self, coef: &[c64], x: usize, y: usize) -> c64 {
        let px = &self.px[x];
        let mm = px.len();
        self.py[y]
            .iter()
            .enumerate()
            .map(|(n, &ey)| ey * coef[n * mm..(n + 1) * mm].iter().zip(px).map(|(c, e)| c * e).sum::<c64>())
            .sum()
    }
}

/// Samples all six components on a res_x × res_y × res_z grid per layer, at
/// cell centers, z measured from each layer's top.
pub fn calculate_field(result: &ScatterResult, res_x: usize, res_y: usize, res_z: usize) -> Result<FieldCell> {
    if res_x == 0 || res_y == 0 || res_z == 0 {
        return Err(Error::Domain("field resolutions must be at least 1".into()));
    }
    let cfg = &result.config;
    if result.layers.len() != cfg.thickness.len() {
        return Err(Error::State(
            "result carries no modal coefficients; run the enhanced solver first".into(),
        ));
    }
    let synth = Synth::new(&result.kspace, cfg.k0(), cfg.period, res_x, res_y);
    let mut offsets = Vec::with_capacity(cfg.thickness.len());
    let mut top = 0.0;
    for &d in &cfg.thickness {
        offsets.push(top);
        top += d;
    }
    let mut data = Vec::with_capacity(res_z * cfg.thickness.len() * res_y * res_x * 6);
    for (l, &d) in cfg.thickness.iter().enumerate() {
        for kz in 0..res_z {
            let h = layer_harmonics(result, l, sample(kz, res_z, d))?;
            for y in 0..res_y {
                for x in 0..res_x {
                    data.extend(h.iter().map(|c| synth.eval(c, x, y)));
                }
            }
        }
    }
    Ok(FieldCell {
        res: [res_x, res_y, res_z],
        period: cfg.period,
        thickness: cfg.thickness.clone(),
        offsets,
        data,
    })
}

/// Polynomial extrapolation to `t` through up to three (position, value) samples.
fn extrapolate(pts: &[(f64, c64)], t: f64) -> c64 {
    let mut acc = ZERO;
    for (i, &(xi, yi)) in pts.iter().enumerate() {
        let mut w = 1.0;
        for (j, &(xj, _)) in pts.iter().enumerate() {
            if i != j {
                w *= (t - xj) / (xi - xj);
            }
        }
        acc += yi * w;
    }
    acc
}

const TANGENTIAL: [usize; 4] = [0, 1, 3, 4];

/// Largest jump of (E_x, E_y, η₀H_x, η₀H_y) across any interface, including the
/// superstrate and substrate boundaries. Layer samples are extrapolated to the
/// interface from the (up to three) nearest samples on each side.
pub fn tangential_continuity_check(cell: &FieldCell, result: &ScatterResult) -> Result<f64> {
    let [rx, ry, rz] = cell.res;
    let layers = cell.thickness.len();
    if layers == 0 {
        return Ok(0.0);
    }
    let cfg = &result.config;
    let synth = Synth::new(&result.kspace, cfg.k0(), cfg.period, rx, ry);
    let take = rz.min(3);
    let dz = |l: usize| cell.thickness[l] / rz as f64;
    // Value at the top (`bottom == false`) or bottom of layer l.
    let edge = |l: usize, bottom: bool, y: usize, x: usize, c: usize| -> c64 {
        let pts: Vec<(f64, c64)> = (0..take)
            .map(|i| {
                let kz = if bottom { rz - 1 - i } else { i };
                ((kz as f64 + 0.5) * dz(l), cell.get(l * rz + kz, y, x, c))
            })
            .collect();
        extrapolate(&pts, if bottom { cell.thickness[l] } else { 0.0 })
    };
    let sup = superstrate_tangential(result);
    let sub = substrate_tangential(result);
    let mut worst = 0.0f64;
    for y in 0..ry {
        for x in 0..rx {
            for (t, &c) in TANGENTIAL.iter().enumerate() {
                worst = worst.max((edge(0, false, y, x, c) - synth.eval(&sup[t], x, y)).norm());
                worst = worst.max((edge(layers - 1, true, y, x, c) - synth.eval(&sub[t], x, y)).norm());
                for l in 1..layers {
                    worst = worst.max((edge(l - 1, true, y, x, c) - edge(l, false, y, x, c)).norm());
                }
            }
        }
    }
    Ok(worst)
}
