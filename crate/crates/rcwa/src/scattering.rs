//! Layer connection and Rayleigh coefficients.
//!
//! Layers are stacked with the enhanced transmittance matrix recursion, which
//! never inverts a propagation factor X. A naive transfer-matrix product with
//! explicit inversion is kept as a reference path.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fourier::{check_geometry, layer_conv, FourierMode};
use crate::geometry::Geometry;
use crate::kspace::{build_kspace, incident_excitation, KSpace, Precision, SimConfig, Truncation, Warnings};
use crate::layer_eigen::{
    is_decoupled, layer_modes, layer_omega, pol_modes, LayerEigen, LayerModes, Pol, PolModes, RESIDUAL_TOL,
};
use crate::linalg::{c64, solve_dense, Block, BlockMat, CMat, J, ONE, RCOND_ROBUST, ZERO};

/// Pivot-ratio floor of the naive reference path.
pub const NAIVE_RCOND: f64 = 1e-13;

/// One step of the recursion: A⁻¹X and B for a layer.
#[derive(Debug, Clone)]
pub struct Stage {
    pub a_inv_x: BlockMat,
    pub b: BlockMat,
}

/// Result of connecting all layers: the effective F₁, G₁ seen from the
/// superstrate and one stage per layer, top to bottom.
#[derive(Debug, Clone)]
pub struct EtmChain {
    pub f1: BlockMat,
    pub g1: BlockMat,
    pub stages: Vec<Stage>,
}

/// Modal state of one solved layer.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub eigen: LayerEigen,
    /// Amplitudes of modes decaying away from the top interface.
    pub c_plus: Vec<c64>,
    /// Amplitudes of modes decaying away from the bottom interface.
    pub c_minus: Vec<c64>,
}

#[derive(Debug, Clone)]
pub struct ScatterResult {
    pub config: SimConfig,
    pub kspace: KSpace,
    pub r_s: Vec<c64>,
    pub r_p: Vec<c64>,
    pub t_s: Vec<c64>,
    pub t_p: Vec<c64>,
    /// Indexed `[n + N][m + M]`.
    pub de_r: Vec<Vec<f64>>,
    pub de_t: Vec<Vec<f64>>,
    pub warnings: Warnings,
    pub max_residual: f64,
    /// Empty for the naive reference path.
    pub layers: Vec<LayerState>,
}

impl ScatterResult {
    pub fn fto(&self) -> Truncation {
        self.config.fto
    }

    /// Harmonic (n, m) of the physical order (p_x, p_y), whose in-plane
    /// wavevector is k̃_inc + (p_x λ/Λx, p_y λ/Λy).
    pub fn harmonic(&self, px: i64, py: i64) -> Option<(i64, i64)> {
        let f = self.fto();
        let (m, n) = (-px, -py);
        (m.unsigned_abs() as usize <= f.m && n.unsigned_abs() as usize <= f.n).then_some((n, m))
    }

    pub fn de_r_order(&self, px: i64, py: i64) -> f64 {
        self.harmonic(px, py)
            .map_or(0.0, |(n, m)| self.de_r[(n + self.fto().n as i64) as usize][(m + self.fto().m as i64) as usize])
    }

    pub fn de_t_order(&self, px: i64, py: i64) -> f64 {
        self.harmonic(px, py)
            .map_or(0.0, |(n, m)| self.de_t[(n + self.fto().n as i64) as usize][(m + self.fto().m as i64) as usize])
    }

    pub fn total_r(&self) -> f64 {
        self.de_r.iter().flatten().sum()
    }

    pub fn total_t(&self) -> f64 {
        self.de_t.iter().flatten().sum()
    }

    /// The same solution for an incident wave scaled by `alpha`.
    pub fn scaled(&self, alpha: c64) -> ScatterResult {
        let s = |v: &[c64]| v.iter().map(|x| x * alpha).collect::<Vec<_>>();
        let a2 = alpha.norm_sqr();
        let g = |d: &[Vec<f64>]| d.iter().map(|r| r.iter().map(|x| x * a2).collect()).collect();
        ScatterResult {
            r_s: s(&self.r_s),
            r_p: s(&self.r_p),
            t_s: s(&self.t_s),
            t_p: s(&self.t_p),
            de_r: g(&self.de_r),
            de_t: g(&self.de_t),
            layers: self
                .layers
                .iter()
                .map(|l| LayerState {
                    eigen: l.eigen.clone(),
                    c_plus: s(&l.c_plus),
                    c_minus: s(&l.c_minus),
                })
                .collect(),
            ..self.clone()
        }
    }
}

fn cvec(v: &[c64], f: impl Fn(c64) -> c64) -> Vec<c64> {
    v.iter().map(|&x| f(x)).collect()
}

/// F and G of the substrate: F = diag(I, jZ_II), G = diag(jY_II, I).
fn substrate_fg(k: &KSpace) -> (BlockMat, BlockMat) {
    let n = k.fto.xi();
    let f = BlockMat::new(n, Block::identity(n), Block::Zero, Block::Zero, Block::diag(cvec(&k.z_ii, |z| J * z)));
    let g = BlockMat::new(n, Block::diag(cvec(&k.y_ii, |y| J * y)), Block::Zero, Block::Zero, Block::identity(n));
    (f, g)
}

/// Enhanced transmittance recursion from the substrate up to the first layer.
pub fn etm_connect(layers: &[LayerEigen], k: &KSpace) -> Result<EtmChain> {
    let (mut f, mut g) = substrate_fg(k);
    let mut stages = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate().rev() {
        let m = &layer.modes;
        let ctx = |what: &str, e| Error::conditioning(format!("{what} of layer {l}"), e);
        // [W W; V −V]⁻¹ [F; G] = ½ [W⁻¹F + V⁻¹G; W⁻¹F − V⁻¹G]
        let (w_inv, v_inv) = m.inverses().map_err(|(what, e)| ctx(what, e))?;
        let wf = w_inv.mul(&f);
        let vg = v_inv.mul(&g);
        let half = c64::new(0.5, 0.0);
        let a = wf.add(&vg).scale(half);
        let b = wf.sub(&vg).scale(half);
        let a_inv_x = a.solve(&BlockMat::diag(&layer.x), RCOND_ROBUST).map_err(|e| ctx("A", e))?;
        let mx = b.mul(&a_inv_x).scale_rows(&layer.x);
        let wmx = m.w_sp.mul(&mx);
        let vmx = m.v_sp.mul(&mx);
        f = m.w_sp.add(&wmx);
        g = m.v_sp.sub(&vmx);
        stages.push(Stage { a_inv_x, b });
    }
    stages.reverse();
    Ok(EtmChain { f1: f, g1: g, stages })
}

/// Solves the superstrate boundary for (R_s, R_p) and the first-layer T₁.
///
/// R is eliminated with R_s = (F₁T₁)_s − e_s and R_p = (G₁T₁)_p − e_Hp, which
/// leaves a 2ξ system (C_H F₁ − C_E G₁) T₁ = C_H e_E − C_E e_H with
/// C_E = diag(I, −jZ_I) and C_H = diag(−jY_I, I).
pub fn solve_rayleigh(f1: &BlockMat, g1: &BlockMat, excitation: &[c64], k: &KSpace) -> Result<(Vec<c64>, Vec<c64>)> {
    let n = k.fto.xi();
    let mut ce = vec![ONE; 2 * n];
    let mut ch = vec![ONE; 2 * n];
    for i in 0..n {
        ce[n + i] = -J * k.z_i[i];
        ch[i] = -J * k.y_i[i];
    }
    let (e_e, e_h) = excitation.split_at(2 * n);
    let system = f1.scale_rows(&ch).sub(&g1.scale_rows(&ce));
    let rhs: Vec<c64> = (0..2 * n).map(|i| ch[i] * e_e[i] - ce[i] * e_h[i]).collect();
    let t1 = system
        .solve_vec(&rhs, RCOND_ROBUST)
        .map_err(|e| Error::conditioning("superstrate boundary system", e))?;
    let ft = f1.matvec(&t1);
    let gt = g1.matvec(&t1);
    let mut r = Vec::with_capacity(2 * n);
    r.extend((0..n).map(|i| ft[i] - e_e[i]));
    r.extend((n..2 * n).map(|i| gt[i] - e_h[i]));
    Ok((r, t1))
}

/// Applies the recorded A⁻¹X factors; returns T_ℓ for every layer followed by
/// the substrate coefficients [T_s; T_p].
pub fn propagate_t(t1: &[c64], stages: &[Stage]) -> Vec<Vec<c64>> {
    let mut out = Vec::with_capacity(stages.len() + 1);
    out.push(t1.to_vec());
    for s in stages {
        let next = s.a_inv_x.matvec(out.last().unwrap());
        out.push(next);
    }
    out
}

fn to_grid(v: Vec<f64>, fto: Truncation) -> Vec<Vec<f64>> {
    v.chunks(2 * fto.m + 1).map(|c| c.to_vec()).collect()
}

/// Reflected and transmitted efficiencies per order, indexed `[n + N][m + M]`.
pub fn diffraction_efficiencies(
    r: &[c64],
    t: &[c64],
    k: &KSpace,
    config: &SimConfig,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = k.fto.xi();
    let norm = config.n_i * config.theta.cos();
    let (ni2, nii2) = (config.n_i * config.n_i, config.n_ii * config.n_ii);
    let de = |amp: &[c64], kz: &[c64], eps: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                amp[i].norm_sqr() * (kz[i] / norm).re + amp[n + i].norm_sqr() * (kz[i] / eps / norm).re
            })
            .collect()
    };
    (to_grid(de(r, &k.kz_i, ni2), k.fto), to_grid(de(t, &k.kz_ii, nii2), k.fto))
}

/// ξ-sized recursion and boundary solve for one polarization of a stack with
/// K̃y ≡ 0, where 𝕎 and 𝕍 only couple s rows to TE modes and p rows to TM
/// modes. Returns that polarization's reflected and substrate coefficients.
fn solve_polarization(layers: &[(PolModes, Vec<c64>)], k: &KSpace, pol: Pol, e: &[c64]) -> Result<(Vec<c64>, Vec<c64>)> {
    let n = k.fto.xi();
    let fc: Vec<c64> = k.fc.iter().map(|&c| c64::new(c, 0.0)).collect();
    let jdiag = |v: &[c64]| Block::diag(cvec(v, |z| J * z));
    let (mut f, mut g) = match pol {
        Pol::Te => (Block::identity(n), jdiag(&k.y_ii)),
        Pol::Tm => (jdiag(&k.z_ii), Block::identity(n)),
    };
    let half = c64::new(0.5, 0.0);
    let mut stages = Vec::with_capacity(layers.len());
    for (l, (m, x)) in layers.iter().enumerate().rev() {
        let ctx = |what: &str, e| Error::conditioning(format!("{what} of layer {l}"), e);
        let w = m.w.scale_rows(&fc);
        let v = m.v.scale_rows(&fc);
        let wf = w.solve(n, &f, RCOND_ROBUST).map_err(|e| ctx("𝕎", e))?;
        let vg = v.solve(n, &g, RCOND_ROBUST).map_err(|e| ctx("𝕍", e))?;
        let a = wf.add(&vg).scale(half);
        let b = wf.sub(&vg).scale(half);
        let a_inv_x = a.solve(n, &Block::diag(x.clone()), RCOND_ROBUST).map_err(|e| ctx("A", e))?;
        let mx = b.mul(&a_inv_x).scale_rows(x);
        f = w.add(&w.mul(&mx));
        g = v.sub(&v.mul(&mx));
        stages.push(a_inv_x);
    }
    let (e_e, e_h) = match pol {
        Pol::Te => (&e[..n], &e[2 * n..3 * n]),
        Pol::Tm => (&e[n..2 * n], &e[3 * n..]),
    };
    // Rows of (C_H F₁ − C_E G₁) T₁ = C_H e_E − C_E e_H for this polarization.
    let (system, rhs): (Block, Vec<c64>) = match pol {
        Pol::Te => {
            let c: Vec<c64> = cvec(&k.y_i, |y| -J * y);
            (f.scale_rows(&c).sub(&g), (0..n).map(|i| c[i] * e_e[i] - e_h[i]).collect())
        }
        Pol::Tm => {
            let c: Vec<c64> = cvec(&k.z_i, |z| J * z);
            (f.add(&g.scale_rows(&c)), (0..n).map(|i| e_e[i] + c[i] * e_h[i]).collect())
        }
    };
    let t1 = system
        .solve_vec(&rhs, RCOND_ROBUST)
        .map_err(|e| Error::conditioning("superstrate boundary system", e))?;
    let back = match pol {
        Pol::Te => f.matvec(&t1),
        Pol::Tm => g.matvec(&t1),
    };
    let r_amp = (0..n).map(|i| back[i] - if pol == Pol::Te { e_e[i] } else { e_h[i] }).collect();
    let t = stages.iter().rev().fold(t1, |t, s| s.matvec(&t));
    Ok((r_amp, t))
}

/// Exact cache key for a layer's modal data.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ModeKey(Vec<u64>);

fn push_c(k: &mut Vec<u64>, z: c64) {
    k.push(z.re.to_bits());
    k.push(z.im.to_bits());
}

fn mode_key(geometry: &Geometry, index: usize, config: &SimConfig, mode: FourierMode) -> ModeKey {
    let mut k = vec![
        mode as u64,
        (config.precision == Precision::Single) as u64,
        config.wavelength.to_bits(),
        config.theta.to_bits(),
        config.phi.to_bits(),
        config.n_i.to_bits(),
        config.period[0].to_bits(),
        config.period[1].to_bits(),
        config.fto.m as u64,
        config.fto.n as u64,
    ];
    match geometry {
        Geometry::Raster(u) => {
            let g = &u.layers()[index];
            k.extend([0, g.ny() as u64, g.nx() as u64]);
            g.values().iter().for_each(|&v| push_c(&mut k, v));
        }
        Geometry::Vector(v) => {
            let l = &v.layers[index];
            k.push(1);
            push_c(&mut k, l.base);
            for r in &l.rects {
                k.extend([r.cx.to_bits(), r.cy.to_bits(), r.lx.to_bits(), r.ly.to_bits()]);
                push_c(&mut k, r.eps);
            }
        }
    }
    ModeKey(k)
}

const CACHE_LIMIT: usize = 4096;

/// Forward solver; optionally memoizes per-layer eigenmodes across calls.
#[derive(Debug)]
pub struct Solver {
    pub mode: FourierMode,
    cache: Option<Mutex<HashMap<ModeKey, Arc<LayerModes>>>>,
}

impl Solver {
    pub fn new(mode: FourierMode) -> Self {
        Solver { mode, cache: None }
    }

    /// Reuses eigenmodes of layers that recur with identical content and
    /// incidence, e.g. in thickness-only sweeps.
    pub fn with_cache(mode: FourierMode) -> Self {
        Solver {
            mode,
            cache: Some(Mutex::new(HashMap::new())),
        }
    }

    fn modes(&self, geometry: &Geometry, index: usize, config: &SimConfig, k: &KSpace) -> Result<Arc<LayerModes>> {
        let build = || -> Result<Arc<LayerModes>> {
            let conv = layer_conv(geometry, index, config, self.mode)?;
            Ok(Arc::new(layer_modes(&conv, k, config.precision == Precision::Single, index)?))
        };
        let Some(cache) = &self.cache else {
            return build();
        };
        let key = mode_key(geometry, index, config, self.mode);
        if let Some(m) = cache.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let m = build()?;
        let mut c = cache.lock().unwrap();
        if c.len() >= CACHE_LIMIT {
            c.clear();
        }
        c.insert(key, m.clone());
        Ok(m)
    }

    fn eigen_stack(&self, geometry: &Geometry, config: &SimConfig, k: &KSpace) -> Result<(Vec<LayerEigen>, Warnings, f64)> {
        check_geometry(geometry, config, self.mode)?;
        let k0 = config.k0();
        let mut warnings = k.warnings;
        let mut max_residual = 0.0f64;
        let mut layers = Vec::with_capacity(config.thickness.len());
        for (i, &d) in config.thickness.iter().enumerate() {
            let modes = self.modes(geometry, i, config, k)?;
            warnings.regularized_mode |= modes.regularized;
            warnings.eigen_residual |= modes.residual > RESIDUAL_TOL;
            max_residual = max_residual.max(modes.residual);
            layers.push(LayerEigen::new(modes, k0, d));
        }
        Ok((layers, warnings, max_residual))
    }

    pub fn solve(&self, geometry: &Geometry, config: &SimConfig) -> Result<ScatterResult> {
        let k = build_kspace(config)?;
        let (eigen, warnings, max_residual) = self.eigen_stack(geometry, config, &k)?;
        let chain = etm_connect(&eigen, &k)?;
        let (r, t1) = solve_rayleigh(&chain.f1, &chain.g1, &incident_excitation(config), &k)?;
        let ts = propagate_t(&t1, &chain.stages);
        let t = ts.last().unwrap().clone();
        let (de_r, de_t) = diffraction_efficiencies(&r, &t, &k, config);
        let layers = eigen
            .into_iter()
            .zip(&chain.stages)
            .enumerate()
            .map(|(l, (eigen, st))| LayerState {
                c_minus: st.b.matvec(&ts[l + 1]),
                c_plus: ts[l].clone(),
                eigen,
            })
            .collect();
        let n = k.fto.xi();
        Ok(ScatterResult {
            config: config.clone(),
            r_s: r[..n].to_vec(),
            r_p: r[n..].to_vec(),
            t_s: t[..n].to_vec(),
            t_p: t[n..].to_vec(),
            kspace: k,
            de_r,
            de_t,
            warnings,
            max_residual,
            layers,
        })
    }

    /// Rayleigh coefficients and efficiencies without per-layer field data
    /// (`layers` is empty). When K̃y ≡ 0 the TE and TM halves are solved as
    /// separate ξ-sized problems and an unexcited half is skipped, in which case
    /// `max_residual` covers the solved half only.
    pub fn solve_efficiencies(&self, geometry: &Geometry, config: &SimConfig) -> Result<ScatterResult> {
        let k = build_kspace(config)?;
        if !is_decoupled(&k) {
            let mut r = self.solve(geometry, config)?;
            r.layers.clear();
            return Ok(r);
        }
        check_geometry(geometry, config, self.mode)?;
        let n = k.fto.xi();
        let e = incident_excitation(config);
        let excited = |a: usize, b: usize| e[a * n..(a + 1) * n].iter().chain(&e[b * n..(b + 1) * n]).any(|&v| v != ZERO);
        let single = config.precision == Precision::Single;
        let k0 = config.k0();
        let mut warnings = k.warnings;
        let mut max_residual = 0.0f64;
        let (mut r, mut t) = (vec![ZERO; 2 * n], vec![ZERO; 2 * n]);
        let ops = (0..config.thickness.len())
            .map(|i| {
                let conv = layer_conv(geometry, i, config, self.mode)?;
                let om = layer_omega(&conv, &k, i)?;
                Ok((conv, om))
            })
            .collect::<Result<Vec<_>>>()?;
        for (pol, offset, on) in [(Pol::Te, 0, excited(0, 2)), (Pol::Tm, n, excited(1, 3))] {
            if !on {
                continue;
            }
            let mut layers = Vec::with_capacity(ops.len());
            for (i, ((conv, om), &d)) in ops.iter().zip(&config.thickness).enumerate() {
                let m = pol_modes(conv, &k, om, pol, single, i)?;
                let (num, den) = m.residual_parts;
                let res = if den == 0.0 { num.sqrt() } else { (num / den).sqrt() };
                warnings.regularized_mode |= m.regularized;
                warnings.eigen_residual |= res > RESIDUAL_TOL;
                max_residual = max_residual.max(res);
                let x = crate::layer_eigen::x_matrix(&m.q, k0, d);
                layers.push((m, x));
            }
            let (rp, tp) = solve_polarization(&layers, &k, pol, &e)?;
            r[offset..offset + n].copy_from_slice(&rp);
            t[offset..offset + n].copy_from_slice(&tp);
        }
        let (de_r, de_t) = diffraction_efficiencies(&r, &t, &k, config);
        Ok(ScatterResult {
            config: config.clone(),
            r_s: r[..n].to_vec(),
            r_p: r[n..].to_vec(),
            t_s: t[..n].to_vec(),
            t_p: t[n..].to_vec(),
            kspace: k,
            de_r,
            de_t,
            warnings,
            max_residual,
            layers: Vec::new(),
        })
    }

    /// Reference path: dense products with explicit inversion of the X-bearing
    /// matrices and one 4ξ boundary solve.
    pub fn naive_tmm_solve(&self, geometry: &Geometry, config: &SimConfig) -> Result<ScatterResult> {
        let k = build_kspace(config)?;
        let (eigen, warnings, max_residual) = self.eigen_stack(geometry, config, &k)?;
        let n = k.fto.xi();
        let (f, g) = substrate_fg(&k);
        let mut fg = stack(&[&f.to_dense(), &g.to_dense()], &[]);
        for (l, layer) in eigen.iter().enumerate().rev() {
            let w = layer.modes.w_sp.to_dense();
            let v = layer.modes.v_sp.to_dense();
            let wx = &w * &crate::linalg::diag_mat(&layer.x);
            let vx = &v * &crate::linalg::diag_mat(&layer.x);
            let p = stack(&[&w, &v], &[&wx, &neg(&vx)]);
            let q = stack(&[&wx, &vx], &[&w, &neg(&v)]);
            let z = solve_dense(&q, &fg, NAIVE_RCOND)
                .map_err(|e| Error::conditioning(format!("naive transfer matrix of layer {l}"), e))?;
            fg = &p * &z;
        }
        // [C_R, −[F; G]] [R; T] = −e
        let e = incident_excitation(config);
        let sys = CMat::from_fn(4 * n, 4 * n, |i, j| {
            if j >= 2 * n {
                return -fg[(i, j - 2 * n)];
            }
            let (bi, bj, ii, jj) = (i / n, j / n, i % n, j % n);
            if ii != jj {
                return ZERO;
            }
            match (bi, bj) {
                (0, 0) | (3, 1) => ONE,
                (1, 1) => -J * k.z_i[ii],
                (2, 0) => -J * k.y_i[ii],
                _ => ZERO,
            }
        });
        let rhs = CMat::from_fn(4 * n, 1, |i, _| -e[i]);
        let x = solve_dense(&sys, &rhs, NAIVE_RCOND).map_err(|e| Error::conditioning("naive boundary system", e))?;
        let col: Vec<c64> = (0..4 * n).map(|i| x[(i, 0)]).collect();
        let (r, t) = col.split_at(2 * n);
        let (de_r, de_t) = diffraction_efficiencies(r, t, &k, config);
        Ok(ScatterResult {
            config: config.clone(),
            r_s: r[..n].to_vec(),
            r_p: r[n..].to_vec(),
            t_s: t[..n].to_vec(),
            t_p: t[n..].to_vec(),
            kspace: k,
            de_r,
            de_t,
            warnings,
            max_residual,
            layers: Vec::new(),
        })
    }
}

fn neg(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| -m[(i, j)])
}

/// Stacks column blocks vertically, then places the optional second column
/// to the right: `[left[0] right[0]; left[1] right[1]]`.
fn stack(left: &[&CMat], right: &[&CMat]) -> CMat {
    let r = left[0].nrows();
    let c = left[0].ncols();
    let cols = if right.is_empty() { c } else { 2 * c };
    CMat::from_fn(left.len() * r, cols, |i, j| {
        let (bi, ii) = (i / r, i % r);
        if j < c {
            left[bi][(ii, j)]
        } else {
            right[bi][(ii, j - c)]
        }
    })
}

pub fn solve(geometry: &Geometry, config: &SimConfig, mode: FourierMode) -> Result<ScatterResult> {
    Solver::new(mode).solve(geometry, config)
}

pub fn naive_tmm_solve(geometry: &Geometry, config: &SimConfig, mode: FourierMode) -> Result<ScatterResult> {
    Solver::new(mode).naive_tmm_solve(geometry, config)
}
