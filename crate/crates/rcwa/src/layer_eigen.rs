//! Per-layer eigenmodes.
//!
//! With Ω_L and Ω_R from the curl equations, the in-plane electric field obeys
//! S″ = Ω² S with Ω² = Ω_L Ω_R:
//!
//! ```text
//! Ω² = [ K̃y² + (K̃x E⁻¹ K̃x − I) P      K̃x (E⁻¹ K̃y E − K̃y)        ]
//!      [ K̃y (E⁻¹ K̃x P − K̃x)          K̃x² + (K̃y E⁻¹ K̃y − I) E   ]
//! Ω_R = [ −K̃x K̃y    K̃x² − E ]
//!       [ P − K̃y²   K̃y K̃x   ]
//! ```
//!
//! where E = ⟦ε⟧ and P = ⟦ε⁻¹⟧⁻¹. Eigenvectors give W, the square roots of the
//! eigenvalues give q, and V = Ω_R W q⁻¹.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::fourier::LayerConv;
use crate::kspace::KSpace;
use crate::linalg::{
    c64, eig, eig_hermitian, eig_hermitian_product, frobenius, inverse, is_hermitian, round_to_f32, Block, BlockMat,
    LinalgError, RCOND_ROBUST,
};

/// Absolute tolerance on Re(q) below which a mode counts as propagating.
pub const ROOT_TOL: f64 = 1e-14;
/// Relative counterpart of [`ROOT_TOL`], absorbing eigensolver noise.
pub const ROOT_TOL_REL: f64 = 1e-10;
/// |q| floor before inversion in V.
pub const Q_FLOOR: f64 = 1e-12;
/// Largest accepted relative eigen residual.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Relative asymmetry below which a convolution matrix is treated as Hermitian.
const HERMITIAN_TOL: f64 = 1e-12;

/// Operators entering the eigenproblem of one layer.
#[derive(Debug, Clone)]
pub struct Omega {
    pub omega2: BlockMat,
    pub omega_r: BlockMat,
    /// ⟦ε⟧⁻¹, reused for the z-component of E.
    pub e_inv: Block,
}

fn cdiag(v: &[f64]) -> Block {
    Block::diag(v.iter().map(|&x| c64::new(x, 0.0)).collect())
}

pub fn build_omega(conv: &LayerConv, k: &KSpace) -> Result<Omega> {
    let n = k.fto.xi();
    let e = &conv.e_conv;
    let p = &conv.o_e_conv;
    let e_inv = match e {
        Block::Diag(d) => {
            if d.iter().any(|x| x.norm() == 0.0) {
                return Err(Error::conditioning("⟦ε⟧", "zero permittivity"));
            }
            Block::Diag(d.iter().map(|x| x.inv()).collect())
        }
        Block::Dense(m) => Block::Dense(inverse(m, RCOND_ROBUST).map_err(|err| Error::conditioning("⟦ε⟧", err))?),
        Block::Zero => return Err(Error::conditioning("⟦ε⟧", "zero matrix")),
    };
    let kx = cdiag(&k.kx);
    let ky = cdiag(&k.ky);
    let id = Block::identity(n);

    let o00 = ky.mul(&ky).add(&kx.mul(&e_inv).mul(&kx).sub(&id).mul(p));
    let o11 = kx.mul(&kx).add(&ky.mul(&e_inv).mul(&ky).sub(&id).mul(e));
    // For a uniform layer E⁻¹ commutes with K̃ and both off-diagonal blocks
    // vanish identically; keep them exactly zero.
    let (o01, o10) = if conv.uniform.is_some() {
        (Block::Zero, Block::Zero)
    } else {
        (
            kx.mul(&e_inv.mul(&ky).mul(e).sub(&ky)),
            ky.mul(&e_inv.mul(&kx).mul(p).sub(&kx)),
        )
    };
    let omega2 = BlockMat::new(n, o00, o01, o10, o11);
    let omega_r = BlockMat::new(
        n,
        kx.mul(&ky).neg(),
        kx.mul(&kx).sub(e),
        p.sub(&ky.mul(&ky)),
        ky.mul(&kx),
    );
    Ok(Omega { omega2, omega_r, e_inv })
}

/// Square root on the decaying / forward branch: Re(q) ≥ 0, and Im(q) > 0 for
/// modes whose real part is negligible.
pub fn branch_sqrt(lambda: c64) -> c64 {
    let q = lambda.sqrt();
    let q = if q.re < 0.0 { -q } else { q };
    if q.im < 0.0 && q.re <= ROOT_TOL.max(ROOT_TOL_REL * q.norm()) {
        q.conj()
    } else {
        q
    }
}

/// Eigenvectors W and branch-selected roots q of Ω². No sorting.
pub fn eig_layer(omega2: &BlockMat) -> std::result::Result<(BlockMat, Vec<c64>), crate::linalg::LinalgError> {
    let (vals, w) = omega2.eig()?;
    Ok((w, vals.into_iter().map(branch_sqrt).collect()))
}

/// The two independent halves of a layer with K̃y ≡ 0: the x-block of Ω²
/// (TM, E in the plane of incidence) and the y-block (TE).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pol {
    Te,
    Tm,
}

/// Whether Ω² is block diagonal for every layer (no Ky coupling).
pub fn is_decoupled(k: &KSpace) -> bool {
    k.ky.iter().all(|&y| y == 0.0)
}

/// Modes of one polarization of a decoupled layer.
#[derive(Debug, Clone)]
pub struct PolModes {
    pub w: Block,
    pub v: Block,
    pub q: Vec<c64>,
    /// ‖ΩW − W q²‖², ‖ΩW‖² for this block.
    pub residual_parts: (f64, f64),
    pub regularized: bool,
}

/// Eigenpairs of one Ω² quadrant. Lossless layers (Hermitian ⟦ε⟧, positive
/// definite P) use Hermitian solvers: the TE block K̃x² − E is Hermitian and
/// the TM block (K̃x E⁻¹ K̃x − I)·P is Hermitian times positive definite.
fn block_eig(conv: &LayerConv, k: &KSpace, om: &Omega, pol: Pol, o: &Block, exact: bool, layer: usize) -> Result<(Block, Vec<c64>)> {
    let n = k.fto.xi();
    let failed = |_| Error::Eigen { layer };
    let (vals, w) = match o {
        Block::Zero => (vec![c64::new(0.0, 0.0); n], Block::identity(n)),
        Block::Diag(d) => (d.clone(), Block::identity(n)),
        Block::Dense(m) => {
            let lossless = exact
                && matches!((&conv.e_conv, &conv.o_e_conv),
                    (Block::Dense(e), Block::Dense(p))
                    if is_hermitian(e, HERMITIAN_TOL) && is_hermitian(p, HERMITIAN_TOL));
            let fast = if !lossless {
                None
            } else {
                match (pol, &conv.o_e_conv, &om.e_inv) {
                    (Pol::Te, _, _) => eig_hermitian(m).ok(),
                    (Pol::Tm, Block::Dense(p), Block::Dense(ei)) => {
                        let a = faer::Mat::from_fn(n, n, |i, j| {
                            let v = ei[(i, j)] * (k.kx[i] * k.kx[j]);
                            if i == j {
                                v - 1.0
                            } else {
                                v
                            }
                        });
                        eig_hermitian_product(&a, p).ok()
                    }
                    _ => None,
                }
            };
            let (v, w) = match fast {
                Some(vw) => vw,
                None => eig(m).map_err(failed)?,
            };
            (v, Block::structured(w))
        }
    };
    Ok((w, vals.into_iter().map(branch_sqrt).collect()))
}

/// Modes of one polarization when [`is_decoupled`] holds.
pub fn pol_modes(conv: &LayerConv, k: &KSpace, om: &Omega, pol: Pol, single: bool, layer: usize) -> Result<PolModes> {
    let round = |b: Block| if single { b.map(round_to_f32) } else { b };
    let (o, r) = match pol {
        Pol::Tm => (&om.omega2.b[0][0], &om.omega_r.b[1][0]),
        Pol::Te => (&om.omega2.b[1][1], &om.omega_r.b[0][1]),
    };
    let o = round(o.clone());
    let (w, mut q) = block_eig(conv, k, om, pol, &o, !single, layer)?;
    let w = round(w);
    if single {
        q.iter_mut().for_each(|v| *v = round_to_f32(*v));
    }
    let n = k.fto.xi();
    let lhs = o.mul(&w);
    let q2: Vec<c64> = q.iter().map(|v| v * v).collect();
    let num = frobenius(&lhs.sub(&w.scale_cols(&q2)).to_dense(n));
    let den = frobenius(&lhs.to_dense(n));
    let regularized = regularize_q(&mut q);
    if q.iter().any(|v| v.norm() < Q_FLOOR) {
        return Err(Error::conditioning(format!("V = Ω_R W q⁻¹ of layer {layer}"), "mode root below tolerance"));
    }
    let qinv: Vec<c64> = q.iter().map(|v| v.inv()).collect();
    let v = round(r.mul(&w).scale_cols(&qinv));
    Ok(PolModes {
        w,
        v,
        q,
        residual_parts: (num * num, den * den),
        regularized,
    })
}

/// Replaces near-zero roots by Q_FLOOR·(1+j)/√2. Returns whether any changed.
pub fn regularize_q(q: &mut [c64]) -> bool {
    let mut hit = false;
    for v in q.iter_mut() {
        if v.norm() < Q_FLOOR {
            *v = c64::new(1.0, 1.0) * (Q_FLOOR / std::f64::consts::SQRT_2);
            hit = true;
        }
    }
    hit
}

pub fn v_matrix(omega_r: &BlockMat, w: &BlockMat, q: &[c64]) -> Result<BlockMat> {
    if q.iter().any(|v| v.norm() < Q_FLOOR) {
        return Err(Error::conditioning("V = Ω_R W q⁻¹", "mode root below tolerance"));
    }
    let qinv: Vec<c64> = q.iter().map(|v| v.inv()).collect();
    Ok(omega_r.mul(w).scale_cols(&qinv))
}

/// Propagation factors X_ii = exp(−k₀ q_i d).
pub fn x_matrix(q: &[c64], k0: f64, d: f64) -> Vec<c64> {
    q.iter().map(|&v| (-v * (k0 * d)).exp()).collect()
}

/// s/p-basis blocks; returns (𝕎, 𝕍) with quadrants [[ss, sp], [ps, pp]].
pub fn sp_recombine(w: &BlockMat, v: &BlockMat, fc: &[f64], fs: &[f64]) -> (BlockMat, BlockMat) {
    let c: Vec<c64> = fc.iter().map(|&x| c64::new(x, 0.0)).collect();
    let s: Vec<c64> = fs.iter().map(|&x| c64::new(x, 0.0)).collect();
    // a·X + b·Y with a, b diagonal
    let comb = |x: &Block, sx: f64, y: &Block, sy: f64, a: &[c64], b: &[c64]| {
        x.scale_rows(a).scale(c64::new(sx, 0.0)).add(&y.scale_rows(b).scale(c64::new(sy, 0.0)))
    };
    let n = w.n;
    let [[w11, w12], [w21, w22]] = &w.b;
    let [[v11, v12], [v21, v22]] = &v.b;
    let ww = BlockMat::new(
        n,
        comb(w21, 1.0, w11, -1.0, &c, &s),
        comb(w22, 1.0, w12, -1.0, &c, &s),
        comb(w11, 1.0, w21, 1.0, &c, &s),
        comb(w12, 1.0, w22, 1.0, &c, &s),
    );
    let vv = BlockMat::new(
        n,
        comb(v11, 1.0, v21, 1.0, &c, &s),
        comb(v12, 1.0, v22, 1.0, &c, &s),
        comb(v21, 1.0, v11, -1.0, &c, &s),
        comb(v22, 1.0, v12, -1.0, &c, &s),
    );
    (ww, vv)
}

/// Modal data of one layer, independent of its thickness.
#[derive(Debug, Clone)]
pub struct LayerModes {
    pub w: BlockMat,
    pub v: BlockMat,
    pub q: Vec<c64>,
    /// 𝕎 = [[W_ss, W_sp], [W_ps, W_pp]]
    pub w_sp: BlockMat,
    /// 𝕍 = [[V_ss, V_sp], [V_ps, V_pp]]
    pub v_sp: BlockMat,
    pub e_inv: Block,
    /// ‖Ω²W − W diag(q²)‖ / ‖Ω²W‖
    pub residual: f64,
    pub regularized: bool,
    inverses: OnceLock<std::result::Result<(BlockMat, BlockMat), (&'static str, LinalgError)>>,
}

impl LayerModes {
    /// 𝕎⁻¹ and 𝕍⁻¹, factorized on first use and kept with the modes. On
    /// failure, names the singular operator.
    pub fn inverses(&self) -> std::result::Result<&(BlockMat, BlockMat), (&'static str, LinalgError)> {
        self.inverses
            .get_or_init(|| {
                let w = self.w_sp.inverse(RCOND_ROBUST).map_err(|e| ("𝕎", e))?;
                let v = self.v_sp.inverse(RCOND_ROBUST).map_err(|e| ("𝕍", e))?;
                Ok((w, v))
            })
            .as_ref()
            .map_err(|e| *e)
    }
}

/// A layer's modes together with its propagation factors.
#[derive(Debug, Clone)]
pub struct LayerEigen {
    pub modes: Arc<LayerModes>,
    pub thickness: f64,
    pub x: Vec<c64>,
}

impl LayerEigen {
    pub fn new(modes: Arc<LayerModes>, k0: f64, thickness: f64) -> Self {
        let x = x_matrix(&modes.q, k0, thickness);
        LayerEigen { modes, thickness, x }
    }
}

fn eigen_residual(omega2: &BlockMat, w: &BlockMat, q: &[c64]) -> f64 {
    let lhs = omega2.mul(w);
    let q2: Vec<c64> = q.iter().map(|v| v * v).collect();
    let rhs = w.scale_cols(&q2);
    let num = frobenius(&lhs.sub(&rhs).to_dense());
    let den = frobenius(&lhs.to_dense());
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Full per-layer pipeline: Ω matrices, eigenmodes, V and the s/p blocks.
pub fn layer_modes(conv: &LayerConv, k: &KSpace, single: bool, layer: usize) -> Result<LayerModes> {
    let om = layer_omega(conv, k, layer)?;
    if is_decoupled(k) {
        let tm = pol_modes(conv, k, &om, Pol::Tm, single, layer)?;
        let te = pol_modes(conv, k, &om, Pol::Te, single, layer)?;
        let n = k.fto.xi();
        let (num, den) = (
            tm.residual_parts.0 + te.residual_parts.0,
            tm.residual_parts.1 + te.residual_parts.1,
        );
        let residual = if den == 0.0 { num.sqrt() } else { (num / den).sqrt() };
        let w = BlockMat::new(n, tm.w, Block::Zero, Block::Zero, te.w);
        let v = BlockMat::new(n, Block::Zero, te.v, tm.v, Block::Zero);
        let (w_sp, v_sp) = sp_recombine(&w, &v, &k.fc, &k.fs);
        return Ok(LayerModes {
            w,
            v,
            q: tm.q.into_iter().chain(te.q).collect(),
            w_sp,
            v_sp,
            e_inv: om.e_inv,
            residual,
            regularized: tm.regularized || te.regularized,
            inverses: OnceLock::new(),
        });
    }
    let round = |m: BlockMat| if single { m.map(round_to_f32) } else { m };
    let omega2 = round(om.omega2);
    let (w, mut q) = eig_layer(&omega2).map_err(|_| Error::Eigen { layer })?;
    let w = round(w);
    if single {
        q.iter_mut().for_each(|v| *v = round_to_f32(*v));
    }
    let residual = eigen_residual(&omega2, &w, &q);
    let regularized = regularize_q(&mut q);
    let v = round(v_matrix(&om.omega_r, &w, &q)?);
    let (w_sp, v_sp) = sp_recombine(&w, &v, &k.fc, &k.fs);
    Ok(LayerModes {
        w,
        v,
        q,
        w_sp,
        v_sp,
        e_inv: om.e_inv,
        residual,
        regularized,
        inverses: OnceLock::new(),
    })
}

/// [`build_omega`] with the layer index attached to conditioning errors.
pub fn layer_omega(conv: &LayerConv, k: &KSpace, layer: usize) -> Result<Omega> {
    build_omega(conv, k).map_err(|e| match e {
        Error::Conditioning { context, detail } => Error::Conditioning {
            context: format!("{context} of layer {layer}"),
            detail,
        },
        other => other,
    })
}
