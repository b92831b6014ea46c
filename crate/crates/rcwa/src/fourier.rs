//! Truncated Fourier coefficients of layer permittivity and the convolution
//! (Toeplitz) matrices built from them.
//!
//! Three coefficient routes are available: plain DFS on the raster samples,
//! DFS on a block-replicated raster (suppresses aliasing), and CFS, the exact
//! integral over piecewise-constant regions.

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Grid, Piecewise, Run};
use crate::kspace::{Precision, SimConfig, Truncation};
use crate::linalg::{c64, inverse, round_to_f32, Block, CMat, RCOND_ROBUST, ZERO};
use std::f64::consts::PI;

/// How Fourier coefficients are obtained from a layer description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FourierMode {
    Dfs,
    EnhancedDfs,
    Cfs,
}

impl FourierMode {
    pub fn name(self) -> &'static str {
        match self {
            FourierMode::Dfs => "dfs",
            FourierMode::EnhancedDfs => "enhanced-dfs",
            FourierMode::Cfs => "cfs",
        }
    }
}

impl std::str::FromStr for FourierMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dfs" => Ok(FourierMode::Dfs),
            "enhanced-dfs" | "enhanced_dfs" | "edfs" => Ok(FourierMode::EnhancedDfs),
            "cfs" => Ok(FourierMode::Cfs),
            other => Err(format!("unknown Fourier mode '{other}' (expected dfs, enhanced-dfs or cfs)")),
        }
    }
}

/// Coefficients c_{n,m} for n ∈ [−2N, 2N], m ∈ [−2M, 2M].
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffGrid {
    pub fto: Truncation,
    data: Vec<c64>,
}

impl CoeffGrid {
    fn zeros(fto: Truncation) -> Self {
        let (w, h) = (4 * fto.m + 1, 4 * fto.n + 1);
        CoeffGrid { fto, data: vec![ZERO; w * h] }
    }

    fn width(&self) -> usize {
        4 * self.fto.m + 1
    }

    fn slot(&self, n: i64, m: i64) -> usize {
        let (mm, nn) = (2 * self.fto.m as i64, 2 * self.fto.n as i64);
        assert!(n.abs() <= nn && m.abs() <= mm, "order ({n}, {m}) outside the coefficient grid");
        (n + nn) as usize * self.width() + (m + mm) as usize
    }

    pub fn get(&self, n: i64, m: i64) -> c64 {
        self.data[self.slot(n, m)]
    }

    fn set(&mut self, n: i64, m: i64, v: c64) {
        let s = self.slot(n, m);
        self.data[s] = v;
    }

    /// All (n, m, c_{n,m}) entries, n-major.
    pub fn entries(&self) -> impl Iterator<Item = (i64, i64, c64)> + '_ {
        let (mm, nn) = (2 * self.fto.m as i64, 2 * self.fto.n as i64);
        (-nn..=nn).flat_map(move |n| (-mm..=mm).map(move |m| (n, m, self.get(n, m))))
    }
}

fn twiddles(p: usize) -> Vec<c64> {
    (0..p)
        .map(|k| {
            let (s, c) = (2.0 * PI * k as f64 / p as f64).sin_cos();
            c64::new(c, -s)
        })
        .collect()
}

/// Discrete Fourier series of a sampled layer.
pub fn dfs_coefficients(layer: &Grid, fto: Truncation) -> CoeffGrid {
    let (py, px) = (layer.ny(), layer.nx());
    let (mm, nn) = (2 * fto.m as i64, 2 * fto.n as i64);
    let (tx, ty) = (twiddles(px), twiddles(py));
    let width = (2 * mm + 1) as usize;

    // Sum along X first: row_sums[r][m].
    let mut row_sums = vec![ZERO; py * width];
    for r in 0..py {
        for (k, m) in (-mm..=mm).enumerate() {
            let step = m.rem_euclid(px as i64) as usize;
            let mut phase = 0usize;
            let mut acc = ZERO;
            for c in 0..px {
                acc += layer.get(r, c) * tx[phase];
                phase = (phase + step) % px;
            }
            row_sums[r * width + k] = acc;
        }
    }
    let mut out = CoeffGrid::zeros(fto);
    let norm = 1.0 / (px * py) as f64;
    for n in -nn..=nn {
        let step = n.rem_euclid(py as i64) as usize;
        for (k, m) in (-mm..=mm).enumerate() {
            let mut phase = 0usize;
            let mut acc = ZERO;
            for r in 0..py {
                acc += row_sums[r * width + k] * ty[phase];
                phase = (phase + step) % py;
            }
            out.set(n, m, acc * norm);
        }
    }
    out
}

/// Smallest replication factor giving at least `2·(4·order + 1)` samples.
fn replication_factor(extent: usize, order: usize) -> usize {
    let bound = 2 * (4 * order + 1);
    bound.div_ceil(extent).max(1)
}

/// Block-replicates each cell so DFS sees enough samples per axis for the
/// orders it has to deliver (±2M along X, ±2N along Y).
pub fn enhance_sampling(layer: &Grid, fto: Truncation) -> Grid {
    let fx = replication_factor(layer.nx(), fto.m);
    let fy = replication_factor(layer.ny(), fto.n);
    if fx == 1 && fy == 1 {
        return layer.clone();
    }
    let (ny, nx) = (layer.ny() * fy, layer.nx() * fx);
    let data = (0..ny)
        .flat_map(|r| (0..nx).map(move |c| layer.get(r / fy, c / fx)))
        .collect();
    Grid::new(ny, nx, data).expect("replicated grid keeps a valid shape")
}

/// `(1/Λ) ∫_{a}^{b} e^{−j2πk t/Λ} dt` for every k in `-kmax..=kmax`.
fn interval_integrals(a: f64, b: f64, period: f64, kmax: i64) -> Vec<c64> {
    let w = b - a;
    if a == 0.0 && b == period {
        return (-kmax..=kmax).map(|k| if k == 0 { c64::new(1.0, 0.0) } else { ZERO }).collect();
    }
    let mid = 0.5 * (a + b);
    (-kmax..=kmax)
        .map(|k| {
            if k == 0 {
                return c64::new(w / period, 0.0);
            }
            let alpha = 2.0 * PI * k as f64 / period;
            // (e^{−jαb} − e^{−jαa})/(−jα) = e^{−jα·mid} · w · sinc(αw/2)
            let half = 0.5 * alpha * w;
            let sinc = half.sin() / half;
            let (s, c) = (alpha * mid).sin_cos();
            c64::new(c, -s) * (w * sinc / period)
        })
        .collect()
}

/// `Σ_r v_r (1/Λ) ∫_{x0_r}^{x1_r} e^{−j2πk t/Λ} dt` over the runs of one strip,
/// for every k in `-kmax..=kmax`.
///
/// Each run contributes v·(e^{−jαx1} − e^{−jαx0})/(−jαΛ); terms are gathered per
/// edge so that a shared edge between two runs costs one phase evaluation, and
/// edges at 0 or Λ carry phase 1 exactly.
fn run_integrals(runs: &[Run], period: f64, kmax: i64) -> Vec<c64> {
    let width = (2 * kmax + 1) as usize;
    let mut out = vec![ZERO; width];
    let mut mean = ZERO;
    let mut edges: Vec<(f64, c64)> = Vec::with_capacity(2 * runs.len());
    let mut at_origin = ZERO;
    let mut push = |x: f64, w: c64| {
        if x == 0.0 || x == period {
            at_origin += w;
        } else if let Some(last) = edges.last_mut().filter(|e| e.0 == x) {
            last.1 += w;
        } else {
            edges.push((x, w));
        }
    };
    for r in runs.iter().filter(|r| r.x1 > r.x0) {
        mean += r.value * ((r.x1 - r.x0) / period);
        push(r.x0, -r.value);
        push(r.x1, r.value);
    }
    let centre = kmax as usize;
    out[centre] = mean;
    for k in 1..=kmax {
        let scale = c64::new(0.0, 1.0 / (2.0 * PI * k as f64));
        let mut pos = at_origin;
        let mut neg = at_origin;
        for &(x, w) in edges.iter().filter(|e| e.1 != ZERO) {
            let (sn, cs) = (2.0 * PI * k as f64 * x / period).sin_cos();
            pos += w * c64::new(cs, -sn);
            neg += w * c64::new(cs, sn);
        }
        out[centre + k as usize] = pos * scale;
        out[centre - k as usize] = -(neg * scale);
    }
    out
}

/// Continuous Fourier series: exact integrals over the constant regions.
pub fn cfs_coefficients(layout: &Piecewise, fto: Truncation) -> CoeffGrid {
    let [lx, ly] = layout.period;
    let (mm, nn) = (2 * fto.m as i64, 2 * fto.n as i64);
    let width = (2 * mm + 1) as usize;
    let mut out = CoeffGrid::zeros(fto);
    for strip in &layout.strips {
        if strip.y1 <= strip.y0 {
            continue;
        }
        let ax = run_integrals(&strip.runs, lx, mm);
        let iy = interval_integrals(strip.y0, strip.y1, ly, nn);
        for (a, &wy) in iy.iter().enumerate() {
            let row = &mut out.data[a * width..(a + 1) * width];
            for (o, &wx) in row.iter_mut().zip(&ax) {
                *o += wy * wx;
            }
        }
    }
    out
}

/// Toeplitz matrix with entry `(idx(n,m), idx(n′,m′)) = c_{n−n′, m−m′}`.
pub fn to_conv_mat(grid: &CoeffGrid, fto: Truncation) -> Result<CMat> {
    if grid.fto != fto {
        return Err(Error::Shape(format!(
            "coefficient grid covers truncation {:?}, matrix needs {:?}",
            grid.fto, fto
        )));
    }
    let orders: Vec<(i64, i64)> = fto.orders().collect();
    let xi = orders.len();
    Ok(CMat::from_fn(xi, xi, |i, j| {
        let (n, m) = orders[i];
        let (n2, m2) = orders[j];
        grid.get(n - n2, m - m2)
    }))
}

/// Convolution matrices of one layer. Uniform layers stay diagonal (ε·I).
#[derive(Debug, Clone)]
pub struct LayerConv {
    /// ⟦ε⟧
    pub e_conv: Block,
    /// ⟦ε⁻¹⟧⁻¹
    pub o_e_conv: Block,
    /// Set for uniform layers.
    pub uniform: Option<c64>,
}

#[derive(Debug, Clone)]
pub struct ConvSet {
    pub fto: Truncation,
    pub layers: Vec<LayerConv>,
}

/// Checks that a geometry can be converted under `config` and `mode`.
pub fn check_geometry(geometry: &Geometry, config: &SimConfig, mode: FourierMode) -> Result<()> {
    let count = geometry.layer_count();
    if count != config.thickness.len() {
        return Err(Error::Shape(format!(
            "geometry has {count} layers but {} thicknesses were given",
            config.thickness.len()
        )));
    }
    if let Geometry::Vector(v) = geometry {
        if mode != FourierMode::Cfs {
            return Err(Error::Domain(
                "DFS modes need a raster geometry; rasterize the vector layout or use CFS".into(),
            ));
        }
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !(rel(v.period[0], config.period[0]) && rel(v.period[1], config.period[1])) {
            return Err(Error::Shape(format!(
                "layout period {:?} differs from simulation period {:?}",
                v.period, config.period
            )));
        }
    }
    Ok(())
}

/// Convolution matrices of layer `index`; assumes [`check_geometry`] passed.
pub fn layer_conv(
    geometry: &Geometry,
    index: usize,
    config: &SimConfig,
    mode: FourierMode,
) -> Result<LayerConv> {
    let fto = config.fto;
    let single = config.precision == Precision::Single;
    let finish = |b: Block| if single { b.map(round_to_f32) } else { b };

    let piecewise = match (geometry, mode) {
        (Geometry::Raster(u), FourierMode::Cfs) => Some(u.layers()[index].piecewise(config.period)),
        (Geometry::Vector(v), _) => Some(v.layers[index].piecewise(config.period)),
        _ => None,
    };
    let uniform = match (&piecewise, geometry) {
        (Some(p), _) => p.uniform_value(),
        (None, Geometry::Raster(u)) => u.layers()[index].uniform_value(),
        (None, Geometry::Vector(_)) => unreachable!(),
    };
    if let Some(eps) = uniform {
        let d = Block::Diag(vec![eps; fto.xi()]);
        return Ok(LayerConv {
            e_conv: finish(d.clone()),
            o_e_conv: finish(d),
            uniform: Some(eps),
        });
    }

    let (c_eps, c_inv) = match (&piecewise, geometry) {
        (Some(p), _) => (cfs_coefficients(p, fto), cfs_coefficients(&p.map(|v| v.inv()), fto)),
        (None, Geometry::Raster(u)) => {
            let g = &u.layers()[index];
            let g = if mode == FourierMode::EnhancedDfs {
                enhance_sampling(g, fto)
            } else {
                g.clone()
            };
            (dfs_coefficients(&g, fto), dfs_coefficients(&g.map(|v| v.inv()), fto))
        }
        (None, Geometry::Vector(_)) => unreachable!(),
    };
    let e = to_conv_mat(&c_eps, fto)?;
    let p = inverse(&to_conv_mat(&c_inv, fto)?, RCOND_ROBUST)
        .map_err(|e| Error::conditioning(format!("⟦1/ε⟧ of layer {index}"), e))?;
    Ok(LayerConv {
        e_conv: finish(Block::Dense(e)),
        o_e_conv: finish(Block::Dense(p)),
        uniform: None,
    })
}

/// Convolution matrices for every layer of a stack.
pub fn conv_set(geometry: &Geometry, config: &SimConfig, mode: FourierMode) -> Result<ConvSet> {
    check_geometry(geometry, config, mode)?;
    let layers = (0..geometry.layer_count())
        .map(|i| layer_conv(geometry, i, config, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvSet { fto: config.fto, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{draw, rasterize, Rectangle};

    fn re(x: f64) -> c64 {
        c64::new(x, 0.0)
    }

    fn fto(m: usize, n: usize) -> Truncation {
        Truncation { m, n }
    }

    #[test]
    fn run_integrals_match_interval_sum() {
        let period = 3.0;
        let runs = [
            Run { x0: 0.0, x1: 0.7, value: re(2.0) },
            Run { x0: 0.7, x1: 1.9, value: c64::new(0.5, 1.0) },
            Run { x0: 2.2, x1: 3.0, value: re(-1.5) },
        ];
        let got = run_integrals(&runs, period, 6);
        let mut want = vec![ZERO; 13];
        for r in &runs {
            for (w, v) in want.iter_mut().zip(interval_integrals(r.x0, r.x1, period, 6)) {
                *w += r.value * v;
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn dfs_uniform() {
        let g = Grid::uniform(3, 5, c64::new(4.0, 0.5)).unwrap();
        let c = dfs_coefficients(&g, fto(2, 1));
        for (n, m, v) in c.entries() {
            let want = if (n, m) == (0, 0) { c64::new(4.0, 0.5) } else { ZERO };
            assert!((v - want).norm() < 1e-14, "({n},{m}) = {v}");
        }
    }

    #[test]
    fn dfs_two_point() {
        // Two samples: c_0 = (a+b)/2, c_1 = (a−b)/2.
        let (a, b) = (c64::new(2.0, 1.0), re(5.0));
        let c = dfs_coefficients(&Grid::row(vec![a, b]).unwrap(), fto(1, 0));
        assert!((c.get(0, 0) - (a + b) / 2.0).norm() < 1e-15);
        assert!((c.get(0, 1) - (a - b) / 2.0).norm() < 1e-15);
        assert!((c.get(0, -1) - (a - b) / 2.0).norm() < 1e-15);
        assert!((c.get(0, 2) - (a + b) / 2.0).norm() < 1e-15);
    }

    #[test]
    fn replication_factor_matches_bound() {
        let g = Grid::row(vec![re(1.0); 64]).unwrap();
        let e = enhance_sampling(&g, fto(40, 0));
        assert_eq!(e.nx(), 384);
        assert_eq!(e.ny(), 2);
        let big = Grid::row(vec![re(1.0); 500]).unwrap();
        assert_eq!(enhance_sampling(&big, fto(40, 0)).nx(), 500);
    }

    #[test]
    fn enhanced_keeps_mean() {
        let vals: Vec<c64> = (0..13).map(|i| re(1.0 + (i % 3) as f64)).collect();
        let g = Grid::row(vals).unwrap();
        let f = fto(7, 0);
        assert_eq!(
            dfs_coefficients(&g, f).get(0, 0),
            dfs_coefficients(&enhance_sampling(&g, f), f).get(0, 0)
        );
    }

    #[test]
    fn cfs_binary_grating_mean() {
        let fill = 0.3;
        let r = Rectangle::new(0.5, 0.5, fill, 1.0, re(12.0)).unwrap();
        let layout = draw([1.0, 1.0], vec![(re(1.0), vec![r])]);
        let c = cfs_coefficients(&layout.layers[0].piecewise(layout.period), fto(3, 0));
        assert!((c.get(0, 0) - re(fill * 12.0 + (1.0 - fill))).norm() < 1e-14);
        // Closed form of a centered ridge: (ε₁−ε₂)·sin(πmf)/(πm)·e^{−jπm}.
        for m in 1..=6i64 {
            let want = re(11.0 * (PI * m as f64 * fill).sin() / (PI * m as f64)) * if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((c.get(0, m) - want).norm() < 1e-14);
        }
    }

    #[test]
    fn cfs_uniform_exact() {
        let layout = draw([2.0, 3.0], vec![(re(2.5), vec![])]);
        let c = cfs_coefficients(&layout.layers[0].piecewise(layout.period), fto(2, 2));
        for (n, m, v) in c.entries() {
            assert_eq!(v, if (n, m) == (0, 0) { re(2.5) } else { ZERO });
        }
    }

    #[test]
    fn conv_mat_index_formula() {
        let (a, b, d) = (re(3.0), c64::new(0.5, 0.25), c64::new(-0.1, 0.2));
        let f = fto(1, 0);
        let mut g = CoeffGrid::zeros(f);
        g.set(0, 0, a);
        g.set(0, 1, b);
        g.set(0, -1, b.conj());
        g.set(0, 2, d);
        g.set(0, -2, d.conj());
        let e = to_conv_mat(&g, f).unwrap();
        // rows/cols are m = −1, 0, 1
        let want = [[a, b.conj(), d.conj()], [b, a, b.conj()], [d, b, a]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(e[(i, j)], want[i][j]);
            }
        }
        assert!(to_conv_mat(&g, fto(2, 0)).is_err());
    }

    #[test]
    fn conv_set_uniform_is_exact_identity_multiple() {
        let layout = draw([1.0, 1.0], vec![(re(4.0), vec![])]);
        let cfg = SimConfig::new(1.0, [1.0, 1.0], fto(2, 1), vec![0.1]);
        let cs = conv_set(&Geometry::Vector(layout), &cfg, FourierMode::Cfs).unwrap();
        let l = &cs.layers[0];
        let want = crate::linalg::diag_mat(&[re(4.0); 15]);
        assert_eq!(l.e_conv.to_dense(15), want);
        assert_eq!(l.o_e_conv.to_dense(15), want);
    }

    #[test]
    fn vector_and_exact_raster_agree_under_cfs() {
        let r = Rectangle::new(0.25, 0.5, 0.5, 1.0, re(6.0)).unwrap();
        let layout = draw([1.0, 1.0], vec![(re(1.5), vec![r])]);
        let raster = rasterize(&layout, 8, 1).unwrap();
        let cfg = SimConfig::new(1.0, [1.0, 1.0], fto(4, 0), vec![0.2]);
        let a = conv_set(&Geometry::Vector(layout), &cfg, FourierMode::Cfs).unwrap();
        let b = conv_set(&Geometry::Raster(raster), &cfg, FourierMode::Cfs).unwrap();
        let (ea, eb) = (a.layers[0].e_conv.to_dense(9), b.layers[0].e_conv.to_dense(9));
        let (pa, pb) = (a.layers[0].o_e_conv.to_dense(9), b.layers[0].o_e_conv.to_dense(9));
        for i in 0..9 {
            for j in 0..9 {
                assert!((ea[(i, j)] - eb[(i, j)]).norm() < 1e-14);
                assert!((pa[(i, j)] - pb[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dfs_on_vector_is_rejected() {
        let layout = draw([1.0, 1.0], vec![(re(4.0), vec![])]);
        let cfg = SimConfig::new(1.0, [1.0, 1.0], fto(1, 0), vec![0.1]);
        assert!(conv_set(&Geometry::Vector(layout), &cfg, FourierMode::Dfs).is_err());
    }
}
