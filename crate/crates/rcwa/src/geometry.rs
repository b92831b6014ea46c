//! Device stacks in raster (cell array) and vector (rectangle list) form.
//!
//! Both forms store relative permittivity. Raster layers tile the unit cell
//! with `ny × nx` equal cells; vector layers are a base value plus an ordered
//! list of rectangles in which later entries occlude earlier ones. Either form
//! can be flattened into a [`Piecewise`] description (disjoint constant
//! rectangles) for exact Fourier integration.

use crate::error::{Error, Result};
use crate::linalg::c64;

/// One raster layer: `ny` rows (Y) by `nx` columns (X), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    ny: usize,
    nx: usize,
    data: Vec<c64>,
}

impl Grid {
    pub fn new(ny: usize, nx: usize, data: Vec<c64>) -> Result<Self> {
        if ny == 0 || nx == 0 {
            return Err(Error::Shape("raster layer must be non-empty".into()));
        }
        if data.len() != ny * nx {
            return Err(Error::Shape(format!(
                "raster layer has {} values, expected {}×{}",
                data.len(),
                ny,
                nx
            )));
        }
        if let Some(i) = data.iter().position(|v| v.norm() == 0.0 || !v.is_finite()) {
            return Err(Error::Domain(format!("permittivity at cell {i} is zero or not finite")));
        }
        Ok(Grid { ny, nx, data })
    }

    pub fn uniform(ny: usize, nx: usize, eps: c64) -> Result<Self> {
        Self::new(ny, nx, vec![eps; ny * nx])
    }

    /// One-row layer from a list of values.
    pub fn row(values: Vec<c64>) -> Result<Self> {
        Self::new(1, values.len(), values)
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn get(&self, r: usize, c: usize) -> c64 {
        self.data[r * self.nx + c]
    }

    pub fn values(&self) -> &[c64] {
        &self.data
    }

    /// The single value of a uniform layer, if it is uniform.
    pub fn uniform_value(&self) -> Option<c64> {
        let v = self.data[0];
        self.data.iter().all(|&x| x == v).then_some(v)
    }

    pub fn map(&self, f: impl Fn(c64) -> c64) -> Grid {
        Grid {
            ny: self.ny,
            nx: self.nx,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Cyclic shift by `(dy, dx)` cells.
    pub fn roll(&self, dy: usize, dx: usize) -> Grid {
        let mut data = vec![self.data[0]; self.data.len()];
        for r in 0..self.ny {
            for c in 0..self.nx {
                data[((r + dy) % self.ny) * self.nx + (c + dx) % self.nx] = self.get(r, c);
            }
        }
        Grid { ny: self.ny, nx: self.nx, data }
    }

    /// Cell-boundary flattening: each row becomes a strip, equal neighbours merge.
    pub fn piecewise(&self, period: [f64; 2]) -> Piecewise {
        let (wx, wy) = (period[0] / self.nx as f64, period[1] / self.ny as f64);
        let strips = (0..self.ny)
            .map(|r| {
                let mut runs: Vec<Run> = Vec::new();
                for c in 0..self.nx {
                    let v = self.get(r, c);
                    match runs.last_mut() {
                        Some(last) if last.value == v => last.x1 = (c + 1) as f64 * wx,
                        _ => runs.push(Run {
                            x0: c as f64 * wx,
                            x1: (c + 1) as f64 * wx,
                            value: v,
                        }),
                    }
                }
                Strip {
                    y0: r as f64 * wy,
                    y1: (r + 1) as f64 * wy,
                    runs,
                }
            })
            .collect();
        Piecewise { period, strips }
    }
}

/// Raster stack: layers ordered top (superstrate side) to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct UCell {
    layers: Vec<Grid>,
}

impl UCell {
    /// Builds a stack from a (Z, Y, X) nested array of permittivities.
    pub fn new(values: Vec<Vec<Vec<c64>>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("raster stack has no layers".into()));
        }
        let ny = values[0].len();
        let nx = values[0].first().map_or(0, |r| r.len());
        let mut layers = Vec::with_capacity(values.len());
        for (z, layer) in values.into_iter().enumerate() {
            if layer.len() != ny || layer.iter().any(|row| row.len() != nx) {
                return Err(Error::Shape(format!("layer {z} is ragged or differs in shape from layer 0")));
            }
            layers.push(Grid::new(ny, nx, layer.into_iter().flatten().collect())?);
        }
        Ok(UCell { layers })
    }

    /// Same as [`UCell::new`] with refractive-index input, squared on ingestion.
    pub fn from_index(values: Vec<Vec<Vec<c64>>>) -> Result<Self> {
        Self::new(
            values
                .into_iter()
                .map(|l| l.into_iter().map(|r| r.into_iter().map(|n| n * n).collect()).collect())
                .collect(),
        )
    }

    pub fn from_layers(layers: Vec<Grid>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Shape("raster stack has no layers".into()))?;
        let (ny, nx) = (first.ny, first.nx);
        if layers.iter().any(|g| g.ny != ny || g.nx != nx) {
            return Err(Error::Shape("raster layers differ in (Y, X) extent".into()));
        }
        Ok(UCell { layers })
    }

    /// A stack with no grating layers: a bare superstrate/substrate interface.
    pub fn empty() -> Self {
        UCell { layers: Vec::new() }
    }

    pub fn layers(&self) -> &[Grid] {
        &self.layers
    }
}

/// Axis-aligned rectangle given by its center and full side lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub cx: f64,
    pub cy: f64,
    pub lx: f64,
    pub ly: f64,
    pub eps: c64,
}

impl Rectangle {
    pub fn new(cx: f64, cy: f64, lx: f64, ly: f64, eps: c64) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::Domain(format!("rectangle lengths must be positive, got ({lx}, {ly})")));
        }
        Ok(Rectangle { cx, cy, lx, ly, eps })
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Closed containment test after wrapping into the unit cell.
    pub fn contains(&self, x: f64, y: f64, period: [f64; 2]) -> bool {
        covers(self.cx - self.lx / 2.0, self.lx, x, period[0])
            && covers(self.cy - self.ly / 2.0, self.ly, y, period[1])
    }
}

fn covers(start: f64, len: f64, p: f64, period: f64) -> bool {
    len >= period || (p - start).rem_euclid(period) <= len
}

/// Sub-rectangles approximating a rectangle rotated by `angle` about its center.
///
/// The rotated shape is cut into `n_split_y` horizontal bands, and each band
/// into `n_split_x` slices; every slice holds the largest axis-aligned
/// rectangle inscribed between the rotated edges. Pieces are disjoint and their
/// union grows toward the rotated rectangle as the splits increase.
pub fn rectangle_rotate(
    cx: f64,
    cy: f64,
    lx: f64,
    ly: f64,
    n_split_x: usize,
    n_split_y: usize,
    eps: c64,
    angle: f64,
) -> Result<Vec<Rectangle>> {
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::Domain(format!("rectangle lengths must be positive, got ({lx}, {ly})")));
    }
    if n_split_x == 0 || n_split_y == 0 {
        return Err(Error::Domain("split counts must be at least 1".into()));
    }
    let (s, c) = angle.sin_cos();
    let verts: Vec<(f64, f64)> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(u, v)| {
            let (du, dv) = (u * lx / 2.0, v * ly / 2.0);
            (cx + du * c - dv * s, cy + du * s + dv * c)
        })
        .collect();
    let y_lo = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let y_hi = verts.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);

    let section = |y: f64| -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..4 {
            let (a, b) = (verts[k], verts[(k + 1) % 4]);
            let (ya, yb) = (a.1.min(b.1), a.1.max(b.1));
            if y < ya || y > yb {
                continue;
            }
            if a.1 == b.1 {
                lo = lo.min(a.0.min(b.0));
                hi = hi.max(a.0.max(b.0));
            } else {
                let t = (y - a.1) / (b.1 - a.1);
                let x = a.0 + t * (b.0 - a.0);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    };

    let slices = n_split_x * n_split_y;
    let h = (y_hi - y_lo) / slices as f64;
    let mut out = Vec::new();
    for k in 0..slices {
        let ya = y_lo + k as f64 * h;
        let yb = if k + 1 == slices { y_hi } else { y_lo + (k + 1) as f64 * h };
        // Left edge is convex and right edge concave in y, so the inscribed
        // extent over a slice is attained at its ends.
        let (Some(a), Some(b)) = (section(ya), section(yb)) else {
            continue;
        };
        let (x0, x1) = (a.0.max(b.0), a.1.min(b.1));
        if x1 > x0 && yb > ya {
            out.push(Rectangle {
                cx: 0.5 * (x0 + x1),
                cy: 0.5 * (ya + yb),
                lx: x1 - x0,
                ly: yb - ya,
                eps,
            });
        }
    }
    Ok(out)
}

/// One vector layer: base permittivity and rectangles in z-order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLayer {
    pub base: c64,
    pub rects: Vec<Rectangle>,
}

impl VectorLayer {
    pub fn new(base: c64, rects: Vec<Rectangle>) -> Self {
        VectorLayer { base, rects }
    }

    /// Permittivity at a point: the last rectangle covering it, else the base.
    pub fn value_at(&self, x: f64, y: f64, period: [f64; 2]) -> c64 {
        self.rects
            .iter()
            .rev()
            .find(|r| r.contains(x, y, period))
            .map_or(self.base, |r| r.eps)
    }

    /// Occlusion flattening into disjoint constant rectangles.
    pub fn piecewise(&self, period: [f64; 2]) -> Piecewise {
        let xs = breakpoints(self.rects.iter().map(|r| (r.cx, r.lx)), period[0]);
        let ys = breakpoints(self.rects.iter().map(|r| (r.cy, r.ly)), period[1]);
        let mut strips = Vec::with_capacity(ys.len() - 1);
        for w in ys.windows(2) {
            let ym = 0.5 * (w[0] + w[1]);
            let active: Vec<&Rectangle> = self
                .rects
                .iter()
                .filter(|r| covers(r.cy - r.ly / 2.0, r.ly, ym, period[1]))
                .collect();
            let mut runs: Vec<Run> = Vec::new();
            for v in xs.windows(2) {
                let xm = 0.5 * (v[0] + v[1]);
                let value = active
                    .iter()
                    .rev()
                    .find(|r| covers(r.cx - r.lx / 2.0, r.lx, xm, period[0]))
                    .map_or(self.base, |r| r.eps);
                match runs.last_mut() {
                    Some(last) if last.value == value => last.x1 = v[1],
                    _ => runs.push(Run { x0: v[0], x1: v[1], value }),
                }
            }
            strips.push(Strip { y0: w[0], y1: w[1], runs });
        }
        Piecewise { period, strips }
    }
}

fn breakpoints(edges: impl Iterator<Item = (f64, f64)>, period: f64) -> Vec<f64> {
    let mut pts = vec![0.0, period];
    for (c, l) in edges {
        if l >= period {
            continue;
        }
        for e in [c - l / 2.0, c + l / 2.0] {
            let w = e.rem_euclid(period);
            if w > 0.0 && w < period {
                pts.push(w);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    let tol = 1e-12 * period;
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|&q| p - q > tol) {
            out.push(p);
        } else if p == period {
            *out.last_mut().unwrap() = period;
        }
    }
    out
}

/// Vector stack: one [`VectorLayer`] per grating layer, top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLayout {
    pub period: [f64; 2],
    pub layers: Vec<VectorLayer>,
}

/// Assembles a vector layout; overlaps are resolved by list order.
pub fn draw(period: [f64; 2], layers: Vec<(c64, Vec<Rectangle>)>) -> VectorLayout {
    VectorLayout {
        period,
        layers: layers.into_iter().map(|(b, r)| VectorLayer::new(b, r)).collect(),
    }
}

/// Samples every vector layer at the centers of an `ny × nx` grid.
pub fn rasterize(layout: &VectorLayout, nx: usize, ny: usize) -> Result<UCell> {
    if nx == 0 || ny == 0 {
        return Err(Error::Domain("raster resolution must be at least 1×1".into()));
    }
    let [px, py] = layout.period;
    let grids = layout
        .layers
        .iter()
        .map(|layer| {
            let mut data = Vec::with_capacity(nx * ny);
            for r in 0..ny {
                let y = (r as f64 + 0.5) * py / ny as f64;
                for c in 0..nx {
                    let x = (c as f64 + 0.5) * px / nx as f64;
                    data.push(layer.value_at(x, y, layout.period));
                }
            }
            Grid::new(ny, nx, data)
        })
        .collect::<Result<Vec<_>>>()?;
    UCell::from_layers(grids)
}

/// A constant run `[x0, x1)` inside a strip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub x0: f64,
    pub x1: f64,
    pub value: c64,
}

/// A horizontal strip `[y0, y1)` split into constant runs along X.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub y0: f64,
    pub y1: f64,
    pub runs: Vec<Run>,
}

/// Piecewise-constant permittivity over one unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise {
    pub period: [f64; 2],
    pub strips: Vec<Strip>,
}

impl Piecewise {
    pub fn map(&self, f: impl Fn(c64) -> c64) -> Piecewise {
        Piecewise {
            period: self.period,
            strips: self
                .strips
                .iter()
                .map(|s| Strip {
                    y0: s.y0,
                    y1: s.y1,
                    runs: s.runs.iter().map(|r| Run { value: f(r.value), ..*r }).collect(),
                })
                .collect(),
        }
    }

    /// Area-weighted mean value.
    pub fn mean(&self) -> c64 {
        let mut acc = c64::new(0.0, 0.0);
        for s in &self.strips {
            for r in &s.runs {
                acc += r.value * ((r.x1 - r.x0) * (s.y1 - s.y0));
            }
        }
        acc / (self.period[0] * self.period[1])
    }

    pub fn uniform_value(&self) -> Option<c64> {
        let v = self.strips.first()?.runs.first()?.value;
        self.strips
            .iter()
            .all(|s| s.runs.iter().all(|r| r.value == v))
            .then_some(v)
    }
}

/// Permittivity description of a whole stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Raster(UCell),
    Vector(VectorLayout),
}

impl Geometry {
    pub fn layer_count(&self) -> usize {
        match self {
            Geometry::Raster(u) => u.layers().len(),
            Geometry::Vector(v) => v.layers.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(x: f64) -> c64 {
        c64::new(x, 0.0)
    }

    #[test]
    fn raster_from_index_squares() {
        let row: Vec<c64> = (0..10).map(|i| if i < 5 { re(1.0) } else { re(3.48) }).collect();
        let u = UCell::from_index(vec![vec![row.clone()], vec![row]]).unwrap();
        assert_eq!(u.layers().len(), 2);
        assert_eq!((u.layers()[0].ny(), u.layers()[0].nx()), (1, 10));
        assert_eq!(u.layers()[1].get(0, 9), re(3.48 * 3.48));
    }

    #[test]
    fn raster_shape_errors() {
        assert!(matches!(UCell::new(vec![]), Err(Error::Shape(_))));
        assert!(matches!(UCell::new(vec![vec![]]), Err(Error::Shape(_))));
        let ragged = vec![vec![vec![re(1.0), re(2.0)], vec![re(1.0)]]];
        assert!(matches!(UCell::new(ragged), Err(Error::Shape(_))));
        assert!(matches!(UCell::new(vec![vec![vec![re(0.0)]]]), Err(Error::Domain(_))));
        let u = UCell::new(vec![vec![vec![re(4.0)]]]).unwrap();
        assert_eq!(u.layers()[0].uniform_value(), Some(re(4.0)));
    }

    #[test]
    fn overlap_resolves_to_last_listed() {
        let red = Rectangle::new(0.4, 0.5, 0.4, 0.4, re(2.0)).unwrap();
        let blue = Rectangle::new(0.6, 0.5, 0.4, 0.4, re(5.0)).unwrap();
        let layout = draw([1.0, 1.0], vec![(re(1.0), vec![red, blue])]);
        let l = &layout.layers[0];
        assert_eq!(l.value_at(0.5, 0.5, layout.period), re(5.0));
        assert_eq!(l.value_at(0.25, 0.5, layout.period), re(2.0));
        assert_eq!(l.value_at(0.75, 0.5, layout.period), re(5.0));
        assert_eq!(l.value_at(0.05, 0.05, layout.period), re(1.0));
        let swapped = draw([1.0, 1.0], vec![(re(1.0), vec![blue, red])]);
        assert_eq!(swapped.layers[0].value_at(0.5, 0.5, layout.period), re(2.0));
    }

    #[test]
    fn empty_layer_is_base() {
        let layout = draw([2.0, 1.0], vec![(re(2.25), vec![])]);
        let u = rasterize(&layout, 7, 3).unwrap();
        assert_eq!(u.layers()[0].uniform_value(), Some(re(2.25)));
        assert_eq!(layout.layers[0].piecewise(layout.period).uniform_value(), Some(re(2.25)));
    }

    #[test]
    fn rasterize_half_period_rectangle() {
        let r = Rectangle::new(0.5, 0.5, 0.5, 1.0, re(9.0)).unwrap();
        let layout = draw([1.0, 1.0], vec![(re(1.0), vec![r])]);
        let u = rasterize(&layout, 4, 1).unwrap();
        let g = &u.layers()[0];
        let vals: Vec<c64> = (0..4).map(|c| g.get(0, c)).collect();
        assert_eq!(vals, vec![re(1.0), re(9.0), re(9.0), re(1.0)]);
    }

    #[test]
    fn wrapping_past_the_cell_edge() {
        let r = Rectangle::new(0.0, 0.5, 0.5, 1.0, re(4.0)).unwrap();
        let layout = draw([1.0, 1.0], vec![(re(1.0), vec![r])]);
        let u = rasterize(&layout, 4, 1).unwrap();
        let g = &u.layers()[0];
        let vals: Vec<c64> = (0..4).map(|c| g.get(0, c)).collect();
        assert_eq!(vals, vec![re(4.0), re(1.0), re(1.0), re(4.0)]);
        let pw = layout.layers[0].piecewise(layout.period);
        assert!((pw.mean() - re(2.5)).norm() < 1e-15);
    }

    #[test]
    fn rotate_zero_is_exact() {
        let parts = rectangle_rotate(3.0, 2.0, 4.0, 1.5, 3, 5, re(2.0), 0.0).unwrap();
        let area: f64 = parts.iter().map(Rectangle::area).sum();
        assert!((area - 6.0).abs() < 1e-12);
        let x0 = parts.iter().map(|r| r.cx - r.lx / 2.0).fold(f64::INFINITY, f64::min);
        let x1 = parts.iter().map(|r| r.cx + r.lx / 2.0).fold(f64::NEG_INFINITY, f64::max);
        assert!((x0 - 1.0).abs() < 1e-12 && (x1 - 5.0).abs() < 1e-12);
        assert!(parts.iter().all(|r| (r.lx - 4.0).abs() < 1e-12));
    }

    #[test]
    fn rotate_quarter_turn_swaps_lengths() {
        let parts = rectangle_rotate(0.0, 0.0, 4.0, 1.0, 2, 2, re(2.0), std::f64::consts::FRAC_PI_2).unwrap();
        let area: f64 = parts.iter().map(Rectangle::area).sum();
        assert!((area - 4.0).abs() < 1e-9);
        assert!(parts.iter().all(|r| (r.lx - 1.0).abs() < 1e-9));
    }

    #[test]
    fn rotate_rejects_bad_input() {
        assert!(rectangle_rotate(0.0, 0.0, 0.0, 1.0, 1, 1, re(2.0), 0.3).is_err());
        assert!(rectangle_rotate(0.0, 0.0, 1.0, 1.0, 0, 1, re(2.0), 0.3).is_err());
    }

    #[test]
    fn raster_piecewise_merges_runs() {
        let g = Grid::row(vec![re(1.0), re(1.0), re(4.0), re(1.0)]).unwrap();
        let pw = g.piecewise([8.0, 1.0]);
        assert_eq!(pw.strips.len(), 1);
        let runs = &pw.strips[0].runs;
        assert_eq!(runs.len(), 3);
        assert_eq!((runs[0].x0, runs[0].x1), (0.0, 4.0));
        assert_eq!((runs[1].x0, runs[1].x1), (4.0, 6.0));
        assert!((pw.mean() - re(1.75)).norm() < 1e-15);
    }
}
