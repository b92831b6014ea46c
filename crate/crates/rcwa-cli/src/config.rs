//! Run configuration: TOML schema, validation and conversion into solver
//! inputs. Angles are degrees and materials are refractive indices here;
//! everything past this module uses radians and permittivity.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use rcwa::derivatives::{Algorithm, DeflectorSetup, OcdStack, OCD_PRIORS};
use rcwa::fourier::FourierMode;
use rcwa::geometry::{draw, rectangle_rotate, Geometry, Grid, Rectangle, UCell, VectorLayout};
use rcwa::kspace::{Precision, SimConfig, Truncation};
use rcwa::linalg::c64;

/// File-level schema. Serializing it back to TOML reproduces an equal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub wavelength: f64,
    /// Polar incidence angle, degrees.
    #[serde(default)]
    pub theta: f64,
    /// Azimuth, degrees.
    #[serde(default)]
    pub phi: f64,
    /// Polarization angle in degrees; excludes `pol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    /// 0 for TE, 1 for TM; excludes `psi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pol: Option<f64>,
    #[serde(default = "one")]
    pub n_i: f64,
    #[serde(default = "one")]
    pub n_ii: f64,
    pub period: [f64; 2],
    /// [M, N].
    pub fto: [usize; 2],
    pub thickness: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_precision")]
    pub precision: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster: Option<RasterSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<VectorSection>,
}

/// Either inline indices (layer × row × column) or one CSV file per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSection {
    pub layers: Vec<VectorLayerSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorLayerSection {
    /// Background index.
    pub index: f64,
    #[serde(default)]
    pub rects: Vec<RectSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSection {
    pub center: [f64; 2],
    pub lengths: [f64; 2],
    pub index: f64,
    /// Rotation in degrees.
    #[serde(default)]
    pub angle: f64,
    /// Staircase splits [x, y] for rotated rectangles.
    #[serde(default = "one_split")]
    pub n_split: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Truncation orders M to visit, ascending. N follows M on 2-D runs.
    pub fto: Vec<usize>,
    #[serde(default = "all_modes")]
    pub modes: Vec<String>,
    /// Physical transmitted order (px, py) to tabulate.
    #[serde(default = "plus_one")]
    pub order: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub wavelength: f64,
    /// Degrees.
    pub deflect_angle: f64,
    pub cells: usize,
    pub fto: usize,
    #[serde(default = "deflector_thickness")]
    pub thickness: f64,
    #[serde(default = "silica")]
    pub n_i: f64,
    #[serde(default = "one")]
    pub n_ii: f64,
    #[serde(default = "one")]
    pub n_air: f64,
    #[serde(default = "silicon")]
    pub n_si: f64,
    #[serde(default = "one")]
    pub pol: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub epochs: usize,
    #[serde(default = "adam")]
    pub optimizer: String,
    pub lr: f64,
    pub seeds: Vec<u64>,
    /// Number of random binary patterns for the baseline; 0 skips it.
    #[serde(default)]
    pub baseline: usize,
    #[serde(default)]
    pub baseline_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "all_optimizers")]
    pub optimizers: Vec<String>,
    /// Per-optimizer learning rates, aligned with `optimizers`. Defaults to
    /// the built-in table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<Vec<f64>>,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    /// [start, stop, count], inclusive ends.
    #[serde(default = "default_band")]
    pub wavelengths: (f64, f64, usize),
    /// (mean, std) per parameter P1–P8.
    #[serde(default = "default_priors")]
    pub priors: Vec<[f64; 2]>,
    #[serde(default = "default_truth")]
    pub truth: Vec<f64>,
    #[serde(default = "ocd_fto")]
    pub fto: [usize; 2],
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn one() -> f64 {
    1.0
}
fn one_split() -> [usize; 2] {
    [1, 1]
}
fn silica() -> f64 {
    1.45
}
fn silicon() -> f64 {
    3.6
}
fn deflector_thickness() -> f64 {
    325.0
}
fn adam() -> String {
    "adam".into()
}
fn default_mode() -> String {
    "cfs".into()
}
fn default_precision() -> String {
    "double".into()
}
fn all_modes() -> Vec<String> {
    ["dfs", "enhanced-dfs", "cfs"].map(String::from).to_vec()
}
fn plus_one() -> [i64; 2] {
    [1, 0]
}
fn all_optimizers() -> Vec<String> {
    Algorithm::ALL.iter().map(|a| a.name().to_string()).collect()
}
fn default_band() -> (f64, f64, usize) {
    (400.0, 800.0, 32)
}
fn default_priors() -> Vec<[f64; 2]> {
    OCD_PRIORS.iter().map(|p| [p.1, p.2]).collect()
}
fn default_truth() -> Vec<f64> {
    OCD_PRIORS.iter().map(|p| p.3).collect()
}
fn ocd_fto() -> [usize; 2] {
    [1, 1]
}

/// Validated configuration: the file schema plus every resource it names,
/// loaded at parse time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub base_dir: PathBuf,
    /// Geometry loaded from the `[geometry]` section, if any.
    pub geometry: Option<Geometry>,
}

impl RunConfig {
    pub fn output_dir(&self) -> PathBuf {
        let out = self.file.output.as_deref().unwrap_or("out");
        self.base_dir.join(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.file)?)
    }

    pub fn simulation(&self) -> Result<SimConfig> {
        let s = self.file.simulation.as_ref().ok_or_else(|| anyhow!("missing [simulation] section"))?;
        sim_config(s)
    }

    pub fn mode(&self) -> Result<FourierMode> {
        let s = self.file.simulation.as_ref().ok_or_else(|| anyhow!("missing [simulation] section"))?;
        parse_mode(&s.mode, "simulation.mode")
    }

    pub fn geometry(&self) -> Result<&Geometry> {
        self.geometry.as_ref().ok_or_else(|| anyhow!("missing [geometry] section"))
    }

    pub fn deflector(&self) -> Result<DeflectorSetup> {
        let o = self.file.optimize.as_ref().ok_or_else(|| anyhow!("missing [optimize] section"))?;
        deflector_setup(o)
    }

    pub fn optimizer(&self) -> Result<Algorithm> {
        let o = self.file.optimize.as_ref().ok_or_else(|| anyhow!("missing [optimize] section"))?;
        o.optimizer.parse().with_context(|| "optimize.optimizer")
    }

    pub fn ocd_stack(&self) -> Result<OcdStack> {
        let f = self.file.fit.as_ref().ok_or_else(|| anyhow!("missing [fit] section"))?;
        ocd_stack(f)
    }

    /// (optimizer, learning rate) pairs of the fit study.
    pub fn fit_optimizers(&self) -> Result<Vec<(Algorithm, f64)>> {
        let f = self.file.fit.as_ref().ok_or_else(|| anyhow!("missing [fit] section"))?;
        fit_optimizers(f)
    }
}

pub fn parse_mode(s: &str, key: &str) -> Result<FourierMode> {
    s.parse::<FourierMode>().map_err(|e| anyhow!("{key}: {e}"))
}

fn finite_positive(v: f64, key: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bail!("{key} must be positive and finite, got {v}")
    }
}

fn eps(n: f64) -> c64 {
    c64::new(n * n, 0.0)
}

fn sim_config(s: &SimulationSection) -> Result<SimConfig> {
    let mut cfg = SimConfig::new(s.wavelength, s.period, Truncation::new(s.fto[0], s.fto[1]), s.thickness.clone())
        .with_angles(s.theta.to_radians(), s.phi.to_radians())
        .with_indices(s.n_i, s.n_ii);
    cfg = match (s.psi, s.pol) {
        (Some(_), Some(_)) => bail!("simulation.psi and simulation.pol are mutually exclusive"),
        (Some(psi), None) => cfg.with_psi(psi.to_radians()),
        (None, Some(pol)) => cfg.with_pol(pol).context("simulation.pol")?,
        (None, None) => cfg,
    };
    cfg.precision = match s.precision.to_ascii_lowercase().as_str() {
        "double" => Precision::Double,
        "single" => Precision::Single,
        other => bail!("simulation.precision: expected 'double' or 'single', got '{other}'"),
    };
    cfg.validate().context("simulation")?;
    Ok(cfg)
}

fn deflector_setup(o: &OptimizeSection) -> Result<DeflectorSetup> {
    let setup = DeflectorSetup {
        thickness: o.thickness,
        n_i: o.n_i,
        n_ii: o.n_ii,
        n_air: o.n_air,
        n_si: o.n_si,
        pol: o.pol,
        mode: parse_mode(&o.mode, "optimize.mode")?,
        ..DeflectorSetup::new(o.wavelength, o.deflect_angle, o.cells, o.fto)
    };
    setup.validate().context("optimize")?;
    Ok(setup)
}

fn ocd_stack(f: &FitSection) -> Result<OcdStack> {
    let (start, stop, count) = f.wavelengths;
    finite_positive(start, "fit.wavelengths start")?;
    if !(stop > start) || count < 2 {
        bail!("fit.wavelengths must be [start, stop, count] with stop > start and count ≥ 2");
    }
    Ok(OcdStack {
        fto: Truncation::new(f.fto[0], f.fto[1]),
        mode: parse_mode(&f.mode, "fit.mode")?,
        wavelengths: (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
        ..OcdStack::default()
    })
}

fn fit_optimizers(f: &FitSection) -> Result<Vec<(Algorithm, f64)>> {
    let algs = f
        .optimizers
        .iter()
        .map(|s| s.parse::<Algorithm>().with_context(|| "fit.optimizers"))
        .collect::<Result<Vec<_>>>()?;
    match &f.lr {
        None => Ok(algs.iter().map(|&a| (a, a.fit_learning_rate())).collect()),
        Some(lr) if lr.len() == algs.len() => {
            for &v in lr {
                finite_positive(v, "fit.lr")?;
            }
            Ok(algs.into_iter().zip(lr.iter().copied()).collect())
        }
        Some(lr) => bail!("fit.lr has {} entries for {} optimizers", lr.len(), algs.len()),
    }
}

fn read_csv_grid(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {}", path.display(), r + 1))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().with_context(|| format!("{} row {}: '{v}' is not a number", path.display(), r + 1)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn grid_from_rows(rows: &[Vec<f64>], key: &str) -> Result<Grid> {
    let ny = rows.len();
    let nx = rows.first().map_or(0, Vec::len);
    if ny == 0 || nx == 0 || rows.iter().any(|r| r.len() != nx) {
        bail!("{key}: layer must be a non-empty rectangular grid");
    }
    for &v in rows.iter().flatten() {
        finite_positive(v, key)?;
    }
    Ok(Grid::new(ny, nx, rows.iter().flatten().map(|&n| eps(n)).collect())?)
}

fn raster_geometry(r: &RasterSection, base: &Path) -> Result<Geometry> {
    let layers: Vec<Vec<Vec<f64>>> = match (&r.indices, &r.csv) {
        (Some(_), Some(_)) => bail!("geometry.raster: give either 'indices' or 'csv', not both"),
        (None, None) => bail!("geometry.raster: one of 'indices' or 'csv' is required"),
        (Some(v), None) => v.clone(),
        (None, Some(paths)) => paths
            .iter()
            .map(|p| read_csv_grid(&base.join(p)))
            .collect::<Result<_>>()?,
    };
    let grids = layers
        .iter()
        .enumerate()
        .map(|(i, l)| grid_from_rows(l, &format!("geometry.raster layer {i}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Geometry::Raster(UCell::from_layers(grids)?))
}

fn vector_geometry(v: &VectorSection, period: [f64; 2]) -> Result<Geometry> {
    let mut layers = Vec::with_capacity(v.layers.len());
    for (i, l) in v.layers.iter().enumerate() {
        finite_positive(l.index, &format!("geometry.vector.layers[{i}].index"))?;
        let mut rects = Vec::new();
        for (k, r) in l.rects.iter().enumerate() {
            let key = format!("geometry.vector.layers[{i}].rects[{k}]");
            finite_positive(r.index, &format!("{key}.index"))?;
            let [cx, cy] = r.center;
            let [lx, ly] = r.lengths;
            if r.angle == 0.0 {
                rects.push(Rectangle::new(cx, cy, lx, ly, eps(r.index)).with_context(|| key.clone())?);
            } else {
                let pieces = rectangle_rotate(cx, cy, lx, ly, r.n_split[0], r.n_split[1], eps(r.index), r.angle.to_radians())
                    .with_context(|| key.clone())?;
                rects.extend(pieces);
            }
        }
        layers.push((eps(l.index), rects));
    }
    let layout: VectorLayout = draw(period, layers);
    Ok(Geometry::Vector(layout))
}

/// Parses and validates a config file. Relative paths resolve against the
/// file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text, &base).with_context(|| format!("in {}", path.display()))
}

pub fn parse_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text)?;
    from_file(file, base_dir)
}

/// Validates an already-deserialized schema.
pub fn from_file(file: ConfigFile, base_dir: &Path) -> Result<RunConfig> {
    let geometry = match &file.geometry {
        None => None,
        Some(g) => {
            let period = file
                .simulation
                .as_ref()
                .map(|s| s.period)
                .ok_or_else(|| anyhow!("[geometry] needs a [simulation] section"))?;
            Some(match (&g.raster, &g.vector) {
                (Some(_), Some(_)) => bail!("geometry: 'raster' and 'vector' are mutually exclusive"),
                (None, None) => bail!("geometry: one of 'raster' or 'vector' is required"),
                (Some(r), None) => raster_geometry(r, base_dir)?,
                (None, Some(v)) => vector_geometry(v, period)?,
            })
        }
    };
    if let Some(s) = &file.simulation {
        let cfg = sim_config(s)?;
        let mode = parse_mode(&s.mode, "simulation.mode")?;
        if let Some(g) = &geometry {
            if g.layer_count() != cfg.thickness.len() {
                bail!(
                    "simulation.thickness has {} entries but the geometry has {} layers",
                    cfg.thickness.len(),
                    g.layer_count()
                );
            }
            if matches!(g, Geometry::Vector(_)) && mode != FourierMode::Cfs {
                bail!("simulation.mode: vector geometry requires 'cfs'");
            }
        }
    }
    if let Some(sw) = &file.sweep {
        if sw.fto.is_empty() || sw.fto.windows(2).any(|w| w[1] <= w[0]) {
            bail!("sweep.fto must be a non-empty strictly ascending list");
        }
        if sw.modes.is_empty() {
            bail!("sweep.modes must not be empty");
        }
        for m in &sw.modes {
            parse_mode(m, "sweep.modes")?;
        }
    }
    if let Some(o) = &file.optimize {
        deflector_setup(o)?;
        o.optimizer.parse::<Algorithm>().context("optimize.optimizer")?;
        finite_positive(o.lr, "optimize.lr")?;
        if o.seeds.is_empty() {
            bail!("optimize.seeds must not be empty");
        }
    }
    if let Some(f) = &file.fit {
        ocd_stack(f)?;
        fit_optimizers(f)?;
        if f.seeds.is_empty() {
            bail!("fit.seeds must not be empty");
        }
        if f.priors.len() != 8 || f.truth.len() != 8 {
            bail!("fit.priors and fit.truth need 8 entries (P1–P8)");
        }
        for (i, p) in f.priors.iter().enumerate() {
            if !(p[0].is_finite() && p[1] > 0.0 && p[1].is_finite()) {
                bail!("fit.priors[{i}] must be [mean, std] with std > 0");
            }
        }
        for &t in &f.truth {
            finite_positive(t, "fit.truth")?;
        }
    }
    Ok(RunConfig {
        file,
        base_dir: base_dir.to_path_buf(),
        geometry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[simulation]
wavelength = 500.0
n_i = 1.0
n_ii = 1.5
period = [1.0, 1.0]
fto = [0, 0]
thickness = [100.0]

[geometry.raster]
indices = [[[2.0]]]
"#;

    #[test]
    fn minimal_config_parses() {
        let c = parse_str(MINIMAL, Path::new(".")).unwrap();
        let s = c.simulation().unwrap();
        assert_eq!(s.thickness, vec![100.0]);
        assert_eq!(c.geometry().unwrap().layer_count(), 1);
        assert_eq!(c.mode().unwrap(), FourierMode::Cfs);
    }

    #[test]
    fn degrees_become_radians() {
        let text = MINIMAL.replace("fto = [0, 0]", "fto = [0, 0]\ntheta = 30.0\nphi = 90.0\npsi = 45.0");
        let s = parse_str(&text, Path::new(".")).unwrap().simulation().unwrap();
        assert!((s.theta - std::f64::consts::FRAC_PI_6).abs() < 1e-15);
        assert!((s.phi - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((s.psi - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn both_geometries_conflict() {
        let text = format!("{MINIMAL}\n[[geometry.vector.layers]]\nindex = 1.0\n");
        let err = parse_str(&text, Path::new(".")).unwrap_err();
        assert!(format!("{err:#}").contains("mutually exclusive"), "{err:#}");
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("wavelength = 500.0\n", "");
        let err = parse_str(&text, Path::new(".")).unwrap_err();
        assert!(format!("{err:#}").contains("wavelength"), "{err:#}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replace("n_i = 1.0", "n_i = 1.0\nn_iii = 2.0");
        assert!(parse_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn pol_and_psi_conflict() {
        let text = MINIMAL.replace("fto = [0, 0]", "fto = [0, 0]\npsi = 10.0\npol = 1.0");
        assert!(parse_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn thickness_must_match_layers() {
        let text = MINIMAL.replace("thickness = [100.0]", "thickness = [100.0, 50.0]");
        assert!(parse_str(&text, Path::new(".")).is_err());
    }

    #[test]
    fn vector_geometry_rejects_dfs() {
        let text = r#"
[simulation]
wavelength = 500.0
period = [300.0, 200.0]
fto = [2, 2]
thickness = [50.0]
mode = "dfs"

[[geometry.vector.layers]]
index = 1.0
rects = [{ center = [150.0, 100.0], lengths = [80.0, 60.0], index = 2.0 }]
"#;
        let err = parse_str(text, Path::new(".")).unwrap_err();
        assert!(format!("{err:#}").contains("cfs"));
        let ok = text.replace("mode = \"dfs\"", "mode = \"cfs\"");
        assert!(parse_str(&ok, Path::new(".")).is_ok());
    }

    #[test]
    fn round_trip_is_exact() {
        let text = r#"
output = "run"

[simulation]
wavelength = 612.3456789012345
theta = 12.5
phi = 0.1
pol = 0.25
n_i = 1.0
n_ii = 1.4500000000000002
period = [300.0, 200.0]
fto = [3, 2]
thickness = [55.5, 0.1]
precision = "single"

[[geometry.vector.layers]]
index = 1.45
rects = [{ center = [75.0, 100.0], lengths = [101.5, 81.5], index = 2.0, angle = 12.0, n_split = [2, 3] }]

[[geometry.vector.layers]]
index = 1.0

[sweep]
fto = [1, 2, 3]

[fit]
iterations = 5
seeds = [1, 2]
lr = [1e2, 1.0, 0.1, 0.1, 1.0]
"#;
        let a = parse_str(text, Path::new(".")).unwrap();
        let b = parse_str(&a.to_toml().unwrap(), Path::new(".")).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.file.simulation.unwrap().wavelength, 612.3456789012345);
    }
}
