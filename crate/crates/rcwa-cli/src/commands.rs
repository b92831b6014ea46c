//! Subcommand implementations. Each writes its artifacts under the output
//! directory and returns the list of files it produced.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use rcwa::derivatives::{draw_from_priors, optimize_deflector, random_binary_baseline, spectrum_fit, FitRun, OCD_PRIORS};
use rcwa::field::{calculate_field, COMPONENTS};
use rcwa::fourier::{cfs_coefficients, dfs_coefficients, enhance_sampling, CoeffGrid, FourierMode};
use rcwa::geometry::Geometry;
use rcwa::kspace::{SimConfig, Truncation};
use rcwa::scattering::{ScatterResult, Solver};

use crate::config::{parse_mode, RunConfig};

/// Run-time overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub field: Option<[usize; 3]>,
    pub dump_fourier: bool,
}

/// Failure of a solver call, reported with a distinct exit status.
#[derive(Debug)]
pub struct Numerical(pub rcwa::Error);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Numerical {}

fn num<T>(r: rcwa::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(Numerical(e)))
}

struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Out {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn csv<R: AsRef<[u8]>>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn f(v: f64) -> String {
    format!("{v:e}")
}

/// Physical order (px, py) carried by harmonic (n, m).
fn physical(n: i64, m: i64) -> (i64, i64) {
    (-m, -n)
}

fn de_rows(r: &ScatterResult) -> Vec<Vec<String>> {
    let fto = r.fto();
    let mut rows = Vec::new();
    for (side, grid) in [("r", &r.de_r), ("t", &r.de_t)] {
        for (n, m) in fto.orders() {
            let (px, py) = physical(n, m);
            let v = grid[(n + fto.n as i64) as usize][(m + fto.m as i64) as usize];
            rows.push(vec![side.to_string(), px.to_string(), py.to_string(), f(v)]);
        }
    }
    rows
}

fn coefficients(geometry: &Geometry, layer: usize, cfg: &SimConfig, mode: FourierMode) -> CoeffGrid {
    match (geometry, mode) {
        (Geometry::Vector(v), _) => cfs_coefficients(&v.layers[layer].piecewise(cfg.period), cfg.fto),
        (Geometry::Raster(u), FourierMode::Cfs) => cfs_coefficients(&u.layers()[layer].piecewise(cfg.period), cfg.fto),
        (Geometry::Raster(u), FourierMode::EnhancedDfs) => dfs_coefficients(&enhance_sampling(&u.layers()[layer], cfg.fto), cfg.fto),
        (Geometry::Raster(u), FourierMode::Dfs) => dfs_coefficients(&u.layers()[layer], cfg.fto),
    }
}

/// Forward solve: DE table, summary and optional field samples.
pub fn solve(run: &RunConfig, opts: &Options) -> Result<Vec<String>> {
    let cfg = run.simulation()?;
    let mode = run.mode()?;
    let geometry = run.geometry()?;
    let mut out = Out::new(&run.output_dir())?;
    let start = Instant::now();
    let res = num(Solver::new(mode).solve(geometry, &cfg))?;
    let seconds = start.elapsed().as_secs_f64();

    out.csv("de.csv", &["side", "px", "py", "de"], de_rows(&res))?;
    out.json(
        "summary.json",
        &json!({
            "mode": mode.name(),
            "fto": [cfg.fto.m, cfg.fto.n],
            "total_r": res.total_r(),
            "total_t": res.total_t(),
            "energy": res.total_r() + res.total_t(),
            "max_residual": res.max_residual,
            "warnings": {
                "wood_anomaly": res.warnings.wood_anomaly,
                "regularized_mode": res.warnings.regularized_mode,
                "eigen_residual": res.warnings.eigen_residual,
            },
            "wall_time_s": seconds,
        }),
    )?;

    if let Some([rx, ry, rz]) = opts.field {
        let cell = num(calculate_field(&res, rx, ry, rz))?;
        let mut header = vec!["x", "y", "z"];
        let names: Vec<String> = COMPONENTS.iter().flat_map(|c| [format!("{c}_re"), format!("{c}_im")]).collect();
        header.extend(names.iter().map(String::as_str));
        let mut rows = Vec::with_capacity(cell.nz() * ry * rx);
        for z in 0..cell.nz() {
            for y in 0..ry {
                for x in 0..rx {
                    let mut row: Vec<String> = cell.coords(z, y, x).iter().map(|&v| f(v)).collect();
                    for c in 0..6 {
                        let v = cell.get(z, y, x, c);
                        row.push(f(v.re));
                        row.push(f(v.im));
                    }
                    rows.push(row);
                }
            }
        }
        out.csv("field.csv", &header, rows)?;
    }

    if opts.dump_fourier {
        for layer in 0..geometry.layer_count() {
            let c = coefficients(geometry, layer, &cfg, mode);
            let rows = c
                .entries()
                .map(|(n, m, v)| vec![n.to_string(), m.to_string(), f(v.re), f(v.im)]);
            out.csv(&format!("fourier_layer{layer}.csv"), &["n", "m", "re", "im"], rows)?;
        }
    }
    Ok(out.written)
}

/// Truncation-order sweep, one forward solve per (mode, FTO).
pub fn sweep(run: &RunConfig) -> Result<Vec<String>> {
    let base = run.simulation()?;
    let geometry = run.geometry()?;
    let sw = run.file.sweep.as_ref().ok_or_else(|| anyhow!("missing [sweep] section"))?;
    let modes = sw
        .modes
        .iter()
        .map(|m| parse_mode(m, "sweep.modes"))
        .collect::<Result<Vec<_>>>()?;
    let two_d = base.fto.n > 0;
    let jobs: Vec<(FourierMode, usize)> = modes.iter().flat_map(|&m| sw.fto.iter().map(move |&k| (m, k))).collect();
    let [px, py] = sw.order;
    let rows = jobs
        .par_iter()
        .map(|&(mode, k)| {
            let mut cfg = base.clone();
            cfg.fto = Truncation::new(k, if two_d { k } else { 0 });
            let start = Instant::now();
            let res = num(Solver::new(mode).solve_efficiencies(geometry, &cfg))?;
            let t = start.elapsed().as_secs_f64();
            Ok(vec![
                mode.name().to_string(),
                k.to_string(),
                f(res.de_t_order(px, py)),
                f(res.total_r() + res.total_t()),
                format!("{t:.6}"),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Out::new(&run.output_dir())?;
    out.csv("sweep.csv", &["mode", "fto", "de_t", "total_energy", "wall_time_s"], rows)?;
    Ok(out.written)
}

/// Deflector optimization over every configured seed.
pub fn optimize(run: &RunConfig) -> Result<Vec<String>> {
    let setup = run.deflector()?;
    let algorithm = run.optimizer()?;
    let o = run.file.optimize.as_ref().ok_or_else(|| anyhow!("missing [optimize] section"))?;
    let runs = o
        .seeds
        .par_iter()
        .map(|&seed| num(optimize_deflector(&setup, o.epochs, algorithm, o.lr, seed, None)))
        .collect::<Result<Vec<_>>>()?;
    let baseline = if o.baseline > 0 {
        Some(num(random_binary_baseline(&setup, o.baseline, o.baseline_seed))?)
    } else {
        None
    };

    let mut out = Out::new(&run.output_dir())?;
    for r in &runs {
        out.csv(
            &format!("trajectory_seed{}.csv", r.seed),
            &["epoch", "efficiency"],
            r.efficiency.iter().enumerate().map(|(i, &e)| vec![i.to_string(), f(e)]),
        )?;
        out.csv(
            &format!("pattern_seed{}.csv", r.seed),
            &["cell", "initial", "final", "binary"],
            (0..setup.cells).map(|i| vec![i.to_string(), f(r.initial[i]), f(r.final_pattern[i]), f(r.binary_pattern[i])]),
        )?;
    }
    let best = runs
        .iter()
        .max_by(|a, b| a.binary_efficiency.total_cmp(&b.binary_efficiency))
        .expect("at least one seed");
    let mean_random = baseline.as_ref().map(|b| b.iter().sum::<f64>() / b.len() as f64);
    out.json(
        "summary.json",
        &json!({
            "optimizer": algorithm.name(),
            "lr": o.lr,
            "period": setup.period(),
            "seeds": runs.iter().map(|r| json!({
                "seed": r.seed,
                "initial_efficiency": r.efficiency[0],
                "final_efficiency": r.efficiency.last(),
                "binary_efficiency": r.binary_efficiency,
            })).collect::<Vec<_>>(),
            "best_seed": best.seed,
            "best_binary_efficiency": best.binary_efficiency,
            "random_baseline_mean": mean_random,
        }),
    )?;
    Ok(out.written)
}

/// Spectrum fitting with every configured optimizer from a shared start per seed.
pub fn fit(run: &RunConfig) -> Result<Vec<String>> {
    let stack = run.ocd_stack()?;
    let f_sec = run.file.fit.as_ref().ok_or_else(|| anyhow!("missing [fit] section"))?;
    let optimizers = run.fit_optimizers()?;
    let target = num(stack.spectrum(&Solver::with_cache(stack.mode), &f_sec.truth))?;
    let priors: Vec<(f64, f64)> = f_sec.priors.iter().map(|p| (p[0], p[1])).collect();
    let starts = f_sec
        .seeds
        .iter()
        .map(|&s| num(draw_from_priors(&priors, s)).map(|p| (s, p)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<_> = starts
        .iter()
        .flat_map(|(s, p)| optimizers.iter().map(move |&(a, lr)| (*s, p.clone(), a, lr)))
        .collect();
    let runs: Vec<(u64, FitRun)> = jobs
        .into_par_iter()
        .map(|(seed, p0, a, lr)| {
            let solver = Solver::with_cache(stack.mode);
            num(spectrum_fit(&stack, &solver, &target, p0, a, lr, f_sec.iterations)).map(|r| (seed, r))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Out::new(&run.output_dir())?;
    let mut header = vec!["iteration", "loss"];
    header.extend(OCD_PRIORS.iter().map(|p| p.0));
    for (seed, r) in &runs {
        out.csv(
            &format!("fit_{}_seed{seed}.csv", r.algorithm.name()),
            &header,
            r.loss.iter().zip(&r.params).enumerate().map(|(i, (&l, p))| {
                let mut row = vec![i.to_string(), f(l)];
                row.extend(p.iter().map(|&v| f(v)));
                row
            }),
        )?;
    }
    out.csv(
        "target_spectrum.csv",
        &["wavelength", "reflectance"],
        stack.wavelengths.iter().zip(&target).map(|(&w, &r)| vec![f(w), f(r)]),
    )?;
    out.json(
        "summary.json",
        &json!({
            "truth": f_sec.truth,
            "runs": runs.iter().map(|(seed, r)| json!({
                "seed": seed,
                "optimizer": r.algorithm.name(),
                "lr": r.lr,
                "initial_loss": r.initial_loss(),
                "final_loss": r.final_loss(),
                "final_params": r.final_params(),
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(out.written)
}
