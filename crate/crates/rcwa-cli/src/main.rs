use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use rcwa_cli::commands::{self, Numerical, Options};
use rcwa_cli::config::{from_file, parse_config, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "rcwa", version, about = "Rigorous coupled-wave analysis of multilayer gratings")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for independent solves (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory, overriding the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Truncation order override: M, or M N.
    #[arg(long, global = true, num_args = 1..=2, value_names = ["M", "N"])]
    fto: Option<Vec<usize>>,

    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward solve: diffraction efficiencies, summary, optional fields.
    Solve {
        config: PathBuf,
        /// Sample the fields on an rx × ry × rz-per-layer grid.
        #[arg(long, num_args = 3, value_names = ["RX", "RY", "RZ"])]
        field: Option<Vec<usize>>,
        /// Write each layer's permittivity Fourier coefficients.
        #[arg(long)]
        dump_fourier: bool,
    },
    /// Efficiency of one order across truncation orders and Fourier modes.
    Sweep { config: PathBuf },
    /// Gray-scale deflector optimization followed by binarization.
    Optimize { config: PathBuf },
    /// Fit stack parameters to a reflectance spectrum.
    Fit { config: PathBuf },
}

fn apply_overrides(mut run: RunConfig, cli: &Cli) -> Result<RunConfig> {
    let file = &mut run.file;
    if let Some(fto) = &cli.fto {
        let (m, n) = (fto[0], fto.get(1).copied());
        match &cli.command {
            Command::Solve { .. } => {
                let s = file.simulation.as_mut().context("--fto needs a [simulation] section")?;
                s.fto = [m, n.unwrap_or(s.fto[1])];
            }
            Command::Sweep { .. } => bail!("--fto does not apply to sweep; edit sweep.fto"),
            Command::Optimize { .. } => {
                let o = file.optimize.as_mut().context("--fto needs an [optimize] section")?;
                if n.is_some_and(|n| n != 0) {
                    bail!("the deflector is one-dimensional; --fto takes M only");
                }
                o.fto = m;
            }
            Command::Fit { .. } => {
                let f = file.fit.as_mut().context("--fto needs a [fit] section")?;
                f.fto = [m, n.unwrap_or(f.fto[1])];
            }
        }
    }
    if let Some(seed) = cli.seed {
        match &cli.command {
            Command::Optimize { .. } => file.optimize.as_mut().context("--seed needs an [optimize] section")?.seeds = vec![seed],
            Command::Fit { .. } => file.fit.as_mut().context("--seed needs a [fit] section")?.seeds = vec![seed],
            _ => bail!("--seed applies to optimize and fit only"),
        }
    }
    if let Some(out) = &cli.out {
        let out = if out.is_absolute() { out.clone() } else { std::env::current_dir()?.join(out) };
        file.output = Some(out.to_string_lossy().into_owned());
    }
    from_file(run.file, &run.base_dir)
}

/// Exit status and error for a failed run.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config_path = match &cli.command {
        Command::Solve { config, .. } | Command::Sweep { config } | Command::Optimize { config } | Command::Fit { config } => config,
    };
    let parsed = parse_config(config_path).map_err(usage)?;
    let run_cfg = apply_overrides(parsed, &cli).map_err(usage)?;
    let mut opts = Options::default();
    if let Command::Solve { field, dump_fourier, .. } = &cli.command {
        if let Some(f) = field {
            if f.iter().any(|&r| r == 0) {
                return Err(usage(anyhow::anyhow!("--field resolutions must be positive")));
            }
            opts.field = Some([f[0], f[1], f[2]]);
        }
        opts.dump_fourier = *dump_fourier;
    }

    let threads = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(e.into()))?;
    let (name, result) = pool.install(|| match &cli.command {
        Command::Solve { .. } => ("solve", commands::solve(&run_cfg, &opts)),
        Command::Sweep { .. } => ("sweep", commands::sweep(&run_cfg)),
        Command::Optimize { .. } => ("optimize", commands::optimize(&run_cfg)),
        Command::Fit { .. } => ("fit", commands::fit(&run_cfg)),
    });
    let written = result.map_err(|e| Failure {
        code: if e.downcast_ref::<Numerical>().is_some() { 2 } else { 1 },
        error: e,
    })?;

    let canonical = run_cfg.to_toml().map_err(usage)?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let manifest = json!({
        "command": name,
        "rcwa_version": env!("CARGO_PKG_VERSION"),
        "config_path": config_path.to_string_lossy(),
        "config_sha256": hash,
        "config": canonical,
        "jobs": pool.current_num_threads(),
        "files": written,
    });
    let path = run_cfg.output_dir().join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| usage(e.into()))? + "\n";
    std::fs::write(&path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
