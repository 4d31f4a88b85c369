use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use polarsim_core::config::ExperimentConfig;
use polarsim_core::experiments;

/// Polarization-encoded quantum network simulator.
#[derive(Parser, Debug)]
#[command(name = "polarsim", version, about)]
struct Args {
    /// Experiment configuration (TOML).
    config: PathBuf,

    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Directory for CSV outputs and run metadata.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    /// Suppress the run summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::from_path(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let output = experiments::run(&config)?;
    experiments::write_outputs(&config, &output, &args.out_dir)?;
    if !args.quiet {
        print_summary(&output);
        println!("outputs written to {}", args.out_dir.display());
    }
    Ok(())
}

fn print_summary(output: &experiments::RunOutput) {
    use experiments::RunOutput::*;
    match output {
        Fringe(o) => {
            for c in &o.curves {
                println!(
                    "fringe: fixed {:>7.2} deg  V = {:.4}  phase = {:+.4} rad",
                    c.fixed_deg, c.fit.visibility, c.fit.phase_rad
                );
            }
        }
        Tomography(o) => {
            println!(
                "tomography: fidelity = {:.6}  min eigenvalue = {:+.4}{}",
                o.fidelity,
                o.min_eigenvalue,
                if o.nonphysical { "  (non-physical)" } else { "" }
            );
        }
        CdTiming(o) => {
            for r in &o.rows {
                println!(
                    "cd: {:>6.1} km  std = {:.1} ps (predicted {:.1})  fwhm = {}",
                    r.length_km,
                    r.std_dt_ps,
                    r.predicted_std_ps,
                    r.fwhm_ps.map(|f| format!("{f:.1} ps")).unwrap_or_else(|| "n/a".into())
                );
            }
        }
        DgdReport(o) => {
            for r in &o.rows {
                println!(
                    "dgd: {:.1} nm  {:.6} ps (half-step {:.6} ps)",
                    r.wavelength_nm, r.dgd_ps, r.dgd_half_step_ps
                );
            }
        }
        RamanSweep(o) => {
            for r in &o.rows {
                println!(
                    "raman: {:.0} nm  {:>6.1} km  P = {:.3e}  model {:.4e} /s  sim {:.4e} /s",
                    r.classical_wavelength_nm,
                    r.length_km,
                    r.launch_power,
                    r.model_rate,
                    r.simulated_rate
                );
            }
        }
        Jsi(o) => {
            println!("jsi: {} pairs, spectral correlation = {:.4}", o.pairs, o.correlation);
        }
        TwistScan(o) => {
            for r in &o.rows {
                println!(
                    "twist: {:.3} rad/m  phase = {:+.4} rad  V = {:.4}",
                    r.twist_rate_rad_per_m, r.fitted_phase_rad, r.visibility
                );
            }
        }
    }
}
