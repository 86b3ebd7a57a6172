use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use spinoptics::dynamics::HolonomyKind;
use spinoptics::scenario::{
    latitude_holonomy, load_scenario, loop_holonomy, parse_loop, run_check, run_scatter_sweep, run_trace, theta_grid,
};

/// Conservation-law tolerance applied to every sweep row.
const SWEEP_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "spinoptics", version, about = "Polarized ray tracing and interface scattering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Berry,
    Pancharatnam,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario ray; writes trajectory.csv and report.json.
    Trace {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Sweep the incidence angle at the scenario interface.
    Scatter {
        #[arg(long)]
        scenario: PathBuf,
        /// Degrees.
        #[arg(long, default_value_t = 0.0)]
        theta_min: f64,
        /// Degrees.
        #[arg(long, default_value_t = 89.0)]
        theta_max: f64,
        /// Number of grid points.
        #[arg(long, default_value_t = 90)]
        theta_steps: usize,
        /// Writes sweep.csv and sweep.json here instead of printing the CSV.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Geometric phase of a closed loop, read from a file or generated on a latitude circle.
    Holonomy {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long = "loop", conflicts_with = "latitude_deg")]
        loop_file: Option<PathBuf>,
        /// Colatitude of a generated Berry loop, in degrees.
        #[arg(long)]
        latitude_deg: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Run the invariant suite on a scenario.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// `Ok(true)` when every threshold was met.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Trace { scenario, out_dir } => {
            let s = load_scenario(&scenario)?;
            let out = run_trace(&s)?;
            let (csv, json) = out.write_to(&out_dir)?;
            let r = &out.report;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            for v in &r.violations {
                eprintln!("violation: {v}");
            }
            println!(
                "{} steps, spin drift {:.3e} hbar, max residual {:.3e}, wrote {} and {}",
                r.steps,
                r.max_spin_drift_hbar,
                r.max_residual_u.max(r.max_residual_e).max(r.max_residual_ue),
                csv.display(),
                json.display()
            );
            Ok(r.passed)
        }
        Command::Scatter { scenario, theta_min, theta_max, theta_steps, out_dir } => {
            if theta_steps == 0 {
                bail!("--theta-steps must be at least 1");
            }
            let s = load_scenario(&scenario)?;
            let sweep = run_scatter_sweep(&s, &theta_grid(theta_min, theta_max, theta_steps))?;
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    let mut buf = Vec::new();
                    sweep.write_csv(&mut buf)?;
                    std::fs::write(dir.join("sweep.csv"), buf)?;
                    std::fs::write(dir.join("sweep.json"), sweep.to_json())?;
                }
                None => sweep.write_csv(std::io::stdout().lock())?,
            }
            for r in sweep.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("theta {}: {}", r.theta1_deg, r.error.as_deref().unwrap_or_default());
            }
            let (ang, tan) = sweep.max_residuals();
            if ang > SWEEP_TOL || tan > SWEEP_TOL {
                eprintln!("violation: conservation residuals {ang:.3e}, {tan:.3e} exceed {SWEEP_TOL:.0e}");
            }
            Ok(sweep.errors() == 0 && ang <= SWEEP_TOL && tan <= SWEEP_TOL)
        }
        Command::Holonomy { kind, loop_file, latitude_deg, samples } => {
            let report = match (loop_file, latitude_deg, kind) {
                (Some(path), _, kind) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let kind = match kind {
                        Kind::Berry => HolonomyKind::Berry,
                        Kind::Pancharatnam => HolonomyKind::Pancharatnam,
                    };
                    loop_holonomy(&parse_loop(kind, &text)?)?
                }
                (None, Some(deg), Kind::Berry) => latitude_holonomy(deg, samples)?,
                (None, Some(_), Kind::Pancharatnam) => bail!("--latitude-deg generates Berry loops only"),
                (None, None, _) => bail!("pass --loop <path> or --latitude-deg <deg>"),
            };
            println!("{}", report.to_json());
            Ok(true)
        }
        Command::Check { scenario } => {
            let s = load_scenario(&scenario)?;
            let rep = run_check(&s);
            let mut err = std::io::stderr().lock();
            for c in &rep.checks {
                let value = c.value.map(|v| format!(" {v:.3e}")).unwrap_or_default();
                writeln!(err, "{} {}{value} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            println!("{}", rep.to_json());
            Ok(rep.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
