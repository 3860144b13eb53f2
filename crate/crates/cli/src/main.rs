//! Command-line front end for the benchmark harness.
//!
//! Scenarios are referenced either by built-in name (`block_wall`,
//! `gripper_triangle`) or by the path of a TOML config. The default seed
//! comes from `--seed`, then the `CRBPF_SEED` environment variable, then
//! the scenario itself. Exit codes: 0 success, 2 configuration error,
//! 3 solver failure (the message names the failing step and particle),
//! 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use contact_rbpf::filter::FilterMode;
use contact_rbpf::harness::{self, RunOptions};
use contact_rbpf::report::{self, SweepPoint, SweepReport};
use contact_rbpf::scenario::Scenario;
use contact_rbpf::{Error, Result};

const SEED_ENV: &str = "CRBPF_SEED";

#[derive(Parser)]
#[command(
    name = "crbpf",
    version,
    about = "Contact-aware planar state-estimation benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; write ground truth and measurements as CSV.
    Simulate {
        /// Built-in scenario name or path of a TOML config.
        scenario: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Measurement-noise seed (default: CRBPF_SEED, then the scenario's).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one filter over a scenario; write its trajectory as CSV.
    Estimate {
        /// Built-in scenario name or path of a TOML config.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Particle count (default: the scenario's).
        #[arg(long)]
        particles: Option<usize>,
        /// Seed (default: CRBPF_SEED, then the scenario's).
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both filters over consecutive seeds; write a JSON metrics report.
    Compare {
        /// Built-in scenario name or path of a TOML config.
        #[arg(long)]
        scenario: String,
        /// Number of consecutive seeds, starting at the base seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Base seed (default: CRBPF_SEED, then the scenario's).
        #[arg(long)]
        seed: Option<u64>,
        /// Particle count (default: the scenario's).
        #[arg(long)]
        particles: Option<usize>,
        /// Output JSON report path.
        #[arg(long)]
        report: PathBuf,
        /// Directory for per-DOF SVG charts of the first seed.
        #[arg(long)]
        plots: Option<PathBuf>,
        /// Directory for per-seed trajectory CSVs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Repeat `compare` across a list of parameter values.
    Sweep {
        /// Built-in scenario name or path of a TOML config.
        #[arg(long)]
        scenario: String,
        /// Which parameter to sweep.
        #[arg(long, value_enum)]
        param: ParamArg,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Seeds per value.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Base seed (default: CRBPF_SEED, then the scenario's).
        #[arg(long)]
        seed: Option<u64>,
        /// Output JSON report path.
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Unconstrained,
    Constrained,
}

impl From<ModeArg> for FilterMode {
    fn from(m: ModeArg) -> FilterMode {
        match m {
            ModeArg::Unconstrained => FilterMode::Unconstrained,
            ModeArg::Constrained => FilterMode::Constrained,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ParamArg {
    /// Measurement noise: sets both sigma_pos and sigma_theta.
    Noise,
    /// Particle count.
    Particles,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::SolverFailure { .. } | Error::ParticleFailure { .. } => 3,
                _ => 1,
            })
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if let Some(s) = Scenario::builtin(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::Config(format!(
            "unknown scenario '{arg}': neither a built-in name nor a config file"
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_toml_str(&text)
}

fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an integer, got '{text}'"))),
        Err(_) => Ok(fallback),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { scenario, out, seed } => {
            let s = load_scenario(&scenario)?;
            let seed = resolve_seed(seed, s.seed)?;
            let rec = harness::generate_truth(&s, seed)?;
            report::write_run_csv(&rec, &out)?;
            println!(
                "wrote {} ({} steps, {} contact events)",
                out.display(),
                rec.n_steps,
                rec.events.len()
            );
            Ok(())
        }
        Command::Estimate {
            scenario,
            mode,
            particles,
            seed,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let mut opts = RunOptions::from_scenario(&s);
            opts.modes = vec![mode.into()];
            opts.seed = resolve_seed(seed, s.seed)?;
            if let Some(n) = particles {
                opts.n_particles = n;
            }
            let rec = harness::execute(&s, &opts)?;
            report::write_run_csv(&rec, &out)?;
            println!(
                "wrote {} ({} steps, {} particles, seed {})",
                out.display(),
                rec.n_steps,
                opts.n_particles,
                opts.seed
            );
            Ok(())
        }
        Command::Compare {
            scenario,
            seeds,
            seed,
            particles,
            report: report_path,
            plots,
            out_dir,
        } => {
            let s = load_scenario(&scenario)?;
            let mut opts = RunOptions::from_scenario(&s);
            opts.seed = resolve_seed(seed, s.seed)?;
            if let Some(n) = particles {
                opts.n_particles = n;
            }
            let (rep, records) = harness::compare(&s, &opts, seeds)?;
            report::write_report_json(&rep, &report_path)?;
            println!("wrote {}", report_path.display());
            if let Some(dir) = plots {
                let paths = report::write_svg_plots(&records[0], &dir)?;
                println!("wrote {} charts to {}", paths.len(), dir.display());
            }
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                for rec in &records {
                    let path = dir.join(format!("{}_seed{}.csv", rec.scenario, rec.seed));
                    report::write_run_csv(rec, &path)?;
                }
                println!("wrote {} trajectory CSVs to {}", records.len(), dir.display());
            }
            let agg = &rep.aggregate;
            println!(
                "post-contact pose wins: {}/{}; velocity beats induced: {:?}; penetration events: {:?}",
                agg.post_contact_pose_wins, agg.seeds, agg.velocity_beats_induced, agg.penetration_events
            );
            Ok(())
        }
        Command::Sweep {
            scenario,
            param,
            values,
            seeds,
            seed,
            report: report_path,
        } => {
            let base = load_scenario(&scenario)?;
            let base_seed = resolve_seed(seed, base.seed)?;
            let mut points = Vec::with_capacity(values.len());
            for &value in &values {
                let mut s = base.clone();
                let mut opts = RunOptions::from_scenario(&s);
                opts.seed = base_seed;
                match param {
                    ParamArg::Noise => {
                        if value < 0.0 {
                            return Err(Error::Config(format!(
                                "noise value must be nonnegative, got {value}"
                            )));
                        }
                        s.noise.sigma_pos = value;
                        s.noise.sigma_theta = value;
                    }
                    ParamArg::Particles => {
                        if value < 1.0 || value.fract() != 0.0 {
                            return Err(Error::Config(format!(
                                "particle count must be a positive integer, got {value}"
                            )));
                        }
                        opts.n_particles = value as usize;
                    }
                }
                let (rep, _) = harness::compare(&s, &opts, seeds)?;
                points.push(SweepPoint { value, report: rep });
            }
            let sweep = SweepReport {
                param: format!("{param:?}").to_lowercase(),
                points,
            };
            report::write_sweep_json(&sweep, &report_path)?;
            println!("wrote {}", report_path.display());
            Ok(())
        }
    }
}
