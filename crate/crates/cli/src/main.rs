use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as c64;
use qdbh::analyze::{analyze_csv, AnalyzeOptions};
use qdbh::config::{RunConfig, SizeSpec};
use qdbh::presets::{preset, preset_names};
use qdbh::store::SweepStore;
use qdbh::sweep::{run_sweep, solve_point};
use qdbh::validate::{validate_suite, Mutations};
use qdbh::OUTPUT_DIR_ENV;
use qdbh_core::fock::FockSpace;
use qdbh_core::lattice::{LatticeGeometry, ModelParams};
use qdbh_core::scaling::Exponents;
use qdbh_core::spin::{extract_alpha, mapping_n_max, validate_mapping, SpinModelCoefficients};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "qdbh",
    version,
    about = "Steady states and finite-size scaling of driven-dissipative Bose-Hubbard lattices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Run configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: fig2, fig3 or fig4.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> anyhow::Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path),
            (None, Some(name)) => preset(name),
            (None, None) => bail!("pass --config FILE or --preset NAME ({})", preset_names().join(", ")),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one lattice at one drive strength and print the record as JSON.
    Solve {
        #[command(flatten)]
        source: ConfigSource,
        /// Lattice label, e.g. "4" or "2x2"; defaults to the first configured size.
        #[arg(long)]
        size: Option<String>,
        /// Drive strength G/γ.
        #[arg(long)]
        g: f64,
    },
    /// Run (or resume) every point of a configuration.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (overrides the configuration and the environment).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (overrides the configuration).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Finite-size scaling report of a finished sweep.
    Analyze {
        #[command(flatten)]
        source: ConfigSource,
        /// Sweep CSV; defaults to the one of the configuration.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Report directory; defaults to `<output>/<name>_analysis`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Exponent β (with --nu) instead of the preset for the dimensionality.
        #[arg(long, requires = "nu")]
        beta: Option<f64>,
        #[arg(long, requires = "beta")]
        nu: Option<f64>,
        /// Also use points flagged as unconverged.
        #[arg(long)]
        include_unconverged: bool,
    },
    /// Run the oracle checks and print a JSON report.
    Validate {
        /// Deliberately perturb B_x (the identity group must fail).
        #[arg(long)]
        perturb_bx: bool,
        /// Force corner calculations to M = 1 (the corner group must fail).
        #[arg(long)]
        force_corner_m1: bool,
    },
    /// Cat-basis spin description of a lattice and its validation.
    MapSpin {
        #[arg(long)]
        u: f64,
        #[arg(long)]
        j: f64,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        /// |α|²; extracted from the single-site steady state when absent.
        #[arg(long)]
        alpha2: Option<f64>,
        /// Fock cutoff for the extraction of α.
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        /// Chain length for the mapping check (0 skips it).
        #[arg(long, default_value_t = 2)]
        sites: usize,
        #[arg(long, default_value_t = 1)]
        dimensionality: usize,
    },
}

fn env_output() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Solve { source, size, g } => {
            let cfg = source.load()?;
            let spec = match size {
                Some(label) => {
                    let wanted = SizeSpec::new(&label).shape()?.label();
                    cfg.sizes
                        .iter()
                        .find(|s| s.shape().map(|sh| sh.label() == wanted).unwrap_or(false))
                        .cloned()
                        .unwrap_or_else(|| SizeSpec::new(&label))
                }
                None => cfg.sizes[0].clone(),
            };
            let resolved = cfg.resolve(&spec)?;
            let record = solve_point(&cfg, &cfg.hash(), &resolved, g);
            println!("{}", serde_json::to_string_pretty(&record)?);
            Ok(record.succeeded())
        }
        Command::Sweep {
            source,
            output,
            workers,
        } => {
            let mut cfg = source.load()?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let dir = output.unwrap_or_else(|| cfg.output_dir(env_output()));
            let store = SweepStore::open(&dir, &cfg.name)?;
            let summary = run_sweep(&cfg, &store)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "total": summary.total,
                    "computed": summary.computed,
                    "skipped": summary.skipped,
                    "failed": summary.failed,
                    "unconverged": summary.unconverged,
                    "records": store.jsonl_path(),
                    "csv": store.csv_path(),
                }))?
            );
            Ok(true)
        }
        Command::Analyze {
            source,
            input,
            output,
            beta,
            nu,
            include_unconverged,
        } => {
            let cfg = match (&source.config, &source.preset) {
                (None, None) => None,
                _ => Some(source.load()?),
            };
            let base = cfg.as_ref().map(|c| c.output_dir(env_output()));
            let csv = match (input, &cfg, &base) {
                (Some(p), _, _) => p,
                (None, Some(c), Some(b)) => b.join(format!("{}.csv", c.name)),
                _ => bail!("pass --input CSV, or --config/--preset to locate the sweep"),
            };
            let out = match (output, &cfg, &base) {
                (Some(o), _, _) => o,
                (None, Some(c), Some(b)) => b.join(format!("{}_analysis", c.name)),
                _ => csv.with_extension("analysis"),
            };
            let opts = AnalyzeOptions {
                exponents: beta.zip(nu).map(|(beta, nu)| Exponents { beta, nu }),
                include_unconverged,
            };
            let report = analyze_csv(&csv, &out, &opts)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "collapse": report.collapse,
                    "entropy_peak": report.peak,
                    "files": report.files,
                }))?
            );
            Ok(true)
        }
        Command::Validate {
            perturb_bx,
            force_corner_m1,
        } => {
            let report = validate_suite(Mutations {
                perturb_bx,
                force_corner_m1,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.passed)
        }
        Command::MapSpin {
            u,
            j,
            g,
            alpha2,
            n_max,
            sites,
            dimensionality,
        } => {
            let params = ModelParams::standard_convention(u, g, j, 1.0)?;
            let alpha = match alpha2 {
                Some(a2) if a2 > 0.0 => c64::new(a2.sqrt(), 0.0),
                Some(a2) => bail!("--alpha2 must be > 0, got {a2}"),
                None => extract_alpha(&params, &FockSpace::new(n_max)?).context("extracting α")?,
            };
            let coefficients = SpinModelCoefficients::new(alpha, &params, dimensionality)?;
            let mapping = if sites > 0 {
                let geom = LatticeGeometry::chain(sites)?;
                let fock = FockSpace::new(mapping_n_max(alpha))?;
                Some(validate_mapping(alpha, &params, &geom, &fock)?)
            } else {
                None
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "alpha": [alpha.re, alpha.im],
                    "alpha_sq": alpha.norm_sqr(),
                    "coefficients": coefficients,
                    "mapping": mapping,
                }))?
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
