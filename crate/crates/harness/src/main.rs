use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tetd_harness::aggregate::SuccessRule;
use tetd_harness::analyze::{load_features, load_interest, load_mdp, load_policy, AnalysisInput};
use tetd_harness::config::{ExperimentConfig, Preset};
use tetd_harness::error::{HarnessError, Result};
use tetd_harness::report::build_table;
use tetd_harness::smooth::smooth;
use tetd_harness::sweep::{run_sweep, MANIFEST_FILE};
use tetd_core::mdp::InterestFunction;

#[derive(Parser)]
#[command(name = "tetd", version, about = "Truncated emphatic TD experiments and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    BairdPrediction,
    BairdControl,
    Cartpole,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::BairdPrediction => Preset::BairdPrediction,
            PresetArg::BairdControl => Preset::BairdControl,
            PresetArg::Cartpole => Preset::Cartpole,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON or TOML config.
    Run {
        #[arg(required_unless_present = "print_defaults")]
        config: Option<PathBuf>,
        /// Print a complete default config and exit.
        #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "baird-prediction")]
        print_defaults: Option<PresetArg>,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the closed-form emphasis report as JSON.
    Analyze {
        /// `baird` or a path to an MDP JSON document.
        mdp: String,
        /// For Baird, π(dashed|s); otherwise `uniform` or a JSON file of
        /// policy rows.
        #[arg(long)]
        target: String,
        /// Truncation length.
        #[arg(long)]
        n: usize,
        /// `uniform` or a JSON file of policy rows. Ignored for Baird.
        #[arg(long, default_value = "uniform")]
        behavior: String,
        /// JSON file of feature rows. Defaults to tabular features.
        #[arg(long)]
        features: Option<PathBuf>,
        /// JSON array of interest values. Defaults to all ones.
        #[arg(long)]
        interest: Option<PathBuf>,
        /// Index by state-action pairs instead of states.
        #[arg(long)]
        control: bool,
    },
    /// Select step sizes, write aggregate curves and print the variance table.
    Table {
        /// A manifest file or the directory holding it.
        manifest: PathBuf,
        /// Success threshold on the mean final metric. Below it for
        /// minimized metrics, at or above it for maximized ones.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Smooth the value column of a CSV with a trailing window.
    Smooth {
        csv: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Column to smooth. Defaults to the second column.
        #[arg(long)]
        column: Option<String>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, print_defaults, output_dir } => {
            if let Some(preset) = print_defaults {
                println!("{}", ExperimentConfig::preset(preset.into()).to_json_pretty());
                return Ok(());
            }
            let path = config.expect("clap requires a config without --print-defaults");
            let mut config = ExperimentConfig::load(&path)?;
            if let Some(dir) = output_dir {
                config.output_dir = dir;
            }
            let summary = run_sweep(&config)?;
            println!(
                "{} runs ({} executed, {} reused) in {}",
                summary.manifest.entries.len(),
                summary.executed,
                summary.reused,
                config.output_dir.display()
            );
            println!("manifest sha256 {}", summary.manifest_hash);
        }
        Command::Analyze { mdp, target, n, behavior, features, interest, control } => {
            let mut input = if mdp == "baird" {
                let p: f64 = target
                    .parse()
                    .map_err(|_| HarnessError::Invalid(format!("Baird target must be π(dashed|s), got `{target}`")))?;
                AnalysisInput::baird(p, control)?
            } else {
                let mdp = load_mdp(Path::new(&mdp))?;
                let len = if control { mdp.n_pairs() } else { mdp.n_states() };
                AnalysisInput {
                    behavior: load_policy(&behavior, &mdp)?,
                    target: load_policy(&target, &mdp)?,
                    interest: InterestFunction::ones(len),
                    features: tetd_core::features::FeatureMap::tabular(len),
                    control,
                    mdp,
                }
            };
            if let Some(path) = features {
                input.features = load_features(&path)?;
            }
            if let Some(path) = interest {
                input.interest = load_interest(&path)?;
            }
            let report = input.report(n)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Table { manifest, threshold } => {
            let dir = if manifest.is_dir() {
                manifest
            } else if manifest.file_name().is_some_and(|f| f == MANIFEST_FILE) {
                manifest.parent().map(Path::to_path_buf).unwrap_or_default()
            } else {
                return Err(HarnessError::Invalid(format!("{} is not a sweep directory or manifest", manifest.display())));
            };
            let rule = match threshold {
                None => None,
                Some(t) => {
                    let m = tetd_harness::sweep::Manifest::load(&dir)?;
                    Some(if m.maximize {
                        SuccessRule::FinalAbove { threshold: t }
                    } else {
                        SuccessRule::FinalBelow { threshold: t }
                    })
                }
            };
            let report = build_table(&dir, rule)?;
            print!("{}", report.table.render());
        }
        Command::Smooth { csv, window, column } => smooth_csv(&csv, window, column.as_deref())?,
    }
    Ok(())
}

fn smooth_csv(path: &Path, window: usize, column: Option<&str>) -> Result<()> {
    let bad = |line: usize, reason: String| HarnessError::Csv { path: path.to_path_buf(), line, reason };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let idx = match column {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| bad(1, format!("no column `{name}`")))?,
        None if headers.len() >= 2 => 1,
        None => return Err(bad(1, "need at least two columns".into())),
    };
    let rows: Vec<csv::StringRecord> =
        reader.records().enumerate().map(|(k, r)| r.map_err(|e| bad(k + 2, e.to_string()))).collect::<Result<_>>()?;
    let values: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| r[idx].parse().map_err(|e| bad(k + 2, format!("{}: {e}", &headers[idx]))))
        .collect::<Result<_>>()?;
    let smoothed = smooth(&values, window)?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    let write_err = |e: csv::Error| HarnessError::Invalid(format!("writing csv: {e}"));
    out.write_record(&headers).map_err(write_err)?;
    for (row, v) in rows.iter().zip(smoothed) {
        let fields: Vec<String> =
            row.iter().enumerate().map(|(j, f)| if j == idx { v.to_string() } else { f.to_string() }).collect();
        out.write_record(&fields).map_err(write_err)?;
    }
    out.flush().map_err(|e| HarnessError::io("<stdout>", e))
}
