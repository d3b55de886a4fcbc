use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlsfg::check::run_all;
use nlsfg::config::{ExperimentConfig, Mode, Overrides};
use nlsfg::predict::predict;
use nlsfg::run::{run, write_artifacts};
use nlsfg::{HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "nlsfg",
    version,
    about = "Finite-gap vs split-step experiments for periodic focusing NLS"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the requested methods on the output grid and write artifacts.
    Run(Common),
    /// Closed-form appearance schedule and partition, without integrating.
    Predict(Common),
    /// Run the acceptance suite.
    Check {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `outputs.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Accuracy exponent in (0, 1].
    #[arg(long)]
    p: Option<f64>,
    /// Output grid size.
    #[arg(long, num_args = 2, value_names = ["NX", "NT"])]
    grid: Option<Vec<usize>>,
    /// Also write gnuplot matrices of |u|.
    #[arg(long)]
    gnuplot: bool,
}

impl Common {
    fn origin(&self) -> String {
        self.config.display().to_string()
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        cfg.apply(&Overrides {
            mode: self.mode,
            p: self.p,
            grid: self.grid.as_ref().map(|g| (g[0], g[1])),
            out: self.out.clone(),
            gnuplot: self.gnuplot,
        });
        cfg.validate(&self.origin())?;
        Ok(cfg)
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let out = run(&cfg).map_err(|e| e.within(&args.origin()))?;
            for m in &out.report.metrics {
                println!(
                    "{} vs {}: sup {:.6e} l2 {:.6e}",
                    m.a, m.b, m.sup_norm_diff, m.l2_diff
                );
            }
            println!(
                "{} peaks above {}",
                out.report.peak_table.len(),
                cfg.grid.peak_threshold
            );
            for path in &out.artifacts {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Predict(args) => {
            let cfg = args.load()?;
            let report = predict(&cfg).map_err(|e| e.within(&args.origin()))?;
            let body = json(&report);
            if args.out.is_some() {
                for path in write_artifacts(&cfg.outputs.dir, &[("prediction.json".into(), body)])?
                {
                    println!("wrote {}", path.display());
                }
            } else {
                print!("{body}");
            }
            Ok(())
        }
        Command::Check { out } => {
            let results = run_all();
            for r in &results {
                println!("{}", r.line());
            }
            if let Some(dir) = out {
                write_artifacts(&dir, &[("check.json".into(), json(&results))])?;
            }
            let failed: Vec<String> = results
                .iter()
                .filter(|r| !r.passed)
                .map(|r| r.id.to_string())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Acceptance(format!(
                    "criteria {} failed",
                    failed.join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
