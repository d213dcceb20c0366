use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{Map, Value};

use compnet::bench::{run_bench, write_analysis, write_bench_outputs, BenchConfig};
use compnet::manifold::ideal_function;
use compnet::nn::{exact_output_pwl, synthesize_compositional, ModelFile};
use compnet::trainer::{run_pipeline, Regime, TargetFunction, TrainConfig};
use compnet::verify::Suite;
use compnet::ManifoldParams;

#[derive(Parser)]
#[command(
    name = "compnet",
    version,
    about = "Compositional ReLU network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (regime, target, seed) combination of a config and write the reports.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train a single model.
    Train {
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        target: TargetFunction,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Training settings as JSON; regime and seed come from the flags.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build the network for a parameter file.
    Synth {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump layer pre-activations, segment count, dead layers and bend budget of a model.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an invariant suite, or `all`.
    Verify {
        #[arg(long)]
        suite: String,
    },
    /// Write the exact breakpoints of the ideal function of a parameter file.
    Oracle {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure of a command; the code is the process exit status.
struct Failure(u8, String);

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure(2, e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_params(path: &Path) -> Result<ManifoldParams, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Bench { config, out, jobs } => {
            let cfg = BenchConfig::load(&config).map_err(usage)?;
            let jobs = jobs.unwrap_or_else(rayon::current_num_threads);
            let (report, runs) = run_bench(&cfg, jobs).map_err(usage)?;
            write_bench_outputs(&out, &report, &runs).map_err(usage)?;
            print!("{}", compnet::bench::table_csv(&report.cells));
        }
        Command::Train {
            regime,
            target,
            seed,
            out,
            config,
        } => {
            let base = match config {
                Some(path) => serde_json::from_str(&read(&path)?)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?,
                None => TrainConfig::default(),
            };
            let cfg = TrainConfig {
                regime,
                seed,
                ..base
            };
            let output = run_pipeline(&target, &cfg).map_err(|e| Failure(1, e.to_string()))?;
            let json = serde_json::to_string_pretty(&output.result).map_err(usage)?;
            write(&out.join("run.json"), &json)?;
            if let Some(p) = &output.start_params {
                let json = serde_json::to_string_pretty(p).map_err(usage)?;
                write(&out.join("params.json"), &json)?;
            }
            let mut meta = Map::new();
            meta.insert("regime".into(), Value::from(regime.name()));
            meta.insert("target".into(), Value::from(target.name()));
            meta.insert("seed".into(), Value::from(seed));
            write(
                &out.join("model.json"),
                &ModelFile::from_net(&output.model, meta).to_json(),
            )?;
            println!(
                "final_mse={:.6e} segments={}",
                output.result.final_mse, output.result.final_segments
            );
        }
        Command::Synth { params, out } => {
            let p = load_params(&params)?;
            let net = synthesize_compositional(&p).map_err(|e| Failure(1, e.to_string()))?;
            let meta = Map::from_iter([(
                "params".to_string(),
                serde_json::to_value(&p).map_err(usage)?,
            )]);
            write(
                &out.join("model.json"),
                &ModelFile::from_net(&net, meta).to_json(),
            )?;
            write(
                &out.join("breakpoints.csv"),
                &exact_output_pwl(&net).to_csv_string(),
            )?;
        }
        Command::Analyze { model, out } => {
            let file = ModelFile::from_json(&read(&model)?).map_err(usage)?;
            let net = file.to_net().map_err(usage)?;
            let summary = write_analysis(&net, &out).map_err(usage)?;
            println!(
                "segments={} dead_layers={:?}",
                summary.segments, summary.dead_layers
            );
        }
        Command::Verify { suite } => {
            let suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse::<Suite>().map_err(usage)?]
            };
            let mut ok = true;
            for s in suites {
                let report = s.run();
                print!("{report}");
                ok &= report.passed();
            }
            if !ok {
                return Err(Failure(1, "suite failed".into()));
            }
        }
        Command::Oracle { params, out } => {
            let p = load_params(&params)?;
            let f = ideal_function(&p).map_err(usage)?;
            write(&out, &f.to_csv_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
