//! Experiment harness: grids of (regime, target, seed) runs, aggregated reports, and model
//! analysis dumps.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::{bend_budget, dying_relu_report, exact_output_pwl, unit_grid, DenseNet};
use crate::pwl::COLLINEAR_TOL;
use crate::trainer::{run_or_abort, Regime, RunResult, TargetFunction, TrainConfig, TrainError};

/// Sample count of the per-layer pre-activation dumps.
pub const ANALYSIS_POINTS: usize = 1001;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("run {regime}/{target}/seed {seed}: {source}")]
    Train {
        regime: Regime,
        target: String,
        seed: u64,
        source: TrainError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub regimes: Vec<Regime>,
    pub targets: Vec<String>,
    pub seeds: Vec<u64>,
    /// Shared training settings; `regime` and `seed` are overridden per run.
    pub train: TrainConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            regimes: Regime::ALL.to_vec(),
            targets: ["cube", "pow11", "quarter_sine", "tanh3x"]
                .map(String::from)
                .to_vec(),
            seeds: (0..30).collect(),
            train: TrainConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig =
            serde_json::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.resolve_targets()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn resolve_targets(&self) -> Result<Vec<TargetFunction>, BenchError> {
        if self.regimes.is_empty() || self.targets.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::Config(
                "regimes, targets and seeds must be non-empty".into(),
            ));
        }
        self.targets
            .iter()
            .map(|t| t.parse().map_err(BenchError::Config))
            .collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Aggregate over the seeds of one (regime, target) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub regime: Regime,
    pub target: String,
    pub min_mse: f64,
    pub mean_mse: f64,
    pub collapse_count: usize,
    pub diverged_count: usize,
    pub mean_segments: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub version: String,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub cells: Vec<CellSummary>,
}

impl ExperimentReport {
    pub fn cell(&self, regime: Regime, target: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.regime == regime && c.target == target)
    }
}

/// Orders runs by regime, target, seed.
pub fn sort_runs(runs: &mut [RunResult]) {
    runs.sort_by(|a, b| (a.regime, &a.target, a.seed).cmp(&(b.regime, &b.target, b.seed)));
}

/// Per-cell statistics over already sorted runs. Diverged runs count with their reported MSE.
pub fn summarize(runs: &[RunResult]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(Regime, String), Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        cells
            .entry((r.regime, r.target.clone()))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((regime, target), rs)| {
            let n = rs.len() as f64;
            let mses: Vec<f64> = rs.iter().map(|r| r.reported_mse()).collect();
            CellSummary {
                regime,
                target,
                min_mse: mses.iter().copied().fold(f64::INFINITY, f64::min),
                mean_mse: mses.iter().sum::<f64>() / n,
                collapse_count: rs.iter().filter(|r| r.collapsed()).count(),
                diverged_count: rs.iter().filter(|r| r.diverged).count(),
                mean_segments: rs.iter().map(|r| r.final_segments as f64).sum::<f64>() / n,
                seeds: rs.iter().map(|r| r.seed).collect(),
            }
        })
        .collect()
}

/// Runs every (regime, target, seed) combination on up to `jobs` threads.
pub fn run_bench(
    cfg: &BenchConfig,
    jobs: usize,
) -> Result<(ExperimentReport, Vec<RunResult>), BenchError> {
    let targets = cfg.resolve_targets()?;
    let mut tasks = Vec::new();
    for &regime in &cfg.regimes {
        for target in &targets {
            for &seed in &cfg.seeds {
                tasks.push((regime, target, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let results: Result<Vec<RunResult>, BenchError> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(regime, target, seed)| {
                let run_cfg = TrainConfig {
                    regime,
                    seed,
                    ..cfg.train.clone()
                };
                run_or_abort(target, &run_cfg).map_err(|source| BenchError::Train {
                    regime,
                    target: target.name().to_string(),
                    seed,
                    source,
                })
            })
            .collect()
    });
    let mut runs = results?;
    sort_runs(&mut runs);
    let report = ExperimentReport {
        meta: ReportMeta {
            config_hash: cfg.hash(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").to_string(),
            runs: runs.len(),
        },
        cells: summarize(&runs),
    };
    Ok((report, runs))
}

/// `table.csv` contents.
pub fn table_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from("regime,target,min_mse,mean_mse,collapse_count,mean_segments\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{:.16e},{:.16e},{},{}\n",
            c.regime, c.target, c.min_mse, c.mean_mse, c.collapse_count, c.mean_segments
        ));
    }
    s
}

/// Writes `report.json`, `runs.jsonl` and `table.csv` into `out`.
pub fn write_bench_outputs(
    out: &Path,
    report: &ExperimentReport,
    runs: &[RunResult],
) -> Result<(), BenchError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let report_path = out.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(report)?).map_err(io_err(&report_path))?;

    let runs_path = out.join("runs.jsonl");
    let mut lines = String::new();
    for r in runs {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    fs::write(&runs_path, lines).map_err(io_err(&runs_path))?;

    let table_path = out.join("table.csv");
    fs::write(&table_path, table_csv(&report.cells)).map_err(io_err(&table_path))?;
    Ok(())
}

/// Reads back a `runs.jsonl` file.
pub fn read_runs(path: &Path) -> Result<Vec<RunResult>, BenchError> {
    fs::read_to_string(path)
        .map_err(io_err(path))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(BenchError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub segments: usize,
    pub dead_layers: Vec<bool>,
    /// Zero crossings of every hidden neuron's pre-activation, per layer.
    pub bend_budget: Vec<Vec<usize>>,
}

pub fn analyze_net(net: &DenseNet) -> AnalysisSummary {
    AnalysisSummary {
        segments: exact_output_pwl(net).segment_count(COLLINEAR_TOL),
        dead_layers: dying_relu_report(net, &unit_grid(ANALYSIS_POINTS)),
        bend_budget: bend_budget(net),
    }
}

/// Writes `layer_<l>.csv` (pre-activations of every neuron of layer `l` on the analysis grid)
/// and `summary.json` into `out`.
pub fn write_analysis(net: &DenseNet, out: &Path) -> Result<AnalysisSummary, BenchError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let grid = unit_grid(ANALYSIS_POINTS);
    let traces: Vec<_> = grid.iter().map(|&x| net.forward(x).1).collect();
    for (l, &width) in net.widths()[1..].iter().enumerate() {
        let path = out.join(format!("layer_{l}.csv"));
        let mut file = io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        let header: Vec<String> = (0..width).map(|n| format!("n{n}")).collect();
        let mut body = format!("x,{}\n", header.join(","));
        for (x, t) in grid.iter().zip(&traces) {
            body.push_str(&format!("{x:.16e}"));
            for v in &t.pre[l] {
                body.push_str(&format!(",{v:.16e}"));
            }
            body.push('\n');
        }
        file.write_all(body.as_bytes()).map_err(io_err(&path))?;
    }
    let summary = analyze_net(net);
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(io_err(&path))?;
    Ok(summary)
}
