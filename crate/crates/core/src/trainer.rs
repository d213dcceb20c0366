//! Targets, datasets, and the training regimes.
//!
//! The manifold regimes train in two stages: first the manifold coordinates (peaks, and in the
//! free regime also the scales) are optimized with the network re-synthesized at every step,
//! then the synthesized weights are released and fine-tuned directly. The baselines skip the
//! first stage and start from a random or a synthesized network.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{Dual, Real};
use crate::manifold::{
    derive_scales_generic, ManifoldError, ManifoldParams, Mode, DEFAULT_TAIL_PEAK, PEAK_EPS,
};
use crate::nn::{
    compositional_widths, dying_relu_report, exact_output_pwl, init_kaiming, init_raai,
    synthesize_compositional, synthesize_unchecked, unit_grid, weight_jacobian_dot, AdamConfig,
    AdamState, DenseNet, NetError,
};
use crate::pwl::{PwlFunction, COLLINEAR_TOL};

/// Training grid size.
pub const DATASET_POINTS: usize = 500;

/// Range of the shared starting peaks.
pub const START_PEAK_RANGE: (f64, f64) = (0.2, 0.8);

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{stage} diverged at epoch {epoch}: loss {loss}")]
    Diverged {
        stage: &'static str,
        epoch: usize,
        loss: f64,
        /// Losses recorded before the divergence, across all stages run so far.
        trace: Vec<f64>,
    },
    #[error("regime {0} has no manifold stage")]
    NotManifoldRegime(Regime),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Default,
    Raai,
    NoOptimization,
    ManifoldFree,
    ManifoldEnforced,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Default,
        Regime::Raai,
        Regime::NoOptimization,
        Regime::ManifoldFree,
        Regime::ManifoldEnforced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Default => "default",
            Regime::Raai => "raai",
            Regime::NoOptimization => "no_optimization",
            Regime::ManifoldFree => "manifold_free",
            Regime::ManifoldEnforced => "manifold_enforced",
        }
    }

    pub fn has_manifold_stage(self) -> bool {
        matches!(self, Regime::ManifoldFree | Regime::ManifoldEnforced)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == norm)
            .ok_or_else(|| format!("unknown regime '{s}'"))
    }
}

/// Function to approximate on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetFunction {
    Cube,
    Pow11,
    Tanh3x,
    QuarterSine,
    Square,
    /// Linear interpolation of user samples.
    CustomSamples(PwlFunction),
}

impl TargetFunction {
    pub const BUILTIN: [TargetFunction; 5] = [
        TargetFunction::Cube,
        TargetFunction::Pow11,
        TargetFunction::Tanh3x,
        TargetFunction::QuarterSine,
        TargetFunction::Square,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TargetFunction::Cube => "cube",
            TargetFunction::Pow11 => "pow11",
            TargetFunction::Tanh3x => "tanh3x",
            TargetFunction::QuarterSine => "quarter_sine",
            TargetFunction::Square => "square",
            TargetFunction::CustomSamples(_) => "custom",
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TargetFunction::Cube => x * x * x,
            TargetFunction::Pow11 => x.powi(11),
            TargetFunction::Tanh3x => (3.0 * x).tanh(),
            TargetFunction::QuarterSine => (std::f64::consts::FRAC_PI_2 * x).sin(),
            TargetFunction::Square => x * x,
            TargetFunction::CustomSamples(f) => f.eval_unchecked(x.clamp(0.0, 1.0)),
        }
    }

    /// Convex targets subtract waves from `y = x`; concave ones add them.
    pub fn mode(&self) -> Mode {
        match self {
            TargetFunction::Cube | TargetFunction::Pow11 | TargetFunction::Square => Mode::Subtract,
            TargetFunction::Tanh3x | TargetFunction::QuarterSine => Mode::Add,
            TargetFunction::CustomSamples(f) => {
                let slopes: Vec<f64> = f.derivative().slopes().collect();
                let bend: f64 = slopes.windows(2).map(|w| w[1] - w[0]).sum();
                if bend >= 0.0 {
                    Mode::Subtract
                } else {
                    Mode::Add
                }
            }
        }
    }
}

impl fmt::Display for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetFunction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        let alias = match norm.as_str() {
            "x3" | "x^3" => "cube",
            "x11" | "x^11" => "pow11",
            "tanh" => "tanh3x",
            "sin" | "sine" => "quarter_sine",
            "x2" | "x^2" => "square",
            other => other,
        };
        TargetFunction::BUILTIN
            .into_iter()
            .find(|t| t.name() == alias)
            .ok_or_else(|| format!("unknown target '{s}'"))
    }
}

/// Evenly spaced training grid with target values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

pub fn make_dataset(target: &TargetFunction) -> Dataset {
    let xs = unit_grid(DATASET_POINTS);
    let ys = xs.iter().map(|&x| target.eval(x)).collect();
    Dataset { xs, ys }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    /// Number of hidden layers.
    pub depth: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Learning rate for raw-weight training (stage 2 and the baselines).
    pub lr: f64,
    /// Learning rate on manifold coordinates.
    pub lr_stage1: f64,
    pub seed: u64,
    pub clamp_eps: f64,
    pub tail_peak: f64,
    /// Segment count is recorded every this many epochs.
    pub segment_log_every: usize,
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::ManifoldEnforced,
            depth: 5,
            epochs_stage1: 100,
            epochs_stage2: 900,
            lr: 1e-3,
            lr_stage1: 0.1,
            seed: 0,
            clamp_eps: PEAK_EPS,
            tail_peak: DEFAULT_TAIL_PEAK,
            segment_log_every: 50,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.epochs_stage1 + self.epochs_stage2
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.depth == 0 {
            return Err(TrainError::Config("depth must be at least 1".into()));
        }
        if self.regime.has_manifold_stage() && self.depth < 2 {
            return Err(TrainError::Config(
                "manifold regimes need depth >= 2".into(),
            ));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(TrainError::Config(format!(
                "clamp_eps must lie in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        if !(self.lr >= 0.0 && self.lr_stage1 >= 0.0) {
            return Err(TrainError::Config("learning rates must be >= 0".into()));
        }
        if self.segment_log_every == 0 {
            return Err(TrainError::Config("segment_log_every must be >= 1".into()));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig::with_lr(lr)
    }
}

/// Unconstrained stage-1 coordinates: one logit per peak, plus one log-scale per layer when the
/// scales are free.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldCoords {
    pub values: Vec<f64>,
    pub depth: usize,
    pub free_scales: bool,
    pub mode: Mode,
    pub eps: f64,
    pub tail_peak: f64,
}

impl ManifoldCoords {
    pub fn from_params(p: &ManifoldParams, free_scales: bool, eps: f64, tail_peak: f64) -> Self {
        let mut values: Vec<f64> = p
            .peaks()
            .iter()
            .map(|&a| {
                let u = ((a - eps) / (1.0 - 2.0 * eps)).clamp(1e-12, 1.0 - 1e-12);
                (u / (1.0 - u)).ln()
            })
            .collect();
        if free_scales {
            values.extend(p.scales().iter().map(|s| s.max(1e-300).ln()));
        }
        Self {
            values,
            depth: p.depth(),
            free_scales,
            mode: p.mode(),
            eps,
            tail_peak,
        }
    }

    /// Peaks and scales as functions of the coordinates.
    pub fn build<T: Real>(&self, coords: &[T]) -> (Vec<T>, Vec<T>) {
        let eps = T::cst(self.eps);
        let span = T::cst(1.0 - 2.0 * self.eps);
        let peaks: Vec<T> = coords[..self.depth]
            .iter()
            .map(|&t| eps + span * t.logistic())
            .collect();
        let scales = if self.free_scales {
            coords[self.depth..].iter().map(|&t| t.exp()).collect()
        } else {
            derive_scales_generic(&peaks, self.mode, T::cst(1.0), T::cst(self.tail_peak))
        };
        (peaks, scales)
    }

    pub fn to_params(&self) -> Result<ManifoldParams, ManifoldError> {
        let (peaks, scales) = self.build::<f64>(&self.values);
        let peaks = peaks
            .into_iter()
            .map(|a| a.clamp(self.eps, 1.0 - self.eps))
            .collect();
        ManifoldParams::new(peaks, scales, self.mode)
    }

    /// Training loss and its gradient with respect to the coordinates, differentiating through
    /// the weight synthesis.
    pub fn loss_and_grad(&self, data: &Dataset) -> Result<(f64, Vec<f64>), ManifoldError> {
        let p = self.to_params()?;
        let net = synthesize_unchecked(&p);
        let (loss, weight_grads) = net.backward(&data.xs, &data.ys);
        let grads = weight_jacobian_dot(&self.values, self.mode, &weight_grads, |c: &[Dual]| {
            self.build(c)
        });
        Ok((loss, grads))
    }

    pub fn loss(&self, data: &Dataset) -> Result<f64, ManifoldError> {
        let net = synthesize_unchecked(&self.to_params()?);
        Ok(net.mse(&data.xs, &data.ys))
    }
}

/// Result of the manifold stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Outcome {
    pub params: ManifoldParams,
    /// Loss at the start of every epoch.
    pub trace: Vec<f64>,
    /// `(epoch, segment count)` every `segment_log_every` epochs.
    pub segment_log: Vec<(usize, usize)>,
}

/// Result of raw-weight fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    pub net: DenseNet,
    pub trace: Vec<f64>,
    pub segment_log: Vec<(usize, usize)>,
    pub final_mse: f64,
}

fn segments(net: &DenseNet) -> usize {
    exact_output_pwl(net).segment_count(COLLINEAR_TOL)
}

fn check_loss(
    loss: f64,
    threshold: f64,
    stage: &'static str,
    epoch: usize,
    trace: &[f64],
) -> Result<(), TrainError> {
    if !loss.is_finite() || loss > threshold {
        return Err(TrainError::Diverged {
            stage,
            epoch,
            loss,
            trace: trace.to_vec(),
        });
    }
    Ok(())
}

pub fn stage1_manifold_train(
    p0: &ManifoldParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Stage1Outcome, TrainError> {
    stage1_manifold_train_observed(p0, data, cfg, |_, _, _| {})
}

/// [`stage1_manifold_train`] with a callback receiving `(epoch, params, loss)` before each step.
pub fn stage1_manifold_train_observed<F>(
    p0: &ManifoldParams,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<Stage1Outcome, TrainError>
where
    F: FnMut(usize, &ManifoldParams, f64),
{
    if !cfg.regime.has_manifold_stage() {
        return Err(TrainError::NotManifoldRegime(cfg.regime));
    }
    cfg.validate()?;
    if cfg.epochs_stage1 == 0 {
        return Ok(Stage1Outcome {
            params: p0.clone(),
            trace: Vec::new(),
            segment_log: Vec::new(),
        });
    }
    let free = cfg.regime == Regime::ManifoldFree;
    let mut coords = ManifoldCoords::from_params(p0, free, cfg.clamp_eps, cfg.tail_peak);
    let mut adam = AdamState::new(cfg.adam(cfg.lr_stage1), coords.values.len());
    let mut trace = Vec::with_capacity(cfg.epochs_stage1);
    let mut segment_log = Vec::new();

    for epoch in 0..cfg.epochs_stage1 {
        let (loss, grads) = coords.loss_and_grad(data)?;
        check_loss(loss, cfg.divergence_threshold, "stage 1", epoch, &trace)?;
        let params = coords.to_params()?;
        observe(epoch, &params, loss);
        if epoch % cfg.segment_log_every == 0 {
            segment_log.push((epoch, segments(&synthesize_unchecked(&params))));
        }
        trace.push(loss);
        adam.step_flat(&mut coords.values, &grads);
    }
    let params = coords.to_params()?;
    Ok(Stage1Outcome {
        params,
        trace,
        segment_log,
    })
}

/// Full-batch ADAM on every weight and bias for `epochs` epochs.
pub fn stage2_finetune(
    net: &DenseNet,
    data: &Dataset,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<Stage2Outcome, TrainError> {
    let mut net = net.clone();
    let mut adam = AdamState::for_net(cfg.adam(cfg.lr), &net);
    let mut params = net.to_flat();
    let mut trace = Vec::with_capacity(epochs);
    let mut segment_log = Vec::new();
    for epoch in 0..epochs {
        let (loss, grads) = net.backward(&data.xs, &data.ys);
        check_loss(loss, cfg.divergence_threshold, "stage 2", epoch, &trace)?;
        if epoch % cfg.segment_log_every == 0 {
            segment_log.push((epoch, segments(&net)));
        }
        trace.push(loss);
        adam.step_flat(&mut params, &grads.flat);
        net.set_flat(&params);
    }
    let final_mse = net.mse(&data.xs, &data.ys);
    check_loss(
        final_mse,
        cfg.divergence_threshold,
        "stage 2",
        epochs,
        &trace,
    )?;
    segment_log.push((epochs, segments(&net)));
    Ok(Stage2Outcome {
        net,
        trace,
        segment_log,
        final_mse,
    })
}

/// Starting manifold point shared by every manifold-based regime for a given seed: peaks
/// i.i.d. uniform on [`START_PEAK_RANGE`], scales on the differentiable manifold.
pub fn shared_start(
    seed: u64,
    depth: usize,
    mode: Mode,
    tail_peak: f64,
) -> Result<ManifoldParams, ManifoldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (lo, hi) = START_PEAK_RANGE;
    let peaks: Vec<f64> = (0..depth).map(|_| rng.random_range(lo..hi)).collect();
    let scales = if depth >= 2 {
        crate::manifold::derive_scales_with_tail(&peaks, mode, 1.0, tail_peak)?
    } else {
        derive_scales_generic(&peaks, mode, 1.0, tail_peak)
    };
    ManifoldParams::new(peaks, scales, mode)
}

/// Summary of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub regime: Regime,
    pub target: String,
    pub seed: u64,
    pub depth: usize,
    /// Loss at the start of every epoch, across both stages.
    pub mse_trace: Vec<f64>,
    pub final_mse: f64,
    pub best_mse: f64,
    pub final_segments: usize,
    pub dead_layers: Vec<bool>,
    pub stage_transition_epoch: Option<usize>,
    /// `(epoch, segment count)`, epochs counted across both stages.
    pub segment_log: Vec<(usize, usize)>,
    pub diverged: bool,
    /// Kept out of serialized output so results are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl RunResult {
    pub fn collapsed(&self) -> bool {
        self.final_segments == 1
    }

    /// Final MSE, or the first finite loss for a run that diverged.
    pub fn reported_mse(&self) -> f64 {
        if self.diverged {
            self.mse_trace
                .iter()
                .copied()
                .find(|v| v.is_finite())
                .unwrap_or(self.final_mse)
        } else {
            self.final_mse
        }
    }

    /// Record for a run that was aborted on divergence. Its final MSE is the first finite loss.
    pub fn aborted(target: &TargetFunction, cfg: &TrainConfig, trace: Vec<f64>) -> Self {
        let first = trace
            .iter()
            .copied()
            .find(|v| v.is_finite())
            .unwrap_or(f64::MAX);
        Self {
            regime: cfg.regime,
            target: target.name().to_string(),
            seed: cfg.seed,
            depth: cfg.depth,
            best_mse: trace.iter().copied().fold(first, f64::min),
            mse_trace: trace,
            final_mse: first,
            final_segments: 1,
            dead_layers: Vec::new(),
            stage_transition_epoch: None,
            segment_log: Vec::new(),
            diverged: true,
            wall_time_s: 0.0,
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub model: DenseNet,
    /// Manifold point the final stage started from, for the manifold-based regimes.
    pub start_params: Option<ManifoldParams>,
}

fn offset_log(log: &mut Vec<(usize, usize)>, extra: Vec<(usize, usize)>, offset: usize) {
    log.extend(extra.into_iter().map(|(e, c)| (e + offset, c)));
}

fn with_trace_prefix(err: TrainError, prefix: &[f64]) -> TrainError {
    match err {
        TrainError::Diverged {
            stage,
            epoch,
            loss,
            trace,
        } => TrainError::Diverged {
            stage,
            epoch,
            loss,
            trace: prefix.iter().copied().chain(trace).collect(),
        },
        other => other,
    }
}

/// Runs one regime on one target with the seed in `cfg`.
pub fn run_pipeline(target: &TargetFunction, cfg: &TrainConfig) -> Result<RunOutput, TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    let data = make_dataset(target);
    let widths = compositional_widths(cfg.depth);
    let total = cfg.total_epochs();
    let mode = target.mode();

    let mut trace = Vec::with_capacity(total);
    let mut segment_log = Vec::new();
    let mut stage_transition_epoch = None;
    let mut start_params = None;

    let (start_net, stage2_epochs) = match cfg.regime {
        Regime::Default => (init_kaiming(&widths, cfg.seed)?, total),
        Regime::Raai => (init_raai(&widths, cfg.seed)?, total),
        Regime::NoOptimization => {
            let p0 = shared_start(cfg.seed, cfg.depth, mode, cfg.tail_peak)?;
            let net = synthesize_compositional(&p0)?;
            start_params = Some(p0);
            (net, total)
        }
        Regime::ManifoldFree | Regime::ManifoldEnforced => {
            let p0 = shared_start(cfg.seed, cfg.depth, mode, cfg.tail_peak)?;
            let s1 = stage1_manifold_train(&p0, &data, cfg)?;
            trace.extend_from_slice(&s1.trace);
            offset_log(&mut segment_log, s1.segment_log, 0);
            stage_transition_epoch = Some(cfg.epochs_stage1);
            let net = synthesize_compositional(&s1.params)?;
            start_params = Some(s1.params);
            (net, cfg.epochs_stage2)
        }
    };

    let offset = trace.len();
    let s2 = stage2_finetune(&start_net, &data, cfg, stage2_epochs)
        .map_err(|e| with_trace_prefix(e, &trace))?;
    trace.extend_from_slice(&s2.trace);
    offset_log(&mut segment_log, s2.segment_log, offset);

    let final_segments = segment_log.last().map(|&(_, c)| c).unwrap_or(1);
    let best_mse = trace.iter().copied().fold(s2.final_mse, f64::min);
    let dead_layers = dying_relu_report(&s2.net, &data.xs);
    let result = RunResult {
        regime: cfg.regime,
        target: target.name().to_string(),
        seed: cfg.seed,
        depth: cfg.depth,
        mse_trace: trace,
        final_mse: s2.final_mse,
        best_mse,
        final_segments,
        dead_layers,
        stage_transition_epoch,
        segment_log,
        diverged: false,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        result,
        model: s2.net,
        start_params,
    })
}

/// [`run_pipeline`], turning divergence into an aborted [`RunResult`].
pub fn run_or_abort(target: &TargetFunction, cfg: &TrainConfig) -> Result<RunResult, TrainError> {
    match run_pipeline(target, cfg) {
        Ok(out) => Ok(out.result),
        Err(TrainError::Diverged { trace, .. }) => Ok(RunResult::aborted(target, cfg, trace)),
        Err(e) => Err(e),
    }
}
