//! Invariant suites with fixed seeds. Each check reports the measured value next to its bound.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifold::{
    convexity_check, derive_scales_periodic, error_series, ideal_function, max_error_at_peaks,
    scale_ratio_bound, second_derivative_gap, second_derivative_probe, sup_deviation_from_square,
    ManifoldParams, Mode, PeriodicPeaks,
};
use crate::nn::{exact_output_pwl, init_kaiming, synthesize_compositional, DenseNet};
use crate::trainer::{make_dataset, ManifoldCoords, TargetFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Series,
    Convexity,
    Ratio,
    Decay,
    SecondDeriv,
    Oracle,
    GradCheck,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Series,
        Suite::Convexity,
        Suite::Ratio,
        Suite::Decay,
        Suite::SecondDeriv,
        Suite::Oracle,
        Suite::GradCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Series => "series",
            Suite::Convexity => "convexity",
            Suite::Ratio => "ratio",
            Suite::Decay => "decay",
            Suite::SecondDeriv => "secondderiv",
            Suite::Oracle => "oracle",
            Suite::GradCheck => "gradcheck",
        }
    }

    pub fn run(self) -> SuiteReport {
        let checks = match self {
            Suite::Series => series_checks(),
            Suite::Convexity => convexity_checks(),
            Suite::Ratio => ratio_checks(),
            Suite::Decay => decay_checks(),
            Suite::SecondDeriv => second_derivative_checks(),
            Suite::Oracle => oracle_checks(),
            Suite::GradCheck => gradient_checks(),
        };
        SuiteReport {
            suite: self,
            checks,
        }
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
                format!("unknown suite '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes iff `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= bound,
            detail: format!("{value:.3e} <= {bound:.3e}"),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= bound,
            detail: format!("{value:.3e} >= {bound:.3e}"),
        }
    }

    pub fn count(name: impl Into<String>, good: usize, total: usize) -> Self {
        Self {
            name: name.into(),
            passed: good == total,
            detail: format!("{good}/{total}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}/{}: {}", self.suite.name(), c.name, c.detail)?;
        }
        Ok(())
    }
}

fn random_peaks(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Period of the random peak sequences in the series suite.
pub const SERIES_PERIOD: usize = 5;
/// Truncation depth of the series suite.
pub const SERIES_DEPTH: usize = 30;

/// Worst `residual / s_0` over random periodic sequences with derived scales, and the smallest
/// `residual / s_0` after a 1% bump of `s_1`.
pub fn series_margins(samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut weakest_perturbed = f64::INFINITY;
    for k in 0..samples {
        let peaks = PeriodicPeaks::new(random_peaks(&mut rng, SERIES_PERIOD, 0.2, 0.8))
            .expect("peaks in range");
        let mode = if k % 2 == 0 {
            Mode::Subtract
        } else {
            Mode::Add
        };
        let mut s = derive_scales_periodic(&peaks, mode, 1.0, SERIES_DEPTH + 1);
        let r = error_series(&peaks, &s, 0, SERIES_DEPTH).expect("valid truncation");
        worst = worst.max(r.residual.abs() / s[0]);
        s[1] *= 1.01;
        let r = error_series(&peaks, &s, 0, SERIES_DEPTH).expect("valid truncation");
        weakest_perturbed = weakest_perturbed.min(r.residual.abs() / s[0]);
    }
    (worst, weakest_perturbed)
}

fn series_checks() -> Vec<Check> {
    let (worst, perturbed) = series_margins(100, 1);
    vec![
        Check::at_most(
            "derived residual / s_i, 100 periodic draws, N=30",
            worst,
            1e-6,
        ),
        Check::at_least("1%-perturbed residual / s_i", perturbed, 1e-3),
    ]
}

fn convexity_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut good = 0;
    for k in 0..1000 {
        let depth = rng.random_range(2..=8);
        let mode = if k % 2 == 0 {
            Mode::Subtract
        } else {
            Mode::Add
        };
        let p = ManifoldParams::on_manifold(random_peaks(&mut rng, depth, 0.1, 0.9), mode)
            .expect("valid peaks");
        if convexity_check(&ideal_function(&p).expect("valid params"), mode) {
            good += 1;
        }
    }
    vec![Check::count("slope monotonicity per mode", good, 1000)]
}

fn ratio_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let worst = (0..1000)
        .map(|_| {
            let depth = rng.random_range(3..=8);
            let p = ManifoldParams::on_manifold(
                random_peaks(&mut rng, depth, 0.1, 0.9),
                Mode::Subtract,
            )
            .expect("valid peaks");
            scale_ratio_bound(&p).expect("depth >= 3")
        })
        .fold(0.0f64, f64::max);
    vec![Check::at_most(
        "max s_{i+2}/s_i over 1000 draws",
        worst,
        0.25,
    )]
}

fn decay_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = 0.0f64;
    let mut worst_decay = 0.0f64;
    for k in 0..20 {
        let mode = if k % 2 == 0 {
            Mode::Subtract
        } else {
            Mode::Add
        };
        let p = ManifoldParams::on_manifold(random_peaks(&mut rng, 10, 0.1, 0.9), mode)
            .expect("valid peaks");
        for i in 0..=8 {
            let e = max_error_at_peaks(&p, i, p.depth()).expect("i < depth");
            worst_gap = worst_gap.max((e - p.scales()[i]).abs());
            let envelope = 0.25f64.powi((i / 2) as i32) * p.scales()[0];
            worst_decay = worst_decay.max(p.scales()[i] / envelope);
        }
    }
    vec![
        Check::at_most("|max error at P_i − s_i|, i <= 8", worst_gap, 1e-12),
        Check::at_most("s_i / (0.25^floor(i/2) s_0)", worst_decay, 1.0),
    ]
}

fn second_derivative_checks() -> Vec<Check> {
    let half = PeriodicPeaks::constant(0.5).expect("valid peak");
    let (l, r) = second_derivative_gap(&half, 0, 12).expect("n >= 2");
    let (pl, pr) = second_derivative_probe(&half, 2, 8).expect("n >= 1");
    let third = PeriodicPeaks::constant(0.3).expect("valid peak");
    let min_gap = (2..=10)
        .map(|n| {
            let (l, r) = second_derivative_gap(&third, 1, n).expect("n >= 2");
            (l - r).abs() / l.abs().max(r.abs())
        })
        .fold(f64::INFINITY, f64::min);
    vec![
        Check::at_most("a=0.5 |left − right|", (l - r).abs(), 1e-9),
        Check::at_most(
            "a=0.5 |left/2 − 1| at depth 12",
            (l / 2.0 - 1.0).abs(),
            0.01,
        ),
        Check::at_most("a=0.5 probe |left − right|", (pl - pr).abs(), 1e-9),
        Check::at_least("a=0.3 min relative gap over n=2..10", min_gap, 0.10),
    ]
}

/// Largest sup-norm gap between a synthesized net and its ideal function over `samples` random
/// parameter sets.
pub fn oracle_margin(samples: usize, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matches = 0;
    let mut worst = 0.0f64;
    for k in 0..samples {
        let depth = rng.random_range(1..=8);
        let mode = if k % 2 == 0 {
            Mode::Subtract
        } else {
            Mode::Add
        };
        let peaks = random_peaks(&mut rng, depth, 0.05, 0.95);
        let scales = (0..depth).map(|_| rng.random_range(0.0..0.5)).collect();
        let p = ManifoldParams::new(peaks, scales, mode).expect("valid params");
        let net = synthesize_compositional(&p).expect("synthesis self-check");
        let gap = exact_output_pwl(&net).max_abs_diff(&ideal_function(&p).expect("valid params"));
        worst = worst.max(gap);
        if gap <= 1e-9 {
            matches += 1;
        }
    }
    (matches, worst)
}

fn oracle_checks() -> Vec<Check> {
    let (matches, worst) = oracle_margin(200, 5);
    let mut checks = vec![
        Check::count("synthesized nets matching ideal within 1e-9", matches, 200),
        Check::at_most("worst synthesis gap", worst, 1e-9),
    ];
    let worst_sq = (3..=8)
        .map(|l| {
            let p = ManifoldParams::on_manifold(vec![0.5; l], Mode::Subtract).expect("valid");
            let dev = sup_deviation_from_square(&ideal_function(&p).expect("valid"));
            (dev - 0.25f64.powi(l as i32 + 1)).abs()
        })
        .fold(0.0f64, f64::max);
    checks.push(Check::at_most(
        "|sup|f − x²| − 4^-(L+1)|, L=3..8",
        worst_sq,
        1e-12,
    ));
    checks
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-300)
}

/// Worst relative error of backward-pass gradients against central differences.
pub fn weight_gradcheck(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let depth = rng.random_range(1..=4);
        let mut widths = vec![1];
        widths.extend((0..depth).map(|_| rng.random_range(2..=5)));
        widths.push(1);
        let net = init_kaiming(&widths, rng.random()).expect("valid widths");
        let xs: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let (_, grads) = net.backward(&xs, &ys);
        let base = net.to_flat();
        let h = 1e-6;
        let fd: Vec<f64> = (0..base.len())
            .map(|j| {
                let probe = |delta: f64| {
                    let mut p = base.clone();
                    p[j] += delta;
                    let mut n = net.clone();
                    n.set_flat(&p);
                    n.mse(&xs, &ys)
                };
                (probe(h) - probe(-h)) / (2.0 * h)
            })
            .collect();
        worst = worst.max(relative_error(&grads.flat, &fd));
    }
    worst
}

/// Worst relative error of stage-1 coordinate gradients against central differences,
/// alternating free and derived scales.
pub fn manifold_gradcheck(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let targets = [TargetFunction::Cube, TargetFunction::QuarterSine];
    for k in 0..cases {
        let depth = rng.random_range(2..=6);
        let target = &targets[k % 2];
        let p = ManifoldParams::on_manifold(random_peaks(&mut rng, depth, 0.2, 0.8), target.mode())
            .expect("valid peaks");
        let coords = ManifoldCoords::from_params(&p, k % 4 < 2, 1e-3, 0.5);
        let data = make_dataset(target);
        let (_, grads) = coords.loss_and_grad(&data).expect("valid coords");
        let h = 1e-6;
        let fd: Vec<f64> = (0..coords.values.len())
            .map(|j| {
                let probe = |delta: f64| {
                    let mut c = coords.clone();
                    c.values[j] += delta;
                    c.loss(&data).expect("valid coords")
                };
                (probe(h) - probe(-h)) / (2.0 * h)
            })
            .collect();
        worst = worst.max(relative_error(&grads, &fd));
    }
    worst
}

fn gradient_checks() -> Vec<Check> {
    vec![
        Check::at_most(
            "backward vs central differences, 20 nets",
            weight_gradcheck(20, 6),
            1e-5,
        ),
        Check::at_most(
            "manifold coordinates vs central differences, 20 configs",
            manifold_gradcheck(20, 7),
            1e-4,
        ),
    ]
}

/// Segment count of a network's exact output.
pub fn net_segments(net: &DenseNet) -> usize {
    exact_output_pwl(net).segment_count(crate::pwl::COLLINEAR_TOL)
}
