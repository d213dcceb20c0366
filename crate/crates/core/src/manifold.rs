//! Training-manifold coordinates: triangle peaks, wave scales and the combination mode.
//!
//! A point on the manifold describes the network output
//! `f(x) = x ± Σ_{i<L} s_i W_i(x)` where `W_i = T_{a_i} ∘ … ∘ T_{a_0}` is the i-fold
//! composition of triangle functions. On the *differentiable* sub-manifold the scales are a
//! function of the peaks: `s_{i+1} = s_i (1 - a_{i+1}) a_{i+2}`, which is what makes the
//! infinite-depth limit continuously differentiable.
//!
//! Besides the oracle [`ideal_function`], this module carries numerical diagnostics for the
//! series, ratio, convexity, second-derivative and error-decay properties of that family.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::Real;
use crate::pwl::{PwlError, PwlFunction, COLLINEAR_TOL};

/// Peaks must stay in `[PEAK_EPS, 1 - PEAK_EPS]`.
pub const PEAK_EPS: f64 = 1e-3;

/// Peak value assumed for indices past the truncation depth when closing the scale recurrence.
pub const DEFAULT_TAIL_PEAK: f64 = 0.5;

/// Slope comparisons in [`convexity_check`].
pub const CONVEXITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("need at least {need} peaks, got {got}")]
    Arity { need: usize, got: usize },
    #[error("peak {index} = {value} is outside [{eps}, {}]", 1.0 - eps)]
    PeakOutOfBounds { index: usize, value: f64, eps: f64 },
    #[error("scale {index} = {value} must be finite and non-negative")]
    BadScale { index: usize, value: f64 },
    #[error("{peaks} peaks but {scales} scales")]
    LengthMismatch { peaks: usize, scales: usize },
    #[error("invalid diagnostic request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Pwl(#[from] PwlError),
}

/// Whether composed waves are added to (concave targets) or subtracted from (convex targets)
/// the base line `y = x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Add,
    Subtract,
}

impl Mode {
    pub fn sign(self) -> f64 {
        match self {
            Mode::Add => 1.0,
            Mode::Subtract => -1.0,
        }
    }
}

/// Manifold coordinates. Serializes as `{"peaks":[...],"scales":[...],"mode":"add"|"subtract"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ManifoldParams {
    peaks: Vec<f64>,
    scales: Vec<f64>,
    mode: Mode,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    peaks: Vec<f64>,
    scales: Vec<f64>,
    mode: Mode,
}

impl TryFrom<RawParams> for ManifoldParams {
    type Error = ManifoldError;
    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        ManifoldParams::new(r.peaks, r.scales, r.mode)
    }
}

impl From<ManifoldParams> for RawParams {
    fn from(p: ManifoldParams) -> Self {
        RawParams {
            peaks: p.peaks,
            scales: p.scales,
            mode: p.mode,
        }
    }
}

fn check_peaks(peaks: &[f64]) -> Result<(), ManifoldError> {
    for (index, &value) in peaks.iter().enumerate() {
        if !(PEAK_EPS..=1.0 - PEAK_EPS).contains(&value) {
            return Err(ManifoldError::PeakOutOfBounds {
                index,
                value,
                eps: PEAK_EPS,
            });
        }
    }
    Ok(())
}

impl ManifoldParams {
    pub fn new(peaks: Vec<f64>, scales: Vec<f64>, mode: Mode) -> Result<Self, ManifoldError> {
        if peaks.is_empty() {
            return Err(ManifoldError::Arity { need: 1, got: 0 });
        }
        if peaks.len() != scales.len() {
            return Err(ManifoldError::LengthMismatch {
                peaks: peaks.len(),
                scales: scales.len(),
            });
        }
        check_peaks(&peaks)?;
        for (index, &value) in scales.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ManifoldError::BadScale { index, value });
            }
        }
        Ok(Self {
            peaks,
            scales,
            mode,
        })
    }

    /// Parameters on the differentiable manifold: scales derived from the peaks with unit base
    /// scale and the default tail peak.
    pub fn on_manifold(peaks: Vec<f64>, mode: Mode) -> Result<Self, ManifoldError> {
        let scales = derive_scales(&peaks, mode, 1.0)?;
        Self::new(peaks, scales, mode)
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn depth(&self) -> usize {
        self.peaks.len()
    }

    pub fn with_scales(&self, scales: Vec<f64>) -> Result<Self, ManifoldError> {
        Self::new(self.peaks.clone(), scales, self.mode)
    }
}

/// Scale recurrence, generic so that training can differentiate through it.
///
/// Peaks past the end of the list read as `tail`.
pub(crate) fn derive_scales_generic<T: Real>(peaks: &[T], mode: Mode, base: T, tail: T) -> Vec<T> {
    let one = T::cst(1.0);
    let a = |k: usize| peaks.get(k).copied().unwrap_or(tail);
    let first = match mode {
        Mode::Add => one - a(0),
        Mode::Subtract => a(0),
    };
    let mut scales = Vec::with_capacity(peaks.len());
    let mut s = base * first * a(1);
    scales.push(s);
    for i in 0..peaks.len().saturating_sub(1) {
        s = s * (one - a(i + 1)) * a(i + 2);
        scales.push(s);
    }
    scales
}

/// Scales on the differentiable manifold, using [`DEFAULT_TAIL_PEAK`] past the last peak.
pub fn derive_scales(
    peaks: &[f64],
    mode: Mode,
    base_scale: f64,
) -> Result<Vec<f64>, ManifoldError> {
    derive_scales_with_tail(peaks, mode, base_scale, DEFAULT_TAIL_PEAK)
}

pub fn derive_scales_with_tail(
    peaks: &[f64],
    mode: Mode,
    base_scale: f64,
    tail_peak: f64,
) -> Result<Vec<f64>, ManifoldError> {
    if peaks.len() < 2 {
        return Err(ManifoldError::Arity {
            need: 2,
            got: peaks.len(),
        });
    }
    check_peaks(peaks)?;
    if !(base_scale > 0.0 && base_scale.is_finite()) {
        return Err(ManifoldError::BadRequest(format!(
            "base scale must be positive, got {base_scale}"
        )));
    }
    Ok(derive_scales_generic(peaks, mode, base_scale, tail_peak))
}

/// A finite peak list repeated cyclically, for diagnostics that need indices past the depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPeaks(Vec<f64>);

impl PeriodicPeaks {
    pub fn new(period: Vec<f64>) -> Result<Self, ManifoldError> {
        if period.is_empty() {
            return Err(ManifoldError::Arity { need: 1, got: 0 });
        }
        check_peaks(&period)?;
        Ok(Self(period))
    }

    pub fn constant(a: f64) -> Result<Self, ManifoldError> {
        Self::new(vec![a])
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k % self.0.len()]
    }

    pub fn take(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.get(k)).collect()
    }

    pub fn period(&self) -> &[f64] {
        &self.0
    }
}

/// `count` scales following the recurrence over the periodic sequence, starting from the mode's
/// first coefficient times `base_scale`.
pub fn derive_scales_periodic(
    peaks: &PeriodicPeaks,
    mode: Mode,
    base_scale: f64,
    count: usize,
) -> Vec<f64> {
    let a = peaks.take(count + 2);
    let mut s = derive_scales_generic(&a, mode, base_scale, DEFAULT_TAIL_PEAK);
    s.truncate(count);
    s
}

/// `W_0, …, W_{L-1}`: successive compositions of the triangle functions.
pub fn composed_waves(peaks: &[f64]) -> Result<Vec<PwlFunction>, ManifoldError> {
    let mut waves = Vec::with_capacity(peaks.len());
    let mut current = PwlFunction::identity();
    for &a in peaks {
        current = PwlFunction::compose(&PwlFunction::triangle(a)?, &current)?;
        waves.push(current.clone());
    }
    Ok(waves)
}

/// `x ± Σ_{n<upto} s_n W_n` from precomputed waves.
pub fn partial_sum_from_waves(
    waves: &[PwlFunction],
    scales: &[f64],
    mode: Mode,
    upto: usize,
) -> Result<PwlFunction, ManifoldError> {
    let identity = PwlFunction::identity();
    let sign = mode.sign();
    let mut terms: Vec<(f64, &PwlFunction)> = vec![(1.0, &identity)];
    terms.extend(
        waves
            .iter()
            .zip(scales)
            .take(upto)
            .map(|(w, &s)| (sign * s, w)),
    );
    Ok(PwlFunction::affine_combine(&terms, 0.0)?)
}

/// Finite-depth approximation `f_upto`, excluding layer `upto` and beyond.
pub fn partial_sum(p: &ManifoldParams, upto: usize) -> Result<PwlFunction, ManifoldError> {
    let waves = composed_waves(&p.peaks[..upto.min(p.depth())])?;
    partial_sum_from_waves(&waves, &p.scales, p.mode, upto)
}

/// Exact output the compositional network should produce: `x ± Σ_{i<L} s_i W_i`.
pub fn ideal_function(p: &ManifoldParams) -> Result<PwlFunction, ManifoldError> {
    partial_sum(p, p.depth())
}

/// Truncated derivative-gap series at the peaks of layer `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDiagnostics {
    pub layer: usize,
    pub depth: usize,
    /// Value of the series after including terms up to index `i+1`, `i+2`, …, `depth`.
    pub partial_sums: Vec<f64>,
    pub residual: f64,
}

/// Evaluates `s_i − (s_{i+1} + Σ_{n=i+2}^{N} s_n Π_{k=i+2}^{n} 1/a_k) / (1 − a_{i+1})`.
///
/// `scales` must hold at least `N + 1` entries.
pub fn error_series(
    peaks: &PeriodicPeaks,
    scales: &[f64],
    i: usize,
    n: usize,
) -> Result<SeriesDiagnostics, ManifoldError> {
    if n <= i + 2 {
        return Err(ManifoldError::BadRequest(format!(
            "truncation depth {n} must exceed layer {i} + 2"
        )));
    }
    if scales.len() <= n {
        return Err(ManifoldError::BadRequest(format!(
            "need {} scales for depth {n}, got {}",
            n + 1,
            scales.len()
        )));
    }
    let inv_lead = 1.0 / (1.0 - peaks.get(i + 1));
    let mut tail = scales[i + 1];
    let mut partial_sums = vec![scales[i] - inv_lead * tail];
    let mut prod = 1.0;
    for m in i + 2..=n {
        prod /= peaks.get(m);
        tail += scales[m] * prod;
        partial_sums.push(scales[i] - inv_lead * tail);
    }
    let residual = *partial_sums.last().unwrap();
    Ok(SeriesDiagnostics {
        layer: i,
        depth: n,
        partial_sums,
        residual,
    })
}

/// [`error_series`] for parameters extended periodically, with scales continued by the
/// recurrence from `s_0`.
pub fn error_series_for(
    p: &ManifoldParams,
    i: usize,
    n: usize,
) -> Result<SeriesDiagnostics, ManifoldError> {
    let peaks = PeriodicPeaks::new(p.peaks.clone())?;
    let first = match p.mode {
        Mode::Add => 1.0 - peaks.get(0),
        Mode::Subtract => peaks.get(0),
    };
    let base = p.scales[0] / (first * peaks.get(1));
    let scales = derive_scales_periodic(&peaks, p.mode, base, n + 1);
    error_series(&peaks, &scales, i, n)
}

/// True iff every pair `(s_i, s_{i+1})` with `i + 2 < L` obeys the scale recurrence within
/// `tol · s_i`.
pub fn is_on_differentiable_manifold(p: &ManifoldParams, tol: f64) -> bool {
    let (a, s) = (&p.peaks, &p.scales);
    (0..p.depth().saturating_sub(2)).all(|i| {
        let expected = s[i] * (1.0 - a[i + 1]) * a[i + 2];
        (s[i + 1] - expected).abs() <= tol * s[i]
    })
}

/// `max_i s_{i+2} / s_i`.
pub fn scale_ratio_bound(p: &ManifoldParams) -> Result<f64, ManifoldError> {
    if p.depth() < 3 {
        return Err(ManifoldError::Arity {
            need: 3,
            got: p.depth(),
        });
    }
    Ok(p.scales
        .windows(3)
        .map(|w| w[2] / w[0])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Subtract mode: slopes non-decreasing (convex). Add mode: non-increasing (concave).
pub fn convexity_check(f: &PwlFunction, mode: Mode) -> bool {
    let slopes: Vec<f64> = f.derivative().slopes().collect();
    slopes.windows(2).all(|w| {
        let slack = CONVEXITY_TOL * w[0].abs().max(w[1].abs()).max(1.0);
        match mode {
            Mode::Subtract => w[1] >= w[0] - slack,
            Mode::Add => w[1] <= w[0] + slack,
        }
    })
}

/// Left/right difference quotients of `F'` around the leftmost peak of layer `i`, after `n`
/// refinements, from the closed-form neighbour spacings and derivative drops.
///
/// Scales follow the recurrence in subtract mode with unit base, so with every peak at 0.5 the
/// target is `x²` and both quotients equal `F'' = 2`.
pub fn second_derivative_gap(
    peaks: &PeriodicPeaks,
    i: usize,
    n: usize,
) -> Result<(f64, f64), ManifoldError> {
    if n < 2 {
        return Err(ManifoldError::BadRequest(format!(
            "need at least 2 refinements, got {n}"
        )));
    }
    let scales = derive_scales_periodic(peaks, Mode::Subtract, 1.0, i + 1);
    let s_i = scales[i];
    // Slope of W_{i-1} on its first (rising) segment.
    let k: f64 = (0..i).map(|j| 1.0 / peaks.get(j)).product();
    let left_factor = peaks.get(i);
    let right_factor = 1.0 - peaks.get(i);
    let lead = 1.0 - peaks.get(i + 1);
    let (dx_prod, dy_prod) = (2..=n).fold((1.0, 1.0), |(px, py), m| {
        let a = peaks.get(i + m);
        (px * a, py * (1.0 - a))
    });
    let quotient = |side: f64| {
        let dx = side / k * lead * dx_prod;
        let dy = s_i * k / side * dy_prod;
        dy / dx
    };
    Ok((quotient(left_factor), quotient(right_factor)))
}

/// Same quotients as [`second_derivative_gap`], measured on exact piecewise-linear
/// approximations instead of the closed form: slopes of `f_i` at the peak and of `f_{i+n}` at
/// its nearest `W_{i+n}` peaks on either side.
pub fn second_derivative_probe(
    peaks: &PeriodicPeaks,
    i: usize,
    n: usize,
) -> Result<(f64, f64), ManifoldError> {
    if n < 1 {
        return Err(ManifoldError::BadRequest(
            "need at least 1 refinement".into(),
        ));
    }
    let depth = i + n + 1;
    let a = peaks.take(depth);
    let scales = derive_scales_periodic(peaks, Mode::Subtract, 1.0, depth);
    let waves = composed_waves(&a)?;
    let x = waves[i].breakpoints_at_level(1.0, 1e-9)[0];
    let fine_peaks = waves[i + n].breakpoints_at_level(1.0, 1e-9);
    let r = fine_peaks
        .iter()
        .copied()
        .find(|&p| p > x)
        .ok_or_else(|| ManifoldError::BadRequest("no right neighbour".into()))?;
    let l = fine_peaks
        .iter()
        .copied()
        .rev()
        .find(|&p| p < x)
        .ok_or_else(|| ManifoldError::BadRequest("no left neighbour".into()))?;
    let coarse = partial_sum_from_waves(&waves, &scales, Mode::Subtract, i)?.derivative();
    let fine = partial_sum_from_waves(&waves, &scales, Mode::Subtract, i + n)?.derivative();
    let slope = |prof: &crate::pwl::SlopeProfile, at: f64| {
        prof.slope_at(at)
            .ok_or_else(|| ManifoldError::BadRequest(format!("no slope at {at}")))
    };
    let center = slope(&coarse, x)?;
    let right = (slope(&fine, r)? - center) / (r - x);
    let left = (center - slope(&fine, l)?) / (x - l);
    Ok((left, right))
}

/// `max_{x ∈ P_i} |f_deep(x) − f_i(x)|`; equals `s_i` because the peaks of `W_i` are valleys
/// of every later wave.
pub fn max_error_at_peaks(p: &ManifoldParams, i: usize, deep: usize) -> Result<f64, ManifoldError> {
    if i >= deep || deep > p.depth() {
        return Err(ManifoldError::BadRequest(format!(
            "need i < deep <= depth, got i={i}, deep={deep}, depth={}",
            p.depth()
        )));
    }
    let waves = composed_waves(&p.peaks[..deep])?;
    let f_deep = partial_sum_from_waves(&waves, &p.scales, p.mode, deep)?;
    let f_i = partial_sum_from_waves(&waves, &p.scales, p.mode, i)?;
    Ok(waves[i]
        .breakpoints_at_level(1.0, 1e-9)
        .into_iter()
        .map(|x| (f_deep.eval_unchecked(x) - f_i.eval_unchecked(x)).abs())
        .fold(0.0, f64::max))
}

/// Exact `sup_{x∈[0,1]} |f(x) − x²|`, checking segment endpoints and each segment's tangency
/// point.
pub fn sup_deviation_from_square(f: &PwlFunction) -> f64 {
    let mut best = 0.0f64;
    for w in f.breakpoints().windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let m = (y1 - y0) / (x1 - x0);
        let dev = |x: f64| (y0 + m * (x - x0) - x * x).abs();
        best = best.max(dev(x0)).max(dev(x1));
        let xs = m / 2.0;
        if xs > x0 && xs < x1 {
            best = best.max(dev(xs));
        }
    }
    best
}

/// Number of linear segments of the ideal output.
pub fn ideal_segment_count(p: &ManifoldParams) -> Result<usize, ManifoldError> {
    Ok(ideal_function(p)?.segment_count(COLLINEAR_TOL))
}
