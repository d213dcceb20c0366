//! Exact algebra of continuous piecewise-linear functions on `[0, 1]`.
//!
//! A [`PwlFunction`] is an ordered list of breakpoints `(x, y)` whose first x is 0 and last x
//! is 1. Every operation returns a new, validated function; nothing is evaluated lazily. The
//! representation doubles as the ground-truth oracle for network outputs: any 1-D ReLU net can
//! be pushed through [`PwlFunction::affine_combine`] and [`PwlFunction::relu_clip`] layer by
//! layer to obtain its exact output.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

/// Relative slope difference under which two adjacent segments are considered one.
pub const COLLINEAR_TOL: f64 = 1e-9;

/// Breakpoints closer than this (absolute, in x) are merged, keeping the left value.
pub const X_DEDUP_TOL: f64 = 1e-12;

/// How far a composed inner function may leave `[0, 1]` before it is rejected.
pub const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwlError {
    #[error("peak location {0} is outside the open interval (0, 1)")]
    PeakOutOfRange(f64),
    #[error("x = {0} is outside the domain [0, 1]")]
    OutOfDomain(f64),
    #[error("inner function range [{lo}, {hi}] escapes the outer domain [0, 1]")]
    RangeEscapes { lo: f64, hi: f64 },
    #[error("a piecewise-linear function needs at least two breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("breakpoints must span exactly [0, 1] with strictly increasing x")]
    BadBreakpoints,
    #[error("non-finite breakpoint value")]
    NonFinite,
    #[error("affine combination needs at least one term")]
    EmptyCombination,
}

/// Continuous piecewise-linear function on `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct PwlFunction {
    points: Vec<(f64, f64)>,
}

/// One maximal interval of constant slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeInterval {
    pub x_lo: f64,
    pub x_hi: f64,
    pub slope: f64,
}

/// Derivative of a [`PwlFunction`]: a partition of `[0, 1]` into constant-slope intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeProfile {
    pub intervals: Vec<SlopeInterval>,
}

impl SlopeProfile {
    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().map(|iv| iv.slope)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Slope of the interval containing `x`; at an interior breakpoint the right interval wins.
    pub fn slope_at(&self, x: f64) -> Option<f64> {
        self.intervals
            .iter()
            .find(|iv| x >= iv.x_lo && x < iv.x_hi)
            .or_else(|| self.intervals.last().filter(|iv| x == iv.x_hi))
            .map(|iv| iv.slope)
    }
}

impl fmt::Debug for PwlFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PwlFunction")
            .field("breakpoints", &self.points)
            .finish()
    }
}

fn slopes_match(m1: f64, m2: f64, tol: f64) -> bool {
    // Relative comparison, with unit slope as the floor so that noise around zero slope merges.
    (m1 - m2).abs() <= tol * m1.abs().max(m2.abs()).max(1.0)
}

/// Drops near-duplicate x values (keeping the leftmost point) and merges collinear runs.
fn normalize(mut points: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    if points.len() < 2 {
        return points;
    }
    let last = *points.last().unwrap();
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for p in points.drain(..) {
        match dedup.last() {
            Some(prev) if p.0 - prev.0 <= X_DEDUP_TOL => {}
            _ => dedup.push(p),
        }
    }
    // The right endpoint must stay at exactly x = 1.
    if dedup.last().map(|p| p.0) != Some(last.0) {
        if dedup.len() >= 2 {
            dedup.pop();
        }
        dedup.push(last);
    }
    if dedup.len() < 3 {
        return dedup;
    }

    let mut out: Vec<(f64, f64)> = Vec::with_capacity(dedup.len());
    out.push(dedup[0]);
    for i in 1..dedup.len() - 1 {
        let prev = *out.last().unwrap();
        let cur = dedup[i];
        let next = dedup[i + 1];
        let m1 = (cur.1 - prev.1) / (cur.0 - prev.0);
        let m2 = (next.1 - cur.1) / (next.0 - cur.0);
        if !slopes_match(m1, m2, tol) {
            out.push(cur);
        }
    }
    out.push(*dedup.last().unwrap());
    out
}

impl PwlFunction {
    /// Builds a function from breakpoints, validating the domain and ordering.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PwlError> {
        if points.len() < 2 {
            return Err(PwlError::TooFewBreakpoints(points.len()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PwlError::NonFinite);
        }
        if points[0].0 != 0.0
            || points[points.len() - 1].0 != 1.0
            || points.windows(2).any(|w| w[0].0 >= w[1].0)
        {
            return Err(PwlError::BadBreakpoints);
        }
        Ok(Self { points })
    }

    fn from_normalized(points: Vec<(f64, f64)>) -> Self {
        Self {
            points: normalize(points, COLLINEAR_TOL),
        }
    }

    pub fn identity() -> Self {
        Self {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            points: vec![(0.0, c), (1.0, c)],
        }
    }

    /// The line `y = slope * x + intercept`.
    pub fn line(slope: f64, intercept: f64) -> Self {
        Self {
            points: vec![(0.0, intercept), (1.0, slope + intercept)],
        }
    }

    /// Triangle with value 0 at both ends and peak 1 at `x = a`.
    pub fn triangle(a: f64) -> Result<Self, PwlError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(PwlError::PeakOutOfRange(a));
        }
        Ok(Self {
            points: vec![(0.0, 0.0), (a, 1.0), (1.0, 0.0)],
        })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn min_value(&self) -> f64 {
        self.ys().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.ys().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation between the enclosing breakpoints.
    pub fn eval(&self, x: f64) -> Result<f64, PwlError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(PwlError::OutOfDomain(x));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let pts = &self.points;
        // First index whose x is > target.
        let hi = pts.partition_point(|p| p.0 <= x);
        if hi == 0 {
            return pts[0].1;
        }
        if hi >= pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (x0, y0) = pts[hi - 1];
        let (x1, y1) = pts[hi];
        if x == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Exact composition `outer(inner(x))`.
    ///
    /// The result carries every breakpoint of `inner` plus the preimages under `inner` of the
    /// breakpoint x-values of `outer`.
    pub fn compose(outer: &PwlFunction, inner: &PwlFunction) -> Result<PwlFunction, PwlError> {
        let (lo, hi) = (inner.min_value(), inner.max_value());
        if lo < -RANGE_TOL || hi > 1.0 + RANGE_TOL {
            return Err(PwlError::RangeEscapes { lo, hi });
        }
        let knots = &outer.points;
        let interior = &knots[1..knots.len() - 1];
        let mut out = Vec::with_capacity(inner.points.len() * 2);
        for w in inner.points.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            out.push((x0, outer.eval_unchecked(y0.clamp(0.0, 1.0))));
            if y1 > y0 {
                let start = interior.partition_point(|k| k.0 <= y0);
                for &(u, v) in interior[start..].iter().take_while(|k| k.0 < y1) {
                    out.push((x0 + (u - y0) / (y1 - y0) * (x1 - x0), v));
                }
            } else if y1 < y0 {
                let end = interior.partition_point(|k| k.0 < y0);
                for &(u, v) in interior[..end].iter().rev().take_while(|k| k.0 > y1) {
                    out.push((x0 + (u - y0) / (y1 - y0) * (x1 - x0), v));
                }
            }
        }
        let (xl, yl) = *inner.points.last().unwrap();
        out.push((xl, outer.eval_unchecked(yl.clamp(0.0, 1.0))));
        Ok(Self::from_normalized(out))
    }

    /// `offset + Σ coefficient · f` over the union of all breakpoints.
    pub fn affine_combine(
        terms: &[(f64, &PwlFunction)],
        offset: f64,
    ) -> Result<PwlFunction, PwlError> {
        if terms.is_empty() {
            return Err(PwlError::EmptyCombination);
        }
        let mut xs: Vec<f64> = terms.iter().flat_map(|(_, f)| f.xs()).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        let points: Vec<(f64, f64)> = xs
            .into_iter()
            .map(|x| {
                let y = terms
                    .iter()
                    .fold(offset, |acc, (c, f)| acc + c * f.eval_unchecked(x));
                (x, y)
            })
            .collect();
        if points.iter().any(|p| !p.1.is_finite()) {
            return Err(PwlError::NonFinite);
        }
        Ok(Self::from_normalized(points))
    }

    /// Pointwise `max(f, 0)`, with breakpoints inserted at the zero crossings.
    pub fn relu_clip(&self) -> PwlFunction {
        let mut out = Vec::with_capacity(self.points.len() + 4);
        for w in self.points.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            out.push((x0, y0.max(0.0)));
            if (y0 < 0.0 && y1 > 0.0) || (y0 > 0.0 && y1 < 0.0) {
                let xc = x0 + (-y0) / (y1 - y0) * (x1 - x0);
                out.push((xc, 0.0));
            }
        }
        let (xl, yl) = *self.points.last().unwrap();
        out.push((xl, yl.max(0.0)));
        Self::from_normalized(out)
    }

    /// Number of maximal constant-slope intervals, merging slopes within `collinear_tol`.
    pub fn segment_count(&self, collinear_tol: f64) -> usize {
        normalize(self.points.clone(), collinear_tol).len() - 1
    }

    /// Sup-norm distance; exact because both functions are linear between the union of their
    /// breakpoints.
    pub fn max_abs_diff(&self, other: &PwlFunction) -> f64 {
        let mut best = 0.0f64;
        for &(x, y) in &self.points {
            best = best.max((y - other.eval_unchecked(x)).abs());
        }
        for &(x, y) in &other.points {
            best = best.max((self.eval_unchecked(x) - y).abs());
        }
        best
    }

    pub fn derivative(&self) -> SlopeProfile {
        let intervals = self
            .points
            .windows(2)
            .map(|w| SlopeInterval {
                x_lo: w[0].0,
                x_hi: w[1].0,
                slope: (w[1].1 - w[0].1) / (w[1].0 - w[0].0),
            })
            .collect();
        SlopeProfile { intervals }
    }

    /// x-locations where the function attains `level` at a breakpoint, within `tol`.
    pub fn breakpoints_at_level(&self, level: f64, tol: f64) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| (p.1 - level).abs() <= tol)
            .map(|p| p.0)
            .collect()
    }

    /// Interior breakpoints: the bends of the function.
    pub fn bends(&self) -> Vec<f64> {
        self.points[1..self.points.len() - 1]
            .iter()
            .map(|p| p.0)
            .collect()
    }

    /// Number of strict sign changes of the function over `[0, 1]`.
    pub fn zero_crossings(&self) -> usize {
        let mut last_sign = 0i8;
        let mut crossings = 0;
        for &(_, y) in &self.points {
            let s = if y > 0.0 {
                1
            } else if y < 0.0 {
                -1
            } else {
                0
            };
            if s != 0 {
                if last_sign != 0 && s != last_sign {
                    crossings += 1;
                }
                last_sign = s;
            }
        }
        crossings
    }

    /// Debug dump: `x,y` header then one breakpoint per line, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y")?;
        for &(x, y) in &self.points {
            writeln!(out, "{x:.16e},{y:.16e}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}
