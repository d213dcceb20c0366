//! Scalar reference implementations, written without the crate's piecewise-linear machinery.

#![allow(dead_code)]

/// `T_a(x)` evaluated pointwise.
pub fn tri(a: f64, x: f64) -> f64 {
    if x <= a {
        x / a
    } else {
        (1.0 - x) / (1.0 - a)
    }
}

/// `W_i(x) = T_{a_i}(…T_{a_0}(x))` by nested evaluation.
pub fn wave(peaks: &[f64], i: usize, x: f64) -> f64 {
    peaks[..=i].iter().fold(x, |y, &a| tri(a, y))
}

/// Scale recurrence, one step at a time, with `tail` standing in for peaks past the end.
pub fn scales(peaks: &[f64], subtract: bool, tail: f64) -> Vec<f64> {
    let peak = |k: usize| if k < peaks.len() { peaks[k] } else { tail };
    let mut s = Vec::with_capacity(peaks.len());
    let first = if subtract { peak(0) } else { 1.0 - peak(0) };
    s.push(first * peak(1));
    for i in 0..peaks.len() - 1 {
        let next = s[i] * (1.0 - peak(i + 1)) * peak(i + 2);
        s.push(next);
    }
    s
}

/// `x ± Σ_{i<upto} s_i W_i(x)`.
pub fn partial(peaks: &[f64], s: &[f64], subtract: bool, upto: usize, x: f64) -> f64 {
    let sign = if subtract { -1.0 } else { 1.0 };
    x + sign * (0..upto).map(|i| s[i] * wave(peaks, i, x)).sum::<f64>()
}

/// `k / (n-1)` for `k = 0..n`.
pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Number of linear pieces of a sampled function, counting slope changes between consecutive
/// grid cells. Exact when every breakpoint sits on a grid point.
pub fn sampled_segments(ys: &[f64], h: f64, tol: f64) -> usize {
    let slopes: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    1 + slopes
        .windows(2)
        .filter(|w| (w[1] - w[0]).abs() > tol * w[0].abs().max(w[1].abs()).max(1.0))
        .count()
}

/// Sum of squares over `n` samples of `(f - g)`, divided by `n`.
pub fn mse(f: impl Fn(f64) -> f64, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (f(x) - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}
