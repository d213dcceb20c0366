//! Weight synthesis for compositional networks.
//!
//! Every hidden layer `l` has four neurons:
//!
//! | idx | role          | pre-activation                       |
//! |-----|---------------|--------------------------------------|
//! | 0   | triangle `t1` | `D_l · W_{l-1}(x)`                   |
//! | 1   | shifted `t2`  | `D_l · (W_{l-1}(x) − a_l)`           |
//! | 2   | accumulator   | `x ± Σ_{n<l} s_n W_n(x) + offset`    |
//! | 3   | bias carrier  | `D_l`                                |
//!
//! with `W_{-1}(x) = x`. Anything that consumes a wave reads `t1` and `t2` in the fixed
//! proportion `1/a : −(1/a + 1/(1−a))`, which rebuilds `D_l · W_l`. The amplitude `D_l` is the
//! running product of the decay factors `d_l = (s_l / s_{l−1})^γ` with `γ =`
//! [`AMPLITUDE_SHARE`], so the accumulator picks up `s_l W_l` through weights of size
//! `s_l / D_l = s_0^γ s_l^{1−γ}`. Half of each ratio lives in the wave amplitudes and half in the
//! accumulator weights: neither the deep triangle signals nor the deep accumulator weights get
//! exponentially small, and no weight grows with depth. The bias carrier feeds `t2` its
//! threshold and shrinks with the same factors through its self-connection. In subtract mode the accumulator carries `offset = Σ s_n`, which keeps it
//! non-negative for any scales; the output bias removes it again.

use crate::dual::{Dual, Real};
use crate::manifold::{ideal_function, ManifoldParams, Mode};

use super::net::{DenseNet, Gradients, Layer, NetError};
use super::{compositional_widths, COMPOSITIONAL_WIDTH};

/// Grid size of the post-synthesis self-check.
pub const SYNTH_CHECK_POINTS: usize = 101;

/// Self-check tolerance, relative to `max(1, sup|ideal|)`.
pub const SYNTH_CHECK_TOL: f64 = 1e-9;

/// Fraction (as an exponent) of each scale ratio `s_l / s_{l−1}` carried by the wave amplitude;
/// the accumulator weights carry the rest.
pub const AMPLITUDE_SHARE: f64 = 0.5;

pub(crate) struct LayerT<T> {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn synthesize_layers<T: Real>(peaks: &[T], scales: &[T], mode: Mode) -> Vec<LayerT<T>> {
    let depth = peaks.len();
    assert!(depth >= 1 && scales.len() == depth, "peaks/scales mismatch");
    let zero = T::cst(0.0);
    let one = T::cst(1.0);
    let sign = T::cst(mode.sign());
    let offset = match mode {
        Mode::Add => zero,
        Mode::Subtract => scales.iter().fold(zero, |acc, &s| acc + s),
    };

    let decay = |l: usize| -> T {
        if l > 0 && scales[l - 1].value() > 0.0 && scales[l].value() > 0.0 {
            (scales[l] / scales[l - 1]).powf(AMPLITUDE_SHARE)
        } else {
            one
        }
    };
    let mut amplitude = one;
    let mut amplitudes = Vec::with_capacity(depth);
    for l in 0..depth {
        amplitude = amplitude * decay(l);
        amplitudes.push(amplitude);
    }
    // Coefficients that turn (t1, t2) of layer l into D_l · W_l.
    let up = |l: usize| one / peaks[l];
    let down = |l: usize| -(one / peaks[l] + one / (one - peaks[l]));
    // Weight that adds s_l W_l to the accumulator per unit of D_l · W_l.
    let gain = |l: usize| scales[l] / amplitudes[l];

    let w4 = COMPOSITIONAL_WIDTH;
    let mut layers = Vec::with_capacity(depth + 1);
    layers.push(LayerT {
        rows: w4,
        cols: 1,
        weights: vec![one, one, one, zero],
        bias: vec![zero, -peaks[0], offset, one],
    });
    for l in 1..depth {
        let d = decay(l);
        let (u, v) = (up(l - 1), down(l - 1));
        let g = sign * gain(l - 1);
        #[rustfmt::skip]
        let weights = vec![
            d * u, d * v, zero, zero,
            d * u, d * v, zero, -(peaks[l] * d),
            g * u, g * v, one,  zero,
            zero,  zero,  zero, d,
        ];
        layers.push(LayerT {
            rows: w4,
            cols: w4,
            weights,
            bias: vec![zero; w4],
        });
    }
    let last = depth - 1;
    let g = sign * gain(last);
    layers.push(LayerT {
        rows: 1,
        cols: w4,
        weights: vec![g * up(last), g * down(last), one, zero],
        bias: vec![-offset],
    });
    layers
}

/// Builds the network without comparing it to the oracle.
pub fn synthesize_unchecked(p: &ManifoldParams) -> DenseNet {
    let layers = synthesize_layers(p.peaks(), p.scales(), p.mode())
        .into_iter()
        .map(|l| Layer {
            rows: l.rows,
            cols: l.cols,
            weights: l.weights,
            bias: l.bias,
        })
        .collect();
    DenseNet::new(compositional_widths(p.depth()), layers)
        .expect("synthesized shapes are consistent")
}

/// Width-4 network whose output equals [`ideal_function`] of `p`, verified on a
/// [`SYNTH_CHECK_POINTS`]-point grid.
pub fn synthesize_compositional(p: &ManifoldParams) -> Result<DenseNet, NetError> {
    let net = synthesize_unchecked(p);
    let ideal = ideal_function(p)?;
    let scale = ideal
        .max_value()
        .abs()
        .max(ideal.min_value().abs())
        .max(1.0);
    let n = SYNTH_CHECK_POINTS - 1;
    let deviation = (0..=n)
        .map(|k| {
            let x = k as f64 / n as f64;
            (net.predict(x) - ideal.eval_unchecked(x)).abs()
        })
        .fold(0.0, f64::max);
    if deviation > SYNTH_CHECK_TOL * scale {
        return Err(NetError::SynthesisMismatch { deviation });
    }
    Ok(net)
}

/// Chain rule through synthesis: for every coordinate `j`, `Σ_w upstream[w] · ∂w/∂coord_j`.
///
/// `build` maps coordinates to `(peaks, scales)`; it is evaluated once per coordinate with that
/// coordinate seeded as a dual variable.
pub fn weight_jacobian_dot<F>(
    coords: &[f64],
    mode: Mode,
    upstream: &Gradients,
    build: F,
) -> Vec<f64>
where
    F: Fn(&[Dual]) -> (Vec<Dual>, Vec<Dual>),
{
    (0..coords.len())
        .map(|j| {
            let seeded: Vec<Dual> = coords
                .iter()
                .enumerate()
                .map(|(k, &c)| Dual::new(c, if k == j { 1.0 } else { 0.0 }))
                .collect();
            let (peaks, scales) = build(&seeded);
            let layers = synthesize_layers(&peaks, &scales, mode);
            let tangents = layers
                .iter()
                .flat_map(|l| l.weights.iter().chain(&l.bias))
                .map(|d| d.eps);
            tangents.zip(&upstream.flat).map(|(t, g)| t * g).sum()
        })
        .collect()
}
