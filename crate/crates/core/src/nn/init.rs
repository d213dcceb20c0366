//! Baseline random initializers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Uniform};

use super::net::{DenseNet, Layer, NetError};

/// Fills a network of the given widths from a seeded generator.
pub trait Initializer {
    fn name(&self) -> &'static str;

    fn init_layer(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Layer;

    fn build(&self, widths: &[usize], seed: u64) -> Result<DenseNet, NetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| self.init_layer(w[1], w[0], &mut rng))
            .collect();
        DenseNet::new(widths.to_vec(), layers)
    }
}

/// Default linear-layer scheme: weights and biases uniform on `±1/√fan_in`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kaiming;

impl Initializer for Kaiming {
    fn name(&self) -> &'static str {
        "kaiming"
    }

    fn init_layer(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Layer {
        let bound = (1.0 / cols as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Layer {
            rows,
            cols,
            weights: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
            bias: (0..rows).map(|_| dist.sample(rng)).collect(),
        }
    }
}

/// Randomized asymmetric, anti-correlated initialization.
///
/// Each neuron's incoming weights and bias are drawn from `N(0, σ²)` with `σ² = 1/(fan_in+1)`;
/// the weights are then centred (and rescaled back to variance `σ²`) so that they are
/// negatively correlated. Finally one entry chosen uniformly among the `fan_in + 1` weights and
/// bias is replaced by a positive `Beta(2, 1)` draw, so that every neuron is active somewhere
/// on non-negative inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Raai;

impl Initializer for Raai {
    fn name(&self) -> &'static str {
        "raai"
    }

    fn init_layer(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Layer {
        let sigma = (1.0 / (cols as f64 + 1.0)).sqrt();
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let beta = Beta::new(2.0, 1.0).expect("valid beta shape");
        let mut layer = Layer::zeros(rows, cols);
        for r in 0..rows {
            let mut row: Vec<f64> = (0..cols).map(|_| normal.sample(rng)).collect();
            if cols > 1 {
                let mean = row.iter().sum::<f64>() / cols as f64;
                let rescale = (cols as f64 / (cols as f64 - 1.0)).sqrt();
                for w in &mut row {
                    *w = (*w - mean) * rescale;
                }
            }
            let mut bias = normal.sample(rng);
            let k = rng.random_range(0..=cols);
            let positive: f64 = beta.sample(rng);
            if k == cols {
                bias = positive;
            } else {
                row[k] = positive;
            }
            layer.weights[r * cols..(r + 1) * cols].copy_from_slice(&row);
            layer.bias[r] = bias;
        }
        layer
    }
}

pub fn init_kaiming(widths: &[usize], seed: u64) -> Result<DenseNet, NetError> {
    Kaiming.build(widths, seed)
}

pub fn init_raai(widths: &[usize], seed: u64) -> Result<DenseNet, NetError> {
    Raai.build(widths, seed)
}
