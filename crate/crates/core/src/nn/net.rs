use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("widths must have at least two entries and start and end with 1, got {0:?}")]
    BadWidths(Vec<usize>),
    #[error("layer {layer}: expected {expected} {what}, got {got}")]
    Shape {
        layer: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite parameter in layer {0}")]
    NonFinite(usize),
    #[error("synthesized network deviates from the ideal function by {deviation:e}")]
    SynthesisMismatch { deviation: f64 },
    #[error(transparent)]
    Manifold(#[from] crate::manifold::ManifoldError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One affine map; `weights` is row-major `rows × cols` (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn w(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    #[inline]
    pub fn w_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.weights[r * self.cols + c]
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            *o = row
                .iter()
                .zip(input)
                .fold(self.bias[r], |acc, (w, x)| acc + w * x);
        }
    }
}

/// Plain ReLU network: affine + ReLU on every hidden layer, affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-layer values of one forward pass; `pre[l]` is before ReLU, `post[l]` after (the output
/// layer has `post == pre`).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

/// Gradients laid out flat in parameter order: layer 0 weights, layer 0 bias, layer 1 weights, …
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub flat: Vec<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.flat.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn check_widths(widths: &[usize]) -> Result<(), NetError> {
    if widths.len() < 2 || widths[0] != 1 || widths[widths.len() - 1] != 1 || widths.contains(&0) {
        return Err(NetError::BadWidths(widths.to_vec()));
    }
    Ok(())
}

impl DenseNet {
    pub fn new(widths: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NetError> {
        check_widths(&widths)?;
        if layers.len() != widths.len() - 1 {
            return Err(NetError::Shape {
                layer: layers.len(),
                what: "layers",
                expected: widths.len() - 1,
                got: layers.len(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            let (rows, cols) = (widths[l + 1], widths[l]);
            if layer.rows != rows || layer.cols != cols || layer.weights.len() != rows * cols {
                return Err(NetError::Shape {
                    layer: l,
                    what: "weights",
                    expected: rows * cols,
                    got: layer.weights.len(),
                });
            }
            if layer.bias.len() != rows {
                return Err(NetError::Shape {
                    layer: l,
                    what: "biases",
                    expected: rows,
                    got: layer.bias.len(),
                });
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(NetError::NonFinite(l));
            }
        }
        Ok(Self { widths, layers })
    }

    pub fn zeros(widths: Vec<usize>) -> Result<Self, NetError> {
        check_widths(&widths)?;
        let layers = widths
            .windows(2)
            .map(|w| Layer::zeros(w[1], w[0]))
            .collect();
        Self::new(widths, layers)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            v.extend_from_slice(&layer.weights);
            v.extend_from_slice(&layer.bias);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut off = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    /// Visits every parameter in flat order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                f(idx, p);
                idx += 1;
            }
        }
    }

    fn max_width(&self) -> usize {
        *self.widths.iter().max().unwrap()
    }

    /// Scalar output only.
    pub fn predict(&self, x: f64) -> f64 {
        let w = self.max_width();
        let mut a = vec![0.0; w];
        let mut b = vec![0.0; w];
        a[0] = x;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(&a[..layer.cols], &mut b[..layer.rows]);
            if l < last {
                for v in &mut b[..layer.rows] {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut a, &mut b);
        }
        a[0]
    }

    pub fn forward(&self, x: f64) -> (f64, ForwardTrace) {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let input = [x];
        for (l, layer) in self.layers.iter().enumerate() {
            let inp: &[f64] = if l == 0 { &input } else { &post[l - 1] };
            let mut z = vec![0.0; layer.rows];
            layer.apply(inp, &mut z);
            let h = if l < last {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(h);
        }
        (post[last][0], ForwardTrace { pre, post })
    }

    pub fn mse(&self, xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let d = self.predict(x) - y;
                d * d
            })
            .sum::<f64>()
            / n
    }

    /// Mean squared error over the batch and its exact gradient. ReLU'(0) is taken as 0.
    pub fn backward(&self, xs: &[f64], ys: &[f64]) -> (f64, Gradients) {
        assert!(!xs.is_empty(), "empty batch");
        assert_eq!(xs.len(), ys.len(), "batch length mismatch");
        let n = xs.len() as f64;
        let nl = self.layers.len();
        let wmax = self.max_width();

        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |off, layer| {
                let here = *off;
                *off += layer.param_count();
                Some(here)
            })
            .collect();
        let mut grad = vec![0.0; self.param_count()];

        // acts[0] is the input; acts[l + 1] is the post-activation of layer l.
        let mut acts = vec![vec![0.0; wmax]; nl + 1];
        let mut pres = vec![vec![0.0; wmax]; nl];
        let mut delta = vec![0.0; wmax];
        let mut delta_prev = vec![0.0; wmax];
        let mut loss = 0.0;

        for (&x, &y) in xs.iter().zip(ys) {
            acts[0][0] = x;
            for (l, layer) in self.layers.iter().enumerate() {
                let (before, after) = acts.split_at_mut(l + 1);
                let z = &mut pres[l][..layer.rows];
                layer.apply(&before[l][..layer.cols], z);
                let h = &mut after[0][..layer.rows];
                if l + 1 < nl {
                    for (hv, zv) in h.iter_mut().zip(z.iter()) {
                        *hv = zv.max(0.0);
                    }
                } else {
                    h.copy_from_slice(z);
                }
            }
            let out = acts[nl][0];
            let diff = out - y;
            loss += diff * diff;

            delta[0] = 2.0 * diff / n;
            for l in (0..nl).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let off = offsets[l];
                for r in 0..layer.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[off + r * layer.cols..off + (r + 1) * layer.cols];
                    for (g, a) in row.iter_mut().zip(&input[..layer.cols]) {
                        *g += d * a;
                    }
                    grad[off + layer.weights.len() + r] += d;
                }
                if l == 0 {
                    break;
                }
                for c in 0..layer.cols {
                    let mut s = 0.0;
                    for r in 0..layer.rows {
                        s += layer.weights[r * layer.cols + c] * delta[r];
                    }
                    delta_prev[c] = if pres[l - 1][c] > 0.0 { s } else { 0.0 };
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
        (loss / n, Gradients { flat: grad })
    }
}

/// On-disk model: `{"widths":[...],"layers":[{"w":[[...]],"b":[...]}],"meta":{...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub widths: Vec<usize>,
    pub layers: Vec<LayerFile>,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ModelFile {
    pub fn from_net(net: &DenseNet, meta: serde_json::Map<String, serde_json::Value>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|layer| LayerFile {
                w: layer
                    .weights
                    .chunks(layer.cols)
                    .map(<[f64]>::to_vec)
                    .collect(),
                b: layer.bias.clone(),
            })
            .collect();
        Self {
            widths: net.widths.clone(),
            layers,
            meta,
        }
    }

    pub fn to_net(&self) -> Result<DenseNet, NetError> {
        check_widths(&self.widths)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lf) in self.layers.iter().enumerate() {
            let cols = lf.w.first().map_or(0, Vec::len);
            if lf.w.iter().any(|row| row.len() != cols) {
                return Err(NetError::Shape {
                    layer: l,
                    what: "columns per row",
                    expected: cols,
                    got: lf.w.iter().map(Vec::len).find(|&c| c != cols).unwrap_or(0),
                });
            }
            layers.push(Layer {
                rows: lf.w.len(),
                cols,
                weights: lf.w.concat(),
                bias: lf.b.clone(),
            });
        }
        DenseNet::new(self.widths.clone(), layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self, NetError> {
        Ok(serde_json::from_str(s)?)
    }
}
