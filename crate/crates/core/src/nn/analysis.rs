use crate::pwl::PwlFunction;

use super::net::DenseNet;

/// `n` evenly spaced points on `[0, 1]`, endpoints included.
pub fn unit_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    let last = (n - 1) as f64;
    (0..n).map(|k| k as f64 / last).collect()
}

/// Exact pre-activation of every neuron, layer by layer, as functions of the input on `[0, 1]`.
pub fn exact_preactivations(net: &DenseNet) -> Vec<Vec<PwlFunction>> {
    let mut inputs = vec![PwlFunction::identity()];
    let last = net.layers().len() - 1;
    let mut all = Vec::with_capacity(net.layers().len());
    for (l, layer) in net.layers().iter().enumerate() {
        let pre: Vec<PwlFunction> = (0..layer.rows)
            .map(|r| {
                let terms: Vec<(f64, &PwlFunction)> = (0..layer.cols)
                    .map(|c| (layer.w(r, c), &inputs[c]))
                    .collect();
                PwlFunction::affine_combine(&terms, layer.bias[r])
                    .expect("finite network parameters give finite breakpoints")
            })
            .collect();
        if l < last {
            inputs = pre.iter().map(PwlFunction::relu_clip).collect();
        }
        all.push(pre);
    }
    all
}

/// The network function on `[0, 1]`, exactly.
pub fn exact_output_pwl(net: &DenseNet) -> PwlFunction {
    exact_preactivations(net)
        .pop()
        .and_then(|mut out| out.pop())
        .expect("network has an output neuron")
}

/// One flag per hidden layer: dead iff every neuron's post-ReLU value is the same at every grid
/// point.
pub fn dying_relu_report(net: &DenseNet, grid: &[f64]) -> Vec<bool> {
    let hidden = net.hidden_depth();
    let mut constant = vec![true; hidden];
    let mut first: Vec<Vec<f64>> = Vec::new();
    for (k, &x) in grid.iter().enumerate() {
        let (_, trace) = net.forward(x);
        if k == 0 {
            first = trace.post[..hidden].to_vec();
            continue;
        }
        for l in 0..hidden {
            if constant[l] && trace.post[l] != first[l] {
                constant[l] = false;
            }
        }
    }
    constant
}

/// Zero crossings of each hidden neuron's pre-activation: how many bends it can contribute.
pub fn bend_budget(net: &DenseNet) -> Vec<Vec<usize>> {
    let pre = exact_preactivations(net);
    let hidden = net.hidden_depth();
    pre[..hidden]
        .iter()
        .map(|layer| layer.iter().map(PwlFunction::zero_crossings).collect())
        .collect()
}
