//! Dense ReLU networks with scalar input and output.

mod adam;
mod analysis;
mod init;
mod net;
mod synth;

pub use adam::{Adam, AdamConfig, AdamState};
pub use analysis::{
    bend_budget, dying_relu_report, exact_output_pwl, exact_preactivations, unit_grid,
};
pub use init::{init_kaiming, init_raai, Initializer, Kaiming, Raai};
pub use net::{DenseNet, ForwardTrace, Gradients, Layer, LayerFile, ModelFile, NetError};
pub use synth::{
    synthesize_compositional, synthesize_unchecked, weight_jacobian_dot, AMPLITUDE_SHARE,
    SYNTH_CHECK_POINTS, SYNTH_CHECK_TOL,
};

/// Hidden width of compositional networks: triangle, shifted triangle, accumulator, bias carrier.
pub const COMPOSITIONAL_WIDTH: usize = 4;

/// `[1, 4, …, 4, 1]` with `depth` hidden layers.
pub fn compositional_widths(depth: usize) -> Vec<usize> {
    let mut w = vec![1];
    w.extend(std::iter::repeat_n(COMPOSITIONAL_WIDTH, depth));
    w.push(1);
    w
}
