mod common;

use compnet::manifold::{composed_waves, derive_scales, ideal_function, sup_deviation_from_square};
use compnet::nn::{exact_output_pwl, synthesize_compositional};
use compnet::pwl::COLLINEAR_TOL;
use compnet::{ManifoldParams, Mode, PwlFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn composed_peaks_match_hand_computation() {
    // T_0.25 ∘ T_0.5 hits 1 where T_0.5(x) = 0.25: x = 0.125 and x = 0.875.
    let inner = PwlFunction::triangle(0.5).unwrap();
    let outer = PwlFunction::triangle(0.25).unwrap();
    let w = PwlFunction::compose(&outer, &inner).unwrap();
    let peaks = w.breakpoints_at_level(1.0, 1e-12);
    assert_eq!(peaks.len(), 2);
    assert!((peaks[0] - 0.125).abs() < 1e-15);
    assert!((peaks[1] - 0.875).abs() < 1e-15);
    for x in common::grid(257) {
        let expect = common::tri(0.25, common::tri(0.5, x));
        assert!((w.eval(x).unwrap() - expect).abs() < 1e-14);
    }
}

#[test]
fn fifth_wave_has_32_segments_on_a_dyadic_grid() {
    let peaks = [0.5; 5];
    let xs = common::grid(1025);
    let ys: Vec<f64> = xs.iter().map(|&x| common::wave(&peaks, 4, x)).collect();
    assert_eq!(common::sampled_segments(&ys, 1.0 / 1024.0, 1e-9), 32);
    let w = composed_waves(&peaks).unwrap();
    assert_eq!(w[4].segment_count(COLLINEAR_TOL), 32);
}

#[test]
fn scale_examples_by_hand() {
    let s = derive_scales(&[0.3, 0.6, 0.5], Mode::Subtract, 1.0).unwrap();
    assert!((s[0] - 0.18).abs() < 1e-15);
    assert!((s[1] - 0.036).abs() < 1e-15);
    let s = derive_scales(&[0.5, 0.5], Mode::Add, 1.0).unwrap();
    assert_eq!(s[0], 0.25);
}

#[test]
fn derived_scales_match_scalar_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..200 {
        let depth = rng.random_range(2..=9);
        let peaks: Vec<f64> = (0..depth).map(|_| rng.random_range(0.05..0.95)).collect();
        let subtract = k % 2 == 0;
        let mode = if subtract { Mode::Subtract } else { Mode::Add };
        let got = derive_scales(&peaks, mode, 1.0).unwrap();
        let want = common::scales(&peaks, subtract, 0.5);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-15 * w.max(1e-300), "{g} vs {w}");
        }
    }
}

#[test]
fn ideal_function_matches_nested_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let xs = common::grid(4001);
    for k in 0..40 {
        let depth = rng.random_range(1..=7);
        let peaks: Vec<f64> = (0..depth).map(|_| rng.random_range(0.1..0.9)).collect();
        let s: Vec<f64> = (0..depth).map(|_| rng.random_range(0.0..0.4)).collect();
        let subtract = k % 3 == 0;
        let mode = if subtract { Mode::Subtract } else { Mode::Add };
        let p = ManifoldParams::new(peaks.clone(), s.clone(), mode).unwrap();
        let f = ideal_function(&p).unwrap();
        for &x in &xs {
            let want = common::partial(&peaks, &s, subtract, depth, x);
            assert!((f.eval(x).unwrap() - want).abs() < 1e-12, "x={x}");
        }
    }
}

#[test]
fn square_deviation_from_midpoint_oracle() {
    // Interpolating x² on a uniform grid of spacing h errs by h²/4 at every cell midpoint.
    for depth in 3..=8 {
        let peaks = vec![0.5; depth];
        let s = common::scales(&peaks, true, 0.5);
        let n = 1usize << depth;
        let worst = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                (common::partial(&peaks, &s, true, depth, x) - x * x).abs()
            })
            .fold(0.0, f64::max);
        let want = 0.25f64.powi(depth as i32 + 1);
        assert!((worst - want).abs() < 1e-15, "depth {depth}");
        let p = ManifoldParams::on_manifold(peaks, Mode::Subtract).unwrap();
        let sup = sup_deviation_from_square(&ideal_function(&p).unwrap());
        assert!((sup - want).abs() < 1e-12, "depth {depth}: {sup}");
    }
}

#[test]
fn synthesized_net_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..30 {
        let depth = rng.random_range(2..=6);
        let peaks: Vec<f64> = (0..depth).map(|_| rng.random_range(0.2..0.8)).collect();
        let subtract = k % 2 == 1;
        let mode = if subtract { Mode::Subtract } else { Mode::Add };
        let p = ManifoldParams::on_manifold(peaks.clone(), mode).unwrap();
        let net = synthesize_compositional(&p).unwrap();
        let f = exact_output_pwl(&net);
        for _ in 0..200 {
            let x: f64 = rng.random_range(0.0..=1.0);
            let want = common::partial(&peaks, p.scales(), subtract, depth, x);
            assert!((net.predict(x) - want).abs() < 1e-12);
            assert!((f.eval(x).unwrap() - want).abs() < 1e-12);
        }
    }
}
