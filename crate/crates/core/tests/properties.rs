mod common;

use compnet::manifold::{
    composed_waves, convexity_check, derive_scales, ideal_function, is_on_differentiable_manifold,
    scale_ratio_bound,
};
use compnet::nn::{exact_output_pwl, synthesize_compositional, unit_grid};
use compnet::pwl::COLLINEAR_TOL;
use compnet::{ManifoldParams, Mode, PwlFunction};
use proptest::prelude::*;

fn peaks(
    range: std::ops::Range<f64>,
    len: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(range, len)
}

fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Add), Just(Mode::Subtract)]
}

fn pwl() -> impl Strategy<Value = PwlFunction> {
    (
        prop::collection::vec((0.0..1.0f64, -3.0..3.0f64), 0..12),
        -3.0..3.0f64,
        -3.0..3.0f64,
    )
        .prop_map(|(inner, y0, y1)| {
            let mut pts = vec![(0.0, y0), (1.0, y1)];
            pts.extend(inner);
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
            if pts.last().unwrap().0 != 1.0 {
                pts.push((1.0, y1));
            }
            PwlFunction::new(pts).unwrap()
        })
}

proptest! {
    #[test]
    fn composition_is_pointwise_exact(a in 0.01..0.99f64, b in 0.01..0.99f64, x in 0.0..=1.0f64) {
        let w = PwlFunction::compose(&PwlFunction::triangle(b).unwrap(), &PwlFunction::triangle(a).unwrap()).unwrap();
        prop_assert!((w.eval(x).unwrap() - common::tri(b, common::tri(a, x))).abs() <= 1e-12);
    }

    #[test]
    fn each_composition_doubles_segments(ps in peaks(0.05..0.95, 1..=8)) {
        let waves = composed_waves(&ps).unwrap();
        for (i, w) in waves.iter().enumerate() {
            prop_assert_eq!(w.segment_count(COLLINEAR_TOL), 1 << (i + 1));
        }
    }

    #[test]
    fn relu_is_idempotent_and_pointwise(f in pwl(), x in 0.0..=1.0f64) {
        let r = f.relu_clip();
        prop_assert_eq!(r.relu_clip(), r.clone());
        prop_assert!((r.eval(x).unwrap() - f.eval(x).unwrap().max(0.0)).abs() <= 1e-12);
    }

    #[test]
    fn affine_combination_is_linear(f in pwl(), g in pwl(), c1 in -2.0..2.0f64, c2 in -2.0..2.0f64, b in -1.0..1.0f64, x in 0.0..=1.0f64) {
        let h = PwlFunction::affine_combine(&[(c1, &f), (c2, &g)], b).unwrap();
        let want = c1 * f.eval(x).unwrap() + c2 * g.eval(x).unwrap() + b;
        prop_assert!((h.eval(x).unwrap() - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn derived_scales_lie_on_manifold(ps in peaks(0.1..0.9, 2..=8), m in mode()) {
        let p = ManifoldParams::on_manifold(ps, m).unwrap();
        prop_assert!(is_on_differentiable_manifold(&p, 1e-12));
        prop_assert!(p.scales().iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn deviation_is_homogeneous_in_base_scale(ps in peaks(0.1..0.9, 2..=6), m in mode(), c in 0.1..4.0f64) {
        let unit = ManifoldParams::on_manifold(ps.clone(), m).unwrap();
        let scaled = ManifoldParams::new(ps.clone(), derive_scales(&ps, m, c).unwrap(), m).unwrap();
        let (f, g) = (ideal_function(&unit).unwrap(), ideal_function(&scaled).unwrap());
        for x in unit_grid(101) {
            let d1 = f.eval(x).unwrap() - x;
            let dc = g.eval(x).unwrap() - x;
            prop_assert!((dc - c * d1).abs() <= 1e-12);
        }
    }

    #[test]
    fn synthesis_keeps_two_to_the_depth_segments(ps in peaks(0.1..0.9, 1..=8), m in mode()) {
        let p = if ps.len() >= 2 {
            ManifoldParams::on_manifold(ps.clone(), m).unwrap()
        } else {
            ManifoldParams::new(ps.clone(), vec![0.2], m).unwrap()
        };
        let net = synthesize_compositional(&p).unwrap();
        prop_assert_eq!(exact_output_pwl(&net).segment_count(COLLINEAR_TOL), 1 << ps.len());
    }

    #[test]
    fn hidden_activations_stay_in_zero_two(ps in peaks(0.1..0.9, 2..=6), m in mode()) {
        let net = synthesize_compositional(&ManifoldParams::on_manifold(ps, m).unwrap()).unwrap();
        for x in unit_grid(201) {
            let (_, trace) = net.forward(x);
            for layer in &trace.post[..net.hidden_depth()] {
                prop_assert!(layer.iter().all(|&v| (0.0..=2.0).contains(&v)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scale_ratio_never_exceeds_a_quarter(ps in peaks(0.1..0.9, 3..=8), m in mode()) {
        let p = ManifoldParams::on_manifold(ps, m).unwrap();
        prop_assert!(scale_ratio_bound(&p).unwrap() <= 0.25);
    }

    #[test]
    fn slopes_are_monotone_per_mode(ps in peaks(0.1..0.9, 2..=8), m in mode()) {
        let p = ManifoldParams::on_manifold(ps, m).unwrap();
        prop_assert!(convexity_check(&ideal_function(&p).unwrap(), m));
    }
}
