use compnet::manifold::{is_on_differentiable_manifold, Mode};
use compnet::nn::{
    compositional_widths, dying_relu_report, exact_output_pwl, init_kaiming,
    synthesize_compositional,
};
use compnet::pwl::COLLINEAR_TOL;
use compnet::trainer::{
    make_dataset, run_pipeline, shared_start, stage1_manifold_train,
    stage1_manifold_train_observed, stage2_finetune, Regime, TargetFunction, TrainConfig,
};

fn cfg(regime: Regime, seed: u64) -> TrainConfig {
    TrainConfig {
        regime,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn square_is_recovered_on_the_manifold() {
    let target = TargetFunction::Square;
    let p0 = shared_start(4, 5, target.mode(), 0.5).unwrap();
    let c = TrainConfig {
        epochs_stage1: 400,
        ..cfg(Regime::ManifoldEnforced, 4)
    };
    let out = stage1_manifold_train(&p0, &make_dataset(&target), &c).unwrap();
    let final_mse = synthesize_compositional(&out.params)
        .unwrap()
        .mse(&make_dataset(&target).xs, &make_dataset(&target).ys);
    assert!(final_mse <= 1e-7, "mse {final_mse:e}");
    for a in out.params.peaks() {
        assert!((a - 0.5).abs() < 0.02, "peaks {:?}", out.params.peaks());
    }
}

#[test]
fn enforced_stage1_stays_on_manifold_and_keeps_all_segments() {
    let target = TargetFunction::Cube;
    let data = make_dataset(&target);
    let p0 = shared_start(9, 5, target.mode(), 0.5).unwrap();
    let mut epochs = 0;
    let out =
        stage1_manifold_train_observed(&p0, &data, &cfg(Regime::ManifoldEnforced, 9), |e, p, _| {
            if e == 0 {
                // logit round trip only costs a few ulps
                for (a, b) in p
                    .peaks()
                    .iter()
                    .zip(p0.peaks())
                    .chain(p.scales().iter().zip(p0.scales()))
                {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-3));
                }
            }
            assert!(is_on_differentiable_manifold(p, 1e-9), "epoch {e}");
            let net = synthesize_compositional(p).unwrap();
            assert_eq!(
                exact_output_pwl(&net).segment_count(COLLINEAR_TOL),
                32,
                "epoch {e}"
            );
            epochs += 1;
        })
        .unwrap();
    assert_eq!(epochs, 100);
    assert!(out.segment_log.iter().all(|&(_, c)| c == 32));
}

#[test]
fn stage1_descends_from_the_shared_start() {
    let target = TargetFunction::Cube;
    let data = make_dataset(&target);
    for seed in 0..20 {
        for regime in [Regime::ManifoldEnforced, Regime::ManifoldFree] {
            let p0 = shared_start(seed, 5, Mode::Subtract, 0.5).unwrap();
            let out = stage1_manifold_train(&p0, &data, &cfg(regime, seed)).unwrap();
            let end = synthesize_compositional(&out.params)
                .unwrap()
                .mse(&data.xs, &data.ys);
            assert!(
                end < out.trace[0],
                "seed {seed} {regime}: {end:e} vs {:e}",
                out.trace[0]
            );
        }
    }
}

#[test]
fn stage2_improves_on_pretrained_cube() {
    let target = TargetFunction::Cube;
    let data = make_dataset(&target);
    let c = cfg(Regime::ManifoldEnforced, 2);
    let p0 = shared_start(2, 5, Mode::Subtract, 0.5).unwrap();
    let s1 = stage1_manifold_train(&p0, &data, &c).unwrap();
    let net = synthesize_compositional(&s1.params).unwrap();
    let before = net.mse(&data.xs, &data.ys);
    let s2 = stage2_finetune(&net, &data, &c, c.epochs_stage2).unwrap();
    assert!(s2.final_mse < before);
    assert_eq!(s2.trace[0], before);
}

#[test]
fn dead_network_stays_a_line() {
    let mut net = init_kaiming(&compositional_widths(5), 1).unwrap();
    let hidden = net.hidden_depth();
    for layer in &mut net.layers_mut()[..hidden] {
        layer.bias.iter_mut().for_each(|b| *b = -5.0);
    }
    let data = make_dataset(&TargetFunction::Cube);
    assert!(dying_relu_report(&net, &data.xs).iter().all(|&d| d));
    let out = stage2_finetune(&net, &data, &cfg(Regime::Default, 1), 300).unwrap();
    assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.segment_log.iter().all(|&(_, c)| c == 1));
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let net = init_kaiming(&compositional_widths(3), 5).unwrap();
    let c = TrainConfig {
        lr: 0.0,
        ..cfg(Regime::Default, 5)
    };
    let out = stage2_finetune(&net, &make_dataset(&TargetFunction::Tanh3x), &c, 50).unwrap();
    assert_eq!(out.net, net);
    assert!(out.trace.iter().all(|&v| v == out.trace[0]));
}

#[test]
fn runs_are_deterministic() {
    for regime in Regime::ALL {
        let a = run_pipeline(&TargetFunction::QuarterSine, &cfg(regime, 7)).unwrap();
        let b = run_pipeline(&TargetFunction::QuarterSine, &cfg(regime, 7)).unwrap();
        assert_eq!(
            serde_json::to_string(&a.result).unwrap(),
            serde_json::to_string(&b.result).unwrap()
        );
        assert_eq!(a.model, b.model);
    }
}

#[test]
fn manifold_regimes_share_their_start() {
    let target = TargetFunction::Tanh3x;
    let p0 = shared_start(11, 5, target.mode(), 0.5).unwrap();
    assert_eq!(p0, shared_start(11, 5, target.mode(), 0.5).unwrap());
    assert_ne!(p0, shared_start(12, 5, target.mode(), 0.5).unwrap());
    assert!(p0.peaks().iter().all(|a| (0.2..0.8).contains(a)));
    let no_opt = run_pipeline(&target, &cfg(Regime::NoOptimization, 11)).unwrap();
    assert_eq!(no_opt.start_params.as_ref(), Some(&p0));
    for regime in [Regime::ManifoldFree, Regime::ManifoldEnforced] {
        let c = TrainConfig {
            epochs_stage1: 0,
            ..cfg(regime, 11)
        };
        let out = run_pipeline(&target, &c).unwrap();
        assert_eq!(out.start_params.as_ref(), Some(&p0));
    }
}

#[test]
fn run_result_bookkeeping() {
    let out = run_pipeline(&TargetFunction::Cube, &cfg(Regime::ManifoldEnforced, 3)).unwrap();
    let r = &out.result;
    assert_eq!(r.mse_trace.len(), 1000);
    assert_eq!(r.stage_transition_epoch, Some(100));
    assert!(r.best_mse <= r.mse_trace[0]);
    assert!(r.best_mse <= r.final_mse);
    assert!(r.final_segments >= 1);
    assert_eq!(r.dead_layers, vec![false; 5]);
    assert_eq!(r.segment_log.last().unwrap().0, 1000);
    let data = make_dataset(&TargetFunction::Cube);
    assert_eq!(r.final_mse, out.model.mse(&data.xs, &data.ys));
    let default = run_pipeline(&TargetFunction::Cube, &cfg(Regime::Default, 3)).unwrap();
    assert_eq!(default.result.stage_transition_epoch, None);
    assert_eq!(default.result.mse_trace.len(), 1000);
}

#[test]
fn custom_samples_train_like_builtins() {
    let samples = compnet::PwlFunction::new(vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)]).unwrap();
    let target = TargetFunction::CustomSamples(samples);
    assert_eq!(target.mode(), Mode::Subtract);
    let c = TrainConfig {
        epochs_stage1: 20,
        epochs_stage2: 20,
        depth: 3,
        ..cfg(Regime::ManifoldEnforced, 0)
    };
    let out = run_pipeline(&target, &c).unwrap();
    assert!(out.result.final_mse < out.result.mse_trace[0]);
}
