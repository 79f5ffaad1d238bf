use vtalign::inspect::{overlay_difference, synth_pair, synthetic_scene, SynthOptions};
use vtalign::pipeline::align_moving;
use vtalign::{register, Error, RegistrationConfig, TransformKind, TransformParams};

#[test]
fn noiseless_pair_aligns_to_a_near_zero_difference() {
    let src = synthetic_scene(128, 128, 3);
    let pair = synth_pair(&src, &TransformParams::similarity(0.03, 0.98, -3.0, 2.5), &SynthOptions::default()).unwrap();
    let r = register(&pair.visual, &pair.thermal, &RegistrationConfig::default()).unwrap();
    let aligned = align_moving(&pair.visual, &pair.thermal, &r.matrix);
    // the frames share content away from the border, where the warp had no source data
    let (f, a) = (pair.visual.crop(16, 16, 96, 96).unwrap(), aligned.crop(16, 16, 96, 96).unwrap());
    let diff = overlay_difference(&f, &a).unwrap();
    let mean = diff.data().iter().sum::<f64>() / diff.len() as f64;
    assert!(mean < 2.0, "mean difference {mean}");
}

#[test]
fn affine_recovers_anisotropic_scale() {
    let src = synthetic_scene(128, 128, 5);
    let truth = TransformParams::affine(0.0, 1.03, 0.98, 0.0, 0.0, 2.0, -1.0);
    let pair = synth_pair(&src, &truth, &SynthOptions { gamma: 0.6, ..SynthOptions::default() }).unwrap();
    let cfg = RegistrationConfig { kind: TransformKind::Affine, ..RegistrationConfig::default() };
    let mut cfg = cfg;
    cfg.evo.max_iterations = 800;
    let r = register(&pair.visual, &pair.thermal, &cfg).unwrap();
    let v = &r.params.values;
    assert!((v[1] - 1.03).abs() < 0.01 && (v[2] - 0.98).abs() < 0.01, "{v:?}");
    assert!((v[5] - 2.0).abs() < 0.5 && (v[6] + 1.0).abs() < 0.5, "{v:?}");
}

#[test]
fn starting_guess_is_used() {
    let src = synthetic_scene(96, 96, 6);
    let truth = TransformParams::similarity(0.0, 1.0, 12.0, 0.0);
    let pair = synth_pair(&src, &truth, &SynthOptions::default()).unwrap();
    let cfg = RegistrationConfig {
        initial_params: Some(TransformParams::similarity(0.0, 1.0, 11.0, 0.5)),
        ..RegistrationConfig::default()
    };
    let r = register(&pair.visual, &pair.thermal, &cfg).unwrap();
    let (tx, ty) = r.params.translation();
    assert!((tx - 12.0).abs() < 0.3 && ty.abs() < 0.3, "{tx} {ty}");
}

#[test]
fn pyramid_reports_every_level() {
    let src = synthetic_scene(128, 128, 7);
    let pair = synth_pair(&src, &TransformParams::similarity(0.02, 1.0, 3.0, 3.0), &SynthOptions::default()).unwrap();
    let mut cfg = RegistrationConfig { pyramid_levels: 2, ..RegistrationConfig::default() };
    cfg.evo.max_iterations = 100;
    let r = register(&pair.visual, &pair.thermal, &cfg).unwrap();
    let sizes: Vec<_> = r.levels.iter().map(|l| (l.level, l.width)).collect();
    assert_eq!(sizes, [(2, 32), (1, 64), (0, 128)]);
    assert_eq!(r.iterations, r.levels.iter().map(|l| l.iterations).sum::<usize>());
}

#[test]
fn reruns_are_bitwise_identical() {
    let src = synthetic_scene(96, 96, 8);
    let pair = synth_pair(&src, &TransformParams::similarity(0.01, 1.0, 1.0, 1.0), &SynthOptions { noise_sigma: 1.0, ..SynthOptions::default() }).unwrap();
    let mut cfg = RegistrationConfig::default();
    cfg.evo.seed = 99;
    let a = register(&pair.visual, &pair.thermal, &cfg).unwrap();
    let b = register(&pair.visual, &pair.thermal, &cfg).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.params.values), bits(&b.params.values));
    assert_eq!(a.final_cost.to_bits(), b.final_cost.to_bits());
}

#[test]
fn far_start_is_rejected() {
    let img = synthetic_scene(64, 64, 9);
    let cfg = RegistrationConfig {
        initial_params: Some(TransformParams::similarity(0.0, 1.0, 500.0, 0.0)),
        ..RegistrationConfig::default()
    };
    assert!(matches!(register(&img, &img, &cfg), Err(Error::InvalidStart(_))));
}
