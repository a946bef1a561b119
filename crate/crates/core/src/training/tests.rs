use std::sync::mpsc;

use seco_inr_oracles::SplitMix64;

use super::*;
use crate::models::{Architecture, ModelKind};
use crate::phantom::{render, standard_suite};

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).get(0, 0)
}

fn column(values: &[f64]) -> Tensor {
    Tensor::new(values.len(), 1, values.to_vec()).unwrap()
}

fn no_extras() -> LossConfig {
    LossConfig {
        beta: 0.0,
        lambda_neg: 0.0,
        ..LossConfig::default()
    }
}

#[test]
fn plain_mse_when_extra_terms_are_off() {
    let mut rng = SplitMix64(3);
    let pred = rng.vec(16, 0.0, 1.0);
    let target = rng.vec(16, 0.0, 1.0);
    let mut tape = Tape::new();
    let p = tape.constant(column(&pred));
    let t = tape.constant(column(&target));
    let classes = ClassTerms {
        predicted: tape.constant(Tensor::filled(16, 2, 0.5)),
        truth: tape.constant(Tensor::from_fn(16, 2, |_, c| (c == 0) as u8 as f64)),
    };
    let act = ActivationVars {
        p: tape.constant(Tensor::filled(16, 2, -1.0)),
        q: tape.constant(Tensor::ones(16, 2)),
        r: tape.constant(Tensor::zeros(16, 2)),
        s: tape.constant(Tensor::zeros(16, 2)),
    };
    let terms = compute_loss(&mut tape, p, t, Some(classes), Some(&act), &no_extras()).unwrap();
    let mse: f64 = pred.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 16.0;
    assert!((scalar(&tape, terms.total) - mse).abs() < 1e-12);
    assert!(terms.ce > 0.0 && terms.penalty > 0.0);
}

#[test]
fn constant_offset_gives_its_square() {
    let mut tape = Tape::new();
    let p = tape.constant(column(&[0.5; 9]));
    let t = tape.constant(column(&[0.25; 9]));
    let terms = compute_loss(&mut tape, p, t, None, None, &no_extras()).unwrap();
    assert!((scalar(&tape, terms.total) - 0.0625).abs() < 1e-15);
}

#[test]
fn perfect_prediction_costs_almost_nothing() {
    let n = 6;
    let labels = [0usize, 1, 2, 1, 0, 2];
    let one_hot = Tensor::from_fn(n, 3, |r, c| (labels[r] == c) as u8 as f64);
    let mut tape = Tape::new();
    let p = tape.constant(column(&[0.3; 6]));
    let t = tape.constant(column(&[0.3; 6]));
    let classes = ClassTerms {
        predicted: tape.constant(one_hot.clone()),
        truth: tape.constant(one_hot),
    };
    let act = ActivationVars {
        p: tape.constant(Tensor::ones(n, 2)),
        q: tape.constant(Tensor::ones(n, 2)),
        r: tape.constant(Tensor::zeros(n, 2)),
        s: tape.constant(Tensor::zeros(n, 2)),
    };
    let terms = compute_loss(&mut tape, p, t, Some(classes), Some(&act), &LossConfig::default()).unwrap();
    // −log(1 + ε) per coordinate.
    assert!(scalar(&tape, terms.total).abs() < 2.0 * LOG_EPSILON);
    assert_eq!(terms.penalty, 0.0);
}

#[test]
fn uniform_prediction_costs_ln_h() {
    let n = 5;
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::zeros(n, 1));
    let t = tape.constant(Tensor::zeros(n, 1));
    let classes = ClassTerms {
        predicted: tape.constant(Tensor::filled(n, 4, 0.25)),
        truth: tape.constant(Tensor::from_fn(n, 4, |r, c| (r % 4 == c) as u8 as f64)),
    };
    let terms = compute_loss(&mut tape, p, t, Some(classes), None, &LossConfig::default()).unwrap();
    assert!((terms.ce - 4f64.ln()).abs() < 1e-10);
    assert!((scalar(&tape, terms.total) - 4f64.ln()).abs() < 1e-10);
}

#[test]
fn penalty_is_the_mean_hinge_of_each_component() {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::zeros(2, 1));
    let act = ActivationVars {
        p: tape.constant(Tensor::new(2, 1, vec![-0.5, 0.5]).unwrap()),
        q: tape.constant(Tensor::new(2, 1, vec![-1.0, -1.0]).unwrap()),
        r: tape.constant(Tensor::zeros(2, 1)),
        s: tape.constant(Tensor::new(2, 1, vec![2.0, -0.2]).unwrap()),
    };
    let cfg = LossConfig {
        beta: 0.0,
        lambda_neg: 2.0,
        ..LossConfig::default()
    };
    let terms = compute_loss(&mut tape, p, p, None, Some(&act), &cfg).unwrap();
    assert!((terms.penalty - (0.25 + 1.0 + 0.0 + 0.1)).abs() < 1e-15);
    assert!((scalar(&tape, terms.total) - 2.7).abs() < 1e-14);
}

#[test]
fn row_mismatch_is_a_contract_error() {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::zeros(3, 1));
    let t = tape.constant(Tensor::zeros(4, 1));
    assert!(matches!(
        compute_loss(&mut tape, p, t, None, None, &LossConfig::default()),
        Err(Error::Contract(_))
    ));
    let classes = ClassTerms {
        predicted: tape.constant(Tensor::filled(2, 2, 0.5)),
        truth: tape.constant(Tensor::filled(2, 2, 0.5)),
    };
    assert!(compute_loss(&mut tape, p, p, Some(classes), None, &LossConfig::default()).is_err());
}

#[test]
fn loss_config_validation() {
    assert!(LossConfig::default().validate().is_ok());
    for bad in [
        LossConfig { beta: -1.0, ..LossConfig::default() },
        LossConfig { lambda_neg: -0.1, ..LossConfig::default() },
        LossConfig { lr0: 0.0, ..LossConfig::default() },
        LossConfig { gamma: 0.0, ..LossConfig::default() },
        LossConfig { gamma: 1.5, ..LossConfig::default() },
        LossConfig { step_interval: Some(0), ..LossConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Validation(_))), "{bad:?}");
    }
}

#[test]
fn schedule() {
    let cfg = LossConfig::default();
    assert_eq!(lr_at(0, &cfg), 1e-4);
    assert!((lr_at(cfg.epochs - 1, &cfg) - 1e-6).abs() < 1e-18);
    assert!((lr_at(334, &cfg) - 1e-5).abs() < 1e-18);
    let flat = LossConfig { gamma: 1.0, ..cfg.clone() };
    assert!((0..cfg.epochs).all(|e| lr_at(e, &flat) == flat.lr0));
    let explicit = LossConfig { step_interval: Some(10), ..cfg };
    assert!((lr_at(25, &explicit) - 1e-6).abs() < 1e-18);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut w = Tensor::scalar(2.0);
    let g = Tensor::scalar(1.0);
    let mut adam = AdamState::new([&w]);
    adam.step(&mut [&mut w], &[Some(&g)], 0.1).unwrap();
    assert!((w.get(0, 0) - 1.9).abs() < 1e-6);
    assert_eq!(adam.steps(), 1);
}

#[test]
fn adam_ignores_zero_gradients() {
    let mut w = Tensor::new(1, 3, vec![0.5, -1.0, 3.0]).unwrap();
    let before = w.clone();
    let g = Tensor::zeros(1, 3);
    let mut adam = AdamState::new([&w]);
    for _ in 0..5 {
        adam.step(&mut [&mut w], &[Some(&g)], 0.1).unwrap();
    }
    assert_eq!(w, before);
}

#[test]
fn adam_is_deterministic_per_parameter() {
    let mut a = Tensor::scalar(0.3);
    let mut b = Tensor::scalar(0.3);
    let mut adam = AdamState::new([&a, &b]);
    let mut rng = SplitMix64(9);
    for _ in 0..20 {
        let g = Tensor::scalar(rng.range(-1.0, 1.0));
        adam.step(&mut [&mut a, &mut b], &[Some(&g), Some(&g)], 0.01).unwrap();
    }
    assert_eq!(a, b);
}

#[test]
fn adam_rejects_missing_or_misshaped_gradients() {
    let mut w = Tensor::zeros(2, 2);
    let mut adam = AdamState::new([&w]);
    assert!(matches!(adam.step(&mut [&mut w], &[None], 0.1), Err(Error::Contract(_))));
    let g = Tensor::zeros(1, 2);
    assert!(adam.step(&mut [&mut w], &[Some(&g)], 0.1).is_err());
    assert_eq!(adam.steps(), 0);
}

fn small_arch(kind: ModelKind, classes: usize) -> Architecture {
    Architecture {
        kind,
        layers: 3,
        hidden_width: 16,
        classes,
        classnet_width: 16,
        conditioner_width: 8,
        pe_frequencies: 8,
        ..Architecture::default()
    }
}

fn tiny_phantom() -> (ImageField, ClassField) {
    render(&standard_suite()[1], 8, 8).unwrap()
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let (img, mask) = tiny_phantom();
    for kind in ModelKind::ALL {
        let mut model = Model::new(&small_arch(kind, 3), 4).unwrap();
        let before = model.clone();
        let cfg = TrainConfig {
            loss: LossConfig { epochs: 0, ..LossConfig::default() },
            ..TrainConfig::default()
        };
        let log = train(&mut model, &img, Some(&mask), &cfg, None).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(model, before);
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let (img, mask) = tiny_phantom();
    let cfg = TrainConfig {
        loss: LossConfig { epochs: 15, ..LossConfig::default() },
        batch_size: Some(40),
        seed: 11,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = Model::new(&small_arch(ModelKind::Seco, 3), 5).unwrap();
        let log = train(&mut model, &img, Some(&mask), &cfg, None).unwrap();
        let numbers: Vec<[f64; 5]> = log.records.iter().map(|r| [r.loss, r.mse, r.ce, r.penalty, r.lr]).collect();
        (model, numbers)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

#[test]
fn semantic_model_needs_a_matching_mask() {
    let (img, mask) = tiny_phantom();
    let cfg = TrainConfig::default();
    let mut model = Model::new(&small_arch(ModelKind::Seco, 3), 0).unwrap();
    assert!(matches!(train(&mut model, &img, None, &cfg, None), Err(Error::Contract(_))));
    let mut wrong_classes = Model::new(&small_arch(ModelKind::Seco, 2), 0).unwrap();
    assert!(train(&mut wrong_classes, &img, Some(&mask), &cfg, None).is_err());
    let (other, _) = render(&standard_suite()[1], 8, 9).unwrap();
    assert!(train(&mut model, &other, Some(&mask), &cfg, None).is_err());
    // Baselines and the ablation ignore the mask entirely.
    let mut siren = Model::new(&small_arch(ModelKind::Siren, 3), 0).unwrap();
    let quick = TrainConfig {
        loss: LossConfig { epochs: 1, ..LossConfig::default() },
        ..TrainConfig::default()
    };
    assert!(train(&mut siren, &img, None, &quick, None).is_ok());
}

#[test]
fn divergence_reports_epoch_and_rate() {
    let (img, mask) = tiny_phantom();
    let mut model = Model::new(&small_arch(ModelKind::Siren, 3), 0).unwrap();
    let cfg = TrainConfig {
        loss: LossConfig {
            epochs: 50,
            lr0: 1e200,
            gamma: 1.0,
            ..LossConfig::default()
        },
        ..TrainConfig::default()
    };
    match train(&mut model, &img, Some(&mask), &cfg, None) {
        Err(Error::Diverged { lr, epoch, .. }) => {
            assert_eq!(lr, 1e200);
            assert!(epoch > 0);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn observer_sees_every_epoch() {
    let (img, mask) = tiny_phantom();
    let mut model = Model::new(&small_arch(ModelKind::Seco, 3), 0).unwrap();
    let cfg = TrainConfig {
        loss: LossConfig { epochs: 7, ..LossConfig::default() },
        ..TrainConfig::default()
    };
    let (tx, rx) = mpsc::channel();
    let log = train(&mut model, &img, Some(&mask), &cfg, Some(&tx)).unwrap();
    drop(tx);
    let streamed: Vec<EpochRecord> = rx.iter().collect();
    assert_eq!(streamed, log.records);
    assert_eq!(streamed.iter().map(|r| r.epoch).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());

    let mut csv = Vec::new();
    log.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some(TrainLog::CSV_HEADER));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn halting_threshold_stops_early() {
    let (img, mask) = tiny_phantom();
    let mut model = Model::new(&small_arch(ModelKind::Siren, 3), 0).unwrap();
    let cfg = TrainConfig {
        loss: LossConfig { epochs: 40, ..LossConfig::default() },
        halt_at_psnr: Some(0.0),
        ..TrainConfig::default()
    };
    let log = train(&mut model, &img, Some(&mask), &cfg, None).unwrap();
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.first_reaching(0.0).map(|r| r.epoch), Some(0));
}

#[test]
fn every_parameter_receives_gradient() {
    let (img, mask) = tiny_phantom();
    for kind in ModelKind::ALL {
        if kind == ModelKind::SecoNoSemantic {
            // Its conditioner sees a constant zero input, so only the head
            // bias can learn; checked separately below.
            continue;
        }
        let model = Model::new(&small_arch(kind, 3), 21).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(crate::sampling::make_grid(8, 8).unwrap().into_tensor());
        let pass = model.forward(&mut tape, x, true).unwrap();
        let target = tape.constant(img.to_tensor());
        let classes = pass.classes.map(|predicted| ClassTerms {
            predicted,
            truth: tape.constant(mask.to_tensor()),
        });
        let terms = compute_loss(&mut tape, pass.intensity, target, classes, pass.activation.as_ref(), &LossConfig::default()).unwrap();
        tape.backward(terms.total).unwrap();
        for (k, v) in pass.trainable.iter().enumerate() {
            let g = tape.grad(*v).unwrap();
            assert!(g.data().iter().any(|&x| x != 0.0), "{kind}: tensor {k} has an all-zero gradient");
        }
    }
}

#[test]
fn constant_conditioner_input_only_moves_the_head_bias() {
    let (img, _) = tiny_phantom();
    let mut model = Model::new(&small_arch(ModelKind::SecoNoSemantic, 3), 2).unwrap();
    let before = model.clone();
    let cfg = TrainConfig {
        loss: LossConfig { epochs: 3, ..LossConfig::default() },
        ..TrainConfig::default()
    };
    train(&mut model, &img, None, &cfg, None).unwrap();
    let changed: Vec<String> = model
        .named_tensors()
        .into_iter()
        .zip(before.named_tensors())
        .filter(|((_, x), (_, y))| x != y)
        .map(|((name, _), _)| name)
        .filter(|name| !name.starts_with("image."))
        .collect();
    assert_ne!(model.named_tensors()[0], before.named_tensors()[0]);
    assert_eq!(changed, vec!["conditioner.head.0.bias".to_string()]);
}

#[test]
fn phantom_fit_reaches_high_training_psnr() {
    let (img, mask) = render(&standard_suite()[0], 32, 32).unwrap();
    let arch = Architecture {
        classes: 2,
        ..Architecture::default()
    };
    let mut model = Model::new(&arch, 0).unwrap();
    let cfg = TrainConfig {
        loss: LossConfig { epochs: 500, ..LossConfig::default() },
        ..TrainConfig::default()
    };
    let log = train(&mut model, &img, Some(&mask), &cfg, None).unwrap();
    let last = log.last().unwrap().psnr.as_f64();
    assert!(last > 30.0, "final training PSNR {last}");
}

#[test]
fn siren_outfits_raw_relu() {
    let (img, _) = render(&standard_suite()[0], 32, 32).unwrap();
    let cfg = TrainConfig {
        loss: LossConfig { epochs: 500, ..LossConfig::default() },
        ..TrainConfig::default()
    };
    let fit = |arch: Architecture| {
        let mut model = Model::new(&arch, 0).unwrap();
        train(&mut model, &img, None, &cfg, None).unwrap().last().unwrap().psnr.as_f64()
    };
    let siren = fit(Architecture { kind: ModelKind::Siren, ..Architecture::default() });
    let relu = fit(Architecture {
        kind: ModelKind::ReluPe,
        pe_frequencies: 0,
        ..Architecture::default()
    });
    assert!(siren > relu, "siren {siren} vs relu {relu}");
}
