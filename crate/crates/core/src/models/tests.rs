use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seco_inr_oracles::{central_gradient, max_relative_error, SplitMix64};

use super::*;
use crate::sampling::make_grid;

fn small_arch(kind: ModelKind) -> Architecture {
    Architecture {
        kind,
        layers: 3,
        hidden_width: 6,
        classes: 3,
        classnet_layers: 3,
        classnet_width: 5,
        conditioner_layers: 2,
        conditioner_width: 4,
        conditioner_head_scale: 1.0,
        pe_frequencies: 3,
        pe_scale: 1.0,
        gauss_sigma: 1.5,
        ..Architecture::default()
    }
}

fn random_coords(rng: &mut SplitMix64, n: usize) -> Tensor {
    Tensor::new(n, 2, rng.vec(2 * n, -1.0, 1.0)).unwrap()
}

fn random_params(rng: &mut SplitMix64, n: usize, layers: usize) -> ActivationParams {
    let mut t = |lo, hi| Tensor::new(n, layers, rng.vec(n * layers, lo, hi)).unwrap();
    ActivationParams {
        p: t(0.5, 1.5),
        q: t(0.5, 1.5),
        r: t(-0.5, 0.5),
        s: t(-0.5, 0.5),
    }
}

fn adaptive(seed: u64, widths: &[usize]) -> AdaptiveSirenNet {
    AdaptiveSirenNet::new(&mut ChaCha8Rng::seed_from_u64(seed), widths, 30.0, 30.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn siren_reduction_holds(seed in 0u64..10_000, n in 1usize..20) {
        let net = adaptive(seed, &[2, 7, 5, 1]);
        let coords = random_coords(&mut SplitMix64(seed), n);
        let plain = net.forward(&coords, None).unwrap();
        let reduced = net.forward(&coords, Some(&ActivationParams::siren(n, 2))).unwrap();
        for (a, b) in plain.data().iter().zip(reduced.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn outputs_follow_row_permutations(seed in 0u64..1000) {
        let mut rng = SplitMix64(seed);
        let coords = random_coords(&mut rng, 9);
        let perm: Vec<usize> = {
            let mut idx: Vec<usize> = (0..9).collect();
            for i in (1..9).rev() {
                idx.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
            }
            idx
        };
        for kind in ModelKind::ALL {
            let model = Model::new(&small_arch(kind), seed).unwrap();
            let base = model.predict(&coords).unwrap();
            let permuted = model.predict(&coords.gather_rows(&perm)).unwrap();
            prop_assert_eq!(&base.intensity.gather_rows(&perm), &permuted.intensity);
            if let (Some(a), Some(b)) = (base.classes, permuted.classes) {
                prop_assert_eq!(a.gather_rows(&perm), b);
            }
        }
    }
}

#[test]
fn zero_amplitude_leaves_only_the_head_bias() {
    let net = adaptive(3, &[2, 8, 8, 1]);
    let n = 5;
    let coords = random_coords(&mut SplitMix64(1), n);
    let mut params = ActivationParams::siren(n, 2);
    params.p = Tensor::zeros(n, 2);
    let out = net.forward(&coords, Some(&params)).unwrap();
    let bias = net.layers()[2].bias.get(0, 0);
    assert!(out.data().iter().all(|&v| v == bias));
}

#[test]
fn activation_shape_mismatch_is_a_contract_error() {
    let net = adaptive(3, &[2, 8, 8, 1]);
    let coords = random_coords(&mut SplitMix64(1), 4);
    let err = net.forward(&coords, Some(&ActivationParams::siren(5, 2))).unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
    let err = net.forward(&coords, Some(&ActivationParams::siren(4, 3))).unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
}

#[test]
fn siren_initialisation_ranges() {
    let net = adaptive(11, &[2, 64, 64, 1]);
    let first = net.layers()[0].weight.data();
    assert!(first.iter().all(|w| w.abs() <= 0.5));
    let limit = (6.0f64 / 64.0).sqrt() / 30.0;
    assert!(net.layers()[1].weight.data().iter().all(|w| w.abs() <= limit));
    assert!(net.layers()[1].weight.data().iter().any(|w| w.abs() > 0.5 * limit));
}

#[test]
fn too_shallow_network_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(AdaptiveSirenNet::new(&mut rng, &[2, 1], 30.0, 30.0).is_err());
    assert!(AdaptiveSirenNet::new(&mut rng, &[2, 0, 1], 30.0, 30.0).is_err());
}

/// Gradient of `Σ out²` w.r.t. p, q, r, s from the tape.
#[test]
fn activation_parameter_gradients_match_finite_differences() {
    let net = adaptive(5, &[2, 6, 6, 1]);
    let n = 16;
    let mut rng = SplitMix64(21);
    let coords = random_coords(&mut rng, n);
    let params = random_params(&mut rng, n, 2);

    let mut tape = Tape::new();
    let vars = seco::bind_constants(&mut tape, net.layers().iter());
    let x = tape.constant(coords.clone());
    let act = ActivationVars {
        p: tape.param(&params.p),
        q: tape.param(&params.q),
        r: tape.param(&params.r),
        s: tape.param(&params.s),
    };
    let out = net.forward_bound(&mut tape, &mut Bound::new(&vars), x, Some(&act)).unwrap();
    let sq = tape.square(out).unwrap();
    let loss = tape.sum(sq).unwrap();
    tape.backward(loss).unwrap();

    for which in 0..4 {
        let analytic = tape.grad(act.components()[which]).unwrap().data().to_vec();
        let start = params.components()[which].data().to_vec();
        let numeric = central_gradient(
            |x| {
                let mut p = params.clone();
                let target = [&mut p.p, &mut p.q, &mut p.r, &mut p.s];
                target.into_iter().nth(which).unwrap().data_mut().copy_from_slice(x);
                net.forward(&coords, Some(&p)).unwrap().data().iter().map(|v| v * v).sum()
            },
            &start,
            1e-6,
        );
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        assert!(err < 1e-4, "component {which}: rel err {err}");
    }
}

#[test]
fn single_class_softmax_is_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = PixelClassNet::new(&mut rng, 2, 2, 8, 1, 30.0).unwrap();
    let probs = net.forward(&random_coords(&mut SplitMix64(2), 10)).unwrap();
    assert!(probs.data().iter().all(|&v| v == 1.0));
}

#[test]
fn zero_head_gives_uniform_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = PixelClassNet::new(&mut rng, 2, 2, 8, 4, 30.0).unwrap();
    *net.head_mut() = Linear::zeros(8, 4);
    let probs = net.forward(&random_coords(&mut SplitMix64(2), 10)).unwrap();
    assert!(probs.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn class_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = PixelClassNet::new(&mut rng, 2, 3, 16, 4, 30.0).unwrap();
    let probs = net.forward(&random_coords(&mut SplitMix64(4), 8)).unwrap();
    for r in 0..8 {
        let row = probs.row(r);
        assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(net.forward(&Tensor::zeros(0, 2)).is_err());
}

#[test]
fn conditioner_is_a_function_of_its_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = ConditionerNet::new(&mut rng, 3, 2, 16, 4, 1.0).unwrap();
    let input = Tensor::new(2, 3, vec![0.2, 0.5, 0.3, 0.2, 0.5, 0.3]).unwrap();
    let out = net.forward(&input).unwrap();
    for t in out.components() {
        assert_eq!(t.row(0), t.row(1));
    }
}

#[test]
fn zero_weight_conditioner_emits_siren_parameters() {
    let head = Linear {
        weight: Tensor::zeros(5, 12),
        bias: siren_bias(3),
    };
    let net = ConditionerNet::from_parts(vec![Linear::zeros(4, 5)], head).unwrap();
    let input = Tensor::new(2, 4, SplitMix64(3).vec(8, 0.0, 1.0)).unwrap();
    assert_eq!(net.forward(&input).unwrap(), ActivationParams::siren(2, 3));
}

#[test]
fn conditioner_output_width_tracks_layers() {
    for layers in [2, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(layers as u64);
        let net = ConditionerNet::new(&mut rng, 3, 2, 8, layers, 0.01).unwrap();
        assert_eq!(net.output_width(), 4 * layers);
        let out = net.forward(&Tensor::filled(5, 3, 1.0 / 3.0)).unwrap();
        for t in out.components() {
            assert_eq!(t.shape(), (5, layers));
        }
    }
}

#[test]
fn conditioner_rejects_wrong_class_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = ConditionerNet::new(&mut rng, 3, 2, 8, 2, 0.01).unwrap();
    assert!(matches!(net.forward(&Tensor::zeros(4, 2)), Err(Error::Contract(_))));
}

#[test]
fn siren_baseline_with_zero_head_is_constant() {
    let mut net = adaptive(4, &[2, 8, 8, 1]);
    net.layers_mut()[2].weight = Tensor::zeros(8, 1);
    net.layers_mut()[2].bias = Tensor::scalar(0.42);
    let out = Model::Siren(net).predict(&random_coords(&mut SplitMix64(5), 6)).unwrap();
    assert!(out.intensity.data().iter().all(|&v| v == 0.42));
}

#[test]
fn positional_encoding_at_origin() {
    let model = Model::new(&small_arch(ModelKind::ReluPe), 0).unwrap();
    let Model::ReluPe(net) = &model else { unreachable!() };
    assert_eq!(net.encoding_dim(), 2 * COORD_DIM * 3);
    let enc = net.encode(&Tensor::zeros(1, 2)).unwrap();
    let (sin, cos) = enc.data().split_at(COORD_DIM * 3);
    assert!(sin.iter().all(|&v| v == 0.0));
    assert!(cos.iter().all(|&v| v == 1.0));
}

#[test]
fn raw_coordinate_relu_has_no_encoding() {
    let arch = Architecture {
        pe_frequencies: 0,
        ..small_arch(ModelKind::ReluPe)
    };
    let Model::ReluPe(net) = Model::new(&arch, 0).unwrap() else { unreachable!() };
    assert!(net.frequencies().is_none());
    assert_eq!(net.encoding_dim(), COORD_DIM);
}

#[test]
fn siren_baseline_shares_initial_weights_with_adaptive_net() {
    let arch = small_arch(ModelKind::Seco);
    let Model::Seco(seco) = Model::new(&arch, 77).unwrap() else { unreachable!() };
    let Model::Siren(siren) = Model::new(&Architecture { kind: ModelKind::Siren, ..arch }, 77).unwrap() else {
        unreachable!()
    };
    assert_eq!(seco.image, siren);
}

#[test]
fn same_seed_same_model() {
    for kind in ModelKind::ALL {
        let a = Model::new(&small_arch(kind), 5).unwrap();
        let b = Model::new(&small_arch(kind), 5).unwrap();
        let c = Model::new(&small_arch(kind), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn default_architecture_matches_the_reference_setup() {
    let arch = Architecture::default();
    assert_eq!(arch.image_widths(), vec![2, 256, 256, 256, 256, 1]);
    let Model::Seco(m) = Model::new(&arch, 0).unwrap() else { unreachable!() };
    assert_eq!(m.image.activated_layers(), 4);
    assert_eq!(m.conditioner.output_width(), 16);
}

#[test]
fn model_kind_names_round_trip() {
    for kind in ModelKind::ALL {
        assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
    }
    assert!("wire".parse::<ModelKind>().is_err());
}

/// Finite-difference check of every trainable tensor of a model against
/// `Σ intensity² + Σ classes ⊙ weights`.
fn check_model_gradients(kind: ModelKind, seed: u64) {
    let arch = small_arch(kind);
    let mut model = Model::new(&arch, seed).unwrap();
    // Zero-initialised biases put ReLU units exactly on their kink, where a
    // central difference is meaningless; nudge every parameter off it.
    let mut jitter = SplitMix64(seed ^ 0x5eed);
    for t in model.trainable_mut() {
        for v in t.data_mut() {
            *v += jitter.range(-0.05, 0.05);
        }
    }
    let coords = make_grid(2, 2).unwrap().into_tensor();
    let class_weights = Tensor::new(4, arch.classes, SplitMix64(seed).vec(4 * arch.classes, -1.0, 1.0)).unwrap();

    let objective = |pred: &Prediction| -> f64 {
        let mut total: f64 = pred.intensity.data().iter().map(|v| v * v).sum();
        if let Some(c) = &pred.classes {
            total += c.data().iter().zip(class_weights.data()).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    };

    let mut tape = Tape::new();
    let x = tape.constant(coords.clone());
    let pass = model.forward(&mut tape, x, true).unwrap();
    let sq = tape.square(pass.intensity).unwrap();
    let mut loss = tape.sum(sq).unwrap();
    if let Some(c) = pass.classes {
        let w = tape.constant(class_weights.clone());
        let prod = tape.mul(c, w).unwrap();
        let s = tape.sum(prod).unwrap();
        loss = tape.add(loss, s).unwrap();
    }
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = pass
        .trainable
        .iter()
        .map(|&v| tape.grad(v).unwrap().data().to_vec())
        .collect();
    assert_eq!(analytic.len(), model.trainable_mut().len());

    for (k, grad) in analytic.iter().enumerate() {
        let start = model.trainable_mut()[k].data().to_vec();
        let numeric = central_gradient(
            |x| {
                let mut m = model.clone();
                m.trainable_mut()[k].data_mut().copy_from_slice(x);
                objective(&m.predict(&coords).unwrap())
            },
            &start,
            1e-6,
        );
        let err = max_relative_error(grad, &numeric, 1e-6);
        assert!(err < 1e-4, "{kind}: tensor {k} rel err {err}");
    }
}

#[test]
fn composite_gradients_match_finite_differences() {
    for kind in ModelKind::ALL {
        check_model_gradients(kind, 13);
    }
}

#[test]
fn no_semantic_model_skips_the_class_network() {
    let arch = small_arch(ModelKind::SecoNoSemantic);
    let model = Model::new(&arch, 0).unwrap();
    let pred = model.predict(&make_grid(3, 3).unwrap().into_tensor()).unwrap();
    assert!(pred.classes.is_none());
    assert!(pred.activation.is_some());
}
