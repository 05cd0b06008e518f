use std::collections::BTreeMap;

use wsfn_core::models::classifier::{argmax, cross_entropy};
use wsfn_core::models::siren::grid_coords;
use wsfn_core::models::{
    fit_siren, ClassifierConfig, DecoderInit, Editor, FitConfig, HeadKind, Inr2Array,
    Inr2ArrayConfig, LatentClassifier, NftConfig, SirenNetwork,
};
use wsfn_core::optim::{Adam, AdamConfig};
use wsfn_core::precision::Precision;
use wsfn_core::rng::{self, seeded};
use wsfn_core::{NeuronPermutation, ParamSet, Tape, Tensor, WeightSpaceFeature, WeightSpaceSpec};

fn blob_spec() -> WeightSpaceSpec {
    WeightSpaceSpec::new([2, 16, 16, 1], 1).unwrap()
}

fn small_inr2array(init: DecoderInit) -> Inr2Array {
    let mut cfg = Inr2ArrayConfig::desk();
    cfg.target = WeightSpaceSpec::new([2, 6, 1], 1).unwrap();
    cfg.image = (8, 8);
    cfg.latent_dim = 8;
    cfg.decoder_hidden = 12;
    cfg.decoder_init = init;
    cfg.encoder.num_blocks = 1;
    cfg.encoder.channels = 8;
    cfg.encoder.mlp_hidden = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.fourier_size = 4;
    Inr2Array::new(cfg).unwrap()
}

#[test]
fn zero_siren_renders_zero() {
    let net = SirenNetwork::new(WeightSpaceFeature::zeros(&blob_spec()), 30.0).unwrap();
    assert_eq!(net.render(5, 4).unwrap(), Tensor::zeros([5, 4, 1]));
}

#[test]
fn siren_function_survives_hidden_permutations() {
    let mut rng = seeded(1);
    let net = SirenNetwork::init(&blob_spec(), 30.0, &mut rng).unwrap();
    let before = net.render(16, 16).unwrap();
    for _ in 0..5 {
        let s = NeuronPermutation::random_hidden(net.spec(), &mut rng);
        let moved = SirenNetwork::new(s.apply(&net.weights).unwrap(), 30.0).unwrap();
        assert!(moved.render(16, 16).unwrap().max_abs_diff(&before) <= 1e-12);
    }
}

#[test]
fn siren_matches_hand_evaluation() {
    let spec = WeightSpaceSpec::new([2, 2, 1], 1).unwrap();
    let w0 = Tensor::new([2, 2, 1], vec![0.1, -0.2, 0.3, 0.05]).unwrap();
    let b0 = Tensor::new([2, 1], vec![0.01, -0.02]).unwrap();
    let w1 = Tensor::new([1, 2, 1], vec![0.7, -0.4]).unwrap();
    let b1 = Tensor::new([1, 1], vec![0.2]).unwrap();
    let net = SirenNetwork::new(
        WeightSpaceFeature::new(spec, vec![w0, w1], vec![b0, b1]).unwrap(),
        30.0,
    )
    .unwrap();
    let (x, y) = (0.25, -0.5);
    let h0 = (30.0 * (0.1 * x - 0.2 * y + 0.01f64)).sin();
    let h1 = (30.0 * (0.3 * x + 0.05 * y - 0.02f64)).sin();
    let expect = 0.7 * h0 - 0.4 * h1 + 0.2;
    let got = net
        .eval(&Tensor::new([1, 2], vec![x, y]).unwrap())
        .unwrap()
        .item();
    assert!((got - expect).abs() < 1e-14);
}

#[test]
fn grid_coords_cover_the_square() {
    let g = grid_coords(3, 2);
    assert_eq!(g.shape(), &[6, 2]);
    assert_eq!(&g.data()[..4], &[-1.0, -1.0, 1.0, -1.0]);
    assert_eq!(&g.data()[10..], &[1.0, 1.0]);
}

#[test]
fn fits_a_constant_image() {
    let img = Tensor::full([8, 8, 1], 0.5);
    let cfg = FitConfig {
        steps: 200,
        lr: 1e-3,
        omega0: 30.0,
    };
    let fit = fit_siren(&img, &blob_spec(), &cfg, &mut seeded(2)).unwrap();
    assert!(fit.psnr > 30.0, "psnr {}", fit.psnr);
    assert!(fit.net.render(8, 8).unwrap().max_abs_diff(&img) < 0.05);
}

#[test]
fn zero_decoder_yields_zero_sirens() {
    let model = small_inr2array(DecoderInit::Zero);
    let mut params = ParamSet::new();
    model.init(&mut params, &mut seeded(3)).unwrap();
    let z = rng::normal(&[8], 1.0, &mut seeded(4));
    let net = model.decoder.decode_net(&params, &z).unwrap();
    assert_eq!(net.weights.flatten().max_abs(), 0.0);
}

#[test]
fn siren_bias_decoder_starts_latent_independent() {
    let model = small_inr2array(DecoderInit::SirenBias);
    let mut params = ParamSet::new();
    model.init(&mut params, &mut seeded(3)).unwrap();
    let a = model
        .decoder
        .decode_net(&params, &rng::normal(&[8], 1.0, &mut seeded(4)))
        .unwrap();
    let b = model
        .decoder
        .decode_net(&params, &rng::normal(&[8], 1.0, &mut seeded(5)))
        .unwrap();
    assert_eq!(a, b);
    assert!(a.weights.flatten().max_abs() > 0.0);
    assert_eq!(a.spec().layer_widths, vec![2, 6, 1]);
}

#[test]
fn inr2array_shapes_and_loss_stability() {
    let model = small_inr2array(DecoderInit::SirenBias);
    let mut params = ParamSet::new();
    model.init(&mut params, &mut seeded(6)).unwrap();
    let mut rng = seeded(7);
    let net = SirenNetwork::init(&model.config.target, 30.0, &mut rng).unwrap();
    let z = model.encode_value(&params, &net, Precision::F64).unwrap();
    assert_eq!(z.shape(), &[4, 8]);
    let targets = model.targets(&net).unwrap();
    assert_eq!(targets.shape(), &[4, 16, 1]);
    assert_eq!(
        model.render_reconstruction(&params, &net).unwrap().shape(),
        &[8, 8, 1]
    );

    let loss = |n: &SirenNetwork| {
        let tape = Tape::with_precision(Precision::F64);
        let p = params.bind_frozen(&tape);
        model
            .loss(&p, n, &model.targets(n).unwrap(), None)
            .unwrap()
            .value()
            .item()
    };
    let base = loss(&net);
    for _ in 0..5 {
        let s = NeuronPermutation::random_hidden(net.spec(), &mut rng);
        let moved = SirenNetwork::new(s.apply(&net.weights).unwrap(), 30.0).unwrap();
        assert!((loss(&moved) - base).abs() <= 1e-8 * base.max(1.0));
    }
}

#[test]
fn mismatched_siren_is_rejected() {
    let model = small_inr2array(DecoderInit::Zero);
    let mut params = ParamSet::new();
    model.init(&mut params, &mut seeded(0)).unwrap();
    let other = SirenNetwork::init(&blob_spec(), 30.0, &mut seeded(1)).unwrap();
    assert!(model.encode_value(&params, &other, Precision::F64).is_err());
}

#[test]
fn classifier_on_latents_is_permutation_stable() {
    let model = small_inr2array(DecoderInit::SirenBias);
    let cls = LatentClassifier::new(ClassifierConfig::new(4, 8, 2)).unwrap();
    let mut params = ParamSet::new();
    model.init(&mut params, &mut seeded(8)).unwrap();
    cls.init(&mut params, &mut seeded(9));
    let logits = |n: &SirenNetwork| {
        let tape = Tape::with_precision(Precision::F64);
        let p = params.bind_frozen(&tape);
        let z = model.encode(&p, n, None).unwrap();
        (*cls.forward(&p, z, None).unwrap().value()).clone()
    };
    let mut rng = seeded(10);
    let net = SirenNetwork::init(&model.config.target, 30.0, &mut rng).unwrap();
    let base = logits(&net);
    assert_eq!(base.shape(), &[2]);
    for _ in 0..5 {
        let s = NeuronPermutation::random_hidden(net.spec(), &mut rng);
        let moved = SirenNetwork::new(s.apply(&net.weights).unwrap(), 30.0).unwrap();
        assert!(logits(&moved).max_abs_diff(&base) <= 1e-8);
    }
}

#[test]
fn cross_entropy_and_argmax() {
    let tape = Tape::with_precision(Precision::F64);
    let logits = tape.constant(Tensor::new([3], vec![1.0, 2.0, 0.5]).unwrap());
    let ce = cross_entropy(logits, 1).unwrap().value().item();
    let lse = (1f64.exp() + 2f64.exp() + 0.5f64.exp()).ln();
    assert!((ce - (lse - 2.0)).abs() < 1e-14);
    assert!(cross_entropy(logits, 3).is_err());
    assert_eq!(argmax(&Tensor::new([3], vec![0.1, 0.3, -2.0]).unwrap()), 1);
}

#[test]
fn editor_commutes_with_permutations() {
    let mut cfg = NftConfig::new(1, 2, HeadKind::EquivariantDelta);
    cfg.channels = 8;
    cfg.mlp_hidden = 8;
    cfg.fourier_size = 4;
    let editor = Editor::new(cfg, (8, 8)).unwrap();
    let mut params = ParamSet::new();
    editor.nft.init(&mut params, &mut seeded(11));
    let mut rng = seeded(12);
    let spec = WeightSpaceSpec::new([2, 5, 1], 1).unwrap();
    let net = SirenNetwork::init(&spec, 30.0, &mut rng).unwrap();
    let edited = editor.edited_net(&params, &net, Precision::F64).unwrap();
    for _ in 0..5 {
        let s = NeuronPermutation::random(&spec, &mut rng);
        let moved = SirenNetwork::new(s.apply(&net.weights).unwrap(), 30.0).unwrap();
        let lhs = s.apply(&edited.weights).unwrap();
        let rhs = editor
            .edited_net(&params, &moved, Precision::F64)
            .unwrap()
            .weights;
        assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    let target = dilated(&net);
    let tape = Tape::with_precision(Precision::F64);
    let p = params.bind_frozen(&tape);
    let l = editor.loss(&p, &net, &target, None).unwrap().value().item();
    assert!(l.is_finite() && l >= 0.0);
}

fn dilated(net: &SirenNetwork) -> Tensor {
    wsfn_core::data::morphology::dilate(&net.render(8, 8).unwrap()).unwrap()
}

#[test]
fn lr_scale_applies_first_matching_prefix() {
    let mut params = ParamSet::new();
    params.insert("dec.a", Tensor::zeros([2]));
    params.insert("dec.b", Tensor::zeros([2]));
    params.insert("enc.a", Tensor::zeros([2]));
    let grads: BTreeMap<String, Tensor> = ["dec.a", "dec.b", "enc.a"]
        .iter()
        .map(|n| (n.to_string(), Tensor::ones([2])))
        .collect();
    let mut opt = Adam::new(AdamConfig {
        lr: 0.1,
        lr_scale: vec![("dec.b".into(), 0.0), ("dec.".into(), 3.0)],
        ..AdamConfig::default()
    });
    opt.step(&mut params, &grads).unwrap();
    // The first Adam step moves each coordinate by -lr·scale.
    let first = |n: &str| params.get(n).unwrap().data()[0];
    assert!((first("enc.a") + 0.1).abs() < 1e-6);
    assert!((first("dec.a") + 0.3).abs() < 1e-6);
    assert_eq!(first("dec.b"), 0.0);
}
