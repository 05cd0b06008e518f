use rand::Rng;
use wsfn_core::data::morphology::{contrast, dilate, erode, morph_gradient, EditTransform};
use wsfn_core::data::signals::{gen_signals, SignalKind};
use wsfn_core::data::zoo::{assemble, build_inr_dataset, fit_one, Split, ZooConfig, PSNR_FLOOR_DB};
use wsfn_core::models::FitConfig;
use wsfn_core::rng::seeded;
use wsfn_core::{Error, Tensor, WeightSpaceSpec};

fn blob_zoo(train: usize, val: usize) -> ZooConfig {
    ZooConfig {
        spec: WeightSpaceSpec::new([2, 16, 16, 1], 1).unwrap(),
        fit: FitConfig {
            steps: 300,
            lr: 1e-3,
            omega0: 30.0,
        },
        seed: 1,
        train,
        val,
    }
}

// Row-by-row window scan written without the library's index arithmetic.
fn naive_window(image: &Tensor, take_max: bool) -> Tensor {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let mut out = Tensor::zeros([h, w, 1]);
    for r in 0..h {
        for c in 0..w {
            let mut vals = Vec::new();
            for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    vals.push(image.get(&[rr, cc, 0]));
                }
            }
            let v = if take_max {
                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            } else {
                vals.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            out.set(&[r, c, 0], v);
        }
    }
    out
}

#[test]
fn morphology_matches_naive_loops() {
    let mut rng = seeded(11);
    for (h, w) in [(1, 1), (2, 5), (7, 7), (16, 16)] {
        let img = Tensor::from_fn([h, w, 1], |_| rng.random::<f64>());
        assert_eq!(erode(&img).unwrap(), naive_window(&img, false));
        assert_eq!(dilate(&img).unwrap(), naive_window(&img, true));
    }
}

#[test]
fn morphology_fixed_points_and_gradient() {
    let ones = Tensor::ones([6, 6, 1]);
    assert_eq!(erode(&ones).unwrap(), ones);
    assert_eq!(dilate(&ones).unwrap(), ones);
    assert_eq!(
        contrast(&Tensor::full([2, 2, 1], 0.5)),
        Tensor::full([2, 2, 1], 0.5)
    );
    assert_eq!(
        contrast(&Tensor::new([2, 1, 1], vec![0.0, 1.0]).unwrap()).data(),
        &[0.0, 1.0]
    );

    let mut rng = seeded(12);
    let img = Tensor::from_fn([9, 8, 1], |_| rng.random::<f64>());
    let g = morph_gradient(&img).unwrap();
    let expect = dilate(&img).unwrap().sub(&erode(&img).unwrap()).unwrap();
    assert_eq!(g, expect);
    assert!(g.data().iter().all(|&x| x >= 0.0));
}

#[test]
fn unknown_transform_is_rejected() {
    assert!(matches!(
        "sharpen".parse::<EditTransform>(),
        Err(Error::Config(_))
    ));
    assert_eq!(
        "dilate".parse::<EditTransform>().unwrap(),
        EditTransform::Dilate
    );
}

#[test]
fn signals_are_deterministic_balanced_and_in_range() {
    for kind in [
        SignalKind::Blobs2Class,
        SignalKind::GradientField,
        SignalKind::Checker,
    ] {
        let a = gen_signals(kind, 1000, 8, &mut seeded(5));
        let b = gen_signals(kind, 1000, 8, &mut seeded(5));
        assert_eq!(a, b, "{}", kind.name());
        let ones = a.iter().filter(|s| s.label == 1).count();
        assert!(ones.abs_diff(500) <= 1);
        for s in &a {
            assert_eq!(s.image.shape(), &[8, 8, 1]);
            assert!(
                s.image.data().iter().all(|&x| (0.0..=1.0).contains(&x)),
                "{}",
                kind.name()
            );
        }
    }
    let odd = gen_signals(SignalKind::Blobs2Class, 7, 4, &mut seeded(0));
    assert_eq!(odd.iter().filter(|s| s.label == 0).count(), 4);
}

#[test]
fn blob_classes_differ_in_blob_count() {
    for s in gen_signals(SignalKind::Blobs2Class, 40, 16, &mut seeded(2)) {
        assert_eq!(s.params.centers.len(), s.label + 1);
    }
}

fn cosine(a: &Tensor, b: &Tensor) -> f64 {
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    let na: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn blob_zoo_fits_independently() {
    let signals = gen_signals(SignalKind::Blobs2Class, 64, 16, &mut seeded(0));
    let cfg = blob_zoo(48, 0);
    let fits: Vec<_> = signals
        .iter()
        .enumerate()
        .map(|(i, s)| fit_one(s, &cfg, i).unwrap())
        .collect();
    let inits: Vec<Tensor> = fits.iter().map(|f| f.init.weights.flatten()).collect();
    let ds = assemble(&signals, fits, &cfg).unwrap();

    assert!(
        ds.entries.len() >= 52,
        "only {} nets accepted",
        ds.entries.len()
    );
    assert!(ds.entries.iter().all(|e| e.psnr >= PSNR_FLOOR_DB));
    assert_eq!(ds.entries.len() + ds.rejected.len(), 64);
    for e in &ds.entries {
        assert_eq!(e.label, signals[e.source].label);
    }
    assert_eq!(ds.split(Split::Train).len(), 48.min(ds.entries.len()));
    assert!(ds.split(Split::Val).is_empty());

    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..inits.len() {
        for j in i + 1..inits.len() {
            sum += cosine(&inits[i], &inits[j]);
            pairs += 1;
        }
    }
    let mean = sum / pairs as f64;
    assert!(mean.abs() < 0.1, "mean init cosine {mean}");
}

#[test]
fn zoo_is_deterministic_and_rejects_mismatched_data() {
    let signals = gen_signals(SignalKind::Blobs2Class, 3, 16, &mut seeded(9));
    let mut cfg = blob_zoo(2, 0);
    cfg.fit.steps = 20;
    cfg.fit.omega0 = 30.0;
    let a = fit_one(&signals[0], &cfg, 0).unwrap();
    let b = fit_one(&signals[0], &cfg, 0).unwrap();
    assert_eq!(a, b);

    // Unfitted SIRENs sit far below the PSNR floor.
    cfg.fit.steps = 0;
    assert!(matches!(
        build_inr_dataset(&signals, &cfg),
        Err(Error::Data(_))
    ));
    assert!(matches!(build_inr_dataset(&[], &cfg), Err(Error::Data(_))));
}
