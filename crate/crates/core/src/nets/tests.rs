use super::*;
use crate::tensor::finite_difference_check_at;

fn batch(n: usize, seed: u64) -> Tensor<f32> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(&[n, 1, IMAGE_SIZE, IMAGE_SIZE], |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 40) as f32 / (1u64 << 24) as f32
    })
}

#[test]
fn init_is_seeded() {
    assert_eq!(UNetParams::init(3), UNetParams::init(3));
    assert_ne!(UNetParams::init(3), UNetParams::init(4));
    assert_eq!(
        ClassifierParams::init(3).params().to_bytes(),
        ClassifierParams::init(3).params().to_bytes()
    );
    assert_ne!(ClassifierParams::init(3), ClassifierParams::init(4));
}

#[test]
fn init_scale_follows_fan_in() {
    let check = |set: &ParamSet<f32>, layers: &[(&str, Layer)]| {
        for &(name, layer) in layers {
            let w = set.get(&format!("{name}.weight")).unwrap();
            let b = set.get(&format!("{name}.bias")).unwrap();
            assert!(b.data().iter().all(|&v| v == 0.0));
            if w.len() < 256 {
                continue;
            }
            let n = w.len() as f64;
            let mean = w.data().iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = w.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let target = (2.0 / layer.fan_in() as f64).sqrt();
            assert!((var.sqrt() / target - 1.0).abs() <= 0.2, "{name}: sd {} vs {target}", var.sqrt());
        }
    };
    check(UNetParams::init(0).params(), &UNET_LAYERS);
    check(ClassifierParams::init(0).params(), &classifier_layers(2));
}

#[test]
fn unet_shape_and_range() {
    let unet = UNetParams::init(0);
    for n in [1, 4] {
        let out = unet.reconstruct(&batch(n, 1)).unwrap();
        assert_eq!(out.shape(), &[n, 1, IMAGE_SIZE, IMAGE_SIZE]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
    assert!(matches!(unet.reconstruct(&Tensor::zeros(&[2, 1, 8, 8])), Err(Error::Shape(_))));
    assert!(matches!(unet.reconstruct(&Tensor::zeros(&[2, 2, 16, 16])), Err(Error::Shape(_))));
}

#[test]
fn classifier_shape_range_and_purity() {
    let clf = ClassifierParams::init(0);
    let x = batch(3, 2);
    let mut data = x.data().to_vec();
    data.extend_from_slice(&x.data()[..IMAGE_SIZE * IMAGE_SIZE]);
    let x = Tensor::new(vec![4, 1, IMAGE_SIZE, IMAGE_SIZE], data).unwrap();
    let p = clf.predict(&x).unwrap();
    assert_eq!(p.shape(), &[4, 2]);
    assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(p.data()[0..2], p.data()[6..8]);

    let mut tape = Tape::new();
    let bound = clf.params().bind(&mut tape, false);
    let xv = tape.constant(x);
    let probs = classifier_forward(&mut tape, &bound, xv).unwrap();
    let (h1, h2) = split_heads(&mut tape, probs).unwrap();
    assert_eq!(tape.value(h1).unwrap().shape(), &[4]);
    assert_eq!(tape.value(h2).unwrap().shape(), &[4]);
}

fn sampled(len: usize, k: usize) -> Vec<usize> {
    (0..len).step_by((len / k).max(1)).take(k).collect()
}

#[test]
fn unet_gradients_match_finite_differences() {
    let params = UNetParams::init(0).params().cast::<f64>();
    let x = batch(1, 9).cast::<f64>();
    for (name, base) in params.iter() {
        let check = finite_difference_check_at(
            |tape, w| {
                let mut p = params.bind(tape, false);
                p.set(name, w);
                let xv = tape.constant(x.clone());
                let y = unet_forward(tape, &p, xv)?;
                tape.mse_loss(y, xv)
            },
            base,
            1e-4,
            &sampled(base.len(), 4),
        )
        .unwrap();
        assert!(check.max_rel_error <= 1e-4, "{name}: {check:?}");
    }
}

#[test]
fn classifier_input_gradient_matches_finite_differences() {
    let params = ClassifierParams::init(1).params().cast::<f64>();
    let x = batch(2, 4).cast::<f64>();
    let check = finite_difference_check_at(
        |tape, xv| {
            let p = params.bind(tape, false);
            let probs = classifier_forward(tape, &p, xv)?;
            let h1 = tape.column(probs, 0)?;
            tape.sum(h1)
        },
        &x,
        1e-4,
        &sampled(x.len(), 40),
    )
    .unwrap();
    assert!(check.max_rel_error <= 1e-4, "{check:?}");
}

#[test]
fn no_dead_parameters_at_init() {
    let x = batch(4, 0);
    let unet = UNetParams::init(0);
    let mut tape = Tape::new();
    let p = unet.params().bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let y = unet_forward(&mut tape, &p, xv).unwrap();
    let loss = tape.mse_loss(y, xv).unwrap();
    let g = tape.backward(loss).unwrap();
    for name in unet.params().names() {
        assert!(g.get(name).unwrap().data().iter().any(|&v| v != 0.0), "{name}");
    }

    let clf = ClassifierParams::init(0);
    let mut tape = Tape::new();
    let p = clf.params().bind(&mut tape, true);
    let xv = tape.constant(x);
    let probs = classifier_forward(&mut tape, &p, xv).unwrap();
    let loss = tape.sum(probs).unwrap();
    let g = tape.backward(loss).unwrap();
    for name in clf.params().names() {
        assert!(g.get(name).unwrap().data().iter().any(|&v| v != 0.0), "{name}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.ckpt");
    let unet = UNetParams::init(7);
    unet.save(&path).unwrap();
    let back = UNetParams::load(&path).unwrap();
    assert_eq!(back.params().to_bytes(), unet.params().to_bytes());

    let clf = ClassifierParams::init(7);
    let path = dir.path().join("c.ckpt");
    clf.save(&path).unwrap();
    let back = ClassifierParams::load(&path).unwrap();
    assert!(back.is_frozen());
    assert_eq!(back.params(), clf.params());
}

#[test]
fn checkpoint_rejections() {
    let bytes = UNetParams::init(0).params().to_bytes();
    let mut bad = bytes.clone();
    bad[..6].copy_from_slice(b"XXXXX1");
    assert!(matches!(ParamSet::from_bytes(&bad), Err(Error::Format(_))));
    assert!(matches!(
        ParamSet::from_bytes(&bytes[..bytes.len() / 2]),
        Err(Error::Truncated(_))
    ));

    let mut renamed = UNetParams::init(0).params().clone();
    renamed.push("extra.weight", Tensor::zeros(&[1]));
    assert!(matches!(UNetParams::from_params(renamed), Err(Error::UnknownParam(_))));

    let clf = ClassifierParams::init(0);
    assert!(matches!(
        UNetParams::from_params(clf.params().clone()),
        Err(Error::UnknownParam(_))
    ));

    let mut reshaped = ParamSet::new();
    for (name, t) in UNetParams::init(0).params().iter() {
        let t = if name == "head.bias" { Tensor::zeros(&[2]) } else { t.clone() };
        reshaped.push(name, t);
    }
    assert!(matches!(UNetParams::from_params(reshaped), Err(Error::Shape(_))));

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        UNetParams::load(&dir.path().join("none.ckpt")),
        Err(Error::MissingFile(_))
    ));
}

#[test]
fn frozen_classifier_refuses_mutation() {
    let mut clf = ClassifierParams::init(0);
    assert!(clf.params_mut().is_ok());
    let mut clf = clf.freeze();
    assert!(matches!(clf.params_mut(), Err(Error::Frozen)));
}
