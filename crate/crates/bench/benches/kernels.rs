use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use debias_core::hsic::{hsic_biased, hsic_with_gradient, permutation_test, Samples};
use debias_core::nets::{unet_forward, UNetParams, IMAGE_SIZE};
use debias_core::{Tape, Tensor};

fn images(n: usize) -> Tensor<f32> {
    Tensor::from_fn(&[n, 1, IMAGE_SIZE, IMAGE_SIZE], |i| ((i * 2654435761) % 1000) as f32 / 1000.0)
}

fn scalars(n: usize, salt: usize) -> Samples {
    let v: Vec<f64> = (0..n).map(|i| (((i + salt) * 40503) % 997) as f64 / 997.0).collect();
    Samples::from_scalars(&v).unwrap()
}

fn bench_conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    let x = images(64);
    let w = Tensor::from_fn(&[8, 1, 3, 3], |i| (i as f32 * 0.37).sin());
    let b = Tensor::zeros(&[8]);
    g.bench_function("forward_64x1x16x16_to_8", |bch| {
        bch.iter(|| {
            let mut t = Tape::<f32>::new();
            let (xv, wv, bv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone()));
            black_box(t.conv2d(xv, wv, bv, 1).unwrap());
        })
    });
    g.bench_function("forward_backward_64x1x16x16_to_8", |bch| {
        bch.iter(|| {
            let mut t = Tape::<f32>::new();
            let xv = t.constant(x.clone());
            let wv = t.param("w", w.clone());
            let bv = t.param("b", b.clone());
            let y = t.conv2d(xv, wv, bv, 1).unwrap();
            let s = t.sum(y).unwrap();
            black_box(t.backward(s).unwrap());
        })
    });
    g.finish();
}

fn bench_hsic(c: &mut Criterion) {
    let mut g = c.benchmark_group("hsic");
    for n in [64usize, 256] {
        let (a, b) = (scalars(n, 0), scalars(n, 17));
        g.bench_with_input(BenchmarkId::new("value", n), &n, |bch, _| {
            bch.iter(|| black_box(hsic_biased(&a, &b, 0.3, 0.3).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("value_and_gradient", n), &n, |bch, _| {
            bch.iter(|| black_box(hsic_with_gradient(&a, &b, 0.3, 0.3).unwrap()))
        });
    }
    let (a, b) = (scalars(64, 0), scalars(64, 5));
    g.bench_function("permutation_test_64x200", |bch| {
        bch.iter(|| black_box(permutation_test(&a, &b, 200, 0).unwrap()))
    });
    g.finish();
}

fn bench_unet(c: &mut Criterion) {
    let mut g = c.benchmark_group("unet");
    g.sample_size(20);
    let unet = UNetParams::init(0);
    let x = images(64);
    g.bench_function("forward_batch64", |bch| bch.iter(|| black_box(unet.reconstruct(&x).unwrap())));
    g.bench_function("forward_backward_batch64", |bch| {
        bch.iter(|| {
            let mut t = Tape::<f32>::new();
            let p = unet.params().bind(&mut t, true);
            let xv = t.constant(x.clone());
            let y = unet_forward(&mut t, &p, xv).unwrap();
            let l = t.mse_loss(y, xv).unwrap();
            black_box(t.backward(l).unwrap());
        })
    });
    g.finish();
}

criterion_group!(benches, bench_conv, bench_hsic, bench_unet);
criterion_main!(benches);
