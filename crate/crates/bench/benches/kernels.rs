use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deepgi_bench::{batch, image, parameter, sample, tensor};
use deepgi_core::metrics::{ssim, ImageRef};
use deepgi_core::scene::{path_trace, Camera, FrameCoords, ObjectKind};
use deepgi_core::tensor::{conv2d, conv_transpose2d, mean};
use deepgi_core::train::Trainer;
use deepgi_core::{Generator, GeneratorConfig, TrainConfig};

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv");
    let x = tensor(&[4, 64, 32, 32], 1);
    let w = parameter(&[128, 64, 4, 4], 2);
    g.bench_function("conv2d_fwd_4x64x32x32_s2", |b| b.iter(|| conv2d(&x, &w, None, 2, 1).unwrap()));
    g.bench_function("conv2d_fwd_bwd_4x64x32x32_s2", |b| {
        b.iter(|| {
            let xl = x.requires_grad_();
            mean(&conv2d(&xl, &w, None, 2, 1).unwrap()).backward().unwrap();
        })
    });
    let y = tensor(&[4, 128, 16, 16], 3);
    let wt = parameter(&[128, 64, 4, 4], 4);
    g.bench_function("conv_transpose2d_fwd_4x128x16x16_s2", |b| {
        b.iter(|| conv_transpose2d(&y, &wt, None, 2, 1).unwrap())
    });
    g.bench_function("conv_transpose2d_fwd_bwd_4x128x16x16_s2", |b| {
        b.iter(|| {
            let yl = y.requires_grad_();
            mean(&conv_transpose2d(&yl, &wt, None, 2, 1).unwrap()).backward().unwrap();
        })
    });
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step");
    g.sample_size(10);
    let s = sample(64, 4);
    let b64 = batch(&s, 64);
    for k in [16usize, 32] {
        let config = TrainConfig {
            base_layer_k: k,
            depth: 6,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&config).unwrap();
        let mut step = 0u64;
        g.bench_with_input(BenchmarkId::new("64x64_batch1", k), &k, |b, _| {
            b.iter(|| {
                step += 1;
                trainer.train_step(&b64, step).unwrap()
            })
        });
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    let mut g = c.benchmark_group("inference");
    let x = tensor(&[1, 12, 64, 64], 5);
    for k in [16usize, 32, 64] {
        let gen = Generator::new(GeneratorConfig::new(k, 6), 0).unwrap();
        g.bench_with_input(BenchmarkId::new("64x64", k), &k, |b, _| b.iter(|| gen.infer(&x).unwrap()));
    }
    g.finish();
}

fn render(c: &mut Criterion) {
    let mut g = c.benchmark_group("path_trace");
    g.sample_size(10);
    let coords = FrameCoords {
        frame: 0,
        object: ObjectKind::Sphere,
        light_deg: 45.0,
        object_deg: 30.0,
    };
    let scene = coords.scene().unwrap();
    for spp in [4u32, 64] {
        let camera = Camera::cornell(64);
        g.bench_with_input(BenchmarkId::new("cornell_64x64", spp), &spp, |b, &spp| {
            b.iter(|| path_trace(&scene, &camera, spp, 8, 1).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let (a, b) = (image(3 * 256 * 256, 6), image(3 * 256 * 256, 7));
    c.bench_function("ssim_3x256x256", |bench| {
        bench.iter(|| {
            ssim(ImageRef::new(&a, 3, 256, 256).unwrap(), ImageRef::new(&b, 3, 256, 256).unwrap()).unwrap()
        })
    });
}

criterion_group!(benches, conv, train_step, inference, render, metrics);
criterion_main!(benches);
