//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use deepgi_core::metrics::{ssim, ImageRef};
use deepgi_core::nn::{load_checkpoint, save_checkpoint, ForwardOptions};
use deepgi_core::scene::{generate_dataset, split_dataset, FrameCoords, Holdout, ObjectKind, MANIFEST_FILE};
use deepgi_core::train::{
    run_experiment, train, Batch, ExperimentConfig, ExperimentKind, Sample, TrainConfig, Trainer,
};
use deepgi_core::{
    rng, selftest, Checkpoint, DatasetManifest, Discriminator, DiscriminatorConfig, GBufferFrame, Generator,
    GeneratorConfig, Split, SweepConfig, Tensor,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let checks = selftest::gradient_checks(2024, 3).map_err(err)?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect();
    let composed = checks.last().map(|c| c.detail.clone()).unwrap_or_default();
    let t = start.elapsed();
    let ok = failed.is_empty() && within(t, 60);
    Ok((
        ok,
        format!(
            "{} checks, {} failed{}; composed generator: {composed}; {:.1}s",
            checks.len(),
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) },
            t.as_secs_f64()
        ),
    ))
}

fn ac2() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (d, n) in [(6usize, 2usize), (8, 1)] {
        let s = 1 << d;
        let mut g = Generator::new(GeneratorConfig::new(32, d), 7).map_err(err)?;
        let mut r = rng::stream(7, &[d as u64]);
        let x = Tensor::from_vec((0..n * 12 * s * s).map(|_| r.random_range(-1.0..1.0)).collect(), &[n, 12, s, s])
            .map_err(err)?;
        let y = g.forward(&x, &ForwardOptions::train(0.5, 1)).map_err(err)?;
        let in_range = y.data().iter().all(|v| (-1.0..=1.0).contains(v));
        ok &= y.shape() == [n, 3, s, s] && in_range;
        notes.push(format!("G d={d}: {:?}", y.shape()));
    }
    let mut d = Discriminator::new(DiscriminatorConfig::new(64), 7).map_err(err)?;
    let cond = Tensor::full(&[1, 12, 256, 256], 0.2);
    let img = Tensor::full(&[1, 3, 256, 256], -0.1);
    let p = d.forward(&cond, &img, &ForwardOptions::eval()).map_err(err)?;
    ok &= p.shape() == [1, 1, 30, 30] && p.data().iter().all(|&v| v > 0.0 && v < 1.0);
    notes.push(format!("D 15×256×256: {:?}", p.shape()));
    Ok((ok, notes.join("; ")))
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let lambert = selftest::lambert_error().map_err(err)?;
    let shadow = selftest::shadowed_pixel().map_err(err)?;
    let sky = selftest::uniform_sky_error(1024, 5).map_err(err)?;
    let bounce = selftest::single_bounce_vs_direct(5).map_err(err)?;
    let t = start.elapsed();
    let ok = lambert < 1e-3 && shadow == [0.0; 3] && sky <= 0.02 && bounce.within_noise() && within(t, 300);
    Ok((
        ok,
        format!(
            "lambert err {lambert:.1e}; shadow {shadow:?}; sky rel err {:.2}%; bounce-1 mad {:.1e} (σ {:.1e}); {:.1}s",
            sky * 100.0,
            bounce.mean_abs_diff,
            bounce.sigma,
            t.as_secs_f64()
        ),
    ))
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let coords = FrameCoords {
        frame: 0,
        object: ObjectKind::Sphere,
        light_deg: 40.0,
        object_deg: 30.0,
    };
    let frame = GBufferFrame::render(coords, 64, 64, 8, 1).map_err(err)?;
    let sample = Sample {
        frame: 0,
        input: frame.network_input(),
        target: frame.network_target(),
    };
    let config = TrainConfig {
        base_layer_k: 32,
        depth: 6,
        batch_size: 1,
        seed: 4,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&config).map_err(err)?;
    let batch = Batch::new(&[&sample], 64).map_err(err)?;
    let mut last = f32::NAN;
    for step in 0..200 {
        last = trainer.train_step(&batch, rng::derive_seed(4, &[step])).map_err(err)?.l1;
    }
    let t = start.elapsed();
    Ok((
        last < 0.05 && within(t, 600),
        format!("L1 after 200 steps {last:.4}; {:.1}s", t.as_secs_f64()),
    ))
}

/// 120 frames at 64×64: light 0–180° in 10 steps, object 0–330° in 12.
/// Light angles 80° and 100° are held out (24 test frames), 12 of the rest
/// go to val, 84 to train.
fn shared_dataset(root: &Path) -> Result<(PathBuf, DatasetManifest), String> {
    let dir = root.join("data");
    let config = SweepConfig {
        light_steps: 10,
        object_steps: 12,
        resolution: 64,
        spp: 64,
        seed: 17,
        ..SweepConfig::default()
    };
    let m = generate_dataset(&config, &dir).map_err(err)?;
    let h: Holdout = "light:80:100".parse().map_err(err)?;
    let m = split_dataset(&m, &[h], 12.0 / 96.0).map_err(err)?;
    m.save(&dir).map_err(err)?;
    Ok((dir, m))
}

fn ac5(root: &Path, data: &Path) -> Outcome {
    let start = Instant::now();
    let config = TrainConfig {
        epochs: 20,
        base_layer_k: 32,
        depth: 6,
        seed: 5,
        train_frames: Some(40),
        data_dir: data.to_path_buf(),
        out_dir: root.join("ac5"),
        ..TrainConfig::default()
    };
    let r = train(&config).map_err(err)?;
    let (first, last) = (r.stats[0], r.stats[r.stats.len() - 1]);
    Ok((
        r.stats.len() == 20 && last.val_mse < first.val_mse && last.val_ssim > first.val_ssim,
        format!(
            "epoch 1: mse {:.5} ssim {:.4}; epoch 20: mse {:.5} ssim {:.4}; {:.0}s",
            first.val_mse,
            first.val_ssim,
            last.val_mse,
            last.val_ssim,
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn ac6(root: &Path, data: &Path) -> Outcome {
    let start = Instant::now();
    let train = TrainConfig {
        epochs: 10,
        base_layer_k: 32,
        depth: 6,
        seed: 6,
        data_dir: data.to_path_buf(),
        out_dir: root.join("ac6"),
        ..TrainConfig::default()
    };
    let config = ExperimentConfig {
        sizes: vec![20, 40, 80],
        ..ExperimentConfig::new(ExperimentKind::DatasetSize, train)
    };
    let r = run_experiment(&config).map_err(err)?;
    let mse: Vec<f64> = r.runs.iter().map(|run| run.last().map_or(f64::NAN, |e| e.val_mse)).collect();
    let inversions: Vec<f64> = mse.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[1] - w[0]) / w[0]).collect();
    let ok = mse.len() == 3
        && mse[2] < mse[0]
        && inversions.len() <= 1
        && inversions.iter().all(|&rel| rel <= 0.05);
    Ok((
        ok,
        format!(
            "final test mse at 20/40/80 frames: {:.5} / {:.5} / {:.5}; {:.0}s",
            mse[0],
            mse[1],
            mse[2],
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn ac7(root: &Path, data: &Path) -> Outcome {
    let train = TrainConfig {
        epochs: 1,
        depth: 6,
        seed: 7,
        data_dir: data.to_path_buf(),
        out_dir: root.join("ac7"),
        ..TrainConfig::default()
    };
    let config = ExperimentConfig {
        base_layers: vec![16, 32, 64],
        path_trace_spp: 64,
        ..ExperimentConfig::new(ExperimentKind::BaseLayer, train)
    };
    let r = run_experiment(&config).map_err(err)?;
    let ms: Vec<f64> = r.timings.iter().map(|t| t.inference_seconds * 1e3).collect();
    let increasing = ms.len() == 3 && ms.windows(2).all(|w| w[1] > w[0]);
    let k32 = r.timings.iter().find(|t| t.base_layer_k == 32).ok_or("missing K=32 timing")?;
    let ratio = k32.speedup();
    Ok((
        increasing && ratio > 1.0,
        format!(
            "inference ms/frame K=16/32/64: {:.2} / {:.2} / {:.2}; path trace 64 spp {:.1} ms; speedup at K=32 {ratio:.1}×",
            ms[0],
            ms[1],
            ms[2],
            k32.path_trace_seconds * 1e3
        ),
    ))
}

fn files_identical(a: &Path, b: &Path) -> Result<bool, String> {
    let ma = DatasetManifest::load(a).map_err(err)?;
    let mut same = std::fs::read(a.join(MANIFEST_FILE)).map_err(err)? == std::fs::read(b.join(MANIFEST_FILE)).map_err(err)?;
    for f in &ma.frames {
        for p in &f.paths {
            same &= std::fs::read(a.join(p)).map_err(err)? == std::fs::read(b.join(p)).map_err(err)?;
        }
    }
    Ok(same)
}

fn ac8(root: &Path, data: &Path) -> Outcome {
    // Regeneration, the second time on a different thread count.
    let config = SweepConfig {
        light_steps: 2,
        object_steps: 2,
        objects: vec![ObjectKind::Sphere, ObjectKind::Cube],
        resolution: 64,
        spp: 16,
        seed: 8,
        ..SweepConfig::default()
    };
    let (a, b) = (root.join("regen_a"), root.join("regen_b"));
    generate_dataset(&config, &a).map_err(err)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().map_err(err)?;
    pool.install(|| generate_dataset(&config, &b)).map_err(err)?;
    let regen = files_identical(&a, &b)?;

    // Resume: 10 epochs straight versus 5 then 5 more.
    let base = TrainConfig {
        base_layer_k: 8,
        depth: 6,
        disc_base_k: 16,
        seed: 8,
        train_frames: Some(8),
        data_dir: data.to_path_buf(),
        ..TrainConfig::default()
    };
    let straight = train(&TrainConfig {
        epochs: 10,
        out_dir: root.join("ac8_straight"),
        ..base.clone()
    })
    .map_err(err)?;
    let split_dir = root.join("ac8_split");
    train(&TrainConfig {
        epochs: 5,
        out_dir: split_dir.clone(),
        ..base.clone()
    })
    .map_err(err)?;
    let resumed = train(&TrainConfig {
        epochs: 10,
        resume: true,
        out_dir: split_dir,
        ..base.clone()
    })
    .map_err(err)?;
    let (x, y) = (straight.trainer.checkpoint(), resumed.trainer.checkpoint());
    let mut resume_diff = 0.0f32;
    for (p, q) in x.tensors.iter().zip(&y.tensors) {
        if p.name != q.name || p.data.len() != q.data.len() {
            return Ok((false, format!("tensor mismatch {} vs {}", p.name, q.name)));
        }
        for (u, v) in p.data.iter().zip(&q.data) {
            resume_diff = resume_diff.max((u - v).abs());
        }
    }

    // Checkpoint round trip with optimizer state.
    let path = root.join("roundtrip.dicp");
    save_checkpoint(&path, &x).map_err(err)?;
    let back: Checkpoint = load_checkpoint(&path).map_err(err)?;
    let bits = |c: &Checkpoint| -> Vec<Vec<u32>> { c.tensors.iter().map(|t| t.data.iter().map(|v| v.to_bits()).collect()).collect() };
    let round_trip = back.meta == x.meta && bits(&back) == bits(&x) && back.to_bytes() == x.to_bytes();

    Ok((
        regen && round_trip && resume_diff <= 1e-6,
        format!("regeneration identical: {regen}; checkpoint round trip bitwise: {round_trip}; resume max |Δ| {resume_diff:.1e}"),
    ))
}

fn ac9() -> Outcome {
    let (c, h, w) = (3usize, 48usize, 48usize);
    let mut r = rng::stream(9, &[]);
    let img: Vec<f32> = (0..c * h * w).map(|_| r.random::<f32>()).collect();
    fn view(d: &[f32]) -> Result<ImageRef<'_>, String> {
        ImageRef::new(d, 3, 48, 48).map_err(err)
    }
    let s_self = ssim(view(&img)?, view(&img)?).map_err(err)?;

    let a = vec![0.5f32; c * h * w];
    let b = vec![0.25f32; c * h * w];
    let s_const = ssim(view(&a)?, view(&b)?).map_err(err)?;
    let (c1, m1, m2) = (1e-4f64, 0.5f64, 0.25f64);
    let analytic = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);

    let mut noisy = Vec::new();
    for sigma in [0.01, 0.05, 0.1] {
        let normal = Normal::new(0.0, sigma).map_err(err)?;
        let mut nr = rng::stream(9, &[1]);
        let n: Vec<f32> = img.iter().map(|&v| (v as f64 + normal.sample(&mut nr)).clamp(0.0, 1.0) as f32).collect();
        noisy.push(ssim(view(&img)?, view(&n)?).map_err(err)?);
    }
    let monotone = noisy.windows(2).all(|w| w[1] < w[0]) && noisy[0] < s_self;
    Ok((
        (s_self - 1.0).abs() <= 1e-6 && (s_const - analytic).abs() <= 1e-6 && monotone,
        format!(
            "self {s_self:.7}; constant pair {s_const:.6} (analytic {analytic:.6}); noise σ=0.01/0.05/0.1 → {:.4} / {:.4} / {:.4}",
            noisy[0], noisy[1], noisy[2]
        ),
    ))
}

fn report(id: &str, title: &str, outcome: Outcome, failures: &mut u32) {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if !ok {
        *failures += 1;
    }
    println!("{id} {} {title}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let mut failures = 0;
    report("AC1", "autodiff gradient checks", ac1(), &mut failures);
    report("AC2", "architecture contracts", ac2(), &mut failures);
    report("AC3", "renderer analytics", ac3(), &mut failures);
    report("AC4", "single-pair overfit", ac4(), &mut failures);
    match shared_dataset(root.path()) {
        Ok((data, m)) => {
            println!(
                "     dataset: {} frames ({} train, {} val, {} test)",
                m.frames.len(),
                m.count(Split::Train),
                m.count(Split::Val),
                m.count(Split::Test)
            );
            report("AC5", "metrics improve over epochs", ac5(root.path(), &data), &mut failures);
            report("AC6", "metrics improve with training-set size", ac6(root.path(), &data), &mut failures);
            report("AC7", "inference cost grows with K and beats path tracing", ac7(root.path(), &data), &mut failures);
            report("AC8", "determinism and persistence", ac8(root.path(), &data), &mut failures);
        }
        Err(e) => {
            for id in ["AC5", "AC6", "AC7", "AC8"] {
                report(id, "dataset-dependent criterion", Err(format!("dataset generation failed: {e}")), &mut failures);
            }
        }
    }
    report("AC9", "metric oracles", ac9(), &mut failures);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
