use deepgi_core::nn::{load_checkpoint, save_checkpoint, ForwardOptions};
use deepgi_core::{Checkpoint, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, Tensor, TrainingMeta};

// Counted by hand: a stage holds 16·cin·cout weights plus either a bias
// (no batch norm) or gamma and beta (with batch norm).
const GEN_K32_D8: usize = 13_613_411;
const GEN_K32_D6: usize = 7_319_907;
const DISC_K64: usize = 2_777_921;

#[test]
fn parameter_counts_match_closed_form() {
    assert_eq!(Generator::new(GeneratorConfig::new(32, 8), 0).unwrap().params().numel(), GEN_K32_D8);
    assert_eq!(Generator::new(GeneratorConfig::new(32, 6), 0).unwrap().params().numel(), GEN_K32_D6);
    assert_eq!(Discriminator::new(DiscriminatorConfig::new(64), 0).unwrap().params().numel(), DISC_K64);
}

#[test]
fn generator_shape_law() {
    for d in [6usize, 7] {
        let s = 1 << d;
        let mut g = Generator::new(GeneratorConfig::new(4, d), 1).unwrap();
        let x = Tensor::full(&[2, 12, s, s], 0.3);
        let y = g.forward(&x, &ForwardOptions::train(0.5, 2)).unwrap();
        assert_eq!(y.shape(), &[2, 3, s, s]);
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn fresh_discriminator_is_undecided() {
    let mut d = Discriminator::new(DiscriminatorConfig::new(8), 3).unwrap();
    let cond = Tensor::full(&[2, 12, 64, 64], 0.1);
    let real = Tensor::full(&[2, 3, 64, 64], 0.5);
    let fake = Tensor::full(&[2, 3, 64, 64], -0.5);
    for img in [&real, &fake] {
        let p = d.forward(&cond, img, &ForwardOptions::eval()).unwrap();
        let score = Discriminator::score(&p).item();
        assert!((score - 0.5).abs() < 0.2, "{score}");
        let mean = p.data().iter().map(|&v| v as f64).sum::<f64>() / p.numel() as f64;
        assert!((mean - score as f64).abs() < 1e-6);
    }
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let g32 = Generator::new(GeneratorConfig::new(32, 6), 5).unwrap();
    let d = Discriminator::new(DiscriminatorConfig::new(4), 5).unwrap();
    let path = dir.path().join("k32.dicp");
    save_checkpoint(&path, &Checkpoint::capture(&g32, &d, None, TrainingMeta::default())).unwrap();
    let back = load_checkpoint(&path).unwrap().generator().unwrap();
    for (a, b) in g32.params().tensors().iter().zip(back.params().tensors()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }

    let g64 = Generator::new(GeneratorConfig::new(64, 6), 5).unwrap();
    let k64 = Checkpoint::capture(&g64, &d, None, TrainingMeta::default());
    let mut target = g32.clone();
    let mut disc = d.clone();
    let err = k64.restore_into(&mut target, &mut disc).unwrap_err().to_string();
    assert!(err.contains("gen.enc0.weight"), "{err}");
}
