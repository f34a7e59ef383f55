//! Finite-difference gradient checks against independent f64 kernels.
//!
//! Every check builds a scalar loss in the engine, runs backward, and
//! compares the resulting gradients with central differences of the same
//! loss evaluated by [`reference`]. Agreement is measured norm-wise:
//! `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)`.

pub mod reference;

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Discriminator, DiscriminatorConfig, ForwardOptions, Generator, GeneratorConfig, ParamSet};
use crate::rng;
use crate::tensor::{
    activation, add, batch_norm2d, bce_loss, concat_channels, conv2d, conv_transpose2d, dropout, l1_loss, mean,
    mul, scale, sum, Activation, BatchNormMode, RunningStats, Tensor, BCE_EPS,
};
use reference::{Array4, KinkPattern};

/// Central-difference step.
pub const STEP: f64 = 1e-3;
/// Largest accepted norm-wise relative error.
pub const TOLERANCE: f64 = 1e-3;
/// Largest accepted forward mismatch between engine and reference.
pub const FORWARD_TOLERANCE: f64 = 1e-4;

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub relative_error: f64,
    /// Max absolute difference between engine and reference outputs.
    pub forward_error: f64,
    /// Number of gradient entries compared.
    pub samples: usize,
    /// Sampled entries skipped because a probe crossed a kink.
    pub rejected: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.relative_error < TOLERANCE && self.forward_error < FORWARD_TOLERANCE
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` along the coordinates in `indices`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], indices: &[usize], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn sample_indices(rng: &mut ChaCha8Rng, len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut v = index::sample(rng, len, max).into_vec();
        v.sort_unstable();
        v
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Uniform in `±[gap, 1]`, away from the kinks of piecewise-linear ops.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn dims4(shape: &[usize]) -> [usize; 4] {
    [shape[0], shape[1], shape[2], shape[3]]
}

/// One operator instance: input values, which of them are differentiated,
/// and both implementations.
struct OpCase<'a> {
    name: String,
    inputs: Vec<(Vec<usize>, Vec<f64>)>,
    differentiate: Vec<bool>,
    engine: Box<dyn Fn(&[Tensor]) -> Result<Tensor> + 'a>,
    reference: Box<dyn Fn(&[Vec<f64>]) -> Vec<f64> + 'a>,
}

const MAX_SAMPLES_PER_INPUT: usize = 48;

/// Loss `Σ op(x) ⊙ r` with random projection `r`.
fn run_case(case: OpCase<'_>, rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let tensors: Vec<Tensor> = case
        .inputs
        .iter()
        .zip(&case.differentiate)
        .map(|((shape, data), &d)| Tensor::from_vec(to_f32(data), shape).map(|t| t.into_leaf(d)))
        .collect::<Result<_>>()?;
    let out = (case.engine)(&tensors)?;
    let projection = uniform(rng, out.numel(), -1.0, 1.0);
    let r = Tensor::from_vec(to_f32(&projection), out.shape())?;
    let loss = sum(&mul(&out, &r)?);
    loss.backward()?;

    let values: Vec<Vec<f64>> = case.inputs.iter().map(|(_, d)| d.clone()).collect();
    let ref_out = (case.reference)(&values);
    let forward_error = ref_out
        .iter()
        .zip(out.data())
        .map(|(a, &b)| (a - b as f64).abs())
        .fold(0.0, f64::max);

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, t) in tensors.iter().enumerate() {
        if !case.differentiate[k] {
            continue;
        }
        let grad = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        let idx = sample_indices(rng, t.numel(), MAX_SAMPLES_PER_INPUT);
        let mut vals = values.clone();
        let fd = central_difference(
            |x| {
                vals[k].copy_from_slice(x);
                (case.reference)(&vals).iter().zip(&projection).map(|(a, b)| a * b).sum()
            },
            &values[k],
            &idx,
            STEP,
        );
        analytic.extend(idx.iter().map(|&i| grad[i] as f64));
        numeric.extend(fd);
    }
    Ok(GradCheck {
        name: case.name,
        relative_error: relative_error(&analytic, &numeric),
        forward_error,
        samples: analytic.len(),
        rejected: 0,
    })
}

fn conv_case<'a>(rng: &mut ChaCha8Rng, transposed: bool, tag: usize) -> OpCase<'a> {
    let n = rng.random_range(1..=2);
    let cin = rng.random_range(1..=3);
    let cout = rng.random_range(1..=3);
    let k = rng.random_range(2..=4);
    let stride = rng.random_range(1..=2);
    let pad = rng.random_range(0..k.min(2));
    let h = rng.random_range(k.max(3)..=6);
    let w = rng.random_range(k.max(3)..=6);
    let wshape = if transposed { vec![cin, cout, k, k] } else { vec![cout, cin, k, k] };
    let inputs = vec![
        (vec![n, cin, h, w], uniform(rng, n * cin * h * w, -1.0, 1.0)),
        (wshape.clone(), uniform(rng, cin * cout * k * k, -1.0, 1.0)),
        (vec![cout], uniform(rng, cout, -1.0, 1.0)),
    ];
    let xdims = [n, cin, h, w];
    let wdims = dims4(&wshape);
    OpCase {
        name: format!(
            "{}#{tag} x={xdims:?} w={wdims:?} s={stride} p={pad}",
            if transposed { "conv_transpose2d" } else { "conv2d" }
        ),
        inputs,
        differentiate: vec![true; 3],
        engine: Box::new(move |t| {
            if transposed {
                conv_transpose2d(&t[0], &t[1], Some(&t[2]), stride, pad)
            } else {
                conv2d(&t[0], &t[1], Some(&t[2]), stride, pad)
            }
        }),
        reference: Box::new(move |v| {
            let x = Array4::new(xdims, v[0].clone());
            let wt = Array4::new(wdims, v[1].clone());
            let y = if transposed {
                reference::conv_transpose2d(&x, &wt, Some(&v[2]), stride, pad)
            } else {
                reference::conv2d(&x, &wt, Some(&v[2]), stride, pad)
            };
            y.data
        }),
    }
}

fn batch_norm_case<'a>(rng: &mut ChaCha8Rng, train: bool, tag: usize) -> OpCase<'a> {
    let dims = [
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        rng.random_range(2..=4),
        rng.random_range(2..=4),
    ];
    let c = dims[1];
    let numel = dims.iter().product();
    let mean_v = uniform(rng, c, -0.5, 0.5);
    let var_v = uniform(rng, c, 0.5, 2.0);
    let eps = 1e-5;
    let inputs = vec![
        (dims.to_vec(), uniform(rng, numel, -2.0, 2.0)),
        (vec![c], uniform(rng, c, 0.5, 1.5)),
        (vec![c], uniform(rng, c, -0.5, 0.5)),
    ];
    let (m32, v32) = (to_f32(&mean_v), to_f32(&var_v));
    OpCase {
        name: format!("batch_norm2d[{}]#{tag} x={dims:?}", if train { "train" } else { "eval" }),
        inputs,
        differentiate: vec![true; 3],
        engine: Box::new(move |t| {
            let stats = RunningStats {
                mean: m32.clone(),
                var: v32.clone(),
                momentum: 0.1,
            };
            let mode = if train {
                BatchNormMode::Train(None)
            } else {
                BatchNormMode::Eval(&stats)
            };
            batch_norm2d(&t[0], &t[1], &t[2], eps as f32, mode)
        }),
        reference: Box::new(move |v| {
            let x = Array4::new(dims, v[0].clone());
            if train {
                reference::batch_norm_train(&x, &v[1], &v[2], eps).data
            } else {
                reference::batch_norm_eval(&x, &v[1], &v[2], &mean_v, &var_v, eps).data
            }
        }),
    }
}

fn unary_case<'a>(
    rng: &mut ChaCha8Rng,
    name: &str,
    tag: usize,
    engine: impl Fn(&Tensor) -> Result<Tensor> + 'a,
    reference: impl Fn(&[f64]) -> Vec<f64> + 'a,
) -> OpCase<'a> {
    let dims = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
    let numel = dims.iter().product();
    OpCase {
        name: format!("{name}#{tag} x={dims:?}"),
        inputs: vec![(dims.to_vec(), away_from_zero(rng, numel, 0.05).iter().map(|v| 2.0 * v).collect())],
        differentiate: vec![true],
        engine: Box::new(move |t| engine(&t[0])),
        reference: Box::new(move |v| reference(&v[0])),
    }
}

fn binary_case<'a>(
    rng: &mut ChaCha8Rng,
    name: &str,
    tag: usize,
    engine: impl Fn(&Tensor, &Tensor) -> Result<Tensor> + 'a,
    reference: impl Fn(&[f64], &[f64]) -> Vec<f64> + 'a,
) -> OpCase<'a> {
    let dims = vec![rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
    let numel = dims.iter().product();
    OpCase {
        name: format!("{name}#{tag} x={dims:?}"),
        inputs: vec![
            (dims.clone(), uniform(rng, numel, -1.0, 1.0)),
            (dims, uniform(rng, numel, -1.0, 1.0)),
        ],
        differentiate: vec![true, true],
        engine: Box::new(move |t| engine(&t[0], &t[1])),
        reference: Box::new(move |v| reference(&v[0], &v[1])),
    }
}

fn activation_ref(kind: Activation) -> impl Fn(&[f64]) -> Vec<f64> {
    move |x| {
        let a = Array4::new([1, 1, 1, x.len()], x.to_vec());
        match kind {
            Activation::LeakyRelu(s) => reference::leaky_relu(&a, s as f64),
            Activation::Relu => reference::relu(&a),
            Activation::Tanh => reference::tanh(&a),
            Activation::Sigmoid => reference::sigmoid(&a),
        }
        .data
    }
}

/// Every differentiable primitive on `instances` random small inputs each.
pub fn op_suite(seed: u64, instances: usize) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for tag in 0..instances {
        let mut rng = rng::stream(seed, &[0x6C, tag as u64]);
        let mut cases = vec![
            conv_case(&mut rng, false, tag),
            conv_case(&mut rng, true, tag),
            batch_norm_case(&mut rng, true, tag),
            batch_norm_case(&mut rng, false, tag),
        ];
        for (name, kind) in [
            ("leaky_relu", Activation::LEAKY),
            ("relu", Activation::Relu),
            ("tanh", Activation::Tanh),
            ("sigmoid", Activation::Sigmoid),
        ] {
            cases.push(unary_case(&mut rng, name, tag, move |t| Ok(activation(t, kind)), activation_ref(kind)));
        }
        let drop_seed = rng.random::<u64>();
        cases.push(unary_case(
            &mut rng,
            "dropout",
            tag,
            move |t| dropout(t, 0.5, true, drop_seed),
            move |x| {
                // The mask is a sample, not a function of x; draw it once.
                let ones = Tensor::full(&[x.len()], 1.0);
                let mask = dropout(&ones, 0.5, true, drop_seed).expect("valid p");
                x.iter().zip(mask.data()).map(|(a, &m)| a * m as f64).collect()
            },
        ));
        let factor = rng.random_range(-2.0..2.0);
        cases.push(unary_case(
            &mut rng,
            "scale",
            tag,
            move |t| Ok(scale(t, factor as f32)),
            move |x| x.iter().map(|v| v * factor as f32 as f64).collect(),
        ));
        cases.push(unary_case(&mut rng, "sum", tag, |t| Ok(sum(t)), |x| vec![x.iter().sum()]));
        cases.push(unary_case(
            &mut rng,
            "mean",
            tag,
            |t| Ok(mean(t)),
            |x| vec![x.iter().sum::<f64>() / x.len() as f64],
        ));
        cases.push(binary_case(&mut rng, "add", tag, add, |a, b| a.iter().zip(b).map(|(x, y)| x + y).collect()));
        cases.push(binary_case(&mut rng, "mul", tag, mul, |a, b| a.iter().zip(b).map(|(x, y)| x * y).collect()));
        cases.push(concat_case(&mut rng, tag));
        cases.push(l1_case(&mut rng, tag));
        cases.push(bce_case(&mut rng, tag));
        for case in cases {
            out.push(run_case(case, &mut rng)?);
        }
    }
    Ok(out)
}

fn concat_case<'a>(rng: &mut ChaCha8Rng, tag: usize) -> OpCase<'a> {
    let (n, h, w) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3));
    let (ca, cb) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let (da, db) = ([n, ca, h, w], [n, cb, h, w]);
    OpCase {
        name: format!("concat_channels#{tag} a={da:?} b={db:?}"),
        inputs: vec![
            (da.to_vec(), uniform(rng, n * ca * h * w, -1.0, 1.0)),
            (db.to_vec(), uniform(rng, n * cb * h * w, -1.0, 1.0)),
        ],
        differentiate: vec![true, true],
        engine: Box::new(|t| concat_channels(&[&t[0], &t[1]])),
        reference: Box::new(move |v| {
            reference::concat_channels(&Array4::new(da, v[0].clone()), &Array4::new(db, v[1].clone())).data
        }),
    }
}

fn l1_case<'a>(rng: &mut ChaCha8Rng, tag: usize) -> OpCase<'a> {
    let numel = rng.random_range(4..=24);
    let target = uniform(rng, numel, -1.0, 1.0);
    let offset = away_from_zero(rng, numel, 0.05);
    let pred = target.iter().zip(&offset).map(|(t, o)| t + o).collect();
    OpCase {
        name: format!("l1_loss#{tag} n={numel}"),
        inputs: vec![(vec![numel], pred), (vec![numel], target)],
        differentiate: vec![true, true],
        engine: Box::new(|t| l1_loss(&t[0], &t[1])),
        reference: Box::new(|v| vec![reference::l1(&v[0], &v[1])]),
    }
}

fn bce_case<'a>(rng: &mut ChaCha8Rng, tag: usize) -> OpCase<'a> {
    let numel = rng.random_range(4..=24);
    OpCase {
        name: format!("bce_loss#{tag} n={numel}"),
        inputs: vec![
            (vec![numel], uniform(rng, numel, 0.05, 0.95)),
            (vec![numel], uniform(rng, numel, 0.0, 1.0)),
        ],
        differentiate: vec![true, true],
        engine: Box::new(|t| bce_loss(&t[0], &t[1])),
        reference: Box::new(|v| vec![reference::bce(&v[0], &v[1], BCE_EPS as f64)]),
    }
}

/// Parameter entries sampled per tensor in composed checks.
const SAMPLES_PER_PARAM: usize = 4;
/// Input entries sampled in composed checks.
const SAMPLES_INPUT: usize = 16;

/// Move every parameter to a generic random point: unit-scale weights and
/// nonzero shifts. At init, zero shifts put whole channels exactly on ReLU
/// kinks, where the loss has no derivative.
fn randomize(set: &mut ParamSet, rng: &mut ChaCha8Rng) -> Result<()> {
    let names = set.names().to_vec();
    for (name, t) in names.iter().zip(set.tensors_mut()) {
        let shape = t.shape().to_vec();
        let n = t.numel();
        let data = if name.ends_with(".weight") {
            let fan_in = n / shape[0].max(shape[1]);
            let a = (3.0 / fan_in as f64).sqrt();
            uniform(rng, n, -a, a)
        } else if name.ends_with(".gamma") {
            uniform(rng, n, 0.5, 1.5)
        } else {
            away_from_zero(rng, n, 0.1).iter().map(|v| 0.5 * v).collect()
        };
        *t = Tensor::parameter(to_f32(&data), &shape)?;
    }
    Ok(())
}

fn reference_params(set: &ParamSet) -> reference::Params {
    set.names()
        .iter()
        .zip(set.tensors())
        .map(|(n, t)| (n.clone(), (t.shape().to_vec(), to_f64(t.data()))))
        .collect()
}

/// A loss evaluated by the reference, recording its kink pattern.
type TracedLoss<'a> = dyn FnMut(&[f64], &mut KinkPattern) -> f64 + 'a;

/// Central differences at up to `want` coordinates of `x`, visited in
/// random order. A coordinate is used only if both probes `x ± h·e_i` lie
/// on the same smooth piece as `x`; the others are counted and skipped.
fn smooth_difference(
    f: &mut TracedLoss<'_>,
    x: &[f64],
    want: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<f64>, usize) {
    let mut pattern = KinkPattern::new();
    f(x, &mut pattern);
    let mut probe = x.to_vec();
    let mut scratch = KinkPattern::new();
    let (mut idx, mut fd, mut rejected) = (Vec::new(), Vec::new(), 0);
    let attempts = x.len().min(want * 16);
    for i in index::sample(rng, x.len(), attempts) {
        if idx.len() == want {
            break;
        }
        let mut side = |v: f64, probe: &mut Vec<f64>| {
            probe[i] = v;
            scratch.clear();
            let loss = f(probe, &mut scratch);
            (loss, scratch == pattern)
        };
        let (up, up_ok) = side(x[i] + STEP, &mut probe);
        let (down, down_ok) = side(x[i] - STEP, &mut probe);
        probe[i] = x[i];
        if up_ok && down_ok {
            idx.push(i);
            fd.push((up - down) / (2.0 * STEP));
        } else {
            rejected += 1;
        }
    }
    (idx, fd, rejected)
}

#[derive(Default)]
struct Comparison {
    analytic: Vec<f64>,
    numeric: Vec<f64>,
    rejected: usize,
}

impl Comparison {
    fn add(&mut self, grad: &[f32], f: &mut TracedLoss<'_>, x: &[f64], want: usize, rng: &mut ChaCha8Rng) {
        let (idx, fd, rejected) = smooth_difference(f, x, want, rng);
        self.analytic.extend(idx.iter().map(|&i| grad[i] as f64));
        self.numeric.extend(fd);
        self.rejected += rejected;
    }

    /// Every parameter tensor of `set`; `loss` maps reference parameters to
    /// the scalar loss.
    fn add_params(
        &mut self,
        set: &ParamSet,
        rng: &mut ChaCha8Rng,
        loss: &dyn Fn(&reference::Params, &mut KinkPattern) -> f64,
    ) {
        let base = reference_params(set);
        for (name, t) in set.names().iter().zip(set.tensors()) {
            let grad = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
            let mut probe: HashMap<_, _> = base.clone();
            let mut f = |x: &[f64], k: &mut KinkPattern| {
                probe.get_mut(name).expect("present").1.copy_from_slice(x);
                loss(&probe, k)
            };
            self.add(&grad, &mut f, &base[name].1, SAMPLES_PER_PARAM, rng);
        }
    }

    fn finish(self, name: String, forward_error: f64) -> GradCheck {
        GradCheck {
            name,
            relative_error: relative_error(&self.analytic, &self.numeric),
            forward_error,
            samples: self.analytic.len(),
            rejected: self.rejected,
        }
    }
}

/// Generator followed by L1, gradients with respect to every parameter
/// tensor and the input. Batch statistics are used and dropout is disabled.
pub fn generator_check(seed: u64, config: GeneratorConfig) -> Result<GradCheck> {
    let mut gen = Generator::new(config, seed)?;
    let mut rng = rng::stream(seed, &[0x6E]);
    randomize(gen.params_mut(), &mut rng)?;
    let s = config.resolution();
    let xdims = [1, config.in_channels, s, s];
    let ydims = [1, config.out_channels, s, s];
    let x0 = uniform(&mut rng, xdims.iter().product(), -1.0, 1.0);

    let input = Tensor::from_vec(to_f32(&x0), &xdims)?.requires_grad_();
    let mut opts = ForwardOptions::train(0.0, seed);
    opts.update_stats = false;
    let out = gen.forward(&input, &opts)?;
    // Keep every residual clear of the L1 kink.
    let target: Vec<f32> = out
        .data()
        .iter()
        .zip(away_from_zero(&mut rng, out.numel(), 0.05))
        .map(|(&p, o)| (p as f64 + o) as f32)
        .collect();
    let target_t = Tensor::from_vec(target, &ydims)?;
    let target = to_f64(target_t.data());
    let loss = l1_loss(&out, &target_t)?;
    loss.backward()?;

    let loss_of = |p: &reference::Params, x: &[f64], k: &mut KinkPattern| {
        let y = reference::generator_forward_traced(p, &config, &Array4::new(xdims, x.to_vec()), k);
        reference::l1_traced(&y.data, &target, k)
    };
    let base = reference_params(gen.params());
    let ref_out = reference::generator_forward(&base, &config, &Array4::new(xdims, x0.clone()));
    let forward_error = max_abs_diff(&ref_out.data, out.data());

    let mut cmp = Comparison::default();
    cmp.add_params(gen.params(), &mut rng, &|p, k| loss_of(p, &x0, k));
    let gx = input.grad().expect("input requires grad");
    cmp.add(&gx, &mut |x, k| loss_of(&base, x, k), &x0, SAMPLES_INPUT, &mut rng);
    Ok(cmp.finish(
        format!("generator+l1 K={} depth={}", config.base_layer_k, config.depth),
        forward_error,
    ))
}

/// Discriminator followed by BCE against the "real" label at `size×size`.
pub fn discriminator_check(seed: u64, config: DiscriminatorConfig, size: usize) -> Result<GradCheck> {
    let mut disc = Discriminator::new(config, seed)?;
    let mut rng = rng::stream(seed, &[0xDC]);
    randomize(disc.params_mut(), &mut rng)?;
    let cdims = [1, config.in_channels - 3, size, size];
    let idims = [1, 3, size, size];
    let cond = uniform(&mut rng, cdims.iter().product(), -1.0, 1.0);
    let img = uniform(&mut rng, idims.iter().product(), -1.0, 1.0);
    let cond_t = Tensor::from_vec(to_f32(&cond), &cdims)?;
    let img_t = Tensor::from_vec(to_f32(&img), &idims)?.requires_grad_();
    let mut opts = ForwardOptions::train(0.0, seed);
    opts.update_stats = false;
    let out = disc.forward(&cond_t, &img_t, &opts)?;
    let ones = Tensor::full(out.shape(), 1.0);
    let loss = bce_loss(&out, &ones)?;
    loss.backward()?;

    let ca = Array4::new(cdims, cond.clone());
    let loss_of = |p: &reference::Params, im: &[f64], k: &mut KinkPattern| {
        let y = reference::discriminator_forward_traced(p, &config, &ca, &Array4::new(idims, im.to_vec()), k);
        reference::bce_traced(&y.data, &vec![1.0; y.data.len()], BCE_EPS as f64, k)
    };
    let base = reference_params(disc.params());
    let ref_out = reference::discriminator_forward(&base, &config, &ca, &Array4::new(idims, img.clone()));
    let forward_error = max_abs_diff(&ref_out.data, out.data());

    let mut cmp = Comparison::default();
    cmp.add_params(disc.params(), &mut rng, &|p, k| loss_of(p, &img, k));
    let gi = img_t.grad().expect("image requires grad");
    cmp.add(&gi, &mut |x, k| loss_of(&base, x, k), &img, SAMPLES_INPUT, &mut rng);
    Ok(cmp.finish(
        format!("discriminator+bce K={} {size}×{size}", config.base_layer_k),
        forward_error,
    ))
}

fn max_abs_diff(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| (x - y as f64).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(relative_error(&[1.0, 2.0], &[1.0, 2.0]) < 1e-15);
    }

    #[test]
    fn central_difference_of_cubic() {
        let g = central_difference(|x| x[0].powi(3) + x[1], &[2.0, 5.0], &[0, 1], 1e-4);
        assert!((g[0] - 12.0).abs() < 1e-6);
        assert!((g[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn every_primitive_matches_reference() {
        for r in op_suite(7, 3).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn tiny_generator_matches_reference() {
        for seed in 0..4 {
            let r = generator_check(seed, GeneratorConfig::new(2, 3)).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn tiny_discriminator_matches_reference() {
        for seed in 0..2 {
            let r = discriminator_check(seed, DiscriminatorConfig::new(2), 32).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
