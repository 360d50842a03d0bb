//! Central finite-difference checks of every backward pass, in `f64`.
//!
//! Each check draws random shapes and values, runs the analytic backward
//! pass and compares every gradient tensor with central differences.
//! Errors are norm-wise per tensor, `|a − n| / max(|a|, |n|, FLOOR)`; the
//! floor only matters for gradients that vanish identically, such as a
//! convolution bias feeding a batch norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Network, NetworkSpec};
use crate::nn::*;
use crate::tensor::{Matrix, Tensor3};

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-6;

/// Largest error seen for one operation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_err: f64,
    /// Tensor and shape where the maximum occurred.
    pub worst: String,
}

impl GradCheck {
    fn new(op: &'static str) -> Self {
        Self {
            op,
            cases: 0,
            max_rel_err: 0.0,
            worst: String::new(),
        }
    }

    fn record(
        &mut self,
        tensor: &str,
        shape: impl std::fmt::Debug,
        analytic: &[f64],
        numeric: &[f64],
    ) {
        let e = relative_error(analytic, numeric);
        if e >= self.max_rel_err {
            self.max_rel_err = e;
            self.worst = format!("{tensor} at {shape:?}");
        }
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / norm(analytic).max(norm(numeric)).max(FLOOR)
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every `i`.
pub fn central_differences(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + STEP;
            let up = f(x);
            x[i] = orig - STEP;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `L = Σ r ⊙ f(param)` with respect to one parameter vector.
fn param_differences(values: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut v = values.to_vec();
    central_differences(&mut v, |v| loss(v))
}

pub fn check_conv1d(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("conv1d");
    for _ in 0..cases {
        let (b, cin, cout) = (
            rng.gen_range(1..=10),
            rng.gen_range(1..=4),
            rng.gen_range(1..=4),
        );
        let (k, s) = (rng.gen_range(1..=5), rng.gen_range(1..=3));
        let p = rng.gen_range(0..=k);
        let len = rng.gen_range(k.max(2)..=12);
        let shape = (b, cin, cout, k, s, p, len);
        let mut conv = Conv1d::<f64>::new(cin, cout, k, s, p).expect("valid conv");
        conv.weight.value = uniform(&mut rng, conv.weight.len());
        conv.bias.value = uniform(&mut rng, cout);
        let mut x = uniform(&mut rng, b * cin * len);
        let lout = conv.output_len(len).expect("fits");
        let r = uniform(&mut rng, b * cout * lout);

        let input = Tensor3::from_vec(x.clone(), b, cin, len).expect("shape");
        let (_, cache) = conv.forward(&input).expect("forward");
        let gx = conv
            .backward(
                &Tensor3::from_vec(r.clone(), b, cout, lout).expect("shape"),
                &cache,
            )
            .expect("backward");
        let loss = |c: &Conv1d<f64>, x: &[f64]| {
            let y = c
                .infer(&Tensor3::from_vec(x.to_vec(), b, cin, len).expect("shape"))
                .expect("infer");
            dot(&r, y.data())
        };
        let n = central_differences(&mut x, |x| loss(&conv, x));
        out.record("input", shape, gx.data(), &n);
        let mut probe = conv.clone();
        let n = param_differences(&conv.weight.value, |w| {
            probe.weight.value.copy_from_slice(w);
            loss(&probe, &x)
        });
        out.record("weight", shape, &conv.weight.grad, &n);
        let mut probe = conv.clone();
        let n = param_differences(&conv.bias.value, |v| {
            probe.bias.value.copy_from_slice(v);
            loss(&probe, &x)
        });
        out.record("bias", shape, &conv.bias.grad, &n);
        out.cases += 1;
    }
    out
}

pub fn check_batchnorm(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("batchnorm");
    for _ in 0..cases {
        let (b, c, len) = (
            rng.gen_range(1..=4),
            rng.gen_range(1..=4),
            rng.gen_range(2..=8),
        );
        let shape = (b, c, len);
        let mut bn = BatchNorm1d::<f64>::new(c);
        bn.scale.value = uniform(&mut rng, c);
        bn.shift.value = uniform(&mut rng, c);
        let mut x = uniform(&mut rng, b * c * len);
        let r = uniform(&mut rng, b * c * len);
        let (_, cache) = bn
            .forward_train(&Tensor3::from_vec(x.clone(), b, c, len).expect("shape"))
            .expect("forward");
        let gx = bn
            .backward(
                &Tensor3::from_vec(r.clone(), b, c, len).expect("shape"),
                &cache,
            )
            .expect("backward");
        let loss = |bn: &BatchNorm1d<f64>, x: &[f64]| {
            let mut bn = bn.clone();
            let (y, _) = bn
                .forward_train(&Tensor3::from_vec(x.to_vec(), b, c, len).expect("shape"))
                .expect("forward");
            dot(&r, y.data())
        };
        let n = central_differences(&mut x, |x| loss(&bn, x));
        out.record("input", shape, gx.data(), &n);
        let mut probe = bn.clone();
        let n = param_differences(&bn.scale.value, |v| {
            probe.scale.value.copy_from_slice(v);
            loss(&probe, &x)
        });
        out.record("scale", shape, &bn.scale.grad, &n);
        let mut probe = bn.clone();
        let n = param_differences(&bn.shift.value, |v| {
            probe.shift.value.copy_from_slice(v);
            loss(&probe, &x)
        });
        out.record("shift", shape, &bn.shift.grad, &n);
        out.cases += 1;
    }
    out
}

/// Inputs are kept at least `1e-3` away from the kink.
pub fn check_relu(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("relu");
    for _ in 0..cases {
        let (b, c, len) = (
            rng.gen_range(1..=4),
            rng.gen_range(1..=4),
            rng.gen_range(1..=10),
        );
        let mut x: Vec<f64> = (0..b * c * len)
            .map(|_| {
                let v: f64 = rng.gen_range(1e-3..2.0);
                if rng.gen() {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let r = uniform(&mut rng, x.len());
        let (_, mask) = relu_forward(&Tensor3::from_vec(x.clone(), b, c, len).expect("shape"));
        let gx = relu_backward(
            &Tensor3::from_vec(r.clone(), b, c, len).expect("shape"),
            &mask,
        )
        .expect("backward");
        let n = central_differences(&mut x, |x| {
            dot(
                &r,
                relu_forward(&Tensor3::from_vec(x.to_vec(), b, c, len).expect("shape"))
                    .0
                    .data(),
            )
        });
        out.record("input", (b, c, len), gx.data(), &n);
        out.cases += 1;
    }
    out
}

pub fn check_pool(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("global average pool");
    for _ in 0..cases {
        let (b, c, len) = (
            rng.gen_range(1..=4),
            rng.gen_range(1..=5),
            rng.gen_range(1..=10),
        );
        let mut x = uniform(&mut rng, b * c * len);
        let r = uniform(&mut rng, b * c);
        let gx = global_avg_pool_backward(&Matrix::from_vec(r.clone(), b, c).expect("shape"), len)
            .expect("backward");
        let n = central_differences(&mut x, |x| {
            dot(
                &r,
                global_avg_pool_forward(&Tensor3::from_vec(x.to_vec(), b, c, len).expect("shape"))
                    .data(),
            )
        });
        out.record("input", (b, c, len), gx.data(), &n);
        out.cases += 1;
    }
    out
}

pub fn check_linear(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("linear");
    for _ in 0..cases {
        let (b, fin, fout) = (
            rng.gen_range(1..=5),
            rng.gen_range(1..=6),
            rng.gen_range(1..=4),
        );
        let shape = (b, fin, fout);
        let mut lin = Linear::<f64>::new(fin, fout);
        lin.weight.value = uniform(&mut rng, fin * fout);
        lin.bias.value = uniform(&mut rng, fout);
        let mut x = uniform(&mut rng, b * fin);
        let r = uniform(&mut rng, b * fout);
        let (_, cache) = lin
            .forward(&Matrix::from_vec(x.clone(), b, fin).expect("shape"))
            .expect("forward");
        let gx = lin
            .backward(
                &Matrix::from_vec(r.clone(), b, fout).expect("shape"),
                &cache,
            )
            .expect("backward");
        let loss = |l: &Linear<f64>, x: &[f64]| {
            dot(
                &r,
                l.infer(&Matrix::from_vec(x.to_vec(), b, fin).expect("shape"))
                    .expect("infer")
                    .data(),
            )
        };
        let n = central_differences(&mut x, |x| loss(&lin, x));
        out.record("input", shape, gx.data(), &n);
        let mut probe = lin.clone();
        let n = param_differences(&lin.weight.value, |w| {
            probe.weight.value.copy_from_slice(w);
            loss(&probe, &x)
        });
        out.record("weight", shape, &lin.weight.grad, &n);
        let mut probe = lin.clone();
        let n = param_differences(&lin.bias.value, |v| {
            probe.bias.value.copy_from_slice(v);
            loss(&probe, &x)
        });
        out.record("bias", shape, &lin.bias.grad, &n);
        out.cases += 1;
    }
    out
}

pub fn check_bce(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("bce_with_logits");
    for _ in 0..cases {
        let (b, c) = (rng.gen_range(1..=8), rng.gen_range(1..=4));
        let mut x: Vec<f64> = (0..b * c).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let z: Vec<f64> = (0..b * c).map(|_| rng.gen_range(0..=1) as f64).collect();
        let targets = Matrix::from_vec(z, b, c).expect("shape");
        let (_, g) = bce_with_logits(&Matrix::from_vec(x.clone(), b, c).expect("shape"), &targets)
            .expect("loss");
        let n = central_differences(&mut x, |x| {
            bce_with_logits(
                &Matrix::from_vec(x.to_vec(), b, c).expect("shape"),
                &targets,
            )
            .expect("loss")
            .0
        });
        out.record("logits", (b, c), g.data(), &n);
        out.cases += 1;
    }
    out
}

/// Whole two-block network (kernel 3, length 16) under BCE, train mode,
/// with random widths, strides and batch sizes.
pub fn check_tiny_network(cases: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::new("tiny network");
    for case in 0..cases {
        let widths = (rng.gen_range(2..=5), rng.gen_range(2..=6));
        let strides = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let spec = NetworkSpec::from_schedule(
            3,
            16,
            &[(widths.0, strides.0), (widths.1, strides.1)],
            3,
            3,
        );
        let b = rng.gen_range(2..=5);
        let shape = (b, widths, strides);
        let mut net = Network::<f64>::init(&spec, seed ^ case as u64).expect("valid spec");
        // move biases and norm affine terms off their 0/1 initial values
        for (_, p) in net.named_params_mut() {
            if p.value.iter().all(|&v| v == 0.0 || v == 1.0) {
                p.value
                    .iter_mut()
                    .for_each(|v| *v += rng.gen_range(-0.3..0.3));
            }
        }
        let x = Tensor3::from_vec(uniform(&mut rng, b * 3 * 16), b, 3, 16).expect("shape");
        let z: Vec<f64> = (0..b * 3).map(|_| rng.gen_range(0..=1) as f64).collect();
        let targets = Matrix::from_vec(z, b, 3).expect("shape");

        net.zero_grad();
        let (logits, cache) = net.forward(&x, Mode::Train).expect("forward");
        let (_, g) = bce_with_logits(&logits, &targets).expect("loss");
        net.backward(&cache, &g).expect("backward");

        let mut probe = net.clone();
        let params = net.named_params();
        for (pi, (name, p)) in params.iter().enumerate() {
            let n = param_differences(&p.value, |v| {
                probe.named_params_mut()[pi].1.value.copy_from_slice(v);
                let (l, _) = probe.forward(&x, Mode::Train).expect("forward");
                bce_with_logits(&l, &targets).expect("loss").0
            });
            probe.named_params_mut()[pi]
                .1
                .value
                .copy_from_slice(&p.value);
            out.record(name, shape, &p.grad, &n);
        }
        out.cases += 1;
    }
    out
}

/// Every single-operation check with `cases` random shapes each.
pub fn check_all_ops(cases: usize, seed: u64) -> Vec<GradCheck> {
    vec![
        check_conv1d(cases, seed),
        check_batchnorm(cases, seed + 1),
        check_relu(cases, seed + 2),
        check_pool(cases, seed + 3),
        check_linear(cases, seed + 4),
        check_bce(cases, seed + 5),
    ]
}
