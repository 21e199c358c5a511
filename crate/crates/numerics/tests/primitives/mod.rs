//! Randomized finite-difference trials for every differentiable primitive.
//! Each trial returns its worst relative error; shared by the gradient tests
//! and the acceptance run.

use babel_numerics::{grad_check, grad_check_seeded, Graph, Padding, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Trial = fn(&mut ChaCha8Rng) -> f64;

pub const TRIALS: u64 = 100;
const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

/// Values bounded away from zero, for functions with a kink at 0.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Projects `y` onto fixed random weights so every output coordinate matters.
fn project(g: &mut Graph, y: Var, w: &Tensor) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let wv = g.constant(w.reshape(&shape).unwrap());
    g.dot(y, wv)
}

/// Worst error of `trial` over [`TRIALS`] seeded repetitions.
pub fn worst(name: &str, trial: Trial) -> f64 {
    (0..TRIALS)
        .map(|seed| trial(&mut ChaCha8Rng::seed_from_u64(seed * 7919 + name.len() as u64)))
        .fold(0.0, f64::max)
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5))
}

pub fn matmul_both_sides(rng: &mut ChaCha8Rng) -> f64 {
    let (m, k, n) = dims(rng);
    let a = rand_t(rng, &[m, k]);
    let b = rand_t(rng, &[k, n]);
    let w = rand_t(rng, &[m, n]);
    let left = grad_check(
        |g, x| {
            let bv = g.constant(b.clone());
            let y = g.matmul(x, bv)?;
            project(g, y, &w)
        },
        &a,
        EPS,
    )
    .unwrap();
    let right = grad_check(
        |g, x| {
            let av = g.constant(a.clone());
            let y = g.matmul(av, x)?;
            project(g, y, &w)
        },
        &b,
        EPS,
    )
    .unwrap();
    left.max(right)
}

pub fn elementwise_binary(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let a = rand_t(rng, &[r, c]);
    let b = rand_t(rng, &[r, c]);
    let w = rand_t(rng, &[r, c]);
    let mut worst: f64 = 0.0;
    for which in 0..3 {
        let e = grad_check(
            |g, x| {
                let bv = g.constant(b.clone());
                let y = match which {
                    0 => g.add(x, bv)?,
                    1 => g.sub(bv, x)?,
                    _ => g.mul(x, bv)?,
                };
                let y = g.mul(y, y)?;
                project(g, y, &w)
            },
            &a,
            EPS,
        )
        .unwrap();
        worst = worst.max(e);
    }
    worst
}

pub fn scale_and_add_row(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let x = rand_t(rng, &[r, c]);
    let bias = rand_t(rng, &[c]);
    let w = rand_t(rng, &[r, c]);
    let s = rng.random_range(-2.0..2.0);
    let e1 = grad_check(
        |g, xv| {
            let bv = g.constant(bias.clone());
            let y = g.add_row(xv, bv)?;
            let y = g.scale(y, s)?;
            let y = g.tanh(y)?;
            project(g, y, &w)
        },
        &x,
        EPS,
    )
    .unwrap();
    let e2 = grad_check(
        |g, bv| {
            let xv = g.constant(x.clone());
            let y = g.add_row(xv, bv)?;
            let y = g.tanh(y)?;
            project(g, y, &w)
        },
        &bias,
        EPS,
    )
    .unwrap();
    e1.max(e2)
}

pub fn transpose_concat_slice_reshape(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, extra) = dims(rng);
    let x = rand_t(rng, &[r, c]);
    let other_rows = rand_t(rng, &[extra, c]);
    let other_cols = rand_t(rng, &[r, extra]);
    let w_t = rand_t(rng, &[c, r]);
    let w_r = rand_t(rng, &[r + extra, c]);
    let w_c = rand_t(rng, &[r, c + extra]);
    let start = rng.random_range(0..r);
    let len = rng.random_range(1..=r - start);
    let w_s = rand_t(rng, &[len, c]);
    let w_flat = rand_t(rng, &[r * c]);
    let checks: Vec<Box<dyn Fn(&mut Graph, Var) -> Result<Var>>> = vec![
        Box::new(|g, v| {
            let y = g.transpose(v)?;
            let y = g.mul(y, y)?;
            project(g, y, &w_t)
        }),
        Box::new(|g, v| {
            let o = g.constant(other_rows.clone());
            let y = g.concat(&[o, v], 0)?;
            let y = g.sigmoid(y)?;
            project(g, y, &w_r)
        }),
        Box::new(|g, v| {
            let o = g.constant(other_cols.clone());
            let y = g.concat(&[v, o], 1)?;
            let y = g.sigmoid(y)?;
            project(g, y, &w_c)
        }),
        Box::new(|g, v| {
            let y = g.slice_rows(v, start, len)?;
            let y = g.mul(y, y)?;
            project(g, y, &w_s)
        }),
        Box::new(|g, v| {
            let y = g.reshape(v, &[r * c])?;
            let y = g.tanh(y)?;
            project(g, y, &w_flat)
        }),
    ];
    checks
        .iter()
        .map(|f| grad_check(f, &x, EPS).unwrap())
        .fold(0.0, f64::max)
}

pub fn softmax_and_log_softmax(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let c = c + 1;
    let x = rand_t(rng, &[r, c]);
    let w = rand_t(rng, &[r, c]);
    let a = grad_check(
        |g, v| {
            let y = g.softmax(v)?;
            project(g, y, &w)
        },
        &x,
        EPS,
    )
    .unwrap();
    let b = grad_check(
        |g, v| {
            let y = g.log_softmax(v)?;
            project(g, y, &w)
        },
        &x,
        EPS,
    )
    .unwrap();
    a.max(b)
}

pub fn pointwise_activations(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let x = away_from_zero(rng, &[r, c]);
    let w = rand_t(rng, &[r, c]);
    let mut worst: f64 = 0.0;
    for which in 0..3 {
        let e = grad_check(
            |g, v| {
                let y = match which {
                    0 => g.sigmoid(v)?,
                    1 => g.tanh(v)?,
                    _ => g.relu(v)?,
                };
                project(g, y, &w)
            },
            &x,
            EPS,
        )
        .unwrap();
        worst = worst.max(e);
    }
    worst
}

pub fn layer_norm_all_inputs(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let c = c + 1;
    let x = rand_t(rng, &[r, c]);
    let gamma = rand_t(rng, &[c]);
    let beta = rand_t(rng, &[c]);
    let w = rand_t(rng, &[r, c]);
    let ex = grad_check(
        |g, v| {
            let (gv, bv) = (g.constant(gamma.clone()), g.constant(beta.clone()));
            let y = g.layer_norm(v, gv, bv)?;
            project(g, y, &w)
        },
        &x,
        EPS,
    )
    .unwrap();
    let eg = grad_check(
        |g, v| {
            let (xv, bv) = (g.constant(x.clone()), g.constant(beta.clone()));
            let y = g.layer_norm(xv, v, bv)?;
            let y = g.mul(y, y)?;
            project(g, y, &w)
        },
        &gamma,
        EPS,
    )
    .unwrap();
    let eb = grad_check(
        |g, v| {
            let (xv, gv) = (g.constant(x.clone()), g.constant(gamma.clone()));
            let y = g.layer_norm(xv, gv, v)?;
            let y = g.mul(y, y)?;
            project(g, y, &w)
        },
        &beta,
        EPS,
    )
    .unwrap();
    ex.max(eg).max(eb)
}

pub fn embedding_lookup(rng: &mut ChaCha8Rng) -> f64 {
    let (v, d, l) = dims(rng);
    let table = rand_t(rng, &[v, d]);
    let ids: Vec<usize> = (0..l).map(|_| rng.random_range(0..v)).collect();
    let w = rand_t(rng, &[l, d]);
    grad_check(
        |g, t| {
            let y = g.embedding(t, &ids)?;
            let y = g.mul(y, y)?;
            project(g, y, &w)
        },
        &table,
        EPS,
    )
    .unwrap()
}

pub fn dropout_training_mode(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let x = rand_t(rng, &[r, c]);
    let w = rand_t(rng, &[r, c]);
    let seed = rng.random();
    grad_check_seeded(
        |g, v| {
            let y = g.dropout(v, 0.3)?;
            let y = g.tanh(y)?;
            project(g, y, &w)
        },
        &x,
        EPS,
        seed,
    )
    .unwrap()
}

pub fn gru_step_every_input(rng: &mut ChaCha8Rng) -> f64 {
    let b = rng.random_range(1..3);
    let h = rng.random_range(1..4);
    let gx = rand_t(rng, &[b, 3 * h]);
    let h0 = rand_t(rng, &[b, h]);
    let w_hh = rand_t(rng, &[h, 3 * h]);
    let b_hh = rand_t(rng, &[3 * h]);
    let w = rand_t(rng, &[b, h]);
    let inputs = [&gx, &h0, &w_hh, &b_hh];
    let mut worst: f64 = 0.0;
    for slot in 0..4 {
        let e = grad_check(
            |g, v| {
                let mut vars = Vec::new();
                for (i, t) in inputs.iter().enumerate() {
                    vars.push(if i == slot { v } else { g.constant((*t).clone()) });
                }
                let y = g.gru_step(vars[0], vars[1], vars[2], vars[3])?;
                // Second step so the recurrent path is exercised twice.
                let y = g.gru_step(vars[0], y, vars[2], vars[3])?;
                project(g, y, &w)
            },
            inputs[slot],
            EPS,
        )
        .unwrap();
        worst = worst.max(e);
    }
    worst
}

pub fn conv1d_input_and_kernel(rng: &mut ChaCha8Rng) -> f64 {
    let t = rng.random_range(3..9);
    let k = rng.random_range(1..4);
    let stride = rng.random_range(1..3);
    let width = rng.random_range(1..3);
    let (cin, cout) = (rng.random_range(1..3), rng.random_range(1..3));
    let padding = if rng.random::<bool>() {
        Padding::Same
    } else {
        Padding::Valid
    };
    let x = rand_t(rng, &[t, width * cin]);
    let kernel = rand_t(rng, &[k, cin, cout]);
    let t_out = babel_numerics::conv_output_len(t, k, stride, padding).unwrap().0;
    let w = rand_t(rng, &[t_out, width * cout]);
    let ex = grad_check(
        |g, v| {
            let kv = g.constant(kernel.clone());
            let y = g.conv1d_shared(v, kv, stride, padding, width)?;
            let y = g.tanh(y)?;
            project(g, y, &w)
        },
        &x,
        EPS,
    )
    .unwrap();
    let ek = grad_check(
        |g, v| {
            let xv = g.constant(x.clone());
            let y = g.conv1d_shared(xv, v, stride, padding, width)?;
            let y = g.tanh(y)?;
            project(g, y, &w)
        },
        &kernel,
        EPS,
    )
    .unwrap();
    ex.max(ek)
}

pub fn cross_entropy_with_padding(rng: &mut ChaCha8Rng) -> f64 {
    let (l, v, _) = dims(rng);
    let v = v + 1;
    let pad = v;
    let logits = rand_t(rng, &[l + 1, v]);
    let mut targets: Vec<usize> = (0..l + 1)
        .map(|_| {
            if rng.random_bool(0.3) {
                pad
            } else {
                rng.random_range(0..v)
            }
        })
        .collect();
    targets[0] = rng.random_range(0..v);
    grad_check(|g, x| g.cross_entropy(x, &targets, pad), &logits, EPS).unwrap()
}

pub fn sum_and_mean(rng: &mut ChaCha8Rng) -> f64 {
    let (r, c, _) = dims(rng);
    let x = rand_t(rng, &[r, c]);
    let a = grad_check(
        |g, v| {
            let y = g.mul(v, v)?;
            g.sum(y)
        },
        &x,
        EPS,
    )
    .unwrap();
    let b = grad_check(
        |g, v| {
            let y = g.tanh(v)?;
            g.mean(y)
        },
        &x,
        EPS,
    )
    .unwrap();
    a.max(b)
}

pub fn random_three_layer_composition(rng: &mut ChaCha8Rng) -> f64 {
    let (n, d, h) = dims(rng);
    let x = rand_t(rng, &[n, d]);
    let w1 = rand_t(rng, &[d, h]);
    let w2 = rand_t(rng, &[h, h]);
    let w3 = rand_t(rng, &[h, 2]);
    let proj = rand_t(rng, &[n, 2]);
    let f = |g: &mut Graph, v: Var| {
        let a = g.constant(w1.clone());
        let b = g.constant(w2.clone());
        let c = g.constant(w3.clone());
        let y = g.matmul(v, a)?;
        let y = g.tanh(y)?;
        let y = g.matmul(y, b)?;
        let y = g.sigmoid(y)?;
        let y = g.matmul(y, c)?;
        project(g, y, &proj)
    };
    let e = grad_check(f, &x, EPS).unwrap();
    assert!(e < 1e-6, "three-layer composition error {e:e}");
    e
}

pub const ALL: &[(&str, Trial)] = &[
    ("matmul", matmul_both_sides),
    ("elementwise", elementwise_binary),
    ("add_row", scale_and_add_row),
    ("structural", transpose_concat_slice_reshape),
    ("softmax", softmax_and_log_softmax),
    ("activations", pointwise_activations),
    ("layer_norm", layer_norm_all_inputs),
    ("embedding", embedding_lookup),
    ("dropout", dropout_training_mode),
    ("gru", gru_step_every_input),
    ("conv1d", conv1d_input_and_kernel),
    ("cross_entropy", cross_entropy_with_padding),
    ("reductions", sum_and_mean),
    ("mlp", random_three_layer_composition),
];
