//! The standard gradient-check battery: every tensor primitive and every
//! loss composition, on small random shapes, ready for the CLI table and
//! the test suite.
//!
//! Inputs are drawn away from non-differentiable points: relu inputs keep
//! |x| >= 0.1 and cross-entropy predictions stay inside [0.1, 0.9], well
//! clear of the clamp boundaries.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{gradcheck, GradCheckCase, GradCheckReport, GradCheckRow};
use crate::error::Result;
use crate::loss;
use crate::tensor::{Activation, Tensor};

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).expect("battery shapes are valid")
}

/// Random values with |v| in [0.1, 1), keeping relu away from its kink.
fn rand_tensor_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("battery shapes are valid")
}

/// Builds the named battery of gradient-check cases from one seed.
pub fn standard_battery(seed: u64) -> Vec<(String, GradCheckCase<'static>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(String, GradCheckCase<'static>)> = Vec::new();

    // conv2d, 3x3 kernel, stride 1, pad 1.
    {
        let input = rand_tensor(&mut rng, &[2, 2, 4, 4], -1.0, 1.0);
        let kernel = rand_tensor(&mut rng, &[3, 2, 3, 3], -0.6, 0.6);
        let bias = rand_tensor(&mut rng, &[3], -0.2, 0.2);
        let target = rand_tensor(&mut rng, &[2, 3, 4, 4], 0.5, 2.5);
        cases.push((
            "conv2d_s1p1".into(),
            GradCheckCase {
                params: vec![
                    ("input".into(), input),
                    ("kernel".into(), kernel),
                    ("bias".into(), bias),
                ],
                build: Box::new(move |g, ids| {
                    let c = g.conv2d(ids[0], ids[1], ids[2], 1, 1)?;
                    let t = g.leaf(target.clone());
                    g.mse(c, t)
                }),
            },
        ));
    }

    // conv2d, 1x1 kernel, pad 0 (the saliency projection shape).
    {
        let input = rand_tensor(&mut rng, &[1, 3, 4, 4], -1.0, 1.0);
        let kernel = rand_tensor(&mut rng, &[2, 3, 1, 1], -0.8, 0.8);
        let bias = rand_tensor(&mut rng, &[2], -0.2, 0.2);
        let target = rand_tensor(&mut rng, &[1, 2, 4, 4], 0.5, 2.5);
        cases.push((
            "conv2d_1x1".into(),
            GradCheckCase {
                params: vec![
                    ("input".into(), input),
                    ("kernel".into(), kernel),
                    ("bias".into(), bias),
                ],
                build: Box::new(move |g, ids| {
                    let c = g.conv2d(ids[0], ids[1], ids[2], 1, 0)?;
                    let t = g.leaf(target.clone());
                    g.mse(c, t)
                }),
            },
        ));
    }

    // conv2d with stride 2.
    {
        let input = rand_tensor(&mut rng, &[1, 2, 6, 6], -1.0, 1.0);
        let kernel = rand_tensor(&mut rng, &[2, 2, 3, 3], -0.6, 0.6);
        let bias = rand_tensor(&mut rng, &[2], -0.2, 0.2);
        let target = rand_tensor(&mut rng, &[1, 2, 3, 3], 0.5, 2.5);
        cases.push((
            "conv2d_s2".into(),
            GradCheckCase {
                params: vec![
                    ("input".into(), input),
                    ("kernel".into(), kernel),
                    ("bias".into(), bias),
                ],
                build: Box::new(move |g, ids| {
                    let c = g.conv2d(ids[0], ids[1], ids[2], 2, 1)?;
                    let t = g.leaf(target.clone());
                    g.mse(c, t)
                }),
            },
        ));
    }

    // maxpool2 on continuous values (window ties have measure zero).
    {
        let input = rand_tensor(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
        let target = rand_tensor(&mut rng, &[1, 2, 2, 2], 0.5, 2.5);
        cases.push((
            "maxpool2".into(),
            GradCheckCase {
                params: vec![("input".into(), input)],
                build: Box::new(move |g, ids| {
                    let p = g.maxpool2(ids[0])?;
                    let t = g.leaf(target.clone());
                    g.mse(p, t)
                }),
            },
        ));
    }

    // upsample2.
    {
        let input = rand_tensor(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
        let target = rand_tensor(&mut rng, &[1, 2, 6, 6], 0.5, 2.5);
        cases.push((
            "upsample2".into(),
            GradCheckCase {
                params: vec![("input".into(), input)],
                build: Box::new(move |g, ids| {
                    let u = g.upsample2(ids[0])?;
                    let t = g.leaf(target.clone());
                    g.mse(u, t)
                }),
            },
        ));
    }

    // avgpool2 (the map downsampler).
    {
        let input = rand_tensor(&mut rng, &[1, 1, 4, 4], 0.1, 0.9);
        let target = rand_tensor(&mut rng, &[1, 1, 2, 2], 0.1, 0.9);
        cases.push((
            "downsample_map".into(),
            GradCheckCase {
                params: vec![("input".into(), input)],
                build: Box::new(move |g, ids| {
                    let d = g.avgpool2(ids[0], 2)?;
                    let t = g.leaf(target.clone());
                    g.mse(d, t)
                }),
            },
        ));
    }

    // dense.
    {
        let input = rand_tensor(&mut rng, &[2, 5], -1.0, 1.0);
        let weight = rand_tensor(&mut rng, &[4, 5], -0.6, 0.6);
        let bias = rand_tensor(&mut rng, &[4], -0.2, 0.2);
        let target = rand_tensor(&mut rng, &[2, 4], 0.5, 2.5);
        cases.push((
            "dense".into(),
            GradCheckCase {
                params: vec![
                    ("input".into(), input),
                    ("weight".into(), weight),
                    ("bias".into(), bias),
                ],
                build: Box::new(move |g, ids| {
                    let d = g.dense(ids[0], ids[1], ids[2])?;
                    let t = g.leaf(target.clone());
                    g.mse(d, t)
                }),
            },
        ));
    }

    // Activations.
    for kind in [Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
        let name = match kind {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        };
        let input = if kind == Activation::Relu {
            rand_tensor_off_zero(&mut rng, &[2, 7])
        } else {
            rand_tensor(&mut rng, &[2, 7], -2.0, 2.0)
        };
        let target = rand_tensor(&mut rng, &[2, 7], 0.5, 2.5);
        cases.push((
            name.into(),
            GradCheckCase {
                params: vec![("input".into(), input)],
                build: Box::new(move |g, ids| {
                    let a = g.activate(ids[0], kind)?;
                    let t = g.leaf(target.clone());
                    g.mse(a, t)
                }),
            },
        ));
    }

    // MSE loss itself.
    {
        let pred = rand_tensor(&mut rng, &[1, 1, 4, 4], 0.1, 0.9);
        let target = rand_tensor(&mut rng, &[1, 1, 4, 4], 0.1, 0.9);
        cases.push((
            "mse_loss".into(),
            GradCheckCase {
                params: vec![("pred".into(), pred)],
                build: Box::new(move |g, ids| {
                    let t = g.leaf(target.clone());
                    Ok(loss::mse(g, ids[0], t)?.node)
                }),
            },
        ));
    }

    // BCE loss, sampled away from the clamp boundaries.
    {
        let pred = rand_tensor(&mut rng, &[1, 1, 4, 4], 0.1, 0.9);
        let target = rand_tensor(&mut rng, &[1, 1, 4, 4], 0.05, 0.95);
        cases.push((
            "bce_loss".into(),
            GradCheckCase {
                params: vec![("pred".into(), pred)],
                build: Box::new(move |g, ids| {
                    let t = g.leaf(target.clone());
                    Ok(loss::bce(g, ids[0], t)?.node)
                }),
            },
        ));
    }

    // Generator objective: alpha-weighted downsampled BCE plus the
    // adversarial term through a small dense+sigmoid head.
    {
        let pred = rand_tensor(&mut rng, &[1, 1, 4, 4], 0.1, 0.9);
        let target = rand_tensor(&mut rng, &[1, 1, 2, 2], 0.1, 0.9);
        let head_w = rand_tensor(&mut rng, &[1, 16], -0.5, 0.5);
        let head_b = rand_tensor(&mut rng, &[1], -0.2, 0.2);
        cases.push((
            "generator_adv_loss".into(),
            GradCheckCase {
                params: vec![
                    ("pred".into(), pred),
                    ("head_w".into(), head_w),
                    ("head_b".into(), head_b),
                ],
                build: Box::new(move |g, ids| {
                    let ds = g.avgpool2(ids[0], 2)?;
                    let t = g.leaf(target.clone());
                    let content = loss::bce(g, ds, t)?;
                    let flat = g.flatten(ids[0])?;
                    let logit = g.dense(flat, ids[1], ids[2])?;
                    let d_out = g.activate(logit, Activation::Sigmoid)?;
                    Ok(loss::generator_adv_loss(g, d_out, content, 0.005)?.node)
                }),
            },
        ));
    }

    // Discriminator objective with a shared dense+sigmoid head scoring a
    // real and a fake input.
    {
        let real = rand_tensor(&mut rng, &[1, 8], -1.0, 1.0);
        let fake = rand_tensor(&mut rng, &[1, 8], -1.0, 1.0);
        let head_w = rand_tensor(&mut rng, &[1, 8], -0.5, 0.5);
        let head_b = rand_tensor(&mut rng, &[1], -0.2, 0.2);
        cases.push((
            "discriminator_loss".into(),
            GradCheckCase {
                params: vec![("head_w".into(), head_w), ("head_b".into(), head_b)],
                build: Box::new(move |g, ids| {
                    let xr = g.leaf(real.clone());
                    let xf = g.leaf(fake.clone());
                    let lr = g.dense(xr, ids[0], ids[1])?;
                    let lf = g.dense(xf, ids[0], ids[1])?;
                    let d_real = g.activate(lr, Activation::Sigmoid)?;
                    let d_fake = g.activate(lf, Activation::Sigmoid)?;
                    Ok(loss::discriminator_loss(g, d_real, d_fake)?.node)
                }),
            },
        ));
    }

    // Conv-relu-dense composite.
    {
        let input = rand_tensor(&mut rng, &[2, 2, 4, 4], -1.0, 1.0);
        let kernel = rand_tensor(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
        let cbias = rand_tensor(&mut rng, &[3], -0.1, 0.1);
        let weight = rand_tensor(&mut rng, &[2, 12], -0.5, 0.5);
        let dbias = rand_tensor(&mut rng, &[2], -0.1, 0.1);
        let target = rand_tensor(&mut rng, &[2, 2], 1.0, 2.0);
        cases.push((
            "conv_relu_dense".into(),
            GradCheckCase {
                params: vec![
                    ("input".into(), input),
                    ("kernel".into(), kernel),
                    ("conv_bias".into(), cbias),
                    ("weight".into(), weight),
                    ("dense_bias".into(), dbias),
                ],
                build: Box::new(move |g, ids| {
                    let c = g.conv2d(ids[0], ids[1], ids[2], 1, 1)?;
                    let r = g.activate(c, Activation::Relu)?;
                    let p = g.maxpool2(r)?;
                    let f = g.flatten(p)?;
                    let d = g.dense(f, ids[3], ids[4])?;
                    let t = g.leaf(target.clone());
                    g.mse(d, t)
                }),
            },
        ));
    }

    cases
}

/// Runs the whole battery and flattens the per-parameter rows, prefixing
/// each with its case name.
pub fn run_standard_battery(
    seed: u64,
    h: f64,
    tol: f64,
    max_coords: usize,
) -> Result<GradCheckReport> {
    let mut rows: Vec<GradCheckRow> = Vec::new();
    for (name, case) in standard_battery(seed) {
        let report = gradcheck(&case, seed ^ 0x5eed, h, tol, max_coords)?;
        for row in report.rows {
            rows.push(GradCheckRow {
                name: format!("{name}.{}", row.name),
                max_rel_error: row.max_rel_error,
                passed: row.passed,
            });
        }
    }
    Ok(GradCheckReport {
        rows,
        tolerance: tol,
    })
}
