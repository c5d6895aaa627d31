//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with:
//!   cargo test -p sallab-core --test acceptance -- --nocapture
//!
//! The training smoke test (criterion 6) is the long pole at a few minutes;
//! everything else finishes in seconds.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sallab_core::autodiff::Graph;
use sallab_core::data::{gen_synthetic, Dataset, Manifest, Split, SynthConfig};
use sallab_core::gradsuite::run_standard_battery;
use sallab_core::loss;
use sallab_core::metrics::{
    auc_borji, auc_judd, auc_shuffled, cc, emd, evaluate_all, info_gain, kl, nss, sim, EvalEntry,
    EvalSettings, FixationSet, IgBaseline, MetricReport, SaliencyMap, METRIC_NAMES,
};
use sallab_core::model::{build_discriminator, build_generator, NetConfig};
use sallab_core::tensor::Tensor;
use sallab_core::train::{train_adversarial, train_bootstrap, TrainConfig};

fn rand_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> SaliencyMap {
    let values = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
    SaliencyMap::new(w, h, values).unwrap()
}

fn distinct_fixations(rng: &mut ChaCha8Rng, w: usize, h: usize, count: usize) -> FixationSet {
    let mut cells: Vec<usize> = (0..w * h).collect();
    for i in 0..count {
        let j = rng.gen_range(i..cells.len());
        cells.swap(i, j);
    }
    FixationSet::new(cells[..count].iter().map(|&c| (c % w, c / w)).collect())
}

// -------------------------------------------------------------------------
// Criterion 1: gradient integrity
// -------------------------------------------------------------------------
#[test]
fn criterion_1_gradient_integrity() {
    let start = Instant::now();
    let report = run_standard_battery(7, 1e-5, 1e-4, 20).unwrap();
    for row in &report.rows {
        assert!(
            row.passed,
            "criterion 1: {} exceeded tolerance: {:.3e}",
            row.name, row.max_rel_error
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 1: gradcheck took {elapsed:.1}s");
    println!(
        "ACCEPTANCE 1 (gradient integrity): PASS — {} parameters, max rel error {:.3e}, {:.1}s",
        report.rows.len(),
        report.max_rel_error(),
        elapsed
    );
}

// -------------------------------------------------------------------------
// Criterion 2: metric oracle suite
// -------------------------------------------------------------------------
#[test]
fn criterion_2_metric_oracles() {
    // AUC-Judd vs exhaustive pairwise Mann-Whitney on 50 random instances.
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut max_gap: f64 = 0.0;
    for _ in 0..50 {
        let map = rand_map(&mut rng, 8, 8);
        let fix = distinct_fixations(&mut rng, 8, 8, 5);
        let auc = auc_judd(&map, &fix).unwrap();
        let mut fixated = vec![false; 64];
        for &(x, y) in &fix.points {
            fixated[y * 8 + x] = true;
        }
        let positives: Vec<f64> = fix.points.iter().map(|&(x, y)| map.at(x, y)).collect();
        let negatives: Vec<f64> = (0..64)
            .filter(|&i| !fixated[i])
            .map(|i| map.values()[i])
            .collect();
        let mw = common::mann_whitney_auc(&positives, &negatives);
        max_gap = max_gap.max((auc - mw).abs());
        assert!(
            (auc - mw).abs() <= 0.02,
            "criterion 2: AUC-Judd {auc} vs Mann-Whitney {mw}"
        );
    }

    // EMD vs the independent transportation-LP oracle on 25 random 3x3 pairs.
    let mut max_emd_gap: f64 = 0.0;
    for _ in 0..25 {
        let p = rand_map(&mut rng, 3, 3);
        let q = rand_map(&mut rng, 3, 3);
        let ours = emd(&p, &q, 1).unwrap();
        let oracle = common::transport_emd_lp(p.values(), q.values(), 3);
        max_emd_gap = max_emd_gap.max((ours - oracle).abs());
        assert!(
            (ours - oracle).abs() <= 1e-9,
            "criterion 2: EMD {ours} vs LP oracle {oracle}"
        );
    }

    // Hand-computed fixed points.
    let m = SaliencyMap::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let f = FixationSet::new(vec![(0, 0)]);
    assert!((nss(&m, &f).unwrap() - 3f64.sqrt()).abs() < 1e-6);

    let p = SaliencyMap::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let g = SaliencyMap::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    assert!((cc(&p, &g).unwrap() + 1.0 / 3.0).abs() < 1e-6);

    let uniform = SaliencyMap::new(2, 2, vec![0.25; 4]).unwrap();
    let skewed = SaliencyMap::new(2, 2, vec![0.4, 0.4, 0.1, 0.1]).unwrap();
    assert!((sim(&skewed, &uniform).unwrap() - 0.7).abs() < 1e-6);
    assert!((kl(&uniform, &skewed, 1e-12).unwrap() - 0.22314).abs() < 1e-5);

    println!(
        "ACCEPTANCE 2 (metric oracle suite): PASS — AUC gap {:.2e}, EMD gap {:.2e}, hand values exact",
        max_gap, max_emd_gap
    );
}

// -------------------------------------------------------------------------
// Criterion 3: invariance suite
// -------------------------------------------------------------------------
#[test]
fn criterion_3_invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let map = rand_map(&mut rng, 8, 8);
    let fix = distinct_fixations(&mut rng, 8, 8, 6);
    let others = vec![distinct_fixations(&mut rng, 8, 8, 6)];

    // Strictly increasing transforms leave every AUC variant exactly equal.
    let transforms: [&dyn Fn(f64) -> f64; 3] =
        [&|v| 2.0 * v + 1.0, &|v| (3.0 * v).exp(), &|v| v * v * v];
    for t in transforms {
        let mapped = map.map(t).unwrap();
        assert_eq!(
            auc_judd(&map, &fix).unwrap(),
            auc_judd(&mapped, &fix).unwrap()
        );
        assert_eq!(
            auc_borji(&map, &fix, 50, 6, 9).unwrap(),
            auc_borji(&mapped, &fix, 50, 6, 9).unwrap()
        );
        assert_eq!(
            auc_shuffled(&map, &fix, &others, 50, 9).unwrap(),
            auc_shuffled(&mapped, &fix, &others, 50, 9).unwrap()
        );
    }

    // NSS and CC under positive affine transforms.
    let affine = map.map(|v| 4.2 * v + 0.3).unwrap();
    assert!((nss(&map, &fix).unwrap() - nss(&affine, &fix).unwrap()).abs() < 1e-9);
    let gt = rand_map(&mut rng, 8, 8);
    assert!((cc(&map, &gt).unwrap() - cc(&affine, &gt).unwrap()).abs() < 1e-9);
    let negated = map.map(|v| -2.0 * v + 1.0).unwrap();
    assert!((cc(&map, &gt).unwrap() + cc(&negated, &gt).unwrap()).abs() < 1e-9);

    // SIM, KL, EMD under positive rescaling of either argument.
    let scaled = map.map(|v| 7.5 * v).unwrap();
    assert!((sim(&map, &gt).unwrap() - sim(&scaled, &gt).unwrap()).abs() < 1e-9);
    assert!((kl(&gt, &map, 1e-12).unwrap() - kl(&gt, &scaled, 1e-12).unwrap()).abs() < 1e-9);
    assert!((emd(&map, &gt, 1).unwrap() - emd(&scaled, &gt, 1).unwrap()).abs() < 1e-9);
    let gt_scaled = gt.map(|v| 0.25 * v).unwrap();
    assert!((sim(&map, &gt).unwrap() - sim(&map, &gt_scaled).unwrap()).abs() < 1e-9);
    assert!((kl(&gt, &map, 1e-12).unwrap() - kl(&gt_scaled, &map, 1e-12).unwrap()).abs() < 1e-9);
    assert!((emd(&map, &gt, 1).unwrap() - emd(&map, &gt_scaled, 1).unwrap()).abs() < 1e-9);

    // Constant maps sit exactly at chance.
    let constant = SaliencyMap::new(8, 8, vec![0.7; 64]).unwrap();
    assert_eq!(auc_judd(&constant, &fix).unwrap(), 0.5);
    assert_eq!(auc_borji(&constant, &fix, 50, 6, 9).unwrap(), 0.5);
    assert_eq!(auc_shuffled(&constant, &fix, &others, 50, 9).unwrap(), 0.5);

    println!("ACCEPTANCE 3 (invariance suite): PASS — rank, affine, and rescale invariances hold");
}

// -------------------------------------------------------------------------
// Criterion 4: loss identities
// -------------------------------------------------------------------------
#[test]
fn criterion_4_loss_identities() {
    let mut g = Graph::new();
    let half_a = g.leaf(Tensor::filled(&[1, 1, 4, 4], 0.5));
    let half_b = g.leaf(Tensor::filled(&[1, 1, 4, 4], 0.5));
    let v = loss::bce(&mut g, half_a, half_b).unwrap().value;
    assert!(
        (v - std::f64::consts::LN_2).abs() < 1e-9,
        "criterion 4: BCE {v}"
    );

    let m = g.leaf(Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.9, 0.4, 0.7]).unwrap());
    let m2 = g.leaf(Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.9, 0.4, 0.7]).unwrap());
    assert_eq!(loss::mse(&mut g, m, m2).unwrap().value, 0.0);

    let dr = g.leaf(Tensor::scalar(0.5));
    let df = g.leaf(Tensor::scalar(0.5));
    let v = loss::discriminator_loss(&mut g, dr, df).unwrap().value;
    assert!(
        (v - 2.0 * std::f64::consts::LN_2).abs() < 1e-9,
        "criterion 4: L_D {v}"
    );

    let d = g.leaf(Tensor::scalar(0.5));
    let content = loss::LossValue {
        value: 0.7,
        node: g.leaf(Tensor::scalar(0.7)),
    };
    let v = loss::generator_adv_loss(&mut g, d, content, 0.005)
        .unwrap()
        .value;
    assert!(
        (v - 0.696647).abs() < 1e-6,
        "criterion 4: generator loss {v}"
    );

    println!("ACCEPTANCE 4 (loss identities): PASS — BCE, MSE, discriminator, and generator fixed points");
}

// -------------------------------------------------------------------------
// Criterion 5: architecture fidelity
// -------------------------------------------------------------------------

/// Independent shape-propagation oracle built from the published table rows.
/// Returns (name, weight shape, bias shape, frozen) per parameterized layer.
mod arch_oracle {
    pub enum Row {
        Conv {
            name: &'static str,
            depth: usize,
            k: usize,
            pad: usize,
            frozen: bool,
        },
        Pool,
        Up,
        Fc {
            name: &'static str,
            depth: usize,
        },
    }

    pub fn generator_rows() -> Vec<Row> {
        use Row::*;
        let mut rows = Vec::new();
        // Encoder: the VGG-16 convolution stack, 3x3 kernels, blocks 1-3
        // frozen. Four poolings.
        let enc: [(usize, usize, usize, bool); 5] = [
            (1, 2, 64, true),
            (2, 2, 128, true),
            (3, 3, 256, true),
            (4, 3, 512, false),
            (5, 3, 512, false),
        ];
        for (block, count, depth, frozen) in enc {
            for i in 1..=count {
                rows.push(Conv {
                    name: Box::leak(format!("conv{block}_{i}").into_boxed_str()),
                    depth,
                    k: 3,
                    pad: 1,
                    frozen,
                });
            }
            if block < 5 {
                rows.push(Pool);
            }
        }
        // Decoder mirror with four upsamplings, untouched by freezing.
        let dec: [(usize, usize, usize); 5] = [
            (6, 3, 512),
            (7, 3, 512),
            (8, 3, 256),
            (9, 2, 128),
            (10, 2, 64),
        ];
        for (block, count, depth) in dec {
            for i in 1..=count {
                rows.push(Conv {
                    name: Box::leak(format!("conv{block}_{i}").into_boxed_str()),
                    depth,
                    k: 3,
                    pad: 1,
                    frozen: false,
                });
            }
            if block < 10 {
                rows.push(Up);
            }
        }
        rows.push(Conv {
            name: "output",
            depth: 1,
            k: 1,
            pad: 0,
            frozen: false,
        });
        rows
    }

    pub fn discriminator_rows() -> Vec<Row> {
        use Row::*;
        vec![
            Conv {
                name: "conv1_1",
                depth: 3,
                k: 1,
                pad: 0,
                frozen: false,
            },
            Conv {
                name: "conv1_2",
                depth: 32,
                k: 3,
                pad: 1,
                frozen: false,
            },
            Pool,
            Conv {
                name: "conv2_1",
                depth: 64,
                k: 3,
                pad: 1,
                frozen: false,
            },
            Conv {
                name: "conv2_2",
                depth: 64,
                k: 3,
                pad: 1,
                frozen: false,
            },
            Pool,
            Conv {
                name: "conv3_1",
                depth: 64,
                k: 3,
                pad: 1,
                frozen: false,
            },
            Conv {
                name: "conv3_2",
                depth: 64,
                k: 3,
                pad: 1,
                frozen: false,
            },
            Pool,
            Fc {
                name: "fc4",
                depth: 100,
            },
            Fc {
                name: "fc5",
                depth: 2,
            },
            Fc {
                name: "fc6",
                depth: 1,
            },
        ]
    }

    /// Walks rows over a (c, h, w) input and emits the parameter inventory.
    pub fn propagate(
        rows: &[Row],
        mut c: usize,
        mut h: usize,
        mut w: usize,
    ) -> (
        Vec<(String, Vec<usize>, Vec<usize>, bool)>,
        (usize, usize, usize),
    ) {
        let mut out = Vec::new();
        let mut flat: Option<usize> = None;
        for row in rows {
            match row {
                Row::Conv {
                    name,
                    depth,
                    k,
                    pad,
                    frozen,
                } => {
                    out.push((
                        name.to_string(),
                        vec![*depth, c, *k, *k],
                        vec![*depth],
                        *frozen,
                    ));
                    h = h + 2 * pad - k + 1;
                    w = w + 2 * pad - k + 1;
                    c = *depth;
                }
                Row::Pool => {
                    assert!(h % 2 == 0 && w % 2 == 0);
                    h /= 2;
                    w /= 2;
                }
                Row::Up => {
                    h *= 2;
                    w *= 2;
                }
                Row::Fc { name, depth } => {
                    let input = flat.unwrap_or(c * h * w);
                    out.push((name.to_string(), vec![*depth, input], vec![*depth], false));
                    flat = Some(*depth);
                }
            }
        }
        (out, (c, h, w))
    }
}

#[test]
fn criterion_5_architecture_fidelity() {
    // Generator at divisor 1 on 256x192 input (width x height).
    let (expected, (out_c, out_h, out_w)) =
        arch_oracle::propagate(&arch_oracle::generator_rows(), 3, 192, 256);
    assert_eq!(
        (out_c, out_h, out_w),
        (1, 192, 256),
        "generator output must match input size"
    );
    let cfg = NetConfig::generator(1, 192, 256).unwrap();
    let net = build_generator(&cfg, 1).unwrap();
    assert_eq!(net.params.len(), expected.len() * 2);
    let mut expected_total = 0usize;
    for (i, (name, wshape, bshape, frozen)) in expected.iter().enumerate() {
        let wp = &net.params[2 * i];
        let bp = &net.params[2 * i + 1];
        assert_eq!(wp.name, format!("{name}.weight"));
        assert_eq!(wp.value.shape(), &wshape[..], "{name} weight shape");
        assert_eq!(bp.value.shape(), &bshape[..], "{name} bias shape");
        assert_eq!(wp.trainable, !frozen, "{name} freeze flag");
        assert_eq!(bp.trainable, !frozen, "{name} bias freeze flag");
        expected_total += wshape.iter().product::<usize>() + bshape.iter().product::<usize>();
    }
    assert_eq!(net.param_count(), expected_total);
    assert_eq!(
        expected_total, 31_787_009,
        "generator parameter total at divisor 1"
    );

    // Discriminator at divisor 1 on the 4-channel 256x192 RGBS input.
    let (expected, _) = arch_oracle::propagate(&arch_oracle::discriminator_rows(), 4, 192, 256);
    let fc4 = expected.iter().find(|(n, ..)| n == "fc4").unwrap();
    assert_eq!(
        fc4.1,
        vec![100, 49152],
        "fc4 input from flattened 64x32x24 map"
    );
    let cfg = NetConfig::discriminator(1, 192, 256).unwrap();
    let net = build_discriminator(&cfg, 1).unwrap();
    assert_eq!(net.params.len(), expected.len() * 2);
    let mut expected_total = 0usize;
    for (i, (name, wshape, bshape, _)) in expected.iter().enumerate() {
        assert_eq!(net.params[2 * i].name, format!("{name}.weight"));
        assert_eq!(net.params[2 * i].value.shape(), &wshape[..], "{name}");
        assert_eq!(net.params[2 * i + 1].value.shape(), &bshape[..], "{name}");
        expected_total += wshape.iter().product::<usize>() + bshape.iter().product::<usize>();
    }
    assert_eq!(net.param_count(), expected_total);

    // Frozen prefix stays bitwise fixed through a short training run.
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(dir.path(), &SynthConfig::new(12, 32, 32, 55)).unwrap();
    let data = Dataset::load(&dir.path().join(Manifest::FILENAME)).unwrap();
    let gen_cfg = NetConfig::generator(16, 32, 32).unwrap();
    let mut gen = build_generator(&gen_cfg, 5).unwrap();
    let frozen_before: Vec<(String, Tensor)> = gen
        .params
        .iter()
        .filter(|p| !p.trainable)
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    assert!(frozen_before.iter().all(|(n, _)| {
        n.starts_with("conv1_") || n.starts_with("conv2_") || n.starts_with("conv3_")
    }));
    let cfg = TrainConfig {
        batch_size: 4,
        bootstrap_epochs: 2,
        adversarial_epochs: 2,
        downsample_factor: 2,
        seed: 5,
        ..Default::default()
    };
    let out = tempfile::tempdir().unwrap();
    train_bootstrap(&mut gen, &data, &cfg, out.path()).unwrap();
    let disc_cfg = NetConfig::discriminator(16, 32, 32).unwrap();
    let mut disc = build_discriminator(&disc_cfg, 6).unwrap();
    train_adversarial(&mut gen, &mut disc, &data, &cfg, out.path()).unwrap();
    for (name, before) in &frozen_before {
        let after = &gen.param(name).unwrap().value;
        assert_eq!(before, after, "criterion 5: frozen {name} changed");
    }

    println!(
        "ACCEPTANCE 5 (architecture fidelity): PASS — generator 31,787,009 params, fc4 input 49,152, frozen prefix bitwise stable"
    );
}

// -------------------------------------------------------------------------
// Criterion 6: two-phase training smoke test
// -------------------------------------------------------------------------
#[test]
fn criterion_6_two_phase_training() {
    let start = Instant::now();
    let data_dir = tempfile::tempdir().unwrap();
    gen_synthetic(data_dir.path(), &SynthConfig::new(200, 64, 48, 42)).unwrap();
    let data = Dataset::load(&data_dir.path().join(Manifest::FILENAME)).unwrap();

    let gen_cfg = NetConfig::generator(8, 48, 64).unwrap();
    let mut gen = build_generator(&gen_cfg, 42).unwrap();
    let frozen_before: Vec<(String, Tensor)> = gen
        .params
        .iter()
        .filter(|p| !p.trainable)
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();

    let cfg = TrainConfig {
        batch_size: 8,
        bootstrap_epochs: 10,
        adversarial_epochs: 10,
        downsample_factor: 4,
        alpha: 0.005,
        seed: 42,
        ..Default::default()
    };
    let out = tempfile::tempdir().unwrap();
    let boot = train_bootstrap(&mut gen, &data, &cfg, out.path()).unwrap();

    let first = boot
        .epochs
        .first()
        .unwrap()
        .val
        .expect("validation split present");
    let last = boot
        .epochs
        .last()
        .unwrap()
        .val
        .expect("validation split present");
    assert!(
        last.bce_full < first.bce_full,
        "criterion 6: val BCE did not improve ({} -> {})",
        first.bce_full,
        last.bce_full
    );
    assert!(
        last.bce_down < first.bce_down,
        "criterion 6: downsampled val BCE did not improve ({} -> {})",
        first.bce_down,
        last.bce_down
    );
    let init_cc = last.cc;

    let disc_cfg = NetConfig::discriminator(8, 48, 64).unwrap();
    let mut disc = build_discriminator(&disc_cfg, 43).unwrap();
    let adv = train_adversarial(&mut gen, &mut disc, &data, &cfg, out.path()).unwrap();

    assert_eq!(
        adv.generator_updates, adv.discriminator_updates,
        "criterion 6: update counts diverged"
    );

    // Every logged discriminator loss is finite and positive.
    let log = std::fs::read_to_string(out.path().join("loss_adversarial.csv")).unwrap();
    let mut rows = 0;
    for line in log.lines().skip(1) {
        let ld: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert!(
            ld.is_finite() && ld > 0.0,
            "criterion 6: L_D {ld} at row {rows}"
        );
        rows += 1;
    }
    assert_eq!(rows, adv.discriminator_updates);

    let final_cc = adv
        .epochs
        .last()
        .unwrap()
        .val
        .expect("validation split present")
        .cc;
    assert!(
        final_cc >= init_cc - 0.02,
        "criterion 6: validation CC degraded: {final_cc} < {init_cc} - 0.02"
    );

    for (name, before) in &frozen_before {
        assert_eq!(
            before,
            &gen.param(name).unwrap().value,
            "frozen {name} changed"
        );
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 900.0,
        "criterion 6: took {elapsed:.0}s, budget 900s"
    );
    println!(
        "ACCEPTANCE 6 (two-phase training): PASS — val BCE {:.4} -> {:.4}, CC {:.4} -> {:.4}, {} updates each, {:.0}s",
        first.bce_full, last.bce_full, init_cc, final_cc, adv.generator_updates, elapsed
    );
}

// -------------------------------------------------------------------------
// Criterion 7: determinism
// -------------------------------------------------------------------------
#[test]
fn criterion_7_determinism() {
    // Datasets: byte-identical across reruns.
    let cfg = SynthConfig::new(24, 32, 32, 5);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    gen_synthetic(d1.path(), &cfg).unwrap();
    gen_synthetic(d2.path(), &cfg).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(d1.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in &names {
        assert_eq!(
            std::fs::read(d1.path().join(name)).unwrap(),
            std::fs::read(d2.path().join(name)).unwrap(),
            "criterion 7: dataset file {name:?} differs"
        );
    }

    // Training: checkpoints and loss logs byte-identical across reruns.
    let data = Dataset::load(&d1.path().join(Manifest::FILENAME)).unwrap();
    let tcfg = TrainConfig {
        batch_size: 8,
        bootstrap_epochs: 3,
        adversarial_epochs: 2,
        downsample_factor: 2,
        seed: 17,
        ..Default::default()
    };
    let run = |out: &Path| {
        let gen_cfg = NetConfig::generator(16, 32, 32).unwrap();
        let mut gen = build_generator(&gen_cfg, 17).unwrap();
        train_bootstrap(&mut gen, &data, &tcfg, out).unwrap();
        let disc_cfg = NetConfig::discriminator(16, 32, 32).unwrap();
        let mut disc = build_discriminator(&disc_cfg, 18).unwrap();
        train_adversarial(&mut gen, &mut disc, &data, &tcfg, out).unwrap();
    };
    let o1 = tempfile::tempdir().unwrap();
    let o2 = tempfile::tempdir().unwrap();
    run(o1.path());
    run(o2.path());
    let mut artifacts: Vec<_> = std::fs::read_dir(o1.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    artifacts.sort();
    assert!(artifacts
        .iter()
        .any(|n| n.to_string_lossy().starts_with("ckpt_bootstrap")));
    assert!(artifacts
        .iter()
        .any(|n| n.to_string_lossy().starts_with("ckpt_adversarial")));
    for name in &artifacts {
        assert_eq!(
            std::fs::read(o1.path().join(name)).unwrap(),
            std::fs::read(o2.path().join(name)).unwrap(),
            "criterion 7: training artifact {name:?} differs"
        );
    }

    // Evaluation: identical CSV bytes regardless of thread count.
    let entries: Vec<EvalEntry> = data
        .samples
        .iter()
        .map(|s| EvalEntry {
            id: s.id.clone(),
            pred: s.gt_map.map(|v| (v * 0.8 + 0.05)).unwrap(),
            gt: s.gt_map.clone(),
            fixations: Some(s.fixations.clone()),
        })
        .collect();
    let settings = EvalSettings {
        emd_downsample: 4,
        seed: 31,
        ..Default::default()
    };
    let csv_with_threads = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap();
        let report: MetricReport = pool.install(|| evaluate_all(&entries, &settings)).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        buf
    };
    let single = csv_with_threads(1);
    let four = csv_with_threads(4);
    let two = csv_with_threads(2);
    assert_eq!(
        single, four,
        "criterion 7: eval CSV differs between 1 and 4 threads"
    );
    assert_eq!(
        single, two,
        "criterion 7: eval CSV differs between 1 and 2 threads"
    );

    println!(
        "ACCEPTANCE 7 (determinism): PASS — datasets, checkpoints, logs, and eval CSVs byte-identical"
    );
}

// -------------------------------------------------------------------------
// Criterion 8: harness completeness (table-shaped reports)
// -------------------------------------------------------------------------

fn evaluate_checkpoint_on_val(
    gen: &sallab_core::model::Network,
    data: &Dataset,
    settings: &EvalSettings,
) -> MetricReport {
    let val = data.indices_of(Split::Val);
    let entries: Vec<EvalEntry> = val
        .iter()
        .map(|&i| {
            let s = &data.samples[i];
            EvalEntry {
                id: s.id.clone(),
                pred: gen.predict_map(&s.image).unwrap(),
                gt: s.gt_map.clone(),
                fixations: Some(s.fixations.clone()),
            }
        })
        .collect();
    evaluate_all(&entries, settings).unwrap()
}

#[test]
fn criterion_8_table_shaped_reports() {
    let data_dir = tempfile::tempdir().unwrap();
    gen_synthetic(data_dir.path(), &SynthConfig::new(24, 32, 32, 11)).unwrap();
    let data = Dataset::load(&data_dir.path().join(Manifest::FILENAME)).unwrap();
    let settings = EvalSettings {
        emd_downsample: 4,
        seed: 7,
        auc_splits: 25,
        ig_baseline: IgBaseline::Uniform,
        ..Default::default()
    };

    // Downsample-factor sweep: one bootstrap run per factor, each evaluated
    // over the full metric suite (the Table-3 shape: factors x metrics).
    let factor_columns = ["auc_shuffled", "auc_borji", "nss", "cc", "ig"];
    let mut sweep_rows = Vec::new();
    let mut factor4_gen = None;
    for factor in [1usize, 2, 4, 8] {
        let gen_cfg = NetConfig::generator(16, 32, 32).unwrap();
        let mut gen = build_generator(&gen_cfg, 100).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            bootstrap_epochs: 2,
            downsample_factor: factor,
            seed: 100,
            ..Default::default()
        };
        let out = tempfile::tempdir().unwrap();
        train_bootstrap(&mut gen, &data, &cfg, out.path()).unwrap();
        let report = evaluate_checkpoint_on_val(&gen, &data, &settings);
        for name in METRIC_NAMES {
            assert!(
                report.mean(name).is_some_and(f64::is_finite),
                "criterion 8: factor {factor} report missing {name}"
            );
        }
        sweep_rows.push((format!("bce/{factor}"), report));
        if factor == 4 {
            factor4_gen = Some(gen);
        }
    }

    // Adversarial continuation from the factor-4 bootstrap (the Table-4
    // shape: content-only vs adversarial rows over the same columns).
    let mut gen = factor4_gen.unwrap();
    let disc_cfg = NetConfig::discriminator(16, 32, 32).unwrap();
    let mut disc = build_discriminator(&disc_cfg, 101).unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        adversarial_epochs: 2,
        downsample_factor: 4,
        seed: 100,
        ..Default::default()
    };
    let out = tempfile::tempdir().unwrap();
    train_adversarial(&mut gen, &mut disc, &data, &cfg, out.path()).unwrap();
    let adv_report = evaluate_checkpoint_on_val(&gen, &data, &settings);
    for name in METRIC_NAMES {
        assert!(
            adv_report.mean(name).is_some_and(f64::is_finite),
            "criterion 8: adversarial report missing {name}"
        );
    }

    println!("downsample sweep (local synthetic values):");
    println!("{:<10} {}", "variant", factor_columns.join("  "));
    for (label, report) in &sweep_rows {
        let cells: Vec<String> = factor_columns
            .iter()
            .map(|m| format!("{:+.3}", report.mean(m).unwrap()))
            .collect();
        println!("{label:<10} {}", cells.join("  "));
    }
    println!("content-only vs adversarial:");
    let bce4 = &sweep_rows[2].1;
    for (label, report) in [("bce/4", bce4), ("gan/4", &adv_report)] {
        let cells: Vec<String> = factor_columns
            .iter()
            .map(|m| format!("{:+.3}", report.mean(m).unwrap()))
            .collect();
        println!("{label:<10} {}", cells.join("  "));
    }

    println!(
        "ACCEPTANCE 8 (harness completeness): PASS — factor sweep and adversarial reports carry all nine metrics"
    );
}
