//! AdaGrad optimization with L2 weight decay, the BCE bootstrap phase, and
//! the alternating adversarial phase, with per-epoch checkpoints and CSV
//! loss logs.
//!
//! Within every adversarial batch the discriminator is updated first on
//! real-vs-detached-fake pairs, then the generator takes exactly one step
//! through the frozen-weight discriminator, so update counts stay equal at
//! every epoch boundary. Each batch builds a fresh graph, which is the
//! explicit gradient zeroing between steps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::loss;
use crate::metrics::{self, SaliencyMap};
use crate::model::{Binding, Network};
use crate::tensor::{avgpool2, Tensor};

/// Hyperparameters for both training phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub bootstrap_epochs: usize,
    pub adversarial_epochs: usize,
    pub downsample_factor: usize,
    pub seed: u64,
    pub adagrad_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.005,
            lr: 3e-4,
            weight_decay: 1e-4,
            batch_size: 32,
            bootstrap_epochs: 15,
            adversarial_epochs: 10,
            downsample_factor: 4,
            seed: 0,
            adagrad_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
            ("adagrad_epsilon", self.adagrad_epsilon),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if ![1, 2, 4, 8].contains(&self.downsample_factor) {
            return Err(Error::InvalidArgument(format!(
                "downsample factor must be one of 1, 2, 4, 8, got {}",
                self.downsample_factor
            )));
        }
        Ok(())
    }
}

/// Per-parameter sums of squared gradients.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    accum: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(net: &Network) -> Self {
        OptimizerState {
            accum: net
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        }
    }
}

/// One AdaGrad update with L2 decay folded into the gradient:
/// `g = grad + lambda * param; accum += g^2; param -= lr * g / (sqrt(accum) + eps)`.
pub fn adagrad_step(
    param: &mut Tensor,
    grad: &Tensor,
    accum: &mut Tensor,
    lr: f64,
    lambda: f64,
    eps: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != accum.shape() {
        return Err(Error::ShapeMismatch(format!(
            "adagrad_step: param {:?}, grad {:?}, accum {:?}",
            param.shape(),
            grad.shape(),
            accum.shape()
        )));
    }
    let p = param.data_mut();
    let a = accum.data_mut();
    for ((pv, av), &gv) in p.iter_mut().zip(a.iter_mut()).zip(grad.data()) {
        let g = gv + lambda * *pv;
        *av += g * g;
        *pv -= lr * g / (av.sqrt() + eps);
    }
    Ok(())
}

fn step_trainable(
    net: &mut Network,
    graph: &Graph,
    binding: &Binding,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    for (i, param) in net.params.iter_mut().enumerate() {
        if !param.trainable {
            continue;
        }
        adagrad_step(
            &mut param.value,
            graph.grad(binding.param_ids[i]),
            &mut opt.accum[i],
            cfg.lr,
            cfg.weight_decay,
            cfg.adagrad_epsilon,
        )?;
    }
    Ok(())
}

/// Validation numbers collected after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct ValStats {
    pub bce_full: f64,
    pub bce_down: f64,
    pub cc: f64,
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val: Option<ValStats>,
}

/// Outcome of one training phase.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub generator_updates: usize,
    pub discriminator_updates: usize,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
}

fn check_dims(gen: &Network, data: &Dataset) -> Result<()> {
    let (c, h, w) = gen.config.input_shape;
    if c != 3 || h != data.height || w != data.width {
        return Err(Error::ShapeMismatch(format!(
            "network expects ({c}, {h}, {w}) images, dataset provides (3, {}, {})",
            data.height, data.width
        )));
    }
    Ok(())
}

/// Mean full-resolution BCE, downsampled BCE, and CC of the generator over
/// the given samples.
pub fn validate_generator(
    gen: &Network,
    data: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<Option<ValStats>> {
    if indices.is_empty() {
        return Ok(None);
    }
    let mut bce_full_sum = 0.0;
    let mut bce_down_sum = 0.0;
    let mut cc_sum = 0.0;
    let mut cc_count = 0usize;
    let mut weight = 0usize;
    for batch in Dataset::batches(indices, cfg.batch_size) {
        let images = data.image_batch(&batch);
        let maps = data.map_batch(&batch);
        let mut g = Graph::new();
        let binding = gen.bind_frozen(&mut g);
        let input = g.leaf(images);
        let pred = gen.apply(&mut g, &binding, input)?;
        let target = g.leaf(maps.clone());
        let full = loss::bce(&mut g, pred, target)?;
        let ds_pred = loss::downsample_map(&mut g, pred, cfg.downsample_factor)?;
        let ds_target = g.leaf(avgpool2(&maps, cfg.downsample_factor)?);
        let down = loss::bce(&mut g, ds_pred, ds_target)?;
        bce_full_sum += full.value * batch.len() as f64;
        bce_down_sum += down.value * batch.len() as f64;
        weight += batch.len();

        let pred_val = g.value(pred).clone();
        let (h, w) = (data.height, data.width);
        for (bi, &si) in batch.iter().enumerate() {
            let plane = pred_val.data()[bi * h * w..(bi + 1) * h * w].to_vec();
            let pm = SaliencyMap::new(w, h, plane)?;
            if let Ok(v) = metrics::cc(&pm, &data.samples[si].gt_map) {
                cc_sum += v;
                cc_count += 1;
            }
        }
    }
    Ok(Some(ValStats {
        bce_full: bce_full_sum / weight as f64,
        bce_down: bce_down_sum / weight as f64,
        cc: if cc_count > 0 {
            cc_sum / cc_count as f64
        } else {
            f64::NAN
        },
    }))
}

struct Logs {
    loss: BufWriter<File>,
    val: BufWriter<File>,
}

impl Logs {
    fn create(out_dir: &Path, phase: &str) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        let mut loss = BufWriter::new(File::create(out_dir.join(format!("loss_{phase}.csv")))?);
        writeln!(
            loss,
            "phase,epoch,step,loss_total,loss_bce,loss_adv,loss_disc"
        )?;
        let mut val = BufWriter::new(File::create(out_dir.join(format!("val_{phase}.csv")))?);
        writeln!(val, "phase,epoch,val_bce_full,val_bce_down,val_cc")?;
        Ok(Logs { loss, val })
    }

    fn row(
        &mut self,
        phase: &str,
        epoch: usize,
        step: usize,
        total: f64,
        bce: f64,
        adv: f64,
        disc: f64,
    ) -> Result<()> {
        writeln!(
            self.loss,
            "{phase},{epoch},{step},{total:.8e},{bce:.8e},{adv:.8e},{disc:.8e}"
        )?;
        Ok(())
    }

    fn val_row(&mut self, phase: &str, epoch: usize, stats: &ValStats) -> Result<()> {
        writeln!(
            self.val,
            "{phase},{epoch},{:.8e},{:.8e},{:.8e}",
            stats.bce_full, stats.bce_down, stats.cc
        )?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.loss.flush()?;
        self.val.flush()?;
        Ok(())
    }
}

/// Bootstrap phase: trains the generator alone on factor-downsampled BCE,
/// writing `ckpt_bootstrap_{epoch:04}.sglb` plus loss/validation CSVs under
/// `out_dir`. Shuffling is seeded, so reruns are byte-identical.
pub fn train_bootstrap(
    gen: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_dims(gen, data)?;
    let train_idx = data.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "no training samples in dataset".into(),
        ));
    }
    let val_idx = data.indices_of(Split::Val);
    let mut logs = Logs::create(out_dir, "bootstrap")?;
    let mut opt = OptimizerState::new(gen);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train_idx;
    let mut epochs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut updates = 0usize;

    for epoch in 1..=cfg.bootstrap_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (step, batch) in Dataset::batches(&order, cfg.batch_size)
            .into_iter()
            .enumerate()
        {
            let images = data.image_batch(&batch);
            let maps = data.map_batch(&batch);
            let mut g = Graph::new();
            let binding = gen.bind(&mut g);
            let input = g.leaf(images);
            let pred = gen.apply(&mut g, &binding, input)?;
            let ds_pred = loss::downsample_map(&mut g, pred, cfg.downsample_factor)?;
            let ds_target = g.leaf(avgpool2(&maps, cfg.downsample_factor)?);
            let content = loss::bce(&mut g, ds_pred, ds_target)?;
            g.backward(content.node)?;
            step_trainable(gen, &g, &binding, &mut opt, cfg)?;
            updates += 1;
            loss_sum += content.value;
            batches += 1;
            logs.row(
                "bootstrap",
                epoch,
                step,
                content.value,
                content.value,
                0.0,
                0.0,
            )?;
        }
        let val = validate_generator(gen, data, &val_idx, cfg)?;
        if let Some(v) = &val {
            logs.val_row("bootstrap", epoch, v)?;
        }
        let path = out_dir.join(format!("ckpt_bootstrap_{epoch:04}.sglb"));
        Checkpoint::from_network(gen, cfg).save(&path)?;
        checkpoints.push(path);
        epochs.push(EpochStats {
            epoch,
            mean_train_loss: loss_sum / batches.max(1) as f64,
            val,
        });
    }
    if checkpoints.is_empty() {
        let path = out_dir.join("ckpt_bootstrap_0000.sglb");
        Checkpoint::from_network(gen, cfg).save(&path)?;
        checkpoints.push(path);
    }
    logs.flush()?;
    Ok(TrainReport {
        epochs,
        generator_updates: updates,
        discriminator_updates: 0,
        final_checkpoint: checkpoints.last().cloned().unwrap(),
        checkpoints,
    })
}

/// Adversarial phase: per batch, one discriminator step on Eq.-4 style
/// real/fake BCE (the fake prediction detached), then one generator step on
/// the alpha-weighted content BCE plus the adversarial term through the
/// frozen-weight discriminator. Writes `ckpt_adversarial_{epoch:04}.sglb`
/// for the generator and a `_disc` companion for the discriminator.
pub fn train_adversarial(
    gen: &mut Network,
    disc: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_dims(gen, data)?;
    let (dc, dh, dw) = disc.config.input_shape;
    if dc != 4 || dh != data.height || dw != data.width {
        return Err(Error::ShapeMismatch(format!(
            "discriminator expects ({dc}, {dh}, {dw}), dataset provides (4, {}, {})",
            data.height, data.width
        )));
    }
    let train_idx = data.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "no training samples in dataset".into(),
        ));
    }
    let val_idx = data.indices_of(Split::Val);
    let mut logs = Logs::create(out_dir, "adversarial")?;
    let mut gen_opt = OptimizerState::new(gen);
    let mut disc_opt = OptimizerState::new(disc);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train_idx;
    let mut epochs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut gen_updates = 0usize;
    let mut disc_updates = 0usize;

    for epoch in 1..=cfg.adversarial_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (step, batch) in Dataset::batches(&order, cfg.batch_size)
            .into_iter()
            .enumerate()
        {
            let images = data.image_batch(&batch);
            let maps = data.map_batch(&batch);

            // Discriminator step. The generator is bound frozen, so its
            // prediction acts as a constant and no gradient reaches it.
            let disc_loss = {
                let mut g = Graph::new();
                let gen_bind = gen.bind_frozen(&mut g);
                let input = g.leaf(images.clone());
                let pred = gen.apply(&mut g, &gen_bind, input)?;
                let disc_bind = disc.bind(&mut g);
                let real_maps = g.leaf(maps.clone());
                let rgbs_real = g.concat_channels(input, real_maps)?;
                let d_real = disc.apply(&mut g, &disc_bind, rgbs_real)?;
                let rgbs_fake = g.concat_channels(input, pred)?;
                let d_fake = disc.apply(&mut g, &disc_bind, rgbs_fake)?;
                let ld = loss::discriminator_loss(&mut g, d_real, d_fake)?;
                g.backward(ld.node)?;
                step_trainable(disc, &g, &disc_bind, &mut disc_opt, cfg)?;
                disc_updates += 1;
                ld.value
            };

            // Generator step through the frozen-weight discriminator.
            let (total, content_term) = {
                let mut g = Graph::new();
                let gen_bind = gen.bind(&mut g);
                let input = g.leaf(images);
                let pred = gen.apply(&mut g, &gen_bind, input)?;
                let ds_pred = loss::downsample_map(&mut g, pred, cfg.downsample_factor)?;
                let ds_target = g.leaf(avgpool2(&maps, cfg.downsample_factor)?);
                let content = loss::bce(&mut g, ds_pred, ds_target)?;
                let disc_bind = disc.bind_frozen(&mut g);
                let rgbs = g.concat_channels(input, pred)?;
                let d_out = disc.apply(&mut g, &disc_bind, rgbs)?;
                let total = loss::generator_adv_loss(&mut g, d_out, content, cfg.alpha)?;
                g.backward(total.node)?;
                step_trainable(gen, &g, &gen_bind, &mut gen_opt, cfg)?;
                gen_updates += 1;
                (total.value, cfg.alpha * content.value)
            };

            loss_sum += total;
            batches += 1;
            logs.row(
                "adversarial",
                epoch,
                step,
                total,
                content_term,
                total - content_term,
                disc_loss,
            )?;
        }
        let val = validate_generator(gen, data, &val_idx, cfg)?;
        if let Some(v) = &val {
            logs.val_row("adversarial", epoch, v)?;
        }
        let path = out_dir.join(format!("ckpt_adversarial_{epoch:04}.sglb"));
        Checkpoint::from_network(gen, cfg).save(&path)?;
        Checkpoint::from_network(disc, cfg)
            .save(&out_dir.join(format!("ckpt_adversarial_disc_{epoch:04}.sglb")))?;
        checkpoints.push(path);
        epochs.push(EpochStats {
            epoch,
            mean_train_loss: loss_sum / batches.max(1) as f64,
            val,
        });
    }
    if checkpoints.is_empty() {
        let path = out_dir.join("ckpt_adversarial_0000.sglb");
        Checkpoint::from_network(gen, cfg).save(&path)?;
        checkpoints.push(path);
    }
    logs.flush()?;
    Ok(TrainReport {
        epochs,
        generator_updates: gen_updates,
        discriminator_updates: disc_updates,
        final_checkpoint: checkpoints.last().cloned().unwrap(),
        checkpoints,
    })
}
