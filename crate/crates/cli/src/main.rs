//! Single command-line entry point: `gen-data`, `train`, `predict`, `eval`,
//! and `gradcheck` subcommands. Every run prints its fully resolved config
//! (defaults included) before acting; all randomness is controlled by
//! `--seed`. Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use sallab_core::checkpoint::{Checkpoint, FORMAT_VERSION};
use sallab_core::data::{self, Dataset, Manifest, SynthConfig};
use sallab_core::error::{Error, Result};
use sallab_core::gradsuite::run_standard_battery;
use sallab_core::metrics::{EvalEntry, EvalSettings, IgBaseline};
use sallab_core::model::{build_discriminator, build_generator, NetConfig};
use sallab_core::train::{train_adversarial, train_bootstrap, TrainConfig};

fn version_string() -> &'static str {
    Box::leak(
        format!(
            "{} (checkpoint format v{FORMAT_VERSION})",
            env!("CARGO_PKG_VERSION")
        )
        .into_boxed_str(),
    )
}

#[derive(Parser)]
#[command(name = "sallab", version = version_string(), about = "Desk-scale visual saliency laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fixation dataset (images, maps, fixations, manifest).
    GenData(GenDataArgs),
    /// Train the generator (bootstrap phase) or the generator/discriminator pair (adversarial phase).
    Train(TrainArgs),
    /// Predict a saliency map for one image using a checkpoint.
    Predict(PredictArgs),
    /// Evaluate predictions (or a checkpoint) against ground truth and fixations.
    Eval(EvalArgs),
    /// Check analytic gradients of every primitive and loss against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory for the dataset.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Ground-truth blur sigma; defaults to width / 16.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1)]
    min_objects: usize,
    #[arg(long, default_value_t = 3)]
    max_objects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Phase {
    Bootstrap,
    Adversarial,
}

/// Optional JSON config file; flags override these values, these override
/// the built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    alpha: Option<f64>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    batch: Option<usize>,
    downsample: Option<usize>,
    epochs: Option<usize>,
    scale: Option<usize>,
    seed: Option<u64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::InvalidArgument(format!("config file {}: {e}", p.display()))
                })
            }
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (holding manifest.jsonl) or manifest path.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    phase: Phase,
    /// Output directory for checkpoints and loss logs.
    #[arg(long)]
    out: PathBuf,
    /// Epochs for the selected phase (defaults: 15 bootstrap, 10 adversarial).
    #[arg(long)]
    epochs: Option<usize>,
    /// Width divisor applied to all regular conv depths.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Adversarial content weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// AdaGrad learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// L2 weight decay.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Batch size (paper-scale default 32; 8 is a good desk-scale choice).
    #[arg(long)]
    batch: Option<usize>,
    /// Content-loss downsample factor (1, 2, 4, or 8).
    #[arg(long)]
    downsample: Option<usize>,
    /// Bootstrap checkpoint to start from; required for the adversarial phase.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Optional discriminator checkpoint to resume from.
    #[arg(long)]
    disc_init: Option<PathBuf>,
    /// JSON config file; precedence is flag > file > default.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint to load the generator from.
    #[arg(long)]
    model: PathBuf,
    /// Input image (binary P6 pixmap).
    #[arg(long)]
    image: PathBuf,
    /// Output map path; .pfm stores exact floats, .pgm an 8-bit view.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Uniform,
    Center,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted maps ({id}.pfm or {id}.pgm).
    #[arg(long, conflicts_with = "model")]
    pred: Option<PathBuf>,
    /// Checkpoint to predict with (into a temp directory) before evaluating.
    #[arg(long, requires = "images")]
    model: Option<PathBuf>,
    /// Directory of input images, required with --model.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Directory of ground-truth maps.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of fixation lists ({id}.txt); fixation metrics are skipped without it.
    #[arg(long)]
    fix: Option<PathBuf>,
    /// Report CSV path.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 100)]
    splits: usize,
    /// Negatives per AUC-Borji split; defaults to each image's fixation count.
    #[arg(long)]
    negatives: Option<usize>,
    /// Blur predictions with this sigma before scoring.
    #[arg(long)]
    blur_sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = BaselineArg::Uniform)]
    ig_baseline: BaselineArg,
    #[arg(long, default_value_t = 8)]
    emd_downsample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-image evaluation (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Maximum relative error allowed.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Coordinates sampled per parameter.
    #[arg(long, default_value_t = 24)]
    max_coords: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn print_config(command: &str, value: serde_json::Value) {
    println!("resolved config ({command}): {value}");
}

fn cmd_gen_data(args: GenDataArgs) -> Result<i32> {
    let sigma = args.sigma.unwrap_or(args.width as f64 / 16.0);
    let cfg = SynthConfig {
        count: args.count,
        width: args.width,
        height: args.height,
        blur_sigma: sigma,
        min_objects: args.min_objects,
        max_objects: args.max_objects,
        seed: args.seed,
    };
    print_config(
        "gen-data",
        json!({
            "out": args.out, "count": cfg.count, "width": cfg.width,
            "height": cfg.height, "sigma": cfg.blur_sigma,
            "min_objects": cfg.min_objects, "max_objects": cfg.max_objects,
            "seed": cfg.seed,
        }),
    );
    let manifest = data::gen_synthetic(&args.out, &cfg)?;
    eprintln!(
        "wrote {} samples and {} to {}",
        manifest.entries.len(),
        Manifest::FILENAME,
        args.out.display()
    );
    Ok(0)
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(Manifest::FILENAME)
    } else {
        data.to_path_buf()
    }
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = TrainConfig::default();
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let scale = args.scale.or(file.scale).unwrap_or(1);
    let epochs = args.epochs.or(file.epochs).unwrap_or(match args.phase {
        Phase::Bootstrap => defaults.bootstrap_epochs,
        Phase::Adversarial => defaults.adversarial_epochs,
    });
    let mut cfg = TrainConfig {
        alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
        lr: args.lr.or(file.lr).unwrap_or(defaults.lr),
        weight_decay: args
            .weight_decay
            .or(file.weight_decay)
            .unwrap_or(defaults.weight_decay),
        batch_size: args.batch.or(file.batch).unwrap_or(defaults.batch_size),
        downsample_factor: args
            .downsample
            .or(file.downsample)
            .unwrap_or(defaults.downsample_factor),
        seed,
        ..defaults
    };
    match args.phase {
        Phase::Bootstrap => cfg.bootstrap_epochs = epochs,
        Phase::Adversarial => cfg.adversarial_epochs = epochs,
    }
    cfg.validate()?;

    let phase_name = match args.phase {
        Phase::Bootstrap => "bootstrap",
        Phase::Adversarial => "adversarial",
    };
    print_config(
        "train",
        json!({
            "data": args.data, "phase": phase_name, "out": args.out,
            "epochs": epochs, "scale": scale, "seed": cfg.seed,
            "alpha": cfg.alpha, "lr": cfg.lr, "weight_decay": cfg.weight_decay,
            "batch": cfg.batch_size, "downsample": cfg.downsample_factor,
            "adagrad_epsilon": cfg.adagrad_epsilon,
            "init": args.init, "disc_init": args.disc_init,
        }),
    );

    let dataset = Dataset::load(&manifest_path(&args.data))?;
    match args.phase {
        Phase::Bootstrap => {
            let mut gen = match &args.init {
                Some(path) => Checkpoint::load(path)?.to_network()?,
                None => {
                    let net_cfg = NetConfig::generator(scale, dataset.height, dataset.width)?;
                    build_generator(&net_cfg, seed)?
                }
            };
            let report = train_bootstrap(&mut gen, &dataset, &cfg, &args.out)?;
            for e in &report.epochs {
                match &e.val {
                    Some(v) => eprintln!(
                        "epoch {:3}: train bce {:.6}, val bce {:.6} (down {:.6}), val cc {:.4}",
                        e.epoch, e.mean_train_loss, v.bce_full, v.bce_down, v.cc
                    ),
                    None => eprintln!("epoch {:3}: train bce {:.6}", e.epoch, e.mean_train_loss),
                }
            }
            eprintln!("final checkpoint: {}", report.final_checkpoint.display());
        }
        Phase::Adversarial => {
            let init = args.init.as_deref().ok_or_else(|| {
                Error::InvalidArgument(
                    "adversarial phase requires --init with a bootstrap checkpoint".into(),
                )
            })?;
            let mut gen = Checkpoint::load(init)?.to_network()?;
            let mut disc = match &args.disc_init {
                Some(path) => Checkpoint::load(path)?.to_network()?,
                None => {
                    let divisor = gen.config.scale_divisor;
                    let disc_cfg =
                        NetConfig::discriminator(divisor, dataset.height, dataset.width)?;
                    build_discriminator(&disc_cfg, seed.wrapping_add(1))?
                }
            };
            let report = train_adversarial(&mut gen, &mut disc, &dataset, &cfg, &args.out)?;
            for e in &report.epochs {
                match &e.val {
                    Some(v) => eprintln!(
                        "epoch {:3}: train loss {:.6}, val bce {:.6}, val cc {:.4}",
                        e.epoch, e.mean_train_loss, v.bce_full, v.cc
                    ),
                    None => eprintln!("epoch {:3}: train loss {:.6}", e.epoch, e.mean_train_loss),
                }
            }
            eprintln!(
                "updates: generator {}, discriminator {}",
                report.generator_updates, report.discriminator_updates
            );
            eprintln!("final checkpoint: {}", report.final_checkpoint.display());
        }
    }
    Ok(0)
}

fn cmd_predict(args: PredictArgs) -> Result<i32> {
    print_config(
        "predict",
        json!({ "model": args.model, "image": args.image, "out": args.out }),
    );
    let gen = Checkpoint::load(&args.model)?.to_network()?;
    let image = data::read_image(&args.image)?;
    let map = gen.predict_map(&image)?;
    data::write_map(&args.out, &map)?;
    eprintln!(
        "wrote {}x{} map to {}",
        map.width(),
        map.height(),
        args.out.display()
    );
    Ok(0)
}

/// Sorted file stems with one of the given extensions.
fn dir_ids(dir: &Path, extensions: &[&str]) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if extensions.iter().any(|e| ext.eq_ignore_ascii_case(e)) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    ids.dedup();
    Ok(ids)
}

fn find_map(dir: &Path, id: &str) -> Option<PathBuf> {
    for ext in ["pfm", "pgm"] {
        let p = dir.join(format!("{id}.{ext}"));
        if p.exists() {
            return Some(p);
        }
    }
    None
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let settings = EvalSettings {
        blur_sigma: args.blur_sigma,
        auc_splits: args.splits,
        negatives_per_split: args.negatives,
        ig_baseline: match args.ig_baseline {
            BaselineArg::Uniform => IgBaseline::Uniform,
            BaselineArg::Center => IgBaseline::Center,
        },
        emd_downsample: args.emd_downsample,
        seed: args.seed,
    };
    print_config(
        "eval",
        json!({
            "pred": args.pred, "model": args.model, "images": args.images,
            "gt": args.gt, "fix": args.fix, "report": args.report,
            "splits": settings.auc_splits, "negatives": settings.negatives_per_split,
            "blur_sigma": settings.blur_sigma, "ig_baseline": settings.ig_baseline.name(),
            "emd_downsample": settings.emd_downsample, "seed": settings.seed,
            "threads": args.threads,
        }),
    );

    // With --model, predict into a temp directory first.
    let _tmp;
    let pred_dir = match (&args.pred, &args.model) {
        (Some(dir), None) => dir.clone(),
        (None, Some(model)) => {
            let images_dir = args.images.as_ref().expect("clap enforces --images");
            let gen = Checkpoint::load(model)?.to_network()?;
            let tmp = tempfile::tempdir()?;
            for id in dir_ids(images_dir, &["ppm"])? {
                let image = data::read_image(&images_dir.join(format!("{id}.ppm")))?;
                let map = gen.predict_map(&image)?;
                data::write_map(&tmp.path().join(format!("{id}.pfm")), &map)?;
            }
            let dir = tmp.path().to_path_buf();
            _tmp = tmp;
            dir
        }
        _ => {
            return Err(Error::InvalidArgument(
                "eval needs either --pred or --model with --images".into(),
            ))
        }
    };

    let ids = dir_ids(&pred_dir, &["pfm", "pgm"])?;
    if ids.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no prediction maps found in {}",
            pred_dir.display()
        )));
    }
    let mut entries = Vec::with_capacity(ids.len());
    for id in &ids {
        let pred_path = find_map(&pred_dir, id).expect("listed above");
        let gt_path = find_map(&args.gt, id).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no ground-truth map for {id} in {}",
                args.gt.display()
            ))
        })?;
        let fixations = match &args.fix {
            Some(dir) => {
                let p = dir.join(format!("{id}.txt"));
                p.exists().then(|| data::read_fixations(&p)).transpose()?
            }
            None => None,
        };
        entries.push(EvalEntry {
            id: id.clone(),
            pred: data::read_map(&pred_path)?,
            gt: data::read_map(&gt_path)?,
            fixations,
        });
    }

    let report = match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| sallab_core::metrics::evaluate_all(&entries, &settings))?
        }
        None => sallab_core::metrics::evaluate_all(&entries, &settings)?,
    };
    for reason in &report.skipped {
        eprintln!("note: {reason}");
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.report)?);
    report.write_csv(&mut out)?;
    use std::io::Write;
    out.flush()?;
    for (name, value) in &report.means {
        println!("mean {name}: {value:.6}");
    }
    eprintln!("wrote report to {}", args.report.display());
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    if args.h <= 0.0 || args.tol <= 0.0 || args.max_coords == 0 {
        return Err(Error::InvalidArgument(
            "gradcheck: h, tol, and max-coords must be positive".into(),
        ));
    }
    print_config(
        "gradcheck",
        json!({ "seed": args.seed, "h": args.h, "tol": args.tol, "max_coords": args.max_coords }),
    );
    let report = run_standard_battery(args.seed, args.h, args.tol, args.max_coords)?;
    println!("{:<42} {:>14}  {}", "parameter", "max rel error", "result");
    for row in &report.rows {
        println!(
            "{:<42} {:>14.6e}  {}",
            row.name,
            row.max_rel_error,
            if row.passed { "pass" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!(
            "gradcheck passed ({} parameters, tol {:.1e})",
            report.rows.len(),
            report.tolerance
        );
        Ok(0)
    } else {
        eprintln!("gradcheck FAILED (tol {:.1e})", report.tolerance);
        Ok(1)
    }
}
