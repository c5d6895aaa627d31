//! Saliency evaluation metrics: the three AUC variants, NSS, CC, SIM, KL,
//! information gain, and earth mover's distance, plus Gaussian blurring and
//! the batch evaluation harness.
//!
//! Conventions: NSS and CC standardize with the population (not sample)
//! standard deviation. KL is KL(ground truth || prediction) in nats; IG is
//! in bits. AUC variants use an exact ROC sweep over every distinct value,
//! with a value tied with the threshold counting as positive; the resulting
//! trapezoidal area equals the Mann-Whitney statistic with half credit for
//! ties, so a constant map scores exactly 0.5.

mod emd;

pub use emd::emd;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A single-channel map of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("map dims must be positive".into()));
        }
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "map contains non-finite values".into(),
            ));
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        SaliencyMap::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Interprets a (1, 1, H, W) or (H, W) tensor as a map.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w) = match t.shape() {
            [1, 1, h, w] => (*h, *w),
            [h, w] => (*h, *w),
            other => {
                return Err(Error::ShapeMismatch(format!(
                    "cannot view tensor of shape {other:?} as a saliency map"
                )))
            }
        };
        SaliencyMap::new(w, h, t.data().to_vec())
    }

    /// Rank-4 (1, 1, H, W) view for the tensor kernels.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, 1, self.height, self.width], self.values.clone())
            .expect("map dims are consistent")
    }

    /// Block-mean downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        let t = crate::tensor::avgpool2(&self.to_tensor(), factor)?;
        SaliencyMap::from_tensor(&t)
    }

    fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Copy normalized to sum 1.
    fn to_distribution(&self, what: &str) -> Result<Vec<f64>> {
        let s = self.sum();
        if s <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "{what}: map has non-positive sum {s}"
            )));
        }
        Ok(self.values.iter().map(|&v| v / s).collect())
    }

    fn mean_std(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let mean = self.sum() / n;
        let var = self
            .values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }
}

/// Discrete fixation locations as (x, y) pixel coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixationSet {
    pub points: Vec<(usize, usize)>,
}

impl FixationSet {
    pub fn new(points: Vec<(usize, usize)>) -> Self {
        FixationSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_bounds(&self, map: &SaliencyMap) -> Result<()> {
        for &(x, y) in &self.points {
            if x >= map.width || y >= map.height {
                return Err(Error::InvalidArgument(format!(
                    "fixation ({x}, {y}) outside {}x{} map",
                    map.width, map.height
                )));
            }
        }
        Ok(())
    }

    fn values_on(&self, map: &SaliencyMap) -> Vec<f64> {
        self.points.iter().map(|&(x, y)| map.at(x, y)).collect()
    }
}

/// Exact area under the ROC curve for the given positive and negative
/// scores: thresholds sweep every distinct value (a score equal to the
/// threshold counts as above it), trapezoids connect the (FPR, TPR) points,
/// and the endpoints (0,0) and (1,1) are included.
fn roc_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    debug_assert!(!positives.is_empty() && !negatives.is_empty());
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    neg.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let np = pos.len() as f64;
    let nn = neg.len() as f64;

    let (mut pi, mut ni) = (0usize, 0usize);
    let (mut prev_fpr, mut prev_tpr) = (0.0f64, 0.0f64);
    let mut area = 0.0;
    while pi < pos.len() || ni < neg.len() {
        // Next distinct threshold value from above.
        let t = match (pos.get(pi), neg.get(ni)) {
            (Some(&p), Some(&n)) => p.max(n),
            (Some(&p), None) => p,
            (None, Some(&n)) => n,
            (None, None) => break,
        };
        while pi < pos.len() && pos[pi] >= t {
            pi += 1;
        }
        while ni < neg.len() && neg[ni] >= t {
            ni += 1;
        }
        let fpr = ni as f64 / nn;
        let tpr = pi as f64 / np;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    area
}

/// AUC with every non-fixated pixel as a negative.
pub fn auc_judd(map: &SaliencyMap, fix: &FixationSet) -> Result<f64> {
    if fix.is_empty() {
        return Err(Error::DegenerateInput(
            "auc_judd: empty fixation set".into(),
        ));
    }
    fix.check_bounds(map)?;
    let mut fixated = vec![false; map.values.len()];
    for &(x, y) in &fix.points {
        fixated[y * map.width + x] = true;
    }
    let negatives: Vec<f64> = map
        .values
        .iter()
        .zip(&fixated)
        .filter_map(|(&v, &f)| (!f).then_some(v))
        .collect();
    if negatives.is_empty() {
        return Err(Error::DegenerateInput(
            "auc_judd: no non-fixated pixels to use as negatives".into(),
        ));
    }
    Ok(roc_auc(&fix.values_on(map), &negatives))
}

/// AUC with negatives drawn uniformly (with replacement) from non-fixated
/// pixel locations, averaged over `splits` draws.
pub fn auc_borji(
    map: &SaliencyMap,
    fix: &FixationSet,
    splits: usize,
    negatives_per_split: usize,
    seed: u64,
) -> Result<f64> {
    if fix.is_empty() {
        return Err(Error::DegenerateInput(
            "auc_borji: empty fixation set".into(),
        ));
    }
    if splits == 0 || negatives_per_split == 0 {
        return Err(Error::InvalidArgument(
            "auc_borji: splits and negatives-per-split must be >= 1".into(),
        ));
    }
    fix.check_bounds(map)?;
    let mut fixated = vec![false; map.values.len()];
    for &(x, y) in &fix.points {
        fixated[y * map.width + x] = true;
    }
    let pool: Vec<f64> = map
        .values
        .iter()
        .zip(&fixated)
        .filter_map(|(&v, &f)| (!f).then_some(v))
        .collect();
    if pool.is_empty() {
        return Err(Error::DegenerateInput(
            "auc_borji: no non-fixated pixels".into(),
        ));
    }
    let positives = fix.values_on(map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..splits {
        let negatives: Vec<f64> = (0..negatives_per_split)
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .collect();
        total += roc_auc(&positives, &negatives);
    }
    Ok(total / splits as f64)
}

/// Shuffled AUC: negatives are sampled from other images' fixation
/// locations instead of uniform pixels.
pub fn auc_shuffled(
    map: &SaliencyMap,
    fix: &FixationSet,
    other_fixations: &[FixationSet],
    splits: usize,
    seed: u64,
) -> Result<f64> {
    if fix.is_empty() {
        return Err(Error::DegenerateInput(
            "auc_shuffled: empty fixation set".into(),
        ));
    }
    if splits == 0 {
        return Err(Error::InvalidArgument(
            "auc_shuffled: splits must be >= 1".into(),
        ));
    }
    fix.check_bounds(map)?;
    let mut pool = Vec::new();
    for other in other_fixations {
        other.check_bounds(map)?;
        pool.extend(other.points.iter().map(|&(x, y)| map.at(x, y)));
    }
    if pool.is_empty() {
        return Err(Error::DegenerateInput(
            "auc_shuffled: empty negative pool".into(),
        ));
    }
    let positives = fix.values_on(map);
    let per_split = positives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..splits {
        let negatives: Vec<f64> = (0..per_split)
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .collect();
        total += roc_auc(&positives, &negatives);
    }
    Ok(total / splits as f64)
}

/// Normalized scanpath saliency: mean of the zero-mean, unit-variance
/// standardized map over the fixated pixels.
pub fn nss(map: &SaliencyMap, fix: &FixationSet) -> Result<f64> {
    if fix.is_empty() {
        return Err(Error::DegenerateInput("nss: empty fixation set".into()));
    }
    fix.check_bounds(map)?;
    let (mean, std) = map.mean_std();
    if std == 0.0 {
        return Err(Error::DegenerateInput("nss: map has zero variance".into()));
    }
    let s: f64 = fix
        .points
        .iter()
        .map(|&(x, y)| (map.at(x, y) - mean) / std)
        .sum();
    Ok(s / fix.len() as f64)
}

/// Pearson linear correlation between the two maps over all pixels.
pub fn cc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::ShapeMismatch(format!(
            "cc: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mp, sp) = pred.mean_std();
    let (mg, sg) = gt.mean_std();
    if sp == 0.0 || sg == 0.0 {
        return Err(Error::DegenerateInput("cc: constant map".into()));
    }
    let n = pred.values.len() as f64;
    let cov = pred
        .values
        .iter()
        .zip(&gt.values)
        .map(|(&a, &b)| (a - mp) * (b - mg))
        .sum::<f64>()
        / n;
    Ok(cov / (sp * sg))
}

/// Histogram intersection of the two maps normalized as distributions.
pub fn sim(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::ShapeMismatch(format!(
            "sim: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let p = pred.to_distribution("sim")?;
    let g = gt.to_distribution("sim")?;
    Ok(p.iter().zip(&g).map(|(&a, &b)| a.min(b)).sum())
}

/// KL(gt || pred) in nats with both maps normalized to sum 1 and `epsilon`
/// guarding the denominator and the logarithm.
pub fn kl(gt: &SaliencyMap, pred: &SaliencyMap, epsilon: f64) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::ShapeMismatch(format!(
            "kl: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let g = gt.to_distribution("kl")?;
    let p = pred.to_distribution("kl")?;
    Ok(g.iter()
        .zip(&p)
        .map(|(&gv, &pv)| gv * (gv / (pv + epsilon) + epsilon).ln())
        .sum())
}

/// Mean log2 probability improvement of the prediction over a baseline at
/// the fixated pixels, both normalized to sum 1. Positive means the
/// prediction explains the fixations better than the baseline.
pub fn info_gain(
    pred: &SaliencyMap,
    fix: &FixationSet,
    baseline: &SaliencyMap,
    epsilon: f64,
) -> Result<f64> {
    if fix.is_empty() {
        return Err(Error::DegenerateInput(
            "info_gain: empty fixation set".into(),
        ));
    }
    if pred.width != baseline.width || pred.height != baseline.height {
        return Err(Error::ShapeMismatch(format!(
            "info_gain: {}x{} vs baseline {}x{}",
            pred.width, pred.height, baseline.width, baseline.height
        )));
    }
    fix.check_bounds(pred)?;
    let p = pred.to_distribution("info_gain")?;
    let b = baseline.to_distribution("info_gain")?;
    let s: f64 = fix
        .points
        .iter()
        .map(|&(x, y)| {
            let i = y * pred.width + x;
            (p[i] + epsilon).log2() - (b[i] + epsilon).log2()
        })
        .sum();
    Ok(s / fix.len() as f64)
}

/// Separable Gaussian blur with kernel radius ceil(3*sigma), a kernel
/// renormalized to sum 1, and reflect padding at the borders.
pub fn gaussian_blur(map: &SaliencyMap, sigma: f64) -> Result<SaliencyMap> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be > 0, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for k in -radius..=radius {
        kernel.push((-(k as f64) * (k as f64) / (2.0 * sigma * sigma)).exp());
    }
    let ksum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= ksum);

    let reflect = |mut i: i64, n: i64| -> usize {
        // Edge-repeating reflection, folded until in range.
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return i as usize;
            }
        }
    };

    let (w, h) = (map.width as i64, map.height as i64);
    // Horizontal pass.
    let mut tmp = vec![0.0; map.values.len()];
    for y in 0..map.height {
        let row = &map.values[y * map.width..(y + 1) * map.width];
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x + ki as i64 - radius, w);
                acc += kv * row[sx];
            }
            tmp[y * map.width + x as usize] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; map.values.len()];
    for x in 0..map.width {
        for y in 0..h {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y + ki as i64 - radius, h);
                acc += kv * tmp[sy * map.width + x];
            }
            out[y as usize * map.width + x] = acc;
        }
    }
    SaliencyMap::new(map.width, map.height, out)
}

/// Baseline used by information gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IgBaseline {
    /// Uniform distribution over pixels.
    Uniform,
    /// Isotropic Gaussian at the image center with sigma = width / 4.
    Center,
}

impl IgBaseline {
    pub fn build(self, width: usize, height: usize) -> SaliencyMap {
        match self {
            IgBaseline::Uniform => {
                SaliencyMap::new(width, height, vec![1.0; width * height]).expect("uniform map")
            }
            IgBaseline::Center => {
                let sigma = width as f64 / 4.0;
                let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
                let values = (0..width * height)
                    .map(|i| {
                        let (x, y) = ((i % width) as f64, (i / width) as f64);
                        let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                        (-d2 / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                SaliencyMap::new(width, height, values).expect("center map")
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IgBaseline::Uniform => "uniform",
            IgBaseline::Center => "center",
        }
    }
}

/// Settings shared by a whole evaluation run and echoed into the report.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    /// Blur applied to predictions before scoring, if any.
    pub blur_sigma: Option<f64>,
    pub auc_splits: usize,
    /// Negatives per split for AUC-Borji; defaults to the fixation count.
    pub negatives_per_split: Option<usize>,
    pub ig_baseline: IgBaseline,
    pub emd_downsample: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            blur_sigma: None,
            auc_splits: 100,
            negatives_per_split: None,
            ig_baseline: IgBaseline::Uniform,
            emd_downsample: 8,
            seed: 0,
        }
    }
}

/// One image's inputs for the evaluation harness.
#[derive(Debug, Clone)]
pub struct EvalEntry {
    pub id: String,
    pub pred: SaliencyMap,
    pub gt: SaliencyMap,
    pub fixations: Option<FixationSet>,
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub image_id: String,
    pub metric: &'static str,
    pub value: f64,
}

/// Per-image metric rows plus per-metric means and the settings they were
/// produced under.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub settings: EvalSettings,
    pub rows: Vec<MetricRow>,
    pub means: Vec<(&'static str, f64)>,
    /// Human-readable reasons for skipped metrics, in manifest order.
    pub skipped: Vec<String>,
}

pub const METRIC_NAMES: [&str; 9] = [
    "auc_judd",
    "auc_borji",
    "auc_shuffled",
    "nss",
    "cc",
    "sim",
    "kl",
    "ig",
    "emd",
];

/// Derives a per-image RNG seed that does not depend on evaluation order.
fn image_seed(base: u64, index: usize, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates all nine metrics per entry where inputs permit. Fixation-based
/// metrics are skipped (with a reason) when fixations are absent; degenerate
/// maps skip the affected metric the same way. Images are processed in
/// parallel but results are reduced in manifest order, so the report is
/// identical regardless of thread count.
pub fn evaluate_all(entries: &[EvalEntry], settings: &EvalSettings) -> Result<MetricReport> {
    struct ImageResult {
        values: Vec<(&'static str, f64)>,
        skipped: Vec<String>,
    }

    let per_image: Vec<ImageResult> = entries
        .par_iter()
        .enumerate()
        .map(|(idx, entry)| -> Result<ImageResult> {
            let mut values = Vec::new();
            let mut skipped = Vec::new();
            let pred = match settings.blur_sigma {
                Some(sigma) => gaussian_blur(&entry.pred, sigma)?,
                None => entry.pred.clone(),
            };

            let mut push = |name: &'static str, r: Result<f64>, skipped: &mut Vec<String>| {
                match r {
                    Ok(v) => values.push((name, v)),
                    Err(Error::DegenerateInput(reason)) => {
                        skipped.push(format!("{}: {name} skipped: {reason}", entry.id));
                    }
                    Err(e) => return Err(e),
                }
                Ok(())
            };

            match &entry.fixations {
                Some(fix) if !fix.is_empty() => {
                    push("auc_judd", auc_judd(&pred, fix), &mut skipped)?;
                    let negs = settings.negatives_per_split.unwrap_or(fix.len());
                    push(
                        "auc_borji",
                        auc_borji(&pred, fix, settings.auc_splits, negs, image_seed(settings.seed, idx, 1)),
                        &mut skipped,
                    )?;
                    let mut pool = Vec::new();
                    for (j, other) in entries.iter().enumerate() {
                        if j == idx {
                            continue;
                        }
                        if let Some(f) = &other.fixations {
                            if !f.is_empty() {
                                pool.push(f.clone());
                            }
                        }
                    }
                    if pool.is_empty() {
                        skipped.push(format!(
                            "{}: auc_shuffled skipped: no other-image fixations available",
                            entry.id
                        ));
                    } else {
                        push(
                            "auc_shuffled",
                            auc_shuffled(&pred, fix, &pool, settings.auc_splits, image_seed(settings.seed, idx, 2)),
                            &mut skipped,
                        )?;
                    }
                    push("nss", nss(&pred, fix), &mut skipped)?;
                }
                _ => skipped.push(format!(
                    "{}: fixation metrics (auc_judd, auc_borji, auc_shuffled, nss, ig) skipped: no fixations",
                    entry.id
                )),
            }

            push("cc", cc(&pred, &entry.gt), &mut skipped)?;
            push("sim", sim(&pred, &entry.gt), &mut skipped)?;
            push("kl", kl(&entry.gt, &pred, 1e-12), &mut skipped)?;
            if let Some(fix) = entry.fixations.as_ref().filter(|f| !f.is_empty()) {
                let baseline = settings.ig_baseline.build(pred.width, pred.height);
                push("ig", info_gain(&pred, fix, &baseline, 1e-12), &mut skipped)?;
            }
            push(
                "emd",
                emd(&pred, &entry.gt, settings.emd_downsample),
                &mut skipped,
            )?;

            Ok(ImageResult { values, skipped })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut sums: Vec<(f64, usize)> = vec![(0.0, 0); METRIC_NAMES.len()];
    for (entry, result) in entries.iter().zip(per_image) {
        for name in METRIC_NAMES {
            if let Some((_, v)) = result.values.iter().find(|(n, _)| *n == name) {
                rows.push(MetricRow {
                    image_id: entry.id.clone(),
                    metric: name,
                    value: *v,
                });
                let slot = METRIC_NAMES.iter().position(|n| *n == name).unwrap();
                sums[slot].0 += *v;
                sums[slot].1 += 1;
            }
        }
        skipped.extend(result.skipped);
    }
    let means = METRIC_NAMES
        .iter()
        .zip(&sums)
        .filter_map(|(name, &(s, c))| (c > 0).then(|| (*name, s / c as f64)))
        .collect();
    Ok(MetricReport {
        settings: settings.clone(),
        rows,
        means,
        skipped,
    })
}

impl MetricReport {
    /// CSV with `#`-prefixed settings comments, one row per (image, metric),
    /// and an aggregate block under the image id `__mean__`. Values use 9
    /// significant digits.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        let negs = match self.settings.negatives_per_split {
            Some(n) => n.to_string(),
            None => "fixation_count".to_string(),
        };
        let blur = match self.settings.blur_sigma {
            Some(s) => format!("{s}"),
            None => "none".to_string(),
        };
        writeln!(out, "# blur_sigma={blur}")?;
        writeln!(out, "# auc_splits={}", self.settings.auc_splits)?;
        writeln!(out, "# negatives_per_split={negs}")?;
        writeln!(out, "# ig_baseline={}", self.settings.ig_baseline.name())?;
        writeln!(out, "# emd_downsample={}", self.settings.emd_downsample)?;
        writeln!(out, "# seed={}", self.settings.seed)?;
        writeln!(out, "image_id,metric,value")?;
        for row in &self.rows {
            writeln!(out, "{},{},{:.8e}", row.image_id, row.metric, row.value)?;
        }
        for (name, value) in &self.means {
            writeln!(out, "__mean__,{name},{value:.8e}")?;
        }
        Ok(())
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.means
            .iter()
            .find(|(n, _)| *n == metric)
            .map(|&(_, v)| v)
    }
}
