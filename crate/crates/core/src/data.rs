//! Synthetic fixation datasets and all file I/O: binary portable pixmaps
//! (P6) for images, portable graymaps (P5) or portable float maps (Pf) for
//! saliency maps, plain-text fixation lists, and JSONL dataset manifests.
//!
//! Synthetic scenes place a few high-contrast shapes on a textured noise
//! background; fixations cluster near shape centers with Gaussian jitter
//! plus a fraction of uniform outliers, and the ground-truth map is the
//! blurred, peak-normalized fixation indicator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{gaussian_blur, FixationSet, SaliencyMap};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One manifest line: an image id and the three files backing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub map: String,
    pub fix: String,
    pub split: Split,
}

/// Ordered list of dataset entries, stored as one JSON object per line in
/// `manifest.jsonl` at the dataset root.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub const FILENAME: &'static str = "manifest.jsonl";

    pub fn load(path: &Path) -> Result<Self> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 1)))?;
            if !seen.insert(entry.id.clone()) {
                return Err(Error::Format(format!("duplicate manifest id {}", entry.id)));
            }
            for rel in [&entry.image, &entry.map, &entry.fix] {
                let p = dir.join(rel);
                if !p.exists() {
                    return Err(Error::Format(format!(
                        "manifest references missing file {}",
                        p.display()
                    )));
                }
            }
            entries.push(entry);
        }
        Ok(Manifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for entry in &self.entries {
            serde_json::to_writer(&mut w, entry)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Portable pixmap / graymap / float map I/O
// ---------------------------------------------------------------------------

/// Reads PNM header tokens, skipping whitespace and `#` comments.
struct PnmTokens<R: Read> {
    reader: R,
}

impl<R: Read> PnmTokens<R> {
    fn byte(&mut self) -> Result<Option<u8>> {
        let mut b = [0u8; 1];
        match self.reader.read(&mut b)? {
            0 => Ok(None),
            _ => Ok(Some(b[0])),
        }
    }

    fn token(&mut self) -> Result<String> {
        let mut tok = Vec::new();
        loop {
            match self.byte()? {
                None => {
                    if tok.is_empty() {
                        return Err(Error::Format("unexpected end of header".into()));
                    }
                    break;
                }
                Some(b'#') if tok.is_empty() => {
                    // Comment runs to end of line.
                    while let Some(c) = self.byte()? {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => {
                    if !tok.is_empty() {
                        break;
                    }
                }
                Some(c) => tok.push(c),
            }
        }
        String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII header token".into()))
    }

    fn usize_token(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Format(format!("bad {what} in header: {t:?}")))
    }
}

/// Writes a (3, H, W) tensor with values in [0,1] as a binary P6 pixmap,
/// rounding each channel to the nearest of 256 levels.
pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::ShapeMismatch(format!(
            "write_image expects (3, H, W), got {shape:?}"
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{w} {h}\n255\n")?;
    let plane = h * w;
    let data = image.data();
    let mut row = Vec::with_capacity(3 * w);
    for y in 0..h {
        row.clear();
        for x in 0..w {
            for c in 0..3 {
                let v = data[c * plane + y * w + x];
                row.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a binary P6 pixmap into a (3, H, W) tensor scaled to [0,1].
pub fn read_image(path: &Path) -> Result<Tensor> {
    let mut toks = PnmTokens {
        reader: BufReader::new(File::open(path)?),
    };
    let magic = toks.token()?;
    if magic != "P6" {
        return Err(Error::Format(format!("expected P6 magic, got {magic:?}")));
    }
    let w = toks.usize_token("width")?;
    let h = toks.usize_token("height")?;
    let maxval = toks.usize_token("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "only 8-bit pixmaps supported, maxval {maxval}"
        )));
    }
    let mut raw = vec![0u8; 3 * w * h];
    toks.reader
        .read_exact(&mut raw)
        .map_err(|_| Error::Format("truncated pixmap payload".into()))?;
    let plane = w * h;
    let mut data = vec![0.0f64; 3 * plane];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Map file flavor, picked from the path extension: `.pfm` stores exact
/// 32-bit floats, anything else is written as an 8-bit P5 graymap.
fn is_float_map(path: &Path) -> bool {
    path.extension()
        .map_or(false, |e| e.eq_ignore_ascii_case("pfm"))
}

pub fn write_map(path: &Path, map: &SaliencyMap) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let (w, h) = (map.width(), map.height());
    if is_float_map(path) {
        // Negative scale marks little-endian; rows run bottom to top.
        write!(out, "Pf\n{w} {h}\n-1.0\n")?;
        for y in (0..h).rev() {
            for x in 0..w {
                out.write_all(&(map.at(x, y) as f32).to_le_bytes())?;
            }
        }
    } else {
        write!(out, "P5\n{w} {h}\n255\n")?;
        for y in 0..h {
            for x in 0..w {
                out.write_all(&[(map.at(x, y) * 255.0).round().clamp(0.0, 255.0) as u8])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<SaliencyMap> {
    let mut toks = PnmTokens {
        reader: BufReader::new(File::open(path)?),
    };
    let magic = toks.token()?;
    match magic.as_str() {
        "Pf" => {
            let w = toks.usize_token("width")?;
            let h = toks.usize_token("height")?;
            let scale: f64 = toks
                .token()?
                .parse()
                .map_err(|_| Error::Format("bad scale in float map header".into()))?;
            let little_endian = scale < 0.0;
            let mut raw = vec![0u8; 4 * w * h];
            toks.reader
                .read_exact(&mut raw)
                .map_err(|_| Error::Format("truncated float map payload".into()))?;
            let mut values = vec![0.0f64; w * h];
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
                let v = if little_endian {
                    f32::from_le_bytes(bytes)
                } else {
                    f32::from_be_bytes(bytes)
                };
                if v.is_nan() {
                    return Err(Error::Format("float map contains NaN".into()));
                }
                let (x, row) = (i % w, i / w);
                values[(h - 1 - row) * w + x] = v as f64;
            }
            SaliencyMap::new(w, h, values)
        }
        "P5" => {
            let w = toks.usize_token("width")?;
            let h = toks.usize_token("height")?;
            let maxval = toks.usize_token("maxval")?;
            if maxval != 255 {
                return Err(Error::Format(format!(
                    "only 8-bit graymaps supported, maxval {maxval}"
                )));
            }
            let mut raw = vec![0u8; w * h];
            toks.reader
                .read_exact(&mut raw)
                .map_err(|_| Error::Format("truncated graymap payload".into()))?;
            SaliencyMap::new(w, h, raw.iter().map(|&b| b as f64 / 255.0).collect())
        }
        other => Err(Error::Format(format!(
            "expected P5 or Pf magic, got {other:?}"
        ))),
    }
}

/// Writes fixations as one `x y` pair per line.
pub fn write_fixations(path: &Path, fix: &FixationSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &(x, y) in &fix.points {
        writeln!(out, "{x} {y}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `x y` integer pairs, one per line; `#` starts a comment and blank
/// lines are ignored. Order is preserved.
pub fn read_fixations(path: &Path) -> Result<FixationSet> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut it = content.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.ok_or_else(|| {
                Error::Format(format!("fixation line {}: expected `x y`", lineno + 1))
            })?;
            tok.parse().map_err(|_| {
                Error::Format(format!(
                    "fixation line {}: non-integer token {tok:?}",
                    lineno + 1
                ))
            })
        };
        let x = parse(it.next())?;
        let y = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::Format(format!(
                "fixation line {}: trailing tokens",
                lineno + 1
            )));
        }
        points.push((x, y));
    }
    Ok(FixationSet::new(points))
}

// ---------------------------------------------------------------------------
// Dataset loading and batching
// ---------------------------------------------------------------------------

/// A fully loaded dataset sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub gt_map: SaliencyMap,
    pub fixations: FixationSet,
    pub split: Split,
}

/// All samples of a manifest held in memory, with equal image dimensions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub width: usize,
    pub height: usize,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::load(manifest_path)?;
        if manifest.entries.is_empty() {
            return Err(Error::InvalidArgument("dataset manifest is empty".into()));
        }
        let dir = manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .to_path_buf();
        let mut samples = Vec::with_capacity(manifest.entries.len());
        let mut dims: Option<(usize, usize)> = None;
        for entry in &manifest.entries {
            let image = read_image(&dir.join(&entry.image))?;
            let gt_map = read_map(&dir.join(&entry.map))?;
            let fixations = read_fixations(&dir.join(&entry.fix))?;
            let (h, w) = (image.shape()[1], image.shape()[2]);
            if gt_map.width() != w || gt_map.height() != h {
                return Err(Error::ShapeMismatch(format!(
                    "{}: image is {w}x{h} but map is {}x{}",
                    entry.id,
                    gt_map.width(),
                    gt_map.height()
                )));
            }
            for &(x, y) in &fixations.points {
                if x >= w || y >= h {
                    return Err(Error::InvalidArgument(format!(
                        "{}: fixation ({x}, {y}) outside {w}x{h}",
                        entry.id
                    )));
                }
            }
            match dims {
                None => dims = Some((w, h)),
                Some(d) if d != (w, h) => {
                    return Err(Error::ShapeMismatch(format!(
                        "{}: image dims {w}x{h} differ from dataset dims {}x{}",
                        entry.id, d.0, d.1
                    )))
                }
                _ => {}
            }
            samples.push(Sample {
                id: entry.id.clone(),
                image,
                gt_map,
                fixations,
                split: entry.split,
            });
        }
        let (width, height) = dims.unwrap();
        Ok(Dataset {
            samples,
            width,
            height,
        })
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| (s.split == split).then_some(i))
            .collect()
    }

    /// Splits `indices` into ceil(n / batch_size) consecutive batches, each
    /// sample appearing exactly once.
    pub fn batches(indices: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
        indices
            .chunks(batch_size.max(1))
            .map(|c| c.to_vec())
            .collect()
    }

    /// Stacks the selected images into a (B, 3, H, W) tensor.
    pub fn image_batch(&self, indices: &[usize]) -> Tensor {
        let (h, w) = (self.height, self.width);
        let mut data = Vec::with_capacity(indices.len() * 3 * h * w);
        for &i in indices {
            data.extend_from_slice(self.samples[i].image.data());
        }
        Tensor::from_vec(&[indices.len(), 3, h, w], data).expect("consistent dataset dims")
    }

    /// Stacks the selected ground-truth maps into a (B, 1, H, W) tensor.
    pub fn map_batch(&self, indices: &[usize]) -> Tensor {
        let (h, w) = (self.height, self.width);
        let mut data = Vec::with_capacity(indices.len() * h * w);
        for &i in indices {
            data.extend_from_slice(self.samples[i].gt_map.values());
        }
        Tensor::from_vec(&[indices.len(), 1, h, w], data).expect("consistent dataset dims")
    }
}

// ---------------------------------------------------------------------------
// Synthetic data generation
// ---------------------------------------------------------------------------

/// Knobs for the synthetic scene generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Ground-truth blur; the desk default is width / 16.
    pub blur_sigma: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(count: usize, width: usize, height: usize, seed: u64) -> Self {
        SynthConfig {
            count,
            width,
            height,
            blur_sigma: width as f64 / 16.0,
            min_objects: 1,
            max_objects: 3,
            seed,
        }
    }
}

/// Generates `count` image / map / fixation triples plus a manifest under
/// `out_dir`. The last tenth of the entries is tagged as the validation
/// split. Byte-identical for a fixed config.
pub fn gen_synthetic(out_dir: &Path, cfg: &SynthConfig) -> Result<Manifest> {
    if cfg.count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    if cfg.width % 16 != 0 || cfg.height % 16 != 0 {
        return Err(Error::InvalidArgument(format!(
            "image dims must be divisible by 16, got {}x{}",
            cfg.width, cfg.height
        )));
    }
    if cfg.min_objects == 0 || cfg.min_objects > cfg.max_objects {
        return Err(Error::InvalidArgument(format!(
            "bad object range {}..={}",
            cfg.min_objects, cfg.max_objects
        )));
    }
    if cfg.blur_sigma <= 0.0 {
        return Err(Error::InvalidArgument("blur sigma must be > 0".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::with_capacity(cfg.count);
    let val_from = cfg.count - cfg.count / 10;
    for index in 0..cfg.count {
        let id = format!("img_{index:04}");
        let sample = synth_sample(&mut rng, cfg);
        let image_name = format!("{id}.ppm");
        let map_name = format!("{id}.pfm");
        let fix_name = format!("{id}.txt");
        write_image(&out_dir.join(&image_name), &sample.0)?;
        write_map(&out_dir.join(&map_name), &sample.1)?;
        write_fixations(&out_dir.join(&fix_name), &sample.2)?;
        entries.push(ManifestEntry {
            id,
            image: image_name,
            map: map_name,
            fix: fix_name,
            split: if index >= val_from {
                Split::Val
            } else {
                Split::Train
            },
        });
    }
    let manifest = Manifest { entries };
    manifest.save(&out_dir.join(Manifest::FILENAME))?;
    Ok(manifest)
}

fn synth_sample(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> (Tensor, SaliencyMap, FixationSet) {
    let (w, h) = (cfg.width, cfg.height);
    let plane = w * h;

    // Textured background: a base color plus box-smoothed value noise.
    let mut noise = vec![0.0f64; plane];
    for v in noise.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let smooth = |src: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0f64; plane];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                        if sx >= 0 && sx < w as i64 && sy >= 0 && sy < h as i64 {
                            acc += src[sy as usize * w + sx as usize];
                            n += 1.0;
                        }
                    }
                }
                out[y * w + x] = acc / n;
            }
        }
        out
    };
    let noise = smooth(&noise);
    let base: [f64; 3] = [
        rng.gen_range(0.2..0.6),
        rng.gen_range(0.2..0.6),
        rng.gen_range(0.2..0.6),
    ];
    let mut image = vec![0.0f64; 3 * plane];
    for c in 0..3 {
        for i in 0..plane {
            image[c * plane + i] = (base[c] + 0.08 * noise[i]).clamp(0.0, 1.0);
        }
    }

    // High-contrast shapes with fixations jittered around their centers.
    let n_shapes = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let min_dim = w.min(h) as f64;
    let mut points: Vec<(usize, usize)> = Vec::new();
    for _ in 0..n_shapes {
        let size = rng.gen_range(min_dim / 12.0..min_dim / 5.0);
        let cx = rng.gen_range(size..w as f64 - size);
        let cy = rng.gen_range(size..h as f64 - size);
        let is_disk = rng.gen_bool(0.5);
        let bright = rng.gen_bool(0.5);
        let color: [f64; 3] = std::array::from_fn(|c| {
            let contrast = rng.gen_range(0.3..0.45);
            if bright {
                (base[c] + contrast).clamp(0.0, 1.0)
            } else {
                (base[c] - contrast).clamp(0.0, 1.0)
            }
        });
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if is_disk {
                    dx * dx + dy * dy <= size * size
                } else {
                    dx.abs() <= size && dy.abs() <= size * 0.7
                };
                if inside {
                    for c in 0..3 {
                        image[c * plane + y * w + x] = color[c];
                    }
                }
            }
        }
        let n_fix = rng.gen_range(3..=8);
        for _ in 0..n_fix {
            // Box-Muller jitter around the shape center.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt() * (size / 2.0);
            let angle = 2.0 * std::f64::consts::PI * u2;
            let fx = (cx + r * angle.cos()).round().clamp(0.0, (w - 1) as f64) as usize;
            let fy = (cy + r * angle.sin()).round().clamp(0.0, (h - 1) as f64) as usize;
            points.push((fx, fy));
        }
    }
    let n_outliers = (points.len() / 9).max(1);
    for _ in 0..n_outliers {
        points.push((rng.gen_range(0..w), rng.gen_range(0..h)));
    }
    let fixations = FixationSet::new(points);

    // Ground truth: blurred fixation indicator, normalized to peak 1.
    let mut indicator = vec![0.0f64; plane];
    for &(x, y) in &fixations.points {
        indicator[y * w + x] = 1.0;
    }
    let indicator = SaliencyMap::new(w, h, indicator).expect("indicator dims");
    let blurred = gaussian_blur(&indicator, cfg.blur_sigma).expect("sigma validated");
    let peak = blurred.values().iter().cloned().fold(0.0, f64::max);
    let gt = blurred.map(|v| v / peak).expect("peak > 0");

    let image = Tensor::from_vec(&[3, h, w], image).expect("image dims");
    (image, gt, fixations)
}
