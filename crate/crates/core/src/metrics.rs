//! Saliency evaluation: Average Drop and Increase, Coherency, Complexity,
//! ADCC, Deletion and Insertion AUC, and the per-dataset evaluation loop.
//!
//! Class scores are softmax probabilities throughout. Drop and Increase are
//! measured on `x * S`, the input multiplied channel-wise by the saliency
//! map upsampled to input resolution.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::cam::{generate, upsample_map, MaskKernel, Method};
use crate::cost::CostTally;
use crate::error::{Error, Result};
use crate::layers::{forward_chain_batch, logit_layers, softmax};
use crate::model::{Model, SplitModel};
use crate::tensor::Tensor;

/// `100 * mean(max(0, y - o) / y)`.
pub fn average_drop(orig: &[f32], masked: &[f32]) -> Result<f64> {
    check_lengths(orig, masked)?;
    let mut total = 0.0;
    for (&y, &o) in orig.iter().zip(masked) {
        if y.is_nan() || y <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "original score must be positive, got {y}"
            )));
        }
        total += (y as f64 - o as f64).max(0.0) / y as f64;
    }
    Ok(100.0 * total / orig.len() as f64)
}

/// Percentage of samples whose masked score exceeds the original.
pub fn average_increase(orig: &[f32], masked: &[f32]) -> Result<f64> {
    check_lengths(orig, masked)?;
    let hits = orig.iter().zip(masked).filter(|(y, o)| o > y).count();
    Ok(100.0 * hits as f64 / orig.len() as f64)
}

fn check_lengths(orig: &[f32], masked: &[f32]) -> Result<()> {
    if orig.len() != masked.len() || orig.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "score vectors must be non-empty and equal length, got {} and {}",
            orig.len(),
            masked.len()
        )));
    }
    Ok(())
}

/// Mean map value, i.e. L1 mass over the number of positions.
pub fn complexity(map: &Tensor) -> f64 {
    if map.is_empty() {
        return 0.0;
    }
    map.data().iter().map(|&v| v as f64).sum::<f64>() / map.len() as f64
}

/// Absolute Pearson correlation; 0 when either map is constant.
pub fn coherency(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "coherency needs equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.len() as f64;
    let mean = |t: &Tensor| t.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 || !(va * vb).is_finite() {
        return Ok(0.0);
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).abs().min(1.0))
}

/// Harmonic mean of `coherency`, `1 - complexity` and `1 - avg_drop`, with
/// `avg_drop` as a fraction. Zero whenever a term is not positive.
pub fn adcc(avg_drop: f64, coherency: f64, complexity: f64) -> f64 {
    let terms = [coherency, 1.0 - complexity, 1.0 - avg_drop];
    if terms.iter().any(|&t| t.is_nan() || t <= 0.0) {
        return 0.0;
    }
    3.0 / terms.iter().map(|t| 1.0 / t).sum::<f64>()
}

/// Number of pixels changed per curve step: 1% of the image, rounded up.
pub fn curve_step(pixels: usize) -> usize {
    pixels.div_ceil(100).max(1)
}

/// Class-score curve over the fraction of pixels changed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub fractions: Vec<f64>,
    pub scores: Vec<f32>,
}

impl Curve {
    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.fractions
            .windows(2)
            .zip(self.scores.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] as f64 + y[1] as f64) / 2.0)
            .sum()
    }
}

/// Pixel indices by descending saliency, ties broken by position.
fn pixel_order(map: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..map.len()).collect();
    let v = map.data();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order
}

fn input_resolution_map(input: &Tensor, map: &Tensor) -> Result<Tensor> {
    let (_, h, w) = input.chw()?;
    upsample_map(map, (h, w))
}

/// Runs `start`, then successively copies `source` pixels (all channels) into
/// it in saliency order, one step at a time, scoring every stage.
fn pixel_curve(
    model: &Model,
    start: &Tensor,
    source: &Tensor,
    map: &Tensor,
    class_index: usize,
) -> Result<Curve> {
    model.check_class(class_index)?;
    let (c, h, w) = start.chw()?;
    let map = input_resolution_map(start, map)?;
    let pixels = h * w;
    let step = curve_step(pixels);
    let order = pixel_order(&map);

    let mut stages = vec![start.clone()];
    let mut fractions = vec![0.0];
    let mut current = start.clone();
    for (k, chunk) in order.chunks(step).enumerate() {
        for &p in chunk {
            for ch in 0..c {
                current.data_mut()[ch * pixels + p] = source.data()[ch * pixels + p];
            }
        }
        stages.push(current.clone());
        fractions.push(((k * step + chunk.len()) as f64 / pixels as f64).min(1.0));
    }
    let logits = forward_chain_batch(logit_layers(&model.layers), 0, &Tensor::stack(&stages)?)?;
    let classes = logits.shape()[1];
    let scores = logits
        .data()
        .chunks_exact(classes)
        .map(|row| softmax(row)[class_index])
        .collect();
    Ok(Curve { fractions, scores })
}

/// Zeroes pixels in descending saliency order.
pub fn deletion_curve(
    model: &Model,
    input: &Tensor,
    map: &Tensor,
    class_index: usize,
) -> Result<Curve> {
    pixel_curve(
        model,
        input,
        &Tensor::zeros(input.shape()),
        map,
        class_index,
    )
}

/// Reveals original pixels on a blurred copy in descending saliency order.
pub fn insertion_curve(
    model: &Model,
    input: &Tensor,
    map: &Tensor,
    class_index: usize,
) -> Result<Curve> {
    pixel_curve(model, &insertion_baseline(input)?, input, map, class_index)
}

pub fn deletion_auc(
    model: &Model,
    input: &Tensor,
    map: &Tensor,
    class_index: usize,
) -> Result<f64> {
    Ok(deletion_curve(model, input, map, class_index)?.auc())
}

pub fn insertion_auc(
    model: &Model,
    input: &Tensor,
    map: &Tensor,
    class_index: usize,
) -> Result<f64> {
    Ok(insertion_curve(model, input, map, class_index)?.auc())
}

pub const BLUR_KERNEL: usize = 11;
pub const BLUR_PASSES: usize = 3;

/// Three passes of an 11-wide box blur per channel.
pub fn insertion_baseline(input: &Tensor) -> Result<Tensor> {
    let (_, h, w) = input.chw()?;
    let mut out = input.clone();
    for plane in out.data_mut().chunks_exact_mut(h * w) {
        for _ in 0..BLUR_PASSES {
            box_blur(plane, h, w, BLUR_KERNEL);
        }
    }
    Ok(out)
}

/// Separable box blur averaging only the in-bounds taps.
pub fn box_blur(plane: &mut [f32], h: usize, w: usize, kernel: usize) {
    let r = kernel / 2;
    let blur_line = |line: &[f32]| -> Vec<f32> {
        let n = line.len();
        (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(r), (i + r).min(n - 1));
                let sum: f64 = line[lo..=hi].iter().map(|&v| v as f64).sum();
                (sum / (hi - lo + 1) as f64) as f32
            })
            .collect()
    };
    for row in plane.chunks_exact_mut(w) {
        let blurred = blur_line(row);
        row.copy_from_slice(&blurred);
    }
    let mut column = vec![0f32; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = plane[y * w + x];
        }
        for (y, v) in blur_line(&column).into_iter().enumerate() {
            plane[y * w + x] = v;
        }
    }
}

/// `x * S` with the map upsampled to input resolution and broadcast over
/// channels.
pub fn mask_input(input: &Tensor, map: &Tensor) -> Result<Tensor> {
    let (_, h, w) = input.chw()?;
    let up = input_resolution_map(input, map)?;
    let mut out = input.clone();
    for plane in out.data_mut().chunks_exact_mut(h * w) {
        for (x, &m) in plane.iter_mut().zip(up.data()) {
            *x *= m;
        }
    }
    Ok(out)
}

/// One image to evaluate.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub id: String,
    pub input: Tensor,
    pub class_index: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub kernel: MaskKernel,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

/// Metrics for one image. `avg_drop` is a percentage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageRecord {
    pub image: String,
    pub class_index: usize,
    pub orig_score: f32,
    pub masked_score: f32,
    pub avg_drop: f64,
    pub avg_inc: bool,
    pub coherency: f64,
    pub complexity: f64,
    pub adcc: f64,
    pub deletion_auc: f64,
    pub insertion_auc: f64,
}

/// Mean of every per-image column. `avg_drop` and `avg_inc` are
/// percentages; `adcc` is recomputed from the mean components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub avg_drop: f64,
    pub avg_inc: f64,
    pub coherency: f64,
    pub complexity: f64,
    pub adcc: f64,
    pub deletion_auc: f64,
    pub insertion_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalFailure {
    pub image: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub method: String,
    pub records: Vec<ImageRecord>,
    pub aggregate: Option<Aggregate>,
    pub failures: Vec<EvalFailure>,
    /// Inputs dropped before evaluation, e.g. images without a label.
    pub skipped: usize,
}

pub const REPORT_SCHEMA: &str = "rxai-metrics/1";

/// Evaluates one method over a dataset. Images are processed in parallel;
/// records keep dataset order. Per-image errors are collected as failures.
pub fn evaluate_method(
    model: &Model,
    split: &SplitModel,
    dataset: &[EvalSample],
    method: Method,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let run = || -> Vec<Result<ImageRecord>> {
        dataset
            .par_iter()
            .map(|s| evaluate_image(model, split, s, method, opts.kernel))
            .collect()
    };
    let results = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (sample, result) in dataset.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(e) => failures.push(EvalFailure {
                image: sample.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    Ok(MetricReport {
        method: method.name().to_string(),
        aggregate: aggregate(&records),
        records,
        failures,
        skipped: 0,
    })
}

pub fn evaluate_image(
    model: &Model,
    split: &SplitModel,
    sample: &EvalSample,
    method: Method,
    kernel: MaskKernel,
) -> Result<ImageRecord> {
    let x = &sample.input;
    let class = sample.class_index;
    let mut tally = CostTally::default();
    let map = generate(method, kernel, model, split, x, class, &mut tally)?;
    let map_up = input_resolution_map(x, &map.values)?;
    let masked = mask_input(x, &map_up)?;

    let orig_score = model.probabilities(x)?[class];
    let masked_score = model.probabilities(&masked)?[class];
    let avg_drop = average_drop(&[orig_score], &[masked_score])?;

    let remap = generate(method, kernel, model, split, &masked, class, &mut tally)?;
    let coherency = coherency(&map_up, &input_resolution_map(x, &remap.values)?)?;
    let complexity = complexity(&map_up);
    Ok(ImageRecord {
        image: sample.id.clone(),
        class_index: class,
        orig_score,
        masked_score,
        avg_drop,
        avg_inc: masked_score > orig_score,
        coherency,
        complexity,
        adcc: adcc(avg_drop / 100.0, coherency, complexity),
        deletion_auc: deletion_auc(model, x, &map_up, class)?,
        insertion_auc: insertion_auc(model, x, &map_up, class)?,
    })
}

pub fn aggregate(records: &[ImageRecord]) -> Option<Aggregate> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let mean = |f: fn(&ImageRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let avg_drop = mean(|r| r.avg_drop);
    let coherency = mean(|r| r.coherency);
    let complexity = mean(|r| r.complexity);
    Some(Aggregate {
        avg_drop,
        avg_inc: mean(|r| if r.avg_inc { 100.0 } else { 0.0 }),
        coherency,
        complexity,
        adcc: adcc(avg_drop / 100.0, coherency, complexity),
        deletion_auc: mean(|r| r.deletion_auc),
        insertion_auc: mean(|r| r.insertion_auc),
    })
}

pub const CSV_HEADER: [&str; 10] = [
    "image",
    "class",
    "avg_drop",
    "avg_inc",
    "coherency",
    "complexity",
    "adcc",
    "deletion_auc",
    "insertion_auc",
    "status",
];

impl MetricReport {
    /// CSV with a schema comment line, one row per image (failures included
    /// with empty metric cells) and a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.records {
            wtr.write_record([
                r.image.clone(),
                r.class_index.to_string(),
                r.avg_drop.to_string(),
                u8::from(r.avg_inc).to_string(),
                r.coherency.to_string(),
                r.complexity.to_string(),
                r.adcc.to_string(),
                r.deletion_auc.to_string(),
                r.insertion_auc.to_string(),
                "ok".to_string(),
            ])
            .expect("in-memory write");
        }
        for f in &self.failures {
            let mut row = vec![f.image.clone()];
            row.extend(std::iter::repeat_n(String::new(), 8));
            row.push(format!("error: {}", f.message));
            wtr.write_record(&row).expect("in-memory write");
        }
        if let Some(a) = &self.aggregate {
            wtr.write_record([
                "mean".to_string(),
                String::new(),
                a.avg_drop.to_string(),
                a.avg_inc.to_string(),
                a.coherency.to_string(),
                a.complexity.to_string(),
                a.adcc.to_string(),
                a.deletion_auc.to_string(),
                a.insertion_auc.to_string(),
                "aggregate".to_string(),
            ])
            .expect("in-memory write");
        }
        let body =
            String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        format!("# schema: {REPORT_SCHEMA}; method: {}\n{body}", self.method)
    }

    /// Plain-text summary. Columns are percentages except the AUCs.
    pub fn to_summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method: {}", self.method);
        let _ = writeln!(
            s,
            "images: {}  failures: {}  skipped: {}",
            self.records.len(),
            self.failures.len(),
            self.skipped
        );
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "Drop", "Inc", "Del", "Ins", "Coher", "Compl", "ADCC"
        );
        match &self.aggregate {
            Some(a) => {
                let _ = writeln!(
                    s,
                    "{:>8.2} {:>8.2} {:>8.4} {:>8.4} {:>8.2} {:>8.2} {:>8.2}",
                    a.avg_drop,
                    a.avg_inc,
                    a.deletion_auc,
                    a.insertion_auc,
                    a.coherency * 100.0,
                    a.complexity * 100.0,
                    a.adcc * 100.0
                );
            }
            None => s.push_str("no successful images\n"),
        }
        for f in &self.failures {
            let _ = writeln!(s, "failed {}: {}", f.image, f.message);
        }
        s
    }
}
