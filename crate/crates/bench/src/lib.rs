//! Forward-pass accounting and wall-clock timing for saliency methods.
//!
//! Timing is single-threaded and sequential. Every timed invocation's map is
//! compared with one computed before timing started, so a profile is only
//! produced if timing left the outputs untouched.

use std::fmt::Write as _;
use std::time::Instant;

use rxai_core::{
    generate, CostTally, Error, MaskKernel, Method, Model, Result, SaliencyMap, SplitModel, Tensor,
};

/// Default number of untimed warmup invocations.
pub const DEFAULT_WARMUP: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CostProfile {
    pub method: Method,
    pub full_forwards: usize,
    pub head_forwards: usize,
    pub backward_passes: usize,
    pub wall_ms_mean: f64,
    pub wall_ms_p50: f64,
    pub wall_ms_p95: f64,
    /// Timed invocations; zero for count-only profiles.
    pub images: usize,
}

impl CostProfile {
    fn counts(method: Method, tally: CostTally) -> Self {
        CostProfile {
            method,
            full_forwards: tally.full_forwards,
            head_forwards: tally.head_forwards,
            backward_passes: tally.backward_passes,
            wall_ms_mean: 0.0,
            wall_ms_p50: 0.0,
            wall_ms_p95: 0.0,
            images: 0,
        }
    }

    pub fn tally(&self) -> CostTally {
        CostTally {
            full_forwards: self.full_forwards,
            head_forwards: self.head_forwards,
            backward_passes: self.backward_passes,
        }
    }

    pub fn fps(&self) -> f64 {
        1000.0 / self.wall_ms_mean
    }
}

/// Counts forward and backward passes of one invocation.
pub fn count_cost(
    method: Method,
    kernel: MaskKernel,
    model: &Model,
    split: &SplitModel,
    input: &Tensor,
) -> Result<CostProfile> {
    let mut tally = CostTally::default();
    generate(method, kernel, model, split, input, 0, &mut tally)?;
    Ok(CostProfile::counts(method, tally))
}

/// Analytic pass counts for a split with a `K x H x W` feature map.
pub fn expected_cost(method: Method, split: &SplitModel) -> CostTally {
    let (k, h, w) = split.feature_dims();
    let (full_forwards, head_forwards, backward_passes) = match method {
        Method::Recipro => (1, h * w, 0),
        Method::Cam => (1, 0, 0),
        Method::GradCam => (1, 0, 1),
        Method::ScoreCam => (k + 1, 0, 0),
        Method::AblationCam => (1, k + 1, 0),
        Method::FakeCam => (0, 0, 0),
    };
    CostTally {
        full_forwards,
        head_forwards,
        backward_passes,
    }
}

/// Times one single-image invocation per input after `warmup` untimed ones.
/// Class 0 is explained throughout.
///
/// Warmup cycles through the inputs; its maps are the reference that timed
/// maps of the same inputs must reproduce exactly.
pub fn time_method(
    method: Method,
    kernel: MaskKernel,
    model: &Model,
    split: &SplitModel,
    inputs: &[Tensor],
    warmup: usize,
) -> Result<CostProfile> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "timing needs at least one input".into(),
        ));
    }
    let run = |x: &Tensor, tally: &mut CostTally| -> Result<SaliencyMap> {
        generate(method, kernel, model, split, x, 0, tally)
    };

    let mut reference: Vec<Option<SaliencyMap>> = vec![None; inputs.len()];
    for i in (0..inputs.len()).cycle().take(warmup) {
        reference[i] = Some(run(&inputs[i], &mut CostTally::default())?);
    }

    let mut tally = CostTally::default();
    let mut samples = Vec::with_capacity(inputs.len());
    for (x, want) in inputs.iter().zip(&reference) {
        let start = Instant::now();
        let map = run(x, &mut tally)?;
        samples.push(start.elapsed().as_secs_f64() * 1000.0);
        if want.as_ref().is_some_and(|w| w != &map) {
            return Err(Error::InvalidArgument(format!(
                "{method} output changed while timing"
            )));
        }
    }

    let per_image = CostTally {
        full_forwards: tally.full_forwards / inputs.len(),
        head_forwards: tally.head_forwards / inputs.len(),
        backward_passes: tally.backward_passes / inputs.len(),
    };
    let mut profile = CostProfile::counts(method, per_image);
    profile.wall_ms_mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    profile.wall_ms_p50 = percentile(&samples, 50.0);
    profile.wall_ms_p95 = percentile(&samples, 95.0);
    profile.images = samples.len();
    Ok(profile)
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// `ms / fastest` for every profile; the fastest row is `None`.
pub fn ratios(profiles: &[CostProfile]) -> Vec<Option<f64>> {
    let fastest = profiles
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.wall_ms_mean.total_cmp(&b.1.wall_ms_mean))
        .map(|(i, _)| i);
    let best = fastest.map_or(f64::NAN, |i| profiles[i].wall_ms_mean);
    profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (Some(i) != fastest).then(|| p.wall_ms_mean / best))
        .collect()
}

fn ratio_cell(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |r| format!("{r:.2}×"))
}

/// Aligned text table: execution time, FPS and ratio to the fastest method.
pub fn render_table(profiles: &[CostProfile]) -> Result<String> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("no profiles to report".into()));
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>10} {:>10} {:>10} {:>10} {:>9} {:>6} {:>6} {:>5}",
        "Method", "Time (ms)", "p50 (ms)", "p95 (ms)", "FPS", "Ratio", "Full", "Head", "Bwd"
    );
    for (p, r) in profiles.iter().zip(ratios(profiles)) {
        let _ = writeln!(
            s,
            "{:<14} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>9} {:>6} {:>6} {:>5}",
            p.method.label(),
            p.wall_ms_mean,
            p.wall_ms_p50,
            p.wall_ms_p95,
            p.fps(),
            ratio_cell(r),
            p.full_forwards,
            p.head_forwards,
            p.backward_passes
        );
    }
    Ok(s)
}

pub fn render_csv(profiles: &[CostProfile]) -> Result<String> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("no profiles to report".into()));
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    wtr.write_record([
        "method",
        "wall_ms_mean",
        "wall_ms_p50",
        "wall_ms_p95",
        "fps",
        "ratio",
        "full_forwards",
        "head_forwards",
        "backward_passes",
        "images",
    ])
    .map_err(io)?;
    for (p, r) in profiles.iter().zip(ratios(profiles)) {
        wtr.write_record([
            p.method.name().to_string(),
            format!("{:.4}", p.wall_ms_mean),
            format!("{:.4}", p.wall_ms_p50),
            format!("{:.4}", p.wall_ms_p95),
            format!("{:.2}", p.fps()),
            r.map_or_else(|| "-".to_string(), |r| format!("{r:.2}")),
            p.full_forwards.to_string(),
            p.head_forwards.to_string(),
            p.backward_passes.to_string(),
            p.images.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii fields"))
}

/// Least-squares fit `y = a + b x`, returning `(a, b, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (my - b * mx, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rxai_core::{make_reference_model, seeded_input, split_model};

    fn profile(method: Method, ms: f64) -> CostProfile {
        CostProfile {
            wall_ms_mean: ms,
            wall_ms_p50: ms,
            wall_ms_p95: ms,
            images: 1,
            ..CostProfile::counts(method, CostTally::default())
        }
    }

    #[test]
    fn tiny8_counts() {
        let model = make_reference_model(42, "tiny8").unwrap();
        let split = split_model(&model, 6).unwrap();
        let x = seeded_input(1, &model.input_shape);
        let recipro = count_cost(Method::Recipro, MaskKernel::Dirac, &model, &split, &x).unwrap();
        assert_eq!((recipro.full_forwards, recipro.head_forwards), (1, 16));
        let score = count_cost(Method::ScoreCam, MaskKernel::Dirac, &model, &split, &x).unwrap();
        assert_eq!(score.full_forwards, 17);
        let fake = count_cost(Method::FakeCam, MaskKernel::Dirac, &model, &split, &x).unwrap();
        assert_eq!(fake.tally(), CostTally::default());
        for m in Method::ALL {
            let got = count_cost(m, MaskKernel::Dirac, &model, &split, &x)
                .unwrap()
                .tally();
            assert_eq!(got, expected_cost(m, &split), "{m}");
        }
    }

    #[test]
    fn single_image_timing() {
        let model = make_reference_model(42, "tiny8").unwrap();
        let split = split_model(&model, 6).unwrap();
        let x = seeded_input(1, &model.input_shape);
        let p = time_method(Method::Recipro, MaskKernel::Dirac, &model, &split, &[x], 0).unwrap();
        assert_eq!(p.images, 1);
        assert!(p.wall_ms_mean.is_finite() && p.wall_ms_mean >= 0.0);
        assert_eq!(p.tally(), expected_cost(Method::Recipro, &split));
        assert!(time_method(Method::Recipro, MaskKernel::Dirac, &model, &split, &[], 0).is_err());
    }

    #[test]
    fn report_ratios_and_fps() {
        let table = render_table(&[profile(Method::Recipro, 13.8)]).unwrap();
        let row = table.lines().nth(1).unwrap();
        assert!(row.contains("72.46"), "{row}");
        assert!(row.split_whitespace().any(|c| c == "-"), "{row}");

        let two = [
            profile(Method::Recipro, 10.0),
            profile(Method::ScoreCam, 20.0),
        ];
        assert_eq!(ratios(&two), vec![None, Some(2.0)]);
        let table = render_table(&two).unwrap();
        assert!(table.lines().nth(2).unwrap().contains("2.00×"));
        let csv = render_csv(&two).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",-,"));
        assert!(csv.lines().nth(2).unwrap().contains(",2.00,"));
        assert!(render_table(&[]).is_err());
    }

    #[test]
    fn percentiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&s, 50.0), 5.0);
        assert_eq!(percentile(&s, 95.0), 10.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
    }

    #[test]
    fn fit_recovers_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
