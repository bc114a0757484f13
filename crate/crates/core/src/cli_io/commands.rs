//! Command bodies behind the `tiara` binary. Each `cmd_*` function reads its
//! inputs, runs the computation and writes outputs atomically; the pure
//! parts are exposed separately for testing and embedding.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2, Array3, Array4, ArrayD, ArrayView4, Axis, Ix4};
use rayon::prelude::*;

use crate::attention::{
    padded_len, row_power_spectrum, softmax_rows, tiara, AttentionLogits, MotionProfile,
    VideoLatentSlice,
};
use crate::cli_io::config::Config;
use crate::cli_io::tensor_file::{write_atomic, TensorFile};
use crate::cli_io::text::{parse_prompts, parse_spans, parse_token_table};
use crate::error::{Error, Result};
use crate::promptblend::{
    align_with, conditioning, BlendSchedule, EmbeddingTable, EmptySegment, TokenId,
};
use crate::spectral::Signal;
use crate::verifier::{
    gen_homogeneous_attention, gen_inconsistent_values_at, is_non_increasing,
    is_non_increasing_within, verify_theorem, TheoremInstance, TheoremReport,
};

fn load_rank4(path: &Path, what: &str) -> Result<Array4<f64>> {
    let file = TensorFile::load(path)?;
    if file.rank() != 4 {
        return Err(Error::domain(format!(
            "{what} must have rank 4, got dims {:?}",
            file.dims()
        )));
    }
    Ok(file
        .into_array()
        .into_dimensionality::<Ix4>()
        .expect("rank checked"))
}

fn square_field(logits: &ArrayView4<f64>) -> Result<(usize, usize, usize)> {
    let (h, w, n, m) = logits.dim();
    if n != m || n == 0 {
        return Err(Error::domain(format!(
            "logits field must be (H, W, N, N) with N >= 1, got {:?}",
            logits.shape()
        )));
    }
    Ok((h, w, n))
}

fn slices(logits: &ArrayView4<f64>) -> Result<Vec<AttentionLogits>> {
    let (h, w, _) = square_field(logits)?;
    (0..h * w)
        .map(|idx| AttentionLogits::new(logits.slice(s![idx / w, idx % w, .., ..]).to_owned()))
        .collect()
}

/// Motion intensity of every row of every location: `(H, W, N)`.
pub fn motion_field(logits: &ArrayView4<f64>, config: &Config) -> Result<Array3<f64>> {
    let (h, w, n) = square_field(logits)?;
    let window = config.window()?;
    let band = config.band(padded_len(n, &window))?;
    let profiles = slices(logits)?
        .par_iter()
        .map(|l| MotionProfile::compute(&softmax_rows(l), &window, band))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array3::zeros((h, w, n));
    for (idx, p) in profiles.iter().enumerate() {
        out.slice_mut(s![idx / w, idx % w, ..])
            .assign(&ndarray::ArrayView1::from(p.rho()));
    }
    Ok(out)
}

/// CSV of `|DSTFT|` of every padded attention row at its own frame, over the
/// one-sided spectrum.
pub fn spectrogram_csv(logits: &ArrayView4<f64>, config: &Config) -> Result<String> {
    let (_, w, n) = square_field(logits)?;
    let window = config.window()?;
    let maps: Vec<_> = slices(logits)?.iter().map(softmax_rows).collect();
    let blocks = maps
        .par_iter()
        .enumerate()
        .map(|(idx, map)| {
            let mut block = String::new();
            for i in 0..n {
                let row = Signal::new(map.row(i).to_vec())?;
                for (k, p) in row_power_spectrum(&row, &window, i).iter().enumerate() {
                    writeln!(block, "{},{},{i},{k},{}", idx / w, idx % w, p.sqrt())
                        .expect("write to String");
                }
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("h,w,i,k,magnitude\n");
    csv.extend(blocks);
    Ok(csv)
}

pub fn cmd_analyze(
    config: &Config,
    input: &Path,
    output: &Path,
    spectrogram: Option<&Path>,
) -> Result<()> {
    let logits = load_rank4(input, "logits field")?;
    let rho = motion_field(&logits.view(), config)?;
    TensorFile::from_array(&rho)?.save(output)?;
    if let Some(path) = spectrogram {
        write_atomic(path, spectrogram_csv(&logits.view(), config)?.as_bytes())?;
    }
    Ok(())
}

/// Reweighted outputs `(H, W, N, d_v)` and final attention maps `(H, W, N, N)`.
pub fn reweight_field(
    logits: &ArrayView4<f64>,
    values: &ArrayView4<f64>,
    config: &Config,
) -> Result<(Array4<f64>, Array4<f64>)> {
    let (h, w, n, _) = logits.dim();
    let (vh, vw, vn, dv) = values.dim();
    if square_field(logits).is_err() || (vh, vw, vn) != (h, w, n) {
        return Err(Error::Shape {
            left: format!("logits {:?}", logits.shape()),
            right: format!("values {:?}", values.shape()),
        });
    }
    let params = config.tiara_params(padded_len(n, &config.window()?))?;
    let value_slices = (0..h * w)
        .map(|idx| VideoLatentSlice::new(values.slice(s![idx / w, idx % w, .., ..]).to_owned()))
        .collect::<Result<Vec<_>>>()?;
    let results = tiara(&slices(logits)?, &value_slices, &params)?;
    let mut out = Array4::zeros((h, w, n, dv));
    let mut att = Array4::zeros((h, w, n, n));
    for (idx, r) in results.iter().enumerate() {
        out.slice_mut(s![idx / w, idx % w, .., ..])
            .assign(r.output.values());
        att.slice_mut(s![idx / w, idx % w, .., ..])
            .assign(r.attention.rows());
    }
    Ok((out, att))
}

pub fn cmd_reweight(
    config: &Config,
    logits: &Path,
    values: &Path,
    output: &Path,
    attention_output: &Path,
) -> Result<()> {
    let l = load_rank4(logits, "logits field")?;
    let v = load_rank4(values, "values field")?;
    let (out, att) = reweight_field(&l.view(), &v.view(), config)?;
    TensorFile::from_array(&out)?.save(output)?;
    TensorFile::from_array(&att)?.save(attention_output)?;
    Ok(())
}

/// Rounding noise allowed when checking that homogeneity deviation shrinks.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-12;

/// Outcome of a `verify-theorem` run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    /// Every instance met its bound `max_ratio <= eta + slack`.
    pub pass: bool,
    /// Values for the largest instance.
    pub max_ratio: f64,
    pub eta: f64,
    pub slack: f64,
    /// Max ratios in order of increasing frame count never go up.
    pub ratios_non_increasing: bool,
    pub homogeneity_non_increasing: bool,
}

impl VerifySummary {
    pub fn from_reports(reports: &[TheoremReport]) -> Result<Self> {
        let mut sorted: Vec<&TheoremReport> = reports.iter().collect();
        sorted.sort_by_key(|r| r.frames);
        let last = sorted
            .last()
            .ok_or_else(|| Error::domain("no theorem reports to summarize"))?;
        let ratios: Vec<f64> = sorted.iter().map(|r| r.max_ratio).collect();
        let homogeneity: Vec<f64> = sorted
            .iter()
            .map(|r| r.measured.homogeneity_deviation)
            .collect();
        Ok(VerifySummary {
            pass: sorted.iter().all(|r| r.pass),
            max_ratio: last.max_ratio,
            eta: last.eta,
            slack: last.slack,
            ratios_non_increasing: is_non_increasing(&ratios),
            homogeneity_non_increasing: is_non_increasing_within(
                &homogeneity,
                HOMOGENEITY_TOLERANCE,
            ),
        })
    }

    pub fn line(&self) -> String {
        format!(
            "{} max_ratio={} eta={} slack={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_ratio,
            self.eta,
            self.slack
        )
    }
}

/// Synthetic instances for every configured frame count.
pub fn verify_sweep(config: &Config) -> Result<Vec<TheoremReport>> {
    let window = config.window()?;
    config
        .sizes
        .par_iter()
        .map(|&n| {
            let instance = TheoremInstance::synthetic(
                n,
                config.decay,
                config.value_bound,
                config.hf_amplitude,
                config.hf_bin,
                config.seed,
                window.clone(),
                config.k_threshold,
                config.eta,
            )?;
            verify_theorem(&instance).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("N={n}: {msg}")),
                Error::AssumptionViolated(msg) => {
                    Error::AssumptionViolated(format!("N={n}: {msg}"))
                }
                other => other,
            })
        })
        .collect()
}

fn squeeze(file: TensorFile, keep: usize, what: &str) -> Result<ArrayD<f64>> {
    let dims: Vec<usize> = file.dims().to_vec();
    let kept: Vec<usize> = dims.iter().copied().filter(|&d| d != 1).collect();
    if kept.len() > keep {
        return Err(Error::domain(format!(
            "{what} has dims {dims:?}; too many non-unit axes"
        )));
    }
    let mut shape = vec![1; keep - kept.len()];
    shape.extend(kept);
    Ok(file
        .into_array()
        .into_shape_with_order(shape)
        .expect("same element count"))
}

/// A single instance read from a logits matrix and a value vector. Unit axes
/// are ignored, so `(1, 1, N, N)` and `(1, 1, N, 1)` files from `synth` work.
pub fn verify_files(config: &Config, logits: &Path, values: &Path) -> Result<TheoremReport> {
    let l = squeeze(TensorFile::load(logits)?, 2, "logits")?
        .into_dimensionality::<ndarray::Ix2>()
        .expect("rank 2");
    let v = squeeze(TensorFile::load(values)?, 1, "values")?;
    let instance = TheoremInstance::new(
        AttentionLogits::new(l)?,
        Signal::new(v.iter().copied().collect())?,
        config.window()?,
        config.k_threshold,
        config.eta,
    )?;
    verify_theorem(&instance)
}

/// Key/value lines per instance, each followed by a per-shift table, then the
/// summary line.
pub fn render_reports(reports: &[TheoremReport], summary: &VerifySummary) -> String {
    let mut out = String::new();
    for r in reports {
        let w = &mut out;
        let _ = writeln!(w, "[instance]");
        let _ = writeln!(w, "frames={}", r.frames);
        let _ = writeln!(w, "window={}", r.window);
        let _ = writeln!(w, "k_threshold={}", r.k_threshold);
        let _ = writeln!(w, "eta={}", r.eta);
        let _ = writeln!(w, "kappa_hat={}", r.measured.kappa_hat);
        let _ = writeln!(w, "a_min={}", r.measured.a_min);
        let _ = writeln!(
            w,
            "homogeneity_deviation={}",
            r.measured.homogeneity_deviation
        );
        let _ = writeln!(w, "min_error={}", r.min_error);
        let _ = writeln!(w, "alpha={}", r.alpha);
        let _ = writeln!(w, "iota={}", r.iota);
        let _ = writeln!(w, "lambda={}", r.lambda_coef);
        let _ = writeln!(w, "identity_residual={}", r.identity_residual());
        let _ = writeln!(w, "kappa_hat_reweighted={}", r.kappa_hat_y);
        let _ = writeln!(w, "max_ratio={}", r.max_ratio);
        let _ = writeln!(w, "slack={}", r.slack);
        let _ = writeln!(w, "pass={}", r.pass);
        let _ = writeln!(w, "tau,error_x,error_y,ratio");
        for (tau, ((ex, ey), ratio)) in r
            .error_x
            .iter()
            .zip(&r.error_y)
            .zip(&r.ratio_per_tau)
            .enumerate()
        {
            match ratio {
                Some(q) => writeln!(w, "{tau},{ex},{ey},{q}"),
                None => writeln!(w, "{tau},{ex},{ey},"),
            }
            .expect("write to String");
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "ratios_non_increasing={}",
        summary.ratios_non_increasing
    );
    let _ = writeln!(
        out,
        "homogeneity_non_increasing={}",
        summary.homogeneity_non_increasing
    );
    out.push_str(&summary.line());
    out.push('\n');
    out
}

pub fn cmd_verify_theorem(
    config: &Config,
    inputs: Option<(&Path, &Path)>,
    output: &Path,
) -> Result<VerifySummary> {
    let reports = match inputs {
        Some((l, v)) => vec![verify_files(config, l, v)?],
        None => verify_sweep(config)?,
    };
    let summary = VerifySummary::from_reports(&reports)?;
    write_atomic(output, render_reports(&reports, &summary).as_bytes())?;
    Ok(summary)
}

/// Which conditioning matrices `blend` produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlendQuery {
    /// One frame: `(total_length, d)`.
    Frame { n: usize, t: f64, d: usize },
    /// Every frame at fixed `(t, d)`: `(frames, total_length, d)`.
    All { t: f64, d: usize },
}

/// Text inputs of `blend`, already read into memory.
#[derive(Debug, Clone, Copy)]
pub struct BlendTexts<'a> {
    pub prompts: &'a str,
    pub spans: &'a str,
    pub tokens: &'a str,
}

pub fn blend(
    config: &Config,
    texts: BlendTexts<'_>,
    embeddings: &Array2<f64>,
    query: BlendQuery,
    pad_token: Option<TokenId>,
) -> Result<ArrayD<f64>> {
    let table = parse_token_table(texts.tokens)?;
    let prompts = parse_prompts(texts.prompts, &table)?;
    let spans = parse_spans(texts.spans)?;
    if prompts.len() != spans.len() {
        return Err(Error::Shape {
            left: format!("{} prompts", prompts.len()),
            right: format!("{} spans", spans.len()),
        });
    }
    let empty = pad_token.map_or(EmptySegment::Reject, EmptySegment::Fill);
    let aligned = align_with(&prompts, empty)?;
    let embedded = EmbeddingTable::new(embeddings.clone())?.embed_all(&aligned)?;
    let schedule = BlendSchedule::new(spans, (config.t1, config.t2), config.layer_threshold)?;
    match query {
        BlendQuery::Frame { n, t, d } => Ok(conditioning(&schedule, &embedded, n, t, d)?
            .into_matrix()
            .into_dyn()),
        BlendQuery::All { t, d } => {
            let frames = (0..schedule.total_frames())
                .map(|n| conditioning(&schedule, &embedded, n, t, d).map(|e| e.into_matrix()))
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<_> = frames.iter().map(|m| m.view()).collect();
            Ok(ndarray::stack(Axis(0), &views)
                .expect("aligned prompts share one shape")
                .into_dyn())
        }
    }
}

pub struct BlendPaths<'a> {
    pub prompts: &'a Path,
    pub spans: &'a Path,
    pub tokens: &'a Path,
    pub embeddings: &'a Path,
}

pub fn cmd_blend(
    config: &Config,
    paths: BlendPaths<'_>,
    query: BlendQuery,
    pad_token: Option<TokenId>,
    output: &Path,
) -> Result<()> {
    let prompts = fs::read_to_string(paths.prompts)?;
    let spans = fs::read_to_string(paths.spans)?;
    let tokens = fs::read_to_string(paths.tokens)?;
    let table = TensorFile::load(paths.embeddings)?;
    if table.rank() != 2 {
        return Err(Error::domain(format!(
            "embedding table must have rank 2 (vocab, d), got dims {:?}",
            table.dims()
        )));
    }
    let table = table
        .into_array()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("rank checked");
    let texts = BlendTexts {
        prompts: &prompts,
        spans: &spans,
        tokens: &tokens,
    };
    let result = blend(config, texts, &table, query, pad_token)?;
    TensorFile::from_array(&result)?.save(output)
}

/// Homogeneous logits `(1, 1, N, N)` and generated values `(1, 1, N, 1)`.
pub fn synth(config: &Config) -> Result<(Array4<f64>, Array4<f64>)> {
    let n = config.frames;
    let logits = gen_homogeneous_attention(n, config.decay)?.into_scores();
    let values = gen_inconsistent_values_at(
        n,
        config.value_bound,
        config.hf_amplitude,
        config.hf_bin.unwrap_or(n / 2),
        config.seed,
    )?;
    Ok((
        logits
            .into_shape_with_order((1, 1, n, n))
            .expect("n * n entries"),
        Array4::from_shape_vec((1, 1, n, 1), values).expect("n entries"),
    ))
}

pub fn cmd_synth(config: &Config, logits_output: &Path, values_output: &Path) -> Result<()> {
    let (l, v) = synth(config)?;
    TensorFile::from_array(&l)?.save(logits_output)?;
    TensorFile::from_array(&v)?.save(values_output)
}
