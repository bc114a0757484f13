//! Temporal attention: row softmax, the additive reweighting matrix, motion
//! intensity from windowed spectra of attention rows, and the per-location
//! reweighting pipeline.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{one_sided_power, pad_periodic, Signal, Window};

/// Pre-softmax frame-to-frame scores at one spatial location. Any `1/sqrt(d_k)`
/// scaling is the producer's business; the scores are used as given.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLogits(Array2<f64>);

impl AttentionLogits {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.nrows() != scores.ncols() || scores.nrows() == 0 {
            return Err(Error::domain(format!(
                "attention logits must be a non-empty square matrix, got {:?}",
                scores.dim()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("attention logits contain non-finite entries"));
        }
        Ok(AttentionLogits(scores))
    }

    pub fn frame_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_scores(self) -> Array2<f64> {
        self.0
    }
}

/// Row-stochastic attention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap(Array2<f64>);

/// Row sums of an attention map may drift this far from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl AttentionMap {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() != rows.ncols() || rows.nrows() == 0 {
            return Err(Error::domain(format!(
                "attention map must be a non-empty square matrix, got {:?}",
                rows.dim()
            )));
        }
        for (i, row) in rows.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain(format!(
                    "attention row {i} has entries outside [0, 1]"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::domain(format!("attention row {i} sums to {sum}")));
            }
        }
        Ok(AttentionMap(rows))
    }

    pub fn frame_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.0
    }

    /// `A V`.
    pub fn apply(&self, values: &VideoLatentSlice) -> Result<VideoLatentSlice> {
        if values.frame_count() != self.frame_count() {
            return Err(Error::Shape {
                left: format!("attention {:?}", self.0.dim()),
                right: format!("values {:?}", values.0.dim()),
            });
        }
        Ok(VideoLatentSlice(self.0.dot(&values.0)))
    }

    /// Smallest diagonal entry.
    pub fn min_diagonal(&self) -> f64 {
        self.0.diag().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Per-frame value vectors at one spatial location, `N x d_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLatentSlice(Array2<f64>);

impl VideoLatentSlice {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("value slice contains non-finite entries"));
        }
        Ok(VideoLatentSlice(values))
    }

    /// A single-channel slice from a length-`N` vector.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(Array1::from(values.to_vec()).insert_axis(Axis(1)))
    }

    pub fn frame_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_values(self) -> Array2<f64> {
        self.0
    }

    /// Largest absolute entry, `B_V`.
    pub fn bound(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(logits: &AttentionLogits) -> AttentionMap {
    let mut out = logits.0.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    AttentionMap(out)
}

/// Additive pre-softmax penalty: a diagonal plus two `c x c` corner triangles
/// (upper-right and lower-left) that push attention away from temporally
/// distant frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightMatrix {
    lambda: Array2<f64>,
    alpha: f64,
    corner_size: usize,
    corner_penalty: f64,
}

impl ReweightMatrix {
    pub fn zeros(n: usize) -> Self {
        ReweightMatrix {
            lambda: Array2::zeros((n, n)),
            alpha: 0.0,
            corner_size: 0,
            corner_penalty: 0.0,
        }
    }

    /// `-alpha * I`.
    pub fn diagonal(n: usize, alpha: f64) -> Result<Self> {
        build_reweight_matrix(&vec![0.0; n], alpha, 0, 0.0)
    }

    pub fn lambda(&self) -> &Array2<f64> {
        &self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn corner_size(&self) -> usize {
        self.corner_size
    }

    pub fn corner_penalty(&self) -> f64 {
        self.corner_penalty
    }

    pub fn size(&self) -> usize {
        self.lambda.nrows()
    }
}

/// True when `(i, j)` falls in the upper-right or lower-left corner triangle
/// of size `c` in an `n x n` matrix.
pub fn in_corner(i: usize, j: usize, n: usize, c: usize) -> bool {
    i + (n - 1 - j) < c || (n - 1 - i) + j < c
}

/// The corner-only base matrix that the diagonal rule is written on top of.
pub fn corner_base(n: usize, corner_size: usize, corner_penalty: f64) -> Result<Array2<f64>> {
    if corner_size > n / 2 {
        return Err(Error::domain(format!(
            "corner size {corner_size} exceeds half the frame count {n}"
        )));
    }
    if !(corner_penalty >= 0.0 && corner_penalty.is_finite()) {
        return Err(Error::domain(format!(
            "corner penalty must be >= 0, got {corner_penalty}"
        )));
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        if in_corner(i, j, n, corner_size) {
            -corner_penalty
        } else {
            0.0
        }
    }))
}

/// Diagonal `-alpha (1 - rho_i)` on top of the corner base.
pub fn build_reweight_matrix(
    rho: &[f64],
    alpha: f64,
    corner_size: usize,
    corner_penalty: f64,
) -> Result<ReweightMatrix> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if let Some(i) = rho.iter().position(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::domain(format!(
            "motion intensity {i} is outside [0, 1]"
        )));
    }
    let n = rho.len();
    let mut lambda = corner_base(n, corner_size, corner_penalty)?;
    for (i, r) in rho.iter().enumerate() {
        lambda[[i, i]] = -alpha * (1.0 - r);
    }
    Ok(ReweightMatrix {
        lambda,
        alpha,
        corner_size,
        corner_penalty,
    })
}

/// `softmax(logits + Lambda)` and its product with the values.
pub fn reweighted_attention(
    logits: &AttentionLogits,
    reweight: &ReweightMatrix,
    values: &VideoLatentSlice,
) -> Result<(AttentionMap, VideoLatentSlice)> {
    let n = logits.frame_count();
    if reweight.size() != n {
        return Err(Error::Shape {
            left: format!("logits {:?}", logits.0.dim()),
            right: format!("reweight {:?}", reweight.lambda.dim()),
        });
    }
    let modified = AttentionLogits(&logits.0 + &reweight.lambda);
    let map = softmax_rows(&modified);
    let out = map.apply(values)?;
    Ok((map, out))
}

/// Effect of `Lambda = -alpha I` computed from the un-reweighted map alone:
/// each row is rescaled by `1 / (1 - (1 - e^-alpha) A_ii)` and the diagonal
/// additionally by `e^-alpha`.
pub fn closed_form_diagonal_reweight(map: &AttentionMap, alpha: f64) -> AttentionMap {
    let shrink = (-alpha).exp();
    let mut out = map.0.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let a_ii = row[i];
        let denom = 1.0 - (1.0 - shrink) * a_ii;
        row.mapv_inplace(|a| a / denom);
        row[i] *= shrink;
    }
    AttentionMap(out)
}

/// Frequency-index thresholds `[low, high)` for the motion-intensity ratio:
/// `low` separates slow drift from motion, `high` cuts off abnormal motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyBand {
    pub low: usize,
    pub high: usize,
}

impl FrequencyBand {
    /// `low = ceil(n / 8)`, `high = n / 2 + 1` for a padded row of length `n`.
    pub fn default_for(padded_len: usize) -> Self {
        let high = padded_len / 2 + 1;
        let low = padded_len.div_ceil(8).max(1).min(high - 1);
        FrequencyBand { low, high }
    }

    pub fn validate(&self, padded_len: usize) -> Result<()> {
        let limit = padded_len / 2 + 1;
        if self.low >= self.high || self.high > limit {
            return Err(Error::domain(format!(
                "frequency thresholds must satisfy phi1 < phi2 <= {limit}, got phi1={} phi2={}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Length of an attention row after periodic padding by `L/2` on each side.
pub fn padded_len(frames: usize, window: &Window) -> usize {
    frames + 2 * window.half()
}

/// One-sided windowed power of row `i` of an attention map, evaluated on the
/// periodically padded row with the window centered on frame `i`.
pub fn row_power_spectrum(row: &Signal, window: &Window, i: usize) -> Vec<f64> {
    let half = window.half();
    let padded = pad_periodic(row, half, half);
    one_sided_power(&padded, window, (i + half) as i64)
}

/// High-frequency share of the windowed power of an attention row around
/// frame `i`. A numerically silent spectrum counts as no motion.
pub fn motion_intensity(
    row: &Signal,
    window: &Window,
    i: usize,
    band: FrequencyBand,
) -> Result<f64> {
    if i >= row.len() {
        return Err(Error::domain(format!(
            "row index {i} out of range for {} frames",
            row.len()
        )));
    }
    band.validate(padded_len(row.len(), window))?;
    let power = row_power_spectrum(row, window, i);
    let total: f64 = power[..band.high].iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let high: f64 = power[band.low..band.high].iter().sum();
    Ok((high / total).clamp(0.0, 1.0))
}

/// Motion intensity of every frame of one attention map.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile {
    rho: Vec<f64>,
    band: FrequencyBand,
    window: Window,
}

impl MotionProfile {
    pub fn compute(
        map: &AttentionMap,
        window: &Window,
        band: Option<FrequencyBand>,
    ) -> Result<Self> {
        let n = map.frame_count();
        let band = band.unwrap_or_else(|| FrequencyBand::default_for(padded_len(n, window)));
        band.validate(padded_len(n, window))?;
        let rho = (0..n)
            .map(|i| {
                let row = Signal::new(map.row(i).to_vec())?;
                motion_intensity(&row, window, i, band)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MotionProfile {
            rho,
            band,
            window: window.clone(),
        })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn band(&self) -> FrequencyBand {
        self.band
    }

    pub fn window(&self) -> &Window {
        &self.window
    }
}

/// Knobs of the reweighting pipeline. Unset corner values default per slice
/// to `c = N / 4` and `beta = alpha / 2`; an unset band defaults from the
/// padded row length.
#[derive(Debug, Clone)]
pub struct TiaraParams {
    pub window: Window,
    pub band: Option<FrequencyBand>,
    pub alpha: f64,
    pub corner_size: Option<usize>,
    pub corner_penalty: Option<f64>,
}

impl TiaraParams {
    pub fn new(window: Window, alpha: f64) -> Self {
        TiaraParams {
            window,
            band: None,
            alpha,
            corner_size: None,
            corner_penalty: None,
        }
    }

    pub fn resolved_corner_size(&self, frames: usize) -> usize {
        self.corner_size.unwrap_or(frames / 4)
    }

    pub fn resolved_corner_penalty(&self) -> f64 {
        self.corner_penalty.unwrap_or(self.alpha / 2.0)
    }
}

/// Output of the pipeline at one spatial location.
#[derive(Debug, Clone)]
pub struct TiaraSlice {
    pub output: VideoLatentSlice,
    pub attention: AttentionMap,
    pub profile: MotionProfile,
    pub reweight: ReweightMatrix,
}

/// Reweight one location: estimate motion from the plain attention map, set
/// the diagonal from it on top of the corner base, and attend again.
pub fn tiara_slice(
    logits: &AttentionLogits,
    values: &VideoLatentSlice,
    params: &TiaraParams,
) -> Result<TiaraSlice> {
    let n = logits.frame_count();
    let plain = softmax_rows(logits);
    let profile = MotionProfile::compute(&plain, &params.window, params.band)?;
    let reweight = build_reweight_matrix(
        profile.rho(),
        params.alpha,
        params.resolved_corner_size(n),
        params.resolved_corner_penalty(),
    )?;
    let (attention, output) = reweighted_attention(logits, &reweight, values)?;
    Ok(TiaraSlice {
        output,
        attention,
        profile,
        reweight,
    })
}

/// Run [`tiara_slice`] over every spatial location. Locations are independent
/// and processed in parallel on the current rayon pool.
pub fn tiara(
    logits: &[AttentionLogits],
    values: &[VideoLatentSlice],
    params: &TiaraParams,
) -> Result<Vec<TiaraSlice>> {
    if logits.len() != values.len() {
        return Err(Error::Shape {
            left: format!("{} logit slices", logits.len()),
            right: format!("{} value slices", values.len()),
        });
    }
    if let Some(first) = logits.first() {
        let n = first.frame_count();
        for (idx, (l, v)) in logits.iter().zip(values).enumerate() {
            if l.frame_count() != n || v.frame_count() != n {
                return Err(Error::Shape {
                    left: format!("location {idx} logits {:?}", l.0.dim()),
                    right: format!("values {:?} (expected {n} frames)", v.0.dim()),
                });
            }
        }
    }
    logits
        .par_iter()
        .zip(values.par_iter())
        .map(|(l, v)| tiara_slice(l, v, params))
        .collect()
}
