//! Numerical check of the inconsistency-reduction guarantee for diagonal
//! attention reweighting.
//!
//! Given an attention map `A` and a scalar value per frame `v`, the plain
//! output is `x = A v` and the reweighted output is
//! `y = softmax(logits - alpha I) v`. With
//!
//! ```text
//! iota(alpha, a)   = e^-alpha / (1 - (1 - e^-alpha) a)
//! lambda(alpha, a) = (1 - e^-alpha) / (1 - (1 - e^-alpha) a)
//! ```
//!
//! and `a` the smallest diagonal entry of `A`, choosing
//!
//! ```text
//! alpha = ln((1 - kappa - a eta) / (eta (1 - a) - kappa))
//! ```
//!
//! makes `iota + kappa lambda = eta`, and the high-frequency error of `y` is
//! then at most `eta` times that of `x` up to a term that vanishes as the
//! frame count grows, provided the map is close to circulant and the
//! off-diagonal part of `A` passes at most `kappa` of the high-frequency
//! content of `x`.
//!
//! [`verify_theorem`] measures `kappa` on a concrete instance, builds `alpha`
//! from it, and reports the error ratio at every shift.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    reweighted_attention, softmax_rows, AttentionLogits, AttentionMap, ReweightMatrix,
    VideoLatentSlice,
};
use crate::consistency::{
    apply_to_signal, dynamic_component, estimate_kappa, homogeneity_deviation, InconsistencyReport,
    RATIO_FLOOR,
};
use crate::error::{Error, Result};
use crate::spectral::{Signal, Window};

/// Smallest admissible `eta (1 - a) - kappa` before `alpha` is treated as
/// unbounded.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

pub fn iota(alpha: f64, a: f64) -> f64 {
    let shrink = (-alpha).exp();
    shrink / (1.0 - (1.0 - shrink) * a)
}

pub fn lambda_coefficient(alpha: f64, a: f64) -> f64 {
    let shrink = (-alpha).exp();
    (1.0 - shrink) / (1.0 - (1.0 - shrink) * a)
}

/// The diagonal penalty that makes `iota + kappa lambda` equal `eta`.
pub fn alpha_from_closed_form(kappa: f64, eta: f64, a_min: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a_min) {
        return Err(Error::domain(format!(
            "need 0 <= a_min < 1, got a_min={a_min}"
        )));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::domain(format!("need kappa >= 0, got kappa={kappa}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("need 0 < eta < 1, got eta={eta}")));
    }
    if kappa >= 1.0 - a_min {
        return Err(Error::domain(format!(
            "need kappa < 1 - a_min, got kappa={kappa} >= {}",
            1.0 - a_min
        )));
    }
    let denominator = eta * (1.0 - a_min) - kappa;
    if denominator <= DENOMINATOR_FLOOR {
        return Err(Error::domain(format!(
            "need eta (1 - a_min) - kappa > {DENOMINATOR_FLOOR}, got {denominator} \
             (eta={eta} is at or below kappa / (1 - a_min) = {})",
            kappa / (1.0 - a_min)
        )));
    }
    let numerator = 1.0 - kappa - a_min * eta;
    if numerator <= 0.0 {
        return Err(Error::domain(format!(
            "need 1 - kappa - a_min eta > 0, got {numerator}"
        )));
    }
    Ok((numerator / denominator).ln())
}

/// Logits `exp(-decay * d(i, j))` with `d` the circular frame distance. Their
/// softmax is circulant.
pub fn gen_homogeneous_attention(frames: usize, decay: f64) -> Result<AttentionLogits> {
    if frames < 2 {
        return Err(Error::domain(format!(
            "need at least 2 frames, got {frames}"
        )));
    }
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(Error::domain(format!("decay must be >= 0, got {decay}")));
    }
    let scores = Array2::from_shape_fn((frames, frames), |(i, j)| {
        let d = i.abs_diff(j);
        let d = d.min(frames - d) as f64;
        (-decay * d).exp()
    });
    AttentionLogits::new(scores)
}

/// Values with a slow carrier plus a Nyquist-rate tone of amplitude
/// `hf_amplitude`; see [`gen_inconsistent_values_at`].
pub fn gen_inconsistent_values(
    frames: usize,
    bound: f64,
    hf_amplitude: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    gen_inconsistent_values_at(frames, bound, hf_amplitude, frames / 2, seed)
}

/// `(bound - hf_amplitude) cos(2 pi n / N + phase) + hf_amplitude cos(2 pi hf_bin n / N)`
/// with the carrier phase drawn from `seed`. Every entry stays within `bound`.
pub fn gen_inconsistent_values_at(
    frames: usize,
    bound: f64,
    hf_amplitude: f64,
    hf_bin: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if frames < 2 {
        return Err(Error::domain(format!(
            "need at least 2 frames, got {frames}"
        )));
    }
    if !(hf_amplitude > 0.0 && hf_amplitude <= bound && bound.is_finite()) {
        return Err(Error::domain(format!(
            "need 0 < hf_amplitude <= bound, got hf_amplitude={hf_amplitude} bound={bound}"
        )));
    }
    if hf_bin == 0 || hf_bin > frames / 2 {
        return Err(Error::domain(format!(
            "high-frequency bin {hf_bin} outside [1, {}]",
            frames / 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let carrier = bound - hf_amplitude;
    let step = std::f64::consts::TAU / frames as f64;
    Ok((0..frames)
        .map(|n| {
            // the Nyquist tone is written as an exact +/-1
            let tone = if 2 * hf_bin == frames {
                if n % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                (step * ((hf_bin * n) % frames) as f64).cos()
            };
            let slow = if carrier > 0.0 {
                carrier * (step * n as f64 + phase).cos()
            } else {
                0.0
            };
            (slow + hf_amplitude * tone).clamp(-bound, bound)
        })
        .collect())
}

/// Quantities measured on an instance before any reweighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub kappa_hat: f64,
    pub a_min: f64,
    pub homogeneity_deviation: f64,
}

/// An attention system with scalar values, ready to be checked.
#[derive(Debug, Clone)]
pub struct TheoremInstance {
    logits: AttentionLogits,
    attention: AttentionMap,
    values: Signal,
    window: Window,
    k_threshold: usize,
    eta: f64,
    measured: Measured,
}

impl TheoremInstance {
    pub fn new(
        logits: AttentionLogits,
        values: Signal,
        window: Window,
        k_threshold: usize,
        eta: f64,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::domain(format!("need 0 < eta < 1, got eta={eta}")));
        }
        if values.len() != logits.frame_count() {
            return Err(Error::Shape {
                left: format!("logits {:?}", logits.scores().dim()),
                right: format!("values of length {}", values.len()),
            });
        }
        let attention = softmax_rows(&logits);
        let x = apply_to_signal(attention.rows(), &values)?;
        let x_dyn = apply_to_signal(&dynamic_component(attention.rows())?, &values)?;
        let measured = Measured {
            kappa_hat: estimate_kappa(&x, &x_dyn, &window, k_threshold)?,
            a_min: attention.min_diagonal(),
            homogeneity_deviation: homogeneity_deviation(attention.rows())?,
        };
        Ok(TheoremInstance {
            logits,
            attention,
            values,
            window,
            k_threshold,
            eta,
            measured,
        })
    }

    /// Homogeneous logits with generated values, all from one seed.
    #[allow(clippy::too_many_arguments)]
    pub fn synthetic(
        frames: usize,
        decay: f64,
        bound: f64,
        hf_amplitude: f64,
        hf_bin: Option<usize>,
        seed: u64,
        window: Window,
        k_threshold: usize,
        eta: f64,
    ) -> Result<Self> {
        let logits = gen_homogeneous_attention(frames, decay)?;
        let values = gen_inconsistent_values_at(
            frames,
            bound,
            hf_amplitude,
            hf_bin.unwrap_or(frames / 2),
            seed,
        )?;
        Self::new(logits, Signal::new(values)?, window, k_threshold, eta)
    }

    pub fn frames(&self) -> usize {
        self.values.len()
    }

    pub fn logits(&self) -> &AttentionLogits {
        &self.logits
    }

    pub fn attention(&self) -> &AttentionMap {
        &self.attention
    }

    pub fn values(&self) -> &Signal {
        &self.values
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn k_threshold(&self) -> usize {
        self.k_threshold
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn measured(&self) -> Measured {
        self.measured
    }

    /// `kappa_hat < 1 - a_min` and `eta >= kappa_hat / (1 - a_min)`.
    pub fn is_feasible(&self) -> bool {
        self.check_feasible().is_ok()
    }

    pub fn check_feasible(&self) -> Result<()> {
        let Measured {
            kappa_hat, a_min, ..
        } = self.measured;
        if kappa_hat >= 1.0 - a_min {
            return Err(Error::domain(format!(
                "separation assumption fails: kappa_hat={kappa_hat} >= 1 - a_min = {}",
                1.0 - a_min
            )));
        }
        let floor = kappa_hat / (1.0 - a_min);
        if self.eta < floor {
            return Err(Error::domain(format!(
                "eta={} is below kappa_hat / (1 - a_min) = {floor}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Finite-size headroom on top of `eta`.
pub fn slack(frames: usize) -> f64 {
    if frames >= 128 {
        0.05
    } else {
        0.15
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub frames: usize,
    pub eta: f64,
    pub k_threshold: usize,
    pub window: Window,
    pub measured: Measured,
    pub alpha: f64,
    pub iota: f64,
    pub lambda_coef: f64,
    /// `min_tau E(x, tau)`.
    pub min_error: f64,
    pub error_x: Vec<f64>,
    pub error_y: Vec<f64>,
    /// `E(y, tau) / E(x, tau)`, `None` where `E(x, tau)` is negligible.
    pub ratio_per_tau: Vec<Option<f64>>,
    pub max_ratio: f64,
    pub slack: f64,
    pub pass: bool,
    /// Separation coefficient re-measured on the reweighted system.
    pub kappa_hat_y: f64,
}

impl TheoremReport {
    /// `iota + kappa_hat lambda - eta`; zero up to rounding by construction.
    pub fn identity_residual(&self) -> f64 {
        self.iota + self.measured.kappa_hat * self.lambda_coef - self.eta
    }
}

pub fn verify_theorem(instance: &TheoremInstance) -> Result<TheoremReport> {
    instance.check_feasible()?;
    let n = instance.frames();
    let Measured {
        kappa_hat, a_min, ..
    } = instance.measured;
    let alpha = alpha_from_closed_form(kappa_hat, instance.eta, a_min)?;

    let column = VideoLatentSlice::from_column(instance.values.values())?;
    let (reweighted, y) = reweighted_attention(
        &instance.logits,
        &ReweightMatrix::diagonal(n, alpha)?,
        &column,
    )?;
    let y = Signal::new(y.into_values().into_raw_vec_and_offset().0)?;
    let x = apply_to_signal(instance.attention.rows(), &instance.values)?;

    let error_x = InconsistencyReport::compute(&x, &instance.window, instance.k_threshold)?;
    let error_y = InconsistencyReport::compute(&y, &instance.window, instance.k_threshold)?;
    if error_x.max() < RATIO_FLOOR {
        return Err(Error::AssumptionViolated(format!(
            "E(x, tau) < {RATIO_FLOOR} at every shift; nothing to reduce"
        )));
    }
    let ratio_per_tau: Vec<Option<f64>> = error_x
        .per_tau
        .iter()
        .zip(&error_y.per_tau)
        .map(|(&ex, &ey)| (ex >= RATIO_FLOOR).then(|| ey / ex))
        .collect();
    let max_ratio = ratio_per_tau.iter().flatten().copied().fold(0.0, f64::max);

    let y_dyn = apply_to_signal(&dynamic_component(reweighted.rows())?, &instance.values)?;
    let kappa_hat_y = estimate_kappa(&y, &y_dyn, &instance.window, instance.k_threshold)?;

    let slack = slack(n);
    Ok(TheoremReport {
        frames: n,
        eta: instance.eta,
        k_threshold: instance.k_threshold,
        window: instance.window.clone(),
        measured: instance.measured,
        alpha,
        iota: iota(alpha, a_min),
        lambda_coef: lambda_coefficient(alpha, a_min),
        min_error: error_x.min(),
        error_x: error_x.per_tau,
        error_y: error_y.per_tau,
        ratio_per_tau,
        max_ratio,
        slack,
        pass: max_ratio <= instance.eta + slack,
        kappa_hat_y,
    })
}

/// True when each element is no larger than the one before it.
pub fn is_non_increasing(seq: &[f64]) -> bool {
    seq.windows(2).all(|w| w[1] <= w[0])
}

/// Like [`is_non_increasing`], forgiving rises of at most `tol`.
pub fn is_non_increasing_within(seq: &[f64], tol: f64) -> bool {
    seq.windows(2).all(|w| w[1] <= w[0] + tol)
}
