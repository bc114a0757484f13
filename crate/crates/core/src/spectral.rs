//! Discrete Fourier and short-time Fourier transforms over periodic signals.
//!
//! Everything here works on the periodic extension of a finite signal: sample
//! `n` of a length-`N` signal is `x[n mod N]` for any integer `n`. Windows are
//! placed centered on the shift `m`, so coefficient `j` of a length-`L` window
//! multiplies sample `m + j - L/2` (integer division). Both the signal index
//! and the window placement wrap around the period.
//!
//! Transforms are evaluated by direct summation. Frame counts are at most a few
//! hundred, and the oracle tolerances used by the test suite (1e-12 relative)
//! are easiest to hold without a fast transform in the way.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Finite real sequence with periodic index extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("signal must have at least one sample"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("signal sample {pos} is not finite")));
        }
        Ok(Signal(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Sample at any integer index, `x[n mod N]`.
    pub fn at(&self, n: i64) -> f64 {
        self.0[wrap(n, self.0.len())]
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Signal::new(values)
    }
}

impl TryFrom<&[f64]> for Signal {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        Signal::new(values.to_vec())
    }
}

#[inline]
pub(crate) fn wrap(n: i64, len: usize) -> usize {
    n.rem_euclid(len as i64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    Rectangular,
    Hann,
    Gaussian,
    Blackman,
}

/// Width parameter of the Gaussian window, relative to half the window length.
pub const GAUSSIAN_SIGMA: f64 = 0.4;

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Rectangular => "rectangular",
            WindowKind::Hann => "hann",
            WindowKind::Gaussian => "gaussian",
            WindowKind::Blackman => "blackman",
        }
    }

    fn coefficient(self, j: usize, len: usize) -> f64 {
        if len == 1 {
            return 1.0;
        }
        let span = (len - 1) as f64;
        let j = j as f64;
        let value = match self {
            WindowKind::Rectangular => 1.0,
            WindowKind::Hann => 0.5 - 0.5 * (2.0 * PI * j / span).cos(),
            WindowKind::Blackman => {
                0.42 - 0.5 * (2.0 * PI * j / span).cos() + 0.08 * (4.0 * PI * j / span).cos()
            }
            WindowKind::Gaussian => {
                let z = (j - span / 2.0) / (GAUSSIAN_SIGMA * span / 2.0);
                (-0.5 * z * z).exp()
            }
        };
        // Blackman endpoints evaluate to about -1e-17.
        value.clamp(0.0, 1.0)
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "gaussian" | "gauss" => Ok(WindowKind::Gaussian),
            "blackman" => Ok(WindowKind::Blackman),
            other => Err(Error::domain(format!("unknown window kind `{other}`"))),
        }
    }
}

/// A tapering window of finite support, centered on the analysis shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    kind: WindowKind,
    coefficients: Vec<f64>,
}

impl Window {
    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    /// Support length `L`.
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `L / 2`: the coefficient index that sits on the shift itself.
    pub fn half(&self) -> usize {
        self.coefficients.len() / 2
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.len())
    }
}

pub fn make_window(kind: WindowKind, len: usize) -> Result<Window> {
    if len == 0 {
        return Err(Error::domain("window length must be at least 1"));
    }
    let coefficients = (0..len).map(|j| kind.coefficient(j, len)).collect();
    Ok(Window { kind, coefficients })
}

#[inline]
fn twiddle(k: usize, n: usize, len: usize) -> Complex64 {
    // Reduce k*n modulo the period first so the phase argument stays small.
    let r = ((k as u128 * n as u128) % len as u128) as f64;
    Complex64::from_polar(1.0, -2.0 * PI * r / len as f64)
}

fn check_frequency(k: usize, len: usize) -> Result<()> {
    if k >= len {
        return Err(Error::domain(format!(
            "frequency index {k} out of range for signal of length {len}"
        )));
    }
    Ok(())
}

/// `sum_n x[n] exp(-i 2 pi k n / N)`.
pub fn dft(x: &Signal, k: usize) -> Result<Complex64> {
    let len = x.len();
    check_frequency(k, len)?;
    Ok(x.values()
        .iter()
        .enumerate()
        .map(|(n, &v)| twiddle(k, n, len) * v)
        .sum())
}

/// Windowed DFT at shift `m`: `sum_n x[n] psi[n - m] exp(-i 2 pi k n / N)`.
///
/// The window is periodized with the signal's period, so a window longer
/// than the signal folds onto itself.
pub fn dstft(x: &Signal, window: &Window, m: i64, k: usize) -> Result<Complex64> {
    let len = x.len();
    check_frequency(k, len)?;
    Ok(windowed_sum(x.values(), window, m, k))
}

fn windowed_sum(x: &[f64], window: &Window, m: i64, k: usize) -> Complex64 {
    let len = x.len();
    let start = m - window.half() as i64;
    window
        .coefficients()
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let n = wrap(start + j as i64, len);
            twiddle(k, n, len) * (x[n] * c)
        })
        .sum()
}

/// Every `(m, k)` coefficient of a signal's short-time transform.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    coefficients: Array2<Complex64>,
    window: Window,
}

impl Spectrogram {
    pub fn compute(x: &Signal, window: &Window) -> Self {
        let len = x.len();
        let coefficients = Array2::from_shape_fn((len, len), |(m, k)| {
            windowed_sum(x.values(), window, m as i64, k)
        });
        Spectrogram {
            coefficients,
            window: window.clone(),
        }
    }

    pub fn signal_len(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Coefficient at shift `m` (periodic) and frequency `k`.
    pub fn coeff(&self, m: i64, k: usize) -> Complex64 {
        self.coefficients[[wrap(m, self.signal_len()), k]]
    }

    pub fn coefficients(&self) -> &Array2<Complex64> {
        &self.coefficients
    }
}

/// Squared magnitudes of the one-sided windowed spectrum at shift `m`,
/// frequencies `0..=N/2`.
pub fn one_sided_power(x: &Signal, window: &Window, m: i64) -> Vec<f64> {
    (0..=x.len() / 2)
        .map(|k| windowed_sum(x.values(), window, m, k).norm_sqr())
        .collect()
}

/// Extend a signal periodically: `left` samples wrapped from its tail in
/// front, `right` samples wrapped from its head behind.
pub fn pad_periodic(x: &Signal, left: usize, right: usize) -> Signal {
    let len = x.len() as i64;
    let values = (-(left as i64)..len + right as i64)
        .map(|n| x.at(n))
        .collect();
    Signal(values)
}
