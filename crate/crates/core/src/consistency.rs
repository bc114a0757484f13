//! Frame-to-frame inconsistency of a per-pixel signal, measured as windowed
//! high-frequency magnitude, and the attention-side quantities used to reason
//! about it.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spectral::{dstft, Signal, Window};

/// Default threshold frequency index `k_t`.
pub const DEFAULT_K_THRESHOLD: usize = 5;

/// Spectra smaller than this are treated as absent when forming ratios.
pub const RATIO_FLOOR: f64 = 1e-12;

fn check_threshold(k_t: usize, len: usize) -> Result<()> {
    if k_t < 1 || k_t > len / 2 {
        return Err(Error::domain(format!(
            "threshold k_t={k_t} must lie in [1, {}] for signal length {len}",
            len / 2
        )));
    }
    Ok(())
}

/// `E(x, tau)`: sum of windowed spectrum magnitudes over `k_t..=N/2` at shift
/// `tau`.
pub fn inconsistency_error(x: &Signal, window: &Window, tau: i64, k_t: usize) -> Result<f64> {
    check_threshold(k_t, x.len())?;
    (k_t..=x.len() / 2)
        .map(|k| dstft(x, window, tau, k).map(|c| c.norm()))
        .sum()
}

/// `E(x, tau)` for every shift.
#[derive(Debug, Clone, PartialEq)]
pub struct InconsistencyReport {
    pub per_tau: Vec<f64>,
    pub k_threshold: usize,
    pub window: Window,
}

impl InconsistencyReport {
    pub fn compute(x: &Signal, window: &Window, k_t: usize) -> Result<Self> {
        let per_tau = (0..x.len() as i64)
            .map(|tau| inconsistency_error(x, window, tau, k_t))
            .collect::<Result<Vec<_>>>()?;
        Ok(InconsistencyReport {
            per_tau,
            k_threshold: k_t,
            window: window.clone(),
        })
    }

    /// Smallest error over all shifts; the finite-size stand-in for the
    /// constant that keeps the error bounded away from zero.
    pub fn min(&self) -> f64 {
        self.per_tau.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.per_tau.iter().copied().fold(0.0, f64::max)
    }
}

/// Copy of a square matrix with its diagonal zeroed. The result keeps the
/// influence of every other frame and is not row-stochastic.
pub fn dynamic_component(a: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {:?}",
            a.dim()
        )));
    }
    let mut out = a.clone();
    out.diag_mut().fill(0.0);
    Ok(out)
}

/// `A v` for a square matrix and a signal of matching length.
pub fn apply_to_signal(a: &Array2<f64>, v: &Signal) -> Result<Signal> {
    if a.ncols() != v.len() {
        return Err(Error::Shape {
            left: format!("matrix {:?}", a.dim()),
            right: format!("signal of length {}", v.len()),
        });
    }
    Signal::new(a.dot(&ndarray::ArrayView1::from(v.values())).to_vec())
}

/// Worst high-frequency magnitude ratio `|S(x_dyn)| / |S(x)|` over every shift
/// and every frequency in `k_t..=N/2`, skipping coefficients where `x` has no
/// power. Zero when every coefficient was skipped.
pub fn estimate_kappa(x: &Signal, x_dyn: &Signal, window: &Window, k_t: usize) -> Result<f64> {
    if x.len() != x_dyn.len() {
        return Err(Error::Shape {
            left: format!("signal of length {}", x.len()),
            right: format!("dynamic signal of length {}", x_dyn.len()),
        });
    }
    check_threshold(k_t, x.len())?;
    let mut kappa: f64 = 0.0;
    for tau in 0..x.len() as i64 {
        for k in k_t..=x.len() / 2 {
            let full = dstft(x, window, tau, k)?.norm();
            if full < RATIO_FLOOR {
                continue;
            }
            kappa = kappa.max(dstft(x_dyn, window, tau, k)?.norm() / full);
        }
    }
    Ok(kappa)
}

/// Largest gap between entries on the same wrapped diagonal:
/// `max |A[i, i+k] - A[j, j+k]|` with column indices taken modulo `N`.
/// Zero exactly for circulant matrices.
pub fn homogeneity_deviation(a: &Array2<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {:?}",
            a.dim()
        )));
    }
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let v = a[[i, (i + k) % n]];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}
