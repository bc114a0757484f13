//! Brute-force reference computations written directly from the defining
//! sums. Nothing here calls into the library under test.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C = (f64, f64);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_vec(rng, m, lo, hi)).collect()
}

pub fn window(kind: &str, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let d = (len - 1) as f64;
    (0..len)
        .map(|j| {
            let j = j as f64;
            let v = match kind {
                "rectangular" => 1.0,
                "hann" => 0.5 - 0.5 * (2.0 * PI * j / d).cos(),
                "blackman" => {
                    0.42 - 0.5 * (2.0 * PI * j / d).cos() + 0.08 * (4.0 * PI * j / d).cos()
                }
                "gaussian" => {
                    let z = (j - d / 2.0) / (0.4 * d / 2.0);
                    (-0.5 * z * z).exp()
                }
                _ => panic!("unknown window {kind}"),
            };
            v.max(0.0)
        })
        .collect()
}

/// `sum_n x_n e^{-2 pi i k n / N}` with the phase evaluated as written.
pub fn dft(x: &[f64], k: usize) -> C {
    let n_len = x.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (n, &v) in x.iter().enumerate() {
        let ph = -2.0 * PI * (k as f64) * (n as f64) / n_len;
        re += v * ph.cos();
        im += v * ph.sin();
    }
    (re, im)
}

/// Periodized window value at offset `d = n - m`: the sum of every
/// coefficient `j` with `j - L/2 == d (mod N)`.
pub fn psi(w: &[f64], d: i64, n_len: usize) -> f64 {
    let half = (w.len() / 2) as i64;
    let n = n_len as i64;
    w.iter()
        .enumerate()
        .filter(|(j, _)| ((*j as i64 - half - d) % n + n) % n == 0)
        .map(|(_, c)| c)
        .sum()
}

/// `sum_n x_n psi_{n-m} e^{-2 pi i k n / N}` over `n` in `[0, N)`.
pub fn dstft(x: &[f64], w: &[f64], m: i64, k: usize) -> C {
    let n_len = x.len();
    let mut re = 0.0;
    let mut im = 0.0;
    for (n, &v) in x.iter().enumerate() {
        let c = psi(w, n as i64 - m, n_len);
        if c == 0.0 {
            continue;
        }
        let ph = -2.0 * PI * (k as f64) * (n as f64) / n_len as f64;
        re += v * c * ph.cos();
        im += v * c * ph.sin();
    }
    (re, im)
}

/// Scale of the terms entering [`dstft`], used to turn absolute into
/// relative error.
pub fn dstft_scale(x: &[f64], w: &[f64], m: i64) -> f64 {
    (0..x.len())
        .map(|n| (x[n] * psi(w, n as i64 - m, x.len())).abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE)
}

pub fn abs(c: C) -> f64 {
    c.0.hypot(c.1)
}

pub fn close(a: C, b: C, tol: f64) -> bool {
    (a.0 - b.0).abs() <= tol && (a.1 - b.1).abs() <= tol
}

pub fn softmax_naive(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn periodic_pad(x: &[f64], p: usize) -> Vec<f64> {
    let n = x.len() as i64;
    (-(p as i64)..n + p as i64)
        .map(|i| x[(((i % n) + n) % n) as usize])
        .collect()
}

/// High-band share of the one-sided power of row `i`, padded by `L/2`,
/// window centered on the original sample.
pub fn rho(row: &[f64], w: &[f64], i: usize, band: Option<(usize, usize)>) -> f64 {
    let half = w.len() / 2;
    let padded = periodic_pad(row, half);
    let np = padded.len();
    let (lo, hi) = band.unwrap_or((np.div_ceil(8), np / 2 + 1));
    let power: Vec<f64> = (0..=np / 2)
        .map(|k| {
            let c = dstft(&padded, w, (i + half) as i64, k);
            c.0 * c.0 + c.1 * c.1
        })
        .collect();
    let total: f64 = power[..hi].iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    power[lo..hi].iter().sum::<f64>() / total
}

/// Straight-line per-location reweighting: softmax, motion intensity per
/// row, diagonal `-alpha (1 - rho)` plus corner penalties, softmax again,
/// multiply by the values.
pub fn tiara_location(
    logits: &[Vec<f64>],
    values: &[Vec<f64>],
    w: &[f64],
    alpha: f64,
    c: usize,
    beta: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = logits.len();
    let a: Vec<Vec<f64>> = logits.iter().map(|r| softmax_naive(r)).collect();
    let rhos: Vec<f64> = (0..n).map(|i| rho(&a[i], w, i, None)).collect();
    let mut att = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = logits[i].clone();
        row[i] -= alpha * (1.0 - rhos[i]);
        for j in 0..n {
            if i + (n - 1 - j) < c || (n - 1 - i) + j < c {
                row[j] -= beta;
            }
        }
        att.push(softmax_naive(&row));
    }
    let dv = values[0].len();
    let out = att
        .iter()
        .map(|r| {
            (0..dv)
                .map(|ch| (0..n).map(|j| r[j] * values[j][ch]).sum())
                .collect()
        })
        .collect();
    (out, att)
}

/// `sum_{k = k_t}^{N/2} |DSTFT(x, w, tau, k)|`.
pub fn inconsistency(x: &[f64], w: &[f64], tau: i64, k_t: usize) -> f64 {
    (k_t..=x.len() / 2).map(|k| abs(dstft(x, w, tau, k))).sum()
}

pub fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn periodic_pad_asym(x: &[f64], left: usize, right: usize) -> Vec<f64> {
    let n = x.len() as i64;
    (-(left as i64)..n + right as i64)
        .map(|i| x[(((i % n) + n) % n) as usize])
        .collect()
}
