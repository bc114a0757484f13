//! `key = value` configuration shared by every command.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are rejected. Values are checked when set, so a loaded [`Config`] is
//! always usable.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::attention::{FrequencyBand, TiaraParams};
use crate::error::{Error, Result};
use crate::spectral::{make_window, Window, WindowKind};

pub const KEYS: &[&str] = &[
    "alpha",
    "corner_size",
    "corner_penalty",
    "window.kind",
    "window.length",
    "phi1",
    "phi2",
    "k_threshold",
    "eta",
    "t1",
    "t2",
    "layer_threshold",
    "seed",
    "sizes",
    "frames",
    "decay",
    "value_bound",
    "hf_amplitude",
    "hf_bin",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub alpha: f64,
    pub corner_size: Option<usize>,
    pub corner_penalty: Option<f64>,
    pub window_kind: WindowKind,
    pub window_length: usize,
    pub phi1: Option<usize>,
    pub phi2: Option<usize>,
    pub k_threshold: usize,
    pub eta: f64,
    pub t1: f64,
    pub t2: f64,
    pub layer_threshold: usize,
    pub seed: u64,
    /// Frame counts swept by `verify-theorem`.
    pub sizes: Vec<usize>,
    /// Frame count for `synth`.
    pub frames: usize,
    /// Logit decay rate of the synthetic homogeneous kernel.
    pub decay: f64,
    /// Largest absolute synthetic value.
    pub value_bound: f64,
    /// Amplitude of the synthetic high-frequency tone.
    pub hf_amplitude: f64,
    /// Bin of the synthetic tone; `None` means Nyquist.
    pub hf_bin: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            alpha: 6.0,
            corner_size: None,
            corner_penalty: None,
            window_kind: WindowKind::Blackman,
            window_length: 9,
            phi1: None,
            phi2: None,
            k_threshold: 5,
            eta: 0.9,
            t1: 0.0,
            t2: 400.0,
            layer_threshold: 7,
            seed: 0,
            sizes: vec![32, 64, 128, 256],
            frames: 64,
            decay: 1.0,
            value_bound: 1.0,
            hf_amplitude: 0.5,
            hf_bin: None,
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn parse_finite(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(eq) = raw.find('=') else {
                return Err(Error::parse(line_no, 1, "expected key = value"));
            };
            let key = raw[..eq].trim();
            let value = raw[eq + 1..].trim();
            if let Some(&prev) = seen.iter().find(|k| **k == key) {
                return Err(Error::parse(line_no, 1, format!("duplicate key {prev}")));
            }
            config.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::parse(line_no, raw.find(key).unwrap_or(0) + 1, msg),
                other => other,
            })?;
            seen.push(key);
        }
        config.validate()?;
        Ok(config)
    }

    /// Set one key from its textual value. Cross-key constraints are checked
    /// by [`Config::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => {
                let v = parse_finite(key, value)?;
                if v < 0.0 {
                    return Err(bad(key, value, "must be >= 0"));
                }
                self.alpha = v;
            }
            "corner_size" => self.corner_size = parse_optional(key, value)?,
            "corner_penalty" => {
                let v: Option<f64> = parse_optional(key, value)?;
                if let Some(b) = v {
                    if !(b.is_finite() && b >= 0.0) {
                        return Err(bad(key, value, "must be finite and >= 0"));
                    }
                }
                self.corner_penalty = v;
            }
            "window.kind" => self.window_kind = value.parse().map_err(|e| bad(key, value, e))?,
            "window.length" => {
                let v: usize = parse_num(key, value)?;
                if v == 0 {
                    return Err(bad(key, value, "must be >= 1"));
                }
                self.window_length = v;
            }
            "phi1" => self.phi1 = parse_optional(key, value)?,
            "phi2" => self.phi2 = parse_optional(key, value)?,
            "k_threshold" => {
                let v: usize = parse_num(key, value)?;
                if v == 0 {
                    return Err(bad(key, value, "must be >= 1"));
                }
                self.k_threshold = v;
            }
            "eta" => {
                let v = parse_finite(key, value)?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(bad(key, value, "must lie in (0, 1)"));
                }
                self.eta = v;
            }
            "t1" => self.t1 = parse_finite(key, value)?,
            "t2" => self.t2 = parse_finite(key, value)?,
            "layer_threshold" => self.layer_threshold = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "sizes" => {
                let sizes = value
                    .split(',')
                    .map(|s| parse_num::<usize>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if sizes.is_empty() || sizes.iter().any(|&n| n < 2) {
                    return Err(bad(key, value, "need one or more sizes, each >= 2"));
                }
                self.sizes = sizes;
            }
            "frames" => {
                let v: usize = parse_num(key, value)?;
                if v < 2 {
                    return Err(bad(key, value, "must be >= 2"));
                }
                self.frames = v;
            }
            "decay" => {
                let v = parse_finite(key, value)?;
                if v < 0.0 {
                    return Err(bad(key, value, "must be >= 0"));
                }
                self.decay = v;
            }
            "value_bound" => {
                let v = parse_finite(key, value)?;
                if v <= 0.0 {
                    return Err(bad(key, value, "must be > 0"));
                }
                self.value_bound = v;
            }
            "hf_amplitude" => {
                let v = parse_finite(key, value)?;
                if v <= 0.0 {
                    return Err(bad(key, value, "must be > 0"));
                }
                self.hf_amplitude = v;
            }
            "hf_bin" => self.hf_bin = parse_optional(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?}; expected one of {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Apply `(key, value)` overrides, then re-check cross-key constraints.
    pub fn with_overrides<'a>(
        mut self,
        overrides: impl IntoIterator<Item = (&'a str, String)>,
    ) -> Result<Self> {
        for (key, value) in overrides {
            self.set(key, &value)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1 > self.t2 {
            return Err(Error::Config(format!(
                "t1 = {} exceeds t2 = {}",
                self.t1, self.t2
            )));
        }
        if let (Some(lo), Some(hi)) = (self.phi1, self.phi2) {
            if lo >= hi {
                return Err(Error::Config(format!(
                    "phi1 = {lo} must be below phi2 = {hi}"
                )));
            }
        }
        if self.hf_amplitude > self.value_bound {
            return Err(Error::Config(format!(
                "hf_amplitude = {} exceeds value_bound = {}",
                self.hf_amplitude, self.value_bound
            )));
        }
        if self.hf_bin == Some(0) {
            return Err(Error::Config("hf_bin must be >= 1".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<Window> {
        make_window(self.window_kind, self.window_length)
    }

    /// Frequency band for rows of `padded_len` samples, filling unset ends
    /// from the default band.
    pub fn band(&self, padded_len: usize) -> Result<Option<FrequencyBand>> {
        if self.phi1.is_none() && self.phi2.is_none() {
            return Ok(None);
        }
        let default = FrequencyBand::default_for(padded_len);
        let band = FrequencyBand {
            low: self.phi1.unwrap_or(default.low),
            high: self.phi2.unwrap_or(default.high),
        };
        band.validate(padded_len)?;
        Ok(Some(band))
    }

    pub fn tiara_params(&self, padded_len: usize) -> Result<TiaraParams> {
        let mut params = TiaraParams::new(self.window()?, self.alpha);
        params.band = self.band(padded_len)?;
        params.corner_size = self.corner_size;
        params.corner_penalty = self.corner_penalty;
        Ok(params)
    }
}
