//! Decay-curve fitting: echo decays (single and stretched exponential),
//! inversion recovery, local rate profiles, and `T2` versus cycle-time sweeps.

mod fit;
mod sweep;

pub use fit::{fit_decay, fit_inversion_recovery, DecayFit, DecayModel, FitParameter};
pub use sweep::{
    bangbang_decay, hahn_decay, sweep_csv, sweep_t2_vs_tauc, SweepConfig, SweepRow, SweepStatus,
    SWEEP_HEADER,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampled decay: strictly increasing times (s), amplitudes, optional
/// per-point standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    #[serde(rename = "times_s")]
    pub times: Vec<f64>,
    pub amplitudes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(times: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        let c = Self {
            times,
            amplitudes,
            sigma: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        self.sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    /// Samples `f` at the given times.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let amplitudes = times.iter().map(|&t| f(t)).collect();
        Self::new(times, amplitudes)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.amplitudes.len() {
            return Err(Error::Data(format!(
                "{} times but {} amplitudes",
                self.times.len(),
                self.amplitudes.len()
            )));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.times.len() {
                return Err(Error::Data("sigma column length differs from times".into()));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Data("sigma values must be positive and finite".into()));
            }
        }
        if self.times.iter().chain(&self.amplitudes).any(|v| !v.is_finite()) {
            return Err(Error::Data("times and amplitudes must be finite".into()));
        }
        if let Some(k) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("times not strictly increasing at row {}", k + 2)));
        }
        Ok(())
    }

    /// Parses `time_s,amplitude[,sigma]` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::Data("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let with_sigma = match cols.as_slice() {
            ["time_s", "amplitude"] => false,
            ["time_s", "amplitude", "sigma"] => true,
            _ => {
                return Err(Error::Data(format!(
                    "expected header `time_s,amplitude[,sigma]`, found `{header}`"
                )))
            }
        };
        let (mut t, mut a, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Data(format!("line {}: expected {} fields", n + 1, cols.len())));
            }
            let num = |k: usize| -> Result<f64> {
                fields[k]
                    .parse()
                    .map_err(|_| Error::Data(format!("line {}: `{}` is not a number", n + 1, fields[k])))
            };
            t.push(num(0)?);
            a.push(num(1)?);
            if with_sigma {
                s.push(num(2)?);
            }
        }
        let c = Self::new(t, a)?;
        if with_sigma {
            c.with_sigma(s)
        } else {
            Ok(c)
        }
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.sigma.is_some() { "time_s,amplitude,sigma\n" } else { "time_s,amplitude\n" });
        for k in 0..self.len() {
            let _ = write!(out, "{:?},{:?}", self.times[k], self.amplitudes[k]);
            if let Some(s) = &self.sigma {
                let _ = write!(out, ",{:?}", s[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// Local decay rates from sliding-window log-linear regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    #[serde(rename = "centers_s")]
    pub centers: Vec<f64>,
    #[serde(rename = "rates_per_s")]
    pub rates: Vec<f64>,
    /// Start indices of windows skipped for non-positive amplitudes.
    pub skipped: Vec<usize>,
}

/// Least-squares line through `(x, y)`: returns (slope, intercept).
pub(crate) fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `−d ln A/dt` over every run of `window` consecutive points.
pub fn rate_profile(curve: &DecayCurve, window: usize) -> Result<RateProfile> {
    curve.validate()?;
    if window < 3 {
        return Err(Error::InvalidParameter(format!("window must be >= 3, got {window}")));
    }
    if curve.len() < window {
        return Err(Error::InvalidParameter(format!(
            "window {window} longer than the curve ({} points)",
            curve.len()
        )));
    }
    let mut profile = RateProfile {
        centers: Vec::new(),
        rates: Vec::new(),
        skipped: Vec::new(),
    };
    for start in 0..=curve.len() - window {
        let t = &curve.times[start..start + window];
        let a = &curve.amplitudes[start..start + window];
        if a.iter().any(|v| *v <= 0.0) {
            profile.skipped.push(start);
            continue;
        }
        let ln: Vec<f64> = a.iter().map(|v| v.ln()).collect();
        let (slope, _) = linear_regression(t, &ln);
        profile.centers.push(t.iter().sum::<f64>() / window as f64);
        profile.rates.push(-slope);
    }
    Ok(profile)
}

/// First time at which `amplitude/reference` falls to `1/e`, interpolating
/// `ln A` linearly between samples. `None` if it never does.
pub fn one_over_e_time(curve: &DecayCurve, reference: f64) -> Option<f64> {
    let target = reference * (-1.0f64).exp();
    if curve.amplitudes.first().is_some_and(|&a| a <= target) {
        return curve.times.first().copied();
    }
    curve.amplitudes.windows(2).enumerate().find_map(|(k, w)| {
        (w[1] <= target).then(|| {
            let (t0, t1) = (curve.times[k], curve.times[k + 1]);
            if w[0] > 0.0 && w[1] > 0.0 {
                let f = (w[0].ln() - target.ln()) / (w[0].ln() - w[1].ln());
                t0 + f * (t1 - t0)
            } else {
                t0 + (w[0] - target) / (w[0] - w[1]) * (t1 - t0)
            }
        })
    })
}
