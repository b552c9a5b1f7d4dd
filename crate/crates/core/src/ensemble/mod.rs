//! Inhomogeneously broadened ensembles driven by pulse programs.

mod export;
mod noise;
mod quadrature;
mod run;

pub use export::{result_json, trajectory_csv, RESULT_SCHEMA, TRAJECTORY_HEADER};
pub use noise::{generate_ou_trajectory, member_seed, NoiseKind, NoiseModel, NoiseStream};
pub use quadrature::gauss_hermite;
pub use run::{
    echo_amplitude, run_program, simulate, Acquisition, EchoAmplitude, SimContext, SimOptions,
    SimulationResult,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FWHM of a Gaussian in units of its standard deviation, `2·√(2 ln 2)`.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Shape of the static detuning distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian {
        #[serde(rename = "fwhm_hz")]
        fwhm: f64,
    },
    Lorentzian {
        #[serde(rename = "fwhm_hz")]
        fwhm: f64,
    },
    /// Fixed list of detunings, equally weighted. `size` is ignored.
    Explicit {
        #[serde(rename = "detunings_hz")]
        detunings: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    MonteCarlo { seed: u64 },
    /// Gauss–Hermite nodes and weights; Gaussian lines only.
    GaussQuadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub size: usize,
    pub distribution: Distribution,
    pub sampling: Sampling,
    /// Log-normal spread of per-member `t2` (standard deviation of `ln t2`).
    /// Zero gives every member the same `t2`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub t2_log_spread: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl EnsembleSpec {
    pub fn gaussian_quadrature(fwhm: f64, size: usize) -> Self {
        Self {
            size,
            distribution: Distribution::Gaussian { fwhm },
            sampling: Sampling::GaussQuadrature,
            t2_log_spread: 0.0,
        }
    }

    pub fn gaussian_monte_carlo(fwhm: f64, size: usize, seed: u64) -> Self {
        Self {
            size,
            distribution: Distribution::Gaussian { fwhm },
            sampling: Sampling::MonteCarlo { seed },
            t2_log_spread: 0.0,
        }
    }

    pub fn explicit(detunings: Vec<f64>) -> Self {
        Self {
            size: detunings.len(),
            distribution: Distribution::Explicit { detunings },
            sampling: Sampling::MonteCarlo { seed: 0 },
            t2_log_spread: 0.0,
        }
    }

    /// A single on-resonance spin.
    pub fn single() -> Self {
        Self::explicit(vec![0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 1 {
            return Err(Error::InvalidParameter("ensemble size must be >= 1".into()));
        }
        match &self.distribution {
            Distribution::Gaussian { fwhm } | Distribution::Lorentzian { fwhm } => {
                if !(*fwhm > 0.0 && fwhm.is_finite()) {
                    return Err(Error::InvalidParameter(format!("fwhm must be > 0, got {fwhm}")));
                }
            }
            Distribution::Explicit { detunings } => {
                if detunings.is_empty() || detunings.iter().any(|d| !d.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "explicit detunings must be a non-empty list of finite values".into(),
                    ));
                }
            }
        }
        if self.sampling == Sampling::GaussQuadrature
            && !matches!(self.distribution, Distribution::Gaussian { .. })
        {
            return Err(Error::InvalidParameter(
                "gauss_quadrature sampling requires a gaussian distribution".into(),
            ));
        }
        if !(self.t2_log_spread >= 0.0 && self.t2_log_spread.is_finite()) {
            return Err(Error::InvalidParameter("t2_log_spread must be >= 0".into()));
        }
        Ok(())
    }
}

/// Static detunings (Hz) with their quadrature weights (summing to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Members {
    pub detunings: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Members {
    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    /// `1/Σw²`: the member count for equal weights.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn equal(detunings: Vec<f64>) -> Self {
        let w = 1.0 / detunings.len() as f64;
        let weights = vec![w; detunings.len()];
        Self { detunings, weights }
    }
}

/// Draws (or places) the ensemble's static detunings. Deterministic for a
/// given specification.
pub fn sample_detunings(spec: &EnsembleSpec) -> Result<Members> {
    spec.validate()?;
    Ok(match (&spec.distribution, spec.sampling) {
        (Distribution::Explicit { detunings }, _) => Members::equal(detunings.clone()),
        (Distribution::Gaussian { fwhm }, Sampling::GaussQuadrature) => {
            let sigma = fwhm / GAUSSIAN_FWHM_PER_SIGMA;
            let (x, w) = gauss_hermite(spec.size);
            Members {
                detunings: x.into_iter().map(|x| x * sigma).collect(),
                weights: w,
            }
        }
        (Distribution::Gaussian { fwhm }, Sampling::MonteCarlo { seed }) => {
            let sigma = fwhm / GAUSSIAN_FWHM_PER_SIGMA;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Members::equal(
                (0..spec.size)
                    .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        }
        (Distribution::Lorentzian { fwhm }, Sampling::MonteCarlo { seed }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cauchy = Cauchy::new(0.0, fwhm / 2.0)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Members::equal((0..spec.size).map(|_| cauchy.sample(&mut rng)).collect())
        }
        (Distribution::Lorentzian { .. }, Sampling::GaussQuadrature) => unreachable!("validated"),
    })
}
