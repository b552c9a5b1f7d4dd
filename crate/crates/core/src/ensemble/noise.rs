//! Stochastic detuning noise: Ornstein–Uhlenbeck and random-telegraph
//! processes, sampled on a uniform grid and held constant within each step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Stationary Gaussian process with autocorrelation `σ²·exp(-|τ|/τ_b)`.
    OrnsteinUhlenbeck {
        #[serde(rename = "sigma_hz")]
        sigma: f64,
        #[serde(rename = "tau_b_s")]
        tau_b: f64,
    },
    /// Symmetric two-state jump process between `±amplitude`.
    Telegraph {
        #[serde(rename = "amplitude_hz")]
        amplitude: f64,
        #[serde(rename = "flip_rate_hz")]
        flip_rate: f64,
    },
}

/// Sum of independent noise components sharing a time grid of step `dt`.
/// No components means no noise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub components: Vec<NoiseKind>,
    /// Trajectory resolution; defaults to a hundredth of the fastest
    /// component timescale.
    #[serde(default, rename = "dt_s", skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn ornstein_uhlenbeck(sigma: f64, tau_b: f64) -> Self {
        Self {
            components: vec![NoiseKind::OrnsteinUhlenbeck { sigma, tau_b }],
            dt: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn is_none(&self) -> bool {
        self.components.is_empty()
    }

    fn shortest_timescale(&self) -> Option<f64> {
        self.components
            .iter()
            .map(|c| match *c {
                NoiseKind::OrnsteinUhlenbeck { tau_b, .. } => tau_b,
                NoiseKind::Telegraph { flip_rate, .. } => 1.0 / flip_rate,
            })
            .reduce(f64::min)
    }

    /// Step of the trajectory grid.
    pub fn step(&self) -> f64 {
        self.dt
            .or_else(|| self.shortest_timescale().map(|t| t / 100.0))
            .unwrap_or(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            match *c {
                NoiseKind::OrnsteinUhlenbeck { sigma, tau_b } => {
                    if !(sigma >= 0.0 && sigma.is_finite()) {
                        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
                    }
                    if !(tau_b > 0.0 && tau_b.is_finite()) {
                        return Err(Error::InvalidParameter(format!("tau_b must be > 0, got {tau_b}")));
                    }
                    if self.step() > tau_b / 10.0 * (1.0 + 1e-12) {
                        return Err(Error::InvalidParameter(format!(
                            "dt {} s exceeds tau_b/10 = {} s",
                            self.step(),
                            tau_b / 10.0
                        )));
                    }
                }
                NoiseKind::Telegraph { amplitude, flip_rate } => {
                    if !amplitude.is_finite() || !(flip_rate > 0.0 && flip_rate.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "telegraph needs finite amplitude and flip_rate > 0, got {amplitude}, {flip_rate}"
                        )));
                    }
                }
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-member seed derived from the master seed; independent of how members
/// are scheduled across threads.
pub fn member_seed(master: u64, member: u64) -> u64 {
    mix(master ^ mix(member))
}

#[derive(Debug, Clone)]
enum ComponentState {
    Ou { sigma: f64, decay: f64, kick: f64, value: f64 },
    Telegraph { amplitude: f64, flip: f64, value: f64 },
}

/// A lazily generated noise trajectory. Time only moves forward.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    components: Vec<ComponentState>,
    rng: ChaCha8Rng,
    dt: f64,
    step: u64,
    time: f64,
    value: f64,
}

impl NoiseStream {
    pub fn new(model: &NoiseModel, seed: u64) -> Self {
        let dt = model.step();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let components = model
            .components
            .iter()
            .map(|c| match *c {
                NoiseKind::OrnsteinUhlenbeck { sigma, tau_b } => {
                    let decay = (-dt / tau_b).exp();
                    let kick = sigma * (-(-2.0 * dt / tau_b).exp_m1()).sqrt();
                    let xi: f64 = rng.sample(StandardNormal);
                    ComponentState::Ou { sigma, decay, kick, value: sigma * xi }
                }
                NoiseKind::Telegraph { amplitude, flip_rate } => {
                    let flip = -0.5 * (-2.0 * flip_rate * dt).exp_m1();
                    let value = if rng.random::<bool>() { amplitude } else { -amplitude };
                    ComponentState::Telegraph { amplitude, flip, value }
                }
            })
            .collect();
        let mut s = Self {
            components,
            rng,
            dt,
            step: 0,
            time: 0.0,
            value: 0.0,
        };
        s.value = s.sum();
        s
    }

    fn sum(&self) -> f64 {
        self.components
            .iter()
            .map(|c| match c {
                ComponentState::Ou { value, .. } | ComponentState::Telegraph { value, .. } => *value,
            })
            .sum()
    }

    fn advance(&mut self) {
        for c in &mut self.components {
            match c {
                ComponentState::Ou { sigma, decay, kick, value } => {
                    let xi: f64 = self.rng.sample(StandardNormal);
                    *value = if *sigma == 0.0 { 0.0 } else { *value * *decay + *kick * xi };
                }
                ComponentState::Telegraph { amplitude, flip, value } => {
                    if self.rng.random::<f64>() < *flip {
                        *value = if *value > 0.0 { -*amplitude } else { *amplitude };
                    }
                }
            }
        }
        self.step += 1;
        self.value = self.sum();
    }

    /// Current detuning sample (Hz).
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_silent(&self) -> bool {
        self.components.is_empty()
    }

    /// Integral of the detuning over the next `duration` seconds (Hz·s),
    /// moving the stream forward.
    pub fn integrate(&mut self, duration: f64) -> f64 {
        if self.components.is_empty() {
            self.time += duration;
            return 0.0;
        }
        let end = self.time + duration;
        let mut acc = 0.0;
        while self.time < end {
            let boundary = (self.step + 1) as f64 * self.dt;
            if boundary <= self.time {
                self.advance();
                continue;
            }
            let seg_end = boundary.min(end);
            acc += self.value * (seg_end - self.time);
            self.time = seg_end;
            if seg_end >= boundary {
                self.advance();
            }
        }
        acc
    }

    /// The next `n` grid samples, starting with the current one.
    pub fn take_samples(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.value);
            self.advance();
            self.time = self.step as f64 * self.dt;
        }
        out
    }
}

/// One realization of a single Ornstein–Uhlenbeck component on the grid
/// `k·dt`, covering `duration`. Uses the exact discrete update
/// `x' = x·e^(-dt/τ_b) + σ·√(1 - e^(-2dt/τ_b))·ξ` from a stationary start.
pub fn generate_ou_trajectory(noise: &NoiseModel, duration: f64, member_seed: u64) -> Result<Vec<f64>> {
    match noise.components.as_slice() {
        [NoiseKind::OrnsteinUhlenbeck { .. }] => {}
        _ => {
            return Err(Error::InvalidParameter(
                "expected a single Ornstein-Uhlenbeck component".into(),
            ))
        }
    }
    noise.validate()?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid duration {duration}")));
    }
    let n = ((duration / noise.step()) - 1e-9).ceil().max(1.0) as usize;
    Ok(NoiseStream::new(noise, member_seed).take_samples(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zero_trajectory() {
        let m = NoiseModel::ornstein_uhlenbeck(0.0, 0.05);
        let t = generate_ou_trajectory(&m, 1.0, 7).unwrap();
        assert_eq!(t.len(), 100 * 20);
        assert!(t.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = NoiseModel::ornstein_uhlenbeck(3.0, 0.05);
        let a = generate_ou_trajectory(&m, 0.3, 11).unwrap();
        let b = generate_ou_trajectory(&m, 0.3, 11).unwrap();
        let c = generate_ou_trajectory(&m, 0.3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stream_integral_matches_grid_samples() {
        let m = NoiseModel::ornstein_uhlenbeck(5.0, 0.01);
        let samples = generate_ou_trajectory(&m, 0.01, 3).unwrap();
        let dt = m.step();
        let mut s = NoiseStream::new(&m, 3);
        // Integrate over irregular pieces that straddle grid boundaries.
        let mut total = 0.0;
        for piece in [0.35 * dt, 1.3 * dt, 0.0, 2.35 * dt, 6.0 * dt] {
            total += s.integrate(piece);
        }
        let expected: f64 = samples[..10].iter().map(|x| x * dt).sum();
        assert!((total - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn rejects_dt_too_coarse() {
        let m = NoiseModel::ornstein_uhlenbeck(1.0, 0.05).with_dt(0.01);
        assert!(m.validate().is_err());
        assert!(NoiseModel::ornstein_uhlenbeck(1.0, 0.05).with_dt(0.005).validate().is_ok());
        assert!(generate_ou_trajectory(&NoiseModel::none(), 1.0, 0).is_err());
    }

    #[test]
    fn telegraph_switches_between_two_levels() {
        let m = NoiseModel {
            components: vec![NoiseKind::Telegraph { amplitude: 2.0, flip_rate: 50.0 }],
            dt: Some(1e-4),
        };
        let mut s = NoiseStream::new(&m, 5);
        let xs = s.take_samples(20_000);
        assert!(xs.iter().all(|&x| x == 2.0 || x == -2.0));
        let flips = xs.windows(2).filter(|w| w[0] != w[1]).count() as f64;
        // Expected flips: 20000 · (1 - e^{-2·50·1e-4})/2 ≈ 99.5
        assert!((flips - 99.5).abs() < 40.0, "{flips}");
    }

    #[test]
    fn member_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| member_seed(42, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }
}
