//! Closed-form single-spin evolution in the rotating frame.
//!
//! Conventions used throughout the crate:
//!
//! * rotations are right-handed;
//! * a pulse of phase `φ` rotates about `(cos φ, sin φ, 0)`;
//! * free precession at detuning `Δ` (Hz) rotates about `+z` by `2πΔt`.
//!
//! Nothing here integrates an ODE. Every propagator is an explicit rotation
//! (plus exponential relaxation for free evolution), so results are exact up
//! to floating-point rounding.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bloch vector of a two-level system in the rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub const PLUS_Z: BlochState = BlochState::new(0.0, 0.0, 1.0);
    pub const MINUS_Z: BlochState = BlochState::new(0.0, 0.0, -1.0);
    pub const PLUS_X: BlochState = BlochState::new(1.0, 0.0, 0.0);
    pub const PLUS_Y: BlochState = BlochState::new(0.0, 1.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    /// Magnitude of the component in the coherence (x, y) plane.
    pub fn transverse(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &BlochState) -> f64 {
        (self.as_vector() - other.as_vector()).norm()
    }
}

impl From<Vector3<f64>> for BlochState {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl From<[f64; 3]> for BlochState {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// A proper rotation of the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(pub Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Right-handed rotation by `angle` about the (not necessarily normalized) `axis`.
    pub fn about_axis(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let u = axis / n;
        let (s, c) = angle.sin_cos();
        let k = Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0);
        Rotation(Matrix3::identity() + k * s + k * k * (1.0 - c))
    }

    /// Rotation about `+z`; cheaper than the general form.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn hard_pulse(area: f64, phase: f64) -> Self {
        let (s, c) = phase.sin_cos();
        Self::about_axis(Vector3::new(c, s, 0.0), area)
    }

    pub fn finite_pulse(rabi: f64, duration: f64, phase: f64, detuning: f64) -> Self {
        let (s, c) = phase.sin_cos();
        let effective = rabi.hypot(detuning);
        Self::about_axis(
            Vector3::new(rabi * c, rabi * s, detuning),
            TAU * effective * duration,
        )
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Rotation) -> Rotation {
        Rotation(next.0 * self.0)
    }

    pub fn apply(&self, state: BlochState) -> BlochState {
        (self.0 * state.as_vector()).into()
    }
}

/// How a pulse is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PulseShape {
    /// Instantaneous rotation of the given area (rad).
    Hard { area: f64 },
    /// Constant-amplitude drive of Rabi frequency `rabi` (Hz) for `duration` (s).
    Finite { rabi: f64, duration: f64 },
}

/// A single RF pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    pub shape: PulseShape,
    pub phase: f64,
}

impl PulseEvent {
    pub fn hard(area: f64, phase: f64) -> Self {
        Self {
            shape: PulseShape::Hard { area },
            phase,
        }
    }

    pub fn finite(rabi: f64, duration: f64, phase: f64) -> Self {
        Self {
            shape: PulseShape::Finite { rabi, duration },
            phase,
        }
    }

    /// Finite pulse with the duration that gives `area` on resonance.
    pub fn finite_with_area(rabi: f64, area: f64, phase: f64) -> Self {
        Self::finite(rabi, area / (TAU * rabi), phase)
    }

    pub fn duration(&self) -> f64 {
        match self.shape {
            PulseShape::Hard { .. } => 0.0,
            PulseShape::Finite { duration, .. } => duration,
        }
    }

    /// Nominal (on-resonance) rotation angle.
    pub fn nominal_area(&self) -> f64 {
        match self.shape {
            PulseShape::Hard { area } => area,
            PulseShape::Finite { rabi, duration } => TAU * rabi * duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.phase.is_finite()
            && match self.shape {
                PulseShape::Hard { area } => area.is_finite() && area > 0.0,
                PulseShape::Finite { rabi, duration } => {
                    rabi.is_finite() && rabi > 0.0 && duration.is_finite() && duration > 0.0
                }
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid pulse {self:?}")))
        }
    }

    /// Propagator of this pulse for a spin at `detuning` (Hz). Hard pulses
    /// ignore the detuning.
    pub fn rotation(&self, detuning: f64) -> Rotation {
        match self.shape {
            PulseShape::Hard { area } => Rotation::hard_pulse(area, self.phase),
            PulseShape::Finite { rabi, duration } => {
                Rotation::finite_pulse(rabi, duration, self.phase, detuning)
            }
        }
    }
}

/// Longitudinal and transverse relaxation. `None` means infinite.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelaxationParams {
    #[serde(default, rename = "t1_s")]
    pub t1: Option<f64>,
    #[serde(default, rename = "t2_s")]
    pub t2: Option<f64>,
    #[serde(default)]
    pub z_equilibrium: f64,
}

impl RelaxationParams {
    /// No relaxation at all.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(t1: Option<f64>, t2: Option<f64>, z_equilibrium: f64) -> Result<Self> {
        let r = Self {
            t1,
            t2,
            z_equilibrium,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("t1", self.t1), ("t2", self.t2)] {
            if let Some(t) = t {
                if !(t > 0.0) || t.is_nan() {
                    return Err(Error::InvalidParameter(format!("{name} must be > 0, got {t}")));
                }
            }
        }
        if let (Some(t1), Some(t2)) = (self.t1, self.t2) {
            if t2 > 2.0 * t1 {
                return Err(Error::InvalidParameter(format!(
                    "t2 ({t2} s) must not exceed 2·t1 ({} s)",
                    2.0 * t1
                )));
            }
        }
        if !(-1.0..=1.0).contains(&self.z_equilibrium) {
            return Err(Error::InvalidParameter(format!(
                "z_equilibrium must lie in [-1, 1], got {}",
                self.z_equilibrium
            )));
        }
        Ok(())
    }

    pub fn is_disabled(&self) -> bool {
        self.t1.is_none() && self.t2.is_none()
    }

    /// Same parameters with the transverse time scaled by `factor`.
    pub fn with_t2_scaled(&self, factor: f64) -> Self {
        Self {
            t2: self.t2.map(|t| t * factor),
            ..*self
        }
    }
}

/// Hard pulse: right-handed rotation by `area` about `(cos phase, sin phase, 0)`.
pub fn apply_hard_pulse(state: BlochState, area: f64, phase: f64) -> BlochState {
    Rotation::hard_pulse(area, phase).apply(state)
}

/// Finite rectangular pulse with off-resonance `detuning`; relaxation during
/// the pulse is neglected.
pub fn apply_finite_pulse(
    state: BlochState,
    rabi: f64,
    duration: f64,
    phase: f64,
    detuning: f64,
) -> BlochState {
    Rotation::finite_pulse(rabi, duration, phase, detuning).apply(state)
}

/// Free precession by an explicit angle (rad) with relaxation over `duration`.
pub fn evolve_free_angle(
    state: BlochState,
    angle: f64,
    duration: f64,
    relax: &RelaxationParams,
) -> BlochState {
    let (s, c) = angle.sin_cos();
    let mut x = c * state.x - s * state.y;
    let mut y = s * state.x + c * state.y;
    let mut z = state.z;
    if let Some(t2) = relax.t2 {
        let decay = (-duration / t2).exp();
        x *= decay;
        y *= decay;
    }
    if let Some(t1) = relax.t1 {
        let decay = (-duration / t1).exp();
        z = relax.z_equilibrium + (z - relax.z_equilibrium) * decay;
    }
    BlochState::new(x, y, z)
}

/// Free evolution for `duration` seconds at constant `detuning` (Hz).
pub fn evolve_free(
    state: BlochState,
    duration: f64,
    detuning: f64,
    relax: &RelaxationParams,
) -> BlochState {
    evolve_free_angle(state, TAU * detuning * duration, duration, relax)
}

/// Free evolution under a piecewise-constant detuning trajectory, one
/// sample per step of length `dt`.
pub fn evolve_noisy(
    state: BlochState,
    samples: &[f64],
    dt: f64,
    relax: &RelaxationParams,
) -> Result<BlochState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty detuning trajectory".into()));
    }
    if let Some(k) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteSample(k));
    }
    Ok(samples
        .iter()
        .fold(state, |s, &d| evolve_free(s, dt, d, relax)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: BlochState, b: BlochState, tol: f64) {
        assert!(a.distance(&b) <= tol, "{a:?} vs {b:?}");
    }

    /// Independent rotation oracle: explicit Rodrigues formula for a unit axis.
    fn oracle_rotate(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
        let n = (axis[0].powi(2) + axis[1].powi(2) + axis[2].powi(2)).sqrt();
        let u = [axis[0] / n, axis[1] / n, axis[2] / n];
        let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let (s, c) = angle.sin_cos();
        [0, 1, 2].map(|i| v[i] * c + cross[i] * s + u[i] * dot * (1.0 - c))
    }

    #[test]
    fn pi_pulse_inverts() {
        close(apply_hard_pulse(BlochState::PLUS_Z, PI, 0.0), BlochState::MINUS_Z, 1e-15);
    }

    #[test]
    fn quarter_turn_about_x_sends_z_to_minus_y() {
        close(
            apply_hard_pulse(BlochState::PLUS_Z, FRAC_PI_2, 0.0),
            BlochState::new(0.0, -1.0, 0.0),
            1e-15,
        );
    }

    #[test]
    fn free_precession_quarter_cycle() {
        let out = evolve_free(BlochState::PLUS_X, 0.25e-3, 1e3, &RelaxationParams::none());
        close(out, BlochState::PLUS_Y, 1e-12);
    }

    #[test]
    fn zero_duration_is_identity() {
        let s = BlochState::new(0.3, -0.4, 0.5);
        let relax = RelaxationParams::new(Some(1.0), Some(0.5), 0.2).unwrap();
        assert_eq!(evolve_free(s, 0.0, 1234.0, &relax), s);
    }

    #[test]
    fn pure_t2_decay() {
        let relax = RelaxationParams::new(None, Some(1.0), 0.0).unwrap();
        let out = evolve_free(BlochState::PLUS_X, 1.0, 0.0, &relax);
        close(out, BlochState::new((-1.0f64).exp(), 0.0, 0.0), 1e-15);
    }

    #[test]
    fn t1_relaxes_toward_equilibrium() {
        let relax = RelaxationParams::new(Some(145.0), None, 0.0).unwrap();
        let out = evolve_free(BlochState::MINUS_Z, 145.0, 0.0, &relax);
        assert!((out.z + (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn relaxation_rejects_t2_longer_than_twice_t1() {
        assert!(RelaxationParams::new(Some(1.0), Some(2.5), 0.0).is_err());
        assert!(RelaxationParams::new(Some(1.0), Some(2.0), 0.0).is_ok());
        assert!(RelaxationParams::new(None, None, 1.5).is_err());
    }

    #[test]
    fn finite_pulse_on_resonance_matches_hard_pulse() {
        let s = BlochState::new(0.2, 0.6, -0.3);
        let a = apply_finite_pulse(s, 1e5, 0.5 / 1e5, 0.7, 0.0);
        let b = apply_hard_pulse(s, PI, 0.7);
        close(a, b, 1e-12);
    }

    #[test]
    fn tilted_axis_rotation_matches_oracle() {
        // Δ = Ω, Ω·t = 0.5: angle π√2 about (1,0,1)/√2.
        let rabi = 1e4;
        let out = apply_finite_pulse(BlochState::PLUS_Z, rabi, 0.5 / rabi, 0.0, rabi);
        let expected = oracle_rotate([0.0, 0.0, 1.0], [1.0, 0.0, 1.0], PI * 2f64.sqrt());
        close(out, expected.into(), 1e-12);
        assert!((out.z - 0.366_872_328_979_292_2).abs() < 1e-12, "{}", out.z);

        // Generalized area π: the tilted-axis image of +z has no z component.
        let out = apply_finite_pulse(BlochState::PLUS_Z, rabi, 0.5 / rabi / 2f64.sqrt(), 0.0, rabi);
        assert!(out.z.abs() < 1e-12);
    }

    #[test]
    fn slightly_detuned_pi_pulse_nearly_inverts() {
        let rabi = 100e3;
        let out = apply_finite_pulse(BlochState::PLUS_Z, rabi, 0.5 / rabi, 0.0, 2e3);
        let expected = oracle_rotate([0.0, 0.0, 1.0], [rabi, 0.0, 2e3], PI * (1.0f64 + 4e-4).sqrt());
        close(out, expected.into(), 1e-12);
        assert!(out.z < -0.998);
    }

    #[test]
    fn finite_pulse_converges_to_hard_pulse() {
        let rabi = 100e3;
        for &ratio in &[1e-4, 1e-3, 1e-2, 3e-2, 1e-1, 0.3] {
            for &phase in &[0.0, 1.0, PI] {
                for s in [BlochState::PLUS_Z, BlochState::PLUS_X, BlochState::new(0.0, 0.6, 0.8)] {
                    let a = apply_finite_pulse(s, rabi, 0.5 / rabi, phase, ratio * rabi);
                    let b = apply_hard_pulse(s, PI, phase);
                    assert!(a.distance(&b) <= 10.0 * ratio, "ratio {ratio}: {}", a.distance(&b));
                }
            }
        }
    }

    #[test]
    fn constant_trajectory_equals_single_step() {
        let relax = RelaxationParams::new(Some(3.0), Some(1.0), 0.1).unwrap();
        let s = BlochState::new(0.6, 0.0, 0.8);
        let samples = vec![137.0; 50];
        let a = evolve_noisy(s, &samples, 1e-4, &relax).unwrap();
        let b = evolve_free(s, 50.0 * 1e-4, 137.0, &relax);
        close(a, b, 1e-12);
    }

    #[test]
    fn alternating_trajectory_cancels() {
        let s = BlochState::PLUS_X;
        let samples: Vec<f64> = (0..40).map(|k| if k % 2 == 0 { 321.0 } else { -321.0 }).collect();
        let out = evolve_noisy(s, &samples, 1e-4, &RelaxationParams::none()).unwrap();
        close(out, s, 1e-12);
    }

    #[test]
    fn noisy_rejects_bad_input() {
        let relax = RelaxationParams::none();
        assert_eq!(
            evolve_noisy(BlochState::PLUS_X, &[0.0, f64::NAN], 1e-3, &relax),
            Err(Error::NonFiniteSample(1))
        );
        assert!(evolve_noisy(BlochState::PLUS_X, &[], 1e-3, &relax).is_err());
        assert!(evolve_noisy(BlochState::PLUS_X, &[1.0], 0.0, &relax).is_err());
    }

    fn unit_state() -> impl Strategy<Value = BlochState> {
        (0.0..PI, 0.0..TAU).prop_map(|(theta, phi)| {
            BlochState::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
        })
    }

    proptest! {
        #[test]
        fn pi_then_minus_pi_is_identity(s in unit_state(), phase in 0.0..TAU) {
            let out = apply_hard_pulse(apply_hard_pulse(s, PI, phase), PI, phase + PI);
            prop_assert!(out.distance(&s) < 1e-12);
        }

        #[test]
        fn norm_preserved_without_relaxation(
            s in unit_state(),
            area in 0.0..10.0f64,
            phase in -10.0..10.0f64,
            det in -1e4..1e4f64,
            t in 0.0..1e-2f64,
            rabi in 1e3..1e6f64,
        ) {
            let none = RelaxationParams::none();
            let out = evolve_free(apply_hard_pulse(s, area, phase), t, det, &none);
            let out = apply_finite_pulse(out, rabi, t, phase, det);
            prop_assert!((out.norm() - s.norm()).abs() < 1e-12);
        }

        #[test]
        fn free_evolution_is_a_semigroup(
            s in unit_state(),
            t1 in 0.0..2.0f64,
            t2 in 0.0..2.0f64,
            det in -50.0..50.0f64,
        ) {
            let relax = RelaxationParams::new(Some(4.0), Some(1.5), -0.2).unwrap();
            let a = evolve_free(s, t1 + t2, det, &relax);
            let b = evolve_free(evolve_free(s, t1, det, &relax), t2, det, &relax);
            prop_assert!(a.distance(&b) < 1e-12);
        }

        #[test]
        fn relaxation_keeps_state_inside_ball(
            s in unit_state(),
            shrink in 0.0..1.0f64,
            t in 0.0..10.0f64,
            zeq in -1.0..1.0f64,
        ) {
            let s = BlochState::new(s.x * shrink, s.y * shrink, s.z * shrink);
            let relax = RelaxationParams::new(Some(2.0), Some(1.0), zeq).unwrap();
            let out = evolve_free(s, t, 10.0, &relax);
            prop_assert!(out.norm() <= 1.0 + 1e-9);
        }
    }
}
