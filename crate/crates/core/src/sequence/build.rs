//! Canonical measurement sequences and the Bang-Bang cycling criterion.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::{Event, PulseProgram};
use crate::bloch::PulseEvent;
use crate::error::{Error, Result};

/// How template pulses are realized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PulseSpec {
    /// Instantaneous rotations.
    #[default]
    Hard,
    /// Rectangular pulses at the given Rabi frequency; the duration is chosen
    /// so that the on-resonance area is the nominal one.
    Finite {
        #[serde(rename = "rabi_hz")]
        rabi: f64,
    },
}

impl PulseSpec {
    pub fn pulse(&self, area: f64, phase: f64) -> PulseEvent {
        match *self {
            PulseSpec::Hard => PulseEvent::hard(area, phase),
            PulseSpec::Finite { rabi } => PulseEvent::finite_with_area(rabi, area, phase),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PulseSpec::Hard => Ok(()),
            PulseSpec::Finite { rabi } if rabi > 0.0 && rabi.is_finite() => Ok(()),
            PulseSpec::Finite { rabi } => Err(Error::InvalidParameter(format!(
                "rabi frequency must be > 0, got {rabi}"
            ))),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

/// Two-pulse (Hahn) echo: π/2 — τ — π — τ — acquire `echo`.
pub fn build_hahn_echo(tau: f64, pulses: PulseSpec) -> Result<PulseProgram> {
    positive("tau", tau)?;
    pulses.validate()?;
    PulseProgram::new(vec![
        Event::Pulse(pulses.pulse(FRAC_PI_2, 0.0)),
        Event::Wait(tau),
        Event::Pulse(pulses.pulse(PI, 0.0)),
        Event::Wait(tau),
        Event::Acquire("echo".into()),
    ])
}

/// Inversion recovery: π — delay — π/2 — acquire `readout`.
///
/// The readout pulse has phase π/2, which maps `+z` onto `+x`, so the mean
/// `x` at the acquire equals the longitudinal component just before it.
pub fn build_inversion_recovery(delay: f64, pulses: PulseSpec) -> Result<PulseProgram> {
    positive("delay", delay)?;
    pulses.validate()?;
    PulseProgram::new(vec![
        Event::Pulse(pulses.pulse(PI, 0.0)),
        Event::Wait(delay),
        Event::Pulse(pulses.pulse(FRAC_PI_2, FRAC_PI_2)),
        Event::Acquire("readout".into()),
    ])
}

/// Where the Bang-Bang acquire is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BangBangReadout {
    /// At the echo: the last free interval is shortened so that the static
    /// phase picked up during the initial delay is refocused. Needs
    /// `tau1 <= tau_c`; total length is `2·N·tau_c`.
    #[default]
    Echo,
    /// Straight after the last complete cycle; total length
    /// `tau1 + 2·N·tau_c`. Static dephasing from the initial delay remains.
    EndOfCycles,
}

/// Parameters of a Bang-Bang decoupling measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BangBangParams {
    #[serde(rename = "tau1_s")]
    pub tau1: f64,
    #[serde(rename = "tau_c_s")]
    pub tau_c: f64,
    pub n_cycles: u32,
    #[serde(default = "default_initial_area", rename = "initial_area_rad")]
    pub initial_area: f64,
    #[serde(default)]
    pub readout: BangBangReadout,
    /// Whether each π,−π pair is followed by a `tau_c` wait.
    #[serde(default = "default_true")]
    pub trailing_wait: bool,
    /// Acquire at every echo rather than only the last one (echo readout only).
    #[serde(default)]
    pub acquire_each_cycle: bool,
}

fn default_initial_area() -> f64 {
    FRAC_PI_2
}

fn default_true() -> bool {
    true
}

impl BangBangParams {
    pub fn new(tau1: f64, tau_c: f64, n_cycles: u32) -> Self {
        Self {
            tau1,
            tau_c,
            n_cycles,
            initial_area: FRAC_PI_2,
            readout: BangBangReadout::Echo,
            trailing_wait: true,
            acquire_each_cycle: false,
        }
    }

    pub fn with_readout(mut self, readout: BangBangReadout) -> Self {
        self.readout = readout;
        self
    }

    pub fn with_cycles(mut self, n_cycles: u32) -> Self {
        self.n_cycles = n_cycles;
        self
    }

    pub fn validate(&self) -> Result<()> {
        positive("tau1", self.tau1)?;
        positive("tau_c", self.tau_c)?;
        positive("initial_area", self.initial_area)?;
        if self.readout == BangBangReadout::Echo && self.n_cycles > 0 && self.echo_offset() < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "echo readout needs the final interval {} s to be non-negative (tau1 too long for tau_c)",
                self.echo_offset()
            )));
        }
        Ok(())
    }

    /// Length of the last free interval that lands the acquire on the echo.
    fn echo_offset(&self) -> f64 {
        if self.trailing_wait {
            self.tau_c - self.tau1
        } else {
            self.n_cycles as f64 * self.tau_c - self.tau1
        }
    }
}

/// Bang-Bang sequence: initial pulse — τ1 — N × [π(0) — τc — π(π) — τc] — acquire.
///
/// The −π pulse is a π pulse with its phase advanced by π. With
/// [`BangBangReadout::Echo`] the trailing wait of the last cycle is
/// shortened to `tau_c - tau1`, which is where the ensemble rephases.
pub fn build_bangbang(p: &BangBangParams, pulses: PulseSpec) -> Result<PulseProgram> {
    p.validate()?;
    pulses.validate()?;
    let pi = pulses.pulse(PI, 0.0);
    let minus_pi = pulses.pulse(PI, PI);
    let mut events = vec![
        Event::Pulse(pulses.pulse(p.initial_area, 0.0)),
        Event::Wait(p.tau1),
    ];
    let pair = |trailing: Option<f64>| {
        let mut v = vec![Event::Pulse(pi), Event::Wait(p.tau_c), Event::Pulse(minus_pi)];
        if let Some(w) = trailing {
            v.push(Event::Wait(w));
        }
        v
    };
    let trailing = p.trailing_wait.then_some(p.tau_c);
    let n = p.n_cycles;
    match (p.readout, n) {
        (_, 0) => {}
        (BangBangReadout::EndOfCycles, n) => {
            events.push(Event::Repeat { count: n, body: pair(trailing) });
        }
        (BangBangReadout::Echo, n) if p.acquire_each_cycle && p.trailing_wait => {
            let mut body = pair(Some(p.echo_offset()));
            body.push(Event::Acquire("echo".into()));
            let mut full = body.clone();
            full.push(Event::Wait(p.tau1));
            if n > 1 {
                events.push(Event::Repeat { count: n - 1, body: full });
            }
            events.extend(body);
            return PulseProgram::new(events);
        }
        (BangBangReadout::Echo, n) => {
            if n > 1 {
                events.push(Event::Repeat { count: n - 1, body: pair(trailing) });
            }
            events.extend(pair(None));
            events.push(Event::Wait(p.echo_offset()));
        }
    }
    events.push(Event::Acquire("echo".into()));
    PulseProgram::new(events)
}

/// Cutoff frequency of the dephasing bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathCutoff {
    #[serde(rename = "omega_c_rad_per_s")]
    pub omega_c: f64,
}

impl BathCutoff {
    pub fn new(omega_c: f64) -> Result<Self> {
        positive("omega_c", omega_c)?;
        Ok(Self { omega_c })
    }

    /// Cutoff of a bath with correlation time `tau_b`.
    pub fn from_correlation_time(tau_b: f64) -> Result<Self> {
        positive("tau_b", tau_b)?;
        Self::new(1.0 / tau_b)
    }
}

/// Outcome of the `ω_c·τ_c ≤ 1` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BangBangCheck {
    Pass { product: f64 },
    Warn { product: f64 },
}

impl BangBangCheck {
    pub fn product(&self) -> f64 {
        match *self {
            BangBangCheck::Pass { product } | BangBangCheck::Warn { product } => product,
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self, BangBangCheck::Pass { .. })
    }
}

/// Decoupling is effective when the pulse spacing is short against the bath
/// correlation time: passes iff `ω_c·τ_c ≤ 1` (boundary inclusive).
pub fn validate_bangbang(cutoff: BathCutoff, tau_c: f64) -> BangBangCheck {
    let product = cutoff.omega_c * tau_c;
    if product <= 1.0 {
        BangBangCheck::Pass { product }
    } else {
        BangBangCheck::Warn { product }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn hahn_echo_duration() {
        let p = build_hahn_echo(10e-3, PulseSpec::Hard).unwrap();
        assert!((p.duration() - 20e-3).abs() < 1e-15);
        let f = build_hahn_echo(10e-3, PulseSpec::Finite { rabi: 1e5 }).unwrap();
        assert!((f.duration() - (20e-3 + 2.5e-6 + 5e-6)).abs() < 1e-15);
        assert!(build_hahn_echo(0.0, PulseSpec::Hard).is_err());
    }

    #[test]
    fn bangbang_durations() {
        let p = build_bangbang(&BangBangParams::new(1.2e-3, 2e-3, 1000), PulseSpec::Hard).unwrap();
        assert!((p.duration() - 4.0).abs() < 1e-9);
        let literal = BangBangParams::new(1.2e-3, 2e-3, 1000).with_readout(BangBangReadout::EndOfCycles);
        let p = build_bangbang(&literal, PulseSpec::Hard).unwrap();
        assert!((p.duration() - 4.0012).abs() < 1e-9);

        let literal = BangBangParams::new(1.2e-3, 7.5e-3, 1).with_readout(BangBangReadout::EndOfCycles);
        let p = build_bangbang(&literal, PulseSpec::Hard).unwrap();
        assert!((p.duration() - 16.2e-3).abs() < 1e-15);
        let echo = build_bangbang(&BangBangParams::new(1.2e-3, 7.5e-3, 1), PulseSpec::Hard).unwrap();
        assert!((echo.duration() - 15.0e-3).abs() < 1e-15);
    }

    #[test]
    fn bangbang_zero_cycles_is_free_induction() {
        for readout in [BangBangReadout::Echo, BangBangReadout::EndOfCycles] {
            let p = build_bangbang(
                &BangBangParams::new(1.2e-3, 2e-3, 0).with_readout(readout),
                PulseSpec::Hard,
            )
            .unwrap();
            assert_eq!(
                p.events(),
                &[
                    Event::Pulse(PulseEvent::hard(FRAC_PI_2, 0.0)),
                    Event::Wait(1.2e-3),
                    Event::Acquire("echo".into())
                ]
            );
        }
    }

    #[test]
    fn bangbang_pulse_phases_alternate() {
        let p = build_bangbang(&BangBangParams::new(1e-3, 2e-3, 3), PulseSpec::Hard).unwrap();
        let phases: Vec<f64> = p
            .expand()
            .iter()
            .filter_map(|e| match e {
                Event::Pulse(p) => Some(p.phase),
                _ => None,
            })
            .collect();
        assert_eq!(phases, vec![0.0, 0.0, PI, 0.0, PI, 0.0, PI]);
    }

    #[test]
    fn echo_readout_requires_short_initial_delay() {
        assert!(build_bangbang(&BangBangParams::new(3e-3, 2e-3, 5), PulseSpec::Hard).is_err());
        let literal = BangBangParams::new(3e-3, 2e-3, 5).with_readout(BangBangReadout::EndOfCycles);
        assert!(build_bangbang(&literal, PulseSpec::Hard).is_ok());
    }

    #[test]
    fn acquire_each_cycle_places_one_echo_per_cycle() {
        let mut params = BangBangParams::new(1e-3, 2e-3, 5);
        params.acquire_each_cycle = true;
        let p = build_bangbang(&params, PulseSpec::Hard).unwrap();
        let mut times = Vec::new();
        let mut t = 0.0;
        p.for_each_step(|s| match s {
            crate::sequence::Step::Wait(d) => t += d,
            crate::sequence::Step::Acquire(_) => times.push(t),
            _ => {}
        });
        assert_eq!(times.len(), 5);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 2.0 * (k + 1) as f64 * 2e-3).abs() < 1e-15);
        }
        assert!((p.duration() - 20e-3).abs() < 1e-15);
    }

    #[test]
    fn bath_criterion() {
        let slow = BathCutoff::new(TAU / 0.05).unwrap();
        let c = validate_bangbang(slow, 2e-3);
        assert!(c.passed());
        assert!((c.product() - 0.251_327_412_287_183_5).abs() < 1e-12);

        let c = validate_bangbang(BathCutoff::new(100.0).unwrap(), 20e-3);
        assert_eq!(c, BangBangCheck::Warn { product: 2.0 });

        assert_eq!(validate_bangbang(slow, 0.0), BangBangCheck::Pass { product: 0.0 });
        // Boundary is inclusive.
        assert!(validate_bangbang(BathCutoff::new(100.0).unwrap(), 0.01).passed());
        assert!(!validate_bangbang(BathCutoff::new(100.0).unwrap(), 0.010_000_000_001).passed());
    }
}
