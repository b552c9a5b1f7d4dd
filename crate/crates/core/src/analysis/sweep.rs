use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_decay, DecayCurve, DecayFit, DecayModel};
use crate::bloch::BlochState;
use crate::ensemble::{simulate, SimContext};
use crate::error::{Error, Result};
use crate::sequence::{build_bangbang, build_hahn_echo, BangBangParams, PulseSpec};

pub const SWEEP_HEADER: &str = "tau_c_s,n_cycles,t2_s,t2_sigma_s,one_over_e_s,status,message";

/// Shared settings of a Bang-Bang `T2` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Initial free interval; clamped to `tau_c` for shorter cycle times.
    #[serde(rename = "tau1_s")]
    pub tau1: f64,
    /// Length of every decay record.
    #[serde(rename = "total_time_s")]
    pub total_time: f64,
    #[serde(default)]
    pub pulses: PulseSpec,
    pub simulation: SimContext,
}

impl SweepConfig {
    pub fn new(tau1: f64, total_time: f64, simulation: SimContext) -> Self {
        Self {
            tau1,
            total_time,
            pulses: PulseSpec::Hard,
            simulation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau1", self.tau1), ("total_time", self.total_time)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        self.pulses.validate()?;
        self.simulation.validate()
    }

    /// Bang-Bang parameters for one cycle time: echo readout at every cycle,
    /// `N = ceil(total_time / 2τc)`.
    pub fn bangbang_params(&self, tau_c: f64) -> Result<BangBangParams> {
        if !(tau_c > 0.0 && tau_c.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau_c must be > 0, got {tau_c}")));
        }
        let n = (self.total_time / (2.0 * tau_c) - 1e-9).ceil().max(1.0);
        if n > u32::MAX as f64 {
            return Err(Error::InvalidParameter(format!("tau_c {tau_c} needs too many cycles")));
        }
        let mut p = BangBangParams::new(self.tau1.min(tau_c), tau_c, n as u32);
        p.acquire_each_cycle = true;
        Ok(p)
    }
}

/// Echo magnitude at every Bang-Bang echo (times `2kτc`).
pub fn bangbang_decay(tau_c: f64, cfg: &SweepConfig) -> Result<DecayCurve> {
    cfg.validate()?;
    let program = build_bangbang(&cfg.bangbang_params(tau_c)?, cfg.pulses)?;
    let ctx = cfg.simulation.clone().without_trajectory();
    let result = simulate(&program, &ctx, BlochState::PLUS_Z)?;
    let (times, amps) = result.acquisitions_for("echo").map(|a| (a.time, a.magnitude())).unzip();
    DecayCurve::new(times, amps)
}

/// Two-pulse echo magnitude at the given total times `2τ`, one run per time
/// with the same seed.
pub fn hahn_decay(total_times: &[f64], cfg: &SweepConfig) -> Result<DecayCurve> {
    cfg.validate()?;
    let ctx = cfg.simulation.clone().without_trajectory();
    let amps = total_times
        .par_iter()
        .map(|&t| {
            let program = build_hahn_echo(t / 2.0, cfg.pulses)?;
            let result = simulate(&program, &ctx, BlochState::PLUS_Z)?;
            Ok(result.readout().transverse())
        })
        .collect::<Result<Vec<f64>>>()?;
    DecayCurve::new(total_times.to_vec(), amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Ok,
    /// The echo did not change over the record: `T2` is unbounded.
    NoDecay,
    Failed,
}

impl SweepStatus {
    fn as_str(self) -> &'static str {
        match self {
            SweepStatus::Ok => "ok",
            SweepStatus::NoDecay => "no_decay",
            SweepStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "tau_c_s")]
    pub tau_c: f64,
    pub n_cycles: u32,
    /// Fitted single-exponential constant; infinite for `NoDecay`.
    #[serde(rename = "t2_s")]
    pub t2: Option<f64>,
    #[serde(rename = "t2_sigma_s")]
    pub t2_sigma: Option<f64>,
    #[serde(rename = "one_over_e_s")]
    pub one_over_e: Option<f64>,
    pub status: SweepStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<DecayFit>,
}

fn sweep_point(tau_c: f64, cfg: &SweepConfig) -> SweepRow {
    let mut row = SweepRow {
        tau_c,
        n_cycles: 0,
        t2: None,
        t2_sigma: None,
        one_over_e: None,
        status: SweepStatus::Failed,
        message: String::new(),
        fit: None,
    };
    let outcome = cfg.bangbang_params(tau_c).and_then(|p| {
        row.n_cycles = p.n_cycles;
        bangbang_decay(tau_c, cfg)
    });
    let curve = match outcome {
        Ok(c) => c,
        Err(e) => {
            row.message = e.to_string();
            return row;
        }
    };
    let first = curve.amplitudes[0];
    if curve.amplitudes.iter().all(|a| (a - first).abs() <= 1e-9 * first.abs().max(1e-300)) {
        row.status = SweepStatus::NoDecay;
        row.t2 = Some(f64::INFINITY);
        return row;
    }
    match fit_decay(&curve, DecayModel::SingleExp) {
        Ok(fit) => {
            row.t2 = fit.get("t2");
            row.t2_sigma = fit.sigma("t2");
            row.one_over_e = fit.one_over_e;
            row.status = SweepStatus::Ok;
            row.message = fit.warnings.join("; ");
            row.fit = Some(fit);
        }
        Err(e) => row.message = e.to_string(),
    }
    row
}

/// Bang-Bang `T2` for each cycle time, sorted by `tau_c`. Failures at a
/// point are recorded in its row.
pub fn sweep_t2_vs_tauc(tau_c_list: &[f64], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if tau_c_list.is_empty() {
        return Err(Error::InvalidParameter("empty tau_c list".into()));
    }
    if let Some(bad) = tau_c_list.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!("tau_c must be > 0, got {bad}")));
    }
    let mut list = tau_c_list.to_vec();
    list.sort_by(f64::total_cmp);
    Ok(list.par_iter().map(|&t| sweep_point(t, cfg)).collect())
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:?}"),
        None => String::new(),
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:?},{},{},{},{},{},\"{}\"",
            r.tau_c,
            r.n_cycles,
            opt(r.t2),
            opt(r.t2_sigma),
            opt(r.one_over_e),
            r.status.as_str(),
            r.message.replace('"', "'")
        );
    }
    out
}
