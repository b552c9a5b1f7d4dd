use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{member_seed, NoiseModel, NoiseStream};
use super::{sample_detunings, EnsembleSpec, Members};
use crate::bloch::{evolve_free_angle, BlochState, PulseEvent, PulseShape, RelaxationParams, Rotation};
use crate::error::{Error, Result};
use crate::sequence::{PulseProgram, Step};

/// Members per reduction chunk. Fixed so that the summation order, and
/// hence every bit of the result, does not depend on the thread count.
const CHUNK: usize = 32;

/// Seed offset for the per-member `t2` spread stream.
const T2_SPREAD_STREAM: u64 = 0x7432_5350_5245_4144;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Record the ensemble mean after every pulse and wait.
    #[serde(default = "default_true")]
    pub record_trajectory: bool,
    /// Upper bound on members × (program steps + noise steps).
    #[serde(default = "default_budget")]
    pub budget: u128,
}

fn default_true() -> bool {
    true
}

fn default_budget() -> u128 {
    20_000_000_000
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            record_trajectory: true,
            budget: default_budget(),
        }
    }
}

/// Everything besides the program and the initial state that a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimContext {
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub relax: RelaxationParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub options: SimOptions,
}

impl SimContext {
    pub fn new(ensemble: EnsembleSpec) -> Self {
        Self {
            ensemble,
            noise: NoiseModel::none(),
            relax: RelaxationParams::none(),
            seed: 0,
            options: SimOptions::default(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_relax(mut self, relax: RelaxationParams) -> Self {
        self.relax = relax;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn without_trajectory(mut self) -> Self {
        self.options.record_trajectory = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.noise.validate()?;
        self.relax.validate()
    }
}

/// Ensemble-mean Bloch vector at one acquire statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub label: String,
    pub time: f64,
    pub mean: BlochState,
    /// Standard error of each mean component, `spread/√n_eff`.
    pub std_error: [f64; 3],
}

impl Acquisition {
    pub fn magnitude(&self) -> f64 {
        self.mean.transverse()
    }

    pub fn phase(&self) -> f64 {
        self.mean.y.atan2(self.mean.x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub sample_times: Vec<f64>,
    pub mean_bloch: Vec<[f64; 3]>,
    pub acquisitions: Vec<Acquisition>,
    pub final_mean: BlochState,
    pub duration: f64,
    pub members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoAmplitude {
    pub magnitude: f64,
    pub phase: f64,
}

impl SimulationResult {
    /// Acquisitions carrying `label`, in time order.
    pub fn acquisitions_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Acquisition> + 'a {
        self.acquisitions.iter().filter(move |a| a.label == label)
    }

    /// Last acquisition of each label: label → (magnitude, phase).
    pub fn acquire_table(&self) -> BTreeMap<String, EchoAmplitude> {
        self.acquisitions
            .iter()
            .map(|a| {
                (
                    a.label.clone(),
                    EchoAmplitude {
                        magnitude: a.magnitude(),
                        phase: a.phase(),
                    },
                )
            })
            .collect()
    }

    /// Ensemble mean at the last acquire, or at the end if there is none.
    pub fn readout(&self) -> BlochState {
        self.acquisitions.last().map(|a| a.mean).unwrap_or(self.final_mean)
    }
}

/// Transverse magnitude and phase of the mean Bloch vector at the (last)
/// acquire called `label`.
pub fn echo_amplitude(result: &SimulationResult, label: &str) -> Result<EchoAmplitude> {
    result
        .acquisitions_for(label)
        .last()
        .map(|a| EchoAmplitude {
            magnitude: a.magnitude(),
            phase: a.phase(),
        })
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

#[derive(Debug, Clone, Copy)]
enum Compiled {
    Pulse(usize),
    Wait(f64),
    Acquire(usize),
}

struct Plan {
    steps: Vec<Compiled>,
    pulses: Vec<PulseEvent>,
    acquire_labels: Vec<String>,
    acquire_times: Vec<f64>,
    sample_times: Vec<f64>,
    duration: f64,
}

fn compile(program: &PulseProgram) -> Plan {
    let mut steps = Vec::with_capacity(program.expanded_len() as usize);
    let mut pulses: Vec<PulseEvent> = Vec::new();
    let mut acquire_labels = Vec::new();
    let mut acquire_times = Vec::new();
    let mut sample_times = vec![0.0];
    let mut t = 0.0;
    program.for_each_step(|s| match s {
        Step::Pulse(p) => {
            let idx = pulses.iter().position(|q| q == p).unwrap_or_else(|| {
                pulses.push(*p);
                pulses.len() - 1
            });
            steps.push(Compiled::Pulse(idx));
            t += p.duration();
            sample_times.push(t);
        }
        Step::Wait(d) => {
            steps.push(Compiled::Wait(d));
            t += d;
            sample_times.push(t);
        }
        Step::Acquire(l) => {
            steps.push(Compiled::Acquire(acquire_labels.len()));
            acquire_labels.push(l.to_string());
            acquire_times.push(t);
        }
    });
    Plan {
        steps,
        pulses,
        acquire_labels,
        acquire_times,
        sample_times,
        duration: t,
    }
}

#[derive(Clone)]
struct Partial {
    trajectory: Vec<[f64; 3]>,
    acquired: Vec<[f64; 3]>,
    acquired_sq: Vec<[f64; 3]>,
    final_state: [f64; 3],
}

impl Partial {
    fn zeros(samples: usize, acquires: usize) -> Self {
        Self {
            trajectory: vec![[0.0; 3]; samples],
            acquired: vec![[0.0; 3]; acquires],
            acquired_sq: vec![[0.0; 3]; acquires],
            final_state: [0.0; 3],
        }
    }

    fn add(&mut self, other: &Partial) {
        let add3 = |a: &mut [f64; 3], b: &[f64; 3]| {
            for k in 0..3 {
                a[k] += b[k];
            }
        };
        for (a, b) in self.trajectory.iter_mut().zip(&other.trajectory) {
            add3(a, b);
        }
        for (a, b) in self.acquired.iter_mut().zip(&other.acquired) {
            add3(a, b);
        }
        for (a, b) in self.acquired_sq.iter_mut().zip(&other.acquired_sq) {
            add3(a, b);
        }
        add3(&mut self.final_state, &other.final_state);
    }
}

fn accumulate(acc: &mut [f64; 3], s: &BlochState, w: f64) {
    acc[0] += w * s.x;
    acc[1] += w * s.y;
    acc[2] += w * s.z;
}

fn run_member(
    plan: &Plan,
    ctx: &SimContext,
    hard: &[Option<Rotation>],
    detuning: f64,
    weight: f64,
    index: usize,
    initial: BlochState,
    out: &mut Partial,
) {
    let mut noise = NoiseStream::new(&ctx.noise, member_seed(ctx.seed, index as u64));
    let silent = noise.is_silent();
    let relax = if ctx.ensemble.t2_log_spread > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(member_seed(ctx.seed ^ T2_SPREAD_STREAM, index as u64));
        let z: f64 = StandardNormal.sample(&mut rng);
        ctx.relax.with_t2_scaled((ctx.ensemble.t2_log_spread * z).exp())
    } else {
        ctx.relax
    };
    // Without noise a finite pulse depends only on the static detuning.
    let fixed: Vec<Option<Rotation>> = plan
        .pulses
        .iter()
        .zip(hard)
        .map(|(p, h)| h.or_else(|| silent.then(|| p.rotation(detuning))))
        .collect();

    let mut state = initial;
    let mut sample = 1;
    let record = ctx.options.record_trajectory;
    for step in &plan.steps {
        match *step {
            Compiled::Pulse(i) => {
                let rotation = match fixed[i] {
                    Some(r) => r,
                    None => plan.pulses[i].rotation(detuning + noise.value()),
                };
                state = rotation.apply(state);
                let d = plan.pulses[i].duration();
                if d > 0.0 {
                    noise.integrate(d);
                }
            }
            Compiled::Wait(d) => {
                let phase = TAU * (detuning * d + noise.integrate(d));
                state = evolve_free_angle(state, phase, d, &relax);
            }
            Compiled::Acquire(k) => {
                accumulate(&mut out.acquired[k], &state, weight);
                let sq = BlochState::new(state.x * state.x, state.y * state.y, state.z * state.z);
                accumulate(&mut out.acquired_sq[k], &sq, weight);
                continue;
            }
        }
        if record {
            accumulate(&mut out.trajectory[sample], &state, weight);
        }
        sample += 1;
    }
    if record {
        accumulate(&mut out.trajectory[0], &initial, weight);
    }
    accumulate(&mut out.final_state, &state, weight);
}

/// Runs `program` over the ensemble, starting every member from `initial`.
///
/// Members evolve independently; each gets its own noise realization seeded
/// by `member_seed(ctx.seed, index)`. Means are reduced in fixed-size
/// chunks, in member order, so the result is bit-identical for any number
/// of worker threads.
pub fn simulate(program: &PulseProgram, ctx: &SimContext, initial: BlochState) -> Result<SimulationResult> {
    ctx.validate()?;
    let members = sample_detunings(&ctx.ensemble)?;
    simulate_members(program, ctx, &members, initial)
}

pub(crate) fn simulate_members(
    program: &PulseProgram,
    ctx: &SimContext,
    members: &Members,
    initial: BlochState,
) -> Result<SimulationResult> {
    let n = members.len();
    let noise_steps = if ctx.noise.is_none() {
        0.0
    } else {
        (program.duration() / ctx.noise.step()).ceil()
    };
    let requested = n as u128 * (program.expanded_len() as u128 + noise_steps as u128);
    if requested > ctx.options.budget {
        return Err(Error::BudgetExceeded {
            requested,
            budget: ctx.options.budget,
        });
    }

    let plan = compile(program);
    let hard: Vec<Option<Rotation>> = plan
        .pulses
        .iter()
        .map(|p| match p.shape {
            PulseShape::Hard { .. } => Some(p.rotation(0.0)),
            PulseShape::Finite { .. } => None,
        })
        .collect();
    let samples = if ctx.options.record_trajectory {
        plan.sample_times.len()
    } else {
        0
    };
    let acquires = plan.acquire_labels.len();

    let partials: Vec<Partial> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Partial::zeros(samples, acquires);
            for m in c * CHUNK..((c + 1) * CHUNK).min(n) {
                run_member(
                    &plan,
                    ctx,
                    &hard,
                    members.detunings[m],
                    members.weights[m],
                    m,
                    initial,
                    &mut acc,
                );
            }
            acc
        })
        .collect();
    let mut total = Partial::zeros(samples, acquires);
    for p in &partials {
        total.add(p);
    }

    let n_eff = members.effective_size();
    let acquisitions = (0..acquires)
        .map(|k| {
            let m = total.acquired[k];
            let sq = total.acquired_sq[k];
            let se = [0, 1, 2].map(|i| ((sq[i] - m[i] * m[i]).max(0.0) / n_eff).sqrt());
            Acquisition {
                label: plan.acquire_labels[k].clone(),
                time: plan.acquire_times[k],
                mean: m.into(),
                std_error: se,
            }
        })
        .collect();

    Ok(SimulationResult {
        sample_times: if samples > 0 { plan.sample_times } else { Vec::new() },
        mean_bloch: total.trajectory,
        acquisitions,
        final_mean: total.final_state.into(),
        duration: plan.duration,
        members: n,
    })
}

/// Runs `program` from `+z` with default options.
pub fn run_program(
    program: &PulseProgram,
    ensemble: &EnsembleSpec,
    noise: &NoiseModel,
    relax: &RelaxationParams,
    master_seed: u64,
) -> Result<SimulationResult> {
    let ctx = SimContext {
        ensemble: ensemble.clone(),
        noise: noise.clone(),
        relax: *relax,
        seed: master_seed,
        options: SimOptions::default(),
    };
    simulate(program, &ctx, BlochState::PLUS_Z)
}
