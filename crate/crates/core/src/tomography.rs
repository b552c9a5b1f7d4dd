//! Process tomography of a simulated pulse program viewed as a qubit channel.
//!
//! A trace-preserving qubit channel acts on Bloch vectors as an affine map
//! `r ↦ T·r + c`. Its Pauli transfer matrix, rows and columns ordered
//! `(I, X, Y, Z)`, is
//!
//! ```text
//! ⎡1  0⎤
//! ⎣c  T⎦
//! ```
//!
//! The map is fixed by the outputs for `+z`, `−z`, `+x`, `+y`:
//! `c = (E(+z) + E(−z))/2`, `T·ẑ = (E(+z) − E(−z))/2`, `T·x̂ = E(+x) − c`,
//! `T·ŷ = E(+y) − c`.
//!
//! Fidelity is the process (entanglement) fidelity `tr(R_idealᵀ·R)/4`; the
//! average gate fidelity follows as `(2F + 1)/3`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bloch::BlochState;
use crate::ensemble::{simulate, SimContext};
use crate::error::{Error, Result};
use crate::sequence::{build_bangbang, BangBangParams, PulseProgram, PulseSpec};

/// Version of the JSON tomography document layout.
pub const TOMOGRAPHY_SCHEMA: u32 = 1;

pub const PAULI_LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[[f64; 4]; 4]", from = "[[f64; 4]; 4]")]
pub struct PauliTransferMatrix(pub Matrix4<f64>);

impl From<PauliTransferMatrix> for [[f64; 4]; 4] {
    fn from(p: PauliTransferMatrix) -> Self {
        p.rows()
    }
}

impl From<[[f64; 4]; 4]> for PauliTransferMatrix {
    fn from(r: [[f64; 4]; 4]) -> Self {
        Self(Matrix4::from_fn(|i, j| r[i][j]))
    }
}

impl PauliTransferMatrix {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn diagonal(d: [f64; 4]) -> Self {
        Self(Matrix4::from_diagonal(&d.into()))
    }

    /// PTM of `r ↦ t·r + c`.
    pub fn from_affine(t: &Matrix3<f64>, c: &Vector3<f64>) -> Self {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = 1.0;
        m.fixed_view_mut::<3, 1>(1, 0).copy_from(c);
        m.fixed_view_mut::<3, 3>(1, 1).copy_from(t);
        Self(m)
    }

    /// Lower-right 3×3 block (the linear part).
    pub fn unital_block(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(1, 1).into_owned()
    }

    /// First column below the corner (the non-unital shift).
    pub fn shift(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(1, 0).into_owned()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn xx(&self) -> f64 {
        self.0[(1, 1)]
    }

    pub fn yy(&self) -> f64 {
        self.0[(2, 2)]
    }

    pub fn zz(&self) -> f64 {
        self.0[(3, 3)]
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[(i, j)]))
    }

    /// Applies the channel to a Bloch vector.
    pub fn apply(&self, s: BlochState) -> BlochState {
        (self.unital_block() * s.as_vector() + self.shift()).into()
    }
}

/// `tr(idealᵀ·ptm)/4`.
pub fn process_fidelity(ptm: &PauliTransferMatrix, ideal: &PauliTransferMatrix) -> f64 {
    ideal.0.component_mul(&ptm.0).sum() / 4.0
}

pub fn average_gate_fidelity(process_fidelity: f64) -> f64 {
    (2.0 * process_fidelity + 1.0) / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preparation {
    pub label: &'static str,
    pub input: BlochState,
    pub output: BlochState,
}

pub const PREPARATIONS: [(&str, BlochState); 4] = [
    ("+z", BlochState::PLUS_Z),
    ("-z", BlochState::MINUS_Z),
    ("+x", BlochState::PLUS_X),
    ("+y", BlochState::PLUS_Y),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessResult {
    pub ptm: PauliTransferMatrix,
    pub ideal: PauliTransferMatrix,
    pub fidelity: f64,
    pub average_gate_fidelity: f64,
    pub preparations: Vec<Preparation>,
}

impl ProcessResult {
    /// Reconstructs the channel from the four preparation outputs, ordered
    /// as in [`PREPARATIONS`].
    pub fn from_outputs(outputs: [BlochState; 4], ideal: PauliTransferMatrix) -> Self {
        let [pz, mz, px, py] = outputs.map(|s| s.as_vector());
        let c = (pz + mz) / 2.0;
        let t = Matrix3::from_columns(&[px - c, py - c, (pz - mz) / 2.0]);
        let ptm = PauliTransferMatrix::from_affine(&t, &c);
        let fidelity = process_fidelity(&ptm, &ideal);
        Self {
            ptm,
            ideal,
            fidelity,
            average_gate_fidelity: average_gate_fidelity(fidelity),
            preparations: PREPARATIONS
                .iter()
                .zip(outputs)
                .map(|(&(label, input), output)| Preparation { label, input, output })
                .collect(),
        }
    }
}

/// Tomography of `process` against the identity. The program's first pulse
/// is treated as state preparation and removed; the output state is read at
/// the last acquire (or the end, if there is none).
pub fn run_process_tomography(process: &PulseProgram, ctx: &SimContext) -> Result<ProcessResult> {
    run_channel_tomography(&process.strip_preparation(), ctx)
}

/// Tomography of `channel` as given, without stripping anything.
pub fn run_channel_tomography(channel: &PulseProgram, ctx: &SimContext) -> Result<ProcessResult> {
    let mut ctx = ctx.clone();
    ctx.options.record_trajectory = false;
    let mut outputs = [BlochState::default(); 4];
    for (out, (_, input)) in outputs.iter_mut().zip(PREPARATIONS) {
        *out = simulate(channel, &ctx, input)?.readout();
    }
    Ok(ProcessResult::from_outputs(outputs, PauliTransferMatrix::identity()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub n_cycles: u32,
    pub duration: f64,
    pub result: ProcessResult,
}

/// Process tomography of the Bang-Bang channel for each cycle count in
/// `n_list`, all with the same ensemble and noise seeds.
pub fn tomography_series(
    params: &BangBangParams,
    pulses: PulseSpec,
    n_list: &[u32],
    ctx: &SimContext,
) -> Result<Vec<SeriesPoint>> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("cycle list is empty".into()));
    }
    if n_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(format!("cycle list must be ascending, got {n_list:?}")));
    }
    n_list
        .iter()
        .map(|&n| {
            let program = build_bangbang(&params.with_cycles(n), pulses)?;
            let channel = program.strip_preparation();
            Ok(SeriesPoint {
                n_cycles: n,
                duration: channel.duration(),
                result: run_channel_tomography(&channel, ctx)?,
            })
        })
        .collect()
}

/// JSON document: row-major PTM, fidelities and the preparation table.
pub fn tomography_json(result: &ProcessResult, extra: Value) -> Value {
    json!({
        "schema_version": TOMOGRAPHY_SCHEMA,
        "ptm": result.ptm.rows(),
        "ideal": result.ideal.rows(),
        "fidelity": result.fidelity,
        "average_gate_fidelity": result.average_gate_fidelity,
        "preparations": result.preparations.iter().map(|p| json!({
            "label": p.label,
            "input": [p.input.x, p.input.y, p.input.z],
            "output": [p.output.x, p.output.y, p.output.z],
        })).collect::<Vec<_>>(),
        "meta": extra,
    })
}

/// CSV with header `row,col,value`, one line per PTM entry in row-major
/// order, using the Pauli labels.
pub fn ptm_csv(ptm: &PauliTransferMatrix) -> String {
    let mut out = String::from("row,col,value\n");
    for (i, r) in PAULI_LABELS.iter().enumerate() {
        for (j, c) in PAULI_LABELS.iter().enumerate() {
            let _ = writeln!(out, "{r},{c},{:?}", ptm.entry(i, j));
        }
    }
    out
}
