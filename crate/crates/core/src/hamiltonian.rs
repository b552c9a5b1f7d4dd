//! Spin-5/2 hyperfine Hamiltonian `H = Σ b_k M_kl I_l + Σ Q_kl I_k I_l`,
//! transition frequencies, their field gradients, and a search for critical
//! fields where a transition has no first-order Zeeman shift.
//!
//! Spin operators are the standard angular-momentum matrices in the basis
//! `m = +5/2, …, −5/2` with `⟨m|I_z|m⟩ = m`. Energies are in Hz, fields in
//! gauss, `Q` in Hz and `M` in Hz/G.

use std::sync::OnceLock;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPIN: f64 = 2.5;
pub const LEVELS: usize = 6;

type CMatrix = Matrix6<Complex64>;

/// `[I_x, I_y, I_z]` for I = 5/2.
pub fn spin_operators() -> &'static [CMatrix; 3] {
    static OPS: OnceLock<[CMatrix; 3]> = OnceLock::new();
    OPS.get_or_init(|| {
        let m = |k: usize| SPIN - k as f64;
        let mut plus = CMatrix::zeros();
        for k in 1..LEVELS {
            let mk = m(k);
            plus[(k - 1, k)] = Complex64::new((SPIN * (SPIN + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
        }
        let minus = plus.adjoint();
        let ix = (plus + minus).map(|z| z * 0.5);
        let iy = (plus - minus).map(|z| z * Complex64::new(0.0, -0.5));
        let iz = CMatrix::from_diagonal(&nalgebra::Vector6::from_fn(|k, _| Complex64::new(m(k), 0.0)));
        [ix, iy, iz]
    })
}

fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    m.map(|z| z * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    #[serde(rename = "q_tensor_hz")]
    pub q_tensor: [[f64; 3]; 3],
    #[serde(rename = "m_tensor_hz_per_g")]
    pub m_tensor: [[f64; 3]; 3],
}

fn to_matrix(a: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[i][j])
}

fn to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

impl SpinSystem {
    pub fn new(q: Matrix3<f64>, m: Matrix3<f64>) -> Result<Self> {
        let sys = Self {
            q_tensor: to_array(&q),
            m_tensor: to_array(&m),
        };
        sys.validate()?;
        Ok(sys)
    }

    /// `H_Q = D·(I_z² − I(I+1)/3)`, no Zeeman term.
    pub fn axial(d: f64) -> Self {
        Self {
            q_tensor: to_array(&Matrix3::from_diagonal(&Vector3::new(-d / 3.0, -d / 3.0, 2.0 * d / 3.0))),
            m_tensor: [[0.0; 3]; 3],
        }
    }

    /// Isotropic Zeeman interaction `γ·b·I`, no quadrupole term.
    pub fn zeeman(gamma: f64) -> Self {
        Self {
            q_tensor: [[0.0; 3]; 3],
            m_tensor: to_array(&(Matrix3::identity() * gamma)),
        }
    }

    pub fn q(&self) -> Matrix3<f64> {
        to_matrix(&self.q_tensor)
    }

    pub fn m(&self) -> Matrix3<f64> {
        to_matrix(&self.m_tensor)
    }

    pub fn validate(&self) -> Result<()> {
        let (q, m) = (self.q(), self.m());
        if q.iter().chain(m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spin tensors must be finite".into()));
        }
        let asym = (q - q.transpose()).abs().max();
        if asym > 1e-12 * q.abs().max().max(1.0) {
            return Err(Error::InvalidParameter(format!("q_tensor is not symmetric (max |Q - Qᵀ| = {asym:e})")));
        }
        Ok(())
    }

    /// Tensors in a frame rotated by `r`; pair with `b → r·b`.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        Self {
            q_tensor: to_array(&(r * self.q() * r.transpose())),
            m_tensor: to_array(&(r * self.m() * r.transpose())),
        }
    }

    /// `(M·I)_k = Σ_l M_kl I_l`.
    fn zeeman_operators(&self) -> [CMatrix; 3] {
        let ops = spin_operators();
        let m = self.m();
        std::array::from_fn(|k| (0..3).fold(CMatrix::zeros(), |acc, l| acc + scaled(&ops[l], m[(k, l)])))
    }

    fn quadrupole(&self) -> CMatrix {
        let ops = spin_operators();
        let q = self.q();
        let mut h = CMatrix::zeros();
        for k in 0..3 {
            for l in 0..3 {
                if q[(k, l)] != 0.0 {
                    h += scaled(&(ops[k] * ops[l]), q[(k, l)]);
                }
            }
        }
        h
    }

    pub fn hamiltonian(&self, b: &Vector3<f64>) -> CMatrix {
        Hamiltonian::new(self).at(b)
    }
}

/// Field-independent parts of `H`, assembled once.
struct Hamiltonian {
    quadrupole: CMatrix,
    zeeman: [CMatrix; 3],
}

impl Hamiltonian {
    fn new(sys: &SpinSystem) -> Self {
        Self {
            quadrupole: sys.quadrupole(),
            zeeman: sys.zeeman_operators(),
        }
    }

    fn at(&self, b: &Vector3<f64>) -> CMatrix {
        let mut h = self.quadrupole;
        for k in 0..3 {
            h += scaled(&self.zeeman[k], b[k]);
        }
        // Enforce exact Hermiticity against rounding in the products.
        (h + h.adjoint()).map(|z| z * 0.5)
    }

    fn energies(&self, b: &Vector3<f64>) -> [f64; LEVELS] {
        let mut e: [f64; LEVELS] = self.at(b).symmetric_eigenvalues().as_slice().try_into().expect("6 levels");
        e.sort_by(f64::total_cmp);
        e
    }

    fn eigen(&self, b: &Vector3<f64>) -> ([f64; LEVELS], [nalgebra::Vector6<Complex64>; LEVELS]) {
        let eig = SymmetricEigen::new(self.at(b));
        let mut order: [usize; LEVELS] = std::array::from_fn(|k| k);
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        (
            order.map(|k| eig.eigenvalues[k]),
            order.map(|k| eig.eigenvectors.column(k).into_owned()),
        )
    }

    fn frequency(&self, b: &Vector3<f64>, i: usize, j: usize) -> f64 {
        let e = self.energies(b);
        e[j] - e[i]
    }

    fn gradient(&self, b: &Vector3<f64>, i: usize, j: usize, threshold: f64) -> Result<Vector3<f64>> {
        let (e, v) = self.eigen(b);
        let gap = [i, j]
            .iter()
            .flat_map(|&k| {
                [k.checked_sub(1), (k + 1 < LEVELS).then_some(k + 1)]
                    .into_iter()
                    .flatten()
                    .map(move |n| (e[k] - e[n]).abs())
            })
            .fold(f64::INFINITY, f64::min);
        if gap < threshold {
            return Err(Error::Degenerate { i, j, gap_hz: gap });
        }
        let expect = |k: usize, op: &CMatrix| (v[k].adjoint() * op * v[k])[(0, 0)].re;
        Ok(Vector3::from_fn(|k, _| expect(j, &self.zeeman[k]) - expect(i, &self.zeeman[k])))
    }
}

fn check_levels(i: usize, j: usize) -> Result<()> {
    if i < j && j < LEVELS {
        Ok(())
    } else {
        Err(Error::LevelIndex { i, j })
    }
}

/// Energies sorted ascending, with the transition table `f_ij = e_j − e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagram {
    pub energies: [f64; LEVELS],
}

impl LevelDiagram {
    pub fn frequency(&self, i: usize, j: usize) -> f64 {
        self.energies[j] - self.energies[i]
    }

    pub fn transitions(&self) -> [[f64; LEVELS]; LEVELS] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.frequency(i, j)))
    }
}

pub fn eigensystem(sys: &SpinSystem, b: &Vector3<f64>) -> LevelDiagram {
    LevelDiagram {
        energies: Hamiltonian::new(sys).energies(b),
    }
}

pub fn transition_frequency(sys: &SpinSystem, b: &Vector3<f64>, i: usize, j: usize) -> Result<f64> {
    check_levels(i, j)?;
    Ok(Hamiltonian::new(sys).frequency(b, i, j))
}

/// Default gap below which two levels count as degenerate.
pub const DEGENERACY_THRESHOLD_HZ: f64 = 1.0;

/// `∂f_ij/∂b` (Hz/G) by Hellmann–Feynman.
pub fn field_gradient(sys: &SpinSystem, b: &Vector3<f64>, i: usize, j: usize) -> Result<Vector3<f64>> {
    field_gradient_with_threshold(sys, b, i, j, DEGENERACY_THRESHOLD_HZ)
}

pub fn field_gradient_with_threshold(
    sys: &SpinSystem,
    b: &Vector3<f64>,
    i: usize,
    j: usize,
    threshold: f64,
) -> Result<Vector3<f64>> {
    check_levels(i, j)?;
    Hamiltonian::new(sys).gradient(b, i, j, threshold)
}

/// Central finite-difference gradient of `f_ij` with step `h` (G).
pub fn field_gradient_fd(sys: &SpinSystem, b: &Vector3<f64>, i: usize, j: usize, h: f64) -> Result<Vector3<f64>> {
    check_levels(i, j)?;
    let ham = Hamiltonian::new(sys);
    Ok(Vector3::from_fn(|k, _| {
        let mut d = Vector3::zeros();
        d[k] = h;
        (ham.frequency(&(b + d), i, j) - ham.frequency(&(b - d), i, j)) / (2.0 * h)
    }))
}

/// Hessian of `f_ij` (Hz/G²): central differences of the analytic gradient
/// with step `h` (G), symmetrized.
pub fn frequency_hessian(sys: &SpinSystem, b: &Vector3<f64>, i: usize, j: usize, h: f64) -> Result<Matrix3<f64>> {
    let mut hess = Matrix3::zeros();
    for k in 0..3 {
        let mut d = Vector3::zeros();
        d[k] = h;
        let col = (field_gradient(sys, &(b + d), i, j)? - field_gradient(sys, &(b - d), i, j)?) / (2.0 * h);
        hess.set_column(k, &col);
    }
    Ok((hess + hess.transpose()) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalPointOptions {
    /// Number of simplex runs; the first starts at `b_init`, the rest at
    /// uniform random points in the box.
    pub starts: usize,
    /// Half-width of the start box around `b_init` (G).
    #[serde(rename = "box_half_width_g")]
    pub box_half_width: f64,
    pub seed: u64,
    pub max_iters: u64,
    /// Accepted residual `|∇f|` (Hz/G); defaults to `1e-3·‖M‖₂`.
    #[serde(rename = "tolerance_hz_per_g")]
    pub tolerance: Option<f64>,
    #[serde(rename = "degeneracy_threshold_hz")]
    pub degeneracy_threshold: f64,
    /// Edge of the initial simplex (G).
    #[serde(rename = "initial_step_g")]
    pub initial_step: f64,
    /// Finite-difference step for the curvature (G).
    #[serde(rename = "hessian_step_g")]
    pub hessian_step: f64,
}

impl Default for CriticalPointOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            box_half_width: 50.0,
            seed: 0,
            max_iters: 4000,
            tolerance: None,
            degeneracy_threshold: DEGENERACY_THRESHOLD_HZ,
            initial_step: 5.0,
            hessian_step: 0.01,
        }
    }
}

impl CriticalPointOptions {
    pub fn tolerance_for(&self, sys: &SpinSystem) -> f64 {
        self.tolerance.unwrap_or_else(|| 1e-3 * sys.m().norm().max(f64::MIN_POSITIVE))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.starts < 1 {
            return bad("starts must be >= 1");
        }
        if !(self.box_half_width >= 0.0) || !(self.initial_step > 0.0) || !(self.hessian_step > 0.0) {
            return bad("box_half_width_g must be >= 0; initial_step_g and hessian_step_g must be > 0");
        }
        if self.tolerance.is_some_and(|t| !(t > 0.0)) || !(self.degeneracy_threshold >= 0.0) {
            return bad("tolerance and degeneracy threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    #[serde(rename = "b_cp_g")]
    pub b_cp: [f64; 3],
    #[serde(rename = "frequency_hz")]
    pub frequency: f64,
    #[serde(rename = "residual_gradient_norm_hz_per_g")]
    pub residual_gradient_norm: f64,
    /// Hessian of the transition frequency at `b_cp`, Hz/G².
    #[serde(rename = "curvature_hz_per_g2")]
    pub curvature: [[f64; 3]; 3],
    #[serde(rename = "tolerance_hz_per_g")]
    pub tolerance: f64,
    /// Residual at or below tolerance.
    pub converged: bool,
    pub iterations: u64,
    pub best_start: usize,
}

struct GradientNorm<'a> {
    ham: &'a Hamiltonian,
    i: usize,
    j: usize,
    threshold: f64,
}

impl CostFunction for GradientNorm<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let b = Vector3::new(p[0], p[1], p[2]);
        Ok(match self.ham.gradient(&b, self.i, self.j, self.threshold) {
            Ok(g) => g.norm_squared(),
            Err(_) => f64::INFINITY,
        })
    }
}

/// Minimizes `|∇f_ij(b)|²` by Nelder–Mead from several starts. Of the runs
/// that reach the tolerance, the one ending nearest `b_init` is returned; if
/// none does, the smallest residual is returned with `converged = false`.
pub fn find_critical_point(
    sys: &SpinSystem,
    b_init: &Vector3<f64>,
    i: usize,
    j: usize,
    opts: &CriticalPointOptions,
) -> Result<CriticalPoint> {
    check_levels(i, j)?;
    sys.validate()?;
    opts.validate()?;
    let ham = Hamiltonian::new(sys);
    ham.gradient(b_init, i, j, opts.degeneracy_threshold)?;
    let tolerance = opts.tolerance_for(sys);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vector3<f64>> = (0..opts.starts)
        .map(|s| {
            let jitter = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0) * opts.box_half_width);
            if s == 0 {
                *b_init
            } else {
                b_init + jitter
            }
        })
        .collect();

    let runs: Vec<(f64, Vector3<f64>, u64)> = starts
        .par_iter()
        .map(|b0| {
            let problem = GradientNorm {
                ham: &ham,
                i,
                j,
                threshold: opts.degeneracy_threshold,
            };
            let x0: Vec<f64> = b0.iter().copied().collect();
            let mut simplex = vec![x0.clone()];
            for k in 0..3 {
                let mut v = x0.clone();
                v[k] += opts.initial_step;
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance((1e-4 * tolerance).powi(2))
                .expect("non-negative tolerance");
            match Executor::new(problem, solver).configure(|s| s.max_iters(opts.max_iters)).run() {
                Ok(res) => {
                    let state = res.state();
                    let p = state.best_param.clone().unwrap_or(x0);
                    (state.best_cost, Vector3::new(p[0], p[1], p[2]), state.iter)
                }
                Err(_) => (f64::INFINITY, *b0, 0),
            }
        })
        .collect();

    // Several critical points can exist; among converged runs take the one
    // nearest `b_init`, otherwise the smallest residual.
    let tol2 = tolerance * tolerance;
    let rank = |r: &(f64, Vector3<f64>, u64)| {
        if r.0 <= tol2 {
            (0, (r.1 - b_init).norm())
        } else {
            (1, r.0)
        }
    };
    let (best_start, &(cost, b, iterations)) = runs
        .iter()
        .enumerate()
        .min_by(|a, c| {
            let (ka, kc) = (rank(a.1), rank(c.1));
            ka.0.cmp(&kc.0).then(ka.1.total_cmp(&kc.1)).then(a.0.cmp(&c.0))
        })
        .expect("at least one start");
    if !cost.is_finite() {
        return Err(Error::Degenerate {
            i,
            j,
            gap_hz: 0.0,
        });
    }
    let grad = ham.gradient(&b, i, j, opts.degeneracy_threshold)?;
    let residual = grad.norm();
    Ok(CriticalPoint {
        b_cp: [b[0], b[1], b[2]],
        frequency: ham.frequency(&b, i, j),
        residual_gradient_norm: residual,
        curvature: to_array(&frequency_hessian(sys, &b, i, j, opts.hessian_step)?),
        tolerance,
        converged: residual <= tolerance,
        iterations,
        best_start,
    })
}

/// Exhaustive search for the smallest `|∇f_ij|` on the grid
/// `center + step·(a, b, c)`, `|a|, |b|, |c| ≤ half_width/step`. Gradients
/// come from central differences of the grid frequencies themselves, so
/// the search is independent of the Hellmann–Feynman path. Points where any
/// two levels are closer than [`DEGENERACY_THRESHOLD_HZ`] are skipped.
pub fn grid_minimum(
    sys: &SpinSystem,
    center: &Vector3<f64>,
    half_width: f64,
    step: f64,
    i: usize,
    j: usize,
) -> Result<(Vector3<f64>, f64)> {
    check_levels(i, j)?;
    if !(step > 0.0 && half_width >= step) {
        return Err(Error::InvalidParameter("grid needs step > 0 and half_width >= step".into()));
    }
    let ham = Hamiltonian::new(sys);
    let n = (half_width / step).round() as i64;
    // One extra layer on each side for the differences.
    let side = (2 * n + 3) as usize;
    let coord = |a: usize| (a as i64 - n - 1) as f64 * step;
    let plane = |a: usize| -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(side * side);
        for bi in 0..side {
            for ci in 0..side {
                let b = center + Vector3::new(coord(a), coord(bi), coord(ci));
                let e = ham.energies(&b);
                let gap = e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                out.push((e[j] - e[i], gap));
            }
        }
        out
    };
    let f: Vec<Vec<(f64, f64)>> = (0..side).into_par_iter().map(plane).collect();
    let at = |a: usize, b: usize, c: usize| f[a][b * side + c].0;
    let mut best = (Vector3::zeros(), f64::INFINITY);
    for a in 1..side - 1 {
        for b in 1..side - 1 {
            for c in 1..side - 1 {
                if f[a][b * side + c].1 < DEGENERACY_THRESHOLD_HZ {
                    continue;
                }
                let g = Vector3::new(
                    at(a + 1, b, c) - at(a - 1, b, c),
                    at(a, b + 1, c) - at(a, b - 1, c),
                    at(a, b, c + 1) - at(a, b, c - 1),
                ) / (2.0 * step);
                let v = g.norm();
                if v < best.1 {
                    best = (center + Vector3::new(coord(a), coord(b), coord(c)), v);
                }
            }
        }
    }
    Ok(best)
}
