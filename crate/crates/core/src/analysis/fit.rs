use std::str::FromStr;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};

use super::{linear_regression, one_over_e_time, DecayCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `A·exp(−t/T2)`
    SingleExp,
    /// `A·exp(−(t/T_M)^x)`, `t` the total evolution time.
    Stretched,
    /// `m_eq − (m_eq − m0)·exp(−t/T1)`
    #[serde(rename = "inv_recovery")]
    InversionRecovery,
}

impl DecayModel {
    pub fn min_points(self) -> usize {
        match self {
            DecayModel::SingleExp | DecayModel::InversionRecovery => 4,
            DecayModel::Stretched => 6,
        }
    }

    fn names(self) -> &'static [&'static str] {
        match self {
            DecayModel::SingleExp => &["amplitude", "t2"],
            DecayModel::Stretched => &["amplitude", "t_m", "x"],
            DecayModel::InversionRecovery => &["t1", "m0", "m_eq"],
        }
    }

    /// Which internal parameters are logarithms of the reported ones.
    fn log_params(self) -> &'static [bool] {
        match self {
            DecayModel::SingleExp => &[false, true],
            DecayModel::Stretched => &[false, true, true],
            DecayModel::InversionRecovery => &[true, false, false],
        }
    }

    /// Model value and gradient with respect to the internal parameters.
    fn eval(self, p: &[f64], t: f64) -> (f64, [f64; 3]) {
        match self {
            DecayModel::SingleExp => {
                let (a, rate) = (p[0], (-p[1]).exp());
                let e = (-t * rate).exp();
                (a * e, [e, a * e * t * rate, 0.0])
            }
            DecayModel::Stretched => {
                let (a, tm, x) = (p[0], p[1].exp(), p[2].exp());
                if t <= 0.0 {
                    return (a, [1.0, 0.0, 0.0]);
                }
                let u = (t / tm).powf(x);
                let e = (-u).exp();
                let f = a * e;
                (f, [e, f * u * x, -f * u * x * (t / tm).ln()])
            }
            DecayModel::InversionRecovery => {
                let (rate, m0, meq) = ((-p[0]).exp(), p[1], p[2]);
                let e = (-t * rate).exp();
                (meq - (meq - m0) * e, [-(meq - m0) * e * t * rate, e, 1.0 - e])
            }
        }
    }
}

impl FromStr for DecayModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_exp" => Ok(DecayModel::SingleExp),
            "stretched" => Ok(DecayModel::Stretched),
            "inv_recovery" => Ok(DecayModel::InversionRecovery),
            _ => Err(Error::InvalidParameter(format!(
                "unknown model `{s}` (expected single_exp, stretched or inv_recovery)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// One-standard-deviation uncertainty (linearized).
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub parameters: Vec<FitParameter>,
    /// `√Σ r²` of the (weighted) residuals.
    pub residual_norm: f64,
    pub points: usize,
    pub evaluations: usize,
    /// 1/e crossing of the data relative to the fitted amplitude.
    #[serde(rename = "one_over_e_s", skip_serializing_if = "Option::is_none")]
    pub one_over_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DecayFit {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.sigma)
    }

    fn internal(&self) -> Vec<f64> {
        self.parameters
            .iter()
            .zip(self.model.log_params())
            .map(|(p, &log)| if log { p.value.ln() } else { p.value })
            .collect()
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.model.eval(&self.internal(), t).0
    }
}

struct Problem<'a> {
    model: DecayModel,
    t: &'a [f64],
    y: &'a [f64],
    weights: Vec<f64>,
    p: DVector<f64>,
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let p = self.p.as_slice();
        Some(DVector::from_iterator(
            self.t.len(),
            (0..self.t.len()).map(|k| (self.model.eval(p, self.t[k]).0 - self.y[k]) * self.weights[k]),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let p = self.p.as_slice();
        let n = self.p.len();
        Some(DMatrix::from_fn(self.t.len(), n, |k, j| {
            self.model.eval(p, self.t[k]).1[j] * self.weights[k]
        }))
    }
}

fn check_points(curve: &DecayCurve, model: DecayModel) -> Result<()> {
    curve.validate()?;
    if curve.len() < model.min_points() {
        return Err(Error::RankDeficient(format!(
            "{:?} fit needs at least {} points, got {}",
            model,
            model.min_points(),
            curve.len()
        )));
    }
    Ok(())
}

/// Log-linear start for `A·exp(−t/T)`, using positive amplitudes only.
fn log_linear_start(t: &[f64], y: &[f64], warnings: &mut Vec<String>) -> (f64, f64) {
    let (tp, lp): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    if tp.len() < y.len() {
        warnings.push(format!(
            "{} non-positive amplitude(s) ignored for the initial estimate",
            y.len() - tp.len()
        ));
    }
    let span = t.last().unwrap() - t.first().unwrap();
    if tp.len() < 2 {
        return (y.iter().cloned().fold(f64::MIN, f64::max).max(1e-12), span.max(1e-12));
    }
    let (slope, intercept) = linear_regression(&tp, &lp);
    let tau = if slope < 0.0 { -1.0 / slope } else { 10.0 * span.max(1e-12) };
    (intercept.exp(), tau)
}

fn solve(curve: &DecayCurve, model: DecayModel, start: Vec<f64>, mut warnings: Vec<String>) -> Result<DecayFit> {
    let weights = match &curve.sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; curve.len()],
    };
    let problem = Problem {
        model,
        t: &curve.times,
        y: &curve.amplitudes,
        weights,
        p: DVector::from_vec(start),
    };
    let (problem, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
    let accepted = report.termination.was_successful()
        || matches!(report.termination, TerminationReason::NoImprovementPossible(_));
    if !accepted {
        return Err(Error::Fit(format!("{:?} fit did not converge: {:?}", model, report.termination)));
    }
    let p = problem.params();
    let r = problem.residuals().expect("residuals");
    let j = problem.jacobian().expect("jacobian");
    if p.iter().chain(r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Fit(format!("{model:?} fit produced non-finite values")));
    }

    let svd = j.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::RankDeficient(format!(
            "{model:?} fit Jacobian is singular (condition {:.3e})",
            smax / smin
        )));
    }
    let n = curve.len();
    let np = p.len();
    let rss = r.norm_squared();
    let scale = if curve.sigma.is_some() || n == np { 1.0 } else { rss / (n - np) as f64 };
    let cov = (j.transpose() * &j)
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(format!("{model:?} normal matrix is singular")))?
        * scale;

    let parameters: Vec<FitParameter> = model
        .names()
        .iter()
        .zip(model.log_params())
        .enumerate()
        .map(|(k, (name, &log))| {
            let sd = cov[(k, k)].max(0.0).sqrt();
            let (value, sigma) = if log { (p[k].exp(), p[k].exp() * sd) } else { (p[k], sd) };
            FitParameter {
                name: name.to_string(),
                value,
                sigma,
            }
        })
        .collect();

    let mut fit = DecayFit {
        model,
        parameters,
        residual_norm: rss.sqrt(),
        points: n,
        evaluations: report.number_of_evaluations,
        one_over_e: None,
        warnings: Vec::new(),
    };
    if model == DecayModel::Stretched {
        let x = fit.get("x").unwrap();
        if !(x > 0.0 && x <= 5.0) {
            return Err(Error::Fit(format!("stretch exponent {x} outside (0, 5]")));
        }
    }
    if model != DecayModel::InversionRecovery {
        fit.one_over_e = one_over_e_time(curve, fit.get("amplitude").unwrap());
    }
    fit.warnings.append(&mut warnings);
    Ok(fit)
}

/// Nonlinear least-squares fit of an echo decay.
pub fn fit_decay(curve: &DecayCurve, model: DecayModel) -> Result<DecayFit> {
    if model == DecayModel::InversionRecovery {
        return fit_inversion_recovery(curve);
    }
    check_points(curve, model)?;
    let mut warnings = Vec::new();
    let (a0, tau0) = log_linear_start(&curve.times, &curve.amplitudes, &mut warnings);
    let start = match model {
        DecayModel::SingleExp => vec![a0, tau0.ln()],
        _ => {
            // ln(−ln(y/A)) = x·ln t − x·ln T_M
            let a = curve.amplitudes[0].max(a0);
            let (u, v): (Vec<f64>, Vec<f64>) = curve
                .times
                .iter()
                .zip(&curve.amplitudes)
                .filter(|(&t, &y)| t > 0.0 && y > 0.0 && y / a < 0.98 && y / a > 0.02)
                .map(|(&t, &y)| (t.ln(), (-(y / a).ln()).ln()))
                .unzip();
            let (x, tm) = if u.len() >= 2 {
                let (slope, intercept) = linear_regression(&u, &v);
                let x = slope.clamp(0.2, 4.5);
                (x, (-intercept / x).exp())
            } else {
                (1.0, tau0)
            };
            vec![a, tm.ln(), x.ln()]
        }
    };
    solve(curve, model, start, warnings)
}

/// Fits `m(t) = m_eq − (m_eq − m0)·exp(−t/T1)`.
pub fn fit_inversion_recovery(curve: &DecayCurve) -> Result<DecayFit> {
    let model = DecayModel::InversionRecovery;
    check_points(curve, model)?;
    let (t, y) = (&curve.times, &curve.amplitudes);
    let (m0, meq) = (y[0], *y.last().unwrap());
    let span = t.last().unwrap() - t[0];
    let (tp, lr): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .map(|(&t, &v)| (t, (meq - v) / (meq - m0)))
        .filter(|(_, r)| *r > 0.05 && *r < 0.95)
        .map(|(t, r)| (t, r.ln()))
        .unzip();
    let t1 = if tp.len() >= 2 {
        let (slope, _) = linear_regression(&tp, &lr);
        if slope < 0.0 {
            -1.0 / slope
        } else {
            span / 3.0
        }
    } else {
        span / 3.0
    };
    solve(curve, model, vec![t1.max(1e-12).ln(), m0, meq], Vec::new())
}
