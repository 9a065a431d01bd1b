//! Moment generating function, the Cramér point and the tilted law.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::model::{dot, norm, StepLaw};

pub const GRAD_TOL: f64 = 1e-12;
pub const MAX_NEWTON: usize = 200;
const ARMIJO: f64 = 1e-4;

/// `R(h) = E[e^{h·X}]` with its gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Mgf {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

pub fn log_mgf(law: &StepLaw, h: &[f64]) -> Result<Mgf> {
    let d = law.dim();
    if h.len() != d {
        return Err(LabError::Dimension {
            expected: d,
            got: h.len(),
        });
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    let mut hess = vec![vec![0.0; d]; d];
    for (z, p) in law.iter() {
        let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        let w = p * dot(h, &zf).exp();
        value += w;
        for i in 0..d {
            grad[i] += w * zf[i];
            for j in 0..d {
                hess[i][j] += w * zf[i] * zf[j];
            }
        }
    }
    Ok(Mgf { value, grad, hess })
}

fn mgf_value(law: &StepLaw, h: &[f64]) -> f64 {
    law.iter()
        .map(|(z, p)| p * z.iter().zip(h).map(|(&a, b)| a as f64 * b).sum::<f64>().exp())
        .sum()
}

/// The Cramér point `h ≠ 0` with `∇R(h) = 0`, the rate `c = R(h)` and the
/// tilted step law.
#[derive(Debug, Clone, Serialize)]
pub struct CramerData {
    pub h: Vec<f64>,
    pub c: f64,
    pub tilted: StepLaw,
    pub grad_residual: f64,
    pub iterations: usize,
    /// Gradient norm at every accepted iterate, starting from `h = 0`.
    pub grad_history: Vec<f64>,
}

impl CramerData {
    pub fn log_c(&self) -> f64 {
        self.c.ln()
    }
}

/// Damped Newton minimization of the strictly convex `R`, started at the origin.
pub fn solve_cramer_point(law: &StepLaw) -> Result<CramerData> {
    let d = law.dim();
    let mut h = vec![0.0; d];
    let mut mgf = log_mgf(law, &h)?;
    let mut history = vec![norm(&mgf.grad)];
    if history[0] <= 1e-15 {
        return Err(LabError::ZeroDrift);
    }
    let mut iterations = 0;
    while norm(&mgf.grad) > GRAD_TOL {
        if iterations == MAX_NEWTON {
            return Err(LabError::NoConvergence {
                iterations,
                residual: norm(&mgf.grad),
            });
        }
        iterations += 1;
        let hess = DMatrix::from_fn(d, d, |i, j| mgf.hess[i][j]);
        let grad = DVector::from_column_slice(&mgf.grad);
        let chol = hess.cholesky().ok_or_else(|| {
            LabError::Inconsistent("Hessian of R is not positive definite".into())
        })?;
        let step = -chol.solve(&grad);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let next = loop {
            let cand: Vec<f64> = h.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let r = mgf_value(law, &cand);
            if r <= mgf.value + ARMIJO * t * slope {
                break Some(cand);
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        match next {
            Some(cand) => {
                h = cand;
                mgf = log_mgf(law, &h)?;
                history.push(norm(&mgf.grad));
            }
            None => {
                // no representable descent left: we sit at the floating-point minimum
                if norm(&mgf.grad) <= 1e3 * GRAD_TOL {
                    break;
                }
                return Err(LabError::NoConvergence {
                    iterations,
                    residual: norm(&mgf.grad),
                });
            }
        }
    }
    if norm(&h) <= 1e-10 {
        return Err(LabError::ZeroDrift);
    }
    let c = mgf.value;
    if c >= 1.0 {
        return Err(LabError::Inconsistent(format!("R(h) = {c} is not below 1")));
    }
    let drift = law.mean();
    if dot(&drift, &h) >= 0.0 {
        return Err(LabError::Inconsistent("E[X]·h is not negative".into()));
    }
    let tilted = tilt_law(law, &h, c)?;
    Ok(CramerData {
        grad_residual: norm(&mgf.grad),
        h,
        c,
        tilted,
        iterations,
        grad_history: history,
    })
}

/// Exponential change of measure `p̃_z ∝ e^{h·z} p_z / c`.
pub fn tilt_law(law: &StepLaw, h: &[f64], c: f64) -> Result<StepLaw> {
    if h.len() != law.dim() {
        return Err(LabError::Dimension {
            expected: law.dim(),
            got: h.len(),
        });
    }
    let r = mgf_value(law, h);
    if (r - c).abs() > 1e-10 {
        return Err(LabError::Inconsistent(format!(
            "c = {c} does not match R(h) = {r}"
        )));
    }
    let weights = law
        .iter()
        .map(|(z, p)| p * z.iter().zip(h).map(|(&a, b)| a as f64 * b).sum::<f64>().exp() / c)
        .collect();
    Ok(law.with_weights(weights))
}
