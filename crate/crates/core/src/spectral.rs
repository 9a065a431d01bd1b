//! Quasistationary distribution of the killed walk on a truncated window.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::tv_distance;
use crate::error::{LabError, Result};
use crate::lattice::{Target, Transitions, Window};
use crate::model::{ConeSpec, StepLaw};
use crate::report::fmt_f64;

pub const QSD_TOL: f64 = 1e-10;
pub const QSD_MAX_ITER: usize = 100_000;

/// Substochastic kernel `P(x + X = y)` on `K ∩ window`; mass leaving the
/// window is killed along with mass leaving the cone.
#[derive(Debug, Clone)]
pub struct Kernel {
    tr: Transitions,
}

pub fn truncated_kernel(law: &StepLaw, cone: &ConeSpec, radius: i64) -> Result<Kernel> {
    let reach = law
        .support()
        .iter()
        .map(|z| z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if (radius as f64) < 4.0 * reach {
        return Err(LabError::Config(format!(
            "window radius {radius} is below four step lengths ({reach})"
        )));
    }
    Ok(Kernel {
        tr: Transitions::new(law, cone, Window::new(cone, radius)?)?,
    })
}

impl Kernel {
    pub fn window(&self) -> &Window {
        &self.tr.window
    }

    /// Nonzero entries of the row at `x`, merged by target.
    pub fn row(&self, x: &[i64]) -> Vec<(Vec<i64>, f64)> {
        let Some(i) = self.window().cell(x) else {
            return Vec::new();
        };
        let mut out: Vec<(usize, f64)> = Vec::new();
        for k in 0..self.tr.n_steps() {
            if let Target::Cell(j) = self.tr.target(i, k) {
                match out.iter_mut().find(|(c, _)| *c == j) {
                    Some(e) => e.1 += self.tr.probs[k],
                    None => out.push((j, self.tr.probs[k])),
                }
            }
        }
        out.sort_by_key(|e| e.0);
        out.into_iter()
            .map(|(j, p)| (self.window().point(j), p))
            .collect()
    }

    pub fn row_sum(&self, x: &[i64]) -> f64 {
        self.row(x).iter().map(|e| e.1).sum()
    }

    /// `out = ν Q`; returns `|ν Q|₁`.
    pub fn apply_left(&self, nu: &[f64], out: &mut [f64]) -> f64 {
        self.tr.push_forward(nu, out, 1.0);
        out.iter().sum()
    }

    fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.tr.n_steps()).filter_map(move |k| match self.tr.target(i, k) {
            Target::Cell(j) => Some(j),
            _ => None,
        })
    }

    /// Every in-window cell reaches and is reached from the first one.
    pub fn is_irreducible(&self) -> bool {
        let cells: Vec<usize> = self.window().cells().collect();
        let Some(&root) = cells.first() else {
            return true;
        };
        let n = self.window().len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &i in &cells {
            for j in self.successors(i) {
                preds[j].push(i);
            }
        }
        let reach = |next: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            let mut count = 1;
            while let Some(i) = queue.pop_front() {
                for j in next(i) {
                    if !seen[j] {
                        seen[j] = true;
                        count += 1;
                        queue.push_back(j);
                    }
                }
            }
            count
        };
        reach(&|i| self.successors(i).collect()) == cells.len()
            && reach(&|i| preds[i].clone()) == cells.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QsdResult {
    pub radius: i64,
    pub lambda: f64,
    #[serde(skip)]
    pub mu: Vec<f64>,
    /// Total variation between `μ Q/|μ Q|` and `μ`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub irreducible: bool,
}

impl QsdResult {
    /// CSV with columns `x1..xd,mu`.
    pub fn write_csv<W: Write>(&self, window: &Window, mut out: W) -> Result<()> {
        let d = window.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("mu".into());
        writeln!(out, "{}", header.join(","))?;
        for i in window.cells() {
            let p: Vec<String> = window.point(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{}", p.join(","), fmt_f64(self.mu[i]))?;
        }
        Ok(())
    }
}

/// Left power iteration from the uniform law.
///
/// Iterates with `Q + I` so that bipartite kernels, whose spectrum is
/// symmetric about zero, still converge; the fixed point is the same.
pub fn qsd_power_iteration(kernel: &Kernel, tol: f64, max_iter: usize) -> Result<QsdResult> {
    let w = kernel.window();
    let cells: Vec<usize> = w.cells().collect();
    if cells.is_empty() {
        return Err(LabError::Domain("the window contains no cone points".into()));
    }
    let mut nu = vec![0.0; w.len()];
    for &i in &cells {
        nu[i] = 1.0 / cells.len() as f64;
    }
    let mut q = vec![0.0; w.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mass = kernel.apply_left(&nu, &mut q);
        if mass <= 0.0 {
            return Err(LabError::Domain("all mass is killed in one step".into()));
        }
        let total = mass + 1.0;
        let mut change = 0.0;
        for i in 0..nu.len() {
            let v = (q[i] + nu[i]) / total;
            change += (v - nu[i]).abs();
            nu[i] = v;
        }
        if 0.5 * change < tol {
            converged = true;
            break;
        }
    }
    let lambda = kernel.apply_left(&nu, &mut q);
    q.iter_mut().for_each(|v| *v /= lambda);
    let residual = tv_distance(&q, &nu);
    Ok(QsdResult {
        radius: w.radius(),
        lambda,
        mu: nu,
        residual,
        iterations,
        converged,
        irreducible: kernel.is_irreducible(),
    })
}

/// QSDs for several window radii, computed concurrently.
pub fn qsd_sweep(
    law: &StepLaw,
    cone: &ConeSpec,
    radii: &[i64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<QsdResult>> {
    radii
        .par_iter()
        .map(|&r| qsd_power_iteration(&truncated_kernel(law, cone, r)?, tol, max_iter))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nn4;

    #[test]
    fn kernel_rows() {
        let k = truncated_kernel(&nn4(), &ConeSpec::orthant(2), 4).unwrap();
        let row = k.row(&[1, 1]);
        assert_eq!(row, vec![(vec![1, 2], 0.125), (vec![2, 1], 0.125)]);
        assert_eq!(k.row_sum(&[1, 1]), 0.25);
        for i in k.window().cells() {
            assert!(k.row_sum(&k.window().point(i)) <= 1.0 + 1e-15);
        }
        assert!(k.is_irreducible());
        assert!(truncated_kernel(&nn4(), &ConeSpec::orthant(2), 2).is_err());
    }

    #[test]
    fn dead_rows_are_empty() {
        let law = StepLaw::from_pairs([(vec![-1, 0], 0.5), (vec![0, -1], 0.5)]).unwrap();
        let k = truncated_kernel(&law, &ConeSpec::orthant(2), 4).unwrap();
        assert!(k.row(&[1, 1]).is_empty());
        assert_eq!(k.row_sum(&[1, 1]), 0.0);
        assert!(!k.is_irreducible());
    }

    #[test]
    fn small_window_matches_closed_form() {
        // the killed nn4 kernel on [1, L]² is conjugate to c times the simple
        // random walk, whose top Dirichlet eigenvalue is cos(π/(L+1))
        let c = 3f64.sqrt() / 2.0;
        for l in [5i64, 10] {
            let k = truncated_kernel(&nn4(), &ConeSpec::orthant(2), l).unwrap();
            let r = qsd_power_iteration(&k, QSD_TOL, QSD_MAX_ITER).unwrap();
            let exact = c * (std::f64::consts::PI / (l + 1) as f64).cos();
            assert!(r.converged);
            assert!((r.lambda - exact).abs() < 1e-9, "{} vs {exact}", r.lambda);
            assert!(r.residual < 1e-8);
            assert!((r.mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalue_grows_with_window() {
        let rs = qsd_sweep(&nn4(), &ConeSpec::orthant(2), &[8, 12, 16], QSD_TOL, QSD_MAX_ITER)
            .unwrap();
        assert!(rs.windows(2).all(|p| p[0].lambda <= p[1].lambda));
        assert!(rs.iter().all(|r| r.lambda > 0.0 && r.lambda < 1.0));
    }
}
