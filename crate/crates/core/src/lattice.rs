//! Dense truncated windows of `K ∩ ℤᵈ` with precomputed one-step moves.

use crate::error::{LabError, Result};
use crate::model::{ConeSpec, StepLaw};

/// Where a single step from a window cell lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Another in-cone cell of the window (flat index).
    Cell(usize),
    /// Outside the cone: the walk is killed.
    Killed,
    /// Inside the cone but beyond the window.
    Truncated,
}

/// Axis-aligned box `lo ≤ y ≤ hi` intersected with an open cone.
#[derive(Debug, Clone)]
pub struct Window {
    dim: usize,
    lo: Vec<i64>,
    hi: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
    inside: Vec<bool>,
    radius: i64,
}

impl Window {
    /// Window of sup-radius `radius` adapted to the cone: `[1, L]ᵈ` for the
    /// orthant, `[-L, L]ᵈ` otherwise.
    pub fn new(cone: &ConeSpec, radius: i64) -> Result<Self> {
        cone.validate()?;
        if radius < 1 {
            return Err(LabError::Config(format!("window radius must be >= 1, got {radius}")));
        }
        let dim = cone.dim();
        let (lo, hi) = match cone {
            ConeSpec::Orthant { .. } => (vec![1; dim], vec![radius; dim]),
            _ => (vec![-radius; dim], vec![radius; dim]),
        };
        let mut strides = vec![1usize; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (hi[k + 1] - lo[k + 1] + 1) as usize;
        }
        let len = strides[0] * (hi[0] - lo[0] + 1) as usize;
        let mut w = Window {
            dim,
            lo,
            hi,
            strides,
            len,
            inside: Vec::new(),
            radius,
        };
        w.inside = (0..len).map(|i| cone.contains_lattice(&w.point(i))).collect();
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Number of cells in the bounding box (inside the cone or not).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn in_box(&self, y: &[i64]) -> bool {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| v >= l && v <= h)
    }

    /// Flat index of an in-box point.
    pub fn index(&self, y: &[i64]) -> Option<usize> {
        if y.len() != self.dim || !self.in_box(y) {
            return None;
        }
        Some(
            y.iter()
                .zip(&self.lo)
                .zip(&self.strides)
                .map(|((v, l), s)| (v - l) as usize * s)
                .sum(),
        )
    }

    /// Index of a point that is inside both the box and the cone.
    pub fn cell(&self, y: &[i64]) -> Option<usize> {
        self.index(y).filter(|&i| self.inside[i])
    }

    pub fn point(&self, idx: usize) -> Vec<i64> {
        let mut rem = idx;
        (0..self.dim)
            .map(|k| {
                let v = self.lo[k] + (rem / self.strides[k]) as i64;
                rem %= self.strides[k];
                v
            })
            .collect()
    }

    pub fn is_inside(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    /// Flat indices of in-cone cells, in increasing order.
    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.inside[i])
    }

    /// Sup-norm of the cell's coordinates.
    pub fn sup_norm(&self, idx: usize) -> i64 {
        self.point(idx).iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

/// A window together with the move table of a step law.
#[derive(Debug, Clone)]
pub struct Transitions {
    pub window: Window,
    pub probs: Vec<f64>,
    pub steps: Vec<Vec<i64>>,
    /// `targets[cell * n_steps + k]` for every box cell.
    targets: Vec<Target>,
    /// Cells from which some step lands in `K` beyond the window.
    leaky: Vec<bool>,
}

impl Transitions {
    pub fn new(law: &StepLaw, cone: &ConeSpec, window: Window) -> Result<Self> {
        if law.dim() != window.dim() {
            return Err(LabError::Dimension {
                expected: window.dim(),
                got: law.dim(),
            });
        }
        let m = law.len();
        let mut targets = vec![Target::Killed; window.len() * m];
        let mut leaky = vec![false; window.len()];
        for i in window.cells() {
            let p = window.point(i);
            for (k, (z, _)) in law.iter().enumerate() {
                let y: Vec<i64> = p.iter().zip(z).map(|(a, b)| a + b).collect();
                let t = if !cone.contains_lattice(&y) {
                    Target::Killed
                } else if let Some(j) = window.cell(&y) {
                    Target::Cell(j)
                } else {
                    leaky[i] = true;
                    Target::Truncated
                };
                targets[i * m + k] = t;
            }
        }
        Ok(Self {
            window,
            probs: law.probs().to_vec(),
            steps: law.support().to_vec(),
            targets,
            leaky,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn target(&self, cell: usize, k: usize) -> Target {
        self.targets[cell * self.probs.len() + k]
    }

    pub fn is_leaky(&self, cell: usize) -> bool {
        self.leaky[cell]
    }

    /// One forward step of a measure: `out(y) = Σ_x m(x) P(x + X = y)` over
    /// window cells, divided by `scale`. Returns the mass that left the
    /// cone and the mass truncated at the window edge (both before scaling).
    pub fn push_forward(&self, m: &[f64], out: &mut [f64], scale: f64) -> (f64, f64) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = self.probs.len();
        let inv = 1.0 / scale;
        let mut killed = 0.0;
        let mut truncated = 0.0;
        for (i, &mass) in m.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for k in 0..n {
                let w = mass * self.probs[k];
                match self.targets[i * n + k] {
                    Target::Cell(j) => out[j] += w * inv,
                    Target::Killed => killed += w,
                    Target::Truncated => truncated += w,
                }
            }
        }
        (killed, truncated)
    }

    /// Mass sitting on cells that can step beyond the window.
    pub fn edge_mass(&self, m: &[f64]) -> f64 {
        m.iter()
            .zip(&self.leaky)
            .filter(|(_, l)| **l)
            .map(|(v, _)| v)
            .sum()
    }
}
