//! Harmonic functions: the continuous `u` of the whitened cone, the discrete
//! `V`, `V′` of the killed driftless walk and its reversal, and the
//! c-harmonic `U`, `U′` of the original walk.
//!
//! Tables are stored on a [`Window`] indexed by the original integer
//! coordinates `y`; the value at `y` stands for the function at `ŷ = M y`.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::cramer::CramerData;
use crate::error::{LabError, Result};
use crate::lattice::{Target, Transitions, Window};
use crate::model::{boundary_angle_check, dot, norm, ConeSpec, StepLaw};
use crate::whiten::{ConeImage, WhiteningData};

pub const DEFAULT_WINDOW: i64 = 60;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_ITER: usize = 5000;
/// Allowed U′ mass beyond the window, relative to the in-window sum.
pub const TAIL_REL: f64 = 1e-8;

const ANGLE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarmonicKind {
    /// `u(r, θ) = rᵖ sin(p(θ − start))` on `start ≤ θ ≤ start + π/p`.
    Wedge2d { start: f64 },
    /// `u(x) = Π xᵢ`, degree `d`.
    OrthantProduct,
    /// `u(x) = x` on the positive half-line.
    Halfline,
}

/// Positive harmonic function of the image cone vanishing on its boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuousHarmonic {
    pub kind: HarmonicKind,
    pub p: f64,
}

impl ContinuousHarmonic {
    pub fn wedge(p: f64, start: f64) -> Self {
        Self {
            kind: HarmonicKind::Wedge2d { start },
            p,
        }
    }

    pub fn orthant(dim: usize) -> Self {
        Self {
            kind: HarmonicKind::OrthantProduct,
            p: dim as f64,
        }
    }

    pub fn halfline() -> Self {
        Self {
            kind: HarmonicKind::Halfline,
            p: 1.0,
        }
    }

    pub fn from_whitening(w: &WhiteningData) -> Result<Self> {
        match (&w.image, w.cov.nrows()) {
            (ConeImage::Wedge { opening, start }, _) => Ok(Self::wedge(PI / opening, *start)),
            (ConeImage::Orthant { dim }, _) => Ok(Self::orthant(*dim)),
            (ConeImage::Halfspace, 1) => Ok(Self::halfline()),
            (img, d) => Err(LabError::Domain(format!(
                "no closed-form harmonic function for image {img:?} in dimension {d}"
            ))),
        }
    }

    /// Evaluates `u` on the closed image cone.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            HarmonicKind::Wedge2d { start } => {
                if x.len() != 2 {
                    return Err(LabError::Dimension {
                        expected: 2,
                        got: x.len(),
                    });
                }
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    return Ok(0.0);
                }
                let psi = (x[1].atan2(x[0]) - start).rem_euclid(2.0 * PI);
                let span = PI / self.p;
                if psi <= span + ANGLE_SLACK {
                    Ok((r.powf(self.p) * (self.p * psi.min(span)).sin()).max(0.0))
                } else if psi >= 2.0 * PI - ANGLE_SLACK {
                    Ok(0.0)
                } else {
                    Err(LabError::Domain(format!("{x:?} lies outside the image wedge")))
                }
            }
            HarmonicKind::OrthantProduct => {
                if x.iter().any(|&v| v < -1e-12 * (1.0 + norm(x))) {
                    return Err(LabError::Domain(format!("{x:?} lies outside the orthant")));
                }
                Ok(x.iter().map(|v| v.max(0.0)).product())
            }
            HarmonicKind::Halfline => {
                if x.len() != 1 {
                    return Err(LabError::Dimension {
                        expected: 1,
                        got: x.len(),
                    });
                }
                if x[0] < -1e-12 {
                    return Err(LabError::Domain(format!("{} is negative", x[0])));
                }
                Ok(x[0].max(0.0))
            }
        }
    }
}

/// `u_eval` as a free function.
pub fn u_eval(ch: &ContinuousHarmonic, x: &[f64]) -> Result<f64> {
    ch.eval(x)
}

/// Discrete harmonic tables on a truncated window.
#[derive(Debug, Clone)]
pub struct HarmonicTables {
    pub window: Window,
    /// `V(ŷ)` for the killed whitened walk.
    pub v: Vec<f64>,
    /// `V′(ŷ)` for the killed reversed walk.
    pub v_prime: Vec<f64>,
    /// `U(x) = e^{h·x} V(x̂)`; empty until [`build_u_tables`].
    pub u: Vec<f64>,
    /// `U′(y) = e^{-h·y} V′(ŷ)`; empty until [`build_u_tables`].
    pub u_prime: Vec<f64>,
    pub kappa: Option<f64>,
    pub convergence_residual: f64,
    pub iterations: [usize; 2],
    pub converged: bool,
    /// Fitted `C` in `V(ŷ) ≤ C(1 + |ŷ|ᵖ)`, max over `V` and `V′`.
    pub growth_constant: f64,
    pub p: f64,
}

impl HarmonicTables {
    fn lookup(&self, table: &[f64], y: &[i64]) -> Option<f64> {
        if table.is_empty() {
            return None;
        }
        self.window.cell(y).map(|i| table[i])
    }

    pub fn v_at(&self, y: &[i64]) -> Option<f64> {
        self.lookup(&self.v, y)
    }

    pub fn v_prime_at(&self, y: &[i64]) -> Option<f64> {
        self.lookup(&self.v_prime, y)
    }

    pub fn u_at(&self, y: &[i64]) -> Option<f64> {
        self.lookup(&self.u, y)
    }

    pub fn u_prime_at(&self, y: &[i64]) -> Option<f64> {
        self.lookup(&self.u_prime, y)
    }

    /// Cells with sup-norm at most half the window radius.
    pub fn inner_cells(&self) -> Vec<usize> {
        let half = self.window.radius() / 2;
        self.window
            .cells()
            .filter(|&i| self.window.sup_norm(i) <= half)
            .collect()
    }

    /// The Yaglom profile `κ U′` as a probability vector over the window.
    pub fn yaglom_profile(&self) -> Result<Vec<f64>> {
        let kappa = self
            .kappa
            .ok_or_else(|| LabError::MissingInput("U′ tables not built".into()))?;
        Ok(self.u_prime.iter().map(|v| kappa * v).collect())
    }

    /// CSV with columns `x1..xd,V,Vprime,U,Uprime`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.window.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.extend(["V", "Vprime", "U", "Uprime"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for i in self.window.cells() {
            let p = self.window.point(i);
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            for t in [&self.v, &self.v_prime, &self.u, &self.u_prime] {
                row.push(crate::report::fmt_f64(t.get(i).copied().unwrap_or(f64::NAN)));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct Iterated {
    values: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

/// Killed-expectation iteration `V_{n+1}(y) = E[V_n(y + X̃); y + X̃ ∈ K]` from
/// `V_0 = u∘M`, where steps leaving the window are frozen at `u(M(y + z))`.
fn iterate_killed_expectation(
    law: &StepLaw,
    cone: &ConeSpec,
    whitening: &WhiteningData,
    ch: &ContinuousHarmonic,
    radius: i64,
    n_iter: usize,
    tol: f64,
) -> Result<Iterated> {
    let window = Window::new(cone, radius)?;
    let tr = Transitions::new(law, cone, window)?;
    let w = &tr.window;
    let n = tr.n_steps();
    let u_at = |y: &[i64]| -> Result<f64> { ch.eval(&whitening.apply(y)) };

    let mut values = vec![0.0; w.len()];
    let mut frozen = vec![0.0; w.len()];
    for i in w.cells() {
        let p = w.point(i);
        values[i] = u_at(&p)?;
        for k in 0..n {
            if tr.target(i, k) == Target::Truncated {
                let y: Vec<i64> = p.iter().zip(&tr.steps[k]).map(|(a, b)| a + b).collect();
                frozen[i] += tr.probs[k] * u_at(&y)?;
            }
        }
    }
    let cells: Vec<usize> = w.cells().collect();
    let inner: Vec<usize> = cells
        .iter()
        .copied()
        .filter(|&i| w.sup_norm(i) <= radius / 2)
        .collect();
    let mut next = values.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < n_iter {
        iterations += 1;
        for &i in &cells {
            let mut acc = frozen[i];
            for k in 0..n {
                if let Target::Cell(j) = tr.target(i, k) {
                    acc += tr.probs[k] * values[j];
                }
            }
            next[i] = acc;
        }
        residual = inner
            .iter()
            .filter(|&&i| next[i] > 0.0)
            .map(|&i| (next[i] - values[i]).abs() / next[i])
            .fold(0.0, f64::max);
        std::mem::swap(&mut values, &mut next);
        if residual < tol {
            break;
        }
    }
    Ok(Iterated {
        values,
        residual,
        iterations,
        converged: residual < tol,
    })
}

/// Builds `V` for the whitened tilted walk and `V′` for its reversal.
pub fn build_v_tables(
    tilted: &StepLaw,
    cone: &ConeSpec,
    whitening: &WhiteningData,
    ch: &ContinuousHarmonic,
    radius: i64,
    n_iter: usize,
) -> Result<HarmonicTables> {
    let drift = norm(&tilted.mean());
    if drift > 1e-10 {
        return Err(LabError::Domain(format!(
            "harmonic tables need a driftless law, drift norm is {drift:e}"
        )));
    }
    let fwd = iterate_killed_expectation(tilted, cone, whitening, ch, radius, n_iter, DEFAULT_TOL)?;
    let rev = iterate_killed_expectation(
        &tilted.reversed(),
        cone,
        whitening,
        ch,
        radius,
        n_iter,
        DEFAULT_TOL,
    )?;
    let window = Window::new(cone, radius)?;
    let mut growth: f64 = 0.0;
    for i in window.cells() {
        let yhat = whitening.apply(&window.point(i));
        let denom = 1.0 + norm(&yhat).powf(ch.p);
        growth = growth.max(fwd.values[i] / denom).max(rev.values[i] / denom);
    }
    Ok(HarmonicTables {
        window,
        v: fwd.values,
        v_prime: rev.values,
        u: Vec::new(),
        u_prime: Vec::new(),
        kappa: None,
        convergence_residual: fwd.residual.max(rev.residual),
        iterations: [fwd.iterations, rev.iterations],
        converged: fwd.converged && rev.converged,
        growth_constant: growth,
        p: ch.p,
    })
}

/// Calls `f` on every lattice point with sup-norm exactly `k`.
fn for_each_on_shell(dim: usize, k: i64, f: &mut impl FnMut(&[i64])) {
    // the first coordinate of absolute value k is fixed at position `lead`
    let mut y = vec![0i64; dim];
    for lead in 0..dim {
        for sign in [-k, k] {
            y[lead] = sign;
            fill_shell(&mut y, 0, lead, k, f);
        }
    }
}

fn fill_shell(y: &mut [i64], pos: usize, lead: usize, k: i64, f: &mut impl FnMut(&[i64])) {
    if pos == y.len() {
        f(y);
        return;
    }
    if pos == lead {
        return fill_shell(y, pos + 1, lead, k, f);
    }
    let bound = if pos < lead { k - 1 } else { k };
    for v in -bound..=bound {
        y[pos] = v;
        fill_shell(y, pos + 1, lead, k, f);
    }
}

/// Upper bound on `Σ_{y ∈ K, |y|_∞ > L} e^{-h·y} C(1 + |M y|ᵖ)`.
///
/// Shells are summed exactly until the crude envelope
/// `#shell · e^{-a k} C (1 + (|M| √d k)ᵖ)`, valid since `h·y ≥ a |y|_∞` on `K`,
/// is negligible; the envelope then bounds the remainder.
fn u_prime_tail_bound(
    cone: &ConeSpec,
    h: &[f64],
    whitening: &WhiteningData,
    a: f64,
    growth: f64,
    p: f64,
    radius: i64,
) -> f64 {
    let dim = h.len();
    let m_norm = whitening.m.norm();
    let envelope = |k: i64| {
        let kf = k as f64;
        let shell = (2.0 * kf + 1.0).powi(dim as i32) - (2.0 * kf - 1.0).powi(dim as i32);
        shell * (-a * kf).exp() * growth * (1.0 + (m_norm * (dim as f64).sqrt() * kf).powf(p))
    };
    let mut total = 0.0;
    let mut k = radius + 1;
    loop {
        for_each_on_shell(dim, k, &mut |y| {
            if cone.contains_lattice(y) {
                let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
                let yhat = whitening.apply(y);
                total += (-dot(h, &yf)).exp() * growth * (1.0 + norm(&yhat).powf(p));
            }
        });
        k += 1;
        if envelope(k) <= 1e-6 * total || k > radius + 2000 {
            break;
        }
    }
    let mut rest = 0.0;
    loop {
        let term = envelope(k);
        rest += term;
        if term <= 1e-12 * rest || k > radius + 100_000 {
            break;
        }
        k += 1;
    }
    total + rest
}

/// Assembles `U`, `U′` and the normalizer `κ = 1/Σ U′`.
pub fn build_u_tables(
    mut tables: HarmonicTables,
    cramer: &CramerData,
    whitening: &WhiteningData,
    cone: &ConeSpec,
) -> Result<HarmonicTables> {
    let w = &tables.window;
    let h = &cramer.h;
    let mut u = vec![0.0; w.len()];
    let mut up = vec![0.0; w.len()];
    for i in w.cells() {
        let y: Vec<f64> = w.point(i).iter().map(|&v| v as f64).collect();
        let hy = dot(h, &y);
        u[i] = hy.exp() * tables.v[i];
        up[i] = (-hy).exp() * tables.v_prime[i];
    }
    if u.iter().chain(&up).any(|v| !v.is_finite()) {
        return Err(LabError::Inconsistent(
            "U or U′ overflowed on the window".into(),
        ));
    }
    let total: f64 = up.iter().sum();
    if total <= 0.0 {
        return Err(LabError::Inconsistent("Σ U′ is not positive".into()));
    }
    let angles = boundary_angle_check(cone, h)?;
    if !angles.ok {
        return Err(LabError::Domain(format!(
            "boundary angle {} is not below π/2: Σ e^(-h·y) diverges",
            angles.worst_angle
        )));
    }
    let a = angles.worst_angle.cos() * norm(h);
    let bound = |r: i64| {
        u_prime_tail_bound(cone, h, whitening, a, tables.growth_constant, tables.p, r)
    };
    let tail = bound(w.radius());
    let allowed = TAIL_REL * total;
    if tail >= allowed {
        let mut suggested = w.radius();
        while bound(suggested) >= allowed && suggested < w.radius() * 64 {
            suggested += (suggested / 8).max(1);
        }
        return Err(LabError::TailBound {
            tail,
            allowed,
            suggested,
        });
    }
    tables.u = u;
    tables.u_prime = up;
    tables.kappa = Some(1.0 / total);
    Ok(tables)
}

/// Test points: inner cells whose every successor stays in the window.
fn interior_points(tables: &HarmonicTables, tr: &Transitions) -> Vec<usize> {
    tables
        .inner_cells()
        .into_iter()
        .filter(|&i| (0..tr.n_steps()).all(|k| tr.target(i, k) != Target::Truncated))
        .collect()
}

/// `max |Σ_y P(x + X = y) U(y) − c U(x)| / (c U(x))` over interior test points.
pub fn c_harmonicity_residual(
    tables: &HarmonicTables,
    law: &StepLaw,
    cone: &ConeSpec,
    c: f64,
) -> Result<f64> {
    if tables.u.is_empty() {
        return Err(LabError::MissingInput("U tables not built".into()));
    }
    let tr = Transitions::new(law, cone, tables.window.clone())?;
    let mut worst: f64 = 0.0;
    for i in interior_points(tables, &tr) {
        let mut acc = 0.0;
        for k in 0..tr.n_steps() {
            if let Target::Cell(j) = tr.target(i, k) {
                acc += tr.probs[k] * tables.u[j];
            }
        }
        worst = worst.max((acc - c * tables.u[i]).abs() / (c * tables.u[i]));
    }
    Ok(worst)
}

/// `max |Σ_x U′(x) P(x + X = y) − c U′(y)| / (c U′(y))` over interior test points.
pub fn qsd_identity_residual(
    tables: &HarmonicTables,
    law: &StepLaw,
    cone: &ConeSpec,
    c: f64,
) -> Result<f64> {
    if tables.u_prime.is_empty() {
        return Err(LabError::MissingInput("U′ tables not built".into()));
    }
    // predecessors of y under X are successors under −X
    let tr = Transitions::new(&law.reversed(), cone, tables.window.clone())?;
    let mut worst: f64 = 0.0;
    for i in interior_points(tables, &tr) {
        let mut acc = 0.0;
        for k in 0..tr.n_steps() {
            if let Target::Cell(j) = tr.target(i, k) {
                acc += tr.probs[k] * tables.u_prime[j];
            }
        }
        worst = worst.max((acc - c * tables.u_prime[i]).abs() / (c * tables.u_prime[i]));
    }
    Ok(worst)
}

/// `max |Σ_z p̃_z V(y + z) − V(y)| / V(y)` over interior test points.
pub fn v_harmonicity_residual(
    tables: &HarmonicTables,
    tilted: &StepLaw,
    cone: &ConeSpec,
) -> Result<f64> {
    let tr = Transitions::new(tilted, cone, tables.window.clone())?;
    let mut worst: f64 = 0.0;
    for i in interior_points(tables, &tr) {
        let mut acc = 0.0;
        for k in 0..tr.n_steps() {
            if let Target::Cell(j) = tr.target(i, k) {
                acc += tr.probs[k] * tables.v[j];
            }
        }
        worst = worst.max((acc - tables.v[i]).abs() / tables.v[i]);
    }
    Ok(worst)
}

/// Everything needed downstream from the harmonic stage.
pub fn build_tables(
    cramer: &CramerData,
    whitening: &WhiteningData,
    cone: &ConeSpec,
    radius: i64,
    n_iter: usize,
) -> Result<HarmonicTables> {
    let ch = ContinuousHarmonic::from_whitening(whitening)?;
    let v = build_v_tables(&cramer.tilted, cone, whitening, &ch, radius, n_iter)?;
    build_u_tables(v, cramer, whitening, cone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cramer::solve_cramer_point;
    use crate::model::{diagonal_walk, nn4};
    use crate::whiten::{whiten, WhiteningMode};

    fn laplacian_residual(ch: &ContinuousHarmonic, x: [f64; 2]) -> f64 {
        let s = 1e-3;
        let f = |a: f64, b: f64| ch.eval(&[a, b]).unwrap();
        let lap = (f(x[0] + s, x[1]) + f(x[0] - s, x[1]) + f(x[0], x[1] + s) + f(x[0], x[1] - s)
            - 4.0 * f(x[0], x[1]))
            / (s * s);
        // compare against the size of the second derivatives
        let scale = f(x[0], x[1]) / (x[0] * x[0] + x[1] * x[1]);
        lap.abs() / scale.max(1e-300)
    }

    #[test]
    fn u_examples() {
        assert_eq!(ContinuousHarmonic::orthant(2).eval(&[2.0, 3.0]).unwrap(), 6.0);
        let w = ContinuousHarmonic::wedge(2.0, 0.0);
        let x = [(PI / 4.0).cos(), (PI / 4.0).sin()];
        assert!((w.eval(&x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(w.eval(&[3.0, 0.0]).unwrap(), 0.0);
        assert!(w.eval(&[0.0, 3.0]).unwrap().abs() < 1e-12);
        assert_eq!(ContinuousHarmonic::orthant(2).eval(&[0.0, 5.0]).unwrap(), 0.0);
        assert_eq!(ContinuousHarmonic::halfline().eval(&[0.0]).unwrap(), 0.0);
        assert!(w.eval(&[-1.0, -1.0]).is_err());
        assert!(ContinuousHarmonic::orthant(2).eval(&[-1.0, 1.0]).is_err());
        assert!(ContinuousHarmonic::halfline().eval(&[-2.0]).is_err());
    }

    #[test]
    fn u_is_harmonic_and_homogeneous() {
        let wedges = [
            ContinuousHarmonic::wedge(2.0959, 0.3),
            ContinuousHarmonic::wedge(1.5, -0.2),
            ContinuousHarmonic::wedge(3.0, 1.0),
        ];
        for ch in wedges {
            let start = match ch.kind {
                HarmonicKind::Wedge2d { start } => start,
                _ => unreachable!(),
            };
            for frac in [0.2, 0.5, 0.8] {
                let th = start + frac * PI / ch.p;
                for r in [1.0, 4.0] {
                    let x = [r * th.cos(), r * th.sin()];
                    assert!(laplacian_residual(&ch, x) < 1e-6);
                    for lam in [2.0, 3.0] {
                        let lhs = ch.eval(&[lam * x[0], lam * x[1]]).unwrap();
                        let rhs = lam.powf(ch.p) * ch.eval(&x).unwrap();
                        assert!((lhs - rhs).abs() <= 1e-10 * rhs);
                    }
                }
            }
        }
        let o = ContinuousHarmonic::orthant(2);
        assert!(laplacian_residual(&o, [1.3, 2.7]) < 1e-6);
    }

    fn nn4_tables(radius: i64) -> (CramerData, WhiteningData, HarmonicTables) {
        let cd = solve_cramer_point(&nn4()).unwrap();
        let cone = ConeSpec::orthant(2);
        let w = whiten(&cd.tilted, &cone, WhiteningMode::General).unwrap();
        let t = build_tables(&cd, &w, &cone, radius, DEFAULT_ITER).unwrap();
        (cd, w, t)
    }

    #[test]
    fn nn4_v_is_product() {
        let (_, _, t) = nn4_tables(DEFAULT_WINDOW);
        assert!(t.converged);
        assert!(t.convergence_residual < 1e-6);
        // u(My) = 2 y₁ y₂ is exactly discrete-harmonic for the tilted walk
        for y in [[1, 1], [2, 5], [7, 3], [10, 10]] {
            let v = t.v_at(&y).unwrap();
            assert!((v - 2.0 * (y[0] * y[1]) as f64).abs() < 1e-9 * v);
        }
        // ratio V/u along the diagonal is constant
        let r: Vec<f64> = (1..15)
            .map(|k| t.v_at(&[k, k]).unwrap() / (2.0 * (k * k) as f64))
            .collect();
        assert!(r.iter().all(|v| (v - r[0]).abs() < 1e-9));
    }

    #[test]
    fn nn4_identities() {
        let (cd, _, t) = nn4_tables(DEFAULT_WINDOW);
        let cone = ConeSpec::orthant(2);
        assert!(c_harmonicity_residual(&t, &nn4(), &cone, cd.c).unwrap() < 1e-6);
        assert!(qsd_identity_residual(&t, &nn4(), &cone, cd.c).unwrap() < 1e-6);
        assert!(v_harmonicity_residual(&t, &cd.tilted, &cone).unwrap() < 1e-6);
        let k = t.kappa.unwrap();
        assert!(k.is_finite() && k > 0.0);
        // U ratios on a level set of e^{h·x} reduce to V ratios
        let (a, b) = ([2, 6], [4, 4]);
        let lhs = t.u_at(&a).unwrap() / t.u_at(&b).unwrap();
        let rhs = t.v_at(&a).unwrap() / t.v_at(&b).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn diagonal_tables_are_harmonic_and_symmetric() {
        let cd = solve_cramer_point(&diagonal_walk()).unwrap();
        let cone = ConeSpec::orthant(2);
        let w = whiten(&cd.tilted, &cone, WhiteningMode::General).unwrap();
        let ch = ContinuousHarmonic::from_whitening(&w).unwrap();
        let t = build_v_tables(&cd.tilted, &cone, &w, &ch, DEFAULT_WINDOW, DEFAULT_ITER).unwrap();
        assert!(v_harmonicity_residual(&t, &cd.tilted, &cone).unwrap() < 1e-5);
        // positivity next to the boundary
        assert!(t.v_at(&[1, 1]).unwrap() > 0.0);
        assert!(t.v_at(&[1, 7]).unwrap() > 0.0);
        // the tilted law is swap-invariant, so V is too
        for y in [[1, 2], [3, 8], [5, 11]] {
            let a = t.v_at(&y).unwrap();
            let b = t.v_at(&[y[1], y[0]]).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn tail_bound_rejects_tiny_window() {
        let cd = solve_cramer_point(&nn4()).unwrap();
        let cone = ConeSpec::orthant(2);
        let w = whiten(&cd.tilted, &cone, WhiteningMode::General).unwrap();
        match build_tables(&cd, &w, &cone, 8, DEFAULT_ITER) {
            Err(LabError::TailBound { suggested, .. }) => assert!(suggested > 8),
            other => panic!("expected tail-bound error, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_has_header() {
        let (_, _, t) = nn4_tables(DEFAULT_WINDOW);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,V,Vprime,U,Uprime\n"));
        assert_eq!(text.lines().count(), 1 + 3600);
    }

    #[test]
    fn rejects_drifted_law() {
        let cd = solve_cramer_point(&nn4()).unwrap();
        let cone = ConeSpec::orthant(2);
        let w = whiten(&cd.tilted, &cone, WhiteningMode::General).unwrap();
        let ch = ContinuousHarmonic::from_whitening(&w).unwrap();
        assert!(build_v_tables(&nn4(), &cone, &w, &ch, 20, 10).is_err());
    }
}
