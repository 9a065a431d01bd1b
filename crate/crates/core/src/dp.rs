//! Exact dynamic-programming evolution of killed walks on a truncated window.
//!
//! Measures are divided by the rescale factor every step, so with the Cramér
//! rate as rescale the survival sequence `b_n = P(τ > n)/cⁿ` stays of order
//! one for hundreds of steps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::cramer::{solve_cramer_point, CramerData};
use crate::error::{LabError, Result};
use crate::lattice::{Target, Transitions, Window};
use crate::model::{boundary_angle_check, dot, norm, ConeSpec, StepLaw};
use crate::report::fmt_f64;

/// Edge mass allowed relative to `b_n`.
pub const EDGE_TOL: f64 = 1e-12;

/// Which per-time tables to keep.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Retain {
    #[default]
    None,
    All,
    At(BTreeSet<usize>),
}

impl Retain {
    fn keeps(&self, n: usize) -> bool {
        match self {
            Retain::None => false,
            Retain::All => true,
            Retain::At(s) => s.contains(&n),
        }
    }

    /// Keeps `n, n+1, …, n+len-1` for every `n` in `times`.
    pub fn blocks(times: impl IntoIterator<Item = usize>, len: usize) -> Self {
        Retain::At(
            times
                .into_iter()
                .flat_map(|n| n..n + len.max(1))
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct DpOptions {
    pub radius: i64,
    pub retain: Retain,
    /// `None` turns the edge-mass monitor off (for deliberately small windows).
    pub edge_tol: Option<f64>,
}

impl DpOptions {
    pub fn new(radius: i64) -> Self {
        Self {
            radius,
            retain: Retain::None,
            edge_tol: Some(EDGE_TOL),
        }
    }

    pub fn retain(mut self, retain: Retain) -> Self {
        self.retain = retain;
        self
    }

    pub fn unmonitored(mut self) -> Self {
        self.edge_tol = None;
        self
    }
}

/// Survival series of one killed evolution and its retained tables.
#[derive(Debug, Clone)]
pub struct DpSeries {
    pub x0: Vec<i64>,
    pub n_max: usize,
    pub rescale: f64,
    /// `b_n = P(τ > n)/rescaleⁿ` for `n = 0..=n_max`.
    pub survival: Vec<f64>,
    /// `e_n = P(τ = n)/rescaleⁿ`, with `e_0 = 0`.
    pub exit: Vec<f64>,
    /// `q⁽ⁿ⁾(x0, ·)/rescaleⁿ` over the window at retained times.
    pub tables: BTreeMap<usize, Vec<f64>>,
    /// Largest edge mass relative to `b_n` seen during the run.
    pub max_edge_ratio: f64,
    /// Total rescaled mass lost at the window edge.
    pub truncated: f64,
    pub transitions: Transitions,
}

impl DpSeries {
    pub fn is_rescaled(&self) -> bool {
        self.rescale != 1.0
    }

    pub fn window(&self) -> &Window {
        &self.transitions.window
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(LabError::Horizon(format!(
                "time {n} is beyond the horizon {}",
                self.n_max
            )));
        }
        Ok(())
    }

    pub fn table(&self, n: usize) -> Result<&[f64]> {
        self.check_n(n)?;
        self.tables
            .get(&n)
            .map(Vec::as_slice)
            .ok_or_else(|| LabError::Horizon(format!("no table retained at time {n}")))
    }

    /// `ln P(τ > n)`.
    pub fn raw_survival_log(&self, n: usize) -> Result<f64> {
        self.check_n(n)?;
        Ok(self.survival[n].ln() + n as f64 * self.rescale.ln())
    }

    pub fn raw_survival(&self, n: usize) -> Result<f64> {
        Ok(self.raw_survival_log(n)?.exp())
    }

    /// `ln P(τ = n)`.
    pub fn exit_pmf_log(&self, n: usize) -> Result<f64> {
        self.check_n(n)?;
        Ok(self.exit[n].ln() + n as f64 * self.rescale.ln())
    }

    /// `P(τ = n)/P(τ > n)`.
    pub fn hazard(&self, n: usize) -> Result<f64> {
        self.check_n(n)?;
        Ok(self.exit[n] / self.survival[n])
    }

    /// `q⁽ⁿ⁾(x0, y)/rescaleⁿ`, zero outside the cone or window.
    pub fn density_at(&self, n: usize, y: &[i64]) -> Result<f64> {
        let t = self.table(n)?;
        Ok(self.window().cell(y).map(|i| t[i]).unwrap_or(0.0))
    }

    /// Law of `x0 + S(n)` given `τ > n`, over the window.
    pub fn conditional(&self, n: usize) -> Result<Vec<f64>> {
        let t = self.table(n)?;
        let total: f64 = t.iter().sum();
        Ok(t.iter().map(|v| v / total).collect())
    }

    /// Conditional law summed over `period` consecutive times starting at `n`
    /// and renormalized; removes the parity oscillation of periodic walks.
    pub fn merged_conditional(&self, n: usize, period: usize) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.window().len()];
        for k in n..n + period.max(1) {
            for (a, v) in acc.iter_mut().zip(self.table(k)?) {
                *a += v;
            }
        }
        normalize(&mut acc);
        Ok(acc)
    }

    /// `P(x0 + S(τ) = y, τ = n)/rescaleⁿ` for the exit points `y ∉ K`.
    pub fn exit_positions(&self, n: usize) -> Result<BTreeMap<Vec<i64>, f64>> {
        if n == 0 {
            return Ok(BTreeMap::new());
        }
        let prev = self.table(n - 1)?;
        let tr = &self.transitions;
        let w = &tr.window;
        let mut out = BTreeMap::new();
        for i in w.cells() {
            if prev[i] == 0.0 {
                continue;
            }
            let p = w.point(i);
            for k in 0..tr.n_steps() {
                if tr.target(i, k) == Target::Killed {
                    let y: Vec<i64> = p.iter().zip(&tr.steps[k]).map(|(a, b)| a + b).collect();
                    *out.entry(y).or_insert(0.0) += prev[i] * tr.probs[k] / self.rescale;
                }
            }
        }
        Ok(out)
    }

    /// Exit-position law at `τ = n`, summed over `period` consecutive exit
    /// times and normalized.
    pub fn merged_exit_law(&self, n: usize, period: usize) -> Result<BTreeMap<Vec<i64>, f64>> {
        let mut acc: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for k in n..n + period.max(1) {
            for (y, v) in self.exit_positions(k)? {
                *acc.entry(y).or_insert(0.0) += v;
            }
        }
        let total: f64 = acc.values().sum();
        acc.values_mut().for_each(|v| *v /= total);
        Ok(acc)
    }

    /// CSV with columns `n,raw_survival_log,rescaled_b_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,raw_survival_log,rescaled_b_n")?;
        for n in 0..=self.n_max {
            writeln!(
                out,
                "{n},{},{}",
                fmt_f64(self.raw_survival_log(n)?),
                fmt_f64(self.survival[n])
            )?;
        }
        Ok(())
    }
}

pub(crate) fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
}

/// Total-variation distance between two probability vectors.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Total-variation distance between two sparse laws.
pub fn tv_distance_map(a: &BTreeMap<Vec<i64>, f64>, b: &BTreeMap<Vec<i64>, f64>) -> f64 {
    let keys: BTreeSet<&Vec<i64>> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Window radius large enough for an evolution of `n_max` steps: the
/// exponential tail `e^{-h·y}` of the killed mass for drifted laws, eight
/// diffusive standard deviations for driftless ones.
pub fn suggest_window(law: &StepLaw, cone: &ConeSpec, n_max: usize) -> i64 {
    let reach = law.max_step().max(1) as f64;
    let drifted = norm(&law.mean()) > 1e-12;
    let from_drift = if drifted {
        solve_cramer_point(law).ok().and_then(|cd| {
            let check = boundary_angle_check(cone, &cd.h).ok()?;
            check
                .ok
                .then(|| (1e14f64).ln() / (check.worst_angle.cos() * norm(&cd.h)))
        })
    } else {
        None
    };
    let l = match from_drift {
        Some(l) => 1.2 * l + 4.0 * reach,
        None => {
            let var = law
                .second_moment()
                .iter()
                .enumerate()
                .map(|(i, row)| row[i])
                .fold(0.0, f64::max);
            8.0 * (n_max as f64 * var).sqrt() + 4.0 * reach
        }
    };
    l.ceil().max(8.0) as i64
}

/// Evolves `q⁽ⁿ⁾(x0, ·)/rescaleⁿ` for `n ≤ n_max`.
pub fn dp_evolve(
    law: &StepLaw,
    cone: &ConeSpec,
    x0: &[i64],
    n_max: usize,
    rescale: f64,
    opts: &DpOptions,
) -> Result<DpSeries> {
    if !(rescale > 0.0 && rescale.is_finite()) {
        return Err(LabError::Config(format!("rescale must be positive, got {rescale}")));
    }
    if x0.len() != cone.dim() {
        return Err(LabError::Dimension {
            expected: cone.dim(),
            got: x0.len(),
        });
    }
    if !cone.contains_lattice(x0) {
        return Err(LabError::Domain(format!("start {x0:?} is not inside the cone")));
    }
    let window = Window::new(cone, opts.radius)?;
    let start = window.cell(x0).ok_or_else(|| {
        LabError::Domain(format!("start {x0:?} is outside the window of radius {}", opts.radius))
    })?;
    let tr = Transitions::new(law, cone, window)?;
    let mut cur = vec![0.0; tr.window.len()];
    cur[start] = 1.0;
    let mut next = vec![0.0; cur.len()];
    let mut survival = Vec::with_capacity(n_max + 1);
    let mut exit = Vec::with_capacity(n_max + 1);
    let mut tables = BTreeMap::new();
    survival.push(1.0);
    exit.push(0.0);
    if opts.retain.keeps(0) {
        tables.insert(0, cur.clone());
    }
    let mut max_edge_ratio: f64 = 0.0;
    let mut truncated = 0.0;
    for n in 1..=n_max {
        let (killed, lost) = tr.push_forward(&cur, &mut next, rescale);
        std::mem::swap(&mut cur, &mut next);
        let b: f64 = cur.iter().sum();
        survival.push(b);
        exit.push(killed / rescale);
        truncated += lost / rescale;
        if b > 0.0 {
            let ratio = tr.edge_mass(&cur) / b;
            max_edge_ratio = max_edge_ratio.max(ratio);
            if let Some(tol) = opts.edge_tol {
                if ratio > tol {
                    let suggested = suggest_window(law, cone, n_max).max(opts.radius * 3 / 2);
                    return Err(LabError::WindowTooSmall {
                        edge_ratio: ratio,
                        suggested,
                    });
                }
            }
        }
        if opts.retain.keeps(n) {
            tables.insert(n, cur.clone());
        }
    }
    Ok(DpSeries {
        x0: x0.to_vec(),
        n_max,
        rescale,
        survival,
        exit,
        tables,
        max_edge_ratio,
        truncated,
        transitions: tr,
    })
}

/// `P(x + S(m) ∈ A | τ > n, x + S(n) = z)` from the Markov factorization
/// `Σ_{y ∈ A} q⁽ᵐ⁾(x, y) q⁽ⁿ⁻ᵐ⁾(y, z) / q⁽ⁿ⁾(x, z)`.
///
/// `from_x` must retain times `m` and `n`; `from_a[k]` is the series started
/// at `a_set[k]` retaining `n − m`. All series share the rescale factor.
pub fn bridge_probability(
    from_x: &DpSeries,
    a_set: &[Vec<i64>],
    from_a: &[DpSeries],
    z: &[i64],
    m: usize,
    n: usize,
) -> Result<f64> {
    if m > n {
        return Err(LabError::Horizon(format!("bridge time {m} exceeds {n}")));
    }
    if a_set.len() != from_a.len() {
        return Err(LabError::MissingInput("one series per bridge point is required".into()));
    }
    let denom = from_x.density_at(n, z)?;
    if denom == 0.0 {
        return Err(LabError::Domain(format!("endpoint {z:?} is unreachable at time {n}")));
    }
    let mut num = 0.0;
    for (y, s) in a_set.iter().zip(from_a) {
        if s.x0 != *y || s.rescale != from_x.rescale {
            return Err(LabError::Inconsistent(format!(
                "series for bridge point {y:?} does not match"
            )));
        }
        num += from_x.density_at(m, y)? * s.density_at(n - m, z)?;
    }
    Ok(num / denom)
}

/// Max over `n ≤ n_max` and `y` of `|q⁽ⁿ⁾(x0,y)/cⁿ − e^{h·(x0−y)} d⁽ⁿ⁾(x0,y)|`,
/// where `d` is the killed tilted walk on the same window.
pub fn check_tilt_identity(
    law: &StepLaw,
    cramer: &CramerData,
    cone: &ConeSpec,
    x0: &[i64],
    n_max: usize,
    radius: i64,
) -> Result<f64> {
    let opts = DpOptions::new(radius).retain(Retain::All).unmonitored();
    let q = dp_evolve(law, cone, x0, n_max, cramer.c, &opts)?;
    let d = dp_evolve(&cramer.tilted, cone, x0, n_max, 1.0, &opts)?;
    let w = q.window();
    let weights: Vec<f64> = (0..w.len())
        .map(|i| {
            let diff: Vec<f64> = w
                .point(i)
                .iter()
                .zip(x0)
                .map(|(y, x)| (x - y) as f64)
                .collect();
            dot(&cramer.h, &diff).exp()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for n in 0..=n_max {
        let (a, b) = (q.table(n)?, d.table(n)?);
        for i in w.cells() {
            worst = worst.max((a[i] - weights[i] * b[i]).abs());
        }
    }
    Ok(worst)
}

/// One-dimensional reduction along a half-space normal.
#[derive(Debug, Clone)]
pub struct HalfspaceReduction {
    pub law: StepLaw,
    pub cramer: CramerData,
    pub series: DpSeries,
}

/// Law of `a·X` on ℤ.
pub fn project_law(law: &StepLaw, a: &[f64]) -> Result<StepLaw> {
    if a.len() != law.dim() {
        return Err(LabError::Dimension {
            expected: law.dim(),
            got: a.len(),
        });
    }
    let mut merged: BTreeMap<i64, f64> = BTreeMap::new();
    for (z, p) in law.iter() {
        let s: f64 = z.iter().zip(a).map(|(&zi, ai)| zi as f64 * ai).sum();
        let r = s.round();
        if (s - r).abs() > 1e-12 {
            return Err(LabError::Domain(format!(
                "projection a·z = {s} of step {z:?} is not an integer"
            )));
        }
        *merged.entry(r as i64).or_insert(0.0) += p;
    }
    StepLaw::from_pairs(merged.into_iter().map(|(s, p)| (vec![s], p)))
}

/// Killed 1D walk `a·S(n)` started at `height` on the positive half-line,
/// rescaled by its own Cramér rate.
pub fn halfspace_1d(
    law: &StepLaw,
    a: &[f64],
    height: i64,
    n_max: usize,
) -> Result<HalfspaceReduction> {
    if height < 1 {
        return Err(LabError::Domain(format!("height must be positive, got {height}")));
    }
    let proj = project_law(law, a)?;
    if proj.mean()[0] >= 0.0 {
        return Err(LabError::Domain(format!(
            "projected drift {} is not negative",
            proj.mean()[0]
        )));
    }
    let cramer = solve_cramer_point(&proj)?;
    let line = ConeSpec::orthant(1);
    let radius = suggest_window(&proj, &line, n_max) + height;
    let series = dp_evolve(&proj, &line, &[height], n_max, cramer.c, &DpOptions::new(radius))?;
    Ok(HalfspaceReduction {
        law: proj,
        cramer,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nn4;

    fn quadrant() -> ConeSpec {
        ConeSpec::orthant(2)
    }

    /// All paths of length `n` from `x0` by brute force: (survival, endpoint law).
    fn enumerate(law: &StepLaw, cone: &ConeSpec, x0: &[i64], n: usize) -> BTreeMap<Vec<i64>, f64> {
        let mut paths = vec![(x0.to_vec(), 1.0)];
        for _ in 0..n {
            let mut next = Vec::new();
            for (y, w) in &paths {
                for (z, p) in law.iter() {
                    let t: Vec<i64> = y.iter().zip(z).map(|(a, b)| a + b).collect();
                    if cone.contains_lattice(&t) {
                        next.push((t, w * p));
                    }
                }
            }
            paths = next;
        }
        let mut out = BTreeMap::new();
        for (y, w) in paths {
            *out.entry(y).or_insert(0.0) += w;
        }
        out
    }

    #[test]
    fn nn4_enumeration() {
        let opts = DpOptions::new(20).retain(Retain::All);
        let s = dp_evolve(&nn4(), &quadrant(), &[1, 1], 6, 1.0, &opts).unwrap();
        assert!((s.survival[1] - 0.25).abs() < 1e-15);
        assert!((s.survival[2] - 5.0 / 32.0).abs() < 1e-15);
        for n in 0..=6 {
            let exact = enumerate(&nn4(), &quadrant(), &[1, 1], n);
            let total: f64 = exact.values().sum();
            assert!((s.survival[n] - total).abs() < 1e-15);
            for (y, v) in exact {
                assert!((s.density_at(n, &y).unwrap() - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn immediate_death() {
        let law = StepLaw::from_pairs([(vec![-1, 0], 0.5), (vec![0, -1], 0.5)]).unwrap();
        let s = dp_evolve(&law, &quadrant(), &[1, 1], 3, 1.0, &DpOptions::new(5)).unwrap();
        assert_eq!(s.survival[1], 0.0);
        assert_eq!(s.exit[1], 1.0);
    }

    #[test]
    fn rescaled_series_and_statistics() {
        let c = 3f64.sqrt() / 2.0;
        let opts = DpOptions::new(60).retain(Retain::blocks([0, 5, 40], 3));
        let s = dp_evolve(&nn4(), &quadrant(), &[1, 1], 400, c, &opts).unwrap();
        assert!(s.max_edge_ratio < 1e-12);
        for n in 1..=400 {
            // monotone raw survival, bounded rescaled values
            assert!(s.raw_survival_log(n).unwrap() <= s.raw_survival_log(n - 1).unwrap());
            assert!(s.survival[n] > 1e-12 && s.survival[n] < 1e12);
            // exit plus survival accounts for the previous survival
            let lhs = s.survival[n - 1] / c;
            assert!((lhs - s.survival[n] - s.exit[n]).abs() < 1e-12 * lhs);
        }
        for n in [1usize, 2, 5, 6, 40, 41] {
            let t = s.table(n).unwrap();
            assert!(t.iter().all(|v| *v >= 0.0));
            assert!((t.iter().sum::<f64>() - s.survival[n]).abs() < 1e-12);
        }
        for n in [2usize, 6, 41] {
            let ex: f64 = s.exit_positions(n).unwrap().values().sum();
            assert!((ex - s.exit[n]).abs() < 1e-12 * s.exit[n]);
        }
        let law1 = s.exit_positions(1).unwrap();
        let total: f64 = law1.values().sum();
        assert_eq!(law1.len(), 2);
        for (y, v) in law1 {
            assert!(y == vec![0, 1] || y == vec![1, 0]);
            assert!((v / total - 0.5).abs() < 1e-15);
        }
        assert!(s.table(3).is_err());
        assert!(s.raw_survival_log(401).is_err());
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("n,raw_survival_log,rescaled_b_n\n0,"));
        assert_eq!(text.lines().count(), 402);
    }

    #[test]
    fn hazard_approaches_limit() {
        let c = 3f64.sqrt() / 2.0;
        let s = dp_evolve(&nn4(), &quadrant(), &[1, 1], 300, c, &DpOptions::new(60)).unwrap();
        let limit = (1.0 - c) / c;
        assert!((s.hazard(300).unwrap() / limit - 1.0).abs() < 0.02);
    }

    #[test]
    fn window_monitor_fires() {
        let c = 3f64.sqrt() / 2.0;
        match dp_evolve(&nn4(), &quadrant(), &[1, 1], 100, c, &DpOptions::new(6)) {
            Err(LabError::WindowTooSmall { suggested, .. }) => assert!(suggested > 6),
            other => panic!("expected window error, got {other:?}"),
        }
    }

    #[test]
    fn bridge_matches_enumeration() {
        let law = nn4();
        let cone = quadrant();
        let x = [1, 1];
        let z = [2, 2];
        let opts = DpOptions::new(10).retain(Retain::All).unmonitored();
        let sx = dp_evolve(&law, &cone, &x, 2, 1.0, &opts).unwrap();
        let a = vec![vec![2, 1]];
        let sa = vec![dp_evolve(&law, &cone, &a[0], 1, 1.0, &opts).unwrap()];
        let b = bridge_probability(&sx, &a, &sa, &z, 1, 2).unwrap();
        // two-step paths (1,1) → (2,2): via (2,1) or (1,2), equally likely
        assert!((b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chapman_kolmogorov() {
        let law = nn4();
        let cone = quadrant();
        let x = [2, 3];
        let opts = DpOptions::new(12).retain(Retain::All).unmonitored();
        let sx = dp_evolve(&law, &cone, &x, 20, 1.0, &opts).unwrap();
        let w = sx.window().clone();
        let z = [4, 5];
        for (m, n) in [(3usize, 5usize), (7, 13), (10, 10)] {
            let mut acc = 0.0;
            for i in w.cells() {
                let qm = sx.table(m).unwrap()[i];
                if qm == 0.0 {
                    continue;
                }
                let sy = dp_evolve(&law, &cone, &w.point(i), n, 1.0, &opts).unwrap();
                acc += qm * sy.density_at(n, &z).unwrap();
            }
            let direct = sx.density_at(m + n, &z).unwrap();
            assert!((acc - direct).abs() < 1e-11, "{acc} vs {direct}");
        }
    }

    #[test]
    fn time_reversal() {
        let cd = solve_cramer_point(&nn4()).unwrap();
        let cone = quadrant();
        let rev = cd.tilted.reversed();
        let opts = DpOptions::new(12).retain(Retain::All).unmonitored();
        let (x, y) = ([1, 2], [3, 3]);
        let n = 12;
        let dx = dp_evolve(&cd.tilted, &cone, &x, n, 1.0, &opts).unwrap();
        let fy = dp_evolve(&rev, &cone, &y, n, 1.0, &opts).unwrap();
        for m in [0usize, 4, 6, 11] {
            let a = dx.table(m).unwrap();
            let b = fy.table(n - m).unwrap();
            let s: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            assert!((s - dx.density_at(n, &y).unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn tilt_identity_is_exact() {
        let law = nn4();
        let cd = solve_cramer_point(&law).unwrap();
        let err = check_tilt_identity(&law, &cd, &quadrant(), &[1, 1], 20, 30).unwrap();
        assert!(err <= 1e-12, "{err}");
        let opts = DpOptions::new(30);
        let d = dp_evolve(&cd.tilted, &quadrant(), &[1, 1], 1, 1.0, &opts).unwrap();
        let w = (-cd.h[0]).exp();
        // one step of the tilted walk from (1,1): survive to (2,1) or (1,2)
        assert!((cd.c * 0.25 * 2.0 * w - 0.25).abs() < 1e-9);
        assert!((d.survival[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn halfspace_projection() {
        let r = halfspace_1d(&nn4(), &[1.0, 0.0], 1, 50).unwrap();
        let expect = [(-1i64, 0.375), (0, 0.5), (1, 0.125)];
        assert_eq!(r.law.len(), 3);
        for ((z, p), (ez, ep)) in r.law.iter().zip(expect) {
            assert_eq!(z[0], ez);
            assert!((p - ep).abs() < 1e-15);
        }
        assert!((r.cramer.c - (3f64.sqrt() / 4.0 + 0.5)).abs() < 1e-12);
        assert!((r.series.raw_survival(1).unwrap() - 0.625).abs() < 1e-15);
        assert!(project_law(&nn4(), &[0.5, 0.0]).is_err());
        assert!(halfspace_1d(&nn4(), &[-1.0, 0.0], 1, 10).is_err());
    }
}
