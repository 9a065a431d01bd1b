//! Step laws, cones and the model validity checks.

use std::collections::{HashSet, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Probabilities must sum to one within this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Strictness margin for the boundary-angle check.
pub const ANGLE_TOL: f64 = 1e-9;
/// Box radius for the subgroup-generation scan.
pub const APERIODICITY_BOX: i64 = 8;
/// Relative tolerance used to decide that a point lies on a wedge ray.
const RAY_TOL: f64 = 1e-12;

/// Finite lattice step distribution: the law of a single jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    support: Vec<Vec<i64>>,
    probs: Vec<f64>,
}

impl StepLaw {
    pub fn new(support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(LabError::InvalidLaw("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(LabError::InvalidLaw(format!(
                "{} support vectors but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        let d = support[0].len();
        if d == 0 {
            return Err(LabError::InvalidLaw("dimension must be at least 1".into()));
        }
        if let Some(z) = support.iter().find(|z| z.len() != d) {
            return Err(LabError::Dimension {
                expected: d,
                got: z.len(),
            });
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(LabError::InvalidLaw(format!(
                "probability {p} is not strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(LabError::InvalidLaw(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut seen = HashSet::new();
        for z in &support {
            if !seen.insert(z.clone()) {
                return Err(LabError::InvalidLaw(format!("duplicate support vector {z:?}")));
            }
        }
        Ok(Self { support, probs })
    }

    /// Builds a law from (step, probability) pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, f64)>,
    {
        let (support, probs) = pairs.into_iter().unzip();
        Self::new(support, probs)
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64], f64)> + '_ {
        self.support
            .iter()
            .map(Vec::as_slice)
            .zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (z, p) in self.iter() {
            for (mi, &zi) in m.iter_mut().zip(z) {
                *mi += p * zi as f64;
            }
        }
        m
    }

    /// Second-moment matrix E[X Xᵀ] (row-major, d×d).
    pub fn second_moment(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut s = vec![vec![0.0; d]; d];
        for (z, p) in self.iter() {
            for i in 0..d {
                for j in 0..d {
                    s[i][j] += p * (z[i] * z[j]) as f64;
                }
            }
        }
        s
    }

    /// Law of the negated step.
    pub fn reversed(&self) -> StepLaw {
        StepLaw {
            support: self
                .support
                .iter()
                .map(|z| z.iter().map(|v| -v).collect())
                .collect(),
            probs: self.probs.clone(),
        }
    }

    /// Largest sup-norm of a support vector.
    pub fn max_step(&self) -> i64 {
        self.support
            .iter()
            .flat_map(|z| z.iter().map(|v| v.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Same support with new weights (renormalized by their computed sum).
    pub(crate) fn with_weights(&self, weights: Vec<f64>) -> StepLaw {
        let total: f64 = weights.iter().sum();
        StepLaw {
            support: self.support.clone(),
            probs: weights.into_iter().map(|w| w / total).collect(),
        }
    }
}

/// The nearest-neighbour reference walk: steps ±e₁, ±e₂ with
/// probabilities 1/8, 3/8, 1/8, 3/8.
pub fn nn4() -> StepLaw {
    StepLaw::from_pairs([
        (vec![1, 0], 0.125),
        (vec![-1, 0], 0.375),
        (vec![0, 1], 0.125),
        (vec![0, -1], 0.375),
    ])
    .expect("reference law is valid")
}

/// Diagonal-step walk with correlated tilted components.
pub fn diagonal_walk() -> StepLaw {
    StepLaw::from_pairs([
        (vec![1, 1], 0.125),
        (vec![-1, -1], 0.375),
        (vec![1, -1], 0.25),
        (vec![-1, 1], 0.25),
    ])
    .expect("reference law is valid")
}

/// An open cone in ℝᵈ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConeSpec {
    /// The open positive orthant of ℝᵈ.
    Orthant { dim: usize },
    /// Planar wedge `{θ₀ < arg x < θ₀ + β}`.
    Wedge2d { opening: f64, rotation: f64 },
    /// Open half-space `{a·x > 0}`. Only meaningful through the one-dimensional
    /// projection, since `Σ e^{-h·y}` diverges over it.
    Halfspace { normal: Vec<f64> },
}

impl ConeSpec {
    pub fn orthant(dim: usize) -> Self {
        ConeSpec::Orthant { dim }
    }

    pub fn wedge(opening: f64, rotation: f64) -> Self {
        ConeSpec::Wedge2d { opening, rotation }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConeSpec::Orthant { dim } if *dim < 1 => Err(LabError::InvalidCone(format!(
                "orthant needs dim >= 1, got {dim}"
            ))),
            ConeSpec::Wedge2d { opening, rotation }
                if !(opening.is_finite() && *opening > 0.0 && *opening < 2.0 * PI)
                    || !rotation.is_finite() =>
            {
                Err(LabError::InvalidCone(format!(
                    "wedge opening must lie in (0, 2π), got {opening}"
                )))
            }
            ConeSpec::Halfspace { normal }
                if normal.is_empty() || normal.iter().all(|v| *v == 0.0) =>
            {
                Err(LabError::InvalidCone("half-space normal must be nonzero".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::Orthant { dim } => *dim,
            ConeSpec::Wedge2d { .. } => 2,
            ConeSpec::Halfspace { normal } => normal.len(),
        }
    }

    pub fn is_halfspace(&self) -> bool {
        matches!(self, ConeSpec::Halfspace { .. })
    }

    fn rays(opening: f64, rotation: f64) -> ([f64; 2], [f64; 2]) {
        (
            [rotation.cos(), rotation.sin()],
            [(rotation + opening).cos(), (rotation + opening).sin()],
        )
    }

    /// Open-cone membership. Boundary points are outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ConeSpec::Orthant { .. } => x.iter().all(|&v| v > 0.0),
            ConeSpec::Wedge2d { opening, rotation } => {
                let norm = x[0].hypot(x[1]);
                if norm == 0.0 {
                    return false;
                }
                let (r1, r2) = Self::rays(*opening, *rotation);
                let eps = RAY_TOL * norm;
                let c1 = cross(r1, [x[0], x[1]]);
                let c2 = cross([x[0], x[1]], r2);
                if *opening < PI {
                    c1 > eps && c2 > eps
                } else if *opening > PI {
                    // complement of the closed wedge from r2 to r1
                    let in_complement = -c2 >= -eps && -c1 >= -eps;
                    !in_complement
                } else {
                    c1 > eps
                }
            }
            ConeSpec::Halfspace { normal } => dot(normal, x) > 0.0,
        }
    }

    pub fn contains_lattice(&self, y: &[i64]) -> bool {
        match self {
            ConeSpec::Orthant { .. } => y.iter().all(|&v| v > 0),
            _ => {
                let x: Vec<f64> = y.iter().map(|&v| v as f64).collect();
                self.contains(&x)
            }
        }
    }

    /// Euclidean distance from `x` to the boundary of the cone.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            ConeSpec::Orthant { .. } => {
                if x.iter().all(|&v| v >= 0.0) {
                    x.iter().copied().fold(f64::INFINITY, f64::min)
                } else {
                    x.iter()
                        .map(|&v| v.min(0.0).powi(2))
                        .sum::<f64>()
                        .sqrt()
                }
            }
            ConeSpec::Wedge2d { opening, rotation } => {
                let (r1, r2) = Self::rays(*opening, *rotation);
                let p = [x[0], x[1]];
                let d = ray_distance(r1, p).min(ray_distance(r2, p));
                if d <= RAY_TOL * p[0].hypot(p[1]) {
                    0.0
                } else {
                    d
                }
            }
            ConeSpec::Halfspace { normal } => dot(normal, x).abs() / norm(normal),
        }
    }
}

/// Result of [`cone_geometry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    pub inside: bool,
    pub boundary_distance: f64,
}

pub fn cone_geometry(cone: &ConeSpec, x: &[f64]) -> Result<ConePoint> {
    if x.len() != cone.dim() {
        return Err(LabError::Dimension {
            expected: cone.dim(),
            got: x.len(),
        });
    }
    Ok(ConePoint {
        inside: cone.contains(x),
        boundary_distance: cone.boundary_distance(x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aperiodicity {
    Verified,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub drift: Vec<f64>,
    pub noncollinear: bool,
    pub aperiodicity: Aperiodicity,
    /// Order of a single step in `ℤᵈ / D`, `D` the group generated by step
    /// differences. Positions at time `n` lie in `n·z + D`.
    pub period: Option<u64>,
    pub notes: Vec<String>,
}

impl ModelReport {
    /// Period to use when merging times, defaulting to 1 when unknown.
    pub fn period_or_one(&self) -> usize {
        self.period.unwrap_or(1) as usize
    }
}

/// Validates a law against a cone and reports drift, non-collinearity and
/// strong aperiodicity.
pub fn build_model(law: &StepLaw, cone: &ConeSpec) -> Result<ModelReport> {
    cone.validate()?;
    if law.dim() != cone.dim() {
        return Err(LabError::Dimension {
            expected: cone.dim(),
            got: law.dim(),
        });
    }
    if let Some(witness) = collinearity_witness(law) {
        return Err(LabError::Collinear { witness });
    }
    let drift = law.mean();
    if drift.iter().all(|v| v.abs() <= 1e-15) {
        return Err(LabError::ZeroDrift);
    }
    let mut notes = Vec::new();
    let scan = subgroup_scan(law, APERIODICITY_BOX);
    let aperiodicity = if scan.full {
        Aperiodicity::Verified
    } else {
        notes.push(format!(
            "strong aperiodicity not confirmed within box radius {APERIODICITY_BOX}; \
             step differences generate a proper sublattice (period {:?}); \
             time-merged statistics are used",
            scan.period
        ));
        Aperiodicity::Inconclusive
    };
    if cone.is_halfspace() {
        notes.push(
            "half-space cone: exponential sum over the cone diverges; only the projected \
             one-dimensional reduction applies"
                .into(),
        );
    }
    Ok(ModelReport {
        drift,
        noncollinear: true,
        aperiodicity,
        period: scan.period,
        notes,
    })
}

/// Returns a unit vector `c` with `c·z` constant over the support, if any.
pub fn collinearity_witness(law: &StepLaw) -> Option<Vec<f64>> {
    let d = law.dim();
    let z0 = &law.support()[0];
    let rows = law.len() - 1;
    if rows < d {
        // fewer than d differences cannot span ℝᵈ; find a null vector anyway
        let mut m = DMatrix::<f64>::zeros(d, d);
        for (r, z) in law.support().iter().skip(1).enumerate() {
            for j in 0..d {
                m[(r, j)] = (z[j] - z0[j]) as f64;
            }
        }
        return Some(null_vector(&m));
    }
    let mut m = DMatrix::<f64>::zeros(rows, d);
    for (r, z) in law.support().iter().skip(1).enumerate() {
        for j in 0..d {
            m[(r, j)] = (z[j] - z0[j]) as f64;
        }
    }
    let svd = m.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let (imin, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    if smin <= 1e-10 * smax.max(1.0) {
        let vt = svd.v_t.expect("requested");
        Some(vt.row(imin).iter().copied().collect())
    } else {
        None
    }
}

fn null_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, true);
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    svd.v_t.expect("requested").row(imin).iter().copied().collect()
}

struct SubgroupScan {
    full: bool,
    period: Option<u64>,
}

/// Breadth-first generation of the difference group inside a box.
fn subgroup_scan(law: &StepLaw, radius: i64) -> SubgroupScan {
    let d = law.dim();
    let z0 = &law.support()[0];
    let mut gens: Vec<Vec<i64>> = Vec::new();
    for z in law.support().iter().skip(1) {
        let g: Vec<i64> = z.iter().zip(z0).map(|(a, b)| a - b).collect();
        gens.push(g.iter().map(|v| -v).collect());
        gens.push(g);
    }
    let origin = vec![0i64; d];
    let mut reached: HashSet<Vec<i64>> = HashSet::from([origin.clone()]);
    let mut queue = VecDeque::from([origin]);
    while let Some(p) = queue.pop_front() {
        for g in &gens {
            let q: Vec<i64> = p.iter().zip(g).map(|(a, b)| a + b).collect();
            if q.iter().all(|v| v.abs() <= radius) && reached.insert(q.clone()) {
                queue.push_back(q);
            }
        }
    }
    let full = (0..d).all(|k| {
        let mut e = vec![0i64; d];
        e[k] = 1;
        reached.contains(&e)
    });
    let period = if full {
        Some(1)
    } else {
        let zmax = z0.iter().map(|v| v.abs()).max().unwrap_or(0).max(1);
        (1..=(radius / zmax) as u64).find(|&k| {
            let kz: Vec<i64> = z0.iter().map(|v| v * k as i64).collect();
            reached.contains(&kz)
        })
    };
    SubgroupScan { full, period }
}

/// Outcome of the boundary-angle condition: every boundary direction of the
/// cone makes an angle below π/2 with `h`, so that `h·y ≥ cos(worst)|h||y|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryAngleCheck {
    pub ok: bool,
    pub worst_angle: f64,
    pub note: Option<String>,
}

pub fn boundary_angle_check(cone: &ConeSpec, h: &[f64]) -> Result<BoundaryAngleCheck> {
    if h.len() != cone.dim() {
        return Err(LabError::Dimension {
            expected: cone.dim(),
            got: h.len(),
        });
    }
    let hn = norm(h);
    if hn == 0.0 {
        return Err(LabError::Domain("h must be nonzero".into()));
    }
    let worst_angle = match cone {
        ConeSpec::Halfspace { .. } => {
            return Ok(BoundaryAngleCheck {
                ok: false,
                worst_angle: FRAC_PI_2,
                note: Some(
                    "half-space boundary contains directions orthogonal to every h; \
                     use the one-dimensional reduction"
                        .into(),
                ),
            })
        }
        ConeSpec::Wedge2d { opening, rotation } => {
            let (r1, r2) = ConeSpec::rays(*opening, *rotation);
            angle_between(&r1, h).max(angle_between(&r2, h))
        }
        ConeSpec::Orthant { dim } => orthant_worst_angle(*dim, h),
    };
    Ok(BoundaryAngleCheck {
        ok: worst_angle < FRAC_PI_2 - ANGLE_TOL,
        worst_angle,
        note: None,
    })
}

/// Worst angle with `h` over the boundary of the spherical orthant section.
/// On the face `{x_j = 0}` the minimum of `h·x` over unit `x ≥ 0` is either the
/// smallest remaining `h_i` or, when some remaining `h_i < 0`, minus the norm
/// of the negative part.
fn orthant_worst_angle(dim: usize, h: &[f64]) -> f64 {
    let hn = norm(h);
    if dim == 1 {
        return if h[0] > 0.0 { 0.0 } else { PI };
    }
    let mut worst: f64 = 0.0;
    for j in 0..dim {
        let others = (0..dim).filter(|&i| i != j).map(|i| h[i]);
        let neg: f64 = others.clone().map(|v| v.min(0.0).powi(2)).sum::<f64>().sqrt();
        let m = if neg > 0.0 {
            -neg
        } else {
            others.fold(f64::INFINITY, f64::min)
        };
        worst = worst.max((m / hn).clamp(-1.0, 1.0).acos());
    }
    worst
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn ray_distance(r: [f64; 2], p: [f64; 2]) -> f64 {
    if r[0] * p[0] + r[1] * p[1] >= 0.0 {
        cross(r, p).abs()
    } else {
        p[0].hypot(p[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nn4_report() {
        let r = build_model(&nn4(), &ConeSpec::orthant(2)).unwrap();
        assert_eq!(r.drift, vec![-0.25, -0.25]);
        assert!(r.noncollinear);
        // ±e₁, ±e₂ differences generate only the even sublattice
        assert_eq!(r.aperiodicity, Aperiodicity::Inconclusive);
        assert_eq!(r.period, Some(2));
    }

    #[test]
    fn lazy_walk_is_strongly_aperiodic() {
        let law = StepLaw::from_pairs([
            (vec![1, 0], 0.1),
            (vec![-1, 0], 0.3),
            (vec![0, 1], 0.1),
            (vec![0, -1], 0.3),
            (vec![0, 0], 0.2),
        ])
        .unwrap();
        let r = build_model(&law, &ConeSpec::orthant(2)).unwrap();
        assert_eq!(r.aperiodicity, Aperiodicity::Verified);
        assert_eq!(r.period, Some(1));
    }

    #[test]
    fn collinear_and_zero_drift_rejected() {
        let law = StepLaw::from_pairs([(vec![1, 1], 0.5), (vec![-1, -1], 0.5)]).unwrap();
        match build_model(&law, &ConeSpec::orthant(2)) {
            Err(LabError::Collinear { witness }) => {
                let s = witness[0] + witness[1];
                assert!(s.abs() < 1e-12, "witness {witness:?} should be ∝ (1,-1)");
            }
            other => panic!("expected collinear rejection, got {other:?}"),
        }
        let srw = StepLaw::from_pairs([
            (vec![1, 0], 0.25),
            (vec![-1, 0], 0.25),
            (vec![0, 1], 0.25),
            (vec![0, -1], 0.25),
        ])
        .unwrap();
        assert!(matches!(
            build_model(&srw, &ConeSpec::orthant(2)),
            Err(LabError::ZeroDrift)
        ));
    }

    #[test]
    fn law_invariants() {
        assert!(StepLaw::new(vec![vec![1], vec![1]], vec![0.5, 0.5]).is_err());
        assert!(StepLaw::new(vec![vec![1], vec![-1]], vec![0.5, 0.4]).is_err());
        assert!(StepLaw::new(vec![vec![1], vec![-1]], vec![1.0, 0.0]).is_err());
        assert!(StepLaw::new(vec![vec![1, 0], vec![-1]], vec![0.5, 0.5]).is_err());
        assert!(build_model(&nn4(), &ConeSpec::orthant(3)).is_err());
    }

    #[test]
    fn geometry_examples() {
        let q = ConeSpec::orthant(2);
        assert_eq!(
            cone_geometry(&q, &[1.0, 1.0]).unwrap(),
            ConePoint { inside: true, boundary_distance: 1.0 }
        );
        assert_eq!(
            cone_geometry(&q, &[0.0, 3.0]).unwrap(),
            ConePoint { inside: false, boundary_distance: 0.0 }
        );
        let w = ConeSpec::wedge(FRAC_PI_2, 0.0);
        assert_eq!(
            cone_geometry(&w, &[1.0, 0.0]).unwrap(),
            ConePoint { inside: false, boundary_distance: 0.0 }
        );
        assert!(!w.contains(&[0.0, 3.0]));
        assert!(w.contains(&[1.0, 1.0]));
        assert!(cone_geometry(&q, &[1.0]).is_err());
        // outside point: distance to the closed orthant's boundary
        let g = cone_geometry(&q, &[-3.0, 4.0]).unwrap();
        assert!(!g.inside);
        assert_eq!(g.boundary_distance, 3.0);
    }

    #[test]
    fn reflex_wedge_membership() {
        let w = ConeSpec::wedge(1.5 * PI, 0.0);
        assert!(w.contains(&[-1.0, -1.0]));
        assert!(w.contains(&[-1.0, 1.0]));
        assert!(!w.contains(&[1.0, -1.0]));
        assert!(!w.contains(&[0.0, -1.0]));
        assert!(!w.contains(&[1.0, 0.0]));
        let half = ConeSpec::wedge(PI, 0.0);
        assert!(half.contains(&[-5.0, 1.0]));
        assert!(!half.contains(&[-5.0, 0.0]));
    }

    #[test]
    fn boundary_angle_examples() {
        let h = 3f64.ln() / 2.0;
        let r = boundary_angle_check(&ConeSpec::orthant(2), &[h, h]).unwrap();
        assert!(r.ok);
        assert!((r.worst_angle - PI / 4.0).abs() < 1e-12);

        let r = boundary_angle_check(&ConeSpec::wedge(PI, 0.0), &[0.0, 1.0]).unwrap();
        assert!(!r.ok);
        assert!((r.worst_angle - FRAC_PI_2).abs() < 1e-12);

        let r = boundary_angle_check(&ConeSpec::orthant(2), &[1.0, -0.1]).unwrap();
        assert!(!r.ok);
        assert!(r.worst_angle > FRAC_PI_2);

        let r =
            boundary_angle_check(&ConeSpec::Halfspace { normal: vec![1.0, 0.0] }, &[1.0, 0.0])
                .unwrap();
        assert!(!r.ok && r.note.is_some());
        assert!(boundary_angle_check(&ConeSpec::orthant(2), &[0.0, 0.0]).is_err());
    }

    /// Closed-form orthant angle against a brute scan of the boundary patches.
    #[test]
    fn orthant_angle_matches_boundary_scan() {
        let hs = [[0.3, 0.5, 0.9], [1.0, -0.2, 0.4], [0.2, 0.2, 0.2]];
        for h in hs {
            let closed = orthant_worst_angle(3, &h);
            let mut scan: f64 = 0.0;
            let m = 200;
            for j in 0..3 {
                for k in 0..=m {
                    let t = FRAC_PI_2 * k as f64 / m as f64;
                    let mut x = [0.0; 3];
                    let (a, b) = match j {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    x[a] = t.cos();
                    x[b] = t.sin();
                    scan = scan.max(angle_between(&x, &h));
                }
            }
            assert!(closed >= scan - 1e-12);
            assert!(closed - scan < 1e-3, "closed {closed} scan {scan}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positive_h_passes_on_orthants(h in proptest::collection::vec(0.01f64..5.0, 2..5)) {
                let cone = ConeSpec::orthant(h.len());
                prop_assert!(boundary_angle_check(&cone, &h).unwrap().ok);
            }

            #[test]
            fn inside_points_have_positive_distance(
                x in -20i64..20, y in -20i64..20, opening in 0.2f64..6.0, rot in -3.0f64..3.0
            ) {
                let law = nn4();
                for cone in [ConeSpec::orthant(2), ConeSpec::wedge(opening, rot)] {
                    for (z, _) in law.iter() {
                        let p = [(x + z[0]) as f64, (y + z[1]) as f64];
                        let g = cone_geometry(&cone, &p).unwrap();
                        if g.inside {
                            prop_assert!(g.boundary_distance > 0.0);
                        }
                    }
                }
            }

            #[test]
            fn build_model_is_deterministic(a in 0.05f64..0.2, b in 0.05f64..0.2) {
                let law = StepLaw::from_pairs([
                    (vec![1, 0], a),
                    (vec![-1, 0], 0.5 - a),
                    (vec![0, 1], b),
                    (vec![0, -1], 0.5 - b),
                ]).unwrap();
                let cone = ConeSpec::orthant(2);
                prop_assert_eq!(build_model(&law, &cone).unwrap(), build_model(&law, &cone).unwrap());
            }
        }
    }
}
