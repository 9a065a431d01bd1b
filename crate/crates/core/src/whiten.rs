//! Whitening of the tilted walk and the homogeneity degree of the image cone.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{norm, ConeSpec, StepLaw};

const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningMode {
    /// Symmetric inverse square root of the covariance.
    #[default]
    General,
    /// Normalize-then-rotate matrix for planar walks, parametrized by the
    /// correlation α through `sin 2φ = α`.
    Example2d,
}

/// Shape of `K̂ = MK`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeImage {
    /// Planar wedge starting at angle `start` and opening counter-clockwise.
    Wedge { opening: f64, start: f64 },
    Orthant { dim: usize },
    Halfspace,
    /// No closed form: the degree has to be fitted from a driftless tail.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degree {
    Known(f64),
    ToBeFitted,
}

impl Degree {
    pub fn value(&self) -> Option<f64> {
        match self {
            Degree::Known(p) => Some(*p),
            Degree::ToBeFitted => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WhiteningData {
    #[serde(serialize_with = "ser_matrix")]
    pub cov: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub m: DMatrix<f64>,
    pub mode: WhiteningMode,
    /// Correlation of the normalized tilted components (planar walks only).
    pub alpha: Option<f64>,
    pub image: ConeImage,
    pub p: Degree,
}

impl WhiteningData {
    /// `ŷ = M y`.
    pub fn apply(&self, y: &[i64]) -> Vec<f64> {
        let d = y.len();
        (0..d)
            .map(|i| (0..d).map(|j| self.m[(i, j)] * y[j] as f64).sum())
            .collect()
    }

    pub fn p_value(&self) -> Result<f64> {
        self.p
            .value()
            .ok_or_else(|| LabError::MissingInput("homogeneity degree has not been fitted".into()))
    }
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// `E[X̃ X̃ᵀ]` of a (driftless) tilted law.
pub fn tilted_covariance(tilted: &StepLaw) -> Result<DMatrix<f64>> {
    let drift = norm(&tilted.mean());
    if drift > 1e-10 {
        return Err(LabError::Domain(format!(
            "tilted law has drift of norm {drift:e}"
        )));
    }
    let d = tilted.dim();
    let s = tilted.second_moment();
    let cov = DMatrix::from_fn(d, d, |i, j| s[i][j]);
    if cov.clone().cholesky().is_none() {
        return Err(LabError::Domain(
            "tilted covariance is not positive definite (collinear support)".into(),
        ));
    }
    Ok(cov)
}

fn check_spd(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() {
        return Err(LabError::Domain("covariance must be square".into()));
    }
    let scale = cov.amax().max(1.0);
    for i in 0..cov.nrows() {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > SYM_TOL * scale {
                return Err(LabError::Domain("covariance is not symmetric".into()));
            }
        }
    }
    if cov.clone().cholesky().is_none() {
        return Err(LabError::Domain("covariance is not positive definite".into()));
    }
    Ok(())
}

/// An invertible `M` with `M Σ Mᵀ = I`.
pub fn whitening_matrix(cov: &DMatrix<f64>, mode: WhiteningMode) -> Result<DMatrix<f64>> {
    check_spd(cov)?;
    let d = cov.nrows();
    match mode {
        WhiteningMode::General if d == 2 => {
            // √A = (A + √det·I)/√(tr + 2√det) for 2×2 SPD A
            let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
            let s = (a * c - b * b).sqrt();
            let t = (a + c + 2.0 * s).sqrt();
            let (ra, rb, rc) = ((a + s) / t, b / t, (c + s) / t);
            let det = ra * rc - rb * rb;
            Ok(DMatrix::from_row_slice(2, 2, &[rc / det, -rb / det, -rb / det, ra / det]))
        }
        WhiteningMode::General => {
            let eig = cov.clone().symmetric_eigen();
            let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
            let q = &eig.eigenvectors;
            Ok(q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose())
        }
        WhiteningMode::Example2d => {
            if d != 2 {
                return Err(LabError::Domain(format!(
                    "example2d whitening needs d = 2, got {d}"
                )));
            }
            let (c1, c2) = (cov[(0, 0)], cov[(1, 1)]);
            let alpha = cov[(0, 1)] / (c1 * c2).sqrt();
            let phi = 0.5 * alpha.asin();
            let k = 1.0 / (1.0 - alpha * alpha).sqrt();
            let (s1, s2) = (c1.sqrt(), c2.sqrt());
            Ok(DMatrix::from_row_slice(
                2,
                2,
                &[
                    k * phi.cos() / s1,
                    -k * phi.sin() / s2,
                    -k * phi.sin() / s1,
                    k * phi.cos() / s2,
                ],
            ))
        }
    }
}

/// Correlation of the normalized components of a planar covariance.
pub fn correlation(cov: &DMatrix<f64>) -> Option<f64> {
    (cov.nrows() == 2).then(|| cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt())
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let scale = m.amax();
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].abs() <= 1e-12 * scale))
}

/// Image cone `MK` and the degree `p` of its positive harmonic function.
pub fn cone_image_and_p(
    cone: &ConeSpec,
    m: &DMatrix<f64>,
    allow_fit: bool,
) -> Result<(ConeImage, Degree)> {
    cone.validate()?;
    if m.nrows() != cone.dim() || m.ncols() != cone.dim() {
        return Err(LabError::Dimension {
            expected: cone.dim(),
            got: m.nrows(),
        });
    }
    let planar = |opening: f64, rotation: f64| -> Result<(ConeImage, Degree)> {
        if opening > PI {
            return Err(LabError::Domain(format!(
                "wedge opening {opening} exceeds π: the cone is not convex"
            )));
        }
        let r1 = [rotation.cos(), rotation.sin()];
        let r2 = [(rotation + opening).cos(), (rotation + opening).sin()];
        let map = |r: [f64; 2]| {
            [
                m[(0, 0)] * r[0] + m[(0, 1)] * r[1],
                m[(1, 0)] * r[0] + m[(1, 1)] * r[1],
            ]
        };
        let (v1, v2) = (map(r1), map(r2));
        let (start, end) = if m.determinant() > 0.0 { (v1, v2) } else { (v2, v1) };
        let cross = start[0] * end[1] - start[1] * end[0];
        let dotp = start[0] * end[0] + start[1] * end[1];
        let mut image_opening = cross.atan2(dotp);
        if image_opening <= 0.0 {
            image_opening += 2.0 * PI;
        }
        Ok((
            ConeImage::Wedge {
                opening: image_opening,
                start: start[1].atan2(start[0]),
            },
            Degree::Known(PI / image_opening),
        ))
    };
    match cone {
        ConeSpec::Halfspace { .. } => Ok((ConeImage::Halfspace, Degree::Known(1.0))),
        ConeSpec::Wedge2d { opening, rotation } => planar(*opening, *rotation),
        ConeSpec::Orthant { dim } if *dim == 2 && !is_diagonal(m) => planar(PI / 2.0, 0.0),
        ConeSpec::Orthant { dim } if is_diagonal(m) && m.diagonal().iter().all(|v| *v > 0.0) => {
            Ok((ConeImage::Orthant { dim: *dim }, Degree::Known(*dim as f64)))
        }
        ConeSpec::Orthant { .. } if allow_fit => Ok((ConeImage::Unknown, Degree::ToBeFitted)),
        ConeSpec::Orthant { dim } => Err(LabError::Domain(format!(
            "no closed-form image for a non-diagonal whitening of orthant({dim})"
        ))),
    }
}

/// Full whitening pipeline for a tilted law.
pub fn whiten(tilted: &StepLaw, cone: &ConeSpec, mode: WhiteningMode) -> Result<WhiteningData> {
    let cov = tilted_covariance(tilted)?;
    let m = whitening_matrix(&cov, mode)?;
    let (image, p) = cone_image_and_p(cone, &m, true)?;
    Ok(WhiteningData {
        alpha: correlation(&cov),
        cov,
        m,
        mode,
        image,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cramer::solve_cramer_point;
    use crate::model::{diagonal_walk, nn4};

    fn whiteness_error(m: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
        let d = cov.nrows();
        (m * cov * m.transpose() - DMatrix::identity(d, d)).amax()
    }

    #[test]
    fn covariance_examples() {
        let cd = solve_cramer_point(&nn4()).unwrap();
        let cov = tilted_covariance(&cd.tilted).unwrap();
        assert!((cov.clone() - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])).amax() < 1e-12);

        let cd = solve_cramer_point(&diagonal_walk()).unwrap();
        let cov = tilted_covariance(&cd.tilted).unwrap();
        assert!((cov[(0, 0)] - 1.0).abs() < 1e-12 && (cov[(1, 1)] - 1.0).abs() < 1e-12);
        let c = 3f64.sqrt() / 4.0 + 0.5;
        let off = (3f64.sqrt() / 4.0 - 0.5) / c;
        assert!((cov[(0, 1)] - off).abs() < 1e-12);
        assert!((off + 0.071797).abs() < 1e-6);

        let one_d = StepLaw::from_pairs([(vec![1], 0.5), (vec![-1], 0.5)]).unwrap();
        assert_eq!(tilted_covariance(&one_d).unwrap()[(0, 0)], 1.0);

        assert!(tilted_covariance(&nn4()).is_err());
    }

    #[test]
    fn matrix_examples() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let g = whitening_matrix(&cov, WhiteningMode::General).unwrap();
        let e = whitening_matrix(&cov, WhiteningMode::Example2d).unwrap();
        let target = DMatrix::identity(2, 2) * 2f64.sqrt();
        assert!((g - &target).amax() < 1e-15);
        assert!((e - &target).amax() < 1e-15);
        let id = DMatrix::identity(3, 3);
        assert!((whitening_matrix(&id, WhiteningMode::General).unwrap() - &id).amax() < 1e-15);
        assert!(whitening_matrix(&id, WhiteningMode::Example2d).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(whitening_matrix(&bad, WhiteningMode::General).is_err());
    }

    #[test]
    fn both_modes_whiten_and_agree_on_opening() {
        for law in [nn4(), diagonal_walk()] {
            let cd = solve_cramer_point(&law).unwrap();
            let cone = ConeSpec::orthant(2);
            let g = whiten(&cd.tilted, &cone, WhiteningMode::General).unwrap();
            let e = whiten(&cd.tilted, &cone, WhiteningMode::Example2d).unwrap();
            assert!(whiteness_error(&g.m, &g.cov) < 1e-10);
            assert!(whiteness_error(&e.m, &e.cov) < 1e-10);
            let alpha = g.alpha.unwrap();
            for w in [&g, &e] {
                match w.image {
                    ConeImage::Wedge { opening, .. } => {
                        assert!((opening - (-alpha).acos()).abs() < 1e-9)
                    }
                    ConeImage::Orthant { dim } => {
                        assert_eq!(dim, 2);
                        assert!(alpha.abs() < 1e-12);
                    }
                    ref other => panic!("unexpected image {other:?}"),
                }
                let p = w.p.value().unwrap();
                assert!((p - PI / (-alpha).acos()).abs() < 1e-9);
                assert!(p >= 1.0);
            }
            // exact-law second moments of M X̃
            let mut s = DMatrix::<f64>::zeros(2, 2);
            for (z, p) in cd.tilted.iter() {
                let y = g.apply(z);
                for i in 0..2 {
                    for j in 0..2 {
                        s[(i, j)] += p * y[i] * y[j];
                    }
                }
            }
            assert!((s - DMatrix::identity(2, 2)).amax() < 1e-10);
        }
    }

    #[test]
    fn degree_examples() {
        let m = DMatrix::identity(2, 2) * 2f64.sqrt();
        let (_, p) = cone_image_and_p(&ConeSpec::orthant(2), &m, false).unwrap();
        assert_eq!(p, Degree::Known(2.0));

        let cd = solve_cramer_point(&diagonal_walk()).unwrap();
        let w = whiten(&cd.tilted, &ConeSpec::orthant(2), WhiteningMode::General).unwrap();
        let p = w.p.value().unwrap();
        assert!((p - PI / 0.071797f64.acos()).abs() < 1e-4);
        assert!((p - 2.0959).abs() < 1e-4);

        let (img, p) = cone_image_and_p(
            &ConeSpec::Halfspace { normal: vec![1.0, 0.0] },
            &DMatrix::identity(2, 2),
            false,
        )
        .unwrap();
        assert_eq!((img, p), (ConeImage::Halfspace, Degree::Known(1.0)));

        let diag3 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let (img, p) = cone_image_and_p(&ConeSpec::orthant(3), &diag3, false).unwrap();
        assert_eq!(img, ConeImage::Orthant { dim: 3 });
        assert_eq!(p, Degree::Known(3.0));

        let mut skew = DMatrix::identity(3, 3);
        skew[(0, 1)] = 0.3;
        skew[(1, 0)] = 0.3;
        assert!(cone_image_and_p(&ConeSpec::orthant(3), &skew, false).is_err());
        assert_eq!(
            cone_image_and_p(&ConeSpec::orthant(3), &skew, true).unwrap().1,
            Degree::ToBeFitted
        );
    }

    #[test]
    fn wedge_image_through_reflection() {
        // a reflection swaps the rays but keeps the opening
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (img, p) = cone_image_and_p(&ConeSpec::wedge(PI / 3.0, 0.1), &m, false).unwrap();
        match img {
            ConeImage::Wedge { opening, .. } => assert!((opening - PI / 3.0).abs() < 1e-12),
            _ => panic!(),
        }
        assert!((p.value().unwrap() - 3.0).abs() < 1e-12);
        assert!(cone_image_and_p(&ConeSpec::wedge(1.5 * PI, 0.0), &m, false).is_err());
    }
}
