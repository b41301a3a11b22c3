//! Two-view epipolar algebra.
//!
//! Points of the source image `I` map to epipolar lines `F·p` of the
//! target image `J`; the right null vector of `F` is the epipole of `I` and
//! the left null vector the epipole of `J`.

use nalgebra::{Matrix2, Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Below this magnitude of the third coordinate of the unit epipole the
/// epipolar pencil is treated as a family of parallel lines.
pub const EPIPOLE_INFINITY_TOL: f64 = 1e-9;

const RANK_TOL: f64 = 1e-8;

fn homog(p: &Vec2) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// 3×3 rank-2 fundamental matrix with unit Frobenius norm.
///
/// The sign is fixed so that the first entry (row-major) of largest
/// magnitude is positive, which makes `F` and `-F` the same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

/// Null vector of `F` in one of the two images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epipole {
    /// Unit-norm homogeneous coordinates.
    pub homogeneous: Vector3<f64>,
    pub at_infinity: bool,
}

impl Epipole {
    fn from_null_vector(v: Vector3<f64>) -> Self {
        let mut e = v.normalize();
        let at_infinity = e.z.abs() < EPIPOLE_INFINITY_TOL;
        let flip = if at_infinity {
            let k = e.iamax();
            e[k] < 0.0
        } else {
            e.z < 0.0
        };
        if flip {
            e = -e;
        }
        Epipole {
            homogeneous: e,
            at_infinity,
        }
    }

    /// Pixel position, `None` when the epipole is at infinity.
    pub fn point(&self) -> Option<Vec2> {
        if self.at_infinity {
            None
        } else {
            let e = self.homogeneous;
            Some(Vec2::new(e.x / e.z, e.y / e.z))
        }
    }

    /// Common direction of the parallel pencil (only meaningful at infinity).
    pub fn direction(&self) -> Vec2 {
        Vec2::new(self.homogeneous.x, self.homogeneous.y).normalize()
    }
}

impl FundamentalMatrix {
    /// Normalizes `m` and checks that it has rank 2.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFundamental("non-finite entry".into()));
        }
        let norm = m.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidFundamental("zero matrix".into()));
        }
        let mut m = m / norm;
        let max = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        // Row-major scan for the sign anchor.
        'scan: for r in 0..3 {
            for c in 0..3 {
                if m[(r, c)].abs() >= max * (1.0 - 1e-12) {
                    if m[(r, c)] < 0.0 {
                        m = -m;
                    }
                    break 'scan;
                }
            }
        }
        m.apply(|v| *v += 0.0);
        let sv = m.singular_values();
        let smallest = sv.min();
        if smallest >= RANK_TOL {
            return Err(Error::InvalidFundamental(format!(
                "rank 3 (smallest singular value {smallest:e})"
            )));
        }
        Ok(FundamentalMatrix { m })
    }

    /// Projects an arbitrary 3×3 matrix onto the rank-2 matrices by zeroing
    /// its smallest singular value, then normalizes.
    pub fn enforce_rank2(m: Matrix3<f64>) -> Result<Self> {
        let svd = m.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::InvalidFundamental("SVD failed".into())),
        };
        let mut s = svd.singular_values;
        let k = s.imin();
        s[k] = 0.0;
        let projected = u * Matrix3::from_diagonal(&s) * vt;
        Self::new(projected)
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    /// `F = [e']ₓ P₂ P₁⁺` for two finite projective cameras, with `e' = P₂ C₁`.
    pub fn from_cameras(p1: &Matrix3x4<f64>, p2: &Matrix3x4<f64>) -> Result<Self> {
        let c1 = camera_center(p1)?;
        let e2 = p2 * c1;
        let p1p1t = p1 * p1.transpose();
        let inv = p1p1t
            .try_inverse()
            .ok_or_else(|| Error::InvalidFundamental("degenerate first camera".into()))?;
        let pinv = p1.transpose() * inv;
        Self::new(cross_matrix(&e2) * p2 * pinv)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// The fundamental matrix of the swapped pair (J, I).
    pub fn transpose(&self) -> Self {
        // Transposition preserves rank and norm; only the sign anchor moves.
        Self::new(self.m.transpose()).expect("transpose of a valid F is valid")
    }

    fn null_vectors(&self) -> Result<(Vector3<f64>, Vector3<f64>)> {
        // For a rank-2 matrix the cross product of two independent rows
        // (columns) spans the right (left) null space; it is far more
        // accurate than the SVD when the singular values are spread out.
        let pick = |a: [Vector3<f64>; 3]| {
            [a[0].cross(&a[1]), a[1].cross(&a[2]), a[2].cross(&a[0])]
                .into_iter()
                .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                .expect("three candidates")
        };
        let m = &self.m;
        let rows = [0, 1, 2].map(|r| m.row(r).transpose());
        let cols = [0, 1, 2].map(|c| m.column(c).into_owned());
        let right = pick(rows);
        let left = pick(cols);
        if right.norm() <= 1e-300 || left.norm() <= 1e-300 {
            return Err(Error::InvalidFundamental("rank below 2".into()));
        }
        Ok((right, left))
    }

    /// Epipole of the source image: `F·e = 0`.
    pub fn epipole(&self) -> Result<Epipole> {
        self.null_vectors().map(|(r, _)| Epipole::from_null_vector(r))
    }

    /// Epipole of the target image: `Fᵀ·e' = 0`.
    pub fn target_epipole(&self) -> Result<Epipole> {
        self.null_vectors().map(|(_, l)| Epipole::from_null_vector(l))
    }

    /// Epipolar line `F·(p,1)` in the target image, scaled so that its
    /// first two coefficients have unit norm.
    pub fn epipolar_line(&self, p: &Vec2) -> Result<Vector3<f64>> {
        let l = self.m * homog(p);
        let n = l.x.hypot(l.y);
        if n <= 1e-12 * (1.0 + p.norm()) {
            return Err(Error::DegeneratePoint(format!(
                "({}, {}) is the epipole",
                p.x, p.y
            )));
        }
        Ok(l / n)
    }

    /// `qᵀ F p`.
    pub fn algebraic_residual(&self, p: &Vec2, q: &Vec2) -> f64 {
        homog(q).dot(&(self.m * homog(p)))
    }

    pub fn sampson_distance(&self, p: &Vec2, q: &Vec2) -> Result<f64> {
        let ph = homog(p);
        let qh = homog(q);
        let fp = self.m * ph;
        let ftq = self.m.transpose() * qh;
        let denom = fp.x * fp.x + fp.y * fp.y + ftq.x * ftq.x + ftq.y * ftq.y;
        if denom <= 1e-18 {
            return Err(Error::DegeneratePair);
        }
        let r = qh.dot(&fp);
        Ok(r * r / denom)
    }

    /// Epipolar line through `p` in the source image, directed away from
    /// the epipole (or along the pencil direction when it is at infinity).
    pub fn source_ray(&self, p: &Vec2) -> Result<DirectedLine> {
        let e = self.epipole()?;
        let dir = match e.point() {
            Some(ep) => {
                let d = p - ep;
                if d.norm() <= 1e-9 * (1.0 + ep.norm()) {
                    return Err(Error::DegeneratePoint(
                        "point coincides with the epipole".into(),
                    ));
                }
                d
            }
            None => e.direction(),
        };
        DirectedLine::new(*p, dir)
    }
}

fn camera_center(p: &Matrix3x4<f64>) -> Result<nalgebra::Vector4<f64>> {
    let m = p.fixed_view::<3, 3>(0, 0).into_owned();
    let p4 = p.column(3).into_owned();
    let minv = m
        .try_inverse()
        .ok_or_else(|| Error::InvalidFundamental("camera at infinity".into()))?;
    let c = -minv * p4;
    Ok(nalgebra::Vector4::new(c.x, c.y, c.z, 1.0))
}

/// A line with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectedLine {
    pub point: Vec2,
    pub direction: Vec2,
}

impl DirectedLine {
    pub fn new(point: Vec2, direction: Vec2) -> Result<Self> {
        let n = direction.norm();
        if !(n > 1e-300) || !n.is_finite() || !point.iter().all(|v| v.is_finite()) {
            return Err(Error::Geometry("directed line needs a nonzero direction".into()));
        }
        Ok(DirectedLine {
            point,
            direction: direction / n,
        })
    }

    pub fn x_axis() -> Self {
        DirectedLine {
            point: Vec2::zeros(),
            direction: Vec2::new(1.0, 0.0),
        }
    }

    /// Homogeneous coefficients `(−d_y, d_x, ·)`, i.e. `(p,1) × (p+d,1)`.
    pub fn homogeneous(&self) -> Vector3<f64> {
        homog(&self.point).cross(&homog(&(self.point + self.direction)))
    }

    /// Signed distance of `x` from the line (positive on the left).
    pub fn signed_distance(&self, x: &Vec2) -> f64 {
        let d = x - self.point;
        self.direction.x * d.y - self.direction.y * d.x
    }

    /// Builds the directed line `l` (orientation from its normal, see
    /// [`DirectedLine::homogeneous`]) anchored at the foot of `hint`.
    pub fn from_homogeneous(l: &Vector3<f64>, hint: &Vec2) -> Result<Self> {
        let n = l.x.hypot(l.y);
        if n <= 1e-300 {
            return Err(Error::Geometry("line at infinity".into()));
        }
        let l = l / n;
        let normal = Vec2::new(l.x, l.y);
        let dist = normal.dot(hint) + l.z;
        let point = hint - normal * dist;
        DirectedLine::new(point, Vec2::new(l.y, -l.x))
    }

    pub fn reversed(&self) -> Self {
        DirectedLine {
            point: self.point,
            direction: -self.direction,
        }
    }
}

/// `x ↦ scale·R(angle)·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity2 {
    pub angle: f64,
    pub scale: f64,
    pub translation: Vec2,
}

impl Similarity2 {
    pub fn linear(&self) -> Matrix2<f64> {
        let (s, c) = self.angle.sin_cos();
        Matrix2::new(c, -s, s, c) * self.scale
    }

    pub fn apply(&self, x: &Vec2) -> Vec2 {
        self.linear() * x + self.translation
    }

    pub fn apply_inverse(&self, y: &Vec2) -> Vec2 {
        self.linear().transpose() * (y - self.translation) / (self.scale * self.scale)
    }
}

/// Unit-scale similarity carrying the directed X-axis onto `line`.
pub fn line_adapted_similarity(line: &DirectedLine) -> Similarity2 {
    Similarity2 {
        angle: line.direction.y.atan2(line.direction.x),
        scale: 1.0,
        translation: line.point,
    }
}

/// Which of the two possible orderings along corresponding epipolar lines
/// the scene obeys, relative to the canonical plane transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chirality {
    #[default]
    Canonical,
    Reversed,
}

impl Chirality {
    pub fn sign(self) -> f64 {
        match self {
            Chirality::Canonical => 1.0,
            Chirality::Reversed => -1.0,
        }
    }
}

/// Corresponding directed epipolar line of `l1` under the canonical rule.
///
/// The canonical camera pair is `P = [I|0]`, `P' = [[e']ₓF | e']`; the
/// order is transferred with the plane homography `H = [e']ₓF + e'·vᵀ`,
/// `v = (0,0,1)`, or `v = e` when the source epipole is at infinity (the
/// `Z = 1` plane contains the baseline direction then and `H` is singular
/// along the pencil).
pub fn orient_epipolar_pair(
    f: &FundamentalMatrix,
    l1: &DirectedLine,
) -> Result<(DirectedLine, DirectedLine)> {
    orient_epipolar_pair_with(f, l1, Chirality::Canonical)
}

pub fn orient_epipolar_pair_with(
    f: &FundamentalMatrix,
    l1: &DirectedLine,
    chirality: Chirality,
) -> Result<(DirectedLine, DirectedLine)> {
    let e = f.epipole()?;
    let e2 = f.target_epipole()?;
    match e.point() {
        Some(ep) => {
            if l1.signed_distance(&ep).abs() > 1.0 {
                return Err(Error::Geometry(
                    "line does not pass through the epipole".into(),
                ));
            }
        }
        None => {
            let u = e.direction();
            if (l1.direction.x * u.y - l1.direction.y * u.x).abs() > 1e-6 {
                return Err(Error::Geometry(
                    "line is not parallel to the epipolar pencil".into(),
                ));
            }
        }
    }
    let v = if e.at_infinity {
        e.homogeneous
    } else {
        Vector3::new(0.0, 0.0, 1.0)
    };
    let e2h = e2.homogeneous;
    let h = cross_matrix(&e2h) * f.matrix() + e2h * v.transpose();
    let xa = homog(&l1.point);
    let xb = homog(&(l1.point + l1.direction));
    let transferred = (h * xa).cross(&(h * xb));
    let line = f.matrix() * xa;
    let n = line.x.hypot(line.y);
    if n <= 1e-12 {
        return Err(Error::InvalidFundamental(
            "epipolar line of the anchor point vanishes".into(),
        ));
    }
    let agreement = transferred.x * line.x + transferred.y * line.y;
    if agreement.abs() <= 1e-15 * transferred.norm() * n {
        return Err(Error::InvalidFundamental(
            "plane transfer is degenerate on this line".into(),
        ));
    }
    let sign = agreement.signum() * chirality.sign();
    let l2 = DirectedLine::from_homogeneous(&(line * sign), &l1.point)?;
    Ok((*l1, l2))
}

/// Votes of pairs of correspondences on the [`Chirality`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChiralityVote {
    pub chirality: Chirality,
    pub agree: usize,
    pub disagree: usize,
}

/// Estimates the chirality from candidate correspondences.
///
/// Pairs of matches whose source points lie roughly along one epipolar ray
/// (and whose targets lie roughly along the transferred line) vote on
/// whether their order along the line is kept by the canonical transfer.
/// The majority wins; outliers vote at random.
pub fn estimate_chirality(f: &FundamentalMatrix, pairs: &[(Vec2, Vec2)]) -> Result<ChiralityVote> {
    const MIN_SEPARATION: f64 = 2.0;
    const MAX_SLOPE: f64 = 0.1;
    let frames: Vec<Option<(DirectedLine, DirectedLine)>> = pairs
        .iter()
        .map(|(p, _)| {
            f.source_ray(p)
                .and_then(|l1| orient_epipolar_pair(f, &l1))
                .ok()
        })
        .collect();
    let mut agree = 0usize;
    let mut disagree = 0usize;
    for i in 0..pairs.len() {
        let Some((l1, l2)) = frames[i] else { continue };
        for j in (i + 1)..pairs.len() {
            let dp = pairs[j].0 - pairs[i].0;
            let dq = pairs[j].1 - pairs[i].1;
            let along_p = l1.direction.dot(&dp);
            let along_q = l2.direction.dot(&dq);
            let across_p = (l1.direction.x * dp.y - l1.direction.y * dp.x).abs();
            let across_q = (l2.direction.x * dq.y - l2.direction.y * dq.x).abs();
            if along_p.abs() < MIN_SEPARATION || along_q.abs() < MIN_SEPARATION {
                continue;
            }
            if across_p > MAX_SLOPE * along_p.abs() || across_q > MAX_SLOPE * along_q.abs() {
                continue;
            }
            if along_p.signum() == along_q.signum() {
                agree += 1;
            } else {
                disagree += 1;
            }
        }
    }
    let chirality = if disagree > agree {
        Chirality::Reversed
    } else {
        Chirality::Canonical
    };
    Ok(ChiralityVote {
        chirality,
        agree,
        disagree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3x4;

    fn rectified() -> FundamentalMatrix {
        FundamentalMatrix::from_rows([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
            .unwrap()
    }

    fn look_camera(f: f64, c: Vec2, rot_y: f64, center: Vector3<f64>) -> Matrix3x4<f64> {
        let k = Matrix3::new(f, 0.0, c.x, 0.0, f, c.y, 0.0, 0.0, 1.0);
        let (s, co) = rot_y.sin_cos();
        let r = Matrix3::new(co, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, co);
        let t = -r * center;
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        k * rt
    }

    fn project(p: &Matrix3x4<f64>, x: &Vector3<f64>) -> Vec2 {
        let h = p * nalgebra::Vector4::new(x.x, x.y, x.z, 1.0);
        Vec2::new(h.x / h.z, h.y / h.z)
    }

    #[test]
    fn normalization_fixes_sign_and_norm() {
        let f = rectified();
        assert!((f.matrix().norm() - 1.0).abs() < 1e-12);
        let g = FundamentalMatrix::new(-f.matrix() * 3.0).unwrap();
        assert!((f.matrix() - g.matrix()).norm() < 1e-15);
        // First largest-magnitude entry, row-major, is (1,2).
        assert!(f.matrix()[(1, 2)] > 0.0);
    }

    #[test]
    fn rank_three_is_rejected() {
        assert!(matches!(
            FundamentalMatrix::new(Matrix3::identity()),
            Err(Error::InvalidFundamental(_))
        ));
    }

    #[test]
    fn rectified_epipole_is_at_infinity() {
        let e = rectified().epipole().unwrap();
        assert!(e.at_infinity);
        assert!((e.homogeneous - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn epipole_from_cameras() {
        // Second center projects to (100, 200) in the first camera.
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let c2 = Vector3::new((100.0 - 320.0) / 500.0 * 4.0, (200.0 - 240.0) / 500.0 * 4.0, 4.0);
        let p2 = look_camera(450.0, Vec2::new(300.0, 250.0), 0.3, c2);
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        let e = f.epipole().unwrap();
        let ep = e.point().unwrap();
        assert!((ep - Vec2::new(100.0, 200.0)).norm() < 1e-6, "{ep:?}");
        assert!((f.matrix() * e.homogeneous).norm() <= 1e-9);
        let e2 = f.target_epipole().unwrap();
        assert!((f.matrix().transpose() * e2.homogeneous).norm() <= 1e-9);
    }

    #[test]
    fn rectified_lines_are_scanlines() {
        let f = rectified();
        let l = f.epipolar_line(&Vec2::new(13.0, 7.5)).unwrap();
        // y' = 7.5
        assert!(l.x.abs() < 1e-15);
        assert!((l.z / l.y + 7.5).abs() < 1e-12);
    }

    #[test]
    fn epipolar_line_of_epipole_fails() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let p2 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.1, Vector3::new(0.5, 0.1, 1.0));
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        let ep = f.epipole().unwrap().point().unwrap();
        assert!(matches!(f.epipolar_line(&ep), Err(Error::DegeneratePoint(_))));
    }

    #[test]
    fn pencil_points_share_a_line() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let p2 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.2, Vector3::new(1.0, 0.1, 0.3));
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        let ep = f.epipole().unwrap().point().unwrap();
        let dir = Vec2::new(0.6, 0.8);
        let reference = f.epipolar_line(&(ep + dir * 100.0)).unwrap();
        for t in [30.0, 250.0, 400.0] {
            let l = f.epipolar_line(&(ep + dir * t)).unwrap();
            assert!((l - reference).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn sampson_examples() {
        let f = rectified();
        let d = f
            .sampson_distance(&Vec2::new(3.0, 5.0), &Vec2::new(9.0, 5.0))
            .unwrap();
        assert_eq!(d, 0.0);
        // qᵀFp = −1 for the unnormalized matrix; denominator 2.
        let d = f
            .sampson_distance(&Vec2::new(0.0, 0.0), &Vec2::new(0.0, 1.0))
            .unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sampson_symmetry_under_swap() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let p2 = look_camera(520.0, Vec2::new(310.0, 230.0), 0.25, Vector3::new(1.0, 0.2, 0.1));
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        let ft = f.transpose();
        let p = Vec2::new(100.0, 40.0);
        let q = Vec2::new(230.0, 51.0);
        let a = f.sampson_distance(&p, &q).unwrap();
        let b = ft.sampson_distance(&q, &p).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a));
    }

    #[test]
    fn exact_synthetic_correspondences() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let p2 = look_camera(480.0, Vec2::new(330.0, 250.0), -0.3, Vector3::new(1.5, -0.2, 0.4));
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        for i in 0..50 {
            let x = Vector3::new(
                -2.0 + 0.08 * i as f64,
                1.0 - 0.03 * i as f64,
                6.0 + (i as f64 * 0.7).sin(),
            );
            let p = project(&p1, &x);
            let q = project(&p2, &x);
            let l = f.epipolar_line(&p).unwrap();
            assert!(l.dot(&homog(&q)).abs() < 1e-6);
            assert!(f.sampson_distance(&p, &q).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn rectified_orientation_is_forward() {
        let f = rectified();
        let l1 = DirectedLine::new(Vec2::new(10.0, 20.0), Vec2::new(1.0, 0.0)).unwrap();
        let (_, l2) = orient_epipolar_pair(&f, &l1).unwrap();
        assert!((l2.direction - Vec2::new(1.0, 0.0)).norm() < 1e-12, "{l2:?}");
        assert!((l2.point.y - 20.0).abs() < 1e-12);
        let (_, rev) = orient_epipolar_pair(&f, &l1.reversed()).unwrap();
        assert!((rev.direction + l2.direction).norm() < 1e-12);
    }

    #[test]
    fn orientation_is_invariant_to_sign_of_input_matrix() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let p2 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.3, Vector3::new(2.0, 0.0, 0.5));
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        let g = FundamentalMatrix::new(-f.matrix()).unwrap();
        let l1 = f.source_ray(&Vec2::new(200.0, 100.0)).unwrap();
        let (_, a) = orient_epipolar_pair(&f, &l1).unwrap();
        let (_, b) = orient_epipolar_pair(&g, &l1).unwrap();
        assert!((a.direction - b.direction).norm() < 1e-12);
    }

    #[test]
    fn orientation_requires_line_through_epipole() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        let p2 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.3, Vector3::new(2.0, 0.0, 0.5));
        let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
        let ray = f.source_ray(&Vec2::new(200.0, 100.0)).unwrap();
        let off = DirectedLine::new(ray.point + Vec2::new(-ray.direction.y, ray.direction.x) * 5.0, ray.direction)
            .unwrap();
        assert!(orient_epipolar_pair(&f, &off).is_err());
    }

    #[test]
    fn voted_chirality_matches_scene_order() {
        let p1 = look_camera(500.0, Vec2::new(320.0, 240.0), 0.0, Vector3::zeros());
        for (rot, c2) in [
            (-0.25, Vector3::new(1.2, 0.1, 0.2)),
            (0.25, Vector3::new(-1.2, 0.1, 0.2)),
            (0.0, Vector3::new(0.3, 0.2, 1.0)),
        ] {
            let p2 = look_camera(500.0, Vec2::new(320.0, 240.0), rot, c2);
            let f = FundamentalMatrix::from_cameras(&p1, &p2).unwrap();
            // Points on the plane Z = 6 - 0.3 X.
            let mut pairs = Vec::new();
            for i in 0..15 {
                for j in 0..15 {
                    let x = -1.5 + 0.2 * i as f64;
                    let y = -1.0 + 0.15 * j as f64;
                    let z = 6.0 - 0.3 * x;
                    let xw = Vector3::new(x, y, z);
                    pairs.push((project(&p1, &xw), project(&p2, &xw)));
                }
            }
            let vote = estimate_chirality(&f, &pairs).unwrap();
            assert!(vote.agree + vote.disagree > 50);
            assert!(vote.agree == 0 || vote.disagree == 0, "{vote:?}");
            // The winning orientation orders a ground-truth pair correctly.
            let (pa, qa) = pairs[0];
            let l1 = f.source_ray(&pa).unwrap();
            let (_, l2) = orient_epipolar_pair_with(&f, &l1, vote.chirality).unwrap();
            let xw = {
                // Step the 3D point along the first camera ray direction of l1.
                let pb = pa + l1.direction * 10.0;
                let k = p1.fixed_view::<3, 3>(0, 0).into_owned();
                let ray = k.try_inverse().unwrap() * homog(&pb);
                // Intersect with Z = 6 - 0.3 X.
                let s = 6.0 / (ray.z + 0.3 * ray.x);
                ray * s
            };
            let qb = project(&p2, &xw);
            assert!(l2.direction.dot(&(qb - qa)) > 0.0);
        }
    }

    #[test]
    fn adapted_similarity_examples() {
        let g = line_adapted_similarity(&DirectedLine::x_axis());
        assert!((g.linear() - Matrix2::identity()).norm() < 1e-15);
        assert_eq!(g.translation, Vec2::zeros());
        let up = DirectedLine::new(Vec2::zeros(), Vec2::new(0.0, 1.0)).unwrap();
        let g = line_adapted_similarity(&up);
        assert!((g.linear() - Matrix2::new(0.0, -1.0, 1.0, 0.0)).norm() < 1e-15);
        let l = DirectedLine::new(Vec2::new(3.0, -2.0), Vec2::new(1.0, 2.0)).unwrap();
        let g = line_adapted_similarity(&l);
        assert!((g.apply(&Vec2::new(1.0, 0.0)) - (l.point + l.direction)).norm() < 1e-12);
        let x = Vec2::new(0.3, 7.0);
        assert!((g.apply_inverse(&g.apply(&x)) - x).norm() < 1e-12);
    }
}
