//! Similarity / anti-similarity algebra of planar affine maps.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::geometry::{line_adapted_similarity, DirectedLine, Vec2};

/// Floor on the similarity coefficient `a` that stands in for the strict
/// inequality `a + c > 0`.
pub const A_FLOOR: f64 = 1e-9;

/// Tolerance on the linear equalities `d = b` and `e₂ᵀt = 0` in adapted
/// coordinates.
pub const EQUALITY_TOL: f64 = 1e-9;

/// `x ↦ M·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix2<f64>,
    pub translation: Vec2,
}

impl AffineMap {
    pub fn new(linear: Matrix2<f64>, translation: Vec2) -> Self {
        AffineMap {
            linear,
            translation,
        }
    }

    pub fn apply(&self, x: &Vec2) -> Vec2 {
        self.linear * x + self.translation
    }

    pub fn decompose(&self) -> AffineDecomposition {
        decompose(&self.linear, &self.translation)
    }

    /// `g2⁻¹ ∘ self ∘ g1` for the unit-scale frames of the two lines.
    pub fn in_line_frames(&self, l1: &DirectedLine, l2: &DirectedLine) -> AffineMap {
        let g1 = line_adapted_similarity(l1);
        let g2 = line_adapted_similarity(l2);
        let r1 = g1.linear();
        let r2t = g2.linear().transpose();
        AffineMap {
            linear: r2t * self.linear * r1,
            translation: r2t * (self.linear * g1.translation + self.translation - g2.translation),
        }
    }
}

/// `M = B + C` with `B = [[a, b], [−b, a]]` and `C = [[c, d], [d, −c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDecomposition {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t: Vec2,
}

pub fn decompose(m: &Matrix2<f64>, t: &Vec2) -> AffineDecomposition {
    AffineDecomposition {
        a: (m[(0, 0)] + m[(1, 1)]) / 2.0,
        b: (m[(0, 1)] - m[(1, 0)]) / 2.0,
        c: (m[(0, 0)] - m[(1, 1)]) / 2.0,
        d: (m[(0, 1)] + m[(1, 0)]) / 2.0,
        t: *t,
    }
}

impl AffineDecomposition {
    pub fn linear(&self) -> Matrix2<f64> {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        Matrix2::new(a + c, b + d, d - b, a - c)
    }

    pub fn similarity_part(&self) -> Matrix2<f64> {
        Matrix2::new(self.a, self.b, -self.b, self.a)
    }

    pub fn anti_similarity_part(&self) -> Matrix2<f64> {
        Matrix2::new(self.c, self.d, self.d, -self.c)
    }

    pub fn to_map(&self) -> AffineMap {
        AffineMap::new(self.linear(), self.t)
    }

    /// `‖C‖ / ‖B‖`.
    pub fn mu(&self) -> Result<f64> {
        let sim = self.a * self.a + self.b * self.b;
        if !(sim > 0.0) {
            return Err(Error::DegenerateMap);
        }
        Ok(((self.c * self.c + self.d * self.d) / sim).sqrt())
    }

    /// `(1 + μ_f) / (1 − μ_f)`, the condition number of the linear part.
    pub fn conformal_distortion(&self) -> Result<f64> {
        let mu = self.mu()?;
        if mu >= 1.0 {
            return Err(Error::OrientationDegenerate(mu));
        }
        Ok((1.0 + mu) / (1.0 - mu))
    }
}

/// Distortion bound `0 < μ < 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DistortionBound(f64);

impl DistortionBound {
    pub fn new(mu: f64) -> Result<Self> {
        if mu > 0.0 && mu < 1.0 {
            Ok(DistortionBound(mu))
        } else {
            Err(Error::Config(format!("distortion bound must lie in (0,1), got {mu}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Conformal distortion allowed by the bound.
    pub fn max_condition_number(self) -> f64 {
        (1.0 + self.0) / (1.0 - self.0)
    }
}

/// `μ_f ≤ μ`.
pub fn check_bd(f: &AffineDecomposition, bound: DistortionBound) -> bool {
    match f.mu() {
        Ok(mu) => mu <= bound.value(),
        Err(_) => false,
    }
}

/// Membership in the epipolar bounded-distortion set for the directed pair
/// `(l1, l2)`: in the line frames the map must satisfy `e₂ᵀt = 0`, `d = b`
/// and `sqrt((1−μ²)b² + c²) ≤ μ·a` with `a > 0`.
pub fn check_epipolar_bd(
    f: &AffineDecomposition,
    l1: &DirectedLine,
    l2: &DirectedLine,
    bound: DistortionBound,
) -> bool {
    let adapted = f.to_map().in_line_frames(l1, l2).decompose();
    adapted_cone_holds(&adapted, bound)
}

/// The test of [`check_epipolar_bd`] for a map already in line frames.
pub fn adapted_cone_holds(f: &AffineDecomposition, bound: DistortionBound) -> bool {
    let mu = bound.value();
    if f.t.y.abs() > EQUALITY_TOL || (f.d - f.b).abs() > EQUALITY_TOL {
        return false;
    }
    if f.a < A_FLOOR {
        return false;
    }
    ((1.0 - mu * mu) * f.b * f.b + f.c * f.c).sqrt() <= mu * f.a
}

/// `μ·a − sqrt((1−μ²)b² + c²)`; nonnegative inside the cone.
pub fn cone_slack(f: &AffineDecomposition, bound: DistortionBound) -> f64 {
    let mu = bound.value();
    mu * f.a - ((1.0 - mu * mu) * f.b * f.b + f.c * f.c).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stretch() -> AffineDecomposition {
        decompose(&Matrix2::new(2.0, 0.0, 0.0, 1.0), &Vec2::zeros())
    }

    fn singular_value_ratio(m: &Matrix2<f64>) -> f64 {
        let s = m.singular_values();
        s.max() / s.min()
    }

    #[test]
    fn decomposition_examples() {
        let id = decompose(&Matrix2::identity(), &Vec2::zeros());
        assert_eq!((id.a, id.b, id.c, id.d), (1.0, 0.0, 0.0, 0.0));
        let rot = decompose(&Matrix2::new(0.0, -1.0, 1.0, 0.0), &Vec2::zeros());
        assert_eq!((rot.a, rot.b, rot.c, rot.d), (0.0, -1.0, 0.0, 0.0));
        let s = stretch();
        assert_eq!((s.a, s.b, s.c, s.d), (1.5, 0.0, 0.5, 0.0));
        assert_eq!(s.linear(), Matrix2::new(2.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn mu_and_distortion_examples() {
        let id = decompose(&Matrix2::identity(), &Vec2::zeros());
        assert_eq!(id.mu().unwrap(), 0.0);
        assert_eq!(id.conformal_distortion().unwrap(), 1.0);
        let s = stretch();
        assert!((s.mu().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.conformal_distortion().unwrap() - 2.0).abs() < 1e-12);
        assert!((singular_value_ratio(&s.linear()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_maps() {
        let zero = decompose(&Matrix2::new(1.0, 0.0, 0.0, -1.0), &Vec2::zeros());
        // Pure anti-similarity (reflection): a = b = 0.
        assert!(matches!(zero.mu(), Err(Error::DegenerateMap)));
        let flip = decompose(&Matrix2::new(2.0, 0.0, 0.0, -1.0), &Vec2::zeros());
        assert!(matches!(
            flip.conformal_distortion(),
            Err(Error::OrientationDegenerate(_))
        ));
    }

    #[test]
    fn bd_examples() {
        let m = |v| DistortionBound::new(v).unwrap();
        let id = decompose(&Matrix2::identity(), &Vec2::zeros());
        assert!(check_bd(&id, m(0.5)));
        assert!(!check_bd(&stretch(), m(0.3)));
        assert!(check_bd(&stretch(), m(0.4)));
        assert!(DistortionBound::new(1.0).is_err());
        assert!(DistortionBound::new(0.0).is_err());
    }

    #[test]
    fn epipolar_bd_examples() {
        let x = DirectedLine::x_axis();
        let id = decompose(&Matrix2::identity(), &Vec2::zeros());
        for mu in [0.01, 0.5, 0.99] {
            assert!(check_epipolar_bd(&id, &x, &x, DistortionBound::new(mu).unwrap()));
        }
        let refl = decompose(&Matrix2::new(1.0, 0.0, 0.0, -1.0), &Vec2::zeros());
        assert!(!check_epipolar_bd(&refl, &x, &x, DistortionBound::new(0.9).unwrap()));
        // Translation off the axis breaks the line-to-line property.
        let shifted = decompose(&Matrix2::identity(), &Vec2::new(0.0, 1e-3));
        assert!(!check_epipolar_bd(&shifted, &x, &x, DistortionBound::new(0.5).unwrap()));
    }

    #[test]
    fn general_lines_reduce_to_axis_case() {
        let l1 = DirectedLine::new(Vec2::new(5.0, -3.0), Vec2::new(1.0, 1.0)).unwrap();
        let l2 = DirectedLine::new(Vec2::new(-2.0, 8.0), Vec2::new(-0.2, 1.0)).unwrap();
        let g1 = line_adapted_similarity(&l1);
        let g2 = line_adapted_similarity(&l2);
        // Axis-preserving stretch conjugated into the two frames.
        let f = AffineMap::new(Matrix2::new(2.0, 0.3, 0.0, 1.0), Vec2::new(4.0, 0.0));
        let lin = g2.linear() * f.linear * g1.linear().transpose();
        let t = g2.linear() * (f.translation - f.linear * g1.linear().transpose() * g1.translation)
            + g2.translation;
        let star = AffineMap::new(lin, t).decompose();
        let mu_f = f.decompose().mu().unwrap();
        assert!((star.mu().unwrap() - mu_f).abs() < 1e-12);
        assert!(check_epipolar_bd(&star, &l1, &l2, DistortionBound::new(mu_f + 1e-6).unwrap()));
        assert!(!check_epipolar_bd(&star, &l1, &l2, DistortionBound::new(mu_f - 1e-6).unwrap()));
        assert!(!check_epipolar_bd(&star, &l1, &l2.reversed(), DistortionBound::new(0.9).unwrap()));
    }

    #[test]
    fn cone_boundary_is_tight() {
        let mu: f64 = 0.4;
        for &(a, b) in &[(1.0f64, 0.1f64), (2.0, -0.3), (0.7, 0.0)] {
            // Choose c with μ_f = μ exactly while d = b: (b² + c²) = μ²(a² + b²).
            let c = (mu * mu * (a * a + b * b) - b * b).sqrt();
            let f = AffineDecomposition { a, b, c, d: b, t: Vec2::zeros() };
            assert!((f.mu().unwrap() - mu).abs() < 1e-12);
            let slack = cone_slack(&f, DistortionBound::new(mu).unwrap());
            assert!(slack.abs() <= 1e-9, "slack {slack}");
        }
    }

    proptest! {
        #[test]
        fn distortion_matches_singular_values(
            m00 in -5.0f64..5.0, m01 in -5.0f64..5.0, m10 in -5.0f64..5.0, m11 in -5.0f64..5.0
        ) {
            let m = Matrix2::new(m00, m01, m10, m11);
            let f = decompose(&m, &Vec2::zeros());
            prop_assert!((f.linear() - m).norm() <= 1e-14 * (1.0 + m.norm()));
            let b2 = f.similarity_part().norm_squared();
            let c2 = f.anti_similarity_part().norm_squared();
            prop_assert!((b2 - 2.0 * (f.a * f.a + f.b * f.b)).abs() <= 1e-12 * (1.0 + b2));
            prop_assert!((c2 - 2.0 * (f.c * f.c + f.d * f.d)).abs() <= 1e-12 * (1.0 + c2));
            prop_assume!(m.determinant() > 1e-3);
            let k = f.conformal_distortion().unwrap();
            let ratio = singular_value_ratio(&m);
            prop_assert!((k - ratio).abs() <= 1e-8 * ratio);
        }

        #[test]
        fn similarity_composition_keeps_mu(
            m00 in -5.0f64..5.0, m01 in -5.0f64..5.0, m10 in -5.0f64..5.0, m11 in -5.0f64..5.0,
            angle in -3.2f64..3.2, scale in 0.1f64..10.0,
        ) {
            let m = Matrix2::new(m00, m01, m10, m11);
            let f = decompose(&m, &Vec2::zeros());
            prop_assume!(f.a * f.a + f.b * f.b > 1e-3);
            let (s, c) = angle.sin_cos();
            let g = Matrix2::new(c, -s, s, c) * scale;
            let left = decompose(&(g * m), &Vec2::zeros()).mu().unwrap();
            let right = decompose(&(m * g), &Vec2::zeros()).mu().unwrap();
            let mu = f.mu().unwrap();
            prop_assert!((left - mu).abs() <= 1e-10 * (1.0 + mu));
            prop_assert!((right - mu).abs() <= 1e-10 * (1.0 + mu));
        }

        #[test]
        fn bd_implies_orientation(
            m00 in -5.0f64..5.0, m01 in -5.0f64..5.0, m10 in -5.0f64..5.0, m11 in -5.0f64..5.0,
            mu in 0.01f64..0.99,
        ) {
            let m = Matrix2::new(m00, m01, m10, m11);
            let f = decompose(&m, &Vec2::zeros());
            if check_bd(&f, DistortionBound::new(mu).unwrap()) {
                prop_assert!(m.determinant() > 0.0);
                prop_assert!(f.similarity_part().norm_squared() > f.anti_similarity_part().norm_squared());
            }
        }
    }
}
