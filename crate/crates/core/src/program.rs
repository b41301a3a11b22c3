//! Per-iteration convex program over the target vertex positions.
//!
//! Unknowns are the flattened target positions `x[2i], x[2i+1] = ṽᵢ`.
//! Each vertex is pinned to its epipolar line and each face carries one
//! second-order cone on the similarity/anti-similarity coefficients of its
//! affine map written in the frames of its pair of epipolar lines.

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::conic::{solve, AffineExpr, ConicProblem, LinearRow, SocBlock, SolverResult, SolverSettings};
use crate::distortion::{AffineDecomposition, AffineMap, DistortionBound, A_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::{
    line_adapted_similarity, orient_epipolar_pair_with, Chirality, DirectedLine,
    FundamentalMatrix, Vec2,
};
use crate::triangulation::EpipolarTriangulation;

/// Relative shrink of `μ` inside the solver so that solutions returned
/// within solver tolerance still satisfy the exact bound.
pub const CONE_MARGIN: f64 = 1e-6;

/// Piecewise-linear map given by target positions of the triangulation
/// vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlMap {
    pub vertices: Vec<Vec2>,
}

impl PlMap {
    pub fn new(t: &EpipolarTriangulation, vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() != t.vertices.len() {
            return Err(Error::Input(format!(
                "map has {} vertices, triangulation {}",
                vertices.len(),
                t.vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::Input("map has non-finite vertices".into()));
        }
        Ok(PlMap { vertices })
    }

    pub fn identity(t: &EpipolarTriangulation) -> Self {
        PlMap {
            vertices: t.vertices.clone(),
        }
    }

    pub fn from_flat(x: &[f64]) -> Self {
        PlMap {
            vertices: x.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|v| [v.x, v.y]).collect()
    }

    /// `Φ(p)` by barycentric interpolation.
    pub fn evaluate(&self, t: &EpipolarTriangulation, p: &Vec2) -> Result<Vec2> {
        let face = t
            .locate(p)
            .ok_or(Error::OutOfDomain { x: p.x, y: p.y })?;
        let c = t.barycentric(face, p)?;
        let [i, j, k] = t.faces[face].vertices;
        Ok(self.vertices[i] * c[0] + self.vertices[j] * c[1] + self.vertices[k] * c[2])
    }
}

/// First two columns (`W`) and last column of `[[vᵢ vⱼ vₖ],[1 1 1]]⁻¹`:
/// the face's affine map is `M = Ṽ·W`, `t = Ṽ·w₃`.
fn face_inverse(t: &EpipolarTriangulation, face: usize) -> Result<Matrix3<f64>> {
    let [a, b, c] = t.face_points(face);
    let m = Matrix3::new(a.x, b.x, c.x, a.y, b.y, c.y, 1.0, 1.0, 1.0);
    if t.face_area(face) <= 1e-6 {
        return Err(Error::Geometry(format!("face {face} is degenerate")));
    }
    m.try_inverse()
        .ok_or_else(|| Error::Geometry(format!("face {face} is degenerate")))
}

/// Affine map of face `face` under `Φ`.
pub fn face_affine_map(t: &EpipolarTriangulation, face: usize, phi: &PlMap) -> Result<AffineMap> {
    let inv = face_inverse(t, face)?;
    let [i, j, k] = t.faces[face].vertices;
    let tgt = [phi.vertices[i], phi.vertices[j], phi.vertices[k]];
    let mut lin = Matrix2::zeros();
    let mut tr = Vec2::zeros();
    for (r, v) in tgt.iter().enumerate() {
        for col in 0..2 {
            lin[(0, col)] += v.x * inv[(r, col)];
            lin[(1, col)] += v.y * inv[(r, col)];
        }
        tr += v * inv[(r, 2)];
    }
    Ok(AffineMap::new(lin, tr))
}

pub fn affine_coefficients(
    t: &EpipolarTriangulation,
    face: usize,
    phi: &PlMap,
) -> Result<AffineDecomposition> {
    Ok(face_affine_map(t, face, phi)?.decompose())
}

/// Oriented pair of epipolar lines for every face.
pub fn face_frames(
    t: &EpipolarTriangulation,
    f: &FundamentalMatrix,
    chirality: Chirality,
) -> Result<Vec<(DirectedLine, DirectedLine)>> {
    t.faces
        .iter()
        .map(|face| {
            orient_epipolar_pair_with(f, &face.line, chirality)
                .map_err(|e| Error::Config(format!("cannot orient face line: {e}")))
        })
        .collect()
}

/// `(F·(v,1)) · (ṽ,1) = 0` with the line scaled to a unit normal.
pub fn vertex_epipolar_rows(t: &EpipolarTriangulation, f: &FundamentalMatrix) -> Result<Vec<LinearRow>> {
    t.vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let l = f.epipolar_line(v)?;
            Ok(LinearRow::new(vec![(2 * i, l.x), (2 * i + 1, l.y)], -l.z))
        })
        .collect()
}

/// Decomposition coefficients of one face's adapted map as affine
/// functions of the unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceCone {
    pub face: usize,
    pub a: AffineExpr,
    pub b: AffineExpr,
    pub c: AffineExpr,
    pub d: AffineExpr,
    /// Second coordinate of the adapted translation.
    pub ty: AffineExpr,
}

impl FaceCone {
    pub fn eval(&self, x: &[f64]) -> AffineDecomposition {
        AffineDecomposition {
            a: self.a.eval(x),
            b: self.b.eval(x),
            c: self.c.eval(x),
            d: self.d.eval(x),
            t: Vec2::new(0.0, self.ty.eval(x)),
        }
    }

    /// `‖(√(1−μ²)·b, c)‖ ≤ μ·a`.
    pub fn soc(&self, mu: f64) -> SocBlock {
        let scale = |e: &AffineExpr, s: f64| {
            AffineExpr::new(e.coeffs.iter().map(|&(i, v)| (i, v * s)).collect(), e.constant * s)
        };
        SocBlock {
            t: scale(&self.a, mu),
            u: vec![scale(&self.b, (1.0 - mu * mu).sqrt()), scale(&self.c, 1.0)],
        }
    }
}

fn combine(terms: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for &(i, v) in terms {
        match out.iter_mut().find(|(j, _)| *j == i) {
            Some(e) => e.1 += v,
            None => out.push((i, v)),
        }
    }
    out
}

pub fn face_cone_rows(
    t: &EpipolarTriangulation,
    frames: &[(DirectedLine, DirectedLine)],
) -> Result<Vec<FaceCone>> {
    if frames.len() != t.faces.len() {
        return Err(Error::Config("one line pair per face is required".into()));
    }
    let mut out = Vec::with_capacity(t.faces.len());
    for (fi, face) in t.faces.iter().enumerate() {
        let inv = face_inverse(t, fi)?;
        let (l1, l2) = &frames[fi];
        let g1 = line_adapted_similarity(l1);
        let g2 = line_adapted_similarity(l2);
        let r1 = g1.linear();
        let r2 = g2.linear();
        // M' = R2ᵀ·Ṽ·W·R1, t' = R2ᵀ·(Ṽ·(W·o1 + w3) − o2).
        let mut m = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
        let mut ty = Vec::new();
        for (k, &vk) in face.vertices.iter().enumerate() {
            let w = [inv[(k, 0)], inv[(k, 1)]];
            let omega = [
                w[0] * r1[(0, 0)] + w[1] * r1[(1, 0)],
                w[0] * r1[(0, 1)] + w[1] * r1[(1, 1)],
            ];
            let tau = w[0] * g1.translation.x + w[1] * g1.translation.y + inv[(k, 2)];
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c].push((2 * vk, omega[c] * r2[(0, r)]));
                    m[r][c].push((2 * vk + 1, omega[c] * r2[(1, r)]));
                }
            }
            ty.push((2 * vk, tau * r2[(0, 1)]));
            ty.push((2 * vk + 1, tau * r2[(1, 1)]));
        }
        let ty_const = -(r2[(0, 1)] * g2.translation.x + r2[(1, 1)] * g2.translation.y);
        let lin = |p: &[(usize, f64)], sp: f64, q: &[(usize, f64)], sq: f64| {
            let mut v: Vec<(usize, f64)> = p.iter().map(|&(i, x)| (i, x * sp)).collect();
            v.extend(q.iter().map(|&(i, x)| (i, x * sq)));
            AffineExpr::new(combine(&v), 0.0)
        };
        out.push(FaceCone {
            face: fi,
            a: lin(&m[0][0], 0.5, &m[1][1], 0.5),
            b: lin(&m[0][1], 0.5, &m[1][0], -0.5),
            c: lin(&m[0][0], 0.5, &m[1][1], -0.5),
            d: lin(&m[0][1], 0.5, &m[1][0], 0.5),
            ty: AffineExpr::new(combine(&ty), ty_const),
        });
    }
    Ok(out)
}

/// Robust residual term `w·‖Σ cₖ ṽₖ − q‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchTerm {
    pub face: usize,
    pub bary: [f64; 3],
    pub target: Vec2,
    pub weight: f64,
}

impl MatchTerm {
    pub fn residual(&self, t: &EpipolarTriangulation, phi: &PlMap) -> Vec2 {
        let [i, j, k] = t.faces[self.face].vertices;
        let c = self.bary;
        phi.vertices[i] * c[0] + phi.vertices[j] * c[1] + phi.vertices[k] * c[2] - self.target
    }
}

/// Constraint blocks that stay fixed across reweighting iterations.
#[derive(Debug, Clone)]
pub struct EbdConstraints {
    pub vertex_rows: Vec<LinearRow>,
    pub cones: Vec<FaceCone>,
    pub bound: DistortionBound,
}

impl EbdConstraints {
    pub fn build(
        t: &EpipolarTriangulation,
        f: &FundamentalMatrix,
        bound: DistortionBound,
        chirality: Chirality,
    ) -> Result<Self> {
        let frames = face_frames(t, f, chirality)?;
        Ok(EbdConstraints {
            vertex_rows: vertex_epipolar_rows(t, f)?,
            cones: face_cone_rows(t, &frames)?,
            bound,
        })
    }

    /// Moves every vertex onto its epipolar line orthogonally; removes the
    /// equality residual left by the interior-point tolerance.
    pub fn project_onto_lines(&self, x: &mut [f64]) {
        for (i, row) in self.vertex_rows.iter().enumerate() {
            let (nx, ny) = (row.coeffs[0].1, row.coeffs[1].1);
            let r = nx * x[2 * i] + ny * x[2 * i + 1] - row.rhs;
            x[2 * i] -= r * nx;
            x[2 * i + 1] -= r * ny;
        }
    }
}

/// The objective of one reweighting iteration plus the fixed constraints.
#[derive(Debug, Clone)]
pub struct EbdProgram {
    pub problem: ConicProblem,
    pub n_vertices: usize,
}

impl EbdProgram {
    /// Solves in displacements from `reference`, which keeps the large
    /// constant `Σ w‖q‖²` out of the duality gap, and returns the result in
    /// absolute coordinates.
    pub fn solve(&self, reference: &PlMap, settings: &SolverSettings) -> Result<SolverResult> {
        let x0 = reference.flat();
        if x0.len() != self.problem.n {
            return Err(Error::Input("reference map has the wrong size".into()));
        }
        let mut r = solve(&self.problem.shifted(&x0), settings)?;
        for (x, base) in r.x.iter_mut().zip(&x0) {
            *x += base;
        }
        r.objective = self.problem.objective(&r.x);
        Ok(r)
    }
}

pub fn build_iteration_program(
    t: &EpipolarTriangulation,
    cons: &EbdConstraints,
    terms: &[MatchTerm],
) -> Result<EbdProgram> {
    if terms.is_empty() {
        return Err(Error::Config("no match terms".into()));
    }
    let nv = t.vertices.len();
    let mut prob = ConicProblem::new(2 * nv);
    for term in terms {
        if term.face >= t.faces.len() || !(term.weight > 0.0) || !term.weight.is_finite() {
            return Err(Error::Config("invalid match term".into()));
        }
        let vs = t.faces[term.face].vertices;
        for coord in 0..2 {
            let q = term.target[coord];
            for (a, &va) in vs.iter().enumerate() {
                let ia = 2 * va + coord;
                prob.q[ia] -= 2.0 * term.weight * q * term.bary[a];
                for (b, &vb) in vs.iter().enumerate() {
                    let ib = 2 * vb + coord;
                    if ia <= ib {
                        let v = 2.0 * term.weight * term.bary[a] * term.bary[b];
                        prob.add_p(ia, ib, v);
                    }
                }
            }
            prob.constant += term.weight * q * q;
        }
    }
    merge_p(&mut prob);
    prob.eq = cons.vertex_rows.clone();
    let mu = cons.bound.value() * (1.0 - CONE_MARGIN);
    for cone in &cons.cones {
        prob.cones.push(cone.soc(mu));
        prob.le.push(LinearRow::new(
            cone.a.coeffs.iter().map(|&(i, v)| (i, -v)).collect(),
            cone.a.constant - A_FLOOR,
        ));
    }
    Ok(EbdProgram {
        problem: prob,
        n_vertices: nv,
    })
}

fn merge_p(prob: &mut ConicProblem) {
    let mut entries = std::mem::take(&mut prob.p);
    entries.sort_by_key(|e| (e.0, e.1));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for (i, j, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => merged.push((i, j, v)),
        }
    }
    prob.p = merged;
}

/// `Σ w‖h‖²` evaluated directly.
pub fn weighted_energy(t: &EpipolarTriangulation, phi: &PlMap, terms: &[MatchTerm]) -> f64 {
    terms
        .iter()
        .map(|m| m.weight * m.residual(t, phi).norm_squared())
        .sum()
}

/// True when every face of `phi` satisfies the epipolar bounded-distortion
/// test for its line pair.
pub fn map_is_feasible(
    t: &EpipolarTriangulation,
    frames: &[(DirectedLine, DirectedLine)],
    phi: &PlMap,
    bound: DistortionBound,
) -> Result<bool> {
    for (fi, (l1, l2)) in frames.iter().enumerate() {
        let f = affine_coefficients(t, fi, phi)?;
        if !crate::distortion::check_epipolar_bd(&f, l1, l2, bound) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::SolveStatus;
    use crate::distortion::check_epipolar_bd;
    use crate::triangulation::{GridConfig, ImageRect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rectified() -> FundamentalMatrix {
        FundamentalMatrix::from_rows([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]).unwrap()
    }

    fn small() -> (EpipolarTriangulation, FundamentalMatrix) {
        let f = rectified();
        let img = ImageRect::new(60.0, 40.0).unwrap();
        (
            EpipolarTriangulation::build(img, &f, &GridConfig::new(10.0).unwrap()).unwrap(),
            f,
        )
    }

    fn map_by(t: &EpipolarTriangulation, g: impl FnMut(&Vec2) -> Vec2) -> PlMap {
        PlMap::new(t, t.vertices.iter().map(g).collect()).unwrap()
    }

    #[test]
    fn identity_and_similarity_coefficients() {
        let (t, _) = small();
        let id = PlMap::identity(&t);
        let f = affine_coefficients(&t, 3, &id).unwrap();
        assert!((f.a - 1.0).abs() < 1e-12 && f.b.abs() < 1e-12);
        assert!(f.c.abs() < 1e-12 && f.d.abs() < 1e-12 && f.t.norm() < 1e-9);

        let (s, c) = 0.3f64.sin_cos();
        let sim = map_by(&t, |v| Vec2::new(2.0 * (c * v.x - s * v.y) + 5.0, 2.0 * (s * v.x + c * v.y) - 1.0));
        for fi in 0..t.faces.len() {
            let f = affine_coefficients(&t, fi, &sim).unwrap();
            assert!((f.a - 2.0 * c).abs() < 1e-10 && (f.b + 2.0 * s).abs() < 1e-10);
            assert!(f.c.abs() < 1e-10 && f.d.abs() < 1e-10);
        }
    }

    #[test]
    fn affine_map_reproduces_targets_and_is_linear() {
        let (t, _) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = map_by(&t, |v| v + Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        let double = PlMap::new(&t, phi.vertices.iter().map(|v| v * 2.0).collect()).unwrap();
        for fi in 0..t.faces.len() {
            let m = face_affine_map(&t, fi, &phi).unwrap();
            for (k, &vi) in t.faces[fi].vertices.iter().enumerate() {
                let src = t.face_points(fi)[k];
                assert!((m.apply(&src) - phi.vertices[vi]).norm() < 1e-9);
            }
            let m2 = face_affine_map(&t, fi, &double).unwrap();
            assert!((m2.linear - m.linear * 2.0).norm() < 1e-10);
            // Barycentric evaluation agrees with the face's map.
            let [a, b, c] = t.face_points(fi);
            let p = (a * 0.2 + b * 0.5 + c * 0.3) as Vec2;
            let via_map = m.apply(&p);
            let face = t.locate(&p).unwrap();
            let via_bary = face_affine_map(&t, face, &phi).unwrap().apply(&p);
            assert!((via_map - via_bary).norm() < 1e-9);
            assert!((phi.evaluate(&t, &p).unwrap() - via_map).norm() < 1e-9);
        }
    }

    #[test]
    fn rectified_vertex_rows_pin_y() {
        let (t, f) = small();
        let rows = vertex_epipolar_rows(&t, &f).unwrap();
        assert_eq!(rows.len(), t.vertices.len());
        for (i, r) in rows.iter().enumerate() {
            assert!(r.coeffs[0].1.abs() < 1e-15);
            let s = r.coeffs[1].1;
            assert!((s.abs() - 1.0).abs() < 1e-15);
            assert!((r.rhs / s - t.vertices[i].y).abs() < 1e-12);
        }
    }

    #[test]
    fn cone_examples_on_rectified_geometry() {
        let (t, f) = small();
        let cons = EbdConstraints::build(&t, &f, DistortionBound::new(0.5).unwrap(), Chirality::Canonical)
            .unwrap();
        assert_eq!(cons.cones.len(), t.faces.len());
        let id = PlMap::identity(&t).flat();
        for cone in &cons.cones {
            let g = cone.eval(&id);
            assert!((g.a - 1.0).abs() < 1e-12 && g.b.abs() < 1e-12 && g.c.abs() < 1e-12);
            assert!(cone.soc(0.01).slack(&id) > 0.0);
        }
        let stretch = map_by(&t, |v| Vec2::new(2.0 * v.x, v.y)).flat();
        for cone in &cons.cones {
            let g = cone.eval(&stretch);
            assert!((g.a - 1.5).abs() < 1e-12 && g.b.abs() < 1e-12);
            assert!((g.c - 0.5).abs() < 1e-12 && g.d.abs() < 1e-12);
            assert!(cone.soc(1.0 / 3.0 + 1e-9).slack(&stretch) >= 0.0);
            assert!(cone.soc(1.0 / 3.0 - 1e-6).slack(&stretch) < 0.0);
        }
    }

    #[test]
    fn single_vertex_term_objective() {
        let (t, f) = small();
        let cons = EbdConstraints::build(&t, &f, DistortionBound::new(0.5).unwrap(), Chirality::Canonical)
            .unwrap();
        let fi = 5;
        let vi = t.faces[fi].vertices[0];
        let q = Vec2::new(3.0, -2.0);
        let term = MatchTerm { face: fi, bary: [1.0, 0.0, 0.0], target: q, weight: 1.0 };
        let prog = build_iteration_program(&t, &cons, &[term]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let x: Vec<f64> = (0..prog.problem.n).map(|_| rng.random_range(-50.0..50.0)).collect();
            let v = Vec2::new(x[2 * vi], x[2 * vi + 1]);
            let expect = (v - q).norm_squared();
            assert!((prog.problem.objective(&x) - expect).abs() < 1e-9 * (1.0 + expect));
        }
        assert!(build_iteration_program(&t, &cons, &[]).is_err());
    }

    #[test]
    fn doubling_weights_doubles_objective() {
        let (t, f) = small();
        let cons = EbdConstraints::build(&t, &f, DistortionBound::new(0.5).unwrap(), Chirality::Canonical)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let terms: Vec<MatchTerm> = (0..30)
            .map(|_| {
                let p = Vec2::new(rng.random_range(1.0..59.0), rng.random_range(1.0..39.0));
                let face = t.locate(&p).unwrap();
                MatchTerm {
                    face,
                    bary: t.barycentric(face, &p).unwrap(),
                    target: p + Vec2::new(rng.random_range(-2.0..2.0), 0.0),
                    weight: rng.random_range(0.1..1.0),
                }
            })
            .collect();
        let doubled: Vec<MatchTerm> = terms.iter().map(|m| MatchTerm { weight: 2.0 * m.weight, ..*m }).collect();
        let a = build_iteration_program(&t, &cons, &terms).unwrap();
        let b = build_iteration_program(&t, &cons, &doubled).unwrap();
        let x = PlMap::identity(&t).flat();
        assert!((2.0 * a.problem.objective(&x) - b.problem.objective(&x)).abs() < 1e-9);
        let phi = PlMap::from_flat(&x);
        assert!((a.problem.objective(&x) - weighted_energy(&t, &phi, &terms)).abs() < 1e-9);
        let s = SolverSettings::default();
        let id = PlMap::identity(&t);
        let ra = a.solve(&id, &s).unwrap();
        let rb = b.solve(&id, &s).unwrap();
        assert_eq!(ra.status, SolveStatus::Optimal);
        assert_eq!(rb.status, SolveStatus::Optimal);
        assert!((2.0 * ra.objective - rb.objective).abs() < 1e-6 * (1.0 + rb.objective));
        let (pa, pb) = (PlMap::from_flat(&ra.x), PlMap::from_flat(&rb.x));
        // Compare where the data pins the map.
        for m in &terms {
            let diff = m.residual(&t, &pa) - m.residual(&t, &pb);
            assert!(diff.norm() < 1e-4);
        }
    }

    #[test]
    fn equalities_imply_adapted_line_constraints() {
        let (t, f) = small();
        let cons = EbdConstraints::build(&t, &f, DistortionBound::new(0.5).unwrap(), Chirality::Canonical)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Random placement along the lines.
        let mut x = PlMap::identity(&t).flat();
        for v in x.iter_mut().step_by(2) {
            *v += rng.random_range(-4.0..4.0);
        }
        cons.project_onto_lines(&mut x);
        for cone in &cons.cones {
            let g = cone.eval(&x);
            assert!((g.d - g.b).abs() <= 1e-8);
            assert!(g.t.y.abs() <= 1e-8);
        }
    }

    #[test]
    fn solved_maps_pass_the_exact_test() {
        let (t, f) = small();
        let bound = DistortionBound::new(0.3).unwrap();
        let cons = EbdConstraints::build(&t, &f, bound, Chirality::Canonical).unwrap();
        let frames = face_frames(&t, &f, Chirality::Canonical).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let terms: Vec<MatchTerm> = (0..40)
            .map(|_| {
                let p = Vec2::new(rng.random_range(0.0..60.0), rng.random_range(0.0..40.0));
                let face = t.locate(&p).unwrap();
                MatchTerm {
                    face,
                    bary: t.barycentric(face, &p).unwrap(),
                    target: Vec2::new(rng.random_range(0.0..60.0), rng.random_range(0.0..40.0)),
                    weight: 1.0,
                }
            })
            .collect();
        let prog = build_iteration_program(&t, &cons, &terms).unwrap();
        let r = prog.solve(&PlMap::identity(&t), &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let mut x = r.x.clone();
        cons.project_onto_lines(&mut x);
        let phi = PlMap::from_flat(&x);
        for (fi, (l1, l2)) in frames.iter().enumerate() {
            let d = affine_coefficients(&t, fi, &phi).unwrap();
            assert!(check_epipolar_bd(&d, l1, l2, bound), "face {fi}");
        }
        assert!(map_is_feasible(&t, &frames, &phi, bound).unwrap());
    }
}
