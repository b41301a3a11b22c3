//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use ebd_core::conic::{AffineExpr, ConicProblem, LinearRow, SocBlock};
use ebd_core::geometry::{DirectedLine, Vec2};
use ebd_core::AffineMap;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x4, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Constraint on a contiguous block of variables with a closed-form
/// projection.
#[derive(Debug, Clone)]
pub enum Block {
    Free { start: usize, len: usize },
    Box { start: usize, lo: Vec<f64>, hi: Vec<f64> },
    /// `‖x[start+1..start+len] − shift‖ ≤ x[start] − offset`.
    Cone { start: usize, len: usize, offset: f64, shift: Vec<f64> },
}

/// Strongly convex quadratic over a product of blocks.
#[derive(Debug, Clone)]
pub struct BlockProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub blocks: Vec<Block>,
}

fn project_lorentz(t: f64, u: &[f64]) -> (f64, Vec<f64>) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        (t, u.to_vec())
    } else if norm <= -t {
        (0.0, vec![0.0; u.len()])
    } else {
        let s = (t + norm) / 2.0;
        (s, u.iter().map(|v| v * s / norm).collect())
    }
}

impl BlockProblem {
    pub fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = (b.transpose() * &b) / n as f64 + DMatrix::identity(n, n) * 0.2;
        let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n {
            let len = rng.random_range(1..=5).min(n - start);
            let block = match rng.random_range(0..3) {
                0 => Block::Free { start, len },
                1 => {
                    let lo: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..0.5)).collect();
                    let hi = lo.iter().map(|l| l + rng.random_range(0.1..1.5)).collect();
                    Block::Box { start, lo, hi }
                }
                _ if len >= 2 => Block::Cone {
                    start,
                    len,
                    offset: rng.random_range(-0.5..0.5),
                    shift: (1..len).map(|_| rng.random_range(-0.5..0.5)).collect(),
                },
                _ => Block::Free { start, len },
            };
            blocks.push(block);
            start += len;
        }
        BlockProblem { p, q, blocks }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        for b in &self.blocks {
            match b {
                Block::Free { .. } => {}
                Block::Box { start, lo, hi } => {
                    for k in 0..lo.len() {
                        x[start + k] = x[start + k].clamp(lo[k], hi[k]);
                    }
                }
                Block::Cone { start, len, offset, shift } => {
                    let u: Vec<f64> = (1..*len).map(|k| x[start + k] - shift[k - 1]).collect();
                    let (t, u) = project_lorentz(x[*start] - offset, &u);
                    x[*start] = t + offset;
                    for k in 1..*len {
                        x[start + k] = u[k - 1] + shift[k - 1];
                    }
                }
            }
        }
    }

    /// Accelerated projected gradient with adaptive restart, run until the
    /// iterates stop moving.
    pub fn projected_gradient(&self, max_iter: usize) -> (DVector<f64>, f64) {
        let n = self.n();
        let lmax = self.p.clone().symmetric_eigen().eigenvalues.max();
        let step = 1.0 / lmax;
        let mut x = DVector::zeros(n);
        self.project(&mut x);
        let mut y = x.clone();
        let mut theta = 1.0f64;
        for _ in 0..max_iter {
            let g = &self.p * &y + &self.q;
            let mut next = &y - g * step;
            self.project(&mut next);
            let moved = (&next - &x).norm();
            let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
            if self.objective(&next) > self.objective(&x) {
                // Restart the momentum.
                theta = 1.0;
                y = x.clone();
                continue;
            }
            y = &next + (&next - &x) * ((theta - 1.0) / theta_next);
            theta = theta_next;
            x = next;
            if moved <= 1e-13 * (1.0 + x.norm()) {
                break;
            }
        }
        let f = self.objective(&x);
        (x, f)
    }

    pub fn to_conic(&self) -> ConicProblem {
        let n = self.n();
        let mut prob = ConicProblem::new(n);
        for i in 0..n {
            for j in i..n {
                if self.p[(i, j)] != 0.0 {
                    prob.add_p(i, j, self.p[(i, j)]);
                }
            }
        }
        prob.q = self.q.iter().cloned().collect();
        for b in &self.blocks {
            match b {
                Block::Free { .. } => {}
                Block::Box { start, lo, hi } => {
                    for k in 0..lo.len() {
                        prob.le.push(LinearRow::new(vec![(start + k, 1.0)], hi[k]));
                        prob.le.push(LinearRow::new(vec![(start + k, -1.0)], -lo[k]));
                    }
                }
                Block::Cone { start, len, offset, shift } => prob.cones.push(SocBlock {
                    t: AffineExpr::new(vec![(*start, 1.0)], -offset),
                    u: (1..*len)
                        .map(|k| AffineExpr::new(vec![(start + k, 1.0)], -shift[k - 1]))
                        .collect(),
                }),
            }
        }
        prob
    }
}

/// Rotation taking the x-axis to the line direction.
pub fn frame(l: &DirectedLine) -> Matrix2<f64> {
    let d = l.direction;
    Matrix2::new(d.x, -d.y, d.y, d.x)
}

pub fn random_line(rng: &mut ChaCha8Rng) -> DirectedLine {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    DirectedLine::new(
        Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
        Vec2::new(a.cos(), a.sin()),
    )
    .unwrap()
}

/// Random member of the epipolar bounded-distortion set of `(l1, l2)`,
/// drawn in line-adapted coordinates and mapped back.
pub fn random_ebd_map(rng: &mut ChaCha8Rng, l1: &DirectedLine, l2: &DirectedLine, mu: f64) -> AffineMap {
    let a: f64 = rng.random_range(0.05..3.0);
    let r = mu * a * rng.random_range(0.0..1.0f64).sqrt();
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    // (√(1−μ²)·b, c) inside the disc of radius μa.
    let b = r * phi.cos() / (1.0 - mu * mu).sqrt();
    let c = r * phi.sin();
    // d = b keeps the x-axis: the linear part is [[a + c, 2b], [0, a − c]].
    let adapted = Matrix2::new(a + c, 2.0 * b, 0.0, a - c);
    let tx: f64 = rng.random_range(-20.0..20.0);
    let (r1, r2) = (frame(l1), frame(l2));
    let m = r2 * adapted * r1.transpose();
    let t = r2 * Vec2::new(tx, 0.0) + l2.point - m * l1.point;
    AffineMap::new(m, t)
}

pub fn cameras() -> (Matrix3x4<f64>, Matrix3x4<f64>) {
    let k = Matrix3::new(500.0, 0.0, 160.0, 0.0, 500.0, 120.0, 0.0, 0.0, 1.0);
    let p1 = k * Matrix3x4::identity();
    let (s, c) = 0.15f64.sin_cos();
    let r = Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c);
    let centre = Vector3::new(1.0, 0.2, 0.1);
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    rt.set_column(3, &(-r * centre));
    (p1, k * rt)
}

pub fn project(p: &Matrix3x4<f64>, x: &Vector3<f64>) -> Vec2 {
    let h = p * Vector4::new(x.x, x.y, x.z, 1.0);
    Vec2::new(h.x / h.z, h.y / h.z)
}

/// Noise-free correspondences of random points at varied depth.
pub fn general_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Vec2, Vec2)> {
    let (p1, p2) = cameras();
    (0..n)
        .map(|_| {
            let w = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(4.0..9.0),
            );
            (project(&p1, &w), project(&p2, &w))
        })
        .collect()
}
