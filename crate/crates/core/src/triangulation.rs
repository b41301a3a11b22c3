//! Epipolar triangulation of the source image.
//!
//! Vertices sit on a polar grid centred at the epipole (or on a grid of
//! parallel lines when the epipole is at infinity). Every grid quad between
//! two adjacent rays is split by one diagonal, so each triangle keeps one
//! full edge on an epipolar ray.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{DirectedLine, Epipole, FundamentalMatrix, Vec2};

const MIN_FACE_AREA: f64 = 1e-6;
const INSIDE_TOL: f64 = 1e-12;

/// Axis-aligned image domain `[0, width] × [0, height]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageRect {
    pub width: f64,
    pub height: f64,
}

impl ImageRect {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::Input(format!("empty image rectangle {width}×{height}")));
        }
        Ok(ImageRect { width, height })
    }

    pub fn diameter(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            Vec2::new(0.0, 0.0),
            Vec2::new(self.width, 0.0),
            Vec2::new(self.width, self.height),
            Vec2::new(0.0, self.height),
        ]
    }

    fn distance_to(&self, p: &Vec2) -> f64 {
        let dx = (0.0 - p.x).max(p.x - self.width).max(0.0);
        let dy = (0.0 - p.y).max(p.y - self.height).max(0.0);
        dx.hypot(dy)
    }
}

/// Grid spacing and the pole exclusion radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Radial step in pixels.
    pub eta: f64,
    /// Minimum radius around the epipole; `None` picks `eta` when the
    /// epipole is inside or within `eta` of the image.
    pub r_min: Option<f64>,
}

impl GridConfig {
    pub fn new(eta: f64) -> Result<Self> {
        let cfg = GridConfig { eta, r_min: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if let Some(r) = self.r_min {
            if !(r >= 0.0) {
                return Err(Error::Config(format!("r_min must be nonnegative, got {r}")));
            }
        }
        Ok(())
    }
}

/// Position of a vertex on the epipolar pencil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RayParam {
    Polar { angle: f64, radius: f64 },
    Parallel { line: usize, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Face {
    /// Counterclockwise vertex indices.
    pub vertices: [usize; 3],
    /// Edge `k` joins `vertices[k]` and `vertices[(k+1)%3]`; this one lies
    /// on an epipolar ray.
    pub marked_edge: usize,
    /// Index of the ray containing the marked edge.
    pub ray: usize,
    /// The marked edge's epipolar line, directed away from the epipole.
    pub line: DirectedLine,
}

impl Face {
    pub fn marked_endpoints(&self) -> (usize, usize) {
        (
            self.vertices[self.marked_edge],
            self.vertices[(self.marked_edge + 1) % 3],
        )
    }
}

#[derive(Debug, Clone)]
pub struct EpipolarTriangulation {
    pub vertices: Vec<Vec2>,
    pub faces: Vec<Face>,
    pub ray_params: Vec<RayParam>,
    /// Ray index of every vertex.
    pub vertex_rays: Vec<usize>,
    pub ray_count: usize,
    pub epipole: Epipole,
    pub image: ImageRect,
    locator: Locator,
}

impl EpipolarTriangulation {
    pub fn build(image: ImageRect, f: &FundamentalMatrix, cfg: &GridConfig) -> Result<Self> {
        ImageRect::new(image.width, image.height)?;
        cfg.validate()?;
        let epipole = f.epipole()?;
        let grid = match epipole.point() {
            Some(e) => polar_grid(&image, e, cfg)?,
            None => parallel_grid(&image, epipole.direction(), cfg.eta),
        };
        Self::from_grid(image, epipole, grid)
    }

    fn from_grid(image: ImageRect, epipole: Epipole, grid: Grid) -> Result<Self> {
        let Grid {
            positions,
            params,
            rays,
            lines,
            wrap,
            outward,
        } = grid;
        let nrays = positions.len();
        let nradii = positions[0].len();
        let id = |j: usize, k: usize| j * nradii + k;
        let mut raw_faces: Vec<([usize; 3], usize, usize)> = Vec::new();
        let quads_j = if wrap { nrays } else { nrays - 1 };
        for j in 0..quads_j {
            let jn = (j + 1) % nrays;
            for k in 0..nradii - 1 {
                // Split along the diagonal from (j,k) to (jn,k+1); each half
                // keeps one radial edge.
                raw_faces.push(([id(j, k), id(jn, k), id(jn, k + 1)], 1, jn));
                raw_faces.push(([id(j, k), id(jn, k + 1), id(j, k + 1)], 2, j));
            }
        }
        let flat: Vec<Vec2> = positions.iter().flatten().copied().collect();
        let mut keep = Vec::new();
        for (tri, marked, ray) in raw_faces {
            let pts = [flat[tri[0]], flat[tri[1]], flat[tri[2]]];
            if triangle_intersects_rect(&pts, &image) {
                keep.push((tri, marked, ray));
            }
        }
        if keep.is_empty() {
            return Err(Error::Geometry("no triangle meets the image".into()));
        }
        let mut remap = vec![usize::MAX; flat.len()];
        let mut vertices = Vec::new();
        let mut ray_params = Vec::new();
        let mut vertex_rays = Vec::new();
        for (tri, _, _) in &keep {
            for &v in tri {
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(flat[v]);
                    let (j, k) = (v / nradii, v % nradii);
                    ray_params.push(params[j][k]);
                    vertex_rays.push(rays[j]);
                }
            }
        }
        let mut faces = Vec::with_capacity(keep.len());
        for (tri, marked, ray) in keep {
            let mut idx = [remap[tri[0]], remap[tri[1]], remap[tri[2]]];
            let mut marked = marked;
            let area = signed_area(&vertices[idx[0]], &vertices[idx[1]], &vertices[idx[2]]);
            if area < 0.0 {
                // Reverse to CCW; edge k becomes edge (3 - k) % 3 ... remapped below.
                let (a, b) = (idx[marked], idx[(marked + 1) % 3]);
                idx.swap(1, 2);
                marked = (0..3)
                    .find(|&e| {
                        let (u, w) = (idx[e], idx[(e + 1) % 3]);
                        (u == a && w == b) || (u == b && w == a)
                    })
                    .expect("marked edge survives reordering");
            }
            let area = signed_area(&vertices[idx[0]], &vertices[idx[1]], &vertices[idx[2]]);
            if area <= MIN_FACE_AREA {
                return Err(Error::Geometry(format!("sliver triangle of area {area:e}")));
            }
            let (a, b) = (idx[marked], idx[(marked + 1) % 3]);
            let inner = if along(&outward[ray], &vertices[a]) <= along(&outward[ray], &vertices[b]) {
                a
            } else {
                b
            };
            let line = DirectedLine::new(vertices[inner], lines[ray])?;
            faces.push(Face {
                vertices: idx,
                marked_edge: marked,
                ray,
                line,
            });
        }
        let locator = Locator::new(&vertices, &faces);
        Ok(EpipolarTriangulation {
            vertices,
            faces,
            ray_params,
            vertex_rays,
            ray_count: nrays,
            epipole,
            image,
            locator,
        })
    }

    /// Lowest-index face containing `p` (boundary inclusive).
    pub fn locate(&self, p: &Vec2) -> Option<usize> {
        self.locator.candidates(p).iter().copied().find(|&fi| {
            let [i, j, k] = self.faces[fi].vertices;
            let (a, b, c) = (&self.vertices[i], &self.vertices[j], &self.vertices[k]);
            let area = signed_area(a, b, c);
            let tol = INSIDE_TOL * area.max(1.0);
            signed_area(p, b, c) >= -tol && signed_area(a, p, c) >= -tol && signed_area(a, b, p) >= -tol
        })
    }

    /// Barycentric coordinates of `p` with respect to face `face`.
    pub fn barycentric(&self, face: usize, p: &Vec2) -> Result<[f64; 3]> {
        let f = self
            .faces
            .get(face)
            .ok_or_else(|| Error::Geometry(format!("face {face} out of range")))?;
        let [i, j, k] = f.vertices;
        barycentric_in(&self.vertices[i], &self.vertices[j], &self.vertices[k], p)
    }

    pub fn face_points(&self, face: usize) -> [Vec2; 3] {
        let [i, j, k] = self.faces[face].vertices;
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_points(face);
        signed_area(&a, &b, &c)
    }

    /// Plain-text dump: a `vertices N` block of `x y` lines followed by a
    /// `faces M` block of `i j k edge` lines.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{} {}", v.x, v.y);
        }
        let _ = writeln!(out, "faces {}", self.faces.len());
        for f in &self.faces {
            let [i, j, k] = f.vertices;
            let _ = writeln!(out, "{i} {j} {k} {}", f.marked_edge);
        }
        out
    }
}

pub fn signed_area(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

pub fn barycentric_in(a: &Vec2, b: &Vec2, c: &Vec2, p: &Vec2) -> Result<[f64; 3]> {
    let area = signed_area(a, b, c);
    if area.abs() <= MIN_FACE_AREA {
        return Err(Error::Geometry(format!("degenerate face of area {area:e}")));
    }
    let ci = signed_area(p, b, c) / area;
    let cj = signed_area(a, p, c) / area;
    let ck = 1.0 - ci - cj;
    Ok([ci, cj, ck])
}

fn along(dir: &Vec2, p: &Vec2) -> f64 {
    dir.dot(p)
}

struct Grid {
    /// `positions[ray][step]`.
    positions: Vec<Vec<Vec2>>,
    params: Vec<Vec<RayParam>>,
    rays: Vec<usize>,
    /// Direction of each ray.
    lines: Vec<Vec2>,
    wrap: bool,
    /// Direction measuring distance from the epipole along each ray.
    outward: Vec<Vec2>,
}

fn polar_grid(image: &ImageRect, e: Vec2, cfg: &GridConfig) -> Result<Grid> {
    let eta = cfg.eta;
    let r_lo = image.distance_to(&e);
    let r_hi = image
        .corners()
        .iter()
        .map(|c| (c - e).norm())
        .fold(0.0, f64::max);
    let inside = r_lo == 0.0;
    let near = r_lo < eta;
    let r_min = match (cfg.r_min, near) {
        (Some(r), _) => r,
        (None, true) => eta,
        (None, false) => 0.0,
    };
    if inside && r_min <= 0.0 {
        return Err(Error::Config(
            "epipole inside the image needs a positive r_min".into(),
        ));
    }
    let r_start = if near { r_min } else { (r_lo - eta).max(r_min).max(eta * 1e-3) };
    let steps = ((r_hi + eta - r_start) / eta).ceil().max(1.0) as usize;
    let radii: Vec<f64> = (0..=steps).map(|k| r_start + eta * k as f64).collect();

    let r_ref = r_lo.max(r_min).max(eta);
    let (angles, wrap) = if inside || near {
        // Arc length ≈ eta at the nearest radius; full fan around the pole.
        let n = ((2.0 * PI * r_ref / eta).ceil() as usize).max(8);
        ((0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect::<Vec<_>>(), true)
    } else {
        let center = Vec2::new(image.width / 2.0, image.height / 2.0) - e;
        let base = center.y.atan2(center.x);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in image.corners() {
            let d = c - e;
            let mut a = d.y.atan2(d.x) - base;
            while a > PI {
                a -= 2.0 * PI;
            }
            while a < -PI {
                a += 2.0 * PI;
            }
            lo = lo.min(a);
            hi = hi.max(a);
        }
        let step = eta / r_ref;
        lo -= step;
        hi += step;
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        let step = (hi - lo) / n as f64;
        ((0..=n).map(|j| base + lo + step * j as f64).collect(), false)
    };

    let mut positions = Vec::with_capacity(angles.len());
    let mut params = Vec::with_capacity(angles.len());
    let mut lines = Vec::with_capacity(angles.len());
    for &theta in &angles {
        let u = Vec2::new(theta.cos(), theta.sin());
        positions.push(radii.iter().map(|&r| e + u * r).collect());
        params.push(
            radii
                .iter()
                .map(|&r| RayParam::Polar { angle: theta, radius: r })
                .collect(),
        );
        lines.push(u);
    }
    Ok(Grid {
        positions,
        params,
        rays: (0..angles.len()).collect(),
        outward: lines.clone(),
        lines,
        wrap,
    })
}

fn parallel_grid(image: &ImageRect, u: Vec2, eta: f64) -> Grid {
    let n = Vec2::new(-u.y, u.x);
    let (mut s_lo, mut s_hi, mut o_lo, mut o_hi) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in image.corners() {
        s_lo = s_lo.min(c.dot(&u));
        s_hi = s_hi.max(c.dot(&u));
        o_lo = o_lo.min(c.dot(&n));
        o_hi = o_hi.max(c.dot(&n));
    }
    let s0 = s_lo - eta;
    let o0 = o_lo - eta;
    let ns = ((s_hi + eta - s0) / eta).ceil() as usize;
    let no = ((o_hi + eta - o0) / eta).ceil() as usize;
    let mut positions = Vec::new();
    let mut params = Vec::new();
    for j in 0..=no {
        let o = o0 + eta * j as f64;
        positions.push((0..=ns).map(|k| u * (s0 + eta * k as f64) + n * o).collect());
        params.push(
            (0..=ns)
                .map(|k| RayParam::Parallel { line: j, offset: s0 + eta * k as f64 })
                .collect(),
        );
    }
    Grid {
        rays: (0..=no).collect(),
        lines: vec![u; no + 1],
        outward: vec![u; no + 1],
        positions,
        params,
        wrap: false,
    }
}

/// Whether the triangle overlaps the rectangle with positive area; faces
/// that only touch the border carry no data and are left out.
fn triangle_intersects_rect(tri: &[Vec2; 3], rect: &ImageRect) -> bool {
    // Separating axis test: rectangle axes, then triangle edge normals.
    let tol = 1e-9 * (1.0 + rect.diameter());
    let (min_x, max_x) = tri.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.x), b.max(p.x))
    });
    let (min_y, max_y) = tri.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.y), b.max(p.y))
    });
    if max_x <= tol || min_x >= rect.width - tol || max_y <= tol || min_y >= rect.height - tol {
        return false;
    }
    let corners = rect.corners();
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let normal = Vec2::new(b.y - a.y, a.x - b.x);
        let proj_t: Vec<f64> = tri.iter().map(|p| p.dot(&normal)).collect();
        let (t_lo, t_hi) = proj_t
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let (r_lo, r_hi) = corners
            .iter()
            .map(|c| c.dot(&normal))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let slack = tol * normal.norm();
        if r_hi <= t_lo + slack || r_lo >= t_hi - slack {
            return false;
        }
    }
    true
}

/// Uniform bucket grid over face bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(vertices: &[Vec2], faces: &[Face]) -> Self {
        let (mut lo, mut hi) = (
            Vec2::new(f64::INFINITY, f64::INFINITY),
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for v in vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let extent = (hi - lo).max().max(1e-9);
        let target = (faces.len() as f64).sqrt().ceil().max(1.0);
        let cell = extent / target;
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (fi, f) in faces.iter().enumerate() {
            let pts = f.vertices.map(|i| vertices[i]);
            let flo = pts[0].inf(&pts[1]).inf(&pts[2]);
            let fhi = pts[0].sup(&pts[1]).sup(&pts[2]);
            let (x0, y0) = Self::cell_of(lo, cell, nx, ny, &flo);
            let (x1, y1) = Self::cell_of(lo, cell, nx, ny, &fhi);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    buckets[y * nx + x].push(fi);
                }
            }
        }
        Locator {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn cell_of(origin: Vec2, cell: f64, nx: usize, ny: usize, p: &Vec2) -> (usize, usize) {
        let x = ((p.x - origin.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let y = ((p.y - origin.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (x, y)
    }

    fn candidates(&self, p: &Vec2) -> &[usize] {
        let slack = self.cell * 1e-9;
        if p.x < self.origin.x - slack
            || p.y < self.origin.y - slack
            || p.x > self.origin.x + self.cell * self.nx as f64 + slack
            || p.y > self.origin.y + self.cell * self.ny as f64 + slack
        {
            return &[];
        }
        let (x, y) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, p);
        &self.buckets[y * self.nx + x]
    }
}
