//! Synthetic piecewise-planar two-view scenes with known correspondence,
//! and the accuracy metrics used to score a recovered map.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, Vec2};
use crate::io::write_atomic;
use crate::irls::MatchSet;
use crate::matching::FeatureSet;
use crate::program::PlMap;
use crate::triangulation::{EpipolarTriangulation, ImageRect};

/// A planar piece of the scene: the plane `a·X + b·Y + c·Z + d = 0` in
/// world coordinates, restricted to the region whose first-view image is
/// `polygon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub plane: [f64; 4],
    pub polygon: Vec<[f64; 2]>,
    /// Number of texture points sampled on the patch.
    pub points: usize,
}

/// Fields missing from a TOML spec take their values from the default scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub patches: Vec<Patch>,
    pub camera1: [[f64; 4]; 3],
    pub camera2: [[f64; 4]; 3],
    pub image1: [f64; 2],
    pub image2: [f64; 2],
    /// Gaussian pixel noise on second-view inlier points.
    pub sigma: f64,
    /// Fraction of the candidate set that is outliers.
    pub outlier_fraction: f64,
    /// Sampson bound of the band outliers are drawn from.
    pub band: f64,
    /// Minimum distance between an outlier and the true correspondence.
    pub outlier_min_offset: f64,
    pub seed: u64,
}

fn mat34(rows: &[[f64; 4]; 3]) -> Matrix3x4<f64> {
    Matrix3x4::from_fn(|r, c| rows[r][c])
}

fn rows34(m: &Matrix3x4<f64>) -> [[f64; 4]; 3] {
    let mut out = [[0.0; 4]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

fn camera(k: &Matrix3<f64>, r: &Matrix3<f64>, centre: Vector3<f64>) -> Matrix3x4<f64> {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    rt.set_column(3, &(-r * centre));
    k * rt
}

fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Focal length 1.25 image widths, principal point at the centre.
fn intrinsics(w: f64, h: f64) -> Matrix3<f64> {
    let f = 1.25 * w;
    Matrix3::new(f, 0.0, w / 2.0, 0.0, f, h / 2.0, 0.0, 0.0, 1.0)
}

impl Default for SceneSpec {
    /// Three planes folded along two vertical lines at depth 5, slanted by
    /// ±31° around them, seen by a camera pair with a 0.4 baseline in
    /// 160×120 images (about 2.4 inliers per mesh face at η = 25).
    fn default() -> Self {
        let (w, h) = (160.0, 120.0);
        let k = intrinsics(w, h);
        let p1 = camera(&k, &Matrix3::identity(), Vector3::zeros());
        let p2 = camera(&k, &rot_y(-0.03), Vector3::new(0.4, 0.03, 0.05));
        // Fold lines at X = ±0.7, Z = 5 image to columns 80 ± 28.
        let (ul, ur) = (52.0, 108.0);
        let strip = |x0: f64, x1: f64| vec![[x0, 0.0], [x1, 0.0], [x1, h], [x0, h]];
        SceneSpec {
            patches: vec![
                // Z = 5 − 0.6 (X + 0.7)
                Patch { plane: [-0.6, 0.0, -1.0, 4.58], polygon: strip(0.0, ul), points: 67 },
                Patch { plane: [0.0, 0.0, -1.0, 5.0], polygon: strip(ul, ur), points: 66 },
                // Z = 5 + 0.6 (X − 0.7)
                Patch { plane: [0.6, 0.0, -1.0, 4.58], polygon: strip(ur, w), points: 67 },
            ],
            camera1: rows34(&p1),
            camera2: rows34(&p2),
            image1: [w, h],
            image2: [w, h],
            sigma: 0.3,
            outlier_fraction: 0.3,
            band: 5.0,
            outlier_min_offset: 5.0,
            seed: 1,
        }
    }
}

impl SceneSpec {
    /// One fronto-parallel plane and two cameras with parallel image
    /// planes: the induced map is a translation. The second image is wider
    /// so that the whole first image stays visible.
    pub fn fronto_parallel(points: usize) -> Self {
        let (w, h) = (320.0, 240.0);
        let k = intrinsics(w, h);
        let mut k2 = k;
        k2[(0, 2)] += 40.0;
        SceneSpec {
            patches: vec![Patch {
                plane: [0.0, 0.0, -1.0, 5.0],
                polygon: vec![[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]],
                points,
            }],
            camera1: rows34(&camera(&k, &Matrix3::identity(), Vector3::zeros())),
            camera2: rows34(&camera(&k2, &Matrix3::identity(), Vector3::new(0.3, 0.0, 0.0))),
            image1: [w, h],
            image2: [w + 40.0, h],
            sigma: 0.0,
            outlier_fraction: 0.0,
            band: 5.0,
            outlier_min_offset: 5.0,
            seed: 1,
        }
    }

    pub fn p1(&self) -> Matrix3x4<f64> {
        mat34(&self.camera1)
    }

    pub fn p2(&self) -> Matrix3x4<f64> {
        mat34(&self.camera2)
    }

    /// Parses and validates a spec; schema errors are configuration errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn source_image(&self) -> Result<ImageRect> {
        ImageRect::new(self.image1[0], self.image1[1]).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn target_image(&self) -> Result<ImageRect> {
        ImageRect::new(self.image2[0], self.image2[1]).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.source_image()?;
        self.target_image()?;
        if self.patches.is_empty() {
            return bad("scene has no patches".into());
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!("outlier fraction must lie in [0, 1), got {}", self.outlier_fraction));
        }
        if !(self.band > 0.0) || !(self.outlier_min_offset >= 0.0) {
            return bad("band must be positive and outlier offset non-negative".into());
        }
        let cams = [self.p1(), self.p2()];
        for cam in &cams {
            if cam.iter().any(|v| !v.is_finite()) {
                return bad("camera matrix has non-finite entries".into());
            }
            if cam.fixed_view::<3, 3>(0, 0).determinant().abs() < 1e-12 {
                return bad("camera matrix is singular".into());
            }
        }
        for (i, patch) in self.patches.iter().enumerate() {
            if patch.polygon.len() < 3 {
                return bad(format!("patch {i}: polygon needs at least 3 vertices"));
            }
            if patch.plane.iter().any(|v| !v.is_finite())
                || patch.plane[..3].iter().all(|v| *v == 0.0)
            {
                return bad(format!("patch {i}: invalid plane"));
            }
            for v in &patch.polygon {
                let x = backproject(&cams[0], &patch.plane, &Vec2::new(v[0], v[1]))
                    .ok_or_else(|| Error::Config(format!("patch {i}: plane is seen edge-on")))?;
                for (c, cam) in cams.iter().enumerate() {
                    if depth(cam, &x) <= 0.0 {
                        return bad(format!("patch {i} lies behind camera {}", c + 1));
                    }
                }
            }
        }
        FundamentalMatrix::from_cameras(&cams[0], &cams[1]).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Depth of `x` in front of camera `p`; negative behind it.
fn depth(p: &Matrix3x4<f64>, x: &Vector3<f64>) -> f64 {
    let m = p.fixed_view::<3, 3>(0, 0);
    let w = (p * Vector4::new(x.x, x.y, x.z, 1.0)).z;
    w * m.determinant().signum() / m.row(2).norm()
}

/// Intersection of the viewing ray of pixel `p` with `plane`.
fn backproject(p1: &Matrix3x4<f64>, plane: &[f64; 4], p: &Vec2) -> Option<Vector3<f64>> {
    let m = p1.fixed_view::<3, 3>(0, 0).into_owned();
    let minv = m.try_inverse()?;
    let centre = -minv * p1.column(3);
    let dir = minv * Vector3::new(p.x, p.y, 1.0);
    let n = Vector3::new(plane[0], plane[1], plane[2]);
    let denom = n.dot(&dir);
    if denom.abs() < 1e-12 {
        return None;
    }
    let lambda = -(n.dot(&centre) + plane[3]) / denom;
    Some(centre + dir * lambda)
}

fn project(p: &Matrix3x4<f64>, x: &Vector3<f64>) -> Option<Vec2> {
    let h = p * Vector4::new(x.x, x.y, x.z, 1.0);
    (h.z.abs() > 1e-12).then(|| Vec2::new(h.x / h.z, h.y / h.z))
}

/// Even-odd rule; points on the boundary may fall either way.
fn polygon_contains(poly: &[[f64; 2]], p: &Vec2) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + n - 1) % n];
        if (a[1] > p.y) != (b[1] > p.y) {
            let x = a[0] + (p.y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Closed-boundary containment: the even-odd rule plus points on an edge.
fn polygon_covers(poly: &[[f64; 2]], p: &Vec2) -> bool {
    if polygon_contains(poly, p) {
        return true;
    }
    let n = poly.len();
    (0..n).any(|i| {
        let a = Vec2::new(poly[i][0], poly[i][1]);
        let b = Vec2::new(poly[(i + 1) % n][0], poly[(i + 1) % n][1]);
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (a + ab * t - p).norm() <= 1e-9
    })
}

fn polygon_bbox(poly: &[[f64; 2]]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for v in poly {
        lo = lo.inf(&Vec2::new(v[0], v[1]));
        hi = hi.sup(&Vec2::new(v[0], v[1]));
    }
    (lo, hi)
}

/// Parameter interval of `origin + t·dir` inside the rectangle.
fn clip_line(origin: &Vec2, dir: &Vec2, rect: &ImageRect) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (o, d, hi) in [(origin.x, dir.x, rect.width), (origin.y, dir.y, rect.height)] {
        if d.abs() < 1e-15 {
            if o < 0.0 || o > hi {
                return None;
            }
        } else {
            let (a, b) = ((0.0 - o) / d, (hi - o) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 < t1).then_some((t0, t1))
}

/// Synthetic ground truth: labeled candidates and the dense true map.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: SceneSpec,
    pub f: FundamentalMatrix,
    pub matches: MatchSet,
    /// `true` for inliers.
    pub labels: Vec<bool>,
    /// Noise-free true correspondence of every candidate's source point.
    pub clean_targets: Vec<Vec2>,
}

impl GroundTruth {
    /// True correspondence of `p`, when `p` images a patch whose point is
    /// also seen inside the second image.
    pub fn correspond(&self, p: &Vec2) -> Option<Vec2> {
        let k = self.spec.patches.iter().position(|pt| polygon_covers(&pt.polygon, p))?;
        let q = self.plane_map(k, p)?;
        let [w, h] = self.spec.image2;
        (q.x >= 0.0 && q.y >= 0.0 && q.x <= w && q.y <= h).then_some(q)
    }

    /// Transfer of `p` through the plane of patch `k`, ignoring its extent.
    pub fn plane_map(&self, k: usize, p: &Vec2) -> Option<Vec2> {
        let x = backproject(&self.spec.p1(), &self.spec.patches[k].plane, p)?;
        project(&self.spec.p2(), &x)
    }

    pub fn inlier_count(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }

    pub fn to_toml(&self) -> Result<String> {
        let file = GroundTruthFile {
            fundamental: self.f.rows(),
            labels: self.labels.clone(),
            pairs: self
                .matches
                .pairs
                .iter()
                .map(|(p, q)| [p.x, p.y, q.x, q.y])
                .collect(),
            clean_targets: self.clean_targets.iter().map(|q| [q.x, q.y]).collect(),
            spec: self.spec.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: GroundTruthFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.labels.len() != file.pairs.len() || file.clean_targets.len() != file.pairs.len() {
            return Err(Error::Parse("ground truth lists have different lengths".into()));
        }
        Ok(GroundTruth {
            f: FundamentalMatrix::from_rows(file.fundamental)?,
            matches: MatchSet::new(
                file.pairs
                    .iter()
                    .map(|v| (Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3])))
                    .collect(),
            ),
            labels: file.labels,
            clean_targets: file.clean_targets.iter().map(|v| Vec2::new(v[0], v[1])).collect(),
            spec: file.spec,
        })
    }

    /// Descriptor files reproducing the candidate set under band matching:
    /// each candidate pair shares a random descriptor, perturbed slightly
    /// in the second view.
    pub fn features(&self, dim: usize) -> (FeatureSet, FeatureSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0x5eed_f00d);
        let mut a = FeatureSet { dim, ..Default::default() };
        let mut b = FeatureSet { dim, ..Default::default() };
        for (p, q) in &self.matches.pairs {
            let d: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
            let e: Vec<f64> = d.iter().map(|v| v + rng.random_range(-0.005..0.005)).collect();
            a.keypoints.push(*p);
            a.descriptors.push(d);
            b.keypoints.push(*q);
            b.descriptors.push(e);
        }
        (a, b)
    }
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    fundamental: [[f64; 3]; 3],
    labels: Vec<bool>,
    pairs: Vec<[f64; 4]>,
    clean_targets: Vec<[f64; 2]>,
    spec: SceneSpec,
}

/// Samples texture points on every patch, keeps those visible in the
/// second image, perturbs their targets by Gaussian noise, then adds band
/// outliers so that they form `outlier_fraction` of the candidates.
/// Candidates are shuffled; the output depends only on `spec`, seed included.
pub fn generate(spec: &SceneSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let (p1, p2) = (spec.p1(), spec.p2());
    let f = FundamentalMatrix::from_cameras(&p1, &p2)?;
    let img1 = spec.source_image()?;
    let img2 = spec.target_image()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.sigma > 0.0).then(|| Normal::new(0.0, spec.sigma).unwrap());

    let base = GroundTruth {
        spec: spec.clone(),
        f,
        matches: MatchSet::default(),
        labels: vec![],
        clean_targets: vec![],
    };
    let sample_source = |rng: &mut ChaCha8Rng, k: usize| -> Option<(Vec2, Vec2)> {
        let poly = &spec.patches[k].polygon;
        let (lo, hi) = polygon_bbox(poly);
        for _ in 0..10_000 {
            let p = Vec2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
            if !img1.contains(&p) || !polygon_contains(poly, &p) {
                continue;
            }
            // Overlapping patches: the first one in the list is visible.
            if base.correspond(&p).is_none()
                || spec.patches.iter().position(|pt| polygon_covers(&pt.polygon, &p)) != Some(k)
            {
                continue;
            }
            let q = base.plane_map(k, &p)?;
            if img2.contains(&q) {
                return Some((p, q));
            }
        }
        None
    };

    let mut items: Vec<(Vec2, Vec2, Vec2, bool)> = Vec::new();
    for k in 0..spec.patches.len() {
        for _ in 0..spec.patches[k].points {
            let (p, q) = sample_source(&mut rng, k).ok_or_else(|| {
                Error::Config(format!("patch {k} has no area visible in both images"))
            })?;
            let mut noisy = q;
            if let Some(n) = &noise {
                noisy += Vec2::new(n.sample(&mut rng), n.sample(&mut rng));
            }
            items.push((p, noisy, q, true));
        }
    }
    let n_in = items.len();
    let n_out = (n_in as f64 * spec.outlier_fraction / (1.0 - spec.outlier_fraction)).round() as usize;
    let total_points: usize = spec.patches.iter().map(|p| p.points).sum();
    // Half-width of the band in pixels, generous enough for rejection.
    let half = (2.0 * spec.band).sqrt() * 1.5;
    let mut attempts = 0usize;
    while items.len() < n_in + n_out {
        attempts += 1;
        if attempts > 1000 * (n_out + 1) {
            return Err(Error::Config("could not place band outliers".into()));
        }
        let mut pick = rng.random_range(0..total_points.max(1));
        let mut k = 0;
        while pick >= spec.patches[k].points {
            pick -= spec.patches[k].points;
            k += 1;
        }
        let Some((p, q_true)) = sample_source(&mut rng, k) else { continue };
        let line = f.epipolar_line(&p)?;
        let normal = Vec2::new(line.x, line.y);
        let foot = -normal * line.z;
        let dir = Vec2::new(-normal.y, normal.x);
        let Some((t0, t1)) = clip_line(&foot, &dir, &img2) else { continue };
        let q = foot + dir * rng.random_range(t0..=t1) + normal * rng.random_range(-half..=half);
        if !img2.contains(&q) || (q - q_true).norm() <= spec.outlier_min_offset {
            continue;
        }
        match f.sampson_distance(&p, &q) {
            Ok(s) if s < spec.band => items.push((p, q, q_true, false)),
            _ => {}
        }
    }
    // Fisher-Yates with the same generator keeps the output deterministic.
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
    Ok(GroundTruth {
        matches: MatchSet::new(items.iter().map(|it| (it.0, it.1)).collect()),
        labels: items.iter().map(|it| it.3).collect(),
        clean_targets: items.iter().map(|it| it.2).collect(),
        ..base
    })
}

/// Cumulative error histogram over dense ground-truth samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Fraction of samples mapped within one pixel.
    pub within_one_px: f64,
    pub samples: usize,
    /// Samples inside the map's domain.
    pub covered: usize,
}

pub const DEFAULT_GRID_STEP: f64 = 2.0;

/// Errors are compared to thresholds with this absolute allowance for
/// rounding in the map evaluation.
const THRESHOLD_SLACK: f64 = 1e-9;

pub fn default_thresholds() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.5).collect()
}

/// Scores an arbitrary map against the dense ground truth. Samples sit on
/// a grid of spacing `step` over the first image, restricted to patches.
/// Samples outside the map's domain count as unmatched.
pub fn evaluate_with<M>(map: M, gt: &GroundTruth, thresholds: &[f64], step: f64) -> Result<EvalReport>
where
    M: Fn(&Vec2) -> Option<Vec2>,
{
    if !(step > 0.0) {
        return Err(Error::Config("grid step must be positive".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Config("thresholds must be finite and non-negative".into()));
    }
    let img = gt.spec.source_image()?;
    let mut errors = Vec::new();
    let mut samples = 0;
    let mut y = step / 2.0;
    while y < img.height {
        let mut x = step / 2.0;
        while x < img.width {
            let p = Vec2::new(x, y);
            if let Some(q) = gt.correspond(&p) {
                samples += 1;
                if let Some(m) = map(&p) {
                    errors.push((m - q).norm());
                }
            }
            x += step;
        }
        y += step;
    }
    if samples == 0 {
        return Err(Error::Input("no ground-truth samples in the image".into()));
    }
    let covered = errors.len();
    if 2 * covered < samples {
        return Err(Error::Coverage { covered, total: samples });
    }
    let frac = |t: f64| errors.iter().filter(|&&e| e <= t + THRESHOLD_SLACK).count() as f64 / samples as f64;
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        fractions: thresholds.iter().map(|&t| frac(t)).collect(),
        within_one_px: frac(1.0),
        samples,
        covered,
    })
}

pub fn evaluate(phi: &PlMap, t: &EpipolarTriangulation, gt: &GroundTruth, thresholds: &[f64]) -> Result<EvalReport> {
    evaluate_with(|p| phi.evaluate(t, p).ok(), gt, thresholds, DEFAULT_GRID_STEP)
}

pub const EVAL_HEADER: &str = "threshold,fraction";

pub fn format_eval_table(report: &EvalReport) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for (t, f) in report.thresholds.iter().zip(&report.fractions) {
        let _ = writeln!(s, "{t},{f}");
    }
    s
}

pub fn parse_eval_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(EVAL_HEADER) {
        return Err(Error::Parse(format!("expected header '{EVAL_HEADER}'")));
    }
    lines
        .map(|l| {
            let mut it = l.split(',').map(|v| v.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(t)), Some(Ok(f)), None) => Ok((t, f)),
                _ => Err(Error::Parse(format!("bad table row '{l}'"))),
            }
        })
        .collect()
}

/// Cumulative-error curve as SVG.
pub fn render_svg(report: &EvalReport) -> String {
    let (w, h, m) = (480.0, 320.0, 40.0);
    let tmax = report.thresholds.iter().cloned().fold(0.0, f64::max).max(1.0);
    let sx = |t: f64| m + (w - 2.0 * m) * t / tmax;
    let sy = |f: f64| h - m - (h - 2.0 * m) * f;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M {} {} L {} {} L {} {}" fill="none" stroke="black"/>"#,
        m, m, m, h - m, w - m, h - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">error threshold (px)</text>"#, w / 2.0, h - 8.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">fraction of samples</text>"#, h / 2.0, h / 2.0);
    if !report.thresholds.is_empty() {
        let pts: Vec<String> = report
            .thresholds
            .iter()
            .zip(&report.fractions)
            .map(|(&t, &f)| format!("{:.3},{:.3}", sx(t), sy(f)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<base>.svg` and `<base>.csv`.
pub fn emit_plots(report: &EvalReport, base: &Path) -> Result<Vec<PathBuf>> {
    let svg = base.with_extension("svg");
    let csv = base.with_extension("csv");
    write_atomic(&svg, render_svg(report).as_bytes())?;
    write_atomic(&csv, format_eval_table(report).as_bytes())?;
    Ok(vec![svg, csv])
}
