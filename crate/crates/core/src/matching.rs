//! Candidate correspondences: band-restricted descriptor matching and
//! robust fundamental-matrix estimation.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, Vec2};
use crate::irls::MatchSet;

/// Keypoints with fixed-length descriptors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub dim: usize,
    pub keypoints: Vec<Vec2>,
    pub descriptors: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(dim: usize, keypoints: Vec<Vec2>, descriptors: Vec<Vec<f64>>) -> Result<Self> {
        if keypoints.len() != descriptors.len() {
            return Err(Error::Input("keypoint and descriptor counts differ".into()));
        }
        if descriptors.iter().any(|d| d.len() != dim) {
            return Err(Error::Input(format!("descriptor length differs from dim {dim}")));
        }
        Ok(FeatureSet {
            dim,
            keypoints,
            descriptors,
        })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Sampson-distance bound of the search band.
    pub delta: f64,
    /// Required ratio between second-best and best descriptor distance.
    pub ratio: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            delta: 5.0,
            ratio: 2.0,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.ratio > 1.0) || !self.ratio.is_finite() {
            return Err(Error::Config(format!("ratio must exceed 1, got {}", self.ratio)));
        }
        Ok(())
    }
}

fn descriptor_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// For every keypoint of `a`, the nearest descriptor of `b` among the
/// keypoints inside its Sampson band, kept when the second nearest in the
/// band is at least `ratio` times farther.
pub fn epipolar_match(
    a: &FeatureSet,
    b: &FeatureSet,
    f: &FundamentalMatrix,
    params: &MatchParams,
) -> Result<MatchSet> {
    params.validate()?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("feature set is empty".into()));
    }
    if a.dim != b.dim {
        return Err(Error::Input(format!(
            "descriptor dimensions differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    let pairs: Vec<Option<(Vec2, Vec2)>> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let p = a.keypoints[i];
            let mut best: Option<(f64, usize)> = None;
            let mut second = f64::INFINITY;
            for (j, q) in b.keypoints.iter().enumerate() {
                match f.sampson_distance(&p, q) {
                    Ok(s) if s < params.delta => {}
                    _ => continue,
                }
                let d = descriptor_distance(&a.descriptors[i], &b.descriptors[j]);
                match best {
                    Some((bd, _)) if d >= bd => second = second.min(d),
                    Some((bd, _)) => {
                        second = bd;
                        best = Some((d, j));
                    }
                    None => best = Some((d, j)),
                }
            }
            let (d1, j) = best?;
            (second >= params.ratio * d1).then(|| (p, b.keypoints[j]))
        })
        .collect();
    Ok(MatchSet::new(pairs.into_iter().flatten().collect()))
}

/// Ratio-test matching over the whole second image, for putative pairs
/// when no fundamental matrix is known yet.
pub fn global_match(a: &FeatureSet, b: &FeatureSet, ratio: f64) -> Result<MatchSet> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::Config(format!("ratio must exceed 1, got {ratio}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("feature set is empty".into()));
    }
    if a.dim != b.dim {
        return Err(Error::Input(format!(
            "descriptor dimensions differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    let pairs: Vec<Option<(Vec2, Vec2)>> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = b
                .descriptors
                .iter()
                .enumerate()
                .map(|(j, e)| (descriptor_distance(&a.descriptors[i], e), j))
                .collect();
            d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let second = d.get(1).map_or(f64::INFINITY, |s| s.0);
            (second >= ratio * d[0].0).then(|| (a.keypoints[i], b.keypoints[d[0].1]))
        })
        .collect();
    Ok(MatchSet::new(pairs.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Sampson-distance inlier bound.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 2000,
            threshold: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub f: FundamentalMatrix,
    pub inliers: Vec<bool>,
    /// The consensus is explained by a single homography, so `F` is not
    /// determined by it.
    pub planar_degenerate: bool,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: &[Vec2]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let mean = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 1e-12 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn apply(h: &Matrix3<f64>, p: &Vec2) -> Vector3<f64> {
    h * Vector3::new(p.x, p.y, 1.0)
}

/// Null vector of `rows` (at least 8 of them) by SVD.
fn smallest_right_vector(rows: Vec<[f64; 9]>) -> Option<[f64; 9]> {
    let n = rows.len().max(9);
    let mut a = DMatrix::<f64>::zeros(n, 9);
    for (r, row) in rows.iter().enumerate() {
        for c in 0..9 {
            a[(r, c)] = row[c];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let k = svd.singular_values.imin();
    let mut out = [0.0; 9];
    for c in 0..9 {
        out[c] = vt[(k, c)];
    }
    Some(out)
}

/// Normalized 8-point estimate from all given pairs, rank 2 enforced.
pub fn eight_point(pairs: &[(Vec2, Vec2)]) -> Result<FundamentalMatrix> {
    if pairs.len() < 8 {
        return Err(Error::Input(format!("need at least 8 pairs, got {}", pairs.len())));
    }
    let src: Vec<Vec2> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Vec2> = pairs.iter().map(|p| p.1).collect();
    let t1 = normalizer(&src);
    let t2 = normalizer(&dst);
    let rows: Vec<[f64; 9]> = pairs
        .iter()
        .map(|(p, q)| {
            let x = apply(&t1, p);
            let y = apply(&t2, q);
            [
                y.x * x.x, y.x * x.y, y.x,
                y.y * x.x, y.y * x.y, y.y,
                x.x, x.y, 1.0,
            ]
        })
        .collect();
    let v = smallest_right_vector(rows)
        .ok_or_else(|| Error::InvalidFundamental("SVD failed".into()))?;
    let fhat = Matrix3::from_row_slice(&v);
    let svd = fhat.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = svd.singular_values;
    let k = s.imin();
    s[k] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&s) * vt;
    FundamentalMatrix::enforce_rank2(t2.transpose() * rank2 * t1)
}

fn consensus(f: &FundamentalMatrix, pairs: &[(Vec2, Vec2)], threshold: f64) -> Vec<bool> {
    pairs
        .iter()
        .map(|(p, q)| matches!(f.sampson_distance(p, q), Ok(d) if d < threshold))
        .collect()
}

/// RANSAC over minimal 8-point samples, then refits on the consensus.
pub fn estimate_fundamental(matches: &MatchSet, params: &RansacParams) -> Result<RansacResult> {
    let pairs = &matches.pairs;
    if pairs.len() < 8 {
        return Err(Error::Input(format!("need at least 8 pairs, got {}", pairs.len())));
    }
    if params.iterations == 0 || !(params.threshold > 0.0) {
        return Err(Error::Config("RANSAC needs iterations ≥ 1 and a positive threshold".into()));
    }
    let best = (0..params.iterations)
        .into_par_iter()
        .filter_map(|it| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(it as u64);
            let idx = sample(&mut rng, pairs.len(), 8);
            let subset: Vec<(Vec2, Vec2)> = idx.iter().map(|i| pairs[i]).collect();
            let f = eight_point(&subset).ok()?;
            let count = consensus(&f, pairs, params.threshold).iter().filter(|&&b| b).count();
            Some((count, it, f))
        })
        // Largest consensus, earliest iteration on ties.
        .reduce_with(|a, b| {
            if (b.0, std::cmp::Reverse(b.1)) > (a.0, std::cmp::Reverse(a.1)) {
                b
            } else {
                a
            }
        });
    let (_, _, mut f) = best.ok_or_else(|| Error::Geometry("no RANSAC sample gave a valid F".into()))?;
    let mut inliers = consensus(&f, pairs, params.threshold);
    for _ in 0..3 {
        let subset: Vec<(Vec2, Vec2)> = pairs
            .iter()
            .zip(&inliers)
            .filter(|(_, &b)| b)
            .map(|(p, _)| *p)
            .collect();
        if subset.len() < 8 {
            return Err(Error::Geometry(format!(
                "RANSAC consensus has only {} pairs",
                subset.len()
            )));
        }
        let refit = eight_point(&subset)?;
        let next = consensus(&refit, pairs, params.threshold);
        let stable = next == inliers;
        f = refit;
        inliers = next;
        if stable {
            break;
        }
    }
    let consensus_pairs: Vec<(Vec2, Vec2)> = pairs
        .iter()
        .zip(&inliers)
        .filter(|(_, &b)| b)
        .map(|(p, _)| *p)
        .collect();
    if consensus_pairs.len() < 8 {
        return Err(Error::Geometry("RANSAC consensus below 8 pairs".into()));
    }
    let planar_degenerate = homography_explains(&consensus_pairs, params.threshold.sqrt().max(1.0));
    Ok(RansacResult {
        f,
        inliers,
        planar_degenerate,
    })
}

/// DLT homography from all pairs.
pub fn fit_homography(pairs: &[(Vec2, Vec2)]) -> Option<Matrix3<f64>> {
    if pairs.len() < 4 {
        return None;
    }
    let src: Vec<Vec2> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Vec2> = pairs.iter().map(|p| p.1).collect();
    let t1 = normalizer(&src);
    let t2 = normalizer(&dst);
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for (p, q) in pairs {
        let x = apply(&t1, p);
        let y = apply(&t2, q);
        rows.push([-x.x, -x.y, -1.0, 0.0, 0.0, 0.0, y.x * x.x, y.x * x.y, y.x]);
        rows.push([0.0, 0.0, 0.0, -x.x, -x.y, -1.0, y.y * x.x, y.y * x.y, y.y]);
    }
    let v = smallest_right_vector(rows)?;
    let h = Matrix3::from_row_slice(&v);
    let t2inv = t2.try_inverse()?;
    Some(t2inv * h * t1)
}

/// Whether at least 95% of the pairs are transferred by one homography to
/// within `tol` pixels.
fn homography_explains(pairs: &[(Vec2, Vec2)], tol: f64) -> bool {
    let Some(h) = fit_homography(pairs) else { return false };
    let good = pairs
        .iter()
        .filter(|(p, q)| {
            let y = apply(&h, p);
            y.z.abs() > 1e-12 && (Vec2::new(y.x / y.z, y.y / y.z) - q).norm() <= tol
        })
        .count();
    good as f64 >= 0.95 * pairs.len() as f64
}
