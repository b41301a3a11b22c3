//! Majorization-minimization of the robust matching energy with a
//! geometric schedule on `ε`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::conic::{SolveStatus, SolverSettings};
use crate::distortion::{check_epipolar_bd, DistortionBound};
use crate::error::{Error, Result};
use crate::geometry::{estimate_chirality, Chirality, FundamentalMatrix, Vec2};
use crate::program::{
    affine_coefficients, build_iteration_program, face_frames, EbdConstraints, MatchTerm, PlMap,
};
use crate::triangulation::EpipolarTriangulation;

/// `r^p` above `ε`, the matching quadratic below.
pub fn g_pe(r: f64, p: f64, eps: f64) -> f64 {
    if r > eps {
        r.powf(p)
    } else {
        0.5 * p * eps.powf(p - 2.0) * r * r + (1.0 - 0.5 * p) * eps.powf(p)
    }
}

/// `max(s, ε)^{p−2}`.
pub fn majorizer_weight(s: f64, p: f64, eps: f64) -> f64 {
    s.max(eps).powf(p - 2.0)
}

/// `G(r, s) = (p/2)·w(s)·r² + (1 − p/2)·max(s, ε)^p`.
pub fn majorizer(r: f64, s: f64, p: f64, eps: f64) -> f64 {
    let m = s.max(eps);
    0.5 * p * majorizer_weight(s, p, eps) * r * r + (1.0 - 0.5 * p) * m.powf(p)
}

/// `ε_init, factor·ε_init, …` while the value exceeds `ε_final`; never empty.
pub fn epsilon_schedule(eps_init: f64, eps_final: f64, factor: f64) -> Vec<f64> {
    let mut out = vec![eps_init];
    let mut eps = eps_init * factor;
    while eps > eps_final * (1.0 + 1e-12) {
        out.push(eps);
        eps *= factor;
    }
    out
}

/// How the order along epipolar lines is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChiralityMode {
    /// Majority vote of the candidate pairs.
    #[default]
    Auto,
    Canonical,
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsConfig {
    pub p: f64,
    /// Defaults to the image diameter.
    pub eps_init: Option<f64>,
    pub eps_final: f64,
    pub factor: f64,
    pub mu: f64,
    pub rel_tol: f64,
    pub max_inner: usize,
    pub solver: SolverSettings,
    pub chirality: ChiralityMode,
    /// Defaults to `2·ε_final`.
    pub inlier_threshold: Option<f64>,
    /// Where to write the failing program when a solve does not succeed.
    #[serde(skip)]
    pub failure_dump: Option<PathBuf>,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            p: 0.001,
            eps_init: None,
            eps_final: 1.0,
            factor: 0.5,
            mu: 0.6,
            rel_tol: 1e-6,
            max_inner: 50,
            solver: SolverSettings::default(),
            chirality: ChiralityMode::Auto,
            inlier_threshold: None,
            failure_dump: None,
        }
    }
}

impl IrlsConfig {
    pub fn validate(&self, diameter: f64) -> Result<DistortionBound> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.p > 0.0 && self.p < 2.0) {
            return cfg(format!("p must lie in (0,2), got {}", self.p));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return cfg(format!("epsilon factor must lie in (0,1), got {}", self.factor));
        }
        if !(self.eps_final > 0.0) || !self.eps_final.is_finite() {
            return cfg(format!("eps_final must be positive, got {}", self.eps_final));
        }
        let init = self.eps_init.unwrap_or(diameter);
        if !(init >= self.eps_final) || !init.is_finite() {
            return cfg(format!("eps_init {init} is below eps_final {}", self.eps_final));
        }
        if !(self.rel_tol > 0.0) || self.max_inner == 0 {
            return cfg("inner loop needs rel_tol > 0 and at least one iteration".into());
        }
        if let Some(t) = self.inlier_threshold {
            if !(t >= 0.0) {
                return cfg(format!("inlier threshold must be nonnegative, got {t}"));
            }
        }
        DistortionBound::new(self.mu)
    }

    pub fn stage_count(&self, diameter: f64) -> usize {
        let init = self.eps_init.unwrap_or(diameter);
        epsilon_schedule(init, self.eps_final, self.factor).len()
    }
}

/// Candidate correspondences `(p_m, q_m)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<(Vec2, Vec2)>,
}

impl MatchSet {
    pub fn new(pairs: Vec<(Vec2, Vec2)>) -> Self {
        MatchSet { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// One fixed-`ε` phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub epsilon: f64,
    /// `Σ g(‖h_m‖)` after every accepted solve.
    pub energies: Vec<f64>,
    /// Solves whose energy rose above the previous iterate by more than
    /// the solver slack; the previous map was kept and the phase ended.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub map: PlMap,
    /// Index into the input match list of every term kept.
    pub kept: Vec<usize>,
    /// Pairs whose source point is outside the triangulation.
    pub dropped: usize,
    pub residuals: Vec<f64>,
    pub inliers: Vec<bool>,
    pub threshold: f64,
    pub phases: Vec<PhaseTrace>,
    pub chirality: Chirality,
    pub solves: usize,
    /// Solves that converged without meeting the certified tolerance.
    pub inaccurate_solves: usize,
    /// Rays none of whose vertices is touched by a match.
    pub underconstrained_rays: Vec<usize>,
    /// Worst `|ℓ(v)·(ṽ,1)|` over the output vertices, pixels.
    pub max_epipolar_residual: f64,
    /// Faces failing the exact bounded-distortion test.
    pub bd_violations: usize,
}

impl SolveReport {
    pub fn epsilon_schedule(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.epsilon).collect()
    }

    pub fn energy_trace(&self) -> Vec<f64> {
        self.phases.iter().flat_map(|p| p.energies.iter().copied()).collect()
    }
}

pub fn classify_inliers(residuals: &[f64], threshold: f64) -> Vec<bool> {
    residuals.iter().map(|&r| r <= threshold).collect()
}

fn energy(residuals: &[f64], p: f64, eps: f64) -> f64 {
    residuals.iter().map(|&r| g_pe(r, p, eps)).sum()
}

/// Relative tolerance on energy increase attributed to solver accuracy.
const DESCENT_SLACK: f64 = 1e-9;

pub fn run(
    t: &EpipolarTriangulation,
    f: &FundamentalMatrix,
    matches: &MatchSet,
    cfg: &IrlsConfig,
) -> Result<SolveReport> {
    let diameter = t.image.diameter();
    let bound = cfg.validate(diameter)?;
    if matches.is_empty() {
        return Err(Error::Input("no candidate matches".into()));
    }
    let mut base_terms = Vec::new();
    let mut kept = Vec::new();
    for (m, (p, q)) in matches.pairs.iter().enumerate() {
        if let Some(face) = t.locate(p) {
            base_terms.push(MatchTerm {
                face,
                bary: t.barycentric(face, p)?,
                target: *q,
                weight: 1.0,
            });
            kept.push(m);
        }
    }
    let dropped = matches.len() - kept.len();
    if base_terms.is_empty() {
        return Err(Error::Input("no candidate match lies inside the triangulation".into()));
    }
    let chirality = match cfg.chirality {
        ChiralityMode::Canonical => Chirality::Canonical,
        ChiralityMode::Reversed => Chirality::Reversed,
        ChiralityMode::Auto => {
            let pairs: Vec<(Vec2, Vec2)> = kept.iter().map(|&m| matches.pairs[m]).collect();
            estimate_chirality(f, &pairs)?.chirality
        }
    };
    let cons = EbdConstraints::build(t, f, bound, chirality)?;
    let frames = face_frames(t, f, chirality)?;

    let initial: Vec<f64> = kept
        .iter()
        .map(|&m| (matches.pairs[m].0 - matches.pairs[m].1).norm())
        .collect();
    let mut phi: Option<PlMap> = None;
    let mut residuals = initial;
    let mut phases = Vec::new();
    let mut solves = 0;
    let mut inaccurate = 0;
    let schedule = epsilon_schedule(cfg.eps_init.unwrap_or(diameter), cfg.eps_final, cfg.factor);
    for &eps in &schedule {
        let mut trace = PhaseTrace {
            epsilon: eps,
            energies: Vec::new(),
            rejected: 0,
        };
        let mut current = phi.as_ref().map(|_| energy(&residuals, cfg.p, eps));
        if let Some(e) = current {
            trace.energies.push(e);
        }
        for _ in 0..cfg.max_inner {
            let weights: Vec<f64> = residuals
                .iter()
                .map(|&s| majorizer_weight(s, cfg.p, eps))
                .collect();
            let wmax = weights.iter().cloned().fold(0.0, f64::max);
            let terms: Vec<MatchTerm> = base_terms
                .iter()
                .zip(&weights)
                .map(|(m, &w)| MatchTerm { weight: w / wmax, ..*m })
                .collect();
            let prog = build_iteration_program(t, &cons, &terms)?;
            let reference = phi.clone().unwrap_or_else(|| PlMap::identity(t));
            let result = prog.solve(&reference, &cfg.solver)?;
            solves += 1;
            match result.status {
                SolveStatus::Optimal => {}
                SolveStatus::Inaccurate => inaccurate += 1,
                other => {
                    if let Some(path) = &cfg.failure_dump {
                        crate::io::write_atomic(path, prog.problem.dump().as_bytes())?;
                    }
                    return Err(Error::Solver(format!(
                        "iteration program ended with status {other:?} (epsilon {eps})"
                    )));
                }
            }
            let mut x = result.x;
            cons.project_onto_lines(&mut x);
            let candidate = PlMap::from_flat(&x);
            let new_res: Vec<f64> = base_terms
                .iter()
                .map(|m| m.residual(t, &candidate).norm())
                .collect();
            let e_new = energy(&new_res, cfg.p, eps);
            match current {
                Some(e_old) if e_new > e_old * (1.0 + DESCENT_SLACK) => {
                    trace.rejected += 1;
                    break;
                }
                _ => {}
            }
            trace.energies.push(e_new);
            phi = Some(candidate);
            residuals = new_res;
            let converged = current
                .map(|e_old| (e_old - e_new).abs() <= cfg.rel_tol * e_old.abs().max(f64::MIN_POSITIVE))
                .unwrap_or(false);
            current = Some(e_new);
            if converged {
                break;
            }
        }
        phases.push(trace);
    }
    let map = phi.ok_or_else(|| Error::Solver("no iterate was accepted".into()))?;

    let threshold = cfg.inlier_threshold.unwrap_or(2.0 * cfg.eps_final);
    let inliers = classify_inliers(&residuals, threshold);

    let mut touched = vec![false; t.ray_count];
    for m in &base_terms {
        for &v in &t.faces[m.face].vertices {
            touched[t.vertex_rays[v]] = true;
        }
    }
    let mut present = vec![false; t.ray_count];
    for &r in &t.vertex_rays {
        present[r] = true;
    }
    let underconstrained_rays = (0..t.ray_count).filter(|&r| present[r] && !touched[r]).collect();
    let x = map.flat();
    let max_epipolar_residual = cons
        .vertex_rows
        .iter()
        .map(|r| (r.eval(&x) - r.rhs).abs())
        .fold(0.0, f64::max);
    let mut bd_violations = 0;
    for (fi, (l1, l2)) in frames.iter().enumerate() {
        let d = affine_coefficients(t, fi, &map)?;
        if !check_epipolar_bd(&d, l1, l2, bound) {
            bd_violations += 1;
        }
    }
    Ok(SolveReport {
        map,
        kept,
        dropped,
        residuals,
        inliers,
        threshold,
        phases,
        chirality,
        solves,
        inaccurate_solves: inaccurate,
        underconstrained_rays,
        max_epipolar_residual,
        bd_violations,
    })
}
