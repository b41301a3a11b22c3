//! Convex quadratic programs with linear and second-order cone constraints.
//!
//! The interior-point work is delegated to Clarabel; this module owns the
//! problem representation, validation, residual certification and a plain
//! text dump format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultInfo, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse linear form `Σ coeff·x[index]`.
pub type SparseRow = Vec<(usize, f64)>;

fn row_dot(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(i, v)| v * x[i]).sum()
}

/// `coeffs·x (=|≤) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: SparseRow,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: SparseRow, rhs: f64) -> Self {
        LinearRow { coeffs, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        row_dot(&self.coeffs, x)
    }
}

/// Affine expression `coeffs·x + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineExpr {
    pub coeffs: SparseRow,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(coeffs: SparseRow, constant: f64) -> Self {
        AffineExpr { coeffs, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        row_dot(&self.coeffs, x) + self.constant
    }
}

/// `‖(u₁(x), …, u_k(x))‖ ≤ t(x)` for affine `uᵢ`, `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocBlock {
    pub t: AffineExpr,
    pub u: Vec<AffineExpr>,
}

impl SocBlock {
    /// `t(x) − ‖u(x)‖`; nonnegative when the constraint holds.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let norm = self.u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        self.t.eval(x) - norm
    }
}

/// `min ½xᵀPx + qᵀx + constant` subject to equality rows, `≤` rows and
/// second-order cone blocks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProblem {
    pub n: usize,
    /// Upper-triangle entries `(i, j, v)` with `i ≤ j` of the symmetric `P`;
    /// repeated entries are summed.
    pub p: Vec<(usize, usize, f64)>,
    pub q: Vec<f64>,
    pub constant: f64,
    pub eq: Vec<LinearRow>,
    pub le: Vec<LinearRow>,
    pub cones: Vec<SocBlock>,
}

impl ConicProblem {
    pub fn new(n: usize) -> Self {
        ConicProblem {
            n,
            q: vec![0.0; n],
            ..Default::default()
        }
    }

    /// Adds `v` to `P[i][j]` and `P[j][i]` (once when `i = j`).
    pub fn add_p(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.p.push((i, j, v));
    }

    fn p_upper(&self) -> BTreeMap<(usize, usize), f64> {
        let mut m = BTreeMap::new();
        for &(i, j, v) in &self.p {
            *m.entry((i, j)).or_insert(0.0) += v;
        }
        m
    }

    /// `P·x`.
    pub fn p_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, v) in &self.p {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p_times(x);
        let quad: f64 = px.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.q.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    /// The same problem in the variable `δ = x − x0`.
    pub fn shifted(&self, x0: &[f64]) -> ConicProblem {
        let px0 = self.p_times(x0);
        let shift_row = |r: &LinearRow| LinearRow::new(r.coeffs.clone(), r.rhs - r.eval(x0));
        let shift_expr = |e: &AffineExpr| AffineExpr::new(e.coeffs.clone(), e.eval(x0));
        ConicProblem {
            n: self.n,
            p: self.p.clone(),
            q: self.q.iter().zip(&px0).map(|(a, b)| a + b).collect(),
            constant: self.objective(x0),
            eq: self.eq.iter().map(shift_row).collect(),
            le: self.le.iter().map(shift_row).collect(),
            cones: self
                .cones
                .iter()
                .map(|c| SocBlock {
                    t: shift_expr(&c.t),
                    u: c.u.iter().map(shift_expr).collect(),
                })
                .collect(),
        }
    }

    /// Largest violation over all constraints, absolute units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in &self.eq {
            worst = worst.max((r.eval(x) - r.rhs).abs());
        }
        for r in &self.le {
            worst = worst.max(r.eval(x) - r.rhs);
        }
        for c in &self.cones {
            worst = worst.max(-c.slack(x));
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Input(format!("conic problem: {what}")));
        if self.q.len() != self.n {
            return bad("linear term length differs from n");
        }
        if !self.constant.is_finite() || self.q.iter().any(|v| !v.is_finite()) {
            return bad("non-finite objective");
        }
        for &(i, j, v) in &self.p {
            if i > j || j >= self.n || !v.is_finite() {
                return bad("bad quadratic entry");
            }
        }
        let rows = self
            .eq
            .iter()
            .chain(&self.le)
            .flat_map(|r| r.coeffs.iter().copied().chain([(0, r.rhs)]));
        let cone_terms = self.cones.iter().flat_map(|c| {
            std::iter::once(&c.t)
                .chain(c.u.iter())
                .flat_map(|e| e.coeffs.iter().copied().chain([(0, e.constant)]))
        });
        for (i, v) in rows.chain(cone_terms) {
            if (self.n > 0 && i >= self.n) || !v.is_finite() {
                return bad("constraint references a missing variable or is non-finite");
            }
        }
        if self.cones.iter().any(|c| c.u.is_empty()) {
            return bad("empty cone block");
        }
        self.check_psd()
    }

    /// Smallest-eigenvalue test on `P`: exact for small `n`, otherwise on
    /// the probe set of coordinate vectors and coupled coordinate pairs.
    fn check_psd(&self) -> Result<()> {
        const TOL: f64 = 1e-9;
        let upper = self.p_upper();
        let fail = |v: f64| {
            Err(Error::Input(format!(
                "quadratic term is not positive semidefinite (probe value {v:e})"
            )))
        };
        if self.n <= 200 {
            let mut dense = DMatrix::<f64>::zeros(self.n, self.n);
            for (&(i, j), &v) in &upper {
                dense[(i, j)] += v;
                if i != j {
                    dense[(j, i)] += v;
                }
            }
            if self.n > 0 {
                let min = SymmetricEigen::new(dense).eigenvalues.min();
                if min < -TOL {
                    return fail(min);
                }
            }
            return Ok(());
        }
        let diag = |i: usize| upper.get(&(i, i)).copied().unwrap_or(0.0);
        for i in 0..self.n {
            if diag(i) < -TOL {
                return fail(diag(i));
            }
        }
        for (&(i, j), &v) in &upper {
            if i != j {
                let (a, b) = (diag(i), diag(j));
                let min = 0.5 * (a + b) - (0.25 * (a - b).powi(2) + v * v).sqrt();
                if min < -TOL * (1.0 + a.abs() + b.abs()) {
                    return fail(min);
                }
            }
        }
        Ok(())
    }

    /// Self-describing text form; floats are written in shortest
    /// round-trip notation so [`ConicProblem::parse`] restores the problem
    /// exactly.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let terms = |row: &[(usize, f64)]| {
            row.iter()
                .map(|(i, v)| format!(" {i}:{v:?}"))
                .collect::<String>()
        };
        let _ = writeln!(s, "n {}", self.n);
        let _ = writeln!(s, "constant {:?}", self.constant);
        for &(i, j, v) in &self.p {
            let _ = writeln!(s, "p {i} {j} {v:?}");
        }
        for (i, v) in self.q.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "q {i} {v:?}");
            }
        }
        for r in &self.eq {
            let _ = writeln!(s, "eq {:?}{}", r.rhs, terms(&r.coeffs));
        }
        for r in &self.le {
            let _ = writeln!(s, "le {:?}{}", r.rhs, terms(&r.coeffs));
        }
        for c in &self.cones {
            let _ = writeln!(s, "cone {}", c.u.len());
            let _ = writeln!(s, "cone-t {:?}{}", c.t.constant, terms(&c.t.coeffs));
            for u in &c.u {
                let _ = writeln!(s, "cone-u {:?}{}", u.constant, terms(&u.coeffs));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| Error::Parse(format!("problem line {}: {msg}", line + 1));
        let num = |tok: Option<&str>, line: usize| -> Result<f64> {
            tok.ok_or_else(|| perr(line, "missing number"))?
                .parse::<f64>()
                .map_err(|_| perr(line, "bad number"))
        };
        let idx = |tok: Option<&str>, line: usize| -> Result<usize> {
            tok.ok_or_else(|| perr(line, "missing index"))?
                .parse::<usize>()
                .map_err(|_| perr(line, "bad index"))
        };
        let terms = |toks: std::str::SplitWhitespace, line: usize| -> Result<SparseRow> {
            toks.map(|t| {
                let (i, v) = t.split_once(':').ok_or_else(|| perr(line, "term must be i:v"))?;
                Ok((
                    i.parse().map_err(|_| perr(line, "bad index"))?,
                    v.parse().map_err(|_| perr(line, "bad number"))?,
                ))
            })
            .collect()
        };
        let mut prob: Option<ConicProblem> = None;
        let mut pending_cone: Option<(usize, SocBlock)> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let key = toks.next().unwrap_or_default();
            if key == "n" {
                if prob.is_some() {
                    return Err(perr(ln, "duplicate n"));
                }
                prob = Some(ConicProblem::new(idx(toks.next(), ln)?));
                continue;
            }
            let p = prob.as_mut().ok_or_else(|| perr(ln, "n must come first"))?;
            if !matches!(key, "cone-t" | "cone-u") {
                if let Some((k, c)) = pending_cone.take() {
                    if c.u.len() != k {
                        return Err(perr(ln, "cone block is incomplete"));
                    }
                    p.cones.push(c);
                }
            }
            match key {
                "constant" => p.constant = num(toks.next(), ln)?,
                "p" => {
                    let i = idx(toks.next(), ln)?;
                    let j = idx(toks.next(), ln)?;
                    let v = num(toks.next(), ln)?;
                    p.p.push((i, j, v));
                }
                "q" => {
                    let i = idx(toks.next(), ln)?;
                    let v = num(toks.next(), ln)?;
                    *p.q.get_mut(i).ok_or_else(|| perr(ln, "q index out of range"))? = v;
                }
                "eq" | "le" => {
                    let rhs = num(toks.next(), ln)?;
                    let row = LinearRow::new(terms(toks, ln)?, rhs);
                    if key == "eq" {
                        p.eq.push(row);
                    } else {
                        p.le.push(row);
                    }
                }
                "cone" => {
                    let k = idx(toks.next(), ln)?;
                    pending_cone = Some((
                        k,
                        SocBlock {
                            t: AffineExpr::default(),
                            u: Vec::new(),
                        },
                    ));
                }
                "cone-t" | "cone-u" => {
                    let (_, c) = pending_cone
                        .as_mut()
                        .ok_or_else(|| perr(ln, "cone row outside a cone block"))?;
                    let constant = num(toks.next(), ln)?;
                    let e = AffineExpr::new(terms(toks, ln)?, constant);
                    if key == "cone-t" {
                        c.t = e;
                    } else {
                        c.u.push(e);
                    }
                }
                other => return Err(perr(ln, &format!("unknown keyword {other:?}"))),
            }
        }
        let mut p = prob.ok_or_else(|| Error::Parse("problem has no n line".into()))?;
        if let Some((k, c)) = pending_cone {
            if c.u.len() != k {
                return Err(Error::Parse("last cone block is incomplete".into()));
            }
            p.cones.push(c);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Converged, but a certified residual exceeded the tolerance.
    Inaccurate,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalError,
}

/// Scaled first-order optimality residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖Px + q + Aᵀz‖∞ / (1 + max(‖Px‖∞, ‖q‖∞, ‖Aᵀz‖∞))`.
    pub stationarity: f64,
    /// Largest constraint violation over `1 + max(‖b‖∞, ‖Ax‖∞)`.
    pub primal: f64,
    /// `|sᵀz| / (1 + |objective|)`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: u32,
    /// Interior-point complementarity measure at every iteration.
    pub mu_trace: Vec<f64>,
}

struct Assembled {
    p: CscMatrix<f64>,
    q: Vec<f64>,
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn assemble(prob: &ConicProblem) -> Assembled {
    let n = prob.n;
    let upper = prob.p_upper();
    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for (&(i, j), &v) in &upper {
        if v != 0.0 {
            pi.push(i);
            pj.push(j);
            pv.push(v);
        }
    }
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut push_row = |coeffs: &[(usize, f64)], scale: f64, rhs: f64, b: &mut Vec<f64>| {
        let r = b.len();
        for &(j, v) in coeffs {
            ai.push(r);
            aj.push(j);
            av.push(scale * v);
        }
        b.push(rhs);
    };
    for r in &prob.eq {
        push_row(&r.coeffs, 1.0, r.rhs, &mut b);
    }
    if !prob.eq.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(prob.eq.len()));
    }
    for r in &prob.le {
        push_row(&r.coeffs, 1.0, r.rhs, &mut b);
    }
    if !prob.le.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(prob.le.len()));
    }
    // s = b − A·x must lie in the cone, so each affine entry e(x) becomes
    // the row (−coeffs | constant).
    for c in &prob.cones {
        push_row(&c.t.coeffs, -1.0, c.t.constant, &mut b);
        for u in &c.u {
            push_row(&u.coeffs, -1.0, u.constant, &mut b);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + c.u.len()));
    }
    let a = CscMatrix::new_from_triplets(b.len(), n, ai, aj, av);
    Assembled {
        p,
        q: prob.q.clone(),
        a,
        b,
        cones,
    }
}

fn csc_times(m: &CscMatrix<f64>, x: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; if transpose { m.n } else { m.m }];
    for col in 0..m.n {
        for k in m.colptr[col]..m.colptr[col + 1] {
            let (row, v) = (m.rowval[k], m.nzval[k]);
            if transpose {
                out[col] += v * x[row];
            } else {
                out[row] += v * x[col];
            }
        }
    }
    out
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn certify(prob: &ConicProblem, asm: &Assembled, x: &[f64], z: &[f64], s: &[f64]) -> KktResiduals {
    let px = prob.p_times(x);
    let atz = csc_times(&asm.a, z, true);
    let stat: Vec<f64> = (0..prob.n).map(|i| px[i] + asm.q[i] + atz[i]).collect();
    let ax = csc_times(&asm.a, x, false);
    let obj = prob.objective(x);
    let sz: f64 = s.iter().zip(z).map(|(a, b)| a * b).sum();
    KktResiduals {
        stationarity: inf_norm(&stat)
            / (1.0 + inf_norm(&px).max(inf_norm(&asm.q)).max(inf_norm(&atz))),
        primal: prob.max_violation(x).max(0.0) / (1.0 + inf_norm(&asm.b).max(inf_norm(&ax))),
        complementarity: sz.abs() / (1.0 + obj.abs()),
    }
}

/// Solves `prob`. The status is `Optimal` only when the interior-point
/// method converged and every certified residual is within `settings.tol`.
pub fn solve(prob: &ConicProblem, settings: &SolverSettings) -> Result<SolverResult> {
    prob.validate()?;
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(Error::Config("solver needs tol > 0 and max_iter ≥ 1".into()));
    }
    let asm = assemble(prob);
    // Clarabel measures convergence on its equilibrated problem and may stop
    // early on a stall, so its verdict and the certified residuals can
    // disagree. Retry once with tighter linear solves before giving up.
    let mut last = None;
    for careful in [false, true] {
        let attempt = run_clarabel(prob, &asm, settings, careful)?;
        let converged = matches!(attempt.0, SolverStatus::Solved | SolverStatus::AlmostSolved);
        let certified = attempt.2.max() <= settings.tol;
        last = Some(attempt);
        if !converged || certified {
            break;
        }
    }
    let (raw, sol, residuals, trace, iterations) = last.expect("at least one attempt");
    let status = match raw {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if residuals.max() <= settings.tol {
                SolveStatus::Optimal
            } else {
                SolveStatus::Inaccurate
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIterations,
        _ => SolveStatus::NumericalError,
    };
    Ok(SolverResult {
        status,
        objective: prob.objective(&sol),
        x: sol,
        residuals,
        iterations,
        mu_trace: trace,
    })
}

type Attempt = (SolverStatus, Vec<f64>, KktResiduals, Vec<f64>, u32);

fn run_clarabel(prob: &ConicProblem, asm: &Assembled, settings: &SolverSettings, careful: bool) -> Result<Attempt> {
    let inner_tol = settings.tol * 0.1;
    let mut builder = DefaultSettingsBuilder::default();
    if careful {
        // Stalls usually come from inexact KKT solves near the boundary.
        builder.iterative_refinement_reltol(1e-15).iterative_refinement_abstol(1e-15);
    }
    let clarabel_settings = builder
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(inner_tol)
        .tol_gap_rel(inner_tol)
        .tol_feas(inner_tol)
        .tol_ktratio(inner_tol.max(1e-10))
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&asm.p, &asm.q, &asm.a, &asm.b, &asm.cones, clarabel_settings)
        .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    let trace = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&trace);
    solver.set_termination_callback(move |info: &DefaultInfo<f64>| {
        sink.lock().expect("trace lock").push(info.mu);
        false
    });
    solver.solve();
    let sol = &solver.solution;
    let residuals = certify(prob, asm, &sol.x, &sol.z, &sol.s);
    let mu_trace = trace.lock().expect("trace lock").clone();
    Ok((sol.status, sol.x.clone(), residuals, mu_trace, sol.iterations))
}

/// Euclidean projection onto `{(u, t) : ‖u‖ ≤ t}`, the scalar last.
pub fn project_soc(v: &[f64]) -> Vec<f64> {
    assert!(v.len() >= 2, "cone vectors have at least two entries");
    let k = v.len() - 1;
    let t = v[k];
    let norm = v[..k].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        return v.to_vec();
    }
    if norm <= -t {
        return vec![0.0; v.len()];
    }
    let alpha = 0.5 * (norm + t);
    let mut out: Vec<f64> = v[..k].iter().map(|x| alpha * x / norm).collect();
    out.push(alpha);
    out
}
