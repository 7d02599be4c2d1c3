//! Sparse systems `C φ = D`, relaxation and iterative solvers.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("relaxation factor {0} outside (0, 1]")]
    InvalidRelaxation(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero or missing diagonal in row {0}")]
    ZeroDiagonal(usize),
    #[error("non-finite coefficient in row {0}")]
    NonFinite(usize),
    #[error("invalid solver settings: {0}")]
    Config(String),
}

/// Compressed sparse row matrix with sorted columns and a stored diagonal in
/// every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<usize>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix; duplicate entries are summed and every row
    /// gets a diagonal slot (possibly zero).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 0.0)]).collect();
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = vec![0];
        let mut col = Vec::with_capacity(triplets.len() + n);
        let mut val = Vec::with_capacity(triplets.len() + n);
        let mut diag = Vec::with_capacity(n);
        for (i, mut r) in rows.into_iter().enumerate() {
            r.sort_by_key(|e| e.0);
            for (j, v) in r {
                if col.len() > row_ptr[i] && *col.last().unwrap() == j {
                    *val.last_mut().unwrap() += v;
                } else {
                    if j == i {
                        diag.push(col.len());
                    }
                    col.push(j);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        CsrMatrix { n, row_ptr, col, val, diag }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag.iter().map(|&k| self.val[k]).collect()
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.val[self.diag[i]]
    }

    pub fn set_diag(&mut self, i: usize, v: f64) {
        self.val[self.diag[i]] = v;
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.val[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        });
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (self.get(j, i) - v).abs() <= tol * v.abs().max(1.0)))
    }

    /// `min_P |C_PP| / Σ_nb |C_Pnb|` (infinite for rows without neighbours).
    pub fn dominance_ratio(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let off: f64 = self.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
                if off == 0.0 {
                    f64::INFINITY
                } else {
                    self.diag(i).abs() / off
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        for i in 0..self.n {
            if self.row(i).any(|(_, v)| !v.is_finite()) {
                return Err(LinalgError::NonFinite(i));
            }
            if self.diag(i) == 0.0 {
                return Err(LinalgError::ZeroDiagonal(i));
            }
        }
        Ok(())
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// One matrix shared by the three components of a vector unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub source: Vec<Vec3>,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, source: Vec<Vec3>) -> Result<Self, LinalgError> {
        if source.len() != matrix.n() {
            return Err(LinalgError::LengthMismatch(matrix.n(), source.len()));
        }
        Ok(SparseSystem { matrix, source })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.source.iter().map(|v| v[k]).collect()
    }

    /// `C x − D` per cell.
    pub fn residual(&self, x: &[Vec3]) -> Vec<Vec3> {
        let mut r = vec![Vec3::zeros(); self.n()];
        let mut y = vec![0.0; self.n()];
        for k in 0..3 {
            let xk: Vec<f64> = x.iter().map(|v| v[k]).collect();
            self.matrix.mul_vec(&xk, &mut y);
            for i in 0..self.n() {
                r[i][k] = y[i] - self.source[i][k];
            }
        }
        r
    }

    pub fn solve(&self, x0: &[Vec3], cfg: &SolverConfig) -> Result<(Vec<Vec3>, SolveReport), LinalgError> {
        if x0.len() != self.n() {
            return Err(LinalgError::LengthMismatch(self.n(), x0.len()));
        }
        let mut x = x0.to_vec();
        let mut report = SolveReport::default();
        for k in 0..3 {
            let b = self.component(k);
            let mut xk: Vec<f64> = x0.iter().map(|v| v[k]).collect();
            let r = solve(&self.matrix, &b, &mut xk, cfg)?;
            for i in 0..self.n() {
                x[i][k] = xk[i];
            }
            report.merge(&r);
        }
        Ok((x, report))
    }
}

/// Replaces `C_PP` by `C_PP/λ` and adds `((1 − λ)/λ) C_PP φ_o` to the
/// source.
pub fn implicit_relax(system: &SparseSystem, phi_o: &[Vec3], lambda: f64) -> Result<SparseSystem, LinalgError> {
    check_lambda(lambda)?;
    if phi_o.len() != system.n() {
        return Err(LinalgError::LengthMismatch(system.n(), phi_o.len()));
    }
    let mut out = system.clone();
    if lambda == 1.0 {
        return Ok(out);
    }
    for i in 0..system.n() {
        let d = system.matrix.diag(i);
        out.matrix.set_diag(i, d / lambda);
        out.source[i] += (1.0 - lambda) / lambda * d * phi_o[i];
    }
    Ok(out)
}

/// `φ = φ_o + λ (φ_c − φ_o)`.
pub fn explicit_relax(phi_c: &[Vec3], phi_o: &[Vec3], lambda: f64) -> Result<Vec<Vec3>, LinalgError> {
    check_lambda(lambda)?;
    if phi_c.len() != phi_o.len() {
        return Err(LinalgError::LengthMismatch(phi_c.len(), phi_o.len()));
    }
    Ok(phi_c.iter().zip(phi_o).map(|(c, o)| o + lambda * (c - o)).collect())
}

fn check_lambda(lambda: f64) -> Result<(), LinalgError> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(LinalgError::InvalidRelaxation(lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ResidualNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    /// `l1` over the normalisation factor (1 when none is given).
    pub normalized: f64,
}

/// Norms of `C x − D` over all components; `normalization` is usually the
/// `l1` of the first outer iteration.
pub fn residual_norms(system: &SparseSystem, x: &[Vec3], normalization: Option<f64>) -> ResidualNorms {
    let r = system.residual(x);
    let mut n = ResidualNorms::default();
    for v in &r {
        for k in 0..3 {
            let a = v[k].abs();
            n.l1 += a;
            n.l2 += a * a;
            n.linf = n.linf.max(a);
        }
    }
    n.l2 = n.l2.sqrt();
    n.normalized = match normalization {
        Some(f) if f > 0.0 => n.l1 / f,
        _ => 1.0,
    };
    n
}

/// Per-component L1 residual of `C x = D` and the same residual scaled by
/// `Σ|C x − C x̄| + |D − C x̄|`, with `x̄` the component mean. The scaled
/// value does not depend on the magnitude of the solution or the source
/// and is at most 1.
pub fn scaled_residuals(system: &SparseSystem, x: &[Vec3]) -> ([f64; 3], [f64; 3]) {
    let n = system.n();
    let row_sums: Vec<f64> = (0..n).map(|i| system.matrix.row(i).map(|(_, v)| v).sum()).collect();
    let mut l1 = [0.0; 3];
    let mut scaled = [0.0; 3];
    let mut ax = vec![0.0; n];
    for k in 0..3 {
        let xk: Vec<f64> = x.iter().map(|v| v[k]).collect();
        let mean = xk.iter().sum::<f64>() / n.max(1) as f64;
        system.matrix.mul_vec(&xk, &mut ax);
        let mut factor = 0.0;
        for i in 0..n {
            let b = system.source[i][k];
            let axbar = row_sums[i] * mean;
            l1[k] += (ax[i] - b).abs();
            factor += (ax[i] - axbar).abs() + (b - axbar).abs();
        }
        scaled[k] = if l1[k] == 0.0 { 0.0 } else { l1[k] / factor };
    }
    (l1, scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GaussSeidel,
    #[default]
    ConjugateGradient,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    #[default]
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::ConjugateGradient,
            tolerance: 1e-3,
            max_iterations: 5000,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), LinalgError> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(LinalgError::Config(format!("tolerance {} outside (0, 1)", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(LinalgError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    #[default]
    Converged,
    MaxIterations,
    Breakdown,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::Breakdown => "breakdown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub status: SolveStatus,
}

impl SolveReport {
    /// Combines component reports keeping the worst case.
    fn merge(&mut self, o: &SolveReport) {
        self.iterations = self.iterations.max(o.iterations);
        self.initial_residual = self.initial_residual.max(o.initial_residual);
        self.final_residual = self.final_residual.max(o.final_residual);
        if o.status != SolveStatus::Converged && self.status != SolveStatus::Breakdown {
            self.status = o.status;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `C x = b` from the initial guess in `x` until
/// `‖C x − b‖₂ ≤ max(tolerance · ‖C x0 − b‖₂, 16 ε ‖b‖₂)`.
pub fn solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<SolveReport, LinalgError> {
    cfg.validate()?;
    if b.len() != a.n() || x.len() != a.n() {
        return Err(LinalgError::LengthMismatch(a.n(), b.len().min(x.len())));
    }
    a.validate()?;
    let mut r = vec![0.0; a.n()];
    a.mul_vec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = norm(&r);
    // below a few ulps of the source the residual is rounding noise
    let floor = 16.0 * f64::EPSILON * norm(b);
    let target = (cfg.tolerance * r0).max(floor).max(f64::MIN_POSITIVE);
    let mut rep = SolveReport {
        iterations: 0,
        initial_residual: r0,
        final_residual: r0,
        status: SolveStatus::Converged,
    };
    if r0 <= target {
        return Ok(rep);
    }
    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Diagonal => a.diagonal().iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; a.n()],
    };
    match cfg.method {
        Method::ConjugateGradient => cg(a, b, x, r, &inv_diag, target, cfg.max_iterations, &mut rep),
        Method::Bicgstab => bicgstab(a, b, x, r, &inv_diag, target, cfg.max_iterations, &mut rep),
        Method::GaussSeidel => gauss_seidel(a, b, x, target, cfg.max_iterations, &mut rep),
    }
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn cg(a: &CsrMatrix, b: &[f64], x: &mut [f64], mut r: Vec<f64>, m: &[f64], target: f64, max: usize, rep: &mut SolveReport) {
    let n = a.n();
    let mut z: Vec<f64> = r.iter().zip(m).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max {
        a.mul_vec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq.abs() < f64::MIN_POSITIVE || !pq.is_finite() {
            rep.status = SolveStatus::Breakdown;
            rep.iterations = it;
            return;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rep.iterations = it;
        rep.final_residual = norm(&r);
        if rep.final_residual <= target {
            // guard against drift of the recursive residual
            rep.final_residual = true_residual(a, b, x);
            if rep.final_residual <= target * 10.0 {
                return;
            }
        }
        for i in 0..n {
            z[i] = r[i] * m[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    rep.status = SolveStatus::MaxIterations;
}

#[allow(clippy::too_many_arguments)]
fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    mut r: Vec<f64>,
    m: &[f64],
    target: f64,
    max: usize,
    rep: &mut SolveReport,
) {
    let n = a.n();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut zz = vec![0.0; n];
    for it in 1..=max {
        rep.iterations = it;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < f64::MIN_POSITIVE || omega == 0.0 {
            rep.status = SolveStatus::Breakdown;
            return;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = m[i] * p[i];
        }
        a.mul_vec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv.abs() < f64::MIN_POSITIVE {
            rep.status = SolveStatus::Breakdown;
            return;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            rep.final_residual = true_residual(a, b, x);
            return;
        }
        for i in 0..n {
            zz[i] = m[i] * s[i];
        }
        a.mul_vec(&zz, &mut t);
        let tt = dot(&t, &t);
        if tt < f64::MIN_POSITIVE {
            rep.status = SolveStatus::Breakdown;
            return;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        rep.final_residual = norm(&r);
        if !rep.final_residual.is_finite() {
            rep.status = SolveStatus::Breakdown;
            return;
        }
        if rep.final_residual <= target {
            rep.final_residual = true_residual(a, b, x);
            return;
        }
    }
    rep.status = SolveStatus::MaxIterations;
}

fn gauss_seidel(a: &CsrMatrix, b: &[f64], x: &mut [f64], target: f64, max: usize, rep: &mut SolveReport) {
    for it in 1..=max {
        for i in 0..a.n() {
            let mut s = b[i];
            for (j, v) in a.row(i) {
                if j != i {
                    s -= v * x[j];
                }
            }
            x[i] = s / a.diag(i);
        }
        rep.iterations = it;
        rep.final_residual = true_residual(a, b, x);
        if !rep.final_residual.is_finite() {
            rep.status = SolveStatus::Breakdown;
            return;
        }
        if rep.final_residual <= target {
            return;
        }
    }
    rep.status = SolveStatus::MaxIterations;
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut r = vec![0.0; a.n()];
    a.mul_vec(x, &mut r);
    r.iter().zip(b).map(|(r, b)| (b - r) * (b - r)).sum::<f64>().sqrt()
}
