//! Linear cross-check for m = 2.
//!
//! With u = exp(-phi/2) the ergodic problem becomes L u = lambda u for
//! L = -2 Lap + 2 b . D + beta V. In radial form L = -(2/w)(w u')' + beta V with
//! w = r^{d-1} exp(-B), B' = b, so a finite-volume discretization symmetrized by the
//! cell volumes is a symmetric tridiagonal matrix. Weights are handled in log space
//! throughout; exp(-B) underflows long before the grid ends in the strong-drift
//! regime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_coefficients, ProblemSpec, RadialCoefficients};
use crate::radial_solver::{solve, Grid, GridDescriptor, Solution, SolverOptions};

/// Symmetric tridiagonal matrix: `diag` of length n, `off` of length n - 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<SymTridiagonal> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Domain(format!(
                "tridiagonal shape mismatch: {} diagonal and {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let mut rad = 0.0;
            if i > 0 {
                rad += self.off[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.off[i].abs();
            }
            (lo.min(self.diag[i] - rad), hi.max(self.diag[i] + rad))
        })
    }

    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }
}

/// Number of eigenvalues strictly below `x`, from the signs of the LDL^T pivots of
/// the shifted matrix.
pub fn sturm_count(m: &SymTridiagonal, x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt() * (1.0 + m.norm_inf());
    let mut count = 0;
    let mut d = m.diag[0] - x;
    for i in 0..m.len() {
        if i > 0 {
            d = m.diag[i] - x - m.off[i - 1] * m.off[i - 1] / d;
        }
        if d == 0.0 {
            d = -tiny;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Discretized operator together with the symmetrizing weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOperator {
    pub matrix: SymTridiagonal,
    /// Radii of the unknowns.
    pub r: Vec<f64>,
    /// The transformed profile at unknown i is v_i exp(-log_weight_i), with v the
    /// symmetric eigenvector.
    pub log_weight: Vec<f64>,
    /// Whether r = 0 is eliminated by a Dirichlet condition on v (d >= 2).
    pub origin_eliminated: bool,
    pub beta: f64,
    pub grid: Option<GridDescriptor>,
}

impl LinearOperator {
    /// A bare matrix with unit weights, indexed by position.
    pub fn from_matrix(matrix: SymTridiagonal) -> LinearOperator {
        let n = matrix.len();
        LinearOperator {
            matrix,
            r: (0..n).map(|i| i as f64).collect(),
            log_weight: vec![0.0; n],
            origin_eliminated: false,
            beta: 0.0,
            grid: None,
        }
    }
}

/// Discretization of the radial operator on `grid`, homogeneous Dirichlet at R_max.
///
/// With w = r^{d-1} exp(-B) and v = sqrt(w) u the operator becomes the Schroedinger
/// form -2 v'' + Q v, Q = l'' + l'^2/2 + beta V for l = ln w. The potential Q is
/// evaluated from the analytic drift, so large drifts never enter through
/// exponentials. The second difference is symmetrized with the dual cell lengths.
pub fn assemble_operator(grid: &Grid, coeffs: &RadialCoefficients, beta: f64) -> Result<LinearOperator> {
    assemble_parts(
        grid,
        coeffs.spec().d,
        |x| {
            let j = coeffs.drift_jet(x);
            (coeffs.drift_antiderivative(x), j.v, j.d1)
        },
        |x| beta * coeffs.potential(x),
        beta,
    )
}

/// `drift(r)` returns (B, b, b').
fn assemble_parts(
    grid: &Grid,
    d: u32,
    drift: impl Fn(f64) -> (f64, f64, f64),
    source: impl Fn(f64) -> f64,
    beta: f64,
) -> Result<LinearOperator> {
    let r = grid.nodes();
    let n = grid.n();
    if n < 3 {
        return Err(Error::Config("linear operator needs at least three intervals".to_string()));
    }
    let k = d as f64 - 1.0;
    let first = usize::from(d >= 2);
    let dual = |i: usize| {
        if i == 0 {
            0.5 * r[1]
        } else {
            0.5 * (r[i + 1] - r[i - 1])
        }
    };
    let mut diag = Vec::with_capacity(n - first);
    let mut log_weight = Vec::with_capacity(n - first);
    for i in first..n {
        let x = r[i];
        let (big_b, b, db) = drift(x);
        let q = if x == 0.0 {
            // d = 1 and b(0) = 0
            -db
        } else {
            let l1 = k / x - b;
            -k / (x * x) - db + 0.5 * l1 * l1
        };
        let mut s = 2.0 / ((r[i + 1] - r[i]) * dual(i));
        if i > 0 {
            s += 2.0 / ((r[i] - r[i - 1]) * dual(i));
        }
        diag.push(s + q + source(x));
        let ln_w = if x == 0.0 { 0.0 } else { k * x.ln() - big_b };
        log_weight.push(0.5 * ln_w + 0.5 * dual(i).ln());
    }
    let off = (first..n - 1).map(|i| -2.0 / ((r[i + 1] - r[i]) * (dual(i) * dual(i + 1)).sqrt())).collect();
    if let Some(i) = diag.iter().chain(&log_weight).position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "operator coefficients are not finite near r = {}",
            r[first + i % (n - first)]
        )));
    }
    Ok(LinearOperator {
        matrix: SymTridiagonal::new(diag, off)?,
        r: r[first..n].to_vec(),
        log_weight,
        origin_eliminated: first == 1,
        beta,
        grid: Some(grid.descriptor()),
    })
}

/// Principal eigenpair of a linear operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub r: Vec<f64>,
    /// ln of the transformed profile, normalized to max 0.
    pub log_profile: Vec<f64>,
    pub iterations: usize,
    /// ||S v - lambda v|| for the unit symmetric eigenvector.
    pub residual: f64,
    /// Shift used by inverse iteration.
    pub shift: f64,
    pub grid: Option<GridDescriptor>,
}

impl EigenPair {
    /// Profile normalized to max 1; entries far in the tail may underflow to 0.
    pub fn eigenvector(&self) -> Vec<f64> {
        self.log_profile.iter().map(|v| v.exp()).collect()
    }
}

fn bisect_lowest(m: &SymTridiagonal) -> f64 {
    let (mut lo, mut hi) = m.gershgorin();
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * scale {
            break;
        }
        if sturm_count(m, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves (S - sigma I) x = y by Gaussian elimination without pivoting; the shift
/// sits below the spectrum so the matrix is positive definite.
fn shifted_solve(m: &SymTridiagonal, sigma: f64, y: &mut [f64]) {
    let n = m.len();
    let mut piv = vec![0.0; n];
    piv[0] = m.diag[0] - sigma;
    for i in 1..n {
        let l = m.off[i - 1] / piv[i - 1];
        piv[i] = m.diag[i] - sigma - l * m.off[i - 1];
        y[i] -= l * y[i - 1];
    }
    y[n - 1] /= piv[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = (y[i] - m.off[i] * y[i + 1]) / piv[i];
    }
}

fn normalize(x: &mut [f64]) {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= s);
}

/// Ln |v| by ratio recurrences outward from the peak, which stay accurate where
/// the eigenvector itself underflows.
fn log_eigenvector(m: &SymTridiagonal, lambda: f64, peak: usize) -> Result<Vec<f64>> {
    let n = m.len();
    let mut logv = vec![0.0; n];
    let bad = |i: usize| Error::NotConverged(format!("principal eigenvector changes sign at index {i}"));
    // forward: t_i = v_i / v_{i+1}
    let mut t_prev = 0.0;
    for i in 0..peak {
        let denom = m.diag[i] - lambda + if i > 0 { m.off[i - 1] * t_prev } else { 0.0 };
        let t = -m.off[i] / denom;
        if !(t > 0.0) {
            return Err(bad(i));
        }
        t_prev = t;
        logv[i] = t.ln();
    }
    for i in (0..peak).rev() {
        logv[i] += logv[i + 1];
    }
    // backward: s_i = v_i / v_{i-1}
    let mut s_next = 0.0;
    for i in (peak + 1..n).rev() {
        let denom = m.diag[i] - lambda + if i + 1 < n { m.off[i] * s_next } else { 0.0 };
        let s = -m.off[i - 1] / denom;
        if !(s > 0.0) {
            return Err(bad(i));
        }
        s_next = s;
        logv[i] = s.ln();
    }
    for i in peak + 1..n {
        logv[i] += logv[i - 1];
    }
    Ok(logv)
}

/// Smallest eigenvalue by Sturm bisection, eigenvector by inverse iteration.
pub fn principal_eigenvalue(op: &LinearOperator) -> Result<EigenPair> {
    let m = &op.matrix;
    let n = m.len();
    let lambda = bisect_lowest(m);
    let norm = m.norm_inf().max(f64::MIN_POSITIVE);
    let target = 1e-10 * norm;
    let gap = 1e-9 * norm.max(lambda.abs());
    let shift = lambda - gap;

    let mut x = vec![1.0; n];
    normalize(&mut x);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < 50 {
        iterations += 1;
        shifted_solve(m, shift, &mut x);
        normalize(&mut x);
        let ax = m.mul_vec(&x);
        residual = ax.iter().zip(&x).map(|(a, v)| (a - lambda * v).powi(2)).sum::<f64>().sqrt();
        if residual <= target {
            break;
        }
    }
    if residual > target {
        return Err(Error::NotConverged(format!(
            "inverse iteration with shift {shift:e} stalled at residual {residual:e}"
        )));
    }
    if n == 1 {
        return Ok(EigenPair {
            lambda,
            r: op.r.clone(),
            log_profile: vec![0.0],
            iterations,
            residual,
            shift,
            grid: op.grid.clone(),
        });
    }
    let peak = (0..n).fold(0, |b, i| if x[i].abs() > x[b].abs() { i } else { b });
    let logv = match log_eigenvector(m, lambda, peak) {
        Ok(v) => v,
        // decoupled blocks: the iterate itself is the only information available
        Err(e) => {
            let sign = x[peak].signum();
            if x.iter().any(|v| v * sign < 0.0) {
                return Err(e);
            }
            x.iter().map(|v| v.abs().ln()).collect()
        }
    };
    let mut r = op.r.clone();
    let mut log_profile: Vec<f64> = logv.iter().zip(&op.log_weight).map(|(v, w)| v - w).collect();
    if op.origin_eliminated {
        // even extension ln u = c0 + c2 r^2 through the first two nodes
        let (r1, r2) = (r[0] * r[0], r[1] * r[1]);
        let c0 = (r2 * log_profile[0] - r1 * log_profile[1]) / (r2 - r1);
        r.insert(0, 0.0);
        log_profile.insert(0, c0);
    }
    let top = log_profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_profile.iter_mut().for_each(|v| *v -= top);
    Ok(EigenPair { lambda, r, log_profile, iterations, residual, shift, grid: op.grid.clone() })
}

/// Agreement between a nonlinear solution and the linear eigenpair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColeHopfReport {
    pub lambda_nonlinear: f64,
    pub lambda_linear: f64,
    pub lambda_diff: f64,
    /// max |phi + 2 ln u| over r <= R_max / 2, after matching at r = 0.
    pub profile_diff: f64,
    /// Radius bounding the profile comparison; the Dirichlet layer near R_max is excluded.
    pub profile_window: f64,
}

pub fn colehopf_compare(nonlinear: &Solution, linear: &EigenPair) -> ColeHopfReport {
    let window = 0.5 * nonlinear.r.last().copied().unwrap_or(0.0);
    let k = nonlinear.u.len().min(linear.log_profile.len());
    let offset = match (nonlinear.u.first(), linear.log_profile.first()) {
        (Some(p), Some(l)) => p + 2.0 * l,
        _ => 0.0,
    };
    let profile_diff = (0..k)
        .filter(|&i| nonlinear.r[i] <= window)
        .map(|i| (nonlinear.u[i] + 2.0 * linear.log_profile[i] - offset).abs())
        .fold(0.0, f64::max);
    ColeHopfReport {
        lambda_nonlinear: nonlinear.lambda,
        lambda_linear: linear.lambda,
        lambda_diff: (nonlinear.lambda - linear.lambda).abs(),
        profile_diff,
        profile_window: window,
    }
}

/// Solves both formulations on one grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub spec: ProblemSpec,
    pub beta: f64,
    pub grid: GridDescriptor,
    pub report: ColeHopfReport,
    /// |lambda_nonlinear - lambda_linear| <= 1e-5 max(1, lambda).
    pub pass: bool,
}

pub fn cross_check(spec: &ProblemSpec, beta: f64, grid: &Grid, opts: &SolverOptions) -> Result<CrossCheck> {
    if spec.m != 2.0 {
        return Err(Error::Domain(format!("the linear transform needs m = 2, got m = {}", spec.m)));
    }
    let coeffs = build_coefficients(spec)?;
    let sol = solve(spec, beta, grid, None, opts)?;
    let pair = principal_eigenvalue(&assemble_operator(grid, &coeffs, beta)?)?;
    let report = colehopf_compare(&sol, &pair);
    let pass = report.lambda_diff <= 1e-5 * sol.lambda.abs().max(1.0);
    Ok(CrossCheck { spec: *spec, beta, grid: grid.descriptor(), report, pass })
}
