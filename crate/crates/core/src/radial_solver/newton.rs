use serde::{Deserialize, Serialize};

use crate::banded::{BandMatrix, SingularPivot};
use crate::certificates::{build_phi0, candidate_lambda};
use crate::error::{Error, Result};
use crate::model::{build_coefficients, ProblemSpec, RadialCoefficients};

use super::discretization::Stencil;
use super::grid::{Grid, Stretching};
use super::march::march_increments;
use super::{max_abs, Solution, SolveMethod};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Converged when the max-norm residual is at most tol (1 + |lambda|).
    pub tol: f64,
    pub max_iter: usize,
    /// Regularization of |p|^{m-2} in the Jacobian.
    pub jacobian_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 100, jacobian_eps: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum InitialGuess<'a> {
    /// Reference profile phi0 with the closed-form lambda candidate.
    Default,
    /// Previous solution, resampled onto the grid.
    From(&'a Solution),
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / (1u64 << 20) as f64;

struct Outcome {
    delta: Vec<f64>,
    lambda: f64,
    iters: usize,
    converged: bool,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn newton_core(st: &Stencil, mut delta: Vec<f64>, mut lambda: f64, opts: &SolverOptions) -> Result<Outcome> {
    let n = st.n();
    let mut f = st.residual(&delta, lambda);
    for iter in 0..=opts.max_iter {
        let fmax = max_abs(&f);
        if fmax <= opts.tol * (1.0 + lambda.abs()) {
            return Ok(Outcome { delta, lambda, iters: iter, converged: true });
        }
        if iter == opts.max_iter || !fmax.is_finite() {
            break;
        }
        let mut jac = BandMatrix::new(n + 1, 2, 0, true);
        jac.add(0, 0, -st.origin);
        jac.add(0, n, 1.0);
        for i in 1..n {
            let (jm, jp) = st.row_jacobian(&delta, i, opts.jacobian_eps);
            jac.add(i, i - 1, jm);
            jac.add(i, i, jp);
            jac.add(i, n, 1.0);
        }
        jac.add(n, n - 2, st.fa);
        jac.add(n, n - 1, st.fb);
        let lu = jac.factor().map_err(|SingularPivot(k)| Error::Singular { node: k, r: st.r[k.min(n)] })?;
        let mut dx: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve(&mut dx);

        let f0 = norm2(&f);
        let mut t = 1.0;
        let mut accepted = false;
        while t >= MIN_STEP {
            let trial: Vec<f64> = delta.iter().zip(&dx).map(|(d, s)| d + t * s).collect();
            let tl = lambda + t * dx[n];
            let ft = st.residual(&trial, tl);
            let nt = norm2(&ft);
            if nt.is_finite() && nt <= (1.0 - ARMIJO_C * t) * f0 {
                delta = trial;
                lambda = tl;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(Outcome { delta, lambda, iters: iter + 1, converged: false });
        }
    }
    Ok(Outcome { delta, lambda, iters: opts.max_iter, converged: false })
}

fn initial_state(
    spec: &ProblemSpec,
    beta: f64,
    grid: &Grid,
    coeffs: &RadialCoefficients,
    init: InitialGuess<'_>,
) -> Result<(Vec<f64>, f64)> {
    let (u, lambda) = match init {
        InitialGuess::Default => {
            let lam = candidate_lambda(spec, beta, None)?.unwrap_or(0.0);
            (build_phi0(spec, grid).u, lam)
        }
        InitialGuess::From(sol) => (sol.resample(grid.nodes(), coeffs), sol.lambda),
    };
    let delta = u.windows(2).map(|w| w[1] - w[0]).collect();
    Ok((delta, lambda))
}

/// Damped Newton from the default initial guess.
pub fn solve_newton(spec: &ProblemSpec, beta: f64, grid: &Grid, init: Option<&Solution>) -> Result<Solution> {
    let guess = init.map_or(InitialGuess::Default, InitialGuess::From);
    solve_newton_with(spec, beta, grid, guess, &SolverOptions::default())
}

/// Damped Newton on the bordered system. Non-convergence is reported through
/// `converged = false`; a singular Jacobian is an error.
pub fn solve_newton_with(
    spec: &ProblemSpec,
    beta: f64,
    grid: &Grid,
    init: InitialGuess<'_>,
    opts: &SolverOptions,
) -> Result<Solution> {
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta must be nonnegative, got {beta}")));
    }
    let coeffs = build_coefficients(spec)?;
    grid.check_solver_grid(spec.r_match)?;
    let st = Stencil::new(grid, &coeffs, beta);
    let (delta, lambda) = initial_state(spec, beta, grid, &coeffs, init)?;
    let out = newton_core(&st, delta, lambda, opts)?;
    let mut sol = Solution::from_increments(&st, spec, beta, grid, &out.delta, out.lambda, opts.tol);
    sol.newton_iters = out.iters;
    sol.converged = out.converged && sol.residual_norm <= sol.tolerance;
    Ok(sol)
}

fn newton_from(
    spec: &ProblemSpec,
    beta: f64,
    grid: &Grid,
    init: InitialGuess<'_>,
    opts: &SolverOptions,
) -> Option<Solution> {
    solve_newton_with(spec, beta, grid, init, opts).ok().filter(|s| s.converged)
}

/// Newton with fallbacks: continuation from a smaller beta, continuation from a
/// shorter domain, then time marching followed by a Newton polish.
pub fn solve(
    spec: &ProblemSpec,
    beta: f64,
    grid: &Grid,
    init: Option<&Solution>,
    opts: &SolverOptions,
) -> Result<Solution> {
    let coeffs = build_coefficients(spec)?;
    grid.check_solver_grid(spec.r_match)?;
    if let Some(prev) = init {
        if let Some(s) = newton_from(spec, beta, grid, InitialGuess::From(prev), opts) {
            return Ok(s);
        }
    }
    if let Some(s) = newton_from(spec, beta, grid, InitialGuess::Default, opts) {
        return Ok(s);
    }
    if beta > 0.0 {
        if let Some(mut s) = continuation(spec, beta, grid, opts) {
            s.method = SolveMethod::Continuation;
            return Ok(s);
        }
    }
    if let Some(mut s) = domain_continuation(spec, beta, grid, opts) {
        s.method = SolveMethod::Continuation;
        return Ok(s);
    }
    let st = Stencil::new(grid, &coeffs, beta);
    let (delta, _) = initial_state(spec, beta, grid, &coeffs, InitialGuess::Default)?;
    let dt = stable_dt(&st, &delta);
    let (delta, lambda, _) = march_increments(&st, delta, dt, 2e5 * dt, 1e-6)
        .map_err(|e| Error::NotConverged(format!("all strategies failed; time march: {e}")))?;
    let guess = Solution::from_increments(&st, spec, beta, grid, &delta, lambda, opts.tol);
    let mut s = newton_from(spec, beta, grid, InitialGuess::From(&guess), opts)
        .ok_or_else(|| Error::NotConverged(format!("Newton polish after time march failed at beta = {beta}")))?;
    s.method = SolveMethod::TimeMarch;
    Ok(s)
}

/// Step size satisfying the explicit-Hamiltonian stability bound for the current slopes.
pub(crate) fn stable_dt(st: &Stencil, delta: &[f64]) -> f64 {
    let c = st.gradient(delta).iter().map(|p| p.abs().powf(st.m - 1.0)).fold(1.0, f64::max);
    (0.5 / (c * c)).min(0.01)
}

fn continuation(spec: &ProblemSpec, beta: f64, grid: &Grid, opts: &SolverOptions) -> Option<Solution> {
    let mut base: Option<(f64, Solution)> = None;
    for k in 1..=12 {
        let b = beta * 10f64.powf(-0.5 * k as f64);
        if let Some(s) = newton_from(spec, b, grid, InitialGuess::Default, opts) {
            base = Some((b, s));
            break;
        }
    }
    let (mut b, mut cur) = base?;
    let mut factor = 10f64.sqrt();
    while b < beta {
        let next = (b * factor).min(beta);
        match newton_from(spec, next, grid, InitialGuess::From(&cur), opts) {
            Some(s) => {
                b = next;
                cur = s;
                factor = (factor * factor).min(10f64.sqrt());
            }
            None => {
                factor = factor.sqrt();
                if factor < 1.0 + 1e-4 {
                    return None;
                }
            }
        }
    }
    Some(cur)
}

fn same_family(grid: &Grid, r_max: f64) -> Result<Grid> {
    match grid.stretching() {
        Stretching::Uniform => Grid::uniform(grid.n(), r_max),
        Stretching::Geometric { core } => Grid::geometric(grid.n(), r_max, core.min(0.5 * r_max)),
    }
}

/// Solves on a shortened domain and grows it back to `grid.r_max()`. Far from the
/// origin the increments are exponentially sensitive to the profile near R_max, and
/// a long domain can trap Newton on a spurious branch that a short one avoids.
fn domain_continuation(spec: &ProblemSpec, beta: f64, grid: &Grid, opts: &SolverOptions) -> Option<Solution> {
    let floor = 4.0 * spec.r_match;
    let target = grid.r_max();
    let step = 10f64.sqrt();
    let mut r = target;
    let mut base = None;
    while r > floor {
        r = (r / step).max(floor);
        let g = same_family(grid, r).ok()?;
        if let Some(s) = newton_from(spec, beta, &g, InitialGuess::Default, opts) {
            base = Some(s);
            break;
        }
    }
    let mut cur = base?;
    let mut factor = step;
    while r < target {
        let next = (r * factor).min(target);
        let g = if next >= target { grid.clone() } else { same_family(grid, next).ok()? };
        match newton_from(spec, beta, &g, InitialGuess::From(&cur), opts) {
            Some(s) => {
                r = next;
                cur = s;
            }
            None => {
                factor = factor.sqrt();
                if factor < 1.0 + 1e-3 {
                    return None;
                }
            }
        }
    }
    Some(cur)
}
