use crate::banded::{BandMatrix, SingularPivot};
use crate::certificates::build_phi0;
use crate::error::{Error, Result};
use crate::model::{build_coefficients, hamiltonian, ProblemSpec};

use super::discretization::Stencil;
use super::grid::Grid;
use super::newton::SolverOptions;
use super::{Solution, SolveMethod};

/// Semi-implicit march of u_t = Lu - H(u') + beta V, carried out on the increments.
///
/// Each step solves (I - dt L) v = G(u^n) for the rate v = u_t, with G the explicit
/// right-hand side, and updates the increments by dt times the differences of v.
/// Stops once the stationary residual, with lambda taken as the midrange of G, drops
/// below `tol (1 + |lambda|)`.
pub(crate) fn march_increments(
    st: &Stencil,
    mut delta: Vec<f64>,
    dt: f64,
    t_max: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = st.n();
    let mut a = BandMatrix::new(n + 1, 2, 1, false);
    a.add(0, 0, 1.0 + dt * st.origin);
    a.add(0, 1, -dt * st.origin);
    for i in 1..n {
        let (sm, sp, wm, wp, c) = (st.sm[i], st.sp[i], st.wm[i], st.wp[i], st.advect[i]);
        a.add(i, i - 1, -dt * (sm + c * wm));
        a.add(i, i, 1.0 + dt * (sp + sm + c * (wm - wp)));
        a.add(i, i + 1, -dt * (sp - c * wp));
    }
    a.add(n, n - 2, -st.fa);
    a.add(n, n - 1, st.fa - st.fb);
    a.add(n, n, st.fb);
    let lu = a.factor().map_err(|SingularPivot(k)| Error::Singular { node: k, r: st.r[k.min(n)] })?;

    let steps = (t_max / dt).ceil() as usize;
    let mut g = vec![0.0; n + 1];
    for step in 0..steps {
        g[0] = st.origin * delta[0] + st.source[0];
        for i in 1..n {
            let p = st.slope(&delta, i);
            let q = st.sp[i] * delta[i] - st.sm[i] * delta[i - 1];
            g[i] = q - st.advect[i] * p - hamiltonian(p, st.m) + st.source[i];
        }
        let (lo, hi) = g[..n].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let lambda = 0.5 * (lo + hi);
        let far = st.fa * delta[n - 2] + st.fb * delta[n - 1] - st.far_slope;
        let res = (0.5 * (hi - lo)).max(far.abs());
        if !res.is_finite() {
            return Err(Error::NotConverged(format!("time march blew up at step {step}")));
        }
        if res <= tol * (1.0 + lambda.abs()) {
            return Ok((delta, lambda, step));
        }
        let mut v = g.clone();
        v[n] = -far / dt;
        lu.solve(&mut v);
        for i in 0..n {
            delta[i] += dt * (v[i + 1] - v[i]);
        }
    }
    Err(Error::NotConverged(format!("time march did not stabilize by T = {t_max}")))
}

/// Long-time integration from the reference profile until u_t is spatially constant;
/// that constant is lambda.
pub fn solve_time_march(spec: &ProblemSpec, beta: f64, grid: &Grid, dt: f64, t_max: f64) -> Result<Solution> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let coeffs = build_coefficients(spec)?;
    grid.check_solver_grid(spec.r_match)?;
    let st = Stencil::new(grid, &coeffs, beta);
    let u0 = build_phi0(spec, grid).u;
    let delta = u0.windows(2).map(|w| w[1] - w[0]).collect();
    let tol = SolverOptions::default().tol;
    let (delta, lambda, steps) = march_increments(&st, delta, dt, t_max, tol)?;
    let mut sol = Solution::from_increments(&st, spec, beta, grid, &delta, lambda, tol);
    sol.method = SolveMethod::TimeMarch;
    sol.newton_iters = steps;
    sol.converged = sol.residual_norm <= sol.tolerance;
    Ok(sol)
}
