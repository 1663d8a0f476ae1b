//! Truncated radial two-point problem for (lambda, u): bordered Newton, time marching
//! and grid/domain extrapolation.

mod discretization;
pub mod grid;
mod ladder;
mod march;
mod newton;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{build_coefficients, ProblemSpec, RadialCoefficients};

use discretization::Stencil;

pub use grid::{build_grid, domain_scale, Grid, GridDescriptor, GridOptions, StretchKind, Stretching};
pub use ladder::{
    check_gradient_bound, default_ladder, estimate_lambda_extrapolated, richardson, Extrapolated, GradientCheck,
    LadderOptions, Rung, RungResult,
};
pub use march::solve_time_march;
pub use newton::{solve, solve_newton, solve_newton_with, InitialGuess, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    Continuation,
    TimeMarch,
}

/// The pair (lambda, u) on a grid with convergence metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub spec: ProblemSpec,
    pub beta: f64,
    pub grid: GridDescriptor,
    pub lambda: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub residual_norm: f64,
    /// Residual bound this solution was required to meet.
    pub tolerance: f64,
    pub newton_iters: usize,
    pub converged: bool,
    pub method: SolveMethod,
    pub error_estimate: Option<f64>,
    pub lambda_extrapolated: Option<f64>,
}

impl Solution {
    fn from_increments(
        stencil: &Stencil,
        spec: &ProblemSpec,
        beta: f64,
        grid: &Grid,
        delta: &[f64],
        lambda: f64,
        tol_factor: f64,
    ) -> Solution {
        let mut u = Vec::with_capacity(delta.len() + 1);
        u.push(0.0);
        let mut acc = 0.0;
        for d in delta {
            acc += d;
            u.push(acc);
        }
        let residual_norm = max_abs(&stencil.residual(delta, lambda));
        Solution {
            spec: *spec,
            beta,
            grid: grid.descriptor(),
            lambda,
            r: grid.nodes().to_vec(),
            u,
            du: stencil.gradient(delta),
            residual_norm,
            tolerance: tol_factor * (1.0 + lambda.abs()),
            newton_iters: 0,
            converged: false,
            method: SolveMethod::Newton,
            error_estimate: None,
            lambda_extrapolated: None,
        }
    }

    /// Best available eigenvalue estimate: extrapolated when available.
    pub fn best_lambda(&self) -> f64 {
        self.lambda_extrapolated.unwrap_or(self.lambda)
    }

    /// CSV with columns r, u, du.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,u,du\n");
        for i in 0..self.r.len() {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", self.r[i], self.u[i], self.du[i]));
        }
        s
    }

    /// Linear interpolation of the profile onto `nodes`, extended past the end with
    /// the far-field slope.
    pub(crate) fn resample(&self, nodes: &[f64], coeffs: &RadialCoefficients) -> Vec<f64> {
        let end = *self.r.last().unwrap();
        let mut out = Vec::with_capacity(nodes.len());
        let mut j = 0;
        let mut prev: Option<(f64, f64)> = None;
        for &x in nodes {
            let v = if x <= end {
                while j + 1 < self.r.len() - 1 && self.r[j + 1] < x {
                    j += 1;
                }
                let (r0, r1) = (self.r[j], self.r[j + 1]);
                let t = ((x - r0) / (r1 - r0)).clamp(0.0, 1.0);
                self.u[j] + t * (self.u[j + 1] - self.u[j])
            } else {
                let (xp, vp) = match prev {
                    Some((xp, vp)) if xp > end => (xp, vp),
                    _ => (end, *self.u.last().unwrap()),
                };
                vp + 0.5 * (coeffs.far_slope(xp) + coeffs.far_slope(x)) * (x - xp)
            };
            prev = Some((x, v));
            out.push(v);
        }
        out
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Node residuals of (u, lambda): rows 0..=N for the equation and far-field slope,
/// followed by the normalization row u(0).
pub fn residual(u: &[f64], lambda: f64, grid: &Grid, coeffs: &RadialCoefficients, beta: f64) -> Vec<f64> {
    assert_eq!(u.len(), grid.nodes().len(), "profile length must match the grid");
    let stencil = Stencil::new(grid, coeffs, beta);
    let delta: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    let mut f = stencil.residual(&delta, lambda);
    f.push(u[0]);
    f
}

/// Residual of a solution re-evaluated from its stored profile.
pub fn solution_residual(sol: &Solution, grid: &Grid) -> Result<Vec<f64>> {
    let coeffs = build_coefficients(&sol.spec)?;
    Ok(residual(&sol.u, sol.lambda, grid, &coeffs, sol.beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::build_phi0;

    #[test]
    fn zero_is_a_solution_without_potential() {
        let spec = ProblemSpec::new(2.0, 3, 1.0, 1.0, 0.0, 2.0, 1.0);
        let coeffs = build_coefficients(&spec).unwrap();
        let g = Grid::geometric(64, 10.0, 0.5).unwrap();
        let f = residual(&vec![0.0; 65], 0.0, &g, &coeffs, 0.0);
        assert!(f[..64].iter().all(|x| *x == 0.0));
        assert_eq!(f[65], 0.0);
    }

    #[test]
    fn phi0_residual_in_plateau_form() {
        let spec = ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0);
        let coeffs = build_coefficients(&spec).unwrap();
        let beta = 3.0;
        let g = Grid::geometric(2048, 40.0, 0.5).unwrap();
        let s = build_phi0(&spec, &g);
        let f = residual(&s.u, 0.5, &g, &coeffs, beta);
        for (i, &r) in g.nodes().iter().enumerate().take(g.n()).skip(1) {
            if r >= 1.05 {
                let expect = 2.0 / r - beta * coeffs.potential(r);
                assert!((f[i] - expect).abs() < 1e-6, "r={r}: {} vs {expect}", f[i]);
            }
        }
    }

    #[test]
    fn second_order_on_cubic() {
        let spec = ProblemSpec::new(1.5, 2, 0.5, 1.0, 0.3, 2.0, 1.0);
        let coeffs = build_coefficients(&spec).unwrap();
        let u = |r: f64| 0.3 * r * r - 0.05 * r * r * r;
        let (du, d2u) = (|r: f64| 0.6 * r - 0.15 * r * r, |r: f64| 0.6 - 0.3 * r);
        let err = |n: usize| {
            let g = Grid::geometric(n, 4.0, 0.7).unwrap();
            let vals: Vec<f64> = g.nodes().iter().map(|&r| u(r)).collect();
            let f = residual(&vals, 0.0, &g, &coeffs, 0.0);
            let mut e: f64 = 0.0;
            // (d-1)u'/r turns the O(h^2) slope error into O(h) at the first nodes
            for (i, &r) in g.nodes().iter().enumerate().take(g.n()).skip(1).filter(|(_, r)| **r >= 0.5) {
                let p = du(r);
                let exact = -d2u(r) - p / r + coeffs.drift(r) * p + p.abs().powf(1.5) / 1.5;
                e = e.max((f[i] - exact).abs());
            }
            e
        };
        let (e1, e2) = (err(64), err(128));
        let rate = e1 / e2;
        assert!(rate > 3.5 && rate < 4.5, "ratio {rate}");
    }
}
