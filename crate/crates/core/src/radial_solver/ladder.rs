use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

use super::grid::{domain_scale, Grid};
use super::newton::{solve, SolverOptions};
use super::Solution;

/// One refinement level: N intervals on [0, R_max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n: usize,
    pub r_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderOptions {
    pub base_n: usize,
    pub multipliers: Vec<f64>,
    pub r_max_cap: f64,
    pub solver: SolverOptions,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions {
            base_n: 512,
            multipliers: vec![4.0, 6.0, 8.0],
            r_max_cap: 1e7,
            solver: SolverOptions::default(),
        }
    }
}

/// N doubling from `base_n`, R_max = multiplier x domain scale.
pub fn default_ladder(spec: &ProblemSpec, beta: f64, opts: &LadderOptions) -> Vec<Rung> {
    let scale = domain_scale(spec, beta);
    opts.multipliers
        .iter()
        .enumerate()
        .map(|(k, c)| Rung { n: opts.base_n << k, r_max: (c * scale).min(opts.r_max_cap) })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungResult {
    pub n: usize,
    pub r_max: f64,
    pub lambda: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    pub lambda: f64,
    pub error_estimate: f64,
    pub rungs: Vec<RungResult>,
    /// Finest-rung solution carrying the extrapolated value and error.
    pub finest: Solution,
}

/// Richardson extrapolation assuming second order in the mesh parameter h.
/// `points` are (h, lambda) from coarse to fine. Returns the extrapolated value
/// from the two finest points and an error estimate: the largest of the
/// extrapolation correction, the change between the last two extrapolations and
/// the spread between the two finest rungs. The last term covers the domain
/// truncation, which the h-model does not see.
pub fn richardson(points: &[(f64, f64)]) -> (f64, f64) {
    let extrap = |(hc, lc): (f64, f64), (hf, lf): (f64, f64)| {
        let q = hc / hf;
        if q <= 1.0 + 1e-12 {
            lf
        } else {
            lf + (lf - lc) / (q * q - 1.0)
        }
    };
    let k = points.len();
    match k {
        0 => (f64::NAN, f64::INFINITY),
        1 => (points[0].1, f64::INFINITY),
        _ => {
            let fine = points[k - 1].1;
            let e = extrap(points[k - 2], points[k - 1]);
            let mut err = (e - fine).abs().max((fine - points[k - 2].1).abs());
            if k >= 3 {
                err = err.max((e - extrap(points[k - 3], points[k - 2])).abs());
            }
            (e, err)
        }
    }
}

/// Solves on every rung (each warm-started from the previous) and extrapolates.
pub fn estimate_lambda_extrapolated(
    spec: &ProblemSpec,
    beta: f64,
    ladder: &[Rung],
    solver: &SolverOptions,
) -> Result<Extrapolated> {
    if ladder.len() < 3 {
        return Err(Error::Config(format!("ladder needs at least 3 rungs, got {}", ladder.len())));
    }
    if ladder.windows(2).any(|w| w[1].n < w[0].n || w[1].r_max < w[0].r_max) {
        return Err(Error::Config("ladder must be nondecreasing in N and R_max".to_string()));
    }
    let mut sols: Vec<Solution> = Vec::with_capacity(ladder.len());
    let mut points = Vec::with_capacity(ladder.len());
    for rung in ladder {
        let grid = Grid::geometric(rung.n, rung.r_max, 0.5 * spec.r_match)?;
        let sol = solve(spec, beta, &grid, sols.last(), solver)?;
        points.push((grid.mesh_parameter(), sol.lambda));
        sols.push(sol);
    }
    let (lambda, err) = richardson(&points);
    let rungs = ladder
        .iter()
        .zip(&sols)
        .map(|(r, s)| RungResult { n: r.n, r_max: r.r_max, lambda: s.lambda, newton_iters: s.newton_iters })
        .collect();
    let mut finest = sols.pop().expect("nonempty ladder");
    finest.error_estimate = Some(err);
    finest.lambda_extrapolated = Some(lambda);
    Ok(Extrapolated { lambda, error_estimate: err, rungs, finest })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub pass: bool,
    pub k_est: f64,
    pub k_coarse: Option<f64>,
}

fn gradient_constant(sol: &Solution) -> f64 {
    let spec = &sol.spec;
    let growth = spec.delta / (spec.m - 1.0);
    let shift = (-sol.lambda).max(0.0).powf(1.0 / spec.m);
    sol.r.iter().zip(&sol.du).map(|(r, du)| du.abs() / (1.0 + r.powf(growth) + shift)).fold(0.0, f64::max)
}

/// Empirical constant in |Du| <= K (1 + r^{delta/(m-1)} + max(-lambda, 0)^{1/m});
/// passes when finite and, given a coarser solution, stable within 20%.
pub fn check_gradient_bound(sol: &Solution, coarser: Option<&Solution>) -> GradientCheck {
    let k_est = gradient_constant(sol);
    let k_coarse = coarser.map(gradient_constant);
    let stable = match k_coarse {
        Some(kc) => (k_est - kc).abs() <= 0.2 * k_est.max(kc) || k_est.max(kc) == 0.0,
        None => true,
    };
    GradientCheck { pass: k_est.is_finite() && stable, k_est, k_coarse }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rungs() {
        let (l, e) = richardson(&[(0.1, 2.5), (0.1, 2.5), (0.1, 2.5)]);
        assert_eq!((l, e), (2.5, 0.0));
    }

    #[test]
    fn exact_second_order_model() {
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&h| (h, 1.25 + 3.0 * h * h)).collect();
        let (l, _) = richardson(&pts);
        assert!((l - 1.25).abs() < 1e-13);
        let pts: Vec<(f64, f64)> = [0.3, 0.2, 0.12].iter().map(|&h| (h, -0.7 + 0.9 * h * h)).collect();
        let (l, _) = richardson(&pts);
        assert!((l + 0.7).abs() < 1e-13);
    }

    #[test]
    fn rejects_short_or_shrinking_ladders() {
        let spec = ProblemSpec::new(2.0, 3, 1.0, 1.0, 0.0, 2.0, 1.0);
        let s = SolverOptions::default();
        let two = [Rung { n: 64, r_max: 10.0 }, Rung { n: 128, r_max: 12.0 }];
        assert!(estimate_lambda_extrapolated(&spec, 1.0, &two, &s).is_err());
        let bad = [Rung { n: 64, r_max: 10.0 }, Rung { n: 128, r_max: 8.0 }, Rung { n: 256, r_max: 12.0 }];
        assert!(estimate_lambda_extrapolated(&spec, 1.0, &bad, &s).is_err());
    }
}
