//! Monte Carlo check of the ergodic control representation.
//!
//! The controlled radial process dr = (-xi(r) - b(r) + (d-1)/r) dt + sqrt(2) dB is
//! integrated by Euler-Maruyama under a feedback xi taken from a computed solution,
//! and the long-run average of |xi|^{m*}/m* + beta V is compared with lambda.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_coefficients, ProblemSpec, RadialCoefficients};
use crate::radial_solver::Solution;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Horizon T.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Fraction of the horizon discarded before averaging.
    pub burn_in: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 2e-3, horizon: 200.0, n_paths: 256, seed: 0, burn_in: 0.1 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0) {
            bad.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 100.0 * self.dt) {
            bad.push(format!("horizon {} is shorter than 100 dt", self.horizon));
        }
        if self.n_paths == 0 {
            bad.push("n_paths must be at least 1".to_string());
        }
        if !(0.0..=0.5).contains(&self.burn_in) {
            bad.push(format!("burn_in must lie in [0, 0.5], got {}", self.burn_in));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Radial feedback r -> xi(r), piecewise linear between solution nodes.
#[derive(Clone, Debug)]
pub struct Feedback {
    r: Vec<f64>,
    xi: Vec<f64>,
    m: f64,
    scale: f64,
    coeffs: RadialCoefficients,
}

fn legendre_point(p: f64, m: f64) -> f64 {
    if m == 2.0 {
        p
    } else {
        p.abs().powf(m - 2.0) * p
    }
}

/// xi = |u'|^{m-2} u', the minimizer of -xi p + |xi|^{m*}/m* at p = u'. Beyond R_max
/// the far-field slope is used.
pub fn feedback_control(solution: &Solution) -> Result<Feedback> {
    let coeffs = build_coefficients(&solution.spec)?;
    let m = solution.spec.m;
    Ok(Feedback {
        r: solution.r.clone(),
        xi: solution.du.iter().map(|&p| legendre_point(p, m)).collect(),
        m,
        scale: 1.0,
        coeffs,
    })
}

impl Feedback {
    /// The same feedback multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Feedback {
        Feedback { scale: self.scale * k, ..self.clone() }
    }

    /// No control at all.
    pub fn zero(&self) -> Feedback {
        self.scaled(0.0)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let n = self.r.len();
        let end = self.r[n - 1];
        let v = if r >= end {
            legendre_point(self.coeffs.far_slope(r), self.m)
        } else {
            let j = self.r.partition_point(|&x| x <= r).clamp(1, n - 1);
            let (r0, r1) = (self.r[j - 1], self.r[j]);
            let t = (r - r0) / (r1 - r0);
            self.xi[j - 1] + t * (self.xi[j] - self.xi[j - 1])
        };
        self.scale * v
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Mode of the stationary density r^{d-1} exp(-int (xi + b)) over the nodes.
    fn stationary_mode(&self) -> f64 {
        let d = self.coeffs.spec().d as f64;
        let mut acc = 0.0;
        let mut best = (f64::NEG_INFINITY, self.r[1]);
        for j in 1..self.r.len() {
            let (r0, r1) = (self.r[j - 1], self.r[j]);
            let f = |x: f64| self.eval(x) + self.coeffs.drift(x);
            acc += 0.5 * (f(r0) + f(r1)) * (r1 - r0);
            let logp = (d - 1.0) * r1.ln() - acc;
            if logp > best.0 {
                best = (logp, r1);
            }
        }
        best.1
    }
}

/// Mean long-run cost rate over paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    /// Paths that completed; aborted paths are excluded from the mean.
    pub n_paths: usize,
    pub aborted: usize,
    pub config: SimConfig,
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct PathSetup<'a> {
    feedback: &'a Feedback,
    coeffs: &'a RadialCoefficients,
    beta: f64,
    d: f64,
    m_star: f64,
    r_floor: f64,
    r_abort: f64,
    start: f64,
    steps: usize,
    burn: usize,
    dt: f64,
}

impl PathSetup<'_> {
    /// Average cost rate after burn-in, or None if the path left the domain.
    fn run(&self, rng: &mut ChaCha8Rng) -> Option<f64> {
        let sq = (2.0 * self.dt).sqrt();
        let mut r = self.start;
        let mut cost = 0.0;
        for step in 0..self.steps {
            let xi = self.feedback.eval(r);
            if step >= self.burn {
                cost += xi.abs().powf(self.m_star) / self.m_star + self.beta * self.coeffs.potential(r);
            }
            let drift = -xi - self.coeffs.drift(r) + (self.d - 1.0) / r;
            let z: f64 = StandardNormal.sample(rng);
            r += drift * self.dt + sq * z;
            if r < self.r_floor {
                r = (2.0 * self.r_floor - r).max(self.r_floor);
            }
            if !(r <= self.r_abort) {
                return None;
            }
        }
        Some(cost / (self.steps - self.burn) as f64)
    }
}

/// Simulates under the optimal feedback extracted from `solution`.
pub fn simulate(spec: &ProblemSpec, beta: f64, solution: &Solution, config: &SimConfig) -> Result<Estimate> {
    simulate_with(spec, beta, solution, &feedback_control(solution)?, config)
}

/// Simulates under an arbitrary feedback. Path i draws from stream i of the seed, so
/// different feedbacks see common random numbers.
pub fn simulate_with(
    spec: &ProblemSpec,
    beta: f64,
    solution: &Solution,
    feedback: &Feedback,
    config: &SimConfig,
) -> Result<Estimate> {
    config.validate()?;
    if solution.spec != *spec || solution.beta != beta {
        return Err(Error::Config("solution was computed for a different spec or beta".to_string()));
    }
    let coeffs = build_coefficients(spec)?;
    let r_max = *solution.r.last().ok_or_else(|| Error::Config("empty solution".to_string()))?;
    let steps = (config.horizon / config.dt).round() as usize;
    let burn = ((config.burn_in * steps as f64) as usize).min(steps - 1);
    let setup = PathSetup {
        feedback,
        coeffs: &coeffs,
        beta,
        d: spec.d as f64,
        m_star: spec.m_star(),
        r_floor: 1e-3f64.min(spec.r_match / 100.0),
        r_abort: 10.0 * r_max,
        start: feedback.stationary_mode(),
        steps,
        burn,
        dt: config.dt,
    };
    let rates: Vec<Option<f64>> =
        (0..config.n_paths).into_par_iter().map(|i| setup.run(&mut path_rng(config.seed, i))).collect();
    let done: Vec<f64> = rates.iter().flatten().copied().collect();
    let aborted = config.n_paths - done.len();
    if done.is_empty() {
        return Err(Error::Simulation(format!(
            "all {} paths exceeded 10 R_max = {:e}; the control or dt is unsuitable",
            config.n_paths, setup.r_abort
        )));
    }
    let k = done.len() as f64;
    let mean = done.iter().sum::<f64>() / k;
    let var = if done.len() > 1 { done.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    Ok(Estimate { mean, std_err: (var / k).sqrt(), n_paths: done.len(), aborted, config: *config })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub lambda: f64,
    pub mean: f64,
    pub gap: f64,
    pub z_score: f64,
    /// |mean - lambda| <= max(3 SE, 0.05 |lambda|).
    pub pass: bool,
}

pub fn compare_lambda(estimate: &Estimate, lambda: f64) -> Comparison {
    let gap = estimate.mean - lambda;
    let z_score = if estimate.std_err > 0.0 {
        gap / estimate.std_err
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    let pass = gap.abs() <= (3.0 * estimate.std_err).max(0.05 * lambda.abs());
    Comparison { lambda, mean: estimate.mean, gap, z_score, pass }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Multiplier on the optimal feedback; 0 is the uncontrolled process.
    pub scale: f64,
    pub estimate: Estimate,
    /// Optimal mean is strictly below this one.
    pub strictly_higher: bool,
    /// Optimal mean <= this mean + 2 SE.
    pub within_two_se: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCheck {
    pub optimal: Estimate,
    pub comparison: Comparison,
    pub perturbed: Vec<Perturbation>,
    pub pass: bool,
}

/// Optimal feedback against the scales 0.5, 1.5 and the zero control, all on common
/// random numbers.
pub fn control_check(spec: &ProblemSpec, beta: f64, solution: &Solution, config: &SimConfig) -> Result<ControlCheck> {
    let fb = feedback_control(solution)?;
    let optimal = simulate_with(spec, beta, solution, &fb, config)?;
    let comparison = compare_lambda(&optimal, solution.best_lambda());
    let mut perturbed = Vec::new();
    for k in [0.5, 1.5, 0.0] {
        let est = simulate_with(spec, beta, solution, &fb.scaled(k), config)?;
        perturbed.push(Perturbation {
            scale: k,
            strictly_higher: optimal.mean < est.mean,
            within_two_se: optimal.mean <= est.mean + 2.0 * est.std_err.max(optimal.std_err),
            estimate: est,
        });
    }
    let pass = comparison.pass && perturbed.iter().all(|p| p.within_two_se);
    Ok(ControlCheck { optimal, comparison, perturbed, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_solver::{solve, Grid, SolverOptions};
    use rand::Rng;

    fn gap_solution(beta: f64) -> (ProblemSpec, Solution) {
        let spec = ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0);
        let grid = Grid::geometric(512, 40.0, 0.5).unwrap();
        let sol = solve(&spec, beta, &grid, None, &SolverOptions::default()).unwrap();
        (spec, sol)
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let c = SimConfig { dt: 0.1, horizon: 5.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { burn_in: 0.7, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { n_paths: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn quadratic_feedback_is_the_slope() {
        let (_, sol) = gap_solution(5.0);
        let fb = feedback_control(&sol).unwrap();
        for (r, du) in sol.r.iter().zip(&sol.du).take(sol.r.len() - 1) {
            assert_eq!(fb.eval(*r), *du);
        }
        let mut flat = sol.clone();
        flat.du.iter_mut().for_each(|p| *p = 0.0);
        let fb = feedback_control(&flat).unwrap();
        assert!(sol.r[..sol.r.len() - 1].iter().all(|&r| fb.eval(r) == 0.0));
    }

    #[test]
    fn feedback_minimizes_the_legendre_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [1.5, 2.0, 3.0] {
            let ms = m / (m - 1.0);
            let cost = |xi: f64, p: f64| -xi * p + xi.abs().powf(ms) / ms;
            for _ in 0..1000 {
                let p: f64 = rng.random_range(-5.0..5.0);
                let xi = legendre_point(p, m);
                let other: f64 = rng.random_range(-20.0..20.0);
                assert!(cost(xi, p) <= cost(other, p) + 1e-12);
            }
        }
    }

    #[test]
    fn zero_cost_without_control_or_potential() {
        let (spec, sol) = gap_solution(0.0);
        let fb = feedback_control(&sol).unwrap().zero();
        let cfg = SimConfig { dt: 1e-2, horizon: 5.0, n_paths: 8, seed: 1, burn_in: 0.0 };
        let est = simulate_with(&spec, 0.0, &sol, &fb, &cfg).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn reproducible_and_nonnegative() {
        let (spec, sol) = gap_solution(5.0);
        let cfg = SimConfig { dt: 1e-2, horizon: 5.0, n_paths: 16, seed: 9, burn_in: 0.2 };
        let a = simulate(&spec, 5.0, &sol, &cfg).unwrap();
        let b = simulate(&spec, 5.0, &sol, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.mean >= 0.0);
        let more = simulate(&spec, 5.0, &sol, &SimConfig { n_paths: 17, ..cfg }).unwrap();
        assert_ne!(a.mean, more.mean);
    }

    #[test]
    fn exact_match_passes() {
        let est = Estimate { mean: 0.4, std_err: 0.01, n_paths: 10, aborted: 0, config: SimConfig::default() };
        let c = compare_lambda(&est, 0.4);
        assert_eq!(c.gap, 0.0);
        assert!(c.pass);
        assert!(!compare_lambda(&est, 0.6).pass);
    }

    #[test]
    fn mismatched_solution_rejected() {
        let (spec, sol) = gap_solution(5.0);
        assert!(simulate(&spec, 6.0, &sol, &SimConfig::default()).is_err());
    }
}
