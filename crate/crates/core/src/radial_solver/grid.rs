use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificates::{self, PlateauClass};
use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// Smallest grid the solvers accept.
pub const MIN_SOLVER_N: usize = 32;
/// Largest ratio between adjacent spacings.
pub const MAX_SPACING_RATIO: f64 = 1.2;
/// Relative truncation bias targeted by the domain-size heuristics.
const DOMAIN_TAU: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stretching {
    Uniform,
    /// r_i = L sinh(g i/N)/sinh(g) with g = asinh(L/core): spacing close to
    /// uniform on [0, core] and growing geometrically beyond it.
    Geometric {
        core: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StretchKind {
    Uniform,
    Geometric,
}

/// Mesh summary recorded with every result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub n: usize,
    pub r_max: f64,
    pub stretching: Stretching,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    stretching: Stretching,
}

impl Grid {
    pub fn uniform(n: usize, r_max: f64) -> Result<Grid> {
        check_basic(n, r_max)?;
        let nodes = (0..=n).map(|i| r_max * i as f64 / n as f64).collect();
        Ok(Grid { nodes, stretching: Stretching::Uniform })
    }

    /// Sinh-stretched grid. `core` is raised when needed to keep the spacing ratio
    /// within bounds.
    pub fn geometric(n: usize, r_max: f64, core: f64) -> Result<Grid> {
        check_basic(n, r_max)?;
        if !(core > 0.0) {
            return Err(Error::Config(format!("grid core must be positive, got {core}")));
        }
        let max_gamma = 0.95 * n as f64 * MAX_SPACING_RATIO.ln();
        let core = core.max(r_max / max_gamma.sinh()).min(r_max);
        let gamma = (r_max / core).asinh();
        let sg = gamma.sinh();
        let mut nodes: Vec<f64> = (0..=n).map(|i| r_max * (gamma * i as f64 / n as f64).sinh() / sg).collect();
        nodes[n] = r_max;
        Ok(Grid { nodes, stretching: Stretching::Geometric { core } })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.n()]
    }

    pub fn stretching(&self) -> Stretching {
        self.stretching
    }

    /// Step of the underlying uniform parameterization, used for Richardson ratios.
    pub fn mesh_parameter(&self) -> f64 {
        match self.stretching {
            Stretching::Uniform => self.r_max() / self.n() as f64,
            Stretching::Geometric { .. } => 1.0 / self.n() as f64,
        }
    }

    pub fn max_spacing_ratio(&self) -> f64 {
        self.nodes
            .windows(3)
            .map(|w| {
                let (a, b) = (w[1] - w[0], w[2] - w[1]);
                (b / a).max(a / b)
            })
            .fold(1.0, f64::max)
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.nodes {
            h.update(r.to_bits().to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor { n: self.n(), r_max: self.r_max(), stretching: self.stretching, hash: self.hash() }
    }

    /// Checks the invariants required by the solvers.
    pub fn check_solver_grid(&self, r_match: f64) -> Result<()> {
        if self.n() < MIN_SOLVER_N {
            return Err(Error::Config(format!(
                "grid has {} intervals, solvers need at least {MIN_SOLVER_N}",
                self.n()
            )));
        }
        if !(self.r_max() > r_match) {
            return Err(Error::Config(format!("R_max = {} must exceed R = {r_match}", self.r_max())));
        }
        let ratio = self.max_spacing_ratio();
        if ratio > MAX_SPACING_RATIO * (1.0 + 1e-9) {
            return Err(Error::Config(format!("adjacent spacing ratio {ratio:.4} exceeds 1.2")));
        }
        Ok(())
    }
}

fn check_basic(n: usize, r_max: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("grid needs at least 2 intervals, got {n}")));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Config(format!("R_max must be positive and finite, got {r_max}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub n: usize,
    pub stretching: StretchKind,
    /// Multiplier applied to the domain scale.
    pub c_dom: f64,
    /// Explicit truncation radius; bypasses the heuristic when set.
    pub r_max: Option<f64>,
    pub r_max_min: f64,
    pub r_max_cap: f64,
    /// Width of the finely resolved core (geometric grids); defaults to R/2.
    pub core: Option<f64>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            n: 1024,
            stretching: StretchKind::Geometric,
            c_dom: 4.0,
            r_max: None,
            r_max_min: 0.0,
            r_max_cap: 1e7,
            core: None,
        }
    }
}

/// Radius beyond which the truncated problem is close to its limit, per regime.
pub fn domain_scale(spec: &ProblemSpec, beta: f64) -> f64 {
    let rm = spec.r_match;
    let ms = spec.m_star();
    let b1 = beta.max(1.0);
    let tau = DOMAIN_TAU;
    match certificates::plateau_classify(spec) {
        PlateauClass::Unbounded => {
            let r0 = certificates::balance_radius(spec, b1).unwrap_or(rm);
            let decay = ((spec.delta + 1.0) * 8.0 / spec.rho).powf(1.0 / (spec.delta + 1.0));
            r0.max(decay).max(rm)
        }
        PlateauClass::StrictGap if !spec.is_compact() => {
            let r0 = certificates::balance_radius(spec, b1).unwrap_or(rm);
            let c1 = certificates::c1_constant(spec).unwrap_or(0.0);
            let g = 0.5 * (c1 * b1.powf(-1.0 / (spec.eta - 1.0))).min(spec.plateau_value());
            let w = spec.rho.powf(ms - 1.0);
            let h2 = (spec.m - 1.0) * w.powf(spec.m - 2.0);
            let ell = 1.0 / (2.0 * g * h2).sqrt();
            r0.max(8.0 * ell).max(rm)
        }
        PlateauClass::StrictGap | PlateauClass::Plateau => {
            let mut s = rm.max(rm / tau.sqrt());
            if let Some(rp) = spec.r_prime() {
                s = s.max(rp);
            } else {
                s = s.max((beta / tau).powf(1.0 / spec.eta));
            }
            let excess = spec.a - (spec.d as f64 - 1.0);
            if excess > 0.0 {
                s = s.max(spec.rho.powf(ms - 1.0) * excess / tau);
            }
            s
        }
        PlateauClass::ZeroPlateau => {
            let mut s = rm;
            if !spec.is_compact() {
                s = s.max((beta / tau).powf(1.0 / spec.eta));
            }
            let tail = (spec.plateau_value() / tau).powf(1.0 / (spec.delta.abs() * ms));
            s.max(tail)
        }
    }
}

/// Builds the solver grid for a spec and beta.
pub fn build_grid(spec: &ProblemSpec, beta: f64, opts: &GridOptions) -> Result<Grid> {
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta must be nonnegative, got {beta}")));
    }
    let r_max = match opts.r_max {
        Some(r) => r,
        None => (opts.c_dom * domain_scale(spec, beta)).max(opts.r_max_min).min(opts.r_max_cap),
    };
    if !(r_max > spec.r_match) {
        return Err(Error::Config(format!("R_max = {r_max} does not exceed R = {} (check the caps)", spec.r_match)));
    }
    match opts.stretching {
        StretchKind::Uniform => Grid::uniform(opts.n, r_max),
        StretchKind::Geometric => Grid::geometric(opts.n, r_max, opts.core.unwrap_or(0.5 * spec.r_match)),
    }
}
