//! Finite-difference stencils on a nonuniform radial grid.
//!
//! The Newton unknowns are the increments `delta_i = u_{i+1} - u_i` together with
//! lambda, which builds the normalization u(0) = 0 into the parameterization and
//! keeps the difference quotients free of cancellation.

use crate::model::{hamiltonian, RadialCoefficients};

use super::grid::Grid;

#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub r: Vec<f64>,
    /// u'(r_i) = wm_i delta_{i-1} + wp_i delta_i
    pub wm: Vec<f64>,
    pub wp: Vec<f64>,
    /// u''(r_i) = sp_i delta_i - sm_i delta_{i-1}
    pub sm: Vec<f64>,
    pub sp: Vec<f64>,
    /// coefficient of delta_0 in the origin Laplacian
    pub origin: f64,
    /// far slope = fa delta_{N-2} + fb delta_{N-1}
    pub fa: f64,
    pub fb: f64,
    /// b(r_i) - (d-1)/r_i
    pub advect: Vec<f64>,
    /// beta V(r_i)
    pub source: Vec<f64>,
    pub far_slope: f64,
    pub m: f64,
}

impl Stencil {
    pub fn new(grid: &Grid, coeffs: &RadialCoefficients, beta: f64) -> Stencil {
        let r = grid.nodes().to_vec();
        let n = grid.n();
        let d = coeffs.spec().d as f64;
        let mut s = Stencil {
            wm: vec![0.0; n + 1],
            wp: vec![0.0; n + 1],
            sm: vec![0.0; n + 1],
            sp: vec![0.0; n + 1],
            origin: 2.0 * d / (r[1] * r[1]),
            fa: 0.0,
            fb: 0.0,
            advect: vec![0.0; n + 1],
            source: r.iter().map(|&x| beta * coeffs.potential(x)).collect(),
            far_slope: coeffs.far_slope(r[n]),
            m: coeffs.spec().m,
            r,
        };
        for i in 1..n {
            let hm = s.r[i] - s.r[i - 1];
            let hp = s.r[i + 1] - s.r[i];
            let sum = hm + hp;
            s.wm[i] = hp / (hm * sum);
            s.wp[i] = hm / (hp * sum);
            s.sm[i] = 2.0 / (hm * sum);
            s.sp[i] = 2.0 / (hp * sum);
            s.advect[i] = coeffs.drift(s.r[i]) - (d - 1.0) / s.r[i];
        }
        let (x0, x1, x2) = (s.r[n - 2], s.r[n - 1], s.r[n]);
        let c1 = (x2 - x0) / ((x1 - x0) * (x1 - x2));
        let c2 = (2.0 * x2 - x0 - x1) / ((x2 - x0) * (x2 - x1));
        s.fa = c1 + c2;
        s.fb = c2;
        s
    }

    pub fn n(&self) -> usize {
        self.r.len() - 1
    }

    #[inline]
    pub fn slope(&self, delta: &[f64], i: usize) -> f64 {
        self.wm[i] * delta[i - 1] + self.wp[i] * delta[i]
    }

    /// Discrete gradient at every node.
    pub fn gradient(&self, delta: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut du = vec![0.0; n + 1];
        for i in 1..n {
            du[i] = self.slope(delta, i);
        }
        du[n] = self.fa * delta[n - 2] + self.fb * delta[n - 1];
        du
    }

    /// Node residuals 0..=N for increments `delta` (length N) and `lambda`.
    pub fn residual(&self, delta: &[f64], lambda: f64) -> Vec<f64> {
        let n = self.n();
        let mut f = vec![0.0; n + 1];
        f[0] = lambda - self.origin * delta[0] - self.source[0];
        for i in 1..n {
            let p = self.slope(delta, i);
            let q = self.sp[i] * delta[i] - self.sm[i] * delta[i - 1];
            f[i] = lambda - q + self.advect[i] * p + hamiltonian(p, self.m) - self.source[i];
        }
        f[n] = self.fa * delta[n - 2] + self.fb * delta[n - 1] - self.far_slope;
        f
    }

    /// Jacobian entries of interior row i: (d/d delta_{i-1}, d/d delta_i).
    #[inline]
    pub fn row_jacobian(&self, delta: &[f64], i: usize, eps: f64) -> (f64, f64) {
        let p = self.slope(delta, i);
        let h1 = if self.m == 2.0 { p } else { (p * p + eps * eps).powf(0.5 * (self.m - 2.0)) * p };
        let g = self.advect[i] + h1;
        (self.sm[i] + g * self.wm[i], -self.sp[i] + g * self.wp[i])
    }
}
