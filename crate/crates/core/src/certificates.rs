//! Closed-form constants, explicit subsolutions and their numerical verification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_coefficients, hamiltonian, Jet, ProblemSpec, RadialCoefficients};
use crate::radial_solver::grid::{domain_scale, Grid, GridDescriptor};

/// Nodes of the grid used to verify candidate subsolutions.
const CERT_N: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StrongDrift,
    ModeratePlateau,
    ModerateGap,
    WeakDrift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateauClass {
    Unbounded,
    Plateau,
    StrictGap,
    /// delta < 0: the spectral function vanishes identically.
    ZeroPlateau,
}

impl From<PlateauClass> for Regime {
    fn from(c: PlateauClass) -> Regime {
        match c {
            PlateauClass::Unbounded => Regime::StrongDrift,
            PlateauClass::Plateau => Regime::ModeratePlateau,
            PlateauClass::StrictGap => Regime::ModerateGap,
            PlateauClass::ZeroPlateau => Regime::WeakDrift,
        }
    }
}

/// A verified subsolution: `lambda_lower` is a lower bound for the eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda_lower: f64,
    pub beta: f64,
    pub max_residual: f64,
    pub regime: Regime,
    pub grid_descriptor: GridDescriptor,
    pub spec: ProblemSpec,
    pub construction: Construction,
}

/// How the certified constant was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Closed-form candidate for the regime.
    ClosedForm,
    /// Largest constant for which the reference profile is a subsolution.
    BestConstant,
    /// Zero profile at lambda = 0.
    Trivial,
    /// Caller-supplied lambda.
    Supplied,
}

/// Why a candidate failed verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub lambda: f64,
    pub worst_r: f64,
    pub worst_residual: f64,
    pub tol: f64,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (lambda = {:.10e}, residual {:.3e} > tol {:.1e} at r = {:.6e})",
            self.reason, self.lambda, self.worst_residual, self.tol, self.worst_r
        )
    }
}

/// Residual tolerance for certificates.
pub fn certificate_tolerance(lambda: f64) -> f64 {
    1e-8 + 1e-6 * lambda.abs()
}

pub fn plateau_classify(spec: &ProblemSpec) -> PlateauClass {
    let dm1 = spec.d as f64 - 1.0;
    if spec.delta > 0.0 {
        PlateauClass::Unbounded
    } else if spec.delta < 0.0 {
        PlateauClass::ZeroPlateau
    } else if spec.is_compact() {
        if spec.a >= dm1 {
            PlateauClass::Plateau
        } else {
            PlateauClass::StrictGap
        }
    } else if spec.eta <= 1.0 || spec.a >= dm1 {
        PlateauClass::Plateau
    } else {
        PlateauClass::StrictGap
    }
}

pub fn regime(spec: &ProblemSpec) -> Regime {
    plateau_classify(spec).into()
}

/// c0 = ((d m* + eta)/(d m*)) (rho^{m*} delta/eta)^{eta/(delta m* + eta)}.
pub fn c0_constant(spec: &ProblemSpec) -> Result<f64> {
    if !(spec.delta > 0.0) {
        return Err(Error::Domain(format!("c0 needs delta > 0, got {}", spec.delta)));
    }
    let ms = spec.m_star();
    let dm = spec.delta * ms;
    let base = spec.rho.powf(ms) * spec.delta / spec.eta;
    Ok((dm + spec.eta) / dm * base.powf(spec.eta / (dm + spec.eta)))
}

/// kappa = rho^{m*-1} (d - 1 - a).
pub fn kappa(spec: &ProblemSpec) -> f64 {
    spec.rho.powf(spec.m_star() - 1.0) * (spec.d as f64 - 1.0 - spec.a)
}

fn gap_preconditions(spec: &ProblemSpec) -> Result<()> {
    if spec.delta != 0.0 || !(spec.eta > 1.0) || !(spec.a < spec.d as f64 - 1.0) {
        return Err(Error::Domain("needs delta = 0, eta > 1 and a < d - 1".to_string()));
    }
    Ok(())
}

/// c1 = (eta - 1) (kappa/eta)^{eta/(eta-1)}.
pub fn c1_constant(spec: &ProblemSpec) -> Result<f64> {
    gap_preconditions(spec)?;
    let eta = spec.eta;
    Ok((eta - 1.0) * (kappa(spec) / eta).powf(eta / (eta - 1.0)))
}

/// max{R, r0} where r0 balances drift cost against the potential.
pub fn balance_radius(spec: &ProblemSpec, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("balance radius needs beta > 0, got {beta}")));
    }
    let ms = spec.m_star();
    let r0 = if spec.delta > 0.0 {
        let dm = spec.delta * ms;
        (spec.eta * beta / (spec.rho.powf(ms) * spec.delta)).powf(1.0 / (dm + spec.eta))
    } else {
        gap_preconditions(spec)?;
        (spec.eta * beta / kappa(spec)).powf(1.0 / (spec.eta - 1.0))
    };
    Ok(r0.max(spec.r_match))
}

/// Closed-form f and g of the strong-drift balance.
#[derive(Clone, Copy, Debug)]
pub struct BalanceFunctions {
    coef: f64,
    power: f64,
    eta: f64,
    beta: f64,
    pub theta0: f64,
}

impl BalanceFunctions {
    /// f(r) = (rho^{m*}/m*) r^{delta m*} + beta r^{-eta}.
    pub fn f(&self, r: f64) -> f64 {
        self.coef * r.powf(self.power) + self.beta * r.powf(-self.eta)
    }

    pub fn f_prime(&self, r: f64) -> f64 {
        self.coef * self.power * r.powf(self.power - 1.0) - self.eta * self.beta * r.powf(-self.eta - 1.0)
    }

    /// g(theta) = (rho^{m*}/m*) theta^{delta m*} + theta^{-eta}.
    pub fn g(&self, theta: f64) -> f64 {
        self.coef * theta.powf(self.power) + theta.powf(-self.eta)
    }
}

pub fn balance_functions(spec: &ProblemSpec, beta: f64) -> Result<BalanceFunctions> {
    if !(spec.delta > 0.0) {
        return Err(Error::Domain(format!("balance functions need delta > 0, got {}", spec.delta)));
    }
    let ms = spec.m_star();
    let power = spec.delta * ms;
    let theta0 = (spec.delta * spec.rho.powf(ms) / spec.eta).powf(-1.0 / (power + spec.eta));
    Ok(BalanceFunctions { coef: spec.rho.powf(ms) / ms, power, eta: spec.eta, beta, theta0 })
}

/// A radial profile with analytic derivatives.
pub trait RadialProfile {
    fn jet(&self, r: f64) -> Jet;
}

/// The constant zero profile.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroProfile;

impl RadialProfile for ZeroProfile {
    fn jet(&self, _r: f64) -> Jet {
        Jet { v: 0.0, d1: 0.0, d2: 0.0 }
    }
}

/// phi0 = -rho^{m*-1} r^q / q with q = 1 + delta/(m-1) outside B_R, blended by an even
/// quartic inside.
#[derive(Clone, Copy, Debug)]
pub struct Phi0 {
    c: f64,
    q: f64,
    r_match: f64,
    blend: [f64; 3],
}

impl Phi0 {
    pub fn new(spec: &ProblemSpec) -> Phi0 {
        let c = spec.rho.powf(spec.m_star() - 1.0);
        let q = 1.0 + spec.delta / (spec.m - 1.0);
        let mut p = Phi0 { c, q, r_match: spec.r_match, blend: [0.0; 3] };
        let rm = spec.r_match;
        let e = p.exterior(rm);
        let cc = (e.d2 - e.d1 / rm) / (8.0 * rm * rm);
        let b = (e.d1 / rm - 4.0 * cc * rm * rm) / 2.0;
        let a = e.v - b * rm * rm - cc * rm.powi(4);
        p.blend = [a, b, cc];
        p
    }

    fn exterior(&self, r: f64) -> Jet {
        let slope = -self.c * r.powf(self.q - 1.0);
        let v = if self.q.abs() < 1e-14 { -self.c * r.ln() } else { -self.c * r.powf(self.q) / self.q };
        Jet { v, d1: slope, d2: slope * (self.q - 1.0) / r }
    }
}

impl RadialProfile for Phi0 {
    fn jet(&self, r: f64) -> Jet {
        if r >= self.r_match {
            return self.exterior(r);
        }
        let [a, b, c] = self.blend;
        let r2 = r * r;
        Jet { v: a + r2 * (b + c * r2), d1: r * (2.0 * b + 4.0 * c * r2), d2: 2.0 * b + 12.0 * c * r2 }
    }
}

/// Samples of a profile on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSamples {
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

/// The reference profile on the grid, shifted so that u(0) = 0.
pub fn build_phi0(spec: &ProblemSpec, grid: &Grid) -> ProfileSamples {
    let p = Phi0::new(spec);
    let u0 = p.jet(0.0).v;
    let (u, du) = grid
        .nodes()
        .iter()
        .map(|&r| {
            let j = p.jet(r);
            (j.v - u0, j.d1)
        })
        .unzip();
    ProfileSamples { u, du }
}

/// F[u](r) = -u'' - (d-1)u'/r + b u' + |u'|^m/m, with the symmetric limit at the origin.
pub fn f_operator(coeffs: &RadialCoefficients, jet: Jet, r: f64) -> f64 {
    let spec = coeffs.spec();
    if r == 0.0 {
        return -(spec.d as f64) * jet.d2;
    }
    -jet.d2 - (spec.d as f64 - 1.0) * jet.d1 / r + coeffs.drift(r) * jet.d1 + hamiltonian(jet.d1, spec.m)
}

fn tail_samples(r_end: f64) -> impl Iterator<Item = f64> {
    (1..=200).map(move |k| r_end * 1e3f64.powf(k as f64 / 200.0))
}

fn verification_points(grid: &Grid) -> Vec<f64> {
    grid.nodes().iter().copied().chain(tail_samples(grid.r_max())).collect()
}

/// Checks lambda + F[u] - beta V <= tol at every grid node and on a logarithmic tail
/// sample beyond the grid.
pub fn verify_subsolution(
    lambda: f64,
    profile: &dyn RadialProfile,
    grid: &Grid,
    coeffs: &RadialCoefficients,
    beta: f64,
    tol: f64,
) -> Result<Certificate> {
    verify_as(lambda, profile, grid, coeffs, beta, tol, Construction::Supplied)
}

fn verify_as(
    lambda: f64,
    profile: &dyn RadialProfile,
    grid: &Grid,
    coeffs: &RadialCoefficients,
    beta: f64,
    tol: f64,
    construction: Construction,
) -> Result<Certificate> {
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("candidate lambda is not finite: {lambda}")));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_r = 0.0;
    for r in verification_points(grid) {
        let res = lambda + f_operator(coeffs, profile.jet(r), r) - beta * coeffs.potential(r);
        if res > worst || res.is_nan() {
            worst = res;
            worst_r = r;
            if res.is_nan() {
                break;
            }
        }
    }
    if !(worst <= tol) {
        return Err(Error::Rejected(Rejection {
            lambda,
            worst_r,
            worst_residual: worst,
            tol,
            reason: "subsolution inequality violated".to_string(),
        }));
    }
    Ok(Certificate {
        lambda_lower: lambda,
        beta,
        max_residual: worst,
        regime: regime(coeffs.spec()),
        grid_descriptor: grid.descriptor(),
        spec: *coeffs.spec(),
        construction,
    })
}

/// Grid on which candidates are verified.
pub fn certification_grid(spec: &ProblemSpec, beta: f64, reach: f64) -> Result<Grid> {
    let r_end = (8.0 * domain_scale(spec, beta)).max(4.0 * reach).max(2.0 * spec.r_match).min(1e9);
    Grid::geometric(CERT_N, r_end, 0.5 * spec.r_match)
}

/// Smallest radius beyond which C r^{delta m* - 1} <= eps r^{delta m*}, with C
/// measured from the constructed coefficients.
pub fn strong_drift_radius(coeffs: &RadialCoefficients, eps: f64) -> f64 {
    let spec = coeffs.spec();
    let ms = spec.m_star();
    let power = spec.delta * ms;
    let lead = spec.rho.powf(ms) / ms;
    let phi = Phi0::new(spec);
    let rm = spec.r_match;
    let c = (0..=2000)
        .map(|k| rm * 1e4f64.powf(k as f64 / 2000.0))
        .map(|r| (f_operator(coeffs, phi.jet(r), r) + lead * r.powf(power)) * r.powf(1.0 - power))
        .fold(0.0, f64::max);
    (c / eps).max(rm)
}

/// Plateau threshold beta0 = max(beta1, beta2).
pub fn plateau_threshold(spec: &ProblemSpec) -> Result<f64> {
    if plateau_classify(spec) != PlateauClass::Plateau {
        return Err(Error::Domain("plateau threshold needs a plateau spec".to_string()));
    }
    let coeffs = build_coefficients(spec)?;
    let rm = spec.r_match;
    let excess = spec.d as f64 - 1.0 - spec.a;
    let k1 = if excess <= 0.0 { 0.0 } else { excess * rm.powf(spec.eta - 1.0) };
    let beta1 = spec.rho.powf(spec.m_star() - 1.0) * k1;
    let phi = Phi0::new(spec);
    let (mut inf_v, mut sup_f) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..=4000 {
        let r = rm * k as f64 / 4000.0;
        inf_v = inf_v.min(coeffs.potential(r));
        sup_f = sup_f.max(f_operator(&coeffs, phi.jet(r), r));
    }
    let beta2 = (spec.plateau_value() + sup_f) / inf_v;
    Ok(beta1.max(beta2).max(0.0))
}

/// Closed-form candidate for the regime (not verified). None when the regime has none.
pub fn candidate_lambda(spec: &ProblemSpec, beta: f64, epsilon: Option<f64>) -> Result<Option<f64>> {
    let coeffs = build_coefficients(spec)?;
    Ok(candidate_with_reach(&coeffs, beta, epsilon)?.map(|(l, _)| l))
}

fn candidate_with_reach(coeffs: &RadialCoefficients, beta: f64, epsilon: Option<f64>) -> Result<Option<(f64, f64)>> {
    let spec = coeffs.spec();
    match plateau_classify(spec) {
        PlateauClass::Unbounded => {
            if !(beta > 0.0) {
                return Ok(None);
            }
            let ms = spec.m_star();
            let lead = spec.rho.powf(ms) / ms;
            let eps = epsilon.unwrap_or(c0_constant(spec)? / 100.0).min(0.5 * lead);
            if !(eps > 0.0) {
                return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
            }
            let r_eps = strong_drift_radius(coeffs, eps);
            let p = spec.delta * ms;
            let a = lead - eps;
            // The minimizer of f_eps; below R_eps the margin is left to the verifier.
            let r_star = (spec.eta * beta / (a * p)).powf(1.0 / (p + spec.eta));
            let lam = a * r_star.powf(p) + beta * r_star.powf(-spec.eta);
            Ok(Some((lam, r_star.max(r_eps))))
        }
        PlateauClass::Plateau => Ok(Some((spec.plateau_value(), spec.r_match))),
        PlateauClass::StrictGap if !spec.is_compact() => {
            if !(beta > 0.0) {
                return Ok(None);
            }
            let r0 = balance_radius(spec, beta)?;
            let f = kappa(spec) / r0 - beta * r0.powf(-spec.eta);
            Ok(Some((spec.plateau_value() - f, r0)))
        }
        _ => Ok(None),
    }
}

/// Builds the regime's closed-form candidate and verifies it.
pub fn lower_bound(spec: &ProblemSpec, beta: f64, epsilon: Option<f64>) -> Result<Certificate> {
    let coeffs = build_coefficients(spec)?;
    let reject = |reason: &str| {
        Error::Rejected(Rejection {
            lambda: f64::NAN,
            worst_r: 0.0,
            worst_residual: f64::NAN,
            tol: 0.0,
            reason: reason.to_string(),
        })
    };
    if plateau_classify(spec) == PlateauClass::Plateau {
        let beta0 = plateau_threshold(spec)?;
        if beta < beta0 {
            return Err(reject(&format!("beta = {beta} is below the plateau threshold {beta0:.6e}")));
        }
    }
    let (lam, reach) = candidate_with_reach(&coeffs, beta, epsilon)?
        .ok_or_else(|| reject("no closed-form candidate for this regime"))?;
    let grid = certification_grid(spec, beta, reach)?;
    verify_as(lam, &Phi0::new(spec), &grid, &coeffs, beta, certificate_tolerance(lam), Construction::ClosedForm)
}

/// Largest constant lambda making (lambda, phi0) a subsolution at the verification points.
pub fn best_constant_certificate(spec: &ProblemSpec, beta: f64) -> Result<Certificate> {
    let coeffs = build_coefficients(spec)?;
    let grid = certification_grid(spec, beta, spec.r_match)?;
    let phi = Phi0::new(spec);
    let lam = verification_points(&grid)
        .into_iter()
        .map(|r| beta * coeffs.potential(r) - f_operator(&coeffs, phi.jet(r), r))
        .fold(f64::INFINITY, f64::min);
    verify_as(lam, &phi, &grid, &coeffs, beta, certificate_tolerance(lam), Construction::BestConstant)
}

/// Verifies a caller-supplied lambda against the reference profile phi0.
pub fn certify_lambda(spec: &ProblemSpec, beta: f64, lambda: f64) -> Result<Certificate> {
    let coeffs = build_coefficients(spec)?;
    let grid = certification_grid(spec, beta, spec.r_match)?;
    verify_subsolution(lambda, &Phi0::new(spec), &grid, &coeffs, beta, certificate_tolerance(lambda))
}

/// The (lambda = 0, u = 0) certificate.
pub fn trivial_certificate(spec: &ProblemSpec, beta: f64) -> Result<Certificate> {
    let coeffs = build_coefficients(spec)?;
    let grid = certification_grid(spec, beta, spec.r_match)?;
    verify_as(0.0, &ZeroProfile, &grid, &coeffs, beta, certificate_tolerance(0.0), Construction::Trivial)
}

/// Best of the closed-form, best-constant and trivial certificates.
pub fn best_lower_bound(spec: &ProblemSpec, beta: f64) -> Result<Certificate> {
    let mut best = trivial_certificate(spec, beta)?;
    for c in [lower_bound(spec, beta, None), best_constant_certificate(spec, beta)].into_iter().flatten() {
        if c.lambda_lower > best.lambda_lower {
            best = c;
        }
    }
    Ok(best)
}

/// h(p; q) = H(q + p) - H(q) - DH(q).p with H(p) = |p|^m/m.
pub fn gap_function(p: &[f64], q: &[f64], m: f64) -> f64 {
    assert_eq!(p.len(), q.len(), "p and q must have equal length");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let nq = norm(&mut q.iter().copied());
    let nqp = norm(&mut q.iter().zip(p).map(|(a, b)| a + b));
    let dot: f64 = q.iter().zip(p).map(|(a, b)| a * b).sum();
    let dh = if nq == 0.0 { 0.0 } else { nq.powf(m - 2.0) * dot };
    nqp.powf(m) / m - nq.powf(m) / m - dh
}

/// Explicit constant c with h(p; q) >= c|p|^2 for |q| = r, |p| < K.
pub fn gap_constant(m: f64, r: f64, k: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(Error::Domain(format!("gap constant needs m > 1, got {m}")));
    }
    if !(r > 0.0 && r < k) {
        return Err(Error::Domain(format!("gap constant needs 0 < r < K, got r = {r}, K = {k}")));
    }
    Ok(if m < 2.0 {
        (m - 1.0) * 2f64.powf(m - 3.0) * k.powf(m - 2.0)
    } else {
        (4.0 * k - r) * r.powf(m - 1.0) * 2f64.powf(-(m + 1.0)) * k.powi(-2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn strong() -> ProblemSpec {
        ProblemSpec::new(2.0, 3, 1.0, 1.0, 0.0, 2.0, 1.0)
    }

    fn gap() -> ProblemSpec {
        ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0)
    }

    #[test]
    fn c0_examples() {
        assert!(close(c0_constant(&strong()).unwrap(), 2f64.sqrt(), 1e-14));
        let mut s = strong();
        s.delta = 2.0;
        assert!(close(c0_constant(&s).unwrap(), 1.5, 1e-14));
        let mut t = strong();
        t.a = 5.0;
        assert_eq!(c0_constant(&t).unwrap().to_bits(), c0_constant(&strong()).unwrap().to_bits());
        assert!(c0_constant(&gap()).is_err());
    }

    #[test]
    fn c1_examples() {
        assert!(close(c1_constant(&gap()).unwrap(), 1.0, 1e-14));
        let s = ProblemSpec::new(2.0, 2, 0.0, 2.0, 0.0, 3.0, 1.0);
        assert!(close(c1_constant(&s).unwrap(), 2.0 * (2f64 / 3.0).powf(1.5), 1e-14));
        let mut t = gap();
        t.a = 2.0 - 1e-12;
        assert!(c1_constant(&t).unwrap() < 1e-20);
        t.a = 2.0;
        assert!(c1_constant(&t).is_err());
    }

    #[test]
    fn balance_radius_examples() {
        assert!(close(balance_radius(&strong(), 100.0).unwrap(), 200f64.powf(0.25), 1e-14));
        assert!(close(balance_radius(&gap(), 50.0).unwrap(), 50.0, 1e-14));
        assert_eq!(balance_radius(&strong(), 1e-3).unwrap(), 1.0);
    }

    #[test]
    fn balance_function_identities() {
        let s = strong();
        let bf = balance_functions(&s, 1.0).unwrap();
        let c0 = c0_constant(&s).unwrap();
        assert!(close(bf.g(bf.theta0), c0, 1e-12));
        for beta in [10.0, 1e3, 1e6] {
            let bf = balance_functions(&s, beta).unwrap();
            let r0 = balance_radius(&s, beta).unwrap();
            assert!(close(bf.f(r0), c0 * beta.powf(0.5), 1e-12));
        }
        let bf = balance_functions(&s, 1e4).unwrap();
        let signs: Vec<bool> = (0..400).map(|k| bf.f_prime(1e4f64.powf(k as f64 / 400.0)) > 0.0).collect();
        assert_eq!(signs.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    }

    #[test]
    fn classification_examples() {
        let mut s = gap();
        s.a = 2.0;
        s.eta = 5.0;
        assert_eq!(plateau_classify(&s), PlateauClass::Plateau);
        let mut s = gap();
        s.eta = 0.5;
        assert_eq!(plateau_classify(&s), PlateauClass::Plateau);
        assert_eq!(plateau_classify(&gap()), PlateauClass::StrictGap);
        assert_eq!(plateau_classify(&strong()), PlateauClass::Unbounded);
        let mut w = gap();
        w.delta = -0.5;
        assert_eq!(plateau_classify(&w), PlateauClass::ZeroPlateau);
        let c = gap().with_compact_support(2.0);
        assert_eq!(plateau_classify(&c), PlateauClass::StrictGap);
        let mut c = c;
        c.eta = 0.5;
        assert_eq!(plateau_classify(&c), PlateauClass::StrictGap);
    }

    #[test]
    fn phi0_shapes() {
        let p = Phi0::new(&gap());
        for r in [1.0, 2.0, 10.0] {
            assert_eq!(p.jet(r).d1, -1.0);
        }
        assert_eq!(p.jet(0.0).d1, 0.0);
        let p = Phi0::new(&strong());
        for r in [1.0, 3.0] {
            assert!(close(p.jet(r).v, -r * r / 2.0, 1e-15));
        }
        let l = p.jet(1.0 - 1e-9);
        let e = p.jet(1.0);
        assert!((l.v - e.v).abs() < 1e-8 && (l.d1 - e.d1).abs() < 1e-8 && (l.d2 - e.d2).abs() < 1e-7);
        let g = Grid::uniform(8, 4.0).unwrap();
        let s = build_phi0(&strong(), &g);
        assert_eq!(s.u[0], 0.0);
        assert_eq!(s.du[0], 0.0);
    }

    #[test]
    fn zero_profile_certificate() {
        for beta in [0.0, 1.0, 1e3] {
            let c = trivial_certificate(&gap(), beta).unwrap();
            assert_eq!(c.lambda_lower, 0.0);
            assert!(c.max_residual <= 0.0);
        }
    }

    #[test]
    fn strong_drift_candidate_certified_for_large_beta() {
        let s = strong();
        let c = lower_bound(&s, 1e6, None).unwrap();
        let c0 = c0_constant(&s).unwrap();
        let ratio = c.lambda_lower / 1e3;
        assert!(ratio <= c0 && ratio > 0.95 * c0, "ratio {ratio}");
    }

    #[test]
    fn above_plateau_rejected() {
        let mut s = gap();
        s.a = 2.0;
        let coeffs = build_coefficients(&s).unwrap();
        let grid = certification_grid(&s, 1e3, 1.0).unwrap();
        let lam = s.plateau_value() + 0.1;
        let r = verify_subsolution(lam, &Phi0::new(&s), &grid, &coeffs, 1e3, certificate_tolerance(lam));
        match r {
            Err(Error::Rejected(rej)) => assert!(rej.worst_residual > 0.0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn gap_certificate_tracks_c1() {
        let s = gap();
        for beta in [1e2, 1e3, 1e4] {
            let c = lower_bound(&s, beta, None).unwrap();
            let g = (0.5 - c.lambda_lower) * beta;
            assert!(close(g, 1.0, 1e-9), "beta {beta}: {g}");
        }
    }

    #[test]
    fn plateau_certificate_above_threshold() {
        let mut s = gap();
        s.a = 2.0;
        let b0 = plateau_threshold(&s).unwrap();
        assert!(b0.is_finite() && b0 >= 0.0);
        let c = lower_bound(&s, b0.max(1.0) * 1.01, None).unwrap();
        assert_eq!(c.lambda_lower, 0.5);
        if b0 > 0.0 {
            assert!(lower_bound(&s, 0.5 * b0, None).is_err());
        }
    }

    #[test]
    fn gap_constant_examples() {
        assert_eq!(gap_constant(2.0, 1.0, 2.0).unwrap(), 7.0 / 32.0);
        assert!(gap_constant(2.0, 2.0, 2.0).is_err());
        let p = [0.3, -1.1, 0.4];
        let q = [1.0, 2.0, -0.5];
        let np2: f64 = p.iter().map(|x| x * x).sum();
        assert!(close(gap_function(&p, &q, 2.0), np2 / 2.0, 1e-14));
        assert_eq!(gap_function(&[0.0, 0.0], &[0.4, 0.1], 1.5), 0.0);
    }
}
