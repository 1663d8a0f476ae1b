//! Problem data: exponents, radial drift and potential, and their interior extensions.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance for value and derivative matching at the seams.
pub const SEAM_TOL: f64 = 1e-10;

/// Human-readable record of the interior extensions, embedded in reports.
pub const EXTENSION: &str = "drift: b(r) = r*p(r^2) on [0,R], p quadratic matching b, b', b'' at R; \
potential: V(r) = R^-eta*exp(a1*s + a2*s^2), s = r^2 - R^2, a1 = -eta/(2R^2), a2 = eta/(4R^4); \
compact cutoff: V(r) = r^-eta*chi((R'-r)/(R'-R)), chi(t) = 10t^3 - 15t^4 + 6t^5";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PotentialKind {
    InversePower,
    CompactSupport { r_prime: f64 },
}

/// The tuple (m, d, delta, rho, a, eta, R) plus the potential variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRecord", into = "SpecRecord")]
pub struct ProblemSpec {
    pub m: f64,
    pub d: u32,
    pub delta: f64,
    pub rho: f64,
    pub a: f64,
    pub eta: f64,
    pub r_match: f64,
    pub potential: PotentialKind,
}

/// Flat key-value layout shared by config files and JSON reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecRecord {
    m: f64,
    d: u32,
    delta: f64,
    rho: f64,
    a: f64,
    eta: f64,
    #[serde(rename = "R")]
    r_match: f64,
    #[serde(default = "default_kind")]
    potential_kind: String,
    #[serde(rename = "R_prime", default, skip_serializing_if = "Option::is_none")]
    r_prime: Option<f64>,
}

fn default_kind() -> String {
    "inverse_power".to_string()
}

impl TryFrom<SpecRecord> for ProblemSpec {
    type Error = String;

    fn try_from(rec: SpecRecord) -> std::result::Result<Self, String> {
        let potential = match rec.potential_kind.as_str() {
            "inverse_power" => PotentialKind::InversePower,
            "compact_support" => PotentialKind::CompactSupport {
                r_prime: rec.r_prime.ok_or_else(|| "compact_support requires R_prime".to_string())?,
            },
            other => return Err(format!("unknown potential_kind '{other}'")),
        };
        Ok(ProblemSpec {
            m: rec.m,
            d: rec.d,
            delta: rec.delta,
            rho: rec.rho,
            a: rec.a,
            eta: rec.eta,
            r_match: rec.r_match,
            potential,
        })
    }
}

impl From<ProblemSpec> for SpecRecord {
    fn from(s: ProblemSpec) -> Self {
        let (kind, r_prime) = match s.potential {
            PotentialKind::InversePower => ("inverse_power", None),
            PotentialKind::CompactSupport { r_prime } => ("compact_support", Some(r_prime)),
        };
        SpecRecord {
            m: s.m,
            d: s.d,
            delta: s.delta,
            rho: s.rho,
            a: s.a,
            eta: s.eta,
            r_match: s.r_match,
            potential_kind: kind.to_string(),
            r_prime,
        }
    }
}

/// One failed constraint, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ProblemSpec {
    /// Inverse-power potential spec.
    pub fn new(m: f64, d: u32, delta: f64, rho: f64, a: f64, eta: f64, r_match: f64) -> Self {
        ProblemSpec { m, d, delta, rho, a, eta, r_match, potential: PotentialKind::InversePower }
    }

    pub fn with_compact_support(mut self, r_prime: f64) -> Self {
        self.potential = PotentialKind::CompactSupport { r_prime };
        self
    }

    pub fn m_star(&self) -> f64 {
        self.m / (self.m - 1.0)
    }

    /// The far-field value rho^{m*}/m*.
    pub fn plateau_value(&self) -> f64 {
        let ms = self.m_star();
        self.rho.powf(ms) / ms
    }

    pub fn is_compact(&self) -> bool {
        matches!(self.potential, PotentialKind::CompactSupport { .. })
    }

    pub fn r_prime(&self) -> Option<f64> {
        match self.potential {
            PotentialKind::CompactSupport { r_prime } => Some(r_prime),
            PotentialKind::InversePower => None,
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let rec: SpecRecord = toml::from_str(text).map_err(|e| e.to_string())?;
        ProblemSpec::try_from(rec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), message })
    }

    /// Overrides one config key. Unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key}: cannot parse '{value}' as a number")))
        };
        match key {
            "m" => self.m = num()?,
            "d" => {
                self.d = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("d: cannot parse '{value}' as an integer")))?
            }
            "delta" => self.delta = num()?,
            "rho" => self.rho = num()?,
            "a" => self.a = num()?,
            "eta" => self.eta = num()?,
            "R" => self.r_match = num()?,
            "R_prime" => self.potential = PotentialKind::CompactSupport { r_prime: num()? },
            "potential_kind" => match value.trim() {
                "inverse_power" => self.potential = PotentialKind::InversePower,
                "compact_support" => {
                    let r_prime = self.r_prime().unwrap_or(2.0 * self.r_match);
                    self.potential = PotentialKind::CompactSupport { r_prime };
                }
                other => return Err(Error::Config(format!("unknown potential_kind '{other}'"))),
            },
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Short stable hash of the canonical JSON form.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Checks every spec constraint and returns the list of violations (empty when valid).
pub fn validate_spec(spec: &ProblemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad =
        |field: &str, message: &str| out.push(Violation { field: field.to_string(), message: message.to_string() });
    let fields = [
        ("m", spec.m),
        ("delta", spec.delta),
        ("rho", spec.rho),
        ("a", spec.a),
        ("eta", spec.eta),
        ("R", spec.r_match),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            bad(name, "must be finite");
        }
    }
    if !(spec.m > 1.0) {
        bad("m", "m must exceed 1");
    }
    if spec.d < 1 {
        bad("d", "d must be at least 1");
    }
    if !(spec.rho > 0.0) {
        bad("rho", "rho must be positive");
    }
    if !(spec.eta > 0.0) {
        bad("eta", "eta must be positive");
    }
    if !(spec.r_match > 0.0) {
        bad("R", "R must be positive");
    }
    if let PotentialKind::CompactSupport { r_prime } = spec.potential {
        if !(r_prime > spec.r_match) || !r_prime.is_finite() {
            bad("R_prime", "R_prime must exceed R");
        }
    }
    if spec.m > 1.0 && spec.m.is_finite() {
        let ms = spec.m_star();
        if (1.0 / spec.m + 1.0 / ms - 1.0).abs() > 8.0 * f64::EPSILON {
            bad("m", "conjugate exponent check failed");
        }
    }
    out
}

/// m/(m-1).
pub fn conjugate_exponent(m: f64) -> Result<f64> {
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::Domain(format!("conjugate exponent needs m > 1, got {m}")));
    }
    Ok(m / (m - 1.0))
}

/// H(p) = |p|^m / m.
pub fn hamiltonian(p: f64, m: f64) -> f64 {
    p.abs().powf(m) / m
}

/// H'(p) = |p|^{m-2} p.
pub fn hamiltonian_dp(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p.abs().powf(m - 1.0) * p.signum()
    }
}

/// Value and first two derivatives of a radial function at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

/// One-sided mismatches (relative) at the seams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchingDiagnostics {
    pub drift_value: f64,
    pub drift_slope: f64,
    pub drift_curvature: f64,
    pub potential_value: f64,
    pub potential_slope: f64,
    pub potential_curvature: f64,
    pub cutoff_value: f64,
    pub cutoff_slope: f64,
}

impl MatchingDiagnostics {
    pub fn max_c1(&self) -> f64 {
        [
            self.drift_value,
            self.drift_slope,
            self.potential_value,
            self.potential_slope,
            self.cutoff_value,
            self.cutoff_slope,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Radial drift magnitude and potential with their interior extensions.
#[derive(Clone, Debug)]
pub struct RadialCoefficients {
    spec: ProblemSpec,
    m_star: f64,
    // interior drift p(s) = p0 + p1 (s - R^2) + p2/2 (s - R^2)^2
    p0: f64,
    p1: f64,
    p2: f64,
    alpha1: f64,
    alpha2: f64,
    log_v_r: f64,
    b_at_r: f64,
    diagnostics: MatchingDiagnostics,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// chi(t) = 10t^3 - 15t^4 + 6t^5 and its derivatives.
fn smoothstep(t: f64) -> (f64, f64, f64) {
    let t2 = t * t;
    (t2 * t * (10.0 + t * (-15.0 + 6.0 * t)), 30.0 * t2 * (1.0 - t) * (1.0 - t), 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t))
}

impl RadialCoefficients {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn m_star(&self) -> f64 {
        self.m_star
    }

    pub fn diagnostics(&self) -> &MatchingDiagnostics {
        &self.diagnostics
    }

    fn drift_exterior(&self, r: f64) -> Jet {
        let s = &self.spec;
        let (rho, a, dl) = (s.rho, s.a, s.delta);
        let rd = r.powf(dl);
        Jet {
            v: (rho + a / r) * rd,
            d1: rho * dl * rd / r + a * (dl - 1.0) * rd / (r * r),
            d2: rho * dl * (dl - 1.0) * rd / (r * r) + a * (dl - 1.0) * (dl - 2.0) * rd / (r * r * r),
        }
    }

    fn drift_interior(&self, r: f64) -> Jet {
        let q = r * r - self.spec.r_match * self.spec.r_match;
        let p = self.p0 + q * (self.p1 + 0.5 * self.p2 * q);
        let dp = self.p1 + self.p2 * q;
        Jet { v: r * p, d1: p + 2.0 * r * r * dp, d2: 6.0 * r * dp + 4.0 * r * r * r * self.p2 }
    }

    /// b_r(r) with first and second derivatives.
    pub fn drift_jet(&self, r: f64) -> Jet {
        if r >= self.spec.r_match {
            self.drift_exterior(r)
        } else {
            self.drift_interior(r)
        }
    }

    pub fn drift(&self, r: f64) -> f64 {
        self.drift_jet(r).v
    }

    fn log_potential_interior(&self, r: f64) -> (f64, f64, f64) {
        let s = r * r - self.spec.r_match * self.spec.r_match;
        let l = self.log_v_r + s * (self.alpha1 + self.alpha2 * s);
        let g = self.alpha1 + 2.0 * self.alpha2 * s;
        (l, 2.0 * r * g, 2.0 * g + 8.0 * self.alpha2 * r * r)
    }

    fn power_jet(&self, r: f64) -> Jet {
        let eta = self.spec.eta;
        let v = r.powf(-eta);
        Jet { v, d1: -eta * v / r, d2: eta * (eta + 1.0) * v / (r * r) }
    }

    /// V(r) with first and second derivatives.
    pub fn potential_jet(&self, r: f64) -> Jet {
        let rm = self.spec.r_match;
        if r < rm {
            let (l, l1, l2) = self.log_potential_interior(r);
            let v = l.exp();
            return Jet { v, d1: v * l1, d2: v * (l2 + l1 * l1) };
        }
        match self.spec.potential {
            PotentialKind::InversePower => self.power_jet(r),
            PotentialKind::CompactSupport { r_prime } => {
                if r >= r_prime {
                    return Jet { v: 0.0, d1: 0.0, d2: 0.0 };
                }
                let g = self.power_jet(r);
                let k = -1.0 / (r_prime - rm);
                let (c, c1, c2) = smoothstep((r_prime - r) / (r_prime - rm));
                Jet { v: g.v * c, d1: g.d1 * c + g.v * c1 * k, d2: g.d2 * c + 2.0 * g.d1 * c1 * k + g.v * c2 * k * k }
            }
        }
    }

    pub fn potential(&self, r: f64) -> f64 {
        self.potential_jet(r).v
    }

    /// B(r) = integral of b_r over [0, r], in closed form.
    pub fn drift_antiderivative(&self, r: f64) -> f64 {
        let rm = self.spec.r_match;
        let s0 = rm * rm;
        // integral of r p(r^2) dr = (1/2) integral of p(s) ds
        let prim = |s: f64| {
            let q = s - s0;
            q * (self.p0 + q * (0.5 * self.p1 + self.p2 * q / 6.0))
        };
        if r <= rm {
            return 0.5 * (prim(r * r) - prim(0.0));
        }
        let inner = -0.5 * prim(0.0);
        let (rho, a, dl) = (self.spec.rho, self.spec.a, self.spec.delta);
        let rho_part = if (dl + 1.0).abs() < 1e-14 {
            rho * (r / rm).ln()
        } else {
            rho * (r.powf(dl + 1.0) - rm.powf(dl + 1.0)) / (dl + 1.0)
        };
        let a_part = if dl.abs() < 1e-14 { a * (r / rm).ln() } else { a * (r.powf(dl) - rm.powf(dl)) / dl };
        inner + rho_part + a_part
    }

    /// The minimizer of s -> b s + |s|^m/m at radius r.
    pub fn far_slope(&self, r: f64) -> f64 {
        let b = self.drift(r);
        -b.signum() * b.abs().powf(1.0 / (self.spec.m - 1.0))
    }

    /// b_r at the matching radius.
    pub fn drift_at_match(&self) -> f64 {
        self.b_at_r
    }
}

/// Builds the coefficient evaluators for a validated spec.
pub fn build_coefficients(spec: &ProblemSpec) -> Result<RadialCoefficients> {
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    let rm = spec.r_match;
    let eta = spec.eta;
    let mut c = RadialCoefficients {
        spec: *spec,
        m_star: spec.m_star(),
        p0: 0.0,
        p1: 0.0,
        p2: 0.0,
        alpha1: -eta / (2.0 * rm * rm),
        alpha2: eta / (4.0 * rm.powi(4)),
        log_v_r: -eta * rm.ln(),
        b_at_r: 0.0,
        diagnostics: MatchingDiagnostics::default(),
    };
    let ext = c.drift_exterior(rm);
    c.b_at_r = ext.v;
    c.p0 = ext.v / rm;
    c.p1 = (ext.d1 - c.p0) / (2.0 * rm * rm);
    c.p2 = (ext.d2 - 6.0 * rm * c.p1) / (4.0 * rm * rm * rm);

    let int = c.drift_interior(rm);
    let vin = {
        let (l, l1, l2) = c.log_potential_interior(rm);
        let v = l.exp();
        Jet { v, d1: v * l1, d2: v * (l2 + l1 * l1) }
    };
    let vout = c.power_jet(rm);
    let mut diag = MatchingDiagnostics {
        drift_value: rel(int.v, ext.v),
        drift_slope: rel(int.d1, ext.d1),
        drift_curvature: rel(int.d2, ext.d2),
        potential_value: rel(vin.v, vout.v),
        potential_slope: rel(vin.d1, vout.d1),
        potential_curvature: rel(vin.d2, vout.d2),
        ..Default::default()
    };
    if let PotentialKind::CompactSupport { r_prime } = spec.potential {
        let below = c.potential_jet(r_prime * (1.0 - 1e-15));
        diag.cutoff_value = below.v.abs();
        diag.cutoff_slope = below.d1.abs();
    }
    c.diagnostics = diag;
    if diag.max_c1() > SEAM_TOL {
        return Err(Error::Construction(format!(
            "interior extension mismatch {:.3e} exceeds {SEAM_TOL:e}",
            diag.max_c1()
        )));
    }
    Ok(c)
}

/// b_r(r) for r >= 0.
pub fn eval_drift(coeffs: &RadialCoefficients, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius must be nonnegative, got {r}")));
    }
    Ok(coeffs.drift(r))
}

/// V(r) for r >= 0.
pub fn eval_potential(coeffs: &RadialCoefficients, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius must be nonnegative, got {r}")));
    }
    Ok(coeffs.potential(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ProblemSpec {
        ProblemSpec::new(2.0, 3, 1.0, 1.0, 0.0, 2.0, 1.0)
    }

    #[test]
    fn validation_examples() {
        assert!(validate_spec(&base()).is_empty());
        let mut s = base();
        s.m = 1.0;
        let v = validate_spec(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "m");
        assert_eq!(v[0].message, "m must exceed 1");
        let mut s = base();
        s.eta = 0.0;
        let v = validate_spec(&s);
        assert_eq!(v[0].field, "eta");
        assert_eq!(v[0].message, "eta must be positive");
        let s = base().with_compact_support(0.5);
        assert_eq!(validate_spec(&s)[0].field, "R_prime");
    }

    #[test]
    fn conjugates() {
        assert_eq!(conjugate_exponent(2.0).unwrap(), 2.0);
        assert_eq!(conjugate_exponent(3.0).unwrap(), 1.5);
        assert!((conjugate_exponent(1.5).unwrap() - 3.0).abs() < 1e-15);
        assert!(conjugate_exponent(1.0).is_err());
    }

    #[test]
    fn exterior_values() {
        let mut s = base();
        s.delta = 0.0;
        let c = build_coefficients(&s).unwrap();
        assert_eq!(c.drift(2.0), 1.0);
        assert_eq!(c.potential(2.0), 0.25);

        let s = ProblemSpec::new(2.0, 3, 1.0, 2.0, 3.0, 2.0, 1.0);
        let c = build_coefficients(&s).unwrap();
        assert_eq!(c.drift(4.0), 11.0);
        assert_eq!(eval_drift(&c, 0.0).unwrap(), 0.0);
        assert!(eval_drift(&c, -1.0).is_err());
        assert!(eval_potential(&c, -1e-3).is_err());
    }

    #[test]
    fn compact_support_vanishes() {
        let s = base().with_compact_support(2.0);
        let c = build_coefficients(&s).unwrap();
        assert_eq!(eval_potential(&c, 3.0).unwrap(), 0.0);
        assert_eq!(c.potential(2.0), 0.0);
        assert!(c.potential(1.5) > 0.0);
    }

    #[test]
    fn interior_potential_positive() {
        let c = build_coefficients(&base()).unwrap();
        let min = (0..=10_000).map(|i| c.potential(i as f64 / 10_000.0)).fold(f64::INFINITY, f64::min);
        assert!(min > 0.0);
    }

    #[test]
    fn seam_continuity() {
        for spec in [base(), base().with_compact_support(3.0)] {
            let c = build_coefficients(&spec).unwrap();
            let (l, r) = (c.potential(1.0 - 1e-8), c.potential(1.0 + 1e-8));
            assert!((l - r).abs() < 1e-7);
            let (l, r) = (c.drift(1.0 - 1e-8), c.drift(1.0 + 1e-8));
            assert!((l - r).abs() < 1e-7);
        }
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        let s = ProblemSpec::new(1.5, 3, 0.5, 1.3, -0.4, 2.0, 1.2);
        let c = build_coefficients(&s).unwrap();
        for &r in &[0.3, 1.2, 2.0, 7.5] {
            let n = 20_000;
            let h = r / n as f64;
            let mut acc = c.drift(0.0) + c.drift(r);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * c.drift(i as f64 * h);
            }
            let quad = acc * h / 3.0;
            let exact = c.drift_antiderivative(r);
            assert!((quad - exact).abs() < 1e-9 * exact.abs().max(1.0), "r={r}");
        }
    }

    #[test]
    fn config_round_trip() {
        let text = "m = 2.0\nd = 3\ndelta = 0.0\nrho = 1.0\na = 2.0\neta = 2.0\nR = 1.0\n\
                    potential_kind = \"compact_support\"\nR_prime = 2.0\n";
        let s = ProblemSpec::from_toml_str(text).unwrap();
        assert_eq!(s.r_prime(), Some(2.0));
        let json = serde_json::to_string(&s).unwrap();
        let back: ProblemSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(ProblemSpec::from_toml_str("m = 2\nbogus = 1").is_err());
    }

    #[test]
    fn overrides() {
        let mut s = base();
        s.set("a", "3").unwrap();
        assert_eq!(s.a, 3.0);
        s.set("R_prime", "4").unwrap();
        assert_eq!(s.r_prime(), Some(4.0));
        assert!(s.set("zeta", "1").is_err());
        assert!(s.set("m", "two").is_err());
    }
}
