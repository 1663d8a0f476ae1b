//! Beta sweeps, asymptotic fits, shape checks and report files.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::certificates::{self, c0_constant, c1_constant, plateau_classify, Construction, PlateauClass};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{ProblemSpec, EXTENSION};
use crate::radial_solver::{default_ladder, estimate_lambda_extrapolated, LadderOptions};

/// Default absolute tolerance for plateau detection.
pub const PLATEAU_TOL: f64 = 1e-3;

/// Fits with a lower coefficient of determination are reported but not certified.
pub const MIN_R_SQUARED: f64 = 0.99;

/// null in JSON stands for NaN.
fn nan_or<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(deserialize_with = "nan_or")]
    pub beta: f64,
    #[serde(deserialize_with = "nan_or")]
    pub lambda: f64,
    #[serde(deserialize_with = "nan_or")]
    pub err: f64,
    #[serde(deserialize_with = "nan_or")]
    pub lower_bound: f64,
    #[serde(deserialize_with = "nan_or")]
    pub seconds: f64,
    #[serde(default)]
    pub certificate: Option<Construction>,
    #[serde(default)]
    pub failure: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.lambda.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub ladder: LadderOptions,
    pub plateau_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { ladder: LadderOptions::default(), plateau_tol: PLATEAU_TOL }
    }
}

fn solve_row(spec: &ProblemSpec, beta: f64, opts: &SweepOptions) -> SweepRow {
    let start = Instant::now();
    let ladder = default_ladder(spec, beta, &opts.ladder);
    let solved = estimate_lambda_extrapolated(spec, beta, &ladder, &opts.ladder.solver);
    let cert = certificates::best_lower_bound(spec, beta);
    let (lambda, err, mut failure) = match solved {
        Ok(e) => (e.lambda, e.error_estimate, None),
        Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
    };
    let (lower_bound, certificate) = match cert {
        Ok(c) => (c.lambda_lower, Some(c.construction)),
        Err(e) => {
            failure.get_or_insert_with(|| format!("certificate: {e}"));
            (f64::NAN, None)
        }
    };
    SweepRow { beta, lambda, err, lower_bound, seconds: start.elapsed().as_secs_f64(), certificate, failure }
}

/// One extrapolated solve and one certificate per beta, computed concurrently. Rows
/// come back sorted by beta; failed rows carry NaN values and a message.
pub fn run_sweep(spec: &ProblemSpec, betas: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::Config("beta list is empty".to_string()));
    }
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(Error::Config(format!("beta values must be finite and nonnegative, got {b}")));
    }
    let mut sorted = betas.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.par_iter().map(|&b| solve_row(spec, b, opts)).collect())
}

/// Least-squares line y = a + s x with its coefficient of determination.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (intercept, slope, r2)
}

/// Rows with beta in the upper half of the swept decades.
fn fit_window(rows: &[SweepRow]) -> Result<(Vec<&SweepRow>, f64)> {
    let good: Vec<&SweepRow> = rows.iter().filter(|r| r.ok() && r.beta > 0.0).collect();
    let (lo, hi) = good.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.beta), hi.max(r.beta)));
    if good.len() < 4 || hi / lo < 1e3 * (1.0 - 1e-12) {
        return Err(Error::Fit(format!(
            "need at least 4 solved rows spanning 3 decades of beta, got {} spanning {:.2} decades",
            good.len(),
            if good.is_empty() { 0.0 } else { (hi / lo).log10() }
        )));
    }
    let cut = (lo * hi).sqrt() * (1.0 - 1e-12);
    let window: Vec<&SweepRow> = good.into_iter().filter(|r| r.beta >= cut).collect();
    if window.len() < 2 {
        return Err(Error::Fit("fewer than 2 rows in the fit window".to_string()));
    }
    Ok((window, cut))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    /// exp(intercept) of the free fit.
    pub prefactor: f64,
    /// Geometric mean of lambda beta^{-target_exponent} over the window.
    pub prefactor_pinned: f64,
    pub r_squared: f64,
    pub certified: bool,
    pub window_min_beta: f64,
    pub target_exponent: f64,
    pub target_prefactor: f64,
}

/// Fits log lambda against log beta over the upper half of the beta range.
pub fn fit_strong_drift(rows: &[SweepRow], spec: &ProblemSpec) -> Result<PowerFit> {
    if !(spec.delta > 0.0) {
        return Err(Error::Fit(format!("strong-drift fit needs delta > 0, got {}", spec.delta)));
    }
    let (window, cut) = fit_window(rows)?;
    if let Some(r) = window.iter().find(|r| !(r.lambda > 0.0)) {
        return Err(Error::Fit(format!("lambda = {} at beta = {} is not positive", r.lambda, r.beta)));
    }
    let x: Vec<f64> = window.iter().map(|r| r.beta.ln()).collect();
    let y: Vec<f64> = window.iter().map(|r| r.lambda.ln()).collect();
    let (a, s, r2) = linear_fit(&x, &y);
    let p = spec.delta * spec.m_star();
    let target_exponent = p / (p + spec.eta);
    let pinned = x.iter().zip(&y).map(|(x, y)| y - target_exponent * x).sum::<f64>() / x.len() as f64;
    Ok(PowerFit {
        exponent: s,
        prefactor: a.exp(),
        prefactor_pinned: pinned.exp(),
        r_squared: r2,
        certified: r2 >= MIN_R_SQUARED,
        window_min_beta: cut,
        target_exponent,
        target_prefactor: c0_constant(spec)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    /// Negative slope of log(plateau - lambda) against log beta.
    pub rate: f64,
    /// Geometric mean of gap beta^{1/(eta-1)} over the window.
    pub c1_estimate: f64,
    /// exp(intercept) of the free fit.
    pub prefactor: f64,
    pub r_squared: f64,
    pub certified: bool,
    pub window_min_beta: f64,
    pub target_rate: f64,
    pub target_c1: f64,
}

pub fn fit_moderate_gap(rows: &[SweepRow], spec: &ProblemSpec) -> Result<GapFit> {
    if spec.delta != 0.0 || spec.is_compact() || !(spec.eta > 1.0) || !(spec.a < spec.d as f64 - 1.0) {
        return Err(Error::Fit(
            "gap fit needs delta = 0, an inverse-power potential, eta > 1 and a < d - 1".to_string(),
        ));
    }
    let (window, cut) = fit_window(rows)?;
    let top = spec.plateau_value();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in &window {
        let gap = top - r.lambda;
        if !(gap > r.err.max(0.0)) {
            return Err(Error::Fit(format!(
                "gap {gap:.3e} at beta = {} is within the error estimate {:.3e}",
                r.beta, r.err
            )));
        }
        x.push(r.beta.ln());
        y.push(gap.ln());
    }
    let (a, s, r2) = linear_fit(&x, &y);
    let target_rate = 1.0 / (spec.eta - 1.0);
    let pinned = x.iter().zip(&y).map(|(x, y)| y + target_rate * x).sum::<f64>() / x.len() as f64;
    Ok(GapFit {
        rate: -s,
        c1_estimate: pinned.exp(),
        prefactor: a.exp(),
        r_squared: r2,
        certified: r2 >= MIN_R_SQUARED,
        window_min_beta: cut,
        target_rate,
        target_c1: c1_constant(spec)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub beta0_estimate: f64,
    /// Mean lambda over the plateau rows.
    pub plateau_value: f64,
}

/// Smallest swept beta from which every row stays within `tol` of the plateau
/// value. None when delta != 0 or the plateau is never reached.
pub fn detect_plateau(rows: &[SweepRow], spec: &ProblemSpec, tol: f64) -> Option<Plateau> {
    if spec.delta != 0.0 {
        return None;
    }
    let top = spec.plateau_value();
    let mut start = rows.len();
    for (i, r) in rows.iter().enumerate().rev() {
        if r.ok() && r.lambda >= top - tol {
            start = i;
        } else {
            break;
        }
    }
    let tail = rows.get(start..).filter(|t| !t.is_empty())?;
    Some(Plateau {
        beta0_estimate: tail[0].beta,
        plateau_value: tail.iter().map(|r| r.lambda).sum::<f64>() / tail.len() as f64,
    })
}

fn err_of(r: &SweepRow) -> f64 {
    if r.err.is_finite() {
        r.err.abs()
    } else {
        0.0
    }
}

/// lambda nondecreasing in beta up to 1e-8 plus the error estimates.
pub fn check_monotone(rows: &[SweepRow]) -> bool {
    rows.iter().all(SweepRow::ok)
        && rows.windows(2).all(|w| w[1].lambda >= w[0].lambda - (1e-8 + err_of(&w[0]) + err_of(&w[1])))
}

/// Every second divided difference is at most its error-propagated bound.
pub fn check_concavity(rows: &[SweepRow]) -> bool {
    rows.iter().all(SweepRow::ok)
        && rows.windows(3).all(|w| {
            let (b1, b2, b3) = (w[0].beta, w[1].beta, w[2].beta);
            let c = [2.0 / ((b2 - b1) * (b3 - b1)), -2.0 / ((b3 - b2) * (b2 - b1)), 2.0 / ((b3 - b2) * (b3 - b1))];
            let dd: f64 = c.iter().zip(w).map(|(c, r)| c * r.lambda).sum();
            let slack: f64 = c.iter().zip(w).map(|(c, r)| c.abs() * (err_of(r) + 1e-10)).sum();
            dd <= slack
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub monotone: bool,
    pub concave: bool,
    /// lambda <= plateau + err on every row; only for delta = 0.
    pub upper_bound: Option<bool>,
    /// lower_bound - err <= lambda on every row.
    pub certificates_sound: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Fits {
    pub strong_drift: Option<PowerFit>,
    pub moderate_gap: Option<GapFit>,
    /// Why a regime-appropriate fit was not produced.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub solver_tol: f64,
    pub base_n: usize,
    pub r_max_multipliers: Vec<f64>,
    pub plateau_tol: f64,
    pub extension: String,
}

impl Environment {
    pub fn new(opts: &SweepOptions) -> Environment {
        Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            solver_tol: opts.ladder.solver.tol,
            base_n: opts.ladder.base_n,
            r_max_multipliers: opts.ladder.multipliers.clone(),
            plateau_tol: opts.plateau_tol,
            extension: EXTENSION.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub spec: ProblemSpec,
    pub spec_hash: String,
    pub rows: Vec<SweepRow>,
    pub fits: Fits,
    pub plateau: Option<Plateau>,
    pub checks: Checks,
    pub environment: Environment,
    pub timestamp: String,
}

impl SweepReport {
    /// Copy with wall times and timestamp cleared, for reproducibility comparisons.
    pub fn masked(&self) -> SweepReport {
        let mut r = self.clone();
        r.timestamp.clear();
        r.rows.iter_mut().for_each(|row| row.seconds = 0.0);
        r
    }
}

fn sound(r: &SweepRow) -> bool {
    !r.ok() || !r.lower_bound.is_finite() || r.lower_bound - err_of(r) <= r.lambda
}

/// Fits, plateau detection and checks for a set of rows.
pub fn build_report(spec: &ProblemSpec, rows: Vec<SweepRow>, opts: &SweepOptions) -> SweepReport {
    let mut fits = Fits::default();
    match plateau_classify(spec) {
        PlateauClass::Unbounded => match fit_strong_drift(&rows, spec) {
            Ok(f) => fits.strong_drift = Some(f),
            Err(e) => fits.note = Some(e.to_string()),
        },
        PlateauClass::StrictGap if !spec.is_compact() && spec.eta > 1.0 => match fit_moderate_gap(&rows, spec) {
            Ok(f) => fits.moderate_gap = Some(f),
            Err(e) => fits.note = Some(e.to_string()),
        },
        _ => {}
    }
    let top = spec.plateau_value();
    let checks = Checks {
        monotone: check_monotone(&rows),
        concave: check_concavity(&rows),
        upper_bound: (spec.delta == 0.0).then(|| rows.iter().all(|r| !r.ok() || r.lambda <= top + err_of(r) + 1e-12)),
        certificates_sound: rows.iter().all(sound),
    };
    SweepReport {
        spec: *spec,
        spec_hash: spec.hash_hex(),
        plateau: detect_plateau(&rows, spec, opts.plateau_tol),
        rows,
        fits,
        checks,
        environment: Environment::new(opts),
        timestamp: chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(),
    }
}

/// `sweep-<spec hash>-<timestamp>.json`
pub fn report_file_name(report: &SweepReport) -> String {
    format!("sweep-{}-{}.json", report.spec_hash, report.timestamp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub const CSV_HEADER: &str = "beta,lambda,err,lower_bound,seconds";

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.beta, r.lambda, r.err, r.lower_bound, r.seconds
        ));
    }
    s
}

pub fn rows_from_csv(text: &str) -> std::result::Result<Vec<SweepRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(format!("expected header `{CSV_HEADER}`, found {other:?}")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if v.len() != 5 {
                return Err(format!("line {}: expected 5 columns, found {}", i + 2, v.len()));
            }
            Ok(SweepRow {
                beta: v[0],
                lambda: v[1],
                err: v[2],
                lower_bound: v[3],
                seconds: v[4],
                certificate: None,
                failure: None,
            })
        })
        .collect()
}

pub fn report_to_json(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Writes the report atomically; CSV keeps only the per-beta rows.
pub fn write_report(report: &SweepReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => rows_to_csv(&report.rows),
    };
    write_atomic(path, text.as_bytes())
}

pub fn read_report(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    match ReportFormat::from_path(path) {
        ReportFormat::Json => Ok(read_report(path)?.rows),
        ReportFormat::Csv => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            rows_from_csv(&text).map_err(|message| Error::Parse { path: path.into(), message })
        }
    }
}

/// Geometric list start, start*factor, ... up to stop (inclusive within rounding).
pub fn geometric_betas(start: f64, stop: f64, factor: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop >= start && factor > 1.0) || !stop.is_finite() {
        return Err(Error::Config(format!(
            "geometric range needs 0 < start <= stop and factor > 1, got {start}:{stop}:x{factor}"
        )));
    }
    let n = ((stop / start).ln() / factor.ln() + 1e-9).floor() as i32;
    Ok((0..=n).map(|k| start * factor.powi(k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(beta: f64, lambda: f64) -> SweepRow {
        SweepRow { beta, lambda, err: 0.0, lower_bound: 0.0, seconds: 0.0, certificate: None, failure: None }
    }

    #[test]
    fn shape_examples() {
        let rows = vec![row(0.0, 0.0), row(1.0, 1.0), row(2.0, 1.5)];
        assert!(check_monotone(&rows));
        assert!(check_concavity(&rows));
        let rows = vec![row(0.0, 0.0), row(1.0, 1.0), row(2.0, 3.0)];
        assert!(!check_concavity(&rows));
        let rows = vec![row(0.0, 0.0), row(1.0, 1.0), row(2.0, 0.5)];
        assert!(!check_monotone(&rows));
    }

    #[test]
    fn synthetic_power_law() {
        let spec = ProblemSpec::new(2.0, 3, 1.0, 1.0, 0.0, 2.0, 1.0);
        let c0 = c0_constant(&spec).unwrap();
        let rows: Vec<SweepRow> = (0..7).map(|k| 10f64.powi(k)).map(|b| row(b, c0 * b.sqrt())).collect();
        let f = fit_strong_drift(&rows, &spec).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-10);
        assert!((f.prefactor - c0).abs() < 1e-10);
        assert!((f.target_prefactor - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.target_exponent, 0.5);
        assert!(fit_strong_drift(&rows[..3], &spec).is_err());
    }

    #[test]
    fn synthetic_gap_law() {
        let spec = ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0);
        let rows: Vec<SweepRow> = (1..=6).map(|k| 10f64.powi(k)).map(|b| row(b, 0.5 - 0.8 / b)).collect();
        let f = fit_moderate_gap(&rows, &spec).unwrap();
        assert!((f.rate - 1.0).abs() < 1e-10);
        assert!((f.c1_estimate - 0.8).abs() < 1e-10);
        assert!((f.prefactor - 0.8).abs() < 1e-10);
        assert!((f.target_c1 - 1.0).abs() < 1e-12);
        let mut flat = rows.clone();
        flat.last_mut().unwrap().lambda = 0.5;
        assert!(fit_moderate_gap(&flat, &spec).is_err());
    }

    #[test]
    fn plateau_detection() {
        let spec = ProblemSpec::new(2.0, 3, 0.0, 1.0, 2.0, 2.0, 1.0);
        let rows = vec![row(1.0, 0.5), row(10.0, 0.5), row(100.0, 0.5)];
        let p = detect_plateau(&rows, &spec, 1e-3).unwrap();
        assert_eq!((p.beta0_estimate, p.plateau_value), (1.0, 0.5));
        let below = vec![row(1.0, 0.3), row(10.0, 0.45), row(100.0, 0.49)];
        assert!(detect_plateau(&below, &spec, 1e-3).is_none());
        // larger tolerance never moves the onset up
        let ramp = vec![row(1.0, 0.49), row(10.0, 0.4995), row(100.0, 0.49999)];
        let b = |t: f64| detect_plateau(&ramp, &spec, t).map(|p| p.beta0_estimate).unwrap_or(f64::INFINITY);
        assert!(b(1e-2) <= b(1e-3) && b(1e-3) <= b(1e-4));
    }

    #[test]
    fn csv_json_round_trip() {
        let spec = ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0);
        let mut rows = vec![row(1.0, 0.1 + 0.2), row(10.0, 1.0 / 3.0)];
        rows[1].err = f64::NAN;
        let csv = rows_to_csv(&rows);
        let back = rows_from_csv(&csv).unwrap();
        let report = build_report(&spec, back, &SweepOptions::default());
        let json = report_to_json(&report);
        let again: SweepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(rows_to_csv(&again.rows), csv);
    }

    #[test]
    fn empty_report_is_valid() {
        let spec = ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0);
        let report = build_report(&spec, Vec::new(), &SweepOptions::default());
        let v: serde_json::Value = serde_json::from_str(&report_to_json(&report)).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 0);
        assert_eq!(rows_to_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn geometric_range() {
        assert_eq!(geometric_betas(10.0, 1e6, 10.0).unwrap().len(), 6);
        assert!(geometric_betas(10.0, 1.0, 10.0).is_err());
        assert!(geometric_betas(10.0, 100.0, 1.0).is_err());
    }
}
