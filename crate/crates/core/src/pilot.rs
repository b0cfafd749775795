//! Two-stage pilot estimation.
//!
//! Stage one smooths strongly with a kernel estimator of `f^(l)` and
//! `f^(l+1)`, reads off the sign changes of `f^(l)`, and turns each odd
//! cluster of sign changes into an interval on which `f^(l+1)` must keep one
//! sign. Even clusters become intervals on which `f^(l)` itself keeps one sign.
//! Stage two is a sign-constrained smoothing spline with a GCV smoothing
//! parameter.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::changepoints::{extract_change_points, scan_crossings, ChangePointContext, ChangePointReport, Parity};
use crate::constrained::{fit_constrained, ConstraintSpec, QpSolution, SignConstraint};
use crate::design::DesignDistribution;
use crate::error::{invalid, Error, Result};
use crate::kernels::{
    default_bandwidth_grid, estimation_grid, kernel_fit, kernel_gcv_bandwidth, make_kernel, KernelFit,
};
use crate::numeric::interp_linear;
use crate::sample::{difference_sigma, SampleSet};
use crate::spline::{default_lambda_grid, fit_spline, gcv_select, SplineConfig, SplineFit};

/// Default multiplier on `ln(N) N^alpha h_gcv`, calibrated so the first-stage
/// bandwidth sits between the GCV bandwidth and the separation of the change
/// points at sample sizes of a few thousand.
pub const DEFAULT_INFLATION_SCALE: f64 = 0.07;

/// Default lower limit on the first-stage bandwidth in units of
/// `N^{-1/(2l+3)}`. GCV bandwidths vary by a factor of five between
/// replicates at small `N`, and without a floor the smallest ones produce
/// chains of noise crossings that merge into one wide spurious cluster.
pub const DEFAULT_BANDWIDTH_FLOOR: f64 = 0.3;

/// How wide each constraint interval is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WidthRule {
    /// Half-width `max(c_w sigma_if sqrt(2 ln N), 2h)`, clipped halfway to the
    /// neighboring clusters.
    SigmaMultiple(f64),
    /// From halfway to the previous zero of `f^(l+1)` to halfway to the next one.
    Midpoint,
    /// Fixed half-width, clipped like `SigmaMultiple`.
    Fixed(f64),
}

impl Default for WidthRule {
    fn default() -> Self {
        WidthRule::SigmaMultiple(3.0)
    }
}

impl fmt::Display for WidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WidthRule::SigmaMultiple(c) => write!(f, "sigma:{c}"),
            WidthRule::Midpoint => write!(f, "midpoint"),
            WidthRule::Fixed(w) => write!(f, "fixed:{w}"),
        }
    }
}

impl FromStr for WidthRule {
    type Err = Error;

    /// Accepts `sigma:<c>`, `midpoint` and `fixed:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "midpoint" {
            return Ok(WidthRule::Midpoint);
        }
        let parse = |v: &str| v.parse::<f64>().map_err(|_| invalid(format!("bad width rule `{s}`")));
        if let Some(v) = s.strip_prefix("sigma:") {
            let c = parse(v)?;
            if !(c >= 1.0) {
                return Err(invalid("sigma-multiple width needs c_w >= 1"));
            }
            return Ok(WidthRule::SigmaMultiple(c));
        }
        if s == "sigma" {
            return Ok(WidthRule::default());
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let w = parse(v)?;
            if !(w > 0.0) {
                return Err(invalid("fixed width must be positive"));
            }
            return Ok(WidthRule::Fixed(w));
        }
        Err(invalid(format!("unknown width rule `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct PilotConfig {
    pub ell: usize,
    pub m: usize,
    /// First-stage bandwidth; `None` uses the inflated GCV bandwidth.
    pub first_stage_h: Option<f64>,
    pub inflation_scale: f64,
    /// The inflated bandwidth is raised to at least `bandwidth_floor * N^{-1/(2l+3)}`.
    /// Zero disables the floor.
    pub bandwidth_floor: f64,
    pub width_rule: WidthRule,
    pub alpha: f64,
    pub center: bool,
    /// Second-stage smoothing parameter; `None` selects it by GCV.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub grid_size: Option<usize>,
    /// Noise level; `None` uses the first-difference estimate of the raw data.
    pub sigma: Option<f64>,
    pub design: DesignDistribution,
}

impl PilotConfig {
    pub fn new(ell: usize) -> Self {
        Self {
            ell,
            m: (ell + 1).max(2),
            first_stage_h: None,
            inflation_scale: DEFAULT_INFLATION_SCALE,
            bandwidth_floor: DEFAULT_BANDWIDTH_FLOOR,
            width_rule: WidthRule::default(),
            alpha: 0.05,
            center: ell >= 1,
            lambda: None,
            lambda_grid: default_lambda_grid(),
            grid_size: None,
            sigma: None,
            design: DesignDistribution::uniform(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid("second-stage penalty order must be at least 2"));
        }
        if self.ell > 3 {
            return Err(Error::UnsupportedOrder(self.ell + 1));
        }
        if let WidthRule::SigmaMultiple(c) = self.width_rule {
            if !(c >= 1.0) {
                return Err(invalid("sigma-multiple width needs c_w >= 1"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        if !(self.inflation_scale > 0.0) {
            return Err(invalid("inflation scale must be positive"));
        }
        if !(self.bandwidth_floor >= 0.0) {
            return Err(invalid("bandwidth floor must be non-negative"));
        }
        Ok(())
    }
}

/// `ln(N) N^{1/(2l+1) - 1/(2l+3)}`.
pub fn inflation_factor(n: usize, ell: usize) -> f64 {
    let l = ell as f64;
    let alpha = 1.0 / (2.0 * l + 1.0) - 1.0 / (2.0 * l + 3.0);
    let n = n as f64;
    n.ln() * n.powf(alpha)
}

/// `min(0.4, ln(N) N^{1/(2l+1) - 1/(2l+3)} h_gcv)`.
pub fn first_stage_bandwidth(n: usize, ell: usize, h_gcv: f64) -> f64 {
    scaled_first_stage_bandwidth(n, ell, h_gcv, 1.0)
}

/// [`first_stage_bandwidth`] with the inflation factor multiplied by `scale`.
pub fn scaled_first_stage_bandwidth(n: usize, ell: usize, h_gcv: f64, scale: f64) -> f64 {
    (scale * inflation_factor(n, ell) * h_gcv).min(0.4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centered {
    pub residual: SampleSet,
    /// Monomial coefficients in `t`, constant first.
    pub coefficients: Vec<f64>,
}

/// Evaluates monomial coefficients at `x`.
pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Removes the least-squares polynomial of degree `ell` from the responses.
pub fn center_polynomial(samples: &SampleSet, ell: usize) -> Result<Centered> {
    let n = samples.len();
    if n < ell + 1 {
        return Err(invalid(format!("need at least {} samples to remove a degree-{ell} fit", ell + 1)));
    }
    let k = ell + 1;
    // basis in u = 2t - 1 for conditioning, converted to powers of t afterwards
    let t = samples.locations();
    let y = samples.responses();
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut aty = DVector::<f64>::zeros(k);
    for (&ti, &yi) in t.iter().zip(y) {
        let u = 2.0 * ti - 1.0;
        let pows: Vec<f64> = (0..k).map(|j| u.powi(j as i32)).collect();
        for a in 0..k {
            aty[a] += pows[a] * yi;
            for b in 0..k {
                ata[(a, b)] += pows[a] * pows[b];
            }
        }
    }
    let ridge = 1e-12 * ata.trace() / k as f64;
    for a in 0..k {
        ata[(a, a)] += ridge;
    }
    let beta = ata.cholesky().ok_or_else(|| Error::Conditioning("centering normal equations".into()))?.solve(&aty);
    // expand sum_j beta_j (2t - 1)^j into powers of t
    let mut coefficients = vec![0.0; k];
    for (j, b) in beta.iter().enumerate() {
        for i in 0..=j {
            let c = crate::numeric::binomial(j, i) * 2f64.powi(i as i32) * (-1f64).powi((j - i) as i32);
            coefficients[i] += b * c;
        }
    }
    let resid: Vec<f64> = t.iter().zip(y).map(|(&ti, &yi)| yi - eval_poly(&coefficients, ti)).collect();
    Ok(Centered { residual: samples.with_responses(resid)?, coefficients })
}

/// One planned constraint interval with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPlan {
    pub x_hat: f64,
    pub sigma_if: f64,
    pub lo: f64,
    pub hi: f64,
    pub sign: i8,
    pub deriv: usize,
    pub parity: Parity,
}

const GAP: f64 = 1e-9;

/// Interval plans from a first-stage report; see [`constraint_intervals`].
pub fn plan_intervals(
    report: &ChangePointReport,
    fit: &KernelFit,
    rule: WidthRule,
    h: f64,
    n: usize,
) -> Vec<IntervalPlan> {
    let ell = fit.order;
    let (region_lo, region_hi) = (h, 1.0 - h);
    // cluster anchors: representative for odd, span center for even
    let anchors: Vec<f64> = report
        .clusters
        .iter()
        .map(|c| match c.representative() {
            Some(i) => report.points[i].x_hat,
            None => 0.5 * (c.span.lo + c.span.hi),
        })
        .collect();
    let next_zeros: Vec<f64> = scan_crossings(&fit.grid, &fit.values_next).into_iter().map(|z| z.0).collect();
    let f_ell = |x: f64| interp_linear(&fit.grid, &fit.values, x);
    let mut plans = Vec::new();
    for (ci, c) in report.clusters.iter().enumerate() {
        match c.representative() {
            Some(rep) => {
                let p = &report.points[rep];
                let x = p.x_hat;
                let (mut lo, mut hi) = match rule {
                    WidthRule::SigmaMultiple(cw) => {
                        let w = (cw * p.sigma_if_hat * (2.0 * (n as f64).ln()).sqrt()).max(2.0 * h);
                        (x - w, x + w)
                    }
                    WidthRule::Fixed(w) => (x - w, x + w),
                    WidthRule::Midpoint => {
                        let below = next_zeros.iter().copied().filter(|&u| u < x).fold(0.0, f64::max);
                        let above = next_zeros.iter().copied().filter(|&u| u > x).fold(1.0, f64::min);
                        (0.5 * (x + below), 0.5 * (x + above))
                    }
                };
                if !matches!(rule, WidthRule::Midpoint) {
                    if ci > 0 {
                        lo = lo.max(0.5 * (x + anchors[ci - 1]) + GAP);
                    }
                    if ci + 1 < anchors.len() {
                        hi = hi.min(0.5 * (x + anchors[ci + 1]) - GAP);
                    }
                }
                lo = lo.max(region_lo);
                hi = hi.min(region_hi);
                if !(lo < hi) {
                    continue;
                }
                let diff = f_ell(hi) - f_ell(lo);
                let sign = if diff > 0.0 {
                    1
                } else if diff < 0.0 {
                    -1
                } else {
                    p.sign_flip
                };
                plans.push(IntervalPlan {
                    x_hat: x,
                    sigma_if: p.sigma_if_hat,
                    lo,
                    hi,
                    sign,
                    deriv: ell + 1,
                    parity: Parity::Odd,
                });
            }
            None => {
                let first = &report.points[c.members[0]];
                let lo = c.span.lo.max(region_lo);
                let hi = c.span.hi.min(region_hi);
                if !(lo < hi) {
                    continue;
                }
                // the sign outside the cluster, i.e. before its first crossing
                plans.push(IntervalPlan {
                    x_hat: 0.5 * (c.span.lo + c.span.hi),
                    sigma_if: first.sigma_if_hat,
                    lo,
                    hi,
                    sign: -first.sign_flip,
                    deriv: ell,
                    parity: Parity::Even,
                });
            }
        }
    }
    plans
}

/// Interval sign constraints for the second stage.
pub fn constraint_intervals(
    report: &ChangePointReport,
    fit: &KernelFit,
    rule: WidthRule,
    h: f64,
    n: usize,
) -> Result<ConstraintSpec> {
    spec_from_plans(&plan_intervals(report, fit, rule, h, n))
}

fn spec_from_plans(plans: &[IntervalPlan]) -> Result<ConstraintSpec> {
    ConstraintSpec::new(plans.iter().map(|p| SignConstraint::new(p.deriv, p.lo, p.hi, p.sign)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotDiagnostics {
    pub h_gcv: Option<f64>,
    /// GCV picked an end of its bandwidth grid.
    pub h_gcv_at_boundary: bool,
    pub h_used: f64,
    pub lambda_used: f64,
    pub sigma_used: f64,
    pub plans: Vec<IntervalPlan>,
    /// False when the second stage fell back to the unconstrained fit.
    pub constrained: bool,
    pub fallback_reason: Option<String>,
    pub warnings: Vec<String>,
}

impl PilotDiagnostics {
    pub fn widths(&self) -> Vec<f64> {
        self.plans.iter().map(|p| p.hi - p.lo).collect()
    }

    pub fn parity_flags(&self) -> Vec<Parity> {
        self.plans.iter().map(|p| p.parity).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PilotResult {
    pub first_stage: KernelFit,
    pub report: ChangePointReport,
    pub constraints: ConstraintSpec,
    pub second_stage: SplineFit,
    pub qp: Option<QpSolution>,
    /// Empty when centering is off.
    pub centering_poly: Vec<f64>,
    pub diagnostics: PilotDiagnostics,
}

impl PilotResult {
    /// Odd clusters found in the first stage.
    pub fn k_hat(&self) -> usize {
        self.report.k_hat()
    }
}

/// Spacing of the first-stage evaluation grid relative to `h`.
const GRID_PER_H: f64 = 8.0;

/// First stage on (possibly centered) samples: kernel fit and change points.
pub fn first_stage(
    samples: &SampleSet,
    config: &PilotConfig,
    h: f64,
    sigma: f64,
) -> Result<(KernelFit, ChangePointReport)> {
    let kernel = make_kernel(config.ell)?;
    let points = (((1.0 - 2.0 * h) * GRID_PER_H / h).ceil() as usize + 1).max(64);
    let grid = estimation_grid(h, points);
    let fit = kernel_fit(samples, &config.design, &kernel, h, &grid)?;
    let ctx =
        ChangePointContext { kernel: &kernel, dist: &config.design, n: samples.len(), sigma, alpha: config.alpha };
    let report = extract_change_points(&fit, &ctx)?;
    Ok((fit, report))
}

/// Inflated GCV bandwidth and whether GCV hit an end of its grid.
pub fn auto_first_stage_h(samples: &SampleSet, config: &PilotConfig) -> Result<(f64, f64, bool)> {
    let kernel = make_kernel(config.ell)?;
    let grid = default_bandwidth_grid(samples.len());
    let (h_gcv, _) = kernel_gcv_bandwidth(samples, &config.design, &kernel, &grid)?;
    let at_boundary = h_gcv == grid[0] || h_gcv == grid[grid.len() - 1];
    let n = samples.len();
    let floor = config.bandwidth_floor * (n as f64).powf(-1.0 / (2.0 * config.ell as f64 + 3.0));
    let h = scaled_first_stage_bandwidth(n, config.ell, h_gcv, config.inflation_scale).max(floor).min(0.4);
    Ok((h, h_gcv, at_boundary))
}

/// Noise level, centered working samples and first-stage bandwidth.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub work: SampleSet,
    pub sigma: f64,
    pub centering_poly: Vec<f64>,
    pub h: f64,
    pub h_gcv: Option<f64>,
    pub at_boundary: bool,
    pub warnings: Vec<String>,
}

pub(crate) fn prepare(samples: &SampleSet, config: &PilotConfig) -> Result<Prepared> {
    config.validate()?;
    if samples.len() < 30 {
        return Err(invalid("the pilot estimator needs at least 30 samples"));
    }
    let sigma = config.sigma.or(samples.known_sigma()).unwrap_or_else(|| difference_sigma(samples.responses()));
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("noise level estimate is not positive; supply sigma"));
    }
    let (work, centering_poly) = if config.center {
        let c = center_polynomial(samples, config.ell)?;
        (c.residual.with_sigma(Some(sigma)), c.coefficients)
    } else {
        (samples.clone().with_sigma(Some(sigma)), Vec::new())
    };
    let mut warnings = Vec::new();
    let (h, h_gcv, at_boundary) = match config.first_stage_h {
        Some(h) => (h, None, false),
        None => {
            let (h, g, b) = auto_first_stage_h(&work, config)?;
            if b {
                warnings.push(format!("GCV bandwidth {g} is at the end of its grid"));
            }
            (h, Some(g), b)
        }
    };
    Ok(Prepared { work, sigma, centering_poly, h, h_gcv, at_boundary, warnings })
}

/// The full two-stage estimator.
pub fn pilot_fit(samples: &SampleSet, config: &PilotConfig) -> Result<PilotResult> {
    let p = prepare(samples, config)?;
    let (fit1, report) = first_stage(&p.work, config, p.h, p.sigma)?;
    run_second_stage(samples, &p, config, fit1, report, p.h)
}

/// Second stage with constraints planned from the first-stage report.
pub(crate) fn run_second_stage(
    samples: &SampleSet,
    prep: &Prepared,
    config: &PilotConfig,
    fit1: KernelFit,
    report: ChangePointReport,
    h: f64,
) -> Result<PilotResult> {
    let plans = plan_intervals(&report, &fit1, config.width_rule, h, samples.len());
    let mut warnings = Vec::new();
    let spec = match spec_from_plans(&plans) {
        Ok(s) => s,
        Err(e) => {
            warnings.push(format!("constraint intervals dropped: {e}"));
            ConstraintSpec::empty()
        }
    };
    second_stage_with(samples, prep, config, fit1, report, spec, plans, h, warnings)
}

/// Second stage with an explicit constraint set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn second_stage_with(
    samples: &SampleSet,
    prep: &Prepared,
    config: &PilotConfig,
    fit1: KernelFit,
    report: ChangePointReport,
    spec: ConstraintSpec,
    plans: Vec<IntervalPlan>,
    h: f64,
    extra_warnings: Vec<String>,
) -> Result<PilotResult> {
    let n = samples.len();
    let work = &prep.work;
    let mut template = SplineConfig::new(config.m, 1.0).with_sigma(prep.sigma);
    template.grid_size = config.grid_size;
    let lambda = match config.lambda {
        Some(l) => l,
        None => gcv_select(work, &template, &config.lambda_grid)?.lambda_star,
    };
    let cfg = template.with_lambda(lambda);

    let mut fallback = None;
    if 1.0 - 2.0 * h <= 0.0 {
        fallback = Some("empty estimation region".to_string());
    } else if report.k_hat() as f64 > n as f64 / 10.0 {
        fallback = Some(format!("{} change points exceed N/10", report.k_hat()));
    }
    let (mut fit2, qp, constrained) = if fallback.is_some() {
        (fit_spline(work, &cfg)?, None, false)
    } else {
        match fit_constrained(work, &cfg, &spec) {
            Ok((f, q)) => (f, Some(q), true),
            Err(e @ (Error::NonConvergence { .. } | Error::Cycling | Error::Infeasible | Error::Conditioning(_))) => {
                fallback = Some(format!("constrained solve failed: {e}"));
                (fit_spline(work, &cfg)?, None, false)
            }
            Err(e) => return Err(e),
        }
    };
    if !prep.centering_poly.is_empty() {
        fit2.add_polynomial(&prep.centering_poly, samples.locations());
    }
    let mut warnings = prep.warnings.clone();
    warnings.extend(extra_warnings);
    Ok(PilotResult {
        first_stage: fit1,
        report,
        constraints: if constrained { spec } else { ConstraintSpec::empty() },
        second_stage: fit2,
        qp,
        centering_poly: prep.centering_poly.clone(),
        diagnostics: PilotDiagnostics {
            h_gcv: prep.h_gcv,
            h_gcv_at_boundary: prep.at_boundary,
            h_used: h,
            lambda_used: lambda,
            sigma_used: prep.sigma,
            plans,
            constrained,
            fallback_reason: fallback,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changepoints::{ChangePoint, Cluster, Interval};
    use crate::spline::grid_diff;

    #[test]
    fn inflation_arithmetic() {
        let h = first_stage_bandwidth(1000, 1, 0.05);
        assert_eq!(h, 0.4);
        let raw = 1000f64.ln() * 1000f64.powf(2.0 / 15.0) * 0.05;
        assert!((raw - 0.8675).abs() < 1e-3);
        let a2 = inflation_factor(10_000, 2) / 10_000f64.ln();
        assert!((a2 - 10_000f64.powf(2.0 / 35.0)).abs() < 1e-9);
        let mut prev = 0.0;
        for n in 3..2000 {
            let v = inflation_factor(n, 1);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn centering_removes_polynomials_exactly() {
        let t: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let y: Vec<f64> = t.iter().map(|x| 2.0 + 3.0 * x - 1.5 * x * x).collect();
        let s = SampleSet::new(t, y, None).unwrap();
        let c = center_polynomial(&s, 2).unwrap();
        assert!(c.residual.responses().iter().all(|r| r.abs() < 1e-9));
        assert!((c.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((c.coefficients[1] - 3.0).abs() < 1e-9);
        assert!((c.coefficients[2] + 1.5).abs() < 1e-9);
    }

    #[test]
    fn centering_commutes_with_the_linear_spline() {
        let t: Vec<f64> = (0..80).map(|i| (i as f64 + 0.5) / 80.0).collect();
        let y: Vec<f64> =
            t.iter().enumerate().map(|(i, x)| (5.0 * x).sin() + 0.1 * ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let s = SampleSet::new(t, y, Some(0.1)).unwrap();
        let cfg = SplineConfig::new(2, 1e-4).with_grid(256);
        let direct = fit_spline(&s, &cfg).unwrap();
        let c = center_polynomial(&s, 1).unwrap();
        let mut back = fit_spline(&c.residual, &cfg).unwrap();
        back.add_polynomial(&c.coefficients, s.locations());
        for (a, b) in direct.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((direct.rss - back.rss).abs() < 1e-9);
    }

    fn fake_fit(h: f64, f: impl Fn(f64) -> f64, fp: impl Fn(f64) -> f64) -> KernelFit {
        let grid = estimation_grid(h, 400);
        KernelFit {
            values: grid.iter().map(|&x| f(x)).collect(),
            values_next: grid.iter().map(|&x| fp(x)).collect(),
            grid,
            bandwidth: h,
            order: 1,
        }
    }

    fn single_report(x: f64, flip: i8) -> ChangePointReport {
        ChangePointReport {
            points: vec![ChangePoint {
                x_hat: x,
                sign_flip: flip,
                sigma_if_hat: 0.01,
                uncertainty: None,
                cluster_id: 0,
            }],
            clusters: vec![Cluster { members: vec![0], parity: Parity::Odd, span: Interval::new(x, x) }],
        }
    }

    #[test]
    fn empty_report_gives_no_constraints() {
        let fit = fake_fit(0.1, |x| x + 1.0, |_| 1.0);
        let spec = constraint_intervals(&ChangePointReport::default(), &fit, WidthRule::default(), 0.1, 1000).unwrap();
        assert!(spec.is_empty());
    }

    #[test]
    fn midpoint_rule_without_other_zeros_uses_domain_ends() {
        let h = 0.1;
        let fit = fake_fit(h, |x| x - 0.5, |_| 1.0);
        let spec = constraint_intervals(&single_report(0.5, 1), &fit, WidthRule::Midpoint, h, 1000).unwrap();
        let c = spec.intervals()[0];
        assert!((c.lo - 0.25).abs() < 1e-12 && (c.hi - 0.75).abs() < 1e-12);
        assert_eq!(c.sign, 1);
        assert_eq!(c.deriv, 2);
    }

    #[test]
    fn sign_follows_the_first_stage_increment() {
        let h = 0.05;
        let fit = fake_fit(h, |x| (0.4 - x) * 3.0, |_| -3.0);
        for rule in [WidthRule::SigmaMultiple(3.0), WidthRule::Fixed(0.07), WidthRule::Midpoint] {
            let plans = plan_intervals(&single_report(0.4, -1), &fit, rule, h, 500);
            let p = &plans[0];
            let inc = interp_linear(&fit.grid, &fit.values, p.hi) - interp_linear(&fit.grid, &fit.values, p.lo);
            assert_eq!(p.sign as f64, inc.signum());
            assert!(p.lo <= 0.4 && 0.4 <= p.hi);
        }
    }

    #[test]
    fn widths_grow_with_the_scaling_condition() {
        // w^2 N h^{2l+1} / ln N along the default schedule with h_gcv ~ N^{-1/5}
        let ell = 1;
        let mut prev = 0.0;
        let mut first = 0.0;
        for e in 2..=5 {
            let n = 10usize.pow(e);
            let h = scaled_first_stage_bandwidth(n, ell, 0.3 * (n as f64).powf(-0.2), DEFAULT_INFLATION_SCALE);
            let kernel = make_kernel(ell).unwrap();
            let sd =
                crate::changepoints::sigma_if(0.3, 20.0, &DesignDistribution::uniform(), &kernel, h, n, 0.3).unwrap();
            let w = (3.0 * sd * (2.0 * (n as f64).ln()).sqrt()).max(2.0 * h);
            let g = w * w * n as f64 * h.powi(2 * ell as i32 + 1) / (n as f64).ln();
            // constant while the sigma term dominates, growing once the 2h floor binds
            assert!(g >= prev * (1.0 - 1e-12), "N = {n}: {g} < {prev}");
            if e == 2 {
                first = g;
            }
            prev = g;
        }
        assert!(prev > 2.0 * first);
    }

    #[test]
    fn monotone_data_gets_no_constraints_and_matches_gcv_spline() {
        let n = 200;
        let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| x * x * x + x).collect();
        let s = SampleSet::new(t, y, None).unwrap();
        // centering would subtract the trend and create a sign change in f'
        let mut cfg = PilotConfig::new(1);
        cfg.center = false;
        let r = pilot_fit(&s, &cfg).unwrap();
        assert!(r.constraints.is_empty());
        let sigma = r.diagnostics.sigma_used;
        let tmpl = SplineConfig::new(2, 1.0).with_sigma(sigma);
        let plain = gcv_select(&s, &tmpl, &cfg.lambda_grid).unwrap();
        assert_eq!(plain.lambda_star, r.diagnostics.lambda_used);
        for (a, b) in plain.fit.values.iter().zip(&r.second_stage.values) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn sine_pilot_satisfies_its_constraints_and_is_deterministic() {
        let n = 1000;
        let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let mut state = 99u64;
        let y: Vec<f64> = t
            .iter()
            .map(|x| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                (std::f64::consts::TAU * x).sin() + 0.5 * u
            })
            .collect();
        let s = SampleSet::new(t, y, None).unwrap();
        let cfg = PilotConfig::new(1);
        let r = pilot_fit(&s, &cfg).unwrap();
        let again = pilot_fit(&s, &cfg).unwrap();
        assert_eq!(r.second_stage.values, again.second_stage.values);
        assert!(r.diagnostics.constrained);
        assert!(r.k_hat() >= 1);
        // uncentering adds a line, so second differences are those of the constrained fit
        let d2 = grid_diff(&r.second_stage.values, 2);
        let pts = r.second_stage.deriv_points(2);
        for c in r.constraints.intervals() {
            if c.deriv != 2 {
                continue;
            }
            for (x, v) in pts.iter().zip(&d2) {
                if *x >= c.lo && *x <= c.hi {
                    assert!(c.sign as f64 * v >= -1e-6, "{v} at {x}");
                }
            }
        }
    }

    #[test]
    fn width_rule_parsing() {
        assert_eq!("sigma:3".parse::<WidthRule>().unwrap(), WidthRule::SigmaMultiple(3.0));
        assert_eq!("midpoint".parse::<WidthRule>().unwrap(), WidthRule::Midpoint);
        assert_eq!("fixed:0.1".parse::<WidthRule>().unwrap(), WidthRule::Fixed(0.1));
        assert!("sigma:0.5".parse::<WidthRule>().is_err());
        assert!("wide".parse::<WidthRule>().is_err());
    }
}
