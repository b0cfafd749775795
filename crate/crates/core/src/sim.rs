//! Monte Carlo experiments: test functions, sample generation, estimator runs
//! and aggregated reports.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! `(seed, N, replicate, purpose)`, so results do not depend on the order in
//! which replicates run.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::changepoints::{expected_false_changepoints, scan_crossings, Parity, TrueChangePoint};
use crate::constrained::{fit_constrained, ConstraintSpec, SignConstraint};
use crate::design::{midpoint_design, DesignDistribution};
use crate::error::{invalid, Error, Result};
use crate::kernels::{default_bandwidth_grid, estimation_grid, kernel_fit, kernel_gcv_bandwidth, make_kernel};
use crate::numeric::{compensated_sum, interp_linear, simpson};
use crate::pilot::{eval_poly, pilot_fit, IntervalPlan, PilotConfig, WidthRule};
use crate::sample::SampleSet;
use crate::spline::{
    default_grid_size, default_lambda_grid, fit_spline, gcv_select, stagger_points, v_norm, SplineConfig, SplineFit,
};

/// Test functions with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    /// `sin(2 pi freq t)`.
    Sine { freq: f64 },
    /// `20 (t - 1/2)^3 - 2 (t - 1/2)`.
    Cubic,
    /// `10 sum_k (-2)^k (t - b_k)_+^3 - t`: twice continuously differentiable,
    /// third derivative jumps at the breaks.
    PiecewisePoly { breaks: Vec<f64> },
    /// `1 / (1 + exp(-rate (t - 1/2)))`; derivatives up to order four.
    Logistic { rate: f64 },
}

pub const DEFAULT_BREAKS: [f64; 2] = [0.2, 0.5];
pub const DEFAULT_LOGISTIC_RATE: f64 = 10.0;

impl Truth {
    /// Highest derivative order available.
    pub fn max_deriv(&self) -> usize {
        match self {
            Truth::Sine { .. } | Truth::Cubic => usize::MAX,
            Truth::PiecewisePoly { .. } => 3,
            Truth::Logistic { .. } => 4,
        }
    }

    /// `f^(j)(t)`.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        match self {
            Truth::Sine { freq } => {
                let w = 2.0 * std::f64::consts::PI * freq;
                w.powi(j as i32) * (w * t + j as f64 * std::f64::consts::FRAC_PI_2).sin()
            }
            Truth::Cubic => {
                let u = t - 0.5;
                match j {
                    0 => 20.0 * u * u * u - 2.0 * u,
                    1 => 60.0 * u * u - 2.0,
                    2 => 120.0 * u,
                    3 => 120.0,
                    _ => 0.0,
                }
            }
            Truth::PiecewisePoly { breaks } => {
                let mut acc = match j {
                    0 => -t,
                    1 => -1.0,
                    _ => 0.0,
                };
                let mut c = 10.0;
                for &b in breaks {
                    let u = (t - b).max(0.0);
                    let term = match j {
                        0 => u.powi(3),
                        1 => 3.0 * u * u,
                        2 => 6.0 * u,
                        3 => {
                            if t > b {
                                6.0
                            } else {
                                0.0
                            }
                        }
                        _ => f64::NAN,
                    };
                    acc += c * term;
                    c *= -2.0;
                }
                acc
            }
            Truth::Logistic { rate } => {
                let s = 1.0 / (1.0 + (-rate * (t - 0.5)).exp());
                let d1 = s * (1.0 - s);
                let v = match j {
                    0 => s,
                    1 => d1,
                    2 => d1 * (1.0 - 2.0 * s),
                    3 => d1 * (1.0 - 6.0 * s + 6.0 * s * s),
                    4 => d1 * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s),
                    _ => f64::NAN,
                };
                v * rate.powi(j as i32)
            }
        }
    }

    /// Sign changes of `f^(ell)` in `(0, 1)`, located by bisection.
    pub fn change_points(&self, ell: usize) -> Vec<TrueChangePoint> {
        const SCAN: usize = 20_000;
        let f = |t: f64| self.eval(ell, t);
        let grid: Vec<f64> = (0..=SCAN).map(|i| i as f64 / SCAN as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        let mut out = Vec::new();
        // (location, value) of the last nonzero sample
        let mut last: Option<(f64, f64)> = None;
        for (&t, &v) in grid.iter().zip(&values) {
            if v == 0.0 {
                continue;
            }
            let Some((t0, v0)) = last.replace((t, v)) else { continue };
            if v0.signum() == v.signum() {
                continue;
            }
            let (mut lo, mut hi) = (t0, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == v0.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = 0.5 * (lo + hi);
            out.push(TrueChangePoint { x, next_deriv: self.eval(ell + 1, x) });
        }
        out
    }

    /// Parses `sine`, `cubic`, `piecewise-poly[:b1/b2/...]`, `logistic[:rate]`.
    /// `freq` applies to the sine.
    pub fn parse(name: &str, freq: f64) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad number `{s}`")));
        match head.trim() {
            "sine" => Ok(Truth::Sine { freq: arg.map(num).transpose()?.unwrap_or(freq) }),
            "cubic" => Ok(Truth::Cubic),
            "piecewise-poly" => {
                let breaks = match arg {
                    Some(a) => a.split('/').map(num).collect::<Result<Vec<_>>>()?,
                    None => DEFAULT_BREAKS.to_vec(),
                };
                if breaks.iter().any(|b| !(0.0..=1.0).contains(b)) {
                    return Err(invalid("breaks must lie in [0, 1]"));
                }
                Ok(Truth::PiecewisePoly { breaks })
            }
            "logistic" | "monotone-logistic" => {
                Ok(Truth::Logistic { rate: arg.map(num).transpose()?.unwrap_or(DEFAULT_LOGISTIC_RATE) })
            }
            other => Err(Error::UnknownTruth(other.to_string())),
        }
    }
}

/// How sample locations are laid out.
impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truth::Sine { freq } => write!(f, "sine:{freq}"),
            Truth::Cubic => f.write_str("cubic"),
            Truth::PiecewisePoly { breaks } => {
                let b: Vec<String> = breaks.iter().map(|b| b.to_string()).collect();
                write!(f, "piecewise-poly:{}", b.join("/"))
            }
            Truth::Logistic { rate } => write!(f, "logistic:{rate}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// `t_i = (i - 1/2) / N`.
    Equispaced,
    /// Sorted iid uniform draws.
    IidUniform,
    /// Quantile midpoints of the cosine-perturbed density `1 + a cos(2 pi t)`.
    Cosine(f64),
}

impl Design {
    pub fn distribution(&self) -> Result<DesignDistribution> {
        match self {
            Design::Equispaced | Design::IidUniform => Ok(DesignDistribution::uniform()),
            Design::Cosine(a) => DesignDistribution::cosine(*a),
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Equispaced => write!(f, "equispaced"),
            Design::IidUniform => write!(f, "uniform"),
            Design::Cosine(a) => write!(f, "cosine:{a}"),
        }
    }
}

impl FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "equispaced" => Ok(Design::Equispaced),
            "uniform" | "iid-uniform" => Ok(Design::IidUniform),
            other => match other.split_once(':') {
                Some(("cosine", a)) => {
                    a.trim().parse().map(Design::Cosine).map_err(|_| invalid(format!("bad cosine amplitude `{a}`")))
                }
                _ => Err(invalid(format!("unknown design `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Kernel estimate of `f^(ell)`; reports raw sign changes.
    Kernel,
    /// Unconstrained smoothing spline.
    Spline,
    /// Two-stage pilot estimator.
    Pilot,
    /// Spline constrained with intervals built from the true change points.
    ConstrainedOracle,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Kernel => "kernel",
            Estimator::Spline => "spline",
            Estimator::Pilot => "pilot",
            Estimator::ConstrainedOracle => "oracle",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kernel" => Ok(Estimator::Kernel),
            "spline" => Ok(Estimator::Spline),
            "pilot" => Ok(Estimator::Pilot),
            "oracle" | "constrained-oracle" => Ok(Estimator::ConstrainedOracle),
            other => Err(invalid(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Smoothing parameter schedule for spline-type estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Gcv,
    /// `scale * N^exponent`.
    Power {
        scale: f64,
        exponent: f64,
    },
}

impl LambdaRule {
    fn describe(&self) -> String {
        match self {
            LambdaRule::Gcv => "gcv".into(),
            LambdaRule::Power { scale, exponent } => format!("{scale}*N^{exponent}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub truth: Truth,
    pub ell: usize,
    pub m: usize,
    pub sigma: f64,
    pub design: Design,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub width_rule: WidthRule,
    pub alpha: f64,
    /// Kernel bandwidth (kernel estimator) or first-stage bandwidth (pilot);
    /// `None` selects it from the data.
    pub bandwidth: Option<f64>,
    pub lambda_rule: LambdaRule,
    pub grid_size: Option<usize>,
    /// Half-width of the oracle constraint intervals.
    pub oracle_width: f64,
    /// Points per curve in the emitted curve summaries.
    pub curve_points: usize,
}

/// The keys accepted in a configuration file, in canonical order.
pub const CONFIG_KEYS: [&str; 12] =
    ["truth", "freq", "ell", "m", "sigma", "design", "N", "replicates", "seed", "estimator", "width_rule", "alpha"];

impl ExperimentConfig {
    pub fn new(truth: Truth, estimator: Estimator, n_list: Vec<usize>, replicates: usize) -> Self {
        Self {
            truth,
            ell: 1,
            m: 2,
            sigma: 0.3,
            design: Design::Equispaced,
            n_list,
            replicates,
            seed: 1,
            estimator,
            width_rule: WidthRule::default(),
            alpha: 0.05,
            bandwidth: None,
            lambda_rule: LambdaRule::Gcv,
            grid_size: None,
            oracle_width: 0.05,
            curve_points: 101,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(invalid("need at least one replicate"));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("N list must be nonempty and strictly ascending"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma must be nonnegative"));
        }
        if self.m < 1 {
            return Err(invalid("m must be at least 1"));
        }
        let needed = match self.estimator {
            Estimator::Kernel | Estimator::Pilot | Estimator::ConstrainedOracle => self.ell + 1,
            Estimator::Spline => 0,
        }
        .max(self.m.saturating_sub(1));
        if needed > self.truth.max_deriv() {
            return Err(invalid(format!("truth has no analytic derivative of order {needed}")));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h < 0.5) {
                return Err(invalid("bandwidth must lie in (0, 1/2)"));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Only [`CONFIG_KEYS`]
    /// are accepted, and `truth`, `N` and `estimator` are required.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| invalid(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(invalid(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            let value = v.trim().trim_matches(|c| c == '"' || c == '\'').to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(invalid(format!("key `{key}` given twice")));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let req = |k: &str| get(k).ok_or_else(|| invalid(format!("missing key `{k}`")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| invalid(format!("bad value `{v}` for `{k}`")))
        }
        let freq: f64 = get("freq").map(|v| num("freq", v)).transpose()?.unwrap_or(1.0);
        let truth = Truth::parse(req("truth")?, freq)?;
        let n_list: Vec<usize> = req("N")?
            .trim_matches(|c| c == '[' || c == ']')
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| num("N", s))
            .collect::<Result<_>>()?;
        let estimator: Estimator = req("estimator")?.parse()?;
        let replicates = get("replicates").map(|v| num("replicates", v)).transpose()?.unwrap_or(100);
        let mut cfg = ExperimentConfig::new(truth, estimator, n_list, replicates);
        if let Some(v) = get("ell") {
            cfg.ell = num("ell", v)?;
            cfg.m = (cfg.ell + 1).max(2);
        }
        if let Some(v) = get("m") {
            cfg.m = num("m", v)?;
        }
        if let Some(v) = get("sigma") {
            cfg.sigma = num("sigma", v)?;
        }
        if let Some(v) = get("design") {
            cfg.design = v.parse()?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = num("seed", v)?;
        }
        if let Some(v) = get("width_rule") {
            cfg.width_rule = v.parse()?;
        }
        if let Some(v) = get("alpha") {
            cfg.alpha = num("alpha", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical description covering every field that affects results.
    pub fn canonical(&self) -> String {
        let freq = match self.truth {
            Truth::Sine { freq } => freq,
            _ => 1.0,
        };
        let ns: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        format!(
            "truth={};freq={};ell={};m={};sigma={};design={};N={};replicates={};seed={};estimator={};width_rule={};alpha={};bandwidth={};lambda={};grid={};oracle_width={}",
            self.truth,
            freq,
            self.ell,
            self.m,
            self.sigma,
            self.design,
            ns.join(","),
            self.replicates,
            self.seed,
            self.estimator,
            self.width_rule,
            self.alpha,
            self.bandwidth.map_or("auto".into(), |h| h.to_string()),
            self.lambda_rule.describe(),
            self.grid_size.map_or("auto".into(), |g| g.to_string()),
            self.oracle_width,
        )
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Random streams for one replicate at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    pub seed: u64,
    pub n: usize,
    pub replicate: usize,
}

/// Purposes that get independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Noise = 1,
    Design = 2,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64, n: usize, replicate: usize) -> Self {
        Self { seed, n, replicate }
    }

    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let key = [self.n as u64, self.replicate as u64, purpose as u64]
            .iter()
            .fold(splitmix(self.seed), |acc, &v| splitmix(acc ^ v));
        ChaCha8Rng::seed_from_u64(key)
    }
}

/// Draws `y_i = f(t_i) + e_i` with iid `N(0, sigma^2)` noise.
pub fn generate(truth: &Truth, n: usize, sigma: f64, design: &Design, stream: Stream) -> Result<SampleSet> {
    if n < 2 {
        return Err(invalid("need at least two samples"));
    }
    let t = match design {
        Design::Equispaced => (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect(),
        Design::IidUniform => {
            let mut rng = stream.rng(Purpose::Design);
            let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            t.sort_by(f64::total_cmp);
            t
        }
        Design::Cosine(_) => midpoint_design(n, &design.distribution()?),
    };
    let mut rng = stream.rng(Purpose::Noise);
    let y: Vec<f64> = t
        .iter()
        .map(|&ti| {
            let e: f64 = rng.sample(StandardNormal);
            truth.eval(0, ti) + sigma * e
        })
        .collect();
    SampleSet::new(t, y, (sigma > 0.0).then_some(sigma))
}

/// Constraints from the true change points: `f^(ell+1)` keeps the sign of the
/// truth within `width` of each change point, `f^(ell)` keeps its sign between
/// them, all inside `[width, 1 - width]`. Intervals are halved until the truth
/// satisfies them on the grid of `grid_size` points.
pub fn oracle_constraints(truth: &Truth, ell: usize, width: f64, grid_size: usize) -> Result<ConstraintSpec> {
    let cps: Vec<TrueChangePoint> =
        truth.change_points(ell).into_iter().filter(|c| c.x > width && c.x < 1.0 - width).collect();
    let grid: Vec<f64> = (0..grid_size).map(|j| j as f64 / (grid_size - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&t| truth.eval(0, t)).collect();
    let mut w = width;
    for _ in 0..8 {
        let (lo_region, hi_region) = (width, 1.0 - width);
        let mut rows = Vec::new();
        let mut left = lo_region;
        for (k, c) in cps.iter().enumerate() {
            let lo = (c.x - w).max(if k > 0 { 0.5 * (c.x + cps[k - 1].x) } else { lo_region });
            let hi = (c.x + w).min(cps.get(k + 1).map_or(hi_region, |d| 0.5 * (c.x + d.x)));
            let sign = if c.next_deriv > 0.0 { 1 } else { -1 };
            if lo > left {
                let s = truth.eval(ell, 0.5 * (left + lo));
                rows.push(SignConstraint::new(ell, left, lo, if s >= 0.0 { 1 } else { -1 }));
            }
            rows.push(SignConstraint::new(ell + 1, lo, hi, sign));
            left = hi;
        }
        if hi_region > left {
            let s = truth.eval(ell, 0.5 * (left + hi_region));
            rows.push(SignConstraint::new(ell, left, hi_region, if s >= 0.0 { 1 } else { -1 }));
        }
        let spec = ConstraintSpec::new(rows)?;
        if spec.is_satisfied_by(&values, spec.rounding_tolerance(&values)) {
            return Ok(spec);
        }
        w *= 0.5;
    }
    Err(invalid("the truth does not satisfy its own constraints on this grid"))
}

/// Outcome of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    /// Integrated squared error of `f^(j)` keyed by `j`.
    pub ise: BTreeMap<usize, f64>,
    pub k_hat: Option<f64>,
    /// True change points inside the estimation region.
    pub true_k: Option<f64>,
    /// Predicted mean of `k_hat - true_k`.
    pub predicted_ek: Option<f64>,
    /// Some imposed interval was wrong about the truth.
    pub misspecified: Option<bool>,
    /// Constrained error no larger than unconstrained error in the V-norm;
    /// `None` when the truth is outside the constraint cone.
    pub dominance: Option<bool>,
    /// The fitted `f^(ell)` changed sign more often than its constraints allow.
    pub interval_violation: Option<bool>,
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NRecord {
    pub n: usize,
    pub estimator: Estimator,
    pub replicates: usize,
    pub failures: usize,
    pub mise: BTreeMap<usize, f64>,
    pub mise_se: BTreeMap<usize, f64>,
    pub mean_k_hat: Option<f64>,
    pub sd_k_hat: Option<f64>,
    pub mean_excess_k: Option<f64>,
    pub predicted_ek: Option<f64>,
    pub misspec_rate: Option<f64>,
    pub vnorm_dominance_rate: Option<f64>,
    pub dominance_eligible: usize,
    pub interval_violations: usize,
    pub runtime_secs: f64,
    pub curve_t: Vec<f64>,
    pub curve_mean: Vec<f64>,
    pub curve_lo: Vec<f64>,
    pub curve_hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub config_hash: String,
    pub canonical: String,
    pub records: Vec<NRecord>,
}

/// Boundary margin of the ISE integral for spline-type estimators.
pub const SPLINE_MARGIN: f64 = 0.05;
const ISE_PANELS: usize = 2000;

fn spline_ise(fit: &SplineFit, truth: &Truth, j: usize) -> f64 {
    let pts = stagger_points(fit.grid.len(), j);
    let d = fit.deriv(j);
    simpson(|x| (interp_linear(&pts, d, x) - truth.eval(j, x)).powi(2), SPLINE_MARGIN, 1.0 - SPLINE_MARGIN, ISE_PANELS)
}

/// Sign changes among values larger than `tol` in magnitude.
fn count_sign_changes(values: &[f64], tol: f64) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in values {
        if v.abs() <= tol {
            continue;
        }
        if last != 0.0 && v.signum() != last {
            count += 1;
        }
        last = v.signum();
    }
    count
}

/// Whether every imposed interval agrees with the truth: an odd interval holds
/// exactly one true change point whose direction matches the imposed sign, an
/// even interval holds none and the truth's `f^(ell)` has the imposed sign.
pub fn plans_misspecified(plans: &[IntervalPlan], truth_cps: &[TrueChangePoint], truth: &Truth, ell: usize) -> bool {
    plans.iter().any(|p| {
        let inside: Vec<&TrueChangePoint> = truth_cps.iter().filter(|c| c.x >= p.lo && c.x <= p.hi).collect();
        match p.parity {
            Parity::Odd => inside.len() != 1 || (inside[0].next_deriv > 0.0) != (p.sign > 0),
            Parity::Even => !inside.is_empty() || (truth.eval(ell, 0.5 * (p.lo + p.hi)) > 0.0) != (p.sign > 0),
        }
    })
}

/// Values of `f^(ell)` within the solver's feasibility tolerance of zero are
/// treated as zero, so only sign changes the constraints could have prevented count.
fn interval_violation(fit: &SplineFit, spec: &ConstraintSpec, ell: usize) -> bool {
    let g = fit.grid.len();
    let pts = stagger_points(g, ell);
    let d = fit.deriv(ell);
    let scale = fit.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = ConstraintSpec::solver_tolerance(ell, g, scale);
    spec.intervals().iter().any(|c| {
        let inside: Vec<f64> = pts.iter().zip(d).filter(|(x, _)| **x >= c.lo && **x <= c.hi).map(|(_, v)| *v).collect();
        let allowed = if c.deriv == ell + 1 { 1 } else { 0 };
        c.deriv <= ell + 1 && count_sign_changes(&inside, tol) > allowed
    })
}

fn spline_lambda(rule: LambdaRule, samples: &SampleSet, base: &SplineConfig) -> Result<f64> {
    match rule {
        LambdaRule::Gcv => Ok(gcv_select(samples, base, &default_lambda_grid())?.lambda_star),
        LambdaRule::Power { scale, exponent } => Ok(scale * (samples.len() as f64).powf(exponent)),
    }
}

/// Interval on which curves are summarized; kernel curves without a fixed
/// bandwidth use the widest bandwidth GCV may choose.
fn curve_region(cfg: &ExperimentConfig) -> (f64, f64) {
    match cfg.estimator {
        Estimator::Kernel => {
            let h = cfg.bandwidth.unwrap_or(0.2);
            (h, 1.0 - h)
        }
        _ => (SPLINE_MARGIN, 1.0 - SPLINE_MARGIN),
    }
}

fn curve_grid(cfg: &ExperimentConfig, lo: f64, hi: f64) -> Vec<f64> {
    crate::numeric::linspace(lo, hi, cfg.curve_points.max(2))
}

fn run_replicate(cfg: &ExperimentConfig, n: usize, rep: usize) -> Result<ReplicateOutcome> {
    let samples = generate(&cfg.truth, n, cfg.sigma, &cfg.design, Stream::new(cfg.seed, n, rep))?;
    let dist = cfg.design.distribution()?;
    let fit_sigma = if cfg.sigma > 0.0 { cfg.sigma } else { 1.0 };
    let mut out = ReplicateOutcome {
        ise: BTreeMap::new(),
        k_hat: None,
        true_k: None,
        predicted_ek: None,
        misspecified: None,
        dominance: None,
        interval_violation: None,
        curve: Vec::new(),
    };
    match cfg.estimator {
        Estimator::Kernel => {
            let kernel = make_kernel(cfg.ell)?;
            let h = match cfg.bandwidth {
                Some(h) => h,
                None => kernel_gcv_bandwidth(&samples, &dist, &kernel, &default_bandwidth_grid(n))?.0,
            };
            let points = (((1.0 - 2.0 * h) * KERNEL_GRID_PER_H / h).ceil() as usize + 1).max(64);
            let grid = estimation_grid(h, points);
            let fit = kernel_fit(&samples, &dist, &kernel, h, &grid)?;
            for (j, est) in [(cfg.ell, &fit.values), (cfg.ell + 1, &fit.values_next)] {
                let err: Vec<f64> =
                    grid.iter().zip(est.iter()).map(|(&x, v)| (v - cfg.truth.eval(j, x)).powi(2)).collect();
                out.ise.insert(j, trapezoid(&grid, &err));
            }
            let inside: Vec<TrueChangePoint> =
                cfg.truth.change_points(cfg.ell).into_iter().filter(|c| c.x >= h && c.x <= 1.0 - h).collect();
            out.k_hat = Some(scan_crossings(&fit.grid, &fit.values).len() as f64);
            out.true_k = Some(inside.len() as f64);
            out.predicted_ek = Some(expected_false_changepoints(&inside, &dist, &kernel, h, n, fit_sigma)?);
            let (lo, hi) = curve_region(cfg);
            out.curve = curve_grid(cfg, lo, hi).iter().map(|&x| interp_linear(&fit.grid, &fit.values, x)).collect();
        }
        Estimator::Spline => {
            let base = spline_config(cfg, fit_sigma);
            let lambda = spline_lambda(cfg.lambda_rule, &samples, &base)?;
            let fit = fit_spline(&samples, &base.with_lambda(lambda))?;
            record_spline(&mut out, cfg, &fit);
        }
        Estimator::ConstrainedOracle => {
            let base = spline_config(cfg, fit_sigma);
            let g = base.grid_size.unwrap_or_else(|| default_grid_size(n));
            let spec = oracle_constraints(&cfg.truth, cfg.ell, cfg.oracle_width, g)?;
            let lambda = spline_lambda(cfg.lambda_rule, &samples, &base)?;
            let conf = base.with_lambda(lambda);
            let (fit, _) = fit_constrained(&samples, &conf, &spec)?;
            let free = fit_spline(&samples, &conf)?;
            let truth_grid: Vec<f64> = fit.grid.iter().map(|&t| cfg.truth.eval(0, t)).collect();
            let vc = v_norm(&diff(&truth_grid, &fit.values), &samples, &conf)?;
            let vu = v_norm(&diff(&truth_grid, &free.values), &samples, &conf)?;
            out.dominance = Some(vc <= vu + DOMINANCE_TOL);
            out.misspecified = Some(false);
            out.interval_violation = Some(interval_violation(&fit, &spec, cfg.ell));
            record_spline(&mut out, cfg, &fit);
        }
        Estimator::Pilot => {
            let mut pc = PilotConfig::new(cfg.ell);
            pc.m = cfg.m;
            pc.width_rule = cfg.width_rule;
            pc.alpha = cfg.alpha;
            pc.first_stage_h = cfg.bandwidth;
            pc.grid_size = cfg.grid_size;
            pc.sigma = (cfg.sigma > 0.0).then_some(fit_sigma);
            pc.design = dist.clone();
            if let LambdaRule::Power { scale, exponent } = cfg.lambda_rule {
                pc.lambda = Some(scale * (n as f64).powf(exponent));
            }
            let r = pilot_fit(&samples, &pc)?;
            let cps = cfg.truth.change_points(cfg.ell);
            let imposed: &[IntervalPlan] = if r.diagnostics.constrained { &r.diagnostics.plans } else { &[] };
            out.misspecified = Some(plans_misspecified(imposed, &cps, &cfg.truth, cfg.ell));
            out.k_hat = Some(r.k_hat() as f64);
            out.true_k = Some(cps.len() as f64);
            if r.diagnostics.constrained {
                out.interval_violation = Some(interval_violation(&r.second_stage, &r.constraints, cfg.ell));
                // compare in the centered problem, where the constraints live
                let poly = &r.centering_poly;
                let shift = |t: f64| if poly.is_empty() { 0.0 } else { eval_poly(poly, t) };
                let work_y: Vec<f64> =
                    samples.locations().iter().zip(samples.responses()).map(|(&t, &y)| y - shift(t)).collect();
                let work = samples.with_responses(work_y)?;
                let mut conf = SplineConfig::new(cfg.m, r.diagnostics.lambda_used).with_sigma(r.diagnostics.sigma_used);
                conf.grid_size = cfg.grid_size;
                let free = fit_spline(&work, &conf)?;
                let grid = &r.second_stage.grid;
                let truth_c: Vec<f64> = grid.iter().map(|&t| cfg.truth.eval(0, t) - shift(t)).collect();
                if r.constraints.is_satisfied_by(&truth_c, r.constraints.rounding_tolerance(&truth_c)) {
                    let fit_c: Vec<f64> = r.second_stage.values.iter().zip(grid).map(|(v, &t)| v - shift(t)).collect();
                    let vc = v_norm(&diff(&truth_c, &fit_c), &work, &conf)?;
                    let vu = v_norm(&diff(&truth_c, &free.values), &work, &conf)?;
                    out.dominance = Some(vc <= vu + DOMINANCE_TOL);
                }
            }
            record_spline(&mut out, cfg, &r.second_stage);
        }
    }
    Ok(out)
}

/// Absolute slack allowed in V-norm comparisons.
pub const DOMINANCE_TOL: f64 = 1e-9;
const KERNEL_GRID_PER_H: f64 = 16.0;

fn spline_config(cfg: &ExperimentConfig, sigma: f64) -> SplineConfig {
    let mut c = SplineConfig::new(cfg.m, 1.0).with_sigma(sigma);
    c.grid_size = cfg.grid_size;
    c
}

fn record_spline(out: &mut ReplicateOutcome, cfg: &ExperimentConfig, fit: &SplineFit) {
    for j in 0..cfg.m {
        out.ise.insert(j, spline_ise(fit, &cfg.truth, j));
    }
    out.curve = curve_grid(cfg, SPLINE_MARGIN, 1.0 - SPLINE_MARGIN).iter().map(|&x| fit.eval(x)).collect();
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    compensated_sum(x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])))
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let (m, sd) = crate::numeric::mean_sd(xs);
    (m, if xs.len() > 1 { sd / (xs.len() as f64).sqrt() } else { f64::NAN })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> (Option<f64>, usize) {
    let v: Vec<bool> = flags.flatten().collect();
    if v.is_empty() {
        (None, 0)
    } else {
        (Some(v.iter().filter(|b| **b).count() as f64 / v.len() as f64), v.len())
    }
}

/// Aggregates replicate outcomes in replicate order.
fn aggregate(cfg: &ExperimentConfig, n: usize, outcomes: &[Result<ReplicateOutcome>], runtime: f64) -> NRecord {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = outcomes.len() - ok.len();
    let mut mise = BTreeMap::new();
    let mut mise_se = BTreeMap::new();
    let js: Vec<usize> = ok.first().map(|o| o.ise.keys().copied().collect()).unwrap_or_default();
    for j in js {
        let v: Vec<f64> = ok.iter().filter_map(|o| o.ise.get(&j).copied()).collect();
        let (m, se) = mean_se(&v);
        mise.insert(j, m);
        mise_se.insert(j, se);
    }
    let ks: Vec<f64> = ok.iter().filter_map(|o| o.k_hat).collect();
    let (mean_k_hat, sd_k_hat) = if ks.is_empty() {
        (None, None)
    } else {
        let (m, sd) = crate::numeric::mean_sd(&ks);
        (Some(m), Some(sd))
    };
    let excess: Vec<f64> = ok.iter().filter_map(|o| Some(o.k_hat? - o.true_k?)).collect();
    let mean_excess_k = (!excess.is_empty()).then(|| crate::numeric::mean_sd(&excess).0);
    let pred: Vec<f64> = ok.iter().filter_map(|o| o.predicted_ek).collect();
    let predicted_ek = (!pred.is_empty()).then(|| crate::numeric::mean_sd(&pred).0);
    let (misspec_rate, _) = rate(ok.iter().map(|o| o.misspecified));
    let (vnorm_dominance_rate, dominance_eligible) = rate(ok.iter().map(|o| o.dominance));
    let interval_violations = ok.iter().filter(|o| o.interval_violation == Some(true)).count();
    let (curve_t, curve_mean, curve_lo, curve_hi) = if ok.is_empty() || ok[0].curve.is_empty() {
        (Vec::new(), Vec::new(), Vec::new(), Vec::new())
    } else {
        let len = ok[0].curve.len();
        let (lo, hi) = curve_region(cfg);
        let t = curve_grid(cfg, lo, hi);
        let mut mean = Vec::with_capacity(len);
        let mut q_lo = Vec::with_capacity(len);
        let mut q_hi = Vec::with_capacity(len);
        for i in 0..len {
            let mut col: Vec<f64> = ok.iter().map(|o| o.curve[i]).collect();
            mean.push(compensated_sum(col.iter().copied()) / col.len() as f64);
            col.sort_by(f64::total_cmp);
            q_lo.push(quantile_sorted(&col, 0.025));
            q_hi.push(quantile_sorted(&col, 0.975));
        }
        (t, mean, q_lo, q_hi)
    };
    NRecord {
        n,
        estimator: cfg.estimator,
        replicates: outcomes.len(),
        failures,
        mise,
        mise_se,
        mean_k_hat,
        sd_k_hat,
        mean_excess_k,
        predicted_ek,
        misspec_rate,
        vnorm_dominance_rate,
        dominance_eligible,
        interval_violations,
        runtime_secs: runtime,
        curve_t,
        curve_mean,
        curve_lo,
        curve_hi,
    }
}

/// Runs every replicate at every sample size. Estimator failures are counted
/// in the report, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let start = Instant::now();
        let outcomes: Vec<Result<ReplicateOutcome>> =
            (0..cfg.replicates).into_par_iter().map(|rep| run_replicate(cfg, n, rep)).collect();
        records.push(aggregate(cfg, n, &outcomes, start.elapsed().as_secs_f64()));
    }
    Ok(SimulationReport { config_hash: cfg.hash(), canonical: cfg.canonical(), records })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.10e}"))
}

impl SimulationReport {
    /// Derivative orders with an ISE column.
    pub fn orders(&self) -> Vec<usize> {
        let mut js: Vec<usize> = self.records.iter().flat_map(|r| r.mise.keys().copied()).collect();
        js.sort_unstable();
        js.dedup();
        js
    }

    /// CSV with a `# config_hash=...` manifest line. Runtimes are left out so
    /// that identical configurations give identical bytes.
    pub fn to_csv(&self) -> String {
        let js = self.orders();
        let mut s = format!("# config_hash={} {}\n", self.config_hash, self.canonical);
        s.push_str("N,estimator,replicates,failures");
        for j in &js {
            let _ = write!(s, ",mise_{j},mise_se_{j}");
        }
        s.push_str(",mean_K_hat,sd_K_hat,mean_excess_K,predicted_EK,misspec_rate,vnorm_dominance_rate,dominance_eligible,interval_violations\n");
        for r in &self.records {
            let _ = write!(s, "{},{},{},{}", r.n, r.estimator, r.replicates, r.failures);
            for j in &js {
                let _ = write!(s, ",{},{}", opt(r.mise.get(j).copied()), opt(r.mise_se.get(j).copied()));
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{},{},{},{}",
                opt(r.mean_k_hat),
                opt(r.sd_k_hat),
                opt(r.mean_excess_k),
                opt(r.predicted_ek),
                opt(r.misspec_rate),
                opt(r.vnorm_dominance_rate),
                r.dominance_eligible,
                r.interval_violations
            );
        }
        s
    }

    /// `N,t,fhat_mean,fhat_lo,fhat_hi` with pointwise 2.5% and 97.5% quantiles.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("N,t,fhat_mean,fhat_lo,fhat_hi\n");
        for r in &self.records {
            for i in 0..r.curve_t.len() {
                let _ = writeln!(
                    s,
                    "{},{:.6},{:.10e},{:.10e},{:.10e}",
                    r.n, r.curve_t[i], r.curve_mean[i], r.curve_lo[i], r.curve_hi[i]
                );
            }
        }
        s
    }
}

/// Least-squares slope of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
}

/// Log-log slope and its standard error from `(x, y)` pairs.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 4 {
        return Err(invalid("a rate fit needs at least four distinct sample sizes"));
    }
    if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(invalid("rate fit needs positive values"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(RateFit { slope, stderr })
}

/// Rate at which the mean ISE of `f^(j)` decays with `N`.
pub fn mise_rate(report: &SimulationReport, j: usize) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = report.records.iter().filter_map(|r| r.mise.get(&j).map(|&m| (r.n as f64, m))).collect();
    log_log_slope(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let truths = [
            Truth::Sine { freq: 1.5 },
            Truth::Cubic,
            Truth::PiecewisePoly { breaks: DEFAULT_BREAKS.to_vec() },
            Truth::Logistic { rate: DEFAULT_LOGISTIC_RATE },
        ];
        let h = 1e-5;
        for tr in &truths {
            let top = tr.max_deriv().min(4);
            for j in 0..top {
                for &t in &[0.13, 0.37, 0.61, 0.88] {
                    let fd = (tr.eval(j, t + h) - tr.eval(j, t - h)) / (2.0 * h);
                    let exact = tr.eval(j + 1, t);
                    assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "{tr:?} j={j} t={t}");
                }
            }
        }
    }

    #[test]
    fn change_points_of_known_truths() {
        let s = Truth::Sine { freq: 1.0 }.change_points(1);
        assert_eq!(s.len(), 2);
        assert!((s[0].x - 0.25).abs() < 1e-12 && (s[1].x - 0.75).abs() < 1e-12);
        assert!(s[0].next_deriv < 0.0 && s[1].next_deriv > 0.0);
        let c = Truth::Cubic.change_points(1);
        let r = (1.0f64 / 30.0).sqrt();
        assert!((c[0].x - (0.5 - r)).abs() < 1e-12 && (c[1].x - (0.5 + r)).abs() < 1e-12);
        let l = Truth::Logistic { rate: 10.0 }.change_points(2);
        assert_eq!(l.len(), 1);
        assert!((l[0].x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noiseless_generation_is_exact_and_equispaced() {
        let tr = Truth::Sine { freq: 1.0 };
        let s = generate(&tr, 10, 0.0, &Design::Equispaced, Stream::new(3, 10, 0)).unwrap();
        for (i, (&t, &y)) in s.locations().iter().zip(s.responses()).enumerate() {
            assert_eq!(t, (i as f64 + 0.5) / 10.0);
            assert_eq!(y, tr.eval(0, t));
        }
    }

    #[test]
    fn streams_are_keyed_and_reproducible() {
        let tr = Truth::Cubic;
        let a = generate(&tr, 50, 0.1, &Design::IidUniform, Stream::new(7, 50, 3)).unwrap();
        let b = generate(&tr, 50, 0.1, &Design::IidUniform, Stream::new(7, 50, 3)).unwrap();
        let c = generate(&tr, 50, 0.1, &Design::IidUniform, Stream::new(7, 50, 4)).unwrap();
        assert_eq!(a.responses(), b.responses());
        assert_ne!(a.responses(), c.responses());
    }

    #[test]
    fn noise_moments() {
        let n = 1_000_000;
        let sigma = 0.7;
        let zero = Truth::PiecewisePoly { breaks: vec![] };
        let s = generate(&zero, n, sigma, &Design::Equispaced, Stream::new(11, n, 0)).unwrap();
        let e: Vec<f64> = s.locations().iter().zip(s.responses()).map(|(&t, &y)| y + t).collect();
        let (mean, sd) = crate::numeric::mean_sd(&e);
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt());
        assert!((sd * sd / (sigma * sigma) - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_power_law_slope() {
        let pts: Vec<(f64, f64)> =
            [250.0, 500.0, 1000.0, 2000.0, 4000.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.8))).collect();
        let r = log_log_slope(&pts).unwrap();
        assert!((r.slope + 0.8).abs() < 1e-10);
        assert!(log_log_slope(&pts[..3]).is_err());
    }

    #[test]
    fn config_round_trip_and_rejections() {
        let text = "truth = sine\nfreq = 1\nell = 1\nm = 2\nsigma = 0.3 # noise\ndesign = equispaced\nN = [500, 1000]\nreplicates = 4\nseed = 9\nestimator = pilot\nwidth_rule = sigma:3\nalpha = 0.05\n";
        let cfg = ExperimentConfig::from_kv(text).unwrap();
        assert_eq!(cfg.n_list, vec![500, 1000]);
        assert_eq!(cfg.estimator, Estimator::Pilot);
        assert_eq!(cfg.hash(), ExperimentConfig::from_kv(text).unwrap().hash());
        assert!(ExperimentConfig::from_kv("truth = sine\nN = 10\nestimator = spline\nlambda = 3\n").is_err());
        assert!(matches!(
            ExperimentConfig::from_kv("truth = wave\nN = 10\nestimator = spline\n"),
            Err(Error::UnknownTruth(_))
        ));
        assert!(ExperimentConfig::from_kv("truth = sine\nN = 100, 50\nestimator = spline\n").is_err());
    }

    #[test]
    fn oracle_constraints_contain_the_truth() {
        for tr in [Truth::Sine { freq: 1.0 }, Truth::Cubic, Truth::PiecewisePoly { breaks: DEFAULT_BREAKS.to_vec() }] {
            let spec = oracle_constraints(&tr, 1, 0.05, 512).unwrap();
            let g: Vec<f64> = (0..512).map(|j| tr.eval(0, j as f64 / 511.0)).collect();
            assert!(spec.is_satisfied_by(&g, 0.0));
        }
    }

    #[test]
    fn noiseless_spline_is_near_interpolation() {
        let mut cfg = ExperimentConfig::new(Truth::Sine { freq: 1.0 }, Estimator::Spline, vec![400], 1);
        cfg.sigma = 0.0;
        cfg.grid_size = Some(2048);
        cfg.lambda_rule = LambdaRule::Power { scale: 1e-10, exponent: 0.0 };
        let rep = run_experiment(&cfg).unwrap();
        assert_eq!(rep.records[0].failures, 0);
        assert!(rep.records[0].mise[&0] < 1e-6, "{}", rep.records[0].mise[&0]);
    }

    #[test]
    fn reports_are_reproducible() {
        let mut cfg = ExperimentConfig::new(Truth::Sine { freq: 1.0 }, Estimator::Spline, vec![100, 200], 3);
        cfg.lambda_rule = LambdaRule::Power { scale: 1e-3, exponent: -0.8 };
        let a = run_experiment(&cfg).unwrap().to_csv();
        let b = run_experiment(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# config_hash="));
    }
}
