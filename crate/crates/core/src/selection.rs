//! Discrepancy criteria and model search over the number of change points.

use rayon::prelude::*;

use crate::changepoints::{ChangePointReport, Parity};
use crate::constrained::{ConstraintSpec, SignConstraint};
use crate::error::{invalid, Result};
use crate::kernels::KernelFit;
use crate::numeric::{compensated_sum, interp_linear};
use crate::pilot::{first_stage, plan_intervals, prepare, second_stage_with, IntervalPlan, PilotConfig, PilotResult};
use crate::sample::SampleSet;
use crate::spline::{gcv_select, SplineConfig, SplineFit};

/// Inputs shared by the three criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionInput {
    /// Residual sum of squares divided by `N sigma^2`.
    pub sigma_hat2: f64,
    pub p: f64,
    pub k: usize,
    pub n: usize,
    pub gamma1: f64,
    pub gamma2: f64,
}

pub const DEFAULT_GAMMA1: f64 = 1.0;
pub const DEFAULT_GAMMA2: f64 = 2.0;

impl CriterionInput {
    pub fn new(sigma_hat2: f64, p: f64, k: usize, n: usize) -> Self {
        Self { sigma_hat2, p, k, n, gamma1: DEFAULT_GAMMA1, gamma2: DEFAULT_GAMMA2 }
    }

    pub fn with_gammas(mut self, gamma1: f64, gamma2: f64) -> Self {
        self.gamma1 = gamma1;
        self.gamma2 = gamma2;
        self
    }

    /// Builds the input from observations, fitted values and the noise level.
    pub fn from_residuals(y: &[f64], fitted: &[f64], sigma: f64, p: f64, k: usize) -> Self {
        let n = y.len();
        let rss = compensated_sum(y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)));
        Self::new(rss / (n as f64 * sigma * sigma), p, k, n)
    }

    fn denominator(&self) -> f64 {
        let r = 1.0 - self.gamma1 * self.p / self.n as f64;
        r * r
    }

    fn admissible(&self) -> bool {
        self.gamma1 * self.p < self.n as f64
    }
}

/// Generalized cross-validation form; `+inf` once `gamma1 p >= N`.
pub fn criterion_di(input: &CriterionInput) -> f64 {
    if !input.admissible() {
        return f64::INFINITY;
    }
    input.sigma_hat2 / input.denominator()
}

/// Log-penalized form.
pub fn criterion_db(input: &CriterionInput) -> f64 {
    let n = input.n as f64;
    input.sigma_hat2 * (1.0 + input.gamma2 * input.p * n.ln() / n)
}

/// Change-point penalized criterion; reduces to [`criterion_di`] at `K = 0`.
pub fn criterion_pcic(input: &CriterionInput) -> f64 {
    if !input.admissible() {
        return f64::INFINITY;
    }
    let n = input.n as f64;
    if input.k == 0 {
        return criterion_di(input);
    }
    input.sigma_hat2 * (1.0 + input.gamma2 * input.k as f64 * n.ln() / n) / input.denominator()
}

/// A fitted model with a stated number of change points.
#[derive(Debug, Clone)]
pub struct ModelCandidate {
    pub k: usize,
    pub fit: SplineFit,
    /// The pilot run behind the fit, when it came from [`model_candidates`].
    pub pilot: Option<PilotResult>,
    /// Estimated locations of the kept change points.
    pub locations: Vec<f64>,
}

impl ModelCandidate {
    pub fn from_fit(k: usize, fit: SplineFit) -> Self {
        Self { k, fit, pilot: None, locations: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub k: usize,
    pub p: f64,
    pub sigma_hat2: f64,
    pub lambda: f64,
    pub pcic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: usize,
    pub table: Vec<ScoreRow>,
}

/// Scores candidates by PCIC and returns the minimizer. Ties go to the smaller
/// `K`, then to the larger smoothing parameter.
pub fn select_model(samples: &SampleSet, candidates: &[ModelCandidate], gamma1: f64, gamma2: f64) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(invalid("model selection needs at least one candidate"));
    }
    let y = samples.responses();
    let mut table = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.fit.fitted.len() != y.len() {
            return Err(invalid("candidate was fitted on a different sample"));
        }
        let input =
            CriterionInput::from_residuals(y, &c.fit.fitted, c.fit.sigma, c.fit.p_eff, c.k).with_gammas(gamma1, gamma2);
        table.push(ScoreRow {
            k: c.k,
            p: c.fit.p_eff,
            sigma_hat2: input.sigma_hat2,
            lambda: c.fit.lambda,
            pcic: criterion_pcic(&input),
        });
    }
    let best = (0..table.len())
        .min_by(|&a, &b| {
            let (ra, rb) = (&table[a], &table[b]);
            ra.pcic.total_cmp(&rb.pcic).then(ra.k.cmp(&rb.k)).then(rb.lambda.total_cmp(&ra.lambda)).then(a.cmp(&b))
        })
        .expect("nonempty");
    Ok(Selection { best, table })
}

const SHRINK: f64 = 0.8;
const MAX_SHRINKS: usize = 12;

struct Source {
    fit: KernelFit,
    report: ChangePointReport,
    h: f64,
}

/// Strength of an odd cluster: slope of `f^(l)` at the crossing per unit of
/// location uncertainty.
fn strength(plan: &IntervalPlan, fit: &KernelFit) -> f64 {
    let slope = interp_linear(&fit.grid, &fit.values_next, plan.x_hat).abs();
    if plan.sigma_if > 0.0 {
        slope / plan.sigma_if
    } else {
        slope
    }
}

/// The cone of functions whose `l`-th derivative changes sign exactly at the
/// kept intervals, alternating in between.
fn alternating_spec(
    kept: &[IntervalPlan],
    fit: &KernelFit,
    ell: usize,
    h: f64,
) -> Result<(ConstraintSpec, Vec<IntervalPlan>)> {
    let (region_lo, region_hi) = (h, 1.0 - h);
    let mut plans: Vec<IntervalPlan> = kept.to_vec();
    if plans.is_empty() {
        let total: f64 = fit.values.iter().sum();
        let sign = if total < 0.0 { -1 } else { 1 };
        let spec = ConstraintSpec::new(vec![SignConstraint::new(ell, region_lo, region_hi, sign)])?;
        return Ok((spec, plans));
    }
    // the sign pattern that agrees best with the data, weighted by strength
    let agreement: f64 = plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let alt = if i % 2 == 0 { 1.0 } else { -1.0 };
            alt * p.sign as f64 * strength(p, fit)
        })
        .sum();
    let s0: i8 = if agreement < 0.0 { -1 } else { 1 };
    for (i, p) in plans.iter_mut().enumerate() {
        p.sign = if i % 2 == 0 { s0 } else { -s0 };
    }
    let mut rows: Vec<SignConstraint> =
        plans.iter().map(|p| SignConstraint::new(p.deriv, p.lo, p.hi, p.sign)).collect();
    let mut left = region_lo;
    for p in &plans {
        if p.lo > left {
            rows.push(SignConstraint::new(ell, left, p.lo, -p.sign));
        }
        left = p.hi;
    }
    let last = plans.last().expect("nonempty");
    if region_hi > left {
        rows.push(SignConstraint::new(ell, left, region_hi, last.sign));
    }
    Ok((ConstraintSpec::new(rows)?, plans))
}

/// Candidate fits for `K = 0, ..., kmax` change points.
///
/// The first stage runs once. Candidates with fewer change points than it
/// found drop the weakest clusters; candidates with more rerun the first
/// stage at geometrically smaller bandwidths until enough clusters appear,
/// and are omitted when none do. Every candidate is fitted in the cone where
/// `f^(l)` changes sign only at its kept intervals, with one smoothing
/// parameter chosen by GCV for all of them.
pub fn model_candidates(samples: &SampleSet, config: &PilotConfig, kmax: usize) -> Result<Vec<ModelCandidate>> {
    let prep = prepare(samples, config)?;
    let lambda = match config.lambda {
        Some(l) => l,
        None => {
            let mut c = SplineConfig::new(config.m, 1.0).with_sigma(prep.sigma);
            c.grid_size = config.grid_size;
            gcv_select(&prep.work, &c, &config.lambda_grid)?.lambda_star
        }
    };
    let mut fixed = config.clone();
    fixed.lambda = Some(lambda);

    let (fit, report) = first_stage(&prep.work, config, prep.h, prep.sigma)?;
    let mut sources = vec![Source { fit, report, h: prep.h }];
    let mut h = prep.h;
    for _ in 0..MAX_SHRINKS {
        if sources.last().expect("nonempty").report.k_hat() >= kmax {
            break;
        }
        h *= SHRINK;
        match first_stage(&prep.work, config, h, prep.sigma) {
            Ok((fit, report)) => sources.push(Source { fit, report, h }),
            Err(_) => break,
        }
    }

    let n = samples.len();
    let jobs: Vec<(usize, usize)> =
        (0..=kmax).filter_map(|k| sources.iter().position(|s| s.report.k_hat() >= k).map(|i| (k, i))).collect();
    jobs.into_par_iter()
        .map(|(k, i)| {
            let src = &sources[i];
            let mut odd: Vec<IntervalPlan> = plan_intervals(&src.report, &src.fit, config.width_rule, src.h, n)
                .into_iter()
                .filter(|p| p.parity == Parity::Odd)
                .collect();
            odd.sort_by(|a, b| strength(b, &src.fit).total_cmp(&strength(a, &src.fit)));
            odd.truncate(k);
            odd.sort_by(|a, b| a.x_hat.total_cmp(&b.x_hat));
            let (spec, plans) = alternating_spec(&odd, &src.fit, config.ell, src.h)?;
            let locations = plans.iter().map(|p| p.x_hat).collect();
            let result = second_stage_with(
                samples,
                &prep,
                &fixed,
                src.fit.clone(),
                src.report.clone(),
                spec,
                plans,
                src.h,
                Vec::new(),
            )?;
            Ok(ModelCandidate { k, fit: result.second_stage.clone(), pilot: Some(result), locations })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{fit_spline, SplineConfig};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn arithmetic_examples() {
        let base = CriterionInput::new(1.0, 10.0, 0, 100).with_gammas(1.0, 1.0);
        assert!(close(criterion_di(&base), 1.0 / 0.81, 1e-12));
        assert!(close(criterion_di(&base), 1.23457, 5e-6));
        assert!(close(criterion_db(&base), 1.0 + 10.0 * 100f64.ln() / 100.0, 1e-12));
        assert!(close(criterion_db(&base), 1.46052, 5e-6));
        let two = CriterionInput::new(1.0, 10.0, 2, 100);
        assert!(close(criterion_pcic(&two), (1.0 + 4.0 * 100f64.ln() / 100.0) / 0.81, 1e-12));
        assert!(close(criterion_pcic(&two), 1.46198, 5e-6));
    }

    #[test]
    fn zero_parameters_and_zero_change_points_reduce() {
        let x = CriterionInput::new(0.7, 0.0, 0, 50);
        assert_eq!(criterion_di(&x), 0.7);
        assert_eq!(criterion_db(&x), 0.7);
        let y = CriterionInput::new(0.7, 12.0, 0, 50).with_gammas(1.0, 9.0);
        assert_eq!(criterion_pcic(&y), criterion_di(&y));
    }

    #[test]
    fn saturated_models_score_infinity() {
        let x = CriterionInput::new(0.5, 100.0, 1, 100);
        assert_eq!(criterion_di(&x), f64::INFINITY);
        assert_eq!(criterion_pcic(&x), f64::INFINITY);
        assert!(criterion_db(&x).is_finite());
    }

    #[test]
    fn criteria_ignore_a_common_rescaling() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 * 0.3).collect();
        let f: Vec<f64> = (0..40).map(|i| i as f64 * 0.08).collect();
        let a = CriterionInput::from_residuals(&y, &f, 0.4, 6.5, 2);
        let c = 37.5;
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let fs: Vec<f64> = f.iter().map(|v| v * c).collect();
        let b = CriterionInput::from_residuals(&ys, &fs, 0.4 * c, 6.5, 2);
        for crit in [criterion_di, criterion_db, criterion_pcic] {
            let (u, v) = (crit(&a), crit(&b));
            assert!((u - v).abs() <= 1e-12 * u.abs());
        }
    }

    fn toy_candidates() -> (SampleSet, Vec<ModelCandidate>) {
        let t: Vec<f64> = (0..60).map(|i| (i as f64 + 0.5) / 60.0).collect();
        let y: Vec<f64> = t.iter().map(|x| (6.0 * x).sin() + 0.1 * ((x * 977.0).sin())).collect();
        let s = SampleSet::new(t, y, Some(0.1)).unwrap();
        let fit = fit_spline(&s, &SplineConfig::new(2, 1e-4).with_grid(128)).unwrap();
        (s, vec![ModelCandidate::from_fit(1, fit.clone()), ModelCandidate::from_fit(2, fit)])
    }

    #[test]
    fn equal_fits_prefer_fewer_change_points() {
        let (s, c) = toy_candidates();
        assert_eq!(select_model(&s, &c[..1], 1.0, 2.0).unwrap().best, 0);
        let sel = select_model(&s, &c, 1.0, 2.0).unwrap();
        assert_eq!(sel.best, 0);
        assert!(sel.table[1].pcic > sel.table[0].pcic);
        // appending a worse candidate keeps the winner
        let mut more = c.clone();
        more.push(ModelCandidate::from_fit(5, c[0].fit.clone()));
        assert_eq!(select_model(&s, &more, 1.0, 2.0).unwrap().best, 0);
    }

    #[test]
    fn ties_go_to_larger_lambda() {
        let (s, c) = toy_candidates();
        let mut a = c[0].clone();
        a.fit.lambda = 1.0;
        let mut b = c[0].clone();
        b.fit.lambda = 2.0;
        assert_eq!(select_model(&s, &[a, b], 1.0, 2.0).unwrap().best, 1);
    }

    #[test]
    fn empty_candidate_list_is_rejected() {
        let (s, _) = toy_candidates();
        assert!(select_model(&s, &[], 1.0, 2.0).is_err());
    }

    #[test]
    fn candidates_cover_each_count_in_order() {
        let n = 600;
        let t: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let noise: Vec<f64> = (0..n).map(|i| 0.05 * (((i * 2654435761usize) % 1000) as f64 / 500.0 - 1.0)).collect();
        let y: Vec<f64> = t.iter().zip(&noise).map(|(x, e)| (2.0 * std::f64::consts::PI * x).sin() + e).collect();
        let s = SampleSet::new(t, y, Some(0.03)).unwrap();
        let mut cfg = PilotConfig::new(2);
        cfg.m = 3;
        let cands = model_candidates(&s, &cfg, 2).unwrap();
        assert!(!cands.is_empty());
        for (i, c) in cands.iter().enumerate() {
            assert_eq!(c.k, i);
            assert_eq!(c.locations.len(), c.k);
        }
        let lambdas: Vec<f64> = cands.iter().map(|c| c.fit.lambda).collect();
        assert!(lambdas.windows(2).all(|w| w[0] == w[1]));
    }
}
