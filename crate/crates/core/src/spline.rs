//! Grid-discretized smoothing splines.
//!
//! A curve is represented by its values on `G` equispaced points of `[0, 1]`.
//! The roughness penalty uses the `m`-th forward difference divided by
//! `Delta^m`, located at staggered centers and integrated with trapezoid-like
//! weights that sum to one. Data enter through linear interpolation from the
//! grid, so the whole objective is a banded quadratic form in the grid values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::banded::{BandedFactor, BandedSym, GivensAccumulator};
use crate::error::{invalid, Error, Result};
use crate::numeric::{binomial, compensated_sum, interp_linear};
use crate::sample::SampleSet;

/// How the hat-matrix trace is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceMethod {
    /// Selected inversion of the banded factor.
    Exact,
    /// Randomized Rademacher probes.
    Hutchinson { probes: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineConfig {
    pub m: usize,
    pub lambda: f64,
    /// Defaults to [`default_grid_size`] of the sample size.
    pub grid_size: Option<usize>,
    /// Defaults to the sample's known noise level, then to the difference estimate.
    pub sigma: Option<f64>,
    pub trace: TraceMethod,
}

impl SplineConfig {
    pub fn new(m: usize, lambda: f64) -> Self {
        Self { m, lambda, grid_size: None, sigma: None, trace: TraceMethod::Exact }
    }

    pub fn with_grid(mut self, g: usize) -> Self {
        self.grid_size = Some(g);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_trace(mut self, trace: TraceMethod) -> Self {
        self.trace = trace;
        self
    }
}

/// `max(256, 2N)` capped at 4096.
pub fn default_grid_size(n: usize) -> usize {
    (2 * n).clamp(256, 4096)
}

/// Log-spaced smoothing parameters, four per decade from `1e-10` to `1e4`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=56).map(|k| 10f64.powf(-10.0 + k as f64 * 0.25)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    derivs: Vec<Vec<f64>>,
    /// Fitted values at the data locations.
    pub fitted: Vec<f64>,
    pub p_eff: f64,
    pub rss: f64,
    pub vp_value: f64,
    pub lambda: f64,
    pub m: usize,
    pub sigma: f64,
    /// Indices of binding constraints; empty for unconstrained fits.
    pub active: Vec<usize>,
}

impl SplineFit {
    /// `j`-th scaled difference of the grid values, `j <= m`; see [`stagger_points`].
    pub fn deriv(&self, j: usize) -> &[f64] {
        &self.derivs[j]
    }

    pub fn deriv_points(&self, j: usize) -> Vec<f64> {
        stagger_points(self.grid.len(), j)
    }

    pub fn eval(&self, x: f64) -> f64 {
        interp_linear(&self.grid, &self.values, x)
    }

    pub fn eval_deriv(&self, j: usize, x: f64) -> f64 {
        interp_linear(&self.deriv_points(j), &self.derivs[j], x)
    }

    /// Adds a polynomial (monomial coefficients in `t`) to the fitted curve.
    ///
    /// Residuals are unchanged when the same polynomial is added back to the
    /// responses; `vp_value` keeps the objective of the shifted problem.
    pub fn add_polynomial(&mut self, coeffs: &[f64], locations: &[f64]) {
        let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        for (v, &x) in self.values.iter_mut().zip(&self.grid) {
            *v += p(x);
        }
        for (v, &x) in self.fitted.iter_mut().zip(locations) {
            *v += p(x);
        }
        self.derivs = (0..=self.m).map(|j| grid_diff(&self.values, j)).collect();
    }

    /// Residual variance estimate `RSS / N`.
    pub fn sigma2_hat(&self) -> f64 {
        self.rss / self.fitted.len() as f64
    }
}

/// Centers of the `j`-th differences on a grid of `g` points.
pub fn stagger_points(g: usize, j: usize) -> Vec<f64> {
    let delta = 1.0 / (g - 1) as f64;
    (0..g - j).map(|k| (k as f64 + j as f64 / 2.0) * delta).collect()
}

/// Scaled forward differences of order `j`.
pub fn grid_diff(values: &[f64], j: usize) -> Vec<f64> {
    let delta = 1.0 / (values.len() - 1) as f64;
    let mut d = values.to_vec();
    for _ in 0..j {
        d = d.windows(2).map(|w| (w[1] - w[0]) / delta).collect();
    }
    d
}

/// Coefficients of one row of the `j`-th scaled difference operator.
pub fn diff_stencil(j: usize, delta: f64) -> Vec<f64> {
    let scale = delta.powi(j as i32);
    (0..=j)
        .map(|i| {
            let sign = if (j - i).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * binomial(j, i) / scale
        })
        .collect()
}

/// Penalty quadrature weights for the `G - m` staggered points.
fn quad_weights(g: usize, m: usize) -> Vec<f64> {
    let delta = 1.0 / (g - 1) as f64;
    let mut w = vec![delta; g - m];
    let end = (1 + m) as f64 * delta / 2.0;
    w[0] = end;
    let last = w.len() - 1;
    w[last] = end;
    w
}

/// The discretized objective for one data set and configuration.
///
/// `VP(f) = (1/2) f^T Q f - b^T f + const` with `Q = R^T R`.
#[derive(Debug, Clone)]
pub struct SplineSystem {
    pub m: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub grid: Vec<f64>,
    delta: f64,
    quad_w: Vec<f64>,
    /// Left grid cell and left interpolation weight per datum.
    cells: Vec<(usize, f64)>,
    y: Vec<f64>,
    data_weight: f64,
    q: BandedSym,
    factor: BandedFactor,
    b: Vec<f64>,
    unconstrained: Vec<f64>,
    trace: TraceMethod,
}

impl SplineSystem {
    pub fn new(samples: &SampleSet, config: &SplineConfig) -> Result<Self> {
        let m = config.m;
        let n = samples.len();
        if m == 0 {
            return Err(invalid("penalty order must be at least 1"));
        }
        if config.lambda == 0.0 {
            return Err(Error::Conditioning("smoothing parameter 0 is refused".into()));
        }
        if !(config.lambda > 0.0 && config.lambda.is_finite()) {
            return Err(invalid("smoothing parameter must be positive and finite"));
        }
        if n < m + 1 {
            return Err(invalid(format!("need at least {} samples for m = {m}", m + 1)));
        }
        let g = config.grid_size.unwrap_or_else(|| default_grid_size(n));
        if g < 4 * m || g < m + 2 {
            return Err(Error::Conditioning(format!("grid of {g} points is too small for m = {m}")));
        }
        let sigma = config.sigma.or(samples.known_sigma()).unwrap_or_else(|| samples.noise_sd());
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("noise level estimate is not positive; supply sigma"));
        }
        let delta = 1.0 / (g - 1) as f64;
        let grid: Vec<f64> = (0..g).map(|j| j as f64 * delta).collect();
        let cells: Vec<(usize, f64)> = samples
            .locations()
            .iter()
            .map(|&t| {
                let j = ((t / delta).floor() as usize).min(g - 2);
                (j, 1.0 - (t - grid[j]) / delta)
            })
            .collect();
        let y = samples.responses().to_vec();
        let data_weight = 2.0 / (n as f64 * sigma * sigma);
        let quad_w = quad_weights(g, m);
        let stencil = diff_stencil(m, delta);
        let bw = m.max(1);

        let mut q = BandedSym::zeros(g, bw);
        let mut b = vec![0.0; g];
        let mut acc = GivensAccumulator::new(g, bw);
        let sw = data_weight.sqrt();
        // rows enter in order of their first column so rotations stay local
        let mut next = 0;
        for k in 0..g {
            if let Some(&w) = quad_w.get(k) {
                q.add_outer(k, &stencil, config.lambda * w);
                acc.add_row(k, &stencil, (config.lambda * w).sqrt())?;
            }
            while next < cells.len() && cells[next].0 == k {
                let (j, w) = cells[next];
                let yi = y[next];
                let row = [w, 1.0 - w];
                q.add_outer(j, &row, data_weight);
                b[j] += data_weight * w * yi;
                b[j + 1] += data_weight * (1.0 - w) * yi;
                acc.add_row_rhs(j, &row, sw, yi)?;
                next += 1;
            }
        }
        let (factor, qtb) = acc.finish_with_rhs()?;
        let unconstrained = factor.back_solve(&qtb);
        if unconstrained.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning("non-finite solution".into()));
        }
        Ok(Self {
            m,
            lambda: config.lambda,
            sigma,
            grid,
            delta,
            quad_w,
            cells,
            y,
            data_weight,
            q,
            factor,
            b,
            unconstrained,
            trace: config.trace,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid.len()
    }

    pub fn spacing(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn hessian(&self) -> &BandedSym {
        &self.q
    }

    pub fn factor(&self) -> &BandedFactor {
        &self.factor
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.b
    }

    pub fn unconstrained_solution(&self) -> &[f64] {
        &self.unconstrained
    }

    /// Grid values interpolated to the data locations.
    pub fn interpolate(&self, f: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&(j, w)| w * f[j] + (1.0 - w) * f[j + 1]).collect()
    }

    /// Penalty term `(lambda/2) sum_k w_k (D_m f)_k^2`.
    pub fn penalty(&self, f: &[f64]) -> f64 {
        let d = grid_diff(f, self.m);
        0.5 * self.lambda * compensated_sum(d.iter().zip(&self.quad_w).map(|(v, w)| w * v * v))
    }

    /// The attained objective `VP(f)`.
    pub fn objective(&self, f: &[f64]) -> f64 {
        let fitted = self.interpolate(f);
        let rss = compensated_sum(fitted.iter().zip(&self.y).map(|(a, b)| (a - b).powi(2)));
        self.penalty(f) + 0.5 * self.data_weight * rss
    }

    /// `||g||_V^2`: same penalty, data term without responses.
    pub fn v_norm(&self, g: &[f64]) -> f64 {
        let s = self.interpolate(g);
        self.penalty(g) + 0.5 * self.data_weight * compensated_sum(s.iter().map(|v| v * v))
    }

    /// Trace of the data-space influence matrix of the unconstrained fit.
    pub fn trace_unconstrained(&self) -> f64 {
        match self.trace {
            TraceMethod::Exact => self.trace_exact(),
            TraceMethod::Hutchinson { probes, seed } => self.trace_hutchinson(probes, seed),
        }
    }

    fn trace_exact(&self) -> f64 {
        let band = self.factor.inverse_band();
        let s = compensated_sum(self.cells.iter().map(|&(j, w)| {
            let v = 1.0 - w;
            w * w * band[j][0] + 2.0 * w * v * band[j][1] + v * v * band[j + 1][0]
        }));
        self.data_weight * s
    }

    fn trace_hutchinson(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let g = self.grid_size();
        let mut total = 0.0;
        for _ in 0..probes.max(1) {
            let v: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut st = vec![0.0; g];
            for (&(j, w), &vi) in self.cells.iter().zip(&v) {
                st[j] += w * vi;
                st[j + 1] += (1.0 - w) * vi;
            }
            self.factor.solve_in_place(&mut st);
            let av = self.interpolate(&st);
            total += self.data_weight * av.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        }
        total / probes.max(1) as f64
    }

    /// Influence of the data-term weight on a grid direction: `c * S^T S`
    /// restricted quadratic form used by the constrained trace correction.
    /// Weight `2 / (N sigma^2)` of the data term.
    pub(crate) fn data_weight(&self) -> f64 {
        self.data_weight
    }

    /// Packages grid values into a fit.
    pub fn make_fit(&self, values: Vec<f64>, p_eff: f64, active: Vec<usize>) -> SplineFit {
        let fitted = self.interpolate(&values);
        let rss = compensated_sum(fitted.iter().zip(&self.y).map(|(a, b)| (a - b).powi(2)));
        let vp_value = self.objective(&values);
        let derivs = (0..=self.m).map(|j| grid_diff(&values, j)).collect();
        SplineFit {
            grid: self.grid.clone(),
            values,
            derivs,
            fitted,
            p_eff,
            rss,
            vp_value,
            lambda: self.lambda,
            m: self.m,
            sigma: self.sigma,
            active,
        }
    }

    pub fn unconstrained_fit(&self) -> SplineFit {
        self.make_fit(self.unconstrained.clone(), self.trace_unconstrained(), Vec::new())
    }
}

/// Unconstrained minimizer of the discretized penalized least-squares objective.
pub fn fit_spline(samples: &SampleSet, config: &SplineConfig) -> Result<SplineFit> {
    Ok(SplineSystem::new(samples, config)?.unconstrained_fit())
}

/// `||g||_V^2` for a grid function on the configuration's standard grid.
pub fn v_norm(g: &[f64], samples: &SampleSet, config: &SplineConfig) -> Result<f64> {
    let expected = config.grid_size.unwrap_or_else(|| default_grid_size(samples.len()));
    if g.len() != expected {
        return Err(invalid(format!("grid function has {} values, expected {expected}", g.len())));
    }
    Ok(SplineSystem::new(samples, config)?.v_norm(g))
}

/// `sigma2 / (1 - gamma p / N)^2`, infinite when the denominator is not positive.
pub fn gcv_score(rss: f64, p_eff: f64, n: usize) -> f64 {
    let r = 1.0 - p_eff / n as f64;
    if r <= 0.0 {
        f64::INFINITY
    } else {
        rss / n as f64 / (r * r)
    }
}

#[derive(Debug, Clone)]
pub struct GcvSelection {
    pub lambda_star: f64,
    /// `(lambda, score)` in grid order; excluded values score `+inf`.
    pub score_curve: Vec<(f64, f64)>,
    pub fit: SplineFit,
}

/// Smoothing parameter minimizing generalized cross-validation over a grid.
pub fn gcv_select(samples: &SampleSet, template: &SplineConfig, lambda_grid: &[f64]) -> Result<GcvSelection> {
    if lambda_grid.is_empty() {
        return Err(invalid("smoothing-parameter grid is empty"));
    }
    let n = samples.len();
    let fits: Vec<Result<SplineFit>> =
        lambda_grid.par_iter().map(|&lam| fit_spline(samples, &template.clone().with_lambda(lam))).collect();
    let mut curve = Vec::with_capacity(lambda_grid.len());
    let mut best: Option<(f64, f64, SplineFit)> = None;
    for (&lam, fit) in lambda_grid.iter().zip(fits) {
        let fit = match fit {
            Ok(f) => f,
            Err(Error::Conditioning(_)) => {
                curve.push((lam, f64::INFINITY));
                continue;
            }
            Err(e) => return Err(e),
        };
        let score = gcv_score(fit.rss, fit.p_eff, n);
        curve.push((lam, score));
        if !score.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bl, bs, _)) => score < *bs || (score == *bs && lam > *bl),
        };
        if better {
            best = Some((lam, score, fit));
        }
    }
    let (lambda_star, _, fit) = best.ok_or(Error::NoAdmissibleLambda)?;
    Ok(GcvSelection { lambda_star, score_curve: curve, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn small_data() -> SampleSet {
        let t = vec![0.03, 0.17, 0.29, 0.48, 0.55, 0.81, 0.97];
        let y = vec![0.4, -0.2, 0.9, 1.3, 0.7, -0.5, 0.1];
        SampleSet::new(t, y, Some(0.5)).unwrap()
    }

    /// Dense objective assembled entry by entry, independent of the banded code.
    fn dense_solution(s: &SampleSet, m: usize, lambda: f64, g: usize, sigma: f64) -> Vec<f64> {
        let delta = 1.0 / (g - 1) as f64;
        let rows = g - m;
        let mut d = DMatrix::<f64>::zeros(rows, g);
        for k in 0..rows {
            // m-th difference via repeated convolution with [-1, 1]
            let mut st = vec![1.0];
            for _ in 0..m {
                let mut nxt = vec![0.0; st.len() + 1];
                for (i, c) in st.iter().enumerate() {
                    nxt[i] -= c;
                    nxt[i + 1] += c;
                }
                st = nxt;
            }
            for (i, c) in st.iter().enumerate() {
                d[(k, k + i)] = c / delta.powi(m as i32);
            }
        }
        let mut w = DMatrix::<f64>::zeros(rows, rows);
        for k in 0..rows {
            w[(k, k)] = if k == 0 || k == rows - 1 { (1 + m) as f64 * delta / 2.0 } else { delta };
        }
        let n = s.len();
        let mut smat = DMatrix::<f64>::zeros(n, g);
        for (i, &t) in s.locations().iter().enumerate() {
            let x = t * (g - 1) as f64;
            let j = (x.floor() as usize).min(g - 2);
            let frac = x - j as f64;
            smat[(i, j)] = 1.0 - frac;
            smat[(i, j + 1)] = frac;
        }
        let c = 2.0 / (n as f64 * sigma * sigma);
        let q = d.transpose() * &w * &d * lambda + smat.transpose() * &smat * c;
        let b = smat.transpose() * DVector::from_vec(s.responses().to_vec()) * c;
        let x = q.lu().solve(&b).unwrap();
        x.iter().copied().collect()
    }

    #[test]
    fn matches_dense_normal_equations() {
        let s = small_data();
        for &lam in &[0.01, 1e-4, 1.0] {
            let cfg = SplineConfig::new(2, lam).with_grid(40);
            let fit = fit_spline(&s, &cfg).unwrap();
            let dense = dense_solution(&s, 2, lam, 40, 0.5);
            for (a, b) in fit.values.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b} at lambda {lam}");
            }
        }
    }

    #[test]
    fn huge_lambda_gives_regression_line() {
        let t: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let y: Vec<f64> = t.iter().map(|x| (7.0 * x).sin() + 2.0 * x).collect();
        let s = SampleSet::new(t.clone(), y.clone(), Some(1.0)).unwrap();
        let fit = fit_spline(&s, &SplineConfig::new(2, 1e12).with_grid(256)).unwrap();
        let (tm, ym) = (t.iter().sum::<f64>() / 50.0, y.iter().sum::<f64>() / 50.0);
        let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
        let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
        let slope = sxy / sxx;
        let range = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
        for (&ti, &fi) in t.iter().zip(&fit.fitted) {
            let line = ym + slope * (ti - tm);
            assert!((fi - line).abs() < 1e-4 * range, "{fi} vs {line}");
        }
    }

    #[test]
    fn tiny_lambda_interpolates() {
        let n = 30;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> =
            t.iter().map(|x| (9.0 * x).cos() + if (x * 100.0) as i32 % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let s = SampleSet::new(t, y.clone(), Some(1.0)).unwrap();
        let fit = fit_spline(&s, &SplineConfig::new(2, 1e-14).with_grid(2 * n - 1)).unwrap();
        for (a, b) in fit.fitted.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((fit.p_eff - n as f64).abs() < 0.01 * n as f64, "p = {}", fit.p_eff);
    }

    #[test]
    fn zero_lambda_is_refused() {
        assert!(matches!(fit_spline(&small_data(), &SplineConfig::new(2, 0.0)), Err(Error::Conditioning(_))));
    }

    #[test]
    fn polynomials_below_order_are_reproduced() {
        // data on grid nodes, so interpolation adds no error of its own
        let t: Vec<f64> = (0..40).map(|i| (3 * i + i % 2) as f64 / 127.0).collect();
        let y: Vec<f64> = t.iter().map(|x| 1.0 - 2.0 * x + 3.0 * x * x).collect();
        let s = SampleSet::new(t, y.clone(), Some(1.0)).unwrap();
        let fit = fit_spline(&s, &SplineConfig::new(3, 10.0).with_grid(128)).unwrap();
        for (a, b) in fit.fitted.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_trace_matches_dense_and_hutchinson_is_close() {
        let s = small_data();
        let cfg = SplineConfig::new(2, 0.01).with_grid(40);
        let sys = SplineSystem::new(&s, &cfg).unwrap();
        let exact = sys.trace_unconstrained();
        // dense influence: column i is the fit to the i-th unit response vector
        let mut dense = 0.0;
        for i in 0..s.len() {
            let mut e = vec![0.0; s.len()];
            e[i] = 1.0;
            let si = s.with_responses(e).unwrap();
            dense += fit_spline(&si, &cfg).unwrap().fitted[i];
        }
        assert!((exact - dense).abs() < 1e-10);
        let h = SplineSystem::new(&s, &cfg.clone().with_trace(TraceMethod::Hutchinson { probes: 4000, seed: 1 }))
            .unwrap()
            .trace_unconstrained();
        assert!((h - exact).abs() < 0.05 * exact, "{h} vs {exact}");
    }

    #[test]
    fn v_norm_examples() {
        let n = 21;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let s = SampleSet::new(t.clone(), vec![0.0; n], Some(1.0)).unwrap();
        let cfg = SplineConfig::new(2, 2.0).with_grid(81);
        let sys = SplineSystem::new(&s, &cfg).unwrap();
        assert_eq!(sys.v_norm(&vec![0.0; 81]), 0.0);
        assert!((sys.v_norm(&vec![1.5; 81]) - 2.25).abs() < 1e-12);
        let sq: Vec<f64> = sys.grid.iter().map(|x| x * x).collect();
        let direct = 4.0 + t.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        assert!((v_norm(&sq, &s, &cfg).unwrap() - direct).abs() < 1e-8);
    }

    #[test]
    fn gcv_score_is_recomputable() {
        let t: Vec<f64> = (0..60).map(|i| (i as f64 + 0.5) / 60.0).collect();
        let y: Vec<f64> =
            t.iter().enumerate().map(|(i, x)| (6.0 * x).sin() + 0.2 * ((i * 7919 % 13) as f64 / 6.0 - 1.0)).collect();
        let s = SampleSet::new(t, y, None).unwrap();
        let grid = default_lambda_grid();
        let sel = gcv_select(&s, &SplineConfig::new(2, 1.0), &grid).unwrap();
        let (_, score) = sel.score_curve.iter().find(|(l, _)| *l == sel.lambda_star).unwrap();
        let again = sel.fit.rss / 60.0 / (1.0 - sel.fit.p_eff / 60.0).powi(2);
        assert!((score - again).abs() < 1e-12 * again);
        assert!(sel.score_curve.iter().all(|(_, sc)| *sc >= *score));
    }
}
