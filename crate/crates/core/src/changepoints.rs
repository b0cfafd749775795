//! Empirical change points of a kernel derivative estimate, their standard
//! deviations and uncertainty intervals, and the Gaussian-noise formulas for
//! the expected number of false change points.

use crate::design::DesignDistribution;
use crate::error::{invalid, Error, Result};
use crate::kernels::{KernelFit, KernelSpec};
use crate::numeric::{interp_linear, norm_pdf, norm_quantile, norm_sf};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// One sign change of the estimated derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePoint {
    pub x_hat: f64,
    /// `+1` for a negative-to-positive crossing.
    pub sign_flip: i8,
    /// Plug-in change-point standard deviation.
    pub sigma_if_hat: f64,
    /// `None` when the corrected quantile level degenerates.
    pub uncertainty: Option<Interval>,
    pub cluster_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into [`ChangePointReport::points`].
    pub members: Vec<usize>,
    pub parity: Parity,
    pub span: Interval,
}

impl Cluster {
    /// Median member for odd clusters.
    pub fn representative(&self) -> Option<usize> {
        match self.parity {
            Parity::Odd => Some(self.members[self.members.len() / 2]),
            Parity::Even => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangePointReport {
    /// Every sign change, sorted by location.
    pub points: Vec<ChangePoint>,
    pub clusters: Vec<Cluster>,
}

impl ChangePointReport {
    /// Number of odd clusters: the change points a constrained fit will keep.
    pub fn k_hat(&self) -> usize {
        self.clusters.iter().filter(|c| c.parity == Parity::Odd).count()
    }

    /// Raw number of sign changes on the grid.
    pub fn crossing_count(&self) -> usize {
        self.points.len()
    }

    pub fn representatives(&self) -> impl Iterator<Item = &ChangePoint> {
        self.clusters.iter().filter_map(|c| c.representative()).map(|i| &self.points[i])
    }
}

/// Noise and design context for plug-in standard deviations.
#[derive(Debug, Clone)]
pub struct ChangePointContext<'a> {
    pub kernel: &'a KernelSpec,
    pub dist: &'a DesignDistribution,
    pub n: usize,
    pub sigma: f64,
    pub alpha: f64,
}

/// Sign changes of `values` on `grid` located by linear interpolation.
///
/// Exact zeros take the sign of the next nonzero value (the previous one for
/// trailing zeros). Returns `(location, sign_flip)` pairs.
pub fn scan_crossings(grid: &[f64], values: &[f64]) -> Vec<(f64, i8)> {
    let n = values.len().min(grid.len());
    if n < 2 {
        return Vec::new();
    }
    let mut signs = vec![0i8; n];
    let mut next = 0i8;
    for i in (0..n).rev() {
        if values[i] > 0.0 {
            next = 1;
        } else if values[i] < 0.0 {
            next = -1;
        }
        signs[i] = next;
    }
    let mut prev = 0i8;
    for s in signs.iter_mut() {
        if *s == 0 {
            *s = prev;
        } else {
            prev = *s;
        }
    }
    let mut out = Vec::new();
    for j in 0..n - 1 {
        if signs[j] != 0 && signs[j + 1] != 0 && signs[j] != signs[j + 1] {
            let (v0, v1) = (values[j], values[j + 1]);
            let x = if v0 == v1 { grid[j] } else { grid[j] + (grid[j + 1] - grid[j]) * v0 / (v0 - v1) };
            out.push((x, signs[j + 1]));
        }
    }
    out
}

/// Sign changes of `fit.values` grouped into clusters of radius `2 h`.
pub fn extract_change_points(fit: &KernelFit, ctx: &ChangePointContext<'_>) -> Result<ChangePointReport> {
    let h = fit.bandwidth;
    let max_gap = fit.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_gap >= h / 4.0 {
        return Err(Error::Resolution { spacing: max_gap, h });
    }
    let crossings = scan_crossings(&fit.grid, &fit.values);
    let mut points: Vec<ChangePoint> = crossings
        .into_iter()
        .map(|(x, flip)| {
            let slope = interp_linear(&fit.grid, &fit.values_next, x);
            let sd = sigma_if_from_slope(slope, x, ctx, h);
            let uncertainty = uncertainty_interval(x, sd, ctx.alpha, ctx.kernel, h).ok();
            ChangePoint { x_hat: x, sign_flip: flip, sigma_if_hat: sd, uncertainty, cluster_id: 0 }
        })
        .collect();

    let mut clusters: Vec<Cluster> = Vec::new();
    for i in 0..points.len() {
        let join = i > 0 && points[i].x_hat - points[i - 1].x_hat <= 2.0 * h;
        if join {
            clusters.last_mut().unwrap().members.push(i);
        } else {
            clusters.push(Cluster {
                members: vec![i],
                parity: Parity::Odd,
                span: Interval::new(points[i].x_hat, points[i].x_hat),
            });
        }
    }
    for (id, c) in clusters.iter_mut().enumerate() {
        c.parity = if c.members.len() % 2 == 1 { Parity::Odd } else { Parity::Even };
        c.span = Interval::new(points[c.members[0]].x_hat, points[*c.members.last().unwrap()].x_hat);
        for &m in &c.members {
            points[m].cluster_id = id;
        }
    }
    Ok(ChangePointReport { points, clusters })
}

fn sigma_if_from_slope(slope: f64, x: f64, ctx: &ChangePointContext<'_>, h: f64) -> f64 {
    let l = ctx.kernel.order() as i32;
    let slope = slope.abs().max(f64::MIN_POSITIVE);
    ctx.sigma * ctx.kernel.norm(ctx.kernel.order())
        / (slope * (ctx.n as f64 * ctx.dist.density(x) * h.powi(2 * l + 1)).sqrt())
}

/// `H(z) = phi(z)/z + Phi(z) - 1`.
pub fn h_function(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(z));
    }
    Ok(norm_pdf(z) / z - norm_sf(z))
}

/// Change-point standard deviation
/// `sigma |kappa^(l)| / (|f^(l+1)(x)| sqrt(N F'(x) h^{2l+1}))`.
pub fn sigma_if(
    x: f64,
    next_deriv: f64,
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h: f64,
    n: usize,
    sigma: f64,
) -> Result<f64> {
    if next_deriv == 0.0 || !next_deriv.is_finite() {
        return Err(Error::Nongeneric { x });
    }
    let l = kernel.order() as i32;
    Ok(sigma * kernel.norm(kernel.order())
        / (next_deriv.abs() * (n as f64 * dist.density(x) * h.powi(2 * l + 1)).sqrt()))
}

/// A true change point and the value of the next derivative there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueChangePoint {
    pub x: f64,
    pub next_deriv: f64,
}

/// Asymptotic `E[K_hat] - K = 2 sum_k H(sqrt(|f^(l+1)(x_k)|^2 N F'(x_k) h^{2l+3} / (sigma^2 |kappa^(l+1)|^2)))`.
pub fn expected_false_changepoints(
    truth: &[TrueChangePoint],
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h: f64,
    n: usize,
    sigma: f64,
) -> Result<f64> {
    let l = kernel.order() as i32;
    let mut total = 0.0;
    for cp in truth {
        if cp.next_deriv == 0.0 {
            return Err(Error::Nongeneric { x: cp.x });
        }
        let z2 = cp.next_deriv.powi(2) * n as f64 * dist.density(cp.x) * h.powi(2 * l + 3)
            / (sigma * sigma * kernel.norm_sq(kernel.order() + 1));
        total += 2.0 * h_function(z2.sqrt())?;
    }
    Ok(total)
}

/// Diagnostic bound on the probability of a false change point farther than
/// `w` from every true one, `sum_k (sigma_if/h) exp(-w^2 / (2 sigma_if^2))`,
/// with the unspecified leading constant taken as one.
pub fn false_cp_prob_bound(
    truth: &[TrueChangePoint],
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h: f64,
    n: usize,
    sigma: f64,
    w: f64,
) -> Result<f64> {
    let l = kernel.order() as i32;
    if !(h < w) {
        return Err(Error::ScalingAssumption(format!("need h < w, got h = {h}, w = {w}")));
    }
    if w * w * n as f64 * h.powi(2 * l + 1) < 1.0 {
        return Err(Error::ScalingAssumption("need w^2 N h^(2l+1) >= 1".to_string()));
    }
    let mut total = 0.0;
    for cp in truth {
        let s = sigma_if(cp.x, cp.next_deriv, dist, kernel, h, n, sigma)?;
        total += tail_term(s, h, w);
    }
    Ok(total)
}

pub(crate) fn tail_term(sigma_if: f64, h: f64, w: f64) -> f64 {
    sigma_if / h * (-w * w / (2.0 * sigma_if * sigma_if)).exp()
}

/// Corrected two-sided level `alpha [1 + 2 H(h |kappa^(l)| / (sigma_if |kappa^(l+1)|))]`.
pub fn corrected_level(sigma_if: f64, alpha: f64, kernel: &KernelSpec, h: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    if !(sigma_if > 0.0) {
        return Err(invalid("change-point standard deviation must be positive"));
    }
    let l = kernel.order();
    let z = h * kernel.norm(l) / (sigma_if * kernel.norm(l + 1));
    let level = alpha * (1.0 + 2.0 * h_function(z)?);
    if level >= 1.0 {
        return Err(Error::DegenerateQuantile(level));
    }
    Ok(level.min(0.5_f64.max(alpha)))
}

/// `[x - z sigma_if, x + z sigma_if]` with `z` the two-sided normal quantile at the
/// corrected level.
pub fn uncertainty_interval(x_hat: f64, sigma_if: f64, alpha: f64, kernel: &KernelSpec, h: f64) -> Result<Interval> {
    let level = corrected_level(sigma_if, alpha, kernel, h)?;
    let z = norm_quantile(1.0 - level / 2.0);
    Ok(Interval::new(x_hat - z * sigma_if, x_hat + z * sigma_if))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{estimation_grid, make_kernel};

    fn fit_from(grid: Vec<f64>, f: impl Fn(f64) -> f64, h: f64) -> KernelFit {
        let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        KernelFit { values_next: vec![1.0; grid.len()], grid, values, bandwidth: h, order: 0 }
    }

    fn ctx<'a>(kernel: &'a KernelSpec, dist: &'a DesignDistribution) -> ChangePointContext<'a> {
        ChangePointContext { kernel, dist, n: 1000, sigma: 1.0, alpha: 0.05 }
    }

    #[test]
    fn positive_values_have_no_change_points() {
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let fit = fit_from(estimation_grid(0.1, 200), |x| 1.0 + x, 0.1);
        let r = extract_change_points(&fit, &ctx(&k, &u)).unwrap();
        assert_eq!(r.k_hat(), 0);
        assert!(r.points.is_empty());
    }

    #[test]
    fn single_linear_crossing() {
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let fit = fit_from(estimation_grid(0.1, 201), |x| x - 0.5, 0.1);
        let r = extract_change_points(&fit, &ctx(&k, &u)).unwrap();
        assert_eq!(r.k_hat(), 1);
        assert!((r.points[0].x_hat - 0.5).abs() < 1e-12);
        assert_eq!(r.points[0].sign_flip, 1);
        assert_eq!(r.clusters[0].parity, Parity::Odd);
    }

    #[test]
    fn sine_crossings_match_brute_force() {
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let h = 0.04;
        let grid = estimation_grid(0.1, 2001);
        let f = |x: f64| (6.0 * std::f64::consts::PI * x).sin();
        let mut fit = fit_from(grid.clone(), f, h);
        fit.bandwidth = h;
        let r = extract_change_points(&fit, &ctx(&k, &u)).unwrap();
        // brute force: sign products on the grid
        let brute = grid.windows(2).filter(|w| f(w[0]) * f(w[1]) < 0.0).count();
        assert_eq!(r.crossing_count(), brute);
        let expect: Vec<f64> = (1..=5).map(|k| k as f64 / 6.0).filter(|&x| x > 0.1 && x < 0.9).collect();
        assert_eq!(r.k_hat(), expect.len());
        for (p, e) in r.points.iter().zip(&expect) {
            assert!((p.x_hat - e).abs() < 4e-4);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let fit = fit_from(estimation_grid(0.1, 10), |x| x - 0.5, 0.1);
        assert!(matches!(extract_change_points(&fit, &ctx(&k, &u)), Err(Error::Resolution { .. })));
    }

    #[test]
    fn exact_zeros_follow_next_value() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(scan_crossings(&grid, &[1.0, 0.0, -1.0, -1.0, -1.0]), vec![(1.0, -1)]);
        assert!(scan_crossings(&grid, &[1.0, 0.0, 1.0, 1.0, 1.0]).is_empty());
        assert!(scan_crossings(&grid, &[0.0; 5]).is_empty());
    }

    #[test]
    fn clusters_and_parity() {
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let h = 0.05;
        // three crossings near 0.3 and two near 0.7
        let f = |x: f64| (x - 0.29) * (x - 0.30) * (x - 0.31) * (x - 0.69) * (x - 0.71);
        let fit = fit_from(estimation_grid(h, 4001), f, h);
        let r = extract_change_points(&fit, &ctx(&k, &u)).unwrap();
        assert_eq!(r.crossing_count(), 5);
        assert_eq!(r.clusters.len(), 2);
        assert_eq!(r.clusters[0].parity, Parity::Odd);
        assert_eq!(r.clusters[1].parity, Parity::Even);
        assert_eq!(r.k_hat(), 1);
        let rep = r.representatives().next().unwrap();
        assert!((rep.x_hat - 0.30).abs() < 1e-6);
    }

    #[test]
    fn h_reference_values() {
        assert!((h_function(1.0).unwrap() - 0.083_315_4).abs() < 1e-6);
        assert!((h_function(2.0).unwrap() - 0.004_245_4).abs() < 1e-6);
        assert!(h_function(8.0).unwrap() < 1e-12);
        assert!(h_function(0.0).is_err());
        assert!(h_function(-1.0).is_err());
    }

    #[test]
    fn sigma_if_arithmetic() {
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let s = sigma_if(0.5, 1.0, &u, &k, 0.1, 1000, 1.0).unwrap();
        assert!((s - (0.6f64 / 100.0).sqrt()).abs() < 1e-12);
        let s2 = sigma_if(0.5, 2.0, &u, &k, 0.1, 1000, 1.0).unwrap();
        assert!((s / s2 - 2.0).abs() < 1e-12);
        assert!(matches!(sigma_if(0.5, 0.0, &u, &k, 0.1, 1000, 1.0), Err(Error::Nongeneric { .. })));
    }

    #[test]
    fn tail_bound_arithmetic() {
        assert!((tail_term(0.05, 0.1, 0.2) - 0.5 * (-8.0f64).exp()).abs() < 1e-15);
        let k = make_kernel(0).unwrap();
        let u = DesignDistribution::uniform();
        let truth = [TrueChangePoint { x: 0.5, next_deriv: 1.0 }];
        let near = false_cp_prob_bound(&truth, &u, &k, 0.1, 1000, 1.0, 0.2).unwrap();
        let far = false_cp_prob_bound(&truth, &u, &k, 0.1, 1000, 1.0, 0.4).unwrap();
        assert!(far < near);
        assert!(false_cp_prob_bound(&truth, &u, &k, 0.1, 1000, 1.0, 0.05).is_err());
    }

    #[test]
    fn vanishing_noise_gives_no_false_points() {
        let k = make_kernel(1).unwrap();
        let u = DesignDistribution::uniform();
        let truth = [TrueChangePoint { x: 0.5, next_deriv: 4.0 }];
        let e = expected_false_changepoints(&truth, &u, &k, 0.15, 2000, 1e-3).unwrap();
        assert!(e < 1e-12);
    }

    #[test]
    fn uncertainty_interval_limits() {
        let k = make_kernel(0).unwrap();
        // sigma_if << h makes the correction negligible
        let iv = uncertainty_interval(0.4, 1e-4, 0.05, &k, 0.1).unwrap();
        let z = (iv.hi - 0.4) / 1e-4;
        assert!((z - 1.959_96).abs() < 1e-4);
        assert!(((iv.hi - 0.4) - (0.4 - iv.lo)).abs() < 1e-15);
        assert!(uncertainty_interval(0.4, 1e-4, 0.0, &k, 0.1).is_err());
    }
}
