//! Measurement designs: the limiting distribution `F` of the sample locations,
//! the star discrepancy of a point set against it, and numerical checks of the
//! discrete-sum inequalities (Koksma-type bounds and Sobolev interpolation
//! terms) that control how well sums over the design approximate integrals.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::numeric::{compensated_sum, simpson};

/// Panels used for every `dF` integral in this module.
pub const QUADRATURE_PANELS: usize = 4096;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Limiting distribution of measurement locations on `[0, 1]`.
#[derive(Clone)]
pub struct DesignDistribution {
    kind: Kind,
    density_lo: f64,
    density_hi: f64,
}

#[derive(Clone)]
enum Kind {
    Uniform,
    Analytic { name: String, cdf: ScalarFn, density: ScalarFn },
}

impl fmt::Debug for DesignDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            Kind::Uniform => "uniform",
            Kind::Analytic { name, .. } => name.as_str(),
        };
        f.debug_struct("DesignDistribution")
            .field("name", &name)
            .field("density_lo", &self.density_lo)
            .field("density_hi", &self.density_hi)
            .finish()
    }
}

impl Default for DesignDistribution {
    fn default() -> Self {
        Self::uniform()
    }
}

impl DesignDistribution {
    pub fn uniform() -> Self {
        Self { kind: Kind::Uniform, density_lo: 1.0, density_hi: 1.0 }
    }

    /// An analytic cdf/density pair. Validated on a 1025-point grid: `F(0) = 0`,
    /// `F(1) = 1`, `F` nondecreasing, density bounded away from zero.
    pub fn analytic<C, D>(name: impl Into<String>, cdf: C, density: D) -> Result<Self>
    where
        C: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let grid = crate::numeric::linspace(0.0, 1.0, 1025);
        if cdf(0.0).abs() > 1e-12 || (cdf(1.0) - 1.0).abs() > 1e-12 {
            return Err(invalid("design cdf must satisfy F(0) = 0 and F(1) = 1"));
        }
        let values: Vec<f64> = grid.iter().map(|&t| cdf(t)).collect();
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("design cdf must be nondecreasing"));
        }
        let dens: Vec<f64> = grid.iter().map(|&t| density(t)).collect();
        let lo = dens.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(invalid("design density must be positive and bounded"));
        }
        Ok(Self {
            kind: Kind::Analytic { name: name.into(), cdf: Arc::new(cdf), density: Arc::new(density) },
            density_lo: lo,
            density_hi: hi,
        })
    }

    /// `F(t) = t + a sin(2 pi t) / (2 pi)`, density `1 + a cos(2 pi t)`, `|a| < 1`.
    pub fn cosine(a: f64) -> Result<Self> {
        if a.abs() >= 1.0 {
            return Err(invalid("cosine design needs |a| < 1"));
        }
        let tau = 2.0 * std::f64::consts::PI;
        Self::analytic(
            format!("cosine({a})"),
            move |t| t + a * (tau * t).sin() / tau,
            move |t| 1.0 + a * (tau * t).cos(),
        )
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, Kind::Uniform)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Uniform => t.clamp(0.0, 1.0),
            Kind::Analytic { cdf, .. } => cdf(t.clamp(0.0, 1.0)),
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Uniform => 1.0,
            Kind::Analytic { density, .. } => density(t.clamp(0.0, 1.0)),
        }
    }

    /// `F^{-1}(u)` by bisection.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.is_uniform() {
            return u;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(c_F, C_F)`, the density bounds on the validation grid.
    pub fn density_bounds(&self) -> (f64, f64) {
        (self.density_lo, self.density_hi)
    }

    /// `int g dF`, composite Simpson over each piece between `breaks`.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, breaks: &[f64]) -> f64 {
        let mut cuts = vec![0.0];
        cuts.extend(breaks.iter().copied().filter(|b| *b > 0.0 && *b < 1.0));
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pieces = cuts.len() - 1;
        let panels = QUADRATURE_PANELS.div_ceil(pieces).max(64);
        compensated_sum(cuts.windows(2).map(|w| {
            // evaluate strictly inside each piece so one-sided limits are used
            let (a, b) = (w[0], w[1]);
            let eps = (b - a) * 1e-13;
            simpson(|t| g(t) * self.density(t), a + eps, b - eps, panels)
        }))
    }
}

/// Star discrepancy together with the spacing extremes of the point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyReport {
    pub d_star: f64,
    pub max_spacing: f64,
    pub min_spacing: f64,
}

fn validate_points(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(invalid("point set is empty"));
    }
    if points.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(invalid("points must lie in [0, 1]"));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("points must be sorted ascending"));
    }
    Ok(())
}

/// `D*_N = 1/(2N) + max_i |F(t_i) - (i - 1/2)/N|`.
pub fn star_discrepancy(points: &[f64], dist: &DesignDistribution) -> Result<DiscrepancyReport> {
    validate_points(points)?;
    let n = points.len() as f64;
    let dev = points.iter().enumerate().map(|(i, &t)| (dist.cdf(t) - (i as f64 + 0.5) / n).abs()).fold(0.0, f64::max);
    let (max_spacing, min_spacing) = if points.len() < 2 {
        (0.0, 0.0)
    } else {
        points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), d| (hi.max(d), lo.min(d)))
    };
    Ok(DiscrepancyReport { d_star: 0.5 / n + dev, max_spacing, min_spacing })
}

/// A bounded function of bounded variation with its norms supplied analytically.
pub struct BvFunction<'a> {
    pub eval: &'a dyn Fn(f64) -> f64,
    pub total_variation: f64,
    pub sup_norm: f64,
    /// Jump locations; quadrature is split there.
    pub breaks: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoksmaCheck {
    pub gap: f64,
    pub bound: f64,
}

impl KoksmaCheck {
    pub fn holds(&self) -> bool {
        self.gap <= self.bound
    }
}

/// Weighted Koksma gap `|int g dF - (1/N) sum g(t_i) w_i|` and the bound
/// `(|g|_TV + C |g|_inf) D*_N`. Weights must satisfy `|w_i - 1| <= C D*_N`.
pub fn koksma_gap(
    g: &BvFunction<'_>,
    points: &[f64],
    weights: &[f64],
    weight_const: f64,
    dist: &DesignDistribution,
) -> Result<KoksmaCheck> {
    if weights.len() != points.len() {
        return Err(invalid("one weight per point required"));
    }
    let report = star_discrepancy(points, dist)?;
    let allowed = weight_const * report.d_star * (1.0 + 1e-12);
    if let Some(w) = weights.iter().find(|w| (*w - 1.0).abs() > allowed) {
        return Err(invalid(format!("weight {w} deviates from 1 by more than C * D* = {allowed}")));
    }
    let integral = dist.integrate(|t| (g.eval)(t), &g.breaks);
    let n = points.len() as f64;
    let sum = compensated_sum(points.iter().zip(weights).map(|(&t, &w)| (g.eval)(t) * w)) / n;
    Ok(KoksmaCheck {
        gap: (integral - sum).abs(),
        bound: (g.total_variation + weight_const * g.sup_norm) * report.d_star,
    })
}

/// Terms of the Sobolev interpolation inequality
/// `theta^{2j} int |g^{(j)}|^2 <= c_j (int g^2 + theta^{2m} int |g^{(m)}|^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpTerms {
    /// `theta^{2j} int |g^{(j)}|^2` for `j = 0..=m`.
    pub lhs: Vec<f64>,
    pub l2: f64,
    /// `theta^{2m} int |g^{(m)}|^2`.
    pub seminorm_m: f64,
}

impl InterpTerms {
    /// Smallest `c_j` making the inequality hold for this `g`.
    pub fn required_constants(&self) -> Vec<f64> {
        let rhs = self.l2 + self.seminorm_m;
        self.lhs.iter().map(|l| if rhs > 0.0 { l / rhs } else { 0.0 }).collect()
    }
}

/// `deriv(j, t)` must return `g^{(j)}(t)` for `j <= m`.
pub fn interp_inequality_terms<D>(deriv: D, m: usize, theta: f64) -> Result<InterpTerms>
where
    D: Fn(usize, f64) -> f64,
{
    if m < 1 {
        return Err(invalid("interpolation order m must be at least 1"));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid("theta must lie in [0, 1]"));
    }
    let sq = |j: usize| simpson(|t| deriv(j, t).powi(2), 0.0, 1.0, QUADRATURE_PANELS);
    let norms: Vec<f64> = (0..=m).map(sq).collect();
    let lhs = norms.iter().enumerate().map(|(j, v)| theta.powi(2 * j as i32) * v).collect();
    Ok(InterpTerms { lhs, l2: norms[0], seminorm_m: theta.powi(2 * m as i32) * norms[m] })
}

/// Quantities of the discrete interpolation bound
/// `(1/N) sum g(t_i)^2 <= C_1 int g^2 + c_1 D*^m int |g^{(m)}|^2`, `C_1 = C_F + c_1 + D*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteSobolevTerms {
    pub discrete_l2: f64,
    pub l2: f64,
    pub seminorm_m: f64,
    pub d_star: f64,
    pub density_hi: f64,
    pub m: usize,
}

impl DiscreteSobolevTerms {
    /// Smallest nonnegative `c_1` for which the bound holds.
    pub fn required_c1(&self) -> f64 {
        let fixed = (self.density_hi + self.d_star) * self.l2;
        let slope = self.l2 + self.d_star.powi(self.m as i32) * self.seminorm_m;
        if self.discrete_l2 <= fixed {
            0.0
        } else if slope > 0.0 {
            (self.discrete_l2 - fixed) / slope
        } else {
            f64::INFINITY
        }
    }

    pub fn holds_with(&self, c1: f64) -> bool {
        let big_c1 = self.density_hi + c1 + self.d_star;
        let rhs = big_c1 * self.l2 + c1 * self.d_star.powi(self.m as i32) * self.seminorm_m;
        self.discrete_l2 <= rhs * (1.0 + 1e-12)
    }
}

pub fn discrete_sobolev_terms<D>(
    deriv: D,
    m: usize,
    points: &[f64],
    dist: &DesignDistribution,
) -> Result<DiscreteSobolevTerms>
where
    D: Fn(usize, f64) -> f64,
{
    if m < 1 {
        return Err(invalid("interpolation order m must be at least 1"));
    }
    let report = star_discrepancy(points, dist)?;
    let n = points.len() as f64;
    Ok(DiscreteSobolevTerms {
        discrete_l2: compensated_sum(points.iter().map(|&t| deriv(0, t).powi(2))) / n,
        l2: simpson(|t| deriv(0, t).powi(2), 0.0, 1.0, QUADRATURE_PANELS),
        seminorm_m: simpson(|t| deriv(m, t).powi(2), 0.0, 1.0, QUADRATURE_PANELS),
        d_star: report.d_star,
        density_hi: dist.density_bounds().1,
        m,
    })
}

/// Locations `F^{-1}((i - 1/2)/N)`.
pub fn midpoint_design(n: usize, dist: &DesignDistribution) -> Vec<f64> {
    (0..n).map(|i| dist.quantile((i as f64 + 0.5) / n as f64)).collect()
}
