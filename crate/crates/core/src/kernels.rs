//! Polynomial kernels `c (1 - s^2)^{order+1}` on `[-1, 1]` and the
//! Gasser-Mueller estimator of a derivative of the regression function.
//!
//! For a target derivative order `order`, the kernel and its first `order`
//! derivatives vanish at `s = +-1`, so differentiating the smoother in `t`
//! moves all derivatives onto the kernel:
//!
//! ```text
//! f^(d)(t) ~ h^{-(d+1)} sum_i y_i (s_i - s_{i-1}) kappa^(d)((t - t_i) / h)
//! ```
//!
//! where `s_i = (F(t_i) + F(t_{i+1})) / 2` are gap midpoints in `F`-scale.
//! The estimate is only defined on the interior region `[h, 1 - h]`.

use crate::design::{star_discrepancy, DesignDistribution};
use crate::error::{invalid, Error, Result};
use crate::numeric::{binomial, CompensatedSum};
use crate::sample::SampleSet;

pub const MAX_KERNEL_ORDER: usize = 4;

/// Dense polynomial, coefficient `k` multiplies `s^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Exact integral over `[-1, 1]`.
    pub fn integral_sym(&self) -> f64 {
        self.0.iter().enumerate().filter(|(k, _)| k % 2 == 0).map(|(k, c)| 2.0 * c / (k + 1) as f64).sum()
    }
}

/// Kernel `kappa(s) = c (1 - s^2)^{order+1}` with derivatives up to `order + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    order: usize,
    /// `derivs[j]` is `kappa^(j)`.
    derivs: Vec<Poly>,
    /// `norm_sq[j] = int kappa^(j)(s)^2 ds`.
    norm_sq: Vec<f64>,
}

/// The kernel for estimating the `order`-th derivative and locating its sign changes.
pub fn make_kernel(order: usize) -> Result<KernelSpec> {
    if order > MAX_KERNEL_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let p = order + 1;
    // (1 - s^2)^p = sum_k C(p, k) (-1)^k s^{2k}
    let mut coeffs = vec![0.0; 2 * p + 1];
    for k in 0..=p {
        coeffs[2 * k] = binomial(p, k) * if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    let raw = Poly(coeffs);
    let c = 1.0 / raw.integral_sym();
    let kappa = Poly(raw.0.iter().map(|v| v * c).collect());
    let mut derivs = vec![kappa];
    for j in 0..=order {
        let next = derivs[j].derivative();
        derivs.push(next);
    }
    let norm_sq = derivs.iter().map(|d| d.mul(d).integral_sym()).collect();
    Ok(KernelSpec { order, derivs, norm_sq })
}

impl KernelSpec {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn max_deriv(&self) -> usize {
        self.order + 1
    }

    pub fn poly(&self, deriv: usize) -> &Poly {
        &self.derivs[deriv]
    }

    /// `kappa^(deriv)(s)`, zero outside `[-1, 1]`.
    pub fn eval(&self, deriv: usize, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            0.0
        } else {
            self.derivs[deriv].eval(s)
        }
    }

    /// `|kappa^(j)|^2`.
    pub fn norm_sq(&self, j: usize) -> f64 {
        self.norm_sq[j]
    }

    pub fn norm(&self, j: usize) -> f64 {
        self.norm_sq[j].sqrt()
    }

    /// `int s^2 kappa(s) ds`.
    pub fn second_moment(&self) -> f64 {
        Poly(vec![0.0, 0.0, 1.0]).mul(&self.derivs[0]).integral_sym()
    }
}

/// Gasser-Mueller gap weights `s_i - s_{i-1}` in `F`-scale; they sum to one.
pub fn gap_weights(t: &[f64], dist: &DesignDistribution) -> Vec<f64> {
    let n = t.len();
    let f: Vec<f64> = t.iter().map(|&x| dist.cdf(x)).collect();
    let mid = |i: usize| -> f64 {
        if i == 0 {
            0.0
        } else if i == n {
            1.0
        } else {
            0.5 * (f[i - 1] + f[i])
        }
    };
    (0..n).map(|i| mid(i + 1) - mid(i)).collect()
}

/// The `w_i` of the estimator normalized as `N F'(t_i) (s_i - s_{i-1})`.
pub fn normalized_weights(t: &[f64], dist: &DesignDistribution) -> Vec<f64> {
    let n = t.len() as f64;
    gap_weights(t, dist).iter().zip(t).map(|(g, &x)| n * dist.density(x) * g).collect()
}

/// Kernel estimates of `f^(order)` and `f^(order+1)` on an interior grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFit {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub values_next: Vec<f64>,
    pub bandwidth: f64,
    pub order: usize,
}

/// Precomputed smoother for one sample design, reusable across responses.
#[derive(Debug, Clone)]
pub struct KernelSmoother<'a> {
    t: &'a [f64],
    gaps: Vec<f64>,
    kernel: &'a KernelSpec,
    h: f64,
}

impl<'a> KernelSmoother<'a> {
    pub fn new(t: &'a [f64], dist: &DesignDistribution, kernel: &'a KernelSpec, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 0.5) {
            return Err(invalid(format!("bandwidth {h} must lie in (0, 1/2)")));
        }
        if t.is_empty() {
            return Err(invalid("no samples"));
        }
        Ok(Self { t, gaps: gap_weights(t, dist), kernel, h })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    fn window(&self, x: f64) -> (usize, usize) {
        let lo = self.t.partition_point(|&v| v <= x - self.h);
        let hi = self.t.partition_point(|&v| v < x + self.h);
        (lo, hi)
    }

    /// Validates an evaluation grid against the interior region and window occupancy.
    pub fn check_grid(&self, grid: &[f64]) -> Result<()> {
        let h = self.h;
        let tol = 1e-12;
        for &x in grid {
            if x < h - tol || x > 1.0 - h + tol {
                return Err(Error::Boundary { t: x, h });
            }
            let (lo, hi) = self.window(x);
            if hi - lo < 2 {
                return Err(Error::DegenerateBandwidth { h, t: x });
            }
        }
        Ok(())
    }

    /// `f^(deriv)` at one point; no region checks.
    pub fn eval(&self, y: &[f64], deriv: usize, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let mut acc = CompensatedSum::new();
        for i in lo..hi {
            let s = (x - self.t[i]) / self.h;
            acc.add(y[i] * self.gaps[i] * self.kernel.eval(deriv, s));
        }
        acc.value() / self.h.powi(deriv as i32 + 1)
    }

    pub fn estimate(&self, y: &[f64], deriv: usize, grid: &[f64]) -> Result<Vec<f64>> {
        if deriv > self.kernel.max_deriv() {
            return Err(invalid(format!("derivative {deriv} exceeds kernel capacity {}", self.kernel.max_deriv())));
        }
        if y.len() != self.t.len() {
            return Err(invalid("response length does not match the design"));
        }
        self.check_grid(grid)?;
        Ok(grid.iter().map(|&x| self.eval(y, deriv, x)).collect())
    }

    /// Leave-in GCV score `RSS/N' / (1 - p/N')^2` over samples inside `region`.
    pub fn gcv_score(&self, y: &[f64], region: (f64, f64)) -> f64 {
        let k0 = self.kernel.eval(0, 0.0) / self.h;
        let inv_h = 1.0 / self.h;
        let poly = &self.kernel.derivs[0];
        let mut rss = CompensatedSum::new();
        let mut p = 0.0;
        let mut count = 0usize;
        for (i, &x) in self.t.iter().enumerate() {
            if x < region.0 || x > region.1 {
                continue;
            }
            // plain summation is enough to rank bandwidths
            let (lo, hi) = self.window(x);
            let mut acc = 0.0;
            for j in lo..hi {
                let s = (x - self.t[j]) * inv_h;
                if s.abs() < 1.0 {
                    acc += y[j] * self.gaps[j] * poly.eval(s);
                }
            }
            let fit = acc * inv_h;
            rss.add((y[i] - fit).powi(2));
            p += self.gaps[i] * k0;
            count += 1;
        }
        if count == 0 {
            return f64::INFINITY;
        }
        let n = count as f64;
        let denom = 1.0 - p / n;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        rss.value() / n / (denom * denom)
    }
}

/// Estimate of `f^(deriv)` on `grid`, which must lie in `[h, 1 - h]`.
pub fn gm_estimate(
    samples: &SampleSet,
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h: f64,
    deriv: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    KernelSmoother::new(samples.locations(), dist, kernel, h)?.estimate(samples.responses(), deriv, grid)
}

/// Both `f^(order)` and `f^(order+1)` on `grid`.
pub fn kernel_fit(
    samples: &SampleSet,
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h: f64,
    grid: &[f64],
) -> Result<KernelFit> {
    let sm = KernelSmoother::new(samples.locations(), dist, kernel, h)?;
    let y = samples.responses();
    let order = kernel.order();
    Ok(KernelFit {
        grid: grid.to_vec(),
        values: sm.estimate(y, order, grid)?,
        values_next: sm.estimate(y, order + 1, grid)?,
        bandwidth: h,
        order,
    })
}

/// `n` equispaced points spanning the estimation region `[h, 1 - h]`.
pub fn estimation_grid(h: f64, n: usize) -> Vec<f64> {
    crate::numeric::linspace(h, 1.0 - h, n)
}

/// Asymptotic variances of the derivative estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMoments {
    pub grid: Vec<f64>,
    /// `Var f^(order)(t) ~ sigma^2 |kappa^(order)|^2 / (N F'(t) h^{2 order + 1})`.
    pub sigma2: Vec<f64>,
    /// `Var f^(order+1)(t) ~ sigma^2 |kappa^(order+1)|^2 / (N F'(t) h^{2 order + 3})`.
    pub xi2: Vec<f64>,
    /// `h + D*/h` for the ideal design with `D* = 1/(2N)`.
    pub corr_bound: f64,
}

pub fn kernel_moments(
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h: f64,
    n: usize,
    sigma: f64,
    grid: &[f64],
) -> Result<KernelMoments> {
    if !(h > 0.0 && h < 0.5) {
        return Err(invalid(format!("bandwidth {h} must lie in (0, 1/2)")));
    }
    if n == 0 || !(sigma > 0.0) {
        return Err(invalid("need N >= 1 and sigma > 0"));
    }
    for &x in grid {
        if x < h - 1e-12 || x > 1.0 - h + 1e-12 {
            return Err(Error::Boundary { t: x, h });
        }
    }
    let l = kernel.order() as i32;
    let nn = n as f64;
    let s2 = sigma * sigma;
    let sigma2 = grid
        .iter()
        .map(|&x| s2 * kernel.norm_sq(kernel.order()) / (nn * dist.density(x) * h.powi(2 * l + 1)))
        .collect();
    let xi2 = grid
        .iter()
        .map(|&x| s2 * kernel.norm_sq(kernel.order() + 1) / (nn * dist.density(x) * h.powi(2 * l + 3)))
        .collect();
    Ok(KernelMoments { grid: grid.to_vec(), sigma2, xi2, corr_bound: h + 0.5 / (nn * h) })
}

/// Kernel bandwidth minimizing GCV at derivative zero over `h_grid`.
///
/// Residuals are scored only on `[max h, 1 - max h]` so that boundary mass loss
/// of the uncorrected kernel does not favor small bandwidths.
pub fn kernel_gcv_bandwidth(
    samples: &SampleSet,
    dist: &DesignDistribution,
    kernel: &KernelSpec,
    h_grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let h_max = h_grid.iter().copied().fold(0.0, f64::max);
    if h_grid.is_empty() || !(h_max < 0.5) {
        return Err(invalid("bandwidth grid must be nonempty and below 1/2"));
    }
    let region = (h_max, 1.0 - h_max);
    let mut scores = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let sm = KernelSmoother::new(samples.locations(), dist, kernel, h)?;
        scores.push(sm.gcv_score(samples.responses(), region));
    }
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1).then(h_grid[b.0].total_cmp(&h_grid[a.0])))
        .map(|(i, _)| i)
        .ok_or(Error::NoAdmissibleLambda)?;
    Ok((h_grid[best], scores))
}

/// Default geometric bandwidth grid for [`kernel_gcv_bandwidth`].
pub fn default_bandwidth_grid(n: usize) -> Vec<f64> {
    let lo = (4.0 / n as f64).max(0.01);
    let hi = 0.2_f64.max(lo * 1.5);
    let k = 25;
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

/// Star discrepancy of the sample locations, used for weight diagnostics.
pub fn design_discrepancy(samples: &SampleSet, dist: &DesignDistribution) -> Result<f64> {
    Ok(star_discrepancy(samples.locations(), dist)?.d_star)
}
