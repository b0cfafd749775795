//! Sign-constrained smoothing splines.
//!
//! Constraints say that a scaled difference `D_d f` keeps one sign at every
//! staggered grid point inside an interval. The resulting quadratic program is
//! solved by a dual active-set method (Goldfarb-Idnani) that starts from the
//! unconstrained spline and adds violated constraints one at a time, working
//! with the banded factor of the spline Hessian and a small dense Schur
//! complement for the active rows.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::banded::{BandedFactor, BandedSym};
use crate::error::{invalid, Error, Result};
use crate::numeric::mean_sd;
use crate::sample::SampleSet;
use crate::spline::{diff_stencil, grid_diff, stagger_points, SplineConfig, SplineFit, SplineSystem};

/// `sign * f^(deriv) >= 0` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignConstraint {
    pub deriv: usize,
    pub lo: f64,
    pub hi: f64,
    pub sign: i8,
}

impl SignConstraint {
    pub fn new(deriv: usize, lo: f64, hi: f64, sign: i8) -> Self {
        Self { deriv, lo, hi, sign }
    }
}

/// A set of interval sign constraints, possibly on several derivative orders.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSpec {
    intervals: Vec<SignConstraint>,
}

/// One linear inequality `coeffs . x[start..] >= lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub start: usize,
    pub coeffs: Vec<f64>,
    pub lower: f64,
}

impl ConstraintRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(&x[self.start..]).map(|(a, b)| a * b).sum()
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        self.value(x) - self.lower
    }

    fn add_to(&self, scale: f64, out: &mut [f64]) {
        for (k, c) in self.coeffs.iter().enumerate() {
            out[self.start + k] += scale * c;
        }
    }
}

impl ConstraintSpec {
    /// Validates and normalizes: same-sign overlaps on one derivative order are
    /// merged, opposite-sign overlaps are rejected.
    pub fn new(intervals: Vec<SignConstraint>) -> Result<Self> {
        for c in &intervals {
            if !(0.0 <= c.lo && c.lo < c.hi && c.hi <= 1.0) {
                return Err(invalid(format!("constraint interval [{}, {}] is not inside [0, 1]", c.lo, c.hi)));
            }
            if c.sign != 1 && c.sign != -1 {
                return Err(invalid("constraint sign must be +1 or -1"));
            }
        }
        let mut sorted = intervals;
        sorted.sort_by(|a, b| a.deriv.cmp(&b.deriv).then(a.lo.total_cmp(&b.lo)));
        let mut out: Vec<SignConstraint> = Vec::with_capacity(sorted.len());
        for c in sorted {
            if let Some(last) = out.last_mut() {
                if last.deriv == c.deriv && c.lo < last.hi && last.sign != c.sign {
                    return Err(invalid(format!(
                        "opposite-sign constraints on derivative {} overlap near {}",
                        c.deriv, c.lo
                    )));
                }
                if last.deriv == c.deriv && c.lo <= last.hi && last.sign == c.sign {
                    last.hi = last.hi.max(c.hi);
                    continue;
                }
            }
            out.push(c);
        }
        Ok(Self { intervals: out })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// All intervals on one derivative order.
    pub fn single_order(deriv: usize, intervals: &[(f64, f64, i8)]) -> Result<Self> {
        Self::new(intervals.iter().map(|&(lo, hi, s)| SignConstraint::new(deriv, lo, hi, s)).collect())
    }

    pub fn intervals(&self) -> &[SignConstraint] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn max_deriv(&self) -> usize {
        self.intervals.iter().map(|c| c.deriv).max().unwrap_or(0)
    }

    /// Unit-norm inequality rows on a grid of `g` points.
    pub fn rows(&self, g: usize) -> Vec<ConstraintRow> {
        let delta = 1.0 / (g - 1) as f64;
        let mut rows = Vec::new();
        for c in &self.intervals {
            if c.deriv + 1 > g {
                continue;
            }
            let stencil = diff_stencil(c.deriv, delta);
            let norm = stencil.iter().map(|v| v * v).sum::<f64>().sqrt();
            let coeffs: Vec<f64> = stencil.iter().map(|v| c.sign as f64 * v / norm).collect();
            for (k, x) in stagger_points(g, c.deriv).into_iter().enumerate() {
                if x >= c.lo - 1e-12 && x <= c.hi + 1e-12 {
                    rows.push(ConstraintRow { start: k, coeffs: coeffs.clone(), lower: 0.0 });
                }
            }
        }
        rows
    }

    /// Most negative `sign * D_d f` over the constrained grid points (0 when satisfied).
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let g = values.len();
        let mut worst: f64 = 0.0;
        for c in &self.intervals {
            let d = grid_diff(values, c.deriv);
            for (x, v) in stagger_points(g, c.deriv).into_iter().zip(d) {
                if x >= c.lo - 1e-12 && x <= c.hi + 1e-12 {
                    worst = worst.max(-(c.sign as f64) * v);
                }
            }
        }
        worst
    }

    /// Size of the floating-point error in the scaled differences of `values`:
    /// a function that lies in the cone exactly can miss it by this much on the grid.
    pub fn rounding_tolerance(&self, values: &[f64]) -> f64 {
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let steps = values.len().saturating_sub(1) as f64;
        let d = self.max_deriv() as i32;
        8.0 * f64::EPSILON * scale * (2.0 * steps).powi(d)
    }

    /// Violation of an order-`deriv` row that the solver accepts as feasible,
    /// in units of the scaled differences, for a fit of magnitude `scale`.
    pub fn solver_tolerance(deriv: usize, g: usize, scale: f64) -> f64 {
        let stencil = diff_stencil(deriv, 1.0 / (g - 1) as f64);
        let norm = stencil.iter().map(|v| v * v).sum::<f64>().sqrt();
        QpOptions::default().feas_tol * norm * scale
    }

    /// Grid-level cone membership with an absolute tolerance on the scaled differences.
    pub fn is_satisfied_by(&self, values: &[f64], tol: f64) -> bool {
        self.max_violation(values) <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub values: Vec<f64>,
    /// Indices into the constraint rows.
    pub active_set: Vec<usize>,
    /// Multipliers aligned with `active_set`.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Objective after every step; nondecreasing for this dual method.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Defaults to `10 * rows + 100`.
    pub max_iter: Option<usize>,
    pub feas_tol: f64,
    pub kkt_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: None, feas_tol: 1e-9, kkt_tol: 1e-8 }
    }
}

/// Banded SPD quadratic `(1/2) x^T Q x - b^T x` with its factor.
#[derive(Debug, Clone, Copy)]
pub struct BandedQuadratic<'a> {
    pub hessian: &'a BandedSym,
    pub factor: &'a BandedFactor,
}

struct ActiveSet {
    idx: Vec<usize>,
    u: Vec<f64>,
    /// Rows of the lower Cholesky factor of the Schur complement `N^T Q^{-1} N`.
    l: Vec<Vec<f64>>,
}

impl ActiveSet {
    fn new() -> Self {
        Self { idx: Vec::new(), u: Vec::new(), l: Vec::new() }
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    fn forward(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        for (i, row) in self.l.iter().enumerate() {
            let s = x[i] - dot(&row[..i], &x[..i]);
            x[i] = s / row[i];
        }
        x
    }

    fn cholesky_solve(&self, v: &[f64]) -> Vec<f64> {
        let mut x = self.forward(v);
        for i in (0..self.len()).rev() {
            x[i] /= self.l[i][i];
            let xi = x[i];
            for (xj, lij) in x[..i].iter_mut().zip(&self.l[i][..i]) {
                *xj -= lij * xi;
            }
        }
        x
    }

    /// Appends a row whose Schur column is `col` (last entry the diagonal).
    fn push(&mut self, row: usize, col: &[f64], u: f64) -> Result<()> {
        let k = self.len();
        let mut w = self.forward(&col[..k]);
        let d2 = col[k] - dot(&w, &w);
        if !(d2 > 0.0) {
            return Err(Error::Conditioning("dependent active constraint".into()));
        }
        w.push(d2.sqrt());
        self.l.push(w);
        self.idx.push(row);
        self.u.push(u);
        Ok(())
    }

    /// Drops an active row and restores the triangular factor with Givens rotations.
    fn remove(&mut self, pos: usize) -> Result<()> {
        self.idx.remove(pos);
        self.u.remove(pos);
        self.l.remove(pos);
        // rows at and below `pos` now carry one entry right of the diagonal
        for j in pos..self.l.len() {
            let (a, b) = (self.l[j][j], self.l[j][j + 1]);
            let r = a.hypot(b);
            if !(r > 0.0) {
                return Err(Error::Conditioning("active Schur complement lost definiteness".into()));
            }
            let (c, s) = (a / r, b / r);
            for row in self.l[j..].iter_mut() {
                let (x, y) = (row[j], row[j + 1]);
                row[j] = c * x + s * y;
                row[j + 1] = c * y - s * x;
            }
            self.l[j].truncate(j + 1);
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(q: &BandedQuadratic, b: &[f64], x: &[f64]) -> f64 {
    0.5 * q.hessian.quad_form(x) - dot(b, x)
}

fn row_vector(row: &ConstraintRow, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    row.add_to(1.0, &mut v);
    v
}

/// Stationarity, feasibility, sign and complementarity residual of a candidate.
fn kkt_residual(q: &BandedQuadratic, b: &[f64], rows: &[ConstraintRow], x: &[f64], active: &[usize], u: &[f64]) -> f64 {
    let qx = q.hessian.matvec(x);
    let mut grad: Vec<f64> = qx.iter().zip(b).map(|(a, c)| a - c).collect();
    for (&i, &ui) in active.iter().zip(u) {
        rows[i].add_to(-ui, &mut grad);
    }
    let scale = qx.iter().chain(b).fold(1e-300f64, |a, v| a.max(v.abs()));
    let stat = grad.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale;
    let feas = rows.iter().fold(0.0f64, |a, r| a.max(-r.slack(x)));
    let comp = active.iter().fold(0.0f64, |a, &i| a.max(rows[i].slack(x).abs()));
    let sign = u.iter().fold(0.0f64, |a, v| a.max(-v));
    stat.max(feas).max(comp).max(sign)
}

/// KKT-certified minimizer of `(1/2) x^T Q x - b^T x` subject to `row . x >= lower`.
pub fn active_set_qp(q: BandedQuadratic, b: &[f64], rows: &[ConstraintRow], opts: QpOptions) -> Result<QpSolution> {
    let start = q.factor.solve(b);
    active_set_qp_from(q, b, &start, rows, opts)
}

/// [`active_set_qp`] started from a caller-supplied unconstrained minimizer
/// `Q^{-1} b`, typically one computed more accurately than a solve with the factor.
pub fn active_set_qp_from(
    q: BandedQuadratic,
    b: &[f64],
    unconstrained: &[f64],
    rows: &[ConstraintRow],
    opts: QpOptions,
) -> Result<QpSolution> {
    let n = q.hessian.dim();
    if b.len() != n || unconstrained.len() != n {
        return Err(invalid("linear term does not match the quadratic form"));
    }
    for r in rows {
        if r.start + r.coeffs.len() > n {
            return Err(invalid("constraint row exceeds the problem dimension"));
        }
    }
    let cap = opts.max_iter.unwrap_or(10 * rows.len() + 100);
    let mut x = unconstrained.to_vec();
    let mut act = ActiveSet::new();
    let mut trace = vec![objective(&q, b, &x)];
    let mut iterations = 0;
    let mut bland = false;
    let mut seen: HashSet<(Vec<usize>, usize)> = HashSet::new();
    let mut last_obj = trace[0];

    let snapshot = |x: &[f64], act: &ActiveSet, trace: &[f64], iterations: usize| QpSolution {
        values: x.to_vec(),
        active_set: act.idx.clone(),
        multipliers: act.u.clone(),
        kkt_residual: kkt_residual(&q, b, rows, x, &act.idx, &act.u),
        iterations,
        objective_trace: trace.to_vec(),
    };

    loop {
        // choose a violated constraint
        let mut in_active = vec![false; rows.len()];
        for &j in &act.idx {
            in_active[j] = true;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if in_active[i] {
                continue;
            }
            let s = r.slack(&x);
            if s < -opts.feas_tol {
                match pick {
                    None => pick = Some((i, s)),
                    Some((_, best)) if !bland && s < best => pick = Some((i, s)),
                    _ => {}
                }
            }
        }
        let Some((p, _)) = pick else { break };
        let np = &rows[p];
        let npv = row_vector(np, n);
        let mut up = 0.0;

        // steps toward satisfying constraint p, dropping blockers as needed
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::NonConvergence { cap, best: Box::new(snapshot(&x, &act, &trace, iterations)) });
            }
            let w = q.factor.solve(&npv);
            let v: Vec<f64> = act.idx.iter().map(|&j| rows[j].value(&w)).collect();
            let r = act.cholesky_solve(&v);
            // primal direction Q^{-1} (n_p - N r)
            let mut shifted = npv.clone();
            for (&j, &rj) in act.idx.iter().zip(&r) {
                rows[j].add_to(-rj, &mut shifted);
            }
            let z = q.factor.solve(&shifted);
            let zn = np.value(&z);
            let wn = np.value(&w);
            let full = if zn > 1e-12 * wn.abs().max(1e-300) { -np.slack(&x) / zn } else { f64::INFINITY };
            let mut partial = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (pos, (&rj, &uj)) in r.iter().zip(&act.u).enumerate() {
                if rj > 1e-14 {
                    let ratio = uj.max(0.0) / rj;
                    let better =
                        ratio < partial || (ratio == partial && drop.is_some_and(|d| act.idx[pos] < act.idx[d]));
                    if better {
                        partial = ratio;
                        drop = Some(pos);
                    }
                }
            }
            let t = full.min(partial);
            if !t.is_finite() {
                return Err(Error::Infeasible);
            }
            if full.is_finite() {
                for (a, c) in x.iter_mut().zip(&z) {
                    *a += t * c;
                }
            }
            for (uj, rj) in act.u.iter_mut().zip(&r) {
                *uj -= t * rj;
            }
            up += t;
            let obj = objective(&q, b, &x);
            trace.push(obj);

            // cycle detection on degenerate steps
            if obj > last_obj + 1e-14 * last_obj.abs().max(1.0) {
                seen.clear();
                last_obj = obj;
            } else {
                let mut key = act.idx.clone();
                key.sort_unstable();
                if !seen.insert((key, p)) {
                    if bland {
                        return Err(Error::Cycling);
                    }
                    bland = true;
                    seen.clear();
                }
            }

            if full <= partial {
                let col: Vec<f64> = v.iter().copied().chain([wn]).collect();
                act.push(p, &col, up)?;
                break;
            }
            act.remove(drop.expect("partial step without a blocking constraint"))?;
        }
    }

    // polish: exact equality-constrained solve on the final active set
    let x0 = unconstrained.to_vec();
    let rhs: Vec<f64> = act.idx.iter().map(|&j| rows[j].lower - rows[j].value(&x0)).collect();
    let mut polished = x.clone();
    let mut u_pol = act.u.clone();
    if act.len() > 0 {
        let mut zs = Vec::with_capacity(act.len());
        for &j in &act.idx {
            zs.push(q.factor.solve(&row_vector(&rows[j], n)));
        }
        let k = act.len();
        let m = DMatrix::from_fn(k, k, |a, c| rows[act.idx[a]].value(&zs[c]));
        if let Some(ch) = m.cholesky() {
            let u = ch.solve(&DVector::from_vec(rhs));
            polished = x0.clone();
            for (ui, zi) in u.iter().zip(&zs) {
                for (a, c) in polished.iter_mut().zip(zi) {
                    *a += ui * c;
                }
            }
            u_pol = u.iter().copied().collect();
        }
    } else {
        polished = x0;
    }
    let res_pol = kkt_residual(&q, b, rows, &polished, &act.idx, &u_pol);
    let res_raw = kkt_residual(&q, b, rows, &x, &act.idx, &act.u);
    if res_pol <= res_raw {
        x = polished;
        act.u = u_pol;
    }
    trace.push(objective(&q, b, &x));
    let sol = snapshot(&x, &act, &trace, iterations);
    Ok(sol)
}

/// Constrained spline fit plus the solver certificate.
pub fn fit_constrained(
    samples: &SampleSet,
    config: &SplineConfig,
    constraints: &ConstraintSpec,
) -> Result<(SplineFit, QpSolution)> {
    let sys = SplineSystem::new(samples, config)?;
    let rows = constraints.rows(sys.grid_size());
    if rows.is_empty() || constraints.is_satisfied_by(sys.unconstrained_solution(), 0.0) {
        let fit = sys.unconstrained_fit();
        let sol = QpSolution {
            values: fit.values.clone(),
            active_set: Vec::new(),
            multipliers: Vec::new(),
            kkt_residual: 0.0,
            iterations: 0,
            objective_trace: vec![fit.vp_value],
        };
        return Ok((fit, sol));
    }
    // Solve on responses standardized to unit sd; homogeneous constraints are scale free.
    let (_, sd) = mean_sd(samples.responses());
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let b: Vec<f64> = sys.linear_term().iter().map(|v| v / scale).collect();
    let start: Vec<f64> = sys.unconstrained_solution().iter().map(|v| v / scale).collect();
    let quad = BandedQuadratic { hessian: sys.hessian(), factor: sys.factor() };
    let mut sol = active_set_qp_from(quad, &b, &start, &rows, QpOptions::default())?;
    for v in sol.values.iter_mut() {
        *v *= scale;
    }
    for u in sol.multipliers.iter_mut() {
        *u *= scale;
    }
    let offset =
        0.5 * sys.responses().iter().map(|y| y * y).sum::<f64>() * 2.0 / (sys.n() as f64 * sys.sigma * sys.sigma);
    for o in sol.objective_trace.iter_mut() {
        *o = *o * scale * scale + offset;
    }
    let p_eff = sys.trace_unconstrained() - active_trace_correction(&sys, &rows, &sol.active_set);
    let fit = sys.make_fit(sol.values.clone(), p_eff, sol.active_set.clone());
    Ok((fit, sol))
}

/// `c tr(M^{-1} (S Z)^T (S Z))` for the active rows.
fn active_trace_correction(sys: &SplineSystem, rows: &[ConstraintRow], active: &[usize]) -> f64 {
    let k = active.len();
    if k == 0 {
        return 0.0;
    }
    let g = sys.grid_size();
    let zs: Vec<Vec<f64>> = active.iter().map(|&j| sys.factor().solve(&row_vector(&rows[j], g))).collect();
    let m = DMatrix::from_fn(k, k, |a, c| rows[active[a]].value(&zs[c]));
    let at_data: Vec<f64> = zs.iter().flat_map(|z| sys.interpolate(z)).collect();
    let sz = DMatrix::from_vec(sys.n(), k, at_data);
    let gram = sz.tr_mul(&sz) * sys.data_weight();
    match m.cholesky() {
        Some(ch) => ch.solve(&gram).trace(),
        None => 0.0,
    }
}
