//! Symmetric banded matrices and their upper-triangular factors `Q = R^T R`.
//!
//! Factors come either from a banded Cholesky decomposition or from Givens
//! QR of a stacked row system; the latter keeps stiff penalized problems
//! (huge smoothing parameters) accurate where normal equations would not.

use crate::error::{invalid, Error, Result};

/// Symmetric matrix with half-bandwidth `bw`, lower band stored row-wise:
/// `lo[i * (bw + 1) + k] = A[i][i - k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    lo: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, lo: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        if k > self.bw {
            0.0
        } else {
            self.lo[i * (self.bw + 1) + k]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        assert!(k <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        self.lo[i * (self.bw + 1) + k] += v;
    }

    /// `A += weight * v v^T` with `v` supported on `start..start + coeffs.len()`.
    pub fn add_outer(&mut self, start: usize, coeffs: &[f64], weight: f64) {
        for (a, &ca) in coeffs.iter().enumerate() {
            for (b, &cb) in coeffs.iter().enumerate().take(a + 1) {
                self.add(start + a, start + b, weight * ca * cb);
            }
        }
    }

    pub fn scaled_add(&mut self, other: &BandedSym, scale: f64) {
        assert_eq!(self.n, other.n);
        for i in 0..self.n {
            for k in 0..=other.bw.min(i) {
                self.add(i, i - k, scale * other.get(i, i - k));
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let w = self.bw + 1;
        for i in 0..self.n {
            let row = &self.lo[i * w..(i + 1) * w];
            for k in 0..=self.bw.min(i) {
                let a = row[k];
                if a == 0.0 {
                    continue;
                }
                y[i] += a * x[i - k];
                if k > 0 {
                    y[i - k] += a * x[i];
                }
            }
        }
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Banded Cholesky, `A = R^T R`.
    pub fn cholesky(&self) -> Result<BandedFactor> {
        let n = self.n;
        let bw = self.bw;
        let mut f = BandedFactor::zeros(n, bw);
        for j in 0..n {
            // R[j][j]^2 = A[j][j] - sum_{i<j} R[i][j]^2
            let mut d = self.get(j, j);
            for i in j.saturating_sub(bw)..j {
                let r = f.get(i, j);
                d -= r * r;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Conditioning(format!("nonpositive pivot {d:.3e} at column {j}")));
            }
            let rjj = d.sqrt();
            f.set(j, j, rjj);
            for c in j + 1..(j + bw + 1).min(n) {
                let mut v = self.get(j, c);
                for i in c.saturating_sub(bw)..j {
                    v -= f.get(i, j) * f.get(i, c);
                }
                f.set(j, c, v / rjj);
            }
        }
        Ok(f)
    }
}

/// Upper-triangular banded factor, `r[i * (bw + 1) + k] = R[i][i + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedFactor {
    n: usize,
    bw: usize,
    r: Vec<f64>,
}

impl BandedFactor {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, r: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j < i || j - i > self.bw {
            0.0
        } else {
            self.r[i * (self.bw + 1) + (j - i)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.r[i * (self.bw + 1) + (j - i)] = v;
    }

    /// Solves `R^T R x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let w = self.bw + 1;
        // R^T z = b
        for i in 0..n {
            let mut v = x[i];
            for k in 1..=self.bw.min(i) {
                v -= self.r[(i - k) * w + k] * x[i - k];
            }
            x[i] = v / self.r[i * w];
        }
        // R x = z
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in 1..=self.bw.min(n - 1 - i) {
                v -= self.r[i * w + k] * x[i + k];
            }
            x[i] = v / self.r[i * w];
        }
    }

    /// Solves `R x = z`.
    pub fn back_solve(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let w = self.bw + 1;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in 1..=self.bw.min(n - 1 - i) {
                v -= self.r[i * w + k] * x[i + k];
            }
            x[i] = v / self.r[i * w];
        }
        x
    }

    /// Band of `(R^T R)^{-1}`: `out[i][k] = Sigma[i][i + k]` for `k <= bw`.
    ///
    /// Bottom-up recursion from `R Sigma = R^{-T}`; exact up to rounding and
    /// `O(n bw^2)`.
    pub fn inverse_band(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let bw = self.bw;
        let mut s = vec![vec![0.0; bw + 1]; n];
        let sig = |s: &Vec<Vec<f64>>, a: usize, b: usize| -> f64 {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            s[a][b - a]
        };
        for i in (0..n).rev() {
            let rii = self.get(i, i);
            let hi = (i + bw).min(n - 1);
            for j in (i..=hi).rev() {
                let mut acc = 0.0;
                for k in i + 1..=hi {
                    acc += self.get(i, k) * sig(&s, k, j);
                }
                let v = if j == i { (1.0 / rii - acc) / rii } else { -acc / rii };
                s[i][j - i] = v;
            }
        }
        s
    }

    /// Largest over smallest diagonal magnitude.
    pub fn diag_ratio(&self) -> f64 {
        let d = (0..self.n).map(|i| self.get(i, i).abs());
        let (lo, hi) = d.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi / lo
    }
}

/// Accumulates rows of a least-squares system into a banded `R` by Givens rotations.
#[derive(Debug, Clone)]
pub struct GivensAccumulator {
    f: BandedFactor,
    filled: Vec<bool>,
    buf: Vec<f64>,
    qtb: Vec<f64>,
}

impl GivensAccumulator {
    pub fn new(n: usize, bw: usize) -> Self {
        Self { f: BandedFactor::zeros(n, bw), filled: vec![false; n], buf: vec![0.0; bw + 1], qtb: vec![0.0; n] }
    }

    /// Adds the row `scale * coeffs` occupying columns `start..start + coeffs.len()`.
    pub fn add_row(&mut self, start: usize, coeffs: &[f64], scale: f64) -> Result<()> {
        self.add_row_rhs(start, coeffs, scale, 0.0)
    }

    /// Adds the equation `scale * coeffs . x = scale * rhs`.
    pub fn add_row_rhs(&mut self, start: usize, coeffs: &[f64], scale: f64, rhs: f64) -> Result<()> {
        let bw = self.f.bw;
        let n = self.f.n;
        if coeffs.len() > bw + 1 || start + coeffs.len() > n {
            return Err(invalid("row does not fit the band"));
        }
        let w = bw + 1;
        let v = &mut self.buf;
        v.iter_mut().for_each(|x| *x = 0.0);
        for (k, c) in coeffs.iter().enumerate() {
            v[k] = scale * c;
        }
        let mut rv = scale * rhs;
        let mut j = start;
        while j < n {
            if v[0] != 0.0 {
                if !self.filled[j] {
                    let width = w.min(n - j);
                    self.f.r[j * w..j * w + width].copy_from_slice(&v[..width]);
                    self.filled[j] = true;
                    self.qtb[j] = rv;
                    return Ok(());
                }
                let rjj = self.f.r[j * w];
                let rad = rjj.hypot(v[0]);
                let (c, s) = (rjj / rad, v[0] / rad);
                for k in 0..w.min(n - j) {
                    let a = self.f.r[j * w + k];
                    let b = v[k];
                    self.f.r[j * w + k] = c * a + s * b;
                    v[k] = -s * a + c * b;
                }
                let a = self.qtb[j];
                self.qtb[j] = c * a + s * rv;
                rv = -s * a + c * rv;
            }
            v.copy_within(1.., 0);
            v[bw] = 0.0;
            if v.iter().all(|x| *x == 0.0) {
                return Ok(());
            }
            j += 1;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<BandedFactor> {
        self.finish_with_rhs().map(|(f, _)| f)
    }

    /// Factor plus the rotated right-hand side; `f.back_solve(qtb)` is the
    /// least-squares solution of the accumulated rows.
    pub fn finish_with_rhs(self) -> Result<(BandedFactor, Vec<f64>)> {
        let n = self.f.n;
        let max = (0..n).map(|i| self.f.get(i, i).abs()).fold(0.0, f64::max);
        for i in 0..n {
            if !self.filled[i] || self.f.get(i, i).abs() <= 1e-14 * max {
                return Err(Error::Conditioning(format!(
                    "rank deficient at column {i}: not enough data to fix the penalty null space"
                )));
            }
        }
        Ok((self.f, self.qtb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rows(n: usize, bw: usize, count: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..count)
            .map(|r| {
                let start = r % (n - bw);
                (start, (0..=bw).map(|_| next()).collect())
            })
            .collect()
    }

    fn dense_inverse(a: &BandedSym) -> nalgebra::DMatrix<f64> {
        let n = a.dim();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        m.try_inverse().unwrap()
    }

    #[test]
    fn cholesky_and_qr_agree_with_dense() {
        let (n, bw) = (12, 2);
        let rows = random_rows(n, bw, 30, 3);
        let mut a = BandedSym::zeros(n, bw);
        let mut acc = GivensAccumulator::new(n, bw);
        for (s, c) in &rows {
            a.add_outer(*s, c, 1.0);
            acc.add_row(*s, c, 1.0).unwrap();
        }
        let chol = a.cholesky().unwrap();
        let qr = acc.finish().unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let inv = dense_inverse(&a);
        let expect = &inv * nalgebra::DVector::from_vec(b.clone());
        for f in [&chol, &qr] {
            let x = f.solve(&b);
            for i in 0..n {
                assert!((x[i] - expect[i]).abs() < 1e-10);
            }
            let band = f.inverse_band();
            for i in 0..n {
                for k in 0..=bw.min(n - 1 - i) {
                    assert!((band[i][k] - inv[(i, i + k)]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn rotated_rhs_gives_least_squares_solution() {
        let (n, bw) = (8, 2);
        let rows = random_rows(n, bw, 20, 5);
        let mut a = BandedSym::zeros(n, bw);
        let mut atb = vec![0.0; n];
        let mut acc = GivensAccumulator::new(n, bw);
        for (r, (s, c)) in rows.iter().enumerate() {
            let rhs = (r as f64 * 0.37).cos();
            a.add_outer(*s, c, 1.0);
            for (k, ck) in c.iter().enumerate() {
                atb[s + k] += ck * rhs;
            }
            acc.add_row_rhs(*s, c, 2.0, rhs).unwrap();
        }
        let (f, qtb) = acc.finish_with_rhs().unwrap();
        let x = f.back_solve(&qtb);
        let expect = a.cholesky().unwrap().solve(&atb);
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let (n, bw) = (9, 3);
        let mut a = BandedSym::zeros(n, bw);
        for (s, c) in random_rows(n, bw, 12, 9) {
            a.add_outer(s, &c, 0.7);
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let y = a.matvec(&x);
        for i in 0..n {
            let d: f64 = (0..n).map(|j| a.get(i, j) * x[j]).sum();
            assert!((y[i] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_systems_are_reported() {
        let mut acc = GivensAccumulator::new(4, 1);
        acc.add_row(0, &[1.0, -1.0], 1.0).unwrap();
        acc.add_row(1, &[1.0, -1.0], 1.0).unwrap();
        acc.add_row(2, &[1.0, -1.0], 1.0).unwrap();
        assert!(acc.finish().is_err());
        let a = BandedSym::zeros(3, 1);
        assert!(a.cholesky().is_err());
    }
}
