//! Tridiagonal systems.
//!
//! Every operator in the lab lives on a 1-D interior grid with homogeneous
//! Dirichlet data, so all Jacobians and Laplacians are tridiagonal and one
//! Thomas sweep replaces a general sparse solver.

use std::f64::consts::PI;

/// Tridiagonal matrix stored by diagonals. `lower[i]` couples row `i` to
/// column `i - 1` (`lower[0]` unused), `upper[i]` couples row `i` to column
/// `i + 1` (`upper[n - 1]` unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn fill_zero(&mut self) {
        self.lower.iter_mut().for_each(|x| *x = 0.0);
        self.diag.iter_mut().for_each(|x| *x = 0.0);
        self.upper.iter_mut().for_each(|x| *x = 0.0);
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Replace `self` by `I - scale * self`.
    pub fn identity_minus_scaled(&mut self, scale: f64) {
        for v in self.lower.iter_mut() {
            *v *= -scale;
        }
        for v in self.upper.iter_mut() {
            *v *= -scale;
        }
        for v in self.diag.iter_mut() {
            *v = 1.0 - scale * *v;
        }
    }

    /// Solve `A x = rhs` in place with the Thomas algorithm. Returns `false`
    /// when a pivot vanishes or the result is not finite.
    pub fn solve_in_place(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) -> bool {
        let n = self.len();
        if n == 0 {
            return true;
        }
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut denom = self.diag[0];
        if denom == 0.0 || !denom.is_finite() {
            return false;
        }
        scratch[0] = self.upper[0] / denom;
        rhs[0] /= denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * scratch[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return false;
            }
            scratch[i] = if i + 1 < n { self.upper[i] / denom } else { 0.0 };
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
        rhs.iter().all(|x| x.is_finite())
    }
}

/// Pre-factored negative Dirichlet Laplacian `-Δ_h` on `n` interior nodes of
/// spacing `h`. The factorization is computed once and reused for every
/// `H^{-1}` inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct NegLaplacianSolver {
    n: usize,
    h: f64,
    // Thomas multipliers and pivots for the constant-coefficient matrix.
    c_prime: Vec<f64>,
    pivots: Vec<f64>,
}

impl NegLaplacianSolver {
    pub fn new(n: usize, h: f64) -> Self {
        let off = -1.0 / (h * h);
        let d = 2.0 / (h * h);
        let mut c_prime = vec![0.0; n];
        let mut pivots = vec![0.0; n];
        if n > 0 {
            pivots[0] = d;
            c_prime[0] = off / d;
            for i in 1..n {
                pivots[i] = d - off * c_prime[i - 1];
                c_prime[i] = off / pivots[i];
            }
        }
        Self {
            n,
            h,
            c_prime,
            pivots,
        }
    }

    /// Overwrite `rhs` with `(-Δ_h)^{-1} rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.n;
        if n == 0 {
            return;
        }
        let off = -1.0 / (self.h * self.h);
        rhs[0] /= self.pivots[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - off * rhs[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = rhs.to_vec();
        self.solve_in_place(&mut out);
        out
    }
}

/// Discrete Dirichlet Laplacian `(Δ_h v)_i = (v_{i-1} - 2 v_i + v_{i+1}) / h²`
/// with zero boundary values.
pub fn apply_laplacian(v: &[f64], h: f64, out: &mut [f64]) {
    let n = v.len();
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        let left = if i > 0 { v[i - 1] } else { 0.0 };
        let right = if i + 1 < n { v[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * v[i] + right) * inv_h2;
    }
}

/// k-th eigenvalue (k ≥ 1) of `-Δ_h` on `n` interior nodes of an interval of
/// length `length`: `(2 / h²)(1 - cos(kπh/L))`.
pub fn dirichlet_eigenvalue(k: usize, n: usize, length: f64) -> f64 {
    let h = length / (n as f64 + 1.0);
    2.0 / (h * h) * (1.0 - (k as f64 * PI * h / length).cos())
}

/// k-th eigenvector of `-Δ_h`, normalized so that `h Σ e_i² = 1`.
pub fn dirichlet_eigenvector(k: usize, n: usize, length: f64) -> Vec<f64> {
    let h = length / (n as f64 + 1.0);
    let scale = (2.0 / length).sqrt();
    (1..=n)
        .map(|i| scale * (k as f64 * PI * i as f64 * h / length).sin())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_product() {
        let n = 7;
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.diag[i] = 4.0 + i as f64;
            a.lower[i] = -1.0 - 0.1 * i as f64;
            a.upper[i] = -0.5;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.3).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x, &mut b);
        let mut scratch = Vec::new();
        assert!(a.solve_in_place(&mut b, &mut scratch));
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn neg_laplacian_inverts_apply() {
        let n = 50;
        let h = 1.0 / 51.0;
        let solver = NegLaplacianSolver::new(n, h);
        let v: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.01).cos()).collect();
        let mut lv = vec![0.0; n];
        apply_laplacian(&v, h, &mut lv);
        lv.iter_mut().for_each(|x| *x = -*x);
        solver.solve_in_place(&mut lv);
        for (a, b) in lv.iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenpairs_are_consistent() {
        let (n, length) = (40, 2.0);
        let h = length / 41.0;
        for k in [1, 3, 17] {
            let e = dirichlet_eigenvector(k, n, length);
            let lam = dirichlet_eigenvalue(k, n, length);
            let mut le = vec![0.0; n];
            apply_laplacian(&e, h, &mut le);
            for (a, b) in le.iter().zip(&e) {
                assert!((a + lam * b).abs() < 1e-8 * lam);
            }
            let norm: f64 = h * e.iter().map(|x| x * x).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}
