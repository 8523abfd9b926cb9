//! Compressed sparse row operators on the grid stencil and a diagonally
//! preconditioned BiCGStab solver.
//!
//! Grids stay at desk scale (at most a few hundred cells per axis), so a
//! five-point stencil in CSR with a Jacobi-preconditioned Krylov solve is
//! all the linear algebra this crate needs.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-wise builder; rows may be filled in any order but each row's
/// entries are accumulated by column.
pub struct SparseBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        let entries = &mut self.rows[row];
        match entries.iter_mut().find(|(c, _)| *c == col) {
            Some((_, v)) => *v += val,
            None => entries.push((col, val)),
        }
    }

    pub fn build(mut self) -> SparseOperator {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in &mut self.rows {
            row.sort_unstable_by_key(|(c, _)| *c);
            for &(c, v) in row.iter() {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseOperator { n: self.n, row_ptr, cols, vals }
    }
}

impl SparseOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            if let Some(k) = cols.iter().position(|&c| c == i) {
                d[i] = vals[k];
            }
        }
        d
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                s[c] += v;
            }
        }
        s
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (jc, jv) = self.row(j);
                let vt = jc
                    .iter()
                    .position(|&c| c == i)
                    .map(|k| jv[k])
                    .unwrap_or(0.0);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    /// Returns a copy with every entry scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= s;
        }
        out
    }

    /// Returns a copy with `shift[i]` added to the i-th diagonal entry.
    /// The stencil always contains the diagonal, so no fill-in occurs.
    pub fn with_diagonal_shift(&self, shift: &[f64]) -> Self {
        debug_assert_eq!(shift.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            let (a, b) = (out.row_ptr[i], out.row_ptr[i + 1]);
            let k = out.cols[a..b]
                .iter()
                .position(|&c| c == i)
                .expect("stencil must contain the diagonal");
            out.vals[a + k] += shift[i];
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` by BiCGStab with Jacobi (diagonal) preconditioning.
///
/// Converges when the 2-norm of the residual drops below `tol * ||b||`.
/// Non-convergence is an explicit failure carrying the residual history.
pub fn linear_solve(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    linear_solve_from(a, b, None, tol, max_iter)
}

/// [`linear_solve`] with an initial guess.
pub fn linear_solve_from(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = a.n();
    debug_assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }

    // Jacobi preconditioner: zero diagonals fall back to identity rows.
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.matvec(&x);
        for i in 0..n {
            r[i] -= ax[i];
        }
    }

    let mut history = Vec::new();
    let mut rnorm = norm2(&r);
    if rnorm <= tol * bnorm {
        return Ok(x);
    }

    let mut r_hat = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];

    for it in 0..max_iter {
        let rho_next = dot(&r_hat, &r);
        if rho_next.abs() < 1e-300 {
            // breakdown: restart with the current residual
            r_hat.copy_from_slice(&r);
            rho = dot(&r_hat, &r);
            p.copy_from_slice(&r);
            if rho.abs() < 1e-300 {
                break;
            }
        } else {
            let beta = (rho_next / rho) * (alpha / omega);
            rho = rho_next;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }

        for i in 0..n {
            y[i] = inv_diag[i] * p[i];
        }
        a.matvec_into(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 {
            history.push(rnorm / bnorm);
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.matvec_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            history.push(rnorm / bnorm);
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = norm2(&r);
        history.push(rnorm / bnorm);
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        if it > 0 && it % 50 == 0 {
            // recompute the true residual to fight drift
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            rnorm = norm2(&r);
            if rnorm <= tol * bnorm {
                return Ok(x);
            }
        }
    }

    Err(Error::LinearSolve {
        iterations: history.len(),
        residual: rnorm / bnorm,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve_returns_rhs() {
        let a = SparseOperator::identity(10);
        let b: Vec<f64> = (0..10).map(|i| i as f64 - 3.0).collect();
        let x = linear_solve(&a, &b, 1e-14, 100).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_neumann_laplacian_constant_solution() {
        // 1D Neumann Laplacian plus sigma*I applied to the constant vector 1
        // gives sigma*1, so solving with rhs sigma*1 must return 1.
        let n = 32;
        let sigma = 0.7;
        let mut b = SparseBuilder::new(n);
        for i in 0..n {
            let mut diag = sigma;
            if i > 0 {
                b.add(i, i - 1, -1.0);
                diag += 1.0;
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                diag += 1.0;
            }
            b.add(i, i, diag);
        }
        let a = b.build();
        let rhs = vec![sigma; n];
        let x = linear_solve(&a, &rhs, 1e-13, 1000).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-10);
        }
    }

    /// Dense Gaussian elimination with partial pivoting; the independent
    /// oracle for the Krylov solver.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for k in row + 1..n {
                s -= a[row][k] * x[k];
            }
            x[row] = s / a[row][row];
        }
        x
    }

    #[test]
    fn random_spd_matches_dense_oracle() {
        // deterministic pseudo-random SPD matrix: A = M^T M + n I
        let n = 20;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| next()).collect()).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += m[k][i] * m[k][j];
                }
                dense[i][j] = s + if i == j { n as f64 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|_| next()).collect();

        let mut builder = SparseBuilder::new(n);
        for i in 0..n {
            for j in 0..n {
                builder.add(i, j, dense[i][j]);
            }
        }
        let a = builder.build();
        let x = linear_solve(&a, &b, 1e-13, 10_000).unwrap();
        let x_ref = dense_solve(dense, b);
        for (xi, ri) in x.iter().zip(&x_ref) {
            assert!((xi - ri).abs() < 1e-8, "{xi} vs {ri}");
        }
    }

    #[test]
    fn reports_failure_with_history() {
        // singular system: 1D Neumann Laplacian with incompatible rhs
        let n = 8;
        let mut b = SparseBuilder::new(n);
        for i in 0..n {
            let mut diag = 0.0;
            if i > 0 {
                b.add(i, i - 1, -1.0);
                diag += 1.0;
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                diag += 1.0;
            }
            b.add(i, i, diag);
        }
        let a = b.build();
        let rhs = vec![1.0; n]; // not orthogonal to the kernel
        match linear_solve(&a, &rhs, 1e-12, 50) {
            Err(Error::LinearSolve { history, .. }) => assert!(!history.is_empty()),
            other => panic!("expected LinearSolve failure, got {other:?}"),
        }
    }
}
