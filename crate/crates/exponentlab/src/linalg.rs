//! Small dense linear algebra helpers.
//!
//! Every problem in this crate lives in dimension `M - 1` with `M` a handful
//! of hypotheses, so plain `Vec<f64>` vectors and row-major matrices are
//! simpler and faster than pulling in a matrix library.

/// Row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T v`.
    pub fn tmatvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let r = self.row(i);
            for j in 0..self.cols {
                out[j] += r[j] * v[i];
            }
        }
        out
    }

    /// `self^T other self` is not needed; this is `a^T b a`-style congruence
    /// `self^T m self` for symmetric `m` (rows of `self` index the outer dim).
    pub fn congruence(&self, m: &Mat) -> Mat {
        // returns self^T * m * self, where self is (n x k), m is (n x n)
        assert_eq!(self.rows, m.rows);
        let k = self.cols;
        let mut out = Mat::zeros(k, k);
        for a in 0..k {
            let ca = self.col(a);
            let mca = m.matvec(&ca);
            for b in 0..k {
                let cb = self.col(b);
                out[(a, b)] = dot(&mca, &cb);
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(a: &[f64], alpha: f64) -> Vec<f64> {
    a.iter().map(|x| x * alpha).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Cholesky solve of `A x = b` for symmetric positive definite `A`.
/// Returns `None` when a pivot drops below `eps` times the largest diagonal.
pub fn cholesky_solve(a: &Mat, b: &[f64], eps: f64) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut l = vec![0.0; n * n];
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    let floor = eps * max_diag.max(1e-300);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= floor {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvector matrix with eigenvectors as columns).
pub fn sym_eig(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.rows;
    assert_eq!(a.cols, n);
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1e-300_f64, f64::max);
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[(i, i)]).collect();
    (vals, v)
}

/// Orthonormal basis (as matrix columns) of the span of the given vectors,
/// via modified Gram-Schmidt. Directions with norm below `tol` relative to
/// the largest input norm are dropped.
pub fn orthonormal_basis(vectors: &[Vec<f64>], tol: f64) -> Mat {
    let dim = if vectors.is_empty() { 0 } else { vectors[0].len() };
    let scale = vectors.iter().map(|v| norm2(v)).fold(1e-300_f64, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let c = dot(&w, b);
            axpy(&mut w, -c, b);
        }
        // re-orthogonalize once
        for b in &basis {
            let c = dot(&w, b);
            axpy(&mut w, -c, b);
        }
        let n = norm2(&w);
        if n > tol * scale {
            basis.push(scaled(&w, 1.0 / n));
        }
    }
    let mut m = Mat::zeros(dim, basis.len());
    for (j, b) in basis.iter().enumerate() {
        for i in 0..dim {
            m[(i, j)] = b[i];
        }
    }
    m
}

/// Orthonormal basis of the null space of the row span of `rows` in R^dim.
pub fn null_space(rows: &[Vec<f64>], dim: usize, tol: f64) -> Mat {
    let row_basis = orthonormal_basis(rows, tol);
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        // project out the row span
        for b in 0..row_basis.cols {
            let col = row_basis.col(b);
            let c = dot(&e, &col);
            axpy(&mut e, -c, &col);
        }
        candidates.push(e);
    }
    orthonormal_basis(&candidates, 1e-10)
}

/// Numerically stable log(sum_i exp(x_i)); -inf entries are dropped.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs
        .iter()
        .filter(|x| x.is_finite() || **x == f64::INFINITY)
        .map(|x| (x - m).exp())
        .sum();
    m + s.ln()
}
