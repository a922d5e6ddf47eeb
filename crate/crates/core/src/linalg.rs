//! Dense helpers for the small least-squares problems the baselines solve.

use crate::scalar::Scalar;

/// Row-major design matrix.
#[derive(Debug, Clone)]
pub struct Design<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Design<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `XᵀWX` and `XᵀWy` with optional per-row weights.
    pub fn normal_equations(&self, y: &[T], weights: Option<&[T]>) -> (Vec<T>, Vec<T>) {
        let p = self.cols;
        let mut gram = vec![T::zero(); p * p];
        let mut rhs = vec![T::zero(); p];
        for r in 0..self.rows {
            let w = weights.map_or(T::one(), |w| w[r]);
            let row = self.row(r);
            for i in 0..p {
                let xi = row[i] * w;
                if xi == T::zero() {
                    continue;
                }
                rhs[i] = rhs[i] + xi * y[r];
                for j in i..p {
                    gram[i * p + j] = gram[i * p + j] + xi * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                gram[i * p + j] = gram[j * p + i];
            }
        }
        (gram, rhs)
    }

    pub fn predict(&self, beta: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(beta).map(|(&x, &b)| x * b).sum())
            .collect()
    }
}

/// Solves `(A + λI) x = b` for symmetric positive semi-definite `A` by
/// Cholesky. Returns `None` if the factorisation breaks down.
pub fn ridge_solve<T: Scalar>(gram: &[T], rhs: &[T], lambda: T) -> Option<Vec<T>> {
    let p = rhs.len();
    let mut l = vec![T::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = gram[i * p + j];
            if i == j {
                s = s + lambda;
            }
            for k in 0..j {
                s = s - l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = vec![T::zero(); p];
    for i in 0..p {
        let s = (0..i).fold(rhs[i], |acc, k| acc - l[i * p + k] * z[k]);
        z[i] = s / l[i * p + i];
    }
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let s = (i + 1..p).fold(z[i], |acc, k| acc - l[k * p + i] * x[k]);
        x[i] = s / l[i * p + i];
    }
    Some(x)
}

/// Numerical rank of a Gram matrix via symmetric Gaussian elimination with
/// diagonal pivoting on the unit-diagonal (correlation-scaled) form.
pub fn gram_rank<T: Scalar>(gram: &[T], p: usize, rel_tol: f64) -> usize {
    let mut a: Vec<f64> = gram.iter().map(|v| v.to_f64_lossy()).collect();
    let diag: Vec<f64> = (0..p).map(|i| a[i * p + i]).collect();
    for i in 0..p {
        for j in 0..p {
            let d = (diag[i] * diag[j]).sqrt();
            a[i * p + j] = if d > 0.0 { a[i * p + j] / d } else { 0.0 };
        }
    }
    let mut remaining: Vec<usize> = (0..p).filter(|&i| diag[i] > 0.0).collect();
    let mut rank = 0;
    while !remaining.is_empty() {
        let (pos, &piv) = remaining
            .iter()
            .enumerate()
            .max_by(|x, y| a[x.1 * p + x.1].partial_cmp(&a[y.1 * p + y.1]).unwrap())
            .unwrap();
        let pivot = a[piv * p + piv];
        if pivot <= rel_tol {
            break;
        }
        rank += 1;
        remaining.swap_remove(pos);
        for &i in &remaining {
            let f = a[i * p + piv] / pivot;
            for &j in &remaining {
                a[i * p + j] -= f * a[piv * p + j];
            }
        }
    }
    rank
}
