//! Small dense linear algebra for the per-step Newton systems.

use crate::scalar::Real;

/// Row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn norm1(&self) -> S {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<S>())
            .fold(S::zero(), S::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs().as_f64() <= tol))
    }

    /// Lower Cholesky factor, or `None` if the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<Matrix<S>> {
        let n = self.rows;
        if n != self.cols {
            return None;
        }
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > S::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    pub fn lu(&self) -> Option<Lu<S>> {
        Lu::factor(self)
    }

    pub fn determinant(&self) -> S {
        match self.lu() {
            Some(lu) => lu.determinant(),
            None => S::zero(),
        }
    }

    pub fn inverse(&self) -> Option<Matrix<S>> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![S::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = S::zero());
            e[j] = S::one();
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<S> {
    lu: Matrix<S>,
    perm: Vec<usize>,
    sign: f64,
}

impl<S: Real> Lu<S> {
    /// Fails when a pivot is exactly zero or non-finite.
    pub fn factor(a: &Matrix<S>) -> Option<Self> {
        let n = a.rows;
        assert_eq!(n, a.cols, "LU of a non-square matrix");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, S::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pmax > S::zero()) || !pmax.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Some(Self { lu, perm, sign })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.lu.rows;
        let mut x: Vec<S> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn determinant(&self) -> S {
        (0..self.lu.rows).fold(S::of(self.sign), |d, i| d * self.lu[(i, i)])
    }
}

/// 1-norm condition number, computed through the explicit inverse.
/// Returns infinity for singular matrices.
pub fn condition_1<S: Real>(a: &Matrix<S>) -> f64 {
    match a.inverse() {
        Some(inv) => (a.norm1() * inv.norm1()).as_f64(),
        None => f64::INFINITY,
    }
}

pub fn inf_norm<S: Real>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |m, v| m.max(v.abs()))
}

pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]);
        let x = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let got = a.lu().unwrap().solve(&b);
        for (g, w) in got.iter().zip(x) {
            assert!((g - w).abs() < 1e-14);
        }
        assert!((a.determinant() - (-5.0)).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_has_no_lu() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(a.lu().is_none());
        assert_eq!(condition_1(&a), f64::INFINITY);
    }

    #[test]
    fn cholesky_detects_indefinite() {
        let spd = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        assert!(spd.cholesky().is_some());
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(bad.cholesky().is_none());
    }

    #[test]
    fn identity_condition_is_one() {
        assert_eq!(condition_1(&Matrix::<f64>::identity(3)), 1.0);
    }
}
