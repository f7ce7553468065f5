//! Dense symmetric positive definite linear algebra.
//!
//! Everything here is sized for desk-scale problems (dimension up to a few
//! hundred): matrices are stored row-major in a flat `Vec`, factorizations are
//! dense Cholesky, and symmetric eigenvalues come from cyclic Jacobi sweeps.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.cols, v.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.rows, v.len())?;
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    /// Adds `s` to every diagonal entry in place.
    pub fn add_diagonal(&mut self, s: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += s;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[T]) -> Result<T> {
        Ok(dot(v, &self.mul_vec(v)?))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Scalar>(s: T, a: &[T]) -> Vec<T> {
    a.iter().map(|&x| s * x).collect()
}

fn symmetry_tolerance<T: Scalar>(m: &Matrix<T>) -> T {
    let base = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    base * m.max_abs().max(T::one())
}

/// Cholesky factor `M = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor<T> {
    lower: Matrix<T>,
    log_det: T,
}

impl<T: Scalar> SpdFactor<T> {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// Solves `L y = v`.
    pub fn solve_lower(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), v.len())?;
        let n = self.dim();
        let mut y = v.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (y[i] - s) / row[i];
        }
        Ok(y)
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), y.len())?;
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                s -= self.lower[(k, i)] * *xk;
            }
            x[i] = s / self.lower[(i, i)];
        }
        Ok(x)
    }

    /// Solves `M x = v`.
    pub fn solve(&self, v: &[T]) -> Result<Vec<T>> {
        self.solve_upper(&self.solve_lower(v)?)
    }

    /// `L v`.
    pub fn mul_lower(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), v.len())?;
        Ok((0..self.dim())
            .map(|i| dot(&self.lower.row(i)[..=i], &v[..=i]))
            .collect())
    }

    /// `Lᵀ v`.
    pub fn mul_upper(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), v.len())?;
        let n = self.dim();
        Ok((0..n)
            .map(|i| (i..n).map(|k| self.lower[(k, i)] * v[k]).sum())
            .collect())
    }

    /// `√(vᵀ M v)` computed as `‖Lᵀ v‖`.
    pub fn quad_norm(&self, v: &[T]) -> Result<T> {
        Ok(norm(&self.mul_upper(v)?))
    }

    /// `√(vᵀ M⁻¹ v)` computed as `‖L⁻¹ v‖`.
    pub fn dual_quad_norm(&self, v: &[T]) -> Result<T> {
        Ok(norm(&self.solve_lower(v)?))
    }

    /// Reassembles `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.lower.row(i)[..=j], &self.lower.row(j)[..=j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// `L⁻¹ A L⁻ᵀ` for symmetric `A`, symmetrized to absorb round-off.
    pub fn congruence_inverse(&self, a: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.dim();
        check_dim(n, a.rows())?;
        check_dim(n, a.cols())?;
        // Columns of L⁻¹ A, then rows of (L⁻¹ A) L⁻ᵀ = L⁻¹ (L⁻¹ A)ᵀ.
        let mut left = Matrix::zeros(n, n);
        for j in 0..n {
            let col: Vec<T> = (0..n).map(|i| a[(i, j)]).collect();
            let y = self.solve_lower(&col)?;
            for i in 0..n {
                left[(i, j)] = y[i];
            }
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let y = self.solve_lower(left.row(i))?;
            for j in 0..n {
                out[(i, j)] = y[j];
            }
        }
        let half = T::lit(0.5);
        for i in 0..n {
            for j in 0..i {
                let v = half * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Pivots below `1e-14 · trace / d` are rejected as non-SPD.
pub fn spd_factorize<T: Scalar>(m: &Matrix<T>) -> Result<SpdFactor<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            found: m.cols(),
        });
    }
    let n = m.rows();
    let tol = symmetry_tolerance(m);
    for i in 0..n {
        for j in 0..i {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if diff > tol {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    diff: diff.to_f64_lossy(),
                });
            }
        }
    }
    let trace = m.trace();
    let pivot_floor = if n == 0 {
        T::zero()
    } else {
        (T::lit(1e-14) * trace / T::lit(n as f64)).max(T::min_positive_value())
    };
    if !(trace > T::zero()) {
        return Err(Error::NotSpd {
            index: 0,
            pivot: trace.to_f64_lossy(),
        });
    }

    let mut lower = Matrix::zeros(n, n);
    let mut log_det = T::zero();
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= lower[(j, k)] * lower[(j, k)];
        }
        if !(pivot > pivot_floor) {
            return Err(Error::NotSpd {
                index: j,
                pivot: pivot.to_f64_lossy(),
            });
        }
        let ljj = pivot.sqrt();
        lower[(j, j)] = ljj;
        log_det += T::lit(2.0) * ljj.ln();
        for i in j + 1..n {
            // lower triangle of the input is authoritative
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = s / ljj;
        }
    }
    Ok(SpdFactor { lower, log_det })
}

pub fn spd_solve<T: Scalar>(factor: &SpdFactor<T>, v: &[T]) -> Result<Vec<T>> {
    factor.solve(v)
}

/// `√(vᵀ M v)` for an explicit SPD matrix.
pub fn quad_norm<T: Scalar>(v: &[T], m: &Matrix<T>) -> Result<T> {
    check_dim(m.rows(), v.len())?;
    let q = m.quadratic_form(v)?;
    let slack = T::lit(1e-12) * m.max_abs().max(T::one()) * dot(v, v);
    if q < -slack {
        return Err(Error::NotSpd {
            index: 0,
            pivot: q.to_f64_lossy(),
        });
    }
    Ok(q.max(T::zero()).sqrt())
}

/// `√(vᵀ M⁻¹ v)` through a factorization of `M`.
pub fn dual_quad_norm<T: Scalar>(v: &[T], factor: &SpdFactor<T>) -> Result<T> {
    factor.dual_quad_norm(v)
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            found: m.cols(),
        });
    }
    let n = m.rows();
    let mut a = m.clone();
    let scale = a.frobenius_norm().max(T::min_positive_value());
    let tiny = T::epsilon() * scale * T::lit(1e-2);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= tiny * T::lit(1e-3) {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig)
}

/// Generalized eigenvalues of the pencil `(H, M)`, ascending.
pub fn generalized_eigenvalues<T: Scalar>(h: &Matrix<T>, m: &Matrix<T>) -> Result<Vec<T>> {
    check_dim(m.rows(), h.rows())?;
    check_dim(m.cols(), h.cols())?;
    let factor = spd_factorize(m)?;
    symmetric_eigenvalues(&factor.congruence_inverse(h)?)
}

/// True iff `(1 − α) M ⪯ H ⪯ (1 + α) M`, with 1e-9 slack on the eigenvalues.
pub fn spectral_sandwich_check<T: Scalar>(h: &Matrix<T>, m: &Matrix<T>, alpha: T) -> Result<bool> {
    spd_factorize(h)?;
    let eig = generalized_eigenvalues(h, m)?;
    let slack = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
    let lo = T::one() - alpha - slack;
    let hi = T::one() + alpha + slack;
    Ok(eig.iter().all(|&e| e >= lo && e <= hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix<f64> {
        Matrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap()
    }

    #[test]
    fn factorize_diagonal_and_solve() {
        let f = spd_factorize(&Matrix::identity(2).scaled(2.0)).unwrap();
        let x = f.solve(&[2.0, 4.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-15);
        let f = spd_factorize(&Matrix::identity(2).scaled(8.0)).unwrap();
        assert_relative_eq!(f.solve(&[8.0, 0.0]).unwrap()[0], 1.0);
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = spd_factorize(&Matrix::<f64>::identity(3)).unwrap();
        let v = [0.3, -1.7, 4.0];
        assert_eq!(f.solve(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn two_by_two_inverse() {
        let f = spd_factorize(&m2(2.0, 1.0, 1.0, 2.0)).unwrap();
        let x = f.solve(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.log_det(), 3.0f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            spd_factorize(&m2(1.0, 2.0, 2.0, 1.0)),
            Err(Error::NotSpd { index: 1, .. })
        ));
        assert!(matches!(
            spd_factorize(&m2(1.0, 0.5, 0.0, 1.0)),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(spd_factorize(&Matrix::<f64>::zeros(2, 2)).is_err());
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = spd_factorize(&Matrix::<f64>::identity(2)).unwrap();
        assert_eq!(
            f.solve(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn local_norms() {
        let eight = Matrix::identity(2).scaled(8.0);
        assert_relative_eq!(quad_norm(&[1.0, 0.0], &eight).unwrap(), 8f64.sqrt());
        assert_eq!(quad_norm(&[0.0, 0.0], &eight).unwrap(), 0.0);
        let m = m2(2.0, 1.0, 1.0, 2.0);
        assert_relative_eq!(quad_norm(&[1.0, 1.0], &m).unwrap(), 6f64.sqrt(), epsilon = 1e-15);

        let f8 = spd_factorize(&eight).unwrap();
        assert_relative_eq!(dual_quad_norm(&[1.0, 0.0], &f8).unwrap(), 1.0 / 8f64.sqrt());
        assert_eq!(dual_quad_norm(&[0.0, 0.0], &f8).unwrap(), 0.0);
        let f = spd_factorize(&m).unwrap();
        assert_relative_eq!(
            dual_quad_norm(&[1.0, 1.0], &f).unwrap(),
            (2.0f64 / 3.0).sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(f.quad_norm(&[1.0, 1.0]).unwrap(), 6f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn quad_norm_rejects_indefinite_form() {
        let m = m2(1.0, 0.0, 0.0, -1.0);
        assert!(matches!(quad_norm(&[0.0, 1.0], &m), Err(Error::NotSpd { .. })));
    }

    #[test]
    fn sandwich_scalar_multiples() {
        let m = m2(2.0, 1.0, 1.0, 2.0);
        assert!(spectral_sandwich_check(&m, &m, 0.0).unwrap());
        assert!(spectral_sandwich_check(&m.scaled(1.0005), &m, 0.001).unwrap());
        assert!(!spectral_sandwich_check(&m.scaled(1.1), &m, 0.001).unwrap());
        assert!(!spectral_sandwich_check(&m.scaled(0.9), &m, 0.001).unwrap());
    }

    #[test]
    fn sandwich_dimension_mismatch() {
        let m = Matrix::<f64>::identity(2);
        let h = Matrix::<f64>::identity(3);
        assert!(matches!(
            spectral_sandwich_check(&h, &m, 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jacobi_eigenvalues_known() {
        let eig = symmetric_eigenvalues(&m2(2.0, 1.0, 1.0, 2.0)).unwrap();
        assert_relative_eq!(eig[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(eig[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let f = spd_factorize(&Matrix::from_rows(&[vec![2.0f32, 1.0], vec![1.0, 2.0]]).unwrap())
            .unwrap();
        let x = f.solve(&[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spd_strategy(n: usize) -> impl Strategy<Value = Matrix<f64>> {
            proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |raw| {
                let b = Matrix::from_row_major(n, n, raw).unwrap();
                let mut m = b.matmul(&b.transpose()).unwrap();
                m.add_diagonal(0.1);
                m
            })
        }

        proptest! {
            #[test]
            fn solve_inverts_product(
                (m, v) in (1usize..7).prop_flat_map(|n| (spd_strategy(n), proptest::collection::vec(-5.0f64..5.0, n)))
            ) {
                let f = spd_factorize(&m).unwrap();
                let mv = m.mul_vec(&v).unwrap();
                let x = f.solve(&mv).unwrap();
                let err = norm(&sub(&x, &v));
                prop_assert!(err <= 1e-8 * norm(&v).max(1.0));
                let rec = f.reconstruct();
                let rel = rec.add(&m.scaled(-1.0)).unwrap().frobenius_norm() / m.frobenius_norm();
                prop_assert!(rel <= 1e-10);
            }

            #[test]
            fn generalized_cauchy_schwarz(
                (m, u, v) in (1usize..6).prop_flat_map(|n| (
                    spd_strategy(n),
                    proptest::collection::vec(-3.0f64..3.0, n),
                    proptest::collection::vec(-3.0f64..3.0, n),
                ))
            ) {
                let f = spd_factorize(&m).unwrap();
                let lhs = dot(&u, &v).abs();
                let rhs = quad_norm(&u, &m).unwrap() * f.dual_quad_norm(&v).unwrap();
                prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-12);
            }

            #[test]
            fn sandwich_reflexive(m in (1usize..6).prop_flat_map(spd_strategy)) {
                prop_assert!(spectral_sandwich_check(&m, &m, 0.0).unwrap());
            }
        }
    }
}
