//! Strided complex matrix products on top of `matrixmultiply`; nalgebra's
//! generic product is far slower for complex scalars at the sizes used in
//! the local TDVP problems.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Read-only strided matrix.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    data: &'a [C64],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a> Mat<'a> {
    /// Column-major `rows × cols` block.
    pub fn new(data: &'a [C64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        Self { data, rows, cols, rs: 1, cs: rows as isize }
    }

    pub fn of(m: &'a DMatrix<C64>) -> Self {
        Self::new(m.as_slice(), m.nrows(), m.ncols())
    }

    /// Arbitrary strides; the caller guarantees every addressed element
    /// lies inside `data`.
    pub fn strided(data: &'a [C64], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert!(rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < data.len());
        Self { data, rows, cols, rs: rs as isize, cs: cs as isize }
    }

    pub fn t(self) -> Self {
        Self { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }
}

/// `c ← α a b + β c` with `c` column-major `a.rows × b.cols`.
pub(crate) fn gemm(alpha: C64, a: Mat, b: Mat, beta: C64, c: &mut [C64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: all three operands are in bounds for the given shapes and
    // strides (checked above), and `c` is a distinct mutable slice.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.data.as_ptr() as *const [f64; 2],
            a.rs,
            a.cs,
            b.data.as_ptr() as *const [f64; 2],
            b.rs,
            b.cs,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub(crate) fn mul(a: Mat, b: Mat) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(a.rows, b.cols);
    gemm(ONE, a, b, ZERO, out.as_mut_slice());
    out
}

/// `c += a b`.
pub(crate) fn mul_acc(a: Mat, b: Mat, c: &mut [C64]) {
    gemm(ONE, a, b, ONE, c);
}

pub(crate) fn conj(v: &[C64]) -> Vec<C64> {
    v.iter().map(|z| z.conj()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_nalgebra() {
        let a = DMatrix::from_fn(3, 4, |i, j| C64::new(i as f64 - 0.5 * j as f64, (i * j) as f64 * 0.1));
        let b = DMatrix::from_fn(4, 2, |i, j| C64::new(0.3 * j as f64 + 1.0, i as f64 - 1.0));
        let d = mul(Mat::of(&a), Mat::of(&b)) - &a * &b;
        assert!(d.iter().all(|z| z.norm() < 1e-13));
        let c = DMatrix::from_fn(3, 2, |i, j| C64::new(i as f64, j as f64));
        let d = mul(Mat::of(&a).t(), Mat::of(&c)) - a.transpose() * &c;
        assert!(d.iter().all(|z| z.norm() < 1e-13));
        let mut acc = c.clone();
        mul_acc(Mat::of(&a), Mat::of(&b), acc.as_mut_slice());
        let d = acc - (&c + &a * &b);
        assert!(d.iter().all(|z| z.norm() < 1e-13));
        let big = DMatrix::from_fn(20, 30, |i, j| C64::new((i + 2 * j) as f64 * 0.01, 1.0 / (1.0 + i as f64)));
        let other = DMatrix::from_fn(30, 11, |i, j| C64::new(j as f64 - 0.2 * i as f64, 0.5));
        let d = mul(Mat::of(&big), Mat::of(&other)) - &big * &other;
        assert!(d.iter().all(|z| z.norm() < 1e-11));
        let d = mul(Mat::of(&other).t(), Mat::of(&big).t()) - (&big * &other).transpose();
        assert!(d.iter().all(|z| z.norm() < 1e-11));
    }
}
