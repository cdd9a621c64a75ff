//! Small dense complex matrices.
//!
//! Channel and precoder matrices in this crate are at most a few dozen
//! entries, so a row-major `Vec` with hand-written products is all we need.

use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMat::from_vec shape mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row_norm_sqr(&self, r: usize) -> f64 {
        self.data[r * self.cols..(r + 1) * self.cols]
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// Conjugate inner product `<a, b> = a^H b` of two columns.
    pub fn column_inner(&self, a: usize, b: usize) -> C64 {
        (0..self.rows)
            .map(|r| self.get(r, a).conj() * self.get(r, b))
            .sum()
    }

    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.rows, "CMat::matmul inner dimension mismatch");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += a * rhs.get(k, c);
                }
            }
        }
        out
    }

    /// `||self * rhs||_F^2` without materializing the product.
    pub fn product_frobenius_sqr(&self, rhs: &CMat) -> f64 {
        debug_assert_eq!(self.cols, rhs.rows);
        let mut total = 0.0;
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for c in 0..rhs.cols {
                let mut acc = C64::new(0.0, 0.0);
                for (k, a) in row.iter().enumerate() {
                    acc += a * rhs.data[k * rhs.cols + c];
                }
                total += acc.norm_sqr();
            }
        }
        total
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}
