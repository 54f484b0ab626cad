//! Dense row-major matrices for activations, gradients and weights.

use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};

/// Rows handed to one worker in the row-parallel kernels.
const ROW_BLOCK: usize = 64;

/// Dense row-major `f64` matrix. One row per vertex for activations and
/// gradients; `(in_dim, out_dim)` for weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bytes this matrix occupies at `bytes_per_value` per entry.
    pub fn bytes(&self, bytes_per_value: u64) -> u64 {
        (self.rows * self.cols) as u64 * bytes_per_value
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = FeatureMatrix::zeros(n, m);
        if m == 0 {
            return Ok(out);
        }
        par::for_each_chunk_mut(&mut out.data, ROW_BLOCK * m, |block, chunk| {
            let first = block * ROW_BLOCK;
            for (i, orow) in chunk.chunks_mut(m).enumerate() {
                let arow = self.row(first + i);
                for (kk, &a) in arow.iter().enumerate().take(k) {
                    if a == 0.0 {
                        continue;
                    }
                    for (o, &b) in orow.iter_mut().zip(rhs.row(kk)) {
                        *o += a * b;
                    }
                }
            }
        });
        Ok(out)
    }

    /// `selfᵀ · rhs`, summing over rows in ascending order.
    pub fn t_matmul(&self, rhs: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::Shape(format!(
                "t_matmul {:?}ᵀ x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let (k, m) = (self.cols, rhs.cols);
        let mut out = FeatureMatrix::zeros(k, m);
        if m == 0 {
            return Ok(out);
        }
        par::for_each_chunk_mut(&mut out.data, m, |kk, orow| {
            for i in 0..self.rows {
                let a = self.get(i, kk);
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(i)) {
                    *o += a * b;
                }
            }
        });
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::Shape(format!(
                "matmul_t {:?} x {:?}ᵀ",
                self.shape(),
                rhs.shape()
            )));
        }
        let m = rhs.rows;
        let mut out = FeatureMatrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        par::for_each_chunk_mut(&mut out.data, ROW_BLOCK * m, |block, chunk| {
            let first = block * ROW_BLOCK;
            for (i, orow) in chunk.chunks_mut(m).enumerate() {
                let arow = self.row(first + i);
                for (j, o) in orow.iter_mut().enumerate() {
                    *o = arow.iter().zip(rhs.row(j)).map(|(a, b)| a * b).sum();
                }
            }
        });
        Ok(out)
    }

    /// New matrix whose row `i` is `self.row(index[i])`.
    pub fn gather_rows(&self, index: &[u32]) -> Result<FeatureMatrix> {
        let mut out = FeatureMatrix::zeros(index.len(), self.cols);
        for (i, &g) in index.iter().enumerate() {
            let g = g as usize;
            if g >= self.rows {
                return Err(Error::Shape(format!(
                    "gather row {g} from {} rows",
                    self.rows
                )));
            }
            out.row_mut(i).copy_from_slice(self.row(g));
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, rhs: &FeatureMatrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "add {:?} += {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self -= scale · rhs`.
    pub fn sub_scaled(&mut self, scale: f64, rhs: &FeatureMatrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "sub {:?} -= {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= scale * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Largest absolute entry-wise difference; `INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &FeatureMatrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn bitwise_eq(&self, other: &FeatureMatrix) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &FeatureMatrix, b: &FeatureMatrix) -> FeatureMatrix {
        FeatureMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    fn sample(rows: usize, cols: usize, salt: f64) -> FeatureMatrix {
        FeatureMatrix::from_fn(rows, cols, |r, c| ((r * 7 + c * 3) as f64 * 0.37 + salt).sin())
    }

    #[test]
    fn products_agree_with_triple_loop() {
        let a = sample(130, 9, 0.1);
        let b = sample(9, 5, 0.7);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-12);

        let c = sample(130, 5, 1.3);
        let at = FeatureMatrix::from_fn(9, 130, |r, c2| a.get(c2, r));
        assert!(a.t_matmul(&c).unwrap().max_abs_diff(&naive(&at, &c)) < 1e-12);

        let bt = FeatureMatrix::from_fn(5, 9, |r, c2| b.get(c2, r));
        assert!(a.matmul_t(&bt).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let a = FeatureMatrix::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
        assert!(FeatureMatrix::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(a.gather_rows(&[5]).is_err());
    }

    #[test]
    fn gather_copies_rows() {
        let a = sample(4, 2, 0.0);
        let g = a.gather_rows(&[3, 0, 3]).unwrap();
        assert_eq!(g.row(0), a.row(3));
        assert_eq!(g.row(1), a.row(0));
        assert_eq!(g.row(2), a.row(3));
    }
}
