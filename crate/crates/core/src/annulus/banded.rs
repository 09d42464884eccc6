//! Symmetric positive definite band matrices with an in-place Cholesky
//! factorization.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: entry `(i, j)` with `i - bw <= j <= i`
/// is stored at `(i + 1) * bw + j`, i.e. row `i` occupies `bw + 1`
/// consecutive slots ending at the diagonal.
#[derive(Clone, Debug)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd { n, bw, data: vec![0.0; n * (bw + 1)], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        (i + 1) * self.bw + j
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Replaces row and column `i` by the identity row.
    pub fn pin(&mut self, i: usize) {
        for j in i.saturating_sub(self.bw)..i {
            let k = self.idx(i, j);
            self.data[k] = 0.0;
        }
        for r in i + 1..(i + self.bw + 1).min(self.n) {
            let k = self.idx(r, i);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    /// `y = A x` using the symmetric band.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matrix already factored");
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
        y
    }

    /// In-place Cholesky factorization `A = L L^T`.
    pub fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j.saturating_sub(bw).max(j0);
                let mut s = self.data[self.idx(i, j)];
                let (bi, bj) = ((i + 1) * bw, (j + 1) * bw);
                for k in k0..j {
                    s -= self.data[bi + k] * self.data[bj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::num(format!(
                            "band matrix not positive definite at pivot {i} (value {s:e})"
                        )));
                    }
                    let k = self.idx(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let ljj = self.data[self.idx(j, j)];
                    let k = self.idx(i, j);
                    self.data[k] = s / ljj;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` with the stored factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "factor before solving");
        let bw = self.bw;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let mut s = y[i];
            for j in j0..i {
                s -= self.data[self.idx(i, j)] * y[j];
            }
            y[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for r in i + 1..(i + bw + 1).min(self.n) {
                s -= self.data[self.idx(r, i)] * y[r];
            }
            y[i] = s / self.data[self.idx(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_solve() {
        let n = 40;
        let bw = 5;
        let mut a = BandedSpd::zeros(n, bw);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = if i == j { 12.0 + i as f64 * 0.1 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                a.add(i, j, v);
                dense[(i, j)] += v;
                if i != j {
                    dense[(j, i)] += v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let y = a.mul(&b);
        let yd = &dense * DVector::from_vec(b.clone());
        for i in 0..n {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
        a.factor().unwrap();
        let x = a.solve(&b);
        let xd = dense.cholesky().unwrap().solve(&DVector::from_vec(b));
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }
}
