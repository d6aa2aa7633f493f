//! Symmetric banded matrices with Cholesky factorization and solves.
//! Storage is the lower band: `data[i * (bw+1) + k] = A[i, i-k]`, k = 0..=bw.

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[hi * (self.bw + 1) + (hi - lo)]
        }
    }

    /// Accumulate into A[i,j] (and by symmetry A[j,i]); panics outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[hi * (self.bw + 1) + (hi - lo)] += v;
    }

    /// y = A x, symmetric banded multiply with fixed summation order.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.get(i, i) * x[i];
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                acc += self.get(i, j) * x[j];
            }
            let hi = (i + bw).min(n - 1);
            for j in i + 1..=hi {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// xᵀ A x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x.iter()).map(|(a, b)| a * b).sum()
    }

    /// Banded Cholesky A = L Lᵀ; fails if A is not positive definite.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = BandMatrix::zeros(n, bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.get(i, j);
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::numeric(format!(
                            "Cholesky pivot {s} at row {i}: matrix not positive definite"
                        )));
                    }
                    l.add(i, i, s.sqrt());
                } else {
                    l.add(i, j, s / l.get(j, j));
                }
            }
        }
        Ok(BandCholesky { l })
    }
}

pub(crate) struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let bw = self.l.bw;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                s -= self.l.get(i, j) * y[j];
            }
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            let hi = (i + bw).min(n - 1);
            for j in i + 1..=hi {
                s -= self.l.get(j, i) * x[j];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }
}
