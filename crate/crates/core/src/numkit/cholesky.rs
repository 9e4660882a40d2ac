use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense lower-triangular factor stored row by row (`row i` holds `i + 1`
/// entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular {
    dim: usize,
    entries: Vec<f64>,
}

impl LowerTriangular {
    pub fn zeros(dim: usize) -> Self {
        LowerTriangular { dim, entries: vec![0.0; dim * (dim + 1) / 2] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim);
        for i in 0..dim {
            l.set(i, i, 1.0);
        }
        l
    }

    /// Build from a full square matrix, ignoring the strict upper triangle.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut l = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            for j in 0..=i {
                l.set(i, j, row[j]);
            }
        }
        l
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn offset(i: usize) -> usize {
        i * (i + 1) / 2
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.entries[Self::offset(i) + j]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i, "({i}, {j}) is above the diagonal");
        self.entries[Self::offset(i) + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let o = Self::offset(i);
        &self.entries[o..o + i + 1]
    }

    /// Euclidean norm of row `i`.
    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `L x` written into `out`.
    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `L Lᵀ` as a dense matrix.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        let mut c = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                c[i][j] = s;
                c[j][i] = s;
            }
        }
        c
    }
}

/// Cholesky factorization `C = L Lᵀ` of a symmetric positive-definite matrix.
pub fn cholesky(c: &[Vec<f64>]) -> Result<LowerTriangular> {
    let d = c.len();
    if c.iter().any(|row| row.len() != d) {
        return Err(Error::Domain("cholesky needs a square matrix".into()));
    }
    let mut l = LowerTriangular::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            let mut s = c[i][j];
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn one_by_one() {
        let l = cholesky(&[vec![0.3]]).unwrap();
        assert_eq!(l.get(0, 0), 0.3f64.sqrt());
    }

    #[test]
    fn identity() {
        let c: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        assert_eq!(cholesky(&c).unwrap(), LowerTriangular::identity(3));
    }

    #[test]
    fn decaying_correlation_block() {
        let d = 4;
        let mut c = vec![vec![0.0; d]; d];
        c[0][0] = 0.3;
        for i in 1..d {
            for j in 1..d {
                c[i][j] = 0.3 * 0.98f64.powi((i as i32 - j as i32).abs());
            }
        }
        let l = cholesky(&c).unwrap();
        assert!(max_abs_diff(&l.gram(), &c) < 1e-12);
        for i in 0..d {
            assert!(l.get(i, i) > 0.0);
        }
        for j in 1..d {
            assert_eq!(l.get(j, 0), 0.0);
        }
    }

    #[test]
    fn reports_failing_pivot() {
        let c = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        match cholesky(&c) {
            Err(Error::NotPositiveDefinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn random_spd_round_trip(d in 1usize..8, seed in prop::collection::vec(-1.0f64..1.0, 64)) {
            let a: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| seed[(i * 8 + j) % 64]).collect()).collect();
            let mut c = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in 0..d {
                    c[i][j] = (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>();
                }
                c[i][i] += d as f64;
            }
            let l = cholesky(&c).unwrap();
            prop_assert!(max_abs_diff(&l.gram(), &c) < 1e-10);
        }
    }
}
