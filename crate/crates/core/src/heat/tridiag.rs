//! Tridiagonal matrices and their pivot-free LU factorization.

use crate::error::{Error, Result};
use crate::heat::Scalar;

/// Row `i` holds `lower[i]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n {
            lower[i] = self.upper[i - 1];
            upper[i - 1] = self.lower[i];
        }
        Self {
            lower,
            diag: self.diag.clone(),
            upper,
        }
    }

    pub fn mul_vec<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let n = self.len();
        for i in 0..n {
            let mut v = x[i] * self.diag[i];
            if i > 0 {
                v += x[i - 1] * self.lower[i];
            }
            if i + 1 < n {
                v += x[i + 1] * self.upper[i];
            }
            out[i] = v;
        }
    }

    /// Factors without pivoting. Fails when a pivot is negligible against its row.
    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.len();
        let mut pivot = vec![0.0; n];
        let mut mult = vec![0.0; n];
        for i in 0..n {
            let mut d = self.diag[i];
            if i > 0 {
                mult[i] = self.lower[i] / pivot[i - 1];
                d -= mult[i] * self.upper[i - 1];
            }
            let row = self.lower[i].abs() + self.diag[i].abs() + self.upper[i].abs();
            if !d.is_finite() || d.abs() <= 1e-14 * row {
                return Err(Error::SingularStep { step: 1 });
            }
            pivot[i] = d;
        }
        Ok(TridiagonalLu {
            mult,
            pivot,
            upper: self.upper.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalLu {
    mult: Vec<f64>,
    pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    /// Solves in place.
    pub fn solve<S: Scalar>(&self, x: &mut [S]) {
        let n = self.pivot.len();
        for i in 1..n {
            let prev = x[i - 1];
            x[i] -= prev * self.mult[i];
        }
        x[n - 1] = x[n - 1] / self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] = (x[i] - next * self.upper[i]) / self.pivot[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tridiagonal {
        Tridiagonal {
            lower: vec![0.0, -1.0, -0.5, -2.0],
            diag: vec![4.0, 5.0, 3.0, 6.0],
            upper: vec![1.0, -1.5, 0.5, 0.0],
        }
    }

    #[test]
    fn solve_inverts_product() {
        let m = sample();
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        m.mul_vec(&x, &mut b);
        m.factor().unwrap().solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let m = sample();
        let t = m.transpose();
        let x = vec![0.3, -1.0, 2.0, 0.7];
        let y = vec![1.1, 0.4, -0.9, 2.2];
        let (mut mx, mut ty) = (vec![0.0; 4], vec![0.0; 4]);
        m.mul_vec(&x, &mut mx);
        t.mul_vec(&y, &mut ty);
        let a: f64 = mx.iter().zip(&y).map(|(p, q)| p * q).sum();
        let b: f64 = x.iter().zip(&ty).map(|(p, q)| p * q).sum();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = Tridiagonal {
            lower: vec![0.0, 1.0],
            diag: vec![1.0, 1.0],
            upper: vec![1.0, 0.0],
        };
        assert!(matches!(m.factor(), Err(Error::SingularStep { .. })));
    }
}
