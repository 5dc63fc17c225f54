use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// The public linear time-invariant model `x(k+1) = H x(k) + w(k)`, `y(k) = C x(k)`,
/// with process noise `w(k) ~ N(0, W)` and public initial mean `x0_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    h: Matrix,
    c: Matrix,
    w: Matrix,
    x0_hat: Vector,
}

impl SystemModel {
    /// Validates dimensions, finiteness and `W > 0`.
    pub fn new(h: Matrix, c: Matrix, w: Matrix, x0_hat: Vector) -> Result<Self> {
        for (name, m) in [("H", &h), ("C", &c), ("W", &w)] {
            linalg::ensure_finite(name, m)?;
        }
        if !x0_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { name: "x0_hat".into() });
        }
        let n = h.nrows();
        if n == 0 || !h.is_square() {
            return Err(Error::dims(format!("H must be square and non-empty, got {}x{}", h.nrows(), h.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dims(format!("C must be q x {n}, got {}x{}", c.nrows(), c.ncols())));
        }
        if w.shape() != (n, n) {
            return Err(Error::dims(format!("W must be {n}x{n}, got {}x{}", w.nrows(), w.ncols())));
        }
        if x0_hat.len() != n {
            return Err(Error::dims(format!("x0_hat must have length {n}, got {}", x0_hat.len())));
        }
        linalg::ensure_symmetric(&w)?;
        if nalgebra::Cholesky::new(linalg::symmetrize(&w)).is_none() {
            return Err(Error::NotPositiveDefinite { name: "W".into() });
        }
        Ok(Self { h, c, w, x0_hat })
    }

    /// Same as [`SystemModel::new`] with `x0_hat = 0`.
    pub fn with_zero_mean(h: Matrix, c: Matrix, w: Matrix) -> Result<Self> {
        let n = h.nrows();
        Self::new(h, c, w, Vector::zeros(n))
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn x0_hat(&self) -> &Vector {
        &self.x0_hat
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Output dimension `q`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_observable(&self) -> bool {
        linalg::observability_check(&self.h, &self.c)
    }

    pub fn is_controllable(&self) -> Result<bool> {
        linalg::controllability_check(&self.h, &self.w)
    }

    /// Diagonal of `C`, provided `C` is square and diagonal.
    pub fn diagonal_output(&self) -> Result<Vec<f64>> {
        if !linalg::is_diagonal(&self.c) {
            return Err(Error::NotDiagonal);
        }
        Ok(self.c.diagonal().iter().copied().collect())
    }
}
