//! Sparse recovery over a fixed dictionary: greedy OMP and SBL by EM.

mod omp;
mod sbl;

pub use omp::{exact_recovery_coefficient, omp, OmpStop};
pub use sbl::{log_evidence, sbl_em, SblOptions, SblState, SblTrace};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Factored sensing matrix `Ā = V (A_h ⊗ A_v)`. Column `z1 * Z_v + z2` of
/// `Ā` is `V (a_h,z1 ⊗ a_v,z2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerOperator {
    /// `V`, `P x M_h M_v`.
    pub left: CMat,
    pub a_h: CMat,
    pub a_v: CMat,
}

impl KroneckerOperator {
    pub fn new(left: CMat, a_h: CMat, a_v: CMat) -> Result<Self> {
        if left.ncols() != a_h.nrows() * a_v.nrows() {
            return Err(Error::InvalidArgument(format!(
                "left factor has {} columns, Kronecker factors give {}",
                left.ncols(),
                a_h.nrows() * a_v.nrows()
            )));
        }
        Ok(Self { left, a_h, a_v })
    }

    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.a_h.ncols() * self.a_v.ncols()
    }

    /// Column `q` of the dense matrix.
    pub fn column(&self, q: usize) -> CVec {
        let zv = self.a_v.ncols();
        let h = self.a_h.column(q / zv);
        let v = self.a_v.column(q % zv);
        let m_v = v.len();
        let inner = CVec::from_fn(h.len() * m_v, |m, _| h[m / m_v] * v[m % m_v]);
        &self.left * inner
    }
}

/// `y ≈ Ā x` with `Ā` of shape `P x Q`.
#[derive(Debug, Clone, Copy)]
pub struct SparseProblem<'a> {
    a: &'a CMat,
    y: &'a CVec,
    structure: Option<&'a KroneckerOperator>,
}

impl<'a> SparseProblem<'a> {
    pub fn new(a: &'a CMat, y: &'a CVec) -> Result<Self> {
        let (p, q) = a.shape();
        if p == 0 || q == 0 {
            return Err(Error::InvalidArgument(format!("empty sensing matrix {p}x{q}")));
        }
        if y.len() != p {
            return Err(Error::InvalidArgument(format!(
                "observation has {} entries, sensing matrix has {p} rows",
                y.len()
            )));
        }
        if let Some(c) = (0..q).find(|&c| a.column(c).iter().all(|v| v.norm_sqr() == 0.0)) {
            return Err(Error::InvalidArgument(format!("sensing matrix column {c} is zero")));
        }
        Ok(Self { a, y, structure: None })
    }

    /// Declares that `Ā` equals `op` in factored form, which SBL exploits.
    /// A few columns are checked against the dense matrix.
    pub fn with_structure(mut self, op: &'a KroneckerOperator) -> Result<Self> {
        let (p, q) = self.a.shape();
        if op.rows() != p || op.atoms() != q {
            return Err(Error::InvalidArgument("factored operator does not match the sensing matrix shape".into()));
        }
        for c in [0, q / 2, q - 1] {
            let col = self.a.column(c);
            if (op.column(c) - col).norm() > 1e-9 * col.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument(format!("factored operator differs from column {c}")));
            }
        }
        self.structure = Some(op);
        Ok(self)
    }

    pub fn structure(&self) -> Option<&'a KroneckerOperator> {
        self.structure
    }

    pub fn matrix(&self) -> &'a CMat {
        self.a
    }

    pub fn observation(&self) -> &'a CVec {
        self.y
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.a.ncols()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseSolution {
    pub x: CVec,
    /// Selected (OMP) or retained (SBL) atoms, in selection order for OMP
    /// and ascending order for SBL.
    pub support: Vec<usize>,
    /// `‖y - Ā x‖` after each iteration, preceded by `‖y‖`.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Complex multiply-accumulates spent on atom correlation.
    pub correlation_macs: u64,
}

impl SparseSolution {
    pub fn residual_norm(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}
