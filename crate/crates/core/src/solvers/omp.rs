use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{SparseProblem, SparseSolution};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// A new atom whose component outside the current span is below this
/// fraction of its norm is treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpStop {
    pub max_atoms: Option<usize>,
    /// Stop once `‖r‖ / ‖y‖ <= residual_tol`.
    pub residual_tol: Option<f64>,
}

impl OmpStop {
    pub fn atoms(k: usize) -> Self {
        Self { max_atoms: Some(k), residual_tol: None }
    }

    pub fn tolerance(eps: f64) -> Self {
        Self { max_atoms: None, residual_tol: Some(eps) }
    }
}

/// Orthogonal matching pursuit with normalized-correlation selection.
///
/// The support is refit by least squares through an incrementally grown
/// QR factorization (Gram-Schmidt with one re-orthogonalization pass), so
/// the residual stays orthogonal to every selected atom.
pub fn omp(problem: &SparseProblem<'_>, stop: OmpStop) -> Result<SparseSolution> {
    let a = problem.matrix();
    let y = problem.observation();
    let (p, q) = a.shape();
    let limit = p.min(q);
    let max_atoms = match stop.max_atoms {
        Some(k) if k > limit => {
            return Err(Error::InvalidArgument(format!("K = {k} exceeds min(P, Q) = {limit}")))
        }
        Some(k) => k,
        None => limit,
    };
    let eps = stop.residual_tol.unwrap_or(0.0);

    let norms: Vec<f64> = (0..q).map(|c| a.column(c).norm()).collect();
    let y_norm = y.norm();
    let mut residual = y.clone();
    let mut history = vec![y_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut basis: Vec<CVec> = Vec::new();
    let mut r_mat = CMat::zeros(max_atoms, max_atoms);
    let mut qty: Vec<Complex64> = Vec::new();
    let mut macs = 0u64;
    let mut converged = y_norm <= eps * y_norm;

    while !converged && support.len() < max_atoms {
        let corr = a.ad_mul(&residual);
        macs += (p * q) as u64;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (c, v) in corr.iter().enumerate() {
            let score = v.norm() / norms[c];
            if score > best_score {
                best = c;
                best_score = score;
            }
        }

        let k = support.len();
        let atom = a.column(best).into_owned();
        let mut v = atom.clone();
        for _ in 0..2 {
            for (j, b) in basis.iter().enumerate() {
                let proj = b.dotc(&v);
                r_mat[(j, k)] += proj;
                v.axpy(-proj, b, Complex64::new(1.0, 0.0));
            }
        }
        let rkk = v.norm();
        if !(rkk > RANK_TOL * norms[best]) {
            return Err(Error::NumericalRank { atom: best });
        }
        r_mat[(k, k)] = Complex64::new(rkk, 0.0);
        v.unscale_mut(rkk);
        let coeff = v.dotc(y);
        residual.axpy(-coeff, &v, Complex64::new(1.0, 0.0));
        qty.push(coeff);
        basis.push(v);
        support.push(best);

        // Re-project against the full basis to keep ‖r‖ honest.
        for b in &basis {
            let proj = b.dotc(&residual);
            residual.axpy(-proj, b, Complex64::new(1.0, 0.0));
        }
        let rn = residual.norm();
        history.push(rn);
        if rn <= eps * y_norm {
            converged = true;
        }
    }
    if support.len() == max_atoms && stop.max_atoms.is_some() {
        converged = true;
    }

    let k = support.len();
    let mut coef = vec![Complex64::new(0.0, 0.0); k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for j in i + 1..k {
            s -= r_mat[(i, j)] * coef[j];
        }
        coef[i] = s / r_mat[(i, i)];
    }
    let mut x = CVec::zeros(q);
    for (&s, c) in support.iter().zip(coef) {
        x[s] = c;
    }
    Ok(SparseSolution {
        x,
        support,
        residual_history: history,
        iterations: k,
        converged,
        correlation_macs: macs,
    })
}

/// Exact recovery coefficient `max_{j ∉ S} ‖Φ_S^+ φ_j‖_1` of `support` over
/// the unit-normalized columns of `a`. When it is below 1, OMP selects only
/// atoms of `S` for any noiseless observation supported on `S`, so it
/// recovers such vectors exactly in `|S|` steps.
pub fn exact_recovery_coefficient(a: &CMat, support: &[usize]) -> Result<f64> {
    let (p, q) = a.shape();
    if support.is_empty() || support.len() > p || support.iter().any(|&s| s >= q) {
        return Err(Error::InvalidArgument("support must be non-empty, in range and at most P atoms".into()));
    }
    let unit = |c: usize| {
        let col = a.column(c);
        col.unscale(col.norm())
    };
    let phi = CMat::from_columns(&support.iter().map(|&s| unit(s)).collect::<Vec<_>>());
    let pinv = phi
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut worst = 0.0f64;
    for c in (0..q).filter(|c| !support.contains(c)) {
        let l1: f64 = (&pinv * unit(c)).iter().map(|v| v.norm()).sum();
        worst = worst.max(l1);
    }
    Ok(worst)
}
