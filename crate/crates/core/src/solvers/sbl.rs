use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{KroneckerOperator, SparseProblem, SparseSolution};
use crate::error::{Error, Result};
use crate::linalg::{adjoint_matmul, cholesky_from_square_root, cholesky_with_inverse, hermitian_square, lower_triangular_product, matmul, matmul_adjoint, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SblOptions {
    pub max_iters: usize,
    /// Atoms with `γ_s < prune_ratio * max γ` are removed.
    pub prune_ratio: f64,
    /// Stop when `max_s |Δγ_s| / γ_s < tol`.
    pub tol: f64,
    pub gamma_init: f64,
}

impl Default for SblOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            prune_ratio: 1e-8,
            tol: 1e-6,
            gamma_init: 1.0,
        }
    }
}

/// Prior variances and the matching Gaussian posterior. `mu` and `sigma`
/// are restricted to `active`, and correspond to the stored `gamma`.
#[derive(Debug, Clone, Serialize)]
pub struct SblState {
    /// Length `Q`; zero for pruned atoms.
    pub gamma: Vec<f64>,
    pub active: Vec<usize>,
    pub mu: CVec,
    /// Diagonal of the posterior covariance over the active atoms.
    pub sigma_diag: Vec<f64>,
    pub iterations: usize,
}

impl SblState {
    /// Full posterior covariance `(Ā^H Ā/σ² + Γ^{-1})^{-1}` over the active
    /// atoms. Dense in the active-set size, so only formed on request.
    pub fn posterior_covariance(&self, problem: &SparseProblem<'_>, noise_var: f64) -> Result<CMat> {
        let mut engine = Engine {
            a: problem.matrix(),
            y: problem.observation(),
            noise_var,
            y_norm2: problem.observation().norm_squared(),
            gram: None,
            kron: None,
        };
        if self.active.is_empty() {
            return Ok(CMat::zeros(0, 0));
        }
        engine
            .full(&self.active, &self.gamma)
            .map(|(_, sigma)| sigma)
            .ok_or_else(|| Error::DegenerateInput("posterior precision is not positive definite".into()))
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SblTrace {
    /// Log-evidence of `y` under `CN(0, σ² I + Ā Γ Ā^H)` at each E-step.
    pub log_evidence: Vec<f64>,
    pub active: Vec<usize>,
    pub max_change: Vec<f64>,
}

/// Log-density of `y` under `CN(0, σ² I + Ā diag(γ) Ā^H)`, evaluated directly.
pub fn log_evidence(a: &CMat, y: &CVec, gamma: &[f64], noise_var: f64) -> Result<f64> {
    let p = a.nrows();
    let scaled = CMat::from_fn(p, a.ncols(), |r, c| a[(r, c)] * gamma[c].sqrt());
    let mut c = matmul_adjoint(&scaled, &scaled);
    for i in 0..p {
        c[(i, i)] += noise_var;
    }
    let (l, linv) = cholesky_with_inverse(&c)
        .ok_or_else(|| Error::DegenerateInput("evidence covariance is not positive definite".into()))?;
    let logdet: f64 = (0..p).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    let z = linv * y;
    Ok(-(p as f64) * PI.ln() - logdet - z.norm_squared())
}

struct Posterior {
    mu: CVec,
    sigma_diag: Vec<f64>,
    log_evidence: f64,
}

/// E-step engine; picks the cheaper of the atom-space and observation-space
/// forms for the current active set.
struct Engine<'a> {
    a: &'a CMat,
    y: &'a CVec,
    noise_var: f64,
    y_norm2: f64,
    /// Scaled Gram `Ā_A^H Ā_A / σ²` and `Ā_A^H y / σ²` over `cached`.
    gram: Option<(Vec<usize>, CMat, CVec)>,
    kron: Option<&'a KroneckerOperator>,
}

/// `t[(i + i' n), z] = a[i, z] conj(a[i', z])` for an `n x Z` matrix `a`.
fn outer_table(a: &CMat) -> CMat {
    let n = a.nrows();
    CMat::from_fn(n * n, a.ncols(), |r, z| a[(r % n, z)] * a[(r / n, z)].conj())
}

impl<'a> Engine<'a> {
    fn columns(&self, active: &[usize]) -> CMat {
        CMat::from_fn(self.a.nrows(), active.len(), |r, c| self.a[(r, active[c])])
    }

    /// `[Ā_A Γ^{1/2}, σ I]`, a square root of `σ² I + Ā Γ Ā^H`.
    fn observation_root(&self, active: &[usize], gamma: &[f64]) -> CMat {
        let p = self.a.nrows();
        let n = active.len();
        let sigma = self.noise_var.sqrt();
        CMat::from_fn(p, n + p, |r, c| {
            if c < n {
                self.a[(r, active[c])] * gamma[active[c]].sqrt()
            } else if c - n == r {
                Complex64::new(sigma, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Cholesky of `σ² I + Ā Γ Ā^H`; falls back to the square-root form when
    /// the formed matrix is too ill-conditioned.
    fn factor_observation(&self, c: &CMat, active: &[usize], gamma: &[f64]) -> Option<(CMat, CMat)> {
        cholesky_with_inverse(c).or_else(|| cholesky_from_square_root(&self.observation_root(active, gamma)))
    }

    fn restricted_gram(&mut self, active: &[usize]) -> (CMat, CVec) {
        if self.gram.is_none() {
            let cols = self.columns(active);
            let g = adjoint_matmul(&cols, &cols).unscale(self.noise_var);
            let b = cols.ad_mul(self.y).unscale(self.noise_var);
            self.gram = Some((active.to_vec(), g, b));
        }
        let (cached, g, b) = self.gram.as_ref().expect("cached above");
        if cached.as_slice() == active {
            return (g.clone(), b.clone());
        }
        // active sets only shrink, so every active atom is in the cache
        let pos: Vec<usize> = active
            .iter()
            .map(|s| cached.binary_search(s).expect("active atom missing from cache"))
            .collect();
        let n = pos.len();
        (
            CMat::from_fn(n, n, |r, c| g[(pos[r], pos[c])]),
            CVec::from_fn(n, |r, _| b[pos[r]]),
        )
    }

    /// Returns the posterior and `L^{-1}`, `L L^H = Ā^H Ā/σ² + Γ^{-1}`, so
    /// that `Σ = L^{-H} L^{-1}`.
    fn atom_space(&mut self, active: &[usize], gamma: &[f64]) -> Option<(Posterior, CMat)> {
        let p = self.a.nrows() as f64;
        let n = active.len();
        let (mut m, b) = self.restricted_gram(active);
        for (k, &s) in active.iter().enumerate() {
            m[(k, k)] += 1.0 / gamma[s];
        }
        let (l, linv) = cholesky_with_inverse(&m).or_else(|| {
            // [Ā_A^H / σ, Γ^{-1/2}] squares to the same matrix
            let sigma = self.noise_var.sqrt();
            let root = CMat::from_fn(n, self.a.nrows() + n, |r, c| {
                if c < self.a.nrows() {
                    self.a[(c, active[r])].conj() / sigma
                } else if c - self.a.nrows() == r {
                    Complex64::new(gamma[active[r]].powf(-0.5), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            cholesky_from_square_root(&root)
        })?;
        let mu = adjoint_matmul(&linv, &matmul(&linv, &CMat::from_column_slice(n, 1, b.as_slice()))).column(0).into_owned();
        let logdet_m: f64 = (0..n).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
        let logdet_gamma: f64 = active.iter().map(|&s| gamma[s].ln()).sum();
        let logdet_c = p * self.noise_var.ln() + logdet_gamma + logdet_m;
        let quad = self.y_norm2 / self.noise_var - b.dotc(&mu).re;
        let sigma_diag = (0..n).map(|k| linv.column(k).norm_squared()).collect();
        Some((
            Posterior {
                mu,
                sigma_diag,
                log_evidence: -p * PI.ln() - logdet_c - quad,
            },
            linv,
        ))
    }

    fn observation_space(&self, active: &[usize], gamma: &[f64]) -> Option<(Posterior, CMat, CMat)> {
        let p = self.a.nrows();
        let cols = self.columns(active);
        let scaled = CMat::from_fn(p, active.len(), |r, c| cols[(r, c)] * gamma[active[c]].sqrt());
        let mut c = hermitian_square(&scaled);
        for i in 0..p {
            c[(i, i)] += self.noise_var;
        }
        let (l, linv) = self.factor_observation(&c, active, gamma)?;
        let w = lower_triangular_product(&linv, &cols);
        let z = &linv * self.y;
        let wz = w.ad_mul(&z);
        let mu = CVec::from_fn(active.len(), |k, _| wz[k] * gamma[active[k]]);
        let sigma_diag = (0..active.len())
            .map(|k| {
                let g = gamma[active[k]];
                g - g * g * w.column(k).norm_squared()
            })
            .collect();
        let logdet: f64 = (0..p).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
        Some((
            Posterior {
                mu,
                sigma_diag,
                log_evidence: -(p as f64) * PI.ln() - logdet - z.norm_squared(),
            },
            w,
            cols,
        ))
    }

    /// Observation-space E-step for `Ā = V (A_h ⊗ A_v)`. Works on the full
    /// grid (pruned atoms have γ = 0) and never forms `Ā` or `Ā Γ Ā^H`
    /// through the `Q` atoms; everything goes through `M_h² x Z` and
    /// `M_v² x Z` outer-product tables.
    fn kronecker(&self, op: &KroneckerOperator, active: &[usize], gamma: &[f64]) -> Option<Posterior> {
        let (a_h, a_v, v) = (&op.a_h, &op.a_v, &op.left);
        let (mh, zh) = a_h.shape();
        let (mv, zv) = a_v.shape();
        let p = v.nrows();
        let m = mh * mv;
        let ph = outer_table(a_h);
        let pv = outer_table(a_v);
        // A Γ A^H = Σ_z1 (a_h a_h^H) ⊗ (Σ_z2 γ a_v a_v^H)
        let gt = CMat::from_fn(zv, zh, |z2, z1| Complex64::new(gamma[z1 * zv + z2], 0.0));
        let inner = matmul(&pv, &gt);
        let flat = matmul(&inner, &ph.transpose());
        let k0 = CMat::from_fn(m, m, |r, c| flat[(r % mv + (c % mv) * mv, r / mv + (c / mv) * mh)]);
        let mut c = matmul_adjoint(&matmul(v, &k0), v);
        for i in 0..p {
            c[(i, i)] += self.noise_var;
        }
        let (l, linv) = self.factor_observation(&c, active, gamma)?;
        let z = &linv * self.y;
        let u = linv.ad_mul(&z);
        // diag_q = a_q^H V^H C^{-1} V a_q
        let g = lower_triangular_product(&linv, v);
        let d = adjoint_matmul(&g, &g);
        let dflat = CMat::from_fn(mv * mv, mh * mh, |r, c| d[((c % mh) * mv + r % mv, (c / mh) * mv + r / mv)]);
        let f = matmul(&dflat, &ph.map(|x| x.conj()));
        let diag = adjoint_matmul(&pv, &f);
        // b = A^H V^H u, reshaped to Z_h x Z_v
        let w = v.ad_mul(&u);
        let wmat = CMat::from_fn(mh, mv, |h, k| w[h * mv + k]);
        let b = matmul(&adjoint_matmul(a_h, &wmat), &a_v.map(|x| x.conj()));
        let mu = CVec::from_fn(active.len(), |k, _| b[(active[k] / zv, active[k] % zv)] * gamma[active[k]]);
        let sigma_diag = active
            .iter()
            .map(|&s| {
                let gs = gamma[s];
                gs - gs * gs * diag[(s % zv, s / zv)].re
            })
            .collect();
        let logdet: f64 = (0..p).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
        Some(Posterior {
            mu,
            sigma_diag,
            log_evidence: -(p as f64) * PI.ln() - logdet - z.norm_squared(),
        })
    }

    fn estep(&mut self, active: &[usize], gamma: &[f64]) -> Option<Posterior> {
        if active.len() <= self.a.nrows() {
            self.atom_space(active, gamma).map(|(post, _)| post)
        } else if let Some(op) = self.kron {
            self.kronecker(op, active, gamma)
        } else {
            self.observation_space(active, gamma).map(|(post, _, _)| post)
        }
    }

    /// Posterior with the full covariance over the active set.
    fn full(&mut self, active: &[usize], gamma: &[f64]) -> Option<(Posterior, CMat)> {
        if active.len() <= self.a.nrows() {
            let (post, linv) = self.atom_space(active, gamma)?;
            return Some((post, adjoint_matmul(&linv, &linv)));
        }
        let (post, w, _) = self.observation_space(active, gamma)?;
        let n = active.len();
        let ww = adjoint_matmul(&w, &w);
        let g = CMat::from_fn(n, n, |r, c| {
            let base = if r == c { gamma[active[r]] } else { 0.0 };
            Complex64::new(base, 0.0) - ww[(r, c)] * gamma[active[r]] * gamma[active[c]]
        });
        Some((post, g))
    }
}

fn prune(gamma: &mut [f64], active: &mut Vec<usize>, ratio: f64) {
    let max = active.iter().map(|&s| gamma[s]).fold(0.0, f64::max);
    let floor = ratio * max;
    active.retain(|&s| {
        let keep = gamma[s] >= floor && gamma[s] > 0.0;
        if !keep {
            gamma[s] = 0.0;
        }
        keep
    });
}

fn finite(post: &Posterior) -> bool {
    post.log_evidence.is_finite()
        && post.mu.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        && post.sigma_diag.iter().all(|v| v.is_finite())
}

/// Sparse Bayesian learning by expectation-maximization with a fixed noise
/// variance.
pub fn sbl_em(
    problem: &SparseProblem<'_>,
    noise_var: f64,
    opts: &SblOptions,
) -> Result<(SparseSolution, SblState, SblTrace)> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidArgument(format!("SBL needs a positive noise variance, got {noise_var}")));
    }
    if !(opts.gamma_init > 0.0) || opts.max_iters == 0 {
        return Err(Error::InvalidArgument("SBL needs gamma_init > 0 and max_iters > 0".into()));
    }
    let a = problem.matrix();
    let y = problem.observation();
    let q = a.ncols();
    let mut engine = Engine {
        a,
        y,
        noise_var,
        y_norm2: y.norm_squared(),
        gram: None,
        kron: problem.structure(),
    };
    let mut gamma = vec![opts.gamma_init; q];
    let mut active: Vec<usize> = (0..q).collect();
    let mut trace = SblTrace::default();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iters {
        let post = engine
            .estep(&active, &gamma)
            .filter(finite)
            .ok_or(Error::Divergence { iteration: it })?;
        trace.log_evidence.push(post.log_evidence);
        trace.active.push(active.len());
        let mut change: f64 = 0.0;
        for (k, &s) in active.iter().enumerate() {
            let next = post.mu[k].norm_sqr() + post.sigma_diag[k].max(0.0);
            change = change.max((next - gamma[s]).abs() / gamma[s]);
            gamma[s] = next;
        }
        if !change.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        trace.max_change.push(change);
        iterations = it + 1;
        prune(&mut gamma, &mut active, opts.prune_ratio);
        if change < opts.tol {
            converged = true;
            break;
        }
        if active.is_empty() {
            break;
        }
    }

    let post = if active.is_empty() {
        Posterior {
            mu: CVec::zeros(0),
            sigma_diag: Vec::new(),
            log_evidence: f64::NAN,
        }
    } else {
        engine
            .estep(&active, &gamma)
            .filter(finite)
            .ok_or(Error::Divergence { iteration: iterations })?
    };
    if post.log_evidence.is_finite() {
        trace.log_evidence.push(post.log_evidence);
        trace.active.push(active.len());
    }

    let mut x = CVec::zeros(q);
    for (k, &s) in active.iter().enumerate() {
        x[s] = post.mu[k];
    }
    let residual = y - matmul(a, &CMat::from_column_slice(q, 1, x.as_slice())).column(0);
    let solution = SparseSolution {
        x,
        support: active.clone(),
        residual_history: vec![y.norm(), residual.norm()],
        iterations,
        converged,
        correlation_macs: 0,
    };
    let state = SblState {
        gamma,
        active,
        mu: post.mu,
        sigma_diag: post.sigma_diag,
        iterations,
    };
    Ok((solution, state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::wavelength;
    use crate::dictionary::build_angular;
    use crate::linalg::complex_normal;
    use crate::solvers::{omp, OmpStop};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_fixed_point() {
        let a = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        let y = CVec::from_element(1, Complex64::new(3.0, 0.0));
        let p = SparseProblem::new(&a, &y).unwrap();
        let (s, st, _) = sbl_em(&p, 1e-6, &SblOptions::default()).unwrap();
        assert!(s.converged);
        assert!((s.x[0] - Complex64::new(3.0, 0.0)).norm() < 1e-6);
        // evidence maximizer of a single atom: γ = |a^H y|² - σ²
        assert!((st.gamma[0] - (9.0 - 1e-6)).abs() < 1e-4);
    }

    #[test]
    fn zero_observation_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = CMat::from_fn(6, 10, |_, _| complex_normal(&mut rng, 1.0));
        let y = CVec::zeros(6);
        let p = SparseProblem::new(&a, &y).unwrap();
        let (s, st, _) = sbl_em(&p, 0.1, &SblOptions::default()).unwrap();
        assert!(s.x.norm() == 0.0);
        let gmax = st.gamma.iter().cloned().fold(0.0, f64::max);
        assert!(gmax < 0.1, "{gmax}");
    }

    #[test]
    fn one_sparse_agrees_with_omp() {
        let l = wavelength(6.8e9);
        let d = build_angular(4, 4, l / 2.0, l / 2.0, l, 8).unwrap();
        let a = d.matrix().clone();
        let mut x0 = CVec::zeros(64);
        x0[d.column(3, 5)] = Complex64::new(0.8, 0.6);
        let y = &a * &x0;
        let p = SparseProblem::new(&a, &y).unwrap();
        let o = omp(&p, OmpStop::atoms(1)).unwrap();
        let (s, _, _) = sbl_em(&p, 1e-6, &SblOptions::default()).unwrap();
        let best = (0..64).max_by(|&i, &j| s.x[i].norm().total_cmp(&s.x[j].norm())).unwrap();
        assert_eq!(best, o.support[0]);
        assert!((s.x[best] - x0[best]).norm() < 1e-3);
    }

    #[test]
    fn direct_evidence_matches_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = CMat::from_fn(5, 8, |_, _| complex_normal(&mut rng, 1.0));
        let y = CVec::from_fn(5, |_, _| complex_normal(&mut rng, 1.0));
        let gamma: Vec<f64> = (0..8).map(|k| 0.1 + k as f64 * 0.2).collect();
        let direct = log_evidence(&a, &y, &gamma, 0.3).unwrap();
        let mut engine = Engine { a: &a, y: &y, noise_var: 0.3, y_norm2: y.norm_squared(), gram: None, kron: None };
        let small: Vec<usize> = vec![0, 2, 3, 6];
        let mut g_small = gamma.clone();
        for s in [1, 4, 5, 7] {
            g_small[s] = 0.0;
        }
        let obs = engine.observation_space(&(0..8).collect::<Vec<_>>(), &gamma).unwrap().0;
        assert!((obs.log_evidence - direct).abs() < 1e-9 * direct.abs());
        let atom = engine.atom_space(&small, &gamma).unwrap().0;
        let obs_small = engine.observation_space(&small, &gamma).unwrap().0;
        let direct_small = log_evidence(&a, &y, &g_small, 0.3).unwrap();
        assert!((atom.log_evidence - direct_small).abs() < 1e-9 * direct_small.abs());
        assert!((obs_small.log_evidence - direct_small).abs() < 1e-9 * direct_small.abs());
        for k in 0..small.len() {
            assert!((atom.mu[k] - obs_small.mu[k]).norm() < 1e-10);
            assert!((atom.sigma_diag[k] - obs_small.sigma_diag[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn kronecker_estep_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = wavelength(6.8e9);
        let d = build_angular(3, 4, l / 2.0, l / 2.0, l, 5).unwrap();
        let (a_h, a_v) = d.factors();
        let v = CMat::from_fn(9, 12, |_, _| complex_normal(&mut rng, 1.0));
        let op = KroneckerOperator::new(v.clone(), a_h.clone(), a_v.clone()).unwrap();
        let a = &v * d.matrix();
        let y = CVec::from_fn(9, |_, _| complex_normal(&mut rng, 1.0));
        let mut gamma: Vec<f64> = (0..25).map(|k| 0.05 + ((k * 7) % 11) as f64 * 0.1).collect();
        let active: Vec<usize> = (0..25).filter(|k| k % 4 != 1).collect();
        for s in (0..25).filter(|k| k % 4 == 1) {
            gamma[s] = 0.0;
        }
        let prob = SparseProblem::new(&a, &y).unwrap().with_structure(&op).unwrap();
        let engine = Engine { a: &a, y: &y, noise_var: 0.2, y_norm2: y.norm_squared(), gram: None, kron: prob.structure() };
        let dense = engine.observation_space(&active, &gamma).unwrap().0;
        let fast = engine.kronecker(&op, &active, &gamma).unwrap();
        assert!((dense.log_evidence - fast.log_evidence).abs() < 1e-10 * dense.log_evidence.abs());
        assert!((&dense.mu - &fast.mu).norm() < 1e-10 * dense.mu.norm());
        for (x, y) in dense.sigma_diag.iter().zip(&fast.sigma_diag) {
            assert!((x - y).abs() < 1e-10);
        }
        let (s1, _, _) = sbl_em(&prob, 0.2, &SblOptions::default()).unwrap();
        let plain = SparseProblem::new(&a, &y).unwrap();
        let (s2, _, _) = sbl_em(&plain, 0.2, &SblOptions::default()).unwrap();
        assert!((&s1.x - &s2.x).norm() < 1e-8 * s2.x.norm().max(1.0));
    }

    #[test]
    fn structure_must_match_matrix() {
        let l = wavelength(6.8e9);
        let d = build_angular(2, 2, l / 2.0, l / 2.0, l, 3).unwrap();
        let (a_h, a_v) = d.factors();
        let v = CMat::identity(4, 4);
        let op = KroneckerOperator::new(v, a_h.clone(), a_v.clone()).unwrap();
        let a = d.matrix().clone();
        let y = CVec::zeros(4);
        assert!(SparseProblem::new(&a, &y).unwrap().with_structure(&op).is_ok());
        let mut wrong = a.clone();
        wrong[(0, 4)] += Complex64::new(0.5, 0.0);
        assert!(SparseProblem::new(&wrong, &y).unwrap().with_structure(&op).is_err());
    }

    fn random_problem(seed: u64, p: usize, q: usize, noise: f64) -> (CMat, CVec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(p, q, |_, _| complex_normal(&mut rng, 1.0));
        let mut x = CVec::zeros(q);
        for k in 0..3 {
            x[(k * 7 + seed as usize) % q] = complex_normal(&mut rng, 1.0);
        }
        let y = &a * x + CVec::from_fn(p, |_, _| complex_normal(&mut rng, noise));
        (a, y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn estep_consistency_and_evidence_ascent(seed in any::<u64>(), wide in any::<bool>()) {
            let (p, q) = if wide { (8, 30) } else { (20, 12) };
            let noise = 0.05;
            let (a, y) = random_problem(seed, p, q, noise);
            let prob = SparseProblem::new(&a, &y).unwrap();
            let (sol, st, trace) = sbl_em(&prob, noise, &SblOptions::default()).unwrap();
            // (Ā^H Ā/σ² + Γ^-1) μ = Ā^H y / σ² on the retained atoms
            let cols = CMat::from_fn(p, st.active.len(), |r, c| a[(r, st.active[c])]);
            let mut m = cols.adjoint() * &cols / Complex64::new(noise, 0.0);
            for (k, &s) in st.active.iter().enumerate() {
                m[(k, k)] += 1.0 / st.gamma[s];
            }
            let lhs = &m * &st.mu;
            let rhs = cols.adjoint() * &y / Complex64::new(noise, 0.0);
            prop_assert!((&lhs - &rhs).norm() <= 1e-8 * rhs.norm());
            // Σ is Hermitian positive definite
            let sigma = st.posterior_covariance(&prob, noise).unwrap();
            prop_assert!((&sigma - sigma.adjoint()).norm() < 1e-10 * sigma.norm());
            prop_assert!(cholesky_with_inverse(&sigma).is_some());
            for (k, d) in st.sigma_diag.iter().enumerate() {
                prop_assert!((sigma[(k, k)].re - d).abs() <= 1e-10 * d.abs().max(1e-300));
            }
            for w in trace.log_evidence.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
            for (i, v) in sol.x.iter().enumerate() {
                if !st.active.contains(&i) {
                    prop_assert_eq!(*v, Complex64::new(0.0, 0.0));
                }
            }
        }
    }
}
