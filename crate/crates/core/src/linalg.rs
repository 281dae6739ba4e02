//! Small complex linear-algebra helpers shared by the estimation modules.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `exp(j * phase)`
#[inline]
pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Kronecker product of two column vectors, right factor varying fastest.
pub fn kron(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Kronecker product of two matrices.
pub fn kron_mat(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

/// Column-major vectorization (stacks columns).
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvectorize: length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVec {
    CVec::from_fn(len, |_, _| complex_normal(rng, variance))
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the eigenvectors.
pub fn hermitian_eigen(c: &CMat) -> (Vec<f64>, CMat) {
    let n = c.nrows();
    // Symmetrize first; the decomposition reads only one triangle.
    let herm = (c + c.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm()
}

/// Frobenius distance of a square matrix from the identity.
pub fn identity_defect(gram: &CMat) -> f64 {
    let n = gram.nrows();
    frobenius_distance(gram, &CMat::identity(n, n))
}

/// `c = alpha a b + beta c` on strided views.
fn zgemm_view(alpha: Complex64, a: DMatrixView<'_, Complex64>, b: DMatrixView<'_, Complex64>, beta: Complex64, mut c: DMatrixViewMut<'_, Complex64>) {
    let (m, k) = a.shape();
    let n = b.ncols();
    assert_eq!(k, b.nrows(), "matmul: inner dimension mismatch");
    assert_eq!((m, n), c.shape(), "matmul: output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_mut_complex(beta);
        return;
    }
    let (ars, acs) = a.strides();
    let (brs, bcs) = b.strides();
    let (crs, ccs) = c.strides();
    // SAFETY: views address valid elements at the given strides; Complex64
    // is repr(C) {re, im}, layout-compatible with [f64; 2]. The shapes were
    // checked above and `c` is a distinct mutable borrow, so it aliases
    // neither input.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            ars as isize,
            acs as isize,
            b.as_ptr() as *const [f64; 2],
            brs as isize,
            bcs as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            crs as isize,
            ccs as isize,
        );
    }
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl ScaleComplex for DMatrixViewMut<'_, Complex64> {
    fn scale_mut_complex(&mut self, s: Complex64) {
        if s == Complex64::new(0.0, 0.0) {
            self.fill(s);
        } else {
            self.iter_mut().for_each(|v| *v *= s);
        }
    }
}

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn zgemm_into(a: &CMat, b: &CMat, c: &mut CMat) {
    zgemm_view(ONE, a.as_view(), b.as_view(), ZERO, c.as_view_mut());
}

/// Blocks at or below this size are multiplied without further splitting.
const LEAF: usize = 48;

/// `S S^H`, computing only the lower block triangle and mirroring it.
pub fn hermitian_square(s: &CMat) -> CMat {
    let p = s.nrows();
    let sh = s.adjoint();
    let mut c = CMat::zeros(p, p);
    fn lower(s: &CMat, sh: &CMat, c: &mut CMat, r0: usize, r1: usize) {
        let n = r1 - r0;
        if n <= LEAF {
            zgemm_view(ONE, s.rows(r0, n), sh.columns(r0, n), ZERO, c.view_mut((r0, r0), (n, n)));
            return;
        }
        let mid = r0 + n / 2;
        lower(s, sh, c, r0, mid);
        lower(s, sh, c, mid, r1);
        zgemm_view(ONE, s.rows(mid, r1 - mid), sh.columns(r0, mid - r0), ZERO, c.view_mut((mid, r0), (r1 - mid, mid - r0)));
    }
    lower(s, &sh, &mut c, 0, p);
    for j in 0..p {
        for i in j + 1..p {
            c[(j, i)] = c[(i, j)].conj();
        }
        c[(j, j)].im = 0.0;
    }
    c
}

/// Cholesky factor `L` of a Hermitian positive-definite matrix together
/// with `L^{-1}`, blocked so the bulk of the work is GEMM. Only the lower
/// triangle of `a` is read. `None` if `a` is not numerically positive
/// definite.
pub fn cholesky_with_inverse(a: &CMat) -> Option<(CMat, CMat)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
    if n <= LEAF {
        let mut a = a.clone();
        // a Hermitian diagonal is real; drop roundoff so pivots stay real
        for i in 0..n {
            a[(i, i)].im = 0.0;
        }
        let l = nalgebra::Cholesky::new(a)?.unpack();
        let inv = lower_inverse_unblocked(&l)?;
        return Some((l, inv));
    }
    let k = n / 2;
    let m = n - k;
    let (l11, x11) = cholesky_with_inverse(&a.view((0, 0), (k, k)).into_owned())?;
    let mut l21 = CMat::zeros(m, k);
    zgemm_view(ONE, a.view((k, 0), (m, k)), x11.adjoint().as_view(), ZERO, l21.as_view_mut());
    let mut s = a.view((k, k), (m, m)).into_owned();
    zgemm_view(-ONE, l21.as_view(), l21.adjoint().as_view(), ONE, s.as_view_mut());
    let (l22, x22) = cholesky_with_inverse(&s)?;
    let t = matmul(&l21, &x11);
    let mut l = CMat::zeros(n, n);
    let mut x = CMat::zeros(n, n);
    l.view_mut((0, 0), (k, k)).copy_from(&l11);
    l.view_mut((k, 0), (m, k)).copy_from(&l21);
    l.view_mut((k, k), (m, m)).copy_from(&l22);
    x.view_mut((0, 0), (k, k)).copy_from(&x11);
    zgemm_view(-ONE, x22.as_view(), t.as_view(), ZERO, x.view_mut((k, 0), (m, k)));
    x.view_mut((k, k), (m, m)).copy_from(&x22);
    Some((l, x))
}

/// `L` and `L^{-1}` with `L L^H = B B^H`, from a QR factorization of
/// `B^H` so `B B^H` is never formed. Slower than [`cholesky_with_inverse`]
/// but backward stable when `B B^H` is too ill-conditioned to factor
/// directly. `None` if `B` has deficient row rank.
pub fn cholesky_from_square_root(b: &CMat) -> Option<(CMat, CMat)> {
    let n = b.nrows();
    if b.ncols() < n {
        return None;
    }
    let r = nalgebra::QR::new(b.adjoint()).r();
    // rescale rows of R so the diagonal is real positive
    let mut l = r.adjoint();
    for k in 0..n {
        let d = l[(k, k)];
        if !(d.norm() > 0.0) || !d.norm().is_finite() {
            return None;
        }
        let phase = d.conj() / d.norm();
        for i in k..n {
            l[(i, k)] *= phase;
        }
        l[(k, k)] = Complex64::new(d.norm(), 0.0);
    }
    let inv = lower_inverse_unblocked(&l)?;
    Some((l, inv))
}

/// Forward substitution, column by column. Rejects a diagonal that is not
/// real positive, which is how a complex Cholesky of an indefinite matrix
/// shows up.
fn lower_inverse_unblocked(l: &CMat) -> Option<CMat> {
    let n = l.nrows();
    let pivot_ok = |d: Complex64| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-6 * d.re;
    if !(0..n).all(|k| pivot_ok(l[(k, k)])) {
        return None;
    }
    let mut inv = CMat::zeros(n, n);
    for j in 0..n {
        let mut col = inv.column_mut(j);
        col[j] = ONE;
        for k in j..n {
            let xk = col[k] / l[(k, k)];
            col[k] = xk;
            let lk = l.column(k);
            for i in k + 1..n {
                col[i] -= lk[i] * xk;
            }
        }
    }
    Some(inv)
}

/// `L B` for lower-triangular `L`; the strict upper triangle of `l` must
/// be zero. Skips the zero blocks.
pub fn lower_triangular_product(l: &CMat, b: &CMat) -> CMat {
    let n = l.nrows();
    assert_eq!(n, l.ncols(), "triangular factor must be square");
    let mut out = CMat::zeros(n, b.ncols());
    fn go(l: &CMat, b: &CMat, out: &mut CMat, r0: usize, r1: usize) {
        let n = r1 - r0;
        let q = b.ncols();
        if n <= LEAF {
            zgemm_view(ONE, l.view((r0, r0), (n, n)), b.rows(r0, n), ONE, out.view_mut((r0, 0), (n, q)));
            return;
        }
        let mid = r0 + n / 2;
        go(l, b, out, r0, mid);
        zgemm_view(ONE, l.view((mid, r0), (r1 - mid, mid - r0)), b.rows(r0, mid - r0), ONE, out.view_mut((mid, 0), (r1 - mid, q)));
        go(l, b, out, mid, r1);
    }
    go(l, b, &mut out, 0, n);
    out
}

/// `a * b` through a packed complex GEMM kernel.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let mut c = CMat::zeros(a.nrows(), b.ncols());
    zgemm_into(a, b, &mut c);
    c
}

/// `a^H * b`
pub fn adjoint_matmul(a: &CMat, b: &CMat) -> CMat {
    matmul(&a.adjoint(), b)
}

/// `a * b^H`
pub fn matmul_adjoint(a: &CMat, b: &CMat) -> CMat {
    matmul(a, &b.adjoint())
}
