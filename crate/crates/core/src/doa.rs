//! Per-subarray direction finding: covariance of the reconstructed subarray
//! channel, Kronecker factor extraction, and 1D MUSIC on each axis.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::far_field_steering;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone)]
pub struct AxisCovariance {
    pub matrix: CMat,
    pub axis: Axis,
}

/// `ĥ ĥ^H`.
pub fn subarray_covariance(h: &CVec) -> Result<CMat> {
    if h.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::DegenerateInput("subarray channel estimate is zero".into()));
    }
    Ok(h * h.adjoint())
}

/// `D^{-1/2} C D^{-1/2}` with `D = diag(C)`.
fn unit_diagonal(mut c: CMat, axis: Axis) -> Result<AxisCovariance> {
    let d: Vec<f64> = (0..c.nrows()).map(|i| c[(i, i)].re).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateInput(format!("{axis:?} factor has a non-positive diagonal")));
    }
    for r in 0..c.nrows() {
        for col in 0..c.ncols() {
            c[(r, col)] /= (d[r] * d[col]).sqrt();
        }
    }
    Ok(AxisCovariance { matrix: c, axis })
}

/// Horizontal and vertical factors of a subarray covariance laid out with
/// the vertical index fastest. Both are averages over the repeated blocks,
/// rescaled to a unit diagonal.
pub fn extract_axis_factors(c: &CMat, m_h: usize, m_v: usize) -> Result<(AxisCovariance, AxisCovariance)> {
    let m = m_h * m_v;
    if m == 0 || c.shape() != (m, m) {
        return Err(Error::InvalidArgument(format!(
            "covariance is {}x{}, expected {m}x{m} for a {m_h}x{m_v} subarray",
            c.nrows(),
            c.ncols()
        )));
    }
    let mut cv = CMat::zeros(m_v, m_v);
    for b in 0..m_h {
        cv += c.view((b * m_v, b * m_v), (m_v, m_v));
    }
    let ch = CMat::from_fn(m_h, m_h, |p, q| {
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..m_v {
            s += c[(p * m_v + k, q * m_v + k)];
        }
        s
    });
    Ok((unit_diagonal(ch, Axis::Horizontal)?, unit_diagonal(cv, Axis::Vertical)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct MusicSpectrum {
    pub grid: Vec<f64>,
    /// `1 / ‖E_n^H a(ϖ)‖²` on the grid.
    pub values: Vec<f64>,
    pub peak_index: usize,
    /// Refined direction cosine.
    pub estimate: f64,
}

impl MusicSpectrum {
    /// Two whitespace-separated columns: grid point and spectrum value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (g, v) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{g:.9} {v:.9e}");
        }
        out
    }
}

const GOLDEN_ITERS: usize = 80;

/// MUSIC over `grid_points` uniform direction cosines on `[-1, 1]`.
///
/// The grid peak is refined by a golden-section search of the null
/// function `‖E_n^H a(ϖ)‖²` within one grid cell on either side.
pub fn music_1d(
    c: &AxisCovariance,
    m_e: usize,
    spacing: f64,
    wavelength: f64,
    grid_points: usize,
    n_sources: usize,
) -> Result<MusicSpectrum> {
    if n_sources >= m_e {
        return Err(Error::InvalidArgument(format!(
            "{n_sources} sources leave no noise subspace for {m_e} elements"
        )));
    }
    if c.matrix.shape() != (m_e, m_e) {
        return Err(Error::InvalidArgument(format!(
            "axis covariance is {}x{}, expected {m_e}x{m_e}",
            c.matrix.nrows(),
            c.matrix.ncols()
        )));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("MUSIC grid needs at least two points".into()));
    }
    let (_, vecs) = hermitian_eigen(&c.matrix);
    let noise = vecs.columns(n_sources, m_e - n_sources).into_owned();
    let null = |w: f64| -> f64 {
        let a = far_field_steering(m_e, spacing, w, wavelength);
        noise.ad_mul(&a).norm_squared()
    };

    let step = 2.0 / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|k| -1.0 + step * k as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&w| 1.0 / null(w).max(f64::MIN_POSITIVE)).collect();
    let mut peak_index = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[peak_index] {
            peak_index = k;
        }
    }

    let mut lo = grid[peak_index.saturating_sub(1)];
    let mut hi = grid[(peak_index + 1).min(grid_points - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (null(x1), null(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = null(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = null(x2);
        }
    }
    let candidate = 0.5 * (lo + hi);
    let grid_best = grid[peak_index];
    let estimate = if null(candidate) <= null(grid_best) { candidate } else { grid_best };

    Ok(MusicSpectrum {
        grid,
        values,
        peak_index,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::wavelength;
    use crate::linalg::{kron, kron_mat};
    use proptest::prelude::*;

    fn lambda() -> f64 {
        wavelength(6.8e9)
    }

    fn outer(a: &CVec) -> CMat {
        a * a.adjoint()
    }

    #[test]
    fn covariance_basics() {
        let mut e1 = CVec::zeros(4);
        e1[0] = Complex64::new(1.0, 0.0);
        let c = subarray_covariance(&e1).unwrap();
        assert_eq!(c[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(c.iter().filter(|v| v.norm() > 0.0).count(), 1);
        assert!(subarray_covariance(&CVec::zeros(3)).is_err());

        let h = CVec::from_fn(5, |k, _| Complex64::new(k as f64, 1.0 - k as f64 * 0.3));
        let c = subarray_covariance(&h).unwrap();
        assert!((&c - c.adjoint()).norm() < 1e-14);
        assert!((c.trace().re - h.norm_squared()).abs() < 1e-12);
        let (vals, _) = hermitian_eigen(&c);
        assert!(vals[1].abs() < 1e-10 && vals[0] > 0.0);
    }

    #[test]
    fn kronecker_covariance_is_product_of_factors() {
        let l = lambda();
        let ah = far_field_steering(4, l / 2.0, 0.1, l);
        let av = far_field_steering(3, l / 2.0, -0.6, l);
        let g = Complex64::new(0.3, -1.2);
        let c = subarray_covariance(&(kron(&ah, &av) * g)).unwrap();
        let expected = kron_mat(&outer(&ah), &outer(&av)) * Complex64::new(g.norm_sqr(), 0.0);
        assert!((c - expected).norm() < 1e-12);
    }

    #[test]
    fn identity_extracts_to_identities() {
        let (h, v) = extract_axis_factors(&CMat::identity(12, 12), 3, 4).unwrap();
        assert!((h.matrix - CMat::identity(3, 3)).norm() < 1e-15);
        assert!((v.matrix - CMat::identity(4, 4)).norm() < 1e-15);
        assert_eq!(h.axis, Axis::Horizontal);
        assert!(extract_axis_factors(&CMat::identity(12, 12), 3, 5).is_err());
    }

    #[test]
    fn steering_round_trip() {
        let l = lambda();
        let ah = far_field_steering(8, l / 2.0, 0.3, l);
        let av = far_field_steering(12, l / 2.0, -0.2, l);
        let c = subarray_covariance(&kron(&ah, &av)).unwrap();
        let (h, v) = extract_axis_factors(&c, 8, 12).unwrap();
        assert!((h.matrix - outer(&ah)).norm() < 1e-12);
        assert!((v.matrix - outer(&av)).norm() < 1e-12);
    }

    #[test]
    fn music_resolves_known_direction() {
        let l = lambda();
        let a = far_field_steering(8, l / 2.0, 0.25, l);
        let c = AxisCovariance { matrix: outer(&a), axis: Axis::Horizontal };
        let s = music_1d(&c, 8, l / 2.0, l, 4096, 1).unwrap();
        assert!((s.estimate - 0.25).abs() < 1e-4, "{}", s.estimate);
        assert!((s.estimate - s.grid[s.peak_index]).abs() <= 2.0 / 4095.0 + 1e-15);
        let top = s.values.iter().cloned().fold(0.0, f64::max);
        assert_eq!(top, s.values[s.peak_index]);
        assert!(s.values.iter().all(|v| *v > 0.0));

        let scaled = AxisCovariance { matrix: c.matrix.clone() * Complex64::new(37.5, 0.0), axis: Axis::Horizontal };
        let s2 = music_1d(&scaled, 8, l / 2.0, l, 4096, 1).unwrap();
        assert!((s2.estimate - s.estimate).abs() < 1e-9);
    }

    #[test]
    fn music_dense_scan_oracle() {
        // brute-force minimum of the null function on a 10^6 point scan
        let l = lambda();
        let a = far_field_steering(12, l / 2.0, -0.61803, l);
        let c = AxisCovariance { matrix: outer(&a), axis: Axis::Vertical };
        let s = music_1d(&c, 12, l / 2.0, l, 4096, 1).unwrap();
        let (_, vecs) = hermitian_eigen(&c.matrix);
        let en = vecs.columns(1, 11).into_owned();
        let mut best = (0.0, f64::INFINITY);
        let n = 1_000_000;
        for k in 0..=n {
            let w = -1.0 + 2.0 * k as f64 / n as f64;
            let d = en.ad_mul(&far_field_steering(12, l / 2.0, w, l)).norm_squared();
            if d < best.1 {
                best = (w, d);
            }
        }
        assert!((s.estimate - best.0).abs() < 2e-6);
        assert!((s.estimate + 0.61803).abs() < 1e-6);
    }

    #[test]
    fn music_contract_on_unstructured_input() {
        let c = AxisCovariance { matrix: CMat::identity(6, 6), axis: Axis::Vertical };
        let s = music_1d(&c, 6, lambda() / 2.0, lambda(), 512, 1).unwrap();
        assert!(s.estimate.is_finite() && s.estimate.abs() <= 1.0);
        assert!(music_1d(&c, 6, lambda() / 2.0, lambda(), 512, 6).is_err());
        let text = s.to_text();
        assert_eq!(text.lines().count(), 512);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn beats_angular_quantization(wh in -0.95f64..0.95, wv in -0.95f64..0.95) {
            let l = lambda();
            let ah = far_field_steering(8, l / 2.0, wh, l);
            let av = far_field_steering(12, l / 2.0, wv, l);
            let c = subarray_covariance(&kron(&ah, &av)).unwrap();
            let (h, v) = extract_axis_factors(&c, 8, 12).unwrap();
            prop_assert!((&h.matrix - outer(&ah)).norm() < 1e-12);
            prop_assert!((&v.matrix - outer(&av)).norm() < 1e-12);
            let eh = music_1d(&h, 8, l / 2.0, l, 4096, 1).unwrap().estimate;
            let ev = music_1d(&v, 12, l / 2.0, l, 4096, 1).unwrap().estimate;
            prop_assert!((eh - wh).abs() < 1e-4);
            prop_assert!((ev - wv).abs() < 1e-4);
        }
    }
}
