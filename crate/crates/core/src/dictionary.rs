//! Dictionaries: the per-subarray angular (far-field) grid, the location
//! grid around a coarse user estimate, and a spherical-domain baseline.

use serde::Serialize;

use crate::channel::{far_field_steering, los_channel, near_field_steering};
use crate::error::{Error, Result};
use crate::geometry::{recover_kx, ArrayGeometry, Point3};
use crate::linalg::{kron, CMat};

/// Smallest x coordinate a location-grid point may take.
pub const MIN_GRID_X: f64 = 0.1;

/// `(2z - Z - 1) / Z` for `z = 1..=Z`.
pub fn cosine_grid(z: usize) -> Vec<f64> {
    (1..=z)
        .map(|k| (2.0 * k as f64 - z as f64 - 1.0) / z as f64)
        .collect()
}

#[derive(Debug, Clone)]
pub struct AngularDictionary {
    matrix: CMat,
    grid: Vec<f64>,
    m_h: usize,
    m_v: usize,
    a_h: CMat,
    a_v: CMat,
}

impl AngularDictionary {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Points per axis.
    pub fn z(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m_h, self.m_v)
    }

    /// Per-axis steering matrices `(A_h, A_v)`; `matrix() = A_h ⊗ A_v`.
    pub fn factors(&self) -> (&CMat, &CMat) {
        (&self.a_h, &self.a_v)
    }

    /// Column index of grid point `(z1, z2)` (zero based).
    pub fn column(&self, z1: usize, z2: usize) -> usize {
        z1 * self.z() + z2
    }

    /// Horizontal and vertical direction cosines of column `q`.
    pub fn direction(&self, q: usize) -> (f64, f64) {
        (self.grid[q / self.z()], self.grid[q % self.z()])
    }
}

/// Columns `a_h(ϖ_z1) ⊗ a_v(ϖ_z2)`, `z1` major.
pub fn build_angular(
    m_h: usize,
    m_v: usize,
    spacing_h: f64,
    spacing_v: f64,
    wavelength: f64,
    z: usize,
) -> Result<AngularDictionary> {
    if z < 2 {
        return Err(Error::InvalidArgument(format!("angular grid needs Z >= 2, got {z}")));
    }
    if m_h == 0 || m_v == 0 {
        return Err(Error::InvalidArgument("subarray must have antennas on both axes".into()));
    }
    let grid = cosine_grid(z);
    let a_h: Vec<_> = grid.iter().map(|&c| far_field_steering(m_h, spacing_h, c, wavelength)).collect();
    let a_v: Vec<_> = grid.iter().map(|&c| far_field_steering(m_v, spacing_v, c, wavelength)).collect();
    let mut matrix = CMat::zeros(m_h * m_v, z * z);
    for (z1, h) in a_h.iter().enumerate() {
        for (z2, v) in a_v.iter().enumerate() {
            matrix.set_column(z1 * z + z2, &kron(h, v));
        }
    }
    let a_h = CMat::from_columns(&a_h);
    let a_v = CMat::from_columns(&a_v);
    Ok(AngularDictionary { matrix, grid, m_h, m_v, a_h, a_v })
}

/// Half-widths and counts of the 3D sampling box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub half_width: [f64; 3],
    pub counts: [usize; 3],
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn axis_points(center: f64, half: f64, count: usize, axis: &str) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::DegenerateGrid(format!("{axis} axis has no samples")));
    }
    if !(half >= 0.0) || !half.is_finite() {
        return Err(Error::DegenerateGrid(format!("{axis} half-width {half} is not a finite non-negative length")));
    }
    if count == 1 {
        return Ok(vec![center]);
    }
    if half == 0.0 {
        return Err(Error::DegenerateGrid(format!(
            "{count} samples along {axis} with zero half-width"
        )));
    }
    let step = 2.0 * half / (count - 1) as f64;
    Ok((0..count).map(|k| center - half + step * k as f64).collect())
}

/// Uniform 3D grid centered on `center`, ordered `(ix * S_y + iy) * S_z + iz`.
/// Points with `x < MIN_GRID_X` are clamped onto that plane.
pub fn location_grid(center: &Point3, spec: &GridSpec) -> Result<Vec<Point3>> {
    let xs = axis_points(center.x, spec.half_width[0], spec.counts[0], "x")?;
    let ys = axis_points(center.y, spec.half_width[1], spec.counts[1], "y")?;
    let zs = axis_points(center.z, spec.half_width[2], spec.counts[2], "z")?;
    let mut out = Vec::with_capacity(spec.len());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                out.push(Point3::new(x.max(MIN_GRID_X), y, z));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LocationDictionary {
    matrix: CMat,
    points: Vec<Point3>,
    spec: GridSpec,
    m: usize,
    n: usize,
}

impl LocationDictionary {
    /// `M N x S`; column `s` is `vec(H_los)` with the user centered at point `s`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Channel shape `(M, N)` each column unfolds to.
    pub fn channel_shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }
}

pub fn build_location(
    center: &Point3,
    spec: &GridSpec,
    bs: &ArrayGeometry,
    ue_template: &ArrayGeometry,
    wavelength: f64,
) -> Result<LocationDictionary> {
    let points = location_grid(center, spec)?;
    let (m, n) = (bs.len(), ue_template.len());
    let mut matrix = CMat::zeros(m * n, points.len());
    for (s, p) in points.iter().enumerate() {
        let h = los_channel(bs, &ue_template.translated_to(*p), wavelength)?;
        matrix.column_mut(s).copy_from_slice(h.as_slice());
    }
    Ok(LocationDictionary {
        matrix,
        points,
        spec: *spec,
        m,
        n,
    })
}

/// `count` distances between `near` and `far` spaced uniformly in `1/r`,
/// nearest first.
pub fn reciprocal_rings(near: f64, far: f64, count: usize) -> Result<Vec<f64>> {
    if !(near > 0.0) || !(far >= near) || count == 0 {
        return Err(Error::InvalidArgument(format!(
            "ring range [{near}, {far}] with {count} rings"
        )));
    }
    if count == 1 {
        return Ok(vec![near]);
    }
    let (a, b) = (1.0 / near, 1.0 / far);
    Ok((0..count)
        .map(|k| 1.0 / (a + (b - a) * k as f64 / (count - 1) as f64))
        .collect())
}

#[derive(Debug, Clone)]
pub struct SphericalDictionary {
    matrix: CMat,
    sources: Vec<Point3>,
}

impl SphericalDictionary {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Focal point of each column.
    pub fn sources(&self) -> &[Point3] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Near-field steering vectors of `bs` focused at `center + r k` for every
/// visible `(k_y, k_z)` on the cosine grid and every ring distance `r`.
/// Column order is `k_y` major, then `k_z`, then distance.
pub fn build_spherical_baseline(
    bs: &ArrayGeometry,
    angle_grid: usize,
    rings: &[f64],
    wavelength: f64,
) -> Result<SphericalDictionary> {
    if angle_grid == 0 || rings.is_empty() {
        return Err(Error::InvalidArgument("spherical dictionary needs angles and distances".into()));
    }
    let grid = if angle_grid == 1 { vec![0.0] } else { cosine_grid(angle_grid) };
    let center = bs.center();
    let mut sources = Vec::new();
    for &ky in &grid {
        for &kz in &grid {
            if ky * ky + kz * kz > 1.0 {
                continue;
            }
            let k = recover_kx(ky, kz)?;
            for &r in rings {
                sources.push(center + k.as_vector() * r);
            }
        }
    }
    let mut matrix = CMat::zeros(bs.len(), sources.len());
    for (c, s) in sources.iter().enumerate() {
        matrix.set_column(c, &near_field_steering(bs, s, wavelength)?);
    }
    Ok(SphericalDictionary { matrix, sources })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::wavelength;
    use crate::geometry::{build_ula, build_upa};
    use crate::linalg::{cis, vectorize, CVec};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn lambda() -> f64 {
        wavelength(6.8e9)
    }

    #[test]
    fn two_point_grid() {
        assert_eq!(cosine_grid(2), vec![-0.5, 0.5]);
        let d = build_angular(2, 3, 0.02, 0.02, lambda(), 2).unwrap();
        assert_eq!(d.matrix().shape(), (6, 4));
        assert_eq!(d.direction(1), (-0.5, 0.5));
        assert_eq!(d.direction(2), (0.5, -0.5));
        assert!(build_angular(2, 3, 0.02, 0.02, lambda(), 1).is_err());
    }

    #[test]
    fn angular_columns_are_kronecker_steering() {
        let l = lambda();
        let (mh, mv, z) = (3, 4, 5);
        let d = build_angular(mh, mv, l / 2.0, 0.6 * l, l, z).unwrap();
        for z1 in 0..z {
            for z2 in 0..z {
                let w1 = (2.0 * (z1 + 1) as f64 - z as f64 - 1.0) / z as f64;
                let w2 = (2.0 * (z2 + 1) as f64 - z as f64 - 1.0) / z as f64;
                // entry (h, v) written out directly
                let col = d.matrix().column(d.column(z1, z2));
                for h in 0..mh {
                    for v in 0..mv {
                        let ph = PI * w1 * (h as f64 - 1.0) + 2.0 * PI * 0.6 * w2 * (v as f64 - 1.5);
                        assert!((col[h * mv + v] - cis(ph)).norm() < 1e-12);
                    }
                }
            }
        }
        assert!(d.matrix().iter().all(|x| (x.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn full_tile_dictionary_coherence() {
        let l = lambda();
        let d = build_angular(8, 12, l / 2.0, l / 2.0, l, 32).unwrap();
        let a = d.matrix();
        let q = a.ncols();
        let norms: Vec<f64> = (0..q).map(|c| a.column(c).norm()).collect();
        let gram = a.adjoint() * a;
        let mut max_off: f64 = 0.0;
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    max_off = max_off.max(gram[(i, j)].norm() / (norms[i] * norms[j]));
                }
            }
        }
        assert!(max_off < 1.0 - 1e-9, "{max_off}");
        // an on-grid steering vector correlates perfectly with exactly its own column
        let target = d.column(7, 20);
        let h = kron(
            &far_field_steering(8, l / 2.0, d.grid()[7], l),
            &far_field_steering(12, l / 2.0, d.grid()[20], l),
        );
        let corr: Vec<f64> = (0..q)
            .map(|c| (a.column(c).dotc(&h)).norm() / (norms[c] * h.norm()))
            .collect();
        let best = (0..q).max_by(|&x, &y| corr[x].total_cmp(&corr[y])).unwrap();
        assert_eq!(best, target);
        assert!((corr[best] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn on_grid_paths_are_sparse_in_angular_dictionary() {
        let l = lambda();
        let d = build_angular(4, 6, l / 2.0, l / 2.0, l, 16).unwrap();
        let picks = [(2, 9, Complex64::new(1.0, 0.5)), (11, 3, Complex64::new(-0.1, 0.05)), (5, 5, Complex64::new(0.0, 0.2))];
        let mut h = CVec::zeros(24);
        let mut x = CVec::zeros(d.matrix().ncols());
        for &(z1, z2, g) in &picks {
            h += kron(
                &far_field_steering(4, l / 2.0, d.grid()[z1], l),
                &far_field_steering(6, l / 2.0, d.grid()[z2], l),
            ) * g;
            x[d.column(z1, z2)] = g;
        }
        assert!((&h - d.matrix() * &x).norm() / h.norm() < 1e-10);
    }

    fn arrays() -> (ArrayGeometry, ArrayGeometry) {
        let l = lambda();
        let bs = build_upa(4, 4, l / 2.0, l / 2.0, Point3::zeros()).unwrap();
        let ue = build_ula(2, l / 2.0, Point3::zeros(), Point3::new(0.0, 1.0, 0.0)).unwrap();
        (bs, ue)
    }

    #[test]
    fn single_point_grid_is_los_channel() {
        let (bs, ue) = arrays();
        let p = Point3::new(5.0, 1.0, -0.5);
        let spec = GridSpec { half_width: [0.2, 0.2, 0.02], counts: [1, 1, 1] };
        let d = build_location(&p, &spec, &bs, &ue, lambda()).unwrap();
        let h = los_channel(&bs, &ue.translated_to(p), lambda()).unwrap();
        assert_eq!(d.matrix().ncols(), 1);
        assert!((d.matrix().column(0) - vectorize(&h)).norm() < 1e-15);
    }

    #[test]
    fn full_location_grid() {
        let spec = GridSpec { half_width: [0.2, 0.2, 0.02], counts: [11, 11, 3] };
        let c = Point3::new(6.0, 2.0, -1.0);
        let pts = location_grid(&c, &spec).unwrap();
        assert_eq!(pts.len(), 363);
        // x is the slowest axis: stride S_y * S_z
        assert!((pts[33].x - pts[0].x - 0.04).abs() < 1e-12);
        assert!((pts[3].y - pts[0].y - 0.04).abs() < 1e-12);
        assert!((pts[1].z - pts[0].z - 0.02).abs() < 1e-12);
        assert!((pts[0] - Point3::new(5.8, 1.8, -1.02)).norm() < 1e-12);
        assert!((pts[362] - Point3::new(6.2, 2.2, -0.98)).norm() < 1e-12);
        assert!((pts[181] - c).norm() < 1e-12);
    }

    #[test]
    fn degenerate_grids() {
        let c = Point3::new(6.0, 0.0, 0.0);
        let spec = GridSpec { half_width: [0.0, 0.2, 0.02], counts: [3, 1, 1] };
        assert!(matches!(location_grid(&c, &spec), Err(Error::DegenerateGrid(_))));
        let spec = GridSpec { half_width: [0.2, 0.2, 0.02], counts: [0, 1, 1] };
        assert!(matches!(location_grid(&c, &spec), Err(Error::DegenerateGrid(_))));
        let spec = GridSpec { half_width: [0.0, 0.0, 0.0], counts: [1, 1, 1] };
        assert_eq!(location_grid(&c, &spec).unwrap().len(), 1);
    }

    #[test]
    fn grid_is_clamped_to_front_half_space() {
        let c = Point3::new(0.15, 0.0, 0.0);
        let spec = GridSpec { half_width: [0.2, 0.0, 0.0], counts: [5, 1, 1] };
        let pts = location_grid(&c, &spec).unwrap();
        assert!(pts.iter().all(|p| p.x >= MIN_GRID_X));
        assert_eq!(pts[0].x, MIN_GRID_X);
        assert!((pts[4].x - 0.35).abs() < 1e-12);
    }

    #[test]
    fn true_location_on_grid_is_a_column() {
        let (bs, ue) = arrays();
        let spec = GridSpec { half_width: [0.2, 0.2, 0.02], counts: [5, 5, 3] };
        let c = Point3::new(4.0, -1.0, 0.5);
        let d = build_location(&c, &spec, &bs, &ue, lambda()).unwrap();
        let truth = d.points()[37];
        let h = vectorize(&los_channel(&bs, &ue.translated_to(truth), lambda()).unwrap());
        let hits: Vec<usize> = (0..d.len())
            .filter(|&s| (d.matrix().column(s) - &h).norm() < 1e-14 * h.norm())
            .collect();
        assert_eq!(hits, vec![37]);
    }

    #[test]
    fn rings_are_uniform_in_reciprocal_distance() {
        let r = reciprocal_rings(5.0, 25.0, 4).unwrap();
        assert_eq!(r.len(), 4);
        assert!((r[0] - 5.0).abs() < 1e-12 && (r[3] - 25.0).abs() < 1e-12);
        let inv: Vec<f64> = r.iter().map(|x| 1.0 / x).collect();
        assert!(((inv[0] - inv[1]) - (inv[2] - inv[3])).abs() < 1e-12);
    }

    #[test]
    fn spherical_single_column_and_count() {
        let (bs, _) = arrays();
        let l = lambda();
        let d = build_spherical_baseline(&bs, 1, &[7.0], l).unwrap();
        assert_eq!(d.len(), 1);
        let a = near_field_steering(&bs, &Point3::new(7.0, 0.0, 0.0), l).unwrap();
        assert!((d.matrix().column(0) - a).norm() < 1e-12);

        // on a 4-point grid only the four (±0.75, ±0.75) corners are invisible
        let d = build_spherical_baseline(&bs, 4, &[5.0, 10.0, 20.0], l).unwrap();
        assert_eq!(d.matrix().ncols(), 12 * 3);
        assert!(d.matrix().iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        // the corners of an 8-point grid fall outside the unit disk
        let d = build_spherical_baseline(&bs, 8, &[5.0], l).unwrap();
        let visible = cosine_grid(8)
            .iter()
            .flat_map(|a| cosine_grid(8).into_iter().map(move |b| a * a + b * b))
            .filter(|s| *s <= 1.0)
            .count();
        assert_eq!(d.len(), visible);
        assert!(visible < 64);
    }

    #[test]
    fn distant_ring_matches_planar_model() {
        let l = lambda();
        let bs = build_upa(4, 6, l / 2.0, l / 2.0, Point3::zeros()).unwrap();
        let r = 1e6;
        let d = build_spherical_baseline(&bs, 4, &[r], l).unwrap();
        let grid = cosine_grid(4);
        let (ky, kz) = (grid[1], grid[3]);
        let c = d
            .sources()
            .iter()
            .position(|s| (s.y / r - ky).abs() < 1e-9 && (s.z / r - kz).abs() < 1e-9)
            .unwrap();
        let col = d.matrix().column(c);
        let planar = kron(&far_field_steering(4, l / 2.0, ky, l), &far_field_steering(6, l / 2.0, kz, l));
        // remove the common propagation phase to the array center
        let common = cis(2.0 * PI * r / l);
        for m in 0..24 {
            let ratio = col[m] * common * planar[m].conj();
            assert!(ratio.arg().abs() < 1e-3, "entry {m}: {}", ratio.arg());
        }
    }
}
