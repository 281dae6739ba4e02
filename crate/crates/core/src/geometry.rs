//! Array layouts, subarray tiling and direction-vector algebra.
//!
//! The BS array lies in the yz-plane through its center. The horizontal
//! index runs along `+y`, the vertical index along `+z`, and the linear
//! antenna index is vertical-fastest: `m = h * m_v + v`. This ordering makes
//! a planar far-field steering vector equal to `a_h ⊗ a_v`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Planar,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    kind: ArrayKind,
    m_h: usize,
    m_v: usize,
    spacing_h: f64,
    spacing_v: f64,
    center: Point3,
    axis_h: Point3,
    axis_v: Point3,
    positions: Vec<Point3>,
}

impl ArrayGeometry {
    fn build(
        kind: ArrayKind,
        m_h: usize,
        m_v: usize,
        spacing_h: f64,
        spacing_v: f64,
        center: Point3,
        axis_h: Point3,
        axis_v: Point3,
    ) -> Self {
        let off_h = (m_h as f64 - 1.0) / 2.0;
        let off_v = (m_v as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(m_h * m_v);
        for h in 0..m_h {
            for v in 0..m_v {
                positions.push(
                    center
                        + axis_h * ((h as f64 - off_h) * spacing_h)
                        + axis_v * ((v as f64 - off_v) * spacing_v),
                );
            }
        }
        Self {
            kind,
            m_h,
            m_v,
            spacing_h,
            spacing_v,
            center,
            axis_h,
            axis_v,
            positions,
        }
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn m_h(&self) -> usize {
        self.m_h
    }

    pub fn m_v(&self) -> usize {
        self.m_v
    }

    pub fn spacing_h(&self) -> f64 {
        self.spacing_h
    }

    pub fn spacing_v(&self) -> f64 {
        self.spacing_v
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn position(&self, m: usize) -> Point3 {
        self.positions[m]
    }

    /// Linear index of element `(h, v)`.
    pub fn index(&self, h: usize, v: usize) -> usize {
        h * self.m_v + v
    }

    /// Same layout moved rigidly so that its center is `center`.
    pub fn translated_to(&self, center: Point3) -> Self {
        let shift = center - self.center;
        Self {
            center,
            positions: self.positions.iter().map(|p| p + shift).collect(),
            ..self.clone()
        }
    }

    /// Physical extent `(count - 1) * spacing` along each axis.
    pub fn aperture(&self) -> (f64, f64) {
        (
            (self.m_h as f64 - 1.0) * self.spacing_h,
            (self.m_v as f64 - 1.0) * self.spacing_v,
        )
    }
}

/// Uniform planar array in the yz-plane through `center`.
pub fn build_upa(
    m_h: usize,
    m_v: usize,
    spacing_h: f64,
    spacing_v: f64,
    center: Point3,
) -> Result<ArrayGeometry> {
    if m_h == 0 || m_v == 0 {
        return Err(Error::InvalidArgument(format!(
            "antenna counts must be positive (got {m_h} x {m_v})"
        )));
    }
    if !(spacing_h > 0.0 && spacing_v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "antenna spacings must be positive (got {spacing_h}, {spacing_v})"
        )));
    }
    Ok(ArrayGeometry::build(
        ArrayKind::Planar,
        m_h,
        m_v,
        spacing_h,
        spacing_v,
        center,
        Vector3::y(),
        Vector3::z(),
    ))
}

/// Uniform linear array of `n` elements along `axis` (normalized internally).
pub fn build_ula(n: usize, spacing: f64, center: Point3, axis: Point3) -> Result<ArrayGeometry> {
    if n == 0 {
        return Err(Error::InvalidArgument("ULA needs at least one element".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "antenna spacing must be positive (got {spacing})"
        )));
    }
    let norm = axis.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument("ULA axis must be a nonzero vector".into()));
    }
    // The unused vertical axis is only carried for completeness.
    let axis = axis / norm;
    let other = if axis.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    Ok(ArrayGeometry::build(
        ArrayKind::Linear,
        n,
        1,
        spacing,
        spacing,
        center,
        axis,
        axis.cross(&other).normalize(),
    ))
}

#[derive(Debug, Clone)]
pub struct Tile {
    /// Tile position in the `I_h x I_v` grid.
    pub h: usize,
    pub v: usize,
    /// Global antenna indices in tile-local vertical-fastest order.
    pub antennas: Vec<usize>,
    pub geometry: ArrayGeometry,
}

impl Tile {
    pub fn center(&self) -> Point3 {
        self.geometry.center()
    }
}

/// Partition of a planar array into equal contiguous rectangular tiles.
///
/// Tiles are ordered `i = h * I_v + v`.
#[derive(Debug, Clone)]
pub struct SubarrayTiling {
    parent: ArrayGeometry,
    i_h: usize,
    i_v: usize,
    tiles: Vec<Tile>,
}

impl SubarrayTiling {
    pub fn parent(&self) -> &ArrayGeometry {
        &self.parent
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn tile(&self, i: usize) -> &Tile {
        &self.tiles[i]
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.i_h, self.i_v)
    }

    /// Antennas per tile along each axis.
    pub fn tile_shape(&self) -> (usize, usize) {
        (self.parent.m_h / self.i_h, self.parent.m_v / self.i_v)
    }

    pub fn antennas_per_tile(&self) -> usize {
        let (h, v) = self.tile_shape();
        h * v
    }
}

pub fn partition(geom: &ArrayGeometry, i_h: usize, i_v: usize) -> Result<SubarrayTiling> {
    if i_h == 0 || i_v == 0 {
        return Err(Error::InvalidArgument("tile counts must be positive".into()));
    }
    if !geom.m_h.is_multiple_of(i_h) || !geom.m_v.is_multiple_of(i_v) {
        return Err(Error::InvalidArgument(format!(
            "tiling {i_h}x{i_v} does not divide array {}x{}",
            geom.m_h, geom.m_v
        )));
    }
    let th = geom.m_h / i_h;
    let tv = geom.m_v / i_v;
    let mut tiles = Vec::with_capacity(i_h * i_v);
    for h in 0..i_h {
        for v in 0..i_v {
            let mut antennas = Vec::with_capacity(th * tv);
            for lh in 0..th {
                for lv in 0..tv {
                    antennas.push(geom.index(h * th + lh, v * tv + lv));
                }
            }
            let center = antennas
                .iter()
                .fold(Point3::zeros(), |acc, &m| acc + geom.position(m))
                / antennas.len() as f64;
            let geometry = ArrayGeometry::build(
                geom.kind,
                th,
                tv,
                geom.spacing_h,
                geom.spacing_v,
                center,
                geom.axis_h,
                geom.axis_v,
            );
            tiles.push(Tile {
                h,
                v,
                antennas,
                geometry,
            });
        }
    }
    Ok(SubarrayTiling {
        parent: geom.clone(),
        i_h,
        i_v,
        tiles,
    })
}

/// Unit propagation direction given as direction cosines `(k_x, k_y, k_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionVector(Point3);

impl DirectionVector {
    /// Normalizes `v`; fails for zero or non-finite input.
    pub fn new(v: Point3) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("direction must be a nonzero finite vector".into()));
        }
        Ok(Self(v / n))
    }

    pub fn as_vector(&self) -> &Point3 {
        &self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }
}

/// `(sinθ cosφ, sinθ sinφ, cosθ)` for elevation θ and azimuth φ.
pub fn wave_vector(theta: f64, phi: f64) -> DirectionVector {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    DirectionVector(Vector3::new(st * cp, st * sp, ct))
}

const DIRECTION_TOL: f64 = 1e-12;

/// Completes a direction from its y and z cosines with `k_x >= 0`.
pub fn recover_kx(k_y: f64, k_z: f64) -> Result<DirectionVector> {
    let s = k_y * k_y + k_z * k_z;
    if !s.is_finite() || s > 1.0 + DIRECTION_TOL {
        return Err(Error::InvalidDirection(s));
    }
    let k_x = (1.0 - s).max(0.0).sqrt();
    Ok(DirectionVector(Vector3::new(k_x, k_y, k_z)))
}
