//! Near-field channel synthesis: LoS matrix, spherical and planar steering
//! vectors, and NLoS scatterer paths.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Point3};
use crate::linalg::{cis, complex_normal, CMat, CVec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

const COINCIDENT_TOL: f64 = 1e-12;

fn distance(a: &Point3, b: &Point3) -> Result<f64> {
    let r = (a - b).norm();
    if r < COINCIDENT_TOL {
        return Err(Error::SingularGeometry(format!(
            "coincident points at ({:.3}, {:.3}, {:.3})",
            a.x, a.y, a.z
        )));
    }
    Ok(r)
}

/// Entry `(m, n)` is `exp(-j 2π r_mn / λ) / r_mn` for the distance between
/// BS antenna `m` and user antenna `n`.
pub fn los_channel(bs: &ArrayGeometry, ue: &ArrayGeometry, wavelength: f64) -> Result<CMat> {
    let k = 2.0 * PI / wavelength;
    let mut h = CMat::zeros(bs.len(), ue.len());
    for (n, pu) in ue.positions().iter().enumerate() {
        for (m, pb) in bs.positions().iter().enumerate() {
            let r = distance(pb, pu)?;
            h[(m, n)] = cis(-k * r) / r;
        }
    }
    Ok(h)
}

/// Unit-modulus spherical-wave steering vector toward `source`.
pub fn near_field_steering(geom: &ArrayGeometry, source: &Point3, wavelength: f64) -> Result<CVec> {
    let k = 2.0 * PI / wavelength;
    let mut a = CVec::zeros(geom.len());
    for (m, p) in geom.positions().iter().enumerate() {
        a[m] = cis(-k * distance(p, source)?);
    }
    Ok(a)
}

/// Planar-wave steering vector of a uniform line of `m_e` elements,
/// `exp(j 2π/λ ϖ (m - (m_e-1)/2) Δ)` for `m = 0..m_e`.
pub fn far_field_steering(m_e: usize, spacing: f64, cosine: f64, wavelength: f64) -> CVec {
    let k = 2.0 * PI / wavelength * cosine * spacing;
    let off = (m_e as f64 - 1.0) / 2.0;
    CVec::from_fn(m_e, |m, _| cis(k * (m as f64 - off)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathGain {
    Fixed { re: f64, im: f64 },
    /// `sqrt(power) * CN(0, 1)`, drawn at synthesis time.
    Rayleigh { power: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub scatterer: Point3,
    /// Far-field angle of departure at the user array, from broadside.
    pub aod: f64,
    pub gain: PathGain,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub bs: ArrayGeometry,
    pub ue: ArrayGeometry,
    pub paths: Vec<PathParams>,
    pub wavelength: f64,
    pub tx_power: f64,
    pub noise_var: f64,
}

impl Scene {
    pub fn new(bs: ArrayGeometry, ue: ArrayGeometry, wavelength: f64) -> Result<Self> {
        if ue.center().x <= 0.0 {
            return Err(Error::InvalidArgument(
                "user array center must lie in the x > 0 half-space".into(),
            ));
        }
        if !(wavelength > 0.0) {
            return Err(Error::InvalidArgument("wavelength must be positive".into()));
        }
        Ok(Self {
            bs,
            ue,
            paths: Vec::new(),
            wavelength,
            tx_power: 1.0,
            noise_var: 0.0,
        })
    }

    pub fn user_center(&self) -> Point3 {
        self.ue.center()
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMat,
    pub h_los: CMat,
    pub h_nlos: CMat,
    /// Realized complex gain of each NLoS path.
    pub gains: Vec<Complex64>,
    pub scene: Scene,
}

impl ChannelRealization {
    pub fn shape(&self) -> (usize, usize) {
        self.h.shape()
    }
}

/// `h_l(p_l) h_f(ψ_l)^H` for one scatterer path.
fn nlos_component(bs: &ArrayGeometry, ue: &ArrayGeometry, path: &PathParams, wavelength: f64) -> Result<CMat> {
    let h_bs = near_field_steering(bs, &path.scatterer, wavelength)?;
    let h_ue = far_field_steering(ue.len(), ue.spacing_h(), path.aod.sin(), wavelength);
    Ok(&h_bs * h_ue.adjoint())
}

/// Builds `H = H_los + Σ_l α_l h_l h_f^H`. Randomness only enters through
/// Rayleigh path gains, drawn from `seed`.
pub fn synthesize(scene: &Scene, seed: u64) -> Result<ChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_los = los_channel(&scene.bs, &scene.ue, scene.wavelength)?;
    let mut h_nlos = CMat::zeros(h_los.nrows(), h_los.ncols());
    let mut gains = Vec::with_capacity(scene.paths.len());
    for path in &scene.paths {
        let alpha = match path.gain {
            PathGain::Fixed { re, im } => Complex64::new(re, im),
            PathGain::Rayleigh { power } => complex_normal(&mut rng, power),
        };
        gains.push(alpha);
        if alpha != Complex64::new(0.0, 0.0) {
            h_nlos += nlos_component(&scene.bs, &scene.ue, path, scene.wavelength)? * alpha;
        }
    }
    Ok(ChannelRealization {
        h: &h_los + &h_nlos,
        h_los,
        h_nlos,
        gains,
        scene: scene.clone(),
    })
}

/// Random scatterer placement and NLoS power allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererModel {
    pub count: usize,
    /// Scatterer x as a fraction of the user's x coordinate.
    pub x_fraction: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    /// Ratio of LoS power to total expected NLoS power.
    pub los_to_nlos_db: f64,
}

impl Default for ScattererModel {
    fn default() -> Self {
        Self {
            count: 2,
            x_fraction: [0.2, 0.8],
            y_range: [-5.0, 5.0],
            z_range: [-2.0, 2.0],
            los_to_nlos_db: 20.0,
        }
    }
}

impl ScattererModel {
    /// Per-path Rayleigh power such that `‖H_los‖² / E‖H_nlos‖²` equals the
    /// configured ratio. Each path contributes `power * M * N` in expectation.
    pub fn path_power(&self, los_power: f64, m: usize, n: usize) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        los_power / (m as f64 * n as f64 * self.count as f64 * 10f64.powf(self.los_to_nlos_db / 10.0))
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        user_center: &Point3,
        los_power: f64,
        m: usize,
        n: usize,
    ) -> Vec<PathParams> {
        let power = self.path_power(los_power, m, n);
        let uniform = |rng: &mut R, [lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
        (0..self.count)
            .map(|_| {
                let x = user_center.x * uniform(rng, self.x_fraction);
                let y = uniform(rng, self.y_range);
                let z = uniform(rng, self.z_range);
                let aod = uniform(rng, [-PI / 2.0, PI / 2.0]);
                PathParams {
                    scatterer: Point3::new(x, y, z),
                    aod,
                    gain: PathGain::Rayleigh { power },
                }
            })
            .collect()
    }
}
