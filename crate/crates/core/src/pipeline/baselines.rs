use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ReceptionRecord, SensingSetup, SystemModel, TileEstimate};
use crate::channel::los_channel;
use crate::dictionary::{build_angular, build_spherical_baseline, reciprocal_rings};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::linalg::{matmul, CMat, CVec};
use crate::solvers::{omp, OmpStop, SparseProblem};

const PINV_EPS: f64 = 1e-12;

/// Dictionary used by the antenna-wise baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaWiseKind {
    /// Far-field Kronecker grid over the whole array.
    FarFieldDft,
    /// Joint angle and distance grid over the whole array.
    Spherical,
    /// Far-field grid per tile, tiles solved independently.
    SubarrayDft,
}

/// Full-array dictionaries `D` and their sensing operators `V_RF D`, built
/// on first use.
#[derive(Debug)]
pub struct BaselineOperators {
    far_field: OnceLock<(CMat, CMat)>,
    spherical: OnceLock<(CMat, CMat)>,
}

impl Default for BaselineOperators {
    fn default() -> Self {
        Self::new()
    }
}

impl BaselineOperators {
    pub fn new() -> Self {
        Self {
            far_field: OnceLock::new(),
            spherical: OnceLock::new(),
        }
    }

    fn get(&self, kind: AntennaWiseKind, model: &SystemModel, sensing: &SensingSetup) -> Result<&(CMat, CMat)> {
        let cell = match kind {
            AntennaWiseKind::FarFieldDft => &self.far_field,
            AntennaWiseKind::Spherical => &self.spherical,
            AntennaWiseKind::SubarrayDft => unreachable!("subarray operators live in the sensing setup"),
        };
        if let Some(v) = cell.get() {
            return Ok(v);
        }
        let cfg = &model.estimator;
        let bs = &model.bs;
        let dict = match kind {
            AntennaWiseKind::FarFieldDft => build_angular(
                bs.m_h(),
                bs.m_v(),
                bs.spacing_h(),
                bs.spacing_v(),
                model.wavelength,
                cfg.full_array_grid,
            )?
            .matrix()
            .clone(),
            _ => {
                let rings = reciprocal_rings(cfg.spherical_range[0], cfg.spherical_range[1], cfg.spherical_rings)?;
                build_spherical_baseline(bs, cfg.spherical_angle_grid, &rings, model.wavelength)?
                    .matrix()
                    .clone()
            }
        };
        let op = matmul(sensing.combiner.aggregated(), &dict);
        Ok(cell.get_or_init(|| (dict, op)))
    }
}

/// `Y W^H / sqrt(p)`: per user antenna, `V_RF h^(n)` plus noise.
fn decoupled(record: &ReceptionRecord) -> Result<CMat> {
    let w = record.precoder.matrix();
    if w.nrows() != w.ncols() {
        return Err(Error::InvalidArgument(format!(
            "antenna-wise estimation needs N = {} blocks, got {}",
            w.nrows(),
            w.ncols()
        )));
    }
    let mut z = matmul(&record.y, &w.adjoint());
    z.unscale_mut(record.block_power.sqrt());
    Ok(z)
}

/// OMP capped at `max_atoms`, stopping early once the residual reaches the
/// expected noise norm.
fn noise_aware_omp(op: &CMat, z: &CVec, noise_var: f64, max_atoms: usize) -> Result<CVec> {
    let problem = SparseProblem::new(op, z)?;
    let zn = z.norm();
    let tol = if zn > 0.0 { (z.len() as f64 * noise_var).sqrt() / zn } else { 0.0 };
    let stop = OmpStop {
        max_atoms: Some(max_atoms.min(op.nrows()).min(op.ncols())),
        residual_tol: Some(tol),
    };
    Ok(omp(&problem, stop)?.x)
}

/// Per-user-antenna SIMO recovery from an `N`-block DFT-precoded record.
pub fn baseline_antenna_wise(
    record: &ReceptionRecord,
    model: &SystemModel,
    sensing: &SensingSetup,
    operators: &BaselineOperators,
    kind: AntennaWiseKind,
) -> Result<CMat> {
    let z = decoupled(record)?;
    let n = z.ncols();
    let m = model.bs.len();
    let noise = record.noise_var * record.combiner.row_power() / record.block_power;
    let cap = model.estimator.baseline_max_atoms;
    let mut h = CMat::zeros(m, n);
    match kind {
        AntennaWiseKind::SubarrayDft => {
            let a = model.dictionary.matrix();
            for i in 0..model.tiling.len() {
                let rows = record.combiner.tile_rows(i);
                let antennas = &model.tiling.tile(i).antennas;
                for col in 0..n {
                    let zi = CVec::from_iterator(rows.len(), rows.iter().map(|&r| z[(r, col)]));
                    let x = noise_aware_omp(sensing.tile_operator(i), &zi, noise, cap)?;
                    let hi = a * x;
                    for (k, &ant) in antennas.iter().enumerate() {
                        h[(ant, col)] = hi[k];
                    }
                }
            }
        }
        _ => {
            let (dict, op) = operators.get(kind, model, sensing)?;
            for col in 0..n {
                let x = noise_aware_omp(op, &z.column(col).into_owned(), noise, cap)?;
                h.set_column(col, &(dict * x));
            }
        }
    }
    Ok(h)
}

/// Channel confined to the singular subspaces of the LoS channel predicted
/// at `location`: `Ĥ = U X V^H`, `X` fit by least squares.
pub fn baseline_eigen_dictionary(
    record: &ReceptionRecord,
    location: &Point3,
    model: &SystemModel,
    rank: usize,
) -> Result<CMat> {
    let z = decoupled(record)?;
    let h0 = los_channel(&model.bs, &model.user_at(*location), model.wavelength)?;
    let n = h0.ncols();
    let r = if rank == 0 { n } else { rank.min(n) };
    let svd = h0.svd(true, true);
    let u = svd.u.expect("requested U").columns(0, r).into_owned();
    let v = svd.v_t.expect("requested V^H").adjoint().columns(0, r).into_owned();
    let phi = matmul(record.combiner.aggregated(), &u);
    let rhs = matmul(&z, &v);
    let x = phi
        .svd(true, true)
        .solve(&rhs, PINV_EPS)
        .map_err(|e| Error::DegenerateInput(format!("eigen-dictionary fit: {e}")))?;
    Ok(matmul(&matmul(&u, &x), &v.adjoint()))
}

/// Stage-1 estimate alone: each tile's `A x̂_i / N` for every user antenna.
pub fn stage1_only_channel(tiles: &[TileEstimate], model: &SystemModel) -> CMat {
    let n = model.ue_template.len();
    let mut h = CMat::zeros(model.bs.len(), n);
    let inv = Complex64::new(1.0 / n as f64, 0.0);
    for (i, est) in tiles.iter().enumerate() {
        for (k, &ant) in model.tiling.tile(i).antennas.iter().enumerate() {
            for col in 0..n {
                h[(ant, col)] = est.channel[k] * inv;
            }
        }
    }
    h
}
