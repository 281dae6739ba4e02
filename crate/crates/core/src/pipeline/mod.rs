//! Reception simulation, the three-stage estimator, and the baselines.

mod baselines;
mod stages;
mod trial;

pub use baselines::{baseline_antenna_wise, baseline_eigen_dictionary, stage1_only_channel, AntennaWiseKind, BaselineOperators};
pub use stages::{
    run_three_stage, stage1, stage2, stage3, Stage1Solver, Stage2Output, Stage3Output, Stage3Solver, StageOutputs,
    StageTimings, TileEstimate,
};
pub use trial::{Method, MethodOutcome, TrialContext};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{wavelength, ChannelRealization};
use crate::dictionary::{build_angular, AngularDictionary, GridSpec};
use crate::error::{Error, Result};
use crate::geometry::{build_ula, build_upa, partition, ArrayGeometry, Point3, SubarrayTiling};
use crate::linalg::{complex_normal_vec, matmul, CMat};
use crate::sensing::{design_combiner, CombinerDesign, Normalization, PrecoderDesign};
use crate::solvers::{KroneckerOperator, SblOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Array layout shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub carrier_hz: f64,
    /// `[M_h, M_v]`.
    pub bs_antennas: [usize; 2],
    /// `[Δ_h, Δ_v]` in wavelengths.
    pub bs_spacing: [f64; 2],
    /// `[I_h, I_v]`.
    pub tiles: [usize; 2],
    pub user_antennas: usize,
    pub user_spacing: f64,
}

impl ArrayConfig {
    pub fn full() -> Self {
        Self {
            carrier_hz: 6.8e9,
            bs_antennas: [16, 48],
            bs_spacing: [0.5, 0.5],
            tiles: [2, 4],
            user_antennas: 4,
            user_spacing: 0.5,
        }
    }

    pub fn desk() -> Self {
        Self {
            bs_antennas: [8, 16],
            tiles: [2, 2],
            user_antennas: 2,
            ..Self::full()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Omp,
    Sbl,
}

/// Estimator tuning. Defaults are the full-size values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Combining slots per pilot block, `T`.
    pub slots: usize,
    /// RF chains per tile, `M_rf,i`.
    pub chains_per_tile: usize,
    pub normalization: Normalization,
    /// Angular grid points per axis, `Z`.
    pub angular_grid: usize,
    /// Assumed NLoS path count; Stage-1 OMP selects `L + 1` atoms.
    pub assumed_paths: usize,
    pub omp_residual_tol: f64,
    pub stage1_solver: SolverKind,
    pub music_grid: usize,
    pub location_grid: GridSpec,
    pub sbl: SblOptions,
    /// SBL noise variance floor relative to the mean observation power.
    pub noise_floor: f64,
    /// Atom cap for the antenna-wise baselines.
    pub baseline_max_atoms: usize,
    /// Angular grid per axis of the full-array far-field baseline.
    pub full_array_grid: usize,
    pub spherical_angle_grid: usize,
    /// `[near, far]` distance range of the spherical baseline, meters.
    pub spherical_range: [f64; 2],
    pub spherical_rings: usize,
    /// Singular vectors kept by the eigen-dictionary baseline; 0 keeps all.
    pub eigen_rank: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            slots: 6,
            chains_per_tile: 16,
            normalization: Normalization::Orthonormal,
            angular_grid: 64,
            assumed_paths: 2,
            omp_residual_tol: 1e-3,
            stage1_solver: SolverKind::Omp,
            music_grid: 4096,
            location_grid: GridSpec {
                half_width: [0.2, 0.2, 0.02],
                counts: [11, 11, 3],
            },
            sbl: SblOptions::default(),
            noise_floor: 1e-6,
            baseline_max_atoms: 16,
            full_array_grid: 64,
            spherical_angle_grid: 32,
            spherical_range: [5.0, 25.0],
            spherical_rings: 4,
            eigen_rank: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn desk() -> Self {
        Self {
            slots: 4,
            chains_per_tile: 8,
            angular_grid: 32,
            full_array_grid: 32,
            stage1_solver: SolverKind::Sbl,
            ..Self::default()
        }
    }
}

/// Geometry, tiling, and the angular dictionary; fixed for an experiment.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub array: ArrayConfig,
    pub estimator: EstimatorConfig,
    pub wavelength: f64,
    pub bs: ArrayGeometry,
    /// User array centered at the origin; translated per scene.
    pub ue_template: ArrayGeometry,
    pub tiling: SubarrayTiling,
    pub dictionary: Arc<AngularDictionary>,
}

impl SystemModel {
    pub fn new(array: &ArrayConfig, estimator: &EstimatorConfig) -> Result<Self> {
        if !(array.carrier_hz > 0.0) {
            return Err(Error::InvalidArgument("carrier frequency must be positive".into()));
        }
        let lambda = wavelength(array.carrier_hz);
        let [m_h, m_v] = array.bs_antennas;
        let [dh, dv] = array.bs_spacing.map(|s| s * lambda);
        let bs = build_upa(m_h, m_v, dh, dv, Point3::zeros())?;
        let ue = build_ula(
            array.user_antennas,
            array.user_spacing * lambda,
            Point3::zeros(),
            Point3::new(0.0, 1.0, 0.0),
        )?;
        let tiling = partition(&bs, array.tiles[0], array.tiles[1])?;
        let (th, tv) = tiling.tile_shape();
        let dictionary = build_angular(th, tv, dh, dv, lambda, estimator.angular_grid)?;
        Ok(Self {
            array: array.clone(),
            estimator: estimator.clone(),
            wavelength: lambda,
            bs,
            ue_template: ue,
            tiling,
            dictionary: Arc::new(dictionary),
        })
    }

    pub fn designed_combiner(&self) -> Result<CombinerDesign> {
        design_combiner(
            self.estimator.slots,
            &self.tiling,
            self.estimator.chains_per_tile,
            self.estimator.normalization,
        )
    }

    pub fn user_at(&self, center: Point3) -> ArrayGeometry {
        self.ue_template.translated_to(center)
    }
}

/// A combiner together with the per-tile operators `V_RF,i A`, dense and
/// in factored form.
#[derive(Debug, Clone)]
pub struct SensingSetup {
    pub combiner: Arc<CombinerDesign>,
    tile_ops: Vec<Arc<(CMat, KroneckerOperator)>>,
}

impl SensingSetup {
    pub fn new(model: &SystemModel, combiner: CombinerDesign) -> Result<Self> {
        if combiner.num_antennas() != model.bs.len() || combiner.num_tiles() != model.tiling.len() {
            return Err(Error::InvalidArgument("combiner does not match the array tiling".into()));
        }
        let (a_h, a_v) = model.dictionary.factors();
        let mut tile_ops: Vec<Arc<(CMat, KroneckerOperator)>> = Vec::with_capacity(combiner.num_tiles());
        for i in 0..combiner.num_tiles() {
            let v = combiner.per_tile(i);
            // identical tile combiners share one operator
            let shared = (0..i).find(|&j| combiner.per_tile(j) == v);
            let op = match shared {
                Some(j) => Arc::clone(&tile_ops[j]),
                None => Arc::new((
                    matmul(v, model.dictionary.matrix()),
                    KroneckerOperator::new(v.clone(), a_h.clone(), a_v.clone())?,
                )),
            };
            tile_ops.push(op);
        }
        Ok(Self {
            combiner: Arc::new(combiner),
            tile_ops,
        })
    }

    /// `V_RF,i A` for tile `i`.
    pub fn tile_operator(&self, i: usize) -> &CMat {
        &self.tile_ops[i].0
    }

    /// `V_RF,i (A_h ⊗ A_v)` for tile `i`, unexpanded.
    pub fn tile_factors(&self, i: usize) -> &KroneckerOperator {
        &self.tile_ops[i].1
    }
}

/// Received pilots of one user: column `τ` of `y` is block `τ`.
#[derive(Debug, Clone)]
pub struct ReceptionRecord {
    pub y: CMat,
    pub combiner: Arc<CombinerDesign>,
    pub precoder: PrecoderDesign,
    /// Transmit power per block, chosen so total pilot energy equals the
    /// scene's `tx_power` whatever the number of blocks.
    pub block_power: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl ReceptionRecord {
    pub fn blocks(&self) -> usize {
        self.y.ncols()
    }

    /// `Σ_τ p ‖w_τ‖²`.
    pub fn pilot_energy(&self) -> f64 {
        self.block_power * self.precoder.energy()
    }
}

/// `y_τ = sqrt(p) V_RF H w_τ + blkdiag(V_RF,t) n_τ`, `n_τ ~ CN(0, σ² I_{TM})`.
pub fn simulate_reception(
    channel: &ChannelRealization,
    combiner: Arc<CombinerDesign>,
    precoder: PrecoderDesign,
    seed: u64,
) -> Result<ReceptionRecord> {
    let (m, n) = channel.shape();
    if combiner.num_antennas() != m || precoder.antennas() != n {
        return Err(Error::InvalidArgument(format!(
            "channel is {m}x{n}, combiner expects {} BS antennas and precoder {} user antennas",
            combiner.num_antennas(),
            precoder.antennas()
        )));
    }
    let scene = &channel.scene;
    if !(scene.noise_var >= 0.0) || !(scene.tx_power > 0.0) {
        return Err(Error::InvalidArgument("need tx_power > 0 and noise_var >= 0".into()));
    }
    let block_power = scene.tx_power / precoder.energy();
    let hw = matmul(&channel.h, precoder.matrix());
    let mut y = matmul(combiner.aggregated(), &hw);
    y.scale_mut(block_power.sqrt());
    if scene.noise_var > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mut col in y.column_iter_mut() {
            let noise = complex_normal_vec(&mut rng, combiner.slots() * m, scene.noise_var);
            col += combiner.combine_noise(&noise);
        }
    }
    Ok(ReceptionRecord {
        y,
        combiner,
        precoder,
        block_power,
        noise_var: scene.noise_var,
        seed,
    })
}
