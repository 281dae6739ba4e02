//! Sub-connected analog combiners and user precoders.
//!
//! Each tile of `M_i` antennas is served by `M_rf,i` RF chains, each chain
//! driving `M_s = M_i / M_rf,i` consecutive (tile-local) antennas. Over `T`
//! slots the receiver cycles `T` combiners `V_RF,t`; stacking them gives the
//! aggregated combiner `V_RF` with rows ordered `t * M_RF + i * M_rf,i + m`.
//!
//! The deterministic design takes chain `m`'s `T x M_s` weight block `F_m`
//! from rows `m, M_rf,i + m, ..., (T-1) M_rf,i + m` of the first `M_s`
//! columns of a `T M_rf,i`-point DFT. Because the selected rows are spaced
//! by `M_rf,i`, the columns of `F_m` are orthonormal whenever `M_s <= T`,
//! which makes every `V_RF,i` (and `V_RF`) have orthonormal columns.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SubarrayTiling;
use crate::linalg::{adjoint_matmul, cis, identity_defect, matmul_adjoint, CMat, CVec};

/// Tolerance used when a design verifies its own algebraic guarantees.
pub const DESIGN_TOL: f64 = 1e-10;

/// Per-element modulus of the phase-shifter weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `1/sqrt(T)`: keeps `V_RF,i^H V_RF,i = I` for any `T >= M_s`.
    #[default]
    Orthonormal,
    /// `1/sqrt(M_s)`: the per-chain unit-power constraint.
    PerElement,
}

#[derive(Debug, Clone)]
pub struct CombinerDesign {
    slots: usize,
    antennas_per_chain: usize,
    chains_per_tile: usize,
    tile_antennas: Vec<Vec<usize>>,
    num_antennas: usize,
    modulus: f64,
    per_tile: Vec<CMat>,
    per_slot: Vec<CMat>,
    aggregated: CMat,
}

/// Measured algebraic properties of a combiner.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    /// `‖V_RF,i^H V_RF,i / g - I‖_F` per tile, `g` the expected gain.
    pub tile_defects: Vec<f64>,
    /// `‖V_RF^H V_RF / g - I‖_F`.
    pub global_defect: f64,
    /// `‖V_RF,t V_RF,t^H / w - I‖_F` per slot, `w` the per-row power.
    pub slot_defects: Vec<f64>,
}

impl DesignReport {
    pub fn max_defect(&self) -> f64 {
        self.tile_defects
            .iter()
            .chain(self.slot_defects.iter())
            .fold(self.global_defect, |a, &b| a.max(b))
    }
}

fn check_shape(slots: usize, tiling: &SubarrayTiling, chains_per_tile: usize) -> Result<usize> {
    if slots == 0 || chains_per_tile == 0 {
        return Err(Error::InvalidArgument("slots and RF chains must be positive".into()));
    }
    let m_i = tiling.antennas_per_tile();
    if !m_i.is_multiple_of(chains_per_tile) {
        return Err(Error::InvalidArgument(format!(
            "{chains_per_tile} RF chains do not divide a tile of {m_i} antennas"
        )));
    }
    let m_s = m_i / chains_per_tile;
    if slots < m_s {
        return Err(Error::InfeasibleDesign(format!(
            "T = {slots} slots is below M_s = {m_s} antennas per chain"
        )));
    }
    Ok(m_s)
}

impl CombinerDesign {
    /// Assembles all views from chain weights `weight(tile, chain, slot, element)`.
    fn assemble(
        slots: usize,
        tiling: &SubarrayTiling,
        chains_per_tile: usize,
        modulus: f64,
        mut weight: impl FnMut(usize, usize, usize, usize) -> Complex64,
    ) -> Self {
        let m_i = tiling.antennas_per_tile();
        let m_s = m_i / chains_per_tile;
        let num_tiles = tiling.len();
        let m = tiling.parent().len();
        let m_rf = num_tiles * chains_per_tile;

        let mut per_tile = Vec::with_capacity(num_tiles);
        let mut per_slot = vec![CMat::zeros(m_rf, m); slots];
        let mut aggregated = CMat::zeros(slots * m_rf, m);
        for (i, tile) in tiling.tiles().iter().enumerate() {
            let mut v_i = CMat::zeros(slots * chains_per_tile, m_i);
            for t in 0..slots {
                for c in 0..chains_per_tile {
                    for s in 0..m_s {
                        let w = weight(i, c, t, s);
                        let local = c * m_s + s;
                        let global = tile.antennas[local];
                        let chain = i * chains_per_tile + c;
                        v_i[(t * chains_per_tile + c, local)] = w;
                        per_slot[t][(chain, global)] = w;
                        aggregated[(t * m_rf + chain, global)] = w;
                    }
                }
            }
            per_tile.push(v_i);
        }
        Self {
            slots,
            antennas_per_chain: m_s,
            chains_per_tile,
            tile_antennas: tiling.tiles().iter().map(|t| t.antennas.clone()).collect(),
            num_antennas: m,
            modulus,
            per_tile,
            per_slot,
            aggregated,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn antennas_per_chain(&self) -> usize {
        self.antennas_per_chain
    }

    pub fn chains_per_tile(&self) -> usize {
        self.chains_per_tile
    }

    pub fn num_tiles(&self) -> usize {
        self.per_tile.len()
    }

    pub fn rf_chains(&self) -> usize {
        self.num_tiles() * self.chains_per_tile
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    /// Number of RF outputs collected per block, `T * M_RF`.
    pub fn outputs(&self) -> usize {
        self.slots * self.rf_chains()
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn aggregated(&self) -> &CMat {
        &self.aggregated
    }

    pub fn per_slot(&self, t: usize) -> &CMat {
        &self.per_slot[t]
    }

    pub fn per_tile(&self, i: usize) -> &CMat {
        &self.per_tile[i]
    }

    pub fn tile_antennas(&self, i: usize) -> &[usize] {
        &self.tile_antennas[i]
    }

    /// Rows of a block observation that belong to tile `i`, slot-major.
    pub fn tile_rows(&self, i: usize) -> Vec<usize> {
        let m_rf = self.rf_chains();
        (0..self.slots)
            .flat_map(|t| (0..self.chains_per_tile).map(move |c| t * m_rf + i * self.chains_per_tile + c))
            .collect()
    }

    /// Expected diagonal of `V_RF^H V_RF` (1 for the orthonormal design at any `T`).
    pub fn column_gain(&self) -> f64 {
        self.slots as f64 * self.modulus * self.modulus
    }

    /// Power of each row of `V_RF,t`: the effective noise per RF output is
    /// `σ² * row_power()`.
    pub fn row_power(&self) -> f64 {
        self.antennas_per_chain as f64 * self.modulus * self.modulus
    }

    /// The block-diagonal combiner `blkdiag{V_RF,1..V_RF,T}` applied to the
    /// `T * M` antenna noise samples of one block.
    pub fn block_diagonal(&self) -> CMat {
        let (m_rf, m) = (self.rf_chains(), self.num_antennas);
        let mut out = CMat::zeros(self.slots * m_rf, self.slots * m);
        for (t, v) in self.per_slot.iter().enumerate() {
            out.view_mut((t * m_rf, t * m), (m_rf, m)).copy_from(v);
        }
        out
    }

    /// `blkdiag{V_RF,t} * n` without materializing the block-diagonal matrix.
    pub fn combine_noise(&self, noise: &CVec) -> CVec {
        let (m_rf, m) = (self.rf_chains(), self.num_antennas);
        assert_eq!(noise.len(), self.slots * m, "noise length must be T*M");
        let mut out = CVec::zeros(self.slots * m_rf);
        for (t, v) in self.per_slot.iter().enumerate() {
            let n_t = noise.rows(t * m, m);
            out.rows_mut(t * m_rf, m_rf).copy_from(&(v * n_t));
        }
        out
    }

    pub fn report(&self) -> DesignReport {
        let g = self.column_gain();
        let w = self.row_power();
        DesignReport {
            tile_defects: self
                .per_tile
                .iter()
                .map(|v| identity_defect(&adjoint_matmul(v, v).unscale(g)))
                .collect(),
            global_defect: identity_defect(&adjoint_matmul(&self.aggregated, &self.aggregated).unscale(g)),
            slot_defects: self
                .per_slot
                .iter()
                .map(|v| identity_defect(&matmul_adjoint(v, v).unscale(w)))
                .collect(),
        }
    }
}

/// DFT-stride combiner with orthonormal subarray columns and white
/// effective noise. Verifies its guarantees before returning.
pub fn design_combiner(
    slots: usize,
    tiling: &SubarrayTiling,
    chains_per_tile: usize,
    normalization: Normalization,
) -> Result<CombinerDesign> {
    let m_s = check_shape(slots, tiling, chains_per_tile)?;
    let modulus = match normalization {
        Normalization::Orthonormal => 1.0 / (slots as f64).sqrt(),
        Normalization::PerElement => 1.0 / (m_s as f64).sqrt(),
    };
    let size = (slots * chains_per_tile) as f64;
    let design = CombinerDesign::assemble(slots, tiling, chains_per_tile, modulus, |_, c, t, s| {
        let row = (t * chains_per_tile + c) as f64;
        cis(-2.0 * PI * row * s as f64 / size) * modulus
    });
    let report = design.report();
    let orthogonal = report.tile_defects.iter().all(|&d| d < DESIGN_TOL) && report.global_defect < DESIGN_TOL;
    // Rows of one slot have disjoint supports, so V_RF,t V_RF,t^H is a
    // multiple of the identity and the combined noise stays white.
    let white =report.slot_defects.iter().all(|&d| d < DESIGN_TOL);
    if !orthogonal || !white {
        return Err(Error::InfeasibleDesign(format!(
            "designed combiner failed verification (max defect {:.3e})",
            report.max_defect()
        )));
    }
    Ok(design)
}

/// Baseline combiner with i.i.d. uniform phases of modulus `1/sqrt(M_s)`.
pub fn random_combiner(
    slots: usize,
    tiling: &SubarrayTiling,
    chains_per_tile: usize,
    seed: u64,
) -> Result<CombinerDesign> {
    let m_s = check_shape(slots, tiling, chains_per_tile)?;
    let modulus = 1.0 / (m_s as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(CombinerDesign::assemble(slots, tiling, chains_per_tile, modulus, |_, _, _, _| {
        cis(2.0 * PI * rng.random::<f64>()) * modulus
    }))
}

/// User-side analog precoder `W` (`N x B`), one column per pilot block.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderDesign {
    w: CMat,
}

impl PrecoderDesign {
    pub fn matrix(&self) -> &CMat {
        &self.w
    }

    pub fn blocks(&self) -> usize {
        self.w.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.w.nrows()
    }

    /// `Σ_τ ‖w_τ‖²`; multiply by the per-block power for pilot energy.
    pub fn energy(&self) -> f64 {
        self.w.norm_squared()
    }
}

/// `W[n, b] = exp(-j 2π n b / N) / sqrt(N)`, a unitary `N x N` matrix.
pub fn design_precoder_dft(n: usize) -> Result<PrecoderDesign> {
    if n == 0 {
        return Err(Error::InvalidArgument("precoder needs at least one antenna".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let w = CMat::from_fn(n, n, |r, c| cis(-2.0 * PI * (r * c) as f64 / n as f64) * scale);
    Ok(PrecoderDesign { w })
}

/// Single-block precoder `1_N / sqrt(N)`.
pub fn uniform_precoder(n: usize) -> Result<PrecoderDesign> {
    if n == 0 {
        return Err(Error::InvalidArgument("precoder needs at least one antenna".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(PrecoderDesign {
        w: CMat::from_element(n, 1, Complex64::new(scale, 0.0)),
    })
}
