use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ReceptionRecord, SensingSetup, SolverKind, SystemModel};
use crate::dictionary::build_location;
use crate::doa::{extract_axis_factors, music_1d, subarray_covariance};
use crate::error::{Error, Result};
use crate::geometry::{recover_kx, Point3};
use crate::linalg::{matmul, unvectorize, CMat, CVec};
use crate::localization::{ls_intersect, LocationEstimate, Ray};
use crate::solvers::{omp, KroneckerOperator, sbl_em, OmpStop, SblOptions, SparseProblem, SparseSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Stage1Solver {
    Omp(OmpStop),
    Sbl(SblOptions),
}

pub type Stage3Solver = Stage1Solver;

impl Stage1Solver {
    /// The configured solver for Stage 1: OMP with `L + 1` atoms and a
    /// residual fallback, or SBL.
    pub fn from_config(model: &SystemModel, kind: SolverKind) -> Self {
        let cfg = &model.estimator;
        match kind {
            SolverKind::Omp => Stage1Solver::Omp(OmpStop {
                max_atoms: Some(cfg.assumed_paths + 1),
                residual_tol: Some(cfg.omp_residual_tol),
            }),
            SolverKind::Sbl => Stage1Solver::Sbl(cfg.sbl),
        }
    }
}

/// Solves `y ≈ A x` with either solver; `noise_var` is only used by SBL,
/// which also exploits `factors` when given.
fn solve(
    a: &CMat,
    y: &CVec,
    factors: Option<&KroneckerOperator>,
    solver: &Stage1Solver,
    noise_var: f64,
) -> Result<SparseSolution> {
    let mut problem = SparseProblem::new(a, y)?;
    if let (Some(f), Stage1Solver::Sbl(_)) = (factors, solver) {
        problem = problem.with_structure(f)?;
    }
    match solver {
        Stage1Solver::Omp(stop) => {
            let k = stop.max_atoms.map(|k| k.min(a.nrows().min(a.ncols())));
            omp(&problem, OmpStop { max_atoms: k, ..*stop })
        }
        Stage1Solver::Sbl(opts) => sbl_em(&problem, noise_var, opts).map(|(s, _, _)| s),
    }
}

/// Noise variance handed to SBL: the per-output noise power, floored
/// relative to the observation power so noiseless runs stay well posed.
fn effective_noise(record: &ReceptionRecord, y: &CVec, floor: f64) -> f64 {
    let per_output = record.noise_var * record.combiner.row_power();
    let power = y.norm_squared() / y.len().max(1) as f64;
    per_output.max(floor * power).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Serialize)]
pub struct TileEstimate {
    pub solution: SparseSolution,
    /// `A x̂_i`, the estimate of `Σ_n h_i^(n)`.
    pub channel: CVec,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_ms: f64,
    pub stage2_ms: f64,
    pub stage3_ms: f64,
}

fn uniform_weight(record: &ReceptionRecord) -> Result<f64> {
    let w = record.precoder.matrix();
    if w.ncols() != 1 {
        return Err(Error::InvalidArgument(format!("expected a single-block record, got {} blocks", w.ncols())));
    }
    let w0 = w[(0, 0)];
    if w.iter().any(|v| (*v - w0).norm() > 1e-12 * w0.norm()) || w0.im != 0.0 || !(w0.re > 0.0) {
        return Err(Error::InvalidArgument("Stage 1 requires the uniform precoder".into()));
    }
    Ok(w0.re)
}

/// Per-tile sparse recovery over the angular dictionary.
pub fn stage1(
    record: &ReceptionRecord,
    model: &SystemModel,
    sensing: &SensingSetup,
    solver: &Stage1Solver,
) -> Result<Vec<TileEstimate>> {
    let w0 = uniform_weight(record)?;
    let scale = record.block_power.sqrt() * w0;
    let combiner = &record.combiner;
    let floor = model.estimator.noise_floor;
    (0..model.tiling.len())
        .map(|i| {
            let rows = combiner.tile_rows(i);
            let y = CVec::from_iterator(rows.len(), rows.iter().map(|&r| record.y[(r, 0)] / scale));
            let noise = effective_noise(record, &y.scale(scale), floor) / (scale * scale);
            let solution = solve(sensing.tile_operator(i), &y, Some(sensing.tile_factors(i)), solver, noise)?;
            let channel = model.dictionary.matrix() * &solution.x;
            Ok(TileEstimate { solution, channel })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage2Output {
    /// `(ϖ_h, ϖ_v)` per tile, `None` where the tile was dropped.
    pub directions: Vec<Option<(f64, f64)>>,
    pub rays: Vec<Ray>,
    pub estimate: LocationEstimate,
}

/// Direction finding per tile followed by least-squares ray intersection.
/// Tiles whose direction cannot be formed are dropped.
pub fn stage2(tiles: &[TileEstimate], model: &SystemModel) -> Result<Stage2Output> {
    let (m_h, m_v) = model.tiling.tile_shape();
    let grid = model.estimator.music_grid;
    let lambda = model.wavelength;
    let mut directions = Vec::with_capacity(tiles.len());
    let mut rays = Vec::new();
    for (i, est) in tiles.iter().enumerate() {
        let tile = model.tiling.tile(i);
        let dir = (|| -> Result<(f64, f64, Ray)> {
            let c = subarray_covariance(&est.channel)?;
            let (ch, cv) = extract_axis_factors(&c, m_h, m_v)?;
            let wh = music_1d(&ch, m_h, tile.geometry.spacing_h(), lambda, grid, 1)?.estimate;
            let wv = music_1d(&cv, m_v, tile.geometry.spacing_v(), lambda, grid, 1)?.estimate;
            let k = recover_kx(wh, wv)?;
            Ok((wh, wv, Ray::new(tile.center(), k)))
        })();
        match dir {
            Ok((wh, wv, ray)) => {
                directions.push(Some((wh, wv)));
                rays.push(ray);
            }
            Err(_) => directions.push(None),
        }
    }
    if rays.len() < 2 {
        return Err(Error::DegenerateInput(format!("only {} usable subarray rays", rays.len())));
    }
    let estimate = ls_intersect(&rays)?;
    Ok(Stage2Output {
        directions,
        rays,
        estimate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage3Output {
    pub solution: SparseSolution,
    pub grid: Vec<Point3>,
    #[serde(skip)]
    pub h_hat: CMat,
}

/// Location-aided recovery of the whole channel around `center`.
pub fn stage3(
    record: &ReceptionRecord,
    center: &Point3,
    model: &SystemModel,
    solver: &Stage3Solver,
) -> Result<Stage3Output> {
    uniform_weight(record)?;
    let dict = build_location(
        center,
        &model.estimator.location_grid,
        &model.bs,
        &model.ue_template,
        model.wavelength,
    )?;
    let (m, n) = dict.channel_shape();
    let w = record.precoder.matrix().column(0);
    // column s of H_los(p_s) w, i.e. (w^T ⊗ I) vec(H_los(p_s))
    let a_l = dict.matrix();
    let mut hw = CMat::zeros(m, dict.len());
    for s in 0..dict.len() {
        let col = a_l.column(s);
        for k in 0..n {
            let wk: Complex64 = w[k];
            for r in 0..m {
                hw[(r, s)] += col[k * m + r] * wk;
            }
        }
    }
    let op = matmul(record.combiner.aggregated(), &hw);
    let scale = record.block_power.sqrt();
    let y_raw = record.y.column(0).into_owned();
    let noise = effective_noise(record, &y_raw, model.estimator.noise_floor) / (scale * scale);
    let y = y_raw.unscale(scale);
    let solution = solve(&op, &y, None, solver, noise)?;
    let h_hat = unvectorize(&(a_l * &solution.x), m, n);
    Ok(Stage3Output {
        solution,
        grid: dict.points().to_vec(),
        h_hat,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StageOutputs {
    pub stage1: Vec<TileEstimate>,
    pub stage2: Stage2Output,
    pub stage3: Stage3Output,
    pub timings: StageTimings,
}

impl StageOutputs {
    pub fn h_hat(&self) -> &CMat {
        &self.stage3.h_hat
    }

    pub fn location(&self) -> Point3 {
        self.stage2.estimate.point
    }
}

fn timed<T>(enabled: bool, f: impl FnOnce() -> T) -> (T, f64) {
    if enabled {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_secs_f64() * 1e3)
    } else {
        (f(), 0.0)
    }
}

/// All three stages on one record. Errors name the failing stage.
pub fn run_three_stage(
    record: &ReceptionRecord,
    model: &SystemModel,
    sensing: &SensingSetup,
    stage1_solver: &Stage1Solver,
    stage3_solver: &Stage3Solver,
    record_timings: bool,
) -> Result<StageOutputs> {
    let (s1, t1) = timed(record_timings, || stage1(record, model, sensing, stage1_solver));
    let s1 = s1.map_err(Error::in_stage("stage 1"))?;
    let (s2, t2) = timed(record_timings, || stage2(&s1, model));
    let s2 = s2.map_err(Error::in_stage("stage 2"))?;
    let (s3, t3) = timed(record_timings, || stage3(record, &s2.estimate.point, model, stage3_solver));
    let s3 = s3.map_err(Error::in_stage("stage 3"))?;
    Ok(StageOutputs {
        stage1: s1,
        stage2: s2,
        stage3: s3,
        timings: StageTimings {
            stage1_ms: t1,
            stage2_ms: t2,
            stage3_ms: t3,
        },
    })
}
