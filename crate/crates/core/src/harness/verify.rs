use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::metrics::{nmse, to_db};
use super::scene::channel_at;
use super::sweep::Experiment;
use crate::channel::{far_field_steering, ScattererModel};
use crate::doa::{extract_axis_factors, music_1d};
use crate::error::Result;
use crate::geometry::{DirectionVector, Point3};
use crate::linalg::{complex_normal_vec, kron, matmul_adjoint, CMat, CVec};
use crate::localization::{ls_intersect, Ray};
use crate::pipeline::{Method, TrialContext};
use crate::solvers::{exact_recovery_coefficient, omp, sbl_em, OmpStop, SblOptions, SparseProblem};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Fast self-checks of every module on the configured geometry.
pub fn run_checks(config: &ExperimentConfig, seed: u64) -> Result<Vec<Check>> {
    let exp = Experiment::new(config)?;
    let model = &exp.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let combiner = &exp.designed.combiner;
    let defect = combiner.report().max_defect();
    out.push(check("combiner orthonormal and white", defect < 1e-10, format!("max defect {defect:.2e}")));

    // empirical covariance of the combined noise on one tile's outputs
    let draws = 4000;
    let rows = combiner.tile_rows(0);
    let mut samples = CMat::zeros(rows.len(), draws);
    for d in 0..draws {
        let n = complex_normal_vec(&mut rng, combiner.slots() * combiner.num_antennas(), 1.0);
        let y = combiner.combine_noise(&n).unscale(combiner.row_power().sqrt());
        for (k, &r) in rows.iter().enumerate() {
            samples[(k, d)] = y[r];
        }
    }
    let cov = matmul_adjoint(&samples, &samples).unscale(draws as f64);
    let diag = (0..rows.len()).map(|i| cov[(i, i)].re).sum::<f64>() / rows.len() as f64;
    let off = (0..rows.len())
        .flat_map(|i| (0..rows.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| cov[(i, j)].norm())
        .fold(0.0, f64::max);
    out.push(check(
        "combined noise is white",
        (diag - 1.0).abs() < 0.05 && off < 0.1,
        format!("diagonal mean {diag:.4}, max off-diagonal {off:.4}"),
    ));

    // supports with exact recovery coefficient below 1, where OMP provably
    // recovers every vector supported on them
    let op = exp.designed.tile_operator(0);
    let q = op.ncols();
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut draws = 0;
    while runs < 20 && draws < 2000 {
        draws += 1;
        let (a, b) = (rng.random_range(0..q), rng.random_range(0..q));
        if a == b || exact_recovery_coefficient(op, &[a, b])? >= 1.0 {
            continue;
        }
        runs += 1;
        let mut x = CVec::zeros(q);
        x[a] = complex_normal_vec(&mut rng, 1, 1.0)[0] + 1.0;
        x[b] = complex_normal_vec(&mut rng, 1, 1.0)[0] + 1.0;
        let y = op * &x;
        let sol = omp(&SparseProblem::new(op, &y)?, OmpStop::atoms(2))?;
        worst = worst.max((&sol.x - &x).norm() / x.norm());
    }
    out.push(check(
        "OMP recovers planted 2-sparse vectors",
        runs == 20 && worst < 1e-8,
        format!("{runs} certified supports, worst relative error {worst:.2e}"),
    ));

    let mut drops = 0usize;
    for _ in 0..3 {
        let a = CMat::from_fn(24, 48, |_, _| complex_normal_vec(&mut rng, 1, 1.0 / 24.0)[0]);
        let mut x = CVec::zeros(48);
        x[rng.random_range(0..48)] = 1.0.into();
        let y = &a * &x + complex_normal_vec(&mut rng, 24, 1e-3);
        let (_, _, trace) = sbl_em(&SparseProblem::new(&a, &y)?, 1e-3, &SblOptions::default())?;
        drops += trace.log_evidence.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
    }
    out.push(check("SBL evidence is non-decreasing", drops == 0, format!("{drops} decreasing steps")));

    let (m_h, m_v) = model.tiling.tile_shape();
    let tile = &model.tiling.tile(0).geometry;
    let lambda = model.wavelength;
    let mut worst_doa = 0.0f64;
    for _ in 0..20 {
        let (wh, wv) = (rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9));
        let h = kron(
            &far_field_steering(m_h, tile.spacing_h(), wh, lambda),
            &far_field_steering(m_v, tile.spacing_v(), wv, lambda),
        );
        let c = &h * h.adjoint();
        let (ch, cv) = extract_axis_factors(&c, m_h, m_v)?;
        let eh = music_1d(&ch, m_h, tile.spacing_h(), lambda, model.estimator.music_grid, 1)?.estimate;
        let ev = music_1d(&cv, m_v, tile.spacing_v(), lambda, model.estimator.music_grid, 1)?.estimate;
        worst_doa = worst_doa.max((eh - wh).abs()).max((ev - wv).abs());
    }
    out.push(check("MUSIC recovers direction cosines", worst_doa < 1e-4, format!("worst error {worst_doa:.2e}")));

    let target = Point3::new(8.0, 1.0, -1.0);
    let rays: Vec<Ray> = model
        .tiling
        .tiles()
        .iter()
        .map(|t| Ok(Ray::new(t.center(), DirectionVector::new(target - t.center())?)))
        .collect::<Result<_>>()?;
    let est = ls_intersect(&rays)?;
    let err = (est.point - target).norm();
    out.push(check("exact rays intersect at the source", err < 1e-9, format!("error {err:.2e} m")));

    let los_only = super::config::SceneConfig {
        scatterers: ScattererModel {
            count: 0,
            ..ScattererModel::default()
        },
        ..config.scene.clone()
    };
    let channel = channel_at(model, &los_only, target, &mut rng, seed, None)?;
    let h = channel.h.clone();
    let mut ctx = TrialContext::new(model, &exp.designed, &exp.operators, channel, seed, false);
    let res = ctx.run(Method::ProposedSbl)?;
    let e = to_db(nmse(&res.h_hat, &h)?);
    let loc = res.location.map_or(f64::INFINITY, |p| (p - target).norm());
    out.push(check(
        "noiseless line-of-sight run",
        e < -40.0 && loc < 0.05,
        format!("NMSE {e:.1} dB, location error {loc:.2e} m"),
    ));
    Ok(out)
}
