use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::config::{ExperimentConfig, SCHEMA};
use super::metrics::{nmse, to_db};
use super::results::{ResultTable, TrialRow, STATUS_OK};
use super::scene::draw_channel;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::linalg::CMat;
use crate::pipeline::{BaselineOperators, Method, SensingSetup, StageOutputs, StageTimings, SystemModel, TrialContext};
use crate::seeding::derive_seed;

/// Objects built once per experiment and shared by all trials.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SystemModel,
    pub designed: SensingSetup,
    pub operators: BaselineOperators,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model()?;
        let combiner = model.designed_combiner().map_err(|e| Error::Config(e.to_string()))?;
        let designed = SensingSetup::new(&model, combiner)?;
        Ok(Self {
            config: config.clone(),
            model,
            designed,
            operators: BaselineOperators::new(),
        })
    }

    /// Seed of trial `trial` at SNR point `point`. Methods share it, so they
    /// see the same scene and noise.
    pub fn trial_seed(&self, point: usize, trial: usize) -> u64 {
        derive_seed(self.config.sweep.base_seed, "trial", &[point as u64, trial as u64])
    }

    /// Every configured method on one scene.
    pub fn run_trial(&self, snr_db: f64, trial: usize, seed: u64) -> Vec<TrialRow> {
        let methods = &self.config.sweep.methods;
        let failed = |method: Method, reason: &Error| TrialRow {
            method,
            snr_db,
            trial,
            seed,
            nmse: None,
            rmse_m: None,
            timings: StageTimings::default(),
            status: format!("failed: {reason}"),
        };
        let channel = match draw_channel(&self.model, &self.config.scene, seed, Some(snr_db)) {
            Ok(c) => c,
            Err(e) => return methods.iter().map(|&m| failed(m, &e)).collect(),
        };
        let truth = channel.scene.user_center();
        let h = channel.h.clone();
        let mut ctx = TrialContext::new(
            &self.model,
            &self.designed,
            &self.operators,
            channel,
            seed,
            self.config.record_timings,
        );
        methods
            .iter()
            .map(|&method| {
                let scored = ctx.run(method).and_then(|out| {
                    let e = nmse(&out.h_hat, &h)?;
                    if !e.is_finite() {
                        return Err(Error::DegenerateInput("non-finite channel estimate".into()));
                    }
                    Ok((e, out))
                });
                match scored {
                    Ok((e, out)) => TrialRow {
                        method,
                        snr_db,
                        trial,
                        seed,
                        nmse: Some(e),
                        rmse_m: out.location.map(|p| (p - truth).norm()),
                        timings: out.timings,
                        status: STATUS_OK.into(),
                    },
                    Err(err) => failed(method, &err),
                }
            })
            .collect()
    }
}

fn workers(requested: usize, jobs: usize) -> usize {
    let n = if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    };
    n.clamp(1, jobs.max(1))
}

/// Runs every (SNR point, trial) and returns rows ordered by (method, point,
/// trial). Trials run concurrently; the output does not depend on the number
/// of threads. Only config errors abort; trial failures become failed rows.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    let exp = Experiment::new(config)?;
    let sweep = &config.sweep;
    let jobs: Vec<(usize, usize)> = (0..sweep.snr_db.len())
        .flat_map(|p| (0..sweep.trials).map(move |t| (p, t)))
        .collect();
    let results: Vec<Mutex<Option<Vec<TrialRow>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers(sweep.threads, jobs.len()) {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(p, t)) = jobs.get(j) else { break };
                let rows = exp.run_trial(sweep.snr_db[p], t, exp.trial_seed(p, t));
                *results[j].lock().expect("no panics while holding the lock") = Some(rows);
            });
        }
    });
    let per_job: Vec<Vec<TrialRow>> = results
        .into_iter()
        .map(|m| m.into_inner().expect("workers finished").expect("every job ran"))
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * sweep.methods.len());
    for (k, _) in sweep.methods.iter().enumerate() {
        // jobs are already ordered by (point, trial)
        rows.extend(per_job.iter().map(|r| r[k].clone()));
    }
    Ok(ResultTable::new(SCHEMA, &config.profile, rows))
}

/// Outcome of one method on one scene, with the intermediate stage outputs
/// where the method has them.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub schema: String,
    pub method: Method,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub user_center: Point3,
    pub noise_var: f64,
    pub nmse: f64,
    pub nmse_db: f64,
    pub location: Option<Point3>,
    pub location_error_m: Option<f64>,
    pub timings: StageTimings,
    pub stages: Option<StageOutputs>,
    #[serde(skip)]
    pub h: CMat,
    #[serde(skip)]
    pub h_hat: CMat,
}

impl SimulationReport {
    /// Pretty JSON; the channel matrices go to separate matrix files.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One scene drawn from `seed`, one method. The same seed and SNR reproduce
/// the corresponding sweep row.
pub fn simulate(exp: &Experiment, method: Method, seed: u64, snr_db: Option<f64>) -> Result<SimulationReport> {
    let channel = draw_channel(&exp.model, &exp.config.scene, seed, snr_db)?;
    let truth = channel.scene.user_center();
    let noise_var = channel.scene.noise_var;
    let h = channel.h.clone();
    let mut ctx = TrialContext::new(
        &exp.model,
        &exp.designed,
        &exp.operators,
        channel,
        seed,
        exp.config.record_timings,
    );
    let (out, stages) = ctx.run_detailed(method, true)?;
    let e = nmse(&out.h_hat, &h)?;
    Ok(SimulationReport {
        schema: SCHEMA.into(),
        method,
        seed,
        snr_db,
        user_center: truth,
        noise_var,
        nmse: e,
        nmse_db: to_db(e),
        location: out.location,
        location_error_m: out.location.map(|p| (p - truth).norm()),
        timings: out.timings,
        stages,
        h,
        h_hat: out.h_hat,
    })
}
