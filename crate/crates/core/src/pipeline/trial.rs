use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::baselines::{baseline_antenna_wise, baseline_eigen_dictionary, stage1_only_channel, AntennaWiseKind, BaselineOperators};
use super::stages::{stage1, stage2, stage3, Stage1Solver, Stage2Output, StageOutputs, StageTimings, TileEstimate};
use super::{simulate_reception, ReceptionRecord, SensingSetup, SolverKind, SystemModel};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::linalg::CMat;
use crate::seeding::derive_seed;
use crate::sensing::{design_precoder_dft, random_combiner, uniform_precoder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ProposedSbl,
    ProposedOmp3,
    Stage1Only,
    AntennaWiseDft,
    AntennaWiseSpherical,
    AntennaWiseSubarrayDft,
    EigenDictionary,
    RandomCombiner,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::ProposedSbl,
        Method::ProposedOmp3,
        Method::Stage1Only,
        Method::AntennaWiseDft,
        Method::AntennaWiseSpherical,
        Method::AntennaWiseSubarrayDft,
        Method::EigenDictionary,
        Method::RandomCombiner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ProposedSbl => "proposed-sbl",
            Method::ProposedOmp3 => "proposed-omp3",
            Method::Stage1Only => "stage1-only",
            Method::AntennaWiseDft => "antenna-wise-dft",
            Method::AntennaWiseSpherical => "antenna-wise-spherical",
            Method::AntennaWiseSubarrayDft => "antenna-wise-subarray-dft",
            Method::EigenDictionary => "eigen-dictionary",
            Method::RandomCombiner => "random-combiner",
        }
    }

    /// Whether the method produces a user location.
    pub fn localizes(self) -> bool {
        matches!(self, Method::ProposedSbl | Method::ProposedOmp3 | Method::RandomCombiner)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        // "proposed" alone means the full SBL pipeline
        if s == "proposed" {
            return Ok(Method::ProposedSbl);
        }
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub h_hat: CMat,
    pub location: Option<Point3>,
    /// Baselines report their whole run as Stage 1.
    pub timings: StageTimings,
}

struct Front {
    tiles: Vec<TileEstimate>,
    stage2: Stage2Output,
    t1: f64,
    t2: f64,
}

/// One channel realization and everything the methods share for it:
/// reception records and the Stage 1-2 front end of the proposed method.
/// Noise draws are shared across methods that use the same pilot format, so
/// comparisons are paired.
pub struct TrialContext<'a> {
    model: &'a SystemModel,
    designed: &'a SensingSetup,
    operators: &'a BaselineOperators,
    pub channel: ChannelRealization,
    seed: u64,
    record_timings: bool,
    single: Option<ReceptionRecord>,
    multi: Option<ReceptionRecord>,
    front: Option<Front>,
}

impl<'a> TrialContext<'a> {
    pub fn new(
        model: &'a SystemModel,
        designed: &'a SensingSetup,
        operators: &'a BaselineOperators,
        channel: ChannelRealization,
        seed: u64,
        record_timings: bool,
    ) -> Self {
        Self {
            model,
            designed,
            operators,
            channel,
            seed,
            record_timings,
            single: None,
            multi: None,
            front: None,
        }
    }

    fn clock(&self) -> Option<Instant> {
        self.record_timings.then(Instant::now)
    }

    fn elapsed(start: Option<Instant>) -> f64 {
        start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
    }

    fn noise_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label, &[])
    }

    /// Single-block record with the uniform precoder and designed combiner.
    pub fn single_record(&mut self) -> Result<&ReceptionRecord> {
        if self.single.is_none() {
            let w = uniform_precoder(self.model.ue_template.len())?;
            let rec = simulate_reception(&self.channel, self.designed.combiner.clone(), w, self.noise_seed("noise-single"))?;
            self.single = Some(rec);
        }
        Ok(self.single.as_ref().expect("set above"))
    }

    /// `N`-block DFT-precoded record with the designed combiner.
    pub fn multi_record(&mut self) -> Result<&ReceptionRecord> {
        if self.multi.is_none() {
            let w = design_precoder_dft(self.model.ue_template.len())?;
            let rec = simulate_reception(&self.channel, self.designed.combiner.clone(), w, self.noise_seed("noise-multi"))?;
            self.multi = Some(rec);
        }
        Ok(self.multi.as_ref().expect("set above"))
    }

    fn front(&mut self) -> Result<&Front> {
        if self.front.is_none() {
            let solver = Stage1Solver::from_config(self.model, self.model.estimator.stage1_solver);
            let (model, designed) = (self.model, self.designed);
            let start = self.clock();
            let record = self.single_record()?;
            let tiles = stage1(record, model, designed, &solver).map_err(Error::in_stage("stage 1"))?;
            let t1 = Self::elapsed(start);
            let start = self.clock();
            let s2 = stage2(&tiles, model).map_err(Error::in_stage("stage 2"))?;
            let t2 = Self::elapsed(start);
            self.front = Some(Front { tiles, stage2: s2, t1, t2 });
        }
        Ok(self.front.as_ref().expect("set above"))
    }

    /// Location estimate of the proposed front end.
    pub fn proposed_location(&mut self) -> Result<Point3> {
        Ok(self.front()?.stage2.estimate.point)
    }

    pub fn run(&mut self, method: Method) -> Result<MethodOutcome> {
        self.run_detailed(method, false).map(|(outcome, _)| outcome)
    }

    /// Like [`run`](Self::run); with `keep_stages` the methods built on the
    /// three-stage estimator also return their intermediate outputs.
    pub fn run_detailed(&mut self, method: Method, keep_stages: bool) -> Result<(MethodOutcome, Option<StageOutputs>)> {
        let model = self.model;
        match method {
            Method::ProposedSbl | Method::ProposedOmp3 => {
                let kind = if method == Method::ProposedSbl { SolverKind::Sbl } else { SolverKind::Omp };
                let solver = Stage1Solver::from_config(model, kind);
                let (p_hat, t1, t2) = {
                    let f = self.front()?;
                    (f.stage2.estimate.point, f.t1, f.t2)
                };
                let start = self.clock();
                let record = self.single_record()?;
                let s3 = stage3(record, &p_hat, model, &solver).map_err(Error::in_stage("stage 3"))?;
                let timings = StageTimings {
                    stage1_ms: t1,
                    stage2_ms: t2,
                    stage3_ms: Self::elapsed(start),
                };
                let outcome = MethodOutcome {
                    method,
                    h_hat: s3.h_hat.clone(),
                    location: Some(p_hat),
                    timings,
                };
                let stages = keep_stages.then(|| {
                    let f = self.front.as_ref().expect("front computed above");
                    StageOutputs {
                        stage1: f.tiles.clone(),
                        stage2: f.stage2.clone(),
                        stage3: s3,
                        timings,
                    }
                });
                Ok((outcome, stages))
            }
            Method::Stage1Only => {
                if let Some(f) = &self.front {
                    return Ok((
                        MethodOutcome {
                            method,
                            h_hat: stage1_only_channel(&f.tiles, model),
                            location: None,
                            timings: StageTimings {
                                stage1_ms: f.t1,
                                ..Default::default()
                            },
                        },
                        None,
                    ));
                }
                let start = self.clock();
                let solver = Stage1Solver::from_config(model, model.estimator.stage1_solver);
                let designed = self.designed;
                let record = self.single_record()?;
                let tiles = stage1(record, model, designed, &solver).map_err(Error::in_stage("stage 1"))?;
                let outcome = MethodOutcome {
                    method,
                    h_hat: stage1_only_channel(&tiles, model),
                    location: None,
                    timings: StageTimings {
                        stage1_ms: Self::elapsed(start),
                        ..Default::default()
                    },
                };
                Ok((outcome, None))
            }
            Method::AntennaWiseDft | Method::AntennaWiseSpherical | Method::AntennaWiseSubarrayDft => {
                let kind = match method {
                    Method::AntennaWiseDft => AntennaWiseKind::FarFieldDft,
                    Method::AntennaWiseSpherical => AntennaWiseKind::Spherical,
                    _ => AntennaWiseKind::SubarrayDft,
                };
                let start = self.clock();
                let (designed, operators) = (self.designed, self.operators);
                let record = self.multi_record()?;
                let h_hat = baseline_antenna_wise(record, model, designed, operators, kind)?;
                let outcome = MethodOutcome {
                    method,
                    h_hat,
                    location: None,
                    timings: StageTimings {
                        stage1_ms: Self::elapsed(start),
                        ..Default::default()
                    },
                };
                Ok((outcome, None))
            }
            Method::EigenDictionary => {
                let p_hat = self.proposed_location()?;
                let start = self.clock();
                let record = self.multi_record()?;
                let h_hat = baseline_eigen_dictionary(record, &p_hat, model, model.estimator.eigen_rank)?;
                let outcome = MethodOutcome {
                    method,
                    h_hat,
                    location: None,
                    timings: StageTimings {
                        stage1_ms: Self::elapsed(start),
                        ..Default::default()
                    },
                };
                Ok((outcome, None))
            }
            Method::RandomCombiner => {
                let cfg = &model.estimator;
                let combiner = random_combiner(
                    cfg.slots,
                    &model.tiling,
                    cfg.chains_per_tile,
                    derive_seed(self.seed, "random-combiner", &[]),
                )?;
                let setup = SensingSetup::new(model, combiner)?;
                let w = uniform_precoder(model.ue_template.len())?;
                // same antenna-domain noise as the designed single-block record
                let record = simulate_reception(&self.channel, setup.combiner.clone(), w, self.noise_seed("noise-single"))?;
                let s1 = Stage1Solver::from_config(model, cfg.stage1_solver);
                let s3 = Stage1Solver::from_config(model, SolverKind::Sbl);
                let out = super::run_three_stage(&record, model, &setup, &s1, &s3, self.record_timings)?;
                let outcome = MethodOutcome {
                    method,
                    h_hat: out.stage3.h_hat.clone(),
                    location: Some(out.location()),
                    timings: out.timings,
                };
                Ok((outcome, keep_stages.then_some(out)))
            }
        }
    }
}
