//! Paired baseline/MultiCruise comparisons and seed sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::scenario::{gen_highway, run_scenario, Density, Profile, Scenario, ScenarioError};
use crate::sim::{RunStatus, SimTrace, Summary};
use crate::vehicle::Controller;

/// One scenario run under both controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub multicruise: Summary,
    pub lane_following: Summary,
    /// MultiCruise fuel over baseline fuel; absent unless both trips completed.
    pub relative_fuel: Option<f64>,
    /// Both runs started from the same ambient vehicles and speeds.
    pub same_ambient: bool,
}

impl ComparisonReport {
    fn new(seed: u64, mc: Summary, lf: Summary, same_ambient: bool) -> Self {
        let done = |s: &Summary| s.status == RunStatus::Completed;
        let relative_fuel = (done(&mc) && done(&lf) && lf.consumed_fuel_g > 0.0)
            .then(|| mc.consumed_fuel_g / lf.consumed_fuel_g);
        Self { seed, multicruise: mc, lane_following: lf, relative_fuel, same_ambient }
    }
}

/// Both traces of a comparison.
pub struct Comparison<T> {
    pub report: ComparisonReport,
    pub multicruise: SimTrace<T>,
    pub lane_following: SimTrace<T>,
}

pub fn compare<T: Scalar>(scenario: &Scenario<T>) -> Result<Comparison<T>, ScenarioError> {
    let ambient = |c| scenario.agents(c).into_iter().skip(1).map(|a| (a.state, a.desired_speed)).collect::<Vec<_>>();
    let same_ambient = ambient(Controller::MultiCruise) == ambient(Controller::LaneFollowing);
    let mc = run_scenario(scenario, Controller::MultiCruise)?;
    let lf = run_scenario(scenario, Controller::LaneFollowing)?;
    Ok(Comparison {
        report: ComparisonReport::new(scenario.seed, mc.summary, lf.summary, same_ambient),
        multicruise: mc,
        lane_following: lf,
    })
}

/// Both controllers' fuel rates on a shared time axis; a run that ended
/// early leaves its column empty.
pub fn fuel_rate_csv<T: Scalar>(mc: &SimTrace<T>, lf: &SimTrace<T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "fuel_rate_multicruise", "fuel_rate_lane_following"]).expect("in-memory write");
    let rows = mc.records.len().max(lf.records.len());
    let dt = mc.dt.as_f64();
    let cell = |t: &SimTrace<T>, i: usize| t.records.get(i).map(|r| r.fuel_rate.as_f64().to_string()).unwrap_or_default();
    for i in 0..rows {
        let time = mc.records.get(i).or(lf.records.get(i)).map_or(i as f64 * dt, |r| r.time.as_f64());
        w.write_record([time.to_string(), cell(mc, i), cell(lf, i)]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub completed: usize,
    pub failed: usize,
    pub mean_relative_fuel: Option<f64>,
    pub min_relative_fuel: Option<f64>,
    pub max_relative_fuel: Option<f64>,
    /// Share of completed pairs with relative fuel at most 1.
    pub share_not_worse: Option<f64>,
}

impl Aggregate {
    pub fn from_rows(rows: &[ComparisonReport]) -> Self {
        let values: Vec<f64> = rows.iter().filter_map(|r| r.relative_fuel).collect();
        let n = values.len();
        let some = |x: f64| (n > 0).then_some(x);
        Self {
            completed: n,
            failed: rows.len() - n,
            mean_relative_fuel: some(values.iter().sum::<f64>() / n as f64),
            min_relative_fuel: some(values.iter().copied().fold(f64::INFINITY, f64::min)),
            max_relative_fuel: some(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            share_not_worse: some(values.iter().filter(|&&x| x <= 1.0).count() as f64 / n as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchParams {
    pub length_km: f64,
    pub density: Density,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub params: BatchParams,
    pub rows: Vec<ComparisonReport>,
    pub aggregate: Aggregate,
}

/// Paired comparisons over generated highways, one per seed, run on up to
/// `workers` threads. Rows keep the order of `seeds`.
pub fn batch(params: BatchParams, seeds: &[u64], workers: usize) -> BatchReport {
    let run = |&seed: &u64| {
        let scenario = gen_highway::<f64>(params.length_km, params.density, seed, params.profile);
        compare(&scenario).expect("generated scenarios are valid").report
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
    let rows: Vec<ComparisonReport> = pool.install(|| seeds.par_iter().map(run).collect());
    BatchReport { params, aggregate: Aggregate::from_rows(&rows), rows }
}
