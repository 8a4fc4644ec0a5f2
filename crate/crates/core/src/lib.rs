//! MultiCruise: energy-aware lane selection for automated vehicles, with a
//! deterministic highway simulator to evaluate it against plain lane
//! following.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.
//!
//! ```
//! use multicruise::{scenario, Controller};
//!
//! let s: multicruise::Scenario = scenario::gen_simple_overtake();
//! let trace = scenario::run_scenario(&s, Controller::MultiCruise).unwrap();
//! assert_eq!(trace.summary.lane_changes, 2);
//! ```

// NaN must fail range checks, so negated comparisons are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ecocruise;
pub mod policy;
pub mod report;
pub mod road;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod vehicle;

pub use scalar::Scalar;
pub use vehicle::{Controller, VehicleId};

pub type RoadNetwork = road::RoadNetwork<f64>;
pub type RoadSegment = road::RoadSegment<f64>;
pub type VehicleState = vehicle::VehicleState<f64>;
pub type FuelMap = vehicle::FuelMap<f64>;
pub type LaneChangeMotion = vehicle::LaneChangeMotion<f64>;
pub type EcoCruiseConfig = ecocruise::EcoCruiseConfig<f64>;
pub type LaneObservation = ecocruise::LaneObservation<f64>;
pub type SpeedTrajectory = ecocruise::SpeedTrajectory<f64>;
pub type GammaBreakdown = ecocruise::GammaBreakdown<f64>;
pub type PolicyConfig = policy::PolicyConfig<f64>;
pub type PolicyState = policy::PolicyState<f64>;
pub type LaneCosts = policy::LaneCosts<f64>;
pub type Decision = policy::Decision<f64>;
pub type MultiCruise = policy::MultiCruise<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type World = sim::World<f64>;
pub type SimTrace = sim::SimTrace<f64>;
pub type Scenario = scenario::Scenario<f64>;
