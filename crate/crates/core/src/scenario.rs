//! Scenario files, validation and procedural generators.
//!
//! Scenarios are TOML (JSON is accepted too). A minimal file:
//!
//! ```toml
//! schema_version = 1
//!
//! [[road.segments]]
//! length = 1600.0
//! lanes = 3
//! speed_limit = 31.1
//!
//! [ego]
//! lane = 1
//! v = 31.1
//! ```
//!
//! Optional sections: `seed`, `[ambient]` (either `density = "moderate" |
//! "heavy"` or `[[ambient.vehicles]]`), `[ecocruise]`, `[multicruise]`,
//! `[fuel_map]` and `[sim]`. Unknown keys are rejected.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecocruise::EcoCruiseConfig;
use crate::policy::PolicyConfig;
use crate::road::{RoadNetwork, RoadSegment, DEFAULT_MAX_CURVATURE};
use crate::scalar::Scalar;
use crate::sim::{free_flow_trip_time, Agent, RunSetup, SimConfig, SimTrace, Simulation, World};
use crate::vehicle::{Controller, FuelMap, FuelTable, PolynomialFuel, VehicleId, VehicleState};

pub const SCHEMA_VERSION: u32 = 1;

/// One problem in a scenario, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{format} syntax: {message}")]
    Syntax { format: &'static str, message: String },
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    Moderate,
    Heavy,
}

impl Density {
    /// Road length per ambient vehicle, summed over all lanes, m.
    pub fn spacing(self) -> f64 {
        match self {
            Density::Moderate => 100.0,
            Density::Heavy => 50.0,
        }
    }
}

impl std::str::FromStr for Density {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "moderate" => Ok(Density::Moderate),
            "heavy" => Ok(Density::Heavy),
            other => Err(format!("unknown density `{other}` (expected moderate or heavy)")),
        }
    }
}

impl std::fmt::Display for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Density::Moderate => "moderate",
            Density::Heavy => "heavy",
        })
    }
}

/// Terrain of generated highways.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Zero grade and curvature everywhere.
    Flat,
    /// Piecewise grade within ±0.04 and gentle curves.
    Rolling,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(Profile::Flat),
            "rolling" => Ok(Profile::Rolling),
            other => Err(format!("unknown profile `{other}` (expected flat or rolling)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct RoadSpec<T> {
    pub segments: Vec<RoadSegment<T>>,
    #[serde(default = "default_max_curvature")]
    pub max_curvature: T,
}

fn default_max_curvature<T: Scalar>() -> T {
    T::of(DEFAULT_MAX_CURVATURE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct EgoSpec<T> {
    /// Front bumper position, m.
    #[serde(default = "T::zero")]
    pub s: T,
    pub lane: usize,
    pub v: T,
    #[serde(default = "default_controller")]
    pub controller: Controller,
    /// Lane the route plans to use; defaults to the starting lane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_lane: Option<usize>,
}

fn default_controller() -> Controller {
    Controller::MultiCruise
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct AmbientVehicle<T> {
    pub id: u32,
    pub s: T,
    pub lane: usize,
    pub v: T,
    pub desired_speed: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct AmbientSpec<T> {
    /// Generate traffic from the scenario seed at this density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Density>,
    #[serde(default = "Vec::new")]
    pub vehicles: Vec<AmbientVehicle<T>>,
}

impl<T> Default for AmbientSpec<T> {
    fn default() -> Self {
        Self { density: None, vehicles: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub enum FuelMapSpec<T> {
    Polynomial {
        #[serde(default = "poly_c0")]
        c0: T,
        #[serde(default = "poly_c1")]
        c1: T,
        #[serde(default = "T::zero")]
        c2: T,
        #[serde(default = "poly_c3")]
        c3: T,
        #[serde(default = "poly_c4")]
        c4: T,
        #[serde(default = "poly_idle")]
        idle_rate: T,
    },
    /// Grid over speed and acceleration. `csv` names a file, relative to
    /// the scenario, that replaces the inline axes when loaded from disk.
    Table {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<String>,
        #[serde(default = "Vec::new")]
        speeds: Vec<T>,
        #[serde(default = "Vec::new")]
        accels: Vec<T>,
        #[serde(default = "Vec::new")]
        rates: Vec<Vec<T>>,
    },
}

fn poly_c0<T: Scalar>() -> T {
    PolynomialFuel::<T>::default().c0
}
fn poly_c1<T: Scalar>() -> T {
    PolynomialFuel::<T>::default().c1
}
fn poly_c3<T: Scalar>() -> T {
    PolynomialFuel::<T>::default().c3
}
fn poly_c4<T: Scalar>() -> T {
    PolynomialFuel::<T>::default().c4
}
fn poly_idle<T: Scalar>() -> T {
    PolynomialFuel::<T>::default().idle_rate
}

impl<T: Scalar> Default for FuelMapSpec<T> {
    fn default() -> Self {
        let p = PolynomialFuel::default();
        FuelMapSpec::Polynomial { c0: p.c0, c1: p.c1, c2: p.c2, c3: p.c3, c4: p.c4, idle_rate: p.idle_rate }
    }
}

impl<T: Scalar> FuelMapSpec<T> {
    pub fn build(&self) -> Result<FuelMap<T>, String> {
        match self {
            &FuelMapSpec::Polynomial { c0, c1, c2, c3, c4, idle_rate } => {
                FuelMap::polynomial(PolynomialFuel { c0, c1, c2, c3, c4, idle_rate }).map_err(|e| e.to_string())
            }
            FuelMapSpec::Table { csv: Some(path), .. } => {
                Err(format!("table file `{path}` must be loaded with the scenario file"))
            }
            FuelMapSpec::Table { speeds, accels, rates, .. } => FuelTable::new(speeds.clone(), accels.clone(), rates.clone())
                .map(FuelMap::Table)
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct Scenario<T> {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub road: RoadSpec<T>,
    pub ego: EgoSpec<T>,
    #[serde(default)]
    pub ambient: AmbientSpec<T>,
    #[serde(default)]
    pub ecocruise: EcoCruiseConfig<T>,
    #[serde(default)]
    pub multicruise: PolicyConfig<T>,
    #[serde(default)]
    pub fuel_map: FuelMapSpec<T>,
    #[serde(default)]
    pub sim: SimConfig<T>,
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { path: path.into(), message: message.into() }
}

/// Deserialize without range checks; unknown keys come back as violations.
fn deserialize<T: Scalar + for<'de> Deserialize<'de>>(text: &str) -> Result<(Scenario<T>, Vec<Violation>), ScenarioError> {
    let mut unknown = Vec::new();
    let scenario: Scenario<T> = if text.trim_start().starts_with('{') {
        let syntax = |e: serde_json::Error| ScenarioError::Syntax { format: "JSON", message: e.to_string() };
        let mut de = serde_json::Deserializer::from_str(text);
        let s = serde_ignored::deserialize(&mut de, |p| unknown.push(p.to_string())).map_err(syntax)?;
        de.end().map_err(syntax)?;
        s
    } else {
        let syntax = |e: toml::de::Error| ScenarioError::Syntax { format: "TOML", message: e.to_string() };
        let de = toml::Deserializer::parse(text).map_err(syntax)?;
        serde_ignored::deserialize(de, |p| unknown.push(p.to_string())).map_err(syntax)?
    };
    Ok((scenario, unknown.iter().map(|p| violation(index_path(p), "unknown key")).collect()))
}

/// `road.segments.0.foo` becomes `road.segments[0].foo`.
fn index_path(dotted: &str) -> String {
    let mut out = String::new();
    for part in dotted.split('.') {
        if !out.is_empty() && part.parse::<usize>().is_ok() {
            out.push_str(&format!("[{part}]"));
        } else {
            if !out.is_empty() {
                out.push('.');
            }
            out.push_str(part);
        }
    }
    out
}

fn validated<T: Scalar>(scenario: Scenario<T>, mut problems: Vec<Violation>) -> Result<Scenario<T>, ScenarioError> {
    problems.extend(scenario.violations());
    if problems.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(problems))
    }
}

/// Parse and validate scenario text. JSON is detected by a leading `{`.
pub fn parse_scenario<T: Scalar + for<'de> Deserialize<'de>>(text: &str) -> Result<Scenario<T>, ScenarioError> {
    let (scenario, unknown) = deserialize(text)?;
    validated(scenario, unknown)
}

/// Read a scenario file, loading a referenced fuel-table CSV.
pub fn load_scenario<T: Scalar + for<'de> Deserialize<'de>>(path: &Path) -> Result<Scenario<T>, ScenarioError> {
    let io = |p: &Path, source| ScenarioError::Io { path: p.display().to_string(), source };
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let (mut scenario, mut problems) = deserialize::<T>(&text)?;
    if let FuelMapSpec::Table { csv: Some(rel), .. } = &scenario.fuel_map {
        let csv_path = path.parent().unwrap_or(Path::new(".")).join(rel);
        let body = std::fs::read_to_string(&csv_path).map_err(|e| io(&csv_path, e))?;
        match FuelTable::<T>::from_csv_str(&body) {
            Ok(table) => {
                scenario.fuel_map = FuelMapSpec::Table {
                    csv: None,
                    speeds: table.speeds().to_vec(),
                    accels: table.accels().to_vec(),
                    rates: table.rows(),
                }
            }
            Err(e) => problems.push(violation("fuel_map.csv", e.to_string())),
        }
    }
    validated(scenario, problems)
}

impl<T: Scalar + Serialize> Scenario<T> {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes to JSON")
    }
}

impl<T: Scalar> Scenario<T> {
    pub fn total_length(&self) -> T {
        self.road.segments.iter().map(|s| s.length).fold(T::zero(), |a, b| a + b)
    }

    pub fn lane_count(&self) -> usize {
        self.road.segments.first().map_or(0, |s| s.lanes)
    }

    pub fn network(&self) -> Result<RoadNetwork<T>, ScenarioError> {
        RoadNetwork::with_max_curvature(self.road.segments.clone(), self.road.max_curvature)
            .map_err(|e| ScenarioError::Invalid(vec![violation("road", e.to_string())]))
    }

    /// Every violation, each with its field path.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(violation(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(self.road.max_curvature >= T::zero()) {
            out.push(violation("road.max_curvature", "must be nonnegative"));
        }
        if self.road.segments.is_empty() {
            out.push(violation("road.segments", "at least one segment is required"));
        }
        let lanes = self.lane_count();
        for (i, seg) in self.road.segments.iter().enumerate() {
            for (field, msg) in seg.violations(self.road.max_curvature) {
                out.push(violation(format!("road.segments[{i}].{field}"), msg));
            }
            if seg.lanes != lanes && seg.lanes > 0 {
                out.push(violation(
                    format!("road.segments[{i}].lanes"),
                    format!("every segment needs the same lane count ({lanes})"),
                ));
            }
        }
        let total = self.total_length();
        let place = |out: &mut Vec<Violation>, prefix: &str, s: T, lane: usize, v: T| {
            if !(s >= T::zero() && s < total) {
                out.push(violation(format!("{prefix}.s"), format!("must lie in [0, {total}), got {s}")));
            }
            if lane >= lanes {
                out.push(violation(format!("{prefix}.lane"), format!("lane {lane} does not exist ({lanes} lanes)")));
            }
            if !(v >= T::zero() && v.is_finite()) {
                out.push(violation(format!("{prefix}.v"), format!("must be nonnegative, got {v}")));
            }
        };
        place(&mut out, "ego", self.ego.s, self.ego.lane, self.ego.v);
        if self.ego.controller == Controller::AmbientTraffic {
            out.push(violation("ego.controller", "must be multi-cruise or lane-following"));
        }
        if let Some(r) = self.ego.route_lane {
            if r >= lanes {
                out.push(violation("ego.route_lane", format!("lane {r} does not exist ({lanes} lanes)")));
            }
        }
        if self.ambient.density.is_some() && !self.ambient.vehicles.is_empty() {
            out.push(violation("ambient", "give either density or vehicles, not both"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, a) in self.ambient.vehicles.iter().enumerate() {
            let prefix = format!("ambient.vehicles[{i}]");
            place(&mut out, &prefix, a.s, a.lane, a.v);
            if !(a.desired_speed > T::zero() && a.desired_speed.is_finite()) {
                out.push(violation(format!("{prefix}.desired_speed"), "must be positive"));
            }
            if a.id == 0 {
                out.push(violation(format!("{prefix}.id"), "id 0 is reserved for the ego"));
            } else if !seen.insert(a.id) {
                out.push(violation(format!("{prefix}.id"), format!("duplicate id {}", a.id)));
            }
        }
        if lanes > 0 {
            out.extend(overlaps(&self.placements(), self.sim.vehicle_length));
        }
        for (field, msg) in self.ecocruise.violations() {
            out.push(violation(format!("ecocruise.{field}"), msg));
        }
        for (field, msg) in self.multicruise.violations() {
            out.push(violation(format!("multicruise.{field}"), msg));
        }
        for (field, msg) in self.sim.violations() {
            out.push(violation(format!("sim.{field}"), msg));
        }
        if let Err(msg) = self.fuel_map.build() {
            out.push(violation("fuel_map", msg));
        }
        out
    }

    /// `(path, id, s, lane)` of the ego and every explicit ambient vehicle.
    fn placements(&self) -> Vec<(String, u32, T, usize)> {
        let mut v = vec![("ego".to_string(), 0, self.ego.s, self.ego.lane)];
        v.extend(
            self.ambient.vehicles.iter().enumerate().map(|(i, a)| (format!("ambient.vehicles[{i}]"), a.id, a.s, a.lane)),
        );
        v
    }

    /// Agents in world order (ego first), generating density traffic if asked.
    pub fn agents(&self, controller: Controller) -> Vec<Agent<T>> {
        let ego = VehicleState::new(VehicleId(0), self.ego.s, self.ego.lane, self.ego.v, controller);
        let mut agents = vec![Agent::new(ego, None)];
        let vehicles = match self.ambient.density {
            Some(d) => populate(&self.road.segments, d, self.seed, &self.ego),
            None => self.ambient.vehicles.clone(),
        };
        agents.extend(vehicles.iter().map(|a| {
            Agent::new(
                VehicleState::new(VehicleId(a.id), a.s, a.lane, a.v, Controller::AmbientTraffic),
                Some(a.desired_speed),
            )
        }));
        agents
    }

    /// World and run settings for one controller.
    pub fn build(&self, controller: Controller) -> Result<(World<T>, RunSetup<T>), ScenarioError> {
        let problems = self.violations();
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }
        let net = self.network()?;
        let map = self.fuel_map.build().map_err(|m| ScenarioError::Invalid(vec![violation("fuel_map", m)]))?;
        let max_time = free_flow_trip_time(&net, self.ego.s, &self.ecocruise) * self.sim.max_time_factor;
        let world = World { net, agents: self.agents(controller), time: T::zero(), dt: self.sim.dt, rng_seed: self.seed };
        let setup = RunSetup {
            eco: self.ecocruise,
            policy: self.multicruise,
            map,
            sim: self.sim,
            route_lane: Some(self.ego.route_lane.unwrap_or(self.ego.lane)),
            max_time,
        };
        Ok((world, setup))
    }
}

fn overlaps<T: Scalar>(placed: &[(String, u32, T, usize)], length: T) -> Vec<Violation> {
    let mut order: Vec<&(String, u32, T, usize)> = placed.iter().collect();
    order.sort_by(|a, b| a.3.cmp(&b.3).then(a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal)));
    order
        .windows(2)
        .filter(|w| w[0].3 == w[1].3 && w[1].2 - w[0].2 < length)
        .map(|w| {
            violation(
                w[1].0.clone(),
                format!("vehicles {} and {} overlap in lane {}", w[0].1, w[1].1, w[1].3),
            )
        })
        .collect()
}

/// Run a valid scenario under `controller`.
pub fn run_scenario<T: Scalar>(scenario: &Scenario<T>, controller: Controller) -> Result<SimTrace<T>, ScenarioError> {
    let (world, setup) = scenario.build(controller)?;
    Ok(Simulation::new(world, setup).run())
}

/// Speed of a km/h limit in m/s.
pub fn kmh(x: f64) -> f64 {
    x / 3.6
}

/// The single-lead overtake: 1600 m, three lanes, 112 km/h limit and a lead
/// pinned at 19.4 m/s, 150 m ahead of the ego in the middle lane.
pub fn gen_simple_overtake<T: Scalar>() -> Scenario<T> {
    let limit = T::of(31.1);
    let lead_speed = T::of(19.4);
    let length = SimConfig::<T>::default().vehicle_length;
    Scenario {
        schema_version: SCHEMA_VERSION,
        seed: 0,
        road: RoadSpec { segments: vec![RoadSegment::straight(T::of(1600.0), 3, limit)], max_curvature: default_max_curvature() },
        ego: EgoSpec { s: T::zero(), lane: 1, v: limit, controller: Controller::MultiCruise, route_lane: None },
        ambient: AmbientSpec {
            density: None,
            vehicles: vec![AmbientVehicle { id: 1, s: T::of(150.0) + length, lane: 1, v: lead_speed, desired_speed: lead_speed }],
        },
        ecocruise: EcoCruiseConfig::default(),
        multicruise: PolicyConfig::default(),
        fuel_map: FuelMapSpec::default(),
        sim: SimConfig::default(),
    }
}

/// Speed limits drawn for generated highways, km/h.
pub const HIGHWAY_LIMITS_KMH: [f64; 3] = [97.0, 105.0, 112.0];
pub const HIGHWAY_LANES: usize = 3;
/// Ambient vehicles never start this close ahead of the ego in its lane, m.
pub const EGO_CLEARANCE: f64 = 80.0;

/// A randomized multi-segment highway with ambient traffic at `density`.
pub fn gen_highway<T: Scalar>(length_km: f64, density: Density, seed: u64, profile: Profile) -> Scenario<T> {
    assert!(length_km > 0.0, "length must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = length_km * 1000.0;
    let mut segments = Vec::new();
    let mut start = 0.0;
    while start < total - 1e-9 {
        let len = rng.gen_range(400.0..1500.0f64).min(total - start);
        let limit = kmh(HIGHWAY_LIMITS_KMH[rng.gen_range(0..HIGHWAY_LIMITS_KMH.len())]);
        let (grade, curvature) = match profile {
            Profile::Flat => (0.0, 0.0),
            Profile::Rolling => {
                let grade = (rng.gen_range(-0.04..=0.04f64) * 1000.0).round() / 1000.0;
                let curvature = if rng.gen_bool(0.3) { rng.gen_range(-0.002..0.002f64) } else { 0.0 };
                (grade, curvature)
            }
        };
        segments.push(RoadSegment {
            length: T::of(len),
            lanes: HIGHWAY_LANES,
            speed_limit: T::of(limit),
            grade: T::of(grade),
            curvature: T::of(curvature),
        });
        start += len;
    }
    let v0 = segments[0].speed_limit;
    let ego = EgoSpec { s: T::zero(), lane: 1, v: v0, controller: Controller::MultiCruise, route_lane: None };
    let vehicles = populate(&segments, density, seed, &ego);
    Scenario {
        schema_version: SCHEMA_VERSION,
        seed,
        road: RoadSpec { segments, max_curvature: default_max_curvature() },
        ego,
        ambient: AmbientSpec { density: None, vehicles },
        ecocruise: EcoCruiseConfig::default(),
        multicruise: PolicyConfig::default(),
        fuel_map: FuelMapSpec::default(),
        sim: SimConfig::default(),
    }
}

/// Ambient traffic along the route: one vehicle per `density.spacing()`
/// meters (±20 % jitter) in a random lane, cruising at 0.85 to 1.0 times
/// the local limit.
pub fn populate<T: Scalar>(segments: &[RoadSegment<T>], density: Density, seed: u64, ego: &EgoSpec<T>) -> Vec<AmbientVehicle<T>> {
    // separate stream from the road layout
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a3b1_e000_0001);
    let lanes = segments.first().map_or(1, |s| s.lanes);
    let total: f64 = segments.iter().map(|s| s.length.as_f64()).sum();
    let limit_at = |s: f64| {
        let mut start = 0.0;
        for seg in segments {
            start += seg.length.as_f64();
            if s < start {
                return seg.speed_limit.as_f64();
            }
        }
        segments.last().map_or(1.0, |seg| seg.speed_limit.as_f64())
    };
    let spacing = density.spacing();
    let mut out = Vec::new();
    let mut s = spacing * rng.gen_range(0.8..1.2) * 0.5;
    let mut id = 1;
    let ego_s = ego.s.as_f64();
    while s < total {
        let lane = rng.gen_range(0..lanes);
        let speed = limit_at(s) * rng.gen_range(0.85..=1.0);
        let clear = lane != ego.lane || s - ego_s >= EGO_CLEARANCE || s < ego_s - EGO_CLEARANCE;
        if clear {
            let v = T::of(speed);
            out.push(AmbientVehicle { id, s: T::of(s), lane, v, desired_speed: v });
            id += 1;
        }
        s += spacing * rng.gen_range(0.8..1.2);
    }
    out
}
