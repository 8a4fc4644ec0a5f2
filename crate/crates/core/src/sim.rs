//! Fixed-step world simulation.
//!
//! Each step the ego runs its controller against a snapshot of the world,
//! ambient drivers follow their lane leads, every vehicle advances, lateral
//! maneuvers progress (the lane index flips at the maneuver midpoint) and
//! the lanes are scanned for overlapping vehicles.

use serde::{Deserialize, Serialize};

use crate::ecocruise::{following_accel, EcoCruiseConfig, LaneObservation};
use crate::policy::{occupies, Decision, LaneCosts, LaneTriple, MultiCruise, PolicyConfig, PolicyInput};
use crate::road::RoadNetwork;
use crate::scalar::Scalar;
use crate::vehicle::{integrate_rates, step_longitudinal, Controller, FuelMap, LaneChangeMotion, VehicleId, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct SimConfig<T> {
    /// Integration step, s.
    pub dt: T,
    pub vehicle_length: T,
    pub lane_width: T,
    /// Lane-change duration, s.
    pub lane_change_duration: T,
    /// Longitudinal acceleration clamp, m/s².
    pub a_max_abs: T,
    /// Lowest speed used when converting lateral velocity to yaw, m/s.
    pub yaw_speed_floor: T,
    /// How far ahead vehicles are observed, m.
    pub sensor_range: T,
    /// Run limit as a multiple of the free-flow trip time.
    pub max_time_factor: T,
    /// Keep every vehicle's state in each step record.
    pub record_ambient: bool,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::of(0.05),
            vehicle_length: T::of(4.5),
            lane_width: T::of(3.5),
            lane_change_duration: T::of(4.0),
            a_max_abs: T::of(4.0),
            yaw_speed_floor: T::of(1.0),
            sensor_range: T::of(400.0),
            max_time_factor: T::of(3.0),
            record_ambient: false,
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    pub fn cast<U: Scalar>(&self) -> SimConfig<U> {
        let c = |x: T| U::of(x.as_f64());
        SimConfig {
            dt: c(self.dt),
            vehicle_length: c(self.vehicle_length),
            lane_width: c(self.lane_width),
            lane_change_duration: c(self.lane_change_duration),
            a_max_abs: c(self.a_max_abs),
            yaw_speed_floor: c(self.yaw_speed_floor),
            sensor_range: c(self.sensor_range),
            max_time_factor: c(self.max_time_factor),
            record_ambient: self.record_ambient,
        }
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (name, x) in [
            ("dt", self.dt),
            ("vehicle_length", self.vehicle_length),
            ("lane_width", self.lane_width),
            ("lane_change_duration", self.lane_change_duration),
            ("a_max_abs", self.a_max_abs),
            ("yaw_speed_floor", self.yaw_speed_floor),
            ("sensor_range", self.sensor_range),
            ("max_time_factor", self.max_time_factor),
        ] {
            if !(x > T::zero() && x.is_finite()) {
                out.push((name, format!("must be positive, got {x}")));
            }
        }
        out
    }
}

/// A simulated vehicle and what drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent<T> {
    pub state: VehicleState<T>,
    /// Cruise speed for ambient drivers; the ego uses the road's limit.
    pub desired_speed: Option<T>,
    pub motion: Option<LaneChangeMotion<T>>,
    /// Past the route end; ignored by sensing and collision checks.
    pub exited: bool,
}

impl<T: Scalar> Agent<T> {
    pub fn new(state: VehicleState<T>, desired_speed: Option<T>) -> Self {
        Self { state, desired_speed, motion: None, exited: false }
    }
}

#[derive(Debug, Clone)]
pub struct World<T> {
    pub net: RoadNetwork<T>,
    /// The ego is always first.
    pub agents: Vec<Agent<T>>,
    pub time: T,
    pub dt: T,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Collision,
    Timeout,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::Collision => "collision",
            RunStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent<T> {
    pub time: T,
    pub lane: usize,
    /// Rear vehicle, then front vehicle.
    pub vehicles: (VehicleId, VehicleId),
    pub overlap: T,
}

/// A lane change the ego started, with the world as the policy saw it.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneChangeEvent<T> {
    pub time: T,
    pub from_lane: usize,
    pub to_lane: usize,
    pub d_nav: T,
    pub space_check: bool,
    /// Ego first, then all vehicles still on the road.
    pub snapshot: Vec<VehicleState<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub time: T,
    pub ego: VehicleState<T>,
    /// Grade-corrected ego fuel rate, g/s.
    pub fuel_rate: T,
    pub costs: Option<LaneCosts<T>>,
    pub decision: Option<Decision<T>>,
    pub others: Option<Vec<VehicleState<T>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub consumed_fuel_g: f64,
    pub distance_m: f64,
    pub trip_time_s: f64,
    pub lane_changes: usize,
    pub status: RunStatus,
    pub seed: u64,
    pub controller: Controller,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace<T> {
    pub dt: T,
    /// The initial state at index 0, then one record per step.
    pub records: Vec<StepRecord<T>>,
    pub lane_changes: Vec<LaneChangeEvent<T>>,
    pub collision: Option<CollisionEvent<T>>,
    pub summary: Summary,
}

impl<T: Scalar> SimTrace<T> {
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn fuel_rates(&self) -> Vec<T> {
        self.records.iter().map(|r| r.fuel_rate).collect()
    }

    /// Consumed fuel recomputed from the per-step fuel rates.
    pub fn recomputed_fuel(&self) -> T {
        integrate_rates(&self.fuel_rates(), self.dt)
    }

    pub fn yaw_trace(&self) -> Vec<(T, T)> {
        self.records.iter().map(|r| (r.time, r.ego.yaw)).collect()
    }

    /// Per-step CSV with the ego's state, fuel rate, lane costs and decision.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "s", "lane", "v", "a", "yaw", "fuel_rate", "C_LF", "C_CF", "C_RF", "decision"])
            .expect("in-memory write");
        let cost = |c: Option<&LaneCosts<T>>, f: fn(&LaneCosts<T>) -> T| c.map(|c| fmt_num(f(c))).unwrap_or_default();
        for r in &self.records {
            let costs = r.decision.as_ref().and_then(|d| d.costs.as_ref()).or(r.costs.as_ref());
            w.write_record([
                fmt_num(r.time),
                fmt_num(r.ego.s),
                r.ego.lane.to_string(),
                fmt_num(r.ego.v),
                fmt_num(r.ego.a),
                fmt_num(r.ego.yaw),
                fmt_num(r.fuel_rate),
                cost(costs, LaneCosts::c_lf),
                cost(costs, LaneCosts::c_cf),
                cost(costs, LaneCosts::c_rf),
                r.decision.map(|d| d.label()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn fmt_num<T: Scalar>(x: T) -> String {
    let x = x.as_f64();
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

/// Vehicles occupying a lane, sorted by position: `(s, agent index)`.
type LaneIndex<T> = Vec<Vec<(T, usize)>>;

fn lane_index<T: Scalar>(agents: &[Agent<T>], lanes: usize) -> LaneIndex<T> {
    let mut out: LaneIndex<T> = vec![Vec::new(); lanes];
    for (i, a) in agents.iter().enumerate().filter(|(_, a)| !a.exited) {
        for (lane, slot) in out.iter_mut().enumerate() {
            if occupies(&a.state, lane) {
                slot.push((a.state.s, i));
            }
        }
    }
    for slot in &mut out {
        slot.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));
    }
    out
}

/// Nearest vehicle strictly ahead of `s` in a lane, skipping `me`.
fn lead_in<T: Scalar>(slot: &[(T, usize)], s: T, me: usize) -> Option<(T, usize)> {
    let from = slot.partition_point(|&(x, _)| x <= s);
    slot[from..].iter().copied().find(|&(_, i)| i != me)
}

/// Observation of `lane` as seen from agent `me`.
#[allow(clippy::too_many_arguments)]
fn observe_lane<T: Scalar>(
    agents: &[Agent<T>],
    index: &LaneIndex<T>,
    me: usize,
    lane: usize,
    speed_limit: T,
    grade: T,
    curvature: T,
    free_distance: T,
    sensor_range: T,
    vehicle_length: T,
) -> LaneObservation<T> {
    let ego = &agents[me].state;
    match lead_in(&index[lane], ego.s, me) {
        Some((s, i)) if s - ego.s <= sensor_range => {
            LaneObservation::with_lead(s - vehicle_length - ego.s, agents[i].state.v, speed_limit, grade, curvature)
        }
        _ => LaneObservation::free(speed_limit, grade, curvature, free_distance),
    }
}

/// Left, current and right observations for the ego. Lanes that do not
/// exist are `None`.
pub fn observe_lanes<T: Scalar>(
    world: &World<T>,
    ego: usize,
    eco: &EcoCruiseConfig<T>,
    sim: &SimConfig<T>,
) -> LaneTriple<Option<LaneObservation<T>>> {
    let index = lane_index(&world.agents, world.net.max_lanes());
    observe_with_index(world, &index, ego, eco, sim)
}

fn observe_with_index<T: Scalar>(
    world: &World<T>,
    index: &LaneIndex<T>,
    ego: usize,
    eco: &EcoCruiseConfig<T>,
    sim: &SimConfig<T>,
) -> LaneTriple<Option<LaneObservation<T>>> {
    let state = &world.agents[ego].state;
    let road = world.net.query_clamped(state.s);
    let obs = |lane: usize| {
        (lane < road.lane_count).then(|| {
            observe_lane(
                &world.agents,
                index,
                ego,
                lane,
                road.speed_limit,
                road.grade,
                road.curvature,
                eco.free_distance,
                sim.sensor_range,
                sim.vehicle_length,
            )
        })
    };
    LaneTriple {
        left: obs(state.lane + 1),
        current: obs(state.lane),
        right: state.lane.checked_sub(1).and_then(obs),
    }
}

/// Everything a run needs besides the world itself.
#[derive(Debug, Clone)]
pub struct RunSetup<T> {
    pub eco: EcoCruiseConfig<T>,
    pub policy: PolicyConfig<T>,
    pub map: FuelMap<T>,
    pub sim: SimConfig<T>,
    /// Lane the ego's route plans to use.
    pub route_lane: Option<usize>,
    pub max_time: T,
}

/// Free-flow trip time for the ego from `s0` to the route end.
pub fn free_flow_trip_time<T: Scalar>(net: &RoadNetwork<T>, s0: T, eco: &EcoCruiseConfig<T>) -> T {
    let mut start = T::zero();
    let mut total = T::zero();
    for seg in net.segments() {
        let end = start + seg.length;
        let covered = (end - start.max(s0)).max(T::zero());
        total = total + covered / eco.desired_speed(seg.speed_limit, seg.curvature);
        start = end;
    }
    total
}

/// A world being stepped, with the ego controller and the trace so far.
pub struct Simulation<T> {
    pub world: World<T>,
    setup: RunSetup<T>,
    policy: Option<MultiCruise<T>>,
    trace: Vec<StepRecord<T>>,
    lane_changes: Vec<LaneChangeEvent<T>>,
    fuel: T,
    steps: u64,
    s0: T,
    finished: Option<RunStatus>,
    collision: Option<CollisionEvent<T>>,
}

impl<T: Scalar> Simulation<T> {
    pub fn new(world: World<T>, setup: RunSetup<T>) -> Self {
        let ego = world.agents[0].state;
        let policy = (ego.controller == Controller::MultiCruise).then(|| {
            MultiCruise::new(setup.policy, setup.eco, setup.map.clone(), setup.sim.lane_change_duration)
        });
        let mut sim = Self {
            s0: ego.s,
            world,
            setup,
            policy,
            trace: Vec::new(),
            lane_changes: Vec::new(),
            fuel: T::zero(),
            steps: 0,
            finished: None,
            collision: None,
        };
        let first = sim.record(None);
        sim.trace.push(first);
        sim
    }

    pub fn finished(&self) -> Option<RunStatus> {
        self.finished
    }

    fn ego_fuel_rate(&self) -> T {
        let ego = &self.world.agents[0].state;
        let road = self.world.net.query_clamped(ego.s);
        self.setup.map.fuel_rate(ego.v, ego.a) * self.setup.eco.grade_factor(road.grade, ego.v)
    }

    fn record(&self, decision: Option<Decision<T>>) -> StepRecord<T> {
        StepRecord {
            time: self.world.time,
            ego: self.world.agents[0].state,
            fuel_rate: self.ego_fuel_rate(),
            costs: decision.and_then(|d| d.costs),
            decision,
            others: self
                .setup
                .sim
                .record_ambient
                .then(|| self.world.agents[1..].iter().map(|a| a.state).collect()),
        }
    }

    /// Advance one step. Returns the run status once the run has ended.
    pub fn step(&mut self) -> Option<RunStatus> {
        if self.finished.is_some() {
            return self.finished;
        }
        let dt = self.world.dt;
        let now = self.world.time;
        let sim = self.setup.sim;
        let eco = self.setup.eco;
        let index = lane_index(&self.world.agents, self.world.net.max_lanes());

        // ego controller
        let ego_state = self.world.agents[0].state;
        let ego_obs = observe_with_index(&self.world, &index, 0, &eco, &sim);
        let mut decision = None;
        let ego_cmd = match &mut self.policy {
            Some(policy) => {
                let others: Vec<VehicleState<T>> =
                    self.world.agents[1..].iter().filter(|a| !a.exited).map(|a| a.state).collect();
                let d_nav = self.world.net.total_length() - ego_state.s.min(self.world.net.total_length());
                let input = PolicyInput {
                    ego: &ego_state,
                    obs: ego_obs,
                    others: &others,
                    d_nav,
                    vehicle_length: sim.vehicle_length,
                    route_lane: self.setup.route_lane,
                };
                let out = policy.step(&input, now);
                decision = out.decision;
                if let Some(m) = out.started {
                    self.world.agents[0].motion = Some(m);
                    let mut snapshot = vec![ego_state];
                    snapshot.extend(others);
                    self.lane_changes.push(LaneChangeEvent {
                        time: now,
                        from_lane: m.from_lane,
                        to_lane: m.to_lane,
                        d_nav,
                        space_check: out.space_check.unwrap_or(false),
                        snapshot,
                    });
                }
                out.a_cmd
            }
            None => following_accel(&eco, ego_state.v, &ego_obs.current.expect("ego lane exists")),
        };

        // ambient drivers, from the same snapshot
        let mut commands = vec![ego_cmd];
        for (i, agent) in self.world.agents.iter().enumerate().skip(1) {
            if agent.exited {
                commands.push(T::zero());
                continue;
            }
            let road = self.world.net.query_clamped(agent.state.s);
            let limit = agent.desired_speed.map_or(road.speed_limit, |d| d.min(road.speed_limit));
            let obs = observe_lane(
                &self.world.agents,
                &index,
                i,
                agent.state.lane.min(road.lane_count - 1),
                limit,
                road.grade,
                road.curvature,
                eco.free_distance,
                sim.sensor_range,
                sim.vehicle_length,
            );
            commands.push(following_accel(&eco, agent.state.v, &obs));
        }

        // integer step count keeps time free of accumulated rounding
        let t_next = T::of((self.steps + 1) as f64) * dt;
        let total = self.world.net.total_length();
        for (agent, &a_cmd) in self.world.agents.iter_mut().zip(&commands) {
            if agent.exited {
                continue;
            }
            agent.state = step_longitudinal(&agent.state, a_cmd, dt, sim.a_max_abs);
            if let Some(m) = agent.motion {
                let t = t_next.min(m.end_time());
                let lat = m
                    .lateral_profile(t, sim.lane_width, agent.state.v, sim.yaw_speed_floor)
                    .expect("time inside the maneuver window");
                let half = T::of(0.5);
                let flipped = m.progress(t) >= half;
                agent.state.lane = if flipped { m.to_lane } else { m.from_lane };
                agent.state.lateral_offset = if flipped { lat.offset - m.direction() * sim.lane_width } else { lat.offset };
                agent.state.yaw = lat.yaw;
                if t_next >= m.end_time() - T::of(1e-9) {
                    agent.motion = None;
                    agent.state.lane = m.to_lane;
                    agent.state.lateral_offset = T::zero();
                    agent.state.yaw = T::zero();
                }
            }
            if agent.state.s >= total {
                agent.exited = true;
            }
        }
        self.world.time = t_next;
        self.steps += 1;

        let rec = self.record(decision);
        let prev_rate = self.trace.last().map_or(rec.fuel_rate, |r| r.fuel_rate);
        self.fuel = self.fuel + (prev_rate + rec.fuel_rate) * T::of(0.5) * dt;
        self.trace.push(rec);

        if let Some(c) = self.scan_collisions() {
            self.collision = Some(c);
            self.finished = Some(RunStatus::Collision);
        } else if self.world.agents[0].exited {
            self.finished = Some(RunStatus::Completed);
        } else if self.world.time >= self.setup.max_time {
            self.finished = Some(RunStatus::Timeout);
        }
        self.finished
    }

    fn scan_collisions(&self) -> Option<CollisionEvent<T>> {
        let len = self.setup.sim.vehicle_length;
        let index = lane_index(&self.world.agents, self.world.net.max_lanes());
        for (lane, slot) in index.iter().enumerate() {
            for pair in slot.windows(2) {
                let (rear_s, rear) = pair[0];
                let (front_s, front) = pair[1];
                let gap = front_s - len - rear_s;
                if gap < T::zero() {
                    return Some(CollisionEvent {
                        time: self.world.time,
                        lane,
                        vehicles: (self.world.agents[rear].state.id, self.world.agents[front].state.id),
                        overlap: -gap,
                    });
                }
            }
        }
        None
    }

    pub fn run(mut self) -> SimTrace<T> {
        while self.step().is_none() {}
        self.into_trace()
    }

    pub fn into_trace(self) -> SimTrace<T> {
        let ego = &self.world.agents[0].state;
        let summary = Summary {
            consumed_fuel_g: self.fuel.as_f64(),
            distance_m: (ego.s - self.s0).as_f64(),
            trip_time_s: self.world.time.as_f64(),
            lane_changes: self.lane_changes.len(),
            status: self.finished.unwrap_or(RunStatus::Timeout),
            seed: self.world.rng_seed,
            controller: ego.controller,
        };
        SimTrace { dt: self.world.dt, records: self.trace, lane_changes: self.lane_changes, collision: self.collision, summary }
    }
}
