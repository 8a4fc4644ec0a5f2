//! MultiCruise lane selection.
//!
//! Every policy period the ego scores its left, current and right lanes with
//! the cruise cost Γ, adds the anti-thrash penalty `P = s · v / t_Δ` to the
//! two neighbors, and runs the gated arg-min:
//!
//! 1. navigation lock: no discretionary change within `d_thr` of the route end;
//! 2. cost gate: keep the current lane while `C_CF <= C_Thr`;
//! 3. otherwise move toward the cheapest lane, current lane first on ties,
//!    then the rightmost.
//!
//! A chosen neighbor is only entered when the space checker finds the box
//! around the ego free in the target lane.

use serde::{Deserialize, Serialize};

use crate::ecocruise::{following_accel, free_flow_gamma, lane_gamma, EcoCruiseConfig, GammaBreakdown, LaneObservation};
use crate::scalar::Scalar;
use crate::vehicle::{FuelMap, LaneChangeMotion, VehicleState};

/// How `C_Thr` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostThreshold<T> {
    /// A fixed cost.
    Absolute(T),
    /// A multiple of the free-flow Γ of the ego's current lane.
    FreeFlowFactor(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct PolicyConfig<T> {
    /// Penalty scale `s`, cost·s/m.
    pub s_scale: T,
    pub cost_threshold: CostThreshold<T>,
    /// Navigation lock distance, m.
    pub d_thr: T,
    /// Smallest `t_Δ` used in the penalty, s.
    pub t_delta_floor: T,
    /// Space-checker reach ahead of the ego front, m.
    pub box_ahead: T,
    /// Space-checker reach behind the ego front, m.
    pub box_behind: T,
    /// Interval between lane evaluations, s.
    pub period: T,
    /// Cost per lane of distance from the route lane; zero disables it.
    pub route_lane_cost: T,
}

impl<T: Scalar> Default for PolicyConfig<T> {
    fn default() -> Self {
        Self {
            s_scale: T::of(2.0),
            cost_threshold: CostThreshold::FreeFlowFactor(T::of(1.1)),
            d_thr: T::of(500.0),
            t_delta_floor: T::of(0.5),
            box_ahead: T::of(30.0),
            box_behind: T::of(20.0),
            period: T::of(1.0),
            route_lane_cost: T::of(3.0),
        }
    }
}

impl<T: Scalar> PolicyConfig<T> {
    pub fn cast<U: Scalar>(&self) -> PolicyConfig<U> {
        let c = |x: T| U::of(x.as_f64());
        PolicyConfig {
            s_scale: c(self.s_scale),
            cost_threshold: match self.cost_threshold {
                CostThreshold::Absolute(x) => CostThreshold::Absolute(c(x)),
                CostThreshold::FreeFlowFactor(x) => CostThreshold::FreeFlowFactor(c(x)),
            },
            d_thr: c(self.d_thr),
            t_delta_floor: c(self.t_delta_floor),
            box_ahead: c(self.box_ahead),
            box_behind: c(self.box_behind),
            period: c(self.period),
            route_lane_cost: c(self.route_lane_cost),
        }
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let nonneg = |x: T| x >= T::zero() && x.is_finite();
        let pos = |x: T| x > T::zero() && x.is_finite();
        for (name, x) in [("s_scale", self.s_scale), ("d_thr", self.d_thr), ("route_lane_cost", self.route_lane_cost)] {
            if !nonneg(x) {
                out.push((name, format!("must be nonnegative, got {x}")));
            }
        }
        let thr = match self.cost_threshold {
            CostThreshold::Absolute(x) | CostThreshold::FreeFlowFactor(x) => x,
        };
        if !nonneg(thr) {
            out.push(("cost_threshold", format!("must be nonnegative, got {thr}")));
        }
        for (name, x) in [
            ("t_delta_floor", self.t_delta_floor),
            ("box_ahead", self.box_ahead),
            ("box_behind", self.box_behind),
            ("period", self.period),
        ] {
            if !pos(x) {
                out.push((name, format!("must be positive, got {x}")));
            }
        }
        out
    }
}

/// Anti-thrash penalty `s · v / max(t_Δ, floor)`; zero before the first change.
pub fn penalty<T: Scalar>(t_delta: Option<T>, v_ego: T, cfg: &PolicyConfig<T>) -> T {
    match t_delta {
        None => T::zero(),
        Some(t) if t.is_infinite() => T::zero(),
        Some(t) => cfg.s_scale * v_ego / t.max(cfg.t_delta_floor),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyState<T> {
    pub last_change_completed_at: Option<T>,
    pub active_change: Option<LaneChangeMotion<T>>,
    pub next_evaluation_at: T,
}

impl<T: Scalar> PolicyState<T> {
    /// Time since the last completed change, `None` if there was none.
    pub fn t_delta(&self, now: T) -> Option<T> {
        self.last_change_completed_at.map(|t| (now - t).max(T::zero()))
    }
}

/// One entry per lane: left, current, right.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneTriple<X> {
    pub left: X,
    pub current: X,
    pub right: X,
}

/// Cost of one candidate lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneCost<T> {
    /// `+∞` when the lane does not exist.
    pub total: T,
    pub gamma: Option<GammaBreakdown<T>>,
    pub penalty: T,
    pub route: T,
}

impl<T: Scalar> LaneCost<T> {
    pub fn missing() -> Self {
        Self { total: T::infinity(), gamma: None, penalty: T::zero(), route: T::zero() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneCosts<T> {
    pub lanes: LaneTriple<LaneCost<T>>,
    /// Γ of free cruising in the current lane.
    pub free_flow: T,
}

impl<T: Scalar> LaneCosts<T> {
    pub fn c_lf(&self) -> T {
        self.lanes.left.total
    }
    pub fn c_cf(&self) -> T {
        self.lanes.current.total
    }
    pub fn c_rf(&self) -> T {
        self.lanes.right.total
    }

    /// Costs with only totals set, as when they come from elsewhere.
    pub fn from_totals(c_lf: T, c_cf: T, c_rf: T) -> Self {
        let only = |total| LaneCost { total, ..LaneCost::missing() };
        Self {
            lanes: LaneTriple { left: only(c_lf), current: only(c_cf), right: only(c_rf) },
            free_flow: T::zero(),
        }
    }

    pub fn threshold(&self, cfg: &PolicyConfig<T>) -> T {
        match cfg.cost_threshold {
            CostThreshold::Absolute(x) => x,
            CostThreshold::FreeFlowFactor(k) => k * self.free_flow,
        }
    }
}

/// Score each existing lane.
///
/// `route_lane` is the lane the navigation system plans to use; each lane
/// of distance from it adds `route_lane_cost`.
#[allow(clippy::too_many_arguments)]
pub fn lane_costs<T: Scalar>(
    ego: &VehicleState<T>,
    obs: &LaneTriple<Option<LaneObservation<T>>>,
    state: &PolicyState<T>,
    now: T,
    route_lane: Option<usize>,
    cfg: &PolicyConfig<T>,
    eco: &EcoCruiseConfig<T>,
    map: &FuelMap<T>,
) -> LaneCosts<T> {
    let current = obs.current.expect("current lane observation is required");
    let p = penalty(state.t_delta(now), ego.v, cfg);
    let route = |lane: usize| match route_lane {
        Some(r) => cfg.route_lane_cost * T::of(lane.abs_diff(r) as f64),
        None => T::zero(),
    };
    let score = |o: &LaneObservation<T>, pen: T, lane: usize| {
        let g = lane_gamma(eco, ego.v, ego.a, o, map);
        let route = route(lane);
        LaneCost { total: g.total + pen + route, gamma: Some(g), penalty: pen, route }
    };
    let side = |o: &Option<LaneObservation<T>>, lane: Option<usize>| match (o, lane) {
        (Some(o), Some(lane)) => score(o, p, lane),
        _ => LaneCost::missing(),
    };
    let free_flow = free_flow_gamma(eco, current.speed_limit, current.grade, current.curvature, map).total;
    LaneCosts {
        lanes: LaneTriple {
            left: side(&obs.left, Some(ego.lane + 1)),
            current: score(&current, T::zero(), ego.lane),
            right: side(&obs.right, ego.lane.checked_sub(1)),
        },
        free_flow,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stay,
    ChangeLeft,
    ChangeRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    NavigationLock,
    BelowThreshold,
    ArgminCurrent,
    ArgminNeighbor,
    SpaceVeto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<T> {
    pub action: Action,
    pub reason: Reason,
    /// Absent when the navigation lock skipped cost evaluation.
    pub costs: Option<LaneCosts<T>>,
}

impl<T> Decision<T> {
    pub fn label(&self) -> String {
        format!("{:?}:{:?}", self.action, self.reason)
    }
}

/// Gated arg-min over the three lane costs.
pub fn decide<T: Scalar>(costs: &LaneCosts<T>, d_nav: T, cfg: &PolicyConfig<T>) -> Decision<T> {
    let stay = |reason| Decision { action: Action::Stay, reason, costs: Some(*costs) };
    if d_nav <= cfg.d_thr {
        return stay(Reason::NavigationLock);
    }
    if costs.c_cf() <= costs.threshold(cfg) {
        return stay(Reason::BelowThreshold);
    }
    // preference order on ties: current, right, left
    let mut best = (Action::Stay, costs.c_cf());
    for (action, c) in [(Action::ChangeRight, costs.c_rf()), (Action::ChangeLeft, costs.c_lf())] {
        if c < best.1 {
            best = (action, c);
        }
    }
    match best.0 {
        Action::Stay => stay(Reason::ArgminCurrent),
        action => Decision { action, reason: Reason::ArgminNeighbor, costs: Some(*costs) },
    }
}

/// Longitudinal interval `[s - length, s]` of a vehicle body.
fn body<T: Scalar>(v: &VehicleState<T>, length: T) -> (T, T) {
    (v.s - length, v.s)
}

/// Whether a vehicle occupies `lane`. A vehicle part way through a lane
/// change (nonzero lateral offset) occupies both lanes it straddles.
pub fn occupies<T: Scalar>(v: &VehicleState<T>, lane: usize) -> bool {
    if v.lane == lane {
        return true;
    }
    if v.lateral_offset > T::zero() {
        v.lane + 1 == lane
    } else if v.lateral_offset < T::zero() {
        v.lane.checked_sub(1) == Some(lane)
    } else {
        false
    }
}

/// True iff the box `[ego.s - box_behind, ego.s + box_ahead]` in
/// `target_lane` is free of other vehicles.
pub fn space_check<T: Scalar>(
    ego: &VehicleState<T>,
    target_lane: usize,
    others: &[VehicleState<T>],
    vehicle_length: T,
    cfg: &PolicyConfig<T>,
) -> bool {
    let lo = ego.s - cfg.box_behind;
    let hi = ego.s + cfg.box_ahead;
    !others.iter().filter(|o| o.id != ego.id && occupies(o, target_lane)).any(|o| {
        let (rear, front) = body(o, vehicle_length);
        rear <= hi && front >= lo
    })
}

/// Everything the policy sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a, T> {
    pub ego: &'a VehicleState<T>,
    pub obs: LaneTriple<Option<LaneObservation<T>>>,
    /// All other vehicles, for the space checker.
    pub others: &'a [VehicleState<T>],
    pub d_nav: T,
    pub vehicle_length: T,
    pub route_lane: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput<T> {
    /// Present only on steps where the lanes were evaluated.
    pub decision: Option<Decision<T>>,
    pub a_cmd: T,
    pub started: Option<LaneChangeMotion<T>>,
    /// Space-checker verdict when a change was proposed.
    pub space_check: Option<bool>,
}

/// The MultiCruise decision layer for one ego vehicle.
#[derive(Debug, Clone)]
pub struct MultiCruise<T> {
    pub cfg: PolicyConfig<T>,
    pub eco: EcoCruiseConfig<T>,
    pub map: FuelMap<T>,
    pub lane_change_duration: T,
    state: PolicyState<T>,
}

impl<T: Scalar> MultiCruise<T> {
    pub fn new(cfg: PolicyConfig<T>, eco: EcoCruiseConfig<T>, map: FuelMap<T>, lane_change_duration: T) -> Self {
        Self { cfg, eco, map, lane_change_duration, state: PolicyState::default() }
    }

    pub fn state(&self) -> &PolicyState<T> {
        &self.state
    }

    pub fn with_state(mut self, state: PolicyState<T>) -> Self {
        self.state = state;
        self
    }

    /// Following command against the lead in `lane`.
    fn follow(&self, input: &PolicyInput<'_, T>, lane: usize) -> T {
        observation_for(input, lane)
            .map(|o| following_accel(&self.eco, input.ego.v, &o))
            .unwrap_or(T::zero())
    }

    /// Command while changing lanes: follow the target lane, and the lead
    /// left behind only while the ego could still reach it before the
    /// maneuver ends.
    fn follow_maneuver(&self, input: &PolicyInput<'_, T>, m: &LaneChangeMotion<T>, now: T) -> T {
        let target = self.follow(input, m.to_lane);
        let Some(old) = observation_for(input, m.from_lane).filter(|o| o.lead_exists) else {
            return target;
        };
        let left = (m.end_time() - now).max(T::zero());
        let closing = (input.ego.v - old.v_lead).max(T::zero());
        let reach = closing * left + T::of(0.5) * self.eco.a_max * left * left + self.eco.min_gap;
        if old.d <= reach {
            target.min(following_accel(&self.eco, input.ego.v, &old))
        } else {
            target
        }
    }

    pub fn step(&mut self, input: &PolicyInput<'_, T>, now: T) -> PolicyOutput<T> {
        let eps = T::of(1e-9);
        if let Some(m) = self.state.active_change {
            if now + eps >= m.end_time() {
                self.state.last_change_completed_at = Some(m.end_time());
                self.state.active_change = None;
            } else {
                let a_cmd = self.follow_maneuver(input, &m, now);
                return PolicyOutput { decision: None, a_cmd, started: None, space_check: None };
            }
        }

        let ego = input.ego;
        if now + eps < self.state.next_evaluation_at {
            let a_cmd = self.follow(input, ego.lane);
            return PolicyOutput { decision: None, a_cmd, started: None, space_check: None };
        }
        self.state.next_evaluation_at = now + self.cfg.period;

        let decision = if input.d_nav <= self.cfg.d_thr {
            Decision { action: Action::Stay, reason: Reason::NavigationLock, costs: None }
        } else {
            let costs = lane_costs(ego, &input.obs, &self.state, now, input.route_lane, &self.cfg, &self.eco, &self.map);
            decide(&costs, input.d_nav, &self.cfg)
        };

        let target = match decision.action {
            Action::Stay => None,
            Action::ChangeLeft => Some(ego.lane + 1),
            Action::ChangeRight => ego.lane.checked_sub(1),
        };
        let Some(target) = target else {
            let a_cmd = self.follow(input, ego.lane);
            return PolicyOutput { decision: Some(decision), a_cmd, started: None, space_check: None };
        };

        let free = space_check(ego, target, input.others, input.vehicle_length, &self.cfg);
        if !free {
            let vetoed = Decision { action: Action::Stay, reason: Reason::SpaceVeto, ..decision };
            let a_cmd = self.follow(input, ego.lane);
            return PolicyOutput { decision: Some(vetoed), a_cmd, started: None, space_check: Some(false) };
        }
        let motion = LaneChangeMotion::new(now, self.lane_change_duration, ego.lane, target)
            .expect("target is adjacent and duration positive");
        self.state.active_change = Some(motion);
        let a_cmd = self.follow_maneuver(input, &motion, now);
        PolicyOutput { decision: Some(decision), a_cmd, started: Some(motion), space_check: Some(true) }
    }
}

/// Observation for an absolute lane index adjacent to (or equal to) the ego lane.
fn observation_for<T: Scalar>(input: &PolicyInput<'_, T>, lane: usize) -> Option<LaneObservation<T>> {
    let ego = input.ego.lane;
    if lane == ego {
        input.obs.current
    } else if lane == ego + 1 {
        input.obs.left
    } else if Some(lane) == ego.checked_sub(1) {
        input.obs.right
    } else {
        None
    }
}
