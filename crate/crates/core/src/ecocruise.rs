//! Per-lane cruise trajectories and the cruise cost Γ.
//!
//! For a candidate lane the ego is forward-simulated behind that lane's lead
//! vehicle (held at constant speed) with the car-following law below. The
//! resulting speed trajectory is scored by a weighted sum of fuel, progress
//! and comfort costs.

use serde::{Deserialize, Serialize};

use crate::scalar::{clamp, Scalar};
use crate::vehicle::FuelMap;

/// Tunables for car following and for scoring trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct EcoCruiseConfig<T> {
    /// Maximum comfortable acceleration, m/s².
    pub a_max: T,
    /// Comfortable deceleration, m/s².
    pub b_comf: T,
    /// Hard braking limit, m/s².
    pub b_max: T,
    /// Desired time headway, s.
    pub time_headway: T,
    /// Standstill gap, m.
    pub min_gap: T,
    /// Lateral acceleration bound that caps speed in curves, m/s².
    pub a_lat_max: T,
    /// Gap reported for a lane with no lead vehicle in sensor range, m.
    pub free_distance: T,
    /// Prediction horizon, s.
    pub horizon: T,
    /// Prediction step, s.
    pub step: T,
    pub w_fuel: T,
    pub w_progress: T,
    pub w_comfort: T,
    /// Fuel multiplier per unit grade (uphill costs more, downhill less).
    pub grade_gain: T,
}

impl<T: Scalar> Default for EcoCruiseConfig<T> {
    fn default() -> Self {
        Self {
            a_max: T::of(1.5),
            b_comf: T::of(2.0),
            b_max: T::of(4.0),
            time_headway: T::of(1.5),
            min_gap: T::of(2.0),
            a_lat_max: T::of(3.0),
            free_distance: T::of(400.0),
            horizon: T::of(15.0),
            step: T::of(0.5),
            w_fuel: T::of(1.0),
            w_progress: T::of(60.0),
            w_comfort: T::of(0.1),
            grade_gain: T::of(4.0),
        }
    }
}

/// Lower bound on |curvature| when computing the curve speed limit.
const CURVATURE_EPS: f64 = 1e-9;

impl<T: Scalar> EcoCruiseConfig<T> {
    pub fn cast<U: Scalar>(&self) -> EcoCruiseConfig<U> {
        let c = |x: T| U::of(x.as_f64());
        EcoCruiseConfig {
            a_max: c(self.a_max),
            b_comf: c(self.b_comf),
            b_max: c(self.b_max),
            time_headway: c(self.time_headway),
            min_gap: c(self.min_gap),
            a_lat_max: c(self.a_lat_max),
            free_distance: c(self.free_distance),
            horizon: c(self.horizon),
            step: c(self.step),
            w_fuel: c(self.w_fuel),
            w_progress: c(self.w_progress),
            w_comfort: c(self.w_comfort),
            grade_gain: c(self.grade_gain),
        }
    }

    /// Range violations as `(field, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut positive = |name: &'static str, x: T| {
            if !(x > T::zero() && x.is_finite()) {
                out.push((name, format!("must be positive, got {x}")));
            }
        };
        positive("a_max", self.a_max);
        positive("b_comf", self.b_comf);
        positive("b_max", self.b_max);
        positive("time_headway", self.time_headway);
        positive("min_gap", self.min_gap);
        positive("a_lat_max", self.a_lat_max);
        positive("free_distance", self.free_distance);
        positive("horizon", self.horizon);
        positive("step", self.step);
        for (name, w) in [
            ("w_fuel", self.w_fuel),
            ("w_progress", self.w_progress),
            ("w_comfort", self.w_comfort),
            ("grade_gain", self.grade_gain),
        ] {
            if !(w >= T::zero() && w.is_finite()) {
                out.push((name, format!("must be nonnegative, got {w}")));
            }
        }
        out
    }

    /// Desired speed in a lane: the speed limit, capped by the speed at
    /// which the curve produces `a_lat_max` of lateral acceleration.
    pub fn desired_speed(&self, speed_limit: T, curvature: T) -> T {
        let kappa = curvature.abs().max(T::of(CURVATURE_EPS));
        speed_limit.min((self.a_lat_max / kappa).sqrt())
    }

    /// Fuel multiplier for driving at speed `v` on `grade`.
    pub fn grade_factor(&self, grade: T, v: T) -> T {
        let sign = if v > T::zero() { T::one() } else { T::zero() };
        (T::one() + self.grade_gain * grade * sign).max(T::zero())
    }
}

/// What the ego sees in one lane: the nearest lead vehicle (or a free-road
/// sentinel) and the road attributes there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneObservation<T> {
    pub lead_exists: bool,
    /// Gap from the ego's front to the lead's rear, m.
    pub d: T,
    pub v_lead: T,
    pub speed_limit: T,
    pub grade: T,
    pub curvature: T,
}

impl<T: Scalar> LaneObservation<T> {
    pub fn free(speed_limit: T, grade: T, curvature: T, free_distance: T) -> Self {
        Self { lead_exists: false, d: free_distance, v_lead: speed_limit, speed_limit, grade, curvature }
    }

    pub fn with_lead(d: T, v_lead: T, speed_limit: T, grade: T, curvature: T) -> Self {
        Self { lead_exists: true, d, v_lead, speed_limit, grade, curvature }
    }
}

/// Intelligent Driver Model acceleration, clamped to `[-b_max, a_max]`.
///
/// Without a lead vehicle only the free-road term applies. A lead with a
/// nonpositive gap yields the hard braking command `-b_max`.
pub fn following_accel<T: Scalar>(cfg: &EcoCruiseConfig<T>, v: T, obs: &LaneObservation<T>) -> T {
    let v_des = cfg.desired_speed(obs.speed_limit, obs.curvature);
    let ratio = v / v_des;
    let free = cfg.a_max * (T::one() - ratio.powi(4));
    let a = if obs.lead_exists {
        if obs.d <= T::zero() {
            return -cfg.b_max;
        }
        let closing = v - obs.v_lead;
        let dynamic = v * cfg.time_headway + v * closing / (T::of(2.0) * (cfg.a_max * cfg.b_comf).sqrt());
        let desired_gap = cfg.min_gap + dynamic.max(T::zero());
        free - cfg.a_max * (desired_gap / obs.d).powi(2)
    } else {
        free
    };
    clamp(a, -cfg.b_max, cfg.a_max)
}

/// Sampled speed plan over the prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTrajectory<T> {
    pub dt: T,
    /// Acceleration the ego had when the plan was made; the first comfort
    /// term measures the jump from it.
    pub initial_accel: T,
    /// `(v, a)` with `v[k + 1] = v[k] + a[k] dt`.
    pub samples: Vec<(T, T)>,
}

impl<T: Scalar> SpeedTrajectory<T> {
    pub fn horizon(&self) -> T {
        self.dt * T::of(self.samples.len() as f64)
    }

    /// Largest violation of `v[k + 1] = v[k] + a[k] dt`.
    pub fn consistency_error(&self) -> T {
        self.samples
            .windows(2)
            .map(|w| (w[1].0 - (w[0].0 + w[0].1 * self.dt)).abs())
            .fold(T::zero(), T::max)
    }
}

/// Forward-simulate car following against a constant-speed lead.
pub fn generate_trajectory<T: Scalar>(
    cfg: &EcoCruiseConfig<T>,
    v_ego: T,
    a_ego: T,
    obs: &LaneObservation<T>,
    horizon: T,
    dt: T,
) -> SpeedTrajectory<T> {
    debug_assert!(horizon > T::zero() && dt > T::zero());
    let n = (horizon / dt - T::of(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
    let mut samples = Vec::with_capacity(n);
    let mut obs = *obs;
    let mut v = v_ego.max(T::zero());
    let half = T::of(0.5);
    for _ in 0..n {
        // never command a reversal within the step
        let a = following_accel(cfg, v, &obs).max(-v / dt);
        let v_next = (v + a * dt).max(T::zero());
        samples.push((v, a));
        if obs.lead_exists {
            obs.d = obs.d + (obs.v_lead - (v + v_next) * half) * dt;
        }
        v = v_next;
    }
    SpeedTrajectory { dt, initial_accel: a_ego, samples }
}

/// Components of the cruise cost for one candidate lane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaBreakdown<T> {
    /// Grams over the horizon, grade corrected.
    pub fuel: T,
    /// Mean normalized speed shortfall, in `[0, 1]`.
    pub progress: T,
    /// Integrated squared jerk.
    pub comfort: T,
    pub total: T,
}

pub fn gamma<T: Scalar>(
    cfg: &EcoCruiseConfig<T>,
    traj: &SpeedTrajectory<T>,
    obs: &LaneObservation<T>,
    map: &FuelMap<T>,
) -> GammaBreakdown<T> {
    let dt = traj.dt;
    let v_des = cfg.desired_speed(obs.speed_limit, obs.curvature);
    let fuel: T = traj
        .samples
        .iter()
        .map(|&(v, a)| map.fuel_rate(v, a) * cfg.grade_factor(obs.grade, v) * dt)
        .sum();
    let horizon = traj.horizon();
    let progress = if horizon > T::zero() {
        traj.samples
            .iter()
            .map(|&(v, _)| (v_des - v).max(T::zero()) / v_des * dt)
            .sum::<T>()
            / horizon
    } else {
        T::zero()
    };
    let mut prev = traj.initial_accel;
    let mut comfort = T::zero();
    for &(_, a) in &traj.samples {
        let jerk = (a - prev) / dt;
        comfort = comfort + jerk * jerk * dt;
        prev = a;
    }
    weigh(cfg, fuel, progress, comfort)
}

fn weigh<T: Scalar>(cfg: &EcoCruiseConfig<T>, fuel: T, progress: T, comfort: T) -> GammaBreakdown<T> {
    GammaBreakdown {
        fuel,
        progress,
        comfort,
        total: cfg.w_fuel * fuel + cfg.w_progress * progress + cfg.w_comfort * comfort,
    }
}

/// Generate and score the default-horizon trajectory for one lane.
pub fn lane_gamma<T: Scalar>(
    cfg: &EcoCruiseConfig<T>,
    v_ego: T,
    a_ego: T,
    obs: &LaneObservation<T>,
    map: &FuelMap<T>,
) -> GammaBreakdown<T> {
    let traj = generate_trajectory(cfg, v_ego, a_ego, obs, cfg.horizon, cfg.step);
    gamma(cfg, &traj, obs, map)
}

/// Γ of cruising a free lane at its desired speed; the reference level for
/// relative cost thresholds.
pub fn free_flow_gamma<T: Scalar>(
    cfg: &EcoCruiseConfig<T>,
    speed_limit: T,
    grade: T,
    curvature: T,
    map: &FuelMap<T>,
) -> GammaBreakdown<T> {
    let obs = LaneObservation::free(speed_limit, grade, curvature, cfg.free_distance);
    let v_des = cfg.desired_speed(speed_limit, curvature);
    lane_gamma(cfg, v_des, T::zero(), &obs, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LIMIT: f64 = 31.1;

    fn cfg() -> EcoCruiseConfig<f64> {
        EcoCruiseConfig::default()
    }

    fn free() -> LaneObservation<f64> {
        LaneObservation::free(LIMIT, 0.0, 0.0, 400.0)
    }

    #[test]
    fn free_road_equilibrium() {
        assert!(following_accel(&cfg(), LIMIT, &free()).abs() < 1e-9);
    }

    #[test]
    fn standstill_free_road_is_full_throttle() {
        let a = following_accel(&cfg(), 0.0, &free());
        let sentinel_form = 1.5 * (1.0 - (2.0f64 / 400.0).powi(2));
        assert_relative_eq!(a, 1.5);
        assert!((a - sentinel_form).abs() < 1e-4);
    }

    #[test]
    fn closing_on_slow_lead_brakes_hard() {
        let obs = LaneObservation::with_lead(30.0, 19.4, LIMIT, 0.0, 0.0);
        let a = following_accel(&cfg(), LIMIT, &obs);
        // closed form: s* = 2 + 31.1*1.5 + 31.1*11.7/(2 sqrt 3) = 153.69, (s*/30)^2 = 26.2
        assert!(a < -1.0);
        assert_eq!(a, -4.0);
    }

    #[test]
    fn contact_is_emergency_brake() {
        let obs = LaneObservation::with_lead(0.0, 10.0, LIMIT, 0.0, 0.0);
        assert_eq!(following_accel(&cfg(), 5.0, &obs), -4.0);
        let obs = LaneObservation::with_lead(-1.0, 10.0, LIMIT, 0.0, 0.0);
        assert_eq!(following_accel(&cfg(), 0.0, &obs), -4.0);
    }

    #[test]
    fn curvature_caps_desired_speed() {
        let c = cfg();
        assert_relative_eq!(c.desired_speed(31.1, 0.01), (3.0f64 / 0.01).sqrt());
        assert_eq!(c.desired_speed(31.1, -0.001), 31.1);
        assert_eq!(c.desired_speed(31.1, 0.0), 31.1);
    }

    #[test]
    fn free_trajectory_is_constant() {
        let t = generate_trajectory(&cfg(), LIMIT, 0.0, &free(), 15.0, 0.5);
        assert_eq!(t.samples.len(), 30);
        for &(v, a) in &t.samples {
            assert!((v - LIMIT).abs() < 1e-9 && a.abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_length_rounds_up() {
        let t = generate_trajectory(&cfg(), 10.0, 0.0, &free(), 15.2, 0.5);
        assert_eq!(t.samples.len(), 31);
        let t = generate_trajectory(&cfg(), 10.0, 0.0, &free(), 0.1, 0.5);
        assert_eq!(t.samples.len(), 1);
    }

    #[test]
    fn equilibrium_following_is_near_constant() {
        let c = cfg();
        let v = 25.0;
        // desired gap at zero closing speed, minus the free-road term balance
        let gap = c.min_gap + v * c.time_headway;
        let d_eq = gap / (1.0 - (v / LIMIT).powi(4)).sqrt();
        let obs = LaneObservation::with_lead(d_eq, v, LIMIT, 0.0, 0.0);
        let t = generate_trajectory(&c, v, 0.0, &obs, 15.0, 0.5);
        let max_a = t.samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
        assert!(max_a < 0.05, "{max_a}");
    }

    #[test]
    fn stopped_lead_monotone_stop_without_contact() {
        // Braking from 20 m/s at the 4 m/s² limit needs exactly 50 m, so the
        // ego stops with the whole gap consumed rather than short of min_gap.
        let obs = LaneObservation::with_lead(50.0, 0.0, LIMIT, 0.0, 0.0);
        let t = generate_trajectory(&cfg(), 20.0, 0.0, &obs, 15.0, 0.5);
        assert!(t.samples.windows(2).all(|w| w[1].0 <= w[0].0));
        assert!(t.samples.last().unwrap().0 < 1.0);
        let travelled: f64 = t.samples.windows(2).map(|w| (w[0].0 + w[1].0) / 2.0 * 0.5).sum();
        assert!(travelled <= 50.0 + 1e-9, "{travelled}");
        assert!(t.consistency_error() < 1e-9);
    }

    #[test]
    fn gamma_of_free_cruise_is_fuel_only() {
        let c = cfg();
        let t = generate_trajectory(&c, LIMIT, 0.0, &free(), 15.0, 0.5);
        let g = gamma(&c, &t, &free(), &FuelMap::default());
        assert!(g.progress.abs() < 1e-12);
        assert!(g.comfort.abs() < 1e-12);
        assert_relative_eq!(g.total, c.w_fuel * g.fuel, max_relative = 1e-12);
    }

    #[test]
    fn gamma_of_standstill_is_full_shortfall() {
        let t = SpeedTrajectory { dt: 0.5, initial_accel: 0.0, samples: vec![(0.0, 0.0); 30] };
        let g = gamma(&cfg(), &t, &free(), &FuelMap::default());
        assert_relative_eq!(g.progress, 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.fuel, 0.15 * 15.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_comfort_step() {
        let t = SpeedTrajectory { dt: 0.5, initial_accel: 0.0, samples: vec![(10.0, 0.0), (10.0, 1.0)] };
        let g = gamma(&cfg(), &t, &free(), &FuelMap::default());
        assert_relative_eq!(g.comfort, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn grade_scales_fuel() {
        let c = cfg();
        let up = LaneObservation::free(LIMIT, 0.04, 0.0, 400.0);
        let t = generate_trajectory(&c, LIMIT, 0.0, &free(), 15.0, 0.5);
        let flat = gamma(&c, &t, &free(), &FuelMap::default()).fuel;
        let climb = gamma(&c, &t, &up, &FuelMap::default()).fuel;
        assert_relative_eq!(climb, flat * 1.16, max_relative = 1e-12);
        assert_eq!(c.grade_factor(-0.3, 10.0), 0.0);
        assert_eq!(c.grade_factor(0.1, 0.0), 1.0);
    }

    #[test]
    fn single_precision_agrees() {
        let c64 = cfg();
        let c32 = c64.cast::<f32>();
        let o64 = LaneObservation::with_lead(80.0, 20.0, LIMIT, 0.0, 0.0);
        let o32 = LaneObservation::with_lead(80.0f32, 20.0, 31.1, 0.0, 0.0);
        let g64 = lane_gamma(&c64, 30.0, 0.0, &o64, &FuelMap::default());
        let g32 = lane_gamma(&c32, 30.0f32, 0.0, &o32, &FuelMap::default());
        assert_relative_eq!(g64.total, g32.total as f64, max_relative = 1e-4);
    }

    #[test]
    fn free_road_converges_to_desired_speed() {
        let c = cfg();
        for v0 in [0.0, 5.0, 20.0, 40.0] {
            let mut v: f64 = v0;
            let dt = 0.05;
            for _ in 0..(120.0 / dt) as usize {
                let a = following_accel(&c, v, &free()).max(-v / dt);
                v = (v + a * dt).max(0.0);
            }
            assert!((v - LIMIT).abs() / LIMIT < 0.01, "from {v0}: {v}");
        }
    }

    proptest! {
        #[test]
        fn accel_within_clamp(v in 0.0f64..45.0, d in -10.0f64..500.0, vl in 0.0f64..45.0, lead in any::<bool>()) {
            let obs = if lead { LaneObservation::with_lead(d, vl, LIMIT, 0.0, 0.0) } else { free() };
            let a = following_accel(&cfg(), v, &obs);
            prop_assert!((-4.0..=1.5).contains(&a));
        }

        #[test]
        fn trajectory_samples_consistent(v in 0.0f64..40.0, a0 in -4.0f64..1.5, d in 0.5f64..400.0, vl in 0.0f64..40.0) {
            let obs = LaneObservation::with_lead(d, vl, LIMIT, 0.0, 0.0);
            let t = generate_trajectory(&cfg(), v, a0, &obs, 15.0, 0.5);
            prop_assert!(t.samples.iter().all(|s| s.0 >= 0.0));
            prop_assert!(t.consistency_error() < 1e-9);
        }

        #[test]
        fn total_monotone_in_weights(v in 0.0f64..35.0, d in 5.0f64..300.0, vl in 0.0f64..35.0, bump in 0.0f64..10.0, which in 0usize..3) {
            let base = cfg();
            let mut heavier = base;
            match which {
                0 => heavier.w_fuel += bump,
                1 => heavier.w_progress += bump,
                _ => heavier.w_comfort += bump,
            }
            let obs = LaneObservation::with_lead(d, vl, LIMIT, 0.0, 0.0);
            let t = generate_trajectory(&base, v, 0.0, &obs, 15.0, 0.5);
            let g0 = gamma(&base, &t, &obs, &FuelMap::default());
            let g1 = gamma(&heavier, &t, &obs, &FuelMap::default());
            prop_assert!(g1.total >= g0.total);
        }

        #[test]
        fn slower_lead_costs_more(
            v in 0.9f64..1.0,
            d in 20.0f64..100.0,
            slow in 0.4f64..0.75,
            fast in 0.95f64..1.0,
        ) {
            // overtake regime: ego near cruise closing on a slow lead, versus a lead near the limit
            let (v, slow, fast) = (v * LIMIT, slow * LIMIT, fast * LIMIT);
            let c = cfg();
            let map = FuelMap::default();
            let g_slow = lane_gamma(&c, v, 0.0, &LaneObservation::with_lead(d, slow, LIMIT, 0.0, 0.0), &map);
            let g_fast = lane_gamma(&c, v, 0.0, &LaneObservation::with_lead(d, fast, LIMIT, 0.0, 0.0), &map);
            prop_assert!(g_slow.total >= g_fast.total, "slow {:?} fast {:?}", g_slow, g_fast);
        }
    }
}
