//! Vehicle state, longitudinal and lateral kinematics, and the fuel-rate map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clamp, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("fuel table: {0}")]
    FuelTable(String),
    #[error("fuel polynomial: {0}")]
    FuelPolynomial(String),
    #[error("time {t} s is outside the lane-change window [{start}, {end}]")]
    OutsideManeuver { t: f64, start: f64, end: f64 },
    #[error("invalid lane change: {0}")]
    InvalidLaneChange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Controller {
    MultiCruise,
    LaneFollowing,
    AmbientTraffic,
}

impl std::fmt::Display for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Controller::MultiCruise => "multi-cruise",
            Controller::LaneFollowing => "lane-following",
            Controller::AmbientTraffic => "ambient-traffic",
        })
    }
}

impl std::str::FromStr for Controller {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "multi-cruise" | "multicruise" => Ok(Controller::MultiCruise),
            "lane-following" | "lanefollowing" | "baseline" => Ok(Controller::LaneFollowing),
            "ambient-traffic" | "ambient" => Ok(Controller::AmbientTraffic),
            other => Err(format!("unknown controller `{other}`")),
        }
    }
}

/// Kinematic state of one vehicle. `s` is the front bumper arclength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState<T> {
    pub id: VehicleId,
    pub s: T,
    pub lane: usize,
    /// Meters from the center of `lane`, positive to the left.
    pub lateral_offset: T,
    pub v: T,
    pub a: T,
    /// Radians relative to the road tangent.
    pub yaw: T,
    pub controller: Controller,
}

impl<T: Scalar> VehicleState<T> {
    pub fn new(id: VehicleId, s: T, lane: usize, v: T, controller: Controller) -> Self {
        Self {
            id,
            s,
            lane,
            lateral_offset: T::zero(),
            v,
            a: T::zero(),
            yaw: T::zero(),
            controller,
        }
    }
}

/// Advance one step with a clamped acceleration command.
///
/// Speed never goes negative: when the command would reverse the vehicle the
/// applied acceleration is reduced so that it stops exactly at the end of the
/// step.
pub fn step_longitudinal<T: Scalar>(
    state: &VehicleState<T>,
    a_cmd: T,
    dt: T,
    a_max_abs: T,
) -> VehicleState<T> {
    debug_assert!(dt > T::zero());
    let a = clamp(a_cmd, -a_max_abs, a_max_abs);
    let v_next = (state.v + a * dt).max(T::zero());
    let two = T::of(2.0);
    VehicleState {
        s: state.s + (state.v + v_next) / two * dt,
        v: v_next,
        a,
        ..*state
    }
}

/// Cubic-in-speed fuel model with an acceleration power term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFuel<T> {
    pub c0: T,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
    pub idle_rate: T,
}

impl<T: Scalar> Default for PolynomialFuel<T> {
    fn default() -> Self {
        Self {
            c0: T::of(0.15),
            c1: T::of(0.02),
            c2: T::zero(),
            c3: T::of(1.1e-5),
            c4: T::of(0.08),
            idle_rate: T::of(0.15),
        }
    }
}

impl<T: Scalar> PolynomialFuel<T> {
    pub fn rate(&self, v: T, a: T) -> T {
        let v = v.max(T::zero());
        let power = self.c4 * a.max(T::zero()) * v;
        let cruise = self.c0 + v * (self.c1 + v * (self.c2 + v * self.c3));
        (cruise + power).max(self.idle_rate)
    }

    fn validate(&self) -> Result<(), VehicleError> {
        let fields = [self.c0, self.c1, self.c2, self.c3, self.c4, self.idle_rate];
        if fields.iter().any(|c| !c.is_finite()) {
            return Err(VehicleError::FuelPolynomial("coefficients must be finite".into()));
        }
        if self.idle_rate < T::zero() {
            return Err(VehicleError::FuelPolynomial("idle_rate must be nonnegative".into()));
        }
        if self.c4 < T::zero() {
            return Err(VehicleError::FuelPolynomial("c4 must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Rectangular (speed, acceleration) grid of fuel rates, bilinearly
/// interpolated and clamped to the grid edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelTable<T> {
    speeds: Vec<T>,
    accels: Vec<T>,
    /// Row-major: `rates[i * accels.len() + j]` is the rate at `(speeds[i], accels[j])`.
    rates: Vec<T>,
}

fn strictly_increasing<T: Scalar>(axis: &[T]) -> bool {
    axis.windows(2).all(|w| w[0] < w[1])
}

impl<T: Scalar> FuelTable<T> {
    pub fn new(speeds: Vec<T>, accels: Vec<T>, rates: Vec<Vec<T>>) -> Result<Self, VehicleError> {
        let err = |m: &str| Err(VehicleError::FuelTable(m.to_string()));
        if speeds.is_empty() || accels.is_empty() {
            return err("both axes need at least one value");
        }
        if !strictly_increasing(&speeds) || !strictly_increasing(&accels) {
            return err("axes must be strictly increasing");
        }
        if rates.len() != speeds.len() || rates.iter().any(|row| row.len() != accels.len()) {
            return err("body must have one row per speed and one column per acceleration");
        }
        let rates: Vec<T> = rates.into_iter().flatten().collect();
        if rates.iter().any(|r| !r.is_finite() || *r < T::zero()) {
            return err("rates must be finite and nonnegative");
        }
        Ok(Self { speeds, accels, rates })
    }

    /// First row is the acceleration axis (leading cell ignored), first
    /// column is the speed axis, the body holds grams per second.
    pub fn from_csv_str(text: &str) -> Result<Self, VehicleError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let parse = |cell: &str| -> Result<T, VehicleError> {
            cell.parse::<f64>()
                .map(T::of)
                .map_err(|_| VehicleError::FuelTable(format!("not a number: `{cell}`")))
        };
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or_else(|| VehicleError::FuelTable("empty CSV".into()))?
            .map_err(|e| VehicleError::FuelTable(e.to_string()))?;
        let accels = header.iter().skip(1).map(parse).collect::<Result<Vec<_>, _>>()?;
        let mut speeds = Vec::new();
        let mut rates = Vec::new();
        for record in records {
            let record = record.map_err(|e| VehicleError::FuelTable(e.to_string()))?;
            let mut cells = record.iter();
            let Some(first) = cells.next() else { continue };
            speeds.push(parse(first)?);
            rates.push(cells.map(parse).collect::<Result<Vec<_>, _>>()?);
        }
        Self::new(speeds, accels, rates)
    }

    pub fn speeds(&self) -> &[T] {
        &self.speeds
    }

    pub fn accels(&self) -> &[T] {
        &self.accels
    }

    /// Grid body, one row per speed.
    pub fn rows(&self) -> Vec<Vec<T>> {
        self.rates.chunks(self.accels.len()).map(<[T]>::to_vec).collect()
    }

    fn at(&self, i: usize, j: usize) -> T {
        self.rates[i * self.accels.len() + j]
    }

    pub fn rate(&self, v: T, a: T) -> T {
        let (i0, i1, tv) = bracket(&self.speeds, v);
        let (j0, j1, ta) = bracket(&self.accels, a);
        let one = T::one();
        let low = self.at(i0, j0) * (one - ta) + self.at(i0, j1) * ta;
        let high = self.at(i1, j0) * (one - ta) + self.at(i1, j1) * ta;
        low * (one - tv) + high * tv
    }

    pub fn cast<U: Scalar>(&self) -> FuelTable<U> {
        let conv = |xs: &[T]| xs.iter().map(|x| U::of(x.as_f64())).collect();
        FuelTable { speeds: conv(&self.speeds), accels: conv(&self.accels), rates: conv(&self.rates) }
    }
}

/// Lower and upper grid indices around `x` and the interpolation weight,
/// clamped to the axis ends.
fn bracket<T: Scalar>(axis: &[T], x: T) -> (usize, usize, T) {
    let last = axis.len() - 1;
    if x <= axis[0] {
        return (0, 0, T::zero());
    }
    if x >= axis[last] {
        return (last, last, T::zero());
    }
    let hi = axis.partition_point(|&g| g <= x);
    let lo = hi - 1;
    (lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo]))
}

/// Vehicle-specific map from (speed, acceleration) to fuel rate in g/s.
#[derive(Debug, Clone, PartialEq)]
pub enum FuelMap<T> {
    Polynomial(PolynomialFuel<T>),
    Table(FuelTable<T>),
}

impl<T: Scalar> Default for FuelMap<T> {
    fn default() -> Self {
        FuelMap::Polynomial(PolynomialFuel::default())
    }
}

impl<T: Scalar> FuelMap<T> {
    pub fn polynomial(p: PolynomialFuel<T>) -> Result<Self, VehicleError> {
        p.validate()?;
        Ok(FuelMap::Polynomial(p))
    }

    /// Fuel rate in g/s. Speed must be nonnegative.
    pub fn fuel_rate(&self, v: T, a: T) -> T {
        match self {
            FuelMap::Polynomial(p) => p.rate(v, a),
            FuelMap::Table(t) => t.rate(v, a),
        }
    }

    pub fn cast<U: Scalar>(&self) -> FuelMap<U> {
        match self {
            FuelMap::Polynomial(p) => FuelMap::Polynomial(PolynomialFuel {
                c0: U::of(p.c0.as_f64()),
                c1: U::of(p.c1.as_f64()),
                c2: U::of(p.c2.as_f64()),
                c3: U::of(p.c3.as_f64()),
                c4: U::of(p.c4.as_f64()),
                idle_rate: U::of(p.idle_rate.as_f64()),
            }),
            FuelMap::Table(t) => FuelMap::Table(t.cast()),
        }
    }
}

/// Trapezoidal integral of uniformly sampled rates.
pub fn integrate_rates<T: Scalar>(rates: &[T], dt: T) -> T {
    let half = T::of(0.5);
    rates.windows(2).map(|w| (w[0] + w[1]) * half * dt).sum()
}

/// Fuel consumed over a uniformly sampled `(v, a)` trace, in grams.
pub fn integrate_fuel<T: Scalar>(map: &FuelMap<T>, samples: &[(T, T)], dt: T) -> T {
    let rates: Vec<T> = samples.iter().map(|&(v, a)| map.fuel_rate(v, a)).collect();
    integrate_rates(&rates, dt)
}

/// One adjacent-lane maneuver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeMotion<T> {
    pub start_time: T,
    pub duration: T,
    pub from_lane: usize,
    pub to_lane: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralSample<T> {
    /// Displacement from the center of `from_lane`, signed toward `to_lane`.
    pub offset: T,
    pub lateral_velocity: T,
    pub lateral_accel: T,
    pub yaw: T,
}

impl<T: Scalar> LaneChangeMotion<T> {
    pub fn new(start_time: T, duration: T, from_lane: usize, to_lane: usize) -> Result<Self, VehicleError> {
        if !(duration > T::zero()) {
            return Err(VehicleError::InvalidLaneChange("duration must be positive".into()));
        }
        if from_lane.abs_diff(to_lane) != 1 {
            return Err(VehicleError::InvalidLaneChange(format!(
                "lanes {from_lane} and {to_lane} are not adjacent"
            )));
        }
        Ok(Self { start_time, duration, from_lane, to_lane })
    }

    pub fn end_time(&self) -> T {
        self.start_time + self.duration
    }

    /// +1 for a change to the left, -1 to the right.
    pub fn direction(&self) -> T {
        if self.to_lane > self.from_lane { T::one() } else { -T::one() }
    }

    /// Normalized progress through the maneuver, clamped to `[0, 1]`.
    pub fn progress(&self, t: T) -> T {
        clamp((t - self.start_time) / self.duration, T::zero(), T::one())
    }

    /// Minimum-jerk lateral profile at time `t`.
    ///
    /// Displacement follows `w (10 τ³ − 15 τ⁴ + 6 τ⁵)` with `τ` the
    /// normalized time; yaw is the heading of the combined velocity, with
    /// the longitudinal speed floored at `v_floor`.
    pub fn lateral_profile(&self, t: T, lane_width: T, v: T, v_floor: T) -> Result<LateralSample<T>, VehicleError> {
        if t < self.start_time || t > self.end_time() {
            return Err(VehicleError::OutsideManeuver {
                t: t.as_f64(),
                start: self.start_time.as_f64(),
                end: self.end_time().as_f64(),
            });
        }
        let tau = self.progress(t);
        let w = lane_width * self.direction();
        let dur = self.duration;
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let k = |x: f64| T::of(x);
        let offset = w * t3 * (k(10.0) - k(15.0) * tau + k(6.0) * t2);
        let lateral_velocity = w / dur * t2 * (k(30.0) - k(60.0) * tau + k(30.0) * t2);
        let lateral_accel = w / (dur * dur) * tau * (k(60.0) - k(180.0) * tau + k(120.0) * t2);
        let yaw = (lateral_velocity / v.max(v_floor)).atan();
        Ok(LateralSample { offset, lateral_velocity, lateral_accel, yaw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ego(v: f64) -> VehicleState<f64> {
        VehicleState::new(VehicleId(0), 0.0, 1, v, Controller::MultiCruise)
    }

    #[test]
    fn default_polynomial_values() {
        let map = FuelMap::<f64>::default();
        assert_relative_eq!(map.fuel_rate(0.0, 0.0), 0.15, epsilon = 1e-12);
        assert_relative_eq!(map.fuel_rate(30.0, 0.0), 1.047, epsilon = 1e-12);
        assert_relative_eq!(map.fuel_rate(30.0, -2.0), 1.047, epsilon = 1e-12);
        assert_relative_eq!(map.fuel_rate(30.0, 1.0), 1.047 + 0.08 * 30.0, epsilon = 1e-12);
    }

    #[test]
    fn longitudinal_examples() {
        let s = step_longitudinal(&ego(10.0), 0.0, 0.1, 4.0);
        assert_relative_eq!(s.v, 10.0);
        assert_relative_eq!(s.s, 1.0, epsilon = 1e-12);

        let s = step_longitudinal(&ego(0.1), -4.0, 0.1, 4.0);
        assert_eq!(s.v, 0.0);
        assert_relative_eq!(s.s, 0.005, epsilon = 1e-12);

        let s = step_longitudinal(&ego(10.0), 100.0, 0.1, 4.0);
        assert_eq!(s.a, 4.0);
        assert_relative_eq!(s.v, 10.4, epsilon = 1e-12);
    }

    #[test]
    fn lateral_profile_boundaries_and_midpoint() {
        let m = LaneChangeMotion::new(2.0, 4.0, 1, 2).unwrap();
        let at = |t| m.lateral_profile(t, 3.5, 30.0, 1.0).unwrap();
        let start = at(2.0);
        assert_eq!((start.offset, start.yaw, start.lateral_velocity), (0.0, 0.0, 0.0));
        let end = at(6.0);
        assert_relative_eq!(end.offset, 3.5, epsilon = 1e-12);
        assert_relative_eq!(end.yaw, 0.0, epsilon = 1e-12);
        assert_relative_eq!(at(4.0).offset, 1.75, epsilon = 1e-12);
        assert!(at(4.0).yaw > 0.0);

        let right = LaneChangeMotion::new(0.0, 4.0, 1, 0).unwrap();
        let mid = right.lateral_profile(2.0, 3.5, 30.0, 1.0).unwrap();
        assert_relative_eq!(mid.offset, -1.75, epsilon = 1e-12);
        assert!(mid.yaw < 0.0);

        assert!(matches!(m.lateral_profile(1.9, 3.5, 30.0, 1.0), Err(VehicleError::OutsideManeuver { .. })));
        assert!(m.lateral_profile(6.1, 3.5, 30.0, 1.0).is_err());
    }

    #[test]
    fn lane_change_must_be_adjacent() {
        assert!(LaneChangeMotion::new(0.0, 4.0, 0, 2).is_err());
        assert!(LaneChangeMotion::new(0.0, 0.0, 0, 1).is_err());
    }

    #[test]
    fn peak_lateral_accel_matches_closed_form() {
        // |y''| peaks at tau = (3 ± sqrt 3) / 6 with value 10 / sqrt(3) * w / T^2.
        for &(w, dur) in &[(3.5, 4.0), (3.0, 2.5), (3.75, 6.0)] {
            let m = LaneChangeMotion::new(0.0, dur, 0, 1).unwrap();
            let peak = (0..=20_000)
                .map(|i| dur * i as f64 / 20_000.0)
                .map(|t| m.lateral_profile(t, w, 25.0, 1.0).unwrap().lateral_accel.abs())
                .fold(0.0, f64::max);
            assert_relative_eq!(peak, 10.0 / 3f64.sqrt() * w / (dur * dur), max_relative = 1e-6);
        }
    }

    #[test]
    fn lateral_jerk_is_continuous() {
        let m = LaneChangeMotion::new(0.0, 4.0, 0, 1).unwrap();
        let h = 1e-3;
        let acc: Vec<f64> = (0..=4000).map(|i| m.lateral_profile(i as f64 * h, 3.5, 25.0, 1.0).unwrap().lateral_accel).collect();
        let jerk: Vec<f64> = acc.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let max_step = jerk.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        // A jerk discontinuity would show up as an O(1) step; smooth jerk changes by O(h).
        assert!(max_step < 0.05, "jerk step {max_step}");
    }

    #[test]
    fn integrate_constant_cruise() {
        let map = FuelMap::<f64>::default();
        let samples = vec![(30.0, 0.0); 1001];
        assert_relative_eq!(integrate_fuel(&map, &samples, 0.1), 104.7, max_relative = 1e-12);
        assert_eq!(integrate_fuel(&map, &[], 0.1), 0.0);
    }

    /// Midpoint-rule integral over a dense grid, independent of the trapezoid path.
    fn dense_oracle(f: impl Fn(f64) -> f64, t_end: f64, h: f64) -> f64 {
        let n = (t_end / h).round() as usize;
        (0..n).map(|i| f((i as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn integrate_ramp_against_dense_oracle() {
        let map = FuelMap::<f64>::default();
        // 0 -> 30 m/s over 10 s at 3 m/s^2, sampled every 0.05 s
        let dt = 0.05;
        let samples: Vec<(f64, f64)> = (0..=200).map(|k| (3.0 * k as f64 * dt, 3.0)).collect();
        let got = integrate_fuel(&map, &samples, dt);
        let oracle = dense_oracle(|t| map.fuel_rate(3.0 * t, 3.0), 10.0, 1e-3);
        assert!(((got - oracle) / oracle).abs() < 1e-3, "{got} vs {oracle}");
    }

    #[test]
    fn table_bilinear_and_clamped() {
        let t = FuelTable::new(vec![0.0, 10.0], vec![-1.0, 1.0], vec![vec![0.1, 0.3], vec![0.5, 1.5]]).unwrap();
        assert_relative_eq!(t.rate(5.0, 0.0), (0.1 + 0.3 + 0.5 + 1.5) / 4.0, epsilon = 1e-12);
        assert_relative_eq!(t.rate(0.0, -1.0), 0.1);
        assert_relative_eq!(t.rate(50.0, 9.0), 1.5);
        assert_relative_eq!(t.rate(-3.0, -9.0), 0.1);
        assert_relative_eq!(t.rate(10.0, 0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn table_from_csv() {
        let text = "v\\a, -1, 0, 1\n0, 0.1, 0.1, 0.2\n20, 0.4, 0.6, 1.2\n30, 0.5, 1.0, 2.0\n";
        let t = FuelTable::<f64>::from_csv_str(text).unwrap();
        assert_eq!(t.speeds(), &[0.0, 20.0, 30.0]);
        assert_eq!(t.accels(), &[-1.0, 0.0, 1.0]);
        assert_relative_eq!(t.rate(25.0, 0.0), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn malformed_tables_fail_at_construction() {
        assert!(FuelTable::new(vec![0.0, 0.0], vec![0.0], vec![vec![0.1], vec![0.2]]).is_err());
        assert!(FuelTable::new(vec![0.0, 1.0], vec![1.0, 0.0], vec![vec![0.1, 0.1], vec![0.2, 0.2]]).is_err());
        assert!(FuelTable::new(vec![0.0], vec![0.0], vec![vec![-0.1]]).is_err());
        assert!(FuelTable::<f64>::from_csv_str("x,0,1\n0,0.1\n").is_err());
        assert!(FuelTable::<f64>::from_csv_str("x,0,1\n0,0.1,abc\n").is_err());
    }

    proptest! {
        #[test]
        fn polynomial_bounded_below_and_monotone_in_accel(v in 0.0f64..60.0, a in -5.0f64..5.0, da in 0.0f64..3.0) {
            let map = FuelMap::<f64>::default();
            let r = map.fuel_rate(v, a);
            prop_assert!(r >= 0.15);
            prop_assert!(map.fuel_rate(v, a + da) >= r);
        }

        #[test]
        fn step_never_reverses(v in 0.0f64..50.0, a in -100.0f64..100.0, dt in 1e-3f64..1.0) {
            let next = step_longitudinal(&ego(v), a, dt, 4.0);
            prop_assert!(next.v >= 0.0);
            prop_assert!(next.s - 0.0 <= v * dt + 0.5 * 4.0 * dt * dt + 1e-12);
            prop_assert!(next.s >= 0.0);
        }
    }
}
