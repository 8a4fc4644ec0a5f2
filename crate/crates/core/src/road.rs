//! Multi-lane highway geometry.
//!
//! A route is an ordered list of contiguous segments measured by arclength
//! from the route start. Lanes are indexed from the right: lane 0 is the
//! rightmost lane and indices grow leftward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default bound on `|curvature|` accepted by [`RoadNetwork::new`], in 1/m.
pub const DEFAULT_MAX_CURVATURE: f64 = 0.02;

/// Grades at or beyond this magnitude are rejected.
pub const MAX_ABS_GRADE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoadError {
    #[error("road network has no segments")]
    Empty,
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("position {s} m is outside the route [0, {total}]")]
    OutOfRange { s: f64, total: f64 },
    #[error("lane {lane} does not exist at {s} m ({lane_count} lanes)")]
    NoSuchLane { lane: usize, s: f64, lane_count: usize },
}

/// A stretch of road with constant attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct RoadSegment<T> {
    /// Meters.
    pub length: T,
    pub lanes: usize,
    /// Meters per second.
    pub speed_limit: T,
    /// Rise over run.
    #[serde(default = "zero")]
    pub grade: T,
    /// 1/m, signed.
    #[serde(default = "zero")]
    pub curvature: T,
}

fn zero<T: Default>() -> T {
    T::default()
}

impl<T: Scalar> RoadSegment<T> {
    pub fn straight(length: T, lanes: usize, speed_limit: T) -> Self {
        Self { length, lanes, speed_limit, grade: T::zero(), curvature: T::zero() }
    }

    pub fn cast<U: Scalar>(&self) -> RoadSegment<U> {
        RoadSegment {
            length: U::of(self.length.as_f64()),
            lanes: self.lanes,
            speed_limit: U::of(self.speed_limit.as_f64()),
            grade: U::of(self.grade.as_f64()),
            curvature: U::of(self.curvature.as_f64()),
        }
    }

    /// Every out-of-range field as `(field, reason)`.
    pub fn violations(&self, max_curvature: T) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.length > T::zero()) {
            out.push(("length", format!("must be positive, got {}", self.length)));
        }
        if self.lanes == 0 {
            out.push(("lanes", "must be at least 1".into()));
        }
        if !(self.speed_limit > T::zero()) {
            out.push(("speed_limit", format!("must be positive, got {}", self.speed_limit)));
        }
        if !(self.grade.abs() < T::of(MAX_ABS_GRADE)) {
            out.push(("grade", format!("|grade| must be below {MAX_ABS_GRADE}, got {}", self.grade)));
        }
        if !(self.curvature.abs() <= max_curvature) {
            out.push(("curvature", format!("|curvature| must be at most {max_curvature}, got {}", self.curvature)));
        }
        out
    }

    fn check(&self, max_curvature: T) -> Result<(), String> {
        match self.violations(max_curvature).into_iter().next() {
            Some((field, reason)) => Err(format!("{field} {reason}")),
            None => Ok(()),
        }
    }
}

/// Attributes in effect at a position along the route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadAttributes<T> {
    pub speed_limit: T,
    pub grade: T,
    pub curvature: T,
    pub lane_count: usize,
}

/// A longitudinal position paired with a lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePosition<T> {
    pub arclength: T,
    pub lane_index: usize,
}

/// Adjacent lanes that exist at a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Neighbors {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

/// An immutable single-route highway.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork<T> {
    segments: Vec<RoadSegment<T>>,
    /// Arclength at which each segment starts.
    starts: Vec<T>,
    total_length: T,
}

impl<T: Scalar> RoadNetwork<T> {
    pub fn new(segments: Vec<RoadSegment<T>>) -> Result<Self, RoadError> {
        Self::with_max_curvature(segments, T::of(DEFAULT_MAX_CURVATURE))
    }

    pub fn with_max_curvature(
        segments: Vec<RoadSegment<T>>,
        max_curvature: T,
    ) -> Result<Self, RoadError> {
        if segments.is_empty() {
            return Err(RoadError::Empty);
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = T::zero();
        for (index, seg) in segments.iter().enumerate() {
            seg.check(max_curvature)
                .map_err(|reason| RoadError::InvalidSegment { index, reason })?;
            starts.push(acc);
            acc = acc + seg.length;
        }
        Ok(Self { segments, starts, total_length: acc })
    }

    /// A single straight segment.
    pub fn straight(length: T, lanes: usize, speed_limit: T) -> Result<Self, RoadError> {
        Self::new(vec![RoadSegment::straight(length, lanes, speed_limit)])
    }

    pub fn segments(&self) -> &[RoadSegment<T>] {
        &self.segments
    }

    pub fn total_length(&self) -> T {
        self.total_length
    }

    pub fn max_lanes(&self) -> usize {
        self.segments.iter().map(|s| s.lanes).max().unwrap_or(0)
    }

    pub fn cast<U: Scalar>(&self) -> RoadNetwork<U> {
        RoadNetwork {
            segments: self.segments.iter().map(RoadSegment::cast).collect(),
            starts: self.starts.iter().map(|s| U::of(s.as_f64())).collect(),
            total_length: U::of(self.total_length.as_f64()),
        }
    }

    fn check_range(&self, s: T) -> Result<(), RoadError> {
        if s >= T::zero() && s <= self.total_length {
            Ok(())
        } else {
            Err(RoadError::OutOfRange { s: s.as_f64(), total: self.total_length.as_f64() })
        }
    }

    /// Index of the segment containing `s`. A boundary belongs to the
    /// downstream segment; the route end belongs to the last one.
    pub fn segment_index(&self, s: T) -> Result<usize, RoadError> {
        self.check_range(s)?;
        let after = self.starts.partition_point(|&start| start <= s);
        Ok(after.saturating_sub(1))
    }

    pub fn query(&self, s: T) -> Result<RoadAttributes<T>, RoadError> {
        let seg = &self.segments[self.segment_index(s)?];
        Ok(RoadAttributes {
            speed_limit: seg.speed_limit,
            grade: seg.grade,
            curvature: seg.curvature,
            lane_count: seg.lanes,
        })
    }

    /// Like [`query`](Self::query) but clamps `s` onto the route. Used for
    /// vehicles that have driven past the end.
    pub fn query_clamped(&self, s: T) -> RoadAttributes<T> {
        let s = s.max(T::zero()).min(self.total_length);
        self.query(s).expect("clamped position is in range")
    }

    /// Remaining distance to the end of the route.
    pub fn distance_to_navigation_end(&self, s: T) -> Result<T, RoadError> {
        self.check_range(s)?;
        Ok(self.total_length - s)
    }

    pub fn check_lane(&self, p: LanePosition<T>) -> Result<RoadAttributes<T>, RoadError> {
        let attrs = self.query(p.arclength)?;
        if p.lane_index >= attrs.lane_count {
            return Err(RoadError::NoSuchLane {
                lane: p.lane_index,
                s: p.arclength.as_f64(),
                lane_count: attrs.lane_count,
            });
        }
        Ok(attrs)
    }

    pub fn neighbor_lanes(&self, p: LanePosition<T>) -> Result<Neighbors, RoadError> {
        let attrs = self.check_lane(p)?;
        Ok(Neighbors {
            left: (p.lane_index + 1 < attrs.lane_count).then_some(p.lane_index + 1),
            right: p.lane_index.checked_sub(1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_segments() -> RoadNetwork<f64> {
        RoadNetwork::new(vec![
            RoadSegment::straight(500.0, 3, 25.0),
            RoadSegment::straight(500.0, 3, 31.1),
        ])
        .unwrap()
    }

    #[test]
    fn query_single_segment() {
        let net = RoadNetwork::straight(1600.0, 3, 31.1).unwrap();
        let a = net.query(800.0).unwrap();
        assert_eq!((a.speed_limit, a.grade, a.curvature, a.lane_count), (31.1, 0.0, 0.0, 3));
        assert_eq!(net.query(0.0).unwrap().speed_limit, 31.1);
    }

    #[test]
    fn boundary_takes_downstream_segment() {
        let net = two_segments();
        assert_eq!(net.query(500.0).unwrap().speed_limit, 31.1);
        assert_eq!(net.query(499.999).unwrap().speed_limit, 25.0);
        assert_eq!(net.query(1000.0).unwrap().speed_limit, 31.1);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let net = two_segments();
        assert!(matches!(net.query(-0.1), Err(RoadError::OutOfRange { .. })));
        assert!(matches!(net.query(1000.1), Err(RoadError::OutOfRange { .. })));
        assert!(net.distance_to_navigation_end(2000.0).is_err());
    }

    #[test]
    fn navigation_end_distance() {
        let net = RoadNetwork::straight(1600.0, 2, 31.1).unwrap();
        assert_eq!(net.distance_to_navigation_end(1000.0).unwrap(), 600.0);
        assert_eq!(net.distance_to_navigation_end(1600.0).unwrap(), 0.0);
        let long = RoadNetwork::straight(12000.0, 2, 31.1).unwrap();
        assert_eq!(long.distance_to_navigation_end(0.0).unwrap(), 12000.0);
    }

    #[test]
    fn neighbors() {
        let three = RoadNetwork::straight(100.0, 3, 30.0).unwrap();
        let at = |lane_index| LanePosition { arclength: 10.0, lane_index };
        assert_eq!(three.neighbor_lanes(at(1)).unwrap(), Neighbors { left: Some(2), right: Some(0) });
        assert_eq!(three.neighbor_lanes(at(2)).unwrap(), Neighbors { left: None, right: Some(1) });
        let one = RoadNetwork::straight(100.0, 1, 30.0).unwrap();
        assert_eq!(one.neighbor_lanes(at(0)).unwrap(), Neighbors::default());
        assert!(matches!(three.neighbor_lanes(at(3)), Err(RoadError::NoSuchLane { .. })));
    }

    #[test]
    fn rejects_bad_segments() {
        let bad = |seg: RoadSegment<f64>| RoadNetwork::new(vec![seg]).unwrap_err();
        assert!(matches!(bad(RoadSegment::straight(0.0, 2, 30.0)), RoadError::InvalidSegment { index: 0, .. }));
        assert!(matches!(bad(RoadSegment::straight(10.0, 0, 30.0)), RoadError::InvalidSegment { .. }));
        assert!(matches!(bad(RoadSegment::straight(10.0, 2, -1.0)), RoadError::InvalidSegment { .. }));
        let steep = RoadSegment { grade: 0.2, ..RoadSegment::straight(10.0, 2, 30.0) };
        assert!(matches!(bad(steep), RoadError::InvalidSegment { .. }));
        let tight = RoadSegment { curvature: 0.5, ..RoadSegment::straight(10.0, 2, 30.0) };
        assert!(matches!(bad(tight), RoadError::InvalidSegment { .. }));
        assert_eq!(RoadNetwork::<f64>::new(vec![]).unwrap_err(), RoadError::Empty);
    }

    #[test]
    fn works_in_single_precision() {
        let net = RoadNetwork::<f32>::straight(1600.0, 3, 31.1).unwrap();
        assert_eq!(net.query(800.0).unwrap().lane_count, 3);
        assert_eq!(net.cast::<f64>().total_length(), 1600.0);
    }

    fn arb_segments() -> impl Strategy<Value = Vec<(f64, usize, f64)>> {
        prop::collection::vec((1.0f64..500.0, 1usize..5, 5.0f64..40.0), 1..12)
    }

    proptest! {
        #[test]
        fn query_matches_linear_scan(segs in arb_segments(), frac in 0.0f64..=1.0) {
            let segments: Vec<_> = segs.iter().map(|&(l, n, v)| RoadSegment::straight(l, n, v)).collect();
            let net = RoadNetwork::new(segments.clone()).unwrap();
            let s = frac * net.total_length();
            // brute force: last segment whose start is <= s
            let mut start = 0.0;
            let mut expected = 0;
            for (i, seg) in segments.iter().enumerate() {
                if start <= s { expected = i; }
                start += seg.length;
            }
            prop_assert_eq!(net.segment_index(s).unwrap(), expected);
            prop_assert_eq!(net.query(s).unwrap().speed_limit, segments[expected].speed_limit);
        }

        #[test]
        fn navigation_distance_strictly_decreasing(len in 1.0f64..20000.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let net = RoadNetwork::straight(len, 2, 30.0).unwrap();
            let (lo, hi) = if a < b { (a * len, b * len) } else { (b * len, a * len) };
            prop_assume!(lo < hi);
            prop_assert!(net.distance_to_navigation_end(lo).unwrap() > net.distance_to_navigation_end(hi).unwrap());
            prop_assert_eq!(net.distance_to_navigation_end(len).unwrap(), 0.0);
        }
    }
}
