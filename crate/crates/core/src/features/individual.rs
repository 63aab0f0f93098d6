//! Per-agent features: kinematics from positional differencing plus
//! map-contextual metrics (waiting period, speed-limit excess, lane
//! following).

use super::{step_speeds, PreparedTrack};
use crate::geometry::{point_polygon_distance, segment_intersection, wrap_angle, Point};
use crate::lanes::{LaneIndex, LaneSequence};
use crate::scenario::{AgentState, Geometry, MapFeature, MapFeatureKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndividualParams {
    /// Speeds below this count as waiting, m/s.
    pub wp_speed_threshold: f64,
    /// Waiting only counts within this distance of a conflict region, m.
    pub wp_radius: f64,
    /// Lane following requires |d| at most this, m.
    pub follow_max_offset: f64,
    /// Lane following requires heading error at most this, rad.
    pub follow_max_heading: f64,
    /// Lane endpoints closer than this are treated as a shared point, m.
    pub junction_tolerance: f64,
}

impl Default for IndividualParams {
    fn default() -> Self {
        Self {
            wp_speed_threshold: 0.5,
            wp_radius: 5.0,
            follow_max_offset: 2.0,
            follow_max_heading: std::f64::consts::FRAC_PI_4,
            junction_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndividualFeatures {
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_jerk: f64,
    pub waiting_period: f64,
    pub speed_limit_excess: f64,
    pub lane_following_fraction: f64,
    pub anomaly: f64,
}

impl IndividualFeatures {
    pub const NAMES: [&'static str; 7] = [
        "max_speed",
        "max_accel",
        "max_jerk",
        "waiting_period",
        "speed_limit_excess",
        "lane_following_fraction",
        "anomaly",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.max_speed,
            self.max_accel,
            self.max_jerk,
            self.waiting_period,
            self.speed_limit_excess,
            self.lane_following_fraction,
            self.anomaly,
        ]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            max_speed: v[0],
            max_accel: v[1],
            max_jerk: v[2],
            waiting_period: v[3],
            speed_limit_excess: v[4],
            lane_following_fraction: v[5],
            anomaly: v[6],
        }
    }
}

/// Per-timestep derived kinematics; `None` marks entries whose stencil
/// touches an invalid state.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicProfile {
    /// `speed[t]` uses states t−1, t.
    pub speed: Vec<Option<f64>>,
    /// `accel[t]` uses speeds t−1, t.
    pub accel: Vec<Option<f64>>,
    /// `jerk[t]` uses accels t−1, t.
    pub jerk: Vec<Option<f64>>,
}

fn backward_diff(v: &[Option<f64>], dt: f64) -> Vec<Option<f64>> {
    (0..v.len())
        .map(|t| match (t.checked_sub(1).and_then(|p| v[p]), v[t]) {
            (Some(a), Some(b)) => Some((b - a) / dt),
            _ => None,
        })
        .collect()
}

pub fn kinematic_profile(states: &[AgentState], dt: f64) -> KinematicProfile {
    let speed: Vec<Option<f64>> = (0..states.len())
        .map(|t| {
            if t == 0 || !states[t].valid || !states[t - 1].valid {
                None
            } else {
                Some(states[t].position().dist(states[t - 1].position()) / dt)
            }
        })
        .collect();
    let accel = backward_diff(&speed, dt);
    let jerk = backward_diff(&accel, dt);
    KinematicProfile { speed, accel, jerk }
}

fn max_abs(v: &[Option<f64>]) -> f64 {
    v.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Regions where waiting is meaningful: crosswalks, stop signs, and lane
/// points shared by two or more lanes (merges, splits, crossings).
#[derive(Debug, Clone, Default)]
pub struct ConflictRegions {
    pub polygons: Vec<Vec<Point>>,
    pub points: Vec<Point>,
}

impl ConflictRegions {
    pub fn new(map_features: &[MapFeature], lanes: &LaneIndex, junction_tolerance: f64) -> Self {
        let mut polygons = Vec::new();
        let mut points = Vec::new();
        for f in map_features {
            match (&f.kind, &f.geometry) {
                (MapFeatureKind::Crosswalk, Geometry::Polygon(p)) => polygons.push(p.clone()),
                (MapFeatureKind::StopSign, g) => match g {
                    Geometry::Point(p) => points.push(*p),
                    Geometry::Polygon(p) => polygons.push(p.clone()),
                },
                _ => {}
            }
        }
        let ls = lanes.lanes();
        let starts: Vec<Point> = ls.iter().map(|l| l.polyline.points()[0]).collect();
        let ends: Vec<Point> = ls.iter().map(|l| *l.polyline.points().last().unwrap()).collect();
        let mut shared = |group: &[Point]| {
            for i in 0..group.len() {
                for j in (i + 1)..group.len() {
                    if group[i].dist(group[j]) <= junction_tolerance {
                        points.push(group[i]);
                    }
                }
            }
        };
        shared(&starts);
        shared(&ends);
        // Crossings between lanes that are not directly connected.
        for i in 0..ls.len() {
            for j in (i + 1)..ls.len() {
                if ls[i].successors.contains(&j) || ls[j].successors.contains(&i) {
                    continue;
                }
                if !ls[i].polyline.bbox().intersects(ls[j].polyline.bbox()) {
                    continue;
                }
                let (pa, pb) = (ls[i].polyline.points(), ls[j].polyline.points());
                for a in pa.windows(2) {
                    for b in pb.windows(2) {
                        if let Some(x) = segment_intersection(a[0], a[1], b[0], b[1]) {
                            points.push(x);
                        }
                    }
                }
            }
        }
        points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        points.dedup_by(|a, b| a.dist(*b) <= junction_tolerance);
        Self { polygons, points }
    }

    pub fn distance(&self, p: Point) -> f64 {
        let d_pts = self.points.iter().map(|q| q.dist(p)).fold(f64::INFINITY, f64::min);
        self.polygons
            .iter()
            .map(|poly| point_polygon_distance(p, poly))
            .fold(d_pts, f64::min)
    }

    fn within(&self, p: Point, radius: f64) -> bool {
        self.points.iter().any(|q| q.dist(p) <= radius)
            || self
                .polygons
                .iter()
                .any(|poly| point_polygon_distance(p, poly) <= radius)
    }
}

/// Longest run of consecutive valid, slow steps near a conflict region,
/// in seconds.
pub fn waiting_period(states: &[AgentState], regions: &ConflictRegions, dt: f64, params: &IndividualParams) -> f64 {
    let speeds = step_speeds(states, dt);
    let mut best = 0usize;
    let mut run = 0usize;
    for (st, v) in states.iter().zip(&speeds) {
        let waiting = st.valid
            && v.is_some_and(|v| v < params.wp_speed_threshold)
            && regions.within(st.position(), params.wp_radius);
        if waiting {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best as f64 * dt
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLimitExcess {
    pub value: f64,
    /// Set when the agent has no lane assignment.
    pub unassigned: bool,
}

/// Largest one-sided excess of step speed over the current lane's limit.
pub fn speed_limit_excess(
    states: &[AgentState],
    seq: Option<&LaneSequence>,
    lanes: &LaneIndex,
    dt: f64,
) -> SpeedLimitExcess {
    let Some(seq) = seq else {
        return SpeedLimitExcess {
            value: 0.0,
            unassigned: true,
        };
    };
    let speeds = step_speeds(states, dt);
    let value = speeds
        .iter()
        .zip(&seq.step_lanes)
        .filter_map(|(v, l)| {
            let limit = lanes.get((*l)?).speed_limit?;
            Some((v.as_ref()? - limit).max(0.0))
        })
        .fold(0.0, f64::max);
    SpeedLimitExcess {
        value,
        unassigned: false,
    }
}

/// Lateral offset and heading error relative to the step's assigned lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneFrame {
    pub d: f64,
    pub heading_error: f64,
}

/// Lane-relative frames for each step; all `None` when unassigned.
pub fn lane_frames(states: &[AgentState], seq: Option<&LaneSequence>, lanes: &LaneIndex) -> Vec<Option<LaneFrame>> {
    let Some(seq) = seq else {
        return vec![None; states.len()];
    };
    states
        .iter()
        .zip(&seq.step_lanes)
        .map(|(st, l)| {
            let lane = lanes.get((*l)?);
            if !st.valid {
                return None;
            }
            let pr = lane.polyline.project(st.position());
            Some(LaneFrame {
                d: pr.d,
                heading_error: wrap_angle(st.heading - lane.polyline.segment_heading(pr.segment)),
            })
        })
        .collect()
}

/// Fraction of lane-relative steps that are near the centerline and
/// aligned with it; 0 with no frames.
pub fn lane_following_fraction(frames: &[Option<LaneFrame>], params: &IndividualParams) -> f64 {
    let total = frames.iter().flatten().count();
    if total == 0 {
        return 0.0;
    }
    let following = frames
        .iter()
        .flatten()
        .filter(|f| f.d.abs() <= params.follow_max_offset && f.heading_error.abs() <= params.follow_max_heading)
        .count();
    following as f64 / total as f64
}

/// All individual features except `anomaly`, which is left at 0 for the
/// caller to fill from a primitive model.
pub fn extract_individual(
    track: &PreparedTrack<'_>,
    seq: Option<&LaneSequence>,
    lanes: &LaneIndex,
    regions: &ConflictRegions,
    dt: f64,
    params: &IndividualParams,
) -> IndividualFeatures {
    let states = &track.states;
    let kin = kinematic_profile(states, dt);
    let max_speed = track.speeds.iter().flatten().copied().fold(0.0, f64::max);
    IndividualFeatures {
        max_speed,
        max_accel: max_abs(&kin.accel),
        max_jerk: max_abs(&kin.jerk),
        waiting_period: waiting_period(states, regions, dt, params),
        speed_limit_excess: speed_limit_excess(states, seq, lanes, dt).value,
        lane_following_fraction: lane_following_fraction(&lane_frames(states, seq, lanes), params),
        anomaly: 0.0,
    }
}
