//! Pairwise surrogate safety metrics: THW, TTC, DRAC from leader–follower
//! relations, ΔmTTCP over trajectory crossings and shared map features, and
//! box-overlap collision counting.

use super::{min_center_distance, PreparedTrack, TrackPath};
use crate::geometry::{polygon_centroid, segment_intersection, segments_touch, wrap_angle, OrientedBox, Point};
use crate::scenario::{AgentState, Geometry, MapFeature};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionParams {
    /// Pairs farther apart than this at every co-valid step are ignored, m.
    pub gate_distance: f64,
    /// Half-angle of the follower's forward cone, rad.
    pub cone_half_angle: f64,
    /// THW is absent below this follower speed, m/s.
    pub speed_floor: f64,
    /// Bumper gaps are floored at this value, m.
    pub min_gap: f64,
    /// Trajectory crossings closer than this are merged, m.
    pub crossing_tolerance: f64,
    /// An agent "reaches" a conflict point within this distance, m.
    pub reach_radius: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        Self {
            gate_distance: 50.0,
            cone_half_angle: 15f64.to_radians(),
            speed_floor: 0.1,
            min_gap: 0.01,
            crossing_tolerance: 0.5,
            reach_radius: 2.0,
        }
    }
}

/// Aggregated pair features. Absent relations are +∞ for minima and 0 for
/// maxima and counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionFeatures {
    pub min_thw: f64,
    pub min_ttc: f64,
    pub max_drac: f64,
    pub min_delta_mttcp_traj: f64,
    pub min_delta_mttcp_map: f64,
    pub collision_count: f64,
}

impl Default for InteractionFeatures {
    fn default() -> Self {
        Self {
            min_thw: f64::INFINITY,
            min_ttc: f64::INFINITY,
            max_drac: 0.0,
            min_delta_mttcp_traj: f64::INFINITY,
            min_delta_mttcp_map: f64::INFINITY,
            collision_count: 0.0,
        }
    }
}

impl InteractionFeatures {
    pub const NAMES: [&'static str; 6] = [
        "min_thw",
        "min_ttc",
        "max_drac",
        "min_delta_mttcp_traj",
        "min_delta_mttcp_map",
        "collision_count",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.min_thw,
            self.min_ttc,
            self.max_drac,
            self.min_delta_mttcp_traj,
            self.min_delta_mttcp_map,
            self.collision_count,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            min_thw: v[0],
            min_ttc: v[1],
            max_drac: v[2],
            min_delta_mttcp_traj: v[3],
            min_delta_mttcp_map: v[4],
            collision_count: v[5],
        }
    }
}

/// Unordered pairs (by index into `tracks`) whose minimum co-valid center
/// distance is within the gate, sorted.
pub fn find_interaction_pairs(tracks: &[&[AgentState]], gate_distance: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..tracks.len() {
        for j in (i + 1)..tracks.len() {
            if min_center_distance(tracks[i], tracks[j]) <= gate_distance {
                out.push((i, j));
            }
        }
    }
    out
}

/// One leader–follower observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderFollowerSample {
    pub t: usize,
    /// True when the first track of the pair is the follower.
    pub first_follows: bool,
    pub gap: f64,
    pub thw: Option<f64>,
    pub ttc: Option<f64>,
    pub drac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderFollower {
    pub samples: Vec<LeaderFollowerSample>,
    pub min_thw: f64,
    pub min_ttc: f64,
    pub max_drac: f64,
}

const CLOSING_EPS: f64 = 1e-9;

fn follow_sample(
    t: usize,
    f: &PreparedTrack<'_>,
    l: &PreparedTrack<'_>,
    first_follows: bool,
    params: &InteractionParams,
) -> Option<LeaderFollowerSample> {
    let (sf, sl) = (&f.states[t], &l.states[t]);
    let los = sl.position() - sf.position();
    let dist = los.norm();
    if dist > params.gate_distance || dist == 0.0 {
        return None;
    }
    if wrap_angle(los.heading() - sf.heading).abs() > params.cone_half_angle {
        return None;
    }
    let (vf, vl) = (f.speeds[t]?, l.speeds[t]?);
    let gap = (dist - (f.length + l.length) / 2.0).max(params.min_gap);
    // Differencing noise on equal speeds is not a closing speed.
    let closing = if vf - vl > CLOSING_EPS { vf - vl } else { 0.0 };
    Some(LeaderFollowerSample {
        t,
        first_follows,
        gap,
        thw: (vf > params.speed_floor).then(|| gap / vf),
        ttc: (closing > 0.0).then(|| gap / closing),
        drac: if closing > 0.0 { closing * closing / (2.0 * gap) } else { 0.0 },
    })
}

/// THW/TTC/DRAC over co-valid steps and both orderings of the pair.
pub fn leader_follower_metrics(a: &PreparedTrack<'_>, b: &PreparedTrack<'_>, params: &InteractionParams) -> LeaderFollower {
    let mut out = LeaderFollower {
        samples: Vec::new(),
        min_thw: f64::INFINITY,
        min_ttc: f64::INFINITY,
        max_drac: 0.0,
    };
    let n = a.states.len().min(b.states.len());
    for t in 0..n {
        if !(a.states[t].valid && b.states[t].valid) {
            continue;
        }
        for s in [follow_sample(t, a, b, true, params), follow_sample(t, b, a, false, params)]
            .into_iter()
            .flatten()
        {
            if let Some(v) = s.thw {
                out.min_thw = out.min_thw.min(v);
            }
            if let Some(v) = s.ttc {
                out.min_ttc = out.min_ttc.min(v);
            }
            out.max_drac = out.max_drac.max(s.drac);
            out.samples.push(s);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    TrajectoryCrossing,
    MapFeature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictPoint {
    pub position: Point,
    pub kind: ConflictKind,
    pub t_reach_i: Option<f64>,
    pub t_reach_j: Option<f64>,
}

/// Geometric crossings of two paths, in (segment i, segment j) order, with
/// near-duplicates (shared vertices) merged.
pub fn path_crossings(pi: &TrackPath, pj: &TrackPath, merge_tolerance: f64) -> Vec<Point> {
    let mut hits: Vec<(usize, usize, Point)> = Vec::new();
    if pi.num_segments() == 0 || pj.num_segments() == 0 || !pi.bbox.intersects(&pj.bbox) {
        return Vec::new();
    }
    for (ci, bi) in pi.chunks.iter().enumerate() {
        if !bi.intersects(&pj.bbox) {
            continue;
        }
        for (cj, bj) in pj.chunks.iter().enumerate() {
            if !bi.intersects(bj) {
                continue;
            }
            for si in pi.chunk_segments(ci) {
                let (a0, a1) = pi.segment(si);
                for sj in pj.chunk_segments(cj) {
                    let (b0, b1) = pj.segment(sj);
                    if let Some(x) = segment_intersection(a0, a1, b0, b1) {
                        hits.push((si, sj, x));
                    }
                }
            }
        }
    }
    hits.sort_by_key(|h| (h.0, h.1));
    let mut out: Vec<Point> = Vec::with_capacity(hits.len());
    for (_, _, x) in hits {
        if out.iter().any(|q| q.dist(x) <= merge_tolerance) {
            continue;
        }
        out.push(x);
    }
    out
}

fn first_reach(states: &[AgentState], p: Point, radius: f64, dt: f64) -> Option<f64> {
    states
        .iter()
        .position(|s| s.valid && s.position().dist(p) <= radius)
        .map(|t| t as f64 * dt)
}

/// Trajectory crossings plus map features near both paths, each with the
/// first time either agent comes within the reach radius.
pub fn conflict_points(
    a: &PreparedTrack<'_>,
    b: &PreparedTrack<'_>,
    map_features: &[MapFeature],
    dt: f64,
    params: &InteractionParams,
) -> Vec<ConflictPoint> {
    let mut out: Vec<ConflictPoint> = path_crossings(&a.path, &b.path, params.crossing_tolerance)
        .into_iter()
        .map(|x| ConflictPoint {
            position: x,
            kind: ConflictKind::TrajectoryCrossing,
            t_reach_i: first_reach(&a.states, x, params.reach_radius, dt),
            t_reach_j: first_reach(&b.states, x, params.reach_radius, dt),
        })
        .collect();
    for (k, f) in map_features.iter().enumerate() {
        let (da, ta) = a.map_reach[k];
        let (db, tb) = b.map_reach[k];
        if da <= params.reach_radius && db <= params.reach_radius {
            let position = match &f.geometry {
                Geometry::Point(p) => *p,
                Geometry::Polygon(poly) => polygon_centroid(poly),
            };
            out.push(ConflictPoint {
                position,
                kind: ConflictKind::MapFeature,
                t_reach_i: ta,
                t_reach_j: tb,
            });
        }
    }
    out
}

/// Minimum |t_reach_i − t_reach_j| per kind: (trajectory, map). Points with
/// either reach time absent are skipped; no eligible point gives +∞.
pub fn delta_mttcp(points: &[ConflictPoint]) -> (f64, f64) {
    let mut traj = f64::INFINITY;
    let mut map = f64::INFINITY;
    for p in points {
        if let (Some(ti), Some(tj)) = (p.t_reach_i, p.t_reach_j) {
            let d = (ti - tj).abs();
            match p.kind {
                ConflictKind::TrajectoryCrossing => traj = traj.min(d),
                ConflictKind::MapFeature => map = map.min(d),
            }
        }
    }
    (traj, map)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollisionResult {
    /// Number of contiguous colliding runs.
    pub count: usize,
    pub steps: Vec<usize>,
}

fn state_box(s: &AgentState, length: f64, width: f64) -> OrientedBox {
    OrientedBox::new(s.position(), s.heading, length, width)
}

/// Collision at a single step: box overlap, or the center displacements
/// from the previous step crossing each other.
pub fn collides_at(
    a: &[AgentState],
    b: &[AgentState],
    t: usize,
    dims_a: (f64, f64),
    dims_b: (f64, f64),
) -> bool {
    let (sa, sb) = (&a[t], &b[t]);
    if !(sa.valid && sb.valid) {
        return false;
    }
    if state_box(sa, dims_a.0, dims_a.1).overlaps(&state_box(sb, dims_b.0, dims_b.1)) {
        return true;
    }
    if t > 0 && a[t - 1].valid && b[t - 1].valid {
        let (a0, a1) = (a[t - 1].position(), sa.position());
        let (b0, b1) = (b[t - 1].position(), sb.position());
        if a0 != a1 && b0 != b1 && segments_touch(a0, a1, b0, b1) {
            return true;
        }
    }
    false
}

/// Contiguous colliding runs over co-valid steps.
pub fn detect_collisions(a: &[AgentState], b: &[AgentState], dims_a: (f64, f64), dims_b: (f64, f64)) -> CollisionResult {
    let n = a.len().min(b.len());
    let mut res = CollisionResult::default();
    let mut in_run = false;
    for t in 0..n {
        if collides_at(a, b, t, dims_a, dims_b) {
            if !in_run {
                res.count += 1;
            }
            in_run = true;
            res.steps.push(t);
        } else {
            in_run = false;
        }
    }
    res
}

/// All interaction features for a pair of prepared tracks.
pub fn pair_features(
    a: &PreparedTrack<'_>,
    b: &PreparedTrack<'_>,
    map_features: &[MapFeature],
    dt: f64,
    params: &InteractionParams,
) -> InteractionFeatures {
    let lf = leader_follower_metrics(a, b, params);
    let (traj, map) = delta_mttcp(&conflict_points(a, b, map_features, dt, params));
    let col = detect_collisions(&a.states, &b.states, (a.length, a.width), (b.length, b.width));
    InteractionFeatures {
        min_thw: lf.min_thw,
        min_ttc: lf.min_ttc,
        max_drac: lf.max_drac,
        min_delta_mttcp_traj: traj,
        min_delta_mttcp_map: map,
        collision_count: col.count as f64,
    }
}
