//! Base feature extraction: per-agent (individual) and per-pair
//! (interaction) criticality features.

pub mod individual;
pub mod interaction;

use crate::geometry::{point_polygon_distance, point_segment_distance, segments_touch, Aabb, Point};
use crate::scenario::{AgentState, AgentTrack, AgentType, Geometry, MapFeature};
use std::borrow::Cow;

pub use individual::{IndividualFeatures, IndividualParams};
pub use interaction::{InteractionFeatures, InteractionParams};

/// Segments per bounding-box chunk of a path.
const CHUNK: usize = 8;

/// Polyline through an agent's valid centers, chunked for pruning.
#[derive(Debug, Clone, Default)]
pub struct TrackPath {
    /// (timestep, center) of each valid state, with repeated centers removed.
    pub points: Vec<(usize, Point)>,
    pub chunks: Vec<Aabb>,
    pub bbox: Aabb,
}

impl TrackPath {
    pub fn new(states: &[AgentState]) -> Self {
        let mut points: Vec<(usize, Point)> = Vec::new();
        for (t, s) in states.iter().enumerate().filter(|(_, s)| s.valid) {
            let p = s.position();
            if points.last().is_some_and(|(_, q)| *q == p) {
                continue;
            }
            points.push((t, p));
        }
        let mut chunks = Vec::new();
        let nseg = points.len().saturating_sub(1);
        let mut k = 0;
        while k < nseg {
            let end = (k + CHUNK).min(nseg);
            chunks.push(Aabb::from_points(points[k..=end].iter().map(|(_, p)| p)));
            k = end;
        }
        let bbox = Aabb::from_points(points.iter().map(|(_, p)| p));
        Self { points, chunks, bbox }
    }

    pub fn num_segments(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn segment(&self, k: usize) -> (Point, Point) {
        (self.points[k].1, self.points[k + 1].1)
    }

    /// Segment index range covered by chunk `c`.
    pub fn chunk_segments(&self, c: usize) -> std::ops::Range<usize> {
        let start = c * CHUNK;
        start..(start + CHUNK).min(self.num_segments())
    }

    /// Distance from a point to the path (a lone point if only one center).
    pub fn distance_to_point(&self, p: Point) -> f64 {
        match self.points.len() {
            0 => f64::INFINITY,
            1 => self.points[0].1.dist(p),
            _ => (0..self.num_segments())
                .map(|k| {
                    let (a, b) = self.segment(k);
                    point_segment_distance(p, a, b)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Distance from a polygon region to the path.
    pub fn distance_to_polygon(&self, poly: &[Point]) -> f64 {
        if self.points.is_empty() || poly.is_empty() {
            return f64::INFINITY;
        }
        let n = poly.len();
        let mut best = f64::INFINITY;
        for &(_, p) in &self.points {
            best = best.min(point_polygon_distance(p, poly));
        }
        if best == 0.0 {
            return 0.0;
        }
        for k in 0..self.num_segments() {
            let (a, b) = self.segment(k);
            for i in 0..n {
                let (c, d) = (poly[i], poly[(i + 1) % n]);
                if segments_touch(a, b, c, d) {
                    return 0.0;
                }
                best = best.min(point_segment_distance(c, a, b));
            }
        }
        best
    }
}

/// Distance from a map feature's geometry to a point.
pub fn geometry_distance(g: &Geometry, p: Point) -> f64 {
    match g {
        Geometry::Point(q) => q.dist(p),
        Geometry::Polygon(poly) => point_polygon_distance(p, poly),
    }
}

/// Per-step speed: backward difference where available, else forward.
/// `None` for invalid steps and isolated valid steps.
pub fn step_speeds(states: &[AgentState], dt: f64) -> Vec<Option<f64>> {
    let n = states.len();
    let diff = |a: usize, b: usize| -> Option<f64> {
        (states[a].valid && states[b].valid).then(|| states[b].position().dist(states[a].position()) / dt)
    };
    (0..n)
        .map(|t| {
            if !states[t].valid {
                return None;
            }
            let back = if t > 0 { diff(t - 1, t) } else { None };
            back.or_else(|| if t + 1 < n { diff(t, t + 1) } else { None })
        })
        .collect()
}

/// An agent track with the derived data every feature needs, computed once.
#[derive(Debug, Clone)]
pub struct PreparedTrack<'a> {
    pub states: Cow<'a, [AgentState]>,
    pub agent_type: AgentType,
    pub length: f64,
    pub width: f64,
    pub speeds: Vec<Option<f64>>,
    pub path: TrackPath,
    /// Per map feature: (distance from path, first time within reach radius).
    pub map_reach: Vec<(f64, Option<f64>)>,
}

impl<'a> PreparedTrack<'a> {
    pub fn new(
        states: Cow<'a, [AgentState]>,
        agent_type: AgentType,
        length: f64,
        width: f64,
        dt: f64,
        map_features: &[MapFeature],
        reach_radius: f64,
    ) -> Self {
        let speeds = step_speeds(&states, dt);
        let path = TrackPath::new(&states);
        let map_reach = map_features
            .iter()
            .map(|f| {
                let pd = match &f.geometry {
                    Geometry::Point(q) => path.distance_to_point(*q),
                    Geometry::Polygon(poly) => path.distance_to_polygon(poly),
                };
                let reach = if pd <= reach_radius {
                    states
                        .iter()
                        .enumerate()
                        .find(|(_, s)| s.valid && geometry_distance(&f.geometry, s.position()) <= reach_radius)
                        .map(|(t, _)| t as f64 * dt)
                } else {
                    None
                };
                (pd, reach)
            })
            .collect();
        Self {
            states,
            agent_type,
            length,
            width,
            speeds,
            path,
            map_reach,
        }
    }

    pub fn from_agent(agent: &'a AgentTrack, dt: f64, map_features: &[MapFeature], reach_radius: f64) -> Self {
        Self::new(
            Cow::Borrowed(&agent.states),
            agent.agent_type,
            agent.length,
            agent.width,
            dt,
            map_features,
            reach_radius,
        )
    }

    pub fn with_states(
        agent: &AgentTrack,
        states: Vec<AgentState>,
        dt: f64,
        map_features: &[MapFeature],
        reach_radius: f64,
    ) -> PreparedTrack<'static> {
        PreparedTrack::new(
            Cow::Owned(states),
            agent.agent_type,
            agent.length,
            agent.width,
            dt,
            map_features,
            reach_radius,
        )
    }
}

/// Minimum center distance over co-valid timesteps (∞ if never co-valid).
pub fn min_center_distance(a: &[AgentState], b: &[AgentState]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.valid && y.valid)
        .map(|(x, y)| x.position().dist(y.position()))
        .fold(f64::INFINITY, f64::min)
}
