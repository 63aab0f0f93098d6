//! Probabilistic lane-sequence assignment.
//!
//! Each valid state is scored against every nearby lane with a factorized
//! Gaussian over lateral offset and heading residual. A beam search then
//! picks the best sequence, where a lane change a → b is allowed if b is a
//! successor of a or if the deflection between a's end tangent and b's start
//! tangent is small enough.

use crate::geometry::{wrap_angle, Polyline};
use crate::scenario::{AgentState, Lane, Scenario};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentParams {
    /// Lateral likelihood scale, meters.
    pub sigma_d: f64,
    /// Heading likelihood scale, radians.
    pub sigma_theta: f64,
    /// Largest end→start tangent deflection accepted as a transition.
    pub max_deflection: f64,
    pub beam_width: usize,
    /// Lanes farther than this are not candidates.
    pub max_lateral: f64,
}

impl Default for AssignmentParams {
    fn default() -> Self {
        Self {
            sigma_d: 1.0,
            sigma_theta: 0.35,
            max_deflection: 0.6,
            beam_width: 8,
            max_lateral: 5.0,
        }
    }
}

/// A lane prepared for repeated projection.
#[derive(Debug, Clone)]
pub struct IndexedLane {
    pub lane_id: String,
    pub polyline: Polyline,
    pub speed_limit: Option<f64>,
    pub successors: Vec<usize>,
}

/// Lanes of one scenario, sorted by id, with precomputed polylines.
#[derive(Debug, Clone, Default)]
pub struct LaneIndex {
    lanes: Vec<IndexedLane>,
    by_id: HashMap<String, usize>,
}

impl LaneIndex {
    pub fn new(lanes: &BTreeMap<String, Lane>) -> Self {
        // BTreeMap iteration gives the lexicographic order tie-breaks rely on.
        let mut out = Vec::with_capacity(lanes.len());
        let mut by_id = HashMap::new();
        for lane in lanes.values() {
            let Ok(polyline) = Polyline::new(lane.centerline.clone()) else {
                log::warn!("lane `{}` has a degenerate centerline; skipped", lane.lane_id);
                continue;
            };
            by_id.insert(lane.lane_id.clone(), out.len());
            out.push(IndexedLane {
                lane_id: lane.lane_id.clone(),
                polyline,
                speed_limit: lane.speed_limit,
                successors: Vec::new(),
            });
        }
        for lane in lanes.values() {
            if let Some(&i) = by_id.get(&lane.lane_id) {
                out[i].successors = lane.successors.iter().filter_map(|s| by_id.get(s).copied()).collect();
            }
        }
        Self { lanes: out, by_id }
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        Self::new(&s.lanes)
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    pub fn get(&self, idx: usize) -> &IndexedLane {
        &self.lanes[idx]
    }

    pub fn lanes(&self) -> &[IndexedLane] {
        &self.lanes
    }

    pub fn index_of(&self, lane_id: &str) -> Option<usize> {
        self.by_id.get(lane_id).copied()
    }

    /// Whether the beam may move from lane `a` to lane `b`.
    pub fn transition_allowed(&self, a: usize, b: usize, max_deflection: f64) -> bool {
        if a == b || self.lanes[a].successors.contains(&b) {
            return true;
        }
        let dev = wrap_angle(self.lanes[b].polyline.start_heading() - self.lanes[a].polyline.end_heading());
        dev.abs() <= max_deflection
    }
}

/// Candidate lanes for one state as (lane index, log-likelihood), best first,
/// ties broken by lane id.
pub fn candidate_lane_indices(state: &AgentState, index: &LaneIndex, params: &AssignmentParams) -> Vec<(usize, f64)> {
    if !state.valid {
        return Vec::new();
    }
    let p = state.position();
    let mut out = Vec::new();
    for (i, lane) in index.lanes.iter().enumerate() {
        if lane.polyline.bbox().distance_to(p) > params.max_lateral {
            continue;
        }
        let pr = lane.polyline.project(p);
        if pr.distance > params.max_lateral {
            continue;
        }
        let dtheta = wrap_angle(state.heading - lane.polyline.segment_heading(pr.segment));
        let ll = -(pr.distance * pr.distance) / (2.0 * params.sigma_d * params.sigma_d)
            - (dtheta * dtheta) / (2.0 * params.sigma_theta * params.sigma_theta);
        out.push((i, ll));
    }
    // Index order equals lane_id order, so a stable sort keeps the tie-break.
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// Candidate lanes keyed by lane id.
pub fn candidate_lanes(state: &AgentState, index: &LaneIndex, params: &AssignmentParams) -> Vec<(String, f64)> {
    candidate_lane_indices(state, index, params)
        .into_iter()
        .map(|(i, ll)| (index.lanes[i].lane_id.clone(), ll))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSequence {
    /// Distinct consecutive lanes in travel order.
    pub lane_ids: Vec<String>,
    pub log_score: f64,
    /// Lane of every valid input step, keyed by position in the input slice.
    pub per_step_lane: BTreeMap<usize, String>,
    /// Lane index per input step (`None` for invalid steps).
    pub step_lanes: Vec<Option<usize>>,
    /// Lane indices matching `lane_ids`.
    pub lane_indices: Vec<usize>,
}

struct Node {
    lane: usize,
    parent: Option<usize>,
}

/// Beam search over per-step candidates. Returns `None` when no valid step
/// has any candidate lane.
///
/// Steps without candidates inherit the surrounding lane and add nothing to
/// the score. If every hypothesis dies at a step (no permitted transition),
/// the best hypothesis is continued unconstrained.
pub fn assign_lane_sequence(states: &[AgentState], index: &LaneIndex, params: &AssignmentParams) -> Option<LaneSequence> {
    let mut arena: Vec<Node> = Vec::new();
    // (score, node) per surviving hypothesis.
    let mut beam: Vec<(f64, usize)> = Vec::new();
    // Timesteps that had candidates, in order.
    let mut scored_steps: Vec<usize> = Vec::new();

    for (t, st) in states.iter().enumerate() {
        if !st.valid {
            continue;
        }
        let cands = candidate_lane_indices(st, index, params);
        if cands.is_empty() {
            continue;
        }
        let mut best: BTreeMap<usize, (f64, Option<usize>)> = BTreeMap::new();
        let relax = |from: Option<(f64, usize)>, constrained: bool, best: &mut BTreeMap<usize, (f64, Option<usize>)>| {
            for &(b, ll) in &cands {
                let (base, parent) = match from {
                    None => (0.0, None),
                    Some((sc, node)) => {
                        if constrained && !index.transition_allowed(arena[node].lane, b, params.max_deflection) {
                            continue;
                        }
                        (sc, Some(node))
                    }
                };
                let score = base + ll;
                let e = best.entry(b).or_insert((f64::NEG_INFINITY, None));
                if score > e.0 {
                    *e = (score, parent);
                }
            }
        };
        if beam.is_empty() {
            relax(None, true, &mut best);
        } else {
            for &h in &beam {
                relax(Some(h), true, &mut best);
            }
            if best.is_empty() {
                relax(Some(beam[0]), false, &mut best);
            }
        }
        let mut next: Vec<(f64, usize)> = best
            .into_iter()
            .map(|(lane, (score, parent))| {
                arena.push(Node { lane, parent });
                (score, arena.len() - 1)
            })
            .collect();
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then(arena[a.1].lane.cmp(&arena[b.1].lane)));
        next.truncate(params.beam_width.max(1));
        beam = next;
        scored_steps.push(t);
    }

    let &(log_score, mut node) = beam.first()?;
    // Backtrack from the best final node; each step's node is its ancestor.
    let mut lanes_rev = Vec::with_capacity(scored_steps.len());
    loop {
        lanes_rev.push(arena[node].lane);
        match arena[node].parent {
            Some(p) => node = p,
            None => break,
        }
    }
    lanes_rev.reverse();
    debug_assert_eq!(lanes_rev.len(), scored_steps.len());

    let mut step_lanes = vec![None; states.len()];
    for (t, lane) in scored_steps.iter().zip(&lanes_rev) {
        step_lanes[*t] = Some(*lane);
    }
    // Fill valid steps that had no candidates with the neighbouring lane.
    let first = lanes_rev[0];
    let mut cur = first;
    for (t, st) in states.iter().enumerate() {
        if !st.valid {
            continue;
        }
        match step_lanes[t] {
            Some(l) => cur = l,
            None => step_lanes[t] = Some(cur),
        }
    }
    let mut lane_indices: Vec<usize> = Vec::new();
    let mut per_step_lane = BTreeMap::new();
    for (t, l) in step_lanes.iter().enumerate() {
        if let Some(l) = *l {
            if lane_indices.last() != Some(&l) {
                lane_indices.push(l);
            }
            per_step_lane.insert(t, index.lanes[l].lane_id.clone());
        }
    }
    Some(LaneSequence {
        lane_ids: lane_indices.iter().map(|&l| index.lanes[l].lane_id.clone()).collect(),
        log_score,
        per_step_lane,
        step_lanes,
        lane_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::scenario::LaneType;
    use approx::assert_abs_diff_eq;

    fn lane(id: &str, pts: &[(f64, f64)], succ: &[&str]) -> (String, Lane) {
        (
            id.to_string(),
            Lane {
                lane_id: id.into(),
                centerline: pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
                speed_limit: None,
                successors: succ.iter().map(|s| s.to_string()).collect(),
                predecessors: vec![],
                lane_type: LaneType::SurfaceStreet,
            },
        )
    }

    fn st(x: f64, y: f64, h: f64) -> AgentState {
        AgentState::new(x, y, h, 0.0, 0.0)
    }

    #[test]
    fn on_centerline_scores_zero() {
        let idx = LaneIndex::new(&BTreeMap::from([lane("a", &[(0.0, 0.0), (100.0, 0.0)], &[])]));
        let c = candidate_lanes(&st(10.0, 0.0, 0.0), &idx, &AssignmentParams::default());
        assert_eq!(c, vec![("a".to_string(), 0.0)]);
    }

    #[test]
    fn equidistant_tie_breaks_by_id() {
        let idx = LaneIndex::new(&BTreeMap::from([
            lane("b", &[(0.0, 1.0), (100.0, 1.0)], &[]),
            lane("a", &[(0.0, -1.0), (100.0, -1.0)], &[]),
        ]));
        let c = candidate_lanes(&st(10.0, 0.0, 0.0), &idx, &AssignmentParams::default());
        assert_eq!(c[0].0, "a");
        assert_eq!(c[1].0, "b");
        assert_eq!(c[0].1, c[1].1);
    }

    #[test]
    fn plug_in_log_likelihood() {
        let idx = LaneIndex::new(&BTreeMap::from([lane("a", &[(0.0, 0.0), (100.0, 0.0)], &[])]));
        let c = candidate_lanes(&st(10.0, 1.0, 0.35), &idx, &AssignmentParams::default());
        assert_abs_diff_eq!(c[0].1, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_lane_track() {
        let idx = LaneIndex::new(&BTreeMap::from([
            lane("a", &[(0.0, 0.0), (100.0, 0.0)], &[]),
            lane("b", &[(0.0, 0.0), (0.0, 100.0)], &[]),
        ]));
        let track: Vec<_> = (0..10).map(|i| st(10.0 + i as f64, 0.2, 0.0)).collect();
        let seq = assign_lane_sequence(&track, &idx, &AssignmentParams::default()).unwrap();
        assert_eq!(seq.lane_ids, vec!["a"]);
        assert!(seq.per_step_lane.values().all(|l| l == "a"));
        assert_eq!(seq.per_step_lane.len(), 10);
    }

    #[test]
    fn lane_change_uses_deflection_relaxation() {
        // Parallel lanes with no connectivity edge between them.
        let idx = LaneIndex::new(&BTreeMap::from([
            lane("left", &[(0.0, 3.7), (100.0, 3.7)], &[]),
            lane("right", &[(0.0, 0.0), (100.0, 0.0)], &[]),
        ]));
        let track: Vec<_> = (0..20)
            .map(|i| {
                let y = 3.7 * (i as f64 / 19.0);
                st(5.0 * i as f64, y, 0.0)
            })
            .collect();
        let seq = assign_lane_sequence(&track, &idx, &AssignmentParams::default()).unwrap();
        assert_eq!(seq.lane_ids, vec!["right", "left"]);
    }

    #[test]
    fn far_pedestrian_is_unassigned() {
        let idx = LaneIndex::new(&BTreeMap::from([lane("a", &[(0.0, 0.0), (100.0, 0.0)], &[])]));
        let track: Vec<_> = (0..5).map(|i| st(i as f64, 20.0, 0.0)).collect();
        assert!(assign_lane_sequence(&track, &idx, &AssignmentParams::default()).is_none());
    }

    #[test]
    fn gap_steps_inherit_lane() {
        let idx = LaneIndex::new(&BTreeMap::from([lane("a", &[(0.0, 0.0), (100.0, 0.0)], &[])]));
        let mut track: Vec<_> = (0..5).map(|i| st(10.0 * i as f64, 0.0, 0.0)).collect();
        track[2].y = 30.0;
        let seq = assign_lane_sequence(&track, &idx, &AssignmentParams::default()).unwrap();
        assert_eq!(seq.per_step_lane.len(), 5);
    }
}
