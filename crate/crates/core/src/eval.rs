//! Prediction evaluation: minADE/minFDE, collision rate against other
//! agents' ground truth, bucketed mAP, and the remediation exports
//! (per-agent loss weights, collision-minimizing target mode).

use crate::features::interaction::detect_collisions;
use crate::geometry::{wrap_angle, Point};
use crate::scenario::{AgentState, AgentType, Scenario};
use crate::scoring::TrajectoryScoreSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// K future modes for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPrediction {
    pub scenario_id: String,
    pub agent_id: String,
    pub modes: Vec<Vec<Point>>,
    pub confidences: Vec<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("scenario `{scenario}` has no prediction for agents {missing:?}")]
    MissingPredictions { scenario: String, missing: Vec<String> },
    #[error("prediction for `{agent}` in `{scenario}`: {message}")]
    Malformed { scenario: String, agent: String, message: String },
    #[error("prediction line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl AgentPrediction {
    pub fn check(&self, future_len: usize) -> Result<(), EvalError> {
        let bad = |m: String| {
            Err(EvalError::Malformed {
                scenario: self.scenario_id.clone(),
                agent: self.agent_id.clone(),
                message: m,
            })
        };
        if self.modes.is_empty() {
            return bad("no modes".into());
        }
        if self.modes.len() != self.confidences.len() {
            return bad(format!("{} modes but {} confidences", self.modes.len(), self.confidences.len()));
        }
        if let Some(m) = self.modes.iter().find(|m| m.len() != future_len) {
            return bad(format!("mode length {} != future length {future_len}", m.len()));
        }
        if self.confidences.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("confidences must be finite and non-negative".into());
        }
        if self.confidences.iter().sum::<f64>() > 1.0 + 1e-6 {
            return bad("confidences sum above 1".into());
        }
        Ok(())
    }

    /// Highest confidence, lowest index on ties.
    pub fn top_mode(&self) -> usize {
        let mut best = 0;
        for (k, c) in self.confidences.iter().enumerate() {
            if *c > self.confidences[best] {
                best = k;
            }
        }
        best
    }
}

/// Parses JSON-lines predictions.
pub fn parse_predictions(text: &str) -> Result<Vec<AgentPrediction>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn mode_errors(mode: &[Point], gt_future: &[AgentState]) -> Option<(f64, f64)> {
    let mut sum = 0.0;
    let mut n = 0;
    let mut last = None;
    for (p, g) in mode.iter().zip(gt_future) {
        if !g.valid {
            continue;
        }
        let e = p.dist(g.position());
        sum += e;
        n += 1;
        last = Some(e);
    }
    Some((sum / n as f64, last?))
}

/// (minADE, minFDE) with the minima taken independently over modes.
/// `None` when the ground-truth future has no valid step.
pub fn min_ade_fde(modes: &[Vec<Point>], gt_future: &[AgentState]) -> Option<(f64, f64)> {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for m in modes {
        let (ade, fde) = mode_errors(m, gt_future)?;
        best = (best.0.min(ade), best.1.min(fde));
    }
    modes.first().map(|_| best)
}

/// Turns a predicted path into states, headings from the displacement
/// (held through stationary steps).
pub fn mode_track(mode: &[Point], current: Option<&AgentState>) -> Vec<AgentState> {
    let mut heading = current.map(|s| s.heading).unwrap_or(0.0);
    (0..mode.len())
        .map(|k| {
            let (from, to) = match (k, current) {
                (0, Some(c)) => (c.position(), mode[0]),
                (0, None) => (mode[0], mode.get(1).copied().unwrap_or(mode[0])),
                _ => (mode[k - 1], mode[k]),
            };
            if (to - from).norm() > 1e-6 {
                heading = (to - from).heading();
            }
            AgentState::new(mode[k].x, mode[k].y, heading, 0.0, 0.0)
        })
        .collect()
}

fn current_state(s: &Scenario, agent: usize) -> Option<&AgentState> {
    s.agents[agent].states[..=s.t_obs_idx].iter().rev().find(|st| st.valid)
}

/// Distinct other agents whose ground-truth future collides with `future`.
pub fn colliding_agents(s: &Scenario, agent: usize, future: &[AgentState]) -> usize {
    let me = &s.agents[agent];
    s.agents
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != agent)
        .filter(|(_, other)| {
            let theirs = &other.states[s.t_obs_idx + 1..];
            detect_collisions(future, theirs, (me.length, me.width), (other.length, other.width)).count > 0
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeRule {
    #[default]
    TopConfidence,
    BestAde,
}

fn select_mode(pred: &AgentPrediction, gt_future: &[AgentState], rule: ModeRule) -> usize {
    match rule {
        ModeRule::TopConfidence => pred.top_mode(),
        ModeRule::BestAde => {
            let mut best = (pred.top_mode(), f64::INFINITY);
            for (k, m) in pred.modes.iter().enumerate() {
                if let Some((ade, _)) = mode_errors(m, gt_future) {
                    if ade < best.1 {
                        best = (k, ade);
                    }
                }
            }
            best.0
        }
    }
}

fn predictions_by_agent<'a>(s: &Scenario, preds: &'a [AgentPrediction]) -> Result<Vec<(usize, &'a AgentPrediction)>, EvalError> {
    let by_id: BTreeMap<&str, &AgentPrediction> =
        preds.iter().filter(|p| p.scenario_id == s.scenario_id).map(|p| (p.agent_id.as_str(), p)).collect();
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for (k, a) in s.agents.iter().enumerate().filter(|(_, a)| a.to_predict) {
        match by_id.get(a.agent_id.as_str()) {
            Some(p) => {
                p.check(s.future_len())?;
                out.push((k, *p));
            }
            None => missing.push(a.agent_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions {
            scenario: s.scenario_id.clone(),
            missing,
        });
    }
    Ok(out)
}

/// Per-agent collision counts for the predicted agents of one scenario.
pub fn collision_counts(preds: &[AgentPrediction], s: &Scenario, rule: ModeRule) -> Result<Vec<(usize, usize)>, EvalError> {
    Ok(predictions_by_agent(s, preds)?
        .into_iter()
        .map(|(k, p)| {
            let gt_future = &s.agents[k].states[s.t_obs_idx + 1..];
            let m = select_mode(p, gt_future, rule);
            let track = mode_track(&p.modes[m], current_state(s, k));
            (k, colliding_agents(s, k, &track))
        })
        .collect())
}

/// Counted collisions over predicted agents, per predicted agent.
pub fn collision_rate(preds: &[AgentPrediction], s: &Scenario, rule: ModeRule) -> Result<f64, EvalError> {
    let counts = collision_counts(preds, s, rule)?;
    if counts.is_empty() {
        return Ok(0.0);
    }
    Ok(counts.iter().map(|(_, c)| *c as f64).sum::<f64>() / counts.len() as f64)
}

/// (collisions, predicted agents) for the ground-truth futures themselves.
pub fn gt_future_collisions(s: &Scenario) -> (usize, usize) {
    let mut total = 0;
    let mut p = 0;
    for (k, a) in s.agents.iter().enumerate().filter(|(_, a)| a.to_predict) {
        total += colliding_agents(s, k, &a.states[s.t_obs_idx + 1..]);
        p += 1;
    }
    (total, p)
}

/// Ground truth repackaged as a single-mode prediction per predicted agent.
pub fn gt_as_prediction(s: &Scenario) -> Vec<AgentPrediction> {
    s.agents
        .iter()
        .filter(|a| a.to_predict)
        .map(|a| AgentPrediction {
            scenario_id: s.scenario_id.clone(),
            agent_id: a.agent_id.clone(),
            modes: vec![a.states[s.t_obs_idx + 1..].iter().map(|st| st.position()).collect()],
            confidences: vec![1.0],
        })
        .collect()
}

/// Mode with the fewest colliding external agents; ties by higher
/// confidence, then lower index.
pub fn min_collision_mode(pred: &AgentPrediction, s: &Scenario, agent: usize) -> usize {
    let cur = current_state(s, agent);
    let mut best: Option<(usize, usize)> = None;
    for (k, m) in pred.modes.iter().enumerate() {
        let c = colliding_agents(s, agent, &mode_track(m, cur));
        best = match best {
            None => Some((k, c)),
            Some((b, bc)) => {
                if c < bc || (c == bc && pred.confidences[k] > pred.confidences[b]) {
                    Some((k, c))
                } else {
                    Some((b, bc))
                }
            }
        };
    }
    best.map(|b| b.0).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryBucket {
    Stationary,
    Straight,
    StraightLeft,
    StraightRight,
    Left,
    Right,
    LeftUTurn,
    RightUTurn,
}

impl TrajectoryBucket {
    pub const ALL: [TrajectoryBucket; 8] = [
        TrajectoryBucket::Stationary,
        TrajectoryBucket::Straight,
        TrajectoryBucket::StraightLeft,
        TrajectoryBucket::StraightRight,
        TrajectoryBucket::Left,
        TrajectoryBucket::Right,
        TrajectoryBucket::LeftUTurn,
        TrajectoryBucket::RightUTurn,
    ];

    /// From final displacement (m) and signed heading change (rad).
    pub fn classify(displacement: f64, dheading: f64) -> Self {
        let a = dheading.abs();
        let left = dheading > 0.0;
        if displacement < 2.0 {
            TrajectoryBucket::Stationary
        } else if a > 3.0 * PI / 4.0 {
            if left {
                TrajectoryBucket::LeftUTurn
            } else {
                TrajectoryBucket::RightUTurn
            }
        } else if a > PI / 6.0 {
            if left {
                TrajectoryBucket::Left
            } else {
                TrajectoryBucket::Right
            }
        } else if a > PI / 12.0 {
            if left {
                TrajectoryBucket::StraightLeft
            } else {
                TrajectoryBucket::StraightRight
            }
        } else {
            TrajectoryBucket::Straight
        }
    }
}

/// One agent's contribution to mAP: its ground-truth bucket and each
/// mode's (confidence, true positive).
#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub bucket: TrajectoryBucket,
    pub detections: Vec<(f64, bool)>,
}

/// Builds the mAP entry for one predicted agent; `None` without a valid
/// current state or future.
pub fn map_entry(pred: &AgentPrediction, current: &AgentState, gt_future: &[AgentState]) -> Option<MapEntry> {
    let last_t = gt_future.iter().rposition(|s| s.valid)?;
    let last = gt_future[last_t];
    let mut path_len = 0.0;
    let mut prev = current.position();
    for s in gt_future.iter().filter(|s| s.valid) {
        path_len += s.position().dist(prev);
        prev = s.position();
    }
    let bucket = TrajectoryBucket::classify(last.position().dist(current.position()), wrap_angle(last.heading - current.heading));
    let threshold = f64::max(2.0, 0.05 * path_len);
    let hits: Vec<bool> = pred.modes.iter().map(|m| m[last_t].dist(last.position()) < threshold).collect();
    let mut tp: Option<usize> = None;
    for (k, h) in hits.iter().enumerate() {
        if *h && tp.is_none_or(|b| pred.confidences[k] > pred.confidences[b]) {
            tp = Some(k);
        }
    }
    Some(MapEntry {
        bucket,
        detections: pred.confidences.iter().enumerate().map(|(k, c)| (*c, tp == Some(k))).collect(),
    })
}

/// 11-point interpolated AP. Equal confidences rank false positives first.
pub fn average_precision(detections: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut d = detections.to_vec();
    d.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut tp = 0usize;
    let mut pr: Vec<(f64, f64)> = Vec::with_capacity(d.len());
    for (k, (_, hit)) in d.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        pr.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    (0..=10)
        .map(|i| {
            let r = i as f64 / 10.0;
            pr.iter().filter(|(rec, _)| *rec >= r - 1e-12).map(|(_, p)| *p).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

/// Mean AP over buckets that contain at least one agent.
pub fn map_metric(entries: &[MapEntry]) -> f64 {
    let mut per: BTreeMap<TrajectoryBucket, (usize, Vec<(f64, bool)>)> = BTreeMap::new();
    for e in entries {
        let slot = per.entry(e.bucket).or_default();
        slot.0 += 1;
        slot.1.extend_from_slice(&e.detections);
    }
    if per.is_empty() {
        return 0.0;
    }
    per.values().map(|(n, d)| average_precision(d, *n)).sum::<f64>() / per.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub n_agents: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub collision_rate: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Mean over the classes present.
    pub overall: ClassMetrics,
    /// `scenario_id/agent_id` of agents without a valid future.
    pub skipped: Vec<String>,
}

#[derive(Default)]
struct ClassAcc {
    n: usize,
    ade: f64,
    fde: f64,
    collisions: usize,
    entries: Vec<MapEntry>,
}

/// Evaluates predictions over scenarios.
pub fn evaluate(scenarios: &[&Scenario], preds: &[AgentPrediction], rule: ModeRule) -> Result<EvalReport, EvalError> {
    let mut acc: BTreeMap<AgentType, ClassAcc> = BTreeMap::new();
    let mut skipped = Vec::new();
    for s in scenarios {
        let counts: BTreeMap<usize, usize> = collision_counts(preds, s, rule)?.into_iter().collect();
        for (k, p) in predictions_by_agent(s, preds)? {
            let agent = &s.agents[k];
            let gt_future = &agent.states[s.t_obs_idx + 1..];
            let (Some((ade, fde)), Some(cur)) = (min_ade_fde(&p.modes, gt_future), current_state(s, k)) else {
                skipped.push(format!("{}/{}", s.scenario_id, agent.agent_id));
                continue;
            };
            let a = acc.entry(agent.agent_type).or_default();
            a.n += 1;
            a.ade += ade;
            a.fde += fde;
            a.collisions += counts[&k];
            if let Some(e) = map_entry(p, cur, gt_future) {
                a.entries.push(e);
            }
        }
    }
    let mut report = EvalReport {
        skipped,
        ..Default::default()
    };
    for (t, a) in &acc {
        let n = a.n as f64;
        report.per_class.insert(
            t.as_str().to_string(),
            ClassMetrics {
                n_agents: a.n,
                min_ade: a.ade / n,
                min_fde: a.fde / n,
                collision_rate: a.collisions as f64 / n,
                map: map_metric(&a.entries),
            },
        );
    }
    let k = report.per_class.len();
    if k > 0 {
        let m = |f: fn(&ClassMetrics) -> f64| report.per_class.values().map(f).sum::<f64>() / k as f64;
        report.overall = ClassMetrics {
            n_agents: report.per_class.values().map(|c| c.n_agents).sum(),
            min_ade: m(|c| c.min_ade),
            min_fde: m(|c| c.min_fde),
            collision_rate: m(|c| c.collision_rate),
            map: m(|c| c.map),
        };
    }
    Ok(report)
}

impl EvalReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>8} {:>10} {:>10} {:>10} {:>8}\n", "class", "agents", "minADE", "minFDE", "CR", "mAP");
        let row = |name: &str, c: &ClassMetrics| {
            format!(
                "{:<12} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>8.4}\n",
                name, c.n_agents, c.min_ade, c.min_fde, c.collision_rate, c.map
            )
        };
        for (name, c) in &self.per_class {
            out.push_str(&row(name, c));
        }
        out.push_str(&row("overall", &self.overall));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeight {
    pub scenario_id: String,
    pub agent_id: String,
    pub weight: f64,
    pub score_fe: f64,
}

/// weight = 1 + scale·score_ac per agent.
pub fn loss_weights(scenario_id: &str, sets: &[TrajectoryScoreSet], scale: f64) -> Vec<LossWeight> {
    sets.iter()
        .map(|s| LossWeight {
            scenario_id: scenario_id.to_string(),
            agent_id: s.agent_id.clone(),
            weight: 1.0 + scale * s.ac,
            score_fe: s.fe,
        })
        .collect()
}
