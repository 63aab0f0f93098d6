//! Canonical scenario representation: agent tracks, lane graph, map
//! features and the history/future timebase.
//!
//! On disk a scenario is a self-contained JSON document carrying
//! `"schema_version": 1`. Invalid timesteps stay in-band with
//! `valid: false`; every consumer skips them.

use crate::geometry::{polygon_is_simple, wrap_angle, Point};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Range;

pub const SCHEMA_VERSION: u32 = 1;

/// Default 10 Hz timebase with 1.1 s of history and 8 s of future.
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_T_OBS_IDX: usize = 10;
pub const DEFAULT_T_TOT: usize = 91;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub valid: bool,
}

impl AgentState {
    pub fn new(x: f64, y: f64, heading: f64, vx: f64, vy: f64) -> Self {
        Self {
            x,
            y,
            heading,
            vx,
            vy,
            valid: true,
        }
    }

    pub fn invalid() -> Self {
        Self::default()
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::Vehicle, AgentType::Pedestrian, AgentType::Cyclist];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentType::Vehicle => "vehicle",
            AgentType::Pedestrian => "pedestrian",
            AgentType::Cyclist => "cyclist",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: String,
    pub agent_type: AgentType,
    pub length: f64,
    pub width: f64,
    pub states: Vec<AgentState>,
    pub to_predict: bool,
}

impl AgentTrack {
    pub fn num_valid(&self) -> usize {
        self.states.iter().filter(|s| s.valid).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneType {
    SurfaceStreet,
    Freeway,
    BikeLane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub lane_id: String,
    pub centerline: Vec<Point>,
    #[serde(default)]
    pub speed_limit: Option<f64>,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default)]
    pub predecessors: Vec<String>,
    pub lane_type: LaneType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFeatureKind {
    Crosswalk,
    StopSign,
    SpeedBump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Polygon(Vec<Point>),
    Point(Point),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFeature {
    pub feature_id: String,
    pub kind: MapFeatureKind,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scenario_id: String,
    pub dt: f64,
    pub t_obs_idx: usize,
    pub t_tot: usize,
    pub agents: Vec<AgentTrack>,
    pub lanes: BTreeMap<String, Lane>,
    pub map_features: Vec<MapFeature>,
}

#[derive(Deserialize)]
struct RawScenario {
    schema_version: u32,
    scenario_id: String,
    dt: f64,
    t_obs_idx: usize,
    t_tot: usize,
    agents: Vec<AgentTrack>,
    #[serde(default)]
    lanes: BTreeMap<String, Lane>,
    #[serde(default)]
    map_features: Vec<MapFeature>,
}

#[derive(Serialize)]
struct ScenarioDoc<'a> {
    schema_version: u32,
    scenario_id: &'a str,
    dt: f64,
    t_obs_idx: usize,
    t_tot: usize,
    agents: &'a [AgentTrack],
    lanes: &'a BTreeMap<String, Lane>,
    map_features: &'a [MapFeature],
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("t_obs_idx out of range: {t_obs_idx} with t_tot {t_tot}")]
    TObsOutOfRange { t_obs_idx: usize, t_tot: usize },
    #[error("scenario `{scenario_id}` failed validation: {report}")]
    Invalid { scenario_id: String, report: ValidationReport },
}

/// A parsed scenario and the non-fatal issues repaired while parsing.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

pub fn parse_scenario(text: &str) -> Result<Parsed, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| ParseError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ParseError::UnsupportedVersion(raw.schema_version));
    }
    if raw.t_obs_idx < 1 || raw.t_obs_idx + 1 >= raw.t_tot {
        return Err(ParseError::TObsOutOfRange {
            t_obs_idx: raw.t_obs_idx,
            t_tot: raw.t_tot,
        });
    }
    let mut warnings = Vec::new();
    for (key, lane) in &raw.lanes {
        if *key != lane.lane_id {
            return Err(ParseError::Schema {
                path: format!("lanes.{key}.lane_id"),
                message: format!("lane_id `{}` does not match its key", lane.lane_id),
            });
        }
    }
    let known: HashSet<String> = raw.lanes.keys().cloned().collect();
    let mut lanes = raw.lanes;
    for lane in lanes.values_mut() {
        let id = lane.lane_id.clone();
        for (field, refs) in [("successors", &mut lane.successors), ("predecessors", &mut lane.predecessors)] {
            refs.retain(|r| {
                let ok = known.contains(r);
                if !ok {
                    warnings.push(format!("lane `{id}`: dropped dangling {field} reference `{r}`"));
                }
                ok
            });
        }
        let before = lane.centerline.len();
        lane.centerline.dedup_by(|b, a| a.dist(*b) <= 1e-9);
        if lane.centerline.len() != before {
            warnings.push(format!(
                "lane `{id}`: dropped {} repeated centerline point(s)",
                before - lane.centerline.len()
            ));
        }
    }
    let mut agents = raw.agents;
    for a in &mut agents {
        for st in &mut a.states {
            if st.valid {
                st.heading = wrap_angle(st.heading);
            }
        }
    }
    let scenario = Scenario {
        scenario_id: raw.scenario_id,
        dt: raw.dt,
        t_obs_idx: raw.t_obs_idx,
        t_tot: raw.t_tot,
        agents,
        lanes,
        map_features: raw.map_features,
    };
    let report = validate_scenario(&scenario);
    if !report.is_empty() {
        return Err(ParseError::Invalid {
            scenario_id: scenario.scenario_id,
            report,
        });
    }
    Ok(Parsed { scenario, warnings })
}

/// Canonical serialization (compact JSON, deterministic field order).
pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string(&ScenarioDoc {
        schema_version: SCHEMA_VERSION,
        scenario_id: &s.scenario_id,
        dt: s.dt,
        t_obs_idx: s.t_obs_idx,
        t_tot: s.t_tot,
        agents: &s.agents,
        lanes: &s.lanes,
        map_features: &s.map_features,
    })
    .expect("scenario serialization is infallible")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCode {
    NonPositiveDt,
    TObsOutOfRange,
    NoAgents,
    NoPredictAgent,
    DuplicateAgentId,
    StateLengthMismatch,
    NoValidStates,
    NonPositiveDimension,
    NonFiniteValue,
    HeadingNotNormalized,
    LaneKeyMismatch,
    DegenerateCenterline,
    DanglingLaneReference,
    InvalidPolygon,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NonPositiveDt => "NON_POSITIVE_DT",
            Self::TObsOutOfRange => "T_OBS_OUT_OF_RANGE",
            Self::NoAgents => "NO_AGENTS",
            Self::NoPredictAgent => "NO_PREDICT_AGENT",
            Self::DuplicateAgentId => "DUPLICATE_AGENT_ID",
            Self::StateLengthMismatch => "STATE_LENGTH_MISMATCH",
            Self::NoValidStates => "NO_VALID_STATES",
            Self::NonPositiveDimension => "NON_POSITIVE_DIMENSION",
            Self::NonFiniteValue => "NON_FINITE_VALUE",
            Self::HeadingNotNormalized => "HEADING_NOT_NORMALIZED",
            Self::LaneKeyMismatch => "LANE_KEY_MISMATCH",
            Self::DegenerateCenterline => "DEGENERATE_CENTERLINE",
            Self::DanglingLaneReference => "DANGLING_LANE_REFERENCE",
            Self::InvalidPolygon => "INVALID_POLYGON",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} at {}: {}", v.code, v.path, v.message)?;
        }
        Ok(())
    }
}

/// Lists every invariant violation. Pure; never fails.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    use ViolationCode::*;
    let mut r = ValidationReport::default();
    if !(s.dt > 0.0 && s.dt.is_finite()) {
        r.push(NonPositiveDt, "dt", format!("dt = {}", s.dt));
    }
    if s.t_obs_idx < 1 || s.t_obs_idx + 1 >= s.t_tot {
        r.push(TObsOutOfRange, "t_obs_idx", format!("{} with t_tot {}", s.t_obs_idx, s.t_tot));
    }
    if s.agents.is_empty() {
        r.push(NoAgents, "agents", "scenario has no agents");
    } else if !s.agents.iter().any(|a| a.to_predict) {
        r.push(NoPredictAgent, "agents", "no agent has to_predict = true");
    }
    let mut seen = HashSet::new();
    for (i, a) in s.agents.iter().enumerate() {
        let path = format!("agents[{i}]");
        if !seen.insert(a.agent_id.as_str()) {
            r.push(DuplicateAgentId, format!("{path}.agent_id"), format!("`{}` repeated", a.agent_id));
        }
        if !(a.length > 0.0 && a.length.is_finite() && a.width > 0.0 && a.width.is_finite()) {
            r.push(NonPositiveDimension, &path, format!("length {} width {}", a.length, a.width));
        }
        if a.states.len() != s.t_tot {
            r.push(
                StateLengthMismatch,
                format!("{path}.states"),
                format!("{} states, t_tot {}", a.states.len(), s.t_tot),
            );
        }
        if a.num_valid() == 0 {
            r.push(NoValidStates, format!("{path}.states"), format!("agent `{}`", a.agent_id));
        }
        for (t, st) in a.states.iter().enumerate().filter(|(_, st)| st.valid) {
            let vals = [st.x, st.y, st.heading, st.vx, st.vy];
            if vals.iter().any(|v| !v.is_finite()) {
                r.push(NonFiniteValue, format!("{path}.states[{t}]"), "non-finite field");
            } else if !(st.heading > -std::f64::consts::PI && st.heading <= std::f64::consts::PI) {
                r.push(HeadingNotNormalized, format!("{path}.states[{t}].heading"), format!("{}", st.heading));
            }
        }
    }
    for (key, lane) in &s.lanes {
        let path = format!("lanes.{key}");
        if *key != lane.lane_id {
            r.push(LaneKeyMismatch, &path, format!("lane_id `{}`", lane.lane_id));
        }
        let cl = &lane.centerline;
        if cl.len() < 2 || cl.windows(2).any(|w| w[0] == w[1]) || cl.iter().any(|p| !p.is_finite()) {
            r.push(DegenerateCenterline, format!("{path}.centerline"), "needs >= 2 distinct finite points");
        }
        for r_id in lane.successors.iter().chain(&lane.predecessors) {
            if !s.lanes.contains_key(r_id) {
                r.push(DanglingLaneReference, &path, format!("unknown lane `{r_id}`"));
            }
        }
    }
    for (i, f) in s.map_features.iter().enumerate() {
        match &f.geometry {
            Geometry::Polygon(pts) if !polygon_is_simple(pts) => {
                r.push(InvalidPolygon, format!("map_features[{i}].geometry"), "polygon is not simple");
            }
            Geometry::Point(p) if !p.is_finite() => {
                r.push(NonFiniteValue, format!("map_features[{i}].geometry"), "non-finite point");
            }
            _ => {}
        }
    }
    r
}

/// Non-copying projection of a scenario onto a contiguous timestep range.
#[derive(Debug, Clone, Copy)]
pub struct TimeView<'a> {
    scenario: &'a Scenario,
    start: usize,
    end: usize,
}

impl<'a> TimeView<'a> {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn states(&self, agent: usize) -> &'a [AgentState] {
        &self.scenario.agents[agent].states[self.start..self.end]
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }
}

/// History covers `[0, t_obs_idx]`, future covers `(t_obs_idx, t_tot)`.
pub fn split_history_future(s: &Scenario) -> (TimeView<'_>, TimeView<'_>) {
    let cut = s.t_obs_idx + 1;
    (
        TimeView {
            scenario: s,
            start: 0,
            end: cut,
        },
        TimeView {
            scenario: s,
            start: cut,
            end: s.t_tot,
        },
    )
}

impl Scenario {
    pub fn agent_index(&self, agent_id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.agent_id == agent_id)
    }

    pub fn num_predict(&self) -> usize {
        self.agents.iter().filter(|a| a.to_predict).count()
    }

    pub fn future_len(&self) -> usize {
        self.t_tot - self.t_obs_idx - 1
    }
}
