//! Corpus orchestration: loading, per-scene feature extraction (ground
//! truth and the constant-velocity probe), normalizer fit and scoring.

use crate::anomaly::{fit_primitive_clusters, to_primitive, AnomalyError, PrimitiveModel};
use crate::config::PipelineConfig;
use crate::features::individual::{extract_individual, ConflictRegions};
use crate::features::interaction::pair_features;
use crate::features::{min_center_distance, IndividualFeatures, PreparedTrack};
use crate::lanes::{assign_lane_sequence, LaneIndex, LaneSequence};
use crate::scenario::{parse_scenario, AgentState, AgentType, ParseError, Scenario};
use crate::scoring::{
    future_extrapolate, score_features, AgentFeatures, FeatureNormalizer, PairFeatures, ResolvedWeights, SceneFeatures, SceneScore,
    ScoringError, TrajectoryScoreSet, VariantScores,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("duplicate scenario id `{0}`")]
    DuplicateId(String),
}

/// Scenario files in a directory (`*.json`, one scenario; `*.jsonl`, one per
/// line), sorted by file name, then line.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let io = |source| LoadError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")))
        .collect();
    files.sort();
    Ok(files)
}

/// Parses one file; returns the scenarios and parser warnings.
pub fn load_file(path: &Path) -> Result<(Vec<Scenario>, Vec<String>), LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let jsonl = path.extension().and_then(|e| e.to_str()) == Some("jsonl");
    let docs: Vec<(String, &str)> = if jsonl {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| (format!("{}:{}", path.display(), k + 1), l))
            .collect()
    } else {
        vec![(path.display().to_string(), text.as_str())]
    };
    let mut out = Vec::with_capacity(docs.len());
    let mut warnings = Vec::new();
    for (where_, doc) in docs {
        let parsed = parse_scenario(doc).map_err(|source| LoadError::Parse {
            path: where_.clone(),
            source,
        })?;
        warnings.extend(parsed.warnings.into_iter().map(|w| format!("{where_}: {w}")));
        out.push(parsed.scenario);
    }
    Ok((out, warnings))
}

/// Every scenario under `dir`; ids must be unique.
pub fn load_dir(dir: &Path) -> Result<(Vec<Scenario>, Vec<String>), LoadError> {
    let files = scenario_files(dir)?;
    let loaded: Vec<_> = files.par_iter().map(|p| load_file(p)).collect::<Result<_, _>>()?;
    let mut scenarios = Vec::new();
    let mut warnings = Vec::new();
    for (s, w) in loaded {
        scenarios.extend(s);
        warnings.extend(w);
    }
    let mut ids: Vec<&str> = scenarios.iter().map(|s| s.scenario_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(LoadError::DuplicateId(w[0].to_string()));
    }
    Ok((scenarios, warnings))
}

/// Lane sequence for an agent; pedestrians are never lane-assigned.
fn lane_sequence(agent_type: AgentType, states: &[AgentState], lanes: &LaneIndex, cfg: &PipelineConfig) -> Option<LaneSequence> {
    if agent_type == AgentType::Pedestrian || lanes.is_empty() {
        return None;
    }
    assign_lane_sequence(states, lanes, &cfg.assignment)
}

/// Individual-track primitives of every agent, for fitting the anomaly model.
pub fn corpus_primitives(scenarios: &[Scenario], resample_len: usize) -> Vec<Vec<f64>> {
    scenarios
        .par_iter()
        .flat_map_iter(|s| s.agents.iter().filter(|a| a.num_valid() >= 2).map(move |a| to_primitive(&a.states, resample_len)))
        .collect()
}

pub fn fit_anomaly_model(
    scenarios: &[Scenario],
    cfg: &PipelineConfig,
    partition: &str,
) -> Result<(PrimitiveModel, Vec<String>), AnomalyError> {
    let ids = scenarios.iter().map(|s| s.scenario_id.clone()).collect();
    fit_primitive_clusters(&corpus_primitives(scenarios, cfg.anomaly.resample_len), &cfg.anomaly, partition, ids)
}

struct AgentTracks<'a> {
    gt: PreparedTrack<'a>,
    fe: PreparedTrack<'static>,
    gt_features: IndividualFeatures,
    fe_features: IndividualFeatures,
}

/// Features of one scene under the ground truth and the probe.
///
/// The probe uses only the observed history (lane assignment included);
/// pairs are kept when any ground-truth / probe combination comes within
/// the gate distance.
pub fn extract_scene_features(s: &Scenario, model: Option<&PrimitiveModel>, cfg: &PipelineConfig) -> SceneFeatures {
    let lanes = LaneIndex::from_scenario(s);
    let regions = ConflictRegions::new(&s.map_features, &lanes, cfg.individual.junction_tolerance);
    let horizon = s.t_tot.saturating_sub(s.t_obs_idx + 1);
    let reach = cfg.interaction.reach_radius;
    let anomaly = |states: &[AgentState]| match model {
        Some(m) if states.iter().filter(|st| st.valid).count() >= 2 => m.score_track(states),
        _ => 0.0,
    };

    let tracks: Vec<AgentTracks<'_>> = s
        .agents
        .iter()
        .map(|a| {
            let gt = PreparedTrack::from_agent(a, s.dt, &s.map_features, reach);
            let gt_seq = lane_sequence(a.agent_type, &a.states, &lanes, cfg);
            let mut gt_features = extract_individual(&gt, gt_seq.as_ref(), &lanes, &regions, s.dt, &cfg.individual);
            gt_features.anomaly = anomaly(&a.states);

            let hist_end = s.t_obs_idx.min(a.states.len().saturating_sub(1));
            let hist_seq = lane_sequence(a.agent_type, &a.states[..=hist_end], &lanes, cfg);
            let fe_states = future_extrapolate(&a.states, s.t_obs_idx, hist_seq.as_ref(), &lanes, s.dt, horizon, &cfg.extrapolation);
            let fe_seq = lane_sequence(a.agent_type, &fe_states, &lanes, cfg);
            let fe = PreparedTrack::with_states(a, fe_states, s.dt, &s.map_features, reach);
            let mut fe_features = extract_individual(&fe, fe_seq.as_ref(), &lanes, &regions, s.dt, &cfg.individual);
            fe_features.anomaly = anomaly(&fe.states);
            AgentTracks {
                gt,
                fe,
                gt_features,
                fe_features,
            }
        })
        .collect();

    let predict: Vec<usize> = (0..s.agents.len()).filter(|&k| s.agents[k].to_predict).collect();
    let agents = s
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let predict_distance = if a.to_predict {
                0.0
            } else {
                predict
                    .iter()
                    .map(|&j| min_center_distance(&a.states, &s.agents[j].states))
                    .fold(f64::INFINITY, f64::min)
            };
            AgentFeatures {
                agent_id: a.agent_id.clone(),
                agent_type: a.agent_type,
                to_predict: a.to_predict,
                predict_distance,
                gt: tracks[i].gt_features,
                fe: tracks[i].fe_features,
            }
        })
        .collect();

    let gate = cfg.interaction.gate_distance;
    let mut pairs = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            let (ti, tj) = (&tracks[i], &tracks[j]);
            let near = |a: &PreparedTrack<'_>, b: &PreparedTrack<'_>| {
                a.path.bbox.inflate(gate).intersects(&b.path.bbox) && min_center_distance(&a.states, &b.states) <= gate
            };
            if !(near(&ti.gt, &tj.gt) || near(&ti.fe, &tj.fe) || near(&ti.fe, &tj.gt) || near(&ti.gt, &tj.fe)) {
                continue;
            }
            let pf = |a: &PreparedTrack<'_>, b: &PreparedTrack<'_>| pair_features(a, b, &s.map_features, s.dt, &cfg.interaction);
            pairs.push(PairFeatures {
                i,
                j,
                gt: pf(&ti.gt, &tj.gt),
                fe: pf(&ti.fe, &tj.fe),
                as_ij: pf(&ti.fe, &tj.gt),
                as_ji: pf(&ti.gt, &tj.fe),
            });
        }
    }

    SceneFeatures {
        scenario_id: s.scenario_id.clone(),
        agents,
        pairs,
    }
}

/// Parallel extraction, output in input order.
pub fn extract_corpus(scenarios: &[Scenario], model: Option<&PrimitiveModel>, cfg: &PipelineConfig) -> Vec<SceneFeatures> {
    scenarios.par_iter().map(|s| extract_scene_features(s, model, cfg)).collect()
}

/// Normalizer fit pooling every variant's features.
pub fn fit_normalizer(scenes: &[SceneFeatures], epsilon: f64) -> Result<(FeatureNormalizer, Vec<String>), ScoringError> {
    let ind = scenes.iter().flat_map(|s| s.agents.iter().flat_map(|a| [&a.gt, &a.fe]));
    let int = scenes.iter().flat_map(|s| s.pairs.iter().flat_map(|p| [&p.gt, &p.fe, &p.as_ij, &p.as_ji]));
    FeatureNormalizer::fit(ind, int, epsilon)
}

/// One line of the score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub scenario_id: String,
    pub value: f64,
    pub n_agents: usize,
    pub n_predict: usize,
    pub variants: VariantScores,
    pub agents: Vec<TrajectoryScoreSet>,
}

impl ScoreRecord {
    pub fn new(scene: SceneScore, agents: Vec<TrajectoryScoreSet>) -> Self {
        Self {
            scenario_id: scene.scenario_id,
            value: scene.value,
            n_agents: scene.n_agents,
            n_predict: scene.n_predict,
            variants: scene.variants,
            agents,
        }
    }

    pub fn scene(&self) -> SceneScore {
        SceneScore {
            scenario_id: self.scenario_id.clone(),
            value: self.value,
            n_agents: self.n_agents,
            n_predict: self.n_predict,
            variants: self.variants,
        }
    }
}

pub fn score_corpus(scenes: &[SceneFeatures], norm: &FeatureNormalizer, weights: &ResolvedWeights) -> Vec<ScoreRecord> {
    scenes
        .par_iter()
        .map(|s| {
            let (scene, agents) = score_features(s, norm, weights);
            ScoreRecord::new(scene, agents)
        })
        .collect()
}

pub fn write_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("score records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_scores(text: &str) -> Result<Vec<ScoreRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| serde_json::from_str(l).map_err(|e| (k + 1, e)))
        .collect()
}

/// End-to-end for one scene against a fitted normalizer.
pub fn score_scene(
    s: &Scenario,
    model: Option<&PrimitiveModel>,
    norm: &FeatureNormalizer,
    cfg: &PipelineConfig,
) -> Result<ScoreRecord, ScoringError> {
    let weights = cfg.weights.resolve()?;
    let (scene, agents) = score_features(&extract_scene_features(s, model, cfg), norm, &weights);
    Ok(ScoreRecord::new(scene, agents))
}

/// Full corpus run: fit anomaly model and normalizer on `scenarios`, then
/// extract and score every scene.
pub struct CorpusRun {
    pub model: PrimitiveModel,
    pub features: Vec<SceneFeatures>,
    pub normalizer: FeatureNormalizer,
    pub scores: Vec<ScoreRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Anomaly(#[from] AnomalyError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

pub fn run_corpus(scenarios: &[Scenario], cfg: &PipelineConfig) -> Result<CorpusRun, RunError> {
    let (model, mut warnings) = fit_anomaly_model(scenarios, cfg, "all")?;
    let features = extract_corpus(scenarios, Some(&model), cfg);
    let (normalizer, w) = fit_normalizer(&features, cfg.scoring.epsilon)?;
    warnings.extend(w);
    let scores = score_corpus(&features, &normalizer, &cfg.weights.resolve()?);
    Ok(CorpusRun {
        model,
        features,
        normalizer,
        scores,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_scenario, SynthKind, SynthParams};

    #[test]
    fn leader_follower_pair_is_extracted() {
        let s = gen_scenario(&SynthParams::new(SynthKind::LeaderFollower, 0));
        let f = extract_scene_features(&s, None, &PipelineConfig::default());
        assert_eq!(f.pairs.len(), 1);
        assert!((f.pairs[0].gt.min_ttc - 4.0).abs() < 1e-6 * 4.0);
        // Both agents drive at constant speed on the lane: the probe is the
        // ground truth.
        assert!((f.pairs[0].fe.min_ttc - 4.0).abs() < 1e-6 * 4.0);
        assert_eq!(f.agents[0].predict_distance, 0.0);
    }

    #[test]
    fn cut_in_probe_collides() {
        let s = gen_scenario(&SynthParams::new(SynthKind::CutIn, 0));
        let f = extract_scene_features(&s, None, &PipelineConfig::default());
        let p = f.pairs.iter().find(|p| p.i == 0 && p.j == 1).unwrap();
        assert_eq!(p.gt.collision_count, 0.0);
        assert!(p.as_ij.collision_count >= 1.0);
    }

    #[test]
    fn corpus_run_is_deterministic() {
        let scenarios = crate::synth::corpus(SynthKind::RandomMix, 40, 1);
        let cfg = PipelineConfig::default();
        let a = run_corpus(&scenarios, &cfg).unwrap();
        let b = run_corpus(&scenarios, &cfg).unwrap();
        assert_eq!(write_scores(&a.scores), write_scores(&b.scores));
        let back = read_scores(&write_scores(&a.scores)).unwrap();
        assert_eq!(back, a.scores);
    }
}
