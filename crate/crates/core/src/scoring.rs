//! Feature normalization, trajectory scores, the future-extrapolation
//! probe, and the scene score.

use crate::features::{IndividualFeatures, InteractionFeatures};
use crate::geometry::{frenet_decode, frenet_encode, wrap_angle, FrenetState, Point, Polyline};
use crate::lanes::{LaneIndex, LaneSequence};
use crate::scenario::AgentState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Identity,
    /// 1 / (x + ε): small times are critical.
    Inverse,
    /// 1 − x.
    Negate,
}

impl Orientation {
    pub fn for_feature(name: &str) -> Orientation {
        match name {
            "min_thw" | "min_ttc" | "min_delta_mttcp_traj" | "min_delta_mttcp_map" => Orientation::Inverse,
            "lane_following_fraction" => Orientation::Negate,
            _ => Orientation::Identity,
        }
    }

    pub fn apply(self, x: f64, epsilon: f64) -> f64 {
        match self {
            Orientation::Identity => x,
            Orientation::Inverse => {
                if x.is_infinite() && x > 0.0 {
                    0.0
                } else {
                    1.0 / (x.max(0.0) + epsilon)
                }
            }
            Orientation::Negate => 1.0 - x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub name: String,
    pub orientation: Orientation,
    /// Oriented value mapped to 0.
    pub lo: f64,
    /// Oriented value mapped to 1.
    pub hi: f64,
    /// Oriented 5th / 95th percentiles of the fit corpus.
    pub p05: f64,
    pub p95: f64,
    /// Every fit value was identical; everything maps to 0.5.
    pub constant: bool,
}

impl FeatureScale {
    fn fit(name: &str, raw: &mut [f64], epsilon: f64, warnings: &mut Vec<String>) -> Self {
        let orientation = Orientation::for_feature(name);
        let mut v: Vec<f64> = raw
            .iter()
            .map(|&x| orientation.apply(x, epsilon))
            .filter(|x| x.is_finite())
            .collect();
        v.sort_by(f64::total_cmp);
        let (p05, p95) = if v.is_empty() { (0.0, 0.0) } else { (quantile(&v, 0.05), quantile(&v, 0.95)) };
        let (min, max) = (v.first().copied().unwrap_or(0.0), v.last().copied().unwrap_or(0.0));
        let constant = max <= min;
        let (lo, hi) = if constant {
            warnings.push(format!("feature `{name}` is constant over the fit corpus; normalized to 0.5"));
            (min, max)
        } else if p95 > p05 {
            (p05, p95)
        } else {
            // Mass concentrated on one value (e.g. counts that are mostly 0):
            // the quantile range collapses, so fall back to the full range.
            (min, max)
        };
        FeatureScale {
            name: name.to_string(),
            orientation,
            lo,
            hi,
            p05,
            p95,
            constant,
        }
    }

    pub fn normalize(&self, x: f64, epsilon: f64) -> f64 {
        if self.constant {
            return 0.5;
        }
        let o = self.orientation.apply(x, epsilon);
        if o.is_nan() {
            return 0.0;
        }
        ((o - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub epsilon: f64,
    pub individual: Vec<FeatureScale>,
    pub interaction: Vec<FeatureScale>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScoringError {
    #[error("cannot fit a normalizer on an empty corpus")]
    EmptyCorpus,
    #[error("no weight for feature `{0}`")]
    MissingWeight(String),
    #[error("weight for feature `{0}` must be finite and non-negative")]
    BadWeight(String),
    #[error("normalizer feature list does not match the extractor: {0}")]
    FeatureMismatch(String),
}

impl FeatureNormalizer {
    /// Fits per-feature scales. Returns warnings for constant features.
    pub fn fit<'a>(
        individual: impl IntoIterator<Item = &'a IndividualFeatures>,
        interaction: impl IntoIterator<Item = &'a InteractionFeatures>,
        epsilon: f64,
    ) -> Result<(Self, Vec<String>), ScoringError> {
        let mut ind_cols: Vec<Vec<f64>> = vec![Vec::new(); IndividualFeatures::NAMES.len()];
        for f in individual {
            for (c, v) in ind_cols.iter_mut().zip(f.values()) {
                c.push(v);
            }
        }
        let mut int_cols: Vec<Vec<f64>> = vec![Vec::new(); InteractionFeatures::NAMES.len()];
        for f in interaction {
            for (c, v) in int_cols.iter_mut().zip(f.values()) {
                c.push(v);
            }
        }
        if ind_cols[0].is_empty() {
            return Err(ScoringError::EmptyCorpus);
        }
        let mut warnings = Vec::new();
        let individual = IndividualFeatures::NAMES
            .iter()
            .zip(ind_cols.iter_mut())
            .map(|(n, c)| FeatureScale::fit(n, c, epsilon, &mut warnings))
            .collect();
        // A corpus without any interacting pair still gets valid scales.
        let absent = InteractionFeatures::default().values();
        let interaction = InteractionFeatures::NAMES
            .iter()
            .zip(int_cols.iter_mut())
            .zip(absent)
            .map(|((n, c), a)| {
                if c.is_empty() {
                    c.push(a);
                }
                FeatureScale::fit(n, c, epsilon, &mut warnings)
            })
            .collect();
        Ok((
            Self {
                epsilon,
                individual,
                interaction,
            },
            warnings,
        ))
    }

    /// Checks that the feature lists line up with the extractor's names.
    pub fn check(&self) -> Result<(), ScoringError> {
        let ok_ind = self.individual.iter().map(|s| s.name.as_str()).eq(IndividualFeatures::NAMES);
        let ok_int = self.interaction.iter().map(|s| s.name.as_str()).eq(InteractionFeatures::NAMES);
        if ok_ind && ok_int {
            Ok(())
        } else {
            Err(ScoringError::FeatureMismatch("expected the current feature set in extractor order".into()))
        }
    }

    pub fn normalize_individual(&self, f: &IndividualFeatures) -> [f64; 7] {
        let v = f.values();
        std::array::from_fn(|k| self.individual[k].normalize(v[k], self.epsilon))
    }

    pub fn normalize_interaction(&self, f: &InteractionFeatures) -> [f64; 6] {
        let v = f.values();
        std::array::from_fn(|k| self.interaction[k].normalize(v[k], self.epsilon))
    }
}

/// Linear combination weights per feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub individual: BTreeMap<String, f64>,
    pub interaction: BTreeMap<String, f64>,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            individual: IndividualFeatures::NAMES.iter().map(|n| (n.to_string(), 1.0)).collect(),
            interaction: InteractionFeatures::NAMES.iter().map(|n| (n.to_string(), 1.0)).collect(),
        }
    }
}

/// Weights flattened into extractor order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedWeights {
    pub individual: [f64; 7],
    pub interaction: [f64; 6],
}

impl ScoreWeights {
    pub fn resolve(&self) -> Result<ResolvedWeights, ScoringError> {
        fn get(map: &BTreeMap<String, f64>, name: &str) -> Result<f64, ScoringError> {
            let w = *map.get(name).ok_or_else(|| ScoringError::MissingWeight(name.to_string()))?;
            if !w.is_finite() || w < 0.0 {
                return Err(ScoringError::BadWeight(name.to_string()));
            }
            Ok(w)
        }
        let mut individual = [0.0; 7];
        for (k, n) in IndividualFeatures::NAMES.iter().enumerate() {
            individual[k] = get(&self.individual, n)?;
        }
        let mut interaction = [0.0; 6];
        for (k, n) in InteractionFeatures::NAMES.iter().enumerate() {
            interaction[k] = get(&self.interaction, n)?;
        }
        Ok(ResolvedWeights { individual, interaction })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            individual: self.individual.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
            interaction: self.interaction.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
        }
    }
}

pub fn individual_score(f: &IndividualFeatures, norm: &FeatureNormalizer, w: &ResolvedWeights) -> f64 {
    norm.normalize_individual(f).iter().zip(&w.individual).map(|(x, w)| x * w).sum()
}

pub fn interaction_score(f: &InteractionFeatures, norm: &FeatureNormalizer, w: &ResolvedWeights) -> f64 {
    norm.normalize_interaction(f).iter().zip(&w.interaction).map(|(x, w)| x * w).sum()
}

/// Individual score plus the interaction score of every pair the agent is in.
pub fn trajectory_score(
    ind: &IndividualFeatures,
    inter: &[InteractionFeatures],
    norm: &FeatureNormalizer,
    weights: &ScoreWeights,
) -> Result<f64, ScoringError> {
    let w = weights.resolve()?;
    Ok(individual_score(ind, norm, &w) + inter.iter().map(|f| interaction_score(f, norm, &w)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtrapolationParams {
    /// Velocity is averaged over at most this many trailing intervals.
    pub velocity_window: usize,
    /// Successor lanes appended beyond the assigned sequence.
    pub max_successors: usize,
    /// Consecutive assigned lanes farther apart than this are a lane change,
    /// not a continuation, m.
    pub continuity_tolerance: f64,
}

impl Default for ExtrapolationParams {
    fn default() -> Self {
        Self {
            velocity_window: 5,
            max_successors: 8,
            continuity_tolerance: 1.0,
        }
    }
}

/// Reference polyline for extrapolation: the contiguous tail of the
/// assigned lane sequence, extended by first successors until it covers
/// `needed` arc length.
pub fn reference_polyline(seq: &LaneSequence, lanes: &LaneIndex, needed: f64, params: &ExtrapolationParams) -> Option<Polyline> {
    let ids = &seq.lane_indices;
    let mut start = ids.len().checked_sub(1)?;
    while start > 0 {
        let prev = lanes.get(ids[start - 1]).polyline.points();
        let cur = lanes.get(ids[start]).polyline.points();
        if prev[prev.len() - 1].dist(cur[0]) > params.continuity_tolerance {
            break;
        }
        start -= 1;
    }
    let mut chain: Vec<usize> = ids[start..].to_vec();
    let mut total: f64 = chain.iter().map(|&l| lanes.get(l).polyline.length()).sum();
    let mut added = 0;
    while total < needed && added < params.max_successors {
        let last = *chain.last().unwrap();
        let Some(&next) = lanes.get(last).successors.iter().filter(|s| !chain.contains(s)).min() else {
            break;
        };
        chain.push(next);
        total += lanes.get(next).polyline.length();
        added += 1;
    }
    Polyline::concat(chain.iter().map(|&l| lanes.get(l).polyline.points())).ok()
}

/// Counterfactual track: history unchanged, future rolled forward at the
/// agent's recent along-lane speed with its lateral offset held. Without a
/// lane assignment the roll-out is at constant Cartesian velocity.
///
/// `horizon` steps are appended after `t_obs_idx`.
pub fn future_extrapolate(
    states: &[AgentState],
    t_obs_idx: usize,
    seq: Option<&LaneSequence>,
    lanes: &LaneIndex,
    dt: f64,
    horizon: usize,
    params: &ExtrapolationParams,
) -> Vec<AgentState> {
    let hist = &states[..=t_obs_idx.min(states.len() - 1)];
    let mut out: Vec<AgentState> = hist.to_vec();
    out.reserve(horizon);
    let valid: Vec<usize> = (0..hist.len()).filter(|&t| hist[t].valid).collect();
    let Some(&t_last) = valid.last() else {
        out.extend(std::iter::repeat_n(AgentState::invalid(), horizon));
        return out;
    };
    let last = hist[t_last];
    if valid.len() < 2 {
        for _ in 0..horizon {
            out.push(AgentState::new(last.x, last.y, last.heading, 0.0, 0.0));
        }
        return out;
    }
    let t_first = valid[valid.len() - 1 - params.velocity_window.min(valid.len() - 1)];
    let span = (t_last - t_first) as f64 * dt;
    let lead = |k: usize| (t_obs_idx + k - t_last) as f64 * dt;

    if let Some(seq) = seq {
        let first_p = hist[t_first].position();
        let dist = last.position().dist(first_p);
        let needed = dist / span * (lead(horizon)) + 1.0;
        if let Some(reference) = reference_polyline(seq, lanes, needed, params) {
            let enc = frenet_encode(&[hist[t_first], last], &reference);
            let s_dot = (enc[1].progress() - enc[0].progress()) / span;
            let heading_offset = wrap_angle(last.heading - reference.heading_at(enc[1].progress()));
            let future: Vec<FrenetState> = (1..=horizon)
                .map(|k| FrenetState {
                    s: enc[1].progress() + s_dot * lead(k),
                    d: enc[1].d,
                    overshoot: 0.0,
                    valid: true,
                })
                .collect();
            for pose in frenet_decode(&future, &reference) {
                let v = Point::from_heading(pose.heading) * s_dot;
                out.push(AgentState::new(
                    pose.position.x,
                    pose.position.y,
                    wrap_angle(pose.heading + heading_offset),
                    v.x,
                    v.y,
                ));
            }
            return out;
        }
    }

    let v = (last.position() - hist[t_first].position()) * (1.0 / span);
    for k in 1..=horizon {
        let p = last.position() + v * lead(k);
        out.push(AgentState::new(p.x, p.y, last.heading, v.x, v.y));
    }
    out
}

/// Per-agent scores under every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScoreSet {
    pub agent_id: String,
    pub gt: f64,
    pub fe: f64,
    #[serde(rename = "as")]
    pub asym: f64,
    pub ac: f64,
}

impl TrajectoryScoreSet {
    /// max(gt, fe).
    pub fn combined(&self) -> f64 {
        self.gt.max(self.fe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    Gt,
    Fe,
    Combined,
    Asymmetric,
    AsymmetricCombined,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 5] = [
        ScoreVariant::Gt,
        ScoreVariant::Fe,
        ScoreVariant::Combined,
        ScoreVariant::Asymmetric,
        ScoreVariant::AsymmetricCombined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreVariant::Gt => "gt",
            ScoreVariant::Fe => "fe",
            ScoreVariant::Combined => "combined",
            ScoreVariant::Asymmetric => "asymmetric",
            ScoreVariant::AsymmetricCombined => "asymmetric_combined",
        }
    }

    pub fn of(self, s: &TrajectoryScoreSet) -> f64 {
        match self {
            ScoreVariant::Gt => s.gt,
            ScoreVariant::Fe => s.fe,
            ScoreVariant::Combined => s.combined(),
            ScoreVariant::Asymmetric => s.asym,
            ScoreVariant::AsymmetricCombined => s.ac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VariantScores {
    pub gt: f64,
    pub fe: f64,
    pub combined: f64,
    pub asymmetric: f64,
    pub asymmetric_combined: f64,
}

impl VariantScores {
    pub fn get(&self, v: ScoreVariant) -> f64 {
        match v {
            ScoreVariant::Gt => self.gt,
            ScoreVariant::Fe => self.fe,
            ScoreVariant::Combined => self.combined,
            ScoreVariant::Asymmetric => self.asymmetric,
            ScoreVariant::AsymmetricCombined => self.asymmetric_combined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scenario_id: String,
    /// Asymmetric-combined scene value.
    pub value: f64,
    pub n_agents: usize,
    pub n_predict: usize,
    pub variants: VariantScores,
}

/// Σ w_i·score_i / (P + √(N−P)) with w_i = 1/(1 + d_i).
pub fn scene_value(scores: &[f64], predict_distance: &[f64], n_predict: usize) -> f64 {
    let n = scores.len();
    let denom = n_predict as f64 + ((n - n_predict.min(n)) as f64).sqrt();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = scores
        .iter()
        .zip(predict_distance)
        .map(|(s, d)| if d.is_finite() { s / (1.0 + d) } else { 0.0 })
        .sum();
    num / denom
}

/// One agent's extracted features under the ground-truth and
/// extrapolated tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFeatures {
    pub agent_id: String,
    pub agent_type: crate::scenario::AgentType,
    pub to_predict: bool,
    /// Min-over-time center distance to the nearest predicted agent
    /// (0 for predicted agents).
    pub predict_distance: f64,
    pub gt: IndividualFeatures,
    pub fe: IndividualFeatures,
}

/// Pair features under each variant; `i < j` index into the agent list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub i: usize,
    pub j: usize,
    pub gt: InteractionFeatures,
    pub fe: InteractionFeatures,
    /// Agent i extrapolated, agent j ground truth.
    pub as_ij: InteractionFeatures,
    /// Agent j extrapolated, agent i ground truth.
    pub as_ji: InteractionFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFeatures {
    pub scenario_id: String,
    pub agents: Vec<AgentFeatures>,
    pub pairs: Vec<PairFeatures>,
}

impl SceneFeatures {
    pub fn n_predict(&self) -> usize {
        self.agents.iter().filter(|a| a.to_predict).count()
    }
}

/// Scores already-extracted scene features.
pub fn score_features(
    scene: &SceneFeatures,
    norm: &FeatureNormalizer,
    weights: &ResolvedWeights,
) -> (SceneScore, Vec<TrajectoryScoreSet>) {
    let n = scene.agents.len();
    let mut gt = vec![0.0; n];
    let mut fe = vec![0.0; n];
    let mut asym = vec![0.0; n];
    for (k, a) in scene.agents.iter().enumerate() {
        gt[k] = individual_score(&a.gt, norm, weights);
        let fe_ind = individual_score(&a.fe, norm, weights);
        fe[k] = fe_ind;
        asym[k] = fe_ind;
    }
    for p in &scene.pairs {
        let g = interaction_score(&p.gt, norm, weights);
        let f = interaction_score(&p.fe, norm, weights);
        gt[p.i] += g;
        gt[p.j] += g;
        fe[p.i] += f;
        fe[p.j] += f;
        asym[p.i] += interaction_score(&p.as_ij, norm, weights);
        asym[p.j] += interaction_score(&p.as_ji, norm, weights);
    }
    let sets: Vec<TrajectoryScoreSet> = scene
        .agents
        .iter()
        .enumerate()
        .map(|(k, a)| TrajectoryScoreSet {
            agent_id: a.agent_id.clone(),
            gt: gt[k],
            fe: fe[k],
            asym: asym[k],
            ac: gt[k].max(asym[k]),
        })
        .collect();
    let dist: Vec<f64> = scene.agents.iter().map(|a| a.predict_distance).collect();
    let p = scene.n_predict();
    let variant = |v: ScoreVariant| {
        let s: Vec<f64> = sets.iter().map(|t| v.of(t)).collect();
        scene_value(&s, &dist, p)
    };
    let variants = VariantScores {
        gt: variant(ScoreVariant::Gt),
        fe: variant(ScoreVariant::Fe),
        combined: variant(ScoreVariant::Combined),
        asymmetric: variant(ScoreVariant::Asymmetric),
        asymmetric_combined: variant(ScoreVariant::AsymmetricCombined),
    };
    (
        SceneScore {
            scenario_id: scene.scenario_id.clone(),
            value: variants.asymmetric_combined,
            n_agents: n,
            n_predict: p,
            variants,
        },
        sets,
    )
}
