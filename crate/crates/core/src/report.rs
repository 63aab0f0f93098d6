//! Correlation analysis, score histograms, and the long-format feature
//! table files.

use crate::features::{IndividualFeatures, InteractionFeatures};
use crate::scenario::AgentType;
use crate::scoring::{AgentFeatures, PairFeatures, SceneFeatures, SceneScore, ScoreVariant};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Rectangular numeric table; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    /// Row keys (scenario_id, agent_id).
    pub keys: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Individual ground-truth features, one row per agent.
    pub fn individual_gt(scenes: &[SceneFeatures]) -> Self {
        let mut t = FeatureTable {
            columns: IndividualFeatures::NAMES.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        for s in scenes {
            for a in &s.agents {
                t.keys.push((s.scenario_id.clone(), a.agent_id.clone()));
                t.rows.push(a.gt.values().to_vec());
            }
        }
        t
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Columns with zero variance; their off-diagonal coefficients are 0.
    pub zero_variance: Vec<String>,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).collect();
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson coefficients with pairwise deletion of non-finite values.
pub fn correlation_matrix(table: &FeatureTable, columns: &[&str]) -> CorrelationMatrix {
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| table.column(c).unwrap_or_default()).collect();
    let k = cols.len();
    let mut values = vec![vec![0.0; k]; k];
    let mut zero_variance = Vec::new();
    for i in 0..k {
        values[i][i] = 1.0;
        if pearson(&cols[i], &cols[i]).is_none() {
            zero_variance.push(columns[i].to_string());
        }
        for j in i + 1..k {
            let r = pearson(&cols[i], &cols[j]).unwrap_or(0.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    CorrelationMatrix {
        columns: columns.iter().map(|s| s.to_string()).collect(),
        values,
        zero_variance,
    }
}

impl CorrelationMatrix {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["feature".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for (name, row) in self.columns.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Counts / (n · bin width); integrates to 1.
    pub density: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
    /// Moment skewness m3 / m2^1.5; 0 for constant data.
    pub skewness: f64,
}

pub fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 <= 1e-300 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Density histogram with `bins` equal bins over [min, max]. Constant data
/// gets a unit-width range centred on the value.
pub fn score_histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let n = values.len();
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if n == 0 {
        (lo, hi) = (0.0, 1.0);
    } else if hi <= lo {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { hi } else { lo + width * k as f64 }).collect();
    let mut counts = vec![0usize; bins];
    for &x in values {
        let k = (((x - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(c, e)| if n == 0 { 0.0 } else { *c as f64 / (n as f64 * (e[1] - e[0])) })
        .collect();
    Histogram {
        edges,
        counts,
        density,
        mean: if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 },
        std: sample_std(values),
        skewness: skewness(values),
    }
}

/// One histogram per scene-score variant.
pub fn variant_histograms(scores: &[SceneScore], bins: usize) -> Vec<(ScoreVariant, Histogram)> {
    ScoreVariant::ALL
        .iter()
        .map(|v| {
            let vals: Vec<f64> = scores.iter().map(|s| s.variants.get(*v)).collect();
            (*v, score_histogram(&vals, bins))
        })
        .collect()
}

pub fn write_histograms_csv<W: Write>(hists: &[(ScoreVariant, Histogram)], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "bin_lo", "bin_hi", "count", "density"])?;
    for (v, h) in hists {
        for (k, c) in h.counts.iter().enumerate() {
            out.write_record([
                v.as_str().to_string(),
                h.edges[k].to_string(),
                h.edges[k + 1].to_string(),
                c.to_string(),
                h.density[k].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub const INDIVIDUAL_FILE: &str = "individual.csv";
pub const INTERACTION_FILE: &str = "interaction.csv";
pub const AGENTS_FILE: &str = "agents.csv";

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{file}: {message}")]
    Content { file: &'static str, message: String },
}

#[derive(Serialize, Deserialize)]
struct AgentRow {
    scenario_id: String,
    agent_id: String,
    agent_type: AgentType,
    to_predict: bool,
    predict_distance: f64,
}

#[derive(Serialize, Deserialize)]
struct IndividualRow {
    scenario_id: String,
    agent_id: String,
    feature_name: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct InteractionRow {
    scenario_id: String,
    agent_i: String,
    agent_j: String,
    feature_name: String,
    value: f64,
}

/// Writes the three long-format tables. Feature names carry the variant
/// as a prefix (`gt/`, `fe/`, `as/`); for `as/` rows `agent_i` is the
/// extrapolated agent.
pub fn write_feature_tables<W: Write>(scenes: &[SceneFeatures], agents: W, individual: W, interaction: W) -> Result<(), TableError> {
    let mut wa = csv::Writer::from_writer(agents);
    let mut wi = csv::Writer::from_writer(individual);
    let mut wp = csv::Writer::from_writer(interaction);
    for s in scenes {
        for a in &s.agents {
            wa.serialize(AgentRow {
                scenario_id: s.scenario_id.clone(),
                agent_id: a.agent_id.clone(),
                agent_type: a.agent_type,
                to_predict: a.to_predict,
                predict_distance: a.predict_distance,
            })?;
            for (variant, f) in [("gt", &a.gt), ("fe", &a.fe)] {
                for (name, v) in IndividualFeatures::NAMES.iter().zip(f.values()) {
                    wi.serialize(IndividualRow {
                        scenario_id: s.scenario_id.clone(),
                        agent_id: a.agent_id.clone(),
                        feature_name: format!("{variant}/{name}"),
                        value: v,
                    })?;
                }
            }
        }
        for p in &s.pairs {
            let (ai, aj) = (&s.agents[p.i].agent_id, &s.agents[p.j].agent_id);
            for (variant, x, y, f) in [("gt", ai, aj, &p.gt), ("fe", ai, aj, &p.fe), ("as", ai, aj, &p.as_ij), ("as", aj, ai, &p.as_ji)] {
                for (name, v) in InteractionFeatures::NAMES.iter().zip(f.values()) {
                    wp.serialize(InteractionRow {
                        scenario_id: s.scenario_id.clone(),
                        agent_i: x.clone(),
                        agent_j: y.clone(),
                        feature_name: format!("{variant}/{name}"),
                        value: v,
                    })?;
                }
            }
        }
    }
    wa.flush()?;
    wi.flush()?;
    wp.flush()?;
    Ok(())
}

/// Reads tables written by [`write_feature_tables`]. Scenario and agent
/// order follow the agents table.
pub fn read_feature_tables<R: Read>(agents: R, individual: R, interaction: R) -> Result<Vec<SceneFeatures>, TableError> {
    let mut scenes: Vec<SceneFeatures> = Vec::new();
    let mut scene_idx: BTreeMap<String, usize> = BTreeMap::new();
    let mut agent_idx: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for row in csv::Reader::from_reader(agents).deserialize() {
        let r: AgentRow = row?;
        let si = *scene_idx.entry(r.scenario_id.clone()).or_insert_with(|| {
            scenes.push(SceneFeatures {
                scenario_id: r.scenario_id.clone(),
                agents: Vec::new(),
                pairs: Vec::new(),
            });
            scenes.len() - 1
        });
        let ai = scenes[si].agents.len();
        agent_idx.insert((r.scenario_id.clone(), r.agent_id.clone()), (si, ai));
        scenes[si].agents.push(AgentFeatures {
            agent_id: r.agent_id,
            agent_type: r.agent_type,
            to_predict: r.to_predict,
            predict_distance: r.predict_distance,
            gt: IndividualFeatures::default(),
            fe: IndividualFeatures::default(),
        });
    }
    let bad = |file, message: String| TableError::Content { file, message };
    for row in csv::Reader::from_reader(individual).deserialize() {
        let r: IndividualRow = row?;
        let &(si, ai) = agent_idx
            .get(&(r.scenario_id.clone(), r.agent_id.clone()))
            .ok_or_else(|| bad(INDIVIDUAL_FILE, format!("unknown agent {}/{}", r.scenario_id, r.agent_id)))?;
        let (variant, name) = r.feature_name.split_once('/').ok_or_else(|| bad(INDIVIDUAL_FILE, format!("bad feature name {}", r.feature_name)))?;
        let k = IndividualFeatures::NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| bad(INDIVIDUAL_FILE, format!("unknown feature {name}")))?;
        let a = &mut scenes[si].agents[ai];
        let target = match variant {
            "gt" => &mut a.gt,
            "fe" => &mut a.fe,
            _ => return Err(bad(INDIVIDUAL_FILE, format!("unknown variant {variant}"))),
        };
        let mut v = target.values();
        v[k] = r.value;
        *target = IndividualFeatures::from_values(v);
    }
    let mut pairs: BTreeMap<(usize, usize, usize), PairFeatures> = BTreeMap::new();
    for row in csv::Reader::from_reader(interaction).deserialize() {
        let r: InteractionRow = row?;
        let lookup = |id: &str| {
            agent_idx
                .get(&(r.scenario_id.clone(), id.to_string()))
                .copied()
                .ok_or_else(|| bad(INTERACTION_FILE, format!("unknown agent {}/{id}", r.scenario_id)))
        };
        let (si, x) = lookup(&r.agent_i)?;
        let (_, y) = lookup(&r.agent_j)?;
        let (variant, name) = r.feature_name.split_once('/').ok_or_else(|| bad(INTERACTION_FILE, format!("bad feature name {}", r.feature_name)))?;
        let k = InteractionFeatures::NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| bad(INTERACTION_FILE, format!("unknown feature {name}")))?;
        let (i, j) = (x.min(y), x.max(y));
        let p = pairs.entry((si, i, j)).or_insert_with(|| PairFeatures {
            i,
            j,
            gt: InteractionFeatures::default(),
            fe: InteractionFeatures::default(),
            as_ij: InteractionFeatures::default(),
            as_ji: InteractionFeatures::default(),
        });
        let target = match (variant, x == i) {
            ("gt", _) => &mut p.gt,
            ("fe", _) => &mut p.fe,
            ("as", true) => &mut p.as_ij,
            ("as", false) => &mut p.as_ji,
            _ => return Err(bad(INTERACTION_FILE, format!("unknown variant {variant}"))),
        };
        let mut v = target.values();
        v[k] = r.value;
        *target = InteractionFeatures::from_values(v);
    }
    for ((si, _, _), p) in pairs {
        scenes[si].pairs.push(p);
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn table(cols: &[(&str, Vec<f64>)]) -> FeatureTable {
        let n = cols[0].1.len();
        FeatureTable {
            columns: cols.iter().map(|c| c.0.to_string()).collect(),
            keys: (0..n).map(|k| ("s".to_string(), k.to_string())).collect(),
            rows: (0..n).map(|r| cols.iter().map(|c| c.1[r]).collect()).collect(),
        }
    }

    #[test]
    fn self_and_negation() {
        let x: Vec<f64> = (0..20).map(|k| (k as f64).sin()).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = correlation_matrix(&table(&[("x", x), ("neg", neg)]), &["x", "neg"]);
        assert_eq!(m.values[0][0], 1.0);
        assert_abs_diff_eq!(m.values[0][1], -1.0, epsilon = 1e-12);
        assert_eq!(m.values[0][1], m.values[1][0]);
    }

    #[test]
    fn matches_independent_covariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.gen_range(-0.5..0.5)).collect();
        let m = correlation_matrix(&table(&[("x", x.clone()), ("y", y.clone())]), &["x", "y"]);
        // Two-pass sample covariance over sample standard deviations.
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
        assert_abs_diff_eq!(m.values[0][1], cov / (sample_std(&x) * sample_std(&y)), epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_is_flagged() {
        let m = correlation_matrix(&table(&[("c", vec![1.0; 5]), ("x", vec![1.0, 2.0, 3.0, 4.0, 5.0])]), &["c", "x"]);
        assert_eq!(m.zero_variance, vec!["c"]);
        assert_eq!(m.values[0][1], 0.0);
        assert_eq!(m.values[0][0], 1.0);
    }

    #[test]
    fn missing_values_dropped_pairwise() {
        let x = vec![1.0, 2.0, f64::NAN, 4.0];
        let y = vec![2.0, 4.0, 100.0, 8.0];
        let m = correlation_matrix(&table(&[("x", x), ("y", y)]), &["x", "y"]);
        assert_abs_diff_eq!(m.values[0][1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_histogram() {
        let h = score_histogram(&[2.0; 10], 100);
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.skewness, 0.0);
    }

    #[test]
    fn exponential_scores_are_right_skewed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..5000).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let h = score_histogram(&v, 100);
        assert!(h.skewness > 1.0);
        assert_eq!(h.counts.iter().sum::<usize>(), v.len());
        let integral: f64 = h.density.iter().zip(h.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn feature_tables_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut ind = || IndividualFeatures::from_values(std::array::from_fn(|_| rng.gen_range(0.0..3.0)));
        let agents: Vec<AgentFeatures> = (0..3)
            .map(|k| AgentFeatures {
                agent_id: format!("a{k}"),
                agent_type: AgentType::Cyclist,
                to_predict: k == 1,
                predict_distance: k as f64,
                gt: ind(),
                fe: ind(),
            })
            .collect();
        let f = |x: f64| InteractionFeatures {
            min_thw: x,
            min_ttc: f64::INFINITY,
            max_drac: 0.5,
            min_delta_mttcp_traj: 1.0,
            min_delta_mttcp_map: f64::INFINITY,
            collision_count: 2.0,
        };
        let scenes = vec![SceneFeatures {
            scenario_id: "s".into(),
            agents,
            pairs: vec![PairFeatures {
                i: 0,
                j: 2,
                gt: f(1.0),
                fe: f(2.0),
                as_ij: f(3.0),
                as_ji: f(4.0),
            }],
        }];
        let (mut a, mut i, mut p) = (Vec::new(), Vec::new(), Vec::new());
        write_feature_tables(&scenes, &mut a, &mut i, &mut p).unwrap();
        let back = read_feature_tables(&a[..], &i[..], &p[..]).unwrap();
        assert_eq!(back, scenes);
    }
}
