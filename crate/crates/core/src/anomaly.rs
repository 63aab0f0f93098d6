//! Traffic-primitive anomaly scoring.
//!
//! Trajectories (or pairs) are resampled to a fixed number of equal-time
//! points and canonicalized into a start-anchored frame. A seeded k-means
//! model over standardized primitives scores new primitives by distance to
//! the nearest centroid, in units of the median training distance.

use crate::geometry::Point;
use crate::scenario::AgentState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyParams {
    pub k: usize,
    /// Resample length M.
    pub resample_len: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for AnomalyParams {
    fn default() -> Self {
        Self {
            k: 32,
            resample_len: 16,
            max_iter: 100,
            seed: 0,
        }
    }
}

/// Linear-in-time resample of the valid positions in `window` to `m` points.
fn resample(states: &[AgentState], window: (usize, usize), m: usize) -> Option<Vec<Point>> {
    let valid: Vec<(f64, Point)> = (window.0..=window.1)
        .filter(|&t| states[t].valid)
        .map(|t| (t as f64, states[t].position()))
        .collect();
    if valid.len() < 2 || m < 2 {
        return None;
    }
    let (t0, t1) = (valid[0].0, valid[valid.len() - 1].0);
    let mut out = Vec::with_capacity(m);
    let mut k = 0;
    for i in 0..m {
        let t = t0 + (t1 - t0) * i as f64 / (m - 1) as f64;
        while k + 2 < valid.len() && valid[k + 1].0 < t {
            k += 1;
        }
        let (ta, pa) = valid[k];
        let (tb, pb) = valid[k + 1];
        let u = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(pa + (pb - pa) * u);
    }
    Some(out)
}

fn valid_span(states: &[AgentState]) -> Option<(usize, usize)> {
    let first = states.iter().position(|s| s.valid)?;
    let last = states.iter().rposition(|s| s.valid)?;
    Some((first, last))
}

/// Frame anchored at the first point, x axis along the first non-zero
/// displacement. `None` when every point coincides.
fn canonical_frame(pts: &[Point]) -> Option<(Point, f64)> {
    let origin = pts[0];
    let dir = pts.iter().map(|p| *p - origin).find(|d| d.norm() > 1e-9)?;
    Some((origin, dir.heading()))
}

fn push_in_frame(out: &mut Vec<f64>, pts: &[Point], frame: (Point, f64)) {
    for p in pts {
        let q = (*p - frame.0).rotate(-frame.1);
        out.push(q.x);
        out.push(q.y);
    }
}

/// Individual primitive: M×2 flattened canonical positions. Degenerate
/// tracks (fewer than two valid steps, or no motion) give the zero vector.
pub fn to_primitive(states: &[AgentState], m: usize) -> Vec<f64> {
    let zero = vec![0.0; 2 * m];
    let Some(span) = valid_span(states) else {
        return zero;
    };
    let Some(pts) = resample(states, span, m) else {
        return zero;
    };
    let Some(frame) = canonical_frame(&pts) else {
        return zero;
    };
    let mut out = Vec::with_capacity(2 * m);
    push_in_frame(&mut out, &pts, frame);
    out
}

/// Pair primitive over the common valid window, both tracks expressed in
/// the frame of `anchor` (the lower agent id). Length 4M.
pub fn to_pair_primitive(anchor: &[AgentState], other: &[AgentState], m: usize) -> Vec<f64> {
    let zero = vec![0.0; 4 * m];
    let (Some(a), Some(b)) = (valid_span(anchor), valid_span(other)) else {
        return zero;
    };
    let window = (a.0.max(b.0), a.1.min(b.1));
    if window.0 >= window.1 {
        return zero;
    }
    let (Some(pa), Some(pb)) = (resample(anchor, window, m), resample(other, window, m)) else {
        return zero;
    };
    let frame = canonical_frame(&pa).unwrap_or((pa[0], 0.0));
    let mut out = Vec::with_capacity(4 * m);
    push_in_frame(&mut out, &pa, frame);
    push_in_frame(&mut out, &pb, frame);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveModel {
    pub version: u32,
    pub k: usize,
    pub resample_len: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Centroids in standardized space.
    pub centroids: Vec<Vec<f64>>,
    pub median_distance: f64,
    /// Partition the model was fit on.
    pub fit_partition_id: String,
    /// Scenario ids that contributed primitives, sorted.
    pub fit_scenario_ids: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnomalyError {
    #[error("no primitives to fit")]
    Empty,
    #[error("primitive dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("model was fit on partition `{fit}` but `{requested}` is required")]
    WrongPartition { fit: String, requested: String },
    #[error("scenario `{0}` contributed to the fit but is outside the fit partition")]
    Leakage(String),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seeded k-means++ / Lloyd fit on standardized primitives.
///
/// Returns the model and any warnings (k reduced to the number of distinct
/// points).
pub fn fit_primitive_clusters(
    primitives: &[Vec<f64>],
    params: &AnomalyParams,
    fit_partition_id: &str,
    fit_scenario_ids: Vec<String>,
) -> Result<(PrimitiveModel, Vec<String>), AnomalyError> {
    let n = primitives.len();
    if n == 0 {
        return Err(AnomalyError::Empty);
    }
    let dim = primitives[0].len();
    if let Some(p) = primitives.iter().find(|p| p.len() != dim) {
        return Err(AnomalyError::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    let mut mean = vec![0.0; dim];
    for p in primitives {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let mut scale = vec![0.0; dim];
    for p in primitives {
        for ((s, x), m) in scale.iter_mut().zip(p).zip(&mean) {
            *s += (x - m) * (x - m) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let data: Vec<Vec<f64>> = primitives
        .iter()
        .map(|p| p.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s).collect())
        .collect();

    let mut warnings = Vec::new();
    let mut distinct: Vec<&Vec<f64>> = data.iter().collect();
    distinct.sort_by(|a, b| a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let k = params.k.max(1).min(distinct.len());
    if k < params.k {
        warnings.push(format!("only {} distinct primitives; k reduced from {} to {k}", distinct.len(), params.k));
    }

    // k-means++ seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids: Vec<Vec<f64>> = vec![data[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(data[pick].clone());
        for (d, p) in d2.iter_mut().zip(&data) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..params.max_iter {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(&data) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(&data) {
            counts[*a] += 1;
            for (s, x) in sums[*a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    let mut dists: Vec<f64> = data.iter().map(|p| nearest(p, &centroids).1.sqrt()).collect();
    let med = median(&mut dists);
    let mut ids = fit_scenario_ids;
    ids.sort();
    ids.dedup();
    Ok((
        PrimitiveModel {
            version: MODEL_VERSION,
            k,
            resample_len: params.resample_len,
            seed: params.seed,
            max_iter: params.max_iter,
            mean,
            scale,
            centroids,
            median_distance: if med > 0.0 { med } else { 1.0 },
            fit_partition_id: fit_partition_id.to_string(),
            fit_scenario_ids: ids,
        },
        warnings,
    ))
}

impl PrimitiveModel {
    pub fn standardize(&self, primitive: &[f64]) -> Vec<f64> {
        primitive
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    /// Distance to the nearest centroid in standardized space over the
    /// median training distance.
    pub fn anomaly_score(&self, primitive: &[f64]) -> f64 {
        let z = self.standardize(primitive);
        nearest(&z, &self.centroids).1.sqrt() / self.median_distance
    }

    /// Scores a raw individual track.
    pub fn score_track(&self, states: &[AgentState]) -> f64 {
        self.anomaly_score(&to_primitive(states, self.resample_len))
    }

    /// Fails if the model was not fit on `partition`, or if any of
    /// `held_out` ids took part in the fit.
    pub fn audit(&self, partition: &str, held_out: &[String]) -> Result<(), AnomalyError> {
        if self.fit_partition_id != partition {
            return Err(AnomalyError::WrongPartition {
                fit: self.fit_partition_id.clone(),
                requested: partition.to_string(),
            });
        }
        for id in held_out {
            if self.fit_scenario_ids.binary_search(id).is_ok() {
                return Err(AnomalyError::Leakage(id.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn straight(heading: f64, origin: Point, n: usize, step: f64) -> Vec<AgentState> {
        (0..n)
            .map(|i| {
                let p = origin + Point::from_heading(heading) * (step * i as f64);
                AgentState::new(p.x, p.y, heading, 0.0, 0.0)
            })
            .collect()
    }

    #[test]
    fn straight_track_canonicalizes_to_plus_x() {
        let m = 16;
        let reference = to_primitive(&straight(0.0, Point::default(), 11, 1.0), m);
        for h in [0.3, 1.7, -2.5, 3.1] {
            let v = to_primitive(&straight(h, Point::new(3.0, -4.0), 11, 1.0), m);
            for (a, b) in v.iter().zip(&reference) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
        // Template: x from 0 to 10 m, y = 0.
        assert_abs_diff_eq!(reference[2 * (m - 1)], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let a = straight(0.7, Point::default(), 9, 1.3);
        let b: Vec<_> = a
            .iter()
            .map(|s| AgentState::new(s.x + 50.0, s.y - 20.0, s.heading, 0.0, 0.0))
            .collect();
        let (pa, pb) = (to_primitive(&a, 16), to_primitive(&b, 16));
        for (x, y) in pa.iter().zip(&pb) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn resample_four_points_on_seven_steps() {
        // Positions along +x at x = t², step 3 invalid; resample at t = 0, 2, 4, 6.
        let mut tr: Vec<_> = (0..7).map(|t| AgentState::new((t * t) as f64, 0.0, 0.0, 0.0, 0.0)).collect();
        tr[2].valid = false;
        let v = to_primitive(&tr, 4);
        // t=2 interpolates between t=1 (x=1) and t=3 (x=9) → 5.
        let expected = [0.0, 0.0, 5.0, 0.0, 16.0, 0.0, 36.0, 0.0];
        for (a, b) in v.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_track_is_zero() {
        let tr: Vec<_> = (0..5).map(|_| AgentState::new(3.0, 3.0, 0.0, 0.0, 0.0)).collect();
        assert!(to_primitive(&tr, 4).iter().all(|x| *x == 0.0));
    }

    fn families() -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..40)
            .map(|i| {
                let base = if i % 2 == 0 { 0.0 } else { 100.0 };
                (0..4).map(|_| base + rng.gen_range(-1.0..1.0)).collect()
            })
            .collect()
    }

    #[test]
    fn separable_families_are_pure() {
        let data = families();
        let params = AnomalyParams { k: 2, ..Default::default() };
        let (model, w) = fit_primitive_clusters(&data, &params, "train", vec![]).unwrap();
        assert!(w.is_empty());
        let label = |p: &Vec<f64>| nearest(&model.standardize(p), &model.centroids).0;
        let even = label(&data[0]);
        for (i, p) in data.iter().enumerate() {
            assert_eq!(label(p) == even, i % 2 == 0);
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let data = families();
        let params = AnomalyParams { k: 1, ..Default::default() };
        let (model, _) = fit_primitive_clusters(&data, &params, "train", vec![]).unwrap();
        // In standardized space the mean is the origin.
        for c in &model.centroids[0] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = families();
        let params = AnomalyParams { k: 4, ..Default::default() };
        let (a, _) = fit_primitive_clusters(&data, &params, "train", vec![]).unwrap();
        let (b, _) = fit_primitive_clusters(&data, &params, "train", vec![]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn k_reduced_to_distinct_count() {
        let data = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![3.0, 4.0]];
        let (m, w) = fit_primitive_clusters(&data, &AnomalyParams::default(), "train", vec![]).unwrap();
        assert_eq!(m.k, 2);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn score_anchors() {
        let data = families();
        let params = AnomalyParams { k: 2, ..Default::default() };
        let (model, _) = fit_primitive_clusters(&data, &params, "train", vec![]).unwrap();
        // A centroid maps back to raw space and scores 0.
        let raw: Vec<f64> = model.centroids[0]
            .iter()
            .zip(&model.mean)
            .zip(&model.scale)
            .map(|((z, m), s)| z * s + m)
            .collect();
        assert_abs_diff_eq!(model.anomaly_score(&raw), 0.0, epsilon = 1e-9);

        let mut scores: Vec<f64> = data.iter().map(|p| model.anomaly_score(p)).collect();
        assert_abs_diff_eq!(median(&mut scores), 1.0, epsilon = 1e-9);

        // Ten median distances out along one standardized axis.
        let mut z = model.centroids[0].clone();
        z[0] += 10.0 * model.median_distance;
        let far: Vec<f64> = z.iter().zip(&model.mean).zip(&model.scale).map(|((z, m), s)| z * s + m).collect();
        assert_abs_diff_eq!(model.anomaly_score(&far), 10.0, epsilon = 1e-6);
    }

    #[test]
    fn audit_detects_leakage() {
        let data = families();
        let (model, _) =
            fit_primitive_clusters(&data, &AnomalyParams { k: 2, ..Default::default() }, "train", vec!["s1".into()]).unwrap();
        assert!(model.audit("train", &["s2".into()]).is_ok());
        assert_eq!(model.audit("train", &["s1".into()]), Err(AnomalyError::Leakage("s1".into())));
        assert!(matches!(model.audit("test", &[]), Err(AnomalyError::WrongPartition { .. })));
    }
}
