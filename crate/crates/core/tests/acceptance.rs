//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use scenario_mining::config::PipelineConfig;
use scenario_mining::eval::{collision_counts, gt_as_prediction, gt_future_collisions, ModeRule};
use scenario_mining::features::interaction::detect_collisions;
use scenario_mining::geometry::{frenet_decode, frenet_encode, OrientedBox, Point, Polyline};
use scenario_mining::pipeline::{extract_corpus, extract_scene_features, fit_anomaly_model, fit_normalizer, run_corpus, score_corpus};
use scenario_mining::report::{correlation_matrix, sample_std, skewness, FeatureTable};
use scenario_mining::scenario::{AgentState, AgentTrack, AgentType, Scenario};
use scenario_mining::scoring::{scene_value, score_features, ScoreVariant};
use scenario_mining::split::{scoring_split, Partition};
use scenario_mining::synth::{corpus, gen_scenario, SynthKind, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

const MIX_SIZE: usize = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_ok(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(f64::MIN_POSITIVE)
}

fn surrogate_oracles() -> Outcome {
    let start = Instant::now();
    let cfg = PipelineConfig::default();
    let mut worst_rel: f64 = 0.0;
    let mut bad = Vec::new();
    for seed in 0..50 {
        let p = SynthParams::sampled(SynthKind::LeaderFollower, seed);
        let lf = p.leader_follower;
        let f = extract_scene_features(&gen_scenario(&p), None, &cfg);
        let Some(pair) = f.pairs.first() else {
            bad.push(format!("lf{seed}: no pair"));
            continue;
        };
        for (got, want) in [
            (pair.gt.min_ttc, lf.expected_ttc()),
            (pair.gt.min_thw, lf.expected_thw()),
            (pair.gt.max_drac, lf.expected_drac()),
        ] {
            worst_rel = worst_rel.max((got - want).abs() / want.abs());
            if !rel_ok(got, want, 1e-6) {
                bad.push(format!("lf{seed}: {got} vs {want}"));
            }
        }
    }
    let mut worst_dt: f64 = 0.0;
    for seed in 0..50 {
        let p = SynthParams::sampled(SynthKind::Crossing, seed);
        let s = gen_scenario(&p);
        let f = extract_scene_features(&s, None, &cfg);
        let want = p.crossing.expected_delta_mttcp(cfg.interaction.reach_radius);
        let got = f.pairs.first().map_or(f64::INFINITY, |q| q.gt.min_delta_mttcp_traj);
        worst_dt = worst_dt.max((got - want).abs());
        if (got - want).abs() > s.dt + 1e-9 {
            bad.push(format!("cross{seed}: {got} vs {want}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 10.0,
        format!(
            "50 leader-follower worst rel err {worst_rel:.2e} (tol 1e-6); 50 crossings worst |dmttcp err| {worst_dt:.3} s (tol 0.1 s); {secs:.2} s (limit 10 s){}",
            if bad.is_empty() { String::new() } else { format!("; failures {bad:?}") }
        ),
    )
}

/// Convex polygons overlap iff a vertex of one lies inside the other or two
/// edges cross.
fn convex_overlap(a: &[Point; 4], b: &[Point; 4]) -> bool {
    let inside = |p: Point, poly: &[Point; 4]| {
        let signs: Vec<f64> = (0..4).map(|k| (poly[(k + 1) % 4] - poly[k]).cross(p - poly[k])).collect();
        signs.iter().all(|s| *s >= 0.0) || signs.iter().all(|s| *s <= 0.0)
    };
    let cross = |p0: Point, p1: Point, q0: Point, q1: Point| {
        let d1 = (p1 - p0).cross(q0 - p0);
        let d2 = (p1 - p0).cross(q1 - p0);
        let d3 = (q1 - q0).cross(p0 - q0);
        let d4 = (q1 - q0).cross(p1 - q0);
        d1 * d2 <= 0.0 && d3 * d4 <= 0.0
    };
    a.iter().any(|p| inside(*p, b))
        || b.iter().any(|p| inside(*p, a))
        || (0..4).any(|i| (0..4).any(|j| cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])))
}

fn collision_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut agree = 0;
    let mut overlaps = 0;
    for _ in 0..1000 {
        let mut draw = || {
            let c = Point::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let h = rng.gen_range(-3.2..3.2);
            let (l, w) = (rng.gen_range(0.5..5.0), rng.gen_range(0.5..2.5));
            (c, h, l, w)
        };
        let (a, b) = (draw(), draw());
        let oracle = convex_overlap(&OrientedBox::new(a.0, a.1, a.2, a.3).corners(), &OrientedBox::new(b.0, b.1, b.2, b.3).corners());
        let ta = [AgentState::new(a.0.x, a.0.y, a.1, 0.0, 0.0)];
        let tb = [AgentState::new(b.0.x, b.0.y, b.1, 0.0, 0.0)];
        let got = detect_collisions(&ta, &tb, (a.2, a.3), (b.2, b.3)).count == 1;
        agree += usize::from(got == oracle);
        overlaps += usize::from(oracle);
    }
    outcome(agree == 1000, format!("{agree}/1000 agree with polygon oracle ({overlaps} overlapping)"))
}

fn arc(center: Point, r: f64, a0: f64, a1: f64, n: usize) -> Vec<Point> {
    (0..=n)
        .map(|k| {
            let a = a0 + (a1 - a0) * k as f64 / n as f64;
            center + Point::new(a.cos(), a.sin()) * r
        })
        .collect()
}

fn frenet_round_trip() -> Outcome {
    let straight = vec![Point::new(0.0, 0.0), Point::new(200.0, 0.0)];
    let curved = arc(Point::new(0.0, 40.0), 40.0, -std::f64::consts::FRAC_PI_2, std::f64::consts::PI, 96);
    // Lane sequence: straight, left bend, straight.
    let l1 = vec![Point::new(-50.0, 0.0), Point::new(0.0, 0.0)];
    let l2 = arc(Point::new(0.0, 30.0), 30.0, -std::f64::consts::FRAC_PI_2, 0.0, 24);
    let l3 = vec![Point::new(30.0, 30.0), Point::new(30.0, 90.0)];
    let multi = Polyline::concat([l1.as_slice(), l2.as_slice(), l3.as_slice()]).unwrap();
    let refs = [
        ("straight", Polyline::new(straight).unwrap()),
        ("curved", Polyline::new(curved).unwrap()),
        ("multi-lane", multi),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    while accepted < 1000 {
        let (_, r) = &refs[accepted % 3];
        let seg = rng.gen_range(0..r.num_segments());
        let cs = r.cumulative_s();
        let s = cs[seg] + rng.gen_range(0.02..0.98) * (cs[seg + 1] - cs[seg]);
        let d = rng.gen_range(-1.75..1.75);
        let (c, h) = r.point_at(s);
        let p = c + Point::from_heading(h).left_normal() * d;
        // Keep points whose nearest segment is unambiguous.
        let proj = r.project(p);
        if proj.segment != seg || proj.t <= 1e-9 || proj.t >= 1.0 - 1e-9 {
            continue;
        }
        let st = AgentState::new(p.x, p.y, h, 0.0, 0.0);
        let back = frenet_decode(&frenet_encode(&[st], r), r)[0].position;
        worst = worst.max(back.dist(p));
        accepted += 1;
    }
    outcome(worst < 1e-6, format!("1000 in-corridor points on straight/curved/multi-lane references, worst error {worst:.2e} m (tol 1e-6)"))
}

struct Mix {
    scenarios: Vec<Scenario>,
    run: scenario_mining::pipeline::CorpusRun,
}

fn counterfactual(mix: &Mix) -> Outcome {
    let cfg = PipelineConfig::default();
    let cut = gen_scenario(&SynthParams::new(SynthKind::CutIn, 0));
    let lfs: Vec<Scenario> = (0..20).map(|k| gen_scenario(&SynthParams::sampled(SynthKind::LeaderFollower, 100 + k))).collect();
    let cut_f = extract_scene_features(&cut, Some(&mix.run.model), &cfg);
    let lf_f = extract_corpus(&lfs, Some(&mix.run.model), &cfg);
    let mut pooled = mix.run.features.clone();
    pooled.push(cut_f.clone());
    pooled.extend(lf_f.iter().cloned());
    let (norm, _) = fit_normalizer(&pooled, cfg.scoring.epsilon).unwrap();
    let w = cfg.weights.resolve().unwrap();
    let k = scenario_mining::features::InteractionFeatures::NAMES.iter().position(|n| *n == "collision_count").unwrap();
    let margin = w.interaction[k] * norm.interaction[k].normalize(1.0, norm.epsilon);
    let (_, sets) = score_features(&cut_f, &norm, &w);
    let d = sets.iter().find(|s| s.agent_id == "defensive").unwrap();
    let gt_col = cut_f.pairs.iter().map(|p| p.gt.collision_count).sum::<f64>();
    let fe_col = cut_f.pairs.iter().filter(|p| p.i == 0).map(|p| p.as_ij.collision_count).sum::<f64>()
        + cut_f.pairs.iter().filter(|p| p.j == 0).map(|p| p.as_ji.collision_count).sum::<f64>();
    let cut_ok = d.ac >= d.gt + margin && gt_col == 0.0 && fe_col >= 1.0;
    let mut worst: f64 = 0.0;
    for f in &lf_f {
        for s in score_features(f, &norm, &w).1 {
            worst = worst.max((s.fe - s.gt).abs());
        }
    }
    outcome(
        cut_ok && worst < 1e-6,
        format!(
            "cut-in defensive ac {:.4} vs gt {:.4} + margin {margin:.4} (GT collisions {gt_col}, probe collisions {fe_col}); 20 lane-following fixtures max |fe-gt| {worst:.2e} (tol 1e-6)",
            d.ac, d.gt
        ),
    )
}

fn scene_formula(mix: &Mix) -> Outcome {
    let v = scene_value(&[2.0, 1.0, 0.5], &[0.0, 4.0, 9.0], 1);
    let want = (2.0 + 1.0 / 5.0 + 0.5 / 10.0) / (1.0 + 2f64.sqrt());
    let agents: usize = mix.run.scores.iter().map(|r| r.agents.len()).sum();
    let violations = mix.run.scores.iter().flat_map(|r| &r.agents).filter(|a| a.ac != a.gt.max(a.asym)).count();
    outcome(
        (v - want).abs() < 1e-9 && violations == 0 && mix.scenarios.len() == MIX_SIZE,
        format!("hand example {v:.9} vs {want:.9} (tol 1e-9); ac = max(gt, as) violated on {violations} of {agents} agents in {} scenes", mix.scenarios.len()),
    )
}

fn distribution_shift(mix: &Mix) -> Outcome {
    let scores: Vec<(String, f64)> = mix.run.scores.iter().map(|r| (r.scenario_id.clone(), r.value)).collect();
    let split = scoring_split(&scores, 0.2, 0.2, 0).unwrap();
    let n = scores.len();
    let want_test = (0.2 * n as f64).ceil() as usize;
    let value: BTreeMap<&str, f64> = scores.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    let (mut ood, mut id) = ((0.0, 0usize, 0usize, 0usize), (0.0, 0usize, 0usize, 0usize));
    let mut mismatch = 0;
    for s in &mix.scenarios {
        let counts = collision_counts(&gt_as_prediction(s), s, ModeRule::TopConfidence).unwrap();
        let total: usize = counts.iter().map(|c| c.1).sum();
        if (total, counts.len()) != gt_future_collisions(s) {
            mismatch += 1;
        }
        let acc = if split.assignment[&s.scenario_id] == Partition::Test { &mut ood } else { &mut id };
        acc.0 += value[s.scenario_id.as_str()];
        acc.1 += 1;
        acc.2 += total;
        acc.3 += counts.len();
    }
    let mean = |a: (f64, usize, usize, usize)| a.0 / a.1 as f64;
    let cr = |a: (f64, usize, usize, usize)| a.2 as f64 / a.3 as f64;
    outcome(
        split.count(Partition::Test) == want_test && mean(ood) > mean(id) && cr(ood) > cr(id) && mismatch == 0,
        format!(
            "|test| {} (want {want_test}); mean score OOD {:.4} vs ID {:.4}; GT collision rate OOD {:.4} vs ID {:.4}; CR/feature cross-check mismatches {mismatch}",
            split.count(Partition::Test),
            mean(ood),
            mean(id),
            cr(ood),
            cr(id)
        ),
    )
}

fn score_spread(mix: &Mix) -> Outcome {
    let vals = |v: ScoreVariant| -> Vec<f64> { mix.run.scores.iter().map(|r| r.variants.get(v)).collect() };
    let gt_std = sample_std(&vals(ScoreVariant::Gt));
    let mut pass = true;
    let mut parts = Vec::new();
    for v in ScoreVariant::ALL {
        let x = vals(v);
        let (sk, sd) = (skewness(&x), sample_std(&x));
        pass &= sk > 0.0;
        if v != ScoreVariant::Gt {
            pass &= sd > gt_std;
        }
        parts.push(format!("{} skew {sk:.3} std {sd:.3}", v.as_str()));
    }
    outcome(pass, format!("{} (need every skew > 0 and every probe-based std > gt std)", parts.join("; ")))
}

fn kinematic_correlation() -> Outcome {
    let cfg = PipelineConfig::default();
    let scenes = extract_corpus(&corpus(SynthKind::StopAndGo, 100, 0), None, &cfg);
    let table = FeatureTable::individual_gt(&scenes);
    let cols = ["max_speed", "max_accel", "max_jerk"];
    let m = correlation_matrix(&table, &cols);
    let mut pass = true;
    for i in 0..3 {
        pass &= m.values[i][i] == 1.0;
        for j in 0..3 {
            pass &= (m.values[i][j] - m.values[j][i]).abs() <= 1e-12;
            if i != j {
                pass &= m.values[i][j] > 0.0;
            }
        }
    }
    outcome(
        pass,
        format!(
            "{} agents: r(speed,accel) {:.3}, r(speed,jerk) {:.3}, r(accel,jerk) {:.3}; symmetric with unit diagonal",
            table.rows.len(),
            m.values[0][1],
            m.values[0][2],
            m.values[1][2]
        ),
    )
}

fn overlap_fixture() -> Scenario {
    // B sits on A for future steps 20..=24 and is 10 m away otherwise.
    let n = 91;
    let a = (0..n).map(|_| AgentState::new(0.0, 0.0, 0.0, 0.0, 0.0)).collect();
    let b = (0..n)
        .map(|t| {
            let x = if (20..25).contains(&t) { 0.5 } else { 10.0 };
            AgentState::new(x, 0.0, 0.0, 0.0, 0.0)
        })
        .collect();
    let track = |id: &str, states, to_predict| AgentTrack {
        agent_id: id.into(),
        agent_type: AgentType::Vehicle,
        length: 4.0,
        width: 2.0,
        states,
        to_predict,
    };
    Scenario {
        scenario_id: "overlap".into(),
        dt: 0.1,
        t_obs_idx: 10,
        t_tot: n,
        agents: vec![track("a", a, true), track("b", b, false)],
        lanes: BTreeMap::new(),
        map_features: vec![],
    }
}

fn run_cli(dir: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    let bin = env!("CARGO_BIN_EXE_scenmine");
    let run = |args: &[&str]| {
        let st = std::process::Command::new(bin).args(args).current_dir(dir).status().unwrap();
        assert!(st.success(), "scenmine {args:?} failed");
    };
    run(&["synth", "--kind", "random-mix", "--count", "200", "--seed", "42", "--jsonl", "--out", "data"]);
    run(&["features", "data", "--out", "table"]);
    run(&["score", "--features", "table", "--normalizer", "fit", "--out", "scores.jsonl"]);
    run(&["split", "--scores", "scores.jsonl", "--method", "scoring", "--seed", "7", "--out", "splits.tsv"]);
    (std::fs::read(dir.join("scores.jsonl")).unwrap(), std::fs::read(dir.join("splits.tsv")).unwrap())
}

fn cr_and_determinism() -> Outcome {
    let s = overlap_fixture();
    let counts = collision_counts(&gt_as_prediction(&s), &s, ModeRule::TopConfidence).unwrap();
    let counted: usize = counts.iter().map(|c| c.1).sum();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (s1, p1) = run_cli(d1.path());
    let (s2, p2) = run_cli(d2.path());
    let same = s1 == s2 && p1 == p2 && !s1.is_empty();
    outcome(
        counted == 1 && same,
        format!(
            "5-step overlap counted {counted} time(s) (want 1); two CLI runs give {} score files ({} bytes) and {} split files",
            if s1 == s2 { "identical" } else { "different" },
            s1.len(),
            if p1 == p2 { "identical" } else { "different" }
        ),
    )
}

fn throughput() -> Outcome {
    let scenarios = corpus(SynthKind::RandomMix, 2000, 900);
    let max_agents = scenarios.iter().map(|s| s.agents.len()).max().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let n = pool.install(|| {
        let (model, _) = fit_anomaly_model(&scenarios, &cfg, "all").unwrap();
        let features = extract_corpus(&scenarios, Some(&model), &cfg);
        let (norm, _) = fit_normalizer(&features, cfg.scoring.epsilon).unwrap();
        score_corpus(&features, &norm, &cfg.weights.resolve().unwrap()).len()
    });
    let rate = n as f64 / start.elapsed().as_secs_f64();
    outcome(
        rate >= 200.0 && max_agents <= scenario_mining::synth::MAX_AGENTS,
        format!("{rate:.0} scenes/s on one worker thread (floor 200), {n} scenes, max {max_agents} agents (limit 16)"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("surrogate-metric oracles", surrogate_oracles()),
        ("collision oracle", collision_oracle()),
        ("frenet round trip", frenet_round_trip()),
    ];
    let scenarios = corpus(SynthKind::RandomMix, MIX_SIZE, 0);
    let run = run_corpus(&scenarios, &PipelineConfig::default()).unwrap();
    let mix = Mix { scenarios, run };
    results.push(("counterfactual probe", counterfactual(&mix)));
    results.push(("scene-score formula", scene_formula(&mix)));
    results.push(("distribution-shift split", distribution_shift(&mix)));
    results.push(("score distribution spread", score_spread(&mix)));
    results.push(("kinematic feature correlation", kinematic_correlation()));
    results.push(("collision-rate semantics and determinism", cr_and_determinism()));
    results.push(("throughput", throughput()));

    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("{} [{:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
