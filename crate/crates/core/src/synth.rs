//! Deterministic synthetic scenarios with closed-form answers, plus a
//! seeded long-tailed mixture for corpus-level experiments.
//!
//! Every generator builds a [`Scenario`], emits the canonical JSON document
//! and parses it back, so consumers always see parser output.

use crate::geometry::{wrap_angle, Point, Polyline};
use crate::scenario::{
    parse_scenario, serialize_scenario, AgentState, AgentTrack, AgentType, Geometry, Lane, LaneType, MapFeature, MapFeatureKind,
    Scenario, DEFAULT_DT, DEFAULT_T_OBS_IDX, DEFAULT_T_TOT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

pub const VEHICLE: (f64, f64) = (4.5, 2.0);
pub const PEDESTRIAN: (f64, f64) = (0.8, 0.8);
pub const LANE_WIDTH: f64 = 3.7;
pub const MAX_SPEED: f64 = 40.0;
/// Upper bound on agents in a mixture scene.
pub const MAX_AGENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    LeaderFollower,
    Crossing,
    CutIn,
    StopAndGo,
    RandomMix,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::LeaderFollower => "leader_follower",
            SynthKind::Crossing => "crossing",
            SynthKind::CutIn => "cut_in",
            SynthKind::StopAndGo => "stop_and_go",
            SynthKind::RandomMix => "random_mix",
        }
    }
}

/// Two vehicles in one lane, the follower closing on the leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderFollowerParams {
    pub v_follower: f64,
    pub v_leader: f64,
    /// Bumper gap at closest approach (the last step when the follower is
    /// faster, the first step otherwise), m.
    pub gap: f64,
}

impl Default for LeaderFollowerParams {
    fn default() -> Self {
        Self {
            v_follower: 15.0,
            v_leader: 10.0,
            gap: 20.0,
        }
    }
}

impl LeaderFollowerParams {
    pub fn expected_ttc(&self) -> f64 {
        if self.v_follower > self.v_leader {
            self.gap / (self.v_follower - self.v_leader)
        } else {
            f64::INFINITY
        }
    }

    pub fn expected_thw(&self) -> f64 {
        self.gap / self.v_follower
    }

    pub fn expected_drac(&self) -> f64 {
        let c = self.v_follower - self.v_leader;
        if c > 0.0 {
            c * c / (2.0 * self.gap)
        } else {
            0.0
        }
    }
}

/// Two vehicles on perpendicular lanes through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingParams {
    pub v_a: f64,
    pub v_b: f64,
    /// Time agent a passes the origin, s.
    pub t_cross_a: f64,
    /// Agent b passes the origin this much later, s.
    pub arrival_offset: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        Self {
            v_a: 10.0,
            v_b: 10.0,
            t_cross_a: 4.0,
            arrival_offset: 0.5,
        }
    }
}

impl CrossingParams {
    /// |first time within `radius` of the crossing| difference, continuous
    /// time.
    pub fn expected_delta_mttcp(&self, radius: f64) -> f64 {
        let ta = self.t_cross_a - radius / self.v_a;
        let tb = self.t_cross_a + self.arrival_offset - radius / self.v_b;
        (ta - tb).abs()
    }
}

/// Three-lane cut-in: an aggressive vehicle merges ahead of a defensive
/// one, which brakes in the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutInParams {
    pub v_defensive: f64,
    pub v_aggressive: f64,
    /// Bumper gap from the defensive front to the aggressive rear at the
    /// last observed step, m.
    pub merge_gap: f64,
    /// Defensive braking deceleration after the observation window, m/s².
    pub decel: f64,
    /// Duration of the aggressive lateral move, s.
    pub merge_duration: f64,
}

impl Default for CutInParams {
    fn default() -> Self {
        Self {
            v_defensive: 15.0,
            v_aggressive: 12.0,
            merge_gap: 6.0,
            decel: 2.5,
            merge_duration: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopAndGoParams {
    pub agents: usize,
}

impl Default for StopAndGoParams {
    fn default() -> Self {
        Self { agents: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub kind: SynthKind,
    pub seed: u64,
    pub leader_follower: LeaderFollowerParams,
    pub crossing: CrossingParams,
    pub cut_in: CutInParams,
    pub stop_and_go: StopAndGoParams,
    /// Rigid motion (dx, dy, rotation) applied to the whole scene.
    pub frame: (f64, f64, f64),
}

impl SynthParams {
    pub fn new(kind: SynthKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            leader_follower: Default::default(),
            crossing: Default::default(),
            cut_in: Default::default(),
            stop_and_go: Default::default(),
            frame: (0.0, 0.0, 0.0),
        }
    }

    /// Parameters drawn from the seed (used for corpora and the CLI).
    pub fn sampled(kind: SynthKind, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
        let mut p = Self::new(kind, seed);
        match kind {
            SynthKind::LeaderFollower => {
                let vf = rng.gen_range(8.0..30.0);
                p.leader_follower = LeaderFollowerParams {
                    v_follower: vf,
                    v_leader: rng.gen_range(0.3 * vf..0.95 * vf),
                    gap: rng.gen_range(2.0..40.0),
                };
            }
            SynthKind::Crossing => {
                p.crossing = CrossingParams {
                    v_a: rng.gen_range(6.0..15.0),
                    v_b: rng.gen_range(6.0..15.0),
                    t_cross_a: rng.gen_range(3.0..5.0),
                    arrival_offset: rng.gen_range(-2.5..2.5),
                };
            }
            SynthKind::CutIn => {
                let vd = rng.gen_range(12.0..18.0);
                p.cut_in = CutInParams {
                    v_defensive: vd,
                    v_aggressive: vd - rng.gen_range(2.0..4.0),
                    merge_gap: rng.gen_range(4.0..8.0),
                    decel: rng.gen_range(2.5..4.0),
                    merge_duration: rng.gen_range(1.5..2.5),
                };
            }
            SynthKind::StopAndGo => {
                p.stop_and_go = StopAndGoParams {
                    agents: rng.gen_range(3..7),
                };
            }
            SynthKind::RandomMix => {}
        }
        p
    }
}

/// Piecewise-constant acceleration along a path; speed never goes below 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub s0: f64,
    pub v0: f64,
    /// (start time, acceleration), sorted by time.
    pub phases: Vec<(f64, f64)>,
}

fn advance(s: f64, v: f64, a: f64, h: f64) -> (f64, f64) {
    if h <= 0.0 {
        return (s, v);
    }
    if a < 0.0 && v + a * h < 0.0 {
        let t_stop = -v / a;
        return (s + v * t_stop / 2.0, 0.0);
    }
    (s + v * h + 0.5 * a * h * h, v + a * h)
}

impl SpeedProfile {
    pub fn constant(s0: f64, v: f64) -> Self {
        Self { s0, v0: v, phases: vec![] }
    }

    /// (arc position, speed) at time t.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (mut s, mut v, mut tc, mut a) = (self.s0, self.v0, 0.0, 0.0);
        for &(start, acc) in &self.phases {
            if start >= t {
                break;
            }
            (s, v) = advance(s, v, a, start - tc);
            tc = start;
            a = acc;
        }
        advance(s, v, a, t - tc)
    }
}

struct Builder {
    dt: f64,
    t_obs_idx: usize,
    t_tot: usize,
    lanes: BTreeMap<String, Lane>,
    features: Vec<MapFeature>,
    agents: Vec<AgentTrack>,
}

impl Builder {
    fn new() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_obs_idx: DEFAULT_T_OBS_IDX,
            t_tot: DEFAULT_T_TOT,
            lanes: BTreeMap::new(),
            features: Vec::new(),
            agents: Vec::new(),
        }
    }

    fn lane(&mut self, id: &str, pts: &[(f64, f64)], speed_limit: Option<f64>) -> Polyline {
        let centerline: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        self.lanes.insert(
            id.to_string(),
            Lane {
                lane_id: id.to_string(),
                centerline: centerline.clone(),
                speed_limit,
                successors: vec![],
                predecessors: vec![],
                lane_type: LaneType::SurfaceStreet,
            },
        );
        Polyline::new(centerline).expect("synthetic lanes are well formed")
    }

    fn feature(&mut self, id: &str, kind: MapFeatureKind, geometry: Geometry) {
        self.features.push(MapFeature {
            feature_id: id.to_string(),
            kind,
            geometry,
        });
    }

    /// Track sampled from a continuous position function; velocity by
    /// central difference, heading along the velocity (held when slow).
    fn agent(&mut self, id: &str, agent_type: AgentType, dims: (f64, f64), predict: bool, heading0: f64, pos: impl Fn(f64) -> Point) {
        let h = 1e-4;
        let mut heading = heading0;
        let states = (0..self.t_tot)
            .map(|k| {
                let t = k as f64 * self.dt;
                let p = pos(t);
                let v = (pos(t + h) - pos(t - h)) * (0.5 / h);
                if v.norm() > 0.1 {
                    heading = v.heading();
                }
                AgentState::new(p.x, p.y, wrap_angle(heading), v.x, v.y)
            })
            .collect();
        self.agents.push(AgentTrack {
            agent_id: id.to_string(),
            agent_type,
            length: dims.0,
            width: dims.1,
            states,
            to_predict: predict,
        });
    }

    fn finish(self, scenario_id: String, frame: (f64, f64, f64)) -> Scenario {
        let mut s = Scenario {
            scenario_id,
            dt: self.dt,
            t_obs_idx: self.t_obs_idx,
            t_tot: self.t_tot,
            agents: self.agents,
            lanes: self.lanes,
            map_features: self.features,
        };
        if frame != (0.0, 0.0, 0.0) {
            transform_scenario(&mut s, frame);
        }
        s
    }
}

/// Applies a rigid motion: rotate by `theta` about the origin, then shift.
pub fn transform_scenario(s: &mut Scenario, (dx, dy, theta): (f64, f64, f64)) {
    let shift = Point::new(dx, dy);
    let tf = |p: Point| p.rotate(theta) + shift;
    for a in &mut s.agents {
        for st in &mut a.states {
            if !st.valid {
                continue;
            }
            let p = tf(st.position());
            let v = Point::new(st.vx, st.vy).rotate(theta);
            *st = AgentState::new(p.x, p.y, wrap_angle(st.heading + theta), v.x, v.y);
        }
    }
    for l in s.lanes.values_mut() {
        for p in &mut l.centerline {
            *p = tf(*p);
        }
    }
    for f in &mut s.map_features {
        match &mut f.geometry {
            Geometry::Point(p) => *p = tf(*p),
            Geometry::Polygon(poly) => poly.iter_mut().for_each(|p| *p = tf(*p)),
        }
    }
}

fn along(lane: &Polyline, prof: SpeedProfile, lateral: impl Fn(f64) -> f64) -> impl Fn(f64) -> Point {
    let lane = lane.clone();
    move |t| {
        let (s, _) = prof.eval(t);
        let (c, h) = lane.point_at(s);
        c + Point::from_heading(h).left_normal() * lateral(t)
    }
}

fn t_end(b: &Builder) -> f64 {
    (b.t_tot - 1) as f64 * b.dt
}

fn leader_follower(p: &SynthParams) -> Scenario {
    let lf = p.leader_follower;
    let mut b = Builder::new();
    let lane = b.lane("main", &[(-100.0, 0.0), (800.0, 0.0)], None);
    let te = t_end(&b);
    let centers = p.leader_follower.gap + VEHICLE.0;
    let closing = lf.v_follower - lf.v_leader;
    // Closest approach at the end if closing, else at the start.
    let lead0 = if closing > 0.0 { centers + closing * te } else { centers };
    b.agent("follower", AgentType::Vehicle, VEHICLE, true, 0.0, along(&lane, SpeedProfile::constant(100.0, lf.v_follower), |_| 0.0));
    b.agent("leader", AgentType::Vehicle, VEHICLE, true, 0.0, along(&lane, SpeedProfile::constant(100.0 + lead0, lf.v_leader), |_| 0.0));
    b.finish(format!("leader_follower-{:08}", p.seed), p.frame)
}

fn crossing(p: &SynthParams) -> Scenario {
    let c = p.crossing;
    let mut b = Builder::new();
    let la = b.lane("east", &[(-300.0, 0.0), (300.0, 0.0)], None);
    let lb = b.lane("north", &[(0.0, -300.0), (0.0, 300.0)], None);
    let tb = c.t_cross_a + c.arrival_offset;
    b.agent("a", AgentType::Vehicle, VEHICLE, true, 0.0, along(&la, SpeedProfile::constant(300.0 - c.v_a * c.t_cross_a, c.v_a), |_| 0.0));
    b.agent("b", AgentType::Vehicle, VEHICLE, true, FRAC_PI_2, along(&lb, SpeedProfile::constant(300.0 - c.v_b * tb, c.v_b), |_| 0.0));
    b.finish(format!("crossing-{:08}", p.seed), p.frame)
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    0.5 - 0.5 * (PI * u).cos()
}

fn cut_in(p: &SynthParams) -> Scenario {
    let c = p.cut_in;
    let mut b = Builder::new();
    let l0 = b.lane("lane_0", &[(-100.0, 0.0), (600.0, 0.0)], Some(17.9));
    b.lane("lane_1", &[(-100.0, LANE_WIDTH), (600.0, LANE_WIDTH)], Some(17.9));
    b.lane("lane_2", &[(-100.0, 2.0 * LANE_WIDTH), (600.0, 2.0 * LANE_WIDTH)], Some(17.9));
    let t_obs = b.t_obs_idx as f64 * b.dt;
    let t_react = t_obs + b.dt;
    // Defensive: constant until just after the observation window, then
    // brakes down to the aggressive vehicle's speed minus 2 m/s.
    let v_target = (c.v_aggressive - 2.0).max(0.0);
    let brake_end = t_react + (c.v_defensive - v_target) / c.decel;
    let defensive = SpeedProfile {
        s0: 100.0,
        v0: c.v_defensive,
        phases: vec![(t_react, -c.decel), (brake_end, 0.0)],
    };
    let d_front_obs = 100.0 + c.v_defensive * t_obs + VEHICLE.0 / 2.0;
    let a_center_obs = d_front_obs + c.merge_gap + VEHICLE.0 / 2.0;
    let aggressive = SpeedProfile::constant(a_center_obs - c.v_aggressive * t_obs, c.v_aggressive);
    let md = c.merge_duration;
    b.agent("defensive", AgentType::Vehicle, VEHICLE, true, 0.0, along(&l0, defensive, |_| 0.0));
    b.agent("aggressive", AgentType::Vehicle, VEHICLE, true, 0.0, along(&l0, aggressive, move |t| LANE_WIDTH * (1.0 - smoothstep((t - t_react) / md))));
    b.agent(
        "bystander",
        AgentType::Vehicle,
        VEHICLE,
        false,
        0.0,
        along(&l0, SpeedProfile::constant(60.0, 13.0), |_| 2.0 * LANE_WIDTH),
    );
    b.finish(format!("cut_in-{:08}", p.seed), p.frame)
}

fn stop_and_go(p: &SynthParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut b = Builder::new();
    for k in 0..p.stop_and_go.agents.max(1) {
        let y = 200.0 * k as f64;
        let lane = b.lane(&format!("road_{k}"), &[(-100.0, y), (800.0, y)], Some(13.4));
        let amp = rng.gen_range(2.0..8.0);
        let omega = rng.gen_range(0.7..1.0);
        let phase = rng.gen_range(0.0..0.5);
        let lane2 = lane.clone();
        b.agent(&format!("car_{k}"), AgentType::Vehicle, VEHICLE, k == 0, 0.0, move |t| {
            // v(t) = amp (1 − cos(ω (t + phase))).
            let u = t + phase;
            let s = amp * (u - (omega * u).sin() / omega);
            lane2.point_at(s).0
        });
    }
    b.finish(format!("stop_and_go-{:08}", p.seed), p.frame)
}

/// Road layout shared by the mixture: a three-lane eastbound arterial, a
/// two-lane crossing road at x = 80, a crosswalk and a stop sign.
fn mix_layout(b: &mut Builder) -> (Vec<Polyline>, Polyline) {
    let main: Vec<Polyline> = (0..3)
        .map(|k| {
            let y = k as f64 * LANE_WIDTH;
            b.lane(&format!("main_{k}"), &[(-400.0, y), (500.0, y)], Some(13.4 + 2.2 * k as f64))
        })
        .collect();
    let north = b.lane("cross_n", &[(80.0, -300.0), (80.0, 300.0)], Some(11.2));
    b.lane("cross_s", &[(76.3, 300.0), (76.3, -300.0)], Some(11.2));
    b.feature(
        "crosswalk_0",
        MapFeatureKind::Crosswalk,
        Geometry::Polygon(vec![Point::new(65.0, -4.0), Point::new(69.0, -4.0), Point::new(69.0, 11.0), Point::new(65.0, 11.0)]),
    );
    b.feature("stop_0", MapFeatureKind::StopSign, Geometry::Point(Point::new(82.5, -7.0)));
    (main, north)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MixEvent {
    Quiet,
    Tailgate,
    CutIn,
    Brake,
    Crossing,
    SignalStop,
    PedestrianCrossing,
    StopSign,
}

fn random_mix(p: &SynthParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut b = Builder::new();
    let (main, north) = mix_layout(&mut b);
    let te = t_end(&b);
    let t_obs = b.t_obs_idx as f64 * b.dt;
    let events = [
        (MixEvent::Quiet, 0.25),
        (MixEvent::Tailgate, 0.15),
        (MixEvent::CutIn, 0.10),
        (MixEvent::Brake, 0.10),
        (MixEvent::Crossing, 0.10),
        (MixEvent::SignalStop, 0.20),
        (MixEvent::PedestrianCrossing, 0.05),
        (MixEvent::StopSign, 0.05),
    ];
    let mut r = rng.gen::<f64>();
    let mut event = MixEvent::Quiet;
    for (e, w) in events {
        if r < w {
            event = e;
            break;
        }
        r -= w;
    }
    let mut lane1_free = true;
    // Main lanes are parametrized from x = −400.
    let at = |x: f64| x + 400.0;

    match event {
        MixEvent::Quiet => {}
        MixEvent::Tailgate => {
            let vf = rng.gen_range(8.0..20.0);
            let vl = vf - rng.gen_range(0.0..5.0);
            let gap = rng.gen_range(1.0..25.0);
            let closing = vf - vl;
            let xf = rng.gen_range(-120.0..-20.0);
            let lead = gap + VEHICLE.0 + closing * te;
            b.agent("ev_follower", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], SpeedProfile::constant(at(xf), vf), |_| 0.0));
            b.agent("ev_leader", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], SpeedProfile::constant(at(xf + lead), vl), |_| 0.0));
        }
        MixEvent::CutIn => {
            lane1_free = false;
            let vd: f64 = rng.gen_range(11.0..17.0);
            let va = vd - rng.gen_range(1.5..4.5);
            let gap = rng.gen_range(3.0..10.0);
            let decel = rng.gen_range(2.0..4.5);
            let md = rng.gen_range(1.5..3.0);
            let t_react = t_obs + b.dt;
            let v_target = (va - 2.0).max(0.0);
            let xd = rng.gen_range(-120.0..-40.0);
            let defensive = SpeedProfile {
                s0: at(xd),
                v0: vd,
                phases: vec![(t_react, -decel), (t_react + (vd - v_target) / decel, 0.0)],
            };
            let a_center_obs = xd + vd * t_obs + VEHICLE.0 + gap;
            b.agent("ev_defensive", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], defensive, |_| 0.0));
            b.agent(
                "ev_aggressive",
                AgentType::Vehicle,
                VEHICLE,
                true,
                0.0,
                along(&main[0], SpeedProfile::constant(at(a_center_obs - va * t_obs), va), move |t| {
                    LANE_WIDTH * (1.0 - smoothstep((t - t_react) / md))
                }),
            );
        }
        MixEvent::Brake => {
            // Leader brakes hard after the observation window; the
            // follower reacts late, occasionally too late.
            let v = rng.gen_range(10.0..18.0);
            let gap = rng.gen_range(6.0..25.0);
            let a_lead = rng.gen_range(3.0..7.0);
            let t_brake = t_obs + rng.gen_range(0.2..1.5);
            let reaction = rng.gen_range(0.5..1.5);
            let a_follow = rng.gen_range(3.0..7.5);
            let xf = rng.gen_range(-120.0..-40.0);
            let leader = SpeedProfile {
                s0: at(xf + gap + VEHICLE.0),
                v0: v,
                phases: vec![(t_brake, -a_lead)],
            };
            let follower = SpeedProfile {
                s0: at(xf),
                v0: v,
                phases: vec![(t_brake + reaction, -a_follow)],
            };
            b.agent("ev_follower", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], follower, |_| 0.0));
            b.agent("ev_leader", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], leader, |_| 0.0));
        }
        MixEvent::Crossing => {
            let va = rng.gen_range(7.0..14.0);
            let vb = rng.gen_range(6.0..12.0);
            let ta = rng.gen_range(3.0..6.0);
            let offset = rng.gen_range(-3.0..3.0);
            let tb = ta + offset;
            // Main-lane agent passes x = 80; crossing agent passes y = 0.
            b.agent("ev_main", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], SpeedProfile::constant(at(80.0) - va * ta, va), |_| 0.0));
            b.agent("ev_cross", AgentType::Vehicle, VEHICLE, true, FRAC_PI_2, along(&north, SpeedProfile::constant(300.0 - vb * tb, vb), |_| 0.0));
        }
        MixEvent::SignalStop => {
            // Cross traffic has the green; a short queue on the arterial
            // brakes to a stop at the line.
            let vc = rng.gen_range(8.0..13.0);
            let t_first = rng.gen_range(1.5..5.0);
            let mut t_pass = t_first;
            for k in 0..rng.gen_range(1..=3) {
                let id = format!("ev_cross_{k}");
                b.agent(&id, AgentType::Vehicle, VEHICLE, k == 0, FRAC_PI_2, along(&north, SpeedProfile::constant(300.0 - vc * t_pass, vc), |_| 0.0));
                t_pass += rng.gen_range(1.5..3.0);
            }
            let v: f64 = rng.gen_range(8.0..14.0);
            let t_b = t_obs + rng.gen_range(0.1..1.0);
            // Front bumper of the queue head stops at x = 61; followers
            // share the deceleration and start later, so gaps only shrink
            // to their standstill spacing.
            let decel = rng.gen_range(2.0..3.5);
            let brake_len = v * v / (2.0 * decel);
            let mut stop_center = 61.0 - VEHICLE.0 / 2.0;
            let mut brake_at = t_b;
            for k in 0..rng.gen_range(1..=3) {
                if k > 0 {
                    stop_center -= VEHICLE.0 + rng.gen_range(2.0..3.5);
                    brake_at += rng.gen_range(0.2..0.8);
                }
                let prof = SpeedProfile {
                    s0: at(stop_center) - brake_len - v * brake_at,
                    v0: v,
                    phases: vec![(brake_at, -decel)],
                };
                b.agent(&format!("ev_queue_{k}"), AgentType::Vehicle, VEHICLE, k == 0, 0.0, along(&main[0], prof, |_| 0.0));
            }
        }
        MixEvent::PedestrianCrossing => {
            let wait = rng.gen_range(0.5..3.0);
            let walk = rng.gen_range(1.0..1.8);
            let ped_start = t_obs + wait;
            b.agent("ev_pedestrian", AgentType::Pedestrian, PEDESTRIAN, true, FRAC_PI_2, move |t| {
                Point::new(67.0, -3.5 + walk * (t - ped_start).max(0.0))
            });
            // Approaching car: yields (stops before the crosswalk) or not.
            let v = rng.gen_range(8.0..14.0);
            let yields = rng.gen_bool(0.8);
            let x_car = rng.gen_range(0.0..30.0);
            let stop_x: f64 = 61.0;
            let dist = (stop_x - x_car - VEHICLE.0 / 2.0).max(1.0);
            let t_b = t_obs + 0.5;
            let travel = v * (t_b - 0.0);
            let remaining = (dist - travel).max(0.5);
            let decel = v * v / (2.0 * remaining);
            let prof = if yields {
                SpeedProfile {
                    s0: at(x_car),
                    v0: v,
                    phases: vec![(t_b, -decel)],
                }
            } else {
                SpeedProfile::constant(at(x_car), v)
            };
            b.agent("ev_car", AgentType::Vehicle, VEHICLE, true, 0.0, along(&main[0], prof, |_| 0.0));
        }
        MixEvent::StopSign => {
            let v = rng.gen_range(7.0..12.0);
            let decel = rng.gen_range(2.0..4.0);
            let wait = rng.gen_range(0.5..2.5);
            let accel = rng.gen_range(1.5..3.0);
            // Stop 9 m before the crossing, at y = −9 (arc 291 on the lane).
            let stop_s = 291.0;
            let brake_len = v * v / (2.0 * decel);
            let t_b = rng.gen_range(0.0..1.5);
            let s0 = stop_s - brake_len - v * t_b;
            let t_stop = t_b + v / decel;
            let prof = SpeedProfile {
                s0,
                v0: v,
                phases: vec![(t_b, -decel), (t_stop, 0.0), (t_stop + wait, accel)],
            };
            b.agent("ev_stop", AgentType::Vehicle, VEHICLE, true, FRAC_PI_2, along(&north, prof, |_| 0.0));
        }
    }

    // Background traffic: same speed within a lane, far enough upstream
    // that it never reaches the intersection. Total agents stay ≤ MAX_AGENTS.
    let n_parked = rng.gen_range(0..=2);
    let n_peds = rng.gen_range(0..=2);
    let mut n_bg = rng.gen_range(2..=9usize).min(MAX_AGENTS.saturating_sub(b.agents.len() + n_parked + n_peds));
    let lanes: Vec<usize> = if lane1_free { vec![1, 2] } else { vec![2] };
    for &lane in &lanes {
        let v = rng.gen_range(8.0..16.0);
        let mut x = rng.gen_range(-400.0..-330.0);
        while n_bg > 0 && x + v * te < 60.0 {
            let id = format!("bg_{}", b.agents.len());
            let predict = rng.gen_bool(0.15);
            b.agent(&id, AgentType::Vehicle, VEHICLE, predict, 0.0, along(&main[lane], SpeedProfile::constant(at(x), v), |_| 0.0));
            x += rng.gen_range(25.0..70.0);
            n_bg -= 1;
        }
    }
    // Parked cars on the shoulder.
    for _ in 0..n_parked {
        let x = rng.gen_range(-300.0..40.0);
        let id = format!("parked_{}", b.agents.len());
        b.agent(&id, AgentType::Vehicle, VEHICLE, false, 0.0, move |_| Point::new(x, -3.3));
    }
    // Pedestrians on the sidewalk.
    for _ in 0..n_peds {
        let x = rng.gen_range(-200.0..40.0);
        let v = rng.gen_range(0.8..1.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let id = format!("ped_{}", b.agents.len());
        let h0 = if v > 0.0 { 0.0 } else { PI };
        b.agent(&id, AgentType::Pedestrian, PEDESTRIAN, false, h0, move |t| Point::new(x + v * t, -8.0));
    }
    if b.agents.iter().all(|a| !a.to_predict) {
        b.agents[0].to_predict = true;
    }
    b.finish(format!("random_mix-{:08}", p.seed), p.frame)
}

/// Builds the scenario in memory (not yet round-tripped through JSON).
fn build(p: &SynthParams) -> Scenario {
    match p.kind {
        SynthKind::LeaderFollower => leader_follower(p),
        SynthKind::Crossing => crossing(p),
        SynthKind::CutIn => cut_in(p),
        SynthKind::StopAndGo => stop_and_go(p),
        SynthKind::RandomMix => random_mix(p),
    }
}

/// Canonical JSON document for the parameters.
pub fn generate_document(p: &SynthParams) -> String {
    serialize_scenario(&build(p))
}

/// Generated scenario, read back through the parser.
pub fn gen_scenario(p: &SynthParams) -> Scenario {
    parse_scenario(&generate_document(p)).expect("generated documents parse").scenario
}

/// `count` scenarios with parameters sampled from consecutive seeds.
pub fn corpus(kind: SynthKind, count: usize, seed: u64) -> Vec<Scenario> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|k| gen_scenario(&SynthParams::sampled(kind, seed.wrapping_add(k))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::validate_scenario;
    use approx::assert_abs_diff_eq;

    #[test]
    fn profile_integrates_piecewise() {
        let p = SpeedProfile {
            s0: 0.0,
            v0: 10.0,
            phases: vec![(1.0, -5.0), (2.0, 0.0)],
        };
        assert_abs_diff_eq!(p.eval(1.0).0, 10.0);
        assert_abs_diff_eq!(p.eval(2.0).0, 10.0 + 10.0 - 2.5);
        assert_abs_diff_eq!(p.eval(3.0).0, 17.5 + 5.0);
        // Braking to a stop holds position.
        let stop = SpeedProfile {
            s0: 0.0,
            v0: 4.0,
            phases: vec![(0.0, -2.0)],
        };
        assert_abs_diff_eq!(stop.eval(10.0).0, 4.0);
        assert_eq!(stop.eval(10.0).1, 0.0);
    }

    #[test]
    fn every_kind_validates_and_is_deterministic() {
        for kind in [SynthKind::LeaderFollower, SynthKind::Crossing, SynthKind::CutIn, SynthKind::StopAndGo, SynthKind::RandomMix] {
            for seed in 0..60 {
                let p = SynthParams::sampled(kind, seed);
                let doc = generate_document(&p);
                assert_eq!(doc, generate_document(&p));
                let parsed = parse_scenario(&doc).unwrap();
                assert!(parsed.warnings.is_empty());
                let s = parsed.scenario;
                assert!(validate_scenario(&s).is_empty(), "{kind:?} {seed}");
                assert!(s.agents.len() <= MAX_AGENTS);
                for a in &s.agents {
                    for st in &a.states {
                        assert!(st.vx.hypot(st.vy) <= MAX_SPEED);
                    }
                }
            }
        }
    }

    #[test]
    fn leader_follower_gap_at_closest_approach() {
        let s = gen_scenario(&SynthParams::new(SynthKind::LeaderFollower, 0));
        let (f, l) = (&s.agents[0].states, &s.agents[1].states);
        let last = s.t_tot - 1;
        assert_abs_diff_eq!(l[last].x - f[last].x - VEHICLE.0, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn rigid_frame_moves_everything() {
        let mut p = SynthParams::new(SynthKind::Crossing, 0);
        let base = gen_scenario(&p);
        p.frame = (10.0, -5.0, 0.5);
        let moved = gen_scenario(&p);
        let a = base.agents[1].states[30].position();
        let b = moved.agents[1].states[30].position();
        assert_abs_diff_eq!(b.dist(Point::new(10.0, -5.0)), a.norm(), epsilon = 1e-9);
    }
}
