//! Seeded discrete-time simulator of the body sensor network, closed over
//! the runtime loop.
//!
//! Each tick the world applies pending commands, lets scenario hooks move
//! the true parameters, runs every active leaf `executions_per_tick` times
//! (an execution happens with the leaf's frequency and succeeds with its
//! reliability) and updates batteries. The managing loop then sees either
//! the live telemetry (tamed) or nothing but its static estimates
//! (untamed). Achieved reliability and cost are the root formulae evaluated
//! at the world's true parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::cgm::{context_param, opt_param, parse_model, GoalModel};
use crate::compiler::NodeForms;
use crate::oracle::ConcreteBinding;
use crate::runtime::{
    execute, plan, track_commands, Command, KnowledgeState, Metric, Policy, RuntimeError, TelemetryEvent,
};

pub const BSN_MODEL: &str = include_str!("../models/bsn.json");
pub const BSN_POLICY: &str = include_str!("../models/bsn_policy.json");
pub const SCENARIO_1A: &str = include_str!("../models/scenario_1a.json");
pub const SCENARIO_1B: &str = include_str!("../models/scenario_1b.json");
pub const SCENARIO_1C: &str = include_str!("../models/scenario_1c.json");

pub const BATTERY_OFF: f64 = 0.02;
pub const BATTERY_ON: f64 = 0.90;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("traces differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// The bundled BSN goal model.
pub fn bsn_model() -> GoalModel {
    parse_model(BSN_MODEL).expect("bundled model parses")
}

pub fn bsn_policy() -> Policy {
    Policy::from_json(BSN_POLICY).expect("bundled policy parses")
}

/// Bundled config by name: `1a`, `1b` or `1c`.
pub fn bundled_scenario(name: &str) -> Option<ScenarioConfig> {
    let text = match name {
        "1a" => SCENARIO_1A,
        "1b" => SCENARIO_1B,
        "1c" => SCENARIO_1C,
        _ => return None,
    };
    Some(ScenarioConfig::from_json(text).expect("bundled scenario parses"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "system-itself")]
    SystemItself,
    #[serde(rename = "system-goals")]
    SystemGoals,
    #[serde(rename = "environment")]
    Environment,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Tamed,
    Untamed,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tamed" => Ok(Mode::Tamed),
            "untamed" => Ok(Mode::Untamed),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafTruth {
    pub r: f64,
    pub w: f64,
}

/// Hub flooding: each arrival lowers the listed leaves' reliability by
/// `drop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadRamp {
    pub leaves: Vec<String>,
    pub arrivals: Vec<f64>,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub level: f64,
    /// Charge spent per execution of any of the sensor's leaves.
    pub drain: f64,
    /// Charge regained per second while the sensor is off.
    pub recharge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub context: String,
    pub leaves: Vec<String>,
    pub battery: BatterySpec,
}

/// What the untamed loop believes; anything left out falls back to the
/// world's initial truth, with every context holding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticEstimates {
    #[serde(default)]
    pub leaves: BTreeMap<String, LeafTruth>,
    #[serde(default)]
    pub knobs: BTreeMap<String, f64>,
    #[serde(default)]
    pub contexts: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub duration: f64,
    pub tick: f64,
    #[serde(default)]
    pub mode: Mode,
    /// Ticks before this time are left out of the in-band fraction.
    pub transient: f64,
    pub executions_per_tick: u32,
    pub window: usize,
    pub min_samples: usize,
    /// Relative half-width of the uniform noise on reported costs.
    #[serde(default)]
    pub cost_noise: f64,
    pub leaves: BTreeMap<String, LeafTruth>,
    pub initial_knobs: BTreeMap<String, f64>,
    #[serde(default)]
    pub contexts: BTreeMap<String, bool>,
    #[serde(default)]
    pub placeholders: BTreeMap<String, bool>,
    #[serde(default)]
    pub load: Option<LoadRamp>,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
    #[serde(default)]
    pub static_estimates: StaticEstimates,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let c: ScenarioConfig = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        if !(c.duration > 0.0) || !(c.tick > 0.0) {
            return Err(SimError::Config("duration and tick must be positive".into()));
        }
        Ok(c)
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.tick + 1e-9).floor() as usize
    }

    fn check(&self, model: &GoalModel, policy: &Policy) -> Result<(), SimError> {
        let leaf = |id: &str| model.node(id).is_some_and(|n| n.is_leaf_like());
        for id in self.leaves.keys().chain(self.static_estimates.leaves.keys()) {
            if !leaf(id) {
                return Err(SimError::Config(format!("unknown leaf `{id}`")));
            }
        }
        for l in model.leaves() {
            if !l.is_placeholder() && !self.leaves.contains_key(&l.id) {
                return Err(SimError::Config(format!("no true parameters for leaf `{}`", l.id)));
            }
        }
        for (id, v) in self.leaves.iter().chain(&self.static_estimates.leaves) {
            if !(0.0..=1.0).contains(&v.r) || !(v.w >= 0.0) {
                return Err(SimError::Config(format!("leaf `{id}` needs r in [0,1] and w >= 0")));
            }
        }
        for id in self.contexts.keys().chain(self.static_estimates.contexts.keys()) {
            if !model.contexts.contains_key(id) {
                return Err(SimError::Config(format!("unknown context `{id}`")));
            }
        }
        for id in self.placeholders.keys() {
            if !model.node(id).is_some_and(|n| n.is_placeholder()) {
                return Err(SimError::Config(format!("unknown placeholder `{id}`")));
            }
        }
        for (id, v) in self.initial_knobs.iter().chain(&self.static_estimates.knobs) {
            match policy.knobs.iter().find(|k| &k.id == id) {
                Some(k) if k.contains(*v) => {}
                Some(_) => return Err(SimError::Config(format!("knob `{id}` value {v} outside its range"))),
                None => return Err(SimError::Config(format!("unknown knob `{id}`"))),
            }
        }
        for s in &self.sensors {
            if !model.contexts.contains_key(&s.context) || !s.leaves.iter().all(|l| leaf(l)) {
                return Err(SimError::Config(format!("sensor on `{}` references unknown ids", s.context)));
            }
            if !(0.0..=1.0).contains(&s.battery.level) {
                return Err(SimError::Config("battery level must lie in [0,1]".into()));
            }
        }
        if let Some(load) = &self.load {
            if !load.leaves.iter().all(|l| leaf(l)) {
                return Err(SimError::Config("load ramp references an unknown leaf".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Risk {
    Low,
    Medium,
    High,
}

/// Risk bands for one vital signal: `risks[i]` covers values between
/// `cuts[i-1]` and `cuts[i]`; the outer bands are open-ended.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalRanges {
    pub signal: &'static str,
    pub cuts: Vec<f64>,
    pub risks: Vec<Risk>,
}

impl VitalRanges {
    pub fn classify(&self, value: f64) -> Risk {
        let i = self.cuts.iter().take_while(|c| value >= **c).count();
        self.risks[i]
    }

    pub fn all() -> Vec<VitalRanges> {
        use Risk::*;
        let v = |signal, cuts: &[f64], risks: &[Risk]| VitalRanges { signal, cuts: cuts.to_vec(), risks: risks.to_vec() };
        vec![
            v("oxygen", &[55.0, 65.0], &[High, Medium, Low]),
            v("heart_rate", &[70.0, 85.0, 97.0, 115.0], &[High, Medium, Low, Medium, High]),
            v("temperature", &[32.0, 36.0, 38.0, 41.0], &[High, Medium, Low, Medium, High]),
            v("systolic", &[120.0, 140.0], &[Low, Medium, High]),
            v("diastolic", &[80.0, 90.0], &[Low, Medium, High]),
        ]
    }
}

/// Bounded random walks for the five vital signals.
#[derive(Debug, Clone)]
struct Vitals {
    values: [f64; 5],
}

const VITAL_BOUNDS: [(f64, f64, f64); 5] =
    [(40.0, 100.0, 0.5), (40.0, 180.0, 2.0), (33.0, 42.0, 0.05), (90.0, 170.0, 1.5), (50.0, 110.0, 1.0)];

impl Vitals {
    fn new() -> Self {
        Vitals { values: [97.0, 80.0, 37.0, 115.0, 75.0] }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) {
        for (v, (lo, hi, sd)) in self.values.iter_mut().zip(VITAL_BOUNDS) {
            *v = (*v + rng.gen_range(-sd..=sd)).clamp(lo, hi);
        }
    }

    fn get(&self, signal: &str) -> Option<f64> {
        let i = ["oxygen", "heart_rate", "temperature", "systolic", "diastolic"].iter().position(|s| *s == signal)?;
        Some(self.values[i])
    }

    pub fn risks(&self) -> Vec<Risk> {
        VitalRanges::all().iter().zip(self.values).map(|(b, v)| b.classify(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    pub level: f64,
    pub active: bool,
    pub spec: BatterySpec,
}

impl Battery {
    /// Spends `executions` worth of charge while on, recharges while off,
    /// then applies the threshold state machine. Returns true on a flip.
    pub fn update(&mut self, executions: u32, dt: f64) -> bool {
        if self.active {
            self.level -= self.spec.drain * f64::from(executions);
        } else {
            self.level += self.spec.recharge * dt;
        }
        self.level = self.level.clamp(0.0, 1.0);
        let next = if self.active { self.level >= BATTERY_OFF } else { self.level >= BATTERY_ON };
        let flipped = next != self.active;
        self.active = next;
        flipped
    }
}

/// The managed system's true state.
#[derive(Debug, Clone)]
pub struct World {
    pub config: ScenarioConfig,
    pub leaf_ids: Vec<String>,
    base: Vec<LeafTruth>,
    pub truth: Vec<LeafTruth>,
    pub frequency: Vec<f64>,
    pub knobs: BTreeMap<String, f64>,
    knob_leaves: BTreeMap<String, Vec<usize>>,
    pub contexts: BTreeMap<String, bool>,
    pub placeholders: BTreeMap<String, bool>,
    /// Context ids and placeholder ids gating each leaf.
    gates: Vec<Vec<String>>,
    pub batteries: Vec<Battery>,
    sensor_leaves: Vec<Vec<usize>>,
    rngs: Vec<ChaCha8Rng>,
    vitals: Vitals,
    vitals_rng: ChaCha8Rng,
    heart_condition: Option<(String, crate::cgm::Condition)>,
    announced: bool,
}

impl World {
    pub fn new(model: &GoalModel, policy: &Policy, config: &ScenarioConfig) -> Result<Self, SimError> {
        config.check(model, policy)?;
        let leaves = model.leaves();
        let leaf_ids: Vec<String> = leaves.iter().map(|n| n.id.clone()).collect();
        let index = |id: &str| leaf_ids.iter().position(|l| l == id).expect("checked");
        let base: Vec<LeafTruth> = leaf_ids
            .iter()
            .map(|id| config.leaves.get(id).copied().unwrap_or(LeafTruth { r: 1.0, w: 0.0 }))
            .collect();
        let mut gates = Vec::new();
        for l in &leaves {
            let mut g = Vec::new();
            let mut cur = Some(*l);
            while let Some(n) = cur {
                g.extend(n.context_refs.iter().cloned());
                if n.is_placeholder() {
                    g.push(n.id.clone());
                }
                cur = model.parent_of(&n.id);
            }
            gates.push(g);
        }
        let knob_leaves = policy
            .knobs
            .iter()
            .map(|k| (k.id.clone(), k.leaves().iter().map(|l| index(l)).collect()))
            .collect();
        let mut contexts: BTreeMap<String, bool> = model.contexts.keys().map(|c| (c.clone(), true)).collect();
        contexts.extend(config.contexts.clone());
        let mut placeholders: BTreeMap<String, bool> =
            model.placeholders().iter().map(|p| (p.id.clone(), false)).collect();
        placeholders.extend(config.placeholders.clone());
        let environment = config.scenario == Scenario::Environment;
        let batteries: Vec<Battery> = config
            .sensors
            .iter()
            .map(|s| Battery { level: s.battery.level, active: s.battery.level >= BATTERY_OFF, spec: s.battery.clone() })
            .collect();
        if environment {
            for (s, b) in config.sensors.iter().zip(&batteries) {
                contexts.insert(s.context.clone(), b.active);
            }
        }
        let sensor_leaves = config.sensors.iter().map(|s| s.leaves.iter().map(|l| index(l)).collect()).collect();
        let rngs = (0..leaf_ids.len())
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(config.seed);
                r.set_stream(i as u64 + 1);
                r
            })
            .collect();
        let mut vitals_rng = ChaCha8Rng::seed_from_u64(config.seed);
        vitals_rng.set_stream(0);
        let heart_condition = model
            .contexts
            .values()
            .find_map(|c| c.condition.clone().map(|cond| (c.id.clone(), cond)));
        let mut w = World {
            config: config.clone(),
            truth: base.clone(),
            base,
            frequency: vec![1.0; leaf_ids.len()],
            leaf_ids,
            knobs: BTreeMap::new(),
            knob_leaves,
            contexts,
            placeholders,
            gates,
            batteries,
            sensor_leaves,
            rngs,
            vitals: Vitals::new(),
            vitals_rng,
            heart_condition,
            announced: false,
        };
        for k in &policy.knobs {
            let v = config.initial_knobs.get(&k.id).copied().unwrap_or(k.max);
            w.set_knob(&k.id, v);
        }
        w.update_vital_context();
        Ok(w)
    }

    fn set_knob(&mut self, id: &str, v: f64) {
        if let Some(ls) = self.knob_leaves.get(id) {
            for &i in ls {
                self.frequency[i] = v;
            }
            self.knobs.insert(id.to_string(), v);
        }
    }

    fn update_vital_context(&mut self) {
        if let Some((ctx, cond)) = &self.heart_condition {
            let v = self.vitals.get(&cond.variable).unwrap_or(0.0);
            self.contexts.insert(ctx.clone(), cond.holds(v));
        }
    }

    fn gate_open(&self, i: usize) -> bool {
        self.gates[i].iter().all(|g| {
            self.contexts.get(g).or_else(|| self.placeholders.get(g)).copied().unwrap_or(false)
        })
    }

    /// Scenario hooks on the true parameters at time `t`.
    pub fn inject(&mut self, t: f64) {
        if self.config.scenario != Scenario::SystemItself {
            return;
        }
        let Some(load) = &self.config.load else { return };
        let arrived = load.arrivals.iter().filter(|a| **a <= t).count() as f64;
        for l in &load.leaves {
            if let Some(i) = self.leaf_ids.iter().position(|x| x == l) {
                self.truth[i].r = (self.base[i].r - arrived * load.drop).clamp(0.0, 1.0);
            }
        }
    }

    /// Advances one tick and returns the telemetry it produced.
    pub fn step(&mut self, t: f64, commands: &[Command]) -> Vec<TelemetryEvent> {
        for c in commands {
            self.set_knob(&c.knob, c.value);
        }
        self.inject(t);
        let mut events = Vec::new();
        if !self.announced {
            for (c, v) in &self.contexts {
                events.push(TelemetryEvent::context(t, c, *v));
            }
            for (p, v) in &self.placeholders {
                events.push(TelemetryEvent::context(t, p, *v));
            }
            self.announced = true;
        }
        let mut executions = vec![0u32; self.leaf_ids.len()];
        let noise = self.config.cost_noise;
        for i in 0..self.leaf_ids.len() {
            if !self.gate_open(i) {
                continue;
            }
            let LeafTruth { r, w } = self.truth[i];
            let f = self.frequency[i];
            let rng = &mut self.rngs[i];
            for _ in 0..self.config.executions_per_tick {
                let runs = rng.gen::<f64>() < f;
                let ok = rng.gen::<f64>() < r;
                let jitter = rng.gen_range(-1.0..=1.0) * noise;
                if runs {
                    executions[i] += 1;
                    events.push(TelemetryEvent::exec(t, &self.leaf_ids[i], ok));
                    events.push(TelemetryEvent::cost(t, &self.leaf_ids[i], w * (1.0 + jitter)));
                }
            }
        }
        if self.config.scenario == Scenario::Environment {
            for (k, s) in self.config.sensors.iter().enumerate() {
                let n: u32 = self.sensor_leaves[k].iter().map(|&i| executions[i]).sum();
                if self.batteries[k].update(n, self.config.tick) {
                    let active = self.batteries[k].active;
                    self.contexts.insert(s.context.clone(), active);
                    events.push(TelemetryEvent::context(t, &s.context, active));
                }
            }
        }
        self.vitals.step(&mut self.vitals_rng);
        let before = self.heart_condition.as_ref().and_then(|(c, _)| self.contexts.get(c).copied());
        self.update_vital_context();
        if let Some((c, _)) = &self.heart_condition {
            let now = self.contexts[c];
            if before != Some(now) {
                events.push(TelemetryEvent::context(t, c, now));
            }
        }
        events
    }

    /// Binding of every model parameter to the world's true value.
    pub fn true_binding(&self, model: &GoalModel) -> ConcreteBinding {
        let mut b = ConcreteBinding::default();
        for (i, n) in model.leaves().iter().enumerate() {
            let lp = n.leaf_params.as_ref().expect("leaf params");
            b.set(&lp.reliability, self.truth[i].r);
            b.set(&lp.cost, self.truth[i].w);
            b.set(&lp.frequency, self.frequency[i]);
        }
        for (c, v) in &self.contexts {
            b.set(&context_param(c), f64::from(u8::from(*v)));
        }
        for (p, v) in &self.placeholders {
            b.set(&opt_param(p), f64::from(u8::from(*v)));
        }
        b
    }

    pub fn risks(&self) -> Vec<Risk> {
        self.vitals.risks()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub reliability: f64,
    pub cost: f64,
    pub contexts: Vec<f64>,
    pub knobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub context_ids: Vec<String>,
    pub knob_ids: Vec<String>,
    pub records: Vec<Record>,
}

impl TimeSeries {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "reliability".into(), "cost".into()];
        h.extend(self.context_ids.iter().cloned());
        h.extend(self.knob_ids.iter().cloned());
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![r.t.to_string(), r.reliability.to_string(), r.cost.to_string()];
            row.extend(r.contexts.iter().map(|v| v.to_string()));
            row.extend(r.knobs.iter().map(|v| v.to_string()));
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Reads a CSV written by `to_csv`: columns after `cost` named `C<n>`
    /// are contexts, the rest knobs.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> =
            rd.headers().map_err(|e| SimError::Csv(e.to_string()))?.iter().map(String::from).collect();
        if header.len() < 3 || header[..3] != ["t", "reliability", "cost"] {
            return Err(SimError::Csv("expected columns t, reliability, cost".into()));
        }
        let is_ctx = |h: &str| h.starts_with('C') && h[1..].parse::<u32>().is_ok();
        let context_ids: Vec<String> = header[3..].iter().filter(|h| is_ctx(h)).cloned().collect();
        let knob_ids: Vec<String> = header[3..].iter().filter(|h| !is_ctx(h)).cloned().collect();
        let mut records = Vec::new();
        for row in rd.records() {
            let row = row.map_err(|e| SimError::Csv(e.to_string()))?;
            let nums: Vec<f64> = row
                .iter()
                .map(|c| c.trim().parse::<f64>().map_err(|_| SimError::Csv(format!("bad number `{c}`"))))
                .collect::<Result<_, _>>()?;
            if nums.len() != header.len() {
                return Err(SimError::Csv("row width differs from header".into()));
            }
            let mut contexts = Vec::new();
            let mut knobs = Vec::new();
            for (h, v) in header[3..].iter().zip(&nums[3..]) {
                if is_ctx(h) {
                    contexts.push(*v);
                } else {
                    knobs.push(*v);
                }
            }
            records.push(Record { t: nums[0], reliability: nums[1], cost: nums[2], contexts, knobs });
        }
        Ok(TimeSeries { context_ids, knob_ids, records })
    }

    /// Fraction of records from `transient` on with every value inside its
    /// band.
    pub fn in_band_fraction(&self, policy: &Policy, transient: f64) -> f64 {
        let tail: Vec<&Record> = self.records.iter().filter(|r| r.t >= transient).collect();
        if tail.is_empty() {
            return 0.0;
        }
        let inside = tail
            .iter()
            .filter(|r| {
                policy.properties.iter().all(|p| match p.metric {
                    Metric::Reliability => p.in_margin(r.reliability),
                    Metric::Cost => p.in_margin(r.cost),
                })
            })
            .count();
        inside as f64 / tail.len() as f64
    }
}

/// Closed-loop run of one scenario in the config's mode.
pub fn run(config: &ScenarioConfig, policy: &Policy, model: &GoalModel) -> Result<TimeSeries, SimError> {
    policy.check(model)?;
    let mut world = World::new(model, policy, config)?;
    let root = model.root_id.clone();

    let mut state = KnowledgeState::new(model, config.window)?;
    state.min_samples = config.min_samples;
    let forms: NodeForms = state.forms[&root].clone();
    let statics = &config.static_estimates;
    for (i, id) in world.leaf_ids.iter().enumerate() {
        let prior = statics.leaves.get(id).copied().unwrap_or(world.truth[i]);
        state.set_reliability(id, prior.r);
        state.set_cost(id, prior.w);
    }
    match config.mode {
        Mode::Tamed => {
            for (i, id) in world.leaf_ids.iter().enumerate() {
                state.set_frequency(id, world.frequency[i]);
            }
        }
        Mode::Untamed => {
            for (i, id) in world.leaf_ids.iter().enumerate() {
                state.set_frequency(id, world.frequency[i]);
            }
            let believed: Vec<Command> = statics
                .knobs
                .iter()
                .map(|(k, v)| Command { t: 0.0, knob: k.clone(), value: *v })
                .collect();
            track_commands(&mut state, policy, &believed);
            for c in model.contexts.keys() {
                state.set_context(c, statics.contexts.get(c).copied().unwrap_or(true));
            }
            for (p, v) in &world.placeholders {
                state.set_context(p, *v);
            }
        }
    }

    let context_ids: Vec<String> = model.contexts.keys().cloned().collect();
    let knob_ids: Vec<String> = policy.knobs.iter().map(|k| k.id.clone()).collect();
    let mut records = Vec::with_capacity(config.ticks());
    let mut pending: Vec<Command> = Vec::new();
    for k in 0..config.ticks() {
        let t = k as f64 * config.tick;
        let events = world.step(t, &pending);
        let truth = world.true_binding(model);
        records.push(Record {
            t,
            reliability: forms.p.evaluate(&truth).map_err(RuntimeError::from)?,
            cost: forms.cost.evaluate(&truth).map_err(RuntimeError::from)?,
            contexts: context_ids.iter().map(|c| f64::from(u8::from(world.contexts[c]))).collect(),
            knobs: knob_ids.iter().map(|id| world.knobs[id]).collect(),
        });
        if config.mode == Mode::Tamed {
            state.monitor_ingest(t, &events);
        } else {
            state.timestamp = t;
        }
        let actuation = plan(&state, policy)?;
        pending = execute(&actuation, t);
        track_commands(&mut state, policy, &pending);
    }
    Ok(TimeSeries { context_ids, knob_ids, records })
}

/// Enhancement ratio; infinite when the tamed distance is zero and the
/// untamed one is not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio(pub f64);

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{:.2}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub d_tamed_reliability: f64,
    pub d_untamed_reliability: f64,
    pub d_tamed_cost: f64,
    pub d_untamed_cost: f64,
    pub e_r: Ratio,
    pub e_c: Ratio,
}

/// Mean absolute distance to the setpoint.
pub fn distance(series: &[f64], setpoint: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    series.iter().map(|x| (x - setpoint).abs()).sum::<f64>() / series.len() as f64
}

fn ratio(untamed: f64, tamed: f64) -> Ratio {
    if tamed == 0.0 {
        Ratio(if untamed == 0.0 { 1.0 } else { f64::INFINITY })
    } else {
        Ratio(untamed / tamed)
    }
}

pub fn metrics(tamed: &TimeSeries, untamed: &TimeSeries, reliability_setpoint: f64, cost_setpoint: f64) -> Result<Metrics, SimError> {
    if tamed.records.len() != untamed.records.len() {
        return Err(SimError::LengthMismatch(tamed.records.len(), untamed.records.len()));
    }
    let col = |ts: &TimeSeries, rel: bool| -> Vec<f64> {
        ts.records.iter().map(|r| if rel { r.reliability } else { r.cost }).collect()
    };
    let dtr = distance(&col(tamed, true), reliability_setpoint);
    let dur = distance(&col(untamed, true), reliability_setpoint);
    let dtc = distance(&col(tamed, false), cost_setpoint);
    let duc = distance(&col(untamed, false), cost_setpoint);
    Ok(Metrics {
        d_tamed_reliability: dtr,
        d_untamed_reliability: dur,
        d_tamed_cost: dtc,
        d_untamed_cost: duc,
        e_r: ratio(dur, dtr),
        e_c: ratio(duc, dtc),
    })
}

/// Setpoints of the first reliability and cost properties.
pub fn setpoints(policy: &Policy) -> (f64, f64) {
    let find = |m| policy.properties.iter().find(|p| p.metric == m).map_or(0.0, |p| p.setpoint);
    (find(Metric::Reliability), find(Metric::Cost))
}

/// Runs both modes and summarizes them.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub tamed: TimeSeries,
    pub untamed: TimeSeries,
    pub metrics: Metrics,
    pub tamed_in_band: f64,
}

pub fn compare(config: &ScenarioConfig, policy: &Policy, model: &GoalModel) -> Result<Comparison, SimError> {
    let tamed = run(&ScenarioConfig { mode: Mode::Tamed, ..config.clone() }, policy, model)?;
    let untamed = run(&ScenarioConfig { mode: Mode::Untamed, ..config.clone() }, policy, model)?;
    let (rs, cs) = setpoints(policy);
    let metrics = metrics(&tamed, &untamed, rs, cs)?;
    let tamed_in_band = tamed.in_band_fraction(policy, config.transient);
    Ok(Comparison { tamed, untamed, metrics, tamed_in_band })
}

impl Comparison {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let m = &self.metrics;
        let _ = write!(
            s,
            "d_r {:.5}/{:.5} e_r {} d_c {:.5}/{:.5} e_c {} in-band {:.1}%",
            m.d_tamed_reliability,
            m.d_untamed_reliability,
            m.e_r,
            m.d_tamed_cost,
            m.d_untamed_cost,
            m.e_c,
            100.0 * self.tamed_in_band
        );
        s
    }
}
