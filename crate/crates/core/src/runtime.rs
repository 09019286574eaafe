//! The managing system: monitor, analyze, plan and execute over the compiled
//! formulae.
//!
//! Telemetry is JSONL, one event per line:
//!
//! ```text
//! {"t": 12.0, "kind": "exec", "id": "T2.1", "payload": true}
//! {"t": 12.0, "kind": "cost", "id": "T2.1", "payload": 0.1275}
//! {"t": 12.0, "kind": "context", "id": "C3", "payload": false}
//! ```
//!
//! A `context` event whose id names a placeholder sets that placeholder's
//! existence flag. Actuation commands are JSONL `{"t", "knob", "value"}`.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cgm::{context_param, GoalModel};
use crate::compiler::{compile_model, CompileError, NodeForms};
use crate::symexpr::{Binding, Bindings, CompiledExpr, EvalError};

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_GRID_CAP: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("policy references unknown {what} `{id}`")]
    Unknown { what: &'static str, id: String },
    #[error("knob grid has {size} candidates, above the cap of {cap}")]
    GridTooLarge { size: u128, cap: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Exec,
    Context,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub t: f64,
    pub kind: EventKind,
    pub id: String,
    pub payload: serde_json::Value,
}

impl TelemetryEvent {
    pub fn exec(t: f64, id: &str, success: bool) -> Self {
        TelemetryEvent { t, kind: EventKind::Exec, id: id.to_string(), payload: success.into() }
    }

    pub fn cost(t: f64, id: &str, cost: f64) -> Self {
        TelemetryEvent { t, kind: EventKind::Cost, id: id.to_string(), payload: cost.into() }
    }

    pub fn context(t: f64, id: &str, holds: bool) -> Self {
        TelemetryEvent { t, kind: EventKind::Context, id: id.to_string(), payload: holds.into() }
    }
}

/// Windowed estimates for one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEstimate {
    pub reliability: f64,
    pub cost: f64,
    pub frequency: f64,
    outcomes: VecDeque<bool>,
    successes: usize,
    costs: VecDeque<f64>,
    cost_sum: f64,
}

impl LeafEstimate {
    fn new() -> Self {
        LeafEstimate {
            reliability: 1.0,
            cost: 0.0,
            frequency: 1.0,
            outcomes: VecDeque::new(),
            successes: 0,
            costs: VecDeque::new(),
            cost_sum: 0.0,
        }
    }

    pub fn samples(&self) -> usize {
        self.outcomes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ParamRef {
    Reliability(usize),
    Frequency(usize),
    Cost(usize),
    Context(usize),
    Opt(usize),
}

/// What the managing system currently believes about the managed system.
#[derive(Debug, Clone)]
pub struct KnowledgeState {
    pub forms: BTreeMap<String, NodeForms>,
    pub leaf_ids: Vec<String>,
    pub leaves: Vec<LeafEstimate>,
    pub context_ids: Vec<String>,
    pub contexts: Vec<f64>,
    pub placeholder_ids: Vec<String>,
    pub opts: Vec<f64>,
    pub timestamp: f64,
    pub window: usize,
    pub min_samples: usize,
    pub malformed: usize,
    params: BTreeMap<String, ParamRef>,
}

impl KnowledgeState {
    /// Fresh state with priors `r = 1`, `w = 0`, `f = 1`, every context true
    /// and every placeholder absent.
    pub fn new(model: &GoalModel, window: usize) -> Result<Self, RuntimeError> {
        let forms = compile_model(model)?;
        let leaves = model.leaves();
        let leaf_ids: Vec<String> = leaves.iter().map(|n| n.id.clone()).collect();
        let context_ids: Vec<String> = model.contexts.keys().cloned().collect();
        let placeholder_ids: Vec<String> =
            leaves.iter().filter(|n| n.is_placeholder()).map(|n| n.id.clone()).collect();
        let mut params = BTreeMap::new();
        for (i, n) in leaves.iter().enumerate() {
            let lp = n.leaf_params.as_ref().expect("leaf params");
            params.insert(lp.reliability.clone(), ParamRef::Reliability(i));
            params.insert(lp.frequency.clone(), ParamRef::Frequency(i));
            params.insert(lp.cost.clone(), ParamRef::Cost(i));
        }
        for (i, c) in context_ids.iter().enumerate() {
            params.insert(context_param(c), ParamRef::Context(i));
        }
        for (i, p) in placeholder_ids.iter().enumerate() {
            params.insert(crate::cgm::opt_param(p), ParamRef::Opt(i));
        }
        Ok(KnowledgeState {
            forms,
            leaves: vec![LeafEstimate::new(); leaf_ids.len()],
            leaf_ids,
            contexts: vec![1.0; context_ids.len()],
            context_ids,
            opts: vec![0.0; placeholder_ids.len()],
            placeholder_ids,
            timestamp: 0.0,
            window: window.max(1),
            min_samples: 1,
            malformed: 0,
            params,
        })
    }

    fn leaf_index(&self, id: &str) -> Option<usize> {
        self.leaf_ids.iter().position(|l| l == id)
    }

    pub fn leaf(&self, id: &str) -> Option<&LeafEstimate> {
        self.leaf_index(id).map(|i| &self.leaves[i])
    }

    pub fn set_reliability(&mut self, leaf: &str, r: f64) -> bool {
        self.leaf_index(leaf).map(|i| self.leaves[i].reliability = r).is_some()
    }

    pub fn set_cost(&mut self, leaf: &str, w: f64) -> bool {
        self.leaf_index(leaf).map(|i| self.leaves[i].cost = w).is_some()
    }

    pub fn set_frequency(&mut self, leaf: &str, f: f64) -> bool {
        self.leaf_index(leaf).map(|i| self.leaves[i].frequency = f).is_some()
    }

    pub fn set_context(&mut self, ctx: &str, holds: bool) -> bool {
        let v = if holds { 1.0 } else { 0.0 };
        if let Some(i) = self.context_ids.iter().position(|c| c == ctx) {
            self.contexts[i] = v;
            return true;
        }
        if let Some(i) = self.placeholder_ids.iter().position(|c| c == ctx) {
            self.opts[i] = v;
            return true;
        }
        false
    }

    pub fn context(&self, ctx: &str) -> Option<f64> {
        self.context_ids.iter().position(|c| c == ctx).map(|i| self.contexts[i])
    }

    /// Folds a timestamp-ordered batch into the windows. Events that are
    /// malformed, refer to unknown ids or go back in time are counted in
    /// `malformed` and skipped. The timestamp becomes `now`.
    pub fn monitor_ingest(&mut self, now: f64, events: &[TelemetryEvent]) {
        let mut last = f64::NEG_INFINITY;
        let mut touched = vec![false; self.leaves.len()];
        for e in events {
            if !e.t.is_finite() || e.t < last {
                self.malformed += 1;
                continue;
            }
            last = e.t;
            let ok = match e.kind {
                EventKind::Exec => match (self.leaf_index(&e.id), e.payload.as_bool()) {
                    (Some(i), Some(success)) => {
                        let l = &mut self.leaves[i];
                        l.outcomes.push_back(success);
                        l.successes += usize::from(success);
                        if l.outcomes.len() > self.window {
                            let old = l.outcomes.pop_front().unwrap_or(false);
                            l.successes -= usize::from(old);
                        }
                        touched[i] = true;
                        true
                    }
                    _ => false,
                },
                EventKind::Cost => match (self.leaf_index(&e.id), e.payload.as_f64()) {
                    (Some(i), Some(w)) if w >= 0.0 && w.is_finite() => {
                        let l = &mut self.leaves[i];
                        l.costs.push_back(w);
                        l.cost_sum += w;
                        if l.costs.len() > self.window {
                            l.cost_sum -= l.costs.pop_front().unwrap_or(0.0);
                        }
                        touched[i] = true;
                        true
                    }
                    _ => false,
                },
                EventKind::Context => {
                    let holds = match &e.payload {
                        serde_json::Value::Bool(b) => Some(*b),
                        v => match v.as_f64() {
                            Some(x) if x == 0.0 || x == 1.0 => Some(x == 1.0),
                            _ => None,
                        },
                    };
                    holds.is_some_and(|h| self.set_context(&e.id, h))
                }
            };
            if !ok {
                self.malformed += 1;
            }
        }
        for (i, l) in self.leaves.iter_mut().enumerate() {
            if !touched[i] {
                continue;
            }
            if l.outcomes.len() >= self.min_samples && !l.outcomes.is_empty() {
                l.reliability = l.successes as f64 / l.outcomes.len() as f64;
            }
            if l.costs.len() >= self.min_samples && !l.costs.is_empty() {
                // Recompute the sum now and then to shed rounding drift.
                l.cost_sum = l.costs.iter().sum();
                l.cost = l.cost_sum / l.costs.len() as f64;
            }
        }
        self.timestamp = now;
    }

    /// Parses JSONL telemetry and ingests it; unparsable lines count as
    /// malformed.
    pub fn ingest_jsonl(&mut self, now: f64, text: &str) {
        let mut events = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<TelemetryEvent>(line) {
                Ok(e) => events.push(e),
                Err(_) => self.malformed += 1,
            }
        }
        self.monitor_ingest(now, &events);
    }

    fn lookup(&self, name: &str) -> Option<f64> {
        Some(match *self.params.get(name)? {
            ParamRef::Reliability(i) => self.leaves[i].reliability,
            ParamRef::Frequency(i) => self.leaves[i].frequency,
            ParamRef::Cost(i) => self.leaves[i].cost,
            ParamRef::Context(i) => self.contexts[i],
            ParamRef::Opt(i) => self.opts[i],
        })
    }
}

impl Bindings for KnowledgeState {
    fn value_of(&self, name: &str) -> Option<f64> {
        self.lookup(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Reliability,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub metric: Metric,
    pub goal: String,
    pub setpoint: f64,
    pub margin: f64,
}

impl Property {
    pub fn in_margin(&self, value: f64) -> bool {
        (value - self.setpoint).abs() <= self.margin * self.setpoint.abs()
    }
}

/// Propositional combination over property indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Combination {
    Prop(usize),
    And(Box<Combination>, Box<Combination>),
    Or(Box<Combination>, Box<Combination>),
}

impl Combination {
    pub fn all(n: usize) -> Option<Combination> {
        (0..n).map(Combination::Prop).reduce(|a, b| Combination::And(Box::new(a), Box::new(b)))
    }

    pub fn eval(&self, flags: &[bool]) -> bool {
        match self {
            Combination::Prop(i) => flags.get(*i).copied().unwrap_or(false),
            Combination::And(a, b) => a.eval(flags) && b.eval(flags),
            Combination::Or(a, b) => a.eval(flags) || b.eval(flags),
        }
    }

    fn max_index(&self) -> usize {
        match self {
            Combination::Prop(i) => *i,
            Combination::And(a, b) | Combination::Or(a, b) => a.max_index().max(b.max_index()),
        }
    }

    /// Parses e.g. `0 & (1 | 2)`; `AND`/`OR` are accepted for `&`/`|`, and
    /// AND binds tighter than OR.
    pub fn parse(text: &str) -> Result<Combination, String> {
        let spaced = text.replace('(', " ( ").replace(')', " ) ").replace('&', " & ").replace('|', " | ");
        let tokens: Vec<String> = spaced
            .split_whitespace()
            .map(|t| match t.to_ascii_uppercase().as_str() {
                "AND" => "&".to_string(),
                "OR" => "|".to_string(),
                _ => t.to_string(),
            })
            .collect();
        let mut pos = 0;
        let c = parse_or(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(format!("unexpected `{}` in combination", tokens[pos]));
        }
        Ok(c)
    }
}

fn parse_or(t: &[String], pos: &mut usize) -> Result<Combination, String> {
    let mut lhs = parse_and(t, pos)?;
    while t.get(*pos).map(String::as_str) == Some("|") {
        *pos += 1;
        lhs = Combination::Or(Box::new(lhs), Box::new(parse_and(t, pos)?));
    }
    Ok(lhs)
}

fn parse_and(t: &[String], pos: &mut usize) -> Result<Combination, String> {
    let mut lhs = parse_atom(t, pos)?;
    while t.get(*pos).map(String::as_str) == Some("&") {
        *pos += 1;
        lhs = Combination::And(Box::new(lhs), Box::new(parse_atom(t, pos)?));
    }
    Ok(lhs)
}

fn parse_atom(t: &[String], pos: &mut usize) -> Result<Combination, String> {
    let tok = t.get(*pos).ok_or("combination ends early")?;
    *pos += 1;
    if tok == "(" {
        let c = parse_or(t, pos)?;
        if t.get(*pos).map(String::as_str) != Some(")") {
            return Err("missing `)` in combination".into());
        }
        *pos += 1;
        return Ok(c);
    }
    tok.parse::<usize>().map(Combination::Prop).map_err(|_| format!("bad property index `{tok}`"))
}

/// A frequency knob. It sets the frequency of every leaf it lists; by
/// default the leaf named like the knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knob {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub leaves: Vec<String>,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Knob {
    pub fn leaves(&self) -> Vec<String> {
        if self.leaves.is_empty() {
            vec![self.id.clone()]
        } else {
            self.leaves.clone()
        }
    }

    /// Grid points `min, min + step, ...` up to `max`, rounded to 1e-9.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| ((self.min + k as f64 * self.step) * 1e9).round() / 1e9).collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min - 1e-9 && v <= self.max + 1e-9
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPolicy {
    properties: Vec<Property>,
    #[serde(default)]
    combination: Option<String>,
    knobs: Vec<Knob>,
    #[serde(default)]
    grid_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub properties: Vec<Property>,
    pub combination: Combination,
    /// Sorted by id.
    pub knobs: Vec<Knob>,
    pub grid_cap: usize,
}

impl Policy {
    pub fn new(properties: Vec<Property>, combination: Option<Combination>, mut knobs: Vec<Knob>) -> Result<Self, RuntimeError> {
        if properties.is_empty() {
            return Err(RuntimeError::Policy("no properties".into()));
        }
        for p in &properties {
            if !(p.margin > 0.0) || !p.setpoint.is_finite() {
                return Err(RuntimeError::Policy(format!("property on `{}` needs margin > 0", p.goal)));
            }
        }
        let combination = match combination {
            Some(c) => c,
            None => Combination::all(properties.len()).expect("nonempty"),
        };
        if combination.max_index() >= properties.len() {
            return Err(RuntimeError::Policy("combination references a missing property".into()));
        }
        for k in &knobs {
            if !(k.step > 0.0) || !(k.min <= k.max) || k.min < 0.0 || k.max > 1.0 {
                return Err(RuntimeError::Policy(format!("knob `{}` needs 0 <= min <= max <= 1 and step > 0", k.id)));
            }
        }
        knobs.sort_by(|a, b| a.id.cmp(&b.id));
        if knobs.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(RuntimeError::Policy("duplicate knob id".into()));
        }
        Ok(Policy { properties, combination, knobs, grid_cap: DEFAULT_GRID_CAP })
    }

    pub fn from_json(text: &str) -> Result<Self, RuntimeError> {
        let raw: RawPolicy = serde_json::from_str(text).map_err(|e| RuntimeError::Policy(e.to_string()))?;
        let combination = match raw.combination {
            Some(s) => Some(Combination::parse(&s).map_err(RuntimeError::Policy)?),
            None => None,
        };
        let mut p = Policy::new(raw.properties, combination, raw.knobs)?;
        if let Some(cap) = raw.grid_cap {
            p.grid_cap = cap;
        }
        Ok(p)
    }

    /// Checks goal, leaf and context references against a model.
    pub fn check(&self, model: &GoalModel) -> Result<(), RuntimeError> {
        for p in &self.properties {
            if model.node(&p.goal).is_none() {
                return Err(RuntimeError::Unknown { what: "goal", id: p.goal.clone() });
            }
        }
        for k in &self.knobs {
            for l in k.leaves() {
                if !model.node(&l).is_some_and(|n| n.is_leaf_like()) {
                    return Err(RuntimeError::Unknown { what: "leaf", id: l });
                }
            }
        }
        Ok(())
    }

    pub fn grid_size(&self) -> u128 {
        self.knobs.iter().map(|k| k.values().len() as u128).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyStatus {
    pub metric: Metric,
    pub goal: String,
    pub current: f64,
    pub setpoint: f64,
    pub error: f64,
    pub in_margin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub properties: Vec<PropertyStatus>,
    pub satisfied: bool,
}

fn expr_for<'a>(state: &'a KnowledgeState, p: &Property) -> Result<&'a crate::symexpr::SymExpr, RuntimeError> {
    let forms = state
        .forms
        .get(&p.goal)
        .ok_or_else(|| RuntimeError::Unknown { what: "goal", id: p.goal.clone() })?;
    Ok(match p.metric {
        Metric::Reliability => &forms.p,
        Metric::Cost => &forms.cost,
    })
}

/// Evaluates the policy's properties on the current estimates.
pub fn analyze(state: &KnowledgeState, policy: &Policy) -> Result<Analysis, RuntimeError> {
    let mut properties = Vec::with_capacity(policy.properties.len());
    for p in &policy.properties {
        let current = expr_for(state, p)?.evaluate(state)?;
        properties.push(PropertyStatus {
            metric: p.metric,
            goal: p.goal.clone(),
            current,
            setpoint: p.setpoint,
            error: current - p.setpoint,
            in_margin: p.in_margin(current),
        });
    }
    let flags: Vec<bool> = properties.iter().map(|s| s.in_margin).collect();
    Ok(Analysis { satisfied: policy.combination.eval(&flags), properties })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predicted {
    pub reliability: Option<f64>,
    pub cost: Option<f64>,
    /// One value per policy property.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Actuation {
    pub assignments: BTreeMap<String, f64>,
    pub baseline: BTreeMap<String, f64>,
    pub predicted: Predicted,
    pub feasible: bool,
    pub objective: f64,
}

impl Actuation {
    pub fn is_identity(&self) -> bool {
        self.assignments.iter().all(|(k, v)| self.baseline.get(k).is_some_and(|b| (b - v).abs() <= 1e-12))
    }
}

/// Current knob values: the frequency of each knob's first leaf.
pub fn knob_values(state: &KnowledgeState, policy: &Policy) -> BTreeMap<String, f64> {
    policy
        .knobs
        .iter()
        .map(|k| {
            let f = k.leaves().first().and_then(|l| state.leaf(l)).map_or(1.0, |l| l.frequency);
            (k.id.clone(), f)
        })
        .collect()
}

fn predicted(policy: &Policy, values: Vec<f64>) -> Predicted {
    let first = |m: Metric| policy.properties.iter().position(|p| p.metric == m).map(|i| values[i]);
    Predicted { reliability: first(Metric::Reliability), cost: first(Metric::Cost), values }
}

fn objective(policy: &Policy, values: &[f64]) -> (bool, f64) {
    let flags: Vec<bool> = policy.properties.iter().zip(values).map(|(p, v)| p.in_margin(*v)).collect();
    let obj = policy
        .properties
        .iter()
        .zip(values)
        .map(|(p, v)| (v - p.setpoint).abs() / p.setpoint.abs().max(f64::MIN_POSITIVE))
        .sum();
    (policy.combination.eval(&flags), obj)
}

/// Chooses knob values. Returns the identity actuation when the policy is
/// already satisfied; otherwise searches the whole knob grid for the
/// feasible candidate with the smallest sum of setpoint-normalized errors
/// (ties go to the lexicographically smallest knob vector), falling back to
/// the best infeasible candidate.
pub fn plan(state: &KnowledgeState, policy: &Policy) -> Result<Actuation, RuntimeError> {
    let baseline = knob_values(state, policy);
    let analysis = analyze(state, policy)?;
    let current: Vec<f64> = analysis.properties.iter().map(|s| s.current).collect();
    if analysis.satisfied {
        let (_, obj) = objective(policy, &current);
        return Ok(Actuation {
            assignments: baseline.clone(),
            baseline,
            predicted: predicted(policy, current),
            feasible: true,
            objective: obj,
        });
    }
    let size = policy.grid_size();
    if size > policy.grid_cap as u128 {
        return Err(RuntimeError::GridTooLarge { size, cap: policy.grid_cap });
    }

    // Knob frequencies become the variables `knob0..`, everything else is
    // folded in from the current estimates.
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for (j, k) in policy.knobs.iter().enumerate() {
        for l in k.leaves() {
            owner.insert(crate::cgm::param_name("f", &l), format!("knob{j:03}"));
        }
    }
    let mut exprs = Vec::with_capacity(policy.properties.len());
    for p in &policy.properties {
        let e = expr_for(state, p)?;
        // Catch missing or out-of-domain estimates before the sweep.
        e.evaluate(state)?;
        let c = e.compile().rebind(|name| match owner.get(name) {
            Some(k) => Binding::Var(k.clone()),
            None => Binding::Value(state.lookup(name).unwrap_or(f64::NAN)),
        });
        let slots: Vec<usize> = c
            .vars()
            .map(|v| v.trim_start_matches("knob").parse::<usize>().unwrap_or(usize::MAX))
            .collect();
        exprs.push((c, slots));
    }

    let grids: Vec<Vec<f64>> = policy.knobs.iter().map(Knob::values).collect();
    let decode = |mut idx: u64| -> Vec<f64> {
        let mut v = vec![0.0; grids.len()];
        for j in (0..grids.len()).rev() {
            let n = grids[j].len() as u64;
            v[j] = grids[j][(idx % n) as usize];
            idx /= n;
        }
        v
    };
    let eval_at = |knobs: &[f64]| -> Vec<f64> {
        exprs
            .iter()
            .map(|(c, slots): &(CompiledExpr, Vec<usize>)| {
                let vals: Vec<f64> = slots.iter().map(|&s| knobs[s]).collect();
                c.eval(&vals)
            })
            .collect()
    };
    let best = (0..size as u64)
        .into_par_iter()
        .map(|idx| {
            let knobs = decode(idx);
            let (feasible, obj) = objective(policy, &eval_at(&knobs));
            (!feasible, obj, idx)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("grid is nonempty");
    let knobs = decode(best.2);
    let values = eval_at(&knobs);
    let assignments = policy.knobs.iter().zip(&knobs).map(|(k, v)| (k.id.clone(), *v)).collect();
    Ok(Actuation {
        assignments,
        baseline,
        predicted: predicted(policy, values),
        feasible: !best.0,
        objective: best.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub t: f64,
    pub knob: String,
    pub value: f64,
}

/// One command per knob whose value changes, ordered by knob id.
pub fn execute(actuation: &Actuation, t: f64) -> Vec<Command> {
    actuation
        .assignments
        .iter()
        .filter(|(k, v)| actuation.baseline.get(*k).map_or(true, |b| (b - *v).abs() > 1e-12))
        .map(|(k, v)| Command { t, knob: k.clone(), value: *v })
        .collect()
}

/// Applies issued commands to the state's frequency estimates.
pub fn track_commands(state: &mut KnowledgeState, policy: &Policy, commands: &[Command]) {
    for c in commands {
        if let Some(k) = policy.knobs.iter().find(|k| k.id == c.knob) {
            for l in k.leaves() {
                state.set_frequency(&l, c.value);
            }
        }
    }
}

pub fn commands_to_jsonl(commands: &[Command]) -> String {
    commands.iter().map(|c| serde_json::to_string(c).expect("serializable") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgm::{Decomposition as D, Node, NodeKind as K};

    fn two_leaf() -> GoalModel {
        GoalModel::from_parts(
            "a",
            "G",
            [
                Node::new("G", K::Goal).with_children(D::And, &["A", "B"]),
                Node::new("A", K::LeafTask),
                Node::new("B", K::LeafTask),
            ],
            [],
        )
    }

    fn rel(setpoint: f64, margin: f64) -> Property {
        Property { metric: Metric::Reliability, goal: "G".into(), setpoint, margin }
    }

    #[test]
    fn windowed_success_ratio() {
        let m = two_leaf();
        let mut s = KnowledgeState::new(&m, 100).unwrap();
        let events: Vec<_> = (0..100).map(|i| TelemetryEvent::exec(i as f64, "A", i % 10 != 0)).collect();
        s.monitor_ingest(100.0, &events);
        assert!((s.leaf("A").unwrap().reliability - 0.9).abs() < 1e-12);
        // Window slides: 100 more successes push the failures out.
        let more: Vec<_> = (100..200).map(|i| TelemetryEvent::exec(i as f64, "A", true)).collect();
        s.monitor_ingest(200.0, &more);
        assert_eq!(s.leaf("A").unwrap().reliability, 1.0);
        assert_eq!(s.leaf("B").unwrap().reliability, 1.0);
    }

    #[test]
    fn costs_contexts_and_malformed() {
        let m = two_leaf();
        let mut s = KnowledgeState::new(&m, 10).unwrap();
        let text = "{\"t\":1,\"kind\":\"cost\",\"id\":\"A\",\"payload\":2.0}\n\
                    {\"t\":2,\"kind\":\"cost\",\"id\":\"A\",\"payload\":4.0}\n\
                    not json\n\
                    {\"t\":3,\"kind\":\"exec\",\"id\":\"Z\",\"payload\":true}\n\
                    {\"t\":0.5,\"kind\":\"exec\",\"id\":\"A\",\"payload\":true}\n";
        s.ingest_jsonl(5.0, text);
        assert_eq!(s.leaf("A").unwrap().cost, 3.0);
        assert_eq!(s.malformed, 3);
        assert_eq!(s.timestamp, 5.0);
        let before = s.clone();
        s.monitor_ingest(6.0, &[]);
        assert_eq!(s.timestamp, 6.0);
        assert_eq!(s.leaves, before.leaves);
    }

    #[test]
    fn margins() {
        assert!(rel(0.90, 0.02).in_margin(0.89));
        let cost = Property { metric: Metric::Cost, goal: "G".into(), setpoint: 0.47, margin: 0.02 };
        assert!(!cost.in_margin(0.50));
    }

    #[test]
    fn combination_parsing() {
        let c = Combination::parse("0 & (1 | 2)").unwrap();
        assert!(c.eval(&[true, false, true]));
        assert!(!c.eval(&[false, true, true]));
        let c = Combination::parse("0 OR 1 AND 2").unwrap();
        assert!(c.eval(&[true, false, false]));
        assert!(Combination::parse("0 &").is_err());
        assert!(Combination::parse("(0").is_err());
    }

    #[test]
    fn policy_validation() {
        let k = Knob { id: "A".into(), leaves: vec![], min: 0.0, max: 1.0, step: 0.0 };
        assert!(Policy::new(vec![rel(0.9, 0.02)], None, vec![k]).is_err());
        assert!(Policy::new(vec![rel(0.9, 0.0)], None, vec![]).is_err());
        assert!(Policy::new(vec![rel(0.9, 0.1)], Some(Combination::Prop(3)), vec![]).is_err());
    }

    #[test]
    fn plan_identity_and_unique_argmin() {
        let m = two_leaf();
        let mut s = KnowledgeState::new(&m, 10).unwrap();
        let knob = Knob { id: "A".into(), leaves: vec![], min: 0.0, max: 1.0, step: 0.25 };
        let policy = Policy::new(vec![rel(0.5, 0.01)], None, vec![knob]).unwrap();
        // f_A = 1 gives reliability 1: out of margin; only f_A = 0.5 hits 0.5.
        let a = plan(&s, &policy).unwrap();
        assert_eq!(a.assignments["A"], 0.5);
        assert!(a.feasible);
        let cmds = execute(&a, 3.0);
        assert_eq!(cmds, vec![Command { t: 3.0, knob: "A".into(), value: 0.5 }]);
        track_commands(&mut s, &policy, &cmds);
        let again = plan(&s, &policy).unwrap();
        assert!(again.is_identity());
        assert!(execute(&again, 4.0).is_empty());
    }

    #[test]
    fn infeasible_plans_degrade_gracefully() {
        let m = two_leaf();
        let mut s = KnowledgeState::new(&m, 10).unwrap();
        s.set_reliability("B", 0.5);
        let knob = Knob { id: "A".into(), leaves: vec![], min: 0.0, max: 1.0, step: 0.5 };
        let policy = Policy::new(vec![rel(0.9, 0.02)], None, vec![knob]).unwrap();
        let a = plan(&s, &policy).unwrap();
        assert!(!a.feasible);
        assert_eq!(a.assignments["A"], 1.0);
    }

    #[test]
    fn grid_cap() {
        let m = two_leaf();
        let s = KnowledgeState::new(&m, 10).unwrap();
        let knob = Knob { id: "A".into(), leaves: vec![], min: 0.0, max: 1.0, step: 1e-7 };
        let policy = Policy::new(vec![rel(0.5, 0.01)], None, vec![knob]).unwrap();
        assert!(matches!(plan(&s, &policy), Err(RuntimeError::GridTooLarge { .. })));
    }

    #[test]
    fn knob_values_round() {
        let k = Knob { id: "h".into(), leaves: vec![], min: 0.9, max: 1.0, step: 0.0025 };
        let v = k.values();
        assert_eq!(v.len(), 41);
        assert_eq!(v[40], 1.0);
        assert_eq!(v[1], 0.9025);
    }
}
