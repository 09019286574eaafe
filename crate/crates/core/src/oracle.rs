//! Brute-force ground truth for compiled formulae.
//!
//! With contexts and existence flags fixed by a binding, leaf tasks are
//! independent: each ends in `Success` (prob. `c f OPT r`), `Failure`
//! (`c f OPT (1 - r)`) or `Skipped` (`1 - c f OPT`). The oracle enumerates all
//! `3^L` joint outcomes and evaluates the goal's success proposition and the
//! cost accrued along the traversal for each one.
//!
//! Success proposition: a leaf holds iff it succeeded; a child contributes to
//! its parent only when its contexts hold; AND needs every child, OR and DM
//! need one. The goal's own context is not part of its proposition.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cgm::{Decomposition, GoalModel};
use crate::compiler::{compose_node_form, CompileError};
use crate::symexpr::{Bindings, EvalError, Parameter};

/// Largest goal subtree the oracle accepts.
pub const MAX_LEAVES: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("unknown goal `{0}`")]
    UnknownGoal(String),
    #[error("subtree has {0} leaves; the oracle enumerates at most {MAX_LEAVES}")]
    TooLarge(usize),
    #[error("missing binding for `{0}`")]
    MissingBinding(String),
    #[error("`{name}` = {value} is outside its domain")]
    Domain { name: String, value: f64 },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Concrete values for every parameter of a model. Contexts and existence
/// flags are the `C_*` and `OPT_*` entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConcreteBinding {
    pub values: BTreeMap<String, f64>,
}

impl ConcreteBinding {
    pub fn new(values: BTreeMap<String, f64>) -> Self {
        ConcreteBinding { values }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    fn get(&self, name: &str) -> Result<f64, OracleError> {
        let v = *self.values.get(name).ok_or_else(|| OracleError::MissingBinding(name.into()))?;
        if !Parameter::classify(name).kind.admits(v) {
            return Err(OracleError::Domain { name: name.into(), value: v });
        }
        Ok(v)
    }
}

impl Bindings for ConcreteBinding {
    fn value_of(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Skipped,
    Failure,
}

/// Outcome distribution and cost of one leaf under a binding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafOutcome {
    pub leaf_id: String,
    pub success: f64,
    pub skipped: f64,
    pub failure: f64,
    /// Cost accrued when the leaf runs (succeeds or fails).
    pub cost: f64,
}

/// Exact `[success, skipped, failure]` probabilities for run probability
/// `run = c f OPT` and reliability `r`. Sums to one by construction.
pub fn exact_outcome_distribution(run: f64, r: f64) -> Option<[BigRational; 3]> {
    let run = BigRational::from_float(run)?;
    let r = BigRational::from_float(r)?;
    let success = &run * &r;
    let failure = &run * (BigRational::one() - &r);
    let skipped = BigRational::one() - &run;
    Some([success, skipped, failure])
}

/// Traversal order used when accruing cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    /// AND runs every active child; OR and DM stop at the first satisfied one.
    #[default]
    Default,
    RunAll,
    ShortCircuit,
}

enum Flat {
    Leaf(usize),
    Inner { any: bool, kids: Vec<(usize, bool)> },
}

struct Chain {
    nodes: Vec<Flat>,
    leaves: Vec<LeafOutcome>,
}

fn all_hold(ids: &[String], b: &ConcreteBinding) -> Result<bool, OracleError> {
    for c in ids {
        if b.get(&crate::cgm::context_param(c))? == 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The chain induced by `binding` on the subtree of `goal`.
fn induce(model: &GoalModel, goal: &str, b: &ConcreteBinding) -> Result<Chain, OracleError> {
    model.node(goal).ok_or_else(|| OracleError::UnknownGoal(goal.into()))?;
    let n_leaves = model.leaves_under(goal).len();
    if n_leaves > MAX_LEAVES {
        return Err(OracleError::TooLarge(n_leaves));
    }
    let mut chain = Chain { nodes: Vec::new(), leaves: Vec::new() };
    build(model, goal, b, &mut chain)?;
    Ok(chain)
}

fn build(model: &GoalModel, id: &str, b: &ConcreteBinding, out: &mut Chain) -> Result<usize, OracleError> {
    let node = &model.nodes[id];
    let slot = out.nodes.len();
    if let Some(lp) = &node.leaf_params {
        let c = if all_hold(&node.context_refs, b)? { 1.0 } else { 0.0 };
        let opt = match node.opt_param() {
            Some(o) => b.get(&o)?,
            None => 1.0,
        };
        let run = c * b.get(&lp.frequency)? * opt;
        let r = b.get(&lp.reliability)?;
        out.leaves.push(LeafOutcome {
            leaf_id: id.to_string(),
            success: run * r,
            skipped: 1.0 - run,
            failure: run * (1.0 - r),
            cost: b.get(&lp.cost)?,
        });
        out.nodes.push(Flat::Leaf(out.leaves.len() - 1));
        return Ok(slot);
    }
    out.nodes.push(Flat::Leaf(usize::MAX));
    let operands = node.dm_annotation.as_ref().unwrap_or(&node.children);
    let any = node.dm_annotation.is_some()
        || matches!(node.decomposition, Decomposition::Or | Decomposition::MeansEnd);
    let mut kids = Vec::with_capacity(operands.len());
    for c in operands {
        let active = all_hold(&model.nodes[c].context_refs, b)?;
        kids.push((build(model, c, b, out)?, active));
    }
    out.nodes[slot] = Flat::Inner { any, kids };
    Ok(slot)
}

impl Chain {
    fn eval(&self, at: usize, omega: &[Outcome], mode: CostMode) -> (bool, f64) {
        match &self.nodes[at] {
            Flat::Leaf(i) => {
                let o = omega[*i];
                let cost = if o == Outcome::Skipped { 0.0 } else { self.leaves[*i].cost };
                (o == Outcome::Success, cost)
            }
            Flat::Inner { any, kids } => {
                let short = if *any { mode != CostMode::RunAll } else { mode == CostMode::ShortCircuit };
                let mut holds = !any;
                let mut cost = 0.0;
                for &(k, active) in kids {
                    let sat = if active {
                        let (s, c) = self.eval(k, omega, mode);
                        cost += c;
                        s
                    } else {
                        false
                    };
                    if *any && sat {
                        holds = true;
                        if short {
                            break;
                        }
                    } else if !*any && !sat {
                        holds = false;
                        if short {
                            break;
                        }
                    }
                }
                (holds, cost)
            }
        }
    }

    fn prob(&self, i: usize, o: Outcome) -> f64 {
        let l = &self.leaves[i];
        match o {
            Outcome::Success => l.success,
            Outcome::Skipped => l.skipped,
            Outcome::Failure => l.failure,
        }
    }

    /// `(Σ P(ω)[φ(ω)], Σ P(ω) cost(ω) [φ(ω)])` over outcomes extending `prefix`.
    fn sum_from(&self, omega: &mut Vec<Outcome>, p: f64, mode: CostMode) -> (f64, f64) {
        if omega.len() == self.leaves.len() {
            let (sat, cost) = self.eval(0, omega, mode);
            return if sat { (p, p * cost) } else { (0.0, 0.0) };
        }
        let i = omega.len();
        let mut acc = (0.0, 0.0);
        for o in [Outcome::Success, Outcome::Skipped, Outcome::Failure] {
            let q = p * self.prob(i, o);
            if q == 0.0 {
                continue;
            }
            omega.push(o);
            let (a, b) = self.sum_from(omega, q, mode);
            omega.pop();
            acc.0 += a;
            acc.1 += b;
        }
        acc
    }

    fn reach(&self, mode: CostMode) -> (f64, f64) {
        const OUTCOMES: [Outcome; 3] = [Outcome::Success, Outcome::Skipped, Outcome::Failure];
        if self.leaves.len() < 10 {
            return self.sum_from(&mut Vec::new(), 1.0, mode);
        }
        // Partition on the first two leaves; reduce in fixed order.
        let prefixes: Vec<[Outcome; 2]> =
            OUTCOMES.iter().flat_map(|&a| OUTCOMES.iter().map(move |&b| [a, b])).collect();
        let parts: Vec<(f64, f64)> = prefixes
            .par_iter()
            .map(|pre| {
                let p = self.prob(0, pre[0]) * self.prob(1, pre[1]);
                if p == 0.0 {
                    return (0.0, 0.0);
                }
                self.sum_from(&mut pre.to_vec(), p, mode)
            })
            .collect();
        parts.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    }
}

/// Per-leaf outcome distributions under `binding`, in depth-first order.
pub fn leaf_outcomes(
    model: &GoalModel,
    goal: &str,
    binding: &ConcreteBinding,
) -> Result<Vec<LeafOutcome>, OracleError> {
    Ok(induce(model, goal, binding)?.leaves)
}

/// Probability of eventually satisfying `goal`.
pub fn prob_reach(model: &GoalModel, goal: &str, binding: &ConcreteBinding) -> Result<f64, OracleError> {
    Ok(induce(model, goal, binding)?.reach(CostMode::Default).0)
}

/// Expected cost accrued on the outcomes that satisfy `goal`.
pub fn cost_reach(
    model: &GoalModel,
    goal: &str,
    binding: &ConcreteBinding,
    mode: CostMode,
) -> Result<f64, OracleError> {
    Ok(induce(model, goal, binding)?.reach(mode).1)
}

fn and_only(model: &GoalModel, id: &str) -> bool {
    let n = &model.nodes[id];
    if n.is_leaf_like() {
        return true;
    }
    let passes = n.dm_annotation.is_none()
        && (n.decomposition == Decomposition::And || n.children.len() == 1);
    passes && n.children.iter().all(|c| and_only(model, c))
}

/// Whether the cost oracle is expected to agree with the cost formula:
/// AND-only subtrees at any binding, or a binary OR/DM over AND-only operands
/// where every leaf runs whenever its operand is active (all `f = 1`,
/// `OPT = 1`, and every context below the operands holds).
pub fn cost_check_applies(model: &GoalModel, goal: &str, binding: &ConcreteBinding) -> bool {
    let Some(g) = model.node(goal) else { return false };
    if and_only(model, goal) {
        return true;
    }
    let operands = g.dm_annotation.as_ref().unwrap_or(&g.children);
    let binary_or = g.dm_annotation.is_some()
        || matches!(g.decomposition, Decomposition::Or | Decomposition::MeansEnd);
    if !binary_or || operands.len() != 2 || !operands.iter().all(|c| and_only(model, c)) {
        return false;
    }
    let val = |name: &str| binding.values.get(name).copied();
    operands.iter().all(|op| {
        model.preorder(op).into_iter().all(|n| {
            let below = n.id != *op;
            let ctx_ok = !below || n.context_params().iter().all(|c| val(c) == Some(1.0));
            let leaf_ok = n.leaf_params.as_ref().map_or(true, |lp| val(&lp.frequency) == Some(1.0))
                && n.opt_param().map_or(true, |o| val(&o) == Some(1.0));
            ctx_ok && leaf_ok
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostStatus {
    Ok,
    Mismatch,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub goal: String,
    pub reliability_ok: bool,
    pub cost: CostStatus,
    pub formula_reliability: f64,
    pub oracle_reliability: f64,
    pub reliability_delta: f64,
    pub formula_cost: f64,
    pub oracle_cost: Option<f64>,
    pub cost_delta: Option<f64>,
}

impl CheckReport {
    pub fn cost_ok(&self) -> bool {
        self.cost != CostStatus::Mismatch
    }
}

/// Compares the compiled formulae of `goal` with the oracle at `binding`.
pub fn check_formula(
    model: &GoalModel,
    goal: &str,
    binding: &ConcreteBinding,
    tol: f64,
) -> Result<CheckReport, OracleError> {
    let forms = compose_node_form(model, goal)?;
    let chain = induce(model, goal, binding)?;
    let formula_reliability = forms.p.evaluate(binding)?;
    let formula_cost = forms.cost.evaluate(binding)?;
    let (oracle_reliability, oracle_cost_all) = chain.reach(CostMode::Default);
    let reliability_delta = (formula_reliability - oracle_reliability).abs();
    let (cost, oracle_cost, cost_delta) = if cost_check_applies(model, goal, binding) {
        let d = (formula_cost - oracle_cost_all).abs();
        let status = if d <= tol { CostStatus::Ok } else { CostStatus::Mismatch };
        (status, Some(oracle_cost_all), Some(d))
    } else {
        (CostStatus::NotApplicable, None, None)
    };
    Ok(CheckReport {
        goal: goal.to_string(),
        reliability_ok: reliability_delta <= tol,
        cost,
        formula_reliability,
        oracle_reliability,
        reliability_delta,
        formula_cost,
        oracle_cost,
        cost_delta,
    })
}

/// Sum of the exact per-leaf outcome probabilities, one entry per leaf.
pub fn exact_outcome_sums(
    model: &GoalModel,
    goal: &str,
    binding: &ConcreteBinding,
) -> Result<Vec<BigRational>, OracleError> {
    let mut out = Vec::new();
    for n in model.leaves_under(goal) {
        let lp = n.leaf_params.as_ref().expect("leaf params");
        let c = if all_hold(&n.context_refs, binding)? { 1.0 } else { 0.0 };
        let opt = match n.opt_param() {
            Some(o) => binding.get(&o)?,
            None => 1.0,
        };
        let run = c * binding.get(&lp.frequency)? * opt;
        let dist = exact_outcome_distribution(run, binding.get(&lp.reliability)?)
            .ok_or_else(|| OracleError::Domain { name: lp.reliability.clone(), value: f64::NAN })?;
        out.push(dist.iter().fold(BigRational::zero(), |a, b| a + b));
    }
    Ok(out)
}
