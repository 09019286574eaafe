//! PRISM MDP and PCTL emission.
//!
//! Each leaf task becomes a five-state module (init, running, success,
//! skipped, failure); each DM-annotated node becomes a `NonDeterminism`
//! module that picks a subset of its operands whose contexts hold and
//! raises the global enable variables of the leaves below them. Modules are
//! chained through `next<x>` labels in depth-first order: module `j` starts
//! on `next<j>` and ends on `next<j+1>`.
//!
//! Identifiers: leaf `i` (1-based, depth-first) owns `s<i>`, `r<i>`, `f<i>`,
//! `w<i>`, optionally `c<i>` (context or enable), `k<i>` (contexts above a
//! DM operand) and `opt<i>` (placeholder existence). Context `C` of the model
//! is the constant `C`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::cgm::{Decomposition, GoalModel, Node};

/// Largest DM arity emitted; subsets grow as `2^k - 1`.
pub const MAX_DM_OPERANDS: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum PrismError {
    #[error("unknown goal `{0}`")]
    UnknownGoal(String),
    #[error("`{0}` is not a leaf task or placeholder")]
    NotALeaf(String),
    #[error("DM node `{0}` has no operands")]
    EmptyDm(String),
    #[error("DM node `{id}` has {k} operands; at most {MAX_DM_OPERANDS} are supported")]
    DmTooWide { id: String, k: usize },
}

/// Emitted model text plus a few structural facts used by callers.
#[derive(Debug, Clone, PartialEq)]
pub struct PrismModel {
    pub text: String,
    pub modules: usize,
    pub ctx_consts: usize,
}

fn ident(id: &str) -> String {
    id.replace('.', "_")
}

/// How leaf `i` is gated between init and running.
#[derive(Debug, Clone, Default)]
struct Gate {
    /// Enable variables set by governing DM modules, outermost first.
    enables: Vec<String>,
    /// Context constants on the path not handled by a DM.
    contexts: Vec<String>,
    opt: bool,
    dm_depth: usize,
}

struct Plan<'a> {
    model: &'a GoalModel,
    leaf_index: BTreeMap<&'a str, usize>,
    gates: BTreeMap<&'a str, Gate>,
    dm_ordinal: BTreeMap<&'a str, usize>,
    order: Vec<&'a Node>,
}

fn plan(model: &GoalModel) -> Result<Plan<'_>, PrismError> {
    let mut p = Plan {
        model,
        leaf_index: BTreeMap::new(),
        gates: BTreeMap::new(),
        dm_ordinal: BTreeMap::new(),
        order: Vec::new(),
    };
    walk(model, &model.root_id, &mut Gate::default(), true, &mut p)?;
    Ok(p)
}

fn walk<'a>(
    model: &'a GoalModel,
    id: &'a str,
    gate: &mut Gate,
    is_root: bool,
    p: &mut Plan<'a>,
) -> Result<(), PrismError> {
    let node = &model.nodes[id];
    let pushed = if is_root { 0 } else { node.context_refs.len() };
    if !is_root {
        gate.contexts.extend(node.context_refs.iter().cloned());
    }
    if node.is_leaf_like() {
        let i = p.leaf_index.len() + 1;
        p.leaf_index.insert(id, i);
        let mut g = gate.clone();
        g.opt = node.is_placeholder();
        p.gates.insert(id, g);
        p.order.push(node);
    } else if let Some(dm) = &node.dm_annotation {
        if dm.is_empty() {
            return Err(PrismError::EmptyDm(id.to_string()));
        }
        if dm.len() > MAX_DM_OPERANDS {
            return Err(PrismError::DmTooWide { id: id.to_string(), k: dm.len() });
        }
        let d = p.dm_ordinal.len() + 1;
        p.dm_ordinal.insert(id, d);
        p.order.push(node);
        let outermost = gate.dm_depth == 0;
        for c in dm {
            gate.dm_depth += 1;
            walk_operand(model, &model.nodes[c], gate, p, d, outermost)?;
            gate.dm_depth -= 1;
        }
    } else {
        for c in &node.children {
            walk(model, c, gate, false, p)?;
        }
    }
    let keep = gate.contexts.len() - pushed;
    gate.contexts.truncate(keep);
    Ok(())
}

/// Walks a DM operand. Its own contexts are resolved by the DM module, so
/// they are not added to the path; every leaf below gets an enable variable.
fn walk_operand<'a>(
    model: &'a GoalModel,
    operand: &'a Node,
    gate: &mut Gate,
    p: &mut Plan<'a>,
    d: usize,
    outermost: bool,
) -> Result<(), PrismError> {
    walk(model, &operand.id, gate, true, p)?;
    for n in model.leaves_under(&operand.id) {
        let i = p.leaf_index[n.id.as_str()];
        let name = if outermost { format!("c{i}") } else { format!("c{i}_{d}") };
        if let Some(g) = p.gates.get_mut(n.id.as_str()) {
            // Inner DMs finish first; keep the outermost enable in front.
            g.enables.insert(0, name);
        }
    }
    Ok(())
}

impl Plan<'_> {
    fn gate_expr(&self, leaf: &Node) -> (String, usize) {
        let i = self.leaf_index[leaf.id.as_str()];
        let g = &self.gates[leaf.id.as_str()];
        let mut factors: Vec<String> = g.enables.clone();
        if !g.contexts.is_empty() {
            factors.push(if g.enables.is_empty() { format!("c{i}") } else { format!("k{i}") });
        }
        if g.opt {
            factors.push(format!("opt{i}"));
        }
        factors.push(format!("f{i}"));
        (factors.join("*"), i)
    }

    fn leaf_consts(&self, leaf: &Node, out: &mut String) {
        let i = self.leaf_index[leaf.id.as_str()];
        let g = &self.gates[leaf.id.as_str()];
        let name = &leaf.id;
        if !g.contexts.is_empty() {
            let var = if g.enables.is_empty() { format!("c{i}") } else { format!("k{i}") };
            let _ = writeln!(out, "const int {var} = {}; //context condition of {name}", g.contexts.join("*"));
        }
        if g.opt {
            let _ = writeln!(out, "const int opt{i}; //existence of {name}");
        }
        let _ = writeln!(out, "const double r{i}; //{name} probability of success");
        let _ = writeln!(out, "const double f{i}; //{name} frequency of execution");
        let _ = writeln!(out, "const double w{i}; //{name} cost of execution");
    }
}

fn leaf_module_text(module: &str, guard: &str, i: usize, x: usize) -> String {
    let y = x + 1;
    let mut s = String::new();
    let _ = writeln!(s, "module {module}");
    let _ = writeln!(s, "  s{i} :[0..4] init 0;");
    let _ = writeln!(s, "  //init to running or to skipped");
    let _ = writeln!(s, "  [next{x}] s{i} = 0 -> {guard} : (s{i}'=1)+(1-{guard}) : (s{i}'=3);");
    let _ = writeln!(s, "  [] s{i} = 1 -> r{i} : (s{i}'=2) + (1 - r{i}) : (s{i}'=4); //running to final state");
    let _ = writeln!(s, "  [next{y}] s{i} = 2 -> (s{i}'=2); //final state success");
    let _ = writeln!(s, "  [next{y}] s{i} = 3 -> (s{i}'=3); //final state skipped");
    let _ = writeln!(s, "  [next{y}] s{i} = 4 -> (s{i}'=4); //final state failure");
    let _ = writeln!(s, "endmodule");
    s
}

/// A standalone leaf module with index `i` on labels `next<x>`/`next<x+1>`.
/// The guard is `c<i>*f<i>` for context-dependent leaves, `f<i>` otherwise,
/// with `opt<i>` for placeholders.
pub fn emit_leaf_module(leaf: &Node, i: usize, x: usize) -> Result<String, PrismError> {
    if !leaf.is_leaf_like() {
        return Err(PrismError::NotALeaf(leaf.id.clone()));
    }
    let mut factors = Vec::new();
    if !leaf.context_refs.is_empty() {
        factors.push(format!("c{i}"));
    }
    if leaf.is_placeholder() {
        factors.push(format!("opt{i}"));
    }
    factors.push(format!("f{i}"));
    Ok(leaf_module_text(&format!("N_{}", ident(&leaf.id)), &factors.join("*"), i, x))
}

fn dm_names(d: usize) -> (String, String, String) {
    if d == 1 {
        ("NonDeterminism".into(), "s".into(), "CTX_".into())
    } else {
        (format!("NonDeterminism{d}"), format!("sdm{d}"), format!("CTX{d}_"))
    }
}

/// `CTX` constants of a DM node in subset-mask order: mask `m` (1-based)
/// covers operand `j` iff bit `j-1` is set. Returns `(name, definition,
/// covered operand ids)`.
fn ctx_consts(model: &GoalModel, node: &Node, d: usize) -> Result<Vec<(String, String, Vec<String>)>, PrismError> {
    let dm = node.dm_annotation.as_ref().ok_or_else(|| PrismError::EmptyDm(node.id.clone()))?;
    if dm.is_empty() {
        return Err(PrismError::EmptyDm(node.id.clone()));
    }
    if dm.len() > MAX_DM_OPERANDS {
        return Err(PrismError::DmTooWide { id: node.id.clone(), k: dm.len() });
    }
    let (_, _, prefix) = dm_names(d);
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << dm.len()) {
        let members: Vec<String> =
            dm.iter().enumerate().filter(|(j, _)| mask & (1 << j) != 0).map(|(_, c)| c.clone()).collect();
        let mut ctx: Vec<String> = Vec::new();
        for m in &members {
            for c in &model.nodes[m].context_refs {
                if !ctx.contains(c) {
                    ctx.push(c.clone());
                }
            }
        }
        let def = if ctx.is_empty() { "1".to_string() } else { ctx.join("*") };
        out.push((format!("{prefix}{mask}"), def, members));
    }
    Ok(out)
}

fn dm_block(p: &Plan<'_>, node: &Node, x: usize) -> Result<(String, usize), PrismError> {
    let d = p.dm_ordinal[node.id.as_str()];
    let (module, s, _) = dm_names(d);
    let consts = ctx_consts(p.model, node, d)?;
    let n = consts.len();
    let fin = n + 2;
    let mut out = String::new();
    for (name, def, members) in &consts {
        let _ = writeln!(out, "const int {name} = {def}; //context condition of {}", members.join(" & "));
    }
    out.push('\n');
    let enable = |leaf: &Node| -> String {
        let g = &p.gates[leaf.id.as_str()];
        let i = p.leaf_index[leaf.id.as_str()];
        // Depth of this DM among the leaf's governing DMs.
        let depth = p
            .model
            .preorder(&p.model.root_id)
            .into_iter()
            .filter(|a| {
                a.dm_annotation.as_ref().is_some_and(|dm| {
                    dm.iter().any(|op| p.model.leaves_under(op).iter().any(|l| l.id == leaf.id))
                })
            })
            .position(|a| a.id == node.id)
            .unwrap_or(0);
        g.enables.get(depth).cloned().unwrap_or_else(|| format!("c{i}"))
    };
    let dm = node.dm_annotation.as_ref().expect("checked by ctx_consts");
    for op in dm {
        for leaf in p.model.leaves_under(op) {
            let _ = writeln!(out, "global {}: [0..1] init 0; //variable that enables {}", enable(leaf), leaf.id);
        }
    }
    let _ = writeln!(out, "module {module}");
    let _ = writeln!(out, "  {s} :[0..{fin}] init 0;");
    let _ = writeln!(out, "  [next{x}] {s} = 0 -> ({s}'=1);");
    for (j, (name, _, _)) in consts.iter().enumerate() {
        let to = j + 2;
        let _ = writeln!(out, "  [] {s} = 1 -> {name} : ({s}'={to}) + (1 - {name}) : ({s}'=1);");
    }
    let _ = writeln!(out, "  [] {s} = 1 -> ({s}'={fin}); //no uncertainty holding");
    let _ = writeln!(out, "  //enable the correspondent tasks");
    for (j, (_, _, members)) in consts.iter().enumerate() {
        let mut row = format!("  [] {s} = {} -> ({s}'={fin})", j + 2);
        for m in members {
            for leaf in p.model.leaves_under(m) {
                let _ = write!(row, " & ({}'=1)", enable(leaf));
            }
        }
        let _ = writeln!(out, "{row};");
    }
    let _ = writeln!(out, "  [next{}] {s} = {fin} -> ({s}'={fin});", x + 1);
    let _ = writeln!(out, "endmodule");
    Ok((out, n))
}

/// Emits a DM module for `node` (the `d`-th DM in the model) on labels
/// `next<x>`/`next<x+1>`.
pub fn emit_dm_module(model: &GoalModel, node_id: &str, x: usize) -> Result<String, PrismError> {
    let p = plan(model)?;
    let node = model.node(node_id).ok_or_else(|| PrismError::UnknownGoal(node_id.to_string()))?;
    if node.dm_annotation.is_none() {
        return Err(PrismError::EmptyDm(node_id.to_string()));
    }
    Ok(dm_block(&p, node, x)?.0)
}

/// The full MDP for a valid model.
pub fn emit_model(model: &GoalModel) -> Result<PrismModel, PrismError> {
    let p = plan(model)?;
    let mut text = String::from("mdp\n\n");
    let used: Vec<&String> = {
        let mut v: Vec<&String> = model.nodes.values().flat_map(|n| n.context_refs.iter()).collect();
        v.sort();
        v.dedup();
        v
    };
    for c in &used {
        let desc = model.contexts.get(*c).map(|d| d.description.as_str()).unwrap_or("");
        let _ = writeln!(text, "const int {c}; //context {c}{}", if desc.is_empty() { String::new() } else { format!(": {desc}") });
    }
    if !used.is_empty() {
        text.push('\n');
    }
    let mut ctx_total = 0;
    for (j, node) in p.order.iter().enumerate() {
        let x = j + 1;
        if node.is_leaf_like() {
            p.leaf_consts(node, &mut text);
            let (guard, i) = p.gate_expr(node);
            text.push_str(&leaf_module_text(&format!("N_{}", ident(&node.id)), &guard, i, x));
        } else {
            let (block, n) = dm_block(&p, node, x)?;
            ctx_total += n;
            text.push_str(&block);
        }
        text.push('\n');
    }
    text.push_str("rewards \"cost\"\n");
    for node in p.order.iter().filter(|n| n.is_leaf_like()) {
        let i = p.leaf_index[node.id.as_str()];
        let _ = writeln!(text, "  s{i} = 1 : w{i}; //cost of {} execution", node.id);
    }
    text.push_str("endrewards\n");
    Ok(PrismModel { text, modules: p.order.len(), ctx_consts: ctx_total })
}

fn neg_ctx(node: &Node) -> String {
    let tests: Vec<String> = node.context_refs.iter().map(|c| format!("{c}=1")).collect();
    format!("!({})", tests.join(" & "))
}

fn skipped(p: &Plan<'_>, id: &str) -> String {
    let tests: Vec<String> =
        p.model.leaves_under(id).iter().map(|l| format!("s{}=3", p.leaf_index[l.id.as_str()])).collect();
    if tests.len() == 1 {
        tests.into_iter().next().unwrap_or_default()
    } else {
        format!("({})", tests.join(" & "))
    }
}

/// Success proposition of a node, parenthesized unless atomic.
fn phi(p: &Plan<'_>, id: &str) -> String {
    let node = &p.model.nodes[id];
    if node.is_leaf_like() {
        return format!("s{}=2", p.leaf_index[id]);
    }
    let (ops, sep, dm): (&[String], &str, bool) = match &node.dm_annotation {
        Some(dm) => (dm, " | ", true),
        None => {
            let sep = if node.decomposition == Decomposition::And { " & " } else { " | " };
            (&node.children, sep, false)
        }
    };
    let terms: Vec<String> = ops.iter().map(|c| child_term(p, c, dm)).collect();
    if terms.len() == 1 {
        terms.into_iter().next().unwrap_or_default()
    } else {
        format!("({})", terms.join(sep))
    }
}

fn child_term(p: &Plan<'_>, id: &str, under_dm: bool) -> String {
    let node = &p.model.nodes[id];
    let inner = phi(p, id);
    if under_dm {
        format!("({inner} | ({} & {}))", neg_ctx(node), skipped(p, id))
    } else if node.is_placeholder() {
        format!("({inner} | {})", skipped(p, id))
    } else if !node.context_refs.is_empty() {
        format!("(({} & {}) | {inner})", neg_ctx(node), skipped(p, id))
    } else {
        inner
    }
}

/// The proposition `φ` of `goal`, without outer parentheses.
pub fn proposition(model: &GoalModel, goal: &str) -> Result<String, PrismError> {
    model.node(goal).ok_or_else(|| PrismError::UnknownGoal(goal.to_string()))?;
    let p = plan(model)?;
    let s = phi(&p, goal);
    Ok(match s.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        Some(t) if balanced(t) => t.to_string(),
        _ => s,
    })
}

fn balanced(s: &str) -> bool {
    let mut depth = 0i32;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

/// Max/min reliability and cost queries for `goal`.
pub fn emit_properties(model: &GoalModel, goal: &str) -> Result<String, PrismError> {
    let phi = proposition(model, goal)?;
    Ok(format!(
        "Pmax=? [ F ({phi}) ]\nPmin=? [ F ({phi}) ]\nR{{\"cost\"}}max=? [ F ({phi}) ]\nR{{\"cost\"}}min=? [ F ({phi}) ]\n"
    ))
}
