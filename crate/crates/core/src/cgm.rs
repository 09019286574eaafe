//! Contextual goal models annotated with uncertainty.
//!
//! The textual form is JSON:
//!
//! ```json
//! {
//!   "actor": "Body Sensor Network",
//!   "root": "G1",
//!   "nodes": [
//!     {"id": "T1", "label": "Monitor vital signs", "kind": "task",
//!      "decomposition": "or", "children": ["T1.1", "T1.X"], "dm": ["T1.1", "T1.X"]},
//!     {"id": "T1.X", "kind": "placeholder", "contexts": ["C5"]}
//!   ],
//!   "contexts": [{"id": "C5", "description": "Extra sensor available", "kind": "boolean"}]
//! }
//! ```
//!
//! Leaf tasks and placeholders own three parameters (reliability, frequency,
//! cost); placeholders additionally own an existence flag. Names are derived
//! from ids: `r_<id>`, `f_<id>`, `w_<id>`, `C_<ctx>`, `OPT_<id>`, with dots
//! replaced by underscores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Goal,
    Task,
    #[serde(rename = "leaf")]
    LeafTask,
    Placeholder,
}

impl NodeKind {
    pub fn is_leaf_like(self) -> bool {
        matches!(self, NodeKind::LeafTask | NodeKind::Placeholder)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decomposition {
    And,
    Or,
    MeansEnd,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeafParams {
    pub reliability: String,
    pub frequency: String,
    pub cost: String,
}

impl LeafParams {
    pub fn for_node(id: &str) -> Self {
        LeafParams {
            reliability: param_name("r", id),
            frequency: param_name("f", id),
            cost: param_name("w", id),
        }
    }
}

/// `<prefix>_<id>` with dots replaced by underscores.
pub fn param_name(prefix: &str, id: &str) -> String {
    format!("{prefix}_{}", id.replace('.', "_"))
}

pub fn context_param(ctx_id: &str) -> String {
    param_name("C", ctx_id)
}

pub fn opt_param(node_id: &str) -> String {
    param_name("OPT", node_id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
    pub decomposition: Decomposition,
    pub children: Vec<String>,
    pub dm_annotation: Option<Vec<String>>,
    pub context_refs: Vec<String>,
    pub leaf_params: Option<LeafParams>,
}

impl Node {
    /// Builds a node, deriving leaf parameters for leaf-like kinds.
    pub fn new(id: &str, kind: NodeKind) -> Self {
        Node {
            id: id.to_string(),
            label: String::new(),
            kind,
            decomposition: Decomposition::None,
            children: Vec::new(),
            dm_annotation: None,
            context_refs: Vec::new(),
            leaf_params: kind.is_leaf_like().then(|| LeafParams::for_node(id)),
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    pub fn with_children(mut self, decomposition: Decomposition, children: &[&str]) -> Self {
        self.decomposition = decomposition;
        self.children = children.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn with_dm(mut self, dm: &[&str]) -> Self {
        self.dm_annotation = Some(dm.iter().map(|c| c.to_string()).collect());
        self
    }

    pub fn with_contexts(mut self, ctx: &[&str]) -> Self {
        self.context_refs = ctx.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn is_leaf_like(&self) -> bool {
        self.kind.is_leaf_like()
    }

    pub fn is_placeholder(&self) -> bool {
        self.kind == NodeKind::Placeholder
    }

    /// Parameter names of the node's context annotations.
    pub fn context_params(&self) -> Vec<String> {
        self.context_refs.iter().map(|c| context_param(c)).collect()
    }

    pub fn opt_param(&self) -> Option<String> {
        self.is_placeholder().then(|| opt_param(&self.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Boolean,
    Integer,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// `variable op threshold`, e.g. `heart_rate < 300`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub variable: String,
    pub op: CmpOp,
    pub threshold: f64,
}

impl Condition {
    pub fn holds(&self, value: f64) -> bool {
        match self.op {
            CmpOp::Lt => value < self.threshold,
            CmpOp::Le => value <= self.threshold,
            CmpOp::Gt => value > self.threshold,
            CmpOp::Ge => value >= self.threshold,
            CmpOp::Eq => value == self.threshold,
            CmpOp::Ne => value != self.threshold,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.op.symbol(), self.threshold)
    }
}

impl std::str::FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ops = [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ];
        for (sym, op) in ops {
            if let Some((lhs, rhs)) = s.split_once(sym) {
                let variable = lhs.trim();
                if variable.is_empty()
                    || !variable.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    return Err(format!("bad variable name in condition `{s}`"));
                }
                let threshold: f64 = rhs
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad threshold in condition `{s}`"))?;
                return Ok(Condition { variable: variable.to_string(), op, threshold });
            }
        }
        Err(format!("no comparison operator in condition `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextDef {
    pub id: String,
    pub description: String,
    pub value_kind: ContextKind,
    pub condition: Option<Condition>,
}

impl ContextDef {
    pub fn boolean(id: &str, description: &str) -> Self {
        ContextDef {
            id: id.to_string(),
            description: description.to_string(),
            value_kind: ContextKind::Boolean,
            condition: None,
        }
    }
}

/// An actor's goal tree. Nodes are keyed by id; child order is significant.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalModel {
    pub actor_name: String,
    pub nodes: BTreeMap<String, Node>,
    pub root_id: String,
    pub contexts: BTreeMap<String, ContextDef>,
}

/// A broken invariant, tied to the node (or context) that breaks it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub node: String,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} [{}]", self.node, self.message, self.rule)
    }
}

/// Non-fatal modeling-guideline finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Advisory {
    pub node: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid id `{0}` (ids match [A-Za-z0-9._]+)")]
    InvalidId(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{referrer}` references unknown id `{id}`")]
    UnknownId { referrer: String, id: String },
    #[error("node `{id}`: {message}")]
    Schema { id: String, message: String },
    #[error("invalid model: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_')
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    actor: String,
    root: String,
    nodes: Vec<RawNode>,
    #[serde(default)]
    contexts: Vec<RawContext>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    label: String,
    kind: NodeKind,
    #[serde(default, skip_serializing_if = "is_none_decomposition")]
    decomposition: Decomposition,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dm: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    contexts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    placeholder: Option<bool>,
}

fn is_none_decomposition(d: &Decomposition) -> bool {
    *d == Decomposition::None
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContext {
    id: String,
    #[serde(default)]
    description: String,
    kind: ContextKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    condition: Option<String>,
}

/// Parses and validates a model file. The result satisfies every invariant
/// checked by [`validate`].
pub fn parse_model(text: &str) -> Result<GoalModel, ModelError> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut contexts = BTreeMap::new();
    for rc in raw.contexts {
        if !valid_id(&rc.id) {
            return Err(ModelError::InvalidId(rc.id));
        }
        let condition = match rc.condition {
            Some(text) => Some(
                text.parse::<Condition>()
                    .map_err(|message| ModelError::Schema { id: rc.id.clone(), message })?,
            ),
            None => None,
        };
        let def = ContextDef {
            id: rc.id.clone(),
            description: rc.description,
            value_kind: rc.kind,
            condition,
        };
        if contexts.insert(rc.id.clone(), def).is_some() {
            return Err(ModelError::DuplicateId(rc.id));
        }
    }

    let mut nodes = BTreeMap::new();
    for rn in raw.nodes {
        if !valid_id(&rn.id) {
            return Err(ModelError::InvalidId(rn.id));
        }
        let kind = match (rn.kind, rn.placeholder) {
            (k, None) => k,
            (NodeKind::Placeholder | NodeKind::LeafTask, Some(true)) => NodeKind::Placeholder,
            (k, Some(false)) if k != NodeKind::Placeholder => k,
            _ => {
                return Err(ModelError::Schema {
                    id: rn.id,
                    message: "placeholder flag conflicts with node kind".into(),
                })
            }
        };
        let node = Node {
            id: rn.id.clone(),
            label: rn.label,
            kind,
            decomposition: rn.decomposition,
            children: rn.children,
            dm_annotation: rn.dm,
            context_refs: rn.contexts,
            leaf_params: kind.is_leaf_like().then(|| LeafParams::for_node(&rn.id)),
        };
        if nodes.insert(rn.id.clone(), node).is_some() || contexts.contains_key(&rn.id) {
            return Err(ModelError::DuplicateId(rn.id));
        }
    }

    if !nodes.contains_key(&raw.root) {
        return Err(ModelError::UnknownId { referrer: "root".into(), id: raw.root });
    }
    for node in nodes.values() {
        let refs = node.children.iter().chain(node.dm_annotation.iter().flatten());
        for id in refs {
            if !nodes.contains_key(id) {
                return Err(ModelError::UnknownId { referrer: node.id.clone(), id: id.clone() });
            }
        }
        for c in &node.context_refs {
            if !contexts.contains_key(c) {
                return Err(ModelError::UnknownId { referrer: node.id.clone(), id: c.clone() });
            }
        }
    }

    let model = GoalModel { actor_name: raw.actor, nodes, root_id: raw.root, contexts };
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

impl GoalModel {
    pub fn from_parts(
        actor_name: &str,
        root_id: &str,
        nodes: impl IntoIterator<Item = Node>,
        contexts: impl IntoIterator<Item = ContextDef>,
    ) -> Self {
        GoalModel {
            actor_name: actor_name.to_string(),
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            root_id: root_id.to_string(),
            contexts: contexts.into_iter().map(|c| (c.id.clone(), c)).collect(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn root(&self) -> &Node {
        &self.nodes[&self.root_id]
    }

    /// Pre-order depth-first walk of the subtree rooted at `id`, children in
    /// file order.
    pub fn preorder(&self, id: &str) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        let mut seen = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            let Some(node) = self.nodes.get(cur) else { continue };
            if !seen.insert(cur) {
                continue;
            }
            out.push(node);
            for c in node.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Leaf tasks and placeholders under `id`, in depth-first order.
    pub fn leaves_under(&self, id: &str) -> Vec<&Node> {
        self.preorder(id).into_iter().filter(|n| n.is_leaf_like()).collect()
    }

    pub fn leaves(&self) -> Vec<&Node> {
        self.leaves_under(&self.root_id)
    }

    pub fn placeholders(&self) -> Vec<&Node> {
        self.leaves().into_iter().filter(|n| n.is_placeholder()).collect()
    }

    pub fn parent_of(&self, id: &str) -> Option<&Node> {
        self.nodes.values().find(|n| n.children.iter().any(|c| c == id))
    }

    /// Every parameter name the model induces: three per leaf, one per
    /// referenced context, one existence flag per placeholder.
    pub fn parameter_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for n in self.preorder(&self.root_id) {
            if let Some(lp) = &n.leaf_params {
                out.insert(lp.reliability.clone());
                out.insert(lp.frequency.clone());
                out.insert(lp.cost.clone());
            }
            if let Some(opt) = n.opt_param() {
                out.insert(opt);
            }
            out.extend(n.context_params());
        }
        out
    }

    /// The model restricted to the subtree of `goal`, which becomes the root.
    pub fn subtree(&self, goal: &str) -> Option<GoalModel> {
        self.nodes.get(goal)?;
        let nodes: Vec<Node> = self.preorder(goal).into_iter().cloned().collect();
        let used: BTreeSet<&str> =
            nodes.iter().flat_map(|n| n.context_refs.iter().map(String::as_str)).collect();
        let contexts =
            self.contexts.values().filter(|c| used.contains(c.id.as_str())).cloned().collect::<Vec<_>>();
        Some(GoalModel::from_parts(&self.actor_name, goal, nodes, contexts))
    }

    /// Serializes to the model file format. Nodes are written in pre-order
    /// from the root, followed by any unreachable nodes.
    pub fn to_json(&self) -> String {
        let mut order: Vec<&Node> = self.preorder(&self.root_id);
        let seen: BTreeSet<&str> = order.iter().map(|n| n.id.as_str()).collect();
        order.extend(self.nodes.values().filter(|n| !seen.contains(n.id.as_str())));
        let raw = RawModel {
            actor: self.actor_name.clone(),
            root: self.root_id.clone(),
            nodes: order
                .into_iter()
                .map(|n| RawNode {
                    id: n.id.clone(),
                    label: n.label.clone(),
                    kind: n.kind,
                    decomposition: n.decomposition,
                    children: n.children.clone(),
                    dm: n.dm_annotation.clone(),
                    contexts: n.context_refs.clone(),
                    placeholder: n.is_placeholder().then_some(true),
                })
                .collect(),
            contexts: self
                .contexts
                .values()
                .map(|c| RawContext {
                    id: c.id.clone(),
                    description: c.description.clone(),
                    kind: c.value_kind,
                    condition: c.condition.as_ref().map(|x| x.to_string()),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&raw).expect("model serializes");
        text.push('\n');
        text
    }
}

/// Checks every structural invariant. The result is sorted by node id, then
/// rule, and is empty iff the model is valid.
pub fn validate(model: &GoalModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |node: &str, rule: &'static str, message: String| {
        out.push(Violation { node: node.to_string(), rule, message });
    };

    for (id, node) in &model.nodes {
        if !valid_id(id) || id != &node.id {
            push(id, "invalid-id", format!("id `{id}` is malformed or mismatched"));
        }
    }
    for id in model.contexts.keys() {
        if !valid_id(id) {
            push(id, "invalid-id", format!("context id `{id}` is malformed"));
        }
    }

    if !model.nodes.contains_key(&model.root_id) {
        push(&model.root_id, "root-missing", "root node does not exist".into());
    }

    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in model.nodes.values() {
        for c in &node.children {
            if model.nodes.contains_key(c) {
                parents.entry(c.as_str()).or_default().push(&node.id);
            } else {
                push(&node.id, "dangling-child", format!("child `{c}` does not exist"));
            }
        }
        for c in &node.context_refs {
            if !model.contexts.contains_key(c) {
                push(&node.id, "unknown-context", format!("context `{c}` is not defined"));
            }
        }
    }
    for (child, ps) in &parents {
        if ps.len() > 1 {
            push(child, "multiple-parents", format!("listed as a child by {}", ps.join(", ")));
        }
        if *child == model.root_id {
            push(child, "root-has-parent", "the root is listed as a child".into());
        }
    }

    if model.nodes.contains_key(&model.root_id) {
        // Reachability and cycles, by an explicit-stack DFS from the root.
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        let mut stack: Vec<(&str, usize)> = vec![(model.root_id.as_str(), 0)];
        state.insert(&model.root_id, 1);
        while let Some((id, idx)) = stack.pop() {
            let node = &model.nodes[id];
            if idx < node.children.len() {
                stack.push((id, idx + 1));
                let c = node.children[idx].as_str();
                if !model.nodes.contains_key(c) {
                    continue;
                }
                match state.get(c) {
                    Some(1) => push(c, "cycle", format!("cycle through `{id}` -> `{c}`")),
                    Some(_) => {}
                    None => {
                        state.insert(c, 1);
                        stack.push((c, 0));
                    }
                }
            } else {
                state.insert(id, 2);
            }
        }
        for id in model.nodes.keys() {
            if !state.contains_key(id.as_str()) {
                push(id, "unreachable", "not reachable from the root".into());
            }
        }
    }

    let mut encoded: BTreeMap<String, &str> = BTreeMap::new();
    for node in model.nodes.values() {
        let id = node.id.as_str();
        let enc = node.id.replace('.', "_");
        if let Some(other) = encoded.insert(enc.clone(), id) {
            push(id, "param-collision", format!("parameter names collide with `{other}`"));
        }

        if node.is_leaf_like() {
            if !node.children.is_empty() {
                push(id, "leaf-has-children", "leaf tasks and placeholders cannot have children".into());
            }
            if node.decomposition != Decomposition::None {
                push(id, "leaf-decomposition", "leaf tasks and placeholders cannot be decomposed".into());
            }
            if node.leaf_params.as_ref() != Some(&LeafParams::for_node(id)) {
                push(id, "leaf-params", "leaf parameters missing or not derived from the id".into());
            }
        } else {
            if node.children.is_empty() {
                push(id, "childless-inner", "goals and tasks need at least one child".into());
            } else if node.decomposition == Decomposition::None {
                push(id, "missing-decomposition", "node with children needs a decomposition".into());
            }
            if node.leaf_params.is_some() {
                push(id, "leaf-params", "only leaf tasks and placeholders carry parameters".into());
            }
        }

        if node.is_placeholder() && !id.ends_with(".X") {
            push(id, "placeholder-id", "placeholder ids end with `.X`".into());
        }

        if let Some(dm) = &node.dm_annotation {
            if node.is_leaf_like() {
                push(id, "dm-on-leaf", "DM on leaf node".into());
            } else if node.decomposition != Decomposition::Or {
                push(id, "dm-requires-or", "DM-annotated nodes must be OR-decomposed".into());
            }
            if dm.is_empty() {
                push(id, "dm-empty", "DM annotation lists no subtrees".into());
            }
            let mut seen = BTreeSet::new();
            for c in dm {
                if !seen.insert(c) {
                    push(id, "dm-duplicate", format!("`{c}` listed twice"));
                }
                if !model.nodes.contains_key(c) {
                    push(id, "dangling-dm", format!("DM operand `{c}` does not exist"));
                    continue;
                }
                if !node.children.contains(c) {
                    push(id, "dm-not-child", format!("DM operand `{c}` is not a child"));
                }
                if model.nodes[c].context_refs.is_empty() {
                    push(c, "dm-child-needs-context", format!("DM operand of `{id}` has no context"));
                }
            }
            for c in &node.children {
                if !dm.contains(c) {
                    push(id, "dm-missing-child", format!("child `{c}` is not a DM operand"));
                }
            }
        }
    }

    for ctx in model.contexts.values() {
        let ok = match ctx.value_kind {
            ContextKind::Boolean => ctx.condition.is_none(),
            ContextKind::Integer | ContextKind::Double => ctx.condition.is_some(),
        };
        if !ok {
            push(
                &ctx.id,
                "context-condition",
                "boolean contexts take no condition; numeric contexts need one".into(),
            );
        }
        let enc = param_name("C", &ctx.id);
        if model.contexts.keys().any(|o| o != &ctx.id && param_name("C", o) == enc) {
            push(&ctx.id, "param-collision", "context parameter names collide".into());
        }
    }

    out.sort();
    out.dedup();
    out
}

/// Flags context-dependent data-collection tasks that do not follow the
/// read / filter / transfer decomposition: an AND of exactly three leaf
/// tasks. A collection task is a context-annotated, non-placeholder DM
/// operand.
pub fn check_sensor_guideline(model: &GoalModel) -> Vec<Advisory> {
    let mut out = Vec::new();
    let operands: BTreeSet<&str> = model
        .nodes
        .values()
        .flat_map(|n| n.dm_annotation.iter().flatten().map(String::as_str))
        .collect();
    for id in operands {
        let Some(node) = model.node(id) else { continue };
        if node.context_refs.is_empty() || node.is_placeholder() {
            continue;
        }
        let leaves = node
            .children
            .iter()
            .filter(|c| model.node(c).is_some_and(|n| n.kind == NodeKind::LeafTask))
            .count();
        let conforms = node.decomposition == Decomposition::And
            && node.children.len() == 3
            && leaves == 3;
        if !conforms {
            out.push(Advisory {
                node: id.to_string(),
                message: format!(
                    "collection task should be an AND of three leaves (read, filter, transfer); found {} with {} children",
                    match node.decomposition {
                        Decomposition::And => "AND",
                        Decomposition::Or => "OR",
                        Decomposition::MeansEnd => "means-end",
                        Decomposition::None => "no decomposition",
                    },
                    node.children.len()
                ),
            });
        }
    }
    out
}
