//! Compositional synthesis of per-node reliability and cost formulae.
//!
//! Every node gets a triple `(P, W, Cost)`: `P` is the probability of
//! fulfilling the node, `W` the accumulated raw cost weight of its subtree and
//! `Cost` the reportable expected-cost formula. Binary compositions follow the
//! closed forms below; n-ary nodes left-fold them in child order (DM nodes in
//! annotation order).
//!
//! | feature         | P                         | W             | Cost                          |
//! |-----------------|---------------------------|---------------|-------------------------------|
//! | leaf            | C r f                     | w             | C w r f                       |
//! | AND(n1, n2)     | C1P1 C2P2                 | C1W1 + C2W2   | W P                           |
//! | OR/DM(n1, n2)   | C1P1 + C2P2 - C1P1 C2P2   | C1W1 + C2W2   | W P - C2W2 C1P1               |
//! | incomplete(x)   | C P OPT                   | W_x           | C W_x P OPT                   |
//!
//! A missing context factor is the constant one.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::cgm::{Decomposition, GoalModel, Node, NodeKind};
use crate::symexpr::SymExpr;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeForms {
    pub node_id: String,
    pub p: SymExpr,
    pub w: SymExpr,
    pub cost: SymExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComposeKind {
    And,
    Or,
    Dm,
    Incompleteness,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("`{0}` is not a leaf task or placeholder")]
    NotALeaf(String),
    #[error("incompleteness composition needs an OPT parameter")]
    MissingOpt,
    #[error("{0:?} composition needs two operands")]
    MissingOperand(ComposeKind),
    #[error("node `{0}` has no children to compose")]
    NoChildren(String),
}

/// Product of a node's context parameters, or `None` if it has none.
pub fn context_factor(node: &Node) -> Option<SymExpr> {
    let params = node.context_params();
    (!params.is_empty()).then(|| SymExpr::product_of(params.iter().map(String::as_str)))
}

fn times(ctx: Option<&SymExpr>, e: &SymExpr) -> SymExpr {
    match ctx {
        Some(c) => c.mul(e),
        None => e.clone(),
    }
}

/// Closed forms of a leaf task: `P = C r f`, `W = w`, `Cost = C w r f`.
/// Placeholders get the same forms here; their OPT flag is added by the
/// incompleteness row in [`compose_node_form`].
pub fn atomic_forms(leaf: &Node) -> Result<NodeForms, CompileError> {
    let lp = leaf.leaf_params.as_ref().ok_or_else(|| CompileError::NotALeaf(leaf.id.clone()))?;
    if !leaf.is_leaf_like() {
        return Err(CompileError::NotALeaf(leaf.id.clone()));
    }
    let ctx = context_factor(leaf);
    let rf = SymExpr::product_of([lp.reliability.as_str(), lp.frequency.as_str()]);
    let w = SymExpr::param(&lp.cost);
    let p = times(ctx.as_ref(), &rf);
    let cost = w.mul(&p);
    Ok(NodeForms { node_id: leaf.id.clone(), p, w, cost })
}

/// One row of the composition table. `right` may be absent only for
/// `Incompleteness` and for a single-operand `Dm`, where the absent operand
/// is zero and `P` collapses to `C1 P1`.
pub fn compose_pair(
    kind: ComposeKind,
    left: &NodeForms,
    right: Option<&NodeForms>,
    ctx_left: Option<&SymExpr>,
    ctx_right: Option<&SymExpr>,
    opt: Option<&SymExpr>,
) -> Result<NodeForms, CompileError> {
    let id = left.node_id.clone();
    match kind {
        ComposeKind::Incompleteness => {
            let opt = opt.ok_or(CompileError::MissingOpt)?;
            let p = times(ctx_left, &left.p).mul(opt);
            let cost = times(ctx_left, &left.w).mul(&left.p).mul(opt);
            Ok(NodeForms { node_id: id, p, w: left.w.clone(), cost })
        }
        ComposeKind::And | ComposeKind::Or | ComposeKind::Dm => {
            let a = times(ctx_left, &left.p);
            let wa = times(ctx_left, &left.w);
            let (b, wb) = match right {
                Some(r) => (times(ctx_right, &r.p), times(ctx_right, &r.w)),
                None if kind == ComposeKind::Dm => (SymExpr::zero(), SymExpr::zero()),
                None => return Err(CompileError::MissingOperand(kind)),
            };
            let w = wa.add(&wb);
            let (p, cost) = if kind == ComposeKind::And {
                let p = a.mul(&b);
                let cost = w.mul(&p);
                (p, cost)
            } else {
                let p = a.add(&b).sub(&a.mul(&b));
                let cost = w.mul(&p).sub(&wb.mul(&a));
                (p, cost)
            };
            Ok(NodeForms { node_id: id, p, w, cost })
        }
    }
}

/// Forms of `node_id`, built depth-first over its subtree.
pub fn compose_node_form(model: &GoalModel, node_id: &str) -> Result<NodeForms, CompileError> {
    let mut memo = BTreeMap::new();
    compose_rec(model, node_id, &mut memo)
}

/// Forms of every node reachable from the root.
pub fn compile_model(model: &GoalModel) -> Result<BTreeMap<String, NodeForms>, CompileError> {
    let mut memo = BTreeMap::new();
    compose_rec(model, &model.root_id, &mut memo)?;
    Ok(memo)
}

fn compose_rec(
    model: &GoalModel,
    id: &str,
    memo: &mut BTreeMap<String, NodeForms>,
) -> Result<NodeForms, CompileError> {
    if let Some(f) = memo.get(id) {
        return Ok(f.clone());
    }
    let node = model.node(id).ok_or_else(|| CompileError::UnknownNode(id.to_string()))?;
    let forms = if node.is_leaf_like() {
        let atomic = atomic_forms(node)?;
        if node.kind == NodeKind::Placeholder {
            let opt = SymExpr::param(&node.opt_param().expect("placeholder has OPT"));
            let ctx = context_factor(node);
            compose_pair(ComposeKind::Incompleteness, &atomic, None, ctx.as_ref(), None, Some(&opt))?
        } else {
            atomic
        }
    } else {
        let operands: &[String] = match &node.dm_annotation {
            Some(dm) => dm,
            None => &node.children,
        };
        let kind = match (&node.dm_annotation, node.decomposition) {
            (Some(_), _) => ComposeKind::Dm,
            (None, Decomposition::And) => ComposeKind::And,
            (None, Decomposition::Or | Decomposition::MeansEnd) => ComposeKind::Or,
            (None, Decomposition::None) => ComposeKind::And,
        };
        let mut parts = Vec::with_capacity(operands.len());
        for c in operands {
            let child = model.node(c).ok_or_else(|| CompileError::UnknownNode(c.clone()))?;
            parts.push((compose_rec(model, c, memo)?, context_factor(child)));
        }
        fold(kind, &parts).ok_or_else(|| CompileError::NoChildren(id.to_string()))??
    };
    let forms = NodeForms { node_id: id.to_string(), ..forms };
    memo.insert(id.to_string(), forms.clone());
    Ok(forms)
}

/// Left fold of `compose_pair` over `(forms, context factor)` operands. The
/// accumulator carries no context of its own. A lone DM operand uses the
/// single-operand row; a lone AND/OR child passes through under its context.
fn fold(
    kind: ComposeKind,
    parts: &[(NodeForms, Option<SymExpr>)],
) -> Option<Result<NodeForms, CompileError>> {
    let (first, rest) = parts.split_first()?;
    if rest.is_empty() {
        let (f, ctx) = first;
        return Some(if kind == ComposeKind::Dm {
            compose_pair(kind, f, None, ctx.as_ref(), None, None)
        } else {
            Ok(NodeForms {
                node_id: f.node_id.clone(),
                p: times(ctx.as_ref(), &f.p),
                w: times(ctx.as_ref(), &f.w),
                cost: times(ctx.as_ref(), &f.cost),
            })
        });
    }
    let (second, rest) = rest.split_first()?;
    let mut acc = match compose_pair(kind, &first.0, Some(&second.0), first.1.as_ref(), second.1.as_ref(), None) {
        Ok(a) => a,
        Err(e) => return Some(Err(e)),
    };
    for (f, ctx) in rest {
        acc = match compose_pair(kind, &acc, Some(f), None, ctx.as_ref(), None) {
            Ok(a) => a,
            Err(e) => return Some(Err(e)),
        };
    }
    Some(Ok(acc))
}

/// Distinct parameter counts of a node's reliability and cost formulae.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamGrowth {
    pub reliability: usize,
    pub cost: usize,
}

pub fn param_growth_report(model: &GoalModel) -> Result<BTreeMap<String, ParamGrowth>, CompileError> {
    Ok(compile_model(model)?
        .into_iter()
        .map(|(id, f)| {
            let g = ParamGrowth { reliability: f.p.names().len(), cost: f.cost.names().len() };
            (id, g)
        })
        .collect())
}

/// One entry of the `compile` output file.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct FormulaRecord {
    pub reliability: String,
    pub cost: String,
    pub params: Vec<String>,
}

impl From<&NodeForms> for FormulaRecord {
    fn from(f: &NodeForms) -> Self {
        let mut params = f.p.names();
        params.extend(f.cost.names());
        FormulaRecord {
            reliability: f.p.render(),
            cost: f.cost.render(),
            params: params.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgm::{ContextDef, Decomposition as D, Node, NodeKind as K};

    fn e(s: &str) -> SymExpr {
        SymExpr::parse(s).unwrap()
    }

    fn leaf(id: &str) -> Node {
        Node::new(id, K::LeafTask)
    }

    fn forms(id: &str, p: &str, w: &str) -> NodeForms {
        let (p, w) = (e(p), e(w));
        NodeForms { node_id: id.into(), cost: w.mul(&p), p, w }
    }

    #[test]
    fn atomic_leaf_forms() {
        let f = atomic_forms(&leaf("T1.11")).unwrap();
        assert_eq!(f.p, e("r_T1_11*f_T1_11"));
        assert_eq!(f.w, e("w_T1_11"));
        assert_eq!(f.cost, e("w_T1_11*r_T1_11*f_T1_11"));
        let f = atomic_forms(&leaf("A").with_contexts(&["C9"])).unwrap();
        assert_eq!(f.p, e("C_C9*r_A*f_A"));
        assert_eq!(f.cost, e("C_C9*w_A*r_A*f_A"));
        assert_eq!(atomic_forms(&Node::new("G", K::Goal)), Err(CompileError::NotALeaf("G".into())));
    }

    #[test]
    fn table_rows() {
        let l = forms("a", "P1", "W1");
        let r = forms("b", "P2", "W2");
        let (c1, c2) = (e("C1"), e("C2"));
        let and = compose_pair(ComposeKind::And, &l, Some(&r), Some(&c1), Some(&c2), None).unwrap();
        assert_eq!(and.p, e("C1*P1*C2*P2"));
        assert_eq!(and.w, e("C1*W1 + C2*W2"));
        assert_eq!(and.cost, e("(C1*W1 + C2*W2)*C1*P1*C2*P2"));
        let dm = compose_pair(ComposeKind::Dm, &l, Some(&r), Some(&c1), Some(&c2), None).unwrap();
        assert_eq!(dm.p, e("-C1*P1*C2*P2 + C1*P1 + C2*P2"));
        assert_eq!(dm.cost, e("(C1*W1 + C2*W2)*(-C1*P1*C2*P2 + C1*P1 + C2*P2) - C2*W2*C1*P1"));
        let or = compose_pair(ComposeKind::Or, &l, Some(&r), Some(&c1), Some(&c2), None).unwrap();
        assert_eq!((or.p, or.cost), (dm.p, dm.cost));
        let x = compose_pair(ComposeKind::Incompleteness, &l, None, Some(&c1), None, Some(&e("OPT"))).unwrap();
        assert_eq!(x.p, e("C1*P1*OPT"));
        assert_eq!(x.w, e("W1"));
        assert_eq!(x.cost, e("C1*W1*P1*OPT"));
    }

    #[test]
    fn missing_context_is_one() {
        let l = forms("a", "P1", "W1");
        let r = forms("b", "P2", "W2");
        let and = compose_pair(ComposeKind::And, &l, Some(&r), None, None, None).unwrap();
        assert_eq!(and.p, e("P1*P2"));
    }

    #[test]
    fn dm_single_operand_collapses() {
        let l = forms("a", "P1", "W1");
        let dm = compose_pair(ComposeKind::Dm, &l, None, Some(&e("C1")), None, None).unwrap();
        assert_eq!(dm.p, e("C1*P1"));
    }

    #[test]
    fn compose_errors() {
        let l = forms("a", "P1", "W1");
        assert_eq!(
            compose_pair(ComposeKind::Incompleteness, &l, None, None, None, None),
            Err(CompileError::MissingOpt)
        );
        assert_eq!(
            compose_pair(ComposeKind::And, &l, None, None, None, None),
            Err(CompileError::MissingOperand(ComposeKind::And))
        );
    }

    #[test]
    fn single_leaf_model() {
        let m = GoalModel::from_parts("a", "T", [leaf("T")], []);
        let f = compose_node_form(&m, "T").unwrap();
        assert_eq!(f.p, e("r_T*f_T"));
        assert!(matches!(compose_node_form(&m, "X"), Err(CompileError::UnknownNode(_))));
    }

    #[test]
    fn placeholder_carries_opt() {
        let m = GoalModel::from_parts(
            "a",
            "G",
            [
                Node::new("G", K::Goal).with_children(D::And, &["A", "B.X"]),
                leaf("A"),
                Node::new("B.X", K::Placeholder).with_contexts(&["C1"]),
            ],
            [ContextDef::boolean("C1", "")],
        );
        let f = compose_node_form(&m, "B.X").unwrap();
        assert_eq!(f.p, e("C_C1*r_B_X*f_B_X*OPT_B_X"));
        let g = compose_node_form(&m, "G").unwrap();
        assert_eq!(g.p, e("r_A*f_A*C_C1*r_B_X*f_B_X*OPT_B_X"));
    }

    #[test]
    fn growth_counts() {
        let and4 = GoalModel::from_parts(
            "a",
            "G",
            [
                Node::new("G", K::Goal).with_children(D::And, &["A", "B", "C", "D"]),
                leaf("A"),
                leaf("B"),
                leaf("C"),
                leaf("D"),
            ],
            [],
        );
        let g = param_growth_report(&and4).unwrap();
        assert_eq!(g["G"], ParamGrowth { reliability: 8, cost: 12 });
        assert_eq!(g["A"], ParamGrowth { reliability: 2, cost: 3 });
    }
}
