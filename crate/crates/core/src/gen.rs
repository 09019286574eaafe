//! Random goal models and bindings for property tests and `verify`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cgm::{ContextDef, Decomposition, GoalModel, Node, NodeKind};
use crate::oracle::ConcreteBinding;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_leaves: usize,
    /// Number of distinct contexts `C1..Cn` nodes may reference.
    pub contexts: usize,
    pub context_prob: f64,
    pub placeholder_prob: f64,
    pub dm_prob: f64,
    /// Allowed decompositions for inner nodes.
    pub and_only: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_leaves: 6,
            contexts: 4,
            context_prob: 0.3,
            placeholder_prob: 0.15,
            dm_prob: 0.3,
            and_only: false,
        }
    }
}

struct Builder<'a, R> {
    rng: &'a mut R,
    cfg: &'a GenConfig,
    nodes: Vec<Node>,
    next: usize,
}

impl<R: Rng> Builder<'_, R> {
    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("N{}", self.next)
    }

    fn context(&mut self) -> String {
        format!("C{}", self.rng.gen_range(1..=self.cfg.contexts))
    }

    fn maybe_context(&mut self, node: &mut Node, forced: bool) {
        if forced || self.rng.gen_bool(self.cfg.context_prob) {
            let c = self.context();
            node.context_refs.push(c);
        }
    }

    /// Builds a subtree over `n` leaves and returns its id.
    fn subtree(&mut self, n: usize, needs_context: bool, depth: usize) -> String {
        if n == 1 && (depth > 2 || self.rng.gen_bool(0.8)) {
            let placeholder = self.rng.gen_bool(self.cfg.placeholder_prob);
            let (id, kind) = if placeholder {
                (format!("{}.X", self.fresh()), NodeKind::Placeholder)
            } else {
                (self.fresh(), NodeKind::LeafTask)
            };
            let mut node = Node::new(&id, kind);
            self.maybe_context(&mut node, needs_context);
            self.nodes.push(node);
            return id;
        }
        let id = self.fresh();
        let kind = if self.rng.gen_bool(0.5) { NodeKind::Goal } else { NodeKind::Task };
        let mut node = Node::new(&id, kind);
        self.maybe_context(&mut node, needs_context);

        let arity = if n == 1 { 1 } else { self.rng.gen_range(2..=n.min(3)) };
        let mut sizes = vec![1; arity];
        for _ in arity..n {
            let i = self.rng.gen_range(0..arity);
            sizes[i] += 1;
        }
        let dm = !self.cfg.and_only && self.rng.gen_bool(self.cfg.dm_prob);
        let decomposition = if self.cfg.and_only {
            Decomposition::And
        } else if dm {
            Decomposition::Or
        } else {
            *[Decomposition::And, Decomposition::Or, Decomposition::MeansEnd]
                .choose(self.rng)
                .expect("nonempty")
        };
        let children: Vec<String> = sizes.into_iter().map(|s| self.subtree(s, dm, depth + 1)).collect();
        node.decomposition = decomposition;
        if dm {
            node.dm_annotation = Some(children.clone());
        }
        node.children = children;
        self.nodes.push(node);
        id
    }
}

/// A valid random model with between one and `cfg.max_leaves` leaves.
pub fn random_model<R: Rng>(rng: &mut R, cfg: &GenConfig) -> GoalModel {
    let n = rng.gen_range(1..=cfg.max_leaves.max(1));
    model_with_leaves(rng, cfg, n)
}

pub fn model_with_leaves<R: Rng>(rng: &mut R, cfg: &GenConfig, n: usize) -> GoalModel {
    let mut b = Builder { rng, cfg, nodes: Vec::new(), next: 0 };
    let root = b.subtree(n, false, 0);
    let nodes = std::mem::take(&mut b.nodes);
    let contexts = (1..=cfg.contexts).map(|i| ContextDef::boolean(&format!("C{i}"), ""));
    let mut m = GoalModel::from_parts("random", &root, nodes, contexts);
    let used: std::collections::BTreeSet<String> =
        m.nodes.values().flat_map(|n| n.context_refs.clone()).collect();
    m.contexts.retain(|id, _| used.contains(id));
    m
}

/// A full binding: `r` uniform in [0,1], `f` uniform or fixed to one, `w`
/// uniform in [0,5], contexts and existence flags true with probability 0.7.
pub fn random_binding<R: Rng>(rng: &mut R, model: &GoalModel, unit_frequency: bool) -> ConcreteBinding {
    let mut b = ConcreteBinding::default();
    for name in model.parameter_names() {
        let v = match name.split('_').next().unwrap_or("") {
            "r" => rng.gen_range(0.0..=1.0),
            "f" if unit_frequency => 1.0,
            "f" => rng.gen_range(0.0..=1.0),
            "w" => rng.gen_range(0.0..5.0),
            _ => f64::from(u8::from(rng.gen_bool(0.7))),
        };
        b.set(&name, v);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgm::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_models_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = GenConfig::default();
        let mut saw_dm = false;
        let mut saw_placeholder = false;
        for _ in 0..500 {
            let m = random_model(&mut rng, &cfg);
            assert!(validate(&m).is_empty(), "{:?}", validate(&m));
            assert!(m.leaves().len() <= 6);
            saw_dm |= m.nodes.values().any(|n| n.dm_annotation.is_some());
            saw_placeholder |= !m.placeholders().is_empty();
        }
        assert!(saw_dm && saw_placeholder);
    }

    #[test]
    fn bindings_cover_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, &GenConfig::default());
        let b = random_binding(&mut rng, &m, true);
        assert_eq!(b.values.len(), m.parameter_names().len());
        assert!(b.values.iter().filter(|(k, _)| k.starts_with("f_")).all(|(_, v)| *v == 1.0));
    }
}
