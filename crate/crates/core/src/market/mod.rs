//! Finite discrete-time market models.
//!
//! A [`ScenarioTree`] is a rooted event tree: each node carries the prices of
//! `d` assets and the conditional probability of being reached from its parent.
//! Terminal nodes (all at the horizon) are the atoms of the probability space,
//! and the filtration at stage `t` is generated by the nodes of that stage.
//!
//! Trading strategies hold a vector of asset units at every non-terminal node;
//! the holding chosen at node `m` earns the price increment from `m` to the
//! child that is realized next.

mod format;

pub use format::{load_claims, load_market, ClaimsDocument, MarketDocument, NodeDocument};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense index of a node inside a [`ScenarioTree`], assigned in insertion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Node {
    id: String,
    parent: Option<usize>,
    prob: f64,
    prices: Vec<f64>,
}

/// A validated scenario tree.
#[derive(Clone, Debug)]
pub struct ScenarioTree {
    assets: Vec<String>,
    horizon: usize,
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    time: Vec<usize>,
    /// Nodes in breadth-first order from the root.
    order: Vec<usize>,
    terminals: Vec<usize>,
    interior: Vec<usize>,
    terminal_pos: Vec<Option<usize>>,
    interior_pos: Vec<Option<usize>>,
    path_prob: Vec<f64>,
    /// Row per terminal, column per (interior node, asset): the price increment
    /// that a unit held at that node contributes to the terminal wealth.
    gains: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

/// `(id, parent, conditional probability, prices)` as given to the builder.
type NodeEntry = (String, Option<String>, Option<f64>, Vec<f64>);

/// Incremental construction of a [`ScenarioTree`].
#[derive(Clone, Debug)]
pub struct TreeBuilder {
    assets: Vec<String>,
    entries: Vec<NodeEntry>,
}

impl TreeBuilder {
    pub fn new<S: Into<String>>(assets: impl IntoIterator<Item = S>) -> Self {
        Self {
            assets: assets.into_iter().map(Into::into).collect(),
            entries: Vec::new(),
        }
    }

    pub fn root(mut self, id: &str, prices: &[f64]) -> Self {
        self.entries
            .push((id.to_string(), None, None, prices.to_vec()));
        self
    }

    pub fn child(mut self, id: &str, parent: &str, prob: f64, prices: &[f64]) -> Self {
        self.entries.push((
            id.to_string(),
            Some(parent.to_string()),
            Some(prob),
            prices.to_vec(),
        ));
        self
    }

    pub fn push(
        &mut self,
        id: String,
        parent: Option<String>,
        prob: Option<f64>,
        prices: Vec<f64>,
    ) {
        self.entries.push((id, parent, prob, prices));
    }

    /// Validates every structural invariant and assembles the tree.
    pub fn build(self, horizon: usize) -> Result<ScenarioTree> {
        ScenarioTree::assemble(self.assets, self.entries, horizon)
    }
}

impl ScenarioTree {
    /// One-period single-asset tree: root price `s0` and `(probability, price)` per branch.
    /// Branch ids are `w0`, `w1`, ...
    pub fn one_step(s0: f64, branches: &[(f64, f64)]) -> Result<Self> {
        let mut b = TreeBuilder::new(["S"]).root("root", &[s0]);
        for (i, &(p, s)) in branches.iter().enumerate() {
            b = b.child(&format!("w{i}"), "root", p, &[s]);
        }
        b.build(1)
    }

    fn assemble(assets: Vec<String>, entries: Vec<NodeEntry>, horizon: usize) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::InvalidTree("at least one asset is required".into()));
        }
        if horizon < 1 {
            return Err(Error::InvalidTree("horizon must be at least 1".into()));
        }
        let d = assets.len();
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (id, ..)) in entries.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidTree(format!("duplicate node id {id}")));
            }
        }

        let mut nodes = Vec::with_capacity(entries.len());
        let mut root = None;
        for (id, parent, prob, prices) in entries {
            if prices.len() != d {
                return Err(Error::InvalidTree(format!(
                    "node {id} has {} prices, expected {d}",
                    prices.len()
                )));
            }
            if let Some(p) = prices.iter().find(|p| !p.is_finite()) {
                return Err(Error::InvalidTree(format!(
                    "node {id} has non-finite price {p}"
                )));
            }
            let parent_idx = match parent {
                None => {
                    if root.is_some() {
                        return Err(Error::InvalidTree(format!("node {id} is a second root")));
                    }
                    if prob.is_some() {
                        return Err(Error::InvalidTree(format!(
                            "root {id} must not carry a probability"
                        )));
                    }
                    root = Some(nodes.len());
                    None
                }
                Some(parent) => match index.get(&parent) {
                    Some(&p) => Some(p),
                    None => return Err(Error::DanglingParent { node: id, parent }),
                },
            };
            let prob = match (parent_idx, prob) {
                (None, _) => 1.0,
                (Some(_), None) => {
                    return Err(Error::InvalidTree(format!("node {id} has no probability")))
                }
                (Some(_), Some(p)) if !(p > 0.0) || !p.is_finite() => {
                    return Err(Error::NonPositiveProbability { node: id, prob: p })
                }
                (Some(_), Some(p)) => p,
            };
            nodes.push(Node {
                id,
                parent: parent_idx,
                prob,
                prices,
            });
        }
        let root = root.ok_or_else(|| Error::InvalidTree("no root node".into()))?;

        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                children[p].push(i);
            }
        }

        let mut time = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        time[root] = 0;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let m = order[head];
            head += 1;
            for &c in &children[m] {
                time[c] = time[m] + 1;
                order.push(c);
            }
        }
        if order.len() != n {
            let lost = (0..n).find(|&i| time[i] == usize::MAX).unwrap();
            return Err(Error::InvalidTree(format!(
                "node {} is not reachable from the root",
                nodes[lost].id
            )));
        }

        for (m, kids) in children.iter().enumerate() {
            if kids.is_empty() {
                if time[m] != horizon {
                    return Err(Error::InvalidTree(format!(
                        "terminal node {} has time {} but the horizon is {horizon}",
                        nodes[m].id, time[m]
                    )));
                }
                continue;
            }
            if time[m] >= horizon {
                return Err(Error::InvalidTree(format!(
                    "node {} lies beyond the horizon {horizon}",
                    nodes[kids[0]].id
                )));
            }
            let sum: f64 = kids.iter().map(|&c| nodes[c].prob).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::ProbabilitySum {
                    node: nodes[m].id.clone(),
                    sum,
                });
            }
        }

        let mut path_prob = vec![0.0; n];
        for &m in &order {
            path_prob[m] = match nodes[m].parent {
                None => 1.0,
                Some(p) => path_prob[p] * nodes[m].prob,
            };
        }

        let terminals: Vec<usize> = (0..n).filter(|&m| children[m].is_empty()).collect();
        let interior: Vec<usize> = (0..n).filter(|&m| !children[m].is_empty()).collect();
        let mut terminal_pos = vec![None; n];
        for (k, &m) in terminals.iter().enumerate() {
            terminal_pos[m] = Some(k);
        }
        let mut interior_pos = vec![None; n];
        for (k, &m) in interior.iter().enumerate() {
            interior_pos[m] = Some(k);
        }

        let cols = interior.len() * d;
        let mut gains = vec![vec![0.0; cols]; terminals.len()];
        for (row, &w) in terminals.iter().enumerate() {
            let mut child = w;
            while let Some(parent) = nodes[child].parent {
                let j = interior_pos[parent].expect("parent is interior");
                for k in 0..d {
                    gains[row][j * d + k] = nodes[child].prices[k] - nodes[parent].prices[k];
                }
                child = parent;
            }
        }

        Ok(Self {
            assets,
            horizon,
            nodes,
            children,
            time,
            order,
            terminals,
            interior,
            terminal_pos,
            interior_pos,
            path_prob,
            gains,
            index,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    /// Number of traded assets `d`.
    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(self.order[0])
    }

    pub fn node(&self, id: &str) -> Result<NodeId> {
        self.index
            .get(id)
            .map(|&i| NodeId(i))
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn id(&self, node: NodeId) -> &str {
        &self.nodes[node.0].id
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes[node.0].parent.map(NodeId)
    }

    pub fn children(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children[node.0].iter().map(|&c| NodeId(c))
    }

    pub fn time(&self, node: NodeId) -> usize {
        self.time[node.0]
    }

    /// Conditional probability of reaching `node` from its parent (1 for the root).
    pub fn prob(&self, node: NodeId) -> f64 {
        self.nodes[node.0].prob
    }

    pub fn prices(&self, node: NodeId) -> &[f64] {
        &self.nodes[node.0].prices
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.children[node.0].is_empty()
    }

    /// Terminal nodes in insertion order. Per-outcome vectors throughout the
    /// crate are indexed by position in this list.
    pub fn terminals(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.terminals.iter().map(|&m| NodeId(m))
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    /// Non-terminal nodes in insertion order; strategies are indexed by position here.
    pub fn interior(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.interior.iter().map(|&m| NodeId(m))
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn terminal_index(&self, node: NodeId) -> Option<usize> {
        self.terminal_pos.get(node.0).copied().flatten()
    }

    pub fn interior_index(&self, node: NodeId) -> Option<usize> {
        self.interior_pos.get(node.0).copied().flatten()
    }

    /// Product of conditional probabilities along the root-to-node path.
    pub fn path_probability(&self, node: NodeId) -> Result<f64> {
        self.path_prob
            .get(node.0)
            .copied()
            .ok_or_else(|| Error::UnknownNode(format!("#{}", node.0)))
    }

    /// Physical probabilities of the terminal atoms.
    pub fn terminal_probabilities(&self) -> Vec<f64> {
        self.terminals.iter().map(|&m| self.path_prob[m]).collect()
    }

    /// Number of strategy coordinates: `num_interior() * dim()`.
    pub fn num_holdings(&self) -> usize {
        self.interior.len() * self.assets.len()
    }

    /// Gain sensitivities: `gains()[w][j * d + k]` is the increment of asset `k`
    /// over the step out of interior node `j` on the path to terminal `w`
    /// (zero when the node is not an ancestor of `w`).
    pub fn gains(&self) -> &[Vec<f64>] {
        &self.gains
    }

    /// Wealth at every node for initial capital `x` and strategy `phi`, indexed by `NodeId`.
    pub fn value_process(&self, x: f64, phi: &Strategy) -> Vec<f64> {
        let d = self.dim();
        let mut wealth = vec![0.0; self.nodes.len()];
        for &m in &self.order {
            wealth[m] = match self.nodes[m].parent {
                None => x,
                Some(p) => {
                    let h = phi.holding_at(self.interior_pos[p].expect("interior"));
                    let inc: f64 = (0..d)
                        .map(|k| h[k] * (self.nodes[m].prices[k] - self.nodes[p].prices[k]))
                        .sum();
                    wealth[p] + inc
                }
            };
        }
        wealth
    }

    /// Terminal wealth `x + (phi . S)_T` per terminal.
    pub fn terminal_wealth(&self, x: f64, phi: &Strategy) -> Vec<f64> {
        let flat = phi.as_flat();
        self.gains
            .iter()
            .map(|row| x + row.iter().zip(flat).map(|(g, h)| g * h).sum::<f64>())
            .collect()
    }
}

/// A contingent claim: payoff per terminal node.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    name: String,
    payoffs: Vec<f64>,
}

impl Claim {
    /// Payoffs are given in terminal order.
    pub fn new(tree: &ScenarioTree, name: impl Into<String>, payoffs: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if payoffs.len() != tree.num_terminals() {
            return Err(Error::InvalidClaim(format!(
                "claim {name} has {} payoffs for {} terminal nodes",
                payoffs.len(),
                tree.num_terminals()
            )));
        }
        if let Some((k, v)) = payoffs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let node = tree.terminals[k];
            return Err(Error::InvalidClaim(format!(
                "claim {name} has non-finite payoff {v} at node {}",
                tree.nodes[node].id
            )));
        }
        Ok(Self { name, payoffs })
    }

    pub fn from_fn(
        tree: &ScenarioTree,
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let payoffs = tree.terminals().map(|w| f(tree.prices(w))).collect();
        Self::new(tree, name, payoffs)
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self {
            name: format!("cash {c}"),
            payoffs: vec![c; tree.num_terminals()],
        }
    }

    pub fn zero(tree: &ScenarioTree) -> Self {
        Self {
            name: "zero".into(),
            payoffs: vec![0.0; tree.num_terminals()],
        }
    }

    /// European call on asset `asset` with the given strike.
    pub fn call(tree: &ScenarioTree, asset: usize, strike: f64) -> Result<Self> {
        if asset >= tree.dim() {
            return Err(Error::InvalidArgument(format!(
                "no asset with index {asset}"
            )));
        }
        Self::from_fn(tree, format!("call {strike}"), |s| {
            (s[asset] - strike).max(0.0)
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoffs
    }

    pub fn min(&self) -> f64 {
        self.payoffs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.payoffs
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self + c` in every outcome.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            name: format!("{} + {c}", self.name),
            payoffs: self.payoffs.iter().map(|g| g + c).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            name: format!("{c} * {}", self.name),
            payoffs: self.payoffs.iter().map(|g| g * c).collect(),
        }
    }

    pub fn sum(&self, other: &Claim) -> Self {
        Self {
            name: format!("{} + {}", self.name, other.name),
            payoffs: self
                .payoffs
                .iter()
                .zip(&other.payoffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Asset holdings at every non-terminal node (a predictable process).
///
/// On a finite tree every strategy has a finite credit line, so all of them
/// are admissible and no bound is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    dim: usize,
    flat: Vec<f64>,
}

impl Strategy {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Self {
            dim: tree.dim(),
            flat: vec![0.0; tree.num_holdings()],
        }
    }

    /// Same holding vector at every interior node.
    pub fn constant(tree: &ScenarioTree, holding: &[f64]) -> Result<Self> {
        if holding.len() != tree.dim() {
            return Err(Error::InvalidArgument(format!(
                "holding has {} entries, expected {}",
                holding.len(),
                tree.dim()
            )));
        }
        let flat = (0..tree.num_interior())
            .flat_map(|_| holding.iter().copied())
            .collect();
        Ok(Self {
            dim: tree.dim(),
            flat,
        })
    }

    /// Stacked holdings, interior node major, asset minor.
    pub fn from_flat(tree: &ScenarioTree, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != tree.num_holdings() {
            return Err(Error::InvalidArgument(format!(
                "strategy has {} coordinates, expected {}",
                flat.len(),
                tree.num_holdings()
            )));
        }
        Ok(Self {
            dim: tree.dim(),
            flat,
        })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.flat
    }

    /// Holding at the `k`-th interior node.
    pub fn holding_at(&self, k: usize) -> &[f64] {
        &self.flat[k * self.dim..(k + 1) * self.dim]
    }

    pub fn holding(&self, tree: &ScenarioTree, node: NodeId) -> Option<&[f64]> {
        tree.interior_index(node).map(|k| self.holding_at(k))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            flat: self.flat.iter().map(|h| h * c).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial() -> ScenarioTree {
        ScenarioTree::one_step(1.0, &[(0.6, 2.0), (0.4, 0.5)]).unwrap()
    }

    fn two_step() -> ScenarioTree {
        TreeBuilder::new(["S"])
            .root("r", &[1.0])
            .child("u", "r", 0.6, &[2.0])
            .child("d", "r", 0.4, &[0.5])
            .child("uu", "u", 0.5, &[3.0])
            .child("ud", "u", 0.5, &[1.0])
            .child("du", "d", 0.5, &[1.0])
            .child("dd", "d", 0.5, &[0.25])
            .build(2)
            .unwrap()
    }

    #[test]
    fn path_probabilities() {
        let t = binomial();
        assert_eq!(t.path_probability(t.root()).unwrap(), 1.0);
        assert_eq!(t.path_probability(t.node("w0").unwrap()).unwrap(), 0.6);
        let t = two_step();
        let uu = t.node("uu").unwrap();
        assert!((t.path_probability(uu).unwrap() - 0.3).abs() < 1e-15);
        assert!(t.path_probability(NodeId(99)).is_err());
        let total: f64 = t.terminal_probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn replication_of_call() {
        let t = binomial();
        let phi = Strategy::constant(&t, &[2.0 / 3.0]).unwrap();
        let w = t.terminal_wealth(1.0 / 3.0, &phi);
        assert!((w[0] - 1.0).abs() < 1e-15);
        assert!(w[1].abs() < 1e-15);
    }

    #[test]
    fn trinomial_value_process() {
        let t =
            ScenarioTree::one_step(1.0, &[(1. / 3., 2.0), (1. / 3., 1.0), (1. / 3., 0.5)]).unwrap();
        assert_eq!(t.len(), 4);
        let phi = Strategy::constant(&t, &[1.0]).unwrap();
        let v = t.value_process(0.0, &phi);
        let term: Vec<f64> = t.terminals().map(|w| v[w.0]).collect();
        assert_eq!(term, vec![1.0, 0.0, -0.5]);
        assert_eq!(t.terminal_wealth(0.0, &phi), term);
    }

    #[test]
    fn zero_strategy_keeps_wealth() {
        let t = two_step();
        let v = t.value_process(2.5, &Strategy::zero(&t));
        assert!(v.iter().all(|&w| w == 2.5));
    }

    #[test]
    fn gains_match_value_process() {
        let t = two_step();
        let phi = Strategy::from_flat(&t, vec![0.3, -1.2, 2.0]).unwrap();
        let v = t.value_process(0.7, &phi);
        let w = t.terminal_wealth(0.7, &phi);
        for (k, node) in t.terminals().enumerate() {
            assert!((v[node.0] - w[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let err = TreeBuilder::new(["S"])
            .root("root", &[1.0])
            .child("a", "root", 0.5, &[2.0])
            .child("b", "root", 0.6, &[0.5])
            .build(1)
            .unwrap_err();
        assert_eq!(err.to_string(), "probabilities sum to 1.1 at node root");

        let err = TreeBuilder::new(["S"])
            .root("root", &[1.0])
            .child("a", "root", 1.0, &[2.0])
            .child("b", "root", 0.0, &[0.5])
            .build(1)
            .unwrap_err();
        assert!(matches!(err, Error::NonPositiveProbability { ref node, .. } if node == "b"));
    }

    #[test]
    fn rejects_structural_errors() {
        let dangling = TreeBuilder::new(["S"])
            .root("root", &[1.0])
            .child("a", "nowhere", 1.0, &[2.0])
            .build(1);
        assert!(matches!(dangling, Err(Error::DanglingParent { .. })));

        let short = TreeBuilder::new(["S"])
            .root("root", &[1.0])
            .child("a", "root", 0.5, &[2.0])
            .child("b", "root", 0.5, &[0.5])
            .child("aa", "a", 1.0, &[2.0])
            .build(2);
        assert!(matches!(short, Err(Error::InvalidTree(_))));

        let two_roots = TreeBuilder::new(["S"])
            .root("a", &[1.0])
            .root("b", &[1.0])
            .build(1);
        assert!(two_roots.is_err());

        let wrong_dim = TreeBuilder::new(["S", "T"]).root("a", &[1.0]).build(1);
        assert!(wrong_dim.is_err());
    }

    #[test]
    fn claim_helpers() {
        let t = binomial();
        let call = Claim::call(&t, 0, 1.0).unwrap();
        assert_eq!(call.payoffs(), &[1.0, 0.0]);
        assert_eq!(call.shifted(2.0).payoffs(), &[3.0, 2.0]);
        assert_eq!(call.min(), 0.0);
        assert_eq!(call.max(), 1.0);
        assert!(Claim::new(&t, "bad", vec![1.0]).is_err());
        assert!(Claim::new(&t, "nan", vec![1.0, f64::NAN]).is_err());
    }
}
