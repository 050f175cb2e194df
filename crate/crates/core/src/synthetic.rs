//! Random arbitrage-free scenario trees and claims, for property tests and benchmarks.
//!
//! At every interior node a strictly positive one-step measure `q` is drawn
//! first and the child price increments are recentred to have zero mean under
//! `q`. The product of these one-step measures is then an equivalent
//! martingale measure, so every generated tree is free of arbitrage.

use rand::Rng;

use crate::market::{Claim, ScenarioTree, TreeBuilder};

#[derive(Clone, Copy, Debug)]
pub struct TreeSpec {
    pub max_stages: usize,
    pub max_branching: usize,
    pub assets: usize,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            max_stages: 3,
            max_branching: 3,
            assets: 1,
        }
    }
}

fn positive_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let head: f64 = out[..k - 1].iter().sum();
    out[k - 1] = 1.0 - head;
    out
}

/// A tree with `1..=max_stages` stages and `2..=max_branching` children per
/// interior node (every node of a stage has the same number of children).
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, spec: &TreeSpec) -> ScenarioTree {
    let stages = rng.gen_range(1..=spec.max_stages.max(1));
    let assets: Vec<String> = (0..spec.assets).map(|a| format!("S{a}")).collect();
    let prices0: Vec<f64> = (0..spec.assets).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mut builder = TreeBuilder::new(assets).root("r", &prices0);
    let mut frontier = vec![("r".to_string(), prices0)];
    for _ in 0..stages {
        let k = rng.gen_range(2..=spec.max_branching.max(2));
        let mut next = Vec::new();
        for (id, s) in &frontier {
            let p = positive_simplex(rng, k);
            let q = positive_simplex(rng, k);
            let steps: Vec<Vec<f64>> = (0..k)
                .map(|_| s.iter().map(|v| v * rng.gen_range(-0.4..0.4)).collect())
                .collect();
            for (c, ((pc, step), _)) in p.iter().zip(&steps).zip(&q).enumerate() {
                let prices: Vec<f64> = (0..s.len())
                    .map(|a| {
                        let mean: f64 = q.iter().zip(&steps).map(|(w, st)| w * st[a]).sum();
                        s[a] + step[a] - mean
                    })
                    .collect();
                let child = format!("{id}.{c}");
                builder = builder.child(&child, id, *pc, &prices);
                next.push((child, prices));
            }
        }
        frontier = next;
    }
    builder.build(stages).expect("generated trees are valid")
}

/// Payoffs drawn uniformly from `[-1, 2)`.
pub fn random_claim<R: Rng + ?Sized>(rng: &mut R, tree: &ScenarioTree, name: &str) -> Claim {
    let payoffs = (0..tree.num_terminals())
        .map(|_| rng.gen_range(-1.0..2.0))
        .collect();
    Claim::new(tree, name, payoffs).expect("finite payoffs")
}
