use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Claim, ScenarioTree, TreeBuilder};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "reserve-market/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketDocument {
    pub format: String,
    pub assets: Vec<String>,
    pub horizon: usize,
    pub nodes: Vec<NodeDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocument {
    pub id: String,
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    pub prices: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimsDocument {
    pub format: String,
    pub claims: Vec<ClaimDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimDocument {
    pub name: String,
    pub payoffs: BTreeMap<String, f64>,
}

fn check_format(found: &str) -> Result<()> {
    if found != FORMAT_TAG {
        return Err(Error::Schema(format!(
            "unsupported format {found:?}, expected {FORMAT_TAG:?}"
        )));
    }
    Ok(())
}

impl MarketDocument {
    pub fn into_tree(self) -> Result<ScenarioTree> {
        check_format(&self.format)?;
        let mut builder = TreeBuilder::new(self.assets);
        for node in self.nodes {
            builder.push(node.id, node.parent, node.prob, node.prices);
        }
        builder.build(self.horizon)
    }

    pub fn from_tree(tree: &ScenarioTree) -> Self {
        let nodes: Vec<NodeDocument> = (0..tree.len())
            .map(|i| {
                let id = super::NodeId(i);
                NodeDocument {
                    id: tree.id(id).to_string(),
                    parent: tree.parent(id).map(|p| tree.id(p).to_string()),
                    prob: tree.parent(id).map(|_| tree.prob(id)),
                    prices: tree.prices(id).to_vec(),
                }
            })
            .collect();
        Self {
            format: FORMAT_TAG.into(),
            assets: tree.assets().to_vec(),
            horizon: tree.horizon(),
            nodes,
        }
    }
}

/// Parses and validates a market document.
pub fn load_market(json: &str) -> Result<ScenarioTree> {
    let doc: MarketDocument = serde_json::from_str(json)?;
    doc.into_tree()
}

impl ClaimsDocument {
    pub fn into_claims(self, tree: &ScenarioTree) -> Result<Vec<Claim>> {
        check_format(&self.format)?;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.claims.len());
        for doc in self.claims {
            if !seen.insert(doc.name.clone()) {
                return Err(Error::InvalidClaim(format!(
                    "duplicate claim name {}",
                    doc.name
                )));
            }
            for id in doc.payoffs.keys() {
                let node = tree.node(id)?;
                if !tree.is_terminal(node) {
                    return Err(Error::InvalidClaim(format!(
                        "claim {} pays at non-terminal node {id}",
                        doc.name
                    )));
                }
            }
            let payoffs = tree
                .terminals()
                .map(|w| {
                    doc.payoffs.get(tree.id(w)).copied().ok_or_else(|| {
                        Error::InvalidClaim(format!(
                            "claim {} has no payoff at terminal node {}",
                            doc.name,
                            tree.id(w)
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(Claim::new(tree, doc.name, payoffs)?);
        }
        Ok(out)
    }

    pub fn from_claims(tree: &ScenarioTree, claims: &[Claim]) -> Self {
        Self {
            format: FORMAT_TAG.into(),
            claims: claims
                .iter()
                .map(|c| ClaimDocument {
                    name: c.name().to_string(),
                    payoffs: tree
                        .terminals()
                        .zip(c.payoffs())
                        .map(|(w, &v)| (tree.id(w).to_string(), v))
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses a claims document against an already loaded tree.
pub fn load_claims(json: &str, tree: &ScenarioTree) -> Result<Vec<Claim>> {
    let doc: ClaimsDocument = serde_json::from_str(json)?;
    doc.into_claims(tree)
}
