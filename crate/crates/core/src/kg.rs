//! Contextual explanation trees: anchor concept phrases in a knowledge graph
//! and climb is-a parents until the branch becomes redundant with what the
//! tree already shows.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::text::{normalize_phrase, SimilarityScorer};

pub const IS_A: &str = "is-a";

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("malformed graph: {0}")]
    Parse(String),
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("phrase is empty")]
    EmptyPhrase,
    #[error("no phrase could be anchored in the graph")]
    NoAnchorsFound,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KgEdge(pub String, pub String, pub String);

impl KgEdge {
    pub fn child(&self) -> &str {
        &self.0
    }
    pub fn relation(&self) -> &str {
        &self.1
    }
    pub fn parent(&self) -> &str {
        &self.2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    #[serde(deserialize_with = "unique_nodes")]
    pub nodes: BTreeMap<String, String>,
    pub edges: Vec<KgEdge>,
}

fn unique_nodes<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, String>, D::Error> {
    struct NodesVisitor;
    impl<'de> Visitor<'de> for NodesVisitor {
        type Value = BTreeMap<String, String>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map of node id to label")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((id, label)) = access.next_entry::<String, String>()? {
                if out.insert(id.clone(), label).is_some() {
                    return Err(serde::de::Error::custom(format!("duplicate node id {id:?}")));
                }
            }
            Ok(out)
        }
    }
    d.deserialize_map(NodesVisitor)
}

impl KnowledgeGraph {
    pub fn new(nodes: BTreeMap<String, String>, edges: Vec<KgEdge>) -> Result<Self, KgError> {
        let kg = KnowledgeGraph { nodes, edges };
        kg.validate()?;
        Ok(kg)
    }

    fn validate(&self) -> Result<(), KgError> {
        for e in &self.edges {
            for end in [e.child(), e.parent()] {
                if !self.nodes.contains_key(end) {
                    return Err(KgError::Validation(format!("edge references missing node {end:?}")));
                }
            }
        }
        // Kahn's algorithm over is-a edges.
        let mut indegree: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in self.edges.iter().filter(|e| e.relation() == IS_A) {
            *indegree.get_mut(e.parent()).expect("checked above") += 1;
            children.entry(e.child()).or_default().push(e.parent());
        }
        let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
        let mut visited = 0;
        while let Some(n) = queue.pop_front() {
            visited += 1;
            for &p in children.get(n).map(Vec::as_slice).unwrap_or_default() {
                let d = indegree.get_mut(p).expect("known node");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(p);
                }
            }
        }
        if visited != self.nodes.len() {
            let stuck: Vec<&str> = indegree.iter().filter(|(_, &d)| d > 0).map(|(k, _)| *k).collect();
            return Err(KgError::Validation(format!("is-a cycle through {}", stuck.join(", "))));
        }
        Ok(())
    }

    /// is-a parents of `id`, sorted by id.
    pub fn parents(&self, id: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .edges
            .iter()
            .filter(|e| e.relation() == IS_A && e.child() == id)
            .map(|e| e.parent())
            .collect();
        set.into_iter().collect()
    }

    pub fn has_is_a(&self, child: &str, parent: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.relation() == IS_A && e.child() == child && e.parent() == parent)
    }

    pub fn label(&self, id: &str) -> Option<&str> {
        self.nodes.get(id).map(String::as_str)
    }
}

pub fn load_kg(bytes: &[u8]) -> Result<KnowledgeGraph, KgError> {
    let kg: KnowledgeGraph = serde_json::from_slice(bytes).map_err(|e| KgError::Parse(e.to_string()))?;
    kg.validate()?;
    Ok(kg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub node_id: String,
    pub similarity: f64,
}

/// The node whose label is most similar to `phrase`, if that similarity
/// reaches `theta_anchor`. Ties go to the smaller node id.
pub fn anchor_phrase(
    phrase: &str,
    kg: &KnowledgeGraph,
    scorer: &dyn SimilarityScorer,
    theta_anchor: f64,
) -> Result<Option<Anchor>, KgError> {
    if normalize_phrase(phrase).is_empty() {
        return Err(KgError::EmptyPhrase);
    }
    let mut best: Option<Anchor> = None;
    for (id, label) in &kg.nodes {
        let s = scorer.similarity(phrase, label);
        if best.as_ref().is_none_or(|b| s > b.similarity) {
            best = Some(Anchor {
                node_id: id.clone(),
                similarity: s,
            });
        }
    }
    Ok(best.filter(|b| b.similarity >= theta_anchor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub theta_anchor: f64,
    pub theta_stop: f64,
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            theta_anchor: 0.6,
            theta_stop: 0.8,
            max_depth: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// label too close to an anchor or an anchor's parent already shown
    Similarity,
    MaxDepth,
    /// no is-a parent
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_id: String,
    pub label: String,
    /// phrases anchored here, sorted
    pub anchors: Vec<String>,
    pub depth: usize,
    pub stop: Option<StopReason>,
    pub stop_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTree {
    /// sorted by node id
    pub nodes: Vec<TreeNode>,
    /// (child, parent), each an is-a edge of the graph
    pub edges: Vec<(String, String)>,
    pub unanchored: Vec<String>,
}

impl ContextTree {
    pub fn node(&self, id: &str) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn node_ids(&self) -> BTreeSet<&str> {
        self.nodes.iter().map(|n| n.node_id.as_str()).collect()
    }
}

/// Anchor every phrase, then climb is-a parents breadth-first from the
/// anchors (in node id order).
///
/// Each node climbs to its first parent by id, so every branch is a chain.
/// A newly reached node ends its branch when its label similarity to any
/// anchor, or to any parent already added above an anchor, reaches
/// `theta_stop`; a node at `max_depth` is not climbed further.
pub fn build_context_tree(
    phrases: &[String],
    kg: &KnowledgeGraph,
    scorer: &dyn SimilarityScorer,
    config: &TreeConfig,
) -> Result<ContextTree, KgError> {
    let mut anchors: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut unanchored = BTreeSet::new();
    for phrase in phrases {
        match anchor_phrase(phrase, kg, scorer, config.theta_anchor)? {
            Some(a) => {
                anchors.entry(a.node_id).or_default().insert(phrase.clone());
            }
            None => {
                unanchored.insert(phrase.clone());
            }
        }
    }
    if anchors.is_empty() {
        return Err(KgError::NoAnchorsFound);
    }

    let mut nodes: BTreeMap<String, TreeNode> = BTreeMap::new();
    let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
    // parents added directly above an anchor
    let mut anchor_parents: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<String> = VecDeque::new();

    for (id, phrases) in &anchors {
        nodes.insert(
            id.clone(),
            TreeNode {
                node_id: id.clone(),
                label: kg.nodes[id].clone(),
                anchors: phrases.iter().cloned().collect(),
                depth: 0,
                stop: None,
                stop_similarity: None,
            },
        );
        queue.push_back(id.clone());
    }

    let mut expanded: HashSet<String> = HashSet::new();
    while let Some(current) = queue.pop_front() {
        if !expanded.insert(current.clone()) {
            continue;
        }
        let depth = nodes[&current].depth;
        let Some(&parent) = kg.parents(&current).first() else {
            nodes.get_mut(&current).expect("queued nodes are in the tree").stop = Some(StopReason::Top);
            continue;
        };
        if depth >= config.max_depth {
            nodes.get_mut(&current).expect("queued nodes are in the tree").stop = Some(StopReason::MaxDepth);
            continue;
        }
        edges.insert((current.clone(), parent.to_string()));
        if anchors.contains_key(&current) {
            anchor_parents.insert(parent.to_string());
        }
        if nodes.contains_key(parent) {
            // branches met; the node is already shown and queued or expanded
            continue;
        }

        let label = &kg.nodes[parent];
        let best = anchors
            .keys()
            .chain(anchor_parents.iter())
            .filter(|id| id.as_str() != current && id.as_str() != parent)
            .map(|id| scorer.similarity(label, &kg.nodes[id]))
            .fold(None::<f64>, |acc, s| Some(acc.map_or(s, |a| a.max(s))));
        let stop = best.filter(|&s| s >= config.theta_stop);
        nodes.insert(
            parent.to_string(),
            TreeNode {
                node_id: parent.to_string(),
                label: label.clone(),
                anchors: Vec::new(),
                depth: depth + 1,
                stop: stop.map(|_| StopReason::Similarity),
                stop_similarity: stop,
            },
        );
        if stop.is_none() {
            queue.push_back(parent.to_string());
        }
    }

    Ok(ContextTree {
        nodes: nodes.into_values().collect(),
        edges: edges.into_iter().collect(),
        unanchored: unanchored.into_iter().collect(),
    })
}
