//! Process-knowledge documents: the machine-readable form of a clinical
//! instrument or a dialogue protocol.
//!
//! A document is either a *flow* (branching questions, each answer leads to
//! another question or to an outcome) or *flat* (every item is asked, points
//! are summed, and the total falls in exactly one threshold interval).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PkError {
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("document failed validation: {0}")]
    Validation(ValidationReport),
}

/// An answer as it appears on the wire: integers for scale items, strings
/// for yes/no and choice items.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Int(i64),
    Text(String),
}

impl AnswerValue {
    pub fn yes() -> Self {
        AnswerValue::Text("yes".into())
    }

    pub fn no() -> Self {
        AnswerValue::Text("no".into())
    }

    /// The string used for this value when it is a JSON object key
    /// (evidence and point maps).
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Int(v) => write!(f, "{v}"),
            AnswerValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for AnswerValue {
    fn from(v: i64) -> Self {
        AnswerValue::Int(v)
    }
}

impl From<&str> for AnswerValue {
    fn from(v: &str) -> Self {
        AnswerValue::Text(v.to_string())
    }
}

/// Conversational role of a question.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    YesNo,
    DegreeFrequency,
    Causes,
    TreatmentRemedies,
    SideEffectsInfo,
    Other(String),
}

impl Tag {
    pub fn as_str(&self) -> &str {
        match self {
            Tag::YesNo => "YesNo",
            Tag::DegreeFrequency => "DegreeFrequency",
            Tag::Causes => "Causes",
            Tag::TreatmentRemedies => "TreatmentRemedies",
            Tag::SideEffectsInfo => "SideEffectsInfo",
            Tag::Other(label) => label,
        }
    }

    /// Any name outside the five fixed roles becomes `Other`.
    pub fn parse(name: &str) -> Tag {
        match name {
            "YesNo" => Tag::YesNo,
            "DegreeFrequency" => Tag::DegreeFrequency,
            "Causes" => Tag::Causes,
            "TreatmentRemedies" => Tag::TreatmentRemedies,
            "SideEffectsInfo" => Tag::SideEffectsInfo,
            other => Tag::Other(other.to_string()),
        }
    }

    pub fn is_valid(&self) -> bool {
        !matches!(self, Tag::Other(label) if label.trim().is_empty())
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Ok(Tag::parse(&name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flow,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnswerType {
    YesNo,
    Scale { min: i64, max: i64 },
    Choice { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionNode {
    pub id: String,
    pub text: String,
    pub tag: Tag,
    pub rank: u32,
    pub answer_type: AnswerType,
    /// answer value (as its key string) -> concept ids supporting it
    #[serde(default)]
    pub evidence: BTreeMap<String, Vec<String>>,
}

impl QuestionNode {
    pub fn domain(&self) -> Vec<AnswerValue> {
        answer_domain(self)
    }

    pub fn accepts(&self, value: &AnswerValue) -> bool {
        match (&self.answer_type, value) {
            (AnswerType::YesNo, AnswerValue::Text(s)) => s == "yes" || s == "no",
            (AnswerType::Scale { min, max }, AnswerValue::Int(v)) => min <= v && v <= max,
            (AnswerType::Choice { values }, AnswerValue::Text(s)) => values.contains(s),
            _ => false,
        }
    }

    /// Resolve a string (evidence key, terminal input) to a domain value.
    pub fn parse_answer(&self, raw: &str) -> Option<AnswerValue> {
        let raw = raw.trim();
        self.domain().into_iter().find(|v| v.key() == raw)
    }
}

/// The values a question can be answered with, in declared order.
pub fn answer_domain(node: &QuestionNode) -> Vec<AnswerValue> {
    match &node.answer_type {
        AnswerType::YesNo => vec![AnswerValue::yes(), AnswerValue::no()],
        AnswerType::Scale { min, max } => (*min..=*max).map(AnswerValue::Int).collect(),
        AnswerType::Choice { values } => values.iter().map(|v| AnswerValue::Text(v.clone())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub answer_value: AnswerValue,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binding {
    Flow { node: String, answer_value: AnswerValue },
    Flat { min_total: i64, max_total: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub label: String,
    pub description: String,
    pub binding: Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub min: i64,
    pub max: i64,
    pub outcome: String,
}

impl Threshold {
    pub fn contains(&self, total: i64) -> bool {
        self.min <= total && total <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatScoring {
    /// node id -> (answer key -> points)
    pub points: BTreeMap<String, BTreeMap<String, i64>>,
    pub thresholds: Vec<Threshold>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessKnowledgeDoc {
    pub schema: u32,
    pub id: String,
    pub title: String,
    pub mode: Mode,
    pub nodes: Vec<QuestionNode>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub scoring: Option<FlatScoring>,
    pub outcomes: Vec<Outcome>,
}

/// Where an answer leads in a flow document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition<'a> {
    Node(&'a QuestionNode),
    Outcome(&'a Outcome),
}

impl ProcessKnowledgeDoc {
    pub fn node(&self, id: &str) -> Option<&QuestionNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// First question of a session: the lowest-rank node without incoming
    /// edges (flow) or the first declared item (flat).
    pub fn root(&self) -> Option<&QuestionNode> {
        match self.mode {
            Mode::Flat => self.nodes.first(),
            Mode::Flow => {
                let targets: HashSet<&str> = self
                    .edges
                    .iter()
                    .filter(|e| e.from != e.to)
                    .map(|e| e.to.as_str())
                    .collect();
                self.nodes
                    .iter()
                    .filter(|n| !targets.contains(n.id.as_str()))
                    .min_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.id.cmp(&b.id)))
            }
        }
    }

    /// Flow step for `(node, value)`. `None` when the pair is uncovered, which
    /// a validated document rules out.
    pub fn transition(&self, node_id: &str, value: &AnswerValue) -> Option<Transition<'_>> {
        if let Some(edge) = self
            .edges
            .iter()
            .find(|e| e.from == node_id && &e.answer_value == value)
        {
            return self.node(&edge.to).map(Transition::Node);
        }
        self.outcomes
            .iter()
            .find(|o| {
                matches!(&o.binding, Binding::Flow { node, answer_value }
                    if node == node_id && answer_value == value)
            })
            .map(Transition::Outcome)
    }

    pub fn points(&self, node_id: &str, value: &AnswerValue) -> Option<i64> {
        self.scoring
            .as_ref()?
            .points
            .get(node_id)?
            .get(&value.key())
            .copied()
    }

    pub fn threshold_for(&self, total: i64) -> Option<&Threshold> {
        self.scoring
            .as_ref()?
            .thresholds
            .iter()
            .find(|t| t.contains(total))
    }

    pub fn outcome(&self, label: &str) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.label == label)
    }

    /// Achievable flat total range: (sum of per-item minima, sum of maxima).
    pub fn score_range(&self) -> Option<(i64, i64)> {
        let scoring = self.scoring.as_ref()?;
        let mut lo = 0i64;
        let mut hi = 0i64;
        for node in &self.nodes {
            let map = scoring.points.get(&node.id)?;
            let pts: Vec<i64> = node
                .domain()
                .iter()
                .map(|v| map.get(&v.key()).copied())
                .collect::<Option<_>>()?;
            lo += pts.iter().min()?;
            hi += pts.iter().max()?;
        }
        Some((lo, hi))
    }

    pub fn to_json(&self) -> String {
        crate::canonical::to_canonical_json(self).expect("document serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyField,
    DuplicateNodeId,
    InvalidRank,
    DuplicateRank,
    EmptyTagLabel,
    InvalidDomain,
    EvidenceOutsideDomain,
    AnswerOutsideDomain,
    ModeMismatch,
    SelfLoop,
    DanglingEdge,
    DanglingBinding,
    UncoveredAnswer,
    AmbiguousAnswer,
    NoRoot,
    AmbiguousRoot,
    Unreachable,
    Cycle,
    MissingScoring,
    MissingPoints,
    InvalidInterval,
    ThresholdOverlap,
    ThresholdGap,
    UnknownOutcome,
    DuplicateOutcome,
    BindingMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> Vec<ViolationKind> {
        self.violations.iter().map(|v| v.kind).collect()
    }

    fn push(&mut self, kind: ViolationKind, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.path, v.message))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Parse and validate a serialized document.
pub fn load_pk(bytes: &[u8]) -> Result<ProcessKnowledgeDoc, PkError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| PkError::Parse(e.to_string()))?;
    match raw.get("schema") {
        None => return Err(PkError::Schema("missing field `schema`".into())),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
            return Err(PkError::Schema(format!(
                "unsupported schema version {v}, expected {SCHEMA_VERSION}"
            )))
        }
        Some(_) => {}
    }
    let doc: ProcessKnowledgeDoc = serde_json::from_value(raw).map_err(|e| PkError::Schema(e.to_string()))?;
    let report = validate_pk(&doc);
    if report.is_empty() {
        Ok(doc)
    } else {
        Err(PkError::Validation(report))
    }
}

/// Every invariant violation in `doc`. Empty iff the document is valid.
pub fn validate_pk(doc: &ProcessKnowledgeDoc) -> ValidationReport {
    let mut report = ValidationReport::default();

    if doc.schema != SCHEMA_VERSION {
        report.push(
            ViolationKind::EmptyField,
            "schema",
            format!("schema must be {SCHEMA_VERSION}"),
        );
    }
    if doc.id.trim().is_empty() {
        report.push(ViolationKind::EmptyField, "id", "document id is empty");
    }

    // First occurrence of each id wins for the structural checks below.
    let mut nodes: BTreeMap<&str, &QuestionNode> = BTreeMap::new();
    for (i, node) in doc.nodes.iter().enumerate() {
        if node.id.trim().is_empty() {
            report.push(ViolationKind::EmptyField, format!("nodes[{i}]"), "node id is empty");
        }
        if nodes.insert(node.id.as_str(), node).is_some() {
            report.push(
                ViolationKind::DuplicateNodeId,
                format!("nodes[{}]", node.id),
                format!("duplicate node id {:?} at index {i}", node.id),
            );
        }
        check_node(node, &mut report);
    }
    for (i, outcome) in doc.outcomes.iter().enumerate() {
        if outcome.label.trim().is_empty() {
            report.push(ViolationKind::EmptyField, format!("outcomes[{i}]"), "outcome label is empty");
        }
    }

    match doc.mode {
        Mode::Flow => check_flow(doc, &nodes, &mut report),
        Mode::Flat => check_flat(doc, &nodes, &mut report),
    }
    report
}

fn check_node(node: &QuestionNode, report: &mut ValidationReport) {
    let path = format!("nodes[{}]", node.id);
    if node.rank == 0 {
        report.push(ViolationKind::InvalidRank, &path, "rank must be at least 1");
    }
    if !node.tag.is_valid() {
        report.push(ViolationKind::EmptyTagLabel, &path, "tag label is empty");
    }
    if node.text.trim().is_empty() {
        report.push(ViolationKind::EmptyField, &path, "question text is empty");
    }
    match &node.answer_type {
        AnswerType::Scale { min, max } if min > max => {
            report.push(ViolationKind::InvalidDomain, &path, format!("scale min {min} > max {max}"));
        }
        AnswerType::Choice { values } => {
            let distinct: BTreeSet<&String> = values.iter().collect();
            if values.is_empty() || distinct.len() != values.len() || values.iter().any(|v| v.is_empty()) {
                report.push(
                    ViolationKind::InvalidDomain,
                    &path,
                    "choice values must be non-empty and distinct",
                );
            }
        }
        _ => {}
    }
    for key in node.evidence.keys() {
        if node.parse_answer(key).is_none() {
            report.push(
                ViolationKind::EvidenceOutsideDomain,
                format!("{path}.evidence[{key}]"),
                format!("evidence key {key:?} is not an answer of {}", node.id),
            );
        }
    }
}

fn check_flow(doc: &ProcessKnowledgeDoc, nodes: &BTreeMap<&str, &QuestionNode>, report: &mut ValidationReport) {
    if doc.scoring.is_some() {
        report.push(ViolationKind::ModeMismatch, "scoring", "flow documents carry no flat scoring");
    }

    // Edges usable for graph analysis: no self-loops, both ends present.
    let mut graph: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    // (node, answer key) -> number of edges + outcome bindings
    let mut coverage: HashMap<(&str, String), usize> = HashMap::new();

    for (i, edge) in doc.edges.iter().enumerate() {
        let path = format!("edges[{i}]");
        if edge.from == edge.to {
            report.push(ViolationKind::SelfLoop, &path, format!("edge from {} to itself", edge.from));
            continue;
        }
        let from = nodes.get(edge.from.as_str());
        let to_exists = nodes.contains_key(edge.to.as_str());
        if from.is_none() || !to_exists {
            let missing = if from.is_none() { &edge.from } else { &edge.to };
            report.push(ViolationKind::DanglingEdge, &path, format!("edge references missing node {missing:?}"));
        }
        if let Some(from) = from {
            if !from.accepts(&edge.answer_value) {
                report.push(
                    ViolationKind::AnswerOutsideDomain,
                    &path,
                    format!("answer {:?} is not in the domain of {}", edge.answer_value.key(), from.id),
                );
                continue;
            }
            *coverage.entry((from.id.as_str(), edge.answer_value.key())).or_default() += 1;
            if to_exists {
                graph.entry(from.id.as_str()).or_default().push(edge.to.as_str());
            }
        }
    }

    for (i, outcome) in doc.outcomes.iter().enumerate() {
        let path = format!("outcomes[{i}]");
        match &outcome.binding {
            Binding::Flat { .. } => {
                report.push(ViolationKind::ModeMismatch, &path, "flow outcomes must bind a node and answer");
            }
            Binding::Flow { node, answer_value } => match nodes.get(node.as_str()) {
                None => report.push(
                    ViolationKind::DanglingBinding,
                    &path,
                    format!("outcome {:?} binds missing node {node:?}", outcome.label),
                ),
                Some(n) if !n.accepts(answer_value) => report.push(
                    ViolationKind::AnswerOutsideDomain,
                    &path,
                    format!("answer {:?} is not in the domain of {node}", answer_value.key()),
                ),
                Some(n) => {
                    *coverage.entry((n.id.as_str(), answer_value.key())).or_default() += 1;
                }
            },
        }
    }

    for node in nodes.values() {
        for value in node.domain() {
            let key = value.key();
            match coverage.get(&(node.id.as_str(), key.clone())).copied().unwrap_or(0) {
                0 => report.push(
                    ViolationKind::UncoveredAnswer,
                    format!("nodes[{}]", node.id),
                    format!("answer {key:?} of {} has no edge or outcome", node.id),
                ),
                1 => {}
                n => report.push(
                    ViolationKind::AmbiguousAnswer,
                    format!("nodes[{}]", node.id),
                    format!("answer {key:?} of {} has {n} successors", node.id),
                ),
            }
        }
    }

    // Roots and reachability.
    let targets: HashSet<&str> = graph.values().flatten().copied().collect();
    let mut roots: Vec<&QuestionNode> = nodes
        .values()
        .filter(|n| !targets.contains(n.id.as_str()))
        .copied()
        .collect();
    roots.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.id.cmp(&b.id)));

    let root = match roots.as_slice() {
        [] if !nodes.is_empty() => {
            report.push(ViolationKind::NoRoot, "nodes", "every question has an incoming edge");
            None
        }
        [] => None,
        [first, second, ..] if first.rank == second.rank => {
            report.push(
                ViolationKind::AmbiguousRoot,
                "nodes",
                format!("root candidates {} and {} share rank {}", first.id, second.id, first.rank),
            );
            None
        }
        [first, ..] => Some(first.id.as_str()),
    };

    if let Some(root) = root {
        let mut seen: HashSet<&str> = HashSet::from([root]);
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            for &next in graph.get(id).map(Vec::as_slice).unwrap_or_default() {
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        for id in nodes.keys() {
            if !seen.contains(id) {
                report.push(
                    ViolationKind::Unreachable,
                    format!("nodes[{id}]"),
                    format!("{id} is not reachable from root {root}"),
                );
            }
        }
    }

    for cycle in find_cycles(&graph) {
        report.push(
            ViolationKind::Cycle,
            format!("nodes[{}]", cycle[0]),
            format!("cycle {}", cycle.join(" -> ")),
        );
    }
}

/// One cycle per DFS back edge, each listed from its entry node and closed.
fn find_cycles<'a>(graph: &BTreeMap<&'a str, Vec<&'a str>>) -> Vec<Vec<&'a str>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }

    let mut color: BTreeMap<&str, Color> = BTreeMap::new();
    for (from, tos) in graph {
        color.insert(from, Color::White);
        for to in tos {
            color.insert(to, Color::White);
        }
    }

    let mut cycles = Vec::new();
    let starts: Vec<&str> = color.keys().copied().collect();
    for start in starts {
        if color[start] != Color::White {
            continue;
        }
        // (node, index of next child to visit)
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        color.insert(start, Color::Grey);
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            let children = graph.get(node).map(Vec::as_slice).unwrap_or_default();
            if *idx < children.len() {
                let child = children[*idx];
                *idx += 1;
                match color[child] {
                    Color::White => {
                        color.insert(child, Color::Grey);
                        stack.push((child, 0));
                    }
                    Color::Grey => {
                        let pos = stack.iter().position(|(n, _)| *n == child).unwrap_or(0);
                        let mut cycle: Vec<&str> = stack[pos..].iter().map(|(n, _)| *n).collect();
                        cycle.push(child);
                        cycles.push(cycle);
                    }
                    Color::Black => {}
                }
            } else {
                color.insert(node, Color::Black);
                stack.pop();
            }
        }
    }
    cycles
}

fn check_flat(doc: &ProcessKnowledgeDoc, nodes: &BTreeMap<&str, &QuestionNode>, report: &mut ValidationReport) {
    if !doc.edges.is_empty() {
        report.push(ViolationKind::ModeMismatch, "edges", "flat documents have no edges");
    }

    // All flat items share one slot, so ranks must be distinct.
    let mut ranks: BTreeMap<u32, &str> = BTreeMap::new();
    for node in nodes.values() {
        if let Some(other) = ranks.insert(node.rank, node.id.as_str()) {
            report.push(
                ViolationKind::DuplicateRank,
                format!("nodes[{}]", node.id),
                format!("rank {} already used by {other}", node.rank),
            );
        }
    }

    let mut labels: BTreeMap<&str, &Outcome> = BTreeMap::new();
    for (i, outcome) in doc.outcomes.iter().enumerate() {
        let path = format!("outcomes[{i}]");
        match &outcome.binding {
            Binding::Flow { .. } => {
                report.push(ViolationKind::ModeMismatch, &path, "flat outcomes must bind a score interval");
            }
            Binding::Flat { min_total, max_total } if min_total > max_total => {
                report.push(
                    ViolationKind::InvalidInterval,
                    &path,
                    format!("interval [{min_total}, {max_total}] is empty"),
                );
            }
            Binding::Flat { .. } => {}
        }
        if labels.insert(outcome.label.as_str(), outcome).is_some() {
            report.push(
                ViolationKind::DuplicateOutcome,
                &path,
                format!("outcome label {:?} is used twice", outcome.label),
            );
        }
    }

    let Some(scoring) = &doc.scoring else {
        report.push(ViolationKind::MissingScoring, "scoring", "flat documents need point mappings and thresholds");
        return;
    };

    for node in nodes.values() {
        let path = format!("scoring.points[{}]", node.id);
        let Some(map) = scoring.points.get(&node.id) else {
            report.push(ViolationKind::MissingPoints, &path, format!("no point mapping for {}", node.id));
            continue;
        };
        let missing: Vec<String> = node
            .domain()
            .iter()
            .map(AnswerValue::key)
            .filter(|k| !map.contains_key(k))
            .collect();
        if !missing.is_empty() {
            report.push(
                ViolationKind::MissingPoints,
                &path,
                format!("answers {missing:?} of {} have no points", node.id),
            );
        }
        for key in map.keys() {
            if node.parse_answer(key).is_none() {
                report.push(
                    ViolationKind::AnswerOutsideDomain,
                    format!("{path}[{key}]"),
                    format!("answer {key:?} is not in the domain of {}", node.id),
                );
            }
        }
    }
    for id in scoring.points.keys() {
        if !nodes.contains_key(id.as_str()) {
            report.push(
                ViolationKind::DanglingBinding,
                format!("scoring.points[{id}]"),
                format!("points given for missing node {id:?}"),
            );
        }
    }

    let mut prev: Option<&Threshold> = None;
    for (i, t) in scoring.thresholds.iter().enumerate() {
        let path = format!("scoring.thresholds[{i}]");
        if t.min > t.max {
            report.push(
                ViolationKind::InvalidInterval,
                &path,
                format!("interval [{}, {}] is empty", t.min, t.max),
            );
        }
        match labels.get(t.outcome.as_str()) {
            None => report.push(
                ViolationKind::UnknownOutcome,
                &path,
                format!("threshold names unknown outcome {:?}", t.outcome),
            ),
            Some(o) => {
                if let Binding::Flat { min_total, max_total } = o.binding {
                    if (min_total, max_total) != (t.min, t.max) {
                        report.push(
                            ViolationKind::BindingMismatch,
                            &path,
                            format!(
                                "threshold [{}, {}] disagrees with outcome {:?} binding [{min_total}, {max_total}]",
                                t.min, t.max, t.outcome
                            ),
                        );
                    }
                }
            }
        }
        if let Some(p) = prev {
            if t.min <= p.max {
                report.push(
                    ViolationKind::ThresholdOverlap,
                    &path,
                    format!("interval [{}, {}] is not above the previous [{}, {}]", t.min, t.max, p.min, p.max),
                );
            }
        }
        prev = Some(t);
    }

    if let Some((lo, hi)) = doc.score_range() {
        for (start, end) in uncovered(lo, hi, &scoring.thresholds) {
            let message = if start == end {
                format!("score {start} uncovered")
            } else {
                format!("scores {start}..{end} uncovered")
            };
            report.push(ViolationKind::ThresholdGap, "scoring.thresholds", message);
        }
    }
}

/// Maximal integer runs in [lo, hi] that no threshold contains.
fn uncovered(lo: i64, hi: i64, thresholds: &[Threshold]) -> Vec<(i64, i64)> {
    let mut intervals: Vec<(i64, i64)> = thresholds
        .iter()
        .filter(|t| t.min <= t.max)
        .map(|t| (t.min, t.max))
        .collect();
    intervals.sort();
    let mut gaps = Vec::new();
    let mut next = lo;
    for (min, max) in intervals {
        if next > hi {
            break;
        }
        if min > next {
            gaps.push((next, (min - 1).min(hi)));
        }
        next = next.max(max.saturating_add(1));
    }
    if next <= hi {
        gaps.push((next, hi));
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yes_no(id: &str, rank: u32) -> QuestionNode {
        QuestionNode {
            id: id.into(),
            text: format!("question {id}?"),
            tag: Tag::YesNo,
            rank,
            answer_type: AnswerType::YesNo,
            evidence: BTreeMap::new(),
        }
    }

    fn flow_outcome(label: &str, node: &str, value: &str) -> Outcome {
        Outcome {
            label: label.into(),
            description: String::new(),
            binding: Binding::Flow {
                node: node.into(),
                answer_value: value.into(),
            },
        }
    }

    fn two_node_flow() -> ProcessKnowledgeDoc {
        ProcessKnowledgeDoc {
            schema: 1,
            id: "t".into(),
            title: "two".into(),
            mode: Mode::Flow,
            nodes: vec![yes_no("Q1", 1), yes_no("Q2", 1)],
            edges: vec![Edge {
                from: "Q1".into(),
                answer_value: "yes".into(),
                to: "Q2".into(),
            }],
            scoring: None,
            outcomes: vec![
                flow_outcome("none", "Q1", "no"),
                flow_outcome("low", "Q2", "no"),
                flow_outcome("high", "Q2", "yes"),
            ],
        }
    }

    fn scale(id: &str, rank: u32) -> QuestionNode {
        QuestionNode {
            answer_type: AnswerType::Scale { min: 0, max: 3 },
            tag: Tag::DegreeFrequency,
            ..yes_no(id, rank)
        }
    }

    fn flat_doc(top: i64) -> ProcessKnowledgeDoc {
        let points: BTreeMap<String, i64> = (0..=3).map(|v| (v.to_string(), v)).collect();
        let bands = [(0, 2, "minimal"), (3, 5, "mild"), (6, top, "moderate")];
        ProcessKnowledgeDoc {
            schema: 1,
            id: "flat".into(),
            title: "flat".into(),
            mode: Mode::Flat,
            nodes: vec![scale("I1", 1), scale("I2", 2), scale("I3", 3)],
            edges: vec![],
            scoring: Some(FlatScoring {
                points: ["I1", "I2", "I3"].iter().map(|id| (id.to_string(), points.clone())).collect(),
                thresholds: bands
                    .iter()
                    .map(|&(min, max, label)| Threshold {
                        min,
                        max,
                        outcome: label.into(),
                    })
                    .collect(),
            }),
            outcomes: bands
                .iter()
                .map(|&(min, max, label)| Outcome {
                    label: label.into(),
                    description: String::new(),
                    binding: Binding::Flat {
                        min_total: min,
                        max_total: max,
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn domains() {
        assert_eq!(answer_domain(&yes_no("a", 1)), vec![AnswerValue::yes(), AnswerValue::no()]);
        assert_eq!(
            answer_domain(&scale("a", 1)),
            (0..=3).map(AnswerValue::Int).collect::<Vec<_>>()
        );
        let meal = QuestionNode {
            answer_type: AnswerType::Choice {
                values: vec!["breakfast".into(), "lunch".into(), "dinner".into()],
            },
            ..yes_no("m", 1)
        };
        assert_eq!(
            answer_domain(&meal),
            vec!["breakfast".into(), "lunch".into(), "dinner".into()] as Vec<AnswerValue>
        );
    }

    #[test]
    fn valid_flow_has_empty_report() {
        let doc = two_node_flow();
        assert!(validate_pk(&doc).is_empty(), "{}", validate_pk(&doc));
        assert_eq!(doc.root().unwrap().id, "Q1");
    }

    #[test]
    fn flat_coverage() {
        assert!(validate_pk(&flat_doc(9)).is_empty());
        let report = validate_pk(&flat_doc(8));
        assert_eq!(report.kinds(), vec![ViolationKind::ThresholdGap]);
        assert_eq!(report.violations[0].message, "score 9 uncovered");
    }

    #[test]
    fn duplicate_node_id_reported_once() {
        let mut doc = flat_doc(9);
        doc.nodes[2].id = "I2".into();
        doc.nodes[2].rank = 3;
        doc.scoring.as_mut().unwrap().points.remove("I3");
        let report = validate_pk(&doc);
        assert_eq!(report.kinds(), vec![ViolationKind::DuplicateNodeId], "{report}");
    }

    #[test]
    fn missing_no_branch_is_uncovered() {
        let mut doc = two_node_flow();
        doc.outcomes.retain(|o| o.label != "low");
        let report = validate_pk(&doc);
        assert_eq!(report.kinds(), vec![ViolationKind::UncoveredAnswer]);
        assert_eq!(report.violations[0].path, "nodes[Q2]");
    }

    #[test]
    fn uncovered_gaps() {
        let t = |min, max| Threshold {
            min,
            max,
            outcome: String::new(),
        };
        assert_eq!(uncovered(0, 9, &[t(0, 2), t(6, 8)]), vec![(3, 5), (9, 9)]);
        assert!(uncovered(0, 9, &[t(-5, 20)]).is_empty());
    }

    #[test]
    fn schema_version_is_required() {
        let mut value: serde_json::Value = serde_json::from_str(&two_node_flow().to_json()).unwrap();
        value.as_object_mut().unwrap().remove("schema");
        let err = load_pk(value.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, PkError::Schema(_)));
        value["schema"] = 2.into();
        assert!(matches!(load_pk(value.to_string().as_bytes()), Err(PkError::Schema(_))));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(load_pk(b"{\"schema\": 1,"), Err(PkError::Parse(_))));
    }

    #[test]
    fn tag_round_trip() {
        for tag in [Tag::YesNo, Tag::SideEffectsInfo, Tag::Other("Preference".into())] {
            let json = serde_json::to_string(&tag).unwrap();
            assert_eq!(serde_json::from_str::<Tag>(&json).unwrap(), tag);
        }
        assert!(!Tag::Other(" ".into()).is_valid());
    }
}
