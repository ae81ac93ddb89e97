//! In-memory weighted property graph of job titles, openings, associates,
//! skills and job families.
//!
//! The graph is immutable once loaded; every query borrows it read-only, so a
//! single `Arc<KnowledgeGraph>` can be shared by all tool invocations.

mod path;
mod record;
mod template;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use path::Path;
pub use record::{EdgeRecord, NodeRecord, Record};
pub use template::{Bindings, QueryTemplate, Row, TemplateRegistry};

/// Opaque node identifier, unique within a graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    JobTitle,
    Opening,
    Associate,
    Skill,
    JobFamily,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Relation {
    TransitionsTo,
    HasOpening,
    RequiresSkill,
    HasSkill,
    InFamily,
}

/// Scalar property value. Dates are ISO-8601 strings and compare lexically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub label: Label,
    pub properties: BTreeMap<String, Value>,
}

impl Node {
    pub fn prop(&self, key: &str) -> Option<&Value> {
        self.properties.get(key)
    }

    pub fn str_prop(&self, key: &str) -> Option<&str> {
        self.prop(key).and_then(Value::as_str)
    }

    pub fn int_prop(&self, key: &str) -> Option<i64> {
        self.prop(key).and_then(Value::as_i64)
    }

    pub fn bool_prop(&self, key: &str) -> Option<bool> {
        self.prop(key).and_then(Value::as_bool)
    }

    /// Human-readable name: `title` for job titles, `name` otherwise, falling
    /// back to the id.
    pub fn display_name(&self) -> &str {
        self.str_prop("title")
            .or_else(|| self.str_prop("name"))
            .unwrap_or(self.id.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    /// Transition cost for `TRANSITIONS_TO` (lower = more common), 1.0 otherwise.
    pub weight: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("edge {src} -> {dst} references a missing node")]
    DanglingEdge { src: NodeId, dst: NodeId },
    #[error("duplicate edge {src} -[{relation:?}]-> {dst}")]
    DuplicateEdge {
        src: NodeId,
        dst: NodeId,
        relation: Relation,
    },
    #[error("edge {src} -> {dst} has invalid weight {weight}")]
    InvalidWeight { src: NodeId, dst: NodeId, weight: f64 },
    #[error("node `{0}` uses reserved property key `{1}`")]
    ReservedProperty(NodeId, String),
    #[error("node `{0}` not found")]
    NodeNotFound(String),
    #[error("node `{id}` has label {found:?}, expected {expected:?}")]
    WrongLabel { id: NodeId, expected: Label, found: Label },
    #[error("no path from {src} to {dst}")]
    NoPath { src: NodeId, dst: NodeId },
    #[error("template `{0}` not found")]
    TemplateNotFound(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("invalid template `{0}`: {1}")]
    InvalidTemplate(String, String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Immutable property graph with forward and reverse adjacency indexes.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl KnowledgeGraph {
    /// Builds a graph from node and edge records, in any interleaving.
    /// Edges may reference nodes that appear later in the sequence.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = Record>,
    {
        let mut graph = KnowledgeGraph::default();
        let mut pending = Vec::new();
        for record in records {
            match record {
                Record::Node(n) => graph.push_node(n)?,
                Record::Edge(e) => pending.push(e),
            }
        }
        let mut seen = HashSet::with_capacity(pending.len());
        for e in pending {
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(GraphError::InvalidWeight {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                });
            }
            let (Some(&s), Some(&d)) = (graph.index.get(&e.src), graph.index.get(&e.dst)) else {
                return Err(GraphError::DanglingEdge { src: e.src, dst: e.dst });
            };
            if !seen.insert((s, d, e.relation)) {
                return Err(GraphError::DuplicateEdge {
                    src: e.src,
                    dst: e.dst,
                    relation: e.relation,
                });
            }
            let idx = graph.edges.len();
            graph.edges.push(Edge {
                src: e.src,
                dst: e.dst,
                relation: e.relation,
                weight: e.weight,
            });
            graph.outgoing[s].push(idx);
            graph.incoming[d].push(idx);
        }
        Ok(graph)
    }

    fn push_node(&mut self, n: NodeRecord) -> Result<()> {
        if let Some(key) = n
            .properties
            .keys()
            .find(|k| record::RESERVED_KEYS.contains(&k.as_str()))
        {
            return Err(GraphError::ReservedProperty(n.id, key.clone()));
        }
        if self.index.contains_key(&n.id) {
            return Err(GraphError::DuplicateNode(n.id));
        }
        self.index.insert(n.id.clone(), self.nodes.len());
        self.nodes.push(Node {
            id: n.id,
            label: n.label,
            properties: n.properties,
        });
        self.outgoing.push(Vec::new());
        self.incoming.push(Vec::new());
        Ok(())
    }

    /// Reads line-delimited JSON records. Blank lines are skipped.
    pub fn load_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    /// Nodes first (in load order), then edges (in load order).
    pub fn to_records(&self) -> Vec<Record> {
        let nodes = self.nodes.iter().map(|n| {
            Record::Node(NodeRecord {
                id: n.id.clone(),
                label: n.label,
                properties: n.properties.clone(),
            })
        });
        let edges = self.edges.iter().map(|e| {
            Record::Edge(EdgeRecord {
                src: e.src.clone(),
                dst: e.dst.clone(),
                relation: e.relation,
                weight: e.weight,
            })
        });
        nodes.chain(edges).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in self.to_records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn nodes_with_label(&self, label: Label) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.label == label)
    }

    fn require(&self, id: &str) -> Result<(usize, &Node)> {
        self.index
            .get(id)
            .map(|&i| (i, &self.nodes[i]))
            .ok_or_else(|| GraphError::NodeNotFound(id.to_string()))
    }

    fn require_label(&self, id: &str, label: Label) -> Result<(usize, &Node)> {
        let (i, n) = self.require(id)?;
        if n.label != label {
            return Err(GraphError::WrongLabel {
                id: n.id.clone(),
                expected: label,
                found: n.label,
            });
        }
        Ok((i, n))
    }

    /// Outgoing edges of `id` with the given relation, in load order.
    pub fn out_edges<'a>(&'a self, id: &str, relation: Relation) -> impl Iterator<Item = &'a Edge> + 'a {
        let slots: &[usize] = match self.index.get(id) {
            Some(&i) => &self.outgoing[i],
            None => &[],
        };
        slots
            .iter()
            .map(move |&e| &self.edges[e])
            .filter(move |e| e.relation == relation)
    }

    /// Incoming edges of `id` with the given relation, in load order.
    pub fn in_edges<'a>(&'a self, id: &str, relation: Relation) -> impl Iterator<Item = &'a Edge> + 'a {
        let slots: &[usize] = match self.index.get(id) {
            Some(&i) => &self.incoming[i],
            None => &[],
        };
        slots
            .iter()
            .map(move |&e| &self.edges[e])
            .filter(move |e| e.relation == relation)
    }

    /// Job titles one `TRANSITIONS_TO` hop away, cheapest transition first,
    /// ties by id.
    pub fn adjacent_titles(&self, title: &str) -> Result<Vec<NodeId>> {
        self.require_label(title, Label::JobTitle)?;
        let mut hops: Vec<(&Edge, &NodeId)> = self
            .out_edges(title, Relation::TransitionsTo)
            .filter(|e| self.node(e.dst.as_str()).is_some_and(|n| n.label == Label::JobTitle))
            .map(|e| (e, &e.dst))
            .collect();
        hops.sort_by(|a, b| a.0.weight.total_cmp(&b.0.weight).then_with(|| a.1.cmp(b.1)));
        Ok(hops.into_iter().map(|(_, id)| id.clone()).collect())
    }

    /// Openings attached to `title`, most recent posting first (ties by id).
    pub fn openings_for_title(&self, title: &str, active_only: bool, limit: usize) -> Result<Vec<&Node>> {
        self.require_label(title, Label::JobTitle)?;
        let mut openings: Vec<&Node> = self
            .out_edges(title, Relation::HasOpening)
            .filter_map(|e| self.node(e.dst.as_str()))
            .filter(|n| n.label == Label::Opening)
            .filter(|n| !active_only || n.bool_prop("active").unwrap_or(false))
            .collect();
        openings.sort_by(|a, b| {
            let da = a.str_prop("posting_date").unwrap_or("");
            let db = b.str_prop("posting_date").unwrap_or("");
            db.cmp(da).then_with(|| a.id.cmp(&b.id))
        });
        openings.truncate(limit);
        Ok(openings)
    }

    /// The job title that owns an opening (source of its `HAS_OPENING` edge).
    pub fn title_of_opening(&self, opening: &str) -> Option<&NodeId> {
        self.in_edges(opening, Relation::HasOpening).map(|e| &e.src).min()
    }

    /// Skill names required by a title or opening. Openings without their own
    /// `REQUIRES_SKILL` edges inherit the requirements of their title.
    pub fn required_skills(&self, id: &str) -> BTreeSet<String> {
        let own = self.skill_names(self.out_edges(id, Relation::RequiresSkill));
        if !own.is_empty() {
            return own;
        }
        match self.node(id) {
            Some(n) if n.label == Label::Opening => match self.title_of_opening(id) {
                Some(t) => self.skill_names(self.out_edges(t.as_str(), Relation::RequiresSkill)),
                None => own,
            },
            _ => own,
        }
    }

    /// Skill names held by an associate via `HAS_SKILL`.
    pub fn held_skills(&self, associate: &str) -> BTreeSet<String> {
        self.skill_names(self.out_edges(associate, Relation::HasSkill))
    }

    fn skill_names<'a>(&'a self, edges: impl Iterator<Item = &'a Edge>) -> BTreeSet<String> {
        edges
            .filter_map(|e| self.node(e.dst.as_str()))
            .filter(|n| n.label == Label::Skill)
            .map(|n| skill_key(n.display_name()))
            .collect()
    }

    /// Job family of a title or opening: the `job_family` property, else the
    /// name of the `IN_FAMILY` target.
    pub fn family_of(&self, id: &str) -> Option<String> {
        let node = self.node(id)?;
        if let Some(f) = node.str_prop("job_family") {
            return Some(f.to_string());
        }
        self.out_edges(id, Relation::InFamily)
            .filter_map(|e| self.node(e.dst.as_str()))
            .map(|n| n.display_name().to_string())
            .min()
    }

    /// Resolves a job title by node id, `title` property or one of the
    /// `|`-separated `aliases`, case-insensitively.
    pub fn resolve_title(&self, name: &str) -> Result<NodeId> {
        if let Some(n) = self.node(name) {
            if n.label == Label::JobTitle {
                return Ok(n.id.clone());
            }
        }
        let wanted = normalize_name(name);
        self.nodes_with_label(Label::JobTitle)
            .find(|n| {
                normalize_name(n.display_name()) == wanted
                    || n.str_prop("aliases")
                        .is_some_and(|a| a.split('|').any(|alias| normalize_name(alias) == wanted))
            })
            .map(|n| n.id.clone())
            .ok_or_else(|| GraphError::NodeNotFound(name.to_string()))
    }

    pub fn weighted_shortest_path(&self, src: &str, dst: &str) -> Result<Path> {
        path::shortest(self, src, dst)
    }
}

/// Canonical form for skill names: lowercase, trimmed.
pub fn skill_key(name: &str) -> String {
    name.trim().to_lowercase()
}

fn normalize_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn title(id: &str) -> Record {
        Record::node(id, Label::JobTitle, [("title", Value::from(id))])
    }

    fn opening(id: &str, date: &str, active: bool) -> Record {
        Record::node(
            id,
            Label::Opening,
            [
                ("posting_date", Value::from(date)),
                ("active", Value::from(active)),
                ("city", Value::from("Seattle")),
                ("job_family", Value::from("Tech")),
            ],
        )
    }

    #[test]
    fn empty_records_give_empty_graph() {
        let g = KnowledgeGraph::from_records(Vec::new()).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (0, 0));
    }

    #[test]
    fn dangling_edge_rejected() {
        let recs = vec![
            title("A"),
            title("B"),
            Record::edge("A", "X", Relation::TransitionsTo, 1.0),
        ];
        assert!(matches!(
            KnowledgeGraph::from_records(recs),
            Err(GraphError::DanglingEdge { .. })
        ));
    }

    #[test]
    fn duplicate_node_and_edge_rejected() {
        let recs = vec![title("A"), title("A")];
        assert!(matches!(
            KnowledgeGraph::from_records(recs),
            Err(GraphError::DuplicateNode(_))
        ));
        let recs = vec![
            title("A"),
            title("B"),
            Record::edge("A", "B", Relation::TransitionsTo, 1.0),
            Record::edge("A", "B", Relation::TransitionsTo, 2.0),
        ];
        assert!(matches!(
            KnowledgeGraph::from_records(recs),
            Err(GraphError::DuplicateEdge { .. })
        ));
    }

    #[test]
    fn negative_weight_rejected() {
        let recs = vec![
            title("A"),
            title("B"),
            Record::edge("A", "B", Relation::TransitionsTo, -1.0),
        ];
        assert!(matches!(
            KnowledgeGraph::from_records(recs),
            Err(GraphError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn adjacency_matches_naive_scan() {
        let recs = vec![
            title("A"),
            title("B"),
            title("C"),
            Record::edge("A", "B", Relation::TransitionsTo, 1.0),
            Record::edge("B", "C", Relation::TransitionsTo, 1.0),
        ];
        let g = KnowledgeGraph::from_records(recs).unwrap();
        for n in g.nodes() {
            let indexed: Vec<_> = g.out_edges(n.id.as_str(), Relation::TransitionsTo).cloned().collect();
            let naive: Vec<_> = g.edges().iter().filter(|e| e.src == n.id).cloned().collect();
            assert_eq!(indexed, naive);
        }
        assert_eq!(g.adjacent_titles("A").unwrap(), vec![NodeId::from("B")]);
        assert_eq!(g.adjacent_titles("B").unwrap(), vec![NodeId::from("C")]);
        assert!(g.adjacent_titles("C").unwrap().is_empty());
    }

    #[test]
    fn adjacent_titles_sorted_by_weight() {
        let recs = vec![
            title("A"),
            title("B"),
            title("C"),
            Record::edge("A", "B", Relation::TransitionsTo, 1.0),
            Record::edge("A", "C", Relation::TransitionsTo, 0.5),
        ];
        let g = KnowledgeGraph::from_records(recs).unwrap();
        assert_eq!(
            g.adjacent_titles("A").unwrap(),
            vec![NodeId::from("C"), NodeId::from("B")]
        );
        assert_eq!(g.adjacent_titles("X"), Err(GraphError::NodeNotFound("X".into())));
    }

    #[test]
    fn adjacent_titles_wrong_label() {
        let recs = vec![opening("o1", "2024-01-01", true)];
        let g = KnowledgeGraph::from_records(recs).unwrap();
        assert!(matches!(g.adjacent_titles("o1"), Err(GraphError::WrongLabel { .. })));
    }

    #[test]
    fn openings_sorted_and_filtered() {
        let recs = vec![
            title("T"),
            title("U"),
            opening("o1", "2024-01-01", true),
            opening("o2", "2024-02-01", false),
            opening("o3", "2024-03-01", true),
            Record::edge("T", "o1", Relation::HasOpening, 1.0),
            Record::edge("T", "o2", Relation::HasOpening, 1.0),
            Record::edge("T", "o3", Relation::HasOpening, 1.0),
        ];
        let g = KnowledgeGraph::from_records(recs).unwrap();
        let ids = |v: Vec<&Node>| v.into_iter().map(|n| n.id.to_string()).collect::<Vec<_>>();
        assert_eq!(ids(g.openings_for_title("T", false, 2).unwrap()), ["o3", "o2"]);
        assert_eq!(ids(g.openings_for_title("T", true, 10).unwrap()), ["o3", "o1"]);
        assert!(g.openings_for_title("U", false, 10).unwrap().is_empty());
        assert!(matches!(
            g.openings_for_title("Z", false, 1),
            Err(GraphError::NodeNotFound(_))
        ));
    }

    #[test]
    fn resolve_title_by_alias() {
        let recs = vec![Record::node(
            "t:mle",
            Label::JobTitle,
            [
                ("title", Value::from("Machine Learning Engineer")),
                ("aliases", Value::from("ML Engineer|MLE")),
            ],
        )];
        let g = KnowledgeGraph::from_records(recs).unwrap();
        assert_eq!(g.resolve_title("ml engineer").unwrap().as_str(), "t:mle");
        assert_eq!(g.resolve_title("machine  learning engineer").unwrap().as_str(), "t:mle");
        assert_eq!(g.resolve_title("t:mle").unwrap().as_str(), "t:mle");
        assert!(g.resolve_title("chef").is_err());
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let recs = vec![
            title("A"),
            opening("o1", "2024-01-01", true),
            Record::node(
                "s",
                Label::Skill,
                [
                    ("name", Value::from("rust")),
                    ("level", Value::Int(3)),
                    ("w", Value::Float(0.5)),
                ],
            ),
            Record::edge("A", "o1", Relation::HasOpening, 1.0),
        ];
        let mut text = Vec::new();
        for r in &recs {
            serde_json::to_writer(&mut text, r).unwrap();
            text.push(b'\n');
        }
        let g = KnowledgeGraph::load_jsonl(&text[..]).unwrap();
        let mut out = Vec::new();
        g.write_jsonl(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), String::from_utf8(text).unwrap());
    }
}
