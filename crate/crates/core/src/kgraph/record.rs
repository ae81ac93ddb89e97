use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Label, NodeId, Relation, Value};

/// Keys a node's flattened property map may not use.
pub(super) const RESERVED_KEYS: &[&str] = &["kind", "id", "label"];

/// One line of the graph load format: a flat JSON object whose `kind` field
/// selects between node and edge records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Node(NodeRecord),
    Edge(EdgeRecord),
}

/// Node record; every key other than `kind`, `id` and `label` is a property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub label: Label,
    #[serde(flatten)]
    pub properties: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Record {
    pub fn node<K, P>(id: &str, label: Label, props: P) -> Record
    where
        K: Into<String>,
        P: IntoIterator<Item = (K, Value)>,
    {
        Record::Node(NodeRecord {
            id: NodeId::from(id),
            label,
            properties: props.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        })
    }

    pub fn edge(src: &str, dst: &str, relation: Relation, weight: f64) -> Record {
        Record::Edge(EdgeRecord {
            src: NodeId::from(src),
            dst: NodeId::from(dst),
            relation,
            weight,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_wire_shape() {
        let r = Record::node("t1", Label::JobTitle, [("title", Value::from("Cashier"))]);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"kind":"node","id":"t1","label":"JobTitle","title":"Cashier"}"#
        );
        let e: Record =
            serde_json::from_str(r#"{"kind":"edge","src":"a","dst":"b","relation":"HAS_OPENING"}"#).unwrap();
        assert_eq!(e, Record::edge("a", "b", Relation::HasOpening, 1.0));
    }

    #[test]
    fn scalar_types_survive() {
        let line = r#"{"kind":"node","id":"o","label":"Opening","active":true,"education":2,"score":0.25,"posting_date":"2024-05-01"}"#;
        let r: Record = serde_json::from_str(line).unwrap();
        let Record::Node(n) = &r else { panic!() };
        assert_eq!(n.properties["active"], Value::Bool(true));
        assert_eq!(n.properties["education"], Value::Int(2));
        assert_eq!(n.properties["score"], Value::Float(0.25));
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            line.replace(
                r#""active":true,"education":2,"score":0.25,"posting_date":"2024-05-01""#,
                r#""active":true,"education":2,"posting_date":"2024-05-01","score":0.25"#,
            )
        );
    }
}
