use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{InterestState, ScoringWeights, ToolError};
use crate::agent::UserProfile;
use crate::kgraph::{skill_key, GraphError, KnowledgeGraph, Label, NodeId, Relation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub to: NodeId,
    pub weight: f64,
    /// Required skills of `to` the user does not hold.
    pub gap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CareerPath {
    pub titles: Vec<NodeId>,
    pub hops: Vec<Hop>,
    /// Total transition cost for destination paths; product of hop
    /// desirabilities for growth paths.
    pub score: f64,
}

impl CareerPath {
    pub fn first_hop(&self) -> Option<&NodeId> {
        self.titles.get(1)
    }

    /// `A → B → C` using display names.
    pub fn render(&self, graph: &KnowledgeGraph) -> String {
        self.titles
            .iter()
            .map(|t| graph.node(t.as_str()).map_or(t.as_str(), |n| n.display_name()))
            .collect::<Vec<_>>()
            .join(" → ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub n_paths: usize,
    pub depth: usize,
    pub beam_width: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            n_paths: 3,
            depth: 3,
            beam_width: 8,
        }
    }
}

fn held(profile: &UserProfile) -> BTreeSet<String> {
    profile.skills.iter().map(|s| skill_key(s)).collect()
}

fn gap_size(graph: &KnowledgeGraph, held: &BTreeSet<String>, title: &str) -> usize {
    graph.required_skills(title).difference(held).count()
}

/// Cheapest transition path from the profile's current title.
pub fn career_path_to(
    profile: &UserProfile,
    destination: &str,
    graph: &KnowledgeGraph,
) -> Result<CareerPath, ToolError> {
    let path = graph
        .weighted_shortest_path(&profile.current_title, destination)
        .map_err(|e| match e {
            GraphError::NoPath { src, dst } => ToolError::UnreachableDestination { from: src, to: dst },
            other => ToolError::Graph(other),
        })?;
    let held = held(profile);
    let hops = path
        .nodes
        .windows(2)
        .map(|pair| {
            let weight = graph
                .out_edges(pair[0].as_str(), Relation::TransitionsTo)
                .find(|e| e.dst == pair[1])
                .map_or(0.0, |e| e.weight);
            Hop {
                to: pair[1].clone(),
                weight,
                gap: gap_size(graph, &held, pair[1].as_str()),
            }
        })
        .collect();
    Ok(CareerPath {
        titles: path.nodes,
        hops,
        score: path.total_weight,
    })
}

/// Desirability of moving to `to` over an edge of weight `w`.
pub fn hop_desirability(
    graph: &KnowledgeGraph,
    held: &BTreeSet<String>,
    interest: &InterestState,
    weights: &ScoringWeights,
    to: &str,
    w: f64,
) -> f64 {
    let required = graph.required_skills(to);
    let overlap = if required.is_empty() {
        1.0
    } else {
        required.intersection(held).count() as f64 / required.len() as f64
    };
    let affinity = graph
        .family_of(to)
        .map_or(0.0, |f| interest.affinity(&f, weights.gamma));
    (1.0 / (1.0 + w)) * (0.5 + 0.5 * overlap) * (1.0 + weights.beta * affinity).max(0.0)
}

fn by_score_then_titles(a: &CareerPath, b: &CareerPath) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.titles.cmp(&b.titles))
}

/// Beam search over transitions from the current title. Paths end at depth
/// `depth` or at a dead end; the best path per distinct first hop is kept.
pub fn career_growth(
    profile: &UserProfile,
    interest: &InterestState,
    graph: &KnowledgeGraph,
    weights: &ScoringWeights,
    config: &GrowthConfig,
) -> Result<Vec<CareerPath>, ToolError> {
    let start = &profile.current_title;
    let node = graph
        .node(start)
        .ok_or_else(|| GraphError::NodeNotFound(start.clone()))?;
    if node.label != Label::JobTitle {
        return Err(GraphError::WrongLabel {
            id: node.id.clone(),
            expected: Label::JobTitle,
            found: node.label,
        }
        .into());
    }
    let held = held(profile);
    let mut beam = vec![CareerPath {
        titles: vec![node.id.clone()],
        hops: vec![],
        score: 1.0,
    }];
    let mut finished = Vec::new();
    for _ in 0..config.depth.max(1) {
        let mut next = Vec::new();
        for path in &beam {
            let last = path.titles.last().expect("paths are non-empty");
            let mut extended = false;
            for e in graph.out_edges(last.as_str(), Relation::TransitionsTo) {
                let is_title = graph.node(e.dst.as_str()).is_some_and(|n| n.label == Label::JobTitle);
                if !is_title || path.titles.contains(&e.dst) {
                    continue;
                }
                extended = true;
                let mut titles = path.titles.clone();
                titles.push(e.dst.clone());
                let mut hops = path.hops.clone();
                hops.push(Hop {
                    to: e.dst.clone(),
                    weight: e.weight,
                    gap: gap_size(graph, &held, e.dst.as_str()),
                });
                let d = hop_desirability(graph, &held, interest, weights, e.dst.as_str(), e.weight);
                next.push(CareerPath {
                    titles,
                    hops,
                    score: path.score * d,
                });
            }
            if !extended && path.titles.len() > 1 {
                finished.push(path.clone());
            }
        }
        next.sort_by(by_score_then_titles);
        next.truncate(config.beam_width.max(1));
        beam = next;
        if beam.is_empty() {
            break;
        }
    }
    finished.extend(beam);
    finished.sort_by(by_score_then_titles);
    let mut first_hops = BTreeSet::new();
    Ok(finished
        .into_iter()
        .filter(|p| first_hops.insert(p.titles[1].clone()))
        .take(config.n_paths)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{Record, Value};

    fn graph(edges: &[(&str, &str, f64)], isolated: &[&str]) -> KnowledgeGraph {
        let mut ids: BTreeSet<&str> = isolated.iter().copied().collect();
        for (a, b, _) in edges {
            ids.insert(a);
            ids.insert(b);
        }
        let mut recs: Vec<Record> = ids
            .iter()
            .map(|id| Record::node(id, Label::JobTitle, [("title", Value::from(id.to_uppercase()))]))
            .collect();
        recs.extend(
            edges
                .iter()
                .map(|(a, b, w)| Record::edge(a, b, Relation::TransitionsTo, *w)),
        );
        KnowledgeGraph::from_records(recs).unwrap()
    }

    fn profile(title: &str) -> UserProfile {
        UserProfile {
            user_id: "u".into(),
            current_title: title.into(),
            ..Default::default()
        }
    }

    fn titles(p: &CareerPath) -> Vec<&str> {
        p.titles.iter().map(NodeId::as_str).collect()
    }

    #[test]
    fn destination_equal_to_current() {
        let g = graph(&[("a", "b", 1.0)], &[]);
        let p = career_path_to(&profile("a"), "a", &g).unwrap();
        assert_eq!((titles(&p), p.score, p.hops.len()), (vec!["a"], 0.0, 0));
    }

    #[test]
    fn destination_errors() {
        let g = graph(&[("a", "b", 1.0)], &["z"]);
        assert!(matches!(
            career_path_to(&profile("a"), "nope", &g),
            Err(ToolError::Graph(GraphError::NodeNotFound(_)))
        ));
        assert!(matches!(
            career_path_to(&profile("a"), "z", &g),
            Err(ToolError::UnreachableDestination { .. })
        ));
    }

    #[test]
    fn hops_carry_weights() {
        let g = graph(&[("a", "b", 1.0), ("b", "c", 2.0), ("a", "c", 5.0)], &[]);
        let p = career_path_to(&profile("a"), "c", &g).unwrap();
        assert_eq!(titles(&p), ["a", "b", "c"]);
        assert_eq!(p.hops.iter().map(|h| h.weight).collect::<Vec<_>>(), [1.0, 2.0]);
        assert_eq!(p.score, 3.0);
    }

    #[test]
    fn isolated_title_has_no_growth() {
        let g = graph(&[("b", "c", 1.0)], &["a"]);
        let out = career_growth(
            &profile("a"),
            &InterestState::default(),
            &g,
            &ScoringWeights::default(),
            &GrowthConfig::default(),
        );
        assert!(out.unwrap().is_empty());
    }

    #[test]
    fn depth_one_picks_best_single_hops() {
        // no skills required anywhere: desirability = 1/(1+w)
        let g = graph(&[("a", "b", 1.0), ("a", "c", 0.25), ("a", "d", 3.0)], &[]);
        let cfg = GrowthConfig {
            n_paths: 2,
            depth: 1,
            beam_width: 8,
        };
        let out = career_growth(
            &profile("a"),
            &InterestState::default(),
            &g,
            &ScoringWeights::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(
            out.iter().map(titles).collect::<Vec<_>>(),
            [vec!["a", "c"], vec!["a", "b"]]
        );
        assert!((out[0].score - 0.8).abs() < 1e-12);
        assert!((out[1].score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diversity_keeps_best_per_first_hop() {
        // a->b->c and a->b->d share first hop b; a->e is the only other branch
        let g = graph(
            &[("a", "b", 0.0), ("b", "c", 0.0), ("b", "d", 1.0), ("a", "e", 3.0)],
            &[],
        );
        let cfg = GrowthConfig {
            n_paths: 3,
            depth: 2,
            beam_width: 8,
        };
        let out = career_growth(
            &profile("a"),
            &InterestState::default(),
            &g,
            &ScoringWeights::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(
            out.iter().map(titles).collect::<Vec<_>>(),
            [vec!["a", "b", "c"], vec!["a", "e"]]
        );
    }
}
