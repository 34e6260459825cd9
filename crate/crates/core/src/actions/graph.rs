//! Directed lanelet graph and anchor-path enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::geometry::polyline_length;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Longitudinal,
    #[serde(alias = "lateral-left")]
    LateralLeft,
    #[serde(alias = "lateral-right")]
    LateralRight,
}

/// One lanelet: a centerline polyline and an optional boundary polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lanelet {
    pub id: String,
    pub centerline: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneEdge {
    pub from: String,
    pub to: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
}

/// Immutable lanelet graph with typed directed edges.
#[derive(Debug, Clone)]
pub struct LaneGraph {
    lanelets: BTreeMap<String, Lanelet>,
    /// Outgoing edges per lanelet, sorted by (type, target id) and deduped.
    outgoing: BTreeMap<String, Vec<LaneEdge>>,
}

impl LaneGraph {
    pub fn new(lanelets: Vec<Lanelet>, edges: Vec<LaneEdge>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for lanelet in lanelets {
            if lanelet.centerline.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "lanelet {} centerline must have >= 2 points",
                    lanelet.id
                )));
            }
            if lanelet
                .centerline
                .iter()
                .chain(&lanelet.polygon)
                .any(|p| !p[0].is_finite() || !p[1].is_finite())
            {
                return Err(Error::InvalidInput(format!(
                    "lanelet {} has non-finite coordinates",
                    lanelet.id
                )));
            }
            if !lanelet.polygon.is_empty() && lanelet.polygon.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "lanelet {} polygon must have >= 3 points",
                    lanelet.id
                )));
            }
            if map.insert(lanelet.id.clone(), lanelet).is_some() {
                return Err(Error::DuplicateInput("duplicate lanelet id".into()));
            }
        }
        let mut outgoing: BTreeMap<String, Vec<LaneEdge>> = BTreeMap::new();
        for edge in edges {
            if !map.contains_key(&edge.from) {
                return Err(Error::UnknownLanelet(edge.from));
            }
            if !map.contains_key(&edge.to) {
                return Err(Error::UnknownLanelet(edge.to));
            }
            outgoing.entry(edge.from.clone()).or_default().push(edge);
        }
        for list in outgoing.values_mut() {
            list.sort_by(|a, b| (a.edge_type, &a.to).cmp(&(b.edge_type, &b.to)));
            list.dedup();
        }
        Ok(LaneGraph {
            lanelets: map,
            outgoing,
        })
    }

    pub fn lanelet(&self, id: &str) -> Option<&Lanelet> {
        self.lanelets.get(id)
    }

    pub fn lanelets(&self) -> impl Iterator<Item = &Lanelet> {
        self.lanelets.values()
    }

    pub fn outgoing(&self, id: &str) -> &[LaneEdge] {
        self.outgoing.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of outgoing longitudinal edges; >= 2 marks a fork.
    pub fn longitudinal_out_degree(&self, id: &str) -> usize {
        self.outgoing(id)
            .iter()
            .filter(|e| e.edge_type == EdgeType::Longitudinal)
            .count()
    }

    /// The typed edge from `a` to `b`, if any (first in sort order when the
    /// map carries parallel edges).
    pub fn edge_between(&self, a: &str, b: &str) -> Option<&LaneEdge> {
        self.outgoing(a).iter().find(|e| e.to == b)
    }

    pub fn centerline_length(&self, id: &str) -> Result<f64> {
        let lanelet = self
            .lanelets
            .get(id)
            .ok_or_else(|| Error::UnknownLanelet(id.to_string()))?;
        Ok(polyline_length(&lanelet.centerline))
    }
}

/// A candidate future lanelet sequence with its concatenated centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPath {
    pub lanelets: Vec<String>,
    pub centerline: Vec<[f64; 2]>,
    /// Sum of member centerline lengths in meters.
    pub length_m: f64,
}

/// Enumeration output; `truncated` is set when the branch cap cut the
/// search short.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPathSet {
    pub paths: Vec<AnchorPath>,
    pub truncated: bool,
}

/// Enumerates all simple paths from `start` along longitudinal and lateral
/// edges, capped at `branch_cap` paths.
///
/// A path is complete once its cumulative centerline length reaches
/// `horizon_m` or it has no unvisited longitudinal continuation (a dead end
/// for staying in lane). Unvisited lateral edges always spawn additional
/// digressions, so a lanelet with only lane-change options contributes both
/// the stop-here path and its lane-change variants.
pub fn enumerate_anchor_paths(
    graph: &LaneGraph,
    start: &str,
    horizon_m: f64,
    branch_cap: usize,
) -> Result<AnchorPathSet> {
    if graph.lanelet(start).is_none() {
        return Err(Error::UnknownLanelet(start.to_string()));
    }
    if !(horizon_m.is_finite() && horizon_m > 0.0) {
        return Err(Error::InvalidInput(format!(
            "horizon must be finite and > 0, got {horizon_m}"
        )));
    }
    if branch_cap == 0 {
        return Err(Error::InvalidInput("branch cap must be >= 1".into()));
    }

    let mut sequences: Vec<Vec<String>> = Vec::new();
    let mut truncated = false;
    // Explicit DFS; each frame is (path so far, accumulated length).
    let mut stack: Vec<(Vec<String>, f64)> = vec![(
        vec![start.to_string()],
        graph.centerline_length(start)?,
    )];
    while let Some((path, length)) = stack.pop() {
        if sequences.len() >= branch_cap {
            truncated = true;
            break;
        }
        let last = path.last().unwrap();
        let next_edges: Vec<&LaneEdge> = graph
            .outgoing(last)
            .iter()
            .filter(|e| !path.contains(&e.to))
            .collect();
        let can_stay_in_lane = next_edges
            .iter()
            .any(|e| e.edge_type == EdgeType::Longitudinal);
        if length >= horizon_m || !can_stay_in_lane {
            sequences.push(path.clone());
            if length >= horizon_m {
                continue;
            }
        }
        // Reverse push keeps the exploration in ascending edge order.
        for edge in next_edges.into_iter().rev() {
            let mut next = path.clone();
            next.push(edge.to.clone());
            stack.push((next, length + graph.centerline_length(&edge.to)?));
        }
    }

    let unique: BTreeSet<Vec<String>> = sequences.into_iter().collect();
    let mut paths = Vec::with_capacity(unique.len());
    for lanelets in unique {
        let mut centerline = Vec::new();
        let mut length_m = 0.0;
        for id in &lanelets {
            let lanelet = graph.lanelet(id).unwrap();
            length_m += polyline_length(&lanelet.centerline);
            for &point in &lanelet.centerline {
                if centerline.last() != Some(&point) {
                    centerline.push(point);
                }
            }
        }
        paths.push(AnchorPath {
            lanelets,
            centerline,
            length_m,
        });
    }
    Ok(AnchorPathSet { paths, truncated })
}

#[derive(Deserialize)]
struct GraphDoc {
    lanelets: Vec<Lanelet>,
    edges: Vec<LaneEdge>,
}

/// Reads a lane graph from JSON
/// `{lanelets: [{id, centerline, polygon}], edges: [{from, to, type}]}`.
pub fn read_lane_graph_json<R: Read>(reader: R) -> Result<LaneGraph> {
    let doc: GraphDoc = serde_json::from_reader(reader)?;
    LaneGraph::new(doc.lanelets, doc.edges)
}


#[cfg(test)]
mod tests {
    use super::testutil::{edge, straight};
    use super::*;

    #[test]
    fn linear_chain_yields_one_path() {
        let graph = LaneGraph::new(
            vec![
                straight("a", 0.0, 30.0, 0.0),
                straight("b", 30.0, 60.0, 0.0),
                straight("c", 60.0, 90.0, 0.0),
            ],
            vec![
                edge("a", "b", EdgeType::Longitudinal),
                edge("b", "c", EdgeType::Longitudinal),
            ],
        )
        .unwrap();
        let set = enumerate_anchor_paths(&graph, "a", 200.0, 64).unwrap();
        assert_eq!(set.paths.len(), 1);
        assert_eq!(set.paths[0].lanelets, vec!["a", "b", "c"]);
        assert!((set.paths[0].length_m - 90.0).abs() < 1e-9);
        assert!(!set.truncated);
    }

    #[test]
    fn fork_yields_two_paths() {
        let graph = LaneGraph::new(
            vec![
                straight("a", 0.0, 30.0, 0.0),
                straight("b", 30.0, 60.0, 0.0),
                straight("c", 30.0, 60.0, 3.5),
            ],
            vec![
                edge("a", "b", EdgeType::Longitudinal),
                edge("a", "c", EdgeType::Longitudinal),
            ],
        )
        .unwrap();
        let set = enumerate_anchor_paths(&graph, "a", 200.0, 64).unwrap();
        assert_eq!(set.paths.len(), 2);
    }

    #[test]
    fn fork_with_lateral_edges_yields_four_paths() {
        // Two longitudinal branches, each with one lateral neighbor.
        let graph = LaneGraph::new(
            vec![
                straight("a", 0.0, 30.0, 0.0),
                straight("b", 30.0, 60.0, 0.0),
                straight("b_r", 30.0, 60.0, -3.5),
                straight("c", 30.0, 60.0, 3.5),
                straight("c_l", 30.0, 60.0, 7.0),
            ],
            vec![
                edge("a", "b", EdgeType::Longitudinal),
                edge("a", "c", EdgeType::Longitudinal),
                edge("b", "b_r", EdgeType::LateralRight),
                edge("c", "c_l", EdgeType::LateralLeft),
            ],
        )
        .unwrap();
        let set = enumerate_anchor_paths(&graph, "a", 200.0, 64).unwrap();
        // Brute-force expectation: a|b, a|b|b_r, a|c, a|c|c_l.
        let got: Vec<Vec<String>> = set.paths.iter().map(|p| p.lanelets.clone()).collect();
        assert_eq!(got.len(), 4, "{got:?}");
    }

    #[test]
    fn horizon_stops_expansion() {
        let graph = LaneGraph::new(
            vec![
                straight("a", 0.0, 30.0, 0.0),
                straight("b", 30.0, 60.0, 0.0),
                straight("c", 60.0, 90.0, 0.0),
            ],
            vec![
                edge("a", "b", EdgeType::Longitudinal),
                edge("b", "c", EdgeType::Longitudinal),
            ],
        )
        .unwrap();
        let set = enumerate_anchor_paths(&graph, "a", 50.0, 64).unwrap();
        assert_eq!(set.paths.len(), 1);
        assert_eq!(set.paths[0].lanelets, vec!["a", "b"]);
    }

    #[test]
    fn unknown_start_is_an_error() {
        let graph = LaneGraph::new(vec![straight("a", 0.0, 30.0, 0.0)], vec![]).unwrap();
        assert!(matches!(
            enumerate_anchor_paths(&graph, "zz", 100.0, 64).unwrap_err(),
            Error::UnknownLanelet(_)
        ));
    }

    #[test]
    fn branch_cap_truncates() {
        // Binary tree of depth 4 -> 16 leaf paths.
        let mut lanelets = vec![straight("r", 0.0, 10.0, 0.0)];
        let mut edges = Vec::new();
        let mut frontier = vec!["r".to_string()];
        for depth in 0..4 {
            let mut next = Vec::new();
            for (i, parent) in frontier.iter().enumerate() {
                for side in 0..2 {
                    let id = format!("n{depth}_{i}_{side}");
                    lanelets.push(straight(&id, 10.0 * (depth + 1) as f64, 10.0 * (depth + 2) as f64, side as f64));
                    edges.push(edge(parent, &id, EdgeType::Longitudinal));
                    next.push(id);
                }
            }
            frontier = next;
        }
        let graph = LaneGraph::new(lanelets, edges).unwrap();
        let full = enumerate_anchor_paths(&graph, "r", 1000.0, 64).unwrap();
        assert_eq!(full.paths.len(), 16);
        assert!(!full.truncated);
        let capped = enumerate_anchor_paths(&graph, "r", 1000.0, 5).unwrap();
        assert!(capped.truncated);
        assert!(capped.paths.len() <= 5);
    }

    #[test]
    fn paths_are_edge_connected() {
        let graph = LaneGraph::new(
            vec![
                straight("a", 0.0, 30.0, 0.0),
                straight("b", 30.0, 60.0, 0.0),
                straight("c", 30.0, 60.0, 3.5),
                straight("d", 60.0, 90.0, 3.5),
            ],
            vec![
                edge("a", "b", EdgeType::Longitudinal),
                edge("a", "c", EdgeType::Longitudinal),
                edge("c", "d", EdgeType::Longitudinal),
                edge("b", "c", EdgeType::LateralLeft),
            ],
        )
        .unwrap();
        let set = enumerate_anchor_paths(&graph, "a", 500.0, 64).unwrap();
        for path in &set.paths {
            for pair in path.lanelets.windows(2) {
                assert!(
                    graph.edge_between(&pair[0], &pair[1]).is_some(),
                    "no edge {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn json_ingest() {
        let text = r#"{
            "lanelets": [
                {"id": "a", "centerline": [[0,0],[10,0]], "polygon": [[0,-1],[10,-1],[10,1],[0,1]]},
                {"id": "b", "centerline": [[10,0],[20,0]]}
            ],
            "edges": [{"from": "a", "to": "b", "type": "longitudinal"}]
        }"#;
        let graph = read_lane_graph_json(text.as_bytes()).unwrap();
        assert_eq!(graph.lanelets().count(), 2);
        assert_eq!(graph.longitudinal_out_degree("a"), 1);
    }
}
