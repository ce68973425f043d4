//! Immutable directed citation graph.
//!
//! Nodes are stored in ascending order of their string id, so a node's dense
//! index doubles as its rank in id order. Both adjacency directions are kept
//! in compressed sparse row form with sorted, duplicate-free neighbor lists.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grant year assigned to stub nodes created for dangling edge endpoints.
/// Stubs satisfy every upper year bound and fail every lower one.
pub const UNKNOWN_YEAR: i32 = i32::MIN;

/// Dense node handle, valid only for the graph that produced it.
pub type NodeIdx = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub grant_year: i32,
    pub application_year: Option<i32>,
    pub category: Option<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl NodeRecord {
    pub fn new(id: impl Into<String>, grant_year: i32) -> Self {
        NodeRecord {
            id: id.into(),
            grant_year,
            application_year: None,
            category: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_application_year(mut self, year: i32) -> Self {
        self.application_year = Some(year);
        self
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    /// Placeholder for an endpoint referenced by an edge but absent from the
    /// node table.
    pub fn stub(id: impl Into<String>) -> Self {
        NodeRecord::new(id, UNKNOWN_YEAR)
    }

    pub fn is_stub(&self) -> bool {
        self.grant_year == UNKNOWN_YEAR
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArgument("node id must be non-empty".into()));
        }
        if let Some(app) = self.application_year {
            if !self.is_stub() && app > self.grant_year {
                return Err(Error::InvalidArgument(format!(
                    "node `{}` has application year {app} after grant year {}",
                    self.id, self.grant_year
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CitationEdge {
    pub citing: String,
    pub cited: String,
}

impl CitationEdge {
    pub fn new(citing: impl Into<String>, cited: impl Into<String>) -> Self {
        CitationEdge {
            citing: citing.into(),
            cited: cited.into(),
        }
    }
}

/// Compressed sparse rows: `targets[offsets[v]..offsets[v + 1]]` are the
/// neighbors of `v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct Csr {
    offsets: Vec<u32>,
    targets: Vec<NodeIdx>,
}

impl Csr {
    fn from_pairs(n: usize, pairs: &mut [(NodeIdx, NodeIdx)]) -> Csr {
        pairs.sort_unstable();
        let mut offsets = vec![0u32; n + 1];
        for &(src, _) in pairs.iter() {
            offsets[src as usize + 1] += 1;
        }
        for v in 0..n {
            offsets[v + 1] += offsets[v];
        }
        let targets = pairs.iter().map(|&(_, dst)| dst).collect();
        Csr { offsets, targets }
    }

    #[inline]
    fn row(&self, v: NodeIdx) -> &[NodeIdx] {
        let v = v as usize;
        &self.targets[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CitationGraph {
    nodes: Vec<NodeRecord>,
    #[serde(skip)]
    index: HashMap<String, NodeIdx>,
    years: Vec<i32>,
    /// cited -> citing
    forward: Csr,
    /// `forward.targets` paired with each citer's grant year
    #[serde(skip)]
    forward_dated: Vec<(NodeIdx, i32)>,
    /// citing -> cited
    backward: Csr,
    year_index: BTreeMap<i32, Vec<NodeIdx>>,
}

impl CitationGraph {
    /// Builds the immutable graph. Duplicate edges collapse to one; both
    /// endpoints of every edge must be present in `nodes`.
    pub fn finalize(mut nodes: Vec<NodeRecord>, edges: &[CitationEdge]) -> Result<CitationGraph> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        for w in nodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::DuplicateId(w[0].id.clone()));
            }
        }
        for node in &nodes {
            node.validate()?;
        }
        if nodes.len() > NodeIdx::MAX as usize || edges.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument("graph too large".into()));
        }

        let index: HashMap<String, NodeIdx> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i as NodeIdx))
            .collect();

        let mut seen = HashSet::with_capacity(edges.len());
        let mut cites = Vec::with_capacity(edges.len());
        for (row, edge) in edges.iter().enumerate() {
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| Error::DanglingEndpoint {
                    citing: edge.citing.clone(),
                    cited: edge.cited.clone(),
                    missing: id.to_string(),
                })
            };
            let citing = lookup(&edge.citing)?;
            let cited = lookup(&edge.cited)?;
            if citing == cited {
                return Err(Error::SelfCitation(edge.citing.clone(), row + 1));
            }
            if seen.insert((citing, cited)) {
                cites.push((citing, cited));
            }
        }

        let n = nodes.len();
        let backward = Csr::from_pairs(n, &mut cites);
        let mut reversed: Vec<_> = cites.iter().map(|&(a, b)| (b, a)).collect();
        let forward = Csr::from_pairs(n, &mut reversed);

        let years: Vec<i32> = nodes.iter().map(|n| n.grant_year).collect();
        let forward_dated = forward.targets.iter().map(|&c| (c, years[c as usize])).collect();
        let mut year_index: BTreeMap<i32, Vec<NodeIdx>> = BTreeMap::new();
        for (i, &y) in years.iter().enumerate() {
            if y != UNKNOWN_YEAR {
                year_index.entry(y).or_default().push(i as NodeIdx);
            }
        }

        Ok(CitationGraph {
            nodes,
            index,
            years,
            forward,
            forward_dated,
            backward,
            year_index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.backward.targets.len()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, idx: NodeIdx) -> &NodeRecord {
        &self.nodes[idx as usize]
    }

    pub fn id(&self, idx: NodeIdx) -> &str {
        &self.nodes[idx as usize].id
    }

    pub fn index_of(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn resolve(&self, id: &str) -> Result<NodeIdx> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    #[inline]
    pub fn grant_year(&self, idx: NodeIdx) -> i32 {
        self.years[idx as usize]
    }

    /// Nodes citing `idx`, ascending.
    #[inline]
    pub fn citers(&self, idx: NodeIdx) -> &[NodeIdx] {
        self.forward.row(idx)
    }

    /// [`citers`](Self::citers) with their grant years.
    #[inline]
    pub fn dated_citers(&self, idx: NodeIdx) -> &[(NodeIdx, i32)] {
        let v = idx as usize;
        &self.forward_dated[self.forward.offsets[v] as usize..self.forward.offsets[v + 1] as usize]
    }

    /// Nodes cited by `idx`, ascending.
    #[inline]
    pub fn cited_by(&self, idx: NodeIdx) -> &[NodeIdx] {
        self.backward.row(idx)
    }

    pub fn year_index(&self) -> &BTreeMap<i32, Vec<NodeIdx>> {
        &self.year_index
    }

    pub fn nodes_granted_in(&self, year: i32) -> &[NodeIdx] {
        self.year_index.get(&year).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Range of known grant years, ignoring stubs.
    pub fn year_span(&self) -> Option<(i32, i32)> {
        let first = *self.year_index.keys().next()?;
        let last = *self.year_index.keys().next_back()?;
        Some((first, last))
    }

    /// Citers of `idx` whose grant year lies in `[from_year, up_to_year]`;
    /// a missing bound is unbounded.
    pub fn citers_in_years(
        &self,
        idx: NodeIdx,
        from_year: Option<i32>,
        up_to_year: Option<i32>,
    ) -> impl Iterator<Item = NodeIdx> + '_ {
        let lo = from_year.unwrap_or(i32::MIN);
        let hi = up_to_year.unwrap_or(i32::MAX);
        self.dated_citers(idx)
            .iter()
            .filter(move |&&(_, y)| lo <= y && y <= hi)
            .map(|&(c, _)| c)
    }

    /// Id-level form of [`citers_in_years`](Self::citers_in_years).
    pub fn citers_of(
        &self,
        node: &str,
        up_to_year: Option<i32>,
        from_year: Option<i32>,
    ) -> Result<Vec<&str>> {
        let idx = self.resolve(node)?;
        Ok(self
            .citers_in_years(idx, from_year, up_to_year)
            .map(|c| self.id(c))
            .collect())
    }

    /// All edges as `(citing, cited)` index pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeIdx, NodeIdx)> + '_ {
        (0..self.nodes.len() as NodeIdx)
            .flat_map(move |v| self.cited_by(v).iter().map(move |&c| (v, c)))
    }

    /// Canonical JSON serialization. Identical inputs give identical bytes.
    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> CitationGraph {
        let nodes = vec![
            NodeRecord::new("A", 1990),
            NodeRecord::new("B", 1995),
            NodeRecord::new("C", 2000),
        ];
        let edges = vec![CitationEdge::new("B", "A"), CitationEdge::new("C", "A")];
        CitationGraph::finalize(nodes, &edges).unwrap()
    }

    #[test]
    fn forward_and_backward_lists() {
        let g = abc();
        let a = g.resolve("A").unwrap();
        let b = g.resolve("B").unwrap();
        let fwd: Vec<_> = g.citers(a).iter().map(|&i| g.id(i)).collect();
        assert_eq!(fwd, ["B", "C"]);
        let bwd: Vec<_> = g.cited_by(b).iter().map(|&i| g.id(i)).collect();
        assert_eq!(bwd, ["A"]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn single_node_graph() {
        let g = CitationGraph::finalize(vec![NodeRecord::new("X", 2001)], &[]).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(g.citers(0).is_empty());
        assert!(g.cited_by(0).is_empty());
    }

    #[test]
    fn duplicate_edges_collapse() {
        let nodes = vec![NodeRecord::new("A", 1990), NodeRecord::new("B", 1991)];
        let edges = vec![CitationEdge::new("B", "A"), CitationEdge::new("B", "A")];
        let g = CitationGraph::finalize(nodes, &edges).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn rejects_duplicate_ids_and_self_citations() {
        let dup = vec![NodeRecord::new("X", 1990), NodeRecord::new("X", 1991)];
        assert!(matches!(
            CitationGraph::finalize(dup, &[]),
            Err(Error::DuplicateId(id)) if id == "X"
        ));
        let nodes = vec![NodeRecord::new("A", 1990)];
        assert!(matches!(
            CitationGraph::finalize(nodes, &[CitationEdge::new("A", "A")]),
            Err(Error::SelfCitation(..))
        ));
    }

    #[test]
    fn dangling_edge_at_finalize() {
        let nodes = vec![NodeRecord::new("A", 1990)];
        let err = CitationGraph::finalize(nodes, &[CitationEdge::new("A", "Z")]).unwrap_err();
        assert!(matches!(err, Error::DanglingEndpoint { missing, .. } if missing == "Z"));
    }

    #[test]
    fn year_filtered_citers() {
        let nodes = vec![
            NodeRecord::new("P", 1985),
            NodeRecord::new("c1", 1990),
            NodeRecord::new("c2", 1995),
            NodeRecord::new("c3", 2000),
        ];
        let edges: Vec<_> = ["c1", "c2", "c3"]
            .iter()
            .map(|c| CitationEdge::new(*c, "P"))
            .collect();
        let g = CitationGraph::finalize(nodes, &edges).unwrap();
        assert_eq!(g.citers_of("P", Some(1996), None).unwrap(), ["c1", "c2"]);
        assert!(g.citers_of("P", Some(1989), None).unwrap().is_empty());
        assert_eq!(g.citers_of("P", None, Some(1995)).unwrap(), ["c2", "c3"]);
        assert!(matches!(g.citers_of("nope", None, None), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn application_after_grant_rejected() {
        let bad = NodeRecord::new("A", 1990).with_application_year(1992);
        assert!(CitationGraph::finalize(vec![bad], &[]).is_err());
    }

    #[test]
    fn year_index_groups_nodes() {
        let g = abc();
        assert_eq!(g.nodes_granted_in(1995), &[g.resolve("B").unwrap()]);
        assert_eq!(g.year_span(), Some((1990, 2000)));
    }
}
