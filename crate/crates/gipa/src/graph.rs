//! Destination-grouped CSR storage for attributed graphs.
//!
//! Aggregation reduces over in-edges into each destination, so edges are
//! grouped by destination and sorted by source within each group. Edge
//! feature rows are stored in CSR slot order; an edge id is its slot.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{GipaError, Result};
use crate::matrix::Matrix;

/// Per-node split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Split, String> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// Attributed graph in destination-grouped CSR form.
///
/// `row_offsets[i]..row_offsets[i+1]` are the CSR slots of node `i`'s
/// in-edges; `src_ids[slot]` is the source and `edge_feat.row(slot)` the raw
/// feature row of the directed edge in that slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub n_nodes: usize,
    pub row_offsets: Vec<usize>,
    pub src_ids: Vec<usize>,
    pub edge_feat: Matrix,
    pub node_feat: Matrix,
    pub labels: Matrix,
    pub split: Vec<Split>,
}

impl Graph {
    pub fn n_edges(&self) -> usize {
        self.src_ids.len()
    }

    /// In-edges of `i` as `(source, edge id)`, ascending by source.
    pub fn neighbors(&self, i: usize) -> Result<impl Iterator<Item = (usize, usize)> + '_> {
        if i >= self.n_nodes {
            return Err(GipaError::index(
                "neighbors",
                format!("node {} out of range for {} nodes", i, self.n_nodes),
            ));
        }
        let start = self.row_offsets[i];
        let end = self.row_offsets[i + 1];
        Ok(self.src_ids[start..end]
            .iter()
            .enumerate()
            .map(move |(k, &s)| (s, start + k)))
    }

    /// Destination node of every CSR slot, in slot order.
    pub fn dst_ids(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_edges()];
        for i in 0..self.n_nodes {
            for slot in self.row_offsets[i]..self.row_offsets[i + 1] {
                out[slot] = i;
            }
        }
        out
    }

    /// Node ids carrying the given split tag.
    pub fn split_nodes(&self, tag: Split) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| self.split[i] == tag).collect()
    }

    /// Boolean mask over nodes for the given split tag.
    pub fn split_mask(&self, tag: Split) -> Vec<bool> {
        self.split.iter().map(|&s| s == tag).collect()
    }
}

/// Induced subgraph plus the map back to parent node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// Local node id -> parent node id; strictly increasing.
    pub parent_ids: Vec<usize>,
    pub graph: Graph,
}

/// Assemble a CSR graph from directed edge endpoints with aligned feature
/// rows. With `undirected`, every input edge is materialized in both
/// directions, the two copies sharing the input row's values.
pub fn build_graph(
    edges: &[(usize, usize)],
    edge_feat: &Matrix,
    node_feat: Matrix,
    labels: Matrix,
    split: Vec<Split>,
    undirected: bool,
) -> Result<Graph> {
    let n_nodes = node_feat.rows;
    if labels.rows != n_nodes {
        return Err(GipaError::ingest(
            "labels",
            labels.rows,
            format!("{} label rows for {} nodes", labels.rows, n_nodes),
        ));
    }
    if split.len() != n_nodes {
        return Err(GipaError::ingest(
            "split",
            split.len(),
            format!("{} split tags for {} nodes", split.len(), n_nodes),
        ));
    }
    if edge_feat.rows != edges.len() {
        return Err(GipaError::ingest(
            "edges",
            edge_feat.rows,
            format!("{} feature rows for {} edges", edge_feat.rows, edges.len()),
        ));
    }
    for (k, &(u, v)) in edges.iter().enumerate() {
        if u >= n_nodes || v >= n_nodes {
            return Err(GipaError::ingest(
                "edges",
                k,
                format!("edge ({u}, {v}) out of range for {n_nodes} nodes"),
            ));
        }
    }

    // (dst, src, input row); both directions share the row when undirected.
    let mut directed: Vec<(usize, usize, usize)> = Vec::with_capacity(if undirected {
        edges.len() * 2
    } else {
        edges.len()
    });
    for (k, &(u, v)) in edges.iter().enumerate() {
        directed.push((v, u, k));
        if undirected {
            directed.push((u, v, k));
        }
    }
    // Stable on the input-row component, so parallel edges keep input order.
    directed.sort_by_key(|&(dst, src, _)| (dst, src));

    let e = directed.len();
    let mut row_offsets = vec![0usize; n_nodes + 1];
    for &(dst, _, _) in &directed {
        row_offsets[dst + 1] += 1;
    }
    for i in 0..n_nodes {
        row_offsets[i + 1] += row_offsets[i];
    }
    let mut src_ids = Vec::with_capacity(e);
    let mut feat = Matrix::zeros(e, edge_feat.cols);
    for (slot, &(_, src, row)) in directed.iter().enumerate() {
        src_ids.push(src);
        feat.row_mut(slot).copy_from_slice(edge_feat.row(row));
    }

    Ok(Graph {
        n_nodes,
        row_offsets,
        src_ids,
        edge_feat: feat,
        node_feat,
        labels,
        split,
    })
}

/// Shuffle nodes with a seeded RNG and split into `n_parts` near-equal
/// groups; each group becomes an induced subgraph. The groups cover every
/// node exactly once.
pub fn random_partition(g: &Graph, n_parts: usize, seed: u64) -> Result<Vec<Subgraph>> {
    if n_parts == 0 || n_parts > g.n_nodes {
        return Err(GipaError::contract(
            "random_partition",
            format!("n_parts {} for {} nodes", n_parts, g.n_nodes),
        ));
    }
    let mut order: Vec<usize> = (0..g.n_nodes).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = g.n_nodes / n_parts;
    let rem = g.n_nodes % n_parts;
    let mut parts = Vec::with_capacity(n_parts);
    let mut cursor = 0;
    for p in 0..n_parts {
        let size = base + usize::from(p < rem);
        let chunk = &order[cursor..cursor + size];
        cursor += size;
        parts.push(induced_subgraph(g, chunk)?);
    }
    Ok(parts)
}

/// Induced subgraph on `nodes`: keeps exactly the edges with both endpoints
/// selected, relabels nodes densely preserving relative (ascending id)
/// order, and carries feature rows, labels and split tags.
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<Subgraph> {
    if let Some(&bad) = nodes.iter().find(|&&v| v >= g.n_nodes) {
        return Err(GipaError::index(
            "induced_subgraph",
            format!("node {} out of range for {} nodes", bad, g.n_nodes),
        ));
    }
    let mut parent_ids: Vec<usize> = nodes.to_vec();
    parent_ids.sort_unstable();
    parent_ids.dedup();

    const UNSELECTED: usize = usize::MAX;
    let mut local_of = vec![UNSELECTED; g.n_nodes];
    for (local, &p) in parent_ids.iter().enumerate() {
        local_of[p] = local;
    }

    // Scan slots in CSR order so the kept-edge order is deterministic.
    let mut sub_edges = Vec::new();
    let mut kept_slots = Vec::new();
    for dst in 0..g.n_nodes {
        if local_of[dst] == UNSELECTED {
            continue;
        }
        for slot in g.row_offsets[dst]..g.row_offsets[dst + 1] {
            let src = g.src_ids[slot];
            if local_of[src] != UNSELECTED {
                sub_edges.push((local_of[src], local_of[dst]));
                kept_slots.push(slot);
            }
        }
    }
    let mut sub_edge_feat = Matrix::zeros(kept_slots.len(), g.edge_feat.cols);
    for (k, &slot) in kept_slots.iter().enumerate() {
        sub_edge_feat.row_mut(k).copy_from_slice(g.edge_feat.row(slot));
    }

    let k = parent_ids.len();
    let mut node_feat = Matrix::zeros(k, g.node_feat.cols);
    let mut labels = Matrix::zeros(k, g.labels.cols);
    let mut split = Vec::with_capacity(k);
    for (local, &p) in parent_ids.iter().enumerate() {
        node_feat.row_mut(local).copy_from_slice(g.node_feat.row(p));
        labels.row_mut(local).copy_from_slice(g.labels.row(p));
        split.push(g.split[p]);
    }

    let graph = build_graph(&sub_edges, &sub_edge_feat, node_feat, labels, split, false)?;
    Ok(Subgraph { parent_ids, graph })
}
