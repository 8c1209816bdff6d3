//! Build a small graph in destination-grouped CSR form, inspect
//! neighborhoods, and split it into random node partitions.

use gipa::graph::{build_graph, random_partition, Split};
use gipa::matrix::Matrix;
use gipa::Result;

fn main() -> Result<()> {
    // a directed triangle with a pendant node: 0->1, 1->2, 2->0, 0->3
    let edges = [(0usize, 1usize), (1, 2), (2, 0), (0, 3)];
    let edge_feat = Matrix::from_rows(vec![
        vec![0.9, 0.1],
        vec![0.8, 0.2],
        vec![0.7, 0.3],
        vec![0.6, 0.4],
    ]);
    let node_feat = Matrix::from_rows(vec![
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![0.5, 0.5],
    ]);
    let labels = Matrix::from_rows(vec![vec![1.0], vec![0.0], vec![1.0], vec![0.0]]);
    let split = vec![Split::Train, Split::Train, Split::Valid, Split::Test];

    let graph = build_graph(&edges, &edge_feat, node_feat, labels, split, false)?;
    println!("{} nodes, {} directed edges", graph.n_nodes, graph.n_edges());

    for dst in 0..graph.n_nodes {
        let inbound: Vec<String> = graph
            .neighbors(dst)?
            .map(|(src, slot)| format!("{src} (edge slot {slot})"))
            .collect();
        println!("node {dst} receives from: {}", if inbound.is_empty() { "nobody".into() } else { inbound.join(", ") });
    }

    // the same edges declared undirected double into both directions
    let both = build_graph(
        &edges,
        &edge_feat,
        Matrix::zeros(4, 2),
        Matrix::zeros(4, 1),
        vec![Split::Train; 4],
        true,
    )?;
    println!("undirected build stores {} directed edges", both.n_edges());

    println!("train nodes: {:?}", graph.split_nodes(Split::Train));

    for (i, sub) in random_partition(&graph, 2, 7)?.iter().enumerate() {
        println!(
            "partition {i}: parents {:?}, {} internal edges",
            sub.parent_ids,
            sub.graph.n_edges()
        );
    }
    Ok(())
}
