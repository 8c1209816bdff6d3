//! Open up one layer: compute per-edge attention on both paths, normalize
//! with softmax, and watch the per-destination weights sum to one.

use gipa::graph::{build_graph, Split};
use gipa::layer::{
    activate_attention, attention_dense, layer_forward, Ablation, AttentionKind, GipaLayerParams,
    LayerDims,
};
use gipa::matrix::Matrix;
use gipa::tensor::{Tape, Tensor};
use gipa::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> Result<()> {
    // star into node 0 plus one side edge
    let edges = [(1usize, 0usize), (2, 0), (3, 0), (3, 2)];
    let edge_feat = Matrix::from_rows(vec![
        vec![2.0, 0.0],
        vec![-1.0, 0.5],
        vec![0.0, 1.0],
        vec![0.5, 0.5],
    ]);
    let graph = build_graph(
        &edges,
        &edge_feat,
        Matrix::zeros(4, 1),
        Matrix::zeros(4, 1),
        vec![Split::Train; 4],
        false,
    )?;

    let dims = LayerDims { in_dense: 3, in_sparse: 4, n: 2, m: 3, d_e: 2, hidden: 4 };
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let params = GipaLayerParams::init(&mut rng, dims, Ablation::Full)?;

    let h_d = Tensor::constant(vec![4, 3], (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let h_s = Tensor::constant(vec![4, 4], (0..16).map(|i| (i as f64 * 0.21).cos()).collect())?;
    let e = Tensor::constant(vec![4, 2], graph.edge_feat.data.clone())?;

    // raw bit-wise logits, then softmax within each destination segment
    let mut tape = Tape::new();
    let segments = graph.dst_ids();
    let h_di = tape.gather_rows(&h_d, &segments)?;
    let h_dj = tape.gather_rows(&h_d, &graph.src_ids)?;
    let logits = attention_dense(&mut tape, &h_di, &h_dj, Some(&e), &params.att_d)?;
    let weights = activate_attention(&mut tape, &logits, AttentionKind::Softmax, &segments, 4)?;
    let w = weights.to_vec();
    println!("edge (src -> dst)   softmax attention per channel");
    for (slot, (&src, &dst)) in graph.src_ids.iter().zip(&segments).enumerate() {
        println!(
            "({src} -> {dst})            [{:.4}, {:.4}]",
            w[slot * 2],
            w[slot * 2 + 1]
        );
    }
    for dst in [0usize, 2] {
        let sum: f64 = segments
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == dst)
            .map(|(slot, _)| w[slot * 2])
            .sum();
        println!("weights into node {dst} sum to {sum:.12}");
    }

    // the full layer, then the same layer with feature-wise gating removed
    for ablation in [Ablation::Full, Ablation::NoFeaturewise] {
        let mut tape = Tape::new();
        let (o_d, o_s) = layer_forward(
            &mut tape,
            &graph,
            &h_d,
            &h_s,
            Some(&e),
            &params,
            ablation,
            AttentionKind::Softmax,
        )?;
        // gating only exists on the feature-wise path, so the dense output
        // is identical across these two runs and the sparse output moves
        println!(
            "{ablation}: node 0 dense out {:?}, sparse out {:?}",
            o_d.to_vec()[..2].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            o_s.to_vec()[..3].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    Ok(())
}
