//! Sweep the stack depth and report test AUC per K; on small graphs the
//! useful receptive field saturates quickly.

use gipa::config::TrainConfig;
use gipa::graph::build_graph;
use gipa::synthetic::{generate, SyntheticSpec};
use gipa::train::train;
use gipa::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        n_nodes: 400,
        avg_degree: 6.0,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let d = generate(&spec)?;
    let graph = build_graph(&d.edges, &d.edge_feat, d.node_feat, d.labels, d.split, false)?;

    println!("layers  best_epoch  valid_auc  test_auc");
    for k in 1..=4 {
        let mut cfg = TrainConfig::default();
        cfg.model.layers = k;
        cfg.model.dense_width = 8;
        cfg.model.hidden = 8;
        cfg.training.max_epochs = 40;
        cfg.training.eval_interval = 5;
        cfg.training.seed = 4;
        let r = train(&graph, &cfg)?;
        println!(
            "{k:>6}  {:>10}  {:>9.4}  {:>8.4}",
            r.best_epoch, r.best_valid_auc, r.test_auc_at_best
        );
    }
    Ok(())
}
