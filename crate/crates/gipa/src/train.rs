//! Full-batch and partitioned training with Adam, periodic evaluation,
//! best-validation early stopping and per-epoch metrics records.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::config::TrainConfig;
use crate::encode::FeatureEncoder;
use crate::error::{GipaError, Result};
use crate::graph::{random_partition, Graph, Split};
use crate::head::loss as head_loss;
use crate::layer::Ablation;
use crate::matrix::Matrix;
use crate::metrics::{mean_label_auc, AucSummary};
use crate::model::{Checkpoint, GipaModel, ModelDims};
use crate::optim::Adam;
use crate::tensor::Tape;

/// One metrics line: loss and mean AUC of one split at one epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    /// Absent when every label is single-class on the split.
    pub auc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_auc: f64,
    pub test_auc_at_best: f64,
    /// Weights restored to the best validation epoch, plus the encoder.
    pub checkpoint: Checkpoint,
}

/// Loss and AUC of one split under a fixed model.
#[derive(Debug, Clone)]
pub struct SplitMetrics {
    pub split: Split,
    pub loss: f64,
    pub auc: AucSummary,
}

fn model_dims(graph: &Graph, config: &TrainConfig) -> ModelDims {
    ModelDims {
        m_raw: graph.node_feat.cols,
        k_buckets: config.model.buckets,
        d_e_raw: graph.edge_feat.cols,
        d_e: config.model.edge_width,
        n: config.model.dense_width,
        hidden: config.model.hidden,
        n_labels: graph.labels.cols,
        n_layers: config.model.layers,
    }
}

/// Fit the bucket encoder on training nodes only.
pub fn fit_encoder(graph: &Graph, config: &TrainConfig) -> Result<FeatureEncoder> {
    let train_rows = graph.split_nodes(Split::Train);
    if train_rows.is_empty() {
        return Err(GipaError::contract("train", "no training nodes in the split"));
    }
    let train_feat = graph.node_feat.gather_rows(&train_rows);
    FeatureEncoder::fit(&train_feat, config.model.buckets, config.model.bucket_method)
}

fn mean_auc_of(scores: &Matrix, labels: &Matrix, rows: &[usize]) -> Result<Option<f64>> {
    match mean_label_auc(scores, labels, rows) {
        Ok(summary) => Ok(Some(summary.mean)),
        Err(GipaError::UndefinedAuc(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn split_loss(tape: &mut Tape, logits: &crate::tensor::Tensor, graph: &Graph, split: Split) -> Result<f64> {
    let mask = graph.split_mask(split);
    Ok(head_loss(tape, logits, &graph.labels, &mask)?.to_vec()[0])
}

/// Train on `graph` per `config`; weights end at the best-validation epoch.
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let encoder = fit_encoder(graph, config)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.training.seed);
    let model = GipaModel::init(&mut rng, model_dims(graph, config), config.model.ablation, config.model.activation)?;
    let params = model.params();
    let tensors: Vec<_> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut adam = Adam::new(config.optimizer, &tensors);

    let t = &config.training;
    let train_rows = graph.split_nodes(Split::Train);
    let valid_rows = graph.split_nodes(Split::Valid);
    let test_rows = graph.split_nodes(Split::Test);

    let mut records = Vec::new();
    let mut best: Option<(usize, f64, f64, Vec<Vec<f64>>)> = None;
    let mut evals_since_best = 0usize;

    for epoch in 1..=t.max_epochs {
        let started = Instant::now();
        let mut loss_weighted = 0.0;
        let mut loss_entries = 0usize;
        let mut train_scores = Matrix::zeros(graph.n_nodes, graph.labels.cols);

        if t.partitions == 1 {
            let mut tape = Tape::new();
            let logits = model.forward(&mut tape, graph, &encoder)?;
            train_scores.data.copy_from_slice(&logits.to_vec());
            let loss = head_loss(&mut tape, &logits, &graph.labels, &graph.split_mask(Split::Train))?;
            let value = loss.to_vec()[0];
            if !value.is_finite() {
                return Err(GipaError::Diverged(format!("training loss {value} at epoch {epoch}")));
            }
            loss_weighted += value * (train_rows.len() * graph.labels.cols) as f64;
            loss_entries += train_rows.len() * graph.labels.cols;
            tape.backward(&loss)?;
            adam.step(&tensors)?;
        } else {
            let part_seed = t.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            for part in random_partition(graph, t.partitions, part_seed)? {
                let local_train = part.graph.split_nodes(Split::Train);
                let mut tape = Tape::new();
                let logits = model.forward(&mut tape, &part.graph, &encoder)?;
                let flat = logits.to_vec();
                let cols = part.graph.labels.cols;
                for (local, &global) in part.parent_ids.iter().enumerate() {
                    train_scores.row_mut(global).copy_from_slice(&flat[local * cols..(local + 1) * cols]);
                }
                if local_train.is_empty() {
                    continue;
                }
                let loss = head_loss(&mut tape, &logits, &part.graph.labels, &part.graph.split_mask(Split::Train))?;
                let value = loss.to_vec()[0];
                if !value.is_finite() {
                    return Err(GipaError::Diverged(format!("training loss {value} at epoch {epoch}")));
                }
                loss_weighted += value * (local_train.len() * cols) as f64;
                loss_entries += local_train.len() * cols;
                tape.backward(&loss)?;
                adam.step(&tensors)?;
            }
        }

        if loss_entries == 0 {
            return Err(GipaError::contract("train", "no training nodes in the split"));
        }
        records.push(EpochRecord {
            epoch,
            split: Split::Train,
            loss: loss_weighted / loss_entries as f64,
            auc: mean_auc_of(&train_scores, &graph.labels, &train_rows)?,
            seconds: started.elapsed().as_secs_f64(),
        });

        if epoch % t.eval_interval != 0 && epoch != t.max_epochs {
            continue;
        }
        let eval_started = Instant::now();
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, graph, &encoder)?;
        let scores = Matrix { rows: graph.n_nodes, cols: graph.labels.cols, data: logits.to_vec() };
        let valid_auc = mean_auc_of(&scores, &graph.labels, &valid_rows)?;
        let eval_seconds = eval_started.elapsed().as_secs_f64();
        for (split, rows) in [(Split::Valid, &valid_rows), (Split::Test, &test_rows)] {
            if rows.is_empty() {
                continue;
            }
            records.push(EpochRecord {
                epoch,
                split,
                loss: split_loss(&mut tape, &logits, graph, split)?,
                auc: mean_auc_of(&scores, &graph.labels, rows)?,
                seconds: eval_seconds,
            });
        }

        let improved = match (valid_auc, &best) {
            (Some(v), Some((_, b, _, _))) => v > *b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            let v = valid_auc.unwrap();
            let test_auc = mean_auc_of(&scores, &graph.labels, &test_rows)?.unwrap_or(f64::NAN);
            let snapshot = tensors.iter().map(|t| t.to_vec()).collect();
            best = Some((epoch, v, test_auc, snapshot));
            evals_since_best = 0;
        } else {
            evals_since_best += 1;
            if evals_since_best >= t.patience {
                log::info!("early stop at epoch {epoch}: no improvement in {evals_since_best} evals");
                break;
            }
        }
    }

    let (best_epoch, best_valid_auc, test_auc_at_best, snapshot) = best.ok_or_else(|| {
        GipaError::UndefinedAuc("validation AUC was undefined at every evaluation".to_string())
    })?;
    for (tensor, data) in tensors.iter().zip(&snapshot) {
        tensor.set_data(data)?;
    }
    Ok(TrainResult {
        records,
        best_epoch,
        best_valid_auc,
        test_auc_at_best,
        checkpoint: Checkpoint { model, encoder },
    })
}

/// Score every split of `graph` under a trained checkpoint.
pub fn evaluate(graph: &Graph, checkpoint: &Checkpoint) -> Result<Vec<SplitMetrics>> {
    let mut tape = Tape::new();
    let logits = checkpoint.model.forward(&mut tape, graph, &checkpoint.encoder)?;
    let scores = Matrix { rows: graph.n_nodes, cols: graph.labels.cols, data: logits.to_vec() };
    let mut out = Vec::new();
    for split in [Split::Train, Split::Valid, Split::Test] {
        let rows = graph.split_nodes(split);
        if rows.is_empty() {
            continue;
        }
        out.push(SplitMetrics {
            split,
            loss: split_loss(&mut tape, &logits, graph, split)?,
            auc: mean_label_auc(&scores, &graph.labels, &rows)?,
        });
    }
    Ok(out)
}

/// Mean and population standard deviation of test AUC over seeds, one row
/// per ablation.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub per_seed: Vec<f64>,
}

/// Train the four ablation variants over the configured seed list.
pub fn ablate(graph: &Graph, config: &TrainConfig) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for ablation in Ablation::ALL {
        let mut per_seed = Vec::new();
        for &seed in &config.training.seeds {
            let mut run = config.clone();
            run.model.ablation = ablation;
            run.training.seed = seed;
            let result = train(graph, &run)?;
            log::info!("ablate {ablation} seed {seed}: test AUC {:.4}", result.test_auc_at_best);
            per_seed.push(result.test_auc_at_best);
        }
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let var = per_seed.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        rows.push(AblationRow { ablation, mean_auc: mean, std_auc: var.sqrt(), per_seed });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetFiles;
    use crate::graph::build_graph;
    use crate::synthetic::{generate, SyntheticSpec};

    fn toy_graph(seed: u64, beta: f64) -> Graph {
        let spec = SyntheticSpec {
            n_nodes: 120,
            avg_degree: 5.0,
            num_node_features: 5,
            num_edge_features: 3,
            num_labels: 2,
            beta,
            noise_fraction: 0.2,
            seed,
            train_fraction: 0.5,
            valid_fraction: 0.25,
        };
        to_graph(&generate(&spec).unwrap())
    }

    fn to_graph(d: &DatasetFiles) -> Graph {
        build_graph(&d.edges, &d.edge_feat, d.node_feat.clone(), d.labels.clone(), d.split.clone(), false).unwrap()
    }

    fn fast_config(seed: u64) -> TrainConfig {
        let mut config = TrainConfig::default();
        config.model.layers = 1;
        config.model.dense_width = 6;
        config.model.edge_width = 3;
        config.model.hidden = 6;
        config.model.buckets = 4;
        config.training.max_epochs = 12;
        config.training.eval_interval = 3;
        config.training.seed = seed;
        config
    }

    #[test]
    fn loss_descends_and_records_are_well_formed() {
        let graph = toy_graph(101, 0.3);
        let result = train(&graph, &fast_config(7)).unwrap();
        let train_losses: Vec<f64> =
            result.records.iter().filter(|r| r.split == Split::Train).map(|r| r.loss).collect();
        assert_eq!(train_losses.len(), 12, "one train record per epoch");
        assert!(train_losses[11] < train_losses[0], "{train_losses:?}");
        assert!(train_losses.iter().all(|l| l.is_finite()));

        let evals: Vec<&EpochRecord> = result.records.iter().filter(|r| r.split == Split::Valid).collect();
        assert_eq!(evals.len(), 4, "evals at epochs 3, 6, 9, 12");
        assert!(evals.iter().all(|r| r.epoch % 3 == 0));
        assert!(result.best_valid_auc > 0.0 && result.best_valid_auc <= 1.0);
        assert!(result.records.iter().any(|r| r.split == Split::Test));
    }

    #[test]
    fn training_is_bit_deterministic() {
        let graph = toy_graph(103, 0.5);
        let a = train(&graph, &fast_config(9)).unwrap();
        let b = train(&graph, &fast_config(9)).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.epoch, rb.epoch);
            assert_eq!(ra.split, rb.split);
            assert_eq!(ra.loss.to_bits(), rb.loss.to_bits());
            assert_eq!(ra.auc.map(f64::to_bits), rb.auc.map(f64::to_bits));
        }
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.test_auc_at_best.to_bits(), b.test_auc_at_best.to_bits());
        for ((na, ta), (_, tb)) in a.checkpoint.model.params().iter().zip(b.checkpoint.model.params().iter()) {
            assert_eq!(ta.to_vec(), tb.to_vec(), "{na} differs between identical runs");
        }

        let c = train(&graph, &fast_config(10)).unwrap();
        assert_ne!(a.test_auc_at_best.to_bits(), c.test_auc_at_best.to_bits());
    }

    #[test]
    fn partitioned_training_covers_every_node_and_descends() {
        let graph = toy_graph(107, 0.4);
        let mut config = fast_config(11);
        config.training.partitions = 3;
        let result = train(&graph, &config).unwrap();
        let train_records: Vec<&EpochRecord> =
            result.records.iter().filter(|r| r.split == Split::Train).collect();
        assert_eq!(train_records.len(), 12);
        assert!(train_records[11].loss < train_records[0].loss);
        assert!(train_records.iter().all(|r| r.auc.is_some()));
    }

    #[test]
    fn checkpoint_restores_best_epoch_scores_bit_exactly() {
        let graph = toy_graph(109, 0.6);
        let result = train(&graph, &fast_config(13)).unwrap();
        let direct = evaluate(&graph, &result.checkpoint).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        result.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let reloaded = evaluate(&graph, &loaded).unwrap();

        assert_eq!(direct.len(), reloaded.len());
        for (a, b) in direct.iter().zip(&reloaded) {
            assert_eq!(a.split, b.split);
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(a.auc.mean.to_bits(), b.auc.mean.to_bits());
        }
        let valid = direct.iter().find(|m| m.split == Split::Valid).unwrap();
        assert_eq!(valid.auc.mean.to_bits(), result.best_valid_auc.to_bits());
        let test = direct.iter().find(|m| m.split == Split::Test).unwrap();
        assert_eq!(test.auc.mean.to_bits(), result.test_auc_at_best.to_bits());
    }

    #[test]
    fn evaluate_leaves_the_model_untouched() {
        let graph = toy_graph(113, 0.2);
        let result = train(&graph, &fast_config(17)).unwrap();
        let before: Vec<Vec<f64>> =
            result.checkpoint.model.params().iter().map(|(_, t)| t.to_vec()).collect();
        evaluate(&graph, &result.checkpoint).unwrap();
        evaluate(&graph, &result.checkpoint).unwrap();
        let after: Vec<Vec<f64>> =
            result.checkpoint.model.params().iter().map(|(_, t)| t.to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn missing_training_split_is_a_contract_error() {
        let graph = toy_graph(127, 0.5);
        let mut no_train = graph.clone();
        no_train.split = vec![Split::Test; no_train.n_nodes];
        assert!(matches!(train(&no_train, &fast_config(1)), Err(GipaError::Contract { .. })));
    }

    #[test]
    fn beta_zero_edge_blind_model_keeps_pace_with_full_model() {
        // all label signal lives in the node's own features here
        let spec = SyntheticSpec {
            n_nodes: 260,
            avg_degree: 5.0,
            num_node_features: 6,
            num_edge_features: 3,
            num_labels: 2,
            beta: 0.0,
            noise_fraction: 0.3,
            seed: 131,
            train_fraction: 0.5,
            valid_fraction: 0.25,
        };
        let graph = to_graph(&generate(&spec).unwrap());
        let mut config = fast_config(19);
        config.model.dense_width = 8;
        config.model.hidden = 8;
        config.training.max_epochs = 60;
        config.training.eval_interval = 5;

        let full = train(&graph, &config).unwrap();
        config.model.ablation = Ablation::NoEdgeFeature;
        let blind = train(&graph, &config).unwrap();
        assert!(full.test_auc_at_best > 0.80, "full: {}", full.test_auc_at_best);
        assert!(blind.test_auc_at_best > 0.80, "blind: {}", blind.test_auc_at_best);
        assert!(
            (full.test_auc_at_best - blind.test_auc_at_best).abs() < 0.08,
            "full {} vs blind {}",
            full.test_auc_at_best,
            blind.test_auc_at_best
        );
    }
}
