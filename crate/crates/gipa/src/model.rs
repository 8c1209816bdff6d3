//! The full stack bundled as one unit: edge embedding map, K layers and
//! the wide & deep head, with stable parameter naming, deterministic
//! initialization and a versioned JSON checkpoint format.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::write_atomic;
use crate::encode::{embed_edges, FeatureEncoder};
use crate::error::{GipaError, Result};
use crate::graph::Graph;
use crate::head::{predict, HeadParams};
use crate::layer::{glorot, stack_forward, Ablation, AttentionKind, GipaLayerParams, LayerDims};
use crate::tensor::{Tape, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Global widths. Per-layer dims are derived: layer 1 consumes the encoder
/// outputs (`m_raw` dense, `m_raw * (k_buckets + 1)` sparse), later layers
/// consume `n`/`m_raw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Raw node feature count; also the sparse-path width at every layer.
    pub m_raw: usize,
    pub k_buckets: usize,
    /// Raw edge feature count.
    pub d_e_raw: usize,
    /// Embedded edge width shared by all layers.
    pub d_e: usize,
    /// Dense-path width.
    pub n: usize,
    /// Hidden width of all internal MLPs.
    pub hidden: usize,
    pub n_labels: usize,
    pub n_layers: usize,
}

impl ModelDims {
    pub fn layer_dims(&self, k: usize) -> LayerDims {
        LayerDims {
            in_dense: if k == 0 { self.m_raw } else { self.n },
            in_sparse: if k == 0 { self.m_raw * (self.k_buckets + 1) } else { self.m_raw },
            n: self.n,
            m: self.m_raw,
            d_e: self.d_e,
            hidden: self.hidden,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m_raw", self.m_raw),
            ("k_buckets", self.k_buckets),
            ("d_e_raw", self.d_e_raw),
            ("d_e", self.d_e),
            ("n", self.n),
            ("hidden", self.hidden),
            ("n_labels", self.n_labels),
            ("n_layers", self.n_layers),
        ] {
            if v == 0 {
                return Err(GipaError::Config(format!("model dimension {name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GipaModel {
    pub dims: ModelDims,
    pub ablation: Ablation,
    pub attention: AttentionKind,
    /// Linear map from z-scored raw edge features, `[d_e_raw, d_e]`.
    /// Present but unused under `no_edge_feature`.
    pub w_edge: Tensor,
    pub layers: Vec<GipaLayerParams>,
    pub head: HeadParams,
}

impl GipaModel {
    pub fn init(
        rng: &mut ChaCha20Rng,
        dims: ModelDims,
        ablation: Ablation,
        attention: AttentionKind,
    ) -> Result<GipaModel> {
        dims.validate()?;
        let w_edge = glorot(rng, dims.d_e_raw, dims.d_e);
        let mut layers = Vec::with_capacity(dims.n_layers);
        for k in 0..dims.n_layers {
            layers.push(GipaLayerParams::init(rng, dims.layer_dims(k), ablation)?);
        }
        let head = HeadParams::init(rng, dims.n, dims.m_raw, dims.hidden, dims.n_labels);
        Ok(GipaModel { dims, ablation, attention, w_edge, layers, head })
    }

    /// Every learnable tensor with a stable unique name, in a fixed order.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("w_edge".to_string(), self.w_edge.clone())];
        for (k, layer) in self.layers.iter().enumerate() {
            layer.params_into(&format!("layer{k}"), &mut out);
        }
        self.head.params_into("head", &mut out);
        out
    }

    /// Per-node, per-label logits `[N, n_labels]`. The encoder must match
    /// the dims the model was built with.
    pub fn forward(&self, tape: &mut Tape, graph: &Graph, encoder: &FeatureEncoder) -> Result<Tensor> {
        if encoder.num_features() != self.dims.m_raw || encoder.k_buckets() != self.dims.k_buckets {
            return Err(GipaError::Config(format!(
                "encoder is {} features x {} buckets, model expects {} x {}",
                encoder.num_features(),
                encoder.k_buckets(),
                self.dims.m_raw,
                self.dims.k_buckets
            )));
        }
        let h_d = encoder.dense_embed(&graph.node_feat)?;
        let h_s = encoder.sparse_embed(&graph.node_feat)?;
        let e = if self.ablation == Ablation::NoEdgeFeature {
            None
        } else {
            Some(embed_edges(tape, &graph.edge_feat, &self.w_edge)?)
        };
        let (o_d, o_s) = stack_forward(
            tape,
            graph,
            &h_d,
            &h_s,
            e.as_ref(),
            &self.layers,
            self.ablation,
            self.attention,
        )?;
        predict(tape, &o_d, &o_s, &self.head)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    dims: ModelDims,
    ablation: Ablation,
    attention: AttentionKind,
    encoder: FeatureEncoder,
    tensors: Vec<NamedTensor>,
}

/// Model weights plus the fitted encoder, enough to reproduce inference
/// bit for bit.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: GipaModel,
    pub encoder: FeatureEncoder,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors = self
            .model
            .params()
            .into_iter()
            .map(|(name, t)| NamedTensor { name, shape: t.shape().to_vec(), data: t.to_vec() })
            .collect();
        let file = CheckpointFile {
            version: CHECKPOINT_FORMAT_VERSION,
            dims: self.model.dims,
            ablation: self.model.ablation,
            attention: self.model.attention,
            encoder: self.encoder.clone(),
            tensors,
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| GipaError::Serde(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.version != CHECKPOINT_FORMAT_VERSION {
            return Err(GipaError::Checkpoint(format!(
                "format version {} unsupported (expected {})",
                file.version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let model = GipaModel::init(&mut rng, file.dims, file.ablation, file.attention)?;
        let params = model.params();
        if params.len() != file.tensors.len() {
            return Err(GipaError::Checkpoint(format!(
                "{} tensors stored, model has {}",
                file.tensors.len(),
                params.len()
            )));
        }
        for ((name, param), stored) in params.into_iter().zip(&file.tensors) {
            if stored.name != name {
                return Err(GipaError::Checkpoint(format!(
                    "tensor {} out of place (expected {})",
                    stored.name, name
                )));
            }
            if stored.shape != param.shape() {
                return Err(GipaError::Checkpoint(format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    name,
                    stored.shape,
                    param.shape()
                )));
            }
            param.set_data(&stored.data)?;
        }
        Ok(Checkpoint { model, encoder: file.encoder })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::BucketMethod;
    use crate::graph::{build_graph, Split};
    use crate::matrix::Matrix;
    use rand::Rng;

    fn dims(n_layers: usize) -> ModelDims {
        ModelDims {
            m_raw: 2,
            k_buckets: 3,
            d_e_raw: 2,
            d_e: 2,
            n: 3,
            hidden: 4,
            n_labels: 2,
            n_layers,
        }
    }

    fn toy_setup(seed: u64) -> (Graph, FeatureEncoder) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = 7;
        let node_feat =
            Matrix::from_rows((0..n).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(0.0..5.0)]).collect());
        let labels = Matrix::from_rows((0..n).map(|_| vec![f64::from(rng.gen_bool(0.5)), 1.0]).collect());
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (5, 6), (6, 0), (2, 5), (4, 1)];
        let edge_feat =
            Matrix::from_rows(edges.iter().map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect());
        let split = vec![Split::Train; n];
        let g = build_graph(&edges, &edge_feat, node_feat, labels, split, false).unwrap();
        let enc = FeatureEncoder::fit(&g.node_feat, 3, BucketMethod::EqualFrequency).unwrap();
        (g, enc)
    }

    #[test]
    fn parameter_names_are_unique_and_counted() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let model = GipaModel::init(&mut rng, dims(3), Ablation::Full, AttentionKind::Softplus).unwrap();
        let params = model.params();
        // 22 tensors per layer, w_edge, 5 in the head
        assert_eq!(params.len(), 3 * 22 + 6);
        let mut names: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"w_edge"));
        assert!(names.contains(&"layer0.att_d.w1"));
        assert!(names.contains(&"layer2.proj_s"));
        assert!(names.contains(&"head.deep.b2"));
        assert!(names.contains(&"head.wide"));
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), params.len(), "duplicate parameter names");
    }

    #[test]
    fn same_seed_same_model_different_seed_different_model() {
        let a = GipaModel::init(
            &mut ChaCha20Rng::seed_from_u64(5),
            dims(2),
            Ablation::Full,
            AttentionKind::Softplus,
        )
        .unwrap();
        let b = GipaModel::init(
            &mut ChaCha20Rng::seed_from_u64(5),
            dims(2),
            Ablation::Full,
            AttentionKind::Softplus,
        )
        .unwrap();
        let c = GipaModel::init(
            &mut ChaCha20Rng::seed_from_u64(6),
            dims(2),
            Ablation::Full,
            AttentionKind::Softplus,
        )
        .unwrap();
        for (((_, pa), (_, pb)), (_, pc)) in a.params().iter().zip(b.params().iter()).zip(c.params().iter()) {
            assert_eq!(pa.to_vec(), pb.to_vec());
            // biases start at zero under every seed; only weights vary
            if pa.shape().len() == 2 {
                assert_ne!(pa.to_vec(), pc.to_vec());
            }
        }
    }

    #[test]
    fn glorot_samples_stay_within_limit() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let t = glorot(&mut rng, 6, 4);
        let limit = (6.0 / 10.0_f64).sqrt();
        for v in t.to_vec() {
            assert!(v.abs() < limit);
        }
    }

    #[test]
    fn forward_emits_one_logit_row_per_node() {
        let (g, enc) = toy_setup(47);
        let mut rng = ChaCha20Rng::seed_from_u64(49);
        let model = GipaModel::init(&mut rng, dims(2), Ablation::Full, AttentionKind::Softplus).unwrap();
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &g, &enc).unwrap();
        assert_eq!(logits.shape(), &[7, 2]);
        assert!(logits.to_vec().iter().all(|v| v.is_finite()));

        // same model, fresh tape: bit-identical logits
        let mut tape = Tape::new();
        let again = model.forward(&mut tape, &g, &enc).unwrap();
        assert_eq!(logits.to_vec(), again.to_vec());
    }

    #[test]
    fn forward_rejects_mismatched_encoder() {
        let (g, _) = toy_setup(53);
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let model = GipaModel::init(&mut rng, dims(1), Ablation::Full, AttentionKind::Softplus).unwrap();
        let wrong = FeatureEncoder::fit(&g.node_feat, 5, BucketMethod::EqualWidth).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(model.forward(&mut tape, &g, &wrong), Err(GipaError::Config(_))));
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let (g, enc) = toy_setup(59);
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        let model = GipaModel::init(&mut rng, dims(2), Ablation::NoEdgeFeature, AttentionKind::Tanh).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        Checkpoint { model: model.clone(), encoder: enc.clone() }.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        assert_eq!(loaded.model.dims, model.dims);
        assert_eq!(loaded.model.ablation, Ablation::NoEdgeFeature);
        assert_eq!(loaded.model.attention, AttentionKind::Tanh);
        assert_eq!(loaded.encoder, enc);
        for ((na, ta), (nb, tb)) in model.params().iter().zip(loaded.model.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.to_vec(), tb.to_vec(), "{na} drifted through the checkpoint");
        }

        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = model.forward(&mut t1, &g, &enc).unwrap();
        let b = loaded.model.forward(&mut t2, &g, &loaded.encoder).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn checkpoint_rejects_tampered_files() {
        let (_, enc) = toy_setup(67);
        let mut rng = ChaCha20Rng::seed_from_u64(67);
        let model = GipaModel::init(&mut rng, dims(1), Ablation::Full, AttentionKind::Softplus).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        Checkpoint { model, encoder: enc }.save(&path).unwrap();
        let original = std::fs::read_to_string(&path).unwrap();

        let bad_version = original.replacen("\"version\": 1", "\"version\": 9", 1);
        std::fs::write(&path, bad_version).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(GipaError::Checkpoint(_))));

        let bad_name = original.replacen("\"w_edge\"", "\"w_hedge\"", 1);
        std::fs::write(&path, bad_name).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(GipaError::Checkpoint(_))));

        let bad_shape = original.replacen("\"shape\": [\n        2,\n        2\n      ]", "\"shape\": [\n        4,\n        1\n      ]", 1);
        assert_ne!(bad_shape, original, "tamper pattern must hit");
        std::fs::write(&path, bad_shape).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(GipaError::Checkpoint(_))));
    }
}
