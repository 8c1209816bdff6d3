//! One edge-aware attention layer: bit-wise (dense) and feature-wise
//! (sparse) attention, edge-conditioned propagation, message formation and
//! residual aggregation; stackable K times.
//!
//! Both paths share one edge embedding. The dense path outputs width `n`
//! at every layer; the sparse path is held at width `m`, one channel per
//! raw node feature, so feature identity survives stacking.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GipaError, Result};
use crate::graph::Graph;
use crate::tensor::{Activation, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    Softplus,
    /// Normalizes per destination segment per column.
    Softmax,
    LeakyRelu,
    Relu,
    Tanh,
    None,
}

impl std::str::FromStr for AttentionKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<AttentionKind, String> {
        match s {
            "softplus" => Ok(AttentionKind::Softplus),
            "softmax" => Ok(AttentionKind::Softmax),
            "leaky_relu" => Ok(AttentionKind::LeakyRelu),
            "relu" => Ok(AttentionKind::Relu),
            "tanh" => Ok(AttentionKind::Tanh),
            "none" => Ok(AttentionKind::None),
            other => Err(format!("unknown attention activation {other:?}")),
        }
    }
}

impl std::fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionKind::Softplus => "softplus",
            AttentionKind::Softmax => "softmax",
            AttentionKind::LeakyRelu => "leaky_relu",
            AttentionKind::Relu => "relu",
            AttentionKind::Tanh => "tanh",
            AttentionKind::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    /// Dense-path attention replaced by ones.
    NoBitwise,
    /// Sparse-path attention replaced by ones.
    NoFeaturewise,
    /// Edge embeddings dropped from every MLP input (narrower weights).
    NoEdgeFeature,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoBitwise,
        Ablation::NoFeaturewise,
        Ablation::NoEdgeFeature,
    ];

    /// Edge-embedding width seen by the MLPs under this ablation.
    pub fn edge_width(self, d_e: usize) -> usize {
        if self == Ablation::NoEdgeFeature {
            0
        } else {
            d_e
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Ablation, String> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_bitwise" => Ok(Ablation::NoBitwise),
            "no_featurewise" => Ok(Ablation::NoFeaturewise),
            "no_edge_feature" => Ok(Ablation::NoEdgeFeature),
            other => Err(format!("unknown ablation {other:?}")),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoBitwise => "no_bitwise",
            Ablation::NoFeaturewise => "no_featurewise",
            Ablation::NoEdgeFeature => "no_edge_feature",
        })
    }
}

/// Glorot-uniform initialized parameter matrix.
pub fn glorot(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::param(vec![rows, cols], data).unwrap()
}

/// Two affine layers with relu between; biases optional (attention MLPs
/// carry none).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Option<Tensor>,
    pub w2: Tensor,
    pub b2: Option<Tensor>,
}

impl Mlp {
    pub fn init(rng: &mut ChaCha20Rng, input: usize, hidden: usize, output: usize, biased: bool) -> Mlp {
        let w1 = glorot(rng, input, hidden);
        let b1 = biased.then(|| Tensor::param(vec![hidden], vec![0.0; hidden]).unwrap());
        let w2 = glorot(rng, hidden, output);
        let b2 = biased.then(|| Tensor::param(vec![output], vec![0.0; output]).unwrap());
        Mlp { w1, b1, w2, b2 }
    }

    pub fn input_width(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.w2.shape()[1]
    }

    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let mut h = tape.matmul(x, &self.w1)?;
        if let Some(b) = &self.b1 {
            h = tape.add_bias(&h, b)?;
        }
        let h = tape.activation(Activation::Relu, &h);
        let mut out = tape.matmul(&h, &self.w2)?;
        if let Some(b) = &self.b2 {
            out = tape.add_bias(&out, b)?;
        }
        Ok(out)
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w1"), self.w1.clone()));
        if let Some(b) = &self.b1 {
            out.push((format!("{prefix}.b1"), b.clone()));
        }
        out.push((format!("{prefix}.w2"), self.w2.clone()));
        if let Some(b) = &self.b2 {
            out.push((format!("{prefix}.b2"), b.clone()));
        }
    }
}

/// Widths of one layer. `in_dense`/`in_sparse` are what the layer consumes
/// (encoder widths at layer 1, then `n`/`m`); every layer emits `n` dense
/// and `m` sparse columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDims {
    pub in_dense: usize,
    pub in_sparse: usize,
    pub n: usize,
    pub m: usize,
    pub d_e: usize,
    /// Hidden width of the internal 2-affine MLPs.
    pub hidden: usize,
}

impl LayerDims {
    fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("in_dense", self.in_dense),
            ("in_sparse", self.in_sparse),
            ("n", self.n),
            ("m", self.m),
            ("d_e", self.d_e),
            ("hidden", self.hidden),
        ] {
            if w == 0 {
                return Err(GipaError::Config(format!("layer width {name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// All learnable tensors of one layer.
#[derive(Debug, Clone)]
pub struct GipaLayerParams {
    pub dims: LayerDims,
    /// Bit-wise attention MLP, bias-free, output width `n`.
    pub att_d: Mlp,
    /// Feature-wise attention MLP, bias-free, output width `m`.
    pub att_s: Mlp,
    pub prop_d: Mlp,
    pub prop_s: Mlp,
    pub agg_d: Mlp,
    pub agg_s: Mlp,
    /// Residual projection `[in_dense, n]`.
    pub proj_d: Tensor,
    /// Residual projection `[in_sparse, m]`.
    pub proj_s: Tensor,
}

impl GipaLayerParams {
    pub fn init(rng: &mut ChaCha20Rng, dims: LayerDims, ablation: Ablation) -> Result<GipaLayerParams> {
        dims.validate()?;
        let e = ablation.edge_width(dims.d_e);
        let h = dims.hidden;
        Ok(GipaLayerParams {
            dims,
            att_d: Mlp::init(rng, 2 * dims.in_dense + e, h, dims.n, false),
            att_s: Mlp::init(rng, 2 * dims.in_sparse + e, h, dims.m, false),
            prop_d: Mlp::init(rng, dims.in_dense + e, h, dims.n, true),
            prop_s: Mlp::init(rng, dims.in_sparse + e, h, dims.m, true),
            agg_d: Mlp::init(rng, dims.n + dims.in_dense, h, dims.n, true),
            agg_s: Mlp::init(rng, dims.m + dims.in_sparse, h, dims.m, true),
            proj_d: glorot(rng, dims.in_dense, dims.n),
            proj_s: glorot(rng, dims.in_sparse, dims.m),
        })
    }

    /// Weight shapes must agree with `dims` under the given ablation.
    pub fn validate(&self, ablation: Ablation) -> Result<()> {
        let d = &self.dims;
        let e = ablation.edge_width(d.d_e);
        let checks = [
            ("att_d", self.att_d.input_width(), 2 * d.in_dense + e, self.att_d.output_width(), d.n),
            ("att_s", self.att_s.input_width(), 2 * d.in_sparse + e, self.att_s.output_width(), d.m),
            ("prop_d", self.prop_d.input_width(), d.in_dense + e, self.prop_d.output_width(), d.n),
            ("prop_s", self.prop_s.input_width(), d.in_sparse + e, self.prop_s.output_width(), d.m),
            ("agg_d", self.agg_d.input_width(), d.n + d.in_dense, self.agg_d.output_width(), d.n),
            ("agg_s", self.agg_s.input_width(), d.m + d.in_sparse, self.agg_s.output_width(), d.m),
        ];
        for (name, got_in, want_in, got_out, want_out) in checks {
            if got_in != want_in || got_out != want_out {
                return Err(GipaError::Config(format!(
                    "{name} is {got_in}->{got_out}, dims and ablation {ablation} require {want_in}->{want_out}"
                )));
            }
        }
        if self.proj_d.shape() != [d.in_dense, d.n] || self.proj_s.shape() != [d.in_sparse, d.m] {
            return Err(GipaError::Config(format!(
                "projection shapes {:?}/{:?} disagree with dims",
                self.proj_d.shape(),
                self.proj_s.shape()
            )));
        }
        if self.att_d.b1.is_some() || self.att_d.b2.is_some() || self.att_s.b1.is_some() || self.att_s.b2.is_some() {
            return Err(GipaError::Config("attention MLPs must be bias-free".to_string()));
        }
        Ok(())
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.att_d.params_into(&format!("{prefix}.att_d"), out);
        self.att_s.params_into(&format!("{prefix}.att_s"), out);
        self.prop_d.params_into(&format!("{prefix}.prop_d"), out);
        self.prop_s.params_into(&format!("{prefix}.prop_s"), out);
        self.agg_d.params_into(&format!("{prefix}.agg_d"), out);
        self.agg_s.params_into(&format!("{prefix}.agg_s"), out);
        out.push((format!("{prefix}.proj_d"), self.proj_d.clone()));
        out.push((format!("{prefix}.proj_s"), self.proj_s.clone()));
    }
}

fn concat3(tape: &mut Tape, a: &Tensor, b: &Tensor, e: Option<&Tensor>) -> Result<Tensor> {
    match e {
        Some(e) => tape.concat_rows(&[a, b, e]),
        None => tape.concat_rows(&[a, b]),
    }
}

/// Per-edge bit-wise attention logits `[E, n]` from edge-aligned
/// destination, source and edge embeddings.
pub fn attention_dense(
    tape: &mut Tape,
    h_i: &Tensor,
    h_j: &Tensor,
    e: Option<&Tensor>,
    w_att: &Mlp,
) -> Result<Tensor> {
    let cat = concat3(tape, h_i, h_j, e)?;
    w_att.forward(tape, &cat)
}

/// Per-edge feature-wise attention logits `[E, m]`.
pub fn attention_sparse(
    tape: &mut Tape,
    h_i: &Tensor,
    h_j: &Tensor,
    e: Option<&Tensor>,
    w_att: &Mlp,
) -> Result<Tensor> {
    let cat = concat3(tape, h_i, h_j, e)?;
    w_att.forward(tape, &cat)
}

/// Turn logits into attention weights. Softmax normalizes within each
/// destination segment per column; everything else is pointwise.
pub fn activate_attention(
    tape: &mut Tape,
    logits: &Tensor,
    kind: AttentionKind,
    segments: &[usize],
    n_segments: usize,
) -> Result<Tensor> {
    match kind {
        AttentionKind::Softmax => tape.segment_softmax(logits, segments, n_segments),
        AttentionKind::Softplus => Ok(tape.activation(Activation::Softplus, logits)),
        AttentionKind::LeakyRelu => Ok(tape.activation(Activation::LeakyRelu, logits)),
        AttentionKind::Relu => Ok(tape.activation(Activation::Relu, logits)),
        AttentionKind::Tanh => Ok(tape.activation(Activation::Tanh, logits)),
        AttentionKind::None => Ok(tape.activation(Activation::Identity, logits)),
    }
}

/// Per-edge propagated content from the source embedding and the edge
/// embedding; the destination's own embedding is excluded.
pub fn propagate_dense(
    tape: &mut Tape,
    h_j: &Tensor,
    e: Option<&Tensor>,
    w_prop: &Mlp,
) -> Result<Tensor> {
    let cat = match e {
        Some(e) => tape.concat_rows(&[h_j, e])?,
        None => h_j.clone(),
    };
    w_prop.forward(tape, &cat)
}

pub fn propagate_sparse(
    tape: &mut Tape,
    h_j: &Tensor,
    e: Option<&Tensor>,
    w_prop: &Mlp,
) -> Result<Tensor> {
    propagate_dense(tape, h_j, e, w_prop)
}

/// Element-wise gate: one weight per message entry.
pub fn message(tape: &mut Tape, attention: &Tensor, propagated: &Tensor) -> Result<Tensor> {
    tape.mul(attention, propagated)
}

/// Sum messages into destinations, mix with the node's own embedding
/// through the aggregation MLP, and add the residual projection.
pub fn aggregate(
    tape: &mut Tape,
    messages: &Tensor,
    segments: &[usize],
    n_segments: usize,
    h_nodes: &Tensor,
    w_agg: &Mlp,
    w_proj: &Tensor,
) -> Result<Tensor> {
    let summed = tape.segment_sum(messages, segments, n_segments)?;
    let cat = tape.concat_rows(&[&summed, h_nodes])?;
    let mixed = w_agg.forward(tape, &cat)?;
    let residual = tape.matmul(h_nodes, w_proj)?;
    tape.add(&mixed, &residual)
}

/// One layer over both paths. `h_d`/`h_s` are node-aligned, `e` is
/// CSR-slot-aligned. Under `NoEdgeFeature` the edge embedding is dropped;
/// under `NoBitwise`/`NoFeaturewise` that path's attention is ones.
pub fn layer_forward(
    tape: &mut Tape,
    graph: &Graph,
    h_d: &Tensor,
    h_s: &Tensor,
    e: Option<&Tensor>,
    params: &GipaLayerParams,
    ablation: Ablation,
    kind: AttentionKind,
) -> Result<(Tensor, Tensor)> {
    params.validate(ablation)?;
    let dims = &params.dims;
    let (nodes_d, w_d) = h_d.dims2()?;
    let (nodes_s, w_s) = h_s.dims2()?;
    if nodes_d != graph.n_nodes || nodes_s != graph.n_nodes {
        return Err(GipaError::Config(format!(
            "{} dense / {} sparse rows for {} nodes",
            nodes_d, nodes_s, graph.n_nodes
        )));
    }
    if w_d != dims.in_dense || w_s != dims.in_sparse {
        return Err(GipaError::Config(format!(
            "input widths {w_d}/{w_s}, layer expects {}/{}",
            dims.in_dense, dims.in_sparse
        )));
    }
    let e = match (ablation, e) {
        (Ablation::NoEdgeFeature, _) => None,
        (_, Some(e)) => {
            let (rows, cols) = e.dims2()?;
            if rows != graph.n_edges() || cols != dims.d_e {
                return Err(GipaError::Config(format!(
                    "edge embedding {rows}x{cols}, expected {}x{}",
                    graph.n_edges(),
                    dims.d_e
                )));
            }
            Some(e)
        }
        (_, None) => {
            return Err(GipaError::Config(format!(
                "ablation {ablation} requires an edge embedding"
            )))
        }
    };

    let segments = graph.dst_ids();
    let n_edges = graph.n_edges();
    let h_di = tape.gather_rows(h_d, &segments)?;
    let h_dj = tape.gather_rows(h_d, &graph.src_ids)?;
    let h_si = tape.gather_rows(h_s, &segments)?;
    let h_sj = tape.gather_rows(h_s, &graph.src_ids)?;

    let att_d = if ablation == Ablation::NoBitwise {
        Tensor::constant(vec![n_edges, dims.n], vec![1.0; n_edges * dims.n])?
    } else {
        let logits = attention_dense(tape, &h_di, &h_dj, e, &params.att_d)?;
        activate_attention(tape, &logits, kind, &segments, graph.n_nodes)?
    };
    let att_s = if ablation == Ablation::NoFeaturewise {
        Tensor::constant(vec![n_edges, dims.m], vec![1.0; n_edges * dims.m])?
    } else {
        let logits = attention_sparse(tape, &h_si, &h_sj, e, &params.att_s)?;
        activate_attention(tape, &logits, kind, &segments, graph.n_nodes)?
    };

    let p_d = propagate_dense(tape, &h_dj, e, &params.prop_d)?;
    let p_s = propagate_sparse(tape, &h_sj, e, &params.prop_s)?;
    let m_d = message(tape, &att_d, &p_d)?;
    let m_s = message(tape, &att_s, &p_s)?;

    let o_d = aggregate(tape, &m_d, &segments, graph.n_nodes, h_d, &params.agg_d, &params.proj_d)?;
    let o_s = aggregate(tape, &m_s, &segments, graph.n_nodes, h_s, &params.agg_s, &params.proj_s)?;
    Ok((o_d, o_s))
}

/// K stacked layers, layer k feeding layer k+1; the edge embedding is
/// shared by every layer.
pub fn stack_forward(
    tape: &mut Tape,
    graph: &Graph,
    h_d: &Tensor,
    h_s: &Tensor,
    e: Option<&Tensor>,
    layers: &[GipaLayerParams],
    ablation: Ablation,
    kind: AttentionKind,
) -> Result<(Tensor, Tensor)> {
    if layers.is_empty() {
        return Err(GipaError::contract("stack_forward", "at least one layer required"));
    }
    for w in layers.windows(2) {
        let (a, b) = (&w[0].dims, &w[1].dims);
        if b.in_dense != a.n || b.in_sparse != a.m {
            return Err(GipaError::Config(format!(
                "layer chain broken: {}x{} feeds a layer expecting {}x{}",
                a.n, a.m, b.in_dense, b.in_sparse
            )));
        }
    }
    let (mut h_d, mut h_s) = (h_d.clone(), h_s.clone());
    for params in layers {
        let (od, os) = layer_forward(tape, graph, &h_d, &h_s, e, params, ablation, kind)?;
        h_d = od;
        h_s = os;
    }
    Ok((h_d, h_s))
}
