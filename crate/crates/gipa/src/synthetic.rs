//! Seeded synthetic dataset generator whose labels depend on an aggregate
//! of neighbor signals gated by a hidden sign carried in the edge
//! features. A configurable fraction of noise edges flips that sign, so
//! edge-aware attention has something real to suppress and an edge-blind
//! model has a measurable handicap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetFiles, Manifest, DATASET_FORMAT_VERSION};
use crate::error::{GipaError, Result};
use crate::graph::Split;
use crate::matrix::Matrix;

/// Spread of the per-column noise added on top of the edge sign.
const EDGE_NOISE_STD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub avg_degree: f64,
    pub num_node_features: usize,
    pub num_edge_features: usize,
    pub num_labels: usize,
    /// Edge-signal strength in [0, 1]: 0 puts all label signal in the
    /// node's own features, 1 puts it all in the sign-gated neighbor
    /// aggregate.
    pub beta: f64,
    /// Fraction of edges whose hidden sign is flipped to -1.
    pub noise_fraction: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> SyntheticSpec {
        SyntheticSpec {
            n_nodes: 600,
            avg_degree: 8.0,
            num_node_features: 8,
            num_edge_features: 4,
            num_labels: 3,
            beta: 0.8,
            noise_fraction: 0.3,
            seed: 1,
            train_fraction: 0.6,
            valid_fraction: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(GipaError::contract("generate", "at least two nodes required"));
        }
        for (name, v) in [
            ("num_node_features", self.num_node_features),
            ("num_edge_features", self.num_edge_features),
            ("num_labels", self.num_labels),
        ] {
            if v == 0 {
                return Err(GipaError::contract("generate", format!("{name} must be positive")));
            }
        }
        if !(self.avg_degree > 0.0) {
            return Err(GipaError::contract("generate", "avg_degree must be positive"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(GipaError::contract("generate", "beta must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(GipaError::contract("generate", "noise_fraction must lie in [0, 1]"));
        }
        let rest = 1.0 - self.train_fraction - self.valid_fraction;
        if self.train_fraction <= 0.0 || self.valid_fraction <= 0.0 || rest <= 0.0 {
            return Err(GipaError::contract(
                "generate",
                "train/valid/test fractions must all be positive",
            ));
        }
        Ok(())
    }
}

/// The generative draw behind a dataset. Exposed so tests can simulate
/// oracles that see the hidden state.
#[derive(Debug, Clone)]
pub struct GenerativeDraw {
    /// Node feature to latent label score map, `[m, L]`.
    pub w_latent: Matrix,
    /// Latent per-node scores `x * w_latent`, `[N, L]`.
    pub latent: Matrix,
    /// Hidden per-edge sign, +1 signal or -1 noise, aligned with `edges`.
    pub edge_signs: Vec<f64>,
    /// Directed endpoint pairs in generation order.
    pub edges: Vec<(usize, usize)>,
    /// Blended contribution each label threshold was applied to, `[N, L]`.
    pub contributions: Matrix,
}

fn sample_matrix(rng: &mut ChaCha20Rng, normal: &Normal<f64>, rows: usize, cols: usize) -> Matrix {
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
    }
}

/// Generate the dataset together with its hidden generative state.
pub fn generate_with_draw(spec: &SyntheticSpec) -> Result<(DatasetFiles, GenerativeDraw)> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (n, m, d, l) = (spec.n_nodes, spec.num_node_features, spec.num_edge_features, spec.num_labels);

    // fixed draw order: latent map, node features, endpoints, signs, edge noise, split
    let scale = 1.0 / (m as f64).sqrt();
    let mut w_latent = sample_matrix(&mut rng, &normal, m, l);
    for v in &mut w_latent.data {
        *v *= scale;
    }
    let node_feat = sample_matrix(&mut rng, &normal, n, m);

    let n_edges = (spec.avg_degree * n as f64).round() as usize;
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let src = rng.gen_range(0..n);
        let mut dst = rng.gen_range(0..n - 1);
        if dst >= src {
            dst += 1;
        }
        edges.push((src, dst));
    }
    let edge_signs: Vec<f64> = (0..n_edges)
        .map(|_| if rng.gen_range(0.0..1.0) < spec.noise_fraction { -1.0 } else { 1.0 })
        .collect();

    // edge features: sign along the unit diagonal direction plus noise
    let dir = 1.0 / (d as f64).sqrt();
    let mut edge_feat = sample_matrix(&mut rng, &normal, n_edges, d);
    for (k, row) in edge_feat.data.chunks_exact_mut(d).enumerate() {
        for v in row.iter_mut() {
            *v = edge_signs[k] * dir + EDGE_NOISE_STD * *v;
        }
    }

    // latent scores and sign-gated in-neighbor aggregates
    let mut latent = Matrix::zeros(n, l);
    for i in 0..n {
        for j in 0..l {
            let mut acc = 0.0;
            for p in 0..m {
                acc += node_feat.get(i, p) * w_latent.get(p, j);
            }
            latent.set(i, j, acc);
        }
    }
    let mut agg = Matrix::zeros(n, l);
    let mut in_degree = vec![0usize; n];
    for (k, &(src, dst)) in edges.iter().enumerate() {
        in_degree[dst] += 1;
        for j in 0..l {
            agg.set(dst, j, agg.get(dst, j) + edge_signs[k] * latent.get(src, j));
        }
    }
    let mut contributions = Matrix::zeros(n, l);
    for i in 0..n {
        let deg = in_degree[i].max(1) as f64;
        for j in 0..l {
            let c = (1.0 - spec.beta) * latent.get(i, j) + spec.beta * agg.get(i, j) / deg;
            contributions.set(i, j, c);
        }
    }

    // threshold each label at its lower median: balanced classes
    let mut labels = Matrix::zeros(n, l);
    for j in 0..l {
        let mut col: Vec<f64> = (0..n).map(|i| contributions.get(i, j)).collect();
        col.sort_unstable_by(f64::total_cmp);
        let median = col[(n - 1) / 2];
        for i in 0..n {
            labels.set(i, j, f64::from(contributions.get(i, j) > median));
        }
    }

    // seeded shuffle, then contiguous train/valid/test ranges
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 2);
    let n_valid = ((spec.valid_fraction * n as f64).round() as usize).clamp(1, n - 1 - n_train);
    let mut split = vec![Split::Test; n];
    for (rank, &node) in order.iter().enumerate() {
        split[node] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }

    let files = DatasetFiles {
        manifest: Manifest {
            version: DATASET_FORMAT_VERSION,
            n_nodes: n,
            n_edges,
            num_node_features: m,
            num_edge_features: d,
            num_labels: l,
            undirected: false,
        },
        node_feat,
        edges: edges.clone(),
        edge_feat,
        labels,
        split,
    };
    let draw = GenerativeDraw { w_latent, latent, edge_signs, edges, contributions };
    Ok((files, draw))
}

/// Generate a dataset; the hidden generative state is discarded.
pub fn generate(spec: &SyntheticSpec) -> Result<DatasetFiles> {
    Ok(generate_with_draw(spec)?.0)
}
