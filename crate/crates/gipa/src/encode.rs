//! Node feature encoding: a dense z-normalized path and a sparse one-hot
//! bucket path, plus the shared edge-feature embedding.
//!
//! Bucket boundaries come from training rows only. Each feature occupies a
//! `k_buckets + 1`-wide one-hot block; the last slot is reserved for
//! missing or unseen values. Integer-valued features with at most
//! `k_buckets` distinct training values are treated as categories and skip
//! bucketization.

use serde::{Deserialize, Serialize};

use crate::error::{GipaError, Result};
use crate::matrix::Matrix;
use crate::tensor::{Tape, Tensor};

/// Std floor keeping constant features finite under z-normalization.
pub const STD_FLOOR: f64 = 1e-8;

const ENCODER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketMethod {
    EqualWidth,
    EqualFrequency,
}

impl std::str::FromStr for BucketMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<BucketMethod, String> {
        match s {
            "equal_width" => Ok(BucketMethod::EqualWidth),
            "equal_frequency" => Ok(BucketMethod::EqualFrequency),
            other => Err(format!("unknown bucket method {other:?}")),
        }
    }
}

impl std::fmt::Display for BucketMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BucketMethod::EqualWidth => "equal_width",
            BucketMethod::EqualFrequency => "equal_frequency",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FeatureKind {
    /// Right-open intervals between `cuts`; ties at a cut go higher.
    Numeric { cuts: Vec<f64> },
    /// Sorted distinct integral training values; position is the bucket.
    Category { vocab: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    m: usize,
    k_buckets: usize,
    method: BucketMethod,
    features: Vec<FeatureKind>,
    /// Per-feature (mean, floored std) over finite training values.
    dense_stats: Vec<(f64, f64)>,
}

impl FeatureEncoder {
    /// Fit cut points and normalization stats on training rows.
    pub fn fit(train_node_feat: &Matrix, k_buckets: usize, method: BucketMethod) -> Result<FeatureEncoder> {
        if train_node_feat.rows == 0 {
            return Err(GipaError::contract("fit", "empty training set"));
        }
        if k_buckets == 0 {
            return Err(GipaError::contract("fit", "k_buckets must be at least 1"));
        }
        let m = train_node_feat.cols;
        let mut features = Vec::with_capacity(m);
        let mut dense_stats = Vec::with_capacity(m);
        for j in 0..m {
            let mut finite: Vec<f64> = (0..train_node_feat.rows)
                .map(|i| train_node_feat.get(i, j))
                .filter(|v| v.is_finite())
                .collect();
            finite.sort_unstable_by(f64::total_cmp);
            dense_stats.push(column_stats(&finite));
            features.push(fit_feature(&finite, k_buckets, method));
        }
        Ok(FeatureEncoder {
            m,
            k_buckets,
            method,
            features,
            dense_stats,
        })
    }

    pub fn num_features(&self) -> usize {
        self.m
    }

    pub fn k_buckets(&self) -> usize {
        self.k_buckets
    }

    pub fn method(&self) -> BucketMethod {
        self.method
    }

    /// Width of one one-hot block.
    pub fn block_width(&self) -> usize {
        self.k_buckets + 1
    }

    /// Total sparse embedding width, `m * (k_buckets + 1)`.
    pub fn sparse_width(&self) -> usize {
        self.m * self.block_width()
    }

    /// Bucket of value `x` for feature `j`, in `0..=k_buckets`;
    /// `k_buckets` is the reserved missing/unseen slot.
    pub fn bucket_of(&self, j: usize, x: f64) -> usize {
        if !x.is_finite() {
            return self.k_buckets;
        }
        match &self.features[j] {
            FeatureKind::Numeric { cuts } => cuts.partition_point(|&c| c <= x),
            FeatureKind::Category { vocab } => match vocab.binary_search_by(|v| v.total_cmp(&x)) {
                Ok(idx) => idx,
                Err(_) => self.k_buckets,
            },
        }
    }

    /// Z-normalized copy of the raw features, `(x - mean) / std` per
    /// feature. Missing values are imputed to the training mean, hence 0.
    pub fn dense_embed(&self, node_feat: &Matrix) -> Result<Tensor> {
        self.check_width("dense_embed", node_feat)?;
        let n = node_feat.rows;
        let mut out = vec![0.0; n * self.m];
        for i in 0..n {
            for j in 0..self.m {
                let x = node_feat.get(i, j);
                let (mean, std) = self.dense_stats[j];
                out[i * self.m + j] = if x.is_finite() { (x - mean) / std } else { 0.0 };
            }
        }
        Tensor::constant(vec![n, self.m], out)
    }

    /// One-hot bucket encoding; feature blocks concatenated in order.
    pub fn sparse_embed(&self, node_feat: &Matrix) -> Result<Tensor> {
        self.check_width("sparse_embed", node_feat)?;
        let n = node_feat.rows;
        let w = self.block_width();
        let mut out = vec![0.0; n * self.m * w];
        for i in 0..n {
            for j in 0..self.m {
                let b = self.bucket_of(j, node_feat.get(i, j));
                out[(i * self.m + j) * w + b] = 1.0;
            }
        }
        Tensor::constant(vec![n, self.m * w], out)
    }

    fn check_width(&self, op: &'static str, node_feat: &Matrix) -> Result<()> {
        if node_feat.cols != self.m {
            return Err(GipaError::shape(
                op,
                format!("{} feature columns, encoder fitted on {}", node_feat.cols, self.m),
            ));
        }
        Ok(())
    }

    /// Write the encoder as a versioned JSON sidecar.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = EncoderFile {
            version: ENCODER_FORMAT_VERSION,
            encoder: self.clone(),
        };
        crate::dataset::write_atomic(path, serde_json::to_string_pretty(&file)?.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<FeatureEncoder> {
        let text = std::fs::read_to_string(path)?;
        let file: EncoderFile = serde_json::from_str(&text)?;
        if file.version != ENCODER_FORMAT_VERSION {
            return Err(GipaError::Checkpoint(format!(
                "encoder format version {} unsupported (expected {})",
                file.version, ENCODER_FORMAT_VERSION
            )));
        }
        Ok(file.encoder)
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    version: u32,
    encoder: FeatureEncoder,
}

/// Mean and floored population std of sorted finite values.
fn column_stats(finite: &[f64]) -> (f64, f64) {
    if finite.is_empty() {
        return (0.0, STD_FLOOR);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(STD_FLOOR))
}

fn fit_feature(sorted_finite: &[f64], k: usize, method: BucketMethod) -> FeatureKind {
    if sorted_finite.is_empty() {
        // all-missing feature: every value routes to the reserved slot
        return FeatureKind::Numeric { cuts: vec![1.0; k - 1] };
    }
    let lo = sorted_finite[0];
    let hi = sorted_finite[sorted_finite.len() - 1];

    let mut distinct: Vec<f64> = sorted_finite.to_vec();
    distinct.dedup();
    if distinct.len() <= k && distinct.iter().all(|v| v.fract() == 0.0) {
        return FeatureKind::Category { vocab: distinct };
    }

    if lo == hi {
        // constant feature: cuts strictly above the value, so it lands in
        // bucket 0 under the ties-go-higher rule
        return FeatureKind::Numeric { cuts: vec![lo + 1.0; k - 1] };
    }
    let cuts = match method {
        BucketMethod::EqualWidth => {
            let width = (hi - lo) / k as f64;
            (1..k).map(|i| lo + width * i as f64).collect()
        }
        BucketMethod::EqualFrequency => {
            let n = sorted_finite.len();
            (1..k).map(|i| sorted_finite[i * n / k]).collect()
        }
    };
    FeatureKind::Numeric { cuts }
}

/// Z-normalize raw edge features per column (stats of the given matrix)
/// and apply the learnable linear map `w_edge: [d_e_raw, d_e]`. One edge
/// embedding is shared by every layer.
pub fn embed_edges(tape: &mut Tape, raw_edge_feat: &Matrix, w_edge: &Tensor) -> Result<Tensor> {
    let (d_raw, _) = w_edge.dims2()?;
    if raw_edge_feat.cols != d_raw {
        return Err(GipaError::shape(
            "embed_edges",
            format!("{} raw edge columns, weight expects {}", raw_edge_feat.cols, d_raw),
        ));
    }
    let e = raw_edge_feat.rows;
    let c = raw_edge_feat.cols;
    let mut normalized = vec![0.0; e * c];
    for j in 0..c {
        let mut col: Vec<f64> = (0..e)
            .map(|i| raw_edge_feat.get(i, j))
            .filter(|v| v.is_finite())
            .collect();
        col.sort_unstable_by(f64::total_cmp);
        let (mean, std) = column_stats(&col);
        for i in 0..e {
            let x = raw_edge_feat.get(i, j);
            normalized[i * c + j] = if x.is_finite() { (x - mean) / std } else { 0.0 };
        }
    }
    let norm = Tensor::constant(vec![e, c], normalized)?;
    tape.matmul(&norm, w_edge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff_grad, max_rel_err};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn column(values: &[f64]) -> Matrix {
        Matrix::from_rows(values.iter().map(|&v| vec![v]).collect())
    }

    #[test]
    fn equal_width_cuts_span_zero_to_ten() {
        let feat = column(&[0.0, 2.5, 5.0, 7.5, 10.0]);
        let enc = FeatureEncoder::fit(&feat, 5, BucketMethod::EqualWidth).unwrap();
        match &enc.features[0] {
            FeatureKind::Numeric { cuts } => assert_eq!(cuts, &vec![2.0, 4.0, 6.0, 8.0]),
            other => panic!("expected numeric cuts, got {other:?}"),
        }
        assert_eq!(enc.bucket_of(0, 3.0), 1);
        // tie at a cut goes to the higher bucket
        assert_eq!(enc.bucket_of(0, 2.0), 1);
        assert_eq!(enc.bucket_of(0, 1.999), 0);
        assert_eq!(enc.bucket_of(0, 10.0), 4);
        assert_eq!(enc.bucket_of(0, 99.0), 4, "clamped to the last bucket");
    }

    #[test]
    fn one_hot_blocks_for_value_and_missing() {
        let feat = column(&[0.0, 2.5, 5.0, 7.5, 10.0]);
        let enc = FeatureEncoder::fit(&feat, 5, BucketMethod::EqualWidth).unwrap();
        let rows = Matrix::from_rows(vec![vec![3.0], vec![f64::NAN]]);
        let emb = enc.sparse_embed(&rows).unwrap();
        assert_eq!(emb.shape(), &[2, 6]);
        let d = emb.to_vec();
        assert_eq!(&d[0..6], &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&d[6..12], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_feature_lands_in_bucket_zero() {
        let feat = column(&[4.2; 7]);
        let enc = FeatureEncoder::fit(&feat, 5, BucketMethod::EqualFrequency).unwrap();
        match &enc.features[0] {
            FeatureKind::Numeric { cuts } => {
                assert!(cuts.windows(2).all(|w| w[0] == w[1]), "all cuts equal");
            }
            other => panic!("expected numeric cuts, got {other:?}"),
        }
        assert_eq!(enc.bucket_of(0, 4.2), 0);
    }

    #[test]
    fn equal_frequency_occupancy_within_one() {
        let mut rng = StdRng::seed_from_u64(3);
        for n in [100usize, 101, 103] {
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let feat = column(&values);
            let enc = FeatureEncoder::fit(&feat, 4, BucketMethod::EqualFrequency).unwrap();
            let mut counts = [0usize; 4];
            for &v in &values {
                counts[enc.bucket_of(0, v)] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "occupancy {counts:?} on n={n}");
        }
    }

    #[test]
    fn category_feature_uses_vocab_and_reserved_slot() {
        let feat = column(&[1.0, 2.0, 5.0, 2.0, 1.0]);
        let enc = FeatureEncoder::fit(&feat, 4, BucketMethod::EqualWidth).unwrap();
        match &enc.features[0] {
            FeatureKind::Category { vocab } => assert_eq!(vocab, &vec![1.0, 2.0, 5.0]),
            other => panic!("expected category vocab, got {other:?}"),
        }
        assert_eq!(enc.bucket_of(0, 2.0), 1);
        assert_eq!(enc.bucket_of(0, 3.0), 4, "unseen value routes to reserved slot");
        assert_eq!(enc.bucket_of(0, f64::NAN), 4);
    }

    #[test]
    fn dense_embed_normalizes_with_train_stats() {
        let feat = column(&[3.0, 7.0]);
        let enc = FeatureEncoder::fit(&feat, 2, BucketMethod::EqualWidth).unwrap();
        let rows = Matrix::from_rows(vec![vec![7.0], vec![5.0], vec![f64::NAN]]);
        let emb = enc.dense_embed(&rows).unwrap();
        // mean 5, population std 2
        assert_eq!(emb.to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_embed_train_moments_are_standard() {
        let mut rng = StdRng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen_range(-4.0..9.0)).collect())
            .collect();
        let feat = Matrix::from_rows(rows);
        let enc = FeatureEncoder::fit(&feat, 4, BucketMethod::EqualFrequency).unwrap();
        let emb = enc.dense_embed(&feat).unwrap();
        let d = emb.to_vec();
        for j in 0..3 {
            let col: Vec<f64> = (0..200).map(|i| d[i * 3 + j]).collect();
            let mean = col.iter().sum::<f64>() / 200.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 200.0;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "column {j} std {}", var.sqrt());
        }
    }

    #[test]
    fn every_block_sums_to_exactly_one() {
        let mut rng = StdRng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        if rng.gen_bool(0.1) {
                            f64::NAN
                        } else {
                            rng.gen_range(-2.0..2.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let feat = Matrix::from_rows(rows);
        let enc = FeatureEncoder::fit(&feat, 3, BucketMethod::EqualWidth).unwrap();
        let emb = enc.sparse_embed(&feat).unwrap();
        let d = emb.to_vec();
        let w = enc.block_width();
        for i in 0..60 {
            for j in 0..4 {
                let block = &d[(i * 4 + j) * w..(i * 4 + j + 1) * w];
                assert_eq!(block.iter().sum::<f64>(), 1.0);
                assert!(block.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn bucket_assignment_is_monotone() {
        let mut rng = StdRng::seed_from_u64(11);
        for method in [BucketMethod::EqualWidth, BucketMethod::EqualFrequency] {
            let values: Vec<f64> = (0..80).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let enc = FeatureEncoder::fit(&column(&values), 6, method).unwrap();
            let mut probes: Vec<f64> = (0..500).map(|_| rng.gen_range(-6.0..6.0)).collect();
            probes.sort_unstable_by(f64::total_cmp);
            let buckets: Vec<usize> = probes.iter().map(|&x| enc.bucket_of(0, x)).collect();
            assert!(buckets.windows(2).all(|w| w[0] <= w[1]), "{method:?}");
        }
    }

    #[test]
    fn fit_twice_transforms_bit_identically() {
        let mut rng = StdRng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let feat = Matrix::from_rows(rows);
        let a = FeatureEncoder::fit(&feat, 4, BucketMethod::EqualFrequency).unwrap();
        let b = FeatureEncoder::fit(&feat, 4, BucketMethod::EqualFrequency).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.sparse_embed(&feat).unwrap().to_vec(),
            b.sparse_embed(&feat).unwrap().to_vec()
        );
        assert_eq!(
            a.dense_embed(&feat).unwrap().to_vec(),
            b.dense_embed(&feat).unwrap().to_vec()
        );
    }

    #[test]
    fn fit_rejects_empty_training_set() {
        let feat = Matrix::zeros(0, 3);
        assert!(matches!(
            FeatureEncoder::fit(&feat, 4, BucketMethod::EqualWidth),
            Err(GipaError::Contract { .. })
        ));
    }

    #[test]
    fn embed_rejects_column_mismatch() {
        let enc = FeatureEncoder::fit(&Matrix::zeros(3, 2), 2, BucketMethod::EqualWidth).unwrap();
        let wrong = Matrix::zeros(3, 5);
        assert!(matches!(enc.dense_embed(&wrong), Err(GipaError::Shape { .. })));
        assert!(matches!(enc.sparse_embed(&wrong), Err(GipaError::Shape { .. })));
    }

    #[test]
    fn encoder_round_trips_through_sidecar() {
        let mut rng = StdRng::seed_from_u64(17);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let feat = Matrix::from_rows(rows);
        let enc = FeatureEncoder::fit(&feat, 5, BucketMethod::EqualFrequency).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("encoder.json");
        enc.save(&path).unwrap();
        let loaded = FeatureEncoder::load(&path).unwrap();
        assert_eq!(loaded, enc);
    }

    #[test]
    fn edge_embedding_zero_row_of_symmetric_sample_stays_zero() {
        let mut tape = Tape::new();
        let raw = Matrix::from_rows(vec![
            vec![1.0, -2.0],
            vec![-1.0, 2.0],
            vec![0.0, 0.0],
        ]);
        let w = Tensor::param(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let emb = embed_edges(&mut tape, &raw, &w).unwrap();
        let d = emb.to_vec();
        assert_eq!(&d[4..6], &[0.0, 0.0]);
        // identity weights reproduce the normalized inputs: column means are
        // zero, so the first two rows are opposite
        assert_eq!(d[0], -d[2]);
        assert_eq!(d[1], -d[3]);
    }

    #[test]
    fn edge_embedding_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(19);
        let raw = Matrix::from_rows(
            (0..6)
                .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        );
        let wdata: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Tensor::param(vec![3, 2], wdata).unwrap();
        let loss_fn = {
            let (raw, w) = (raw.clone(), w.clone());
            move || {
                let mut tape = Tape::new();
                let emb = embed_edges(&mut tape, &raw, &w).unwrap();
                let sq = tape.mul(&emb, &emb).unwrap();
                tape.sum(&sq).to_vec()[0]
            }
        };
        let mut tape = Tape::new();
        let emb = embed_edges(&mut tape, &raw, &w).unwrap();
        let sq = tape.mul(&emb, &emb).unwrap();
        let loss = tape.sum(&sq);
        tape.backward(&loss).unwrap();
        let fd = central_diff_grad(&w, 1e-5, &loss_fn);
        assert!(max_rel_err(&w.grad().unwrap(), &fd) < 1e-4);
    }

    #[test]
    fn edge_embedding_rejects_width_mismatch() {
        let mut tape = Tape::new();
        let raw = Matrix::zeros(4, 3);
        let w = Tensor::param(vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(matches!(
            embed_edges(&mut tape, &raw, &w),
            Err(GipaError::Shape { .. })
        ));
    }
}
