//! Fit the feature bucketizer and inspect both views it produces: z-scored
//! dense columns and one-hot bucket blocks with a reserved missing slot.

use gipa::encode::{BucketMethod, FeatureEncoder};
use gipa::matrix::Matrix;
use gipa::Result;

fn main() -> Result<()> {
    // two features over eight rows; one entry is unobserved
    let mut feat = Matrix::from_rows(vec![
        vec![1.0, 100.0],
        vec![2.0, 250.0],
        vec![2.0, 180.0],
        vec![4.0, 90.0],
        vec![5.5, 300.0],
        vec![7.0, 120.0],
        vec![8.5, 210.0],
        vec![9.0, 160.0],
    ]);
    feat.set(3, 1, f64::NAN);

    let enc = FeatureEncoder::fit(&feat, 3, BucketMethod::EqualFrequency)?;
    println!(
        "{} features x {} buckets, block width {} (last slot = missing)",
        enc.num_features(),
        enc.k_buckets(),
        enc.block_width()
    );

    let dense = enc.dense_embed(&feat)?;
    let sparse = enc.sparse_embed(&feat)?;
    println!("dense width {}, sparse width {}", dense.shape()[1], enc.sparse_width());

    let d = dense.to_vec();
    let s = sparse.to_vec();
    let (w, m) = (enc.block_width(), enc.num_features());
    for row in 0..feat.rows {
        let zs: Vec<String> = (0..m).map(|c| format!("{:+.2}", d[row * m + c])).collect();
        let hot: Vec<usize> = (0..m)
            .map(|f| (0..w).position(|c| s[row * m * w + f * w + c] == 1.0).unwrap())
            .collect();
        println!("row {row}: z-scores [{}], buckets {:?}", zs.join(", "), hot);
    }
    println!("row 3 feature 1 was missing, so it lands in slot {}", w - 1);

    // round-trip through disk keeps the embeddings bit-identical
    let dir = std::env::temp_dir().join("gipa_feature_buckets");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("encoder.json");
    enc.save(&path)?;
    let back = FeatureEncoder::load(&path)?;
    assert_eq!(back.sparse_embed(&feat)?.to_vec(), s);
    println!("encoder saved to {} and reloaded bit-identically", path.display());
    Ok(())
}
