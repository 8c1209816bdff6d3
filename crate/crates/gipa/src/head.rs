//! Wide & deep prediction head: a deep MLP on the dense-path embedding
//! plus a single linear (wide) map on the sparse-path embedding, summed
//! into per-label logits.

use rand_chacha::ChaCha20Rng;

use crate::error::{GipaError, Result};
use crate::layer::{glorot, Mlp};
use crate::matrix::Matrix;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone)]
pub struct HeadParams {
    /// Biased 2-affine MLP, dense width to label count.
    pub deep: Mlp,
    /// Linear map `[m, n_labels]` on the sparse embedding.
    pub wide: Tensor,
}

impl HeadParams {
    pub fn init(rng: &mut ChaCha20Rng, n: usize, m: usize, hidden: usize, n_labels: usize) -> HeadParams {
        HeadParams {
            deep: Mlp::init(rng, n, hidden, n_labels, true),
            wide: glorot(rng, m, n_labels),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.wide.shape()[1]
    }

    pub fn params_into(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.deep.params_into(&format!("{prefix}.deep"), out);
        out.push((format!("{prefix}.wide"), self.wide.clone()));
    }
}

/// Per-node, per-label logits `Deep(o_d) + o_s * W_wide`, shape
/// `[N, n_labels]`.
pub fn predict(tape: &mut Tape, o_d: &Tensor, o_s: &Tensor, head: &HeadParams) -> Result<Tensor> {
    if head.deep.output_width() != head.wide.shape()[1] {
        return Err(GipaError::Config(format!(
            "head label widths disagree: deep {}, wide {}",
            head.deep.output_width(),
            head.wide.shape()[1]
        )));
    }
    let deep = head.deep.forward(tape, o_d)?;
    let wide = tape.matmul(o_s, &head.wide)?;
    tape.add(&deep, &wide)
}

/// Masked mean binary cross-entropy of the logits against 0/1 labels.
/// Every label column of every masked node counts once.
pub fn loss(tape: &mut Tape, logits: &Tensor, labels: &Matrix, mask: &[bool]) -> Result<Tensor> {
    let (r, c) = logits.dims2()?;
    if labels.rows != r || labels.cols != c {
        return Err(GipaError::shape(
            "loss",
            format!("labels {}x{} vs logits {}x{}", labels.rows, labels.cols, r, c),
        ));
    }
    tape.bce_with_logits_mean(logits, &labels.data, mask)
}
