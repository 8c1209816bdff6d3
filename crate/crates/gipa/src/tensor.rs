//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! The supported operation set is exactly what the message-passing forward
//! pass needs: matmul, row-wise concatenation, elementwise arithmetic,
//! pointwise activations, row gathering, per-destination segment reductions
//! and a masked binary cross-entropy loss. Ops are recorded on a [`Tape`];
//! [`Tape::backward`] replays them in reverse and accumulates gradients into
//! every tensor created with `requires_grad`.
//!
//! All reductions run in ascending index order, so repeated runs are
//! bit-identical.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{GipaError, Result};
use crate::matrix::Matrix;

/// Negative-slope constant for the leaky-relu activation.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

/// Pointwise activation kinds supported by [`Tape::activation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Softplus,
    /// Bit-exact passthrough.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            // max(x,0) + ln(1 + e^{-|x|}) never overflows.
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the input `x` and the already-computed output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Softplus => sigmoid(x),
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major tensor handle.
///
/// Cloning is cheap and aliases the same storage; data is fixed after
/// creation except through [`Tensor::set_data`] (optimizer updates and
/// finite-difference probes), and the gradient buffer is filled by
/// [`Tape::backward`].
#[derive(Clone)]
pub struct Tensor {
    shape: Rc<Vec<usize>>,
    requires_grad: bool,
    data: Rc<RefCell<Vec<f64>>>,
    grad: Rc<RefCell<Option<Vec<f64>>>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("requires_grad", &self.requires_grad)
            .field("data", &self.data.borrow())
            .finish()
    }
}

impl Tensor {
    fn new(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(GipaError::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor {
            shape: Rc::new(shape),
            requires_grad,
            data: Rc::new(RefCell::new(data)),
            grad: Rc::new(RefCell::new(None)),
        })
    }

    /// Non-differentiable tensor.
    pub fn constant(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(shape, data, false)
    }

    /// Learnable tensor; participates in gradient accumulation.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(shape, data, true)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v], false).unwrap()
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor::new(vec![data.len()], data, false).unwrap()
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(vec![rows, cols], data, false)
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n], false).unwrap()
    }

    pub fn from_matrix(m: &Matrix) -> Tensor {
        Tensor::new(vec![m.rows, m.cols], m.data.clone(), false).unwrap()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Rows/cols of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(GipaError::shape(
                "dims2",
                format!("expected 2-D tensor, got shape {:?}", s),
            )),
        }
    }

    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.data.borrow(), |v| v.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.borrow().clone()
    }

    /// Replace the stored values. Length must match.
    pub fn set_data(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(GipaError::shape(
                "set_data",
                format!("expected {} values, got {}", self.len(), values.len()),
            ));
        }
        self.data.borrow_mut().copy_from_slice(values);
        Ok(())
    }

    /// In-place update of a single element (finite-difference probes).
    pub fn nudge(&self, index: usize, delta: f64) {
        self.data.borrow_mut()[index] += delta;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.grad.borrow_mut() = None;
    }

    /// Pointer identity of the underlying storage.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.data, &other.data)
    }

    fn accumulate(&self, delta: &[f64]) {
        if !self.requires_grad {
            return;
        }
        let mut g = self.grad.borrow_mut();
        let buf = g.get_or_insert_with(|| vec![0.0; self.len()]);
        for (b, d) in buf.iter_mut().zip(delta) {
            *b += d;
        }
    }

    /// Current output gradient, or `None` if this tensor is not on the path
    /// to the loss.
    fn out_grad(&self) -> Option<Vec<f64>> {
        self.grad.borrow().clone()
    }
}

type BackwardFn = Box<dyn FnMut()>;

/// Records the forward pass; replaying in reverse yields gradients.
///
/// A tape lives for one forward/backward cycle and is consumed by
/// [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    entries: Vec<BackwardFn>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    fn output(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        make_backward: impl FnOnce(Tensor) -> BackwardFn,
    ) -> Tensor {
        let out = Tensor::new(shape, data, requires_grad).expect("op output shape");
        if requires_grad {
            let f = make_backward(out.clone());
            self.entries.push(f);
        }
        out
    }

    /// `a[r,k] · b[k,c] -> [r,c]`.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (r, k) = a.dims2()?;
        let (k2, c) = b.dims2()?;
        if k != k2 {
            return Err(GipaError::shape(
                "matmul",
                format!("inner dimensions disagree: {:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let mut out = vec![0.0; r * c];
        {
            let ad = a.data();
            let bd = b.data();
            matmul_into(&ad, &bd, r, k, c, &mut out);
        }
        let rg = a.requires_grad || b.requires_grad;
        let (a, b) = (a.clone(), b.clone());
        Ok(self.output(vec![r, c], out, rg, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                if a.requires_grad {
                    // ga[i,p] += sum_j g[i,j] * b[p,j]
                    let bd = b.data();
                    let mut ga = vec![0.0; r * k];
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        let garow = &mut ga[i * k..(i + 1) * k];
                        for p in 0..k {
                            let brow = &bd[p * c..(p + 1) * c];
                            let mut s = 0.0;
                            for j in 0..c {
                                s += grow[j] * brow[j];
                            }
                            garow[p] += s;
                        }
                    }
                    drop(bd);
                    a.accumulate(&ga);
                }
                if b.requires_grad {
                    // gb[p,j] += sum_i a[i,p] * g[i,j]
                    let ad = a.data();
                    let mut gb = vec![0.0; k * c];
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        let arow = &ad[i * k..(i + 1) * k];
                        for p in 0..k {
                            let av = arow[p];
                            let gbrow = &mut gb[p * c..(p + 1) * c];
                            for j in 0..c {
                                gbrow[j] += av * grow[j];
                            }
                        }
                    }
                    drop(ad);
                    b.accumulate(&gb);
                }
            })
        }))
    }

    /// Lay the columns of `parts` side by side; all parts share a row count.
    pub fn concat_rows(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(GipaError::contract("concat_rows", "no parts given"));
        }
        let (r, _) = parts[0].dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pr != r {
                return Err(GipaError::shape(
                    "concat_rows",
                    format!("row counts differ: {} vs {}", r, pr),
                ));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; r * total];
        {
            let mut off = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                let pd = p.data();
                for i in 0..r {
                    out[i * total + off..i * total + off + w]
                        .copy_from_slice(&pd[i * w..(i + 1) * w]);
                }
                off += w;
            }
        }
        let rg = parts.iter().any(|p| p.requires_grad);
        let parts: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(self.output(vec![r, total], out, rg, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let mut off = 0;
                for (p, &w) in parts.iter().zip(&widths) {
                    if p.requires_grad {
                        let mut gp = vec![0.0; r * w];
                        for i in 0..r {
                            gp[i * w..(i + 1) * w]
                                .copy_from_slice(&g[i * total + off..i * total + off + w]);
                        }
                        p.accumulate(&gp);
                    }
                    off += w;
                }
            })
        }))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_op("add", a, b, |x, y| x + y, |_x, _y| (1.0, 1.0))
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_op("sub", a, b, |x, y| x - y, |_x, _y| (1.0, -1.0))
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_op("mul", a, b, |x, y| x * y, |x, y| (y, x))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: fn(f64, f64) -> f64,
        df: fn(f64, f64) -> (f64, f64),
    ) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(GipaError::shape(
                name,
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        }
        let out: Vec<f64> = {
            let ad = a.data();
            let bd = b.data();
            ad.iter().zip(bd.iter()).map(|(&x, &y)| f(x, y)).collect()
        };
        let rg = a.requires_grad || b.requires_grad;
        let (a, b) = (a.clone(), b.clone());
        Ok(self.output(a.shape().to_vec(), out, rg, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let n = g.len();
                let (mut ga, mut gb) = (vec![0.0; n], vec![0.0; n]);
                {
                    let ad = a.data();
                    let bd = b.data();
                    for i in 0..n {
                        let (da, db) = df(ad[i], bd[i]);
                        ga[i] = g[i] * da;
                        gb[i] = g[i] * db;
                    }
                }
                a.accumulate(&ga);
                b.accumulate(&gb);
            })
        }))
    }

    /// Pointwise activation. `Identity` returns the input handle unchanged.
    pub fn activation(&mut self, kind: Activation, x: &Tensor) -> Tensor {
        if kind == Activation::Identity {
            return x.clone();
        }
        let out: Vec<f64> = x.data().iter().map(|&v| kind.apply(v)).collect();
        let x = x.clone();
        self.output(x.shape().to_vec(), out, x.requires_grad, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let gx: Vec<f64> = {
                    let xd = x.data();
                    let od = out.data();
                    (0..g.len())
                        .map(|i| g[i] * kind.derivative(xd[i], od[i]))
                        .collect()
                };
                x.accumulate(&gx);
            })
        })
    }

    /// Select rows of `x` by index; gradients scatter-add back.
    pub fn gather_rows(&mut self, x: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let (n, c) = x.dims2()?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(GipaError::index(
                "gather_rows",
                format!("row {} out of range for {} rows", bad, n),
            ));
        }
        let mut out = vec![0.0; ids.len() * c];
        {
            let xd = x.data();
            for (k, &i) in ids.iter().enumerate() {
                out[k * c..(k + 1) * c].copy_from_slice(&xd[i * c..(i + 1) * c]);
            }
        }
        let rows = ids.len();
        let ids = ids.to_vec();
        let x = x.clone();
        Ok(self.output(vec![rows, c], out, x.requires_grad, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let mut gx = vec![0.0; x.len()];
                for (k, &i) in ids.iter().enumerate() {
                    let grow = &g[k * c..(k + 1) * c];
                    let xrow = &mut gx[i * c..(i + 1) * c];
                    for j in 0..c {
                        xrow[j] += grow[j];
                    }
                }
                x.accumulate(&gx);
            })
        }))
    }

    /// Add a bias row `b[c]` to every row of `x[r,c]`.
    pub fn add_bias(&mut self, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (r, c) = x.dims2()?;
        if bias.len() != c {
            return Err(GipaError::shape(
                "add_bias",
                format!("bias length {} vs {} columns", bias.len(), c),
            ));
        }
        let out: Vec<f64> = {
            let xd = x.data();
            let bd = bias.data();
            (0..r * c).map(|i| xd[i] + bd[i % c]).collect()
        };
        let rg = x.requires_grad || bias.requires_grad;
        let (x, bias) = (x.clone(), bias.clone());
        Ok(self.output(vec![r, c], out, rg, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                x.accumulate(&g);
                if bias.requires_grad {
                    let mut gb = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] += g[i * c + j];
                        }
                    }
                    bias.accumulate(&gb);
                }
            })
        }))
    }

    /// Row `i` of the output is the sum of value rows with `segments == i`.
    pub fn segment_sum(
        &mut self,
        values: &Tensor,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<Tensor> {
        let (e, c) = values.dims2()?;
        check_segments("segment_sum", segments, e, n_segments)?;
        let mut out = vec![0.0; n_segments * c];
        {
            let vd = values.data();
            for (row, &s) in segments.iter().enumerate() {
                let src = &vd[row * c..(row + 1) * c];
                let dst = &mut out[s * c..(s + 1) * c];
                for j in 0..c {
                    dst[j] += src[j];
                }
            }
        }
        let segments = segments.to_vec();
        let values = values.clone();
        Ok(self.output(vec![n_segments, c], out, values.requires_grad, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let mut gv = vec![0.0; values.len()];
                for (row, &s) in segments.iter().enumerate() {
                    gv[row * c..(row + 1) * c].copy_from_slice(&g[s * c..(s + 1) * c]);
                }
                values.accumulate(&gv);
            })
        }))
    }

    /// Exp-normalize each column within each destination segment; stabilized
    /// by per-segment max subtraction. Rows of empty segments do not exist.
    pub fn segment_softmax(
        &mut self,
        logits: &Tensor,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<Tensor> {
        let (e, c) = logits.dims2()?;
        check_segments("segment_softmax", segments, e, n_segments)?;
        let mut out = vec![0.0; e * c];
        {
            let xd = logits.data();
            let mut maxes = vec![f64::NEG_INFINITY; n_segments * c];
            for (row, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    let v = xd[row * c + j];
                    let m = &mut maxes[s * c + j];
                    if v > *m {
                        *m = v;
                    }
                }
            }
            let mut sums = vec![0.0; n_segments * c];
            for (row, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    let ex = (xd[row * c + j] - maxes[s * c + j]).exp();
                    out[row * c + j] = ex;
                    sums[s * c + j] += ex;
                }
            }
            for (row, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    out[row * c + j] /= sums[s * c + j];
                }
            }
        }
        let segments = segments.to_vec();
        let logits = logits.clone();
        Ok(self.output(vec![e, c], out, logits.requires_grad, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                // gx = y * (g - sum_seg(y * g)), per column
                let gx: Vec<f64> = {
                    let yd = out.data();
                    let mut dots = vec![0.0; n_segments * c];
                    for (row, &s) in segments.iter().enumerate() {
                        for j in 0..c {
                            dots[s * c + j] += yd[row * c + j] * g[row * c + j];
                        }
                    }
                    (0..e * c)
                        .map(|i| {
                            let s = segments[i / c];
                            yd[i] * (g[i] - dots[s * c + i % c])
                        })
                        .collect()
                };
                logits.accumulate(&gx);
            })
        }))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&mut self, x: &Tensor) -> Tensor {
        let total: f64 = x.data().iter().sum();
        let x = x.clone();
        self.output(vec![1], vec![total], x.requires_grad, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let gx = vec![g[0]; x.len()];
                x.accumulate(&gx);
            })
        })
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets,
    /// restricted to rows where `mask` is true, in the overflow-safe logit
    /// form. Targets are constants.
    pub fn bce_with_logits_mean(
        &mut self,
        logits: &Tensor,
        targets: &[f64],
        mask: &[bool],
    ) -> Result<Tensor> {
        let (r, c) = logits.dims2()?;
        if targets.len() != r * c {
            return Err(GipaError::shape(
                "loss",
                format!("targets length {} vs logits {}x{}", targets.len(), r, c),
            ));
        }
        if mask.len() != r {
            return Err(GipaError::shape(
                "loss",
                format!("mask length {} vs {} rows", mask.len(), r),
            ));
        }
        let n_masked = mask.iter().filter(|&&m| m).count();
        if n_masked == 0 {
            return Err(GipaError::contract("loss", "mask selects no rows"));
        }
        let count = (n_masked * c) as f64;
        let total: f64 = {
            let zd = logits.data();
            let mut acc = 0.0;
            for i in 0..r {
                if !mask[i] {
                    continue;
                }
                for j in 0..c {
                    let z = zd[i * c + j];
                    let y = targets[i * c + j];
                    acc += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                }
            }
            acc
        };
        let logits = logits.clone();
        let targets = targets.to_vec();
        let mask = mask.to_vec();
        Ok(self.output(vec![1], vec![total / count], logits.requires_grad, move |out| {
            Box::new(move || {
                let Some(g) = out.out_grad() else { return };
                let g0 = g[0] / count;
                let gz: Vec<f64> = {
                    let zd = logits.data();
                    (0..r * c)
                        .map(|i| {
                            if mask[i / c] {
                                g0 * (sigmoid(zd[i]) - targets[i])
                            } else {
                                0.0
                            }
                        })
                        .collect()
                };
                logits.accumulate(&gz);
            })
        }))
    }

    /// Populate gradients of every `requires_grad` tensor reachable from the
    /// scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: &Tensor) -> Result<()> {
        if loss.len() != 1 {
            return Err(GipaError::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", loss.shape()),
            ));
        }
        if self.entries.is_empty() {
            return Err(GipaError::contract("backward", "tape is empty"));
        }
        *loss.grad.borrow_mut() = Some(vec![1.0]);
        for mut entry in self.entries.drain(..).rev() {
            entry();
        }
        Ok(())
    }
}

fn check_segments(op: &'static str, segments: &[usize], rows: usize, n_segments: usize) -> Result<()> {
    if segments.len() != rows {
        return Err(GipaError::shape(
            op,
            format!("{} segment ids for {} rows", segments.len(), rows),
        ));
    }
    if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
        return Err(GipaError::index(
            op,
            format!("segment id {} out of range for {} segments", bad, n_segments),
        ));
    }
    Ok(())
}

/// `out += a · b` for row-major `a[r,k]`, `b[k,c]`; `out` must be zeroed.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], r: usize, k: usize, c: usize, out: &mut [f64]) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * c..(p + 1) * c];
            for j in 0..c {
                orow[j] += av * brow[j];
            }
        }
    }
}
