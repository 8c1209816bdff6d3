//! Finite-difference gradient verification.
//!
//! The probe side never touches the tape: it re-evaluates a forward-only
//! closure under central differences, which keeps it independent of the
//! backward pass it is checking.

use crate::tensor::Tensor;

/// Central difference for a single element of `t` at step `eps`.
pub fn central_diff_coord(t: &Tensor, i: usize, eps: f64, loss_fn: &dyn Fn() -> f64) -> f64 {
    t.nudge(i, eps);
    let up = loss_fn();
    t.nudge(i, -2.0 * eps);
    let down = loss_fn();
    t.nudge(i, eps);
    (up - down) / (2.0 * eps)
}

/// Central-difference gradient of `loss_fn` with respect to every element of
/// `t`. Each probe perturbs one element in place and restores it afterwards,
/// so `loss_fn` must recompute the forward pass from `t`'s current data.
pub fn central_diff_grad(t: &Tensor, eps: f64, loss_fn: &dyn Fn() -> f64) -> Vec<f64> {
    (0..t.len()).map(|i| central_diff_coord(t, i, eps, loss_fn)).collect()
}

/// Largest elementwise relative error, floored at 1 in the denominator so
/// near-zero gradients compare absolutely.
pub fn max_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &f)| (a - f).abs() / a.abs().max(f.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Outcome of checking one named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Verify analytic gradients of every named parameter against central
/// differences of `loss_fn`. `analytic` maps each name to the gradient the
/// backward pass produced; parameters are probed in the given order.
pub fn check_params(
    params: &[(String, Tensor)],
    analytic: &[Vec<f64>],
    eps: f64,
    threshold: f64,
    loss_fn: &dyn Fn() -> f64,
) -> Vec<ParamCheck> {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    params
        .iter()
        .zip(analytic)
        .map(|((name, t), grad)| {
            let fd = central_diff_grad(t, eps, loss_fn);
            let err = max_rel_err(grad, &fd);
            ParamCheck {
                name: name.clone(),
                max_rel_err: err,
                passed: err < threshold,
            }
        })
        .collect()
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1.0)
}

/// Like [`check_params`], but a coordinate that misses the threshold is
/// re-probed at steps of `eps / 32` and `eps / 1024`. It passes if the
/// estimate converges to the analytic value as the step shrinks; the
/// discretization error of probing across a relu kink vanishes with the
/// step, while a defect in the backward pass persists at every step.
pub fn check_params_refined(
    params: &[(String, Tensor)],
    analytic: &[Vec<f64>],
    eps: f64,
    threshold: f64,
    loss_fn: &dyn Fn() -> f64,
) -> Vec<ParamCheck> {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    params
        .iter()
        .zip(analytic)
        .map(|((name, t), grad)| {
            let fd = central_diff_grad(t, eps, loss_fn);
            let mut worst = 0.0_f64;
            for (i, (&a, &f)) in grad.iter().zip(&fd).enumerate() {
                let mut err = rel_err(a, f);
                let mut step = eps;
                while err >= threshold && step > eps / 1024.0 {
                    step /= 32.0;
                    let refined = rel_err(a, central_diff_coord(t, i, step, loss_fn));
                    if refined >= err {
                        break;
                    }
                    err = refined;
                }
                worst = worst.max(err);
            }
            ParamCheck {
                name: name.clone(),
                max_rel_err: worst,
                passed: worst < threshold,
            }
        })
        .collect()
}
