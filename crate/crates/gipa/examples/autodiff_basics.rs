//! The reverse-mode tape from first principles: record a few operations,
//! run backward, and confirm one gradient against a finite difference.

use gipa::tensor::{Activation, Tape, Tensor};
use gipa::Result;

fn main() -> Result<()> {
    let mut tape = Tape::new();

    // y = sum(relu([x W]) * g), a miniature of what every layer does
    let x = Tensor::constant(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75])?;
    let w = Tensor::param(vec![3, 2], vec![0.1, -0.2, 0.4, 0.3, -0.5, 0.6])?;
    let g = Tensor::param(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])?;

    let z = tape.matmul(&x, &w)?;
    let a = tape.activation(Activation::Relu, &z);
    let m = tape.mul(&a, &g)?;
    let y = tape.sum(&m);

    println!("forward value  {:.6}", y.to_vec()[0]);
    println!("tape entries   {}", tape.num_entries());

    tape.backward(&y)?;
    let grad_w = w.grad().expect("w participated in the graph");
    println!("dy/dw          {:?}", grad_w.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());

    // nudge one coordinate of w and compare against the analytic entry
    let eps = 1e-6;
    let replay = |tape: &mut Tape| -> Result<f64> {
        let z = tape.matmul(&x, &w)?;
        let a = tape.activation(Activation::Relu, &z);
        let m = tape.mul(&a, &g)?;
        Ok(tape.sum(&m).to_vec()[0])
    };
    w.nudge(0, eps);
    let up = replay(&mut Tape::new())?;
    w.nudge(0, -2.0 * eps);
    let down = replay(&mut Tape::new())?;
    w.nudge(0, eps);
    let fd = (up - down) / (2.0 * eps);
    println!("dy/dw[0]       analytic {:.8} vs finite difference {:.8}", grad_w[0], fd);
    assert!((grad_w[0] - fd).abs() < 1e-6);

    // constants never accumulate gradients
    assert!(x.grad().is_none());
    println!("constants carry no gradient, as expected");
    Ok(())
}
