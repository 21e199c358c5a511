use crate::error::{NumericsError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Relative error between the tape gradient of `f` at `point` and a
/// central finite-difference estimate with step `eps`.
///
/// The error is normwise over the tensor, `max|a - n| / max(max|a|, max|n|)`,
/// so coordinates whose gradient sits at finite-difference roundoff level do
/// not dominate. `f` is run in an evaluation-mode graph.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_with(f, point, eps, Graph::new)
}

/// Like [`grad_check`], with dropout active under a fixed mask seed. Every
/// evaluation replays the same mask stream so the function stays smooth.
pub fn grad_check_seeded<F>(f: F, point: &Tensor, eps: f64, seed: u64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_with(f, point, eps, || Graph::training(seed))
}

fn grad_check_with<F, G>(f: F, point: &Tensor, eps: f64, make: G) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
    G: Fn() -> Graph,
{
    let eval = |p: Tensor| -> Result<f64> {
        let mut g = make();
        let x = g.param(p);
        let y = f(&mut g, x)?;
        g.value(y).item()
    };

    let mut g = make();
    let x = g.param(point.clone());
    let y = f(&mut g, x)?;
    if g.value(y).numel() != 1 {
        return Err(NumericsError::NonScalar(g.value(y).shape().to_vec()));
    }
    let analytic = g.backward(y)?.get(x);

    let (mut diff, mut scale): (f64, f64) = (0.0, 1e-12);
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        diff = diff.max((a - numeric).abs());
        scale = scale.max(a.abs()).max(numeric.abs());
    }
    Ok(diff / scale)
}
