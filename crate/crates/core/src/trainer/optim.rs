use babel_numerics::Tensor;

use crate::error::{Error, Result};

fn check_shapes(a: &[Tensor], b: &[Tensor], what: &str) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.shape() != y.shape()) {
        return Err(Error::Config(format!("{what}: parameter sets differ in shape")));
    }
    Ok(())
}

pub fn global_norm(tensors: &[Tensor]) -> f64 {
    tensors.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// One SGD step with heavy-ball momentum:
/// `v <- momentum v + g_clipped`, `p <- p - lr v`, where `g` is rescaled to
/// global norm `clip` when it exceeds it (`clip <= 0` disables clipping).
/// Non-finite gradients leave both `params` and `velocity` untouched.
/// Returns the pre-clipping gradient norm.
pub fn sgd_momentum_step(
    params: &mut [Tensor],
    velocity: &mut [Tensor],
    grads: &[Tensor],
    lr: f64,
    momentum: f64,
    clip: f64,
) -> Result<f64> {
    check_shapes(params, grads, "sgd")?;
    check_shapes(params, velocity, "sgd")?;
    if !grads.iter().all(Tensor::all_finite) {
        return Err(Error::NonFiniteGradient);
    }
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let scale = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        let vd = v.data_mut();
        for (vi, gi) in vd.iter_mut().zip(g.data()) {
            *vi = momentum * *vi + scale * gi;
        }
        for (pi, vi) in p.data_mut().iter_mut().zip(v.data()) {
            *pi -= lr * vi;
        }
    }
    Ok(norm)
}

/// Block-momentum synchronization (classical, no Nesterov):
/// `G = mean(workers) - global`, `delta <- eta_b delta + zeta G`,
/// `global <- global + delta`; every worker is then reset to the new global.
pub fn bmuf_sync(
    global: &mut [Tensor],
    workers: &mut [Vec<Tensor>],
    block_delta: &mut [Tensor],
    block_momentum: f64,
    block_lr: f64,
) -> Result<()> {
    if workers.is_empty() {
        return Err(Error::Config("bmuf: no workers".into()));
    }
    check_shapes(global, block_delta, "bmuf")?;
    for w in workers.iter() {
        check_shapes(global, w, "bmuf")?;
    }
    let k = workers.len() as f64;
    for (i, (gt, dt)) in global.iter_mut().zip(block_delta.iter_mut()).enumerate() {
        let gd = gt.data_mut();
        let dd = dt.data_mut();
        for j in 0..gd.len() {
            let mean = workers.iter().map(|w| w[i].data()[j]).sum::<f64>() / k;
            let g = mean - gd[j];
            dd[j] = block_momentum * dd[j] + block_lr * g;
            gd[j] += dd[j];
        }
    }
    for w in workers.iter_mut() {
        w.clone_from_slice(global);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn gradient_equal_to_params_zeroes_them() {
        let mut p = vec![t(&[0.3, -1.2, 2.0])];
        let g = p.clone();
        let mut v = vec![Tensor::zeros(&[3])];
        sgd_momentum_step(&mut p, &mut v, &g, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p[0].data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_gradient_decays_velocity_only() {
        let mut p = vec![t(&[1.0, 2.0])];
        let mut v = vec![t(&[0.5, -0.5])];
        sgd_momentum_step(&mut p, &mut v, &[Tensor::zeros(&[2])], 0.1, 0.9, 5.0).unwrap();
        assert_eq!(v[0].data(), &[0.45, -0.45]);
        assert!((p[0].data()[0] - 0.955).abs() < 1e-15);
        let mut p2 = vec![t(&[1.0, 2.0])];
        let mut v2 = vec![Tensor::zeros(&[2])];
        sgd_momentum_step(&mut p2, &mut v2, &[Tensor::zeros(&[2])], 0.1, 0.9, 5.0).unwrap();
        assert_eq!(p2[0].data(), &[1.0, 2.0]);
    }

    #[test]
    fn two_steps_match_hand_unrolling() {
        let (lr, mu) = (0.1, 0.9);
        let (p0, g1, g2) = (1.5, 0.4, -0.7);
        let mut p = vec![t(&[p0])];
        let mut v = vec![Tensor::zeros(&[1])];
        sgd_momentum_step(&mut p, &mut v, &[t(&[g1])], lr, mu, 0.0).unwrap();
        sgd_momentum_step(&mut p, &mut v, &[t(&[g2])], lr, mu, 0.0).unwrap();
        let v1 = g1;
        let v2 = mu * v1 + g2;
        let expect = p0 - lr * v1 - lr * v2;
        assert!((p[0].data()[0] - expect).abs() <= 1e-15);
        assert!((v[0].data()[0] - v2).abs() <= 1e-15);
    }

    #[test]
    fn clipping_rescales_to_global_norm() {
        let mut p = vec![t(&[0.0, 0.0]), t(&[0.0])];
        let mut v = vec![Tensor::zeros(&[2]), Tensor::zeros(&[1])];
        let g = [t(&[3.0, 0.0]), t(&[4.0])];
        let norm = sgd_momentum_step(&mut p, &mut v, &g, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(norm, 5.0);
        assert!((global_norm(&v) - 1.0).abs() < 1e-15);
        assert!((p[0].data()[0] + 0.6).abs() < 1e-15 && (p[1].data()[0] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut p = vec![t(&[1.0])];
        let mut v = vec![t(&[0.2])];
        let err = sgd_momentum_step(&mut p, &mut v, &[t(&[f64::NAN])], 0.1, 0.9, 5.0);
        assert!(matches!(err, Err(Error::NonFiniteGradient)));
        assert_eq!(p[0].data(), &[1.0]);
        assert_eq!(v[0].data(), &[0.2]);
    }

    #[test]
    fn bmuf_hand_example() {
        let mut global = vec![t(&[0.0])];
        let mut workers = vec![vec![t(&[2.0])], vec![t(&[4.0])]];
        let mut delta = vec![t(&[2.0])];
        bmuf_sync(&mut global, &mut workers, &mut delta, 0.5, 1.0).unwrap();
        assert_eq!(delta[0].data(), &[4.0]);
        assert_eq!(global[0].data(), &[4.0]);
        assert!(workers.iter().all(|w| w[0].data() == [4.0]));
    }

    #[test]
    fn bmuf_single_worker_identity() {
        let mut global = vec![t(&[0.25, -3.0])];
        let mut workers = vec![vec![t(&[1.75, 0.5])]];
        let mut delta = vec![t(&[9.0, 9.0])];
        bmuf_sync(&mut global, &mut workers, &mut delta, 0.0, 1.0).unwrap();
        assert_eq!(global[0].data(), &[1.75, 0.5]);
        assert!(bmuf_sync(&mut global, &mut [], &mut delta, 0.0, 1.0).is_err());
    }
}
