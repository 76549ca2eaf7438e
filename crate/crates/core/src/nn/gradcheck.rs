use crate::error::Result;
use crate::nn::loss::{mse, mse_grad};
use crate::nn::mlp::Mlp;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mse,
}

impl Loss {
    fn value(self, pred: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            Loss::Mse => mse(pred, target),
        }
    }

    fn grad(self, pred: &[f64], target: &[f64], out: &mut Vec<f64>) -> Result<()> {
        match self {
            Loss::Mse => mse_grad(pred, target, out),
        }
    }
}

/// Compares backprop against central finite differences for every parameter and
/// returns the largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check(mlp: &Mlp, x: &[f64], target: &[f64], loss: Loss) -> Result<f64> {
    let pred = mlp.forward(x)?;
    let mut upstream = Vec::new();
    loss.grad(&pred, target, &mut upstream)?;
    let analytic = mlp.backward(x, &upstream)?;

    let mut probe = mlp.clone();
    let mut worst = 0.0_f64;
    for (li, layer) in analytic.layers.iter().enumerate() {
        for (is_bias, grads) in [(false, &layer.weights), (true, &layer.biases)] {
            for (pi, &a) in grads.iter().enumerate() {
                let original = param(&probe, li, is_bias, pi);
                *param_mut(&mut probe, li, is_bias, pi) = original + FD_STEP;
                let up = loss.value(&probe.forward(x)?, target)?;
                *param_mut(&mut probe, li, is_bias, pi) = original - FD_STEP;
                let down = loss.value(&probe.forward(x)?, target)?;
                *param_mut(&mut probe, li, is_bias, pi) = original;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

fn param(mlp: &Mlp, layer: usize, is_bias: bool, idx: usize) -> f64 {
    let l = &mlp.layers()[layer];
    if is_bias {
        l.biases[idx]
    } else {
        l.weights[idx]
    }
}

fn param_mut(mlp: &mut Mlp, layer: usize, is_bias: bool, idx: usize) -> &mut f64 {
    let l = &mut mlp.layers_mut()[layer];
    if is_bias {
        &mut l.biases[idx]
    } else {
        &mut l.weights[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_small_nets_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let mlp = Mlp::new(&[2, 8, 2], Activation::Relu, Activation::Tanh, seed).unwrap();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = gradient_check(&mlp, &x, &t, Loss::Mse).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_linear_net_is_exact() {
        // Quadratic loss in the parameters: central differences are exact up to rounding.
        let mlp = Mlp::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        let err = gradient_check(&mlp, &[0.5, -1.0, 2.0], &[1.0, -0.5], Loss::Mse).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn repeated_calls_agree() {
        let mlp = Mlp::new(&[2, 8, 2], Activation::Relu, Activation::Sigmoid, 9).unwrap();
        let a = gradient_check(&mlp, &[0.2, 0.4], &[0.1, 0.9], Loss::Mse).unwrap();
        let b = gradient_check(&mlp, &[0.2, 0.4], &[0.1, 0.9], Loss::Mse).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
