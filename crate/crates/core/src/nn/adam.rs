use crate::error::{Error, Result};
use crate::nn::mlp::{Gradients, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring an [`Mlp`]'s parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(mlp: &Mlp, config: &AdamConfig) -> Self {
        Self {
            first_moment: Gradients::zeros_like(mlp),
            second_moment: Gradients::zeros_like(mlp),
            step_count: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    fn matches(&self, mlp: &Mlp, grads: &Gradients) -> bool {
        let shape = |g: &Gradients| -> Vec<usize> { g.slices().map(<[f64]>::len).collect() };
        let params: Vec<usize> = mlp
            .layers()
            .iter()
            .flat_map(|l| [l.weights.len(), l.biases.len()])
            .collect();
        shape(grads) == params
            && shape(&self.first_moment) == params
            && shape(&self.second_moment) == params
    }
}

/// One bias-corrected Adam update of `mlp` in place.
pub fn adam_step(mlp: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !state.matches(mlp, grads) {
        return Err(Error::InvalidArgument(
            "adam: parameter, gradient and moment shapes differ".into(),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let moments = state
        .first_moment
        .slices_mut()
        .zip(state.second_moment.slices_mut());
    for ((params, g), (m, v)) in mlp.slices_mut().zip(grads.slices()).zip(moments) {
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Layer};

    fn scalar_net(w: f64) -> Mlp {
        let layer = Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![w],
            biases: vec![0.0],
        };
        Mlp::from_layers(vec![layer], Activation::Relu, Activation::Identity).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut mlp = scalar_net(0.5);
        let mut grads = Gradients::zeros_like(&mlp);
        grads.layers[0].weights[0] = 1.0;
        let mut state = AdamState::new(&mlp, &AdamConfig::default());
        adam_step(&mut mlp, &grads, &mut state, 1e-3).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((mlp.layers()[0].weights[0] - expected).abs() < 1e-15);
        assert!((mlp.layers()[0].weights[0] - 0.499).abs() < 1e-9);
        assert_eq!(state.step_count, 1);
        // Bias saw a zero gradient with zero moments and stays put.
        assert_eq!(mlp.layers()[0].biases[0], 0.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut mlp = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Tanh, 3).unwrap();
        let before = mlp.clone();
        let grads = Gradients::zeros_like(&mlp);
        let mut state = AdamState::new(&mlp, &AdamConfig::default());
        adam_step(&mut mlp, &grads, &mut state, 1e-3).unwrap();
        assert_eq!(mlp, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn update_is_deterministic() {
        let mlp = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Tanh, 3).unwrap();
        let grads = mlp.backward(&[0.1, 0.7], &[1.0]).unwrap();
        let state = AdamState::new(&mlp, &AdamConfig::default());
        let (mut a, mut sa) = (mlp.clone(), state.clone());
        let (mut b, mut sb) = (mlp.clone(), state.clone());
        adam_step(&mut a, &grads, &mut sa, 1e-3).unwrap();
        adam_step(&mut b, &grads, &mut sb, 1e-3).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut mlp = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Tanh, 3).unwrap();
        let other = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Tanh, 3).unwrap();
        let grads = Gradients::zeros_like(&other);
        let mut state = AdamState::new(&mlp, &AdamConfig::default());
        assert!(adam_step(&mut mlp, &grads, &mut state, 1e-3).is_err());
        assert_eq!(state.step_count, 0);
    }
}
