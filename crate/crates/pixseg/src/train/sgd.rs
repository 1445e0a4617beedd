//! SGD with momentum and decoupled-into-the-velocity weight decay:
//! v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.

use crate::error::{Error, Result};
use crate::model::Param;

pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(params: &[Param]) -> SgdState {
        SgdState {
            velocity: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }
}

pub fn sgd_step(
    params: &mut [Param],
    grads: &[Vec<f64>],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.velocity.len());
    for ((param, grad), vel) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter '{}'", param.name)));
        }
        for ((p, &g), v) in param.data.iter_mut().zip(grad).zip(vel.iter_mut()) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(data: Vec<f64>) -> Vec<Param> {
        vec![Param {
            name: "w".into(),
            shape: vec![data.len()],
            data,
        }]
    }

    #[test]
    fn plain_gradient_descent_when_momentum_and_decay_zero() {
        let mut params = one_param(vec![1.0, 2.0]);
        let mut state = SgdState::new(&params);
        sgd_step(&mut params, &[vec![0.5, -1.0]], &mut state, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(params[0].data, vec![1.0 - 0.05, 2.0 + 0.1]);
    }

    #[test]
    fn weight_decay_shrinks_param_without_gradient() {
        let mut params = one_param(vec![2.0]);
        let mut state = SgdState::new(&params);
        sgd_step(&mut params, &[vec![0.0]], &mut state, 0.1, 0.9, 0.01).unwrap();
        // v = 0.01*2 = 0.02, p = 2 - 0.1*0.02
        assert!((params[0].data[0] - (2.0 - 0.1 * 0.01 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_on_quadratic_match_hand_velocity() {
        // f(x) = x^2/2, grad = x, lr=0.1, momentum=0.5, wd=0, x0=1
        let mut params = one_param(vec![1.0]);
        let mut state = SgdState::new(&params);
        // step 1: v=1, x = 1 - 0.1 = 0.9
        sgd_step(&mut params, &[vec![1.0]], &mut state, 0.1, 0.5, 0.0).unwrap();
        assert!((params[0].data[0] - 0.9).abs() < 1e-15);
        // step 2: grad = 0.9, v = 0.5*1 + 0.9 = 1.4, x = 0.9 - 0.14 = 0.76
        sgd_step(&mut params, &[vec![0.9]], &mut state, 0.1, 0.5, 0.0).unwrap();
        assert!((params[0].data[0] - 0.76).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut params = one_param(vec![1.0]);
        let mut state = SgdState::new(&params);
        let err = sgd_step(&mut params, &[vec![f64::NAN]], &mut state, 0.1, 0.9, 0.0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("'w'"), "{err}");
    }
}
