use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::{Error, Result};

/// Piecewise-constant learning-rate decay: the rate is multiplied by
/// `factor` once every `decay_at` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub decay_at: usize,
    pub factor: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self { decay_at: 600, factor: 0.1 }
    }
}

impl StepDecay {
    pub fn effective_lr(&self, lr: f64, step: usize) -> f64 {
        if self.decay_at == 0 {
            return lr;
        }
        lr * self.factor.powi((step / self.decay_at) as i32)
    }
}

/// Plain SGD: `p <- p - lr_eff * grad` for every parameter.
///
/// Every parameter must carry a gradient.
pub fn sgd_step(params: &mut ParamSet, lr: f64, step: usize, schedule: StepDecay) -> Result<f64> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Argument(format!("learning rate must be positive, got {lr}")));
    }
    if let Some(p) = params.iter().find(|p| p.tensor.grad.is_none()) {
        return Err(Error::State(format!("parameter `{}` has no gradient", p.name)));
    }
    let lr_eff = schedule.effective_lr(lr, step);
    for p in params.iter_mut() {
        let grad = p.tensor.grad.take().expect("checked above");
        p.tensor
            .data_mut()
            .iter_mut()
            .zip(&grad)
            .for_each(|(w, g)| *w -= lr_eff * g);
        p.tensor.grad = Some(grad);
    }
    Ok(lr_eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(w: f64, g: Option<f64>) -> ParamSet {
        let mut ps = ParamSet::new();
        let slot = ps.push("w", Tensor::new(vec![1], vec![w]).unwrap()).unwrap();
        ps.get_mut(slot).tensor.grad = g.map(|g| vec![g]);
        ps
    }

    #[test]
    fn plain_step() {
        let mut ps = single(1.0, Some(0.5));
        sgd_step(&mut ps, 0.1, 10, StepDecay::default()).unwrap();
        assert!((ps.get(0).tensor.data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_leaves_parameter() {
        let mut ps = single(1.25, Some(0.0));
        sgd_step(&mut ps, 0.1, 0, StepDecay::default()).unwrap();
        assert_eq!(ps.get(0).tensor.data()[0], 1.25);
    }

    #[test]
    fn decays_after_boundary() {
        let s = StepDecay { decay_at: 600, factor: 0.1 };
        assert_eq!(s.effective_lr(0.1, 599), 0.1);
        assert!((s.effective_lr(0.1, 601) - 0.01).abs() < 1e-15);
        let mut ps = single(1.0, Some(1.0));
        let lr = sgd_step(&mut ps, 0.1, 601, s).unwrap();
        assert!((lr - 0.01).abs() < 1e-15);
    }

    #[test]
    fn missing_grad_is_state_error() {
        let mut ps = single(1.0, None);
        assert!(matches!(sgd_step(&mut ps, 0.1, 0, StepDecay::default()), Err(Error::State(_))));
    }
}
