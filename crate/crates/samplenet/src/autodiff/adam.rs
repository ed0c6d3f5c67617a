//! Adam optimizer over named parameters stored outside any graph.
//!
//! Training code owns a `Vec<Parameter>`, registers each one as a graph
//! leaf every step, runs backward, collects the leaf gradients, and hands
//! them here. Moments are kept per parameter slot and advance with the
//! standard bias-corrected update.

use super::{Error, Result, Tensor};

/// A named, persistent tensor of trainable (or frozen) values.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                op: "parameter",
                expected,
                actual: data.len(),
            });
        }
        Ok(Parameter {
            name: name.into(),
            shape,
            data,
        })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// View as a tensor for graph registration.
    pub fn tensor(&self, requires_grad: bool) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            requires_grad,
            grad: None,
        }
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Defaults: betas (0.9, 0.999), eps 1e-8.
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, (0.9, 0.999))
    }

    pub fn with_betas(lr: f64, betas: (f64, f64)) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// One update over all parameters. `grads[i]` must match `params[i]`
    /// in length; a missing or mismatched gradient is an error.
    pub fn step(&mut self, params: &mut [Parameter], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::GradientCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.numel()],
                    v: vec![0.0; p.numel()],
                })
                .collect();
        }
        for (p, g) in params.iter().zip(grads) {
            if p.numel() != g.len() {
                return Err(Error::MissingGradient {
                    name: p.name.clone(),
                });
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            for i in 0..param.data.len() {
                let g = grad[i];
                mom.m[i] = self.beta1 * mom.m[i] + (1.0 - self.beta1) * g;
                mom.v[i] = self.beta2 * mom.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                param.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(x: f64) -> Parameter {
        Parameter::new("x", vec![1], vec![x]).unwrap()
    }

    #[test]
    fn descends_on_square() {
        // f(x) = x^2 at x = 1: one step must strictly decrease x.
        let mut params = vec![scalar_param(1.0)];
        let mut adam = Adam::new(0.1);
        adam.step(&mut params, &[vec![2.0]]).unwrap();
        assert!(params[0].data[0] < 1.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = vec![scalar_param(3.5)];
        let mut adam = Adam::new(0.1);
        for _ in 0..5 {
            adam.step(&mut params, &[vec![0.0]]).unwrap();
        }
        assert_eq!(params[0].data[0], 3.5);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        // f(x) = (x - 2)^2 from x0 = 0, lr = 0.05, 200 steps. The expected
        // endpoint comes from running the same scalar recurrence directly.
        let run = |steps: usize| -> f64 {
            let mut params = vec![scalar_param(0.0)];
            let mut adam = Adam::new(0.05);
            for _ in 0..steps {
                let g = 2.0 * (params[0].data[0] - 2.0);
                adam.step(&mut params, &[vec![g]]).unwrap();
            }
            params[0].data[0]
        };
        // Independent recurrence with explicit state, no Adam struct.
        let oracle = |steps: usize| -> f64 {
            let (b1, b2, lr, eps) = (0.9, 0.999, 0.05, 1e-8);
            let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
            for t in 1..=steps {
                let g = 2.0 * (x - 2.0);
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                let mh = m / (1.0 - b1.powi(t as i32));
                let vh = v / (1.0 - b2.powi(t as i32));
                x -= lr * mh / (vh.sqrt() + eps);
            }
            x
        };
        let got = run(200);
        assert!((got - oracle(200)).abs() < 1e-12);
        assert!((got - 2.0).abs() < 1e-2, "x = {got}");
    }

    #[test]
    fn mismatched_gradients_error() {
        let mut params = vec![scalar_param(1.0)];
        let mut adam = Adam::new(0.1);
        assert!(adam.step(&mut params, &[]).is_err());
        assert!(adam.step(&mut params, &[vec![1.0, 2.0]]).is_err());
    }
}
