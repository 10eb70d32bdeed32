use crate::error::{invalid, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Parameters are immutable tensors, so `step`
/// swaps each one for a fresh leaf holding the updated values.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Adam {
            config,
            steps: 0,
            first_moment: m,
            second_moment: v,
        }
    }

    /// One update from the gradients accumulated on `params`. Parameters that
    /// received no gradient are left untouched.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(invalid(
                "adam",
                format!("{} params for {} moment slots", params.len(), self.first_moment.len()),
            ));
        }
        self.steps += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.steps as i32);
        let bc2 = 1.0 - b2.powi(self.steps as i32);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let Some(g) = p.grad() else { continue };
            if g.len() != m.len() {
                return Err(invalid("adam", "moment size does not match parameter"));
            }
            let mut next = p.to_vec();
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                next[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            *p = Tensor::parameter(next, p.shape())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_values() {
        let mut ps = vec![Tensor::parameter(vec![0.5, -1.5], &[2]).unwrap()];
        ps[0].mul(&ps[0]).unwrap().sum_all().unwrap().backward().unwrap();
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            [2],
        );
        adam.step(&mut ps).unwrap();
        assert_eq!(ps[0].data(), &[0.5, -1.5]);
        assert!(ps[0].grad().is_none());
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = vec![Tensor::parameter(vec![2.0], &[1]).unwrap()];
        ps[0].mul(&ps[0]).unwrap().sum_all().unwrap().backward().unwrap();
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..Default::default()
            },
            [1],
        );
        adam.step(&mut ps).unwrap();
        assert!((ps[0].data()[0] - 1.9).abs() < 1e-8);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut ps = vec![Tensor::parameter(vec![3.0, -2.0], &[2]).unwrap()];
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.05,
                ..Default::default()
            },
            [2],
        );
        for _ in 0..500 {
            ps[0].square().unwrap().sum_all().unwrap().backward().unwrap();
            adam.step(&mut ps).unwrap();
        }
        assert!(ps[0].data().iter().all(|v| v.abs() < 1e-2));
    }
}
