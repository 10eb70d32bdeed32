//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over all inputs.
    pub max_rel_err: f64,
    /// Relative error per input, `‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞)`.
    pub per_input: Vec<f64>,
    /// The same measure over all inputs taken as one vector.
    pub joint_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn scalar_of<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    f(inputs)?.item()
}

/// Compares the tape gradient of the scalar `f(inputs)` with central
/// differences of step `step` on every element of every input.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs.iter().map(|t| t.clone().into_parameter()).collect();
    f(&leaves)?.backward()?;
    let mut per_input = Vec::with_capacity(leaves.len());
    let (mut all_diff, mut all_scale) = (0.0f64, 0.0f64);
    for (which, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let mut numeric = Vec::with_capacity(leaf.numel());
        for k in 0..leaf.numel() {
            let mut probe: Vec<Tensor> = leaves.iter().map(Tensor::stop_gradient).collect();
            let mut plus = leaf.to_vec();
            plus[k] += step;
            probe[which] = Tensor::new(plus, leaf.shape())?;
            let fp = scalar_of(&f, &probe)?;
            let mut minus = leaf.to_vec();
            minus[k] -= step;
            probe[which] = Tensor::new(minus, leaf.shape())?;
            let fm = scalar_of(&f, &probe)?;
            numeric.push((fp - fm) / (2.0 * step));
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        let scale = analytic
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        per_input.push(if scale == 0.0 { diff } else { diff / scale });
        all_diff = all_diff.max(diff);
        all_scale = all_scale.max(scale);
    }
    let max_rel_err = per_input.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_err,
        per_input,
        joint_rel_err: if all_scale == 0.0 { all_diff } else { all_diff / all_scale },
    })
}
