use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{invalid, Result, TensorError};
use crate::shape::numel;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Gradient of one op with respect to each of its inputs. `None` means the
/// input receives no contribution from this op.
pub(crate) type InputGrads = Vec<Option<Vec<f64>>>;

/// Backward rule: `(upstream grad, output values, inputs) -> input grads`.
pub(crate) type BackwardFn =
    Box<dyn Fn(&[f64], &[f64], &[Tensor]) -> Result<InputGrads> + Send + Sync>;

pub(crate) struct Node {
    pub(crate) name: &'static str,
    pub(crate) inputs: Vec<Tensor>,
    pub(crate) backward: BackwardFn,
}

pub(crate) struct Inner {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) node: Option<Node>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Mutex<Option<Vec<f64>>>,
}

/// Immutable dense tensor of `f64` in row-major order.
///
/// Cloning is cheap (shared handle). Every op allocates a fresh output, so no
/// output ever aliases an input buffer.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Arc<Inner>,
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, node: Option<Node>, requires_grad: bool) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                node,
                requires_grad,
                grad: Mutex::new(None),
            }),
        }
    }

    /// Constant tensor. Fails if the element count does not match the shape or
    /// any value is non-finite.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(invalid("new", format!("zero extent in shape {shape:?}")));
        }
        if data.len() != numel(shape) {
            return Err(invalid(
                "new",
                format!("{} values for shape {shape:?}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "new" });
        }
        Ok(Self::build(shape.to_vec(), data, None, false))
    }

    pub fn scalar(value: f64) -> Self {
        assert!(value.is_finite(), "scalar must be finite");
        Self::build(Vec::new(), vec![value], None, false)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::new(vec![value; numel(shape)], shape).expect("valid constant shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn eye(n: usize) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Self::new(d, &[n, n]).expect("valid identity")
    }

    /// Trainable leaf: participates in the tape and accumulates gradients.
    pub fn parameter(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let t = Self::new(data, shape)?;
        Ok(t.into_parameter())
    }

    /// A fresh trainable leaf holding a copy of these values.
    pub fn into_parameter(self) -> Self {
        Self::build(self.inner.shape.clone(), self.inner.data.clone(), None, true)
    }

    /// Output of a differentiable op. The backward rule is kept only when some
    /// input participates in the tape.
    pub(crate) fn from_op(
        name: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        inputs: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Self> {
        debug_assert_eq!(data.len(), numel(&shape));
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let node = requires_grad.then(|| Node {
            name,
            inputs,
            backward,
        });
        Ok(Self::build(shape, data, node, requires_grad))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        Ok(self.inner.data[0])
    }

    /// Accumulated gradient, present once a backward pass reached this leaf.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Same values, cut from the tape: nothing upstream receives gradient
    /// through the returned tensor.
    pub fn stop_gradient(&self) -> Self {
        Self::build(self.inner.shape.clone(), self.inner.data.clone(), None, false)
    }

    /// Alias of [`Tensor::stop_gradient`].
    pub fn detach(&self) -> Self {
        self.stop_gradient()
    }

    pub(crate) fn node(&self) -> Option<&Node> {
        self.inner.node.as_ref()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}
