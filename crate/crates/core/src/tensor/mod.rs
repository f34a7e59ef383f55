//! Dense float32 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted buffer plus an optional
//! link to the operation that produced it. Calling [`Tensor::backward`] on a
//! scalar walks that graph in reverse topological order and accumulates
//! gradients into every leaf created with `requires_grad`. Only leaves store
//! gradients; intermediate gradients live for the duration of one backward
//! pass.

mod conv;
mod elementwise;
mod gemm;
mod loss;
mod norm;
mod optim;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use conv::{conv2d, conv_output_size, conv_transpose2d, conv_transpose_output_size};
pub use elementwise::{
    activation, add, concat_channels, dropout, mean, mul, scale, sum, Activation,
};
pub use loss::{bce_loss, l1_loss, BCE_EPS};
pub use norm::{batch_norm2d, BatchNormMode, RunningStats};
pub use optim::{adam_update, Adam, AdamState};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Backward rule of a recorded operation.
pub(crate) trait Backward: Send + Sync {
    fn inputs(&self) -> Vec<&Tensor>;

    /// Gradients for each entry of [`Backward::inputs`], in order. `None`
    /// means the input does not need one.
    fn backward(&self, grad_out: &[f32]) -> Vec<Option<Vec<f32>>>;
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f32>>>,
    op: Option<Box<dyn Backward>>,
}

/// Cheaply clonable handle to a node in the autodiff graph.
#[derive(Clone)]
pub struct Tensor(Arc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("leaf", &self.is_leaf())
            .finish()
    }
}

impl Tensor {
    fn build(
        shape: Vec<usize>,
        data: Arc<Vec<f32>>,
        requires_grad: bool,
        op: Option<Box<dyn Backward>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            op,
        }))
    }

    /// New constant leaf. Fails when `data` does not fill `shape`.
    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), Arc::new(data), false, None))
    }

    /// New trainable leaf.
    pub fn parameter(data: Vec<f32>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        Ok(t.into_leaf(true))
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Self::from_vec(vec![value; numel], shape).expect("full: valid shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f32) -> Self {
        Self::full(&[1], value)
    }

    /// Leaf sharing this tensor's data, with the given `requires_grad` flag.
    pub fn into_leaf(self, requires_grad: bool) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), requires_grad, None)
    }

    /// Same data, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Trainable leaf sharing data with `self`.
    pub fn requires_grad_(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), true, None)
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f32>, op: Box<dyn Backward>) -> Self {
        let requires_grad = op.inputs().iter().any(|t| t.requires_grad());
        let op = if requires_grad { Some(op) } else { None };
        Self::build(shape, Arc::new(data), requires_grad, op)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.0.data.as_ref().clone()
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(self.numel(), 1, "item() on a tensor with {} elements", self.numel());
        self.0.data[0]
    }

    /// Accumulated gradient, if any backward pass reached this leaf.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// `N×C×H×W` dimensions; fails on any other rank.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.0.shape[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::shape(format!(
                "expected rank-4 N×C×H×W tensor, got shape {:?}",
                self.0.shape
            ))),
        }
    }

    fn accumulate_grad(&self, g: &[f32]) {
        let mut slot = self.0.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Back-propagate from this scalar, accumulating into leaf gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<f32>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(grad) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.op {
                None => node.accumulate_grad(&grad),
                Some(op) => {
                    let inputs = op.inputs();
                    let grads = op.backward(&grad);
                    debug_assert_eq!(inputs.len(), grads.len());
                    for (input, g) in inputs.into_iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel());
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes reachable through `requires_grad` edges, inputs before outputs.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // (node, children already pushed)
        let mut stack = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(op) = &node.0.op {
                for input in op.inputs() {
                    if input.requires_grad() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}

pub(crate) fn check_same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::parameter(vec![1.0, -2.0, 3.5, 0.0], &[2, 2]).unwrap();
        sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn square_gradient_at_three() {
        let x = Tensor::parameter(vec![3.0], &[1]).unwrap();
        sum(&mul(&x, &x).unwrap()).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::parameter(vec![1.0, 2.0], &[2]).unwrap();
        let loss = sum(&x);
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let x = Tensor::parameter(vec![1.0, 2.0], &[2]).unwrap();
        let y = scale(&x, 2.0);
        assert!(matches!(y.backward(), Err(Error::Shape(_))));
    }

    #[test]
    fn diamond_graph_sums_both_paths() {
        // y = x*x + 3x, dy/dx = 2x + 3
        let x = Tensor::parameter(vec![2.0], &[1]).unwrap();
        let y = add(&mul(&x, &x).unwrap(), &scale(&x, 3.0)).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![7.0]);
    }

    #[test]
    fn detached_input_gets_no_grad() {
        let x = Tensor::parameter(vec![2.0], &[1]).unwrap();
        let y = mul(&x.detach(), &x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn constants_record_no_graph() {
        let a = Tensor::full(&[3], 1.0);
        let b = scale(&a, 2.0);
        assert!(b.is_leaf());
        assert!(!b.requires_grad());
    }

    #[test]
    fn shape_validation() {
        assert!(Tensor::from_vec(vec![1.0; 5], &[2, 2]).is_err());
        assert!(Tensor::from_vec(vec![], &[0, 2]).is_err());
    }
}
