use super::{Error, Result};

/// Handle to a node in a [`Graph`]. Only valid for the graph that issued it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

/// A dense multi-dimensional array of f64 values.
///
/// `data` is row-major and `data.len() == shape.iter().product()`. `grad`,
/// when present, matches `data` in length.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                op: "tensor",
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        })
    }

    pub fn scalar(value: f64, requires_grad: bool) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
    pub op: Op,
    /// Per-op cache (argmax/argmin flat indices); refreshed by `recompute`.
    pub aux: Vec<usize>,
}

/// Recorded operation. Parents always have smaller node ids.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Matmul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Relu(TensorId),
    Exp(TensorId),
    Log(TensorId),
    Sqrt(TensorId),
    Square(TensorId),
    Scale(TensorId, f64),
    AddConst(TensorId, f64),
    ClampMin(TensorId, f64),
    Sum(TensorId),
    Mean(TensorId),
    MaxAxis(TensorId, usize),
    MinAxis(TensorId, usize),
    SoftmaxNegSqDist { d2: TensorId, t: TensorId },
    Gather { x: TensorId, indices: Vec<usize> },
    Concat { parts: Vec<TensorId>, axis: usize },
    FeatureAffine { x: TensorId, scale: TensorId, shift: TensorId },
    Reshape(TensorId),
    Transpose(TensorId),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<TensorId> {
        match self {
            Op::Leaf => vec![],
            Op::Matmul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b) => vec![*a, *b],
            Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::Scale(a, _)
            | Op::AddConst(a, _)
            | Op::ClampMin(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MaxAxis(a, _)
            | Op::MinAxis(a, _)
            | Op::Reshape(a)
            | Op::Transpose(a) => vec![*a],
            Op::SoftmaxNegSqDist { d2, t } => vec![*d2, *t],
            Op::Gather { x, .. } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
            Op::FeatureAffine { x, scale, shift } => vec![*x, *scale, *shift],
        }
    }
}

/// Append-only computation tape.
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Install a tensor as a leaf node.
    pub fn leaf(&mut self, tensor: Tensor) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            shape: tensor.shape,
            data: tensor.data,
            requires_grad: tensor.requires_grad,
            grad: None,
            op: Op::Leaf,
            aux: Vec::new(),
        });
        id
    }

    /// A non-differentiable leaf.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<TensorId> {
        Ok(self.leaf(Tensor::new(shape, data, false)?))
    }

    pub fn constant_scalar(&mut self, value: f64) -> TensorId {
        self.leaf(Tensor::scalar(value, false))
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    /// The value of a single-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> Result<f64> {
        let node = &self.nodes[id.0];
        if node.data.len() != 1 {
            return Err(Error::NonScalarRoot {
                shape: node.shape.clone(),
            });
        }
        Ok(node.data[0])
    }

    /// Gradient of a node, populated by [`Graph::backward`] for every
    /// reachable node that requires gradients.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Copy a node out of the graph as a standalone tensor.
    pub fn detach(&self, id: TensorId) -> Tensor {
        let node = &self.nodes[id.0];
        Tensor {
            shape: node.shape.clone(),
            data: node.data.clone(),
            requires_grad: node.requires_grad,
            grad: node.grad.clone(),
        }
    }

    /// Overwrite a leaf's values (shape fixed). Used together with
    /// [`Graph::recompute`] for finite differences.
    pub fn set_leaf_data(&mut self, id: TensorId, data: &[f64]) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::NotALeaf { op: "set_leaf_data" });
        }
        if node.data.len() != data.len() {
            return Err(Error::LengthMismatch {
                op: "set_leaf_data",
                expected: node.data.len(),
                actual: data.len(),
            });
        }
        node.data.copy_from_slice(data);
        Ok(())
    }

    /// Re-evaluate every non-leaf node in recording order. Values and op
    /// caches are refreshed; gradients are left untouched. The result is
    /// identical to building a fresh graph with the same leaves.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let (data, aux) = super::ops::eval(&node.op, before)?;
            debug_assert_eq!(data.len(), node.data.len());
            node.data = data;
            node.aux = aux;
        }
        Ok(())
    }

    pub(crate) fn push_op(&mut self, op: Op, requires_grad: bool, shape: Vec<usize>) -> Result<TensorId> {
        let (data, aux) = super::ops::eval(&op, &self.nodes)?;
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            shape,
            data,
            requires_grad,
            grad: None,
            op,
            aux,
        });
        Ok(id)
    }

    pub(crate) fn any_requires_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Populates `grad` on every node that is reachable from the root and
    /// requires gradients; each node is visited exactly once, after all of
    /// its consumers. The graph is consumed: a second call errors.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let root_node = &self.nodes[root.0];
        if root_node.data.len() != 1 {
            return Err(Error::NonScalarRoot {
                shape: root_node.shape.clone(),
            });
        }
        self.consumed = true;

        // Reachable-and-differentiable set, walking parents from the root.
        let mut active = vec![false; self.nodes.len()];
        let mut stack = vec![root.0];
        while let Some(i) = stack.pop() {
            if active[i] || !self.nodes[i].requires_grad {
                continue;
            }
            active[i] = true;
            for p in self.nodes[i].op.parents() {
                stack.push(p.0);
            }
        }
        if !active[root.0] {
            // Root does not require gradients: nothing to do.
            return Ok(());
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            if !active[i] {
                continue;
            }
            let Some(out_grad) = grads[i].take() else {
                continue; // reachable but no gradient flowed here
            };
            super::ops::backward_step(&self.nodes, i, &out_grad, &mut grads, &active);
            self.nodes[i].grad = Some(out_grad);
        }
        Ok(())
    }
}
