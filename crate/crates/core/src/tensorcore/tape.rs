//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records one forward pass. Each recorded node keeps its value,
//! its parents and the operation that produced it; [`Tape::backward`] walks
//! the nodes in reverse creation order, which is a valid topological order
//! because a node can only reference nodes created before it.
//!
//! Tapes are single-use and confined to one thread. Batch parallelism runs
//! one tape per item.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffTensor {
    id: usize,
    requires_grad: bool,
}

impl DiffTensor {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn requires_grad(self) -> bool {
        self.requires_grad
    }
}

/// A differentiable operation: given the upstream gradient, produce the
/// gradient for every input flagged in `needs`.
pub trait Operation<T: Scalar> {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<usize>,
    op: Option<Box<dyn Operation<T>>>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Gradients produced by one backward pass, indexed by leaf handle.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, leaf: DiffTensor) -> Option<&Tensor<T>> {
        self.grads.get(leaf.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, leaf: DiffTensor) -> Option<Tensor<T>> {
        self.grads.get_mut(leaf.id).and_then(Option::take)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> DiffTensor {
        self.push(Node { value, inputs: Vec::new(), op: None, requires_grad })
    }

    /// Constant leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> DiffTensor {
        self.leaf(value, false)
    }

    pub fn value(&self, t: DiffTensor) -> &Tensor<T> {
        &self.nodes[t.id].value
    }

    pub fn shape(&self, t: DiffTensor) -> &[usize] {
        self.nodes[t.id].value.shape()
    }

    /// Records the result of `op` applied to `inputs`.
    pub fn record(
        &mut self,
        value: Tensor<T>,
        inputs: &[DiffTensor],
        op: Box<dyn Operation<T>>,
    ) -> DiffTensor {
        let requires_grad = inputs.iter().any(|t| t.requires_grad);
        self.push(Node {
            value,
            inputs: inputs.iter().map(|t| t.id).collect(),
            op: if requires_grad { Some(op) } else { None },
            requires_grad,
        })
    }

    fn push(&mut self, node: Node<T>) -> DiffTensor {
        let requires_grad = node.requires_grad;
        self.nodes.push(node);
        DiffTensor { id: self.nodes.len() - 1, requires_grad }
    }

    /// Back-propagates from a scalar root, returning gradients of every
    /// reachable leaf recorded with `requires_grad`.
    pub fn backward(&mut self, root: DiffTensor) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let root_shape = self.nodes[root.id].value.shape().to_vec();
        if self.nodes[root.id].value.len() != 1 {
            return Err(Error::NonScalarRoot { shape: root_shape });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Tensor::full(&root_shape, T::one()));

        for id in (0..=root.id).rev() {
            let node = &self.nodes[id];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(grad) = grads[id].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
            let input_grads = op.backward(&grad, &inputs, &node.value, &needs)?;
            for ((&input, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                let (Some(g), true) = (g, need) else { continue };
                g.expect_shape("gradient of input", self.nodes[input].value.shape())?;
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
            // leaves keep their gradient; intermediates were taken above
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.op.is_some() || !node.requires_grad {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }

    // ---- built-in operations ----

    pub fn add(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.record(v, &[a, b], Box::new(AddOp)))
    }

    pub fn sub(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.record(v, &[a, b], Box::new(SubOp)))
    }

    pub fn mul(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.record(v, &[a, b], Box::new(MulOp)))
    }

    pub fn scale(&mut self, a: DiffTensor, k: T) -> DiffTensor {
        let v = self.value(a).scale(k);
        self.record(v, &[a], Box::new(ScaleOp(k)))
    }

    pub fn sum(&mut self, a: DiffTensor) -> DiffTensor {
        let v = Tensor::scalar(self.value(a).sum());
        self.record(v, &[a], Box::new(SumOp))
    }

    pub fn relu(&mut self, a: DiffTensor) -> DiffTensor {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.record(v, &[a], Box::new(ReluOp))
    }

    /// Concatenation along the leading (channel) axis.
    pub fn concat(&mut self, parts: &[DiffTensor]) -> Result<DiffTensor> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let leads = values.iter().map(|v| v.shape()[0]).collect();
        let v = Tensor::concat(&values)?;
        Ok(self.record(v, parts, Box::new(ConcatOp { leads })))
    }

    /// Point-wise fully connected map over the channel axis:
    /// `y[o, s] = Σ_i w[i, o] · x[i, s] + b[o]` for every grid point `s`.
    pub fn channel_linear(
        &mut self,
        x: DiffTensor,
        weight: DiffTensor,
        bias: Option<DiffTensor>,
    ) -> Result<DiffTensor> {
        let xv = self.value(x);
        let wv = self.value(weight);
        if wv.rank() != 2 || xv.shape()[0] != wv.shape()[0] {
            return Err(Error::ShapeMismatch {
                context: "channel_linear weight",
                expected: vec![xv.shape()[0], 0],
                got: wv.shape().to_vec(),
            });
        }
        let cout = wv.shape()[1];
        if let Some(b) = bias {
            self.value(b).expect_shape("channel_linear bias", &[cout])?;
        }
        let bv = bias.map(|b| self.value(b));
        let y = channel_linear_forward(xv, wv, bv);
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.record(y, &inputs, Box::new(ChannelLinearOp)))
    }
}

/// Shared kernel of [`Tape::channel_linear`].
pub fn channel_linear_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let (cin, cout) = (w.shape()[0], w.shape()[1]);
    let spatial = x.len() / cin;
    let mut shape = x.shape().to_vec();
    shape[0] = cout;
    let mut y = Tensor::zeros(&shape);
    for o in 0..cout {
        let yo = y.outer_mut(o);
        if let Some(b) = b {
            yo.fill(b.data()[o]);
        }
        for i in 0..cin {
            let wio = w.data()[i * cout + o];
            let xi = &x.data()[i * spatial..(i + 1) * spatial];
            for (a, &xv) in yo.iter_mut().zip(xi) {
                *a += wio * xv;
            }
        }
    }
    y
}

struct AddOp;
struct SubOp;
struct MulOp;
struct ScaleOp<T>(T);
struct SumOp;
struct ReluOp;
struct ConcatOp {
    leads: Vec<usize>,
}
struct ChannelLinearOp;

impl<T: Scalar> Operation<T> for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, g: &Tensor<T>, _: &[&Tensor<T>], _: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.clone()), Some(g.clone())])
    }
}

impl<T: Scalar> Operation<T> for SubOp {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, g: &Tensor<T>, _: &[&Tensor<T>], _: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.clone()), Some(g.scale(-T::one()))])
    }
}

impl<T: Scalar> Operation<T> for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, g: &Tensor<T>, x: &[&Tensor<T>], _: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let ga = if needs[0] { Some(g.zip_map(x[1], |a, b| a * b)?) } else { None };
        let gb = if needs[1] { Some(g.zip_map(x[0], |a, b| a * b)?) } else { None };
        Ok(vec![ga, gb])
    }
}

impl<T: Scalar> Operation<T> for ScaleOp<T> {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn backward(&self, g: &Tensor<T>, _: &[&Tensor<T>], _: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.scale(self.0))])
    }
}

impl<T: Scalar> Operation<T> for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn backward(&self, g: &Tensor<T>, x: &[&Tensor<T>], _: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(Tensor::full(x[0].shape(), g.data()[0]))])
    }
}

impl<T: Scalar> Operation<T> for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn backward(&self, g: &Tensor<T>, x: &[&Tensor<T>], _: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.zip_map(x[0], |g, x| if x > T::zero() { g } else { T::zero() })?)])
    }
}

impl<T: Scalar> Operation<T> for ConcatOp {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn backward(&self, g: &Tensor<T>, x: &[&Tensor<T>], _: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let block = g.len() / g.shape()[0];
        let mut start = 0;
        let mut out = Vec::with_capacity(self.leads.len());
        for ((&lead, part), &need) in self.leads.iter().zip(x).zip(needs) {
            let end = start + lead * block;
            out.push(if need {
                Some(Tensor::new(part.shape().to_vec(), g.data()[start..end].to_vec())?)
            } else {
                None
            });
            start = end;
        }
        Ok(out)
    }
}

impl<T: Scalar> Operation<T> for ChannelLinearOp {
    fn name(&self) -> &'static str {
        "channel_linear"
    }
    fn backward(&self, g: &Tensor<T>, x: &[&Tensor<T>], _: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let (xv, wv) = (x[0], x[1]);
        let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
        let spatial = xv.len() / cin;
        let gx = needs[0].then(|| {
            let mut gx = Tensor::zeros(xv.shape());
            for i in 0..cin {
                let gxi = gx.outer_mut(i);
                for o in 0..cout {
                    let wio = wv.data()[i * cout + o];
                    let go = &g.data()[o * spatial..(o + 1) * spatial];
                    for (a, &gv) in gxi.iter_mut().zip(go) {
                        *a += wio * gv;
                    }
                }
            }
            gx
        });
        let gw = needs[1].then(|| {
            let mut gw = Tensor::zeros(wv.shape());
            for i in 0..cin {
                let xi = &xv.data()[i * spatial..(i + 1) * spatial];
                for o in 0..cout {
                    let go = &g.data()[o * spatial..(o + 1) * spatial];
                    gw.data_mut()[i * cout + o] = xi.iter().zip(go).map(|(&a, &b)| a * b).sum();
                }
            }
            gw
        });
        let mut out = vec![gx, gw];
        if x.len() == 3 {
            out.push(needs[2].then(|| {
                Tensor::from_fn(&[cout], |o| g.data()[o[0] * spatial..(o[0] + 1) * spatial].iter().copied().sum())
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_tensor(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_tensor(&[1.0, -2.0, 3.0]), true);
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_of_sum_of_squares_is_twice_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_tensor(&[1.5, -2.0, 0.25]), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn non_scalar_root_and_second_backward_are_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_tensor(&[1.0, 2.0]), true);
        let y = tape.relu(x);
        assert!(matches!(tape.backward(y), Err(Error::NonScalarRoot { .. })));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::TapeConsumed)));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_tensor(&[1.0, 2.0]), true);
        let c = tape.constant(vec_tensor(&[3.0, 4.0]));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_tensor(&[2.0]), true);
        let a = tape.scale(x, 3.0);
        let b = tape.add(a, x).unwrap();
        let s = tape.sum(b);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[4.0]);
    }

    #[test]
    fn channel_linear_matches_hand_computation() {
        let mut tape = Tape::new();
        // 2 input channels, 3 grid points
        let x = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), true);
        let w = tape.leaf(Tensor::new(vec![2, 1], vec![0.5, -1.0]).unwrap(), true);
        let b = tape.leaf(vec_tensor(&[0.25]), true);
        let y = tape.channel_linear(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[-3.25, -3.75, -4.25]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[6.0, 15.0]);
        assert_eq!(g.get(b).unwrap().data(), &[3.0]);
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5, 0.5, -1.0, -1.0, -1.0]);
    }
}
