//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records one forward pass. [`Graph::backward`] walks the tape
//! in reverse once; a second call on the same tape is an error.

use rand::Rng;

use super::kernels;
use super::ops::{self, BatchNormState};
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
    },
    MaxPool1d {
        input: Var,
        argmax: Vec<u32>,
    },
    BatchNorm1d {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu {
        input: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Reshape {
        input: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    Sum {
        input: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf; it receives a gradient iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated on `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].value.take_grad()
    }

    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = ops::conv1d_forward(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(
            y,
            Op::Conv1d {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        ))
    }

    pub fn maxpool1d(&mut self, input: Var) -> Result<Var> {
        let (y, argmax) = ops::maxpool1d_forward(self.value(input))?;
        Ok(self.push(y, Op::MaxPool1d { input, argmax }, &[input]))
    }

    /// Batch normalization; train mode also updates `state`.
    pub fn batchnorm1d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: Mode,
    ) -> Result<Var> {
        let out = ops::batchnorm_impl(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            state,
            mode,
        )?;
        let op = Op::BatchNorm1d {
            input,
            gamma,
            beta,
            xhat: out.xhat,
            inv_std: out.inv_std,
            train: mode == Mode::Train,
        };
        Ok(self.push(out.y, op, &[input, gamma, beta]))
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = ops::dense_forward(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(
            y,
            Op::Dense {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let y = ops::relu(self.value(input));
        self.push(y, Op::Relu { input }, &[input])
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let len = self.value(input).len();
        let mask = if mode == Mode::Eval || rate == 0.0 {
            vec![T::one(); len]
        } else {
            ops::dropout_mask::<T, R>(len, rate, rng)?
        };
        let x = self.value(input);
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let y = Tensor::new(x.shape(), data)?;
        Ok(self.push(y, Op::Dropout { input, mask }, &[input]))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let x = self.value(input);
        let y = Tensor::new(x.shape(), x.data().to_vec())?.reshape(shape)?;
        Ok(self.push(y, Op::Reshape { input }, &[input]))
    }

    /// Mean cross-entropy as a scalar node, plus the softmax probabilities.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<(Var, Tensor<T>)> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), labels)?;
        let op = Op::SoftmaxCrossEntropy {
            logits,
            probs: probs.data().to_vec(),
            labels: labels.to_vec(),
        };
        Ok((self.push(Tensor::scalar(loss), op, &[logits]), probs))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum { input }, &[input])
    }

    /// Reverse-mode pass from a scalar root. Gradients land on every node
    /// that depends on a `requires_grad` leaf.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::State(
                "backward already ran on this graph; record a new forward pass".into(),
            ));
        }
        if !self.nodes.iter().any(|n| !matches!(n.op, Op::Leaf)) {
            return Err(Error::State("no forward pass recorded".into()));
        }
        if self.value(root).len() != 1 {
            return Err(Error::State(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        self.consumed = true;
        if !self.nodes[root.0].needs_grad {
            return Ok(());
        }
        self.nodes[root.0].value.set_grad(vec![T::one()])?;

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].value.take_grad() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let mut sink = Sink(before);
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &sink.0[input.0].value;
                    let w = &sink.0[weight.0].value;
                    let d = ops::conv_dims(x, w, &sink.0[bias.0].value)?;
                    let need_dx = sink.0[input.0].needs_grad;
                    let (dx, dw, db) = kernels::conv1d_backward(x.data(), w.data(), &g, d, need_dx);
                    if let Some(dx) = dx {
                        sink.add(*input, dx);
                    }
                    sink.add(*weight, dw);
                    sink.add(*bias, db);
                }
                Op::MaxPool1d { input, argmax } => {
                    let n = sink.0[input.0].value.len();
                    sink.add(*input, kernels::maxpool1d_backward(&g, argmax, n));
                }
                Op::BatchNorm1d {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    train,
                } => {
                    let s = sink.0[input.0].value.shape().to_vec();
                    let gm = sink.0[gamma.0].value.data();
                    let (dx, dgamma, dbeta) = kernels::batchnorm_backward(
                        &g, xhat, inv_std, gm, s[0], s[1], s[2], *train,
                    );
                    sink.add(*input, dx);
                    sink.add(*gamma, dgamma);
                    sink.add(*beta, dbeta);
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = &sink.0[input.0].value;
                    let w = &sink.0[weight.0].value;
                    let (b, n, m) = (x.shape()[0], x.shape()[1], w.shape()[0]);
                    let need_dx = sink.0[input.0].needs_grad;
                    let (dx, dw, db) =
                        kernels::dense_backward(x.data(), w.data(), &g, b, n, m, need_dx);
                    if let Some(dx) = dx {
                        sink.add(*input, dx);
                    }
                    sink.add(*weight, dw);
                    sink.add(*bias, db);
                }
                Op::Relu { input } => {
                    let x = sink.0[input.0].value.data();
                    let dx = g
                        .iter()
                        .zip(x)
                        .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                        .collect();
                    sink.add(*input, dx);
                }
                Op::Dropout { input, mask } => {
                    let dx = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                    sink.add(*input, dx);
                }
                Op::Reshape { input } => sink.add(*input, g),
                Op::SoftmaxCrossEntropy {
                    logits,
                    probs,
                    labels,
                } => {
                    let c = probs.len() / labels.len();
                    let scale = g[0] / T::lit(labels.len() as f64);
                    let mut dx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    for (row, &y) in labels.iter().enumerate() {
                        dx[row * c + y] -= scale;
                    }
                    sink.add(*logits, dx);
                }
                Op::Sum { input } => {
                    let n = sink.0[input.0].value.len();
                    sink.add(*input, vec![g[0]; n]);
                }
            }
            // interior gradients are not kept; leaves keep theirs
        }
        Ok(())
    }
}

struct Sink<'a, T>(&'a mut [Node<T>]);

impl<T: Scalar> Sink<'_, T> {
    fn add(&mut self, v: Var, g: Vec<T>) {
        let node = &mut self.0[v.0];
        if !node.needs_grad {
            return;
        }
        match node.value.take_grad() {
            Some(mut acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += *b;
                }
                node.value.set_grad(acc).expect("same shape");
            }
            None => node
                .value
                .set_grad(g)
                .expect("gradient shape matches value"),
        }
    }
}
