//! Wengert-list reverse-mode differentiation.
//!
//! A [`Tape`] owns every tensor produced during a forward pass. Recording
//! an operation appends a node holding the output value plus whatever the
//! backward rule needs (operand ids, pooling argmax, dropout mask, batch
//! statistics). [`Tape::backward`] seeds the loss gradient and replays the
//! nodes once in reverse execution order, which is already a topological
//! order, accumulating into every `requires_grad` leaf.

use rand::Rng;

use super::ops::{self, BnStats, Padding};
use super::{Tensor, TensorError};
use crate::Scalar;

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

/// Forward-pass mode: training records dropout masks and batch statistics,
/// inference uses running statistics and disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

enum OpRecord<F: Scalar> {
    Leaf,
    Conv1d {
        input: VarId,
        weight: VarId,
        bias: VarId,
        stride: usize,
        padding: Padding,
    },
    Dense {
        input: VarId,
        weight: VarId,
        bias: VarId,
    },
    MaxPool {
        input: VarId,
        argmax: Vec<u32>,
    },
    AvgPool {
        input: VarId,
        pool: usize,
        stride: usize,
    },
    BatchNormTrain {
        input: VarId,
        gamma: VarId,
        beta: VarId,
        stats: BnStats<F>,
    },
    BatchNormInfer {
        input: VarId,
        gamma: VarId,
        beta: VarId,
        mean: Tensor<F>,
        var: Tensor<F>,
        eps: f64,
    },
    Relu {
        input: VarId,
    },
    LeakyRelu {
        input: VarId,
        slope: f64,
    },
    Sigmoid {
        input: VarId,
    },
    Softmax {
        input: VarId,
    },
    Dropout {
        input: VarId,
        mask: Option<Vec<F>>,
    },
    CrossEntropy {
        logits: VarId,
        labels: Vec<usize>,
        probs: Tensor<F>,
    },
    Add {
        a: VarId,
        b: VarId,
    },
    Flatten {
        input: VarId,
    },
    Sum {
        input: VarId,
    },
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    op: OpRecord<F>,
}

/// Recorded computation graph for one forward pass.
#[derive(Default)]
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, requires_grad: bool, op: OpRecord<F>) -> VarId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        VarId(self.nodes.len() - 1)
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Records an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> VarId {
        self.push(value, requires_grad, OpRecord::Leaf)
    }

    /// The forward value of a recorded tensor.
    pub fn value(&self, id: VarId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    /// The accumulated gradient of a tensor, if any has been propagated.
    pub fn grad(&self, id: VarId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Clears the gradient of one node.
    pub fn zero_grad(&mut self, id: VarId) {
        self.nodes[id.0].grad = None;
    }

    // ── Recorded operations ─────────────────────────────────────────────

    pub fn conv1d(
        &mut self,
        input: VarId,
        weight: VarId,
        bias: VarId,
        stride: usize,
        padding: Padding,
    ) -> Result<VarId, TensorError> {
        let out = ops::conv1d(
            self.value(input),
            self.value(weight),
            self.value(bias),
            stride,
            padding,
        )?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            out,
            rg,
            OpRecord::Conv1d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }

    pub fn dense(&mut self, input: VarId, weight: VarId, bias: VarId) -> Result<VarId, TensorError> {
        let out = ops::dense(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(out, rg, OpRecord::Dense { input, weight, bias }))
    }

    pub fn maxpool1d(&mut self, input: VarId, pool: usize, stride: usize) -> Result<VarId, TensorError> {
        let out = ops::maxpool1d(self.value(input), pool, stride)?;
        let rg = self.needs(input);
        Ok(self.push(
            out.output,
            rg,
            OpRecord::MaxPool {
                input,
                argmax: out.argmax,
            },
        ))
    }

    pub fn avgpool1d(&mut self, input: VarId, pool: usize, stride: usize) -> Result<VarId, TensorError> {
        let out = ops::avgpool1d(self.value(input), pool, stride)?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, OpRecord::AvgPool { input, pool, stride }))
    }

    /// Training-mode batch normalization. Returns the output id plus the
    /// batch mean and biased variance so the caller can update running
    /// statistics.
    pub fn batchnorm_train(
        &mut self,
        input: VarId,
        gamma: VarId,
        beta: VarId,
        eps: f64,
    ) -> Result<(VarId, Vec<F>, Vec<F>), TensorError> {
        let (out, stats) =
            ops::batchnorm_train(self.value(input), self.value(gamma), self.value(beta), eps)?;
        let mean = stats.mean.clone();
        let var = stats.var.clone();
        let rg = self.needs(input) || self.needs(gamma) || self.needs(beta);
        let id = self.push(
            out,
            rg,
            OpRecord::BatchNormTrain {
                input,
                gamma,
                beta,
                stats,
            },
        );
        Ok((id, mean, var))
    }

    pub fn batchnorm_infer(
        &mut self,
        input: VarId,
        gamma: VarId,
        beta: VarId,
        running_mean: &Tensor<F>,
        running_var: &Tensor<F>,
        eps: f64,
    ) -> Result<VarId, TensorError> {
        let out = ops::batchnorm_infer(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            running_mean,
            running_var,
            eps,
        )?;
        let rg = self.needs(input) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            out,
            rg,
            OpRecord::BatchNormInfer {
                input,
                gamma,
                beta,
                mean: running_mean.clone(),
                var: running_var.clone(),
                eps,
            },
        ))
    }

    pub fn relu(&mut self, input: VarId) -> VarId {
        let out = ops::relu(self.value(input));
        let rg = self.needs(input);
        self.push(out, rg, OpRecord::Relu { input })
    }

    pub fn leaky_relu(&mut self, input: VarId, slope: f64) -> VarId {
        let out = ops::leaky_relu(self.value(input), slope);
        let rg = self.needs(input);
        self.push(out, rg, OpRecord::LeakyRelu { input, slope })
    }

    pub fn sigmoid(&mut self, input: VarId) -> VarId {
        let out = ops::sigmoid(self.value(input));
        let rg = self.needs(input);
        self.push(out, rg, OpRecord::Sigmoid { input })
    }

    pub fn softmax(&mut self, input: VarId) -> Result<VarId, TensorError> {
        let out = ops::softmax(self.value(input))?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, OpRecord::Softmax { input }))
    }

    pub fn dropout<R: Rng>(
        &mut self,
        input: VarId,
        p: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<VarId, TensorError> {
        let (out, mask) = ops::dropout(self.value(input), p, mode == Mode::Training, rng)?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, OpRecord::Dropout { input, mask }))
    }

    pub fn cross_entropy(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId, TensorError> {
        let out = ops::cross_entropy(self.value(logits), labels)?;
        let rg = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(out.loss),
            rg,
            OpRecord::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs: out.probs,
            },
        ))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        let out = ops::add(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, OpRecord::Add { a, b }))
    }

    pub fn flatten(&mut self, input: VarId) -> Result<VarId, TensorError> {
        let out = ops::flatten(self.value(input))?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, OpRecord::Flatten { input }))
    }

    pub fn sum(&mut self, input: VarId) -> VarId {
        let out = ops::sum(self.value(input));
        let rg = self.needs(input);
        self.push(out, rg, OpRecord::Sum { input })
    }

    // ── Backward ────────────────────────────────────────────────────────

    fn accumulate(&mut self, id: VarId, contribution: &[F]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => {
                for (acc, &v) in g.iter_mut().zip(contribution) {
                    *acc += v;
                }
            }
            None => node.grad = Some(contribution.to_vec()),
        }
    }

    fn grad_tensor(&self, id: usize) -> Tensor<F> {
        Tensor::new(
            self.nodes[id].value.shape().to_vec(),
            self.nodes[id].grad.clone().expect("gradient present"),
        )
        .expect("gradient matches value shape")
    }

    /// Runs the chain rule from a scalar loss back to every leaf.
    ///
    /// Repeated calls without clearing leaf gradients accumulate, matching
    /// gradient summation over multiple losses.
    pub fn backward(&mut self, loss: VarId) -> Result<(), TensorError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Shape {
                context: "backward",
                detail: format!(
                    "loss must be scalar, got shape {:?}",
                    self.nodes[loss.0].value.shape()
                ),
            });
        }
        self.accumulate(loss, &[F::one()]);

        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, OpRecord::Leaf) {
                continue;
            }
            let dy = self.grad_tensor(i);
            match &self.nodes[i].op {
                OpRecord::Leaf => unreachable!(),
                OpRecord::Conv1d {
                    input,
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let (input, weight, bias, stride, padding) =
                        (*input, *weight, *bias, *stride, *padding);
                    let (dx, dw, db) = ops::conv1d_backward(
                        self.value(input),
                        self.value(weight),
                        &dy,
                        stride,
                        padding,
                        self.needs(input),
                    )?;
                    if let Some(dx) = dx {
                        self.accumulate(input, dx.data());
                    }
                    self.accumulate(weight, dw.data());
                    self.accumulate(bias, db.data());
                }
                OpRecord::Dense { input, weight, bias } => {
                    let (input, weight, bias) = (*input, *weight, *bias);
                    let (dx, dw, db) = ops::dense_backward(
                        self.value(input),
                        self.value(weight),
                        &dy,
                        self.needs(input),
                    )?;
                    if let Some(dx) = dx {
                        self.accumulate(input, dx.data());
                    }
                    self.accumulate(weight, dw.data());
                    self.accumulate(bias, db.data());
                }
                OpRecord::MaxPool { input, argmax } => {
                    let input = *input;
                    let dx = ops::maxpool1d_backward(self.value(input).shape(), argmax, &dy)?;
                    self.accumulate(input, dx.data());
                }
                OpRecord::AvgPool { input, pool, stride } => {
                    let (input, pool, stride) = (*input, *pool, *stride);
                    let dx =
                        ops::avgpool1d_backward(self.value(input).shape(), pool, stride, &dy)?;
                    self.accumulate(input, dx.data());
                }
                OpRecord::BatchNormTrain {
                    input,
                    gamma,
                    beta,
                    stats,
                } => {
                    let (input, gamma, beta) = (*input, *gamma, *beta);
                    let (dx, dg, db) = ops::batchnorm_backward_train(
                        self.value(input),
                        self.value(gamma),
                        stats,
                        &dy,
                    )?;
                    self.accumulate(input, dx.data());
                    self.accumulate(gamma, dg.data());
                    self.accumulate(beta, db.data());
                }
                OpRecord::BatchNormInfer {
                    input,
                    gamma,
                    beta,
                    mean,
                    var,
                    eps,
                } => {
                    let (input, gamma, beta, eps) = (*input, *gamma, *beta, *eps);
                    let (dx, dg, db) = ops::batchnorm_backward_infer(
                        self.value(input),
                        self.value(gamma),
                        mean,
                        var,
                        eps,
                        &dy,
                    )?;
                    self.accumulate(input, dx.data());
                    self.accumulate(gamma, dg.data());
                    self.accumulate(beta, db.data());
                }
                OpRecord::Relu { input } => {
                    let input = *input;
                    let dx = ops::relu_backward(self.value(input), &dy);
                    self.accumulate(input, dx.data());
                }
                OpRecord::LeakyRelu { input, slope } => {
                    let (input, slope) = (*input, *slope);
                    let dx = ops::leaky_relu_backward(self.value(input), slope, &dy);
                    self.accumulate(input, dx.data());
                }
                OpRecord::Sigmoid { input } => {
                    let input = *input;
                    let dx = ops::sigmoid_backward(&self.nodes[i].value, &dy);
                    self.accumulate(input, dx.data());
                }
                OpRecord::Softmax { input } => {
                    let input = *input;
                    let dx = ops::softmax_backward(&self.nodes[i].value, &dy);
                    self.accumulate(input, dx.data());
                }
                OpRecord::Dropout { input, mask } => {
                    let input = *input;
                    let dx = match mask {
                        Some(m) => ops::dropout_backward(m, &dy),
                        None => dy.clone(),
                    };
                    self.accumulate(input, dx.data());
                }
                OpRecord::CrossEntropy { logits, labels, probs } => {
                    let logits = *logits;
                    let dx = ops::cross_entropy_backward(probs, labels, dy.item());
                    self.accumulate(logits, dx.data());
                }
                OpRecord::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, dy.data());
                    self.accumulate(b, dy.data());
                }
                OpRecord::Flatten { input } => {
                    let input = *input;
                    self.accumulate(input, dy.data());
                }
                OpRecord::Sum { input } => {
                    let input = *input;
                    let g = dy.item();
                    let ones = vec![g; self.value(input).len()];
                    self.accumulate(input, &ones);
                }
            }
            // Interior gradients are dead once their node has been replayed;
            // leaves keep theirs for the optimizer.
            self.nodes[i].grad = None;
        }
        Ok(())
    }
}
