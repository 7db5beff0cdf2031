//! Instantiated networks: parameters plus an executable layer plan.
//!
//! The same plan drives two interpreters. `forward_tape` records onto a
//! [`Tape`] for training (updating batch-norm running statistics in
//! training mode), `forward_infer` evaluates without a tape and without
//! mutation, so a frozen network is shareable across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    build_architecture, gammatone::gammatone_filterbank, shape_trace, Activation, ArchName,
    ArchitectureSpec, LayerSpec, ModelError, TraceShape, WeightInit, BN_EPS, BN_MOMENTUM,
    LEAKY_SLOPE,
};
use crate::tensor::init::kaiming_uniform;
use crate::tensor::ops::{self, Padding};
use crate::tensor::{Adam, Mode, Tape, Tensor, VarId};
use crate::{Scalar, SAMPLE_RATE};

/// Handle to one parameter tensor of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// A named parameter or state tensor.
#[derive(Debug, Clone)]
pub struct ParamEntry<F> {
    pub name: String,
    pub value: Tensor<F>,
    /// False for batch-norm running statistics, which are saved with the
    /// model but never receive gradients.
    pub trainable: bool,
}

/// Ordered collection of every tensor a network owns.
#[derive(Debug, Clone)]
pub struct ParamSet<F> {
    entries: Vec<ParamEntry<F>>,
}

impl<F> Default for ParamSet<F> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<F: Scalar> ParamSet<F> {
    fn add(&mut self, name: String, value: Tensor<F>, trainable: bool) -> ParamId {
        self.entries.push(ParamEntry {
            name,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ParamEntry<F> {
        &self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<F>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamEntry<F>> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Total scalar count over trainable entries.
    pub fn trainable_scalars(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len() as u64)
            .sum()
    }
}

struct BnIds {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

enum PlanOp {
    Conv {
        w: ParamId,
        b: ParamId,
        stride: usize,
        padding: Padding,
    },
    BatchNorm(BnIds),
    Act(Activation),
    MaxPool {
        pool: usize,
        stride: usize,
    },
    AvgPool {
        pool: usize,
        stride: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        w: ParamId,
        b: ParamId,
    },
    Residual {
        body: Vec<PlanOp>,
        shortcut: Vec<PlanOp>,
    },
}

/// An architecture with instantiated parameters.
pub struct Network<F: Scalar> {
    spec: ArchitectureSpec,
    params: ParamSet<F>,
    plan: Vec<PlanOp>,
    grads: Vec<Option<Vec<F>>>,
}

struct Builder<F: Scalar> {
    params: ParamSet<F>,
    rng: ChaCha8Rng,
}

impl<F: Scalar> Builder<F> {
    fn conv_params(
        &mut self,
        prefix: &str,
        c_in: usize,
        filters: usize,
        kernel: usize,
        init: WeightInit,
    ) -> Result<(ParamId, ParamId), ModelError> {
        let weight = match init {
            WeightInit::KaimingUniform => {
                kaiming_uniform(&[filters, c_in, kernel], c_in * kernel, &mut self.rng)?
            }
            WeightInit::Gammatone => {
                debug_assert_eq!(c_in, 1, "gammatone front end expects mono input");
                gammatone_filterbank(filters, kernel, SAMPLE_RATE)?
            }
        };
        let w = self.params.add(format!("{prefix}.weight"), weight, true);
        let b = self
            .params
            .add(format!("{prefix}.bias"), Tensor::zeros(&[filters])?, true);
        Ok((w, b))
    }

    fn bn_params(&mut self, prefix: &str, channels: usize) -> Result<BnIds, ModelError> {
        Ok(BnIds {
            gamma: self.params.add(
                format!("{prefix}.bn.gamma"),
                Tensor::full(&[channels], F::one())?,
                true,
            ),
            beta: self.params.add(
                format!("{prefix}.bn.beta"),
                Tensor::zeros(&[channels])?,
                true,
            ),
            mean: self.params.add(
                format!("{prefix}.bn.running_mean"),
                Tensor::zeros(&[channels])?,
                false,
            ),
            var: self.params.add(
                format!("{prefix}.bn.running_var"),
                Tensor::full(&[channels], F::one())?,
                false,
            ),
        })
    }

    fn dense_params(
        &mut self,
        prefix: &str,
        d_in: usize,
        units: usize,
    ) -> Result<(ParamId, ParamId), ModelError> {
        let weight = kaiming_uniform(&[units, d_in], d_in, &mut self.rng)?;
        let w = self.params.add(format!("{prefix}.weight"), weight, true);
        let b = self
            .params
            .add(format!("{prefix}.bias"), Tensor::zeros(&[units])?, true);
        Ok((w, b))
    }
}

impl<F: Scalar> std::fmt::Debug for Network<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("arch", &self.spec.name)
            .field("tensors", &self.params.len())
            .finish_non_exhaustive()
    }
}

impl<F: Scalar> Network<F> {
    /// Instantiates an architecture with seeded initialization.
    pub fn new(spec: ArchitectureSpec, init_seed: u64) -> Result<Self, ModelError> {
        let trace = shape_trace(&spec)?;
        let mut builder = Builder {
            params: ParamSet::default(),
            rng: ChaCha8Rng::seed_from_u64(init_seed),
        };
        let mut plan = Vec::with_capacity(spec.layers.len());

        for (idx, layer) in spec.layers.iter().enumerate() {
            let input_shape = if idx == 0 {
                TraceShape::Map {
                    channels: 1,
                    len: spec.input_length,
                }
            } else {
                trace[idx - 1].shape
            };
            let prefix = format!("l{idx:02}");
            match *layer {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                    batch_norm,
                    activation,
                    init,
                } => {
                    let TraceShape::Map { channels, .. } = input_shape else {
                        unreachable!("trace validated layer inputs")
                    };
                    let (w, b) =
                        builder.conv_params(&format!("{prefix}.conv"), channels, filters, kernel, init)?;
                    plan.push(PlanOp::Conv {
                        w,
                        b,
                        stride,
                        padding,
                    });
                    if batch_norm {
                        plan.push(PlanOp::BatchNorm(builder.bn_params(&format!("{prefix}.conv"), filters)?));
                    }
                    if activation != Activation::None {
                        plan.push(PlanOp::Act(activation));
                    }
                }
                LayerSpec::ResidualBlock { filters } => {
                    let TraceShape::Map { channels, .. } = input_shape else {
                        unreachable!("trace validated layer inputs")
                    };
                    let (w1, b1) =
                        builder.conv_params(&format!("{prefix}.conv1"), channels, filters, 3, WeightInit::KaimingUniform)?;
                    let bn1 = builder.bn_params(&format!("{prefix}.conv1"), filters)?;
                    let (w2, b2) =
                        builder.conv_params(&format!("{prefix}.conv2"), filters, filters, 3, WeightInit::KaimingUniform)?;
                    let bn2 = builder.bn_params(&format!("{prefix}.conv2"), filters)?;
                    let body = vec![
                        PlanOp::Conv {
                            w: w1,
                            b: b1,
                            stride: 1,
                            padding: Padding::Same,
                        },
                        PlanOp::BatchNorm(bn1),
                        PlanOp::Act(Activation::LeakyRelu),
                        PlanOp::Conv {
                            w: w2,
                            b: b2,
                            stride: 1,
                            padding: Padding::Same,
                        },
                        PlanOp::BatchNorm(bn2),
                    ];
                    let shortcut = if channels == filters {
                        Vec::new()
                    } else {
                        let (ws, bs) = builder.conv_params(
                            &format!("{prefix}.shortcut"),
                            channels,
                            filters,
                            1,
                            WeightInit::KaimingUniform,
                        )?;
                        let bns = builder.bn_params(&format!("{prefix}.shortcut"), filters)?;
                        vec![
                            PlanOp::Conv {
                                w: ws,
                                b: bs,
                                stride: 1,
                                padding: Padding::Same,
                            },
                            PlanOp::BatchNorm(bns),
                        ]
                    };
                    plan.push(PlanOp::Residual { body, shortcut });
                }
                LayerSpec::MaxPool { pool, stride } => plan.push(PlanOp::MaxPool { pool, stride }),
                LayerSpec::AvgPool { pool, stride } => plan.push(PlanOp::AvgPool { pool, stride }),
                LayerSpec::Dense { units, activation } => {
                    let TraceShape::Flat(d) = input_shape else {
                        unreachable!("trace validated layer inputs")
                    };
                    let (w, b) = builder.dense_params(&format!("{prefix}.dense"), d, units)?;
                    plan.push(PlanOp::Dense { w, b });
                    if activation != Activation::None {
                        plan.push(PlanOp::Act(activation));
                    }
                }
                LayerSpec::Dropout { rate } => plan.push(PlanOp::Dropout { rate }),
                LayerSpec::Flatten => plan.push(PlanOp::Flatten),
                LayerSpec::Output { classes } => {
                    let TraceShape::Flat(d) = input_shape else {
                        unreachable!("trace validated layer inputs")
                    };
                    let (w, b) = builder.dense_params(&format!("{prefix}.output"), d, classes)?;
                    plan.push(PlanOp::Dense { w, b });
                }
            }
        }

        let grads = vec![None; builder.params.len()];
        Ok(Self {
            spec,
            params: builder.params,
            plan,
            grads,
        })
    }

    /// Convenience constructor from an architecture name.
    pub fn build(name: ArchName, init_seed: u64) -> Result<Self, ModelError> {
        Self::new(build_architecture(name), init_seed)
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    /// Replaces the value of a named tensor (checkpoint loading).
    pub fn set_param(&mut self, name: &str, value: Tensor<F>) -> Result<(), ModelError> {
        let entry = self
            .params
            .entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| ModelError::LayerInput {
                index: 0,
                label: name.to_string(),
                expected: "known parameter name",
                found: "missing".to_string(),
            })?;
        if entry.value.shape() != value.shape() {
            return Err(ModelError::LayerInput {
                index: 0,
                label: name.to_string(),
                expected: "matching parameter shape",
                found: format!("{:?} vs {:?}", entry.value.shape(), value.shape()),
            });
        }
        entry.value = value;
        Ok(())
    }

    // ── Forward passes ──────────────────────────────────────────────────

    /// Records a forward pass on `tape`, returning the logits node and the
    /// bindings from parameters to their tape leaves.
    ///
    /// Training mode draws dropout masks from `rng` and updates batch-norm
    /// running statistics; inference mode uses running statistics and makes
    /// dropout the identity.
    pub fn forward_tape<R: Rng>(
        &mut self,
        tape: &mut Tape<F>,
        input: Tensor<F>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(VarId, Vec<(ParamId, VarId)>), ModelError> {
        let x = tape.leaf(input, false);
        let mut binds = Vec::new();
        let out = walk_tape(&self.plan, &mut self.params, tape, x, mode, rng, &mut binds)?;
        Ok((out, binds))
    }

    /// Evaluates the network without recording, using running statistics
    /// and identity dropout. Returns logits.
    pub fn forward_infer(&self, input: &Tensor<F>) -> Result<Tensor<F>, ModelError> {
        walk_infer(&self.plan, &self.params, input.clone())
    }

    /// Class probabilities for a batch: softmax over [`Self::forward_infer`].
    pub fn predict_probs(&self, input: &Tensor<F>) -> Result<Tensor<F>, ModelError> {
        Ok(ops::softmax(&self.forward_infer(input)?)?)
    }

    // ── Gradient plumbing ───────────────────────────────────────────────

    /// Adds the tape gradients of bound parameter leaves into the network's
    /// gradient accumulators.
    pub fn accumulate_grads(&mut self, tape: &Tape<F>, binds: &[(ParamId, VarId)]) {
        for &(pid, vid) in binds {
            if let Some(g) = tape.grad(vid) {
                match &mut self.grads[pid.0] {
                    Some(acc) => {
                        for (a, &v) in acc.iter_mut().zip(g) {
                            *a += v;
                        }
                    }
                    slot @ None => *slot = Some(g.to_vec()),
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    pub fn grad(&self, id: ParamId) -> Option<&[F]> {
        self.grads[id.0].as_deref()
    }

    /// Applies one Adam step over all trainable parameters that have
    /// accumulated gradients, then clears the accumulators.
    pub fn adam_step(&mut self, adam: &mut Adam<F>) {
        adam.advance();
        for (i, entry) in self.params.entries.iter_mut().enumerate() {
            if !entry.trainable {
                continue;
            }
            if let Some(g) = &self.grads[i] {
                adam.update(i, entry.value.data_mut(), g);
            }
        }
        self.zero_grads();
    }

    /// Number of optimizer slots needed by [`Self::adam_step`].
    pub fn adam_slots(&self) -> usize {
        self.params.len()
    }

    /// Copies all parameter values (weights and running statistics).
    pub fn snapshot(&self) -> ParamSet<F> {
        self.params.clone()
    }

    /// Restores a snapshot taken from this network.
    pub fn restore(&mut self, snapshot: &ParamSet<F>) {
        assert_eq!(
            self.params.len(),
            snapshot.len(),
            "snapshot is from a different architecture"
        );
        for (mine, theirs) in self.params.entries.iter_mut().zip(&snapshot.entries) {
            assert_eq!(mine.name, theirs.name, "snapshot is from a different architecture");
            mine.value = theirs.value.clone();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn walk_tape<F: Scalar, R: Rng>(
    plan: &[PlanOp],
    params: &mut ParamSet<F>,
    tape: &mut Tape<F>,
    input: VarId,
    mode: Mode,
    rng: &mut R,
    binds: &mut Vec<(ParamId, VarId)>,
) -> Result<VarId, ModelError> {
    let mut x = input;
    for op in plan {
        x = match op {
            PlanOp::Conv {
                w,
                b,
                stride,
                padding,
            } => {
                let wv = tape.leaf(params.get(*w).value.clone(), true);
                let bv = tape.leaf(params.get(*b).value.clone(), true);
                binds.push((*w, wv));
                binds.push((*b, bv));
                tape.conv1d(x, wv, bv, *stride, *padding)?
            }
            PlanOp::BatchNorm(ids) => {
                let gv = tape.leaf(params.get(ids.gamma).value.clone(), true);
                let bv = tape.leaf(params.get(ids.beta).value.clone(), true);
                binds.push((ids.gamma, gv));
                binds.push((ids.beta, bv));
                match mode {
                    Mode::Training => {
                        let (out, mean, var) = tape.batchnorm_train(x, gv, bv, BN_EPS)?;
                        let mean_entry = &mut params.entries[ids.mean.0].value;
                        ops::ema_update(mean_entry.data_mut(), &mean, BN_MOMENTUM);
                        let var_entry = &mut params.entries[ids.var.0].value;
                        ops::ema_update(var_entry.data_mut(), &var, BN_MOMENTUM);
                        out
                    }
                    Mode::Inference => {
                        let mean = params.get(ids.mean).value.clone();
                        let var = params.get(ids.var).value.clone();
                        tape.batchnorm_infer(x, gv, bv, &mean, &var, BN_EPS)?
                    }
                }
            }
            PlanOp::Act(act) => match act {
                Activation::None => x,
                Activation::Relu => tape.relu(x),
                Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
                Activation::Sigmoid => tape.sigmoid(x),
                Activation::Softmax => tape.softmax(x)?,
            },
            PlanOp::MaxPool { pool, stride } => tape.maxpool1d(x, *pool, *stride)?,
            PlanOp::AvgPool { pool, stride } => tape.avgpool1d(x, *pool, *stride)?,
            PlanOp::Dropout { rate } => tape.dropout(x, *rate, mode, rng)?,
            PlanOp::Flatten => tape.flatten(x)?,
            PlanOp::Dense { w, b } => {
                let wv = tape.leaf(params.get(*w).value.clone(), true);
                let bv = tape.leaf(params.get(*b).value.clone(), true);
                binds.push((*w, wv));
                binds.push((*b, bv));
                tape.dense(x, wv, bv)?
            }
            PlanOp::Residual { body, shortcut } => {
                let branch = walk_tape(body, params, tape, x, mode, rng, binds)?;
                let skip = if shortcut.is_empty() {
                    x
                } else {
                    walk_tape(shortcut, params, tape, x, mode, rng, binds)?
                };
                let sum = tape.add(branch, skip)?;
                tape.leaky_relu(sum, LEAKY_SLOPE)
            }
        };
    }
    Ok(x)
}

fn walk_infer<F: Scalar>(
    plan: &[PlanOp],
    params: &ParamSet<F>,
    input: Tensor<F>,
) -> Result<Tensor<F>, ModelError> {
    let mut x = input;
    for op in plan {
        x = match op {
            PlanOp::Conv {
                w,
                b,
                stride,
                padding,
            } => ops::conv1d(&x, &params.get(*w).value, &params.get(*b).value, *stride, *padding)?,
            PlanOp::BatchNorm(ids) => ops::batchnorm_infer(
                &x,
                &params.get(ids.gamma).value,
                &params.get(ids.beta).value,
                &params.get(ids.mean).value,
                &params.get(ids.var).value,
                BN_EPS,
            )?,
            PlanOp::Act(act) => match act {
                Activation::None => x,
                Activation::Relu => ops::relu(&x),
                Activation::LeakyRelu => ops::leaky_relu(&x, LEAKY_SLOPE),
                Activation::Sigmoid => ops::sigmoid(&x),
                Activation::Softmax => ops::softmax(&x)?,
            },
            PlanOp::MaxPool { pool, stride } => ops::maxpool1d(&x, *pool, *stride)?.output,
            PlanOp::AvgPool { pool, stride } => ops::avgpool1d(&x, *pool, *stride)?,
            PlanOp::Dropout { .. } => x,
            PlanOp::Flatten => ops::flatten(&x)?,
            PlanOp::Dense { w, b } => ops::dense(&x, &params.get(*w).value, &params.get(*b).value)?,
            PlanOp::Residual { body, shortcut } => {
                let branch = walk_infer(body, params, x.clone())?;
                let skip = if shortcut.is_empty() {
                    x
                } else {
                    walk_infer(shortcut, params, x.clone())?
                };
                ops::leaky_relu(&ops::add(&branch, &skip)?, LEAKY_SLOPE)
            }
        };
    }
    Ok(x)
}
