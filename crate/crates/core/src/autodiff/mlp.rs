use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::init_truncated_normal;
use super::{Matrix, NodeId, ParamId, ParamStore, Scalar, Tape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    Relu,
    /// Linear pass-through; only useful for tests and ablations.
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Silu => x / (T::one() + (-x).exp()),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Silu => {
                let s = T::one() / (T::one() + (-x).exp());
                s * (T::one() + x * (T::one() - s))
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Shape and options of one multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub hidden_layers: usize,
    pub layer_norm: bool,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            hidden_layers: 1,
            layer_norm: true,
            activation: Activation::Silu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || (self.hidden_layers > 0 && self.hidden == 0) {
            return Err(Error::Config(format!("MLP widths must be positive: {self:?}")));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input];
        d.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        d.push(self.output);
        d
    }

    /// Creates the parameters under `prefix`: fan-in scaled truncated-normal
    /// weights, zero biases, unit gains.
    pub fn init<T: Scalar, R: Rng>(
        &self,
        store: &mut ParamStore<T>,
        prefix: &str,
        rng: &mut R,
    ) -> Result<Mlp> {
        self.validate()?;
        let dims = self.dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let std = 1.0 / (w[0] as f64).sqrt();
            let wid = store.add(
                format!("{prefix}.l{i}.w"),
                init_truncated_normal(rng, w[0], w[1], std),
            )?;
            let bid = store.add(format!("{prefix}.l{i}.b"), Matrix::zeros(1, w[1]))?;
            layers.push((wid, bid));
        }
        let norm = if self.layer_norm {
            let g = store.add(
                format!("{prefix}.ln.gain"),
                Matrix::from_fn(1, self.output, |_, _| T::one()),
            )?;
            let o = store.add(format!("{prefix}.ln.offset"), Matrix::zeros(1, self.output))?;
            Some((g, o))
        } else {
            None
        };
        Ok(Mlp {
            spec: self.clone(),
            layers,
            norm,
        })
    }

    /// Looks up existing parameters under `prefix`, checking their shapes.
    pub fn bind<T: Scalar>(&self, store: &ParamStore<T>, prefix: &str) -> Result<Mlp> {
        self.validate()?;
        let dims = self.dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let wid = store.require(&format!("{prefix}.l{i}.w"))?;
            let bid = store.require(&format!("{prefix}.l{i}.b"))?;
            check_shape(store, wid, (w[0], w[1]))?;
            check_shape(store, bid, (1, w[1]))?;
            layers.push((wid, bid));
        }
        let norm = if self.layer_norm {
            let g = store.require(&format!("{prefix}.ln.gain"))?;
            let o = store.require(&format!("{prefix}.ln.offset"))?;
            check_shape(store, g, (1, self.output))?;
            check_shape(store, o, (1, self.output))?;
            Some((g, o))
        } else {
            None
        };
        Ok(Mlp {
            spec: self.clone(),
            layers,
            norm,
        })
    }
}

fn check_shape<T: Scalar>(store: &ParamStore<T>, id: ParamId, shape: (usize, usize)) -> Result<()> {
    if store.get(id).shape() != shape {
        return Err(Error::Shape(format!(
            "parameter {} has shape {:?}, expected {shape:?}",
            store.name(id),
            store.get(id).shape()
        )));
    }
    Ok(())
}

/// One block of the first-layer input.
///
/// Splitting the input lets an edge MLP multiply node latents once per node
/// and gather the products, instead of materializing the concatenated edge
/// input.
#[derive(Debug, Clone)]
pub enum MlpInput {
    Node(NodeId),
    Gather { node: NodeId, index: Arc<[u32]> },
}

/// An MLP bound to its parameters.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
    norm: Option<(ParamId, ParamId)>,
}

impl Mlp {
    /// Parameters of the last affine layer.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().expect("an MLP has at least one layer")
    }

    pub fn norm_params(&self) -> Option<(ParamId, ParamId)> {
        self.norm
    }

    /// Forward pass over the concatenation of `inputs` (column blocks in order).
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        inputs: &[MlpInput],
    ) -> Result<NodeId> {
        let (w0, b0) = self.layers[0];
        let mut offset = 0;
        let mut acc: Option<NodeId> = None;
        for (k, part) in inputs.iter().enumerate() {
            let bias = if k == 0 { Some(b0) } else { None };
            let term = match part {
                MlpInput::Node(node) => {
                    let w = tape.value(*node).cols();
                    let t = tape.linear_rows(params, *node, w0, offset..offset + w, bias)?;
                    offset += w;
                    t
                }
                MlpInput::Gather { node, index } => {
                    let w = tape.value(*node).cols();
                    let t = tape.linear_rows(params, *node, w0, offset..offset + w, bias)?;
                    offset += w;
                    tape.gather(t, index.clone())?
                }
            };
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        if offset != self.spec.input {
            return Err(Error::Shape(format!(
                "MLP input width {offset}, expected {}",
                self.spec.input
            )));
        }
        let mut h = acc.ok_or_else(|| Error::Shape("MLP called without inputs".into()))?;
        for &(w, b) in &self.layers[1..] {
            h = tape.activation(h, self.spec.activation);
            h = tape.linear(params, h, w, Some(b))?;
        }
        if let Some((g, o)) = self.norm {
            h = tape.layer_norm(params, h, g, o)?;
        }
        Ok(h)
    }
}

/// Binds `spec` to the parameters under `prefix` and runs it on `input`.
pub fn mlp_forward<T: Scalar>(
    spec: &MlpSpec,
    params: &ParamStore<T>,
    prefix: &str,
    input: NodeId,
    tape: &mut Tape<T>,
) -> Result<NodeId> {
    spec.bind(params, prefix)?
        .forward(tape, params, &[MlpInput::Node(input)])
}
