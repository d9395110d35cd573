use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ndiff::{BatchNormState, BatchStats, ParamId, ParamStore, Tape, Tensor, Var};

/// Directed message-passing edges with optional per-edge weights
/// (`E × 1`).
#[derive(Debug, Clone)]
pub struct Edges {
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub weights: Option<Var>,
}

/// `h' = h·W_self + (A h)·W_nbr + b`, optionally followed by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub w_self: ParamId,
    pub w_nbr: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl ConvLayer {
    pub fn register<R: Rng>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            w_self: store.add_glorot(format!("{name}.w_self"), d_in, d_out, rng),
            w_nbr: store.add_glorot(format!("{name}.w_nbr"), d_in, d_out, rng),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[1, d_out])),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, edges: &Edges, relu: bool) -> Result<Var> {
        let ws = tape.param(store, self.w_self);
        let wn = tape.param(store, self.w_nbr);
        let b = tape.param(store, self.bias);
        let own = tape.matmul(x, ws)?;
        // aggregate in the narrower of the two widths
        let nbr = if self.d_out <= self.d_in {
            let p = tape.matmul(x, wn)?;
            tape.edge_aggregate(p, edges.weights, edges.src.clone(), edges.dst.clone())?
        } else {
            let a = tape.edge_aggregate(x, edges.weights, edges.src.clone(), edges.dst.clone())?;
            tape.matmul(a, wn)?
        };
        let sum = tape.add(own, nbr)?;
        let out = tape.add(sum, b)?;
        Ok(if relu { tape.relu(out) } else { out })
    }
}

/// `layers` graph convolutions `d_in → hidden → … → d_out`; ReLU between
/// layers, linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
}

impl ConvStack {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        d_in: usize,
        hidden: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let mut out = Vec::with_capacity(layers);
        for i in 0..layers {
            let a = if i == 0 { d_in } else { hidden };
            let b = if i + 1 == layers { d_out } else { hidden };
            out.push(ConvLayer::register(store, &format!("{name}.{i}"), a, b, rng));
        }
        Self { layers: out }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, edges: &Edges) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h, edges, i < last)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn register<R: Rng>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            w: store.add_glorot(format!("{name}.w"), d_in, d_out, rng),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, d_out])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// Learnable affine part of a batch norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl NormLayer {
    pub fn register(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[1, dim], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[1, dim])),
        }
    }

    /// Normalises every row of `x`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        state: &BatchNormState,
        training: bool,
    ) -> Result<(Var, Option<BatchStats>)> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        let rows = tape.value(x).rows_cols().0;
        tape.batch_norm(x, g, b, &vec![true; rows], state, training)
    }
}
