//! Graph convolution and graph attention layers, global pooling, and the
//! stacked drug encoder built from them.
//!
//! Both layer types add self-loops internally, so isolated atoms are well
//! defined. Adjacency is passed as a row-major `N × N` boolean slice.

use rand::Rng;
use thiserror::Error;

use crate::params::{Bound, Dense, ParamId, ParamStore};
use crate::tensor::{ReduceMode, Tape, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("EmptyGraph: graph has no nodes")]
    EmptyGraph,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GnnError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcnLayerParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl GcnLayerParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let weight = store.register_uniform(format!("{name}.weight"), &[d_in, d_out], d_in, rng);
        let bias = store.register_uniform(format!("{name}.bias"), &[d_out], d_in, rng);
        Self {
            weight,
            bias,
            d_in,
            d_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatLayerParams {
    /// `d_in × (heads · head_dim)`
    pub weight: ParamId,
    /// `heads × head_dim`
    pub attention_src: ParamId,
    /// `heads × head_dim`
    pub attention_dst: ParamId,
    pub bias: ParamId,
    pub heads: usize,
    pub head_dim: usize,
    pub d_in: usize,
    pub leaky_slope: f64,
}

impl GatLayerParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        heads: usize,
        head_dim: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads >= 1, "GAT layer needs at least one head");
        let width = heads * head_dim;
        let weight = store.register_uniform(format!("{name}.weight"), &[d_in, width], d_in, rng);
        let attention_src = store.register_uniform(format!("{name}.att_src"), &[heads, head_dim], head_dim, rng);
        let attention_dst = store.register_uniform(format!("{name}.att_dst"), &[heads, head_dim], head_dim, rng);
        let bias = store.register_uniform(format!("{name}.bias"), &[width], d_in, rng);
        Self {
            weight,
            attention_src,
            attention_dst,
            bias,
            heads,
            head_dim,
            d_in,
            leaky_slope: 0.2,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}

fn check_inputs(tape: &Tape, features: Var, adjacency: &[bool], d_in: usize) -> Result<usize> {
    let shape = tape.shape(features);
    if shape.len() != 2 || shape[1] != d_in {
        return Err(GnnError::ShapeMismatch(format!("features {shape:?}, layer expects width {d_in}")));
    }
    let n = shape[0];
    if n == 0 {
        return Err(GnnError::EmptyGraph);
    }
    if adjacency.len() != n * n {
        return Err(GnnError::ShapeMismatch(format!(
            "adjacency has {} entries for {n} nodes",
            adjacency.len()
        )));
    }
    Ok(n)
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` as a dense row-major matrix.
pub fn normalized_adjacency(adjacency: &[bool], n: usize) -> Vec<f64> {
    let degree: Vec<f64> = (0..n)
        .map(|i| 1.0 + (0..n).filter(|&j| j != i && adjacency[i * n + j]).count() as f64)
        .collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j || adjacency[i * n + j] {
                out[i * n + j] = 1.0 / (degree[i] * degree[j]).sqrt();
            }
        }
    }
    out
}

pub fn gcn_forward(
    tape: &mut Tape,
    bound: &Bound,
    features: Var,
    adjacency: &[bool],
    params: &GcnLayerParams,
) -> Result<Var> {
    let n = check_inputs(tape, features, adjacency, params.d_in)?;
    let norm = tape.constant(&[n, n], normalized_adjacency(adjacency, n))?;
    let agg = tape.matmul(norm, features)?;
    let y = tape.matmul(agg, bound.var(params.weight))?;
    Ok(tape.add_bias(y, bound.var(params.bias))?)
}

/// Closed neighbourhood mask: neighbours plus the node itself.
fn closed_mask(adjacency: &[bool], n: usize) -> Vec<bool> {
    (0..n * n).map(|k| adjacency[k] || k / n == k % n).collect()
}

/// Runs a GAT layer and also returns each head's `N × N` attention matrix.
pub fn gat_forward_with_attention(
    tape: &mut Tape,
    bound: &Bound,
    features: Var,
    adjacency: &[bool],
    params: &GatLayerParams,
) -> Result<(Var, Vec<Var>)> {
    let n = check_inputs(tape, features, adjacency, params.d_in)?;
    let mask = closed_mask(adjacency, n);
    let wh = tape.matmul(features, bound.var(params.weight))?;
    let mut heads = Vec::with_capacity(params.heads);
    let mut attention = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let wh_h = tape.slice_cols(wh, h * params.head_dim, params.head_dim)?;
        let a_src = tape.slice_rows(bound.var(params.attention_src), h, 1)?;
        let a_src = tape.transpose(a_src)?;
        let a_dst = tape.slice_rows(bound.var(params.attention_dst), h, 1)?;
        let a_dst = tape.transpose(a_dst)?;
        let src_score = tape.matmul(wh_h, a_src)?;
        let dst_score = tape.matmul(wh_h, a_dst)?;
        let logits = tape.outer_add(src_score, dst_score)?;
        let logits = tape.leaky_relu(logits, params.leaky_slope);
        let alpha = tape.softmax_rows(logits, Some(&mask))?;
        heads.push(tape.matmul(alpha, wh_h)?);
        attention.push(alpha);
    }
    let out = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    Ok((tape.add_bias(out, bound.var(params.bias))?, attention))
}

pub fn gat_forward(
    tape: &mut Tape,
    bound: &Bound,
    features: Var,
    adjacency: &[bool],
    params: &GatLayerParams,
) -> Result<Var> {
    gat_forward_with_attention(tape, bound, features, adjacency, params).map(|(out, _)| out)
}

/// Column-wise reduction of `N × d` node features into a `1 × d` row.
pub fn global_pool(tape: &mut Tape, features: Var, mode: PoolMode) -> Result<Var> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 2 {
        return Err(GnnError::ShapeMismatch(format!("pool input {shape:?}")));
    }
    if shape[0] == 0 {
        return Err(GnnError::EmptyGraph);
    }
    let reduce = match mode {
        PoolMode::Mean => ReduceMode::Mean,
        PoolMode::Max => ReduceMode::Max,
    };
    let pooled = tape.reduce(features, reduce, 0)?;
    Ok(tape.reshape(pooled, &[1, shape[1]])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrugLayerKind {
    Gat,
    Gcn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugEncoderConfig {
    pub kind: DrugLayerKind,
    pub in_dim: usize,
    /// `(heads, per-head width)` per layer; GCN layers use `heads · width`.
    pub layers: Vec<(usize, usize)>,
    pub out_dim: usize,
}

impl Default for DrugEncoderConfig {
    fn default() -> Self {
        Self {
            kind: DrugLayerKind::Gat,
            in_dim: crate::smiles::ATOM_FEATURE_DIM,
            layers: vec![(4, 32), (4, 32), (1, 128)],
            out_dim: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GraphLayer {
    Gat(GatLayerParams),
    Gcn(GcnLayerParams),
}

/// Graph layers with ELU activations, global max pool, dense + ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugEncoder {
    layers: Vec<GraphLayer>,
    head: Dense,
}

impl DrugEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: &DrugEncoderConfig, rng: &mut R) -> Self {
        let mut d_in = config.in_dim;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (i, &(heads, width)) in config.layers.iter().enumerate() {
            let name = format!("drug.layer{i}");
            let layer = match config.kind {
                DrugLayerKind::Gat => GraphLayer::Gat(GatLayerParams::new(store, &name, d_in, heads, width, rng)),
                DrugLayerKind::Gcn => GraphLayer::Gcn(GcnLayerParams::new(store, &name, d_in, heads * width, rng)),
            };
            d_in = heads * width;
            layers.push(layer);
        }
        let head = Dense::new(store, "drug.dense", d_in, config.out_dim, rng);
        Self { layers, head }
    }

    pub fn out_dim(&self) -> usize {
        self.head.d_out
    }

    /// Encodes one molecule (`N × in_dim` features) into a `1 × out_dim` row.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, features: Var, adjacency: &[bool]) -> Result<Var> {
        let mut h = features;
        for layer in &self.layers {
            h = match layer {
                GraphLayer::Gat(p) => gat_forward(tape, bound, h, adjacency, p)?,
                GraphLayer::Gcn(p) => gcn_forward(tape, bound, h, adjacency, p)?,
            };
            h = tape.elu(h, 1.0);
        }
        let pooled = global_pool(tape, h, PoolMode::Max)?;
        let out = self.head.forward(tape, bound, pooled)?;
        Ok(tape.relu(out))
    }
}
