//! Encoder: input features for unseen components and the k-layer
//! extrapolation GCN.
//!
//! Seen entities and relations look up rows of learned tables; unseen
//! relations are composed from pattern-graph meta-type embeddings and
//! unseen entities from their incident relations' features. A CompGCN-style
//! message pass then mixes k-hop structure into every component embedding.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::patterns::{self, PatternGraph};
use crate::tkg::{Quadruple, TaskSample};

/// A dense row-major matrix of learnable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut() -> f64) -> Self {
        Tensor {
            data: (0..rows * cols).map(|_| f()).collect(),
            rows,
            cols,
        }
    }

    /// Normal(0, std) initialization, used for embedding tables.
    pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Self {
        Tensor::from_fn(rows, cols, || {
            // Box-Muller keeps us off rand_distr for one distribution.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
    }

    /// Uniform Xavier-style fan-based initialization for weight matrices.
    pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Tensor::from_fn(rows, cols, || rng.gen_range(-bound..bound))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column-wise mean, i.e. the average row.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        if self.rows > 0 {
            let n = self.rows as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        out
    }
}

/// Elementwise nonlinearity applied inside the GCN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Embedding and layer dimensions.
///
/// Entity/relation embeddings enter and leave the GCN at dimension `d`;
/// intermediate layers use `hidden`. Timestamp embeddings keep `d_t`
/// throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub d_t: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl ModelDims {
    pub fn new(d: usize, hidden: usize, layers: usize) -> Self {
        ModelDims {
            d,
            d_t: d,
            hidden,
            layers,
        }
    }

    /// Entity/relation dimension entering each layer: [d, hidden, .., d].
    pub fn layer_dims(&self) -> Vec<usize> {
        let k = self.layers;
        let mut dims = Vec::with_capacity(k + 1);
        dims.push(self.d);
        for _ in 1..k {
            dims.push(self.hidden);
        }
        if k >= 1 {
            dims.push(self.d);
        }
        dims
    }
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims::new(128, 64, 2)
    }
}

/// Parameters of one GCN layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    /// out_dim x (2*in_dim + d_t), applied to [h_r; h_o; h_t].
    pub w_out: Tensor,
    /// out_dim x (2*in_dim + d_t), applied to [h_r; h_s; h_t].
    pub w_in: Tensor,
    pub w_self: Tensor,
    pub w_rel: Tensor,
    pub w_time: Tensor,
}

/// All learnable tensors of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub dims: ModelDims,
    pub activation: Activation,
    pub entity_table: Tensor,
    pub relation_table: Tensor,
    pub timestamp_table: Tensor,
    /// 4 x d/2 rows ordered as MetaEdgeType::POSITION.
    pub meta_position: Tensor,
    /// 3 x d/2 rows ordered as MetaEdgeType::TIME.
    pub meta_time: Tensor,
    pub w_out_ent: Tensor,
    pub w_in_ent: Tensor,
    pub layers: Vec<GcnLayer>,
    /// Free per-relation halves used when a pattern module is ablated.
    pub free_rel_pos: Tensor,
    pub free_rel_time: Tensor,
    /// Free per-entity embeddings used when the entity-feature module is
    /// ablated.
    pub free_ent: Tensor,
}

impl EncoderParams {
    pub fn init(
        num_entities: usize,
        num_relations: usize,
        num_timestamps: usize,
        dims: ModelDims,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.d % 2 == 0, "embedding dimension must be even");
        let half = dims.d / 2;
        let ld = dims.layer_dims();
        let layers = (0..dims.layers)
            .map(|l| {
                let (din, dout) = (ld[l], ld[l + 1]);
                GcnLayer {
                    w_out: Tensor::xavier(dout, 2 * din + dims.d_t, rng),
                    w_in: Tensor::xavier(dout, 2 * din + dims.d_t, rng),
                    w_self: Tensor::xavier(dout, din, rng),
                    w_rel: Tensor::xavier(dout, din, rng),
                    w_time: Tensor::xavier(dims.d_t, dims.d_t, rng),
                }
            })
            .collect();
        EncoderParams {
            dims,
            activation,
            entity_table: Tensor::normal(num_entities, dims.d, 0.1, rng),
            relation_table: Tensor::normal(num_relations, dims.d, 0.1, rng),
            timestamp_table: Tensor::normal(num_timestamps, dims.d_t, 0.1, rng),
            meta_position: Tensor::normal(4, half, 0.1, rng),
            meta_time: Tensor::normal(3, half, 0.1, rng),
            w_out_ent: Tensor::xavier(dims.d, dims.d, rng),
            w_in_ent: Tensor::xavier(dims.d, dims.d, rng),
            layers,
            free_rel_pos: Tensor::normal(num_relations, half, 0.1, rng),
            free_rel_time: Tensor::normal(num_relations, half, 0.1, rng),
            free_ent: Tensor::normal(num_entities, dims.d, 0.1, rng),
        }
    }

    /// All tensors in a fixed order, for optimizers and gradient plumbing.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![
            ("entity_table", &self.entity_table),
            ("relation_table", &self.relation_table),
            ("timestamp_table", &self.timestamp_table),
            ("meta_position", &self.meta_position),
            ("meta_time", &self.meta_time),
            ("w_out_ent", &self.w_out_ent),
            ("w_in_ent", &self.w_in_ent),
            ("free_rel_pos", &self.free_rel_pos),
            ("free_rel_time", &self.free_rel_time),
            ("free_ent", &self.free_ent),
        ];
        for layer in &self.layers {
            out.push(("w_out", &layer.w_out));
            out.push(("w_in", &layer.w_in));
            out.push(("w_self", &layer.w_self));
            out.push(("w_rel", &layer.w_rel));
            out.push(("w_time", &layer.w_time));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.entity_table,
            &mut self.relation_table,
            &mut self.timestamp_table,
            &mut self.meta_position,
            &mut self.meta_time,
            &mut self.w_out_ent,
            &mut self.w_in_ent,
            &mut self.free_rel_pos,
            &mut self.free_rel_time,
            &mut self.free_ent,
        ];
        for layer in &mut self.layers {
            out.push(&mut layer.w_out);
            out.push(&mut layer.w_in);
            out.push(&mut layer.w_self);
            out.push(&mut layer.w_rel);
            out.push(&mut layer.w_time);
        }
        out
    }
}

/// Which optional modules are active; mirrors the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSwitches {
    pub use_rppg: bool,
    pub use_tspg: bool,
    pub use_entity_feature: bool,
    pub use_gcn: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        AblationSwitches {
            use_rppg: true,
            use_tspg: true,
            use_entity_feature: true,
            use_gcn: true,
        }
    }
}

/// Tape leaves for every parameter tensor, in `tensors()` order.
pub struct ParamNodes {
    pub entity_table: NodeId,
    pub relation_table: NodeId,
    pub timestamp_table: NodeId,
    pub meta_position: NodeId,
    pub meta_time: NodeId,
    pub w_out_ent: NodeId,
    pub w_in_ent: NodeId,
    pub free_rel_pos: NodeId,
    pub free_rel_time: NodeId,
    pub free_ent: NodeId,
    pub layers: Vec<GcnLayerNodes>,
    pub dims: ModelDims,
    pub activation: Activation,
    ordered: Vec<NodeId>,
}

pub struct GcnLayerNodes {
    pub w_out: NodeId,
    pub w_in: NodeId,
    pub w_self: NodeId,
    pub w_rel: NodeId,
    pub w_time: NodeId,
}

impl ParamNodes {
    /// Inserts every parameter tensor as a tape leaf.
    pub fn insert(tape: &mut Tape, params: &EncoderParams) -> Self {
        let mut ordered = Vec::new();
        let mut leaf = |t: &Tensor, tape: &mut Tape| {
            let id = tape.leaf(t.data.clone());
            ordered.push(id);
            id
        };
        let entity_table = leaf(&params.entity_table, tape);
        let relation_table = leaf(&params.relation_table, tape);
        let timestamp_table = leaf(&params.timestamp_table, tape);
        let meta_position = leaf(&params.meta_position, tape);
        let meta_time = leaf(&params.meta_time, tape);
        let w_out_ent = leaf(&params.w_out_ent, tape);
        let w_in_ent = leaf(&params.w_in_ent, tape);
        let free_rel_pos = leaf(&params.free_rel_pos, tape);
        let free_rel_time = leaf(&params.free_rel_time, tape);
        let free_ent = leaf(&params.free_ent, tape);
        let layers = params
            .layers
            .iter()
            .map(|l| GcnLayerNodes {
                w_out: leaf(&l.w_out, tape),
                w_in: leaf(&l.w_in, tape),
                w_self: leaf(&l.w_self, tape),
                w_rel: leaf(&l.w_rel, tape),
                w_time: leaf(&l.w_time, tape),
            })
            .collect();
        ParamNodes {
            entity_table,
            relation_table,
            timestamp_table,
            meta_position,
            meta_time,
            w_out_ent,
            w_in_ent,
            free_rel_pos,
            free_rel_time,
            free_ent,
            layers,
            dims: params.dims,
            activation: params.activation,
            ordered,
        }
    }

    /// Leaf node ids in the same order as `EncoderParams::tensors()`.
    pub fn ordered_ids(&self) -> &[NodeId] {
        &self.ordered
    }
}

/// Tape embeddings per component id.
#[derive(Debug, Clone, Default)]
pub struct NodeEmbeddings {
    pub entity: BTreeMap<usize, NodeId>,
    pub relation: BTreeMap<usize, NodeId>,
    pub timestamp: BTreeMap<usize, NodeId>,
}

/// Final embeddings per component id, as plain values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub entity: BTreeMap<usize, Vec<f64>>,
    pub relation: BTreeMap<usize, Vec<f64>>,
    pub timestamp: BTreeMap<usize, Vec<f64>>,
}

impl NodeEmbeddings {
    pub fn values(&self, tape: &Tape) -> EmbeddingSet {
        let grab = |m: &BTreeMap<usize, NodeId>| {
            m.iter()
                .map(|(&k, &id)| (k, tape.value(id).to_vec()))
                .collect()
        };
        EmbeddingSet {
            entity: grab(&self.entity),
            relation: grab(&self.relation),
            timestamp: grab(&self.timestamp),
        }
    }
}

fn apply_activation(tape: &mut Tape, act: Activation, x: NodeId) -> NodeId {
    match act {
        Activation::Tanh => tape.tanh(x),
        Activation::Identity => x,
    }
}

/// Input features for every task relation: seen relations read their table
/// rows, unseen ones average meta-type embeddings over their pattern-graph
/// in-edges (or fall back to free embeddings when a module is ablated).
pub fn input_relation_features(
    tape: &mut Tape,
    pn: &ParamNodes,
    rppg: &PatternGraph,
    tspg: &PatternGraph,
    task: &TaskSample,
    abl: AblationSwitches,
) -> Result<BTreeMap<usize, NodeId>> {
    let half = pn.dims.d / 2;
    let mut out = BTreeMap::new();
    for r in task.relations() {
        if task.seen_relations.contains(&r) {
            out.insert(r, tape.row(pn.relation_table, r, pn.dims.d));
            continue;
        }
        if (abl.use_rppg || abl.use_tspg) && !rppg.nodes.contains(&r) && !tspg.nodes.contains(&r) {
            return Err(Error::CannotEmbed {
                kind: "relation",
                id: r,
                msg: "absent from both the seen table and the pattern graphs".into(),
            });
        }
        let pos_half = if abl.use_rppg {
            mean_meta_rows(tape, pn.meta_position, half, rppg.in_edges_of(r))
        } else {
            tape.row(pn.free_rel_pos, r, half)
        };
        let time_half = if abl.use_tspg {
            mean_meta_rows(tape, pn.meta_time, half, tspg.in_edges_of(r))
        } else {
            tape.row(pn.free_rel_time, r, half)
        };
        out.insert(r, tape.concat(&[pos_half, time_half]));
    }
    Ok(out)
}

fn mean_meta_rows(
    tape: &mut Tape,
    table: NodeId,
    width: usize,
    in_edges: &[(usize, patterns::MetaEdgeType)],
) -> NodeId {
    if in_edges.is_empty() {
        return tape.zeros(width);
    }
    let rows: Vec<NodeId> = in_edges
        .iter()
        .map(|&(_, ty)| tape.row(table, ty.table_row(), width))
        .collect();
    tape.mean(&rows)
}

/// Input features for every task entity: seen entities read table rows,
/// unseen ones average direction-projected features of their incident
/// relation occurrences in the support quadruples.
pub fn input_entity_features(
    tape: &mut Tape,
    pn: &ParamNodes,
    support: &[Quadruple],
    task: &TaskSample,
    relation_feats: &BTreeMap<usize, NodeId>,
    abl: AblationSwitches,
) -> Result<BTreeMap<usize, NodeId>> {
    let d = pn.dims.d;
    let mut out = BTreeMap::new();
    for e in task.entities() {
        if task.seen_entities.contains(&e) {
            out.insert(e, tape.row(pn.entity_table, e, d));
            continue;
        }
        if !abl.use_entity_feature {
            out.insert(e, tape.row(pn.free_ent, e, d));
            continue;
        }
        let mut terms = Vec::new();
        for q in support {
            if q.s == e {
                let hr = relation_feats[&q.r];
                terms.push(tape.matvec(pn.w_out_ent, d, d, hr));
            }
            if q.o == e {
                let hr = relation_feats[&q.r];
                terms.push(tape.matvec(pn.w_in_ent, d, d, hr));
            }
        }
        if terms.is_empty() {
            return Err(Error::CannotEmbed {
                kind: "entity",
                id: e,
                msg: "no incident support quadruple".into(),
            });
        }
        out.insert(e, tape.mean(&terms));
    }
    Ok(out)
}

/// Timestamp features are plain table rows; rows of timestamps never seen
/// in training simply keep their random initialization.
pub fn input_timestamp_features(
    tape: &mut Tape,
    pn: &ParamNodes,
    task: &TaskSample,
) -> BTreeMap<usize, NodeId> {
    task.timestamps()
        .map(|t| (t, tape.row(pn.timestamp_table, t, pn.dims.d_t)))
        .collect()
}

/// Runs `k` message-passing layers over the support quadruples.
///
/// Per layer, each entity aggregates [h_r; h_neighbor; h_t] messages over
/// its out-going and in-going facts, normalized by total degree, plus a
/// self-loop term; relations and timestamps update through their own
/// per-layer linear maps. `k = 0` returns the inputs untouched. Entities
/// with no incident fact update by self-loop alone.
pub fn gcn_forward(
    tape: &mut Tape,
    pn: &ParamNodes,
    support: &[Quadruple],
    inputs: &NodeEmbeddings,
    k: usize,
) -> NodeEmbeddings {
    let ld = pn.dims.layer_dims();
    let d_t = pn.dims.d_t;
    let mut current = inputs.clone();
    for (l, layer) in pn.layers.iter().enumerate().take(k) {
        let (din, dout) = (ld[l], ld[l + 1]);
        let msg_cols = 2 * din + d_t;
        let mut next = NodeEmbeddings::default();

        for (&e, &he) in &current.entity {
            let mut msgs = Vec::new();
            for q in support {
                if q.s == e {
                    let x = tape.concat(&[
                        current.relation[&q.r],
                        current.entity[&q.o],
                        current.timestamp[&q.t],
                    ]);
                    msgs.push(tape.matvec(layer.w_out, dout, msg_cols, x));
                }
                if q.o == e {
                    let x = tape.concat(&[
                        current.relation[&q.r],
                        current.entity[&q.s],
                        current.timestamp[&q.t],
                    ]);
                    msgs.push(tape.matvec(layer.w_in, dout, msg_cols, x));
                }
            }
            let self_term = tape.matvec(layer.w_self, dout, din, he);
            let pre = if msgs.is_empty() {
                self_term
            } else {
                let mut m = msgs[0];
                for &extra in &msgs[1..] {
                    m = tape.add(m, extra);
                }
                let m = tape.scale(m, 1.0 / msgs.len() as f64);
                tape.add(m, self_term)
            };
            next.entity.insert(e, apply_activation(tape, pn.activation, pre));
        }

        for (&r, &hr) in &current.relation {
            let pre = tape.matvec(layer.w_rel, dout, din, hr);
            next.relation.insert(r, apply_activation(tape, pn.activation, pre));
        }
        for (&t, &ht) in &current.timestamp {
            let pre = tape.matvec(layer.w_time, d_t, d_t, ht);
            next.timestamp.insert(t, apply_activation(tape, pn.activation, pre));
        }
        current = next;
    }
    current
}

/// Full encode of one task: pattern graphs over support, input features,
/// then the GCN (or a pass-through when ablated).
pub fn encode_task(
    tape: &mut Tape,
    pn: &ParamNodes,
    support: &[Quadruple],
    task: &TaskSample,
    abl: AblationSwitches,
) -> Result<NodeEmbeddings> {
    let rppg = if abl.use_rppg {
        patterns::build_rppg_from_quads(support)
    } else {
        PatternGraph::default()
    };
    let tspg = if abl.use_tspg {
        patterns::build_tspg_from_quads(support)
    } else {
        PatternGraph::default()
    };
    // The pattern-graph presence check needs at least the node set even
    // when only one module is ablated.
    let relation = input_relation_features(tape, pn, &rppg, &tspg, task, abl)?;
    let entity = input_entity_features(tape, pn, support, task, &relation, abl)?;
    let timestamp = input_timestamp_features(tape, pn, task);
    let inputs = NodeEmbeddings {
        entity,
        relation,
        timestamp,
    };
    if abl.use_gcn {
        Ok(gcn_forward(tape, pn, support, &inputs, pn.dims.layers))
    } else {
        Ok(inputs)
    }
}

/// Convenience: encode a task against `params` and return plain values.
pub fn encode_task_values(
    params: &EncoderParams,
    support: &[Quadruple],
    task: &TaskSample,
    abl: AblationSwitches,
) -> Result<EmbeddingSet> {
    let mut tape = Tape::new();
    let pn = ParamNodes::insert(&mut tape, params);
    let emb = encode_task(&mut tape, &pn, support, task, abl)?;
    Ok(emb.values(&tape))
}
