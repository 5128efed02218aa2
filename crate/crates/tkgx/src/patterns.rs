//! Relation-level pattern graphs.
//!
//! Two labeled multigraphs over relations are built from a TKG: one whose
//! edge labels encode the subject/object roles a shared entity plays in a
//! pair of facts, and one whose labels encode the temporal order between
//! facts sharing an entity. Averaging the learned label embeddings over a
//! relation's in-edges yields transferable features for relations that
//! have no trained embedding of their own.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::tkg::{Quadruple, Tkg};

/// Edge label of a pattern graph.
///
/// Position kinds encode (role of the shared entity in the source fact,
/// role in the destination fact); time kinds encode happens-before order.
/// The two namespaces never mix within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaEdgeType {
    SS,
    SO,
    OS,
    OO,
    Forward,
    Backward,
    Meantime,
}

impl MetaEdgeType {
    pub const POSITION: [MetaEdgeType; 4] = [
        MetaEdgeType::SS,
        MetaEdgeType::SO,
        MetaEdgeType::OS,
        MetaEdgeType::OO,
    ];
    pub const TIME: [MetaEdgeType; 3] = [
        MetaEdgeType::Forward,
        MetaEdgeType::Backward,
        MetaEdgeType::Meantime,
    ];

    pub fn is_position(&self) -> bool {
        matches!(
            self,
            MetaEdgeType::SS | MetaEdgeType::SO | MetaEdgeType::OS | MetaEdgeType::OO
        )
    }

    /// Row index into the owning embedding table (position and time types
    /// index separate tables).
    pub fn table_row(&self) -> usize {
        match self {
            MetaEdgeType::SS => 0,
            MetaEdgeType::SO => 1,
            MetaEdgeType::OS => 2,
            MetaEdgeType::OO => 3,
            MetaEdgeType::Forward => 0,
            MetaEdgeType::Backward => 1,
            MetaEdgeType::Meantime => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetaEdgeType::SS => "s_s",
            MetaEdgeType::SO => "s_o",
            MetaEdgeType::OS => "o_s",
            MetaEdgeType::OO => "o_o",
            MetaEdgeType::Forward => "forward",
            MetaEdgeType::Backward => "backward",
            MetaEdgeType::Meantime => "meantime",
        }
    }
}

/// A labeled multigraph over relation ids, deduplicated on
/// (src, type, dst).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternGraph {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, MetaEdgeType, usize)>,
    /// dst relation -> deduplicated (src, type) in-edges.
    pub in_edges: BTreeMap<usize, Vec<(usize, MetaEdgeType)>>,
}

impl PatternGraph {
    fn from_edges(nodes: BTreeSet<usize>, edges: BTreeSet<(usize, MetaEdgeType, usize)>) -> Self {
        let mut in_edges: BTreeMap<usize, Vec<(usize, MetaEdgeType)>> = BTreeMap::new();
        for &(src, ty, dst) in &edges {
            in_edges.entry(dst).or_default().push((src, ty));
        }
        PatternGraph {
            nodes,
            edges,
            in_edges,
        }
    }

    pub fn in_edges_of(&self, r: usize) -> &[(usize, MetaEdgeType)] {
        self.in_edges.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Writes the edge list as "src_relation\ttype\tdst_relation" lines.
    pub fn export_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (src, ty, dst) in &self.edges {
            writeln!(w, "{src}\t{}\t{dst}", ty.name())?;
        }
        Ok(())
    }

    /// Edge counts per meta type.
    pub fn type_counts(&self) -> BTreeMap<MetaEdgeType, usize> {
        let mut counts = BTreeMap::new();
        for (_, ty, _) in &self.edges {
            *counts.entry(*ty).or_insert(0) += 1;
        }
        counts
    }
}

/// The position type for one ordered fact pair sharing an entity:
/// the shared entity acts as `role1` in the first fact and `role2` in the
/// second. The canonical anchor is (object, subject) => SO; the other
/// three follow by analogy. Any consistent bijection over the four opaque
/// labels is equivalent (see the relabeling-consistency tests).
fn position_type(shared_is_subject_in_1: bool, shared_is_subject_in_2: bool) -> MetaEdgeType {
    match (shared_is_subject_in_1, shared_is_subject_in_2) {
        (false, true) => MetaEdgeType::SO,
        (true, false) => MetaEdgeType::OS,
        (true, true) => MetaEdgeType::SS,
        (false, false) => MetaEdgeType::OO,
    }
}

/// Enumerates ordered pairs of distinct quadruples sharing at least one
/// entity, via a per-entity occurrence index. `f(i, j, shared_entity)`.
fn for_shared_entity_pairs(quads: &[Quadruple], mut f: impl FnMut(usize, usize, usize)) {
    let mut occ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, q) in quads.iter().enumerate() {
        occ.entry(q.s).or_default().push(i);
        if q.o != q.s {
            occ.entry(q.o).or_default().push(i);
        }
    }
    for (&e, quads) in &occ {
        for &i in quads {
            for &j in quads {
                if i != j {
                    f(i, j, e);
                }
            }
        }
    }
}

/// Builds the relative-position pattern graph: nodes are all relations of
/// the TKG, and every ordered pair of distinct facts sharing an entity
/// (timestamps ignored) contributes one edge labeled by the shared
/// entity's roles.
pub fn build_rppg(tkg: &Tkg) -> PatternGraph {
    build_rppg_from_quads(&tkg.quads)
}

/// `build_rppg` over a bare quadruple slice (task support sets are not
/// full TKGs).
pub fn build_rppg_from_quads(quads: &[Quadruple]) -> PatternGraph {
    let nodes: BTreeSet<usize> = quads.iter().map(|q| q.r).collect();
    let mut edges = BTreeSet::new();
    for_shared_entity_pairs(quads, |i, j, e| {
        let (q1, q2) = (&quads[i], &quads[j]);
        // An entity may fill both roles of one fact (self-loop): emit an
        // edge for each role combination it realizes.
        let roles1 = roles_of(q1, e);
        let roles2 = roles_of(q2, e);
        for &r1_subj in &roles1 {
            for &r2_subj in &roles2 {
                edges.insert((q1.r, position_type(r1_subj, r2_subj), q2.r));
            }
        }
    });
    PatternGraph::from_edges(nodes, edges)
}

/// Which roles entity `e` fills in `q`: true = subject, false = object.
fn roles_of(q: &crate::tkg::Quadruple, e: usize) -> Vec<bool> {
    let mut roles = Vec::with_capacity(2);
    if q.s == e {
        roles.push(true);
    }
    if q.o == e {
        roles.push(false);
    }
    roles
}

/// Builds the temporal-sequence pattern graph: for every ordered pair of
/// distinct facts sharing an entity, t1 < t2 adds (r1, forward, r2) and
/// (r2, backward, r1); equal timestamps add meantime edges both ways.
pub fn build_tspg(tkg: &Tkg) -> PatternGraph {
    build_tspg_from_quads(&tkg.quads)
}

/// `build_tspg` over a bare quadruple slice.
pub fn build_tspg_from_quads(quads: &[Quadruple]) -> PatternGraph {
    let nodes: BTreeSet<usize> = quads.iter().map(|q| q.r).collect();
    let mut edges = BTreeSet::new();
    for_shared_entity_pairs(quads, |i, j, _| {
        let (q1, q2) = (&quads[i], &quads[j]);
        match q1.t.cmp(&q2.t) {
            std::cmp::Ordering::Less => {
                edges.insert((q1.r, MetaEdgeType::Forward, q2.r));
                edges.insert((q2.r, MetaEdgeType::Backward, q1.r));
            }
            std::cmp::Ordering::Equal => {
                edges.insert((q1.r, MetaEdgeType::Meantime, q2.r));
                edges.insert((q2.r, MetaEdgeType::Meantime, q1.r));
            }
            std::cmp::Ordering::Greater => {
                edges.insert((q2.r, MetaEdgeType::Forward, q1.r));
                edges.insert((q1.r, MetaEdgeType::Backward, q2.r));
            }
        }
    });
    PatternGraph::from_edges(nodes, edges)
}

/// Learned embeddings for the 4 position and 3 time meta types.
#[derive(Debug, Clone)]
pub struct MetaTypeEmbeddings {
    /// Rows SS, SO, OS, OO.
    pub position: Vec<Vec<f64>>,
    /// Rows Forward, Backward, Meantime.
    pub time: Vec<Vec<f64>>,
}

impl MetaTypeEmbeddings {
    pub fn vector(&self, ty: MetaEdgeType) -> &[f64] {
        if ty.is_position() {
            &self.position[ty.table_row()]
        } else {
            &self.time[ty.table_row()]
        }
    }
}

fn mean_in_edge_embedding(
    g: &PatternGraph,
    r: usize,
    lookup: impl Fn(MetaEdgeType) -> Vec<f64>,
    dim: usize,
) -> Vec<f64> {
    let in_edges = g.in_edges_of(r);
    if in_edges.is_empty() {
        // Zero-in-degree relations stay embeddable via the zero feature.
        return vec![0.0; dim];
    }
    let mut acc = vec![0.0; dim];
    for &(_, ty) in in_edges {
        for (a, v) in acc.iter_mut().zip(lookup(ty)) {
            *a += v;
        }
    }
    let n = in_edges.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Mean of the position-type embeddings over r's in-edges; zero vector
/// when r has no in-edges.
pub fn relation_position_feature(
    g: &PatternGraph,
    r: usize,
    emb: &MetaTypeEmbeddings,
) -> Vec<f64> {
    let dim = emb.position[0].len();
    mean_in_edge_embedding(g, r, |ty| emb.position[ty.table_row()].clone(), dim)
}

/// Mean of the time-type embeddings over r's in-edges; zero vector when
/// r has no in-edges.
pub fn relation_time_feature(g: &PatternGraph, r: usize, emb: &MetaTypeEmbeddings) -> Vec<f64> {
    let dim = emb.time[0].len();
    mean_in_edge_embedding(g, r, |ty| emb.time[ty.table_row()].clone(), dim)
}

/// Concatenates the position and time halves into the full relation
/// feature.
pub fn relation_feature(g_r: &[f64], q_r: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(g_r.len() + q_r.len());
    out.extend_from_slice(g_r);
    out.extend_from_slice(q_r);
    out
}
