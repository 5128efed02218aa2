//! Negative sampling, the self-adversarial ranking loss, time
//! regularization, and the episodic training loop over sampled tasks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, NodeId, Tape};
use crate::decoders::{score, score_node, ScoreKind};
use crate::encoder::{
    encode_task, AblationSwitches, Activation, EmbeddingSet, EncoderParams, ModelDims,
    NodeEmbeddings, ParamNodes, Tensor,
};
use crate::error::{Error, Result};
use crate::ingest::{sample_task, SamplerConfig};
use crate::tkg::{Quadruple, TaskSample, Tkg};

/// Loss, optimizer and model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub score_kind: ScoreKind,
    /// Margin inside the logistic terms.
    pub gamma: f64,
    /// Negatives per positive.
    pub n_neg: usize,
    /// Self-adversarial temperature; 0 gives uniform negative weights.
    pub alpha: f64,
    pub lr: f64,
    /// Weight of the timestamp smoothness penalty; 0 disables it.
    pub reg: f64,
    pub batch_tasks: usize,
    pub epochs: usize,
    pub dims: ModelDims,
    pub activation: Activation,
    pub ablation: AblationSwitches,
    /// Worker threads for within-batch parallelism; 1 is bitwise
    /// reproducible.
    pub threads: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            score_kind: ScoreKind::TComplEx,
            gamma: 6.0,
            n_neg: 64,
            alpha: 1.0,
            lr: 0.001,
            reg: 0.0,
            batch_tasks: 64,
            epochs: 1,
            dims: ModelDims::default(),
            activation: Activation::Tanh,
            ablation: AblationSwitches::default(),
            threads: 1,
            rng_seed: 0,
        }
    }
}

/// Draws `n` corrupted copies of `q`: per draw a coin flip picks subject
/// or object, replaced by a uniform candidate; the true quadruple is
/// rejected and redrawn. Relation and timestamp are never corrupted.
pub fn negative_sample(
    q: &Quadruple,
    candidates: &[usize],
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Quadruple>> {
    if candidates.is_empty() {
        return Err(Error::Sampler("empty negative-candidate set".into()));
    }
    let s_possible = candidates.iter().any(|&c| c != q.s);
    let o_possible = candidates.iter().any(|&c| c != q.o);
    if !s_possible && !o_possible {
        return Err(Error::NoValidNegative(*q));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let corrupt_subject = match (s_possible, o_possible) {
            (true, true) => rng.gen_bool(0.5),
            (true, false) => true,
            _ => false,
        };
        let c = candidates[rng.gen_range(0..candidates.len())];
        let neg = if corrupt_subject {
            Quadruple::new(c, q.r, q.o, q.t)
        } else {
            Quadruple::new(q.s, q.r, c, q.t)
        };
        if neg != *q {
            out.push(neg);
        }
    }
    Ok(out)
}

/// Softmax(alpha * scores) with max-subtraction. The result weights the
/// negative terms of the loss and never carries gradient.
pub fn self_adv_weights(neg_scores: &[f64], alpha: f64) -> Vec<f64> {
    let max = neg_scores
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = neg_scores.iter().map(|s| (alpha * (s - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn task_candidates(task: &TaskSample) -> Vec<usize> {
    task.entities().collect()
}

/// Mean self-adversarial loss over the task's query quadruples, computed
/// on plain values.
pub fn task_loss(
    task: &TaskSample,
    emb: &EmbeddingSet,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    if task.query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let candidates = task_candidates(task);
    let mut total = 0.0;
    for q in &task.query {
        let sc = |quad: &Quadruple| {
            score(
                cfg.score_kind,
                &emb.entity[&quad.s],
                &emb.relation[&quad.r],
                &emb.entity[&quad.o],
                &emb.timestamp[&quad.t],
            )
        };
        let pos = sc(q)?;
        let negs = negative_sample(q, &candidates, cfg.n_neg, rng)?;
        let neg_scores: Vec<f64> = negs.iter().map(|n| sc(n)).collect::<Result<_>>()?;
        let weights = self_adv_weights(&neg_scores, cfg.alpha);
        let mut l = -autodiff::log_sigmoid(cfg.gamma + pos);
        for (w, ns) in weights.iter().zip(&neg_scores) {
            l -= w * autodiff::log_sigmoid(-cfg.gamma - ns);
        }
        total += l;
    }
    Ok(total / task.query.len() as f64)
}

/// Tape counterpart of `task_loss`; negatives are drawn in the same order
/// from `rng`, so both variants agree given equal rng state.
pub fn task_loss_node(
    tape: &mut Tape,
    task: &TaskSample,
    emb: &NodeEmbeddings,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<NodeId> {
    if task.query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let candidates = task_candidates(task);
    let gamma = tape.leaf(vec![cfg.gamma]);
    let mut per_query = Vec::with_capacity(task.query.len());
    for q in &task.query {
        let sc = |tape: &mut Tape, quad: &Quadruple| {
            score_node(
                tape,
                cfg.score_kind,
                emb.entity[&quad.s],
                emb.relation[&quad.r],
                emb.entity[&quad.o],
                emb.timestamp[&quad.t],
            )
        };
        let pos = sc(tape, q);
        let gp = tape.add(gamma, pos);
        let pos_term = tape.log_sigmoid(gp);
        let mut loss_q = tape.neg(pos_term);

        let negs = negative_sample(q, &candidates, cfg.n_neg, rng)?;
        let neg_nodes: Vec<NodeId> = negs.iter().map(|n| sc(tape, n)).collect();
        let neg_scores: Vec<f64> = neg_nodes.iter().map(|&n| tape.scalar(n)).collect();
        let weights = self_adv_weights(&neg_scores, cfg.alpha);
        for (&node, &w) in neg_nodes.iter().zip(&weights) {
            let gn = tape.add(gamma, node);
            let neg_gn = tape.neg(gn);
            let term = tape.log_sigmoid(neg_gn);
            let weighted = tape.scale(term, -w);
            loss_q = tape.add(loss_q, weighted);
        }
        per_query.push(loss_q);
    }
    Ok(tape.mean(&per_query))
}

/// Smoothness penalty reg * sum over chronologically adjacent timestamp
/// rows of the squared embedding difference.
pub fn time_regularizer(timestamp_table: &Tensor, reg: f64) -> f64 {
    if reg == 0.0 || timestamp_table.rows < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..timestamp_table.rows - 1 {
        total += timestamp_table
            .row(i + 1)
            .iter()
            .zip(timestamp_table.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    reg * total
}

/// Tape counterpart of `time_regularizer` over a table leaf.
pub fn time_regularizer_node(
    tape: &mut Tape,
    table: NodeId,
    rows: usize,
    cols: usize,
    reg: f64,
) -> NodeId {
    if reg == 0.0 || rows < 2 {
        return tape.zeros(1);
    }
    let mut terms = Vec::with_capacity(rows - 1);
    for i in 0..rows - 1 {
        let a = tape.row(table, i + 1, cols);
        let b = tape.row(table, i, cols);
        let d = tape.sub(a, b);
        let sq = tape.mul(d, d);
        terms.push(tape.sum(sq));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t);
    }
    tape.scale(total, reg)
}

/// Adaptive-moment optimizer over the parameter tensors in their fixed
/// order.
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(params: &EncoderParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.data.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((tensor, grad), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..tensor.data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                tensor.data[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// One optimizer step of the loss trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Mean per-task query loss of the batch.
    pub loss: f64,
    pub reg_penalty: f64,
}

/// Writes the loss trace as "step,loss,reg_penalty" CSV.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,loss,reg_penalty")?;
    for row in trace {
        writeln!(f, "{},{},{}", row.step, row.loss, row.reg_penalty)?;
    }
    Ok(())
}

/// A task is trainable when every unseen component can be reached through
/// the support set: unseen relations must occur there, unseen entities
/// must have an incident support quadruple.
fn embeddable(task: &TaskSample) -> bool {
    task.unseen_relations
        .iter()
        .all(|&r| task.support.iter().any(|q| q.r == r))
        && task
            .unseen_entities
            .iter()
            .all(|&e| task.support.iter().any(|q| q.s == e || q.o == e))
}

fn presample_tasks(
    train: &Tkg,
    scfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<TaskSample>> {
    const EMBED_RETRIES: usize = 256;
    let mut tasks = Vec::with_capacity(scfg.task_count);
    for _ in 0..scfg.task_count {
        let mut found = None;
        for _ in 0..EMBED_RETRIES {
            let task = sample_task(train, scfg, rng)?;
            if embeddable(&task) {
                found = Some(task);
                break;
            }
        }
        tasks.push(found.ok_or_else(|| {
            Error::Sampler(format!(
                "no trainable task in {EMBED_RETRIES} attempts; increase l2 or support_fraction"
            ))
        })?);
    }
    Ok(tasks)
}

fn mix_seed(base: u64, step: usize, task: usize) -> u64 {
    base ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (task as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Per-task forward/backward pass; returns the loss value and gradients
/// aligned with the ordered parameter tensors.
fn task_pass(
    params: &EncoderParams,
    task: &TaskSample,
    cfg: &TrainConfig,
    neg_seed: u64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let pn = ParamNodes::insert(&mut tape, params);
    let emb = encode_task(&mut tape, &pn, &task.support, task, cfg.ablation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(neg_seed);
    let loss = task_loss_node(&mut tape, task, &emb, cfg, &mut rng)?;
    let value = tape.scalar(loss);
    let grads = tape.backward(loss);
    let out = pn
        .ordered_ids()
        .iter()
        .map(|&id| grads.of(id).to_vec())
        .collect();
    Ok((value, out))
}

/// Trains encoder parameters on tasks sampled from `train`.
///
/// Tasks are pre-sampled, then iterated in shuffled epochs in batches of
/// `batch_tasks`; each step sums per-task gradients (in task order, so
/// results do not depend on thread scheduling), adds the timestamp
/// smoothness penalty, and applies one Adam step.
pub fn meta_train(
    train: &Tkg,
    cfg: &TrainConfig,
    scfg: &SamplerConfig,
) -> Result<(EncoderParams, Vec<TraceRow>)> {
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(scfg.rng_seed);
    let tasks = presample_tasks(train, scfg, &mut sampler_rng)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = EncoderParams::init(
        train.num_entities(),
        train.num_relations(),
        train.num_timestamps(),
        cfg.dims,
        cfg.activation,
        &mut init_rng,
    );
    let mut adam = Adam::new(&params);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(1));
    let mut trace = Vec::new();
    let mut step = 0usize;

    let pool = (cfg.threads > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
        })
        .transpose()
        .map_err(|e| Error::Sampler(format!("thread pool: {e}")))?;

    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_tasks.max(1)) {
            let run = |idx_in_batch: usize, task_idx: usize| {
                let seed = mix_seed(cfg.rng_seed, step, batch[idx_in_batch]);
                task_pass(&params, &tasks[task_idx], cfg, seed)
            };
            let results: Vec<Result<(f64, Vec<Vec<f64>>)>> = match &pool {
                Some(pool) => pool.install(|| {
                    use rayon::prelude::*;
                    batch
                        .par_iter()
                        .enumerate()
                        .map(|(i, &ti)| run(i, ti))
                        .collect()
                }),
                None => batch.iter().enumerate().map(|(i, &ti)| run(i, ti)).collect(),
            };

            let mut grads: Vec<Vec<f64>> = params
                .tensors()
                .iter()
                .map(|(_, t)| vec![0.0; t.data.len()])
                .collect();
            let mut batch_loss = 0.0;
            for (i, res) in results.into_iter().enumerate() {
                let (value, task_grads) = res?;
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        task: batch[i],
                    });
                }
                batch_loss += value;
                for (acc, g) in grads.iter_mut().zip(task_grads) {
                    for (a, x) in acc.iter_mut().zip(g) {
                        *a += x;
                    }
                }
            }

            let mut reg_penalty = 0.0;
            if cfg.reg > 0.0 {
                let mut tape = Tape::new();
                let table = tape.leaf(params.timestamp_table.data.clone());
                let node = time_regularizer_node(
                    &mut tape,
                    table,
                    params.timestamp_table.rows,
                    params.timestamp_table.cols,
                    cfg.reg,
                );
                reg_penalty = tape.scalar(node);
                let g = tape.backward(node);
                // Timestamp table is the third ordered tensor.
                for (a, x) in grads[2].iter_mut().zip(g.of(table)) {
                    *a += x;
                }
            }

            adam.step(&mut params, &grads, cfg.lr);
            trace.push(TraceRow {
                step,
                loss: batch_loss / batch.len() as f64,
                reg_penalty,
            });
            step += 1;
        }
    }
    Ok((params, trace))
}

/// Trains a conventional (non-meta) embedding model of the given kind on
/// the training graph: entity/relation/timestamp tables as free
/// parameters under the same self-adversarial loss, no pattern modules,
/// no message passing. Rotation-model relation rows are phases (d/2).
pub fn train_asmp_tables(
    train: &Tkg,
    kind: ScoreKind,
    cfg: &TrainConfig,
) -> Result<crate::decoders::AsmpTables> {
    let d = cfg.dims.d;
    let rel_width = if kind == ScoreKind::RotatE { d / 2 } else { d };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut entity = Tensor::normal(train.num_entities(), d, 0.1, &mut rng);
    let mut relation = Tensor::normal(train.num_relations(), rel_width, 0.1, &mut rng);
    let mut timestamp = Tensor::normal(train.num_timestamps(), d, 0.1, &mut rng);

    let candidates: Vec<usize> = train.active_entities().into_iter().collect();
    let batch = cfg.batch_tasks.max(1);
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut moments: Vec<(Vec<f64>, Vec<f64>)> = [&entity, &relation, &timestamp]
        .iter()
        .map(|t| (vec![0.0; t.data.len()], vec![0.0; t.data.len()]))
        .collect();
    let mut t_step = 0usize;

    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.quads.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut tape = Tape::new();
            let ent = tape.leaf(entity.data.clone());
            let rel = tape.leaf(relation.data.clone());
            let ts = tape.leaf(timestamp.data.clone());
            let gamma = tape.leaf(vec![cfg.gamma]);
            let sc = |tape: &mut Tape, q: &Quadruple| {
                let s = tape.row(ent, q.s, d);
                let r = tape.row(rel, q.r, rel_width);
                let o = tape.row(ent, q.o, d);
                let t = tape.row(ts, q.t, d);
                score_node(tape, kind, s, r, o, t)
            };
            let mut terms = Vec::with_capacity(chunk.len());
            for &qi in chunk {
                let q = train.quads[qi];
                let pos = sc(&mut tape, &q);
                let gp = tape.add(gamma, pos);
                let pos_term = tape.log_sigmoid(gp);
                let mut l = tape.neg(pos_term);
                let negs = negative_sample(&q, &candidates, cfg.n_neg, &mut rng)?;
                let neg_nodes: Vec<NodeId> = negs.iter().map(|n| sc(&mut tape, n)).collect();
                let values: Vec<f64> = neg_nodes.iter().map(|&n| tape.scalar(n)).collect();
                let weights = self_adv_weights(&values, cfg.alpha);
                for (&node, &w) in neg_nodes.iter().zip(&weights) {
                    let gn = tape.add(gamma, node);
                    let ng = tape.neg(gn);
                    let term = tape.log_sigmoid(ng);
                    let weighted = tape.scale(term, -w);
                    l = tape.add(l, weighted);
                }
                terms.push(l);
            }
            let loss = tape.mean(&terms);
            if !tape.scalar(loss).is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: t_step,
                    task: chunk[0],
                });
            }
            let grads = tape.backward(loss);
            t_step += 1;
            let bc1 = 1.0 - b1.powi(t_step as i32);
            let bc2 = 1.0 - b2.powi(t_step as i32);
            for ((tensor, leaf), (m, v)) in [&mut entity, &mut relation, &mut timestamp]
                .into_iter()
                .zip([ent, rel, ts])
                .zip(moments.iter_mut())
            {
                let g = grads.of(leaf);
                for i in 0..tensor.data.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    tensor.data[i] -= cfg.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                }
            }
        }
    }
    Ok(crate::decoders::AsmpTables {
        kind,
        entity,
        relation,
        timestamp,
    })
}
