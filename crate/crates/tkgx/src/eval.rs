//! Link-prediction ranking: MRR / Hits@k over head and tail prediction,
//! overall and per unseen-component category, plus relation cosine
//! similarity for case studies.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::decoders::{score, ScoreKind};
use crate::encoder::{encode_task_values, AblationSwitches, EmbeddingSet, EncoderParams};
use crate::error::{Error, Result};
use crate::tkg::{categorize_query, Quadruple, QueryCategory, TaskSample};

/// Which entity of a query is predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingReport {
    pub overall: MetricTriple,
    pub per_category: BTreeMap<QueryCategory, MetricTriple>,
    pub category_counts: BTreeMap<QueryCategory, usize>,
    /// Ranks counted (two per query: head and tail).
    pub rank_count: usize,
    pub filtered: bool,
}

impl RankingReport {
    /// Aligned plain-text table with one row per category plus the total.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let mode = if self.filtered { "filtered" } else { "raw" };
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}   ({mode})\n",
            "category", "queries", "MRR", "Hits@1", "Hits@10"
        ));
        for (cat, m) in &self.per_category {
            out.push_str(&format!(
                "{:<10} {:>8} {:>8.4} {:>8.4} {:>8.4}\n",
                cat.name(),
                self.category_counts[cat],
                m.mrr,
                m.hits1,
                m.hits10
            ));
        }
        out.push_str(&format!(
            "{:<10} {:>8} {:>8.4} {:>8.4} {:>8.4}\n",
            "all",
            self.rank_count / 2,
            self.overall.mrr,
            self.overall.hits1,
            self.overall.hits10
        ));
        out
    }
}

/// Fractional rank of the true entity on one side of one query.
///
/// rank = 1 + (candidates scoring strictly higher) + (exact ties)/2. In
/// filtered mode candidates whose substitution forms a quadruple in
/// `known_true` other than `q` itself are skipped.
pub fn rank_query(
    q: &Quadruple,
    side: Side,
    emb: &EmbeddingSet,
    kind: ScoreKind,
    candidates: &[usize],
    known_true: &HashSet<Quadruple>,
    filtered: bool,
) -> Result<f64> {
    let truth = match side {
        Side::Head => q.s,
        Side::Tail => q.o,
    };
    if !candidates.contains(&truth) {
        return Err(Error::TruthNotCandidate);
    }
    let substituted = |c: usize| match side {
        Side::Head => Quadruple::new(c, q.r, q.o, q.t),
        Side::Tail => Quadruple::new(q.s, q.r, c, q.t),
    };
    let sc = |quad: &Quadruple| {
        score(
            kind,
            &emb.entity[&quad.s],
            &emb.relation[&quad.r],
            &emb.entity[&quad.o],
            &emb.timestamp[&quad.t],
        )
    };
    let true_score = sc(q)?;
    let mut higher = 0usize;
    let mut ties = 0usize;
    for &c in candidates {
        if c == truth {
            continue;
        }
        let cand = substituted(c);
        if filtered && known_true.contains(&cand) {
            continue;
        }
        let s = sc(&cand)?;
        if s > true_score {
            higher += 1;
        } else if s == true_score {
            ties += 1;
        }
    }
    Ok(1.0 + higher as f64 + ties as f64 / 2.0)
}

fn triple_from_ranks(ranks: &[f64]) -> MetricTriple {
    let n = ranks.len() as f64;
    MetricTriple {
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: ranks.iter().filter(|&&r| r <= 1.0).count() as f64 / n,
        hits10: ranks.iter().filter(|&&r| r <= 10.0).count() as f64 / n,
    }
}

/// Ranks every query quadruple of `task` on both sides against the task's
/// full entity set and aggregates MRR / Hits@1 / Hits@10 overall and per
/// query category.
pub fn evaluate_embeddings(
    task: &TaskSample,
    emb: &EmbeddingSet,
    kind: ScoreKind,
    known_true: &HashSet<Quadruple>,
    filtered: bool,
) -> Result<RankingReport> {
    if task.query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let candidates: Vec<usize> = task.entities().collect();
    let mut all_ranks = Vec::with_capacity(task.query.len() * 2);
    let mut by_cat: BTreeMap<QueryCategory, Vec<f64>> = BTreeMap::new();
    for q in &task.query {
        let cat = categorize_query(q, task)?;
        for side in [Side::Head, Side::Tail] {
            let rank = rank_query(q, side, emb, kind, &candidates, known_true, filtered)?;
            all_ranks.push(rank);
            by_cat.entry(cat).or_default().push(rank);
        }
    }
    Ok(RankingReport {
        overall: triple_from_ranks(&all_ranks),
        per_category: by_cat
            .iter()
            .map(|(&c, ranks)| (c, triple_from_ranks(ranks)))
            .collect(),
        category_counts: by_cat.iter().map(|(&c, r)| (c, r.len() / 2)).collect(),
        rank_count: all_ranks.len(),
        filtered,
    })
}

/// Known-true set for filtered evaluation: the split's own quadruples plus
/// the training graph's.
pub fn known_true_set(task: &TaskSample, train_quads: &[Quadruple]) -> HashSet<Quadruple> {
    task.support
        .iter()
        .chain(task.query.iter())
        .chain(train_quads.iter())
        .copied()
        .collect()
}

/// Encodes the split's components from its support set with the trained
/// encoder, then ranks its queries.
pub fn evaluate_split(
    params: &EncoderParams,
    task: &TaskSample,
    abl: AblationSwitches,
    kind: ScoreKind,
    train_quads: &[Quadruple],
    filtered: bool,
) -> Result<RankingReport> {
    let emb = encode_task_values(params, &task.support, task, abl)?;
    let known = known_true_set(task, train_quads);
    evaluate_embeddings(task, &emb, kind, &known, filtered)
}

/// Cosine similarity of two relation embeddings.
pub fn relation_similarity(r1: usize, r2: usize, emb: &EmbeddingSet) -> Result<f64> {
    let get = |r: usize| {
        emb.relation
            .get(&r)
            .ok_or_else(|| Error::Sampler(format!("relation {r} has no embedding")))
    };
    let a = get(r1)?;
    let b = get(r2)?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 {
        return Err(Error::ZeroNorm(r1));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm(r2));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}
