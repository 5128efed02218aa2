//! Score functions judging quadruple plausibility, and the closed-form
//! inference rules that adapt conventional embedding models to unseen
//! components.
//!
//! Complex vectors use the [re(0..m); im(m..2m)] layout. Relation
//! parameters trained for the rotation model are phase vectors of length
//! d/2 and are mapped to unit-modulus complex entries on use; relation
//! vectors coming out of the encoder (or out of closed-form inference)
//! are full-length complex and are consumed directly.

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::encoder::{EmbeddingSet, Tensor};
use crate::error::{Error, Result};
use crate::tkg::{Quadruple, TaskSample};

/// The six supported score functions. Temporal kinds consume timestamp
/// embeddings; static kinds ignore them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    DistMult,
    ComplEx,
    RotatE,
    TDistMult,
    TComplEx,
    TeRo,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 6] = [
        ScoreKind::DistMult,
        ScoreKind::ComplEx,
        ScoreKind::RotatE,
        ScoreKind::TDistMult,
        ScoreKind::TComplEx,
        ScoreKind::TeRo,
    ];

    pub fn is_temporal(&self) -> bool {
        matches!(
            self,
            ScoreKind::TDistMult | ScoreKind::TComplEx | ScoreKind::TeRo
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::DistMult => "distmult",
            ScoreKind::ComplEx => "complex",
            ScoreKind::RotatE => "rotate",
            ScoreKind::TDistMult => "tdistmult",
            ScoreKind::TComplEx => "tcomplex",
            ScoreKind::TeRo => "tero",
        }
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distmult" => Ok(ScoreKind::DistMult),
            "complex" => Ok(ScoreKind::ComplEx),
            "rotate" => Ok(ScoreKind::RotatE),
            "tdistmult" => Ok(ScoreKind::TDistMult),
            "tcomplex" => Ok(ScoreKind::TComplEx),
            "tero" => Ok(ScoreKind::TeRo),
            other => Err(Error::UnknownScoreKind(other.to_string())),
        }
    }
}

// ---- complex helpers --------------------------------------------------

fn cmul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let m = a.len() / 2;
    let mut out = vec![0.0; 2 * m];
    for k in 0..m {
        out[k] = a[k] * b[k] - a[m + k] * b[m + k];
        out[m + k] = a[k] * b[m + k] + a[m + k] * b[k];
    }
    out
}

fn cconj(a: &[f64]) -> Vec<f64> {
    let m = a.len() / 2;
    let mut out = a.to_vec();
    for x in &mut out[m..] {
        *x = -*x;
    }
    out
}

/// Elementwise complex division a/b, conjugate-over-squared-modulus form.
fn cdiv(a: &[f64], b: &[f64], what: &'static str) -> Result<Vec<f64>> {
    let m = a.len() / 2;
    let mut out = vec![0.0; 2 * m];
    for k in 0..m {
        let denom = b[k] * b[k] + b[m + k] * b[m + k];
        if denom < 1e-24 {
            return Err(Error::ZeroDivision(what));
        }
        out[k] = (a[k] * b[k] + a[m + k] * b[m + k]) / denom;
        out[m + k] = (a[m + k] * b[k] - a[k] * b[m + k]) / denom;
    }
    Ok(out)
}

fn cadd(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn csub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn rmul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Maps a phase vector to unit-modulus complex entries.
pub fn phases_to_complex(phases: &[f64]) -> Vec<f64> {
    let m = phases.len();
    let mut out = vec![0.0; 2 * m];
    for k in 0..m {
        out[k] = phases[k].cos();
        out[m + k] = phases[k].sin();
    }
    out
}

/// Accepts a rotation-relation vector either as phases (d/2) or already
/// complex (d).
fn rotation_as_complex(r: &[f64], d: usize) -> Result<Vec<f64>> {
    if r.len() == d {
        Ok(r.to_vec())
    } else if r.len() * 2 == d {
        Ok(phases_to_complex(r))
    } else {
        Err(Error::DimensionMismatch(format!(
            "rotation relation has length {}, expected {} or {}",
            r.len(),
            d,
            d / 2
        )))
    }
}

fn check_dims(kind: ScoreKind, s: &[f64], r: &[f64], o: &[f64], t: &[f64]) -> Result<()> {
    let d = s.len();
    if o.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "subject length {d} vs object length {}",
            o.len()
        )));
    }
    let r_ok = if kind == ScoreKind::RotatE {
        r.len() == d || r.len() * 2 == d
    } else {
        r.len() == d
    };
    if !r_ok {
        return Err(Error::DimensionMismatch(format!(
            "relation length {} does not match entity length {d}",
            r.len()
        )));
    }
    if kind.is_temporal() && t.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "timestamp length {} does not match entity length {d}",
            t.len()
        )));
    }
    if kind != ScoreKind::DistMult && kind != ScoreKind::TDistMult && d % 2 != 0 {
        return Err(Error::DimensionMismatch(
            "complex kinds need an even dimension".into(),
        ));
    }
    Ok(())
}

/// Plausibility score of one embedded quadruple; higher is more
/// plausible, distance-based kinds return negated norms.
pub fn score(kind: ScoreKind, s: &[f64], r: &[f64], o: &[f64], t: &[f64]) -> Result<f64> {
    check_dims(kind, s, r, o, t)?;
    Ok(match kind {
        ScoreKind::DistMult => s.iter().zip(r).zip(o).map(|((a, b), c)| a * b * c).sum(),
        ScoreKind::ComplEx => {
            let sro = cmul(&cmul(s, r), &cconj(o));
            sro[..sro.len() / 2].iter().sum()
        }
        ScoreKind::RotatE => {
            let rc = rotation_as_complex(r, s.len())?;
            -l2(&csub(&cmul(s, &rc), o))
        }
        ScoreKind::TDistMult => s
            .iter()
            .zip(r)
            .zip(o)
            .zip(t)
            .map(|(((a, b), c), d)| a * b * c * d)
            .sum(),
        ScoreKind::TComplEx => {
            let rt = cmul(r, t);
            let full = cmul(&cmul(s, &rt), &cconj(o));
            full[..full.len() / 2].iter().sum()
        }
        ScoreKind::TeRo => {
            let st = cmul(s, t);
            let ot_bar = cconj(&cmul(o, t));
            -l2(&csub(&cadd(&st, r), &ot_bar))
        }
    })
}

/// Tape counterpart of `score`, for gradient-carrying forward passes.
pub fn score_node(
    tape: &mut Tape,
    kind: ScoreKind,
    s: NodeId,
    r: NodeId,
    o: NodeId,
    t: NodeId,
) -> NodeId {
    match kind {
        ScoreKind::DistMult => {
            let sr = tape.mul(s, r);
            let sro = tape.mul(sr, o);
            tape.sum(sro)
        }
        ScoreKind::ComplEx => {
            let sr = tape.cplx_mul(s, r);
            let oc = tape.cplx_conj(o);
            let sro = tape.cplx_mul(sr, oc);
            let m = tape.value(sro).len() / 2;
            let re = tape.slice(sro, 0, m);
            tape.sum(re)
        }
        ScoreKind::RotatE => {
            let d = tape.value(s).len();
            let rc = if tape.value(r).len() * 2 == d {
                tape.phase_to_cplx(r)
            } else {
                r
            };
            let sr = tape.cplx_mul(s, rc);
            let diff = tape.sub(sr, o);
            let n = tape.norm(diff);
            tape.neg(n)
        }
        ScoreKind::TDistMult => {
            let sr = tape.mul(s, r);
            let sro = tape.mul(sr, o);
            let srot = tape.mul(sro, t);
            tape.sum(srot)
        }
        ScoreKind::TComplEx => {
            let rt = tape.cplx_mul(r, t);
            let srt = tape.cplx_mul(s, rt);
            let oc = tape.cplx_conj(o);
            let full = tape.cplx_mul(srt, oc);
            let m = tape.value(full).len() / 2;
            let re = tape.slice(full, 0, m);
            tape.sum(re)
        }
        ScoreKind::TeRo => {
            let st = tape.cplx_mul(s, t);
            let str_ = tape.add(st, r);
            let ot = tape.cplx_mul(o, t);
            let ot_bar = tape.cplx_conj(ot);
            let diff = tape.sub(str_, ot_bar);
            let n = tape.norm(diff);
            tape.neg(n)
        }
    }
}

/// Which component of a quadruple to infer from the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferTarget {
    Subject,
    Relation,
    Object,
}

/// Closed-form inference of one missing embedding from the others,
/// following each model's own composition rule. Temporal kinds require
/// `t`; static kinds ignore it.
pub fn asmp_infer(
    kind: ScoreKind,
    s: Option<&[f64]>,
    r: Option<&[f64]>,
    o: Option<&[f64]>,
    t: Option<&[f64]>,
    target: InferTarget,
) -> Result<Vec<f64>> {
    let need = |x: Option<&[f64]>, what: &str| {
        x.map(<[f64]>::to_vec).ok_or_else(|| {
            Error::DimensionMismatch(format!("missing {what} embedding for inference"))
        })
    };
    match (kind, target) {
        (ScoreKind::DistMult, InferTarget::Object) => {
            Ok(rmul(&need(s, "subject")?, &need(r, "relation")?))
        }
        (ScoreKind::DistMult, InferTarget::Subject) => {
            Ok(rmul(&need(o, "object")?, &need(r, "relation")?))
        }
        (ScoreKind::DistMult, InferTarget::Relation) => {
            Ok(rmul(&need(s, "subject")?, &need(o, "object")?))
        }
        (ScoreKind::ComplEx, InferTarget::Object) => {
            Ok(cmul(&need(s, "subject")?, &need(r, "relation")?))
        }
        (ScoreKind::ComplEx, InferTarget::Subject) => {
            let o = need(o, "object")?;
            Ok(cconj(&cmul(&cconj(&o), &need(r, "relation")?)))
        }
        (ScoreKind::ComplEx, InferTarget::Relation) => {
            let o = need(o, "object")?;
            Ok(cconj(&cmul(&need(s, "subject")?, &cconj(&o))))
        }
        (ScoreKind::RotatE, target) => {
            let d = s.or(o).map(<[f64]>::len).ok_or_else(|| {
                Error::DimensionMismatch("rotation inference needs an entity embedding".into())
            })?;
            match target {
                InferTarget::Object => {
                    let rc = rotation_as_complex(&need(r, "relation")?, d)?;
                    Ok(cmul(&need(s, "subject")?, &rc))
                }
                InferTarget::Subject => {
                    let rc = rotation_as_complex(&need(r, "relation")?, d)?;
                    cdiv(&need(o, "object")?, &rc, "relation")
                }
                InferTarget::Relation => {
                    cdiv(&need(o, "object")?, &need(s, "subject")?, "subject")
                }
            }
        }
        (ScoreKind::TDistMult, InferTarget::Object) => Ok(rmul(
            &rmul(&need(s, "subject")?, &need(r, "relation")?),
            &need(t, "timestamp")?,
        )),
        (ScoreKind::TDistMult, InferTarget::Subject) => Ok(rmul(
            &rmul(&need(o, "object")?, &need(r, "relation")?),
            &need(t, "timestamp")?,
        )),
        (ScoreKind::TDistMult, InferTarget::Relation) => Ok(rmul(
            &rmul(&need(s, "subject")?, &need(o, "object")?),
            &need(t, "timestamp")?,
        )),
        (ScoreKind::TComplEx, InferTarget::Object) => Ok(cmul(
            &cmul(&need(s, "subject")?, &need(r, "relation")?),
            &need(t, "timestamp")?,
        )),
        (ScoreKind::TComplEx, InferTarget::Subject) => {
            let o = need(o, "object")?;
            Ok(cconj(&cmul(
                &cmul(&cconj(&o), &need(r, "relation")?),
                &need(t, "timestamp")?,
            )))
        }
        (ScoreKind::TComplEx, InferTarget::Relation) => {
            let o = need(o, "object")?;
            Ok(cconj(&cmul(
                &cmul(&need(s, "subject")?, &cconj(&o)),
                &need(t, "timestamp")?,
            )))
        }
        (ScoreKind::TeRo, InferTarget::Object) => {
            let st = cmul(&need(s, "subject")?, &need(t, "timestamp")?);
            let num = cconj(&cadd(&st, &need(r, "relation")?));
            cdiv(&num, &need(t, "timestamp")?, "timestamp")
        }
        (ScoreKind::TeRo, InferTarget::Subject) => {
            // conj(o * t) rather than o * t, so the rotation distance is
            // exactly zero when the result is plugged back in.
            let ot_bar = cconj(&cmul(&need(o, "object")?, &need(t, "timestamp")?));
            let num = csub(&ot_bar, &need(r, "relation")?);
            cdiv(&num, &need(t, "timestamp")?, "timestamp")
        }
        (ScoreKind::TeRo, InferTarget::Relation) => {
            let t = need(t, "timestamp")?;
            let ot_bar = cconj(&cmul(&need(o, "object")?, &t));
            let st = cmul(&need(s, "subject")?, &t);
            Ok(csub(&ot_bar, &st))
        }
    }
}

/// Trained tables of a conventional (non-meta) embedding model. Rotation
/// relation rows are phases (d/2 wide); everything else is d wide.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsmpTables {
    pub kind: ScoreKind,
    pub entity: Tensor,
    pub relation: Tensor,
    pub timestamp: Tensor,
}

impl AsmpTables {
    pub fn relation_embedding(&self, r: usize) -> Vec<f64> {
        let row = self.relation.row(r);
        if self.kind == ScoreKind::RotatE {
            phases_to_complex(row)
        } else {
            row.to_vec()
        }
    }

    fn relation_mean(&self) -> Vec<f64> {
        if self.kind == ScoreKind::RotatE {
            let mut acc = vec![0.0; self.relation.cols * 2];
            for i in 0..self.relation.rows {
                for (a, v) in acc.iter_mut().zip(self.relation_embedding(i)) {
                    *a += v;
                }
            }
            let n = (self.relation.rows.max(1)) as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        } else {
            self.relation.mean_row()
        }
    }
}

/// Embeds a split's unseen components by closed-form inference over
/// support quadruples whose other components are all seen, averaging per
/// component; components with no such quadruple fall back to the mean
/// trained embedding.
pub fn asmp_embed_unseen(
    support: &[Quadruple],
    task: &TaskSample,
    tables: &AsmpTables,
    kind: ScoreKind,
) -> EmbeddingSet {
    let mut out = EmbeddingSet::default();
    let ent_mean = tables.entity.mean_row();
    let rel_mean = tables.relation_mean();
    let ts_mean = tables.timestamp.mean_row();

    let ts_emb = |t: usize| -> Vec<f64> {
        if task.seen_timestamps.contains(&t) {
            tables.timestamp.row(t).to_vec()
        } else {
            ts_mean.clone()
        }
    };

    for t in task.timestamps() {
        out.timestamp.insert(t, ts_emb(t));
    }
    for &e in &task.seen_entities {
        out.entity.insert(e, tables.entity.row(e).to_vec());
    }
    for &r in &task.seen_relations {
        out.relation.insert(r, tables.relation_embedding(r));
    }

    let seen_quad = |q: &Quadruple, skip: Skip| -> bool {
        let ent_ok = |e: usize| task.seen_entities.contains(&e);
        let t_ok = !kind.is_temporal() || task.seen_timestamps.contains(&q.t);
        match skip {
            Skip::Subject => ent_ok(q.o) && task.seen_relations.contains(&q.r) && t_ok,
            Skip::Object => ent_ok(q.s) && task.seen_relations.contains(&q.r) && t_ok,
            Skip::Relation => ent_ok(q.s) && ent_ok(q.o) && t_ok,
        }
    };

    for &e in &task.unseen_entities {
        let mut acc: Vec<Vec<f64>> = Vec::new();
        for q in support {
            let inferred = if q.s == e && seen_quad(q, Skip::Subject) {
                asmp_infer(
                    kind,
                    None,
                    Some(&tables.relation_embedding(q.r)),
                    Some(tables.entity.row(q.o)),
                    Some(&ts_emb(q.t)),
                    InferTarget::Subject,
                )
            } else if q.o == e && seen_quad(q, Skip::Object) {
                asmp_infer(
                    kind,
                    Some(tables.entity.row(q.s)),
                    Some(&tables.relation_embedding(q.r)),
                    None,
                    Some(&ts_emb(q.t)),
                    InferTarget::Object,
                )
            } else {
                continue;
            };
            if let Ok(v) = inferred {
                acc.push(v);
            }
        }
        out.entity.insert(e, mean_or(acc, &ent_mean));
    }

    for &r in &task.unseen_relations {
        let mut acc: Vec<Vec<f64>> = Vec::new();
        for q in support {
            if q.r != r || !seen_quad(q, Skip::Relation) {
                continue;
            }
            if let Ok(v) = asmp_infer(
                kind,
                Some(tables.entity.row(q.s)),
                None,
                Some(tables.entity.row(q.o)),
                Some(&ts_emb(q.t)),
                InferTarget::Relation,
            ) {
                acc.push(v);
            }
        }
        out.relation.insert(r, mean_or(acc, &rel_mean));
    }

    out
}

#[derive(Clone, Copy)]
enum Skip {
    Subject,
    Object,
    Relation,
}

fn mean_or(acc: Vec<Vec<f64>>, fallback: &[f64]) -> Vec<f64> {
    if acc.is_empty() {
        return fallback.to_vec();
    }
    let mut out = vec![0.0; acc[0].len()];
    for v in &acc {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = acc.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Known-true quadruple lookup used by filtered ranking.
pub type KnownTrue = HashSet<Quadruple>;
