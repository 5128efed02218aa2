//! Data model for temporal knowledge graphs: quadruples, vocabularies,
//! adjacency indexes and meta-learning task samples.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped fact (s, r, o, t) in integer-id space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub s: usize,
    pub r: usize,
    pub o: usize,
    pub t: usize,
}

impl Quadruple {
    pub fn new(s: usize, r: usize, o: usize, t: usize) -> Self {
        Quadruple { s, r, o, t }
    }
}

/// Bidirectional label <-> dense-id mapping.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels(labels: Vec<String>) -> Self {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Vocabulary { labels, index }
    }

    /// Returns the id for `label`, interning it if absent.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Rebuilds the label index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
    }
}

/// A raw quadruple record prior to id resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawRecord {
    Labels {
        s: String,
        r: String,
        o: String,
        t: String,
    },
    Ids(Quadruple),
}

/// An indexed quadruple store with entity/relation/timestamp vocabularies.
///
/// Immutable after construction; timestamp-id order equals chronological
/// order of the underlying labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tkg {
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    pub timestamps: Vocabulary,
    pub quads: Vec<Quadruple>,
    /// entity-id -> (relation, object, timestamp) for quads with that subject.
    pub out_index: HashMap<usize, Vec<(usize, usize, usize)>>,
    /// entity-id -> (subject, relation, timestamp) for quads with that object.
    pub in_index: HashMap<usize, Vec<(usize, usize, usize)>>,
}

impl Tkg {
    /// Assembles a Tkg from deduplicated quads and prebuilt vocabularies.
    pub fn from_parts(
        entities: Vocabulary,
        relations: Vocabulary,
        timestamps: Vocabulary,
        quads: impl IntoIterator<Item = Quadruple>,
    ) -> Self {
        let quads: Vec<Quadruple> = {
            let set: BTreeSet<Quadruple> = quads.into_iter().collect();
            set.into_iter().collect()
        };
        let (out_index, in_index) = build_indexes(&quads);
        Tkg {
            entities,
            relations,
            timestamps,
            quads,
            out_index,
            in_index,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_timestamps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn outgoing(&self, e: usize) -> &[(usize, usize, usize)] {
        self.out_index.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn incoming(&self, e: usize) -> &[(usize, usize, usize)] {
        self.in_index.get(&e).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entity ids that occur in at least one quadruple.
    pub fn active_entities(&self) -> BTreeSet<usize> {
        self.quads.iter().flat_map(|q| [q.s, q.o]).collect()
    }

    pub fn active_relations(&self) -> BTreeSet<usize> {
        self.quads.iter().map(|q| q.r).collect()
    }

    pub fn active_timestamps(&self) -> BTreeSet<usize> {
        self.quads.iter().map(|q| q.t).collect()
    }
}

fn build_indexes(
    quads: &[Quadruple],
) -> (
    HashMap<usize, Vec<(usize, usize, usize)>>,
    HashMap<usize, Vec<(usize, usize, usize)>>,
) {
    let mut out_index: HashMap<usize, Vec<(usize, usize, usize)>> = HashMap::new();
    let mut in_index: HashMap<usize, Vec<(usize, usize, usize)>> = HashMap::new();
    for q in quads {
        out_index.entry(q.s).or_default().push((q.r, q.o, q.t));
        in_index.entry(q.o).or_default().push((q.s, q.r, q.t));
    }
    (out_index, in_index)
}

/// Builds a Tkg from raw records, assigning dense 0-based ids.
///
/// Label records are sorted first so that ids are deterministic given the
/// input multiset; timestamp ids are assigned in chronological label order.
/// Duplicate records collapse. Mixing label and id records is an error.
pub fn build_tkg(records: &[RawRecord]) -> Result<Tkg> {
    let mut labels: Vec<(&str, &str, &str, &str)> = Vec::new();
    let mut ids: Vec<Quadruple> = Vec::new();
    for (index, rec) in records.iter().enumerate() {
        match rec {
            RawRecord::Labels { s, r, o, t } => {
                if !ids.is_empty() {
                    return Err(Error::InconsistentRecord {
                        index,
                        msg: format!("label record ({s}, {r}, {o}, {t}) follows id records"),
                    });
                }
                labels.push((s, r, o, t));
            }
            RawRecord::Ids(q) => {
                if !labels.is_empty() {
                    return Err(Error::InconsistentRecord {
                        index,
                        msg: format!("id record {q:?} follows label records"),
                    });
                }
                ids.push(*q);
            }
        }
    }

    if !ids.is_empty() {
        // Synthesize vocabularies: ids are taken as-is, so label i is "i".
        let max_e = ids.iter().flat_map(|q| [q.s, q.o]).max().unwrap_or(0);
        let max_r = ids.iter().map(|q| q.r).max().unwrap_or(0);
        let max_t = ids.iter().map(|q| q.t).max().unwrap_or(0);
        let numeric = |n: usize| (0..=n).map(|i| i.to_string()).collect::<Vec<_>>();
        return Ok(Tkg::from_parts(
            Vocabulary::from_labels(numeric(max_e)),
            Vocabulary::from_labels(numeric(max_r)),
            Vocabulary::from_labels(numeric(max_t)),
            ids,
        ));
    }

    labels.sort_unstable();
    labels.dedup();

    // Timestamp ids must compare chronologically: numeric labels sort by
    // value, everything else (ISO dates) lexicographically.
    let mut ts_labels: Vec<&str> = labels.iter().map(|r| r.3).collect();
    ts_labels.sort_unstable();
    ts_labels.dedup();
    if ts_labels.iter().all(|t| t.parse::<u64>().is_ok()) {
        ts_labels.sort_by_key(|t| t.parse::<u64>().unwrap());
    }

    let mut entities = Vocabulary::new();
    let mut relations = Vocabulary::new();
    let mut timestamps = Vocabulary::new();
    for t in &ts_labels {
        timestamps.intern(t);
    }
    let mut quads = Vec::with_capacity(labels.len());
    for (s, r, o, t) in &labels {
        quads.push(Quadruple::new(
            entities.intern(s),
            relations.intern(r),
            entities.intern(o),
            timestamps.id(t).expect("timestamp interned above"),
        ));
    }
    Ok(Tkg::from_parts(entities, relations, timestamps, quads))
}

/// One meta-training episode: seen/unseen partitions plus support and
/// query quadruple sets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaskSample {
    pub seen_entities: BTreeSet<usize>,
    pub unseen_entities: BTreeSet<usize>,
    pub seen_relations: BTreeSet<usize>,
    pub unseen_relations: BTreeSet<usize>,
    pub seen_timestamps: BTreeSet<usize>,
    pub unseen_timestamps: BTreeSet<usize>,
    pub support: Vec<Quadruple>,
    pub query: Vec<Quadruple>,
}

impl TaskSample {
    pub fn entities(&self) -> impl Iterator<Item = usize> + '_ {
        self.seen_entities
            .iter()
            .chain(self.unseen_entities.iter())
            .copied()
    }

    pub fn relations(&self) -> impl Iterator<Item = usize> + '_ {
        self.seen_relations
            .iter()
            .chain(self.unseen_relations.iter())
            .copied()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = usize> + '_ {
        self.seen_timestamps
            .iter()
            .chain(self.unseen_timestamps.iter())
            .copied()
    }

    /// Checks every TaskSample invariant, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        let overlap = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| a.intersection(b).next().is_some();
        if overlap(&self.seen_entities, &self.unseen_entities)
            || overlap(&self.seen_relations, &self.unseen_relations)
            || overlap(&self.seen_timestamps, &self.unseen_timestamps)
        {
            return Err(Error::Sampler(
                "seen and unseen component sets overlap".into(),
            ));
        }
        let ent: HashSet<usize> = self.entities().collect();
        let rel: HashSet<usize> = self.relations().collect();
        let ts: HashSet<usize> = self.timestamps().collect();
        for q in self.support.iter().chain(self.query.iter()) {
            if !ent.contains(&q.s) || !ent.contains(&q.o) || !rel.contains(&q.r) || !ts.contains(&q.t)
            {
                return Err(Error::Sampler(format!(
                    "quadruple {q:?} references components outside the task partitions"
                )));
            }
        }
        for q in &self.query {
            categorize_query(q, self)?;
        }
        Ok(())
    }
}

/// Which unseen components a query quadruple contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryCategory {
    /// Unseen entity only.
    UEnt,
    /// Unseen relation only.
    URel,
    /// Both an unseen entity and an unseen relation.
    UBoth,
}

impl QueryCategory {
    pub const ALL: [QueryCategory; 3] = [QueryCategory::UEnt, QueryCategory::URel, QueryCategory::UBoth];

    pub fn name(&self) -> &'static str {
        match self {
            QueryCategory::UEnt => "u_ent",
            QueryCategory::URel => "u_rel",
            QueryCategory::UBoth => "u_both",
        }
    }
}

/// Maps a query quadruple to its unique category.
pub fn categorize_query(q: &Quadruple, task: &TaskSample) -> Result<QueryCategory> {
    let u_ent = task.unseen_entities.contains(&q.s) || task.unseen_entities.contains(&q.o);
    let u_rel = task.unseen_relations.contains(&q.r);
    match (u_ent, u_rel) {
        (true, true) => Ok(QueryCategory::UBoth),
        (true, false) => Ok(QueryCategory::UEnt),
        (false, true) => Ok(QueryCategory::URel),
        (false, false) => Err(Error::NoUnseenComponent(*q)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &str, r: &str, o: &str, t: &str) -> RawRecord {
        RawRecord::Labels {
            s: s.into(),
            r: r.into(),
            o: o.into(),
            t: t.into(),
        }
    }

    #[test]
    fn empty_input_builds_empty_tkg() {
        let tkg = build_tkg(&[]).unwrap();
        assert_eq!(tkg.quads.len(), 0);
        assert_eq!(tkg.num_entities(), 0);
        assert_eq!(tkg.num_relations(), 0);
        assert_eq!(tkg.num_timestamps(), 0);
    }

    #[test]
    fn duplicates_collapse() {
        let recs = vec![
            labels("a", "r1", "b", "t1"),
            labels("a", "r1", "b", "t1"),
        ];
        let tkg = build_tkg(&recs).unwrap();
        assert_eq!(tkg.quads.len(), 1);
    }

    #[test]
    fn mixing_labels_and_ids_errors() {
        let recs = vec![
            labels("a", "r1", "b", "t1"),
            RawRecord::Ids(Quadruple::new(0, 0, 1, 0)),
        ];
        let err = build_tkg(&recs).unwrap_err();
        assert!(matches!(err, Error::InconsistentRecord { index: 1, .. }));
    }

    #[test]
    fn timestamp_ids_are_chronological() {
        let recs = vec![
            labels("a", "r", "b", "2014-11-25"),
            labels("a", "r", "c", "2014-01-02"),
            labels("b", "r", "c", "2014-06-15"),
        ];
        let tkg = build_tkg(&recs).unwrap();
        assert_eq!(tkg.timestamps.label(0), Some("2014-01-02"));
        assert_eq!(tkg.timestamps.label(1), Some("2014-06-15"));
        assert_eq!(tkg.timestamps.label(2), Some("2014-11-25"));
    }

    #[test]
    fn numeric_timestamps_sort_by_value() {
        let recs = vec![
            labels("a", "r", "b", "10"),
            labels("a", "r", "c", "2"),
        ];
        let tkg = build_tkg(&recs).unwrap();
        assert_eq!(tkg.timestamps.label(0), Some("2"));
        assert_eq!(tkg.timestamps.label(1), Some("10"));
    }

    #[test]
    fn build_is_deterministic_under_reordering() {
        let a = vec![
            labels("x", "r1", "y", "t1"),
            labels("y", "r2", "z", "t2"),
        ];
        let b = vec![
            labels("y", "r2", "z", "t2"),
            labels("x", "r1", "y", "t1"),
        ];
        let ta = build_tkg(&a).unwrap();
        let tb = build_tkg(&b).unwrap();
        assert_eq!(ta.quads, tb.quads);
        assert_eq!(ta.entities.labels(), tb.entities.labels());
    }

    fn mini_task() -> TaskSample {
        TaskSample {
            seen_entities: [0].into(),
            unseen_entities: [1].into(),
            seen_relations: [0].into(),
            unseen_relations: [1].into(),
            seen_timestamps: [0].into(),
            unseen_timestamps: BTreeSet::new(),
            support: vec![],
            query: vec![
                Quadruple::new(1, 0, 0, 0),
                Quadruple::new(0, 1, 0, 0),
                Quadruple::new(1, 1, 0, 0),
            ],
        }
    }

    #[test]
    fn categorize_covers_all_three_kinds() {
        let task = mini_task();
        assert_eq!(
            categorize_query(&task.query[0], &task).unwrap(),
            QueryCategory::UEnt
        );
        assert_eq!(
            categorize_query(&task.query[1], &task).unwrap(),
            QueryCategory::URel
        );
        assert_eq!(
            categorize_query(&task.query[2], &task).unwrap(),
            QueryCategory::UBoth
        );
    }

    #[test]
    fn all_seen_query_is_an_error() {
        let task = mini_task();
        let q = Quadruple::new(0, 0, 0, 0);
        assert!(matches!(
            categorize_query(&q, &task),
            Err(Error::NoUnseenComponent(_))
        ));
    }

    #[test]
    fn validate_accepts_mini_task() {
        mini_task().validate().unwrap();
    }
}
