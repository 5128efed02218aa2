//! Quadruple file parsing, meta-training task sampling, and generation of
//! extrapolation datasets (an emerging test graph whose entities/relations
//! partially differ from the training graph's).

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tkg::{Quadruple, RawRecord, TaskSample, Tkg, Vocabulary};

/// Input file layout: four tab-separated label fields, or four integer ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileFormat {
    TsvLabels,
    TsvIds,
}

/// Resolves a format name ("labels"/"tsv_labels" or "ids"/"tsv_ids").
pub fn build_format(name: &str) -> Option<FileFormat> {
    match name {
        "labels" | "tsv_labels" => Some(FileFormat::TsvLabels),
        "ids" | "tsv_ids" => Some(FileFormat::TsvIds),
        _ => None,
    }
}

/// Parameters of the random-walk samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Walk length when carving out the test (and validation) entity pool.
    pub l1: usize,
    /// Walk length for training-graph extraction and task sub-graphs.
    pub l2: usize,
    pub seed_entity_count: usize,
    /// Closed interval the per-draw unseen ratio is taken from.
    pub mask_ratio_range: (f64, f64),
    pub task_count: usize,
    /// Fraction of unseen-touching quadruples that land in support.
    pub support_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            l1: 6,
            l2: 6,
            seed_entity_count: 10,
            mask_ratio_range: (0.3, 0.7),
            task_count: 10_000,
            support_fraction: 0.75,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mask_ratio_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Sampler(format!(
                "mask_ratio_range ({lo}, {hi}) is not a closed interval within [0, 1]"
            )));
        }
        if !(self.support_fraction > 0.0 && self.support_fraction < 1.0) {
            return Err(Error::Sampler(format!(
                "support_fraction {} is outside (0, 1)",
                self.support_fraction
            )));
        }
        if self.l1 == 0 || self.l2 == 0 || self.seed_entity_count == 0 || self.task_count == 0 {
            return Err(Error::Sampler(
                "walk lengths, seed count and task count must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn valid_timestamp(field: &str) -> bool {
    if field.parse::<u64>().is_ok() {
        return true;
    }
    // ISO date: YYYY-MM-DD.
    let bytes = field.as_bytes();
    bytes.len() == 10
        && bytes[4] == b'-'
        && bytes[7] == b'-'
        && field[..4].parse::<u32>().is_ok()
        && field[5..7].parse::<u32>().is_ok()
        && field[8..10].parse::<u32>().is_ok()
}

/// Parses a quadruple stream; returns records in file order. Blank lines
/// are skipped; anything else must have exactly four tab-separated fields.
pub fn parse_quadruples(reader: impl BufRead, format: FileFormat) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        match format {
            FileFormat::TsvLabels => {
                if !valid_timestamp(fields[3]) {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!(
                            "timestamp {:?} is neither an integer nor an ISO date",
                            fields[3]
                        ),
                    });
                }
                out.push(RawRecord::Labels {
                    s: fields[0].to_string(),
                    r: fields[1].to_string(),
                    o: fields[2].to_string(),
                    t: fields[3].to_string(),
                });
            }
            FileFormat::TsvIds => {
                let parse = |f: &str, what: &str| {
                    f.parse::<usize>().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("{what} field {f:?} is not an integer id"),
                    })
                };
                out.push(RawRecord::Ids(Quadruple::new(
                    parse(fields[0], "subject")?,
                    parse(fields[1], "relation")?,
                    parse(fields[2], "object")?,
                    parse(fields[3], "timestamp")?,
                )));
            }
        }
    }
    Ok(out)
}

/// Reads and parses one quadruple file.
pub fn parse_quadruple_file(path: &Path, format: FileFormat) -> Result<Vec<RawRecord>> {
    let file = std::fs::File::open(path)?;
    parse_quadruples(std::io::BufReader::new(file), format)
}

// ---- random walks -----------------------------------------------------

/// Entities reached by undirected random walks of `len` steps from each
/// seed, ignoring timestamps. Walks restart from the seed on dead ends.
fn walk_entities(
    quads: &[Quadruple],
    seeds: &[usize],
    len: usize,
    rng: &mut impl Rng,
) -> BTreeSet<usize> {
    use std::collections::BTreeMap;
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for q in quads {
        adj.entry(q.s).or_default().push(q.o);
        adj.entry(q.o).or_default().push(q.s);
    }
    let mut visited: BTreeSet<usize> = seeds.iter().copied().collect();
    for &seed in seeds {
        let mut cur = seed;
        for _ in 0..len {
            match adj.get(&cur).filter(|n| !n.is_empty()) {
                Some(neighbors) => {
                    cur = neighbors[rng.gen_range(0..neighbors.len())];
                    visited.insert(cur);
                }
                None => cur = seed,
            }
        }
    }
    visited
}

fn quads_among<'a>(
    quads: impl IntoIterator<Item = &'a Quadruple>,
    entities: &BTreeSet<usize>,
) -> Vec<Quadruple> {
    quads
        .into_iter()
        .filter(|q| entities.contains(&q.s) && entities.contains(&q.o))
        .copied()
        .collect()
}

fn draw_ratio(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

/// Uniformly marks round(ratio * n) members of `pool` as unseen, clamping
/// the count so the realized fraction stays inside `range` whenever some
/// integer count can achieve that.
fn mask_components(
    pool: &BTreeSet<usize>,
    ratio: f64,
    range: (f64, f64),
    rng: &mut impl Rng,
) -> BTreeSet<usize> {
    let mut ids: Vec<usize> = pool.iter().copied().collect();
    ids.shuffle(rng);
    let n = ids.len();
    let mut k = ((ratio * n as f64).round() as usize).min(n);
    let lo = (range.0 * n as f64).ceil() as usize;
    let hi = ((range.1 * n as f64).floor() as usize).min(n);
    if lo <= hi {
        k = k.clamp(lo, hi);
    }
    ids.truncate(k);
    ids.into_iter().collect()
}

struct SplitOutcome {
    support: Vec<Quadruple>,
    query: Vec<Quadruple>,
    dropped: usize,
}

/// Splits quadruples into support and query. All-seen quadruples always go
/// to support; of the rest, floor(support_fraction * n) go to support and
/// the remainder to query. Unseen components left without any support
/// occurrence get one of their query quadruples moved over, as long as the
/// query keeps at least one quadruple. If `drop_unanchored`, query
/// quadruples still referencing a support-less unseen component are
/// removed and counted.
fn split_support_query(
    quads: &[Quadruple],
    unseen_entities: &BTreeSet<usize>,
    unseen_relations: &BTreeSet<usize>,
    support_fraction: f64,
    drop_unanchored: bool,
    rng: &mut impl Rng,
) -> SplitOutcome {
    let touches_unseen = |q: &Quadruple| {
        unseen_entities.contains(&q.s)
            || unseen_entities.contains(&q.o)
            || unseen_relations.contains(&q.r)
    };
    let mut support: Vec<Quadruple> = quads.iter().filter(|q| !touches_unseen(q)).copied().collect();
    let mut rest: Vec<Quadruple> = quads.iter().filter(|q| touches_unseen(q)).copied().collect();
    rest.shuffle(rng);
    let k = (support_fraction * rest.len() as f64).floor() as usize;
    let mut query: Vec<Quadruple> = rest.split_off(k);
    support.extend(rest);

    let anchored = |support: &[Quadruple], q: &Quadruple| {
        let ent_ok = |e: usize| {
            !unseen_entities.contains(&e) || support.iter().any(|s| s.s == e || s.o == e)
        };
        let rel_ok =
            !unseen_relations.contains(&q.r) || support.iter().any(|s| s.r == q.r);
        ent_ok(q.s) && ent_ok(q.o) && rel_ok
    };

    // Fix-up pass: promote query quadruples until every unseen component
    // they reference also occurs in support, without emptying the query.
    loop {
        let mut moved = false;
        let mut i = 0;
        while i < query.len() {
            if query.len() <= 1 {
                break;
            }
            if !anchored(&support, &query[i]) {
                support.push(query.remove(i));
                moved = true;
            } else {
                i += 1;
            }
        }
        if !moved {
            break;
        }
    }

    let mut dropped = 0;
    if drop_unanchored {
        let before = query.len();
        let support_ref = &support;
        query.retain(|q| anchored(support_ref, q));
        dropped = before - query.len();
    }
    SplitOutcome {
        support,
        query,
        dropped,
    }
}

fn task_from_split(
    outcome: SplitOutcome,
    unseen_entities: &BTreeSet<usize>,
    unseen_relations: &BTreeSet<usize>,
    seen_timestamp: impl Fn(usize) -> bool,
) -> TaskSample {
    let mut task = TaskSample::default();
    for q in outcome.support.iter().chain(outcome.query.iter()) {
        for e in [q.s, q.o] {
            if unseen_entities.contains(&e) {
                task.unseen_entities.insert(e);
            } else {
                task.seen_entities.insert(e);
            }
        }
        if unseen_relations.contains(&q.r) {
            task.unseen_relations.insert(q.r);
        } else {
            task.seen_relations.insert(q.r);
        }
        if seen_timestamp(q.t) {
            task.seen_timestamps.insert(q.t);
        } else {
            task.unseen_timestamps.insert(q.t);
        }
    }
    task.support = outcome.support;
    task.query = outcome.query;
    task
}

const TASK_RETRIES: usize = 64;

/// Samples one meta-training task: a random-walk sub-graph of `train`
/// with a masked fraction of its entities and relations playing the role
/// of unseen components.
pub fn sample_task(train: &Tkg, cfg: &SamplerConfig, rng: &mut impl Rng) -> Result<TaskSample> {
    cfg.validate()?;
    let active: Vec<usize> = train.active_entities().into_iter().collect();
    if active.is_empty() {
        return Err(Error::Sampler("training graph has no quadruples".into()));
    }
    for _ in 0..TASK_RETRIES {
        let seed = active[rng.gen_range(0..active.len())];
        let entities = walk_entities(&train.quads, &[seed], cfg.l2, rng);
        let sub = quads_among(&train.quads, &entities);
        if sub.is_empty() {
            continue;
        }
        let sub_entities: BTreeSet<usize> = sub.iter().flat_map(|q| [q.s, q.o]).collect();
        let sub_relations: BTreeSet<usize> = sub.iter().map(|q| q.r).collect();
        let rho_e = draw_ratio(cfg.mask_ratio_range, rng);
        let rho_r = draw_ratio(cfg.mask_ratio_range, rng);
        let unseen_e = mask_components(&sub_entities, rho_e, cfg.mask_ratio_range, rng);
        let unseen_r = mask_components(&sub_relations, rho_r, cfg.mask_ratio_range, rng);
        let outcome =
            split_support_query(&sub, &unseen_e, &unseen_r, cfg.support_fraction, false, rng);
        if outcome.query.is_empty() {
            continue;
        }
        let task = task_from_split(outcome, &unseen_e, &unseen_r, |_| true);
        task.validate()?;
        return Ok(task);
    }
    Err(Error::Sampler(format!(
        "no task with an unseen-component query after {TASK_RETRIES} attempts; \
         widen mask_ratio_range or increase l2"
    )))
}

// ---- dataset generation ------------------------------------------------

/// Table-style counts describing a generated dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train_quads: usize,
    pub valid_support_quads: usize,
    pub valid_query_quads: usize,
    pub test_support_quads: usize,
    pub test_query_quads: usize,
    pub valid_unseen_entities: usize,
    pub valid_unseen_relations: usize,
    pub valid_unseen_timestamps: usize,
    pub test_unseen_entities: usize,
    pub test_unseen_relations: usize,
    pub test_unseen_timestamps: usize,
    /// Query quadruples removed because an unseen component had no
    /// support occurrence to anchor it.
    pub dropped_valid_quads: usize,
    pub dropped_test_quads: usize,
    /// Fraction of each split's components masked out of the remaining
    /// pool before the training graph was sampled.
    #[serde(default)]
    pub valid_masked_entity_fraction: f64,
    #[serde(default)]
    pub valid_masked_relation_fraction: f64,
    #[serde(default)]
    pub test_masked_entity_fraction: f64,
    #[serde(default)]
    pub test_masked_relation_fraction: f64,
}

/// A training graph plus validation and test extrapolation splits over one
/// shared vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub train: Tkg,
    pub valid: TaskSample,
    pub test: TaskSample,
    pub stats: DatasetStats,
}

fn choose_seeds(pool: &BTreeSet<usize>, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = pool.iter().copied().collect();
    ids.shuffle(rng);
    ids.truncate(count);
    ids
}

/// Quads carved for a split, the pool that remains, and the fraction of
/// split entities/relations that was masked out of the remainder.
struct Carve {
    split: Vec<Quadruple>,
    remainder: Vec<Quadruple>,
    masked_entity_fraction: f64,
    masked_relation_fraction: f64,
}

/// Carves one emerging split out of `pool`: seed entities, l1 walks, all
/// quadruples among the reached entities. Removes remainder quads touching
/// the masked components.
fn carve_split(pool: Vec<Quadruple>, cfg: &SamplerConfig, rng: &mut impl Rng) -> Carve {
    let active: BTreeSet<usize> = pool.iter().flat_map(|q| [q.s, q.o]).collect();
    if active.is_empty() {
        return Carve {
            split: Vec::new(),
            remainder: pool,
            masked_entity_fraction: 0.0,
            masked_relation_fraction: 0.0,
        };
    }
    let seeds = choose_seeds(&active, cfg.seed_entity_count, rng);
    let reached = walk_entities(&pool, &seeds, cfg.l1, rng);
    let split = quads_among(&pool, &reached);
    let in_split: BTreeSet<Quadruple> = split.iter().copied().collect();
    let remainder: Vec<Quadruple> = pool
        .into_iter()
        .filter(|q| !in_split.contains(q))
        .collect();

    let split_entities: BTreeSet<usize> = split.iter().flat_map(|q| [q.s, q.o]).collect();
    let split_relations: BTreeSet<usize> = split.iter().map(|q| q.r).collect();
    let rho_e = draw_ratio(cfg.mask_ratio_range, rng);
    let rho_r = draw_ratio(cfg.mask_ratio_range, rng);
    let masked_e = mask_components(&split_entities, rho_e, cfg.mask_ratio_range, rng);
    let masked_r = mask_components(&split_relations, rho_r, cfg.mask_ratio_range, rng);
    let remainder = remainder
        .into_iter()
        .filter(|q| {
            !masked_e.contains(&q.s) && !masked_e.contains(&q.o) && !masked_r.contains(&q.r)
        })
        .collect();
    let frac = |part: usize, whole: usize| {
        if whole == 0 {
            0.0
        } else {
            part as f64 / whole as f64
        }
    };
    Carve {
        split,
        remainder,
        masked_entity_fraction: frac(masked_e.len(), split_entities.len()),
        masked_relation_fraction: frac(masked_r.len(), split_relations.len()),
    }
}

/// Generates an extrapolation dataset: a test split carved out by random
/// walks, a validation split carved identically from the remainder, a
/// masked fraction of split components removed from what is left, and a
/// training graph walked out of the final remainder. All splits share the
/// source vocabulary; unseen test entity ids are permuted so id order
/// carries no information.
pub fn generate_dataset(source: &Tkg, cfg: &SamplerConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    if source.active_entities().len() < cfg.seed_entity_count {
        return Err(Error::Sampler(format!(
            "source has {} active entities, fewer than seed_entity_count = {}",
            source.active_entities().len(),
            cfg.seed_entity_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let test_carve = carve_split(source.quads.clone(), cfg, &mut rng);
    let valid_carve = carve_split(test_carve.remainder, cfg, &mut rng);
    let (test_quads, valid_quads, remainder) =
        (test_carve.split, valid_carve.split, valid_carve.remainder);

    // Training graph: walks over the remainder.
    let remainder_entities: BTreeSet<usize> = remainder.iter().flat_map(|q| [q.s, q.o]).collect();
    if remainder.is_empty() {
        return Err(Error::Sampler(
            "no quadruples left for the training graph; reduce l1 or seed_entity_count".into(),
        ));
    }
    let seeds = choose_seeds(
        &remainder_entities,
        cfg.seed_entity_count.min(remainder_entities.len()),
        &mut rng,
    );
    let train_entities = walk_entities(&remainder, &seeds, cfg.l2, &mut rng);
    let train_quads = quads_among(&remainder, &train_entities);
    if train_quads.is_empty() {
        return Err(Error::Sampler(
            "training walk reached no quadruples; reduce l1 or seed_entity_count".into(),
        ));
    }

    let mut train = Tkg::from_parts(
        source.entities.clone(),
        source.relations.clone(),
        source.timestamps.clone(),
        train_quads,
    );

    // Unseen = absent from the training graph, per split.
    let train_e = train.active_entities();
    let train_r = train.active_relations();
    let train_t = train.active_timestamps();

    let build_split = |quads: &[Quadruple], rng: &mut ChaCha8Rng| {
        let unseen_e: BTreeSet<usize> = quads
            .iter()
            .flat_map(|q| [q.s, q.o])
            .filter(|e| !train_e.contains(e))
            .collect();
        let unseen_r: BTreeSet<usize> = quads
            .iter()
            .map(|q| q.r)
            .filter(|r| !train_r.contains(r))
            .collect();
        let outcome =
            split_support_query(quads, &unseen_e, &unseen_r, cfg.support_fraction, true, rng);
        let dropped = outcome.dropped;
        let task = task_from_split(outcome, &unseen_e, &unseen_r, |t| train_t.contains(&t));
        (task, dropped)
    };

    let (valid, dropped_valid) = build_split(&valid_quads, &mut rng);
    let (mut test, dropped_test) = build_split(&test_quads, &mut rng);

    relabel_unseen_entities(&mut train, &mut test, &valid, &mut rng);

    let stats = DatasetStats {
        train_quads: train.quads.len(),
        valid_support_quads: valid.support.len(),
        valid_query_quads: valid.query.len(),
        test_support_quads: test.support.len(),
        test_query_quads: test.query.len(),
        valid_unseen_entities: valid.unseen_entities.len(),
        valid_unseen_relations: valid.unseen_relations.len(),
        valid_unseen_timestamps: valid.unseen_timestamps.len(),
        test_unseen_entities: test.unseen_entities.len(),
        test_unseen_relations: test.unseen_relations.len(),
        test_unseen_timestamps: test.unseen_timestamps.len(),
        dropped_valid_quads: dropped_valid,
        dropped_test_quads: dropped_test,
        valid_masked_entity_fraction: valid_carve.masked_entity_fraction,
        valid_masked_relation_fraction: valid_carve.masked_relation_fraction,
        test_masked_entity_fraction: test_carve.masked_entity_fraction,
        test_masked_relation_fraction: test_carve.masked_relation_fraction,
    };

    let bundle = DatasetBundle {
        train,
        valid,
        test,
        stats,
    };
    bundle.valid.validate()?;
    bundle.test.validate()?;
    Ok(bundle)
}

/// Permutes the ids of entities that exist only in the test split, moving
/// their vocabulary labels along so the data keeps its meaning while the
/// id values become arbitrary.
fn relabel_unseen_entities(
    train: &mut Tkg,
    test: &mut TaskSample,
    valid: &TaskSample,
    rng: &mut impl Rng,
) {
    let valid_e: BTreeSet<usize> = valid
        .support
        .iter()
        .chain(valid.query.iter())
        .flat_map(|q| [q.s, q.o])
        .collect();
    let only_test: Vec<usize> = test
        .unseen_entities
        .iter()
        .copied()
        .filter(|e| !valid_e.contains(e))
        .collect();
    if only_test.len() < 2 {
        return;
    }
    let mut shuffled = only_test.clone();
    shuffled.shuffle(rng);
    let map: std::collections::BTreeMap<usize, usize> =
        only_test.iter().copied().zip(shuffled).collect();
    let remap = |e: usize| map.get(&e).copied().unwrap_or(e);

    for q in test.support.iter_mut().chain(test.query.iter_mut()) {
        q.s = remap(q.s);
        q.o = remap(q.o);
    }
    // The sets map onto themselves, but the labels must follow their ids.
    let mut labels = train.entities.labels().to_vec();
    for (&old, &new) in &map {
        labels[new] = train.entities.labels()[old].clone();
    }
    train.entities = Vocabulary::from_labels(labels);
}

// ---- on-disk layout ----------------------------------------------------

const SPLIT_FILES: [&str; 5] = [
    "train.txt",
    "valid_sup.txt",
    "valid_que.txt",
    "test_sup.txt",
    "test_que.txt",
];

fn write_quads(path: &Path, quads: &[Quadruple]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for q in quads {
        writeln!(f, "{}\t{}\t{}\t{}", q.s, q.r, q.o, q.t)?;
    }
    Ok(())
}

fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, label) in vocab.labels().iter().enumerate() {
        writeln!(f, "{label}\t{id}")?;
    }
    Ok(())
}

/// Writes a bundle as the standard directory layout: one TSV id file per
/// split, label/id maps, and stats.json.
pub fn write_dataset(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let splits: [&[Quadruple]; 5] = [
        &bundle.train.quads,
        &bundle.valid.support,
        &bundle.valid.query,
        &bundle.test.support,
        &bundle.test.query,
    ];
    for (name, quads) in SPLIT_FILES.iter().zip(splits) {
        write_quads(&dir.join(name), quads)?;
    }
    write_vocab(&dir.join("entity2id.txt"), &bundle.train.entities)?;
    write_vocab(&dir.join("relation2id.txt"), &bundle.train.relations)?;
    write_vocab(&dir.join("time2id.txt"), &bundle.train.timestamps)?;
    let stats = serde_json::to_string_pretty(&bundle.stats)?;
    std::fs::write(dir.join("stats.json"), stats)?;
    Ok(())
}

fn read_quads(path: &Path) -> Result<Vec<Quadruple>> {
    let records = parse_quadruple_file(path, FileFormat::TsvIds)?;
    Ok(records
        .into_iter()
        .map(|r| match r {
            RawRecord::Ids(q) => q,
            RawRecord::Labels { .. } => unreachable!("id format produces id records"),
        })
        .collect())
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs: Vec<(usize, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, id) = line.rsplit_once('\t').ok_or(Error::Parse {
            line: i + 1,
            msg: "expected label\\tid".into(),
        })?;
        let id: usize = id.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("id field {id:?} is not an integer"),
        })?;
        pairs.push((id, label.to_string()));
    }
    pairs.sort();
    let labels = pairs.into_iter().map(|(_, l)| l).collect();
    Ok(Vocabulary::from_labels(labels))
}

/// Reads a dataset directory back into a bundle. Seen/unseen partitions
/// are reconstructed as presence/absence in the training split.
pub fn read_dataset(dir: &Path) -> Result<DatasetBundle> {
    let quads: Vec<Vec<Quadruple>> = SPLIT_FILES
        .iter()
        .map(|name| read_quads(&dir.join(name)))
        .collect::<Result<_>>()?;
    let [train_q, valid_sup, valid_que, test_sup, test_que]: [Vec<Quadruple>; 5] =
        quads.try_into().expect("five split files");

    let train = Tkg::from_parts(
        read_vocab(&dir.join("entity2id.txt"))?,
        read_vocab(&dir.join("relation2id.txt"))?,
        read_vocab(&dir.join("time2id.txt"))?,
        train_q,
    );
    let stats: DatasetStats = serde_json::from_str(&std::fs::read_to_string(dir.join("stats.json"))?)?;

    let train_e = train.active_entities();
    let train_r = train.active_relations();
    let train_t = train.active_timestamps();
    let rebuild = |support: Vec<Quadruple>, query: Vec<Quadruple>| {
        let mut task = TaskSample::default();
        for q in support.iter().chain(query.iter()) {
            for e in [q.s, q.o] {
                if train_e.contains(&e) {
                    task.seen_entities.insert(e);
                } else {
                    task.unseen_entities.insert(e);
                }
            }
            if train_r.contains(&q.r) {
                task.seen_relations.insert(q.r);
            } else {
                task.unseen_relations.insert(q.r);
            }
            if train_t.contains(&q.t) {
                task.seen_timestamps.insert(q.t);
            } else {
                task.unseen_timestamps.insert(q.t);
            }
        }
        task.support = support;
        task.query = query;
        task
    };
    Ok(DatasetBundle {
        valid: rebuild(valid_sup, valid_que),
        test: rebuild(test_sup, test_que),
        train,
        stats,
    })
}
