//! Synthetic benchmark graph with a planted temporal pattern: relations
//! come in (r_{2i}, r_{2i+1}) pairs, and whenever r_{2i} links an entity
//! pair at time t, r_{2i+1} links the same pair within the next 3 steps.
//! A model that transfers relation patterns can exploit this; random
//! guessing cannot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tkg::{Quadruple, Tkg, Vocabulary};

/// Maximum delay between a trigger fact and its planted follow-up.
pub const FOLLOW_WINDOW: usize = 3;

/// Generates a planted-pattern graph: `fact_pairs` trigger/follow-up fact
/// pairs over `entities` entities, `relation_pairs * 2` relations and
/// `timestamps` time steps.
pub fn planted_pattern_tkg(
    entities: usize,
    relation_pairs: usize,
    timestamps: usize,
    fact_pairs: usize,
    seed: u64,
) -> Tkg {
    assert!(entities >= 2 && relation_pairs >= 1 && timestamps > FOLLOW_WINDOW);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quads = Vec::with_capacity(fact_pairs * 2);
    for _ in 0..fact_pairs {
        let a = rng.gen_range(0..entities);
        let b = loop {
            let b = rng.gen_range(0..entities);
            if b != a {
                break b;
            }
        };
        let pair = rng.gen_range(0..relation_pairs);
        let t = rng.gen_range(0..timestamps - FOLLOW_WINDOW);
        let delta = rng.gen_range(1..=FOLLOW_WINDOW);
        quads.push(Quadruple::new(a, 2 * pair, b, t));
        quads.push(Quadruple::new(a, 2 * pair + 1, b, t + delta));
    }
    let numeric = |n: usize, prefix: &str| {
        Vocabulary::from_labels((0..n).map(|i| format!("{prefix}{i}")).collect())
    };
    Tkg::from_parts(
        numeric(entities, "e"),
        numeric(relation_pairs * 2, "r"),
        numeric(timestamps, "t"),
        quads,
    )
}
