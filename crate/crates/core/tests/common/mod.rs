#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use thinmpi::registry::{Block, CaseSensitivity, Mode, Registry};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn function_name(i: usize) -> String {
    format!("MPI_Fn{i:02}")
}

/// A random overlap-mode instance: `blocks` non-empty subsets of `universe`
/// functions that jointly cover it, plus a random usage subset.
pub struct CoverCase {
    pub registry: Registry,
    pub masks: Vec<u32>,
    pub usage: BTreeSet<String>,
    pub usage_mask: u32,
}

pub fn random_cover_case<R: Rng>(rng: &mut R, max_blocks: usize, max_functions: usize) -> CoverCase {
    let n = rng.gen_range(1..=max_blocks);
    let u = rng.gen_range(1..=max_functions);
    let density = rng.gen_range(0.1..0.6);
    let mut masks: Vec<u32> = (0..n)
        .map(|_| {
            let mut m = 0u32;
            for f in 0..u {
                if rng.gen_bool(density) {
                    m |= 1 << f;
                }
            }
            if m == 0 {
                m = 1 << rng.gen_range(0..u);
            }
            m
        })
        .collect();
    // every function belongs to some block
    for f in 0..u {
        if masks.iter().all(|m| m & (1 << f) == 0) {
            let b = rng.gen_range(0..n);
            masks[b] |= 1 << f;
        }
    }
    let blocks = masks
        .iter()
        .enumerate()
        .map(|(i, &m)| Block {
            id: format!("b{i:02}"),
            label: String::new(),
            members: (0..u).filter(|f| m & (1 << f) != 0).map(function_name).collect(),
        })
        .collect();
    let registry = Registry::from_parts(Mode::Overlap, CaseSensitivity::Sensitive, blocks, BTreeMap::new());
    assert!(thinmpi::validate_blocks(&registry).is_empty());

    let take = rng.gen_range(0..=u);
    let mut all: Vec<usize> = (0..u).collect();
    all.shuffle(rng);
    let chosen = &all[..take];
    let usage_mask = chosen.iter().fold(0u32, |acc, f| acc | (1 << f));
    let usage = chosen.iter().map(|&f| function_name(f)).collect();
    CoverCase {
        registry,
        masks,
        usage,
        usage_mask,
    }
}

/// Smallest number of sets whose union contains `target`, by enumerating all subsets.
pub fn brute_force_cover(masks: &[u32], target: u32) -> Option<usize> {
    let n = masks.len();
    let mut best: Option<usize> = None;
    for subset in 0u32..(1 << n) {
        let size = subset.count_ones() as usize;
        if best.is_some_and(|b| size >= b) {
            continue;
        }
        let mut union = 0u32;
        for (i, m) in masks.iter().enumerate() {
            if subset & (1 << i) != 0 {
                union |= m;
            }
        }
        if union & target == target {
            best = Some(size);
        }
    }
    best
}

/// Frequency-weighted mean layer computed directly from its definition.
pub fn mean_layer(counts: &BTreeMap<String, u64>, layers: &BTreeMap<String, u32>) -> f64 {
    let total: f64 = counts.values().map(|&c| c as f64).sum();
    let weighted: f64 = counts.iter().map(|(f, &c)| c as f64 * layers[f] as f64).sum();
    weighted / total
}

/// Names of the first `n` functions of the bundled registry, shuffled.
pub fn registry_names<R: Rng>(rng: &mut R, registry: &Registry, n: usize) -> Vec<String> {
    let mut names: Vec<String> = registry.functions().iter().map(|f| f.name.clone()).collect();
    names.shuffle(rng);
    names.truncate(n);
    names
}
