//! Minimum block cover of a usage set and the per-application manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Mode, Registry};
use crate::report::{self, Render};
use crate::scanner::UsageSet;

/// Largest candidate-block count the exact solver accepts.
pub const EXACT_BLOCK_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Exact,
    Greedy,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Exact => "exact",
            Strategy::Greedy => "greedy",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoverOptions {
    pub strategy: Strategy,
    /// Drop unknown `MPI_` identifiers instead of refusing to compose.
    pub ignore_unknown: bool,
}

impl From<Strategy> for CoverOptions {
    fn from(strategy: Strategy) -> Self {
        CoverOptions {
            strategy,
            ignore_unknown: false,
        }
    }
}

/// The thin library for one application: blocks F_i1..F_im covering its usage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposedLibrary {
    pub app_id: String,
    /// Sorted by block id.
    pub selected_blocks: Vec<String>,
    pub m: usize,
    pub covered_functions: BTreeSet<String>,
    pub usage: UsageSet,
    pub strategy: Strategy,
    pub registry_fingerprint: String,
}

/// Selects the fewest blocks whose union contains `usage.invoked`.
///
/// Partition registries have a unique cover (every touched block). Overlap
/// registries use either exhaustive search, which returns the
/// lexicographically first optimum, or the greedy heuristic.
pub fn minimal_cover(
    usage: &UsageSet,
    registry: &Registry,
    options: impl Into<CoverOptions>,
) -> Result<ComposedLibrary> {
    let options = options.into();
    if !usage.unknown_identifiers.is_empty() && !options.ignore_unknown {
        return Err(Error::UnresolvedIdentifiers(
            usage.unknown_identifiers.iter().cloned().collect(),
        ));
    }

    let mut invoked = BTreeSet::new();
    for name in &usage.invoked {
        let record = registry.lookup(name).ok_or_else(|| Error::Coverage(name.clone()))?;
        invoked.insert(record.name.clone());
    }

    let mut selected = match registry.mode() {
        Mode::Partition => invoked
            .iter()
            .map(|f| registry.lookup(f).expect("resolved above").block_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        Mode::Overlap => {
            let instance = CoverInstance::new(&invoked, registry);
            let picks = match options.strategy {
                Strategy::Exact => instance.exact()?,
                Strategy::Greedy => instance.greedy(),
            };
            picks.into_iter().map(|i| instance.ids[i].clone()).collect::<Vec<_>>()
        }
    };
    selected.sort();

    let covered_functions = selected
        .iter()
        .flat_map(|id| registry.block(id).expect("selected from registry").members.iter())
        .map(|m| registry.lookup(m).map_or_else(|| m.clone(), |r| r.name.clone()))
        .collect();

    let mut usage = usage.clone();
    if options.ignore_unknown {
        usage.unknown_identifiers.clear();
        let invoked = &usage.invoked;
        usage.call_sites.retain(|c| invoked.contains(&c.function));
    }

    Ok(ComposedLibrary {
        app_id: usage.app_id.clone(),
        m: selected.len(),
        selected_blocks: selected,
        covered_functions,
        usage,
        strategy: options.strategy,
        registry_fingerprint: registry.fingerprint(),
    })
}

/// Fixed-width bit set over the invoked functions.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64)])
    }

    fn full(len: usize) -> Self {
        let mut bits = Bits::empty(len);
        for i in 0..len {
            bits.insert(i);
        }
        bits
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn union(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// |other \ self|
    fn gain(&self, other: &Bits) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (b & !a).count_ones() as usize)
            .sum()
    }
}

/// Overlap-mode set cover restricted to blocks touching the usage.
struct CoverInstance {
    ids: Vec<String>,
    sets: Vec<Bits>,
    full: Bits,
    universe: usize,
}

impl CoverInstance {
    fn new(invoked: &BTreeSet<String>, registry: &Registry) -> Self {
        let position = |name: &str| {
            let canonical = registry.lookup(name).map(|r| r.name.as_str()).unwrap_or(name);
            invoked.iter().position(|f| f == canonical)
        };
        let mut candidates: Vec<(String, Bits)> = registry
            .blocks()
            .iter()
            .filter_map(|block| {
                let mut bits = Bits::empty(invoked.len());
                for i in block.members.iter().filter_map(|m| position(m)) {
                    bits.insert(i);
                }
                (bits.count() > 0).then(|| (block.id.clone(), bits))
            })
            .collect();
        candidates.sort_by(|a, b| a.0.cmp(&b.0));
        let (ids, sets) = candidates.into_iter().unzip();
        CoverInstance {
            ids,
            sets,
            full: Bits::full(invoked.len()),
            universe: invoked.len(),
        }
    }

    fn exact(&self) -> Result<Vec<usize>> {
        let n = self.sets.len();
        if n > EXACT_BLOCK_LIMIT {
            return Err(Error::ExactTooLarge {
                candidates: n,
                limit: EXACT_BLOCK_LIMIT,
            });
        }
        // suffix[i] = union of sets[i..]; max_size[i] = largest set in sets[i..]
        let mut suffix = vec![Bits::empty(self.universe); n + 1];
        let mut max_size = vec![0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1].union(&self.sets[i]);
            max_size[i] = max_size[i + 1].max(self.sets[i].count());
        }

        let mut chosen = Vec::new();
        for k in 0..=n {
            if self.search(0, k, &Bits::empty(self.universe), &suffix, &max_size, &mut chosen) {
                return Ok(chosen);
            }
        }
        unreachable!("candidate blocks cover every invoked function")
    }

    /// Depth-first search over k-subsets in lexicographic order.
    fn search(
        &self,
        start: usize,
        remaining: usize,
        covered: &Bits,
        suffix: &[Bits],
        max_size: &[usize],
        chosen: &mut Vec<usize>,
    ) -> bool {
        let uncovered = self.universe - covered.count();
        if remaining == 0 {
            return uncovered == 0;
        }
        if start + remaining > self.sets.len()
            || covered.union(&suffix[start]) != self.full
            || uncovered > remaining * max_size[start]
        {
            return false;
        }
        for i in start..=self.sets.len() - remaining {
            if covered.gain(&self.sets[i]) == 0 {
                continue;
            }
            chosen.push(i);
            if self.search(
                i + 1,
                remaining - 1,
                &covered.union(&self.sets[i]),
                suffix,
                max_size,
                chosen,
            ) {
                return true;
            }
            chosen.pop();
        }
        false
    }

    fn greedy(&self) -> Vec<usize> {
        let mut covered = Bits::empty(self.universe);
        let mut chosen = Vec::new();
        while covered != self.full {
            // ids are sorted, so the first maximum is the lexicographic tie-break
            let (best, gain) = self
                .sets
                .iter()
                .enumerate()
                .map(|(i, s)| (i, covered.gain(s)))
                .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            debug_assert!(gain > 0);
            covered = covered.union(&self.sets[best]);
            chosen.push(best);
        }
        chosen
    }
}

/// Deterministic description of a composed library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub app_id: String,
    pub strategy: Strategy,
    pub m: usize,
    pub selected_blocks: Vec<String>,
    pub covered_functions: Vec<String>,
    pub invoked: Vec<String>,
    pub registry_fingerprint: String,
}

impl Manifest {
    pub fn from_library(lib: &ComposedLibrary) -> Self {
        let mut selected_blocks = lib.selected_blocks.clone();
        selected_blocks.sort();
        Manifest {
            app_id: lib.app_id.clone(),
            strategy: lib.strategy,
            m: lib.m,
            selected_blocks,
            covered_functions: lib.covered_functions.iter().cloned().collect(),
            invoked: lib.usage.invoked.iter().cloned().collect(),
            registry_fingerprint: lib.registry_fingerprint.clone(),
        }
    }

    /// Hash of the JSON manifest document.
    pub fn fingerprint(&self) -> String {
        report::fingerprint(report::to_json(self).as_bytes())
    }
}

impl Render for Manifest {
    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "application: {}", self.app_id);
        let _ = writeln!(out, "strategy: {}", self.strategy.as_str());
        let _ = writeln!(out, "m = {}: {}", self.m, self.selected_blocks.join(" "));
        let _ = writeln!(out, "invoked ({}): {}", self.invoked.len(), self.invoked.join(" "));
        let _ = writeln!(out, "covered functions: {}", self.covered_functions.len());
        let _ = writeln!(out, "registry: {}", self.registry_fingerprint);
        out
    }
}

/// JSON manifest for `lib`.
pub fn emit_manifest(lib: &ComposedLibrary) -> String {
    report::to_json(&Manifest::from_library(lib))
}
