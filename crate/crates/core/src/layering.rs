//! Frequency profiles and frequency-ordered layer assignment.
//!
//! Layer 1 is the lowest (cheapest) layer. Functions are ranked by global
//! invocation count and split into contiguous groups, so a more frequently
//! called function never sits above a less frequently called one.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::report::{self, Render};
use crate::scanner::UsageSet;

/// Scale applied to averaged relative frequencies under per-app normalization.
pub const NORMALIZED_SCALE: f64 = 1e6;

pub const DEFAULT_LAYERS: u32 = 4;

/// Invocation counts for one application, e.g. from a profiler dump.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub app_id: String,
    pub counts: BTreeMap<String, u64>,
}

impl Trace {
    pub fn new<I, S>(app_id: impl Into<String>, counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut trace = Trace {
            app_id: app_id.into(),
            counts: BTreeMap::new(),
        };
        for (name, count) in counts {
            *trace.counts.entry(name.into()).or_default() += count;
        }
        trace
    }
}

/// Parses `function_name,count` lines. Blank lines and `#` comments are
/// skipped; repeated names accumulate.
pub fn parse_trace(text: &str, app_id: &str) -> Result<Trace> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Trace {
            source_name: app_id.to_owned(),
            line: i + 1,
            message,
        };
        let mut fields = line.split(',').map(str::trim);
        let (Some(name), Some(count), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected `function_name,count`, got `{line}`")));
        };
        if name.is_empty() {
            return Err(err("missing function name".to_owned()));
        }
        let count: u64 = count
            .parse()
            .map_err(|_| err(format!("count `{count}` is not a non-negative integer")))?;
        let slot = counts.entry(name.to_owned()).or_default();
        *slot = slot
            .checked_add(count)
            .ok_or_else(|| err(format!("count for `{name}` overflows")))?;
    }
    Ok(Trace {
        app_id: app_id.to_owned(),
        counts,
    })
}

/// One contribution to a frequency profile.
#[derive(Clone, Debug, PartialEq)]
pub enum ProfileInput {
    Trace(Trace),
    /// Counts one invocation per call site.
    Usage(UsageSet),
}

impl From<Trace> for ProfileInput {
    fn from(t: Trace) -> Self {
        ProfileInput::Trace(t)
    }
}

impl From<UsageSet> for ProfileInput {
    fn from(u: UsageSet) -> Self {
        ProfileInput::Usage(u)
    }
}

impl ProfileInput {
    fn app_id(&self) -> &str {
        match self {
            ProfileInput::Trace(t) => &t.app_id,
            ProfileInput::Usage(u) => &u.app_id,
        }
    }

    /// Counts keyed by canonical registry name.
    fn canonical_counts(&self, registry: &Registry) -> Result<BTreeMap<String, u64>> {
        let mut out: BTreeMap<String, u64> = BTreeMap::new();
        let mut add = |name: &str, count: u64| -> Result<()> {
            let record = registry
                .lookup(name)
                .ok_or_else(|| Error::UnknownFunction(name.to_owned()))?;
            let slot = out.entry(record.name.clone()).or_default();
            *slot = slot
                .checked_add(count)
                .ok_or_else(|| Error::InvalidParameter(format!("count for `{name}` overflows")))?;
            Ok(())
        };
        match self {
            ProfileInput::Trace(t) => {
                for (name, &count) in &t.counts {
                    add(name, count)?;
                }
            }
            ProfileInput::Usage(u) => {
                // call sites of unknown identifiers are not profiled
                for site in u.call_sites.iter().filter(|s| u.invoked.contains(&s.function)) {
                    add(&site.function, 1)?;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Element-wise sum of raw counts.
    #[default]
    #[value(name = "sum")]
    Sum,
    /// Every application contributes equally.
    #[value(name = "per_app_normalized")]
    PerAppNormalized,
}

/// Global invocation counts over a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub counts: BTreeMap<String, u64>,
    pub sources: Vec<String>,
    pub weighting: Weighting,
}

impl FrequencyProfile {
    pub fn total(&self) -> u128 {
        self.counts.values().map(|&c| c as u128).sum()
    }

    /// Checks a profile read from disk against the registry; names are canonicalized.
    pub fn validated(mut self, registry: &Registry) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (name, count) in self.counts {
            let record = registry.lookup(&name).ok_or(Error::UnknownFunction(name))?;
            *counts.entry(record.name.clone()).or_insert(0u64) += count;
        }
        self.counts = counts;
        if self.total() == 0 {
            return Err(Error::EmptyProfile("all counts are zero".to_owned()));
        }
        Ok(self)
    }
}

impl Render for FrequencyProfile {
    fn render_text(&self) -> String {
        let mut out = String::new();
        let weighting = match self.weighting {
            Weighting::Sum => "sum",
            Weighting::PerAppNormalized => "per_app_normalized",
        };
        let _ = writeln!(out, "weighting: {weighting}");
        let _ = writeln!(out, "sources: {}", self.sources.join(" "));
        for (name, count) in ranked(&self.counts) {
            let _ = writeln!(out, "{count:>12}  {name}");
        }
        out
    }
}

/// Aggregates traces and usage sets into one global profile.
pub fn build_profile(inputs: &[ProfileInput], registry: &Registry, weighting: Weighting) -> Result<FrequencyProfile> {
    if inputs.is_empty() {
        return Err(Error::EmptyProfile("no inputs".to_owned()));
    }
    let per_input = inputs
        .iter()
        .map(|i| i.canonical_counts(registry))
        .collect::<Result<Vec<_>>>()?;

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    match weighting {
        Weighting::Sum => {
            for input in &per_input {
                for (name, &c) in input {
                    let slot = counts.entry(name.clone()).or_default();
                    *slot = slot
                        .checked_add(c)
                        .ok_or_else(|| Error::InvalidParameter(format!("count for `{name}` overflows")))?;
                }
            }
        }
        Weighting::PerAppNormalized => {
            let mut relative: BTreeMap<&str, f64> = BTreeMap::new();
            let mut contributing = 0usize;
            for input in &per_input {
                let total: u128 = input.values().map(|&c| c as u128).sum();
                for name in input.keys() {
                    relative.entry(name).or_insert(0.0);
                }
                if total == 0 {
                    continue;
                }
                contributing += 1;
                for (name, &c) in input {
                    *relative.get_mut(name.as_str()).expect("inserted") += c as f64 / total as f64;
                }
            }
            let apps = contributing.max(1) as f64;
            for (name, share) in relative {
                counts.insert(name.to_owned(), (share / apps * NORMALIZED_SCALE).round() as u64);
            }
        }
    }

    let profile = FrequencyProfile {
        counts,
        sources: inputs.iter().map(|i| i.app_id().to_owned()).collect(),
        weighting,
    };
    if profile.total() == 0 {
        return Err(Error::EmptyProfile("all counts are zero".to_owned()));
    }
    Ok(profile)
}

/// Functions by count descending, then name ascending.
fn ranked(counts: &BTreeMap<String, u64>) -> Vec<(&str, u64)> {
    let mut order: Vec<(&str, u64)> = counts.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    order
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Groups hold as equal a number of functions as possible.
    #[default]
    #[value(name = "equal_count")]
    EqualCount,
    /// Groups hold as equal a share of the invocation mass as possible.
    #[value(name = "mass_quantile")]
    MassQuantile,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::EqualCount => "equal_count",
            Policy::MassQuantile => "mass_quantile",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerAssignment {
    pub layers: BTreeMap<String, u32>,
    pub num_layers: u32,
    pub policy: Policy,
}

impl LayerAssignment {
    /// Every function at the same depth, i.e. a conventional stack.
    pub fn uniform<'a>(functions: impl IntoIterator<Item = &'a str>, depth: u32) -> Self {
        LayerAssignment {
            layers: functions.into_iter().map(|f| (f.to_owned(), depth)).collect(),
            num_layers: depth,
            policy: Policy::EqualCount,
        }
    }

    pub fn layer(&self, function: &str) -> Option<u32> {
        self.layers.get(function).copied()
    }
}

/// Assigns layers 1..=`num_layers` inversely to invocation frequency.
///
/// Registry functions missing from the profile land on the top layer.
pub fn assign_layers(
    profile: &FrequencyProfile,
    num_layers: u32,
    policy: Policy,
    registry: Option<&Registry>,
) -> Result<LayerAssignment> {
    if num_layers == 0 {
        return Err(Error::InvalidParameter(
            "number of layers must be at least 1".to_owned(),
        ));
    }
    if profile.total() == 0 {
        return Err(Error::EmptyProfile("nothing to rank".to_owned()));
    }

    let order = ranked(&profile.counts);
    let sizes = match policy {
        Policy::EqualCount => equal_count_sizes(order.len(), num_layers as usize),
        Policy::MassQuantile => {
            let counts: Vec<u64> = order.iter().map(|&(_, c)| c).collect();
            mass_quantile_sizes(&counts, num_layers as usize)
        }
    };

    let mut layers = BTreeMap::new();
    let mut rest = order.iter();
    for (k, size) in sizes.into_iter().enumerate() {
        for &(name, _) in rest.by_ref().take(size) {
            layers.insert(name.to_owned(), k as u32 + 1);
        }
    }
    if let Some(registry) = registry {
        for f in registry.functions() {
            layers.entry(f.name.clone()).or_insert(num_layers);
        }
    }
    Ok(LayerAssignment {
        layers,
        num_layers,
        policy,
    })
}

/// Sizes of `groups` contiguous groups over `n` items; earlier groups take the remainder.
fn equal_count_sizes(n: usize, groups: usize) -> Vec<usize> {
    (0..groups).map(|k| n / groups + usize::from(k < n % groups)).collect()
}

/// Cut points chosen so each prefix mass lands as close as possible to
/// its share of the total; the first `min(n, groups)` groups are non-empty.
fn mass_quantile_sizes(counts: &[u64], groups: usize) -> Vec<usize> {
    let n = counts.len();
    let used = n.min(groups);
    let mut prefix = vec![0u128; n + 1];
    for (i, &c) in counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c as u128;
    }
    let total = prefix[n];

    let mut sizes = Vec::with_capacity(groups);
    let mut prev = 0;
    for k in 1..used {
        let lo = prev + 1;
        let hi = n - (used - k);
        let target = k as u128 * total;
        let cut = (lo..=hi)
            .min_by_key(|&e| (prefix[e] * used as u128).abs_diff(target))
            .expect("non-empty range");
        sizes.push(cut - prev);
        prev = cut;
    }
    sizes.push(n - prev);
    sizes.resize(groups, 0);
    sizes
}

/// Frequency-weighted mean layer: sum(count * layer) / sum(count).
pub fn average_layer_number(assignment: &LayerAssignment, profile: &FrequencyProfile) -> Result<f64> {
    let mut weighted: u128 = 0;
    let mut total: u128 = 0;
    for (name, &count) in &profile.counts {
        let layer = assignment
            .layer(name)
            .ok_or_else(|| Error::MissingLayer(name.clone()))?;
        weighted += count as u128 * layer as u128;
        total += count as u128;
    }
    if total == 0 {
        return Err(Error::UndefinedMetric);
    }
    Ok(weighted as f64 / total as f64)
}

/// Assignment document with its average layer number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub num_layers: u32,
    pub policy: Policy,
    /// Rounded to six decimal places.
    pub average_layer_number: f64,
    pub layers: BTreeMap<String, u32>,
}

impl AssignmentReport {
    pub fn new(assignment: &LayerAssignment, profile: &FrequencyProfile) -> Result<Self> {
        Ok(AssignmentReport {
            num_layers: assignment.num_layers,
            policy: assignment.policy,
            average_layer_number: report::round6(average_layer_number(assignment, profile)?),
            layers: assignment.layers.clone(),
        })
    }

    pub fn assignment(&self) -> LayerAssignment {
        LayerAssignment {
            layers: self.layers.clone(),
            num_layers: self.num_layers,
            policy: self.policy,
        }
    }
}

impl Render for AssignmentReport {
    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "layers: {} ({})", self.num_layers, self.policy.as_str());
        let _ = writeln!(out, "average layer number: {:.6}", self.average_layer_number);
        for layer in 1..=self.num_layers {
            let members: Vec<&str> = self
                .layers
                .iter()
                .filter(|(_, &l)| l == layer)
                .map(|(n, _)| n.as_str())
                .collect();
            let _ = writeln!(out, "layer {layer} ({}): {}", members.len(), members.join(" "));
        }
        out
    }
}
