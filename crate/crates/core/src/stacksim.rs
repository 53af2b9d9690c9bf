//! Count-based cost model for MPI stack architectures.
//!
//! Each call of `f` costs `depth[f] * layer_cost + attr_costs[f]`. Three
//! architectures are modelled: a conventional stack where every function
//! traverses the same depth, a frequency-layered stack, and dedicated
//! per-function protocols that traverse a single layer but may carry
//! attribute overheads such as fault tolerance or energy management.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layering::LayerAssignment;
use crate::registry::{AttributeMap, Registry};
use crate::report::{self, Render};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackKind {
    Conventional,
    Layered,
    PerFunctionProtocol,
}

impl fmt::Display for StackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StackKind::Conventional => "conventional",
            StackKind::Layered => "layered",
            StackKind::PerFunctionProtocol => "per_function_protocol",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StackParams {
    /// Uniform depth D.
    Depth(u32),
    Layers(LayerAssignment),
    /// Extra attribute weights, merged over the registry's own.
    Attributes(AttributeMap),
}

impl StackParams {
    fn describe(&self) -> &'static str {
        match self {
            StackParams::Depth(_) => "a uniform depth",
            StackParams::Layers(_) => "a layer assignment",
            StackParams::Attributes(_) => "protocol attributes",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackModel {
    pub name: String,
    pub kind: StackKind,
    pub depth: BTreeMap<String, u32>,
    pub layer_cost: f64,
    pub attr_costs: BTreeMap<String, f64>,
}

impl StackModel {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn unit_cost(&self, function: &str) -> Option<f64> {
        let depth = *self.depth.get(function)?;
        let attr = self.attr_costs.get(function).copied().unwrap_or(0.0);
        Some(depth as f64 * self.layer_cost + attr)
    }

    pub fn fingerprint(&self) -> String {
        report::fingerprint(report::to_json(self).as_bytes())
    }
}

pub fn build_stack(kind: StackKind, params: StackParams, layer_cost: f64, registry: &Registry) -> Result<StackModel> {
    if !(layer_cost.is_finite() && layer_cost > 0.0) {
        return Err(Error::StackConfig(format!(
            "layer_cost must be positive, got {layer_cost}"
        )));
    }
    let all = || registry.functions().iter().map(|f| f.name.clone());
    let mut attr_costs = BTreeMap::new();

    let depth: BTreeMap<String, u32> = match (kind, params) {
        (StackKind::Conventional, StackParams::Depth(d)) => {
            if d == 0 {
                return Err(Error::StackConfig("conventional depth must be at least 1".to_owned()));
            }
            all().map(|f| (f, d)).collect()
        }
        (StackKind::Layered, StackParams::Layers(assignment)) => {
            if let Some((f, _)) = assignment.layers.iter().find(|(_, &l)| l == 0) {
                return Err(Error::StackConfig(format!("`{f}` has layer 0")));
            }
            let mut depth = assignment.layers;
            for f in all() {
                depth.entry(f).or_insert(assignment.num_layers);
            }
            depth
        }
        (StackKind::PerFunctionProtocol, StackParams::Attributes(extra)) => {
            let mut merged: BTreeMap<String, BTreeMap<String, f64>> = registry
                .functions()
                .iter()
                .filter(|f| !f.attributes.is_empty())
                .map(|f| (f.name.clone(), f.attributes.clone()))
                .collect();
            for (function, attrs) in extra {
                let record = registry
                    .lookup(&function)
                    .ok_or_else(|| Error::UnknownFunction(function.clone()))?;
                merged.entry(record.name.clone()).or_default().extend(attrs);
            }
            for (function, attrs) in merged {
                if let Some((name, w)) = attrs.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
                    return Err(Error::StackConfig(format!(
                        "attribute `{name}` of `{function}` has invalid weight {w}"
                    )));
                }
                attr_costs.insert(function, attrs.values().sum());
            }
            all().map(|f| (f, 1)).collect()
        }
        (kind, params) => {
            return Err(Error::StackConfig(format!(
                "{kind} stack cannot be built from {}",
                params.describe()
            )));
        }
    };

    Ok(StackModel {
        name: kind.to_string(),
        kind,
        depth,
        layer_cost,
        attr_costs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCostReport {
    pub model: String,
    pub kind: StackKind,
    pub total_cost: f64,
    pub per_function_cost: BTreeMap<String, f64>,
    pub events: u64,
    /// 0 when the trace is empty; see `mean_defined`.
    pub mean_cost_per_call: f64,
    pub mean_defined: bool,
}

/// Replays invocation counts through a stack model.
pub fn simulate_trace(trace: &BTreeMap<String, u64>, model: &StackModel) -> Result<TraceCostReport> {
    let mut per_function_cost = BTreeMap::new();
    let mut events: u64 = 0;
    for (name, &count) in trace {
        let unit = model
            .unit_cost(name)
            .ok_or_else(|| Error::UnknownFunction(name.clone()))?;
        per_function_cost.insert(name.clone(), count as f64 * unit);
        events = events
            .checked_add(count)
            .ok_or_else(|| Error::InvalidParameter("event count overflows".to_owned()))?;
    }
    let total_cost: f64 = per_function_cost.values().sum();
    let (mean_cost_per_call, mean_defined) = if events == 0 {
        (0.0, false)
    } else {
        (total_cost / events as f64, true)
    };
    Ok(TraceCostReport {
        model: model.name.clone(),
        kind: model.kind,
        total_cost,
        per_function_cost,
        events,
        mean_cost_per_call,
        mean_defined,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub kind: StackKind,
    pub fingerprint: String,
    pub layer_cost: f64,
    pub report: TraceCostReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRatio {
    pub numerator: String,
    pub denominator: String,
    /// `None` when the denominator cost is zero.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub trace_fingerprint: String,
    pub models: Vec<ModelResult>,
    /// total(i) / total(j) for every i < j, in model order.
    pub ratios: Vec<CostRatio>,
}

impl ComparisonReport {
    pub fn ratio(&self, numerator: &str, denominator: &str) -> Option<f64> {
        self.ratios
            .iter()
            .find(|r| r.numerator == numerator && r.denominator == denominator)
            .and_then(|r| r.ratio)
    }
}

/// Simulates one trace on every model; models keep the given order.
pub fn compare_configs(trace: &BTreeMap<String, u64>, models: &[StackModel]) -> Result<ComparisonReport> {
    if models.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "comparison needs at least 2 models, got {}",
            models.len()
        )));
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut results = Vec::with_capacity(models.len());
    for model in models {
        let n = seen.entry(&model.name).or_default();
        *n += 1;
        let name = if *n == 1 {
            model.name.clone()
        } else {
            format!("{}-{n}", model.name)
        };
        let mut report = simulate_trace(trace, model)?;
        report.model = name.clone();
        results.push(ModelResult {
            name,
            kind: model.kind,
            fingerprint: model.fingerprint(),
            layer_cost: model.layer_cost,
            report,
        });
    }

    let mut ratios = Vec::new();
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            let denom = b.report.total_cost;
            ratios.push(CostRatio {
                numerator: a.name.clone(),
                denominator: b.name.clone(),
                ratio: (denom != 0.0).then(|| a.report.total_cost / denom),
            });
        }
    }

    Ok(ComparisonReport {
        trace_fingerprint: report::fingerprint(report::to_json(trace).as_bytes()),
        models: results,
        ratios,
    })
}

impl Render for ComparisonReport {
    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "trace: {}", self.trace_fingerprint);
        for m in &self.models {
            let mean = if m.report.mean_defined {
                format!("{:.6}", m.report.mean_cost_per_call)
            } else {
                "n/a".to_owned()
            };
            let _ = writeln!(
                out,
                "{:<24} {:<22} total {:>16.3}  events {:>10}  mean/call {}",
                m.name,
                m.kind.to_string(),
                m.report.total_cost,
                m.report.events,
                mean
            );
        }
        for r in &self.ratios {
            let value = r.ratio.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.6}"));
            let _ = writeln!(out, "ratio {} / {} = {}", r.numerator, r.denominator, value);
        }
        out
    }
}

fn default_layer_cost() -> f64 {
    1.0
}

/// Model configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: StackKind,
    #[serde(default, alias = "D", skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default = "default_layer_cost")]
    pub layer_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<AttributeMap>,
}

impl ModelConfig {
    /// Builds the model; layered configs take their depths from `assignment`.
    pub fn build(&self, registry: &Registry, assignment: Option<&LayerAssignment>) -> Result<StackModel> {
        let mismatch = |what: &str| Error::StackConfig(format!("{} stack does not take {what}", self.kind));
        let params = match self.kind {
            StackKind::Conventional => {
                if self.attributes.is_some() {
                    return Err(mismatch("attributes"));
                }
                StackParams::Depth(
                    self.depth
                        .ok_or_else(|| Error::StackConfig("conventional stack requires a depth".to_owned()))?,
                )
            }
            StackKind::Layered => {
                if self.depth.is_some() {
                    return Err(mismatch("a depth"));
                }
                if self.attributes.is_some() {
                    return Err(mismatch("attributes"));
                }
                StackParams::Layers(
                    assignment
                        .cloned()
                        .ok_or_else(|| Error::StackConfig("layered stack requires a layer assignment".to_owned()))?,
                )
            }
            StackKind::PerFunctionProtocol => {
                if self.depth.is_some() {
                    return Err(mismatch("a depth"));
                }
                StackParams::Attributes(self.attributes.clone().unwrap_or_default())
            }
        };
        let model = build_stack(self.kind, params, self.layer_cost, registry)?;
        Ok(match &self.name {
            Some(name) => model.named(name.clone()),
            None => model,
        })
    }
}

/// Accepts a single config object or an array of them.
pub fn parse_model_configs(text: &str) -> Result<Vec<ModelConfig>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    Ok(match value {
        serde_json::Value::Array(_) => serde_json::from_value(value)?,
        other => vec![serde_json::from_value(other)?],
    })
}
