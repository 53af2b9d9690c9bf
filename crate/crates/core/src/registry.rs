//! Catalog of MPI functions and its decomposition into functional blocks.
//!
//! A registry is loaded from a JSON document, validated once, and is
//! immutable afterwards. Block granularity lives entirely in the data; the
//! default registry groups functions by MPI standard chapter.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report;

/// Default registry, grouped by MPI standard chapter.
pub const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.json");

/// Protocol attribute weights keyed by function name, then attribute name.
pub type AttributeMap = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Blocks are pairwise disjoint.
    #[default]
    Partition,
    /// Blocks may share functions; only coverage is required.
    Overlap,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseSensitivity {
    #[default]
    Sensitive,
    Insensitive,
}

impl CaseSensitivity {
    pub fn normalize<'a>(&self, name: &'a str) -> Cow<'a, str> {
        match self {
            CaseSensitivity::Sensitive => Cow::Borrowed(name),
            CaseSensitivity::Insensitive => Cow::Owned(name.to_ascii_lowercase()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub id: String,
    pub label: String,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionRecord {
    pub name: String,
    /// First block (in document order) listing this function.
    pub block_id: String,
    pub attributes: BTreeMap<String, f64>,
}

impl FunctionRecord {
    /// Sum of all attribute weights.
    pub fn attribute_cost(&self) -> f64 {
        self.attributes.values().sum()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDoc {
    mode: Mode,
    #[serde(default)]
    case_sensitivity: CaseSensitivity,
    blocks: Vec<Block>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: AttributeMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    EmptyRegistry,
    InvalidBlockId,
    DuplicateBlockId,
    EmptyBlock,
    InvalidName,
    DuplicateMember,
    DuplicateMembership,
    DuplicateName,
    UnknownAttributeTarget,
    InvalidAttributeWeight,
}

impl DiagnosticKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticKind::EmptyRegistry => "empty registry",
            DiagnosticKind::InvalidBlockId => "invalid block id",
            DiagnosticKind::DuplicateBlockId => "duplicate block id",
            DiagnosticKind::EmptyBlock => "empty block",
            DiagnosticKind::InvalidName => "invalid function name",
            DiagnosticKind::DuplicateMember => "duplicate member",
            DiagnosticKind::DuplicateMembership => "duplicate membership",
            DiagnosticKind::DuplicateName => "duplicate name",
            DiagnosticKind::UnknownAttributeTarget => "unknown attribute target",
            DiagnosticKind::InvalidAttributeWeight => "invalid attribute weight",
        }
    }
}

/// One registry invariant violation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub function: Option<String>,
    pub blocks: Vec<String>,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, function: Option<&str>, blocks: &[&str]) -> Self {
        Diagnostic {
            kind,
            function: function.map(str::to_owned),
            blocks: blocks.iter().map(|b| (*b).to_owned()).collect(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.as_str())?;
        if let Some(function) = &self.function {
            write!(f, ": {function}")?;
        }
        if !self.blocks.is_empty() {
            write!(f, " (blocks: {})", self.blocks.join(", "))?;
        }
        Ok(())
    }
}

/// Validated (or, via [`Registry::from_parts`], candidate) function catalog.
#[derive(Clone, Debug)]
pub struct Registry {
    mode: Mode,
    case_sensitivity: CaseSensitivity,
    blocks: Vec<Block>,
    attributes: AttributeMap,
    functions: Vec<FunctionRecord>,
    index: HashMap<String, usize>,
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.case_sensitivity == other.case_sensitivity
            && self.blocks == other.blocks
            && self.attributes == other.attributes
    }
}

/// Parses and validates a registry document.
pub fn load_registry(document: &str) -> Result<Registry> {
    let doc: RegistryDoc = serde_json::from_str(document)?;
    let registry = Registry::from_parts(doc.mode, doc.case_sensitivity, doc.blocks, doc.attributes);
    let diagnostics = validate_blocks(&registry);
    if diagnostics.is_empty() {
        Ok(registry)
    } else {
        Err(Error::Validation(diagnostics))
    }
}

/// Loads the bundled default registry.
pub fn default_registry() -> Registry {
    load_registry(DEFAULT_REGISTRY).expect("bundled registry is valid")
}

/// Checks every registry invariant; an empty result means the registry is legal.
pub fn validate_blocks(registry: &Registry) -> Vec<Diagnostic> {
    use DiagnosticKind::*;

    let mut diags = Vec::new();
    let case = registry.case_sensitivity;

    if registry.blocks.is_empty() {
        diags.push(Diagnostic::new(EmptyRegistry, None, &[]));
    }

    let mut seen_ids: HashMap<&str, ()> = HashMap::new();
    // normalized name -> (first spelling, blocks listing it)
    let mut membership: BTreeMap<String, (&str, Vec<&str>)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();

    for block in &registry.blocks {
        if block.id.trim().is_empty() {
            diags.push(Diagnostic::new(InvalidBlockId, None, &[&block.id]));
        } else if seen_ids.insert(&block.id, ()).is_some() {
            diags.push(Diagnostic::new(DuplicateBlockId, None, &[&block.id]));
        }
        if block.members.is_empty() {
            diags.push(Diagnostic::new(EmptyBlock, None, &[&block.id]));
        }

        let mut local: HashMap<Cow<'_, str>, ()> = HashMap::new();
        for member in &block.members {
            if !is_mpi_name(member) {
                diags.push(Diagnostic::new(InvalidName, Some(member), &[&block.id]));
            }
            let key = case.normalize(member);
            if local.insert(key.clone(), ()).is_some() {
                diags.push(Diagnostic::new(DuplicateMember, Some(member), &[&block.id]));
                continue;
            }
            match membership.get_mut(key.as_ref()) {
                Some((first, blocks)) => {
                    if *first != member.as_str() {
                        diags.push(Diagnostic::new(DuplicateName, Some(member), &[first]));
                    }
                    blocks.push(&block.id);
                }
                None => {
                    order.push(key.to_string());
                    membership.insert(key.into_owned(), (member, vec![&block.id]));
                }
            }
        }
    }

    if registry.mode == Mode::Partition {
        for key in &order {
            let (name, blocks) = &membership[key];
            if blocks.len() > 1 {
                diags.push(Diagnostic::new(DuplicateMembership, Some(name), blocks));
            }
        }
    }

    for (function, attrs) in &registry.attributes {
        if !membership.contains_key(case.normalize(function).as_ref()) {
            diags.push(Diagnostic::new(UnknownAttributeTarget, Some(function), &[]));
        }
        for weight in attrs.values() {
            if !weight.is_finite() || *weight < 0.0 {
                diags.push(Diagnostic::new(InvalidAttributeWeight, Some(function), &[]));
            }
        }
    }

    diags
}

/// `MPI_` followed by one or more ASCII alphanumerics or underscores.
pub fn is_mpi_name(name: &str) -> bool {
    name.strip_prefix("MPI_")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'))
}

impl Registry {
    /// Builds a registry without validating it. Use [`validate_blocks`] to check it.
    pub fn from_parts(
        mode: Mode,
        case_sensitivity: CaseSensitivity,
        blocks: Vec<Block>,
        attributes: AttributeMap,
    ) -> Self {
        let mut functions: Vec<FunctionRecord> = Vec::new();
        let mut index = HashMap::new();
        for block in &blocks {
            for member in &block.members {
                let key = case_sensitivity.normalize(member).into_owned();
                index.entry(key).or_insert_with(|| {
                    functions.push(FunctionRecord {
                        name: member.clone(),
                        block_id: block.id.clone(),
                        attributes: BTreeMap::new(),
                    });
                    functions.len() - 1
                });
            }
        }
        for (function, attrs) in &attributes {
            let key = case_sensitivity.normalize(function);
            if let Some(&i) = index.get(key.as_ref()) {
                functions[i]
                    .attributes
                    .extend(attrs.iter().map(|(k, v)| (k.clone(), *v)));
            }
        }
        Registry {
            mode,
            case_sensitivity,
            blocks,
            attributes,
            functions,
            index,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn case_sensitivity(&self) -> CaseSensitivity {
        self.case_sensitivity
    }

    /// The block family F_1..F_n, in document order.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    /// Every distinct function, in order of first appearance.
    pub fn functions(&self) -> &[FunctionRecord] {
        &self.functions
    }

    pub fn attributes(&self) -> &AttributeMap {
        &self.attributes
    }

    /// Resolves an identifier under the registry's case rule.
    pub fn lookup(&self, identifier: &str) -> Option<&FunctionRecord> {
        let key = self.case_sensitivity.normalize(identifier);
        self.index.get(key.as_ref()).map(|&i| &self.functions[i])
    }

    pub fn contains(&self, identifier: &str) -> bool {
        self.lookup(identifier).is_some()
    }

    /// Same catalog under a different case rule, revalidated.
    pub fn with_case_sensitivity(&self, case_sensitivity: CaseSensitivity) -> Result<Registry> {
        if case_sensitivity == self.case_sensitivity {
            return Ok(self.clone());
        }
        let registry = Registry::from_parts(
            self.mode,
            case_sensitivity,
            self.blocks.clone(),
            self.attributes.clone(),
        );
        let diags = validate_blocks(&registry);
        if diags.is_empty() {
            Ok(registry)
        } else {
            Err(Error::Validation(diags))
        }
    }

    /// Canonical document form; loading it yields an equal registry.
    pub fn to_document(&self) -> String {
        let doc = RegistryDoc {
            mode: self.mode,
            case_sensitivity: self.case_sensitivity,
            blocks: self.blocks.clone(),
            attributes: self.attributes.clone(),
        };
        report::to_json(&doc)
    }

    pub fn fingerprint(&self) -> String {
        report::fingerprint(self.to_document().as_bytes())
    }
}
