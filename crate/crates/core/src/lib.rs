//! Per-application thin MPI library composition and frequency-layered stack modeling.
//!
//! The pipeline runs in five stages: [`registry`] describes the function
//! universe and its blocks, [`scanner`] extracts invoked functions from
//! sources, [`composer`] picks the smallest covering set of blocks and emits
//! a manifest plus a forwarding [`shim`], [`layering`] orders functions into
//! stack layers by invocation frequency, and [`stacksim`] compares the
//! resulting stacks under a linear cost model.

pub mod cli;
pub mod composer;
pub mod error;
pub mod layering;
pub mod registry;
pub mod report;
pub mod scanner;
pub mod shim;
pub mod stacksim;

pub use composer::{emit_manifest, minimal_cover, ComposedLibrary, CoverOptions, Manifest, Strategy};
pub use error::{Error, Result};
pub use layering::{
    assign_layers, average_layer_number, build_profile, parse_trace, AssignmentReport, FrequencyProfile,
    LayerAssignment, Policy, ProfileInput, Trace, Weighting,
};
pub use registry::{default_registry, load_registry, validate_blocks, Block, Mode, Registry};
pub use report::Format;
pub use scanner::{scan_corpus, scan_source, scan_text, strip_noise, ScanOptions, UsageSet};
pub use shim::{emit_shim, Shim, ShimOptions, ShimScope};
pub use stacksim::{
    build_stack, compare_configs, simulate_trace, ComparisonReport, StackKind, StackModel, StackParams,
};
