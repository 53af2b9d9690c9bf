//! `thinmpi` command-line interface.
//!
//! Exit status: 0 on success, 1 on domain errors (validation, coverage,
//! unknown functions), 2 on usage errors. Every failure prints one
//! `thinmpi: error[<kind>]: <message>` line on stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::composer::{emit_manifest, minimal_cover, CoverOptions, Manifest, Strategy};
use crate::error::Error;
use crate::layering::{
    assign_layers, build_profile, parse_trace, AssignmentReport, FrequencyProfile, LayerAssignment, Policy,
    ProfileInput, Weighting, DEFAULT_LAYERS,
};
use crate::registry::{self, CaseSensitivity, Registry};
use crate::report::{to_json, Format, Render};
use crate::scanner::{scan_corpus, Dialect, ScanOptions, UsageSet};
use crate::shim::{emit_shim, ShimOptions, ShimScope};
use crate::stacksim::{compare_configs, parse_model_configs, ModelConfig, StackKind, StackModel};

/// Environment variable naming the registry used when `--registry` is absent.
pub const REGISTRY_ENV: &str = "THINMPI_REGISTRY";

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "thinmpi", version)]
#[command(about = "Compose per-application thin MPI libraries and model frequency-layered stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RegistryArgs {
    /// Registry document, or `default` for the bundled one. Falls back to $THINMPI_REGISTRY.
    #[arg(long)]
    registry: Option<String>,

    /// Match function names case-insensitively (Fortran sources).
    #[arg(long)]
    case_insensitive: bool,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract the MPI functions invoked by source files
    Scan {
        #[arg(required = true)]
        files: Vec<PathBuf>,

        /// Application label; defaults to the first file's stem.
        #[arg(long)]
        app_id: Option<String>,

        /// Call prefixes mapped onto `MPI_` names (e.g. PMPI_). `MPI_` is always included.
        #[arg(long = "prefix")]
        prefixes: Vec<String>,

        #[arg(long, value_enum, default_value_t = Dialect::C)]
        dialect: Dialect,

        #[command(flatten)]
        registry: RegistryArgs,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Compute the minimal block cover of a usage document; emit manifest and shim
    Compose {
        usage: PathBuf,

        #[arg(long, value_enum, default_value_t = Strategy::Exact)]
        strategy: Strategy,

        /// Manifest output; stdout when neither this nor --out-dir is given.
        #[arg(long)]
        manifest: Option<PathBuf>,

        /// Shim source output.
        #[arg(long)]
        shim: Option<PathBuf>,

        /// Write manifest.<ext> and shim.c into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,

        /// Emit wrappers for invoked functions only.
        #[arg(long)]
        invoked_only: bool,

        /// Ignore unknown MPI_ identifiers instead of failing.
        #[arg(long)]
        ignore_unknown: bool,

        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,

        #[command(flatten)]
        registry: RegistryArgs,
    },

    /// Build a global frequency profile from traces (.csv) and usage documents (.json)
    Profile {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        #[arg(long, value_enum, default_value_t = Weighting::Sum)]
        weighting: Weighting,

        #[command(flatten)]
        registry: RegistryArgs,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Assign stack layers inversely to invocation frequency
    Layers {
        profile: PathBuf,

        /// Number of layers.
        #[arg(long = "L", default_value_t = DEFAULT_LAYERS)]
        num_layers: u32,

        #[arg(long, value_enum, default_value_t = Policy::EqualCount)]
        policy: Policy,

        #[command(flatten)]
        registry: RegistryArgs,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Compare stack configurations on a trace
    Simulate {
        /// Trace (.csv) or profile (.json) to replay.
        #[arg(long)]
        trace: PathBuf,

        /// Model configuration documents; the three standard stacks when omitted.
        #[arg(long = "model")]
        models: Vec<PathBuf>,

        /// Assignment document for layered models; derived from the trace when omitted.
        #[arg(long)]
        assignment: Option<PathBuf>,

        #[arg(long = "L", default_value_t = DEFAULT_LAYERS)]
        num_layers: u32,

        #[arg(long, value_enum, default_value_t = Policy::EqualCount)]
        policy: Policy,

        /// Depth of the conventional stack.
        #[arg(long, default_value_t = DEFAULT_LAYERS)]
        depth: u32,

        #[arg(long, default_value_t = 1.0)]
        layer_cost: f64,

        #[command(flatten)]
        registry: RegistryArgs,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Run scan, compose, profile, layers and simulate for one application
    Pipeline {
        #[arg(required = true)]
        files: Vec<PathBuf>,

        /// Corpus traces for the global profile; the application's own call sites when omitted.
        #[arg(long, num_args = 1..)]
        traces: Vec<PathBuf>,

        #[arg(long)]
        app_id: Option<String>,

        #[arg(long = "L", default_value_t = DEFAULT_LAYERS)]
        num_layers: u32,

        #[arg(long, value_enum, default_value_t = Policy::EqualCount)]
        policy: Policy,

        #[arg(long, value_enum, default_value_t = Strategy::Exact)]
        strategy: Strategy,

        #[arg(long, value_enum, default_value_t = Weighting::Sum)]
        weighting: Weighting,

        #[arg(long, default_value_t = DEFAULT_LAYERS)]
        depth: u32,

        #[arg(long, default_value_t = 1.0)]
        layer_cost: f64,

        #[arg(long)]
        invoked_only: bool,

        #[arg(long)]
        ignore_unknown: bool,

        #[arg(long, default_value = "thinmpi-out")]
        out_dir: PathBuf,

        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,

        #[command(flatten)]
        registry: RegistryArgs,
    },
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Validated settings shared by the pipeline stages.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub registry: Option<String>,
    pub case_insensitive: bool,
    pub strategy: Strategy,
    pub weighting: Weighting,
    pub num_layers: u32,
    pub policy: Policy,
    pub conventional_depth: u32,
    pub layer_cost: f64,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl RunConfig {
    fn check(&self) -> CliResult<()> {
        if self.num_layers == 0 {
            return Err(Failure::Usage("--L must be at least 1".into()));
        }
        if self.conventional_depth == 0 {
            return Err(Failure::Usage("--depth must be at least 1".into()));
        }
        check_layer_cost(self.layer_cost)
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("thinmpi: error[usage]: {}", first.trim_start_matches("error: "));
            eprint!("{rendered}");
            return EXIT_USAGE;
        }
    };

    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("thinmpi: error[usage]: {}", one_line(&msg));
            EXIT_USAGE
        }
        Err(Failure::Domain(err)) => {
            eprintln!("thinmpi: error[{}]: {}", err.kind(), one_line(&err.to_string()));
            EXIT_DOMAIN
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn warn(msg: &str) {
    eprintln!("thinmpi: warning: {}", one_line(msg));
}

fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> CliResult<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::Usage(format!("input file not found: {}", p.display())));
        }
    }
    Ok(())
}

fn check_layer_cost(layer_cost: f64) -> CliResult<()> {
    if layer_cost.is_finite() && layer_cost > 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--layer-cost must be positive, got {layer_cost}"
        )))
    }
}

fn read(path: &Path) -> CliResult<String> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(String::from_utf8_lossy(&raw).into_owned())
}

fn write(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e).into())
}

fn emit(out: Option<&Path>, content: &str) -> CliResult<()> {
    match out {
        Some(path) => write(path, content),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e).into())
        }
    }
}

fn load_registry(args: &RegistryArgs) -> CliResult<Registry> {
    load_registry_from(args.registry.as_deref(), args.case_insensitive)
}

fn load_registry_from(flag: Option<&str>, case_insensitive: bool) -> CliResult<Registry> {
    let env = std::env::var(REGISTRY_ENV).ok().filter(|v| !v.is_empty());
    let registry = match flag.map(str::to_owned).or(env) {
        None => registry::default_registry(),
        Some(choice) if choice == "default" => registry::default_registry(),
        Some(choice) => {
            let path = PathBuf::from(&choice);
            check_inputs([&path])?;
            registry::load_registry(&read(&path)?)?
        }
    };
    if case_insensitive {
        Ok(registry.with_case_sensitivity(CaseSensitivity::Insensitive)?)
    } else {
        Ok(registry)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "app".to_owned())
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn run(command: Command) -> CliResult<i32> {
    match command {
        Command::Scan {
            files,
            app_id,
            prefixes,
            dialect,
            registry,
            output,
        } => {
            check_inputs(&files)?;
            let registry = load_registry(&registry)?;
            let (usage, failed) = scan_files(&files, app_id, prefixes, dialect, &registry);
            emit(output.out.as_deref(), &usage.render(output.format))?;
            Ok(if failed { EXIT_DOMAIN } else { EXIT_OK })
        }

        Command::Compose {
            usage,
            strategy,
            manifest,
            shim,
            out_dir,
            invoked_only,
            ignore_unknown,
            format,
            registry,
        } => {
            check_inputs([&usage])?;
            let registry = load_registry(&registry)?;
            let usage: UsageSet = serde_json::from_str(&read(&usage)?).map_err(Error::from)?;
            let lib = minimal_cover(
                &usage,
                &registry,
                CoverOptions {
                    strategy,
                    ignore_unknown,
                },
            )?;
            let manifest_doc = match format {
                Format::Json => emit_manifest(&lib),
                Format::Text => Manifest::from_library(&lib).render_text(),
            };
            let manifest_path = manifest.or_else(|| {
                out_dir
                    .as_ref()
                    .map(|d| d.join(format!("manifest.{}", format.extension())))
            });
            let shim_path = shim.or_else(|| out_dir.as_ref().map(|d| d.join("shim.c")));
            emit(manifest_path.as_deref(), &manifest_doc)?;
            if let Some(path) = shim_path {
                let scope = if invoked_only {
                    ShimScope::Invoked
                } else {
                    ShimScope::Covered
                };
                let shim = emit_shim(&lib, &ShimOptions { scope });
                for w in &shim.warnings {
                    warn(w);
                }
                write(&path, &shim.source)?;
            }
            Ok(EXIT_OK)
        }

        Command::Profile {
            inputs,
            weighting,
            registry,
            output,
        } => {
            check_inputs(&inputs)?;
            let registry = load_registry(&registry)?;
            let profile = profile_from_files(&inputs, &registry, weighting)?;
            emit(output.out.as_deref(), &profile.render(output.format))?;
            Ok(EXIT_OK)
        }

        Command::Layers {
            profile,
            num_layers,
            policy,
            registry,
            output,
        } => {
            if num_layers == 0 {
                return Err(Failure::Usage("--L must be at least 1".into()));
            }
            check_inputs([&profile])?;
            let registry = load_registry(&registry)?;
            let profile: FrequencyProfile = serde_json::from_str(&read(&profile)?).map_err(Error::from)?;
            let profile = profile.validated(&registry)?;
            let assignment = assign_layers(&profile, num_layers, policy, Some(&registry))?;
            let report = AssignmentReport::new(&assignment, &profile)?;
            emit(output.out.as_deref(), &report.render(output.format))?;
            Ok(EXIT_OK)
        }

        Command::Simulate {
            trace,
            models,
            assignment,
            num_layers,
            policy,
            depth,
            layer_cost,
            registry,
            output,
        } => {
            if num_layers == 0 || depth == 0 {
                return Err(Failure::Usage("--L and --depth must be at least 1".into()));
            }
            check_layer_cost(layer_cost)?;
            check_inputs(std::iter::once(&trace).chain(&models).chain(&assignment))?;
            let registry = load_registry(&registry)?;
            let profile = profile_from_files(std::slice::from_ref(&trace), &registry, Weighting::Sum)?;

            let configs = if models.is_empty() {
                standard_configs(depth, layer_cost)
            } else {
                let mut configs = Vec::new();
                for path in &models {
                    configs.extend(parse_model_configs(&read(path)?)?);
                }
                configs
            };
            let assignment = match assignment {
                Some(path) => {
                    let report: AssignmentReport = serde_json::from_str(&read(&path)?).map_err(Error::from)?;
                    report.assignment()
                }
                None => assign_layers(&profile, num_layers, policy, Some(&registry))?,
            };
            let models = build_models(&configs, &registry, &assignment)?;
            let report = compare_configs(&profile.counts, &models)?;
            emit(output.out.as_deref(), &report.render(output.format))?;
            Ok(EXIT_OK)
        }

        Command::Pipeline {
            files,
            traces,
            app_id,
            num_layers,
            policy,
            strategy,
            weighting,
            depth,
            layer_cost,
            invoked_only,
            ignore_unknown,
            out_dir,
            format,
            registry,
        } => {
            let config = RunConfig {
                registry: registry.registry,
                case_insensitive: registry.case_insensitive,
                strategy,
                weighting,
                num_layers,
                policy,
                conventional_depth: depth,
                layer_cost,
                out_dir,
                format,
            };
            config.check()?;
            check_inputs(files.iter().chain(&traces))?;
            pipeline(&config, &files, &traces, app_id, invoked_only, ignore_unknown)
        }
    }
}

fn scan_files(
    files: &[PathBuf],
    app_id: Option<String>,
    prefixes: Vec<String>,
    dialect: Dialect,
    registry: &Registry,
) -> (UsageSet, bool) {
    let mut all_prefixes = vec!["MPI_".to_owned()];
    for p in prefixes {
        if !all_prefixes.contains(&p) {
            all_prefixes.push(p);
        }
    }
    let options = ScanOptions {
        app_id: app_id.unwrap_or_else(|| stem(&files[0])),
        prefixes: all_prefixes,
        dialect,
    };
    let corpus = scan_corpus(files, registry, &options);
    let mut failed = false;
    for f in &corpus.files {
        if let Some(err) = &f.error {
            warn(&format!("{}: {err}", f.path));
            failed = true;
        }
    }
    for d in &corpus.merged.diagnostics {
        warn(&format!("{}:{}: {}", d.path, d.line, d.message));
    }
    (corpus.merged, failed)
}

fn profile_from_files(paths: &[PathBuf], registry: &Registry, weighting: Weighting) -> CliResult<FrequencyProfile> {
    let mut inputs = Vec::with_capacity(paths.len());
    for path in paths {
        let text = read(path)?;
        let input = if is_json(path) {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
            if value.get("weighting").is_some() {
                // a previously built profile replays as a single trace
                let profile: FrequencyProfile = serde_json::from_value(value).map_err(Error::from)?;
                ProfileInput::Trace(crate::layering::Trace {
                    app_id: stem(path),
                    counts: profile.counts,
                })
            } else {
                ProfileInput::Usage(serde_json::from_value(value).map_err(Error::from)?)
            }
        } else {
            ProfileInput::Trace(parse_trace(&text, &stem(path))?)
        };
        inputs.push(input);
    }
    Ok(build_profile(&inputs, registry, weighting)?)
}

fn standard_configs(depth: u32, layer_cost: f64) -> Vec<ModelConfig> {
    let config = |kind, depth| ModelConfig {
        name: None,
        kind,
        depth,
        layer_cost,
        attributes: None,
    };
    vec![
        config(StackKind::Conventional, Some(depth)),
        config(StackKind::Layered, None),
        config(StackKind::PerFunctionProtocol, None),
    ]
}

fn build_models(
    configs: &[ModelConfig],
    registry: &Registry,
    assignment: &LayerAssignment,
) -> CliResult<Vec<StackModel>> {
    Ok(configs
        .iter()
        .map(|c| c.build(registry, Some(assignment)))
        .collect::<Result<Vec<_>, _>>()?)
}

#[derive(Serialize)]
struct PipelineSummary {
    app_id: String,
    invoked: usize,
    m: usize,
    selected_blocks: Vec<String>,
    wrappers: usize,
    num_layers: u32,
    average_layer_number: f64,
    conventional_depth: u32,
    total_costs: BTreeMap<String, f64>,
    outputs: Vec<String>,
}

impl Render for PipelineSummary {
    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "application: {} ({} MPI functions)", self.app_id, self.invoked);
        let _ = writeln!(
            out,
            "composed library: m = {} [{}], {} wrappers",
            self.m,
            self.selected_blocks.join(" "),
            self.wrappers
        );
        let _ = writeln!(
            out,
            "average layer number: {:.6} with L = {} (conventional depth {})",
            self.average_layer_number, self.num_layers, self.conventional_depth
        );
        for (name, total) in &self.total_costs {
            let _ = writeln!(out, "total cost {name}: {total:.3}");
        }
        for o in &self.outputs {
            let _ = writeln!(out, "wrote {o}");
        }
        out
    }
}

fn pipeline(
    config: &RunConfig,
    files: &[PathBuf],
    traces: &[PathBuf],
    app_id: Option<String>,
    invoked_only: bool,
    ignore_unknown: bool,
) -> CliResult<i32> {
    let registry = load_registry_from(config.registry.as_deref(), config.case_insensitive)?;
    let ext = config.format.extension();
    let dir = &config.out_dir;
    let mut outputs = Vec::new();
    let mut put = |name: String, content: &str| -> CliResult<()> {
        let path = dir.join(&name);
        write(&path, content)?;
        outputs.push(path.display().to_string());
        Ok(())
    };

    let (usage, failed) = scan_files(files, app_id, Vec::new(), Dialect::C, &registry);
    if failed {
        return Err(Failure::Domain(Error::InvalidParameter(
            "some sources could not be read".into(),
        )));
    }
    put(format!("usage.{ext}"), &usage.render(config.format))?;

    let lib = minimal_cover(
        &usage,
        &registry,
        CoverOptions {
            strategy: config.strategy,
            ignore_unknown,
        },
    )?;
    let manifest = Manifest::from_library(&lib);
    put(format!("manifest.{ext}"), &manifest.render(config.format))?;
    let scope = if invoked_only {
        ShimScope::Invoked
    } else {
        ShimScope::Covered
    };
    let shim = emit_shim(&lib, &ShimOptions { scope });
    for w in &shim.warnings {
        warn(w);
    }
    put("shim.c".to_owned(), &shim.source)?;

    let profile = if traces.is_empty() {
        build_profile(&[ProfileInput::Usage(lib.usage.clone())], &registry, config.weighting)?
    } else {
        profile_from_files(traces, &registry, config.weighting)?
    };
    put(format!("profile.{ext}"), &profile.render(config.format))?;

    let assignment = assign_layers(&profile, config.num_layers, config.policy, Some(&registry))?;
    let layers = AssignmentReport::new(&assignment, &profile)?;
    put(format!("layers.{ext}"), &layers.render(config.format))?;

    let models = build_models(
        &standard_configs(config.conventional_depth, config.layer_cost),
        &registry,
        &assignment,
    )?;
    let comparison = compare_configs(&profile.counts, &models)?;
    put(format!("comparison.{ext}"), &comparison.render(config.format))?;

    let summary = PipelineSummary {
        app_id: lib.app_id.clone(),
        invoked: lib.usage.invoked.len(),
        m: lib.m,
        selected_blocks: manifest.selected_blocks.clone(),
        wrappers: shim.wrappers,
        num_layers: config.num_layers,
        average_layer_number: layers.average_layer_number,
        conventional_depth: config.conventional_depth,
        total_costs: comparison
            .models
            .iter()
            .map(|m| (m.name.clone(), m.report.total_cost))
            .collect(),
        outputs,
    };
    emit(
        None,
        &match config.format {
            Format::Json => to_json(&summary),
            Format::Text => summary.render_text(),
        },
    )?;
    Ok(EXIT_OK)
}
