//! C forwarding shim for a composed library.
//!
//! Every wrapper keeps the standard C binding and forwards to an
//! underscore-prefixed backend symbol (`MPI_Send` -> `_MPI_Send`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::composer::{ComposedLibrary, Manifest};

const SIGNATURES: &str = include_str!("../data/signatures.txt");

/// Type stand-ins used when `<mpi.h>` is not available, so the shim
/// compiles on its own.
const PRELUDE: &str = r#"#include <stddef.h>

#if defined(__has_include) && !defined(THINMPI_NO_MPI_H)
#  if __has_include(<mpi.h>)
#    include <mpi.h>
#    define THINMPI_HAVE_MPI_H 1
#  endif
#endif

#ifndef THINMPI_HAVE_MPI_H
typedef int MPI_Comm;
typedef int MPI_Datatype;
typedef int MPI_Op;
typedef int MPI_Request;
typedef int MPI_Group;
typedef int MPI_Win;
typedef int MPI_Info;
typedef int MPI_Errhandler;
typedef int MPI_Message;
typedef int MPI_Fint;
typedef ptrdiff_t MPI_Aint;
typedef long long MPI_Offset;
typedef long long MPI_Count;
typedef struct thinmpi_file *MPI_File;
typedef struct MPI_Status {
    int MPI_SOURCE;
    int MPI_TAG;
    int MPI_ERROR;
    int count_lo;
    int count_hi_and_cancelled;
} MPI_Status;
typedef struct thinmpi_t_enum *MPI_T_enum;
typedef struct thinmpi_t_cvar *MPI_T_cvar_handle;
typedef struct thinmpi_t_pvar *MPI_T_pvar_handle;
typedef struct thinmpi_t_session *MPI_T_pvar_session;
typedef void (MPI_User_function)(void *invec, void *inoutvec, int *len, MPI_Datatype *datatype);
typedef int (MPI_Comm_copy_attr_function)(MPI_Comm oldcomm, int comm_keyval, void *extra_state,
                                          void *attribute_val_in, void *attribute_val_out, int *flag);
typedef int (MPI_Comm_delete_attr_function)(MPI_Comm comm, int comm_keyval, void *attribute_val,
                                            void *extra_state);
#endif
"#;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    /// Full declaration, e.g. `const void *buf`.
    pub decl: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    pub ret: String,
    pub name: String,
    pub params: Vec<Param>,
    pub variadic: bool,
}

impl Signature {
    fn param_list(&self) -> String {
        let mut decls: Vec<&str> = self.params.iter().map(|p| p.decl.as_str()).collect();
        if self.variadic {
            decls.push("...");
        }
        if decls.is_empty() {
            "void".to_owned()
        } else {
            decls.join(", ")
        }
    }
}

/// Parses `ret NAME(params);`. Function-pointer parameters must go through a typedef.
pub fn parse_prototype(line: &str) -> Option<Signature> {
    let line = line.trim().trim_end_matches(';').trim();
    let open = line.find('(')?;
    let close = line.rfind(')')?;
    let head = line[..open].trim();
    let split = head.rfind(|c: char| c.is_whitespace() || c == '*')?;
    let name = head[split + 1..].to_owned();
    let ret = head[..=split].trim().to_owned();
    if name.is_empty() || ret.is_empty() {
        return None;
    }

    let mut params = Vec::new();
    let mut variadic = false;
    let inner = line[open + 1..close].trim();
    if !inner.is_empty() && inner != "void" {
        for decl in inner.split(',').map(str::trim) {
            if decl == "..." {
                variadic = true;
                continue;
            }
            let bare = decl.trim_end_matches(|c: char| c == ']' || c == '[' || c.is_whitespace());
            let start = bare
                .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .map_or(0, |i| i + 1);
            let pname = &bare[start..];
            if pname.is_empty() {
                return None;
            }
            params.push(Param {
                decl: decl.to_owned(),
                name: pname.to_owned(),
            });
        }
    }
    Some(Signature {
        ret,
        name,
        params,
        variadic,
    })
}

/// Bundled C signatures keyed by function name.
pub fn signature_table() -> &'static BTreeMap<String, Signature> {
    static TABLE: OnceLock<BTreeMap<String, Signature>> = OnceLock::new();
    TABLE.get_or_init(|| {
        SIGNATURES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with('@'))
            .map(|l| parse_prototype(l).unwrap_or_else(|| panic!("bad bundled prototype: {l}")))
            .map(|s| (s.name.clone(), s))
            .collect()
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum ShimScope {
    /// One wrapper per function of every selected block.
    #[default]
    Covered,
    /// One wrapper per invoked function only.
    Invoked,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ShimOptions {
    pub scope: ShimScope,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shim {
    pub source: String,
    pub wrappers: usize,
    pub warnings: Vec<String>,
}

/// Emits the forwarding shim; functions without a known signature become
/// variadic macro passthroughs and produce a warning.
pub fn emit_shim(lib: &ComposedLibrary, options: &ShimOptions) -> Shim {
    let table = signature_table();
    let manifest = Manifest::from_library(lib);
    let functions: Vec<&String> = match options.scope {
        ShimScope::Covered => lib.covered_functions.iter().collect(),
        ShimScope::Invoked => lib.usage.invoked.iter().collect(),
    };
    let scope = match options.scope {
        ShimScope::Covered => "covered functions",
        ShimScope::Invoked => "invoked functions",
    };

    let mut src = String::new();
    let _ = writeln!(src, "/*");
    let _ = writeln!(src, " * thinmpi composed library for `{}`", comment_safe(&lib.app_id));
    let _ = writeln!(
        src,
        " * strategy: {}, blocks ({}): {}",
        lib.strategy.as_str(),
        lib.m,
        comment_safe(&manifest.selected_blocks.join(" "))
    );
    let _ = writeln!(src, " * wrappers: {} ({scope})", functions.len());
    let _ = writeln!(src, " * manifest: {}", manifest.fingerprint());
    let _ = writeln!(src, " * registry: {}", lib.registry_fingerprint);
    let _ = writeln!(src, " *");
    let _ = writeln!(
        src,
        " * Generated file. Wrappers forward to `_`-prefixed backend symbols."
    );
    let _ = writeln!(src, " */");
    src.push_str(PRELUDE);

    let mut warnings = Vec::new();
    for name in &functions {
        let _ = writeln!(src, "\n/* wrapper {name} */");
        match table.get(name.as_str()) {
            Some(sig) if !sig.variadic => {
                let args: Vec<&str> = sig.params.iter().map(|p| p.name.as_str()).collect();
                let _ = writeln!(src, "extern {} _{}({});", sig.ret, sig.name, sig.param_list());
                let _ = writeln!(src, "{} {}({})", sig.ret, sig.name, sig.param_list());
                let _ = writeln!(src, "{{");
                let _ = writeln!(src, "    return _{}({});", sig.name, args.join(", "));
                let _ = writeln!(src, "}}");
            }
            Some(sig) => {
                let _ = writeln!(src, "extern {} _{}({});", sig.ret, sig.name, sig.param_list());
                let _ = writeln!(src, "#define {0}(...) _{0}(__VA_ARGS__)", sig.name);
            }
            None => {
                warnings.push(format!("no known signature for {name}; emitted a variadic passthrough"));
                let _ = writeln!(src, "/* signature unknown: variadic passthrough */");
                let _ = writeln!(src, "#define {name}(...) _{name}(__VA_ARGS__)");
            }
        }
    }

    Shim {
        source: src,
        wrappers: functions.len(),
        warnings,
    }
}

fn comment_safe(text: &str) -> String {
    text.replace("*/", "* /").replace(['\n', '\r'], " ")
}
