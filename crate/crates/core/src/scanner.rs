//! Lexical extraction of the MPI functions an application calls.
//!
//! Sources are not preprocessed: includes are not followed, macros are not
//! expanded and every conditional branch is scanned. A call is any
//! identifier followed by optional whitespace and `(` once comments and
//! literals have been blanked out.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::registry::{CaseSensitivity, Registry};
use crate::report::Render;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// `/* */` and `//` comments, `"` strings, `'` character literals.
    #[default]
    C,
    /// `!` comments, `'` and `"` strings with doubled-quote escapes.
    Fortran,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Comment,
    String,
    Char,
}

/// An unterminated comment or literal; everything after `line` was blanked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripDiagnostic {
    pub kind: NoiseKind,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    pub diagnostics: Vec<StripDiagnostic>,
}

/// Blanks comments and literals in C source, preserving every line break.
pub fn strip_noise(source: &str) -> Stripped {
    strip_noise_with(source, Dialect::C)
}

pub fn strip_noise_with(source: &str, dialect: Dialect) -> Stripped {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Code,
        Block,
        Line,
        Quoted(char),
    }

    fn blank(out: &mut String, c: char) {
        match c {
            '\n' | '\r' => out.push(c),
            _ => out.push(' '),
        }
    }

    let mut out = String::with_capacity(source.len());
    let mut state = State::Code;
    let mut line = 1;
    let mut opened_at = 1;
    let mut chars = source.chars().peekable();

    while let Some(c) = chars.next() {
        let next = chars.peek().copied();
        match state {
            State::Code => {
                let opens = match (dialect, c, next) {
                    (Dialect::C, '/', Some('*')) => Some(State::Block),
                    (Dialect::C, '/', Some('/')) => Some(State::Line),
                    (Dialect::Fortran, '!', _) => Some(State::Line),
                    (_, '"', _) | (_, '\'', _) => Some(State::Quoted(c)),
                    _ => None,
                };
                match opens {
                    Some(s) => {
                        state = s;
                        opened_at = line;
                        out.push(' ');
                        if matches!(s, State::Block | State::Line) && dialect == Dialect::C {
                            chars.next();
                            out.push(' ');
                        }
                    }
                    None => out.push(c),
                }
            }
            State::Block => {
                if c == '*' && next == Some('/') {
                    chars.next();
                    out.push_str("  ");
                    state = State::Code;
                } else {
                    blank(&mut out, c);
                }
            }
            State::Line => {
                if c == '\n' {
                    out.push('\n');
                    state = State::Code;
                } else if dialect == Dialect::C && c == '\\' && next == Some('\n') {
                    // spliced line keeps the comment open
                    out.push(' ');
                    out.push('\n');
                    chars.next();
                    line += 1;
                } else {
                    blank(&mut out, c);
                }
            }
            State::Quoted(q) => {
                if dialect == Dialect::C && c == '\\' {
                    out.push(' ');
                    if let Some(escaped) = chars.next() {
                        blank(&mut out, escaped);
                        if escaped == '\n' {
                            line += 1;
                        }
                    }
                } else if c == q {
                    out.push(' ');
                    if dialect == Dialect::Fortran && next == Some(q) {
                        chars.next();
                        out.push(' ');
                    } else {
                        state = State::Code;
                    }
                } else {
                    blank(&mut out, c);
                }
            }
        }
        if c == '\n' {
            line += 1;
        }
    }

    let mut diagnostics = Vec::new();
    match state {
        State::Block => diagnostics.push(StripDiagnostic {
            kind: NoiseKind::Comment,
            line: opened_at,
        }),
        State::Quoted(q) => diagnostics.push(StripDiagnostic {
            kind: if q == '"' || dialect == Dialect::Fortran {
                NoiseKind::String
            } else {
                NoiseKind::Char
            },
            line: opened_at,
        }),
        State::Code | State::Line => {}
    }
    Stripped { text: out, diagnostics }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub app_id: String,
    /// Identifier prefixes treated as MPI calls; each maps onto the `MPI_` name.
    pub prefixes: Vec<String>,
    pub dialect: Dialect,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            app_id: "app".to_owned(),
            prefixes: vec!["MPI_".to_owned()],
            dialect: Dialect::C,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub function: String,
    pub path: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanDiagnostic {
    pub path: String,
    pub line: usize,
    pub message: String,
}

/// The set of MPI functions one application invokes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSet {
    pub app_id: String,
    pub invoked: BTreeSet<String>,
    pub call_sites: Vec<CallSite>,
    pub unknown_identifiers: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<ScanDiagnostic>,
}

impl UsageSet {
    pub fn new(app_id: impl Into<String>) -> Self {
        UsageSet {
            app_id: app_id.into(),
            ..Default::default()
        }
    }

    /// Usage set naming `functions` directly, without call sites.
    pub fn from_names<I, S>(app_id: impl Into<String>, functions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        UsageSet {
            app_id: app_id.into(),
            invoked: functions.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    /// Folds `other` in; call sites and diagnostics are re-sorted by (path, line).
    pub fn merge(&mut self, other: &UsageSet) {
        self.invoked.extend(other.invoked.iter().cloned());
        self.unknown_identifiers
            .extend(other.unknown_identifiers.iter().cloned());
        self.call_sites.extend(other.call_sites.iter().cloned());
        self.diagnostics.extend(other.diagnostics.iter().cloned());
        self.call_sites
            .sort_by(|a, b| (&a.path, a.line, &a.function).cmp(&(&b.path, b.line, &b.function)));
        self.diagnostics
            .sort_by(|a, b| (&a.path, a.line, &a.message).cmp(&(&b.path, b.line, &b.message)));
    }
}

impl Render for UsageSet {
    fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "application: {}", self.app_id);
        let _ = writeln!(out, "invoked ({}):", self.invoked.len());
        for name in &self.invoked {
            let sites = self.call_sites.iter().filter(|s| &s.function == name).count();
            let _ = writeln!(out, "  {name}  [{sites} call site(s)]");
        }
        if !self.unknown_identifiers.is_empty() {
            let _ = writeln!(out, "unknown identifiers ({}):", self.unknown_identifiers.len());
            for name in &self.unknown_identifiers {
                let _ = writeln!(out, "  {name}");
            }
        }
        for d in &self.diagnostics {
            let _ = writeln!(out, "warning: {}:{}: {}", d.path, d.line, d.message);
        }
        out
    }
}

/// Scans one in-memory source; call sites are attributed to `<input>`.
pub fn scan_text(source: &str, registry: &Registry, options: &ScanOptions) -> UsageSet {
    scan_source(source, "<input>", registry, options)
}

pub fn scan_source(source: &str, path: &str, registry: &Registry, options: &ScanOptions) -> UsageSet {
    let stripped = strip_noise_with(source, options.dialect);
    let mut usage = UsageSet::new(options.app_id.clone());
    usage.diagnostics = stripped
        .diagnostics
        .iter()
        .map(|d| ScanDiagnostic {
            path: path.to_owned(),
            line: d.line,
            message: match d.kind {
                NoiseKind::Comment => "unterminated comment".to_owned(),
                NoiseKind::String => "unterminated string literal".to_owned(),
                NoiseKind::Char => "unterminated character literal".to_owned(),
            },
        })
        .collect();

    let insensitive = registry.case_sensitivity() == CaseSensitivity::Insensitive;
    let bytes = stripped.text.as_bytes();
    let is_ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut line = 1;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            line += 1;
            i += 1;
            continue;
        }
        if !is_ident(b) {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && is_ident(bytes[i]) {
            i += 1;
        }
        if bytes[start].is_ascii_digit() {
            continue;
        }
        let ident = &stripped.text[start..i];
        let Some(canonical) = canonical_candidate(ident, &options.prefixes, insensitive) else {
            continue;
        };
        let mut j = i;
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        if bytes.get(j) != Some(&b'(') {
            continue;
        }
        let function = match registry.lookup(&canonical) {
            Some(record) => {
                usage.invoked.insert(record.name.clone());
                record.name.clone()
            }
            None => {
                usage.unknown_identifiers.insert(ident.to_owned());
                ident.to_owned()
            }
        };
        usage.call_sites.push(CallSite {
            function,
            path: path.to_owned(),
            line,
        });
    }
    usage
}

fn canonical_candidate(ident: &str, prefixes: &[String], insensitive: bool) -> Option<String> {
    prefixes.iter().find_map(|prefix| {
        let head = ident.get(..prefix.len())?;
        let matches = if insensitive {
            head.eq_ignore_ascii_case(prefix)
        } else {
            head == prefix
        };
        matches.then(|| format!("MPI_{}", &ident[prefix.len()..]))
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileScan {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usage: Option<UsageSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusScan {
    pub files: Vec<FileScan>,
    pub merged: UsageSet,
}

/// Scans every file independently, then merges in input order.
///
/// Unreadable files produce an error entry and do not stop the scan.
pub fn scan_corpus<P: AsRef<Path> + Sync>(paths: &[P], registry: &Registry, options: &ScanOptions) -> CorpusScan {
    let files: Vec<FileScan> = paths
        .par_iter()
        .map(|p| {
            let path = p.as_ref();
            let label = path.display().to_string();
            match std::fs::read(path) {
                Ok(raw) => {
                    let source = String::from_utf8_lossy(&raw);
                    FileScan {
                        usage: Some(scan_source(&source, &label, registry, options)),
                        path: label,
                        error: None,
                    }
                }
                Err(e) => FileScan {
                    path: label,
                    usage: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut merged = UsageSet::new(options.app_id.clone());
    for usage in files.iter().filter_map(|f| f.usage.as_ref()) {
        merged.merge(usage);
    }
    CorpusScan { files, merged }
}
