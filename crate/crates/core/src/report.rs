//! Shared helpers for the structured documents every subcommand emits.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Output encoding of a report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    #[default]
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Json => "json",
        }
    }
}

/// Pretty JSON with a trailing newline. Field order comes from the type and
/// every map in the crate's documents is a `BTreeMap`, so output is stable.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("documents serialize");
    out.push('\n');
    out
}

/// `sha256:<hex>` content hash.
pub fn fingerprint(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Renders a value either as JSON or via its text form.
pub trait Render: Serialize {
    fn render_text(&self) -> String;

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => to_json(self),
            Format::Text => self.render_text(),
        }
    }
}

/// Rounds to six decimal places for report display.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
