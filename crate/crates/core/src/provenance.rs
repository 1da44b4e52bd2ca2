//! Reproducibility header stamped on every artifact.
//!
//! Text artifacts (CSV) start with a comment line
//! `# sitnn <version> config=<16 hex digits> seed=<u64>`; JSON artifacts carry
//! the same fields under a leading `provenance` key.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = "sitnn";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Provenance for a run described by `config` (any canonical text form).
    pub fn new(config: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config_hash: config_hash(config),
            seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# {} {} config={} seed={}",
            self.tool, self.version, self.config_hash, self.seed
        )
    }

    pub fn parse_header(line: &str) -> Result<Self> {
        let bad = |message: &str| Error::Format {
            format: "provenance header",
            offset: 0,
            message: format!("{message}: `{line}`"),
        };
        let rest = line.trim_end().strip_prefix("# ").ok_or_else(|| bad("missing `# `"))?;
        let mut parts = rest.split(' ');
        let tool = parts.next().ok_or_else(|| bad("missing tool"))?;
        let version = parts.next().ok_or_else(|| bad("missing version"))?;
        let config_hash = parts
            .next()
            .and_then(|p| p.strip_prefix("config="))
            .ok_or_else(|| bad("missing config hash"))?;
        let seed = parts
            .next()
            .and_then(|p| p.strip_prefix("seed="))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing seed"))?;
        if parts.next().is_some() {
            return Err(bad("trailing fields"));
        }
        if config_hash.len() != 16 || !config_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad("config hash must be 16 hex digits"));
        }
        Ok(Self {
            tool: tool.to_string(),
            version: version.to_string(),
            config_hash: config_hash.to_string(),
            seed,
        })
    }
}

/// First 64 bits of the SHA-256 of `config`, as lowercase hex.
pub fn config_hash(config: &str) -> String {
    let digest = Sha256::digest(config.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
