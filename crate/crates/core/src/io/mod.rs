//! Reading and writing chains, certificates, traces and experiment files.

pub mod json;
pub mod manifest;
pub mod prism;

use std::path::Path;

use crate::error::Result;
use crate::lmc::LabelledMarkovChain;

pub use json::ReadOptions;

/// Reads a chain, picking the format from the extension: `.tra` is PRISM
/// explicit (with a sibling `.lab` if present), anything else native JSON.
pub fn read_chain_file(path: &Path, opts: ReadOptions) -> Result<LabelledMarkovChain> {
    if path.extension().is_some_and(|e| e == "tra") {
        return prism::read_prism(path, None, prism::PrismOptions { tol_stochastic: opts.tol_stochastic });
    }
    json::chain_from_json(&std::fs::read_to_string(path)?, opts)
}

/// Parses chain text, sniffing the format: JSON starts with `{`.
pub fn parse_chain(text: &str, opts: ReadOptions) -> Result<LabelledMarkovChain> {
    if text.trim_start().starts_with('{') {
        json::chain_from_json(text, opts)
    } else {
        prism::chain_from_prism(text, None, prism::PrismOptions { tol_stochastic: opts.tol_stochastic })
    }
}
