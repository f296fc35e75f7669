//! Command implementations and the single dispatch point shared by the
//! argument parser and `rerun`.

pub mod attack;
pub mod diagnose;
pub mod eval;
pub mod init;
pub mod report;
pub mod synth;
pub mod train;

use crate::context::{validation, CliError, CliResult};
use laser_core::corpus::{load_line_corpus, load_sts_pairs, Document};
use std::path::{Path, PathBuf};

/// Execute a command by its manifest name with an effective JSON config.
/// Both the flag parser and `rerun` funnel through here, so a re-invoked
/// manifest takes exactly the original code path.
pub fn dispatch(
    command: &str,
    config: serde_json::Value,
    out: Option<PathBuf>,
    force: bool,
) -> CliResult {
    let parse = |err| CliError::Validation(format!("config for {command}: {err}"));
    match command {
        "attack" => attack::run(serde_json::from_value(config).map_err(parse)?, out, force),
        "diagnose shift" => {
            diagnose::run_shift(serde_json::from_value(config).map_err(parse)?, out, force)
        }
        "diagnose intra" => {
            diagnose::run_intra(serde_json::from_value(config).map_err(parse)?, out, force)
        }
        "diagnose isotropy" => {
            diagnose::run_isotropy(serde_json::from_value(config).map_err(parse)?, out, force)
        }
        "diagnose attention" => {
            diagnose::run_attention(serde_json::from_value(config).map_err(parse)?, out, force)
        }
        "diagnose position" => {
            diagnose::run_position(serde_json::from_value(config).map_err(parse)?, out, force)
        }
        "train" => train::run(serde_json::from_value(config).map_err(parse)?, out, force),
        "eval retrieval" => {
            eval::run_retrieval(serde_json::from_value(config).map_err(parse)?, out, force)
        }
        "eval sts" => eval::run_sts(serde_json::from_value(config).map_err(parse)?, out, force),
        "init" => init::run(serde_json::from_value(config).map_err(parse)?, out, force),
        "synth" => synth::run(serde_json::from_value(config).map_err(parse)?, out, force),
        other => Err(CliError::Validation(format!(
            "manifest names unknown command {other:?}"
        ))),
    }
}

/// Documents for document-level diagnostics: either a line corpus or an
/// STS pair file flattened in order (both sides of each pair).
pub fn load_documents(
    corpus: Option<&str>,
    pairs: Option<&str>,
    limit: Option<usize>,
) -> CliResult<Vec<Document>> {
    let mut docs = match (corpus, pairs) {
        (Some(path), None) => load_line_corpus(Path::new(path)).map_err(validation)?,
        (None, Some(path)) => {
            let pairs = load_sts_pairs(Path::new(path)).map_err(validation)?;
            let mut docs = Vec::with_capacity(pairs.len() * 2);
            for (i, pair) in pairs.iter().enumerate() {
                docs.push(Document {
                    id: format!("p{i}.1"),
                    title: None,
                    text: pair.sentence1.clone(),
                });
                docs.push(Document {
                    id: format!("p{i}.2"),
                    title: None,
                    text: pair.sentence2.clone(),
                });
            }
            docs
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "pass either --corpus or --pairs, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Validation(
                "one of --corpus or --pairs is required".into(),
            ))
        }
    };
    if let Some(limit) = limit {
        docs.truncate(limit);
    }
    if docs.is_empty() {
        return Err(CliError::Validation("no documents in the input".into()));
    }
    Ok(docs)
}

/// Sentence pairs for pair-level diagnostics, from an STS file.
pub fn load_document_pairs(pairs_path: &str) -> CliResult<Vec<(Document, Document)>> {
    let pairs = load_sts_pairs(Path::new(pairs_path)).map_err(validation)?;
    if pairs.is_empty() {
        return Err(CliError::Validation(format!(
            "{pairs_path} holds no sentence pairs"
        )));
    }
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                Document {
                    id: format!("p{i}.1"),
                    title: None,
                    text: p.sentence1.clone(),
                },
                Document {
                    id: format!("p{i}.2"),
                    title: None,
                    text: p.sentence2.clone(),
                },
            )
        })
        .collect())
}
