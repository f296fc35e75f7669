//! `laser attack`: run the elongation operator on one text.

use crate::context::{
    load_local_encoder, prepare_out_dir, runtime, validation, write_file, CliError, CliResult,
};
use laser_core::elongation::{elongate_text, elongate_tokens};
use laser_core::manifest::RunManifest;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub text: String,
    pub m: usize,
    /// `text` (string level) or `token` (requires a local encoder).
    pub mode: String,
    pub max_len: usize,
    pub encoder: Option<String>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            text: String::new(),
            m: 1,
            mode: "text".into(),
            max_len: 256,
            encoder: None,
            seed: 42,
        }
    }
}

pub fn run(cfg: AttackConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    if cfg.text.trim().is_empty() {
        return Err(CliError::Validation("--text must be non-empty".into()));
    }
    let attacked = match cfg.mode.as_str() {
        "text" => elongate_text(&cfg.text, cfg.m).map_err(validation)?,
        "token" => {
            let reference = cfg.encoder.as_deref().ok_or_else(|| {
                CliError::Validation("token mode needs --encoder for its tokenizer".into())
            })?;
            let encoder = load_local_encoder(reference)?;
            let seq = encoder.tokenize(&cfg.text, "attack");
            let elongated = elongate_tokens(&seq, cfg.m, cfg.max_len).map_err(runtime)?;
            elongated
                .token_ids
                .iter()
                .map(|&id| encoder.vocab().word(id).unwrap_or("[UNK]").to_string())
                .collect::<Vec<_>>()
                .join(" ")
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown attack mode {other:?} (expected text|token)"
            )))
        }
    };
    println!("{attacked}");

    if let Some(out) = out {
        let dir = prepare_out_dir(&out, force)?;
        write_file(&dir, "attack.txt", format!("{attacked}\n"))?;
        let mut manifest = RunManifest::new(
            "attack",
            serde_json::to_value(&cfg).expect("config serializes"),
            cfg.seed,
        );
        manifest.note("elongation_separator", "single_space");
        manifest.outputs.push("attack.txt".into());
        manifest.write(&dir).map_err(runtime)?;
    }
    Ok(())
}
