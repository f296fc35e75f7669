//! `laser diagnose`: the measurement battery (shift, intra, isotropy,
//! attention, position).

use crate::commands::{load_document_pairs, load_documents};
use crate::context::{
    load_encoder, prepare_out_dir, runtime, validation, write_file, write_json_report, CliError,
    CliResult,
};
use laser_core::diagnostics::{
    attention_gain_empirical, attention_gain_sweep, intra_similarity_report, isotropy_report,
    positional_invariance, similarity_shift, AttentionGainReport,
};
use laser_core::encoder::Pooling;
use laser_core::manifest::RunManifest;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn manifest_with_inputs(
    command: &str,
    cfg: &impl Serialize,
    seed: u64,
    encoder_fingerprint: String,
    inputs: &[(&str, Option<&String>)],
) -> CliResult<RunManifest> {
    let mut manifest = RunManifest::new(
        command,
        serde_json::to_value(cfg).expect("config serializes"),
        seed,
    );
    manifest.encoder_fingerprint = Some(encoder_fingerprint);
    for (name, path) in inputs {
        if let Some(path) = path {
            manifest
                .add_input(*name, Path::new(path))
                .map_err(validation)?;
        }
    }
    manifest.note("elongation_separator", "single_space");
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// shift
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub pairs: String,
    pub encoder: String,
    pub m: usize,
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            pairs: String::new(),
            encoder: String::new(),
            m: 100,
            pooling: Pooling::Mean,
            seed: 42,
        }
    }
}

pub fn run_shift(cfg: ShiftConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    let out = required_out(out)?;
    let dir = prepare_out_dir(&out, force)?;
    let encoder = load_encoder(&cfg.encoder)?;
    let pairs = load_document_pairs(&cfg.pairs)?;
    let report = similarity_shift(&pairs, encoder.as_ref(), cfg.m, cfg.pooling).map_err(runtime)?;
    write_json_report(&dir, "shift_report.json", &report)?;
    write_file(&dir, "shift_report.csv", report.to_csv())?;
    let mut manifest = manifest_with_inputs(
        "diagnose shift",
        &cfg,
        cfg.seed,
        encoder.info().fingerprint,
        &[("pairs", Some(&cfg.pairs))],
    )?;
    manifest.outputs = vec!["shift_report.json".into(), "shift_report.csv".into()];
    manifest.write(&dir).map_err(runtime)?;
    log::info!(
        "similarity shift: mean {:.4} -> {:.4} (delta {:+.4})",
        report.mean_original,
        report.mean_attacked,
        report.mean_delta
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// intra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntraConfig {
    pub corpus: Option<String>,
    pub pairs: Option<String>,
    pub encoder: String,
    pub m: usize,
    pub n_samples: usize,
    pub limit: Option<usize>,
    pub seed: u64,
}

impl Default for IntraConfig {
    fn default() -> Self {
        IntraConfig {
            corpus: None,
            pairs: None,
            encoder: String::new(),
            m: 100,
            n_samples: 10_000,
            limit: None,
            seed: 42,
        }
    }
}

pub fn run_intra(cfg: IntraConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    let out = required_out(out)?;
    let dir = prepare_out_dir(&out, force)?;
    let encoder = load_encoder(&cfg.encoder)?;
    let docs = load_documents(cfg.corpus.as_deref(), cfg.pairs.as_deref(), cfg.limit)?;
    let report = intra_similarity_report(&docs, encoder.as_ref(), cfg.m, cfg.n_samples, cfg.seed)
        .map_err(runtime)?;
    write_json_report(&dir, "intra_report.json", &report)?;
    write_file(&dir, "intra_report.csv", report.to_csv())?;
    let mut manifest = manifest_with_inputs(
        "diagnose intra",
        &cfg,
        cfg.seed,
        encoder.info().fingerprint,
        &[
            ("corpus", cfg.corpus.as_ref()),
            ("pairs", cfg.pairs.as_ref()),
        ],
    )?;
    manifest.outputs = vec!["intra_report.json".into(), "intra_report.csv".into()];
    manifest.write(&dir).map_err(runtime)?;
    log::info!(
        "adjusted intra-document similarity: mean {:.4} (original) vs {:.4} (attacked)",
        report.mean_adjusted_original,
        report.mean_adjusted_attacked
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// isotropy
// ---------------------------------------------------------------------------

pub type IsotropyConfig = IntraConfig;

pub fn run_isotropy(cfg: IsotropyConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    let out = required_out(out)?;
    let dir = prepare_out_dir(&out, force)?;
    let encoder = load_encoder(&cfg.encoder)?;
    let docs = load_documents(cfg.corpus.as_deref(), cfg.pairs.as_deref(), cfg.limit)?;
    let report = isotropy_report(&docs, encoder.as_ref(), cfg.m, cfg.n_samples, cfg.seed)
        .map_err(runtime)?;
    write_json_report(&dir, "isotropy_report.json", &report)?;
    write_file(&dir, "isotropy_report.csv", report.to_csv())?;
    let mut manifest = manifest_with_inputs(
        "diagnose isotropy",
        &cfg,
        cfg.seed,
        encoder.info().fingerprint,
        &[
            ("corpus", cfg.corpus.as_ref()),
            ("pairs", cfg.pairs.as_ref()),
        ],
    )?;
    manifest.outputs = vec!["isotropy_report.json".into(), "isotropy_report.csv".into()];
    manifest.write(&dir).map_err(runtime)?;
    log::info!(
        "document-level anisotropy: {:.4} (original) vs {:.4} (attacked)",
        report.anisotropy_original,
        report.anisotropy_attacked
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub corpus: Option<String>,
    pub pairs: Option<String>,
    pub encoder: String,
    pub m: usize,
    /// Probe one layer/head, or sweep all when omitted.
    pub layer: Option<usize>,
    pub head: Option<usize>,
    pub limit: Option<usize>,
    pub seed: u64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            corpus: None,
            pairs: None,
            encoder: String::new(),
            m: 2,
            layer: None,
            head: None,
            limit: Some(50),
            seed: 42,
        }
    }
}

pub fn run_attention(cfg: AttentionConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    let out = required_out(out)?;
    let dir = prepare_out_dir(&out, force)?;
    let encoder = load_encoder(&cfg.encoder)?;
    let docs = load_documents(cfg.corpus.as_deref(), cfg.pairs.as_deref(), cfg.limit)?;
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for doc in &docs {
        let outcome = match (cfg.layer, cfg.head) {
            (Some(layer), Some(head)) => {
                attention_gain_empirical(encoder.as_ref(), doc, cfg.m, layer, head)
                    .map(|r| vec![r])
            }
            (None, None) => attention_gain_sweep(encoder.as_ref(), doc, cfg.m),
            _ => {
                return Err(CliError::Validation(
                    "--layer and --head must be given together".into(),
                ))
            }
        };
        match outcome {
            Ok(mut r) => records.append(&mut r),
            Err(laser_core::Error::InvalidArgument(msg)) => {
                // Documents that are too short or exceed the elongation
                // budget are reported, not fatal.
                log::info!("skipping {}: {msg}", doc.id);
                skipped += 1;
            }
            Err(other) => return Err(runtime(other)),
        }
    }
    if records.is_empty() {
        return Err(CliError::Runtime(format!(
            "no document was measurable ({skipped} skipped)"
        )));
    }
    let report = AttentionGainReport {
        m: cfg.m,
        records,
    };
    write_json_report(&dir, "attention_report.json", &report)?;
    write_file(&dir, "attention_report.csv", report.to_csv())?;
    let mut manifest = manifest_with_inputs(
        "diagnose attention",
        &cfg,
        cfg.seed,
        encoder.info().fingerprint,
        &[
            ("corpus", cfg.corpus.as_ref()),
            ("pairs", cfg.pairs.as_ref()),
        ],
    )?;
    manifest.outputs = vec![
        "attention_report.json".into(),
        "attention_report.csv".into(),
    ];
    manifest.write(&dir).map_err(runtime)?;
    let dominant_wins = report
        .records
        .iter()
        .filter(|r| r.g_d > r.g_r)
        .count();
    log::info!(
        "attention gains: {}/{} probes with G_d > G_r ({skipped} documents skipped)",
        dominant_wins,
        report.records.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// position
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionConfig {
    pub pairs: String,
    pub encoder: String,
    pub bins: usize,
    pub seed: u64,
}

impl Default for PositionConfig {
    fn default() -> Self {
        PositionConfig {
            pairs: String::new(),
            encoder: String::new(),
            bins: 100,
            seed: 42,
        }
    }
}

pub fn run_position(cfg: PositionConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    let out = required_out(out)?;
    let dir = prepare_out_dir(&out, force)?;
    let encoder = load_encoder(&cfg.encoder)?;
    let pairs = load_document_pairs(&cfg.pairs)?;
    let report =
        positional_invariance(&pairs, encoder.as_ref(), cfg.seed, cfg.bins).map_err(runtime)?;
    write_json_report(&dir, "position_report.json", &report)?;
    write_file(&dir, "position_report.csv", report.to_csv())?;
    let mut manifest = manifest_with_inputs(
        "diagnose position",
        &cfg,
        cfg.seed,
        encoder.info().fingerprint,
        &[("pairs", Some(&cfg.pairs))],
    )?;
    manifest.outputs = vec!["position_report.json".into(), "position_report.csv".into()];
    manifest.write(&dir).map_err(runtime)?;
    log::info!(
        "positional invariance JS divergence: {:.4}",
        report.js_original_vs_shuffled
    );
    Ok(())
}

fn required_out(out: Option<PathBuf>) -> CliResult<PathBuf> {
    out.ok_or_else(|| CliError::Validation("--out is required".into()))
}
