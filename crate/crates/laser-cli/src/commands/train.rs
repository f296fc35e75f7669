//! `laser train`: contrastive fine-tuning of a local checkpoint.

use crate::context::{
    load_local_encoder, prepare_out_dir, runtime, validation, write_json_report, CliError,
    CliResult,
};
use laser_core::corpus::{load_line_corpus, AnchorStrategy};
use laser_core::elongation::ElongationMode;
use laser_core::encoder::Pooling;
use laser_core::manifest::RunManifest;
use laser_core::training::{
    build_pairs, build_pairs_from_texts, train, PairMode, SimilarityKind, TrainingConfig,
};
use laser_core::Error;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    /// self-ref | intra-ref | baseline | pairs
    pub mode: String,
    pub corpus: Option<String>,
    /// Two-column TSV of (anchor, positive) texts; `pairs` mode only.
    pub pairs: Option<String>,
    pub encoder: String,
    pub anchor: String,
    pub elongation: String,
    pub max_len: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub temp: f64,
    pub epochs: usize,
    pub pooling: Pooling,
    pub similarity: String,
    pub warmup_frac: f64,
    pub seed: u64,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let d = TrainingConfig::default();
        TrainCmdConfig {
            mode: "self-ref".into(),
            corpus: None,
            pairs: None,
            encoder: String::new(),
            anchor: "first".into(),
            elongation: "random".into(),
            max_len: d.max_len,
            batch_size: d.batch_size,
            lr: d.learning_rate,
            temp: d.temperature,
            epochs: d.epochs,
            pooling: d.pooling,
            similarity: "cosine".into(),
            warmup_frac: d.warmup_frac,
            seed: d.seed,
        }
    }
}

impl TrainCmdConfig {
    pub fn to_training_config(&self) -> CliResult<TrainingConfig> {
        let cfg = TrainingConfig {
            temperature: self.temp,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            max_len: self.max_len,
            pooling: self.pooling,
            anchor_strategy: AnchorStrategy::from_str(&self.anchor).map_err(validation)?,
            elongation: ElongationMode::from_str(&self.elongation).map_err(validation)?,
            similarity: SimilarityKind::from_str(&self.similarity).map_err(validation)?,
            warmup_frac: self.warmup_frac,
            seed: self.seed,
        };
        cfg.validate().map_err(validation)?;
        Ok(cfg)
    }
}

/// Two-column TSV of (anchor, positive) texts; extra columns are ignored.
fn load_text_pairs(path: &Path) -> CliResult<Vec<(String, String)>> {
    let file = std::fs::File::open(path)
        .map_err(|e| validation(format!("cannot open {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(a), Some(b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                pairs.push((a.to_string(), b.to_string()));
            }
            _ => {
                return Err(validation(format!(
                    "{}:{}: expected two tab-separated texts",
                    path.display(),
                    line_no + 1
                )))
            }
        }
    }
    Ok(pairs)
}

pub fn run(cfg: TrainCmdConfig, out: Option<PathBuf>, force: bool) -> CliResult {
    let out = out.ok_or_else(|| CliError::Validation("--out is required".into()))?;
    let dir = prepare_out_dir(&out, force)?;
    let training = cfg.to_training_config()?;
    let mut encoder = load_local_encoder(&cfg.encoder)?;
    let initial_fingerprint = encoder.fingerprint();

    let (examples, stats) = match cfg.mode.as_str() {
        "pairs" => {
            let path = cfg.pairs.as_deref().ok_or_else(|| {
                CliError::Validation("pairs mode requires --pairs FILE".into())
            })?;
            let texts = load_text_pairs(Path::new(path))?;
            build_pairs_from_texts(&texts, &training, encoder.vocab()).map_err(validation)?
        }
        mode => {
            let pair_mode = PairMode::from_str(mode).map_err(validation)?;
            let corpus_path = cfg.corpus.as_deref().ok_or_else(|| {
                CliError::Validation(format!("{mode} mode requires --corpus FILE"))
            })?;
            let docs = load_line_corpus(Path::new(corpus_path)).map_err(validation)?;
            build_pairs(&docs, pair_mode, &training, encoder.vocab()).map_err(validation)?
        }
    };
    log::info!(
        "built {} training pairs ({} documents skipped, {} intra-ref fallbacks)",
        stats.pairs,
        stats.skipped,
        stats.intra_fallbacks
    );

    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(&cfg).expect("config serializes"),
        cfg.seed,
    );
    manifest.encoder_fingerprint = Some(initial_fingerprint);
    if let Some(corpus) = &cfg.corpus {
        manifest
            .add_input("corpus", Path::new(corpus))
            .map_err(validation)?;
    }
    if let Some(pairs) = &cfg.pairs {
        manifest
            .add_input("pairs", Path::new(pairs))
            .map_err(validation)?;
    }
    manifest.note("elongation_separator", "single_space");
    manifest.note("build_stats", serde_json::to_string(&stats).expect("stats"));

    match train(&mut encoder, &examples, &training) {
        Ok(mut log_record) => {
            let final_dir = dir.join("final");
            encoder.save(&final_dir).map_err(runtime)?;
            log_record.checkpoint = Some("final".into());
            log_record.manifest = Some("manifest.json".into());
            write_json_report(&dir, "train_log.json", &log_record)?;
            manifest.note("final_fingerprint", encoder.fingerprint());
            manifest.outputs = vec!["final".into(), "train_log.json".into()];
            manifest.write(&dir).map_err(runtime)?;
            log::info!(
                "training finished: {} steps, final loss {:.5}",
                log_record.steps.len(),
                log_record.final_loss().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Err(Error::NonFiniteLoss { step }) => {
            // The encoder still holds the last pre-step weights.
            let last_good = dir.join("last-good");
            encoder.save(&last_good).map_err(runtime)?;
            manifest.note("aborted_at_step", step.to_string());
            manifest.outputs = vec!["last-good".into()];
            manifest.write(&dir).map_err(runtime)?;
            Err(CliError::Runtime(format!(
                "non-finite loss at step {step}; last good checkpoint saved to {}",
                last_good.display()
            )))
        }
        Err(other) => Err(runtime(other)),
    }
}
