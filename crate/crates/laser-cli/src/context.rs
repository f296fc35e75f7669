//! Shared CLI plumbing: error classification for exit codes, run-directory
//! preparation, config merging, encoder loading, and the tee logger.

use laser_core::encoder::remote::{RemoteConfig, RemoteEncoder};
use laser_core::encoder::TextEncoder;
use laser_core::TransformerEncoderF64;
use log::{Level, LevelFilter, Log, Metadata, Record};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

pub const ENV_CACHE: &str = "LASER_CACHE";
pub const ENV_ENDPOINT_TOKEN: &str = "LASER_ENDPOINT_TOKEN";

/// Failures split by exit code: 1 for validation, 2 for runtime.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => msg,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Classify a core error found while checking arguments and inputs.
pub fn validation(err: impl std::fmt::Display) -> CliError {
    CliError::Validation(err.to_string())
}

/// Classify a core error raised mid-run.
pub fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError::Runtime(err.to_string())
}

// ---------------------------------------------------------------------------
// Logger: stderr always, plus the run directory's log file once known.
// ---------------------------------------------------------------------------

struct TeeLogger {
    file: Mutex<Option<File>>,
}

impl Log for TeeLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Info
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = format!("[{}] {}", record.level(), record.args());
        eprintln!("{line}");
        if let Ok(mut guard) = self.file.lock() {
            if let Some(file) = guard.as_mut() {
                let _ = writeln!(file, "{line}");
            }
        }
    }

    fn flush(&self) {}
}

static LOGGER: OnceLock<&'static TeeLogger> = OnceLock::new();

pub fn init_logger() {
    let logger = LOGGER.get_or_init(|| {
        Box::leak(Box::new(TeeLogger {
            file: Mutex::new(None),
        }))
    });
    if log::set_logger(*logger).is_ok() {
        log::set_max_level(LevelFilter::Info);
    }
}

/// Route log lines into `dir/run.log` as well.
pub fn attach_log_file(dir: &Path) {
    if let Some(logger) = LOGGER.get() {
        if let Ok(file) = File::create(dir.join("run.log")) {
            *logger.file.lock().expect("logger lock") = Some(file);
        }
    }
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

/// Create the output directory. An existing non-empty directory requires
/// `--force`.
pub fn prepare_out_dir(path: &Path, force: bool) -> CliResult<PathBuf> {
    if path.exists() {
        let non_empty = std::fs::read_dir(path)
            .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Validation(format!(
                "output directory {} is not empty (pass --force to reuse it)",
                path.display()
            )));
        }
    } else {
        std::fs::create_dir_all(path)
            .map_err(|e| validation(format!("cannot create {}: {e}", path.display())))?;
    }
    attach_log_file(path);
    Ok(path.to_path_buf())
}

pub fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn write_json_report<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| runtime(format!("cannot serialize {name}: {e}")))?;
    bytes.push(b'\n');
    write_file(dir, name, bytes)
}

// ---------------------------------------------------------------------------
// Config precedence: flag > config file > default.
// ---------------------------------------------------------------------------

/// Shallow-merge JSON objects; `overlay` null values are ignored.
pub fn merge_json(base: serde_json::Value, overlay: serde_json::Value) -> serde_json::Value {
    match (base, overlay) {
        (serde_json::Value::Object(mut base), serde_json::Value::Object(overlay)) => {
            for (key, value) in overlay {
                if !value.is_null() {
                    base.insert(key, value);
                }
            }
            serde_json::Value::Object(base)
        }
        (base, serde_json::Value::Null) => base,
        (_, overlay) => overlay,
    }
}

/// Resolve the effective config for a command: serialize the defaults,
/// overlay the optional config file, overlay the explicitly-set flags,
/// and deserialize back into the typed config.
pub fn effective_config<T: Serialize + DeserializeOwned>(
    defaults: &T,
    config_file: Option<&Path>,
    flags: serde_json::Value,
) -> CliResult<T> {
    let mut merged = serde_json::to_value(defaults)
        .map_err(|e| validation(format!("default config does not serialize: {e}")))?;
    if let Some(path) = config_file {
        let bytes = std::fs::read(path)
            .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
        let file_value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| validation(format!("config {} is not JSON: {e}", path.display())))?;
        merged = merge_json(merged, file_value);
    }
    merged = merge_json(merged, flags);
    serde_json::from_value(merged).map_err(|e| validation(format!("invalid configuration: {e}")))
}

// ---------------------------------------------------------------------------
// Encoder loading
// ---------------------------------------------------------------------------

/// Resolve an encoder reference: an existing checkpoint directory, or a
/// bare name under `$LASER_CACHE`.
pub fn resolve_checkpoint(reference: &str) -> CliResult<PathBuf> {
    let direct = Path::new(reference);
    if direct.is_dir() {
        return Ok(direct.to_path_buf());
    }
    if let Ok(cache) = std::env::var(ENV_CACHE) {
        let cached = Path::new(&cache).join(reference);
        if cached.is_dir() {
            return Ok(cached);
        }
    }
    Err(CliError::Validation(format!(
        "encoder {reference:?} is neither a checkpoint directory nor a name under ${ENV_CACHE}"
    )))
}

/// Load any encoder: `http(s)://` URLs become remote clients
/// (authenticated via `$LASER_ENDPOINT_TOKEN`), everything else loads as a
/// local checkpoint.
pub fn load_encoder(reference: &str) -> CliResult<Box<dyn TextEncoder<f64>>> {
    if reference.starts_with("http://") || reference.starts_with("https://") {
        let token = std::env::var(ENV_ENDPOINT_TOKEN).ok();
        let remote = RemoteEncoder::new(RemoteConfig::new(reference).with_token(token));
        return Ok(Box::new(remote));
    }
    Ok(Box::new(load_local_encoder(reference)?))
}

/// Load a local trainable checkpoint.
pub fn load_local_encoder(reference: &str) -> CliResult<TransformerEncoderF64> {
    let dir = resolve_checkpoint(reference)?;
    TransformerEncoderF64::load(&dir).map_err(validation)
}
