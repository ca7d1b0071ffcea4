//! Dataset, manifest and model files.
//!
//! A demonstration is a comma-separated text file: the first row holds
//! channel names, the second row role tags (`observed`, `latent`,
//! `control`), and every further row one sample. A session manifest (JSON)
//! lists the demonstration files relative to itself together with the
//! sample rate and, for generated sessions, the world and per-stride ground
//! truth. Models are JSON documents that round-trip every float exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mpip_core::model::{ChannelSpec, Demonstration, IPModel, Role};
use mpip_core::synth::{StrideRecord, StrideTruth, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Tag stored in every model file.
pub const MODEL_FORMAT: &str = "mpip-model";
/// Current model file version.
pub const MODEL_VERSION: u32 = 1;

/// Renders a demonstration in the dataset text format.
pub fn demonstration_to_string(demo: &Demonstration) -> Result<String> {
    let channels = demo.channels();
    for c in channels {
        if c.name.is_empty() || c.name.contains([',', '\n', '\r']) {
            return Err(CliError::Config(format!(
                "channel name {:?} cannot be written to a dataset file",
                c.name
            )));
        }
    }
    let mut out = String::new();
    let names: Vec<&str> = channels.iter().map(|c| c.name.as_str()).collect();
    let roles: Vec<&str> = channels.iter().map(|c| c.role.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    out.push_str(&roles.join(","));
    out.push('\n');
    let columns: Vec<&[f64]> = (0..channels.len())
        .map(|d| demo.series(d))
        .collect::<Result<_, _>>()?;
    for t in 0..demo.len() {
        for (d, col) in columns.iter().enumerate() {
            if d > 0 {
                out.push(',');
            }
            // `Display` for f64 is the shortest representation that round-trips
            write!(out, "{}", col[t]).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses the dataset text format. `path` is used in error messages only.
pub fn parse_demonstration(text: &str, sample_rate: f64, path: &Path) -> Result<Demonstration> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::format(path, "empty dataset file"))?;
    let (role_line, roles) = lines
        .next()
        .ok_or_else(|| CliError::format(path, "missing role row"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let roles: Vec<&str> = roles.split(',').map(str::trim).collect();
    if names.len() != roles.len() {
        return Err(CliError::format(
            path,
            format!("{} channel names but {} role tags", names.len(), roles.len()),
        ));
    }
    let channels = names
        .iter()
        .zip(&roles)
        .map(|(n, r)| {
            Role::parse(r)
                .map(|role| ChannelSpec::new(*n, role))
                .ok_or_else(|| {
                    CliError::format(path, format!("line {}: unknown role tag '{r}'", role_line + 1))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec![Vec::new(); channels.len()];
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != channels.len() {
            return Err(CliError::format(
                path,
                format!("line {}: expected {} fields, found {}", line + 1, channels.len(), fields.len()),
            ));
        }
        for (col, f) in columns.iter_mut().zip(fields) {
            let v: f64 = f
                .parse()
                .map_err(|_| CliError::format(path, format!("line {}: '{f}' is not a number", line + 1)))?;
            col.push(v);
        }
    }
    Ok(Demonstration::new(channels, columns, sample_rate)?)
}

/// Reads one dataset file.
pub fn read_demonstration(path: &Path, sample_rate: f64) -> Result<Demonstration> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_demonstration(&text, sample_rate, path)
}

/// Writes one dataset file.
pub fn write_demonstration(path: &Path, demo: &Demonstration) -> Result<()> {
    write_file(path, demonstration_to_string(demo)?.as_bytes())
}

/// Index of a session on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    /// Sample rate shared by all files, in Hz.
    pub sample_rate: f64,
    /// Dataset files relative to the manifest's directory.
    pub files: Vec<String>,
    /// Seed the session was generated from.
    #[serde(default)]
    pub seed: Option<u64>,
    /// The generating world, for synthetic sessions.
    #[serde(default)]
    pub world: Option<WorldConfig>,
    /// Ground truth per file, for synthetic sessions.
    #[serde(default)]
    pub truth: Vec<StrideTruth>,
}

/// A manifest together with its demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    /// The manifest.
    pub manifest: SessionManifest,
    /// Demonstrations in manifest order.
    pub demos: Vec<Demonstration>,
}

impl Session {
    /// Pairs each demonstration with its ground truth; fails for sessions
    /// that were not generated.
    pub fn records(&self) -> Result<(WorldConfig, Vec<StrideRecord>)> {
        let world = self
            .manifest
            .world
            .clone()
            .ok_or_else(|| CliError::Config("session has no world description (not a generated session)".into()))?;
        if self.manifest.truth.len() != self.demos.len() {
            return Err(CliError::Config(format!(
                "session lists {} files but {} ground-truth entries",
                self.demos.len(),
                self.manifest.truth.len()
            )));
        }
        let records = self
            .demos
            .iter()
            .zip(&self.manifest.truth)
            .map(|(demo, truth)| {
                if truth.samples != demo.len() {
                    return Err(CliError::Config(format!(
                        "stride {} has {} samples but its ground truth expects {}",
                        truth.index,
                        demo.len(),
                        truth.samples
                    )));
                }
                Ok(StrideRecord {
                    demo: demo.clone(),
                    truth: truth.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok((world, records))
    }
}

/// Writes a generated session as `stride_NNN.csv` files plus `manifest.json`
/// into `dir` and returns the manifest path.
pub fn write_session(dir: &Path, world: &WorldConfig, records: &[StrideRecord], seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let width = records.len().saturating_sub(1).to_string().len().max(3);
    let mut files = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let name = format!("stride_{i:0width$}.csv");
        write_demonstration(&dir.join(&name), &r.demo)?;
        files.push(name);
    }
    let manifest = SessionManifest {
        sample_rate: world.sample_rate,
        files,
        seed: Some(seed),
        world: Some(world.clone()),
        truth: records.iter().map(|r| r.truth.clone()).collect(),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads a manifest and every file it lists.
pub fn read_session(manifest_path: &Path) -> Result<Session> {
    let manifest: SessionManifest = read_json(manifest_path)?;
    if manifest.sample_rate.is_nan() || manifest.sample_rate <= 0.0 {
        return Err(CliError::format(manifest_path, "sample rate must be positive"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let demos = manifest
        .files
        .iter()
        .map(|f| read_demonstration(&base.join(f), manifest.sample_rate))
        .collect::<Result<_>>()?;
    Ok(Session { manifest, demos })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: IPModel,
}

/// Serializes a model document.
pub fn model_to_string(model: &IPModel) -> Result<String> {
    let doc = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates a model document.
pub fn parse_model(text: &str, path: &Path) -> Result<IPModel> {
    let doc: ModelFile = serde_json::from_str(text).map_err(|e| CliError::format(path, e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(CliError::format(path, format!("not a model file (format tag '{}')", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(CliError::format(path, format!("unsupported model version {}", doc.version)));
    }
    doc.model.validate()?;
    Ok(doc.model)
}

/// Writes a model file.
pub fn save_model(path: &Path, model: &IPModel) -> Result<()> {
    write_file(path, model_to_string(model)?.as_bytes())
}

/// Reads a model file.
pub fn load_model(path: &Path) -> Result<IPModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text, path)
}

/// Reads a JSON document.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

/// Writes a pretty-printed JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

/// Writes bytes, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
