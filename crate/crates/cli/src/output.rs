//! Stage artifacts. Every JSON file is an envelope
//! `{schema, schema_version, config_hash, seed, build, data}`; every CSV file
//! starts with the columns `schema_version, config_hash, seed, build`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILD: &str = env!("WAVEFLUCT_BUILD");

/// Provenance written into every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
    pub build: String,
}

impl Stamp {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Stamp { config_hash: config_hash.to_string(), seed, build: BUILD.to_string() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub build: String,
    pub data: T,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io(dir))
}

/// Write to a temporary name and rename, so a crashed stage never leaves a
/// truncated artifact behind.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(d) = path.parent() {
        ensure_dir(d)?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, stage: &str, stamp: &Stamp, data: &T) -> CliResult<PathBuf> {
    let env = Envelope {
        schema: format!("wavefluct.{stage}"),
        schema_version: SCHEMA_VERSION,
        config_hash: stamp.config_hash.clone(),
        seed: stamp.seed,
        build: stamp.build.clone(),
        data,
    };
    let path = dir.join(name);
    let mut bytes = serde_json::to_vec_pretty(&env)?;
    bytes.push(b'\n');
    write_bytes(&path, &bytes)?;
    Ok(path)
}

/// Read an artifact of `stage` and check it belongs to this config.
pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str, config_hash: Option<&str>) -> CliResult<T> {
    let text = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Stage(format!("{} not found; run the stage that produces it first", path.display())),
        _ => CliError::Io { path: path.display().to_string(), source: e },
    })?;
    let env: Envelope<T> = serde_json::from_slice(&text)?;
    if env.schema != format!("wavefluct.{stage}") || env.schema_version != SCHEMA_VERSION {
        return Err(CliError::Stage(format!("{}: expected schema wavefluct.{stage} v{SCHEMA_VERSION}, found {} v{}", path.display(), env.schema, env.schema_version)));
    }
    if let Some(h) = config_hash {
        if env.config_hash != h {
            return Err(CliError::Stage(format!("{} was produced by config {}, not {h}; rerun that stage", path.display(), env.config_hash)));
        }
    }
    Ok(env.data)
}

/// CSV with the stamp columns in front of `header`.
pub fn write_csv(dir: &Path, name: &str, stamp: &Stamp, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
    let mut w = csv::Writer::from_writer(vec![]);
    let mut h = vec!["schema_version", "config_hash", "seed", "build"];
    h.extend_from_slice(header);
    w.write_record(&h)?;
    let front = [SCHEMA_VERSION.to_string(), stamp.config_hash.clone(), stamp.seed.to_string(), stamp.build.clone()];
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(front.iter().chain(r.iter()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: name.into(), source: e.into_error() })?;
    let path = dir.join(name);
    write_bytes(&path, &bytes)?;
    Ok(path)
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Little-endian `f64` fields with a JSON header next to them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawHeader {
    pub dtype: String,
    /// Index `(x * ny + y) * nz + z`, one block per component.
    pub order: String,
    pub dims: [usize; 3],
    pub h: f64,
    pub components: Vec<String>,
}

pub fn write_raw(dir: &Path, stem: &str, stage: &str, stamp: &Stamp, dims: [usize; 3], h: f64, comps: &[(&str, &[f64])]) -> CliResult<()> {
    let mut bytes = Vec::with_capacity(comps.iter().map(|c| c.1.len() * 8).sum());
    for (_, data) in comps {
        for x in data.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_bytes(&dir.join(format!("{stem}.f64")), &bytes)?;
    let header = RawHeader {
        dtype: "f64le".into(),
        order: "x-major".into(),
        dims,
        h,
        components: comps.iter().map(|c| c.0.to_string()).collect(),
    };
    write_json(dir, &format!("{stem}.json"), stage, stamp, &header)?;
    Ok(())
}
