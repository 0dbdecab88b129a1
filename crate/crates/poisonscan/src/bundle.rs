//! Output directories with a manifest of inputs and content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FormatError;
use crate::formats::{read_json, write_json};

/// Version of the file formats and bundle layout.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path, label: &str) -> Result<FileDigest, FormatError> {
    let mut f = fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| FormatError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        bytes += n as u64;
    }
    let sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(FileDigest {
        path: label.to_string(),
        sha256,
        bytes,
    })
}

/// What produced a bundle. Paths are recorded as given on the command
/// line, so rerunning the same command reproduces the same manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub subcommand: String,
    /// Effective settings after configuration files and flag overrides.
    pub settings: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub config_paths: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub output_dir: String,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(subcommand: &str, output_dir: &Path) -> Self {
        RunManifest {
            tool: "poisonscan".into(),
            tool_version: TOOL_VERSION.into(),
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.into(),
            settings: BTreeMap::new(),
            seed: None,
            config_paths: Vec::new(),
            inputs: Vec::new(),
            output_dir: output_dir.display().to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.into(), value.to_string());
    }

    pub fn input(&mut self, path: &Path) -> Result<(), FormatError> {
        let d = digest_file(path, &path.display().to_string())?;
        self.inputs.push(d);
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.inputs.dedup();
        Ok(())
    }

    pub fn config(&mut self, path: &Path) -> Result<(), FormatError> {
        self.config_paths.push(path.display().to_string());
        self.input(path)
    }
}

/// An output directory being filled. Files are listed in the manifest in
/// name order.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, FormatError> {
        fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for a new file, recorded for the manifest.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), FormatError> {
        let p = self.path(name);
        write_json(&p, value)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), FormatError> {
        let p = self.path(name);
        let file = fs::File::create(&p).map_err(|e| FormatError::io(&p, e))?;
        let mut w = csv::Writer::from_writer(file);
        for r in rows {
            w.serialize(r).map_err(|e| FormatError::invalid(&p, e))?;
        }
        w.flush().map_err(|e| FormatError::io(&p, e))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), FormatError> {
        let p = self.path(name);
        fs::write(&p, body).map_err(|e| FormatError::io(&p, e))
    }

    /// Hash every recorded file and write the manifest.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest, FormatError> {
        self.files.sort();
        self.files.dedup();
        manifest.outputs = self
            .files
            .iter()
            .map(|f| digest_file(&self.dir.join(f), f))
            .collect::<Result<_, _>>()?;
        write_json(&self.dir.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

/// Read a bundle's manifest and check every listed output against its hash.
pub fn verify(dir: &Path) -> Result<RunManifest, FormatError> {
    let m: RunManifest = read_json(&dir.join(MANIFEST))?;
    for out in &m.outputs {
        let d = digest_file(&dir.join(&out.path), &out.path)?;
        if d != *out {
            return Err(FormatError::invalid(&dir.join(&out.path), "content does not match the manifest"));
        }
    }
    Ok(m)
}
