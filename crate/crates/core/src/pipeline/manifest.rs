use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One frame listed in a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub sequence_id: String,
    pub frame_index: u64,
}

/// Validated list of frames. Relative paths are resolved against `base_dir`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            entries,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Parses JSON Lines; blank lines are skipped.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut lines = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
                line: n + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
            lines.push(n + 1);
        }
        let m = Self {
            entries,
            base_dir: base_dir.into(),
        };
        m.validate_lines(&lines)?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let lines: Vec<usize> = (1..=self.entries.len()).collect();
        self.validate_lines(&lines)
    }

    fn validate_lines(&self, lines: &[usize]) -> Result<()> {
        let mut ids = HashSet::new();
        let mut positions = HashSet::new();
        for (e, &line) in self.entries.iter().zip(lines) {
            let fail = |message: String| Err(Error::Manifest { line, message });
            if e.id.is_empty() || e.id == "." || e.id == ".." || e.id.contains(['/', '\\']) {
                return fail(format!("id {:?} cannot be used as a file name", e.id));
            }
            if e.path.as_os_str().is_empty() {
                return fail(format!("empty path for {}", e.id));
            }
            if !ids.insert(e.id.as_str()) {
                return fail(format!("duplicate id {}", e.id));
            }
            if !positions.insert((e.sequence_id.as_str(), e.frame_index)) {
                return fail(format!(
                    "duplicate position {} / {} (id {})",
                    e.sequence_id, e.frame_index, e.id
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    /// Entries sorted by sequence id, then frame index.
    pub fn ordered(&self) -> Vec<&ManifestEntry> {
        let mut v: Vec<&ManifestEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            a.sequence_id
                .cmp(&b.sequence_id)
                .then(a.frame_index.cmp(&b.frame_index))
        });
        v
    }
}

/// Writes entries as JSON Lines with their paths resolved against `base`.
pub fn write_manifest(path: &Path, entries: &[&ManifestEntry], base: &Path) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        let resolved = ManifestEntry {
            path: base.join(&e.path),
            ..(*e).clone()
        };
        out.push_str(&serde_json::to_string(&resolved).map_err(|err| Error::json(&e.id, err))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
