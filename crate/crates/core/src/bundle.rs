//! On-disk bundle layout.
//!
//! ```text
//! <root>/
//!   tables/<id>.html        source HTML
//!   exports/<id>.clean.html, .md, .table.json, .layout.json, .svg
//!   qa/<split>.jsonl        one QA pair per line
//!   manifest.json           per-split counts and skip records
//!   report.json             written by `score` when pointed here
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::modality_export::ExportFormat;
use crate::qa_builder::{to_jsonl, Dataset, ModalityBundle, SkipRecord, Split};

#[derive(Debug, Clone)]
pub struct BundleLayout {
    root: PathBuf,
}

impl BundleLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.root.join("tables")
    }

    pub fn exports_dir(&self) -> PathBuf {
        self.root.join("exports")
    }

    pub fn qa_dir(&self) -> PathBuf {
        self.root.join("qa")
    }

    pub fn qa_file(&self, split: Split) -> PathBuf {
        self.qa_dir().join(format!("{split}.jsonl"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn export_path(&self, table_id: &str, format: ExportFormat) -> PathBuf {
        self.exports_dir().join(format.file_name(table_id))
    }
}

/// Writes `contents` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Summary of one split as stored in `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_sources: usize,
    pub n_pairs: usize,
    pub n_skipped: usize,
    pub tables: Vec<String>,
    pub skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub splits: BTreeMap<Split, SplitSummary>,
}

pub fn read_manifest(layout: &BundleLayout) -> Result<ManifestFile> {
    let path = layout.manifest_path();
    if !path.exists() {
        return Ok(ManifestFile::default());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_table_bundle(layout: &BundleLayout, bundle: &ModalityBundle) -> Result<()> {
    write_atomic(
        &layout
            .tables_dir()
            .join(format!("{}.html", bundle.table_id)),
        bundle.source_html.as_bytes(),
    )?;
    for format in ExportFormat::ALL {
        write_atomic(
            &layout.export_path(&bundle.table_id, format),
            bundle.export(format).as_bytes(),
        )?;
    }
    Ok(())
}

/// Writes tables, exports, the split's QA file and merges the split into
/// `manifest.json`. Other splits already in the manifest are kept.
pub fn write_dataset(layout: &BundleLayout, dataset: &Dataset) -> Result<()> {
    for bundle in dataset.bundles.values() {
        write_table_bundle(layout, bundle)?;
    }
    let m = &dataset.manifest;
    write_atomic(&layout.qa_file(m.split), to_jsonl(&m.pairs).as_bytes())?;

    let mut manifest = read_manifest(layout)?;
    manifest.splits.insert(
        m.split,
        SplitSummary {
            n_sources: m.pairs.len() + m.skipped.len(),
            n_pairs: m.pairs.len(),
            n_skipped: m.skipped.len(),
            tables: dataset.bundles.keys().cloned().collect(),
            skipped: m.skipped.clone(),
        },
    );
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&layout.manifest_path(), json.as_bytes())
}
