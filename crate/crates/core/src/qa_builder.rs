//! Cell-level QA dataset construction.
//!
//! Each source question names the ID of its answer cell. The answer stored
//! in the dataset is the raw text of that cell; any computed answer carried
//! by the source record is ignored. Problems with individual questions or
//! tables never abort a build: they become skip records with a
//! machine-readable reason.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::layout_engine::{compute_layout, render_svg, LayoutStyle};
use crate::modality_export::{
    to_clean_html, to_json_table, to_layout_records, to_markdown, ExportFormat,
};
use crate::table_model::{parse_html_table, TableGrid, DEFAULT_ID_ATTRIBUTE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceQA {
    pub qa_id: String,
    pub table_id: String,
    pub question: String,
    pub answer_cell_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub qa_id: String,
    pub table_id: String,
    pub question: String,
    pub answer_cell_id: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    UnknownCellId,
    EmptyAnswer,
    MissingTable,
    RenderFailed,
    DuplicateQaId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub qa_id: String,
    pub table_id: String,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub pairs: Vec<QAPair>,
    pub skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QaError {
    #[error("cell id {0:?} not found in table")]
    UnknownCellId(String),
    #[error("answer cell {0:?} is empty")]
    EmptyAnswer(String),
    #[error("question refers to table {source_table:?} but grid is {grid_table:?}")]
    TableMismatch {
        source_table: String,
        grid_table: String,
    },
}

impl QaError {
    pub fn skip_reason(&self) -> SkipReason {
        match self {
            QaError::UnknownCellId(_) => SkipReason::UnknownCellId,
            QaError::EmptyAnswer(_) => SkipReason::EmptyAnswer,
            QaError::TableMismatch { .. } => SkipReason::MissingTable,
        }
    }
}

/// Resolves the answer cell of `src` in `grid`.
pub fn build_qa_pair(src: &SourceQA, grid: &TableGrid) -> Result<QAPair, QaError> {
    if src.table_id != grid.table_id() {
        return Err(QaError::TableMismatch {
            source_table: src.table_id.clone(),
            grid_table: grid.table_id().to_string(),
        });
    }
    let cell = grid
        .cell_by_id(&src.answer_cell_id)
        .map_err(|_| QaError::UnknownCellId(src.answer_cell_id.clone()))?;
    if cell.text.is_empty() {
        return Err(QaError::EmptyAnswer(src.answer_cell_id.clone()));
    }
    Ok(QAPair {
        qa_id: src.qa_id.clone(),
        table_id: src.table_id.clone(),
        question: src.question.clone(),
        answer_cell_id: src.answer_cell_id.clone(),
        answer: cell.text.clone(),
    })
}

/// Field names used to read source records, for corpora whose JSON keys
/// differ from the defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFieldMap {
    pub qa_id: String,
    pub table_id: String,
    pub question: String,
    pub answer_cell_id: String,
}

impl Default for SourceFieldMap {
    fn default() -> Self {
        Self {
            qa_id: "qa_id".into(),
            table_id: "table_id".into(),
            question: "question".into(),
            answer_cell_id: "answer_cell_id".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct JsonlError {
    pub line: usize,
    pub message: String,
}

fn field_string(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        // numeric IDs show up in some corpora
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(format!("field {key:?} must be a string, got {other}")),
        None => Err(format!("missing field {key:?}")),
    }
}

/// Reads source questions from JSON Lines. Blank lines are ignored; line
/// numbers in errors are 1-based.
pub fn parse_sources_jsonl(
    text: &str,
    fields: &SourceFieldMap,
) -> Result<Vec<SourceQA>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| JsonlError {
            line: idx + 1,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| err("expected a JSON object".into()))?;
        out.push(SourceQA {
            qa_id: field_string(obj, &fields.qa_id).map_err(err)?,
            table_id: field_string(obj, &fields.table_id).map_err(err)?,
            question: field_string(obj, &fields.question).map_err(err)?,
            answer_cell_id: field_string(obj, &fields.answer_cell_id).map_err(err)?,
        });
    }
    Ok(out)
}

/// Reads strictly typed JSON Lines records (QA pairs, predictions).
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| JsonlError {
                line: idx + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Every modality export of one table, plus the source HTML it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalityBundle {
    pub table_id: String,
    pub source_html: String,
    pub clean_html: String,
    pub markdown: String,
    pub table_json: String,
    pub layout_json: String,
    pub svg: String,
}

impl ModalityBundle {
    pub fn export(&self, format: ExportFormat) -> &str {
        match format {
            ExportFormat::CleanHtml => &self.clean_html,
            ExportFormat::Markdown => &self.markdown,
            ExportFormat::Json => &self.table_json,
            ExportFormat::Layout => &self.layout_json,
            ExportFormat::Svg => &self.svg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOptions {
    pub style: LayoutStyle,
    pub id_attribute: String,
    pub split: Split,
    /// Worker threads for per-table processing; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            style: LayoutStyle::default(),
            id_attribute: DEFAULT_ID_ATTRIBUTE.into(),
            split: Split::Test,
            threads: 0,
        }
    }
}

/// Parse, lay out, render and export one table.
pub fn build_bundle(
    table_id: &str,
    html: &str,
    style: &LayoutStyle,
    id_attribute: &str,
) -> Result<(TableGrid, ModalityBundle), String> {
    let grid = parse_html_table(html, table_id, id_attribute).map_err(|e| e.to_string())?;
    let doc = compute_layout(&grid, style).map_err(|e| e.to_string())?;
    let bundle = ModalityBundle {
        table_id: table_id.to_string(),
        source_html: html.to_string(),
        clean_html: to_clean_html(&grid),
        markdown: to_markdown(&grid),
        table_json: to_json_table(&grid),
        layout_json: to_layout_records(&doc),
        svg: render_svg(&doc, &grid, style),
    };
    Ok((grid, bundle))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Successfully rendered tables, keyed by table ID.
    pub bundles: BTreeMap<String, ModalityBundle>,
}

/// Table IDs double as file names, so path syntax is refused.
pub fn is_valid_table_id(table_id: &str) -> bool {
    !table_id.is_empty()
        && table_id != "."
        && table_id != ".."
        && !table_id.contains(['/', '\\', '\0'])
}

pub fn table_path(tables_dir: &Path, table_id: &str) -> Option<PathBuf> {
    if !is_valid_table_id(table_id) {
        return None;
    }
    ["html", "htm"]
        .iter()
        .map(|ext| tables_dir.join(format!("{table_id}.{ext}")))
        .find(|p| p.is_file())
}

enum TableOutcome {
    Missing(String),
    Failed(String),
    Ready(Box<(TableGrid, ModalityBundle)>),
}

fn process_table(tables_dir: &Path, table_id: &str, opts: &BuildOptions) -> TableOutcome {
    let Some(path) = table_path(tables_dir, table_id) else {
        return TableOutcome::Missing(format!("no html file for table {table_id:?}"));
    };
    let html = match fs::read(&path) {
        Ok(bytes) => match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => return TableOutcome::Failed(format!("{}: {e}", path.display())),
        },
        Err(e) => return TableOutcome::Missing(format!("{}: {e}", path.display())),
    };
    match build_bundle(table_id, &html, &opts.style, &opts.id_attribute) {
        Ok(ready) => TableOutcome::Ready(Box::new(ready)),
        Err(e) => {
            warn!("table {table_id}: {e}");
            TableOutcome::Failed(e)
        }
    }
}

/// Builds one split from `sources` over the HTML tables in `tables_dir`.
///
/// Tables are processed in parallel; the result is ordered by `qa_id` and
/// identical across runs.
pub fn build_dataset(sources: &[SourceQA], tables_dir: &Path, opts: &BuildOptions) -> Dataset {
    let table_ids: Vec<&str> = {
        let mut ids: Vec<&str> = sources.iter().map(|s| s.table_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };

    let run = || -> BTreeMap<String, TableOutcome> {
        table_ids
            .par_iter()
            .map(|id| (id.to_string(), process_table(tables_dir, id, opts)))
            .collect()
    };
    let outcomes = if opts.threads > 0 {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
        {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    } else {
        run()
    };

    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut skip = |src: &SourceQA, reason: SkipReason, detail: String| {
        debug!("skip {} ({reason:?}): {detail}", src.qa_id);
        skipped.push(SkipRecord {
            qa_id: src.qa_id.clone(),
            table_id: src.table_id.clone(),
            reason,
            detail,
        });
    };

    for src in sources {
        if !seen.insert(src.qa_id.as_str()) {
            skip(src, SkipReason::DuplicateQaId, "qa_id already used".into());
            continue;
        }
        match &outcomes[&src.table_id] {
            TableOutcome::Missing(detail) => skip(src, SkipReason::MissingTable, detail.clone()),
            TableOutcome::Failed(detail) => skip(src, SkipReason::RenderFailed, detail.clone()),
            TableOutcome::Ready(ready) => match build_qa_pair(src, &ready.0) {
                Ok(pair) => pairs.push(pair),
                Err(e) => skip(src, e.skip_reason(), e.to_string()),
            },
        }
    }

    // stable, so repeated qa_ids keep their source order
    pairs.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    skipped.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));

    let bundles = outcomes
        .into_iter()
        .filter_map(|(id, outcome)| match outcome {
            TableOutcome::Ready(ready) => Some((id, ready.1)),
            _ => None,
        })
        .collect();

    Dataset {
        manifest: DatasetManifest {
            split: opts.split,
            pairs,
            skipped,
        },
        bundles,
    }
}
