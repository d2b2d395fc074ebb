//! Serializations of a table: cleaned HTML, Markdown, JSON structure and
//! layout records.
//!
//! All writers are byte-deterministic. JSON and cleaned HTML keep the full
//! grid structure; Markdown cannot express merged cells, so every grid
//! position repeats the text of the cell covering it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout_engine::{BBox, CellBox, LayoutDocument, TextSpan};
use crate::table_model::{Cell, TableError, TableGrid};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("invalid layout record: {0}")]
    InvalidRecord(String),
    #[error("invalid markdown table: {0}")]
    Markdown(String),
}

/// Output format names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExportFormat {
    CleanHtml,
    Markdown,
    Json,
    Layout,
    Svg,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 5] = [
        ExportFormat::CleanHtml,
        ExportFormat::Markdown,
        ExportFormat::Json,
        ExportFormat::Layout,
        ExportFormat::Svg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExportFormat::CleanHtml => "clean-html",
            ExportFormat::Markdown => "markdown",
            ExportFormat::Json => "json",
            ExportFormat::Layout => "layout",
            ExportFormat::Svg => "svg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// File name inside a bundle's export directory.
    pub fn file_name(self, table_id: &str) -> String {
        let ext = match self {
            ExportFormat::CleanHtml => "clean.html",
            ExportFormat::Markdown => "md",
            ExportFormat::Json => "table.json",
            ExportFormat::Layout => "layout.json",
            ExportFormat::Svg => "svg",
        };
        format!("{table_id}.{ext}")
    }
}

fn escape_html_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

/// `table`/`tr`/`th`/`td` only, with `rowspan`/`colspan` when above 1.
pub fn to_clean_html(grid: &TableGrid) -> String {
    let mut out = String::from("<table>\n");
    let mut cells = grid.cells().iter().peekable();
    for row in 0..grid.n_rows() {
        out.push_str("<tr>");
        while let Some(cell) = cells.next_if(|c| c.anchor_row == row) {
            let tag = if cell.is_header { "th" } else { "td" };
            out.push('<');
            out.push_str(tag);
            if cell.row_span > 1 {
                out.push_str(&format!(" rowspan=\"{}\"", cell.row_span));
            }
            if cell.col_span > 1 {
                out.push_str(&format!(" colspan=\"{}\"", cell.col_span));
            }
            out.push('>');
            out.push_str(&escape_html_text(&cell.text));
            out.push_str("</");
            out.push_str(tag);
            out.push('>');
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    out
}

fn escape_markdown_cell(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '|' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn markdown_line<'a>(cells: impl Iterator<Item = &'a str>) -> String {
    let mut line = String::from("|");
    for text in cells {
        line.push(' ');
        line.push_str(&escape_markdown_cell(text));
        line.push_str(" |");
    }
    line
}

/// GitHub-style pipe table. Spanned cells are duplicated into every
/// position they cover.
pub fn to_markdown(grid: &TableGrid) -> String {
    let mut out = String::new();
    for row in 0..grid.n_rows() {
        let texts = (0..grid.n_cols()).map(|col| {
            grid.cell_at(row, col)
                .map(|c| c.text.as_str())
                .unwrap_or_default()
        });
        out.push_str(&markdown_line(texts));
        out.push('\n');
        if row == 0 {
            out.push_str(&markdown_line((0..grid.n_cols()).map(|_| "---")));
            out.push('\n');
        }
    }
    out
}

fn split_markdown_row(line: &str) -> Result<Vec<String>, ExportError> {
    let inner = line.trim().strip_prefix('|').ok_or_else(|| {
        ExportError::Markdown(format!("row does not start with a pipe: {line:?}"))
    })?;
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut chars = inner.chars();
    let mut closed = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(next @ ('|' | '\\')) => current.push(next),
                Some(other) => {
                    current.push('\\');
                    current.push(other);
                }
                None => current.push('\\'),
            },
            '|' => {
                cells.push(current.trim().to_string());
                current.clear();
                closed = true;
                continue;
            }
            _ => current.push(c),
        }
        closed = false;
    }
    if !closed || !current.trim().is_empty() {
        return Err(ExportError::Markdown(format!(
            "row does not end with a pipe: {line:?}"
        )));
    }
    Ok(cells)
}

/// Reads a pipe table written by [`to_markdown`] back into a text matrix.
pub fn parse_markdown_table(md: &str) -> Result<Vec<Vec<String>>, ExportError> {
    let mut rows = Vec::new();
    for (i, line) in md.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let cells = split_markdown_row(line)?;
        if i == 1 {
            if !cells
                .iter()
                .all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':')))
            {
                return Err(ExportError::Markdown("missing separator line".into()));
            }
            continue;
        }
        rows.push(cells);
    }
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return Err(ExportError::Markdown("rows differ in width".into()));
    }
    Ok(rows)
}

/// Spanless grid with synthetic IDs built from a Markdown table.
pub fn grid_from_markdown(md: &str, table_id: &str) -> Result<TableGrid, ExportError> {
    let rows = parse_markdown_table(md)?;
    let n_rows = rows.len();
    let n_cols = rows.first().map(Vec::len).unwrap_or(0);
    let cells = rows
        .into_iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.into_iter().enumerate().map(move |(c, text)| Cell {
                cell_id: crate::table_model::synthetic_cell_id(r, c),
                text,
                anchor_row: r,
                anchor_col: c,
                row_span: 1,
                col_span: 1,
                is_header: false,
            })
        })
        .collect();
    Ok(TableGrid::new(table_id, n_rows, n_cols, cells)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct JsonCell {
    cell_id: String,
    row: usize,
    col: usize,
    row_span: usize,
    col_span: usize,
    is_header: bool,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct JsonTable {
    table_id: String,
    n_rows: usize,
    n_cols: usize,
    cells: Vec<JsonCell>,
}

/// Compact JSON with one entry per cell (spans kept, never duplicated).
pub fn to_json_table(grid: &TableGrid) -> String {
    let table = JsonTable {
        table_id: grid.table_id().to_string(),
        n_rows: grid.n_rows(),
        n_cols: grid.n_cols(),
        cells: grid
            .cells()
            .iter()
            .map(|c| JsonCell {
                cell_id: c.cell_id.clone(),
                row: c.anchor_row,
                col: c.anchor_col,
                row_span: c.row_span,
                col_span: c.col_span,
                is_header: c.is_header,
                text: c.text.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&table).expect("table json serialization cannot fail")
}

pub fn from_json_table(json: &str) -> Result<TableGrid, ExportError> {
    let table: JsonTable = serde_json::from_str(json)?;
    let cells = table
        .cells
        .into_iter()
        .map(|c| Cell {
            cell_id: c.cell_id,
            text: c.text,
            anchor_row: c.row,
            anchor_col: c.col,
            row_span: c.row_span,
            col_span: c.col_span,
            is_header: c.is_header,
        })
        .collect();
    Ok(TableGrid::new(
        table.table_id,
        table.n_rows,
        table.n_cols,
        cells,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub text: String,
    pub bbox: [u32; 4],
    pub cell_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBoxRecord {
    pub cell_id: String,
    pub bbox: [u32; 4],
}

/// On-disk form of a [`LayoutDocument`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub table_id: String,
    pub page: PageSize,
    pub spans: Vec<SpanRecord>,
    pub cell_boxes: Vec<CellBoxRecord>,
}

fn bbox_array(b: &BBox) -> [u32; 4] {
    [b.x1, b.y1, b.x2, b.y2]
}

fn bbox_from_array(a: [u32; 4], page: PageSize) -> Result<BBox, ExportError> {
    let [x1, y1, x2, y2] = a;
    if x1 >= x2 || y1 >= y2 {
        return Err(ExportError::InvalidRecord(format!("degenerate bbox {a:?}")));
    }
    if x2 > page.width || y2 > page.height {
        return Err(ExportError::InvalidRecord(format!(
            "bbox {a:?} outside {}x{} page",
            page.width, page.height
        )));
    }
    Ok(BBox { x1, y1, x2, y2 })
}

impl From<&LayoutDocument> for LayoutRecord {
    fn from(doc: &LayoutDocument) -> Self {
        Self {
            table_id: doc.table_id.clone(),
            page: PageSize {
                width: doc.page_width,
                height: doc.page_height,
            },
            spans: doc
                .spans
                .iter()
                .map(|s| SpanRecord {
                    text: s.text.clone(),
                    bbox: bbox_array(&s.bbox),
                    cell_id: s.cell_id.clone(),
                })
                .collect(),
            cell_boxes: doc
                .cell_boxes
                .iter()
                .map(|b| CellBoxRecord {
                    cell_id: b.cell_id.clone(),
                    bbox: bbox_array(&b.bbox),
                })
                .collect(),
        }
    }
}

impl TryFrom<LayoutRecord> for LayoutDocument {
    type Error = ExportError;

    fn try_from(rec: LayoutRecord) -> Result<Self, Self::Error> {
        let page = rec.page;
        let spans = rec
            .spans
            .into_iter()
            .map(|s| {
                if s.text.is_empty() {
                    return Err(ExportError::InvalidRecord("empty span text".into()));
                }
                Ok(TextSpan {
                    bbox: bbox_from_array(s.bbox, page)?,
                    text: s.text,
                    cell_id: s.cell_id,
                })
            })
            .collect::<Result<_, _>>()?;
        let cell_boxes = rec
            .cell_boxes
            .into_iter()
            .map(|b| {
                Ok(CellBox {
                    bbox: bbox_from_array(b.bbox, page)?,
                    cell_id: b.cell_id,
                })
            })
            .collect::<Result<_, ExportError>>()?;
        Ok(LayoutDocument {
            table_id: rec.table_id,
            page_width: page.width,
            page_height: page.height,
            spans,
            cell_boxes,
        })
    }
}

pub fn to_layout_records(doc: &LayoutDocument) -> String {
    serde_json::to_string(&LayoutRecord::from(doc)).expect("layout json serialization cannot fail")
}

pub fn from_layout_records(json: &str) -> Result<LayoutDocument, ExportError> {
    let rec: LayoutRecord = serde_json::from_str(json)?;
    rec.try_into()
}
