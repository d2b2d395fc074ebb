//! HTML table ingestion into a normalized occupancy grid.
//!
//! A [`TableGrid`] is the canonical table structure used by every other
//! module: a rectangular `n_rows × n_cols` grid where each position is
//! covered by exactly one [`Cell`]. Spanning cells cover a rectangle anchored
//! at their top-left position.
//!
//! Cell placement follows the HTML table model: each `td`/`th` lands in the
//! first free slot of its row, after slots already claimed by `rowspan`
//! cells from earlier rows. Short rows are padded with empty cells.

use std::collections::HashSet;

use ego_tree::NodeRef;
use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default attribute carrying cell identifiers.
pub const DEFAULT_ID_ATTRIBUTE: &str = "data-cell-id";

/// Browsers clamp `colspan` to this value.
const MAX_COLSPAN: usize = 1000;
/// Browsers clamp `rowspan` to this value.
const MAX_ROWSPAN: usize = 65534;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("malformed html: {0}")]
    MalformedHtml(String),
    #[error("nested table element inside table")]
    NestedTable,
    #[error("span conflict: grid position ({row}, {col}) claimed by two cells")]
    SpanConflict { row: usize, col: usize },
    #[error("table has no rows or no columns")]
    EmptyTable,
    #[error("unknown cell id {0:?}")]
    UnknownCellId(String),
    #[error("duplicate cell id {0:?}")]
    DuplicateCellId(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: String,
    pub text: String,
    pub anchor_row: usize,
    pub anchor_col: usize,
    pub row_span: usize,
    pub col_span: usize,
    pub is_header: bool,
}

impl Cell {
    pub fn covers(&self, row: usize, col: usize) -> bool {
        (self.anchor_row..self.anchor_row + self.row_span).contains(&row)
            && (self.anchor_col..self.anchor_col + self.col_span).contains(&col)
    }

    pub fn is_spanning(&self) -> bool {
        self.row_span > 1 || self.col_span > 1
    }
}

/// Identifier assigned to cells that carry no explicit ID attribute.
pub fn synthetic_cell_id(row: usize, col: usize) -> String {
    format!("r{row}c{col}")
}

/// Validated occupancy grid. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableGrid {
    table_id: String,
    n_rows: usize,
    n_cols: usize,
    cells: Vec<Cell>,
    // row-major, n_rows * n_cols entries, each an index into `cells`
    occupancy: Vec<usize>,
}

impl TableGrid {
    /// Builds a grid from explicit cells, checking full coverage, span bounds
    /// and ID uniqueness. Cells are reordered into row-major anchor order.
    pub fn new(
        table_id: impl Into<String>,
        n_rows: usize,
        n_cols: usize,
        mut cells: Vec<Cell>,
    ) -> Result<Self, TableError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(TableError::EmptyTable);
        }
        cells.sort_by_key(|c| (c.anchor_row, c.anchor_col));

        let mut ids = HashSet::with_capacity(cells.len());
        let mut occupancy = vec![usize::MAX; n_rows * n_cols];
        for (idx, cell) in cells.iter().enumerate() {
            if cell.row_span == 0 || cell.col_span == 0 {
                return Err(TableError::InvalidGrid(format!(
                    "cell {:?} has a zero span",
                    cell.cell_id
                )));
            }
            if cell.anchor_row + cell.row_span > n_rows || cell.anchor_col + cell.col_span > n_cols
            {
                return Err(TableError::InvalidGrid(format!(
                    "cell {:?} extends beyond the {n_rows}x{n_cols} grid",
                    cell.cell_id
                )));
            }
            if !ids.insert(cell.cell_id.as_str()) {
                return Err(TableError::DuplicateCellId(cell.cell_id.clone()));
            }
            for row in cell.anchor_row..cell.anchor_row + cell.row_span {
                for col in cell.anchor_col..cell.anchor_col + cell.col_span {
                    let slot = &mut occupancy[row * n_cols + col];
                    if *slot != usize::MAX {
                        return Err(TableError::SpanConflict { row, col });
                    }
                    *slot = idx;
                }
            }
        }
        if let Some(pos) = occupancy.iter().position(|&s| s == usize::MAX) {
            return Err(TableError::InvalidGrid(format!(
                "position ({}, {}) is not covered by any cell",
                pos / n_cols,
                pos % n_cols
            )));
        }

        Ok(Self {
            table_id: table_id.into(),
            n_rows,
            n_cols,
            cells,
            occupancy,
        })
    }

    pub fn table_id(&self) -> &str {
        &self.table_id
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Cells in row-major anchor order.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Index into [`TableGrid::cells`] of the cell covering `(row, col)`.
    pub fn cell_index_at(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.n_rows && col < self.n_cols {
            Some(self.occupancy[row * self.n_cols + col])
        } else {
            None
        }
    }

    pub fn cell_at(&self, row: usize, col: usize) -> Option<&Cell> {
        self.cell_index_at(row, col).map(|i| &self.cells[i])
    }

    pub fn cell_by_id(&self, cell_id: &str) -> Result<&Cell, TableError> {
        self.cells
            .iter()
            .find(|c| c.cell_id == cell_id)
            .ok_or_else(|| TableError::UnknownCellId(cell_id.to_string()))
    }

    /// Same structure under a different table ID.
    pub fn with_table_id(mut self, table_id: impl Into<String>) -> Self {
        self.table_id = table_id.into();
        self
    }
}

/// Looks up a cell by ID.
pub fn cell_by_id<'g>(grid: &'g TableGrid, cell_id: &str) -> Result<&'g Cell, TableError> {
    grid.cell_by_id(cell_id)
}

/// Collapses whitespace runs to a single space and trims both ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct RawCell {
    text: String,
    explicit_id: Option<String>,
    // 0 means "to the end of the table"
    row_span: usize,
    col_span: usize,
    is_header: bool,
}

/// Parses the single table in `html` into a [`TableGrid`].
///
/// `id_attribute` names the attribute holding cell IDs; cells without it get
/// `r{row}c{col}` from their anchor position.
pub fn parse_html_table(
    html: &str,
    table_id: &str,
    id_attribute: &str,
) -> Result<TableGrid, TableError> {
    let doc = Html::parse_document(html);
    let table = find_single_table(&doc)?;

    if table
        .descendent_elements()
        .skip(1)
        .any(|e| e.value().name() == "table")
    {
        return Err(TableError::NestedTable);
    }

    let rows: Vec<Vec<RawCell>> = table
        .descendent_elements()
        .filter(|e| e.value().name() == "tr")
        .map(|tr| {
            tr.child_elements()
                .filter(|e| matches!(e.value().name(), "td" | "th"))
                .map(|cell| read_cell(cell, id_attribute))
                .collect()
        })
        .collect();

    place_cells(table_id, rows)
}

fn find_single_table(doc: &Html) -> Result<ElementRef<'_>, TableError> {
    let mut tables = doc
        .root_element()
        .descendent_elements()
        .filter(|e| e.value().name() == "table")
        .filter(|e| {
            // top-level: no table ancestor
            !e.ancestors()
                .filter_map(ElementRef::wrap)
                .any(|a| a.value().name() == "table")
        });
    let first = tables
        .next()
        .ok_or_else(|| TableError::MalformedHtml("no table element found".into()))?;
    if tables.next().is_some() {
        return Err(TableError::MalformedHtml(
            "more than one top-level table element".into(),
        ));
    }
    Ok(first)
}

fn read_cell(cell: ElementRef<'_>, id_attribute: &str) -> RawCell {
    let mut text = String::new();
    collect_text(*cell, &mut text);
    let explicit_id = cell
        .value()
        .attr(id_attribute)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let col_span = match parse_span(cell.value().attr("colspan")) {
        Some(0) | None => 1,
        Some(n) => n.min(MAX_COLSPAN),
    };
    let row_span = match parse_span(cell.value().attr("rowspan")) {
        None => 1,
        Some(n) => n.min(MAX_ROWSPAN),
    };
    RawCell {
        text: collapse_whitespace(&text),
        explicit_id,
        row_span,
        col_span,
        is_header: cell.value().name() == "th",
    }
}

/// Leading-digit parse in the manner of browsers; garbage yields `None`.
fn parse_span(value: Option<&str>) -> Option<usize> {
    let digits: String = value?
        .trim_start()
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    if digits.is_empty() {
        return None;
    }
    Some(digits.parse::<usize>().unwrap_or(usize::MAX))
}

fn collect_text(node: NodeRef<'_, Node>, out: &mut String) {
    for child in node.children() {
        match child.value() {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) => match e.name() {
                "script" | "style" | "template" => {}
                "br" => out.push(' '),
                "p" | "div" | "li" | "tr" => {
                    out.push(' ');
                    collect_text(child, out);
                    out.push(' ');
                }
                _ => collect_text(child, out),
            },
            _ => {}
        }
    }
}

fn place_cells(table_id: &str, rows: Vec<Vec<RawCell>>) -> Result<TableGrid, TableError> {
    let n_rows = rows.len();
    if n_rows == 0 {
        return Err(TableError::EmptyTable);
    }

    // occupied[row] grows to the right as cells are placed
    let mut occupied: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut placed: Vec<(usize, usize, RawCell, usize)> = Vec::new();

    for (row, raw_cells) in rows.into_iter().enumerate() {
        let mut col = 0;
        for raw in raw_cells {
            while occupied[row].get(col).copied().unwrap_or(false) {
                col += 1;
            }
            let row_span = match raw.row_span {
                0 => n_rows - row,
                n => n.min(n_rows - row),
            };
            for (r, line) in occupied.iter_mut().enumerate().skip(row).take(row_span) {
                if line.len() < col + raw.col_span {
                    line.resize(col + raw.col_span, false);
                }
                for (c, slot) in line.iter_mut().enumerate().skip(col).take(raw.col_span) {
                    if *slot {
                        return Err(TableError::SpanConflict { row: r, col: c });
                    }
                    *slot = true;
                }
            }
            let col_span = raw.col_span;
            placed.push((row, col, raw, row_span));
            col += col_span;
        }
    }

    let n_cols = occupied.iter().map(Vec::len).max().unwrap_or(0);
    if n_cols == 0 {
        return Err(TableError::EmptyTable);
    }

    let mut cells: Vec<Cell> = placed
        .into_iter()
        .map(|(row, col, raw, row_span)| Cell {
            cell_id: raw
                .explicit_id
                .unwrap_or_else(|| synthetic_cell_id(row, col)),
            text: raw.text,
            anchor_row: row,
            anchor_col: col,
            row_span,
            col_span: raw.col_span,
            is_header: raw.is_header,
        })
        .collect();

    // ragged rows: pad every unclaimed slot with an empty 1x1 cell
    for (row, line) in occupied.iter().enumerate() {
        for col in 0..n_cols {
            if !line.get(col).copied().unwrap_or(false) {
                cells.push(Cell {
                    cell_id: synthetic_cell_id(row, col),
                    text: String::new(),
                    anchor_row: row,
                    anchor_col: col,
                    row_span: 1,
                    col_span: 1,
                    is_header: false,
                });
            }
        }
    }

    TableGrid::new(table_id, n_rows, n_cols, cells)
}
