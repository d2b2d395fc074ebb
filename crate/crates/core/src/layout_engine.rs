//! Deterministic box layout and SVG rendering for table grids.
//!
//! Text is measured with a fixed-advance font model: ASCII characters take
//! `ascii_advance` pixels, everything else `wide_advance`. Text never wraps.
//! All coordinates are integer pixels with the origin at the top-left
//! corner of the page.
//!
//! Grid lines use a collapsed-border model. Column line `L[j+1]` sits at
//! `L[j] + border + pad + W[j] + pad`, and the page closes with one trailing
//! border. Rows are analogous with a fixed content height of `em`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table_model::TableGrid;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("invalid layout style: {0}")]
    InvalidStyle(String),
    #[error("layout coordinate {coordinate}px exceeds the page limit of {limit}px")]
    OverflowingStyle { coordinate: u64, limit: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutStyle {
    pub em: u32,
    pub ascii_advance: u32,
    pub wide_advance: u32,
    pub pad: u32,
    pub border: u32,
    /// Largest coordinate a layout may produce.
    pub page_limit: u32,
}

impl Default for LayoutStyle {
    fn default() -> Self {
        Self {
            em: 16,
            ascii_advance: 8,
            wide_advance: 16,
            pad: 4,
            border: 1,
            page_limit: 20_000,
        }
    }
}

impl LayoutStyle {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let fields = [
            ("em", self.em),
            ("ascii_advance", self.ascii_advance),
            ("wide_advance", self.wide_advance),
            ("pad", self.pad),
            ("border", self.border),
            ("page_limit", self.page_limit),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(LayoutError::InvalidStyle(format!("{name} must be > 0")));
        }
        if self.ascii_advance > self.wide_advance {
            return Err(LayoutError::InvalidStyle(
                "ascii_advance must not exceed wide_advance".into(),
            ));
        }
        if u64::from(self.wide_advance) > 2 * u64::from(self.em) {
            return Err(LayoutError::InvalidStyle(
                "wide_advance must not exceed 2 * em".into(),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box, `(x1, y1)` top-left and `(x2, y2)` bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        debug_assert!(x2 > x1 && y2 > y1, "degenerate bbox");
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    /// True when the open interiors intersect.
    pub fn overlaps(&self, other: &BBox) -> bool {
        self.x1 < other.x2 && other.x1 < self.x2 && self.y1 < other.y2 && other.y1 < self.y2
    }

    /// Center in doubled coordinates, so it stays integral.
    pub fn center2(&self) -> (u64, u64) {
        (
            u64::from(self.x1) + u64::from(self.x2),
            u64::from(self.y1) + u64::from(self.y2),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextSpan {
    pub text: String,
    pub bbox: BBox,
    pub cell_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellBox {
    pub cell_id: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutDocument {
    pub table_id: String,
    pub page_width: u32,
    pub page_height: u32,
    /// Row-major by cell anchor.
    pub spans: Vec<TextSpan>,
    /// One box per cell, in the grid's cell order.
    pub cell_boxes: Vec<CellBox>,
}

impl LayoutDocument {
    pub fn cell_box(&self, cell_id: &str) -> Option<&BBox> {
        self.cell_boxes
            .iter()
            .find(|b| b.cell_id == cell_id)
            .map(|b| &b.bbox)
    }
}

pub fn char_advance(c: char, style: &LayoutStyle) -> u32 {
    if c.is_ascii() {
        style.ascii_advance
    } else {
        style.wide_advance
    }
}

pub fn measure_text(text: &str, style: &LayoutStyle) -> u64 {
    text.chars()
        .map(|c| u64::from(char_advance(c, style)))
        .sum()
}

/// Content width of each column.
///
/// Single-column cells set the base widths. Multi-column cells, taken from
/// narrowest span to widest and row-major within a span, then spread any
/// shortfall evenly over the columns they cover, giving leftover pixels to
/// the leftmost columns.
pub fn column_widths(grid: &TableGrid, style: &LayoutStyle) -> Vec<u64> {
    let mut widths = vec![0u64; grid.n_cols()];
    let mut spanning = Vec::new();
    for cell in grid.cells() {
        let w = measure_text(&cell.text, style);
        if cell.col_span == 1 {
            let slot = &mut widths[cell.anchor_col];
            *slot = (*slot).max(w);
        } else {
            spanning.push((cell.col_span, cell.anchor_row, cell.anchor_col, w));
        }
    }
    spanning.sort_unstable();
    for (span, _, col, w) in spanning {
        let covered: u64 = widths[col..col + span].iter().sum();
        if w > covered {
            let excess = w - covered;
            let span = span as u64;
            let (each, rem) = (excess / span, excess % span);
            for (k, slot) in widths[col..col + span as usize].iter_mut().enumerate() {
                *slot += each + u64::from((k as u64) < rem);
            }
        }
    }
    widths
}

/// Vertical grid-line positions `L[0..=n_cols]`.
pub fn column_lines(grid: &TableGrid, style: &LayoutStyle) -> Vec<u64> {
    let fixed = u64::from(style.border) + 2 * u64::from(style.pad);
    let mut lines = Vec::with_capacity(grid.n_cols() + 1);
    let mut x = 0u64;
    lines.push(x);
    for w in column_widths(grid, style) {
        x += fixed + w;
        lines.push(x);
    }
    lines
}

/// Horizontal grid-line positions `R[0..=n_rows]`.
pub fn row_lines(grid: &TableGrid, style: &LayoutStyle) -> Vec<u64> {
    let step = u64::from(style.border) + 2 * u64::from(style.pad) + u64::from(style.em);
    (0..=grid.n_rows() as u64).map(|i| i * step).collect()
}

pub fn compute_layout(
    grid: &TableGrid,
    style: &LayoutStyle,
) -> Result<LayoutDocument, LayoutError> {
    style.validate()?;
    let cols = column_lines(grid, style);
    let rows = row_lines(grid, style);
    let border = u64::from(style.border);
    let pad = u64::from(style.pad);

    let page_width = cols[grid.n_cols()] + border;
    let page_height = rows[grid.n_rows()] + border;
    let px = |v: u64| -> Result<u32, LayoutError> {
        if v > u64::from(style.page_limit) {
            Err(LayoutError::OverflowingStyle {
                coordinate: v,
                limit: style.page_limit,
            })
        } else {
            Ok(v as u32)
        }
    };
    // every coordinate is bounded by the page size
    let page_width = px(page_width)?;
    let page_height = px(page_height)?;

    let mut spans = Vec::new();
    let mut cell_boxes = Vec::with_capacity(grid.cells().len());
    for cell in grid.cells() {
        let left = cols[cell.anchor_col];
        let top = rows[cell.anchor_row];
        let bbox = BBox::new(
            px(left + border)?,
            px(top + border)?,
            px(cols[cell.anchor_col + cell.col_span])?,
            px(rows[cell.anchor_row + cell.row_span])?,
        );
        cell_boxes.push(CellBox {
            cell_id: cell.cell_id.clone(),
            bbox,
        });
        if cell.text.is_empty() {
            continue;
        }
        let x1 = left + border + pad;
        let y1 = top + border + pad;
        spans.push(TextSpan {
            text: cell.text.clone(),
            bbox: BBox::new(
                px(x1)?,
                px(y1)?,
                px(x1 + measure_text(&cell.text, style))?,
                px(y1 + u64::from(style.em))?,
            ),
            cell_id: cell.cell_id.clone(),
        });
    }

    Ok(LayoutDocument {
        table_id: grid.table_id().to_string(),
        page_width,
        page_height,
        spans,
        cell_boxes,
    })
}

/// Shortest decimal form, no trailing zeros.
pub(crate) fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub(crate) fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Text baseline for a span whose box starts at `y1`.
pub fn baseline(y1: u32, style: &LayoutStyle) -> f64 {
    // one division of exact integers keeps the result correctly rounded
    (5.0 * f64::from(y1) + 4.0 * f64::from(style.em)) / 5.0
}

/// Draws the table: one stroked rectangle per cell along its grid lines and
/// one text element per span.
pub fn render_svg(doc: &LayoutDocument, grid: &TableGrid, style: &LayoutStyle) -> String {
    let half = f64::from(style.border) / 2.0;
    let border = style.border;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = doc.page_width,
        h = doc.page_height
    );
    for cell in grid.cells() {
        let Some(b) = doc.cell_box(&cell.cell_id) else {
            continue;
        };
        // stroke centred on the border band surrounding the cell box
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="{}"/>"#,
            fmt_num(f64::from(b.x1 - border) + half),
            fmt_num(f64::from(b.y1 - border) + half),
            fmt_num(f64::from(b.width() + border)),
            fmt_num(f64::from(b.height() + border)),
            border
        );
    }
    for span in &doc.spans {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="{}">{}</text>"#,
            span.bbox.x1,
            fmt_num(baseline(span.bbox.y1, style)),
            style.em,
            escape_xml(&span.text)
        );
    }
    out.push_str("</svg>\n");
    out
}
