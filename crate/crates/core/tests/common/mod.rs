//! Random table generators and independent oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tablecellqa::table_model::{collapse_whitespace, Cell, TableGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generated cell before it goes through HTML.
#[derive(Debug, Clone)]
pub struct GenCell {
    pub row: usize,
    pub col: usize,
    pub row_span: usize,
    pub col_span: usize,
    /// Text as written into the HTML (may carry extra whitespace).
    pub raw_text: String,
    pub is_header: bool,
    pub explicit_id: Option<String>,
}

impl GenCell {
    pub fn expected_text(&self) -> String {
        collapse_whitespace(&self.raw_text)
    }

    pub fn expected_id(&self) -> String {
        self.explicit_id
            .clone()
            .unwrap_or_else(|| format!("r{}c{}", self.row, self.col))
    }
}

#[derive(Debug, Clone)]
pub struct GenTable {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major by anchor.
    pub cells: Vec<GenCell>,
}

const PIECES: &[&str] = &[
    "a", "B", "7", "3,466", "x", "|", "\\", "&", "<b>", "当", "期", "純", "利益", "%", "-", "(",
    ")", "yen", "  ", " ", "\n",
];

pub fn random_text<R: Rng>(rng: &mut R, max_chars: usize) -> String {
    if rng.gen_bool(0.12) {
        return String::new();
    }
    let mut s = String::new();
    let target = rng.gen_range(1..=max_chars.max(1));
    while s.chars().count() < target {
        s.push_str(PIECES.choose(rng).unwrap());
    }
    let s: String = s.chars().take(target).collect();
    s
}

/// Random rectangular tiling of an `n_rows × n_cols` grid by spanning cells.
pub fn random_table<R: Rng>(
    rng: &mut R,
    max_rows: usize,
    max_cols: usize,
    max_chars: usize,
) -> GenTable {
    let n_rows = rng.gen_range(1..=max_rows);
    let n_cols = rng.gen_range(1..=max_cols);
    let mut taken = vec![vec![false; n_cols]; n_rows];
    let mut cells = Vec::new();
    let mut next_id = 0;
    for r in 0..n_rows {
        for c in 0..n_cols {
            if taken[r][c] {
                continue;
            }
            let free_right = (c..n_cols).take_while(|&k| !taken[r][k]).count();
            let col_span = if rng.gen_bool(0.7) {
                1
            } else {
                rng.gen_range(1..=free_right)
            };
            let free_down = (r..n_rows)
                .take_while(|&k| (c..c + col_span).all(|j| !taken[k][j]))
                .count();
            let row_span = if rng.gen_bool(0.7) {
                1
            } else {
                rng.gen_range(1..=free_down)
            };
            for row in taken.iter_mut().skip(r).take(row_span) {
                for slot in row.iter_mut().skip(c).take(col_span) {
                    *slot = true;
                }
            }
            let explicit_id = if rng.gen_bool(0.5) {
                next_id += 1;
                Some(format!("cell-{next_id}"))
            } else {
                None
            };
            cells.push(GenCell {
                row: r,
                col: c,
                row_span,
                col_span,
                raw_text: random_text(rng, max_chars),
                is_header: rng.gen_bool(0.2),
                explicit_id,
            });
        }
    }
    GenTable {
        n_rows,
        n_cols,
        cells,
    }
}

/// Random tiling with no spanning cells.
pub fn random_spanless_table<R: Rng>(
    rng: &mut R,
    max_rows: usize,
    max_cols: usize,
    max_chars: usize,
) -> GenTable {
    let mut t = random_table(rng, max_rows, max_cols, max_chars);
    let (n_rows, n_cols) = (t.n_rows, t.n_cols);
    let mut cells = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            let src = t
                .cells
                .iter()
                .find(|g| {
                    g.row <= r && r < g.row + g.row_span && g.col <= c && c < g.col + g.col_span
                })
                .unwrap();
            cells.push(GenCell {
                row: r,
                col: c,
                row_span: 1,
                col_span: 1,
                raw_text: src.raw_text.clone(),
                is_header: src.is_header,
                explicit_id: None,
            });
        }
    }
    t.cells = cells;
    t
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes the table as HTML with noise the parser must ignore.
pub fn to_html(t: &GenTable) -> String {
    let mut html = String::from("<html><body>\n<table class=\"fin\" border=\"1\">\n<tbody>\n");
    for r in 0..t.n_rows {
        html.push_str("  <tr style=\"height:1em\">");
        for cell in t.cells.iter().filter(|c| c.row == r) {
            let tag = if cell.is_header { "th" } else { "td" };
            let _ = write!(html, "<{tag} align=\"right\"");
            if let Some(id) = &cell.explicit_id {
                let _ = write!(html, " data-cell-id=\"{id}\"");
            }
            if cell.row_span > 1 {
                let _ = write!(html, " rowspan=\"{}\"", cell.row_span);
            }
            if cell.col_span > 1 {
                let _ = write!(html, " colspan={}", cell.col_span);
            }
            let _ = write!(html, ">{}</{tag}>", escape(&cell.raw_text));
        }
        html.push_str("</tr>\n");
    }
    html.push_str("</tbody>\n</table>\n</body></html>\n");
    html
}

/// Text matrix by painting each generated rectangle, independent of the
/// parser's occupancy map.
pub fn expand_texts(t: &GenTable) -> Vec<Vec<String>> {
    let mut m = vec![vec![None; t.n_cols]; t.n_rows];
    for cell in &t.cells {
        for row in m.iter_mut().skip(cell.row).take(cell.row_span) {
            for slot in row.iter_mut().skip(cell.col).take(cell.col_span) {
                assert!(slot.is_none(), "generator produced overlap");
                *slot = Some(cell.expected_text());
            }
        }
    }
    m.into_iter()
        .map(|row| {
            row.into_iter()
                .map(|s| s.expect("generator left a gap"))
                .collect()
        })
        .collect()
}

/// Text matrix by painting a grid's cells directly.
pub fn grid_texts(g: &TableGrid) -> Vec<Vec<String>> {
    let mut m = vec![vec![String::new(); g.n_cols()]; g.n_rows()];
    for cell in g.cells() {
        for row in m.iter_mut().skip(cell.anchor_row).take(cell.row_span) {
            for slot in row.iter_mut().skip(cell.anchor_col).take(cell.col_span) {
                *slot = cell.text.clone();
            }
        }
    }
    m
}

/// Cells with IDs stripped, for comparisons "up to IDs".
pub fn structure(g: &TableGrid) -> Vec<(usize, usize, usize, usize, bool, String)> {
    g.cells()
        .iter()
        .map(|c: &Cell| {
            (
                c.anchor_row,
                c.anchor_col,
                c.row_span,
                c.col_span,
                c.is_header,
                c.text.clone(),
            )
        })
        .collect()
}

/// Full-coverage and span-closure check; returns a description of the
/// first violation.
pub fn grid_violation(g: &TableGrid) -> Option<String> {
    let mut hits = vec![0usize; g.n_rows() * g.n_cols()];
    for (idx, cell) in g.cells().iter().enumerate() {
        if cell.row_span == 0 || cell.col_span == 0 {
            return Some(format!("zero span on {}", cell.cell_id));
        }
        for r in cell.anchor_row..cell.anchor_row + cell.row_span {
            for c in cell.anchor_col..cell.anchor_col + cell.col_span {
                if r >= g.n_rows() || c >= g.n_cols() {
                    return Some(format!("{} leaves the grid", cell.cell_id));
                }
                if g.cell_index_at(r, c) != Some(idx) {
                    return Some(format!("({r},{c}) does not map back to {}", cell.cell_id));
                }
                hits[r * g.n_cols() + c] += 1;
            }
        }
    }
    hits.iter()
        .position(|&h| h != 1)
        .map(|p| format!("position {p} covered {} times", hits[p]))
}
