//! Deterministic CSV / Markdown / LaTeX table emission.
//!
//! Numbers are rounded half-to-even only here, at emission time.

use std::fmt::Write as _;
use std::str::FromStr;

use super::AggregateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Markdown,
    Latex,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Markdown, Format::Latex];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
            Format::Latex => "tex",
        }
    }
}

impl FromStr for Format {
    type Err = AggregateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            "latex" | "tex" => Ok(Format::Latex),
            other => Err(AggregateError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Count(usize),
    /// Two decimals, e.g. accuracies.
    Percent(f64),
    /// Two decimals with an explicit `+` on positive values, e.g. drift.
    SignedPercent(f64),
    /// Three decimals, test statistics and correlations.
    Stat(f64),
    /// Four decimals.
    PValue(f64),
    /// Four decimals.
    Cka(f64),
    /// Four decimals, small ratios such as a coefficient of variation.
    Ratio(f64),
    /// Text with a hand-written LaTeX form used verbatim.
    Rich {
        text: String,
        latex: String,
    },
    Missing,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn rich(text: impl Into<String>, latex: impl Into<String>) -> Self {
        Cell::Rich {
            text: text.into(),
            latex: latex.into(),
        }
    }

    pub fn or_missing(v: Option<f64>, f: impl FnOnce(f64) -> Cell) -> Self {
        v.map_or(Cell::Missing, f)
    }
}

/// Fixed-point rendering with round-half-to-even on the exact binary value.
pub fn format_fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn format_signed(x: f64, decimals: usize) -> String {
    let s = format_fixed(x, decimals);
    if s.starts_with('-') || s.chars().all(|c| c == '0' || c == '.') {
        s
    } else {
        format!("+{s}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) | Cell::Rich { text: s, .. } => s.clone(),
            Cell::Count(n) => n.to_string(),
            Cell::Percent(v) => format_fixed(*v, 2),
            Cell::SignedPercent(v) => format_signed(*v, 2),
            Cell::Stat(v) => format_fixed(*v, 3),
            Cell::PValue(v) | Cell::Cka(v) | Cell::Ratio(v) => format_fixed(*v, 4),
            Cell::Missing => "---".to_string(),
        }
    }

    /// The cell as it appears in LaTeX output.
    pub fn latex_text(&self) -> String {
        match self {
            Cell::Text(s) => latex_escape(s),
            Cell::Rich { latex, .. } => latex.clone(),
            other => other.render(),
        }
    }

    fn is_text(&self) -> bool {
        matches!(self, Cell::Text(_) | Cell::Rich { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Align {
    /// Text cells of the first row align left, everything else right.
    Auto,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    /// CSV header.
    pub key: String,
    /// Markdown header.
    pub title: String,
    /// LaTeX header (already escaped).
    pub latex: String,
    pub align: Align,
}

impl Column {
    pub fn new(key: &str, title: &str, latex: &str) -> Self {
        Self {
            key: key.into(),
            title: title.into(),
            latex: latex.into(),
            align: Align::Auto,
        }
    }

    pub fn right(mut self) -> Self {
        self.align = Align::Right;
        self
    }

    pub fn left(mut self) -> Self {
        self.align = Align::Left;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

pub fn emit_table(table: &Table, format: Format) -> Result<String, AggregateError> {
    if table.rows.is_empty() {
        return Err(AggregateError::EmptyTable);
    }
    for row in &table.rows {
        if row.len() != table.columns.len() {
            return Err(AggregateError::RaggedTable {
                expected: table.columns.len(),
                found: row.len(),
            });
        }
    }
    let left: Vec<bool> = table
        .columns
        .iter()
        .zip(&table.rows[0])
        .map(|(col, first)| match col.align {
            Align::Auto => first.is_text(),
            Align::Left => true,
            Align::Right => false,
        })
        .collect();
    let mut out = String::new();
    match format {
        Format::Csv => {
            let header: Vec<String> = table.columns.iter().map(|c| csv_field(&c.key)).collect();
            writeln!(out, "{}", header.join(",")).unwrap();
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|c| csv_field(&c.render())).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        Format::Markdown => {
            let header: Vec<&str> = table.columns.iter().map(|c| c.title.as_str()).collect();
            writeln!(out, "| {} |", header.join(" | ")).unwrap();
            let rule: Vec<&str> = left
                .iter()
                .map(|&l| if l { "---" } else { "---:" })
                .collect();
            writeln!(out, "| {} |", rule.join(" | ")).unwrap();
            for row in &table.rows {
                let cells: Vec<String> =
                    row.iter().map(|c| c.render().replace('|', "\\|")).collect();
                writeln!(out, "| {} |", cells.join(" | ")).unwrap();
            }
        }
        Format::Latex => {
            let spec: String = left.iter().map(|&l| if l { 'l' } else { 'r' }).collect();
            writeln!(out, "\\begin{{tabular}}{{{spec}}}").unwrap();
            writeln!(out, "\\toprule").unwrap();
            let header: Vec<&str> = table.columns.iter().map(|c| c.latex.as_str()).collect();
            writeln!(out, "{} \\\\", header.join(" & ")).unwrap();
            writeln!(out, "\\midrule").unwrap();
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::latex_text).collect();
                writeln!(out, "{} \\\\", cells.join(" & ")).unwrap();
            }
            writeln!(out, "\\bottomrule").unwrap();
            writeln!(out, "\\end{{tabular}}").unwrap();
        }
    }
    Ok(out)
}
