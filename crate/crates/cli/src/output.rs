//! Labelled matrices and their table, CSV and JSON renderings.

use std::fmt::Write as _;

use clap::ValueEnum;
use mapfluct::verify::CheckReport;
use mapfluct::C64;
use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// A named matrix with row and column labels.
#[derive(Clone, Debug)]
pub struct Block {
    pub name: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<C64>>,
    pub real: bool,
}

impl Block {
    pub fn real(name: &str, rows: Vec<String>, cols: Vec<String>, m: &DMatrix<f64>) -> Self {
        let values = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| C64::new(m[(i, j)], 0.0)).collect())
            .collect();
        Block {
            name: name.into(),
            rows,
            cols,
            values,
            real: true,
        }
    }

    pub fn complex(
        name: &str,
        rows: Vec<String>,
        cols: Vec<String>,
        m: &mapfluct::CMatrix,
    ) -> Self {
        let values = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        Block {
            name: name.into(),
            rows,
            cols,
            values,
            real: false,
        }
    }

    /// One column of named values.
    pub fn column(name: &str, col: &str, entries: &[(String, f64)]) -> Self {
        Block {
            name: name.into(),
            rows: entries.iter().map(|(k, _)| k.clone()).collect(),
            cols: vec![col.into()],
            values: entries
                .iter()
                .map(|(_, v)| vec![C64::new(*v, 0.0)])
                .collect(),
            real: true,
        }
    }

    fn cell(&self, z: C64) -> String {
        if self.real {
            z.re.to_string()
        } else {
            fmt_complex(z)
        }
    }
}

/// `re+imi` with the shortest round-trip digits.
pub fn fmt_complex(z: C64) -> String {
    if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn csv_error(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("writing CSV: {e}"))
}

pub fn render_blocks(blocks: &[Block], format: Format) -> Result<String, CliError> {
    match format {
        Format::Table => Ok(blocks_table(blocks)),
        Format::Csv => blocks_csv(blocks),
        Format::Json => Ok(blocks_json(blocks)),
    }
}

fn blocks_table(blocks: &[Block]) -> String {
    let mut out = String::new();
    for (k, b) in blocks.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{}", b.name);
        let cells: Vec<Vec<String>> = b
            .values
            .iter()
            .map(|r| r.iter().map(|&z| b.cell(z)).collect())
            .collect();
        let label = b.rows.iter().map(String::len).max().unwrap_or(0);
        let width = cells
            .iter()
            .flatten()
            .map(String::len)
            .chain(b.cols.iter().map(String::len))
            .max()
            .unwrap_or(1);
        let _ = write!(out, "{:label$}", "");
        for c in &b.cols {
            let _ = write!(out, "  {c:>width$}");
        }
        out.push('\n');
        for (name, row) in b.rows.iter().zip(&cells) {
            let _ = write!(out, "{name:<label$}");
            for c in row {
                let _ = write!(out, "  {c:>width$}");
            }
            out.push('\n');
        }
    }
    out
}

/// A single block is written wide (`row,<cols>`); several blocks are
/// written long (`matrix,row,col,value`).
fn blocks_csv(blocks: &[Block]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let [b] = blocks {
        let mut header = vec!["row".to_string()];
        header.extend(b.cols.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for (name, row) in b.rows.iter().zip(&b.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|&z| b.cell(z)));
            w.write_record(&rec).map_err(csv_error)?;
        }
    } else {
        w.write_record(["matrix", "row", "col", "value"])
            .map_err(csv_error)?;
        for b in blocks {
            for (name, row) in b.rows.iter().zip(&b.values) {
                for (col, &z) in b.cols.iter().zip(row) {
                    w.write_record([b.name.as_str(), name, col, &b.cell(z)])
                        .map_err(csv_error)?;
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

fn blocks_json(blocks: &[Block]) -> String {
    let mut top = Map::new();
    for b in blocks {
        let values = if b.real {
            json!(b
                .values
                .iter()
                .map(|r| r.iter().map(|z| z.re).collect::<Vec<_>>())
                .collect::<Vec<_>>())
        } else {
            let part = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
                b.values.iter().map(|r| r.iter().map(f).collect()).collect()
            };
            json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
        };
        top.insert(
            b.name.clone(),
            json!({ "rows": b.rows, "cols": b.cols, "values": values }),
        );
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("JSON value serializes");
    s.push('\n');
    s
}

pub fn render_reports(reports: &[CheckReport], format: Format) -> Result<String, CliError> {
    match format {
        Format::Table => Ok(reports
            .iter()
            .map(CheckReport::to_table)
            .collect::<Vec<_>>()
            .join("\n")),
        Format::Json => {
            let mut s = if let [r] = reports {
                r.to_json()
            } else {
                serde_json::to_string_pretty(reports).expect("reports serialize")
            };
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "suite",
                "name",
                "analytic",
                "estimate",
                "se",
                "z",
                "residual",
                "tol",
                "pass",
                "informational",
            ])
            .map_err(csv_error)?;
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            for r in reports {
                for c in &r.checks {
                    w.write_record([
                        r.suite.clone(),
                        c.name.clone(),
                        opt(c.analytic),
                        opt(c.estimate),
                        opt(c.se),
                        opt(c.z),
                        opt(c.residual),
                        c.tol.to_string(),
                        c.pass.to_string(),
                        c.informational.to_string(),
                    ])
                    .map_err(csv_error)?;
                }
            }
            let bytes = w.into_inner().map_err(csv_error)?;
            String::from_utf8(bytes).map_err(csv_error)
        }
    }
}
