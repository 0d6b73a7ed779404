//! Rendering of command results as JSON, aligned text, or CSV.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::{CliError, Format};

/// A rectangular table; curves and simulation rows are emitted this way.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    pub header: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            header: header.iter().map(|s| s.to_string()).collect(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, rec: Vec<String>) {
        self.records.push(rec);
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.header).map_err(CliError::io)?;
        for r in &self.records {
            wtr.write_record(r).map_err(CliError::io)?;
        }
        wtr.flush().map_err(|e| CliError::io(e))
    }

    pub fn write_path(&self, path: &Path) -> Result<(), CliError> {
        let f = std::fs::File::create(path)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
        self.write_to(f)
    }
}

pub struct Output {
    pub config: Value,
    pub result: Value,
    pub table: Option<Csv>,
}

/// Arrays longer than this are summarised in text mode.
const TEXT_ARRAY_LIMIT: usize = 12;

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            out.push((
                prefix.into(),
                a.iter().map(scalar).collect::<Vec<_>>().join(", "),
            ));
        }
        Value::Array(a) if a.len() > TEXT_ARRAY_LIMIT => {
            out.push((
                prefix.into(),
                format!("[{} entries; use --format csv or json]", a.len()),
            ));
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        other => out.push((prefix.into(), scalar(other))),
    }
}

fn text(out: &Output) -> String {
    let mut s = String::new();
    for (title, v) in [("config", &out.config), ("result", &out.result)] {
        let mut lines = Vec::new();
        flatten("", v, &mut lines);
        let w = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        s.push_str(&format!("[{title}]\n"));
        for (k, v) in lines {
            s.push_str(&format!("  {k:<w$}  {v}\n"));
        }
    }
    if let Some(t) = &out.table {
        let mut widths: Vec<usize> = t.header.iter().map(String::len).collect();
        for r in &t.records {
            for (j, c) in r.iter().enumerate() {
                widths[j] = widths[j].max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        s.push_str(&format!("[table]\n  {}\n", line(&t.header)));
        for r in &t.records {
            s.push_str(&format!("  {}\n", line(r)));
        }
    }
    s
}

pub fn emit(out: &Output, format: Format) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match format {
        Format::Json => {
            let mut m = Map::new();
            m.insert("config".into(), out.config.clone());
            m.insert("result".into(), out.result.clone());
            let s = serde_json::to_string_pretty(&Value::Object(m))
                .map_err(|e| CliError::usage(e.to_string()))?;
            writeln!(lock, "{s}").map_err(|e| CliError::io(e))
        }
        Format::Text => write!(lock, "{}", text(out)).map_err(|e| CliError::io(e)),
        Format::Csv => match &out.table {
            Some(t) => t.write_to(lock),
            None => {
                // a single record of the result's scalar fields
                let mut lines = Vec::new();
                flatten("", &out.result, &mut lines);
                let t = Csv {
                    header: lines.iter().map(|(k, _)| k.clone()).collect(),
                    records: vec![lines.into_iter().map(|(_, v)| v).collect()],
                };
                t.write_to(lock)
            }
        },
    }
}

pub fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}
