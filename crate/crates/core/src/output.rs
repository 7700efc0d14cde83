//! CSV and JSON writers. Every file carries the resolved config and the code
//! version: CSV files as leading `#` comment lines, JSON files under `meta`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub fn comment_block(config_toml: &str) -> String {
    let mut s = format!("# {}\r\n", crate::VERSION);
    for line in config_toml.lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push_str("\r\n");
    }
    s
}

/// Writes comment lines, one header row and the serialized rows.
pub fn write_csv<S: Serialize>(
    path: &Path,
    config_toml: &str,
    columns: &[&str],
    rows: &[S],
) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(comment_block(config_toml).as_bytes())?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::CRLF)
        .from_writer(file);
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'a str,
    config: &'a str,
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    meta: Meta<'a>,
    result: &'a T,
}

pub fn to_json<T: Serialize>(config_toml: &str, value: &T) -> Result<String> {
    let w = Wrapped {
        meta: Meta {
            version: crate::VERSION,
            config: config_toml,
        },
        result: value,
    };
    serde_json::to_string_pretty(&w).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, config_toml: &str, value: &T) -> Result<()> {
    let mut s = to_json(config_toml, value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads a CSV written by `write_csv`, skipping comment lines.
pub fn read_csv_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((headers, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        eta: f64,
        value: f64,
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(
            &p,
            "seed = 1\n[params]\nq = 0.8",
            &["eta", "value"],
            &[Row {
                eta: 0.5,
                value: 0.25,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# cascade "));
        assert!(text.contains("# [params]\r\n"));
        let (h, rows) = read_csv_records(&p).unwrap();
        assert_eq!(h, vec!["eta", "value"]);
        assert_eq!(rows, vec![vec!["0.5".to_string(), "0.25".to_string()]]);
    }

    #[test]
    fn empty_table_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_csv::<Row>(&p, "", &["eta", "value"], &[]).unwrap();
        let (h, rows) = read_csv_records(&p).unwrap();
        assert_eq!(h.len(), 2);
        assert!(rows.is_empty());
    }
}
