use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::campaign::{ResultRecord, Rows};
use super::config::Format;
use super::HarnessError;

fn csv_rows<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| HarnessError::Encode(e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Encode(e.to_string()))
}

/// Encodes a record. JSON carries config, summary and rows; CSV carries the
/// rows only, one header line plus one line per row.
pub fn render(record: &ResultRecord, format: Format) -> Result<Vec<u8>, HarnessError> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(record)
                .map_err(|e| HarnessError::Encode(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => match &record.rows {
            Rows::Branches(r) => csv_rows(r),
            Rows::Trials(r) => csv_rows(r),
            Rows::Decoys(r) => csv_rows(r),
            Rows::Sweep(r) => csv_rows(r),
        },
    }
}

/// Writes via a temporary file in the destination directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn write_record(
    record: &ResultRecord,
    format: Format,
    path: &Path,
) -> Result<(), HarnessError> {
    write_atomic(path, &render(record, format)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{load_config_str, run_campaign};

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let cfg =
            load_config_str(r#"{"kind":"montecarlo","d":2,"m":2,"n":1,"trials":30,"seed":1}"#)
                .unwrap();
        let rec = run_campaign(&cfg).unwrap();
        let text = String::from_utf8(render(&rec, Format::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 31);
        assert_eq!(
            lines[0],
            "trial,gbs,controllers,r_double_prime,aux,success,probability,fidelity"
        );
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(reader.records().count(), 30);
    }

    #[test]
    fn json_round_trips_floats() {
        let cfg = load_config_str(r#"{"kind":"enumerate","d":3,"m":1,"n":1,"coeffs":"random:2"}"#)
            .unwrap();
        let rec = run_campaign(&cfg).unwrap();
        let bytes = render(&rec, Format::Json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let p = v["rows"][0]["probability"].as_f64().unwrap();
        let crate::harness::Rows::Branches(rows) = &rec.rows else {
            panic!()
        };
        assert_eq!(p.to_bits(), rows[0].probability.to_bits());
        assert_eq!(v["summary"]["kind"], "enumerate");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
