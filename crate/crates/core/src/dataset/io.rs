//! CSV ingestion and the `TSDS` binary dataset format.
//!
//! CSV: header `subject_id,age,tr,channel,t0,t1,...`, one row per channel,
//! all rows of a subject contiguous and channels numbered from 0.
//!
//! TSDS (little-endian):
//!
//! ```text
//! "TSDS" | version u32 | subjects u32
//!        | { id_len u32 | id | age f64 | tr f64 | C u32 | T u32 | C*T f64 row-major }*
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::TimeSeriesRecord;
use crate::container::{put_str, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const TSDS_MAGIC: &[u8; 4] = b"TSDS";
pub const TSDS_VERSION: u32 = 1;

struct Pending {
    id: String,
    age: f64,
    tr: f64,
    rows: Vec<Vec<f64>>,
}

pub fn load_csv(path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

pub(crate) fn parse_csv(text: &str, path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers()?.clone();
    let fixed = ["subject_id", "age", "tr", "channel"];
    if header.len() < 5 || header.iter().take(4).ne(fixed.iter().copied()) {
        return Err(err(
            1,
            "header must start with subject_id,age,tr,channel followed by t0,t1,...".into(),
        ));
    }
    for (i, name) in header.iter().skip(4).enumerate() {
        if name != format!("t{i}") {
            return Err(err(1, format!("expected column t{i}, found '{name}'")));
        }
    }
    let t_len = header.len() - 4;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut channels: Option<usize> = None;
    let mut current: Option<Pending> = None;

    let finish = |p: Pending, channels: &mut Option<usize>, line: u64| -> Result<TimeSeriesRecord> {
        match *channels {
            None => *channels = Some(p.rows.len()),
            Some(c) if c != p.rows.len() => {
                return Err(err(
                    line,
                    format!(
                        "subject {} has {} channels, earlier subjects have {c}",
                        p.id,
                        p.rows.len()
                    ),
                ))
            }
            _ => {}
        }
        let series = Matrix::from_rows(&p.rows)?;
        TimeSeriesRecord::new(p.id, p.age, p.tr, series).map_err(|e| err(line, e.to_string()))
    };

    let mut last_line = 1;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        last_line = line;
        if row.len() != header.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let num = |col: usize| -> Result<f64> {
            let cell = &row[col];
            let v: f64 = cell.parse().map_err(|_| {
                err(line, format!("column {} ('{}'): not a number: '{cell}'", col + 1, &header[col]))
            })?;
            if !v.is_finite() {
                return Err(err(
                    line,
                    format!("column {} ('{}'): non-finite value '{cell}'", col + 1, &header[col]),
                ));
            }
            Ok(v)
        };
        let id = row[0].to_string();
        let age = num(1)?;
        let tr = num(2)?;
        let channel: usize = row[3]
            .parse()
            .map_err(|_| err(line, format!("column 4 ('channel'): bad index '{}'", &row[3])))?;
        let values = (4..4 + t_len).map(num).collect::<Result<Vec<f64>>>()?;

        let same_subject = current.as_ref().is_some_and(|p| p.id == id);
        if !same_subject {
            if let Some(p) = current.take() {
                records.push(finish(p, &mut channels, line)?);
            }
            if !seen.insert(id.clone()) {
                return Err(err(line, format!("duplicate subject_id '{id}' (rows must be contiguous)")));
            }
            current = Some(Pending {
                id,
                age,
                tr,
                rows: Vec::new(),
            });
        }
        let p = current.as_mut().unwrap();
        if p.age != age || p.tr != tr {
            return Err(err(line, format!("subject {} changes age or tr between rows", p.id)));
        }
        if channel != p.rows.len() {
            return Err(err(
                line,
                format!("subject {}: expected channel {}, found {channel}", p.id, p.rows.len()),
            ));
        }
        p.rows.push(values);
    }
    if let Some(p) = current.take() {
        records.push(finish(p, &mut channels, last_line)?);
    }
    Ok(records)
}

pub fn write_csv(path: &Path, records: &[TimeSeriesRecord]) -> Result<()> {
    fs::write(path, to_csv_string(records)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_csv_string(records: &[TimeSeriesRecord]) -> Result<String> {
    let t = records.first().map_or(0, |r| r.len());
    if records.iter().any(|r| r.len() != t) {
        return Err(Error::InvalidArgument(
            "CSV export needs equal series lengths".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id".to_string(), "age".into(), "tr".into(), "channel".into()];
    header.extend((0..t).map(|i| format!("t{i}")));
    w.write_record(&header)?;
    for r in records {
        for c in 0..r.channels() {
            let mut fields = vec![
                r.subject_id.clone(),
                r.age.to_string(),
                r.tr_seconds.to_string(),
                c.to_string(),
            ];
            fields.extend(r.series.row(c).iter().map(f64::to_string));
            w.write_record(&fields)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn tsds_bytes(records: &[TimeSeriesRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TSDS_MAGIC);
    put_u32(&mut out, TSDS_VERSION);
    put_u32(&mut out, records.len() as u32);
    for r in records {
        put_str(&mut out, &r.subject_id);
        out.extend_from_slice(&r.age.to_le_bytes());
        out.extend_from_slice(&r.tr_seconds.to_le_bytes());
        put_u32(&mut out, r.channels() as u32);
        put_u32(&mut out, r.len() as u32);
        for v in r.series.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_tsds(bytes: &[u8], path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(TSDS_MAGIC)?;
    r.version(TSDS_VERSION)?;
    let n = r.u32("subject count")? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    let mut seen = HashSet::new();
    for i in 0..n {
        let id = r.string(&format!("subject {i} id"))?;
        let age = r.f64("age")?;
        let tr = r.f64("tr")?;
        let c = r.u32("channel count")? as usize;
        let t = r.u32("length")? as usize;
        let series = r.matrix(c, t, &format!("series of {id}"))?;
        if !seen.insert(id.clone()) {
            return Err(r.corrupt(format!("duplicate subject id '{id}'")));
        }
        let rec = TimeSeriesRecord::new(id, age, tr, series).map_err(|e| r.corrupt(e.to_string()))?;
        records.push(rec);
    }
    r.finish()?;
    Ok(records)
}

pub fn write_tsds(path: &Path, records: &[TimeSeriesRecord]) -> Result<()> {
    fs::write(path, tsds_bytes(records)).map_err(|e| Error::io(path, e))
}

pub fn read_tsds(path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_tsds(&bytes, path)
}

/// Reads a dataset by extension: `.csv` as CSV, anything else as TSDS.
pub fn load_dataset(path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => load_csv(path),
        _ => read_tsds(path),
    }
}
