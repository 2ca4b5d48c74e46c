//! CSV (`id,score,f0,f1,...`) and binary (`CLB1`) dataset files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic   4 bytes "CLB1"
//! version u32
//! n       u64
//! rank    u64, then rank × u64 sample dims
//! n × f64 scores, then n × Π dims × f64 features
//! ```
//!
//! The binary format carries no ids; loaded rows are named by index.

use std::fs;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::binio::Reader;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"CLB1";
pub const DATASET_VERSION: u32 = 1;

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() == 0 || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_error(path, 1, "empty file"));
    }
    if header.len() < 3 || &header[0] != "id" || &header[1] != "score" {
        return Err(parse_error(path, 1, "header must be `id,score,f0,...` with at least one feature"));
    }
    let width = header.len() - 2;

    let (mut ids, mut scores, mut features) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width + 2 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", width + 2, record.len()),
            ));
        }
        let number = |col: usize| -> Result<f64> {
            let raw = &record[col];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(path, line, format!("column `{}`: `{raw}` is not a finite number", &header[col]))),
            }
        };
        ids.push(record[0].to_string());
        scores.push(number(1)?);
        for col in 2..width + 2 {
            features.push(number(col)?);
        }
    }
    if scores.is_empty() {
        return Err(parse_error(path, 1, "no data rows after header"));
    }
    Dataset::new(vec![width], features, scores, ids, Provenance::Csv)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_error(path, line, format!("{kind:?}")),
    }
}

/// Flattens samples; shortest round-trip float formatting keeps values exact.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["id".to_string(), "score".to_string()];
    header.extend((0..data.width()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..data.len() {
        let mut row = vec![data.ids()[i].clone(), data.scores()[i].to_string()];
        row.extend(data.sample(i).iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_binary(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(path, &bytes);
    if r.take(4)? != DATASET_MAGIC {
        return r.fail_at(0, "bad magic, not a CLB1 dataset");
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return r.fail_at(4, format!("unsupported dataset version {version}"));
    }
    let n = r.u64()?;
    if n == 0 {
        return r.fail_at(8, "dataset holds zero samples");
    }
    let rank = r.u64()?;
    if rank == 0 || rank > 8 {
        return r.fail_at(16, format!("unsupported sample rank {rank}"));
    }
    let dims = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let width = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d));
    let values = width.and_then(|w| w.checked_add(1)).and_then(|w| w.checked_mul(n));
    let expected = values.and_then(|v| v.checked_mul(8));
    if dims.contains(&0) || expected != Some(r.remaining() as u64) {
        return r.fail(format!(
            "payload of {} bytes does not match {n} samples of shape {dims:?}",
            r.remaining()
        ));
    }
    let n = n as usize;
    let scores = r.f64s(n)?;
    let features = r.f64s(r.remaining() / 8)?;
    let shape = dims.into_iter().map(|d| d as usize).collect();
    let ids = (0..n).map(|i| i.to_string()).collect();
    Dataset::new(shape, features, scores, ids, Provenance::Binary)
}

pub fn write_binary(path: &Path, data: &Dataset) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 8 * (data.len() + data.features().len()));
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(data.sample_shape().len() as u64).to_le_bytes());
    for &d in data.sample_shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data.scores().iter().chain(data.features()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Dispatches on extension: `.csv` is CSV, anything else is binary.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    if is_csv(path) {
        load_csv(path)
    } else {
        load_binary(path)
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    if is_csv(path) {
        write_csv(path, data)
    } else {
        write_binary(path, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn three_rows_four_features() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "id,score,f0,f1,f2,f3\nx,1.5,1,2,3,4\ny,2,0.5,0,0,-1\nz,4.25,1e-3,2,2,2\n",
        );
        let d = load_csv(&p).unwrap();
        assert_eq!((d.len(), d.width()), (3, 4));
        assert_eq!(d.ids(), &["x", "y", "z"]);
        assert_eq!(d.sample(2), &[1e-3, 2.0, 2.0, 2.0]);
        assert_eq!(d.provenance(), Provenance::Csv);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let line_of = |text: &str| match load_csv(&write(&dir, "b.csv", text)) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("id,score,f0\n"), 1);
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("id,score,f0\na,1,2\nb,1\n"), 3);
        assert_eq!(line_of("id,score,f0\na,1,2\nb,1,2\nc,x,2\n"), 4);
        assert_eq!(line_of("id,score,f0\na,1,nan\n"), 2);
        assert_eq!(line_of("name,score,f0\na,1,2\n"), 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let d = synth_generate(25, &[7], 0.2, 5).unwrap();
        write_csv(&p, &d).unwrap();
        let back = load_csv(&p).unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.scores(), d.scores());
        assert_eq!(back.ids(), d.ids());
    }

    #[test]
    fn binary_round_trip_keeps_tensor_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        let d = synth_generate(9, &[2, 3, 4], 0.1, 5).unwrap();
        write_binary(&p, &d).unwrap();
        let back = load_binary(&p).unwrap();
        assert_eq!(back.sample_shape(), &[2, 3, 4]);
        assert_eq!(back.features(), d.features());
        assert_eq!(back.scores(), d.scores());
        assert_eq!(back.provenance(), Provenance::Binary);
    }

    #[test]
    fn binary_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let d = synth_generate(4, &[3], 0.0, 1).unwrap();
        write_binary(&p, &d).unwrap();
        let good = fs::read(&p).unwrap();
        let offset_of = |bytes: &[u8]| {
            fs::write(&p, bytes).unwrap();
            match load_binary(&p) {
                Err(Error::Format { offset, .. }) => offset,
                other => panic!("{other:?}"),
            }
        };

        let mut bad = good.clone();
        bad[1] = b'?';
        assert_eq!(offset_of(&bad), 0);

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(offset_of(&bad), 4);

        let mut bad = good.clone();
        bad[8..16].copy_from_slice(&0u64.to_le_bytes());
        assert_eq!(offset_of(&bad), 8);

        // header ends at 4 + 4 + 8 + 8 + 8 = 32
        assert_eq!(offset_of(&good[..good.len() - 8]), 32);
        let mut bad = good.clone();
        bad[24..32].copy_from_slice(&5u64.to_le_bytes());
        assert_eq!(offset_of(&bad), 32);
        assert_eq!(offset_of(&good[..10]), 8);
    }

    #[test]
    fn extension_selects_format() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_generate(3, &[2], 0.0, 0).unwrap();
        for name in ["x.csv", "x.CSV", "x.clb"] {
            let p = dir.path().join(name);
            write_dataset(&p, &d).unwrap();
            assert_eq!(load_dataset(&p).unwrap().scores(), d.scores());
        }
        assert_eq!(&fs::read(dir.path().join("x.clb")).unwrap()[..4], b"CLB1");
    }
}
