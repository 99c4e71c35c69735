//! CSV and JSON reading and writing.
//!
//! Numeric CSV files may start with a header row; it is detected by the
//! first record failing to parse as numbers.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::mmd::DistanceMatrix;
use crate::parzen::Sample;
use crate::{Error, Result};

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = reader(path)?;
    rdr.records()
        .map(|r| r.map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path, e.to_string())
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: `{field}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(
            path,
            format!("line {line}: non-finite value `{field}`"),
        ))
    }
}

fn is_numeric_record(rec: &csv::StringRecord) -> bool {
    rec.iter().all(|f| f.parse::<f64>().is_ok())
}

/// Optional header plus numeric rows.
pub type NumericCsv = (Option<Vec<String>>, Vec<Vec<f64>>);

/// A numeric matrix, one row per record, with an optional header.
pub fn read_numeric_csv(path: impl AsRef<Path>) -> Result<NumericCsv> {
    let path = path.as_ref();
    let recs = records(path)?;
    let mut header = None;
    let mut start = 0;
    if let Some(first) = recs.first() {
        if !is_numeric_record(first) {
            header = Some(first.iter().map(str::to_string).collect());
            start = 1;
        }
    }
    let rows = recs[start..]
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            rec.iter()
                .map(|f| parse_f64(path, k + start + 1, f))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

/// A sample file: one point per row. The label is the file stem.
pub fn read_sample_csv(path: impl AsRef<Path>) -> Result<Sample> {
    let path = path.as_ref();
    let (_, rows) = read_numeric_csv(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Sample::new(rows)
        .map_err(|e| Error::parse(path, e.to_string()))
        .map(|s| s.with_label(label))
}

pub fn write_sample_csv(path: impl AsRef<Path>, sample: &Sample) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let header: Vec<String> = (1..=sample.dim()).map(|k| format!("x{k}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for p in sample.points() {
        w.write_record(p.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Every `*.csv` file in `dir`, as samples sorted by label.
pub fn read_samples_dir(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::parse(dir, "no .csv sample files found"));
    }
    paths.iter().map(read_sample_csv).collect()
}

/// Long-form distances: `label_i,label_j,distance` for each observed pair
/// with `i < j`.
pub fn write_distances_csv(path: impl AsRef<Path>, d: &DistanceMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["label_i", "label_j", "distance"])
        .map_err(|e| csv_err(path, e))?;
    for (i, j) in d.observed_pairs() {
        let v = d.entries()[(i, j)];
        w.write_record([
            d.labels()[i].as_str(),
            d.labels()[j].as_str(),
            &v.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_distances_csv`]. Labels are ordered by first
/// appearance; pairs not listed are unobserved.
pub fn read_distances_csv(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let recs = records(path)?;
    let start = usize::from(
        recs.first()
            .is_some_and(|r| r.get(2).is_some_and(|f| f.parse::<f64>().is_err())),
    );
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut triples = Vec::new();
    for (k, rec) in recs[start..].iter().enumerate() {
        let line = k + start + 1;
        if rec.len() != 3 {
            return Err(Error::parse(
                path,
                format!("line {line}: expected 3 fields, got {}", rec.len()),
            ));
        }
        let mut id = |s: &str| {
            *index.entry(s.to_string()).or_insert_with(|| {
                labels.push(s.to_string());
                labels.len() - 1
            })
        };
        let (i, j) = (id(&rec[0]), id(&rec[1]));
        triples.push((line, i, j, parse_f64(path, line, &rec[2])?));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::parse(path, "no distances"));
    }
    let mut entries = DMatrix::zeros(n, n);
    let mut omega = DMatrix::from_element(n, n, false);
    for (line, i, j, v) in triples {
        if i == j {
            if v != 0.0 {
                return Err(Error::parse(
                    path,
                    format!("line {line}: nonzero self-distance"),
                ));
            }
            continue;
        }
        if omega[(i, j)] && entries[(i, j)] != v {
            return Err(Error::parse(
                path,
                format!("line {line}: conflicting duplicate pair"),
            ));
        }
        entries[(i, j)] = v;
        entries[(j, i)] = v;
        omega[(i, j)] = true;
        omega[(j, i)] = true;
    }
    for i in 0..n {
        omega[(i, i)] = true;
    }
    DistanceMatrix::new(entries, omega, labels).map_err(|e| Error::parse(path, e.to_string()))
}

/// `label,z1,…,zr`, one row per subject.
pub fn write_embedding_csv(
    path: impl AsRef<Path>,
    labels: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let path = path.as_ref();
    let r = rows.first().map_or(0, Vec::len);
    let mut w = writer(path)?;
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((1..=r).map(|k| format!("z{k}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (label, row) in labels.iter().zip(rows) {
        let rec: Vec<String> = std::iter::once(label.clone())
            .chain(row.iter().map(|v| v.to_string()))
            .collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embedding_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let table = Table::read(path.as_ref())?;
    let labels = table.string_column(table.header.first().map_or("label", String::as_str))?;
    let rows = table
        .rows
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            rec[1..]
                .iter()
                .map(|f| parse_f64(path.as_ref(), k + 2, f))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, rows))
}

/// A CSV table with a header row; fields kept as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let recs = records(path)?;
        let (first, rest) = recs
            .split_first()
            .ok_or_else(|| Error::parse(path, "empty table"))?;
        let header: Vec<String> = first.iter().map(str::to_string).collect();
        let mut rows = Vec::with_capacity(rest.len());
        for (k, rec) in rest.iter().enumerate() {
            if rec.len() != header.len() {
                return Err(Error::parse(
                    path,
                    format!(
                        "line {}: expected {} fields, got {}",
                        k + 2,
                        header.len(),
                        rec.len()
                    ),
                ));
            }
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn write(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&self.path, format!("missing column `{name}`")))
    }

    pub fn string_column(&self, name: &str) -> Result<Vec<String>> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k].clone()).collect())
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(line, r)| parse_f64(&self.path, line + 2, &r[k]))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
