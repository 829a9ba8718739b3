//! Long-format CSV: a header `subject_id,v1,...,vp`, then one row per
//! observation. Rows are grouped by subject in order of first appearance;
//! the first column's header is not checked, the rest name the variables.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use repcov::{RepeatedData, SubjectBlock};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column} ({name}): cannot parse {value:?} as a finite number")]
    Parse {
        line: u64,
        column: usize,
        name: String,
        value: String,
    },
    #[error("input has no header or no data rows")]
    EmptyInput,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Data(#[from] repcov::Error),
}

pub fn ingest_path(path: &Path) -> Result<RepeatedData, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest(file)
}

pub fn ingest<R: Read>(input: R) -> Result<RepeatedData, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(if header.is_empty() {
            IngestError::EmptyInput
        } else {
            IngestError::RaggedRow {
                line: 1,
                expected: 2,
                found: header.len(),
            }
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = header.len();

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(IngestError::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let id = record[0].to_string();
        let row = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::Parse {
                    line,
                    column: c + 1,
                    name: names[c - 1].clone(),
                    value: cell.to_string(),
                }),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(row);
    }
    if order.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let subjects = order
        .into_iter()
        .map(|id| {
            let rows = groups.remove(&id).expect("every ordered id has rows");
            SubjectBlock::new(id, &rows)
        })
        .collect::<repcov::Result<Vec<_>>>()?;
    Ok(RepeatedData::new(subjects)?.with_names(names)?)
}

/// Writes `data` back in the long format [`ingest`] reads. Values use the
/// shortest representation that parses back to the same bits.
pub fn export<W: Write>(data: &RepeatedData, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string()];
    header.extend(data.names().iter().cloned());
    w.write_record(&header)?;
    for s in data.subjects() {
        for j in 0..s.n() {
            let mut rec = vec![s.id.clone()];
            rec.extend(s.row(j).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
