//! CSV writers for matrices and edge lists. Every float goes through
//! `f64::to_string`, the shortest representation that parses back exactly.

use std::io::Write;

use repcov::metrics::Edge;
use repcov::SymMatrix;

/// Square matrix with a label column and a header row of variable names.
pub fn write_matrix<W: Write>(m: &SymMatrix, names: &[String], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variable".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in m.rows().iter().enumerate() {
        let mut rec = vec![names[i].clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`]; returns names and rows.
pub fn read_matrix<R: std::io::Read>(input: R) -> csv::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let names = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().skip(1).map(|v| v.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok((names, rows))
}

pub fn write_edges<W: Write>(edges: &[Edge], names: &[String], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["from", "to", "i", "j", "weight", "sign"])?;
    for e in edges {
        w.write_record([
            names[e.i].clone(),
            names[e.j].clone(),
            (e.i + 1).to_string(),
            (e.j + 1).to_string(),
            e.weight.to_string(),
            if e.sign() > 0 { "+".to_string() } else { "-".to_string() },
        ])?;
    }
    w.flush()?;
    Ok(())
}
