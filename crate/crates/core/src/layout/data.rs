//! CSV data files: a header row of attribute names, then one record per row.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::schema::{RelationSchema, Value};

pub fn read_csv<R: Read>(schema: &RelationSchema, reader: R) -> Result<Vec<Vec<Value>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            col: 1,
            msg: e.to_string(),
        })?
        .clone();
    let mut order = Vec::new();
    for (i, h) in header.iter().enumerate() {
        let (idx, _) = schema.attribute(h.trim()).ok_or_else(|| Error::Parse {
            line: 1,
            col: i + 1,
            msg: format!("unknown attribute {h:?} for relation {}", schema.name),
        })?;
        order.push(idx);
    }
    if order.len() != schema.attributes.len() {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            msg: "header must name every attribute once".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                col: 1,
                msg: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != order.len() {
            return Err(Error::Parse {
                line,
                col: 1,
                msg: format!("expected {} fields, got {}", order.len(), rec.len()),
            });
        }
        let mut row = vec![Value::Int(0); order.len()];
        for (field_no, (text, &idx)) in rec.iter().zip(&order).enumerate() {
            row[idx] = schema.attributes[idx]
                .parse(text)
                .map_err(|e| Error::Parse {
                    line,
                    col: field_no + 1,
                    msg: e.to_string(),
                })?;
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_csv<W: Write>(
    schema: &RelationSchema,
    records: &[Vec<Value>],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(schema.attributes.iter().map(|a| a.name.as_str()))
        .map_err(io)?;
    for r in records {
        w.write_record(schema.attributes.iter().zip(r).map(|(a, v)| a.format(v)))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
