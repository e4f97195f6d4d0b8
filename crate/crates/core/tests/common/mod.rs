#![allow(dead_code)]

use std::collections::BTreeMap;

use pimdb::layout::schema::format_date;
use pimdb::layout::{
    AttributeSpec, Database, Encoding, LogicalType, RelationSchema, Schema, Value,
};
use pimdb::memsys::{PimModule, SimConfig};
use pimdb::oracle::{self, OracleTable};
use pimdb::query;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn attr(name: &str, ty: LogicalType, bits: u32) -> AttributeSpec {
    AttributeSpec {
        name: name.into(),
        logical_type: ty,
        encoding: Encoding::Raw,
        bits: Some(bits),
        scale: 0,
        min: None,
        max: None,
        values: vec![],
    }
}

pub fn int_relation(name: &str, widths: &[u32]) -> RelationSchema {
    RelationSchema {
        name: name.into(),
        rows: 0,
        attributes: widths
            .iter()
            .enumerate()
            .map(|(i, &w)| attr(&format!("a{i}"), LogicalType::Integer, w))
            .collect(),
    }
}

pub fn random_schema<R: Rng>(rng: &mut R) -> RelationSchema {
    let n = rng.gen_range(1..=4);
    let mut attributes = Vec::new();
    for i in 0..n {
        let name = format!("c{i}");
        let a = match rng.gen_range(0..5) {
            0 | 1 => attr(&name, LogicalType::Integer, rng.gen_range(1..=12)),
            2 => {
                let mut a = attr(&name, LogicalType::Decimal, rng.gen_range(4..=14));
                a.scale = rng.gen_range(1..=2);
                a
            }
            3 => attr(&name, LogicalType::Date, 15),
            _ => {
                let k = rng.gen_range(1..=5);
                AttributeSpec {
                    encoding: Encoding::Dictionary,
                    bits: None,
                    values: (0..k).map(|j| format!("V{j}")).collect(),
                    ..attr(&name, LogicalType::Enum, 0)
                }
            }
        };
        attributes.push(a);
    }
    RelationSchema {
        name: "r".into(),
        rows: 0,
        attributes,
    }
}

fn random_value<R: Rng>(rng: &mut R, a: &AttributeSpec) -> Value {
    if a.is_dictionary() {
        return Value::Str(a.values.choose(rng).unwrap().clone());
    }
    let w = a.bit_width();
    // Skew towards small values so equality and range terms hit.
    let v = if rng.gen_bool(0.3) {
        rng.gen_range(0..4.min(1u64 << w))
    } else {
        rng.gen_range(0..1u64 << w)
    };
    Value::Int(v)
}

pub fn random_records<R: Rng>(rng: &mut R, s: &RelationSchema, n: usize) -> Vec<Vec<Value>> {
    (0..n)
        .map(|_| s.attributes.iter().map(|a| random_value(rng, a)).collect())
        .collect()
}

/// A literal for attribute `a`, usually one present in the data.
fn literal<R: Rng>(rng: &mut R, a: &AttributeSpec, idx: usize, records: &[Vec<Value>]) -> String {
    let v = match records.choose(rng) {
        Some(r) if rng.gen_bool(0.7) => r[idx].clone(),
        _ => random_value(rng, a),
    };
    match (a.logical_type, v) {
        (LogicalType::Enum, Value::Str(s)) => format!("'{s}'"),
        (LogicalType::Date, Value::Int(d)) => format!("DATE '{}'", format_date(d)),
        (LogicalType::Decimal, Value::Int(d)) => {
            // Sometimes fewer fraction digits than the scale.
            let p = 10u64.pow(a.scale);
            if d % p == 0 && rng.gen_bool(0.5) {
                (d / p).to_string()
            } else {
                format!("{}.{:0w$}", d / p, d % p, w = a.scale as usize)
            }
        }
        (_, v) => v.to_string(),
    }
}

const OPS: [&str; 6] = ["=", "<>", "<", ">", "<=", ">="];

fn comparison<R: Rng>(rng: &mut R, s: &RelationSchema, records: &[Vec<Value>]) -> String {
    let i = rng.gen_range(0..s.attributes.len());
    let a = &s.attributes[i];
    if a.is_dictionary() {
        let op = if rng.gen_bool(0.5) { "=" } else { "<>" };
        return format!("{} {op} {}", a.name, literal(rng, a, i, records));
    }
    let op = OPS.choose(rng).unwrap();
    let peers: Vec<usize> = (0..s.attributes.len())
        .filter(|&j| {
            let b = &s.attributes[j];
            j != i && b.logical_type == a.logical_type && b.scale == a.scale && !b.is_dictionary()
        })
        .collect();
    let numeric = matches!(a.logical_type, LogicalType::Integer | LogicalType::Decimal);
    match rng.gen_range(0..6) {
        0 if !peers.is_empty() => format!(
            "{} {op} {}",
            a.name,
            s.attributes[*peers.choose(rng).unwrap()].name
        ),
        1 if numeric && !peers.is_empty() => {
            let b = &s.attributes[*peers.choose(rng).unwrap()];
            format!(
                "{} + {} {op} {}",
                a.name,
                b.name,
                literal(rng, a, i, records)
            )
        }
        2 if a.logical_type == LogicalType::Integer => {
            let k = rng.gen_range(0..6);
            format!("{} * {k} {op} {}", a.name, rng.gen_range(0..40))
        }
        3 if a.logical_type == LogicalType::Integer => {
            let k = rng.gen_range(0..20);
            format!("{} {op} {} + {k}", literal(rng, a, i, records), a.name)
        }
        _ => format!("{} {op} {}", a.name, literal(rng, a, i, records)),
    }
}

fn predicate<R: Rng>(
    rng: &mut R,
    s: &RelationSchema,
    records: &[Vec<Value>],
    depth: usize,
) -> String {
    if depth == 0 || rng.gen_bool(0.4) {
        let c = comparison(rng, s, records);
        return if rng.gen_bool(0.15) {
            format!("NOT {c}")
        } else {
            c
        };
    }
    let k = rng.gen_range(2..=3);
    let op = if rng.gen_bool(0.5) { " AND " } else { " OR " };
    let terms: Vec<String> = (0..k)
        .map(|_| predicate(rng, s, records, depth - 1))
        .collect();
    let body = format!("({})", terms.join(op));
    if rng.gen_bool(0.15) {
        format!("NOT {body}")
    } else {
        body
    }
}

pub fn random_query<R: Rng>(rng: &mut R, s: &RelationSchema, records: &[Vec<Value>]) -> String {
    let numeric: Vec<&AttributeSpec> = s
        .attributes
        .iter()
        .filter(|a| matches!(a.logical_type, LogicalType::Integer | LogicalType::Decimal))
        .collect();
    let ordered: Vec<&AttributeSpec> = s.attributes.iter().filter(|a| !a.is_dictionary()).collect();
    let select = if rng.gen_bool(0.5) {
        "*".to_string()
    } else {
        let mut aggs = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let agg = match rng.gen_range(0..6) {
                0 if !numeric.is_empty() => format!("SUM({})", numeric.choose(rng).unwrap().name),
                1 if !numeric.is_empty() => {
                    let a = numeric.choose(rng).unwrap();
                    let b = numeric.choose(rng).unwrap();
                    format!("SUM({} * {})", a.name, b.name)
                }
                2 if !numeric.is_empty() => format!("AVG({})", numeric.choose(rng).unwrap().name),
                3 if !ordered.is_empty() => format!("MIN({})", ordered.choose(rng).unwrap().name),
                4 if !ordered.is_empty() => format!("MAX({})", ordered.choose(rng).unwrap().name),
                _ => "COUNT(*)".to_string(),
            };
            aggs.push(agg);
        }
        aggs.join(", ")
    };
    let depth = if select == "*" { 2 } else { 1 };
    if rng.gen_bool(0.1) {
        format!("SELECT {select} FROM {}", s.name)
    } else {
        format!(
            "SELECT {select} FROM {} WHERE {}",
            s.name,
            predicate(rng, s, records, depth)
        )
    }
}

/// A small geometry with room for the generated schemas.
pub fn small_config<R: Rng>(rng: &mut R) -> SimConfig {
    let rows = *[8usize, 16, 32, 64].choose(rng).unwrap();
    let w = *[8usize, 16].choose(rng).unwrap();
    let xpp = *[1usize, 2, 4].choose(rng).unwrap();
    SimConfig::with_geometry(rows, 256, w, xpp)
}

/// Loads one relation into a fresh module.
pub fn load(
    config: SimConfig,
    rel: &RelationSchema,
    records: &[Vec<Value>],
) -> (PimModule, Database) {
    let mut module = PimModule::new(config).unwrap();
    let schema = Schema {
        relations: vec![rel.clone()],
    };
    let data = BTreeMap::from([(rel.name.clone(), records.to_vec())]);
    let db = Database::load(&schema, &data, &mut module).unwrap();
    (module, db)
}

/// Runs `q` through both paths; `Err` carries the divergence.
pub fn check(
    q: &str,
    module: &mut PimModule,
    db: &Database,
    rel: &RelationSchema,
    records: &[Vec<Value>],
) -> Result<(), String> {
    let pim = query::run(q, db, module).map_err(|e| format!("{q}: PIM error: {e}"))?;
    let table = OracleTable::new(rel.clone(), records.to_vec()).unwrap();
    let reference = oracle::execute(&query::parse_query(q).unwrap(), &table)
        .map_err(|e| format!("{q}: oracle error: {e}"))?;
    let v = oracle::compare(&pim, &reference);
    if v.pass {
        Ok(())
    } else {
        Err(format!("{q}: {}", v.detail.unwrap()))
    }
}
