//! Row-scan reference executor.
//!
//! Evaluates queries record by record with exact integer arithmetic and
//! counts the bytes a column-store host baseline would read: the attributes
//! each record actually examines under short-circuit evaluation, with the
//! terms of every AND/OR ordered offline by measured selectivity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{RelationSchema, Value};
use crate::query::ast::Query;
use crate::query::typed::{check, TAgg, TExpr, TPred};
use crate::query::{AggValue, QueryResult};

/// Decoded records of one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleTable {
    pub schema: RelationSchema,
    pub records: Vec<Vec<Value>>,
    codes: Vec<Vec<u64>>,
}

impl OracleTable {
    pub fn new(schema: RelationSchema, records: Vec<Vec<Value>>) -> Result<Self> {
        let codes = records
            .iter()
            .map(|r| {
                if r.len() != schema.attributes.len() {
                    return Err(Error::Schema(format!(
                        "record has {} values, {} expected",
                        r.len(),
                        schema.attributes.len()
                    )));
                }
                schema
                    .attributes
                    .iter()
                    .zip(r)
                    .map(|(a, v)| a.encode(v))
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(OracleTable {
            schema,
            records,
            codes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub ids: Option<Vec<u64>>,
    pub aggregates: Vec<AggValue>,
    /// Bytes the host baseline reads.
    pub baseline_bytes: u64,
}

fn overflow() -> Error {
    Error::Width("value overflows 128 bits".into())
}

/// Predicate with AND/OR terms reordered for the baseline.
fn order_terms(p: &TPred, codes: &[Vec<u64>]) -> TPred {
    let pass_rate = |q: &TPred| codes.iter().filter(|c| q.eval(c) == Some(true)).count();
    match p {
        TPred::And(ps) | TPred::Or(ps) => {
            let mut terms: Vec<(usize, TPred)> = ps
                .iter()
                .map(|q| (pass_rate(q), order_terms(q, codes)))
                .collect();
            let is_and = matches!(p, TPred::And(_));
            // AND stops at the first false term, OR at the first true one.
            terms.sort_by_key(|(n, _)| if is_and { *n } else { codes.len() - *n });
            let ts = terms.into_iter().map(|(_, t)| t).collect();
            if is_and {
                TPred::And(ts)
            } else {
                TPred::Or(ts)
            }
        }
        _ => p.clone(),
    }
}

/// Short-circuit evaluation recording the attributes touched.
fn eval_counting(p: &TPred, codes: &[u64], seen: &mut Vec<usize>) -> Result<bool> {
    Ok(match p {
        TPred::Const(b) => *b,
        TPred::Cmp(a, op, b) => {
            a.attributes(seen);
            b.attributes(seen);
            op.eval(
                a.eval(codes).ok_or_else(overflow)?,
                b.eval(codes).ok_or_else(overflow)?,
            )
        }
        TPred::And(ps) => {
            for q in ps {
                if !eval_counting(q, codes, seen)? {
                    return Ok(false);
                }
            }
            true
        }
        TPred::Or(ps) => {
            for q in ps {
                if eval_counting(q, codes, seen)? {
                    return Ok(true);
                }
            }
            false
        }
    })
}

/// Evaluates `q` over `table`.
pub fn execute(q: &Query, table: &OracleTable) -> Result<OracleResult> {
    let typed = check(q, &table.schema)?;
    let widths: Vec<u64> = table
        .schema
        .attributes
        .iter()
        .map(|a| a.bit_width() as u64)
        .collect();
    let filter = typed.filter.as_ref().map(|p| order_terms(p, &table.codes));
    let mut baseline_bits = 0u64;
    let mut matches = Vec::new();
    for (id, codes) in table.codes.iter().enumerate() {
        let mut seen = Vec::new();
        let hit = match &filter {
            Some(p) => eval_counting(p, codes, &mut seen)?,
            None => true,
        };
        if hit {
            matches.push(id);
            if let Some(aggs) = &typed.aggregates {
                for a in aggs {
                    match a {
                        TAgg::Count => {}
                        TAgg::Sum(e, _) | TAgg::Avg(e, _) => e.attributes(&mut seen),
                        TAgg::Min(i, _) | TAgg::Max(i, _) => TExpr::Attr(*i).attributes(&mut seen),
                    }
                }
            }
        }
        baseline_bits += seen.iter().map(|&i| widths[i]).sum::<u64>();
    }
    let baseline_bytes = baseline_bits.div_ceil(8);
    let Some(aggs) = typed.aggregates else {
        return Ok(OracleResult {
            ids: Some(matches.into_iter().map(|i| i as u64).collect()),
            aggregates: Vec::new(),
            baseline_bytes,
        });
    };
    let rows: Vec<&Vec<u64>> = matches.iter().map(|&i| &table.codes[i]).collect();
    let count = rows.len() as u64;
    let sum = |e: &TExpr| -> Result<u128> {
        rows.iter().try_fold(0u128, |acc, c| {
            acc.checked_add(e.eval(c).ok_or_else(overflow)?)
                .ok_or_else(overflow)
        })
    };
    let aggregates = aggs
        .iter()
        .map(|a| {
            Ok(match a {
                TAgg::Count => AggValue::Count { value: count },
                TAgg::Sum(e, s) => AggValue::Number {
                    value: sum(e)?,
                    scale: *s,
                },
                TAgg::Avg(_, _) if count == 0 => AggValue::Null,
                TAgg::Avg(e, s) => AggValue::Ratio {
                    sum: sum(e)?,
                    count,
                    scale: *s,
                },
                TAgg::Min(i, k) => rows
                    .iter()
                    .map(|c| c[*i])
                    .min()
                    .map_or(AggValue::Null, |v| AggValue::of_kind(v as u128, *k)),
                TAgg::Max(i, k) => rows
                    .iter()
                    .map(|c| c[*i])
                    .max()
                    .map_or(AggValue::Null, |v| AggValue::of_kind(v as u128, *k)),
            })
        })
        .collect::<Result<_>>()?;
    Ok(OracleResult {
        ids: None,
        aggregates,
        baseline_bytes,
    })
}

/// Outcome of comparing a PIM result with the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// First divergence, when failing.
    pub detail: Option<String>,
}

/// Compares id sets as sets and aggregates exactly.
pub fn compare(pim: &QueryResult, reference: &OracleResult) -> Verdict {
    let fail = |d: String| Verdict {
        pass: false,
        detail: Some(d),
    };
    match (&pim.ids, &reference.ids) {
        (Some(a), Some(b)) => {
            let a: BTreeSet<u64> = a.iter().copied().collect();
            let b: BTreeSet<u64> = b.iter().copied().collect();
            if let Some(id) = a.symmetric_difference(&b).next() {
                return fail(if a.contains(id) {
                    format!("record {id} returned but does not match")
                } else {
                    format!("record {id} matches but was not returned")
                });
            }
        }
        (None, None) => {}
        _ => return fail("one result has ids and the other aggregates".into()),
    }
    if pim.aggregates.len() != reference.aggregates.len() {
        return fail(format!(
            "{} aggregates vs {} expected",
            pim.aggregates.len(),
            reference.aggregates.len()
        ));
    }
    for (i, (a, b)) in pim.aggregates.iter().zip(&reference.aggregates).enumerate() {
        if a != b {
            return fail(format!(
                "aggregate {i}: {a} ({a:?}) vs expected {b} ({b:?})"
            ));
        }
    }
    Verdict {
        pass: true,
        detail: None,
    }
}
