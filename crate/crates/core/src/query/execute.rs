use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isa::Field;
use crate::layout::schema::{format_date, format_decimal};
use crate::layout::RelationLayout;
use crate::memsys::{Location, PimModule, RowWear, RunStats, LINE_BYTES};

use super::compile::{AggOutput, Combine, ExecutionPlan, HostExpr, Output, ReadOp};
use super::typed::ValueKind;

/// One aggregate result, exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggValue {
    /// MIN, MAX or AVG over no rows.
    Null,
    Count {
        value: u64,
    },
    /// A scaled integer. SUM over no rows is 0.
    Number {
        value: u128,
        scale: u32,
    },
    /// Days since 1970-01-01.
    Date {
        days: u64,
    },
    /// `sum / count` at the given scale.
    Ratio {
        sum: u128,
        count: u64,
        scale: u32,
    },
}

impl AggValue {
    pub(crate) fn of_kind(v: u128, kind: ValueKind) -> AggValue {
        match kind {
            ValueKind::Number { scale } => AggValue::Number { value: v, scale },
            ValueKind::Date => AggValue::Date { days: v as u64 },
        }
    }

    /// Nearest `f64`, for display and tolerance checks.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            AggValue::Null => None,
            AggValue::Count { value } => Some(value as f64),
            AggValue::Number { value, scale } => Some(value as f64 / 10f64.powi(scale as i32)),
            AggValue::Date { days } => Some(days as f64),
            AggValue::Ratio { sum, count, scale } => {
                Some(sum as f64 / count as f64 / 10f64.powi(scale as i32))
            }
        }
    }
}

fn format_u128(v: u128, scale: u32) -> String {
    if scale == 0 {
        return v.to_string();
    }
    let p = 10u128.pow(scale);
    format!("{}.{:0w$}", v / p, v % p, w = scale as usize)
}

impl fmt::Display for AggValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AggValue::Null => write!(f, "NULL"),
            AggValue::Count { value } => write!(f, "{value}"),
            AggValue::Number { value, scale } => match u64::try_from(value) {
                Ok(v) => write!(f, "{}", format_decimal(v, scale)),
                Err(_) => write!(f, "{}", format_u128(value, scale)),
            },
            AggValue::Date { days } => write!(f, "{}", format_date(days)),
            AggValue::Ratio { sum, count, scale } => {
                // Six digits beyond the operand scale, rounded half up.
                let digits = scale + 6;
                let num = sum * 10u128.pow(6) * 2 + count as u128;
                let q = num / (2 * count as u128);
                write!(f, "{}", format_u128(q, digits))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Matching record ids in ascending order, for `SELECT *`.
    pub ids: Option<Vec<u64>>,
    pub aggregates: Vec<AggValue>,
    /// Counters accrued by this query alone.
    pub stats: RunStats,
    /// Most-written row during this query.
    pub max_row_wear: Option<RowWear>,
}

/// Crossbars of page `pi` of `layout` that hold at least one record.
fn used_crossbars(layout: &RelationLayout, pi: usize) -> usize {
    let per_page = layout.records_per_page();
    let n = layout.records.saturating_sub(pi * per_page).min(per_page);
    n.div_ceil(layout.rows_per_crossbar)
}

/// Reads whole lines covering `units` (row, unit index) of the given
/// crossbars; returns each unit's value keyed by (crossbar, row, unit).
fn read_units(
    module: &mut PimModule,
    page: u32,
    crossbars: usize,
    units: &[(usize, usize)],
) -> Result<BTreeMap<(usize, usize, usize), u64>> {
    let map = module.address_map().clone();
    let unit_bytes = module.geometry().read_width / 8;
    let mut lines = BTreeSet::new();
    for x in 0..crossbars {
        for &(row, u) in units {
            let off = map.encode(Location {
                crossbar: x,
                row,
                byte_in_row: u * unit_bytes,
            })?;
            lines.insert(off - off % LINE_BYTES as u64);
        }
    }
    let wanted: BTreeSet<(usize, usize)> = units.iter().copied().collect();
    let mut out = BTreeMap::new();
    for base in lines {
        let data = module.host_read(page, base)?;
        for (i, byte) in data.iter().enumerate() {
            let loc = map.translate(base + i as u64)?;
            let u = loc.byte_in_row / unit_bytes;
            if loc.crossbar < crossbars && wanted.contains(&(loc.row, u)) {
                let shift = 8 * (loc.byte_in_row % unit_bytes);
                *out.entry((loc.crossbar, loc.row, u)).or_insert(0u64) |= (*byte as u64) << shift;
            }
        }
    }
    Ok(out)
}

fn read_bitmap(
    module: &mut PimModule,
    layout: &RelationLayout,
    pi: usize,
    col: u16,
    row0: u32,
) -> Result<Vec<u64>> {
    let g = *module.geometry();
    let w = g.read_width;
    let out_rows = g.rows.div_ceil(w);
    let unit = col as usize / w;
    let units: Vec<(usize, usize)> = (0..out_rows).map(|j| (row0 as usize + j, unit)).collect();
    let xs = used_crossbars(layout, pi);
    let vals = read_units(module, layout.pages[pi], xs, &units)?;
    let mut ids = Vec::new();
    for ((x, r, _), v) in vals {
        let j = r - row0 as usize;
        for i in (0..w).filter(|i| v >> i & 1 == 1) {
            let src = j * w + i;
            let id = layout.record_id(pi, x, src);
            if src < g.rows && id < layout.records {
                ids.push(id as u64);
            }
        }
    }
    Ok(ids)
}

fn read_values(
    module: &mut PimModule,
    layout: &RelationLayout,
    pi: usize,
    field: Field,
) -> Result<Vec<u128>> {
    let w = module.geometry().read_width;
    let first = field.start as usize / w;
    let last = (field.end() - 1) / w;
    let units: Vec<(usize, usize)> = (first..=last).map(|u| (0, u)).collect();
    let xs = used_crossbars(layout, pi);
    let vals = read_units(module, layout.pages[pi], xs, &units)?;
    let mut out = vec![0u128; xs];
    for ((x, _, u), v) in vals {
        for i in 0..w {
            let c = u * w + i;
            if field.contains(c) && v >> i & 1 == 1 {
                out[x] |= 1u128 << (c - field.start as usize);
            }
        }
    }
    Ok(out)
}

fn host_eval(e: &HostExpr, bitmaps: &BTreeMap<usize, BTreeSet<u64>>) -> BTreeSet<u64> {
    match e {
        HostExpr::Bitmap(s) => bitmaps.get(s).cloned().unwrap_or_default(),
        HostExpr::And(es) => {
            let mut it = es.iter().map(|e| host_eval(e, bitmaps));
            let first = it.next().unwrap_or_default();
            it.fold(first, |acc, s| acc.intersection(&s).copied().collect())
        }
        HostExpr::Or(es) => es.iter().flat_map(|e| host_eval(e, bitmaps)).collect(),
    }
}

/// Runs `plan` on the pages of `layout`.
pub fn execute(
    plan: &ExecutionPlan,
    layout: &RelationLayout,
    module: &mut PimModule,
) -> Result<QueryResult> {
    if !plan.relation.eq_ignore_ascii_case(&layout.name) {
        return Err(Error::Schema(format!(
            "plan targets {}, layout is {}",
            plan.relation, layout.name
        )));
    }
    // Start from an idle module so the elapsed time covers this query only.
    module.drain();
    let before = module.stats().clone();
    let wear_before = module.wear_snapshot();
    let mut bitmaps: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
    let mut values: BTreeMap<usize, Option<u128>> = BTreeMap::new();
    let overflow = || Error::Width("aggregate overflows 128 bits".into());
    // Every query sets the compute region of its pages up front, so its
    // request trace does not depend on earlier queries.
    if let Some(first) = plan.instructions().next() {
        for &page in &layout.pages {
            module.configure_page(page, first.compute)?;
        }
    }
    for phase in &plan.phases {
        for &page in &layout.pages {
            for instr in &phase.instructions {
                if module.page_compute(page)? != instr.compute {
                    module.configure_page(page, instr.compute)?;
                }
                module.pim(page, instr)?;
            }
        }
        for pi in 0..layout.pages.len() {
            for read in &phase.reads {
                match *read {
                    ReadOp::Bitmap { slot, col, row } => {
                        let ids = read_bitmap(module, layout, pi, col, row)?;
                        bitmaps.entry(slot).or_default().extend(ids);
                    }
                    ReadOp::Value {
                        slot,
                        field,
                        combine,
                    } => {
                        let acc = values.entry(slot).or_insert(None);
                        for v in read_values(module, layout, pi, field)? {
                            *acc = Some(match (*acc, combine) {
                                (None, _) => v,
                                (Some(a), Combine::Sum) => a.checked_add(v).ok_or_else(overflow)?,
                                (Some(a), Combine::Min) => a.min(v),
                                (Some(a), Combine::Max) => a.max(v),
                            });
                        }
                    }
                }
            }
        }
    }
    module.drain();
    let (ids, aggregates) = match &plan.output {
        Output::Ids(e) => (
            Some(host_eval(e, &bitmaps).into_iter().collect()),
            Vec::new(),
        ),
        Output::Aggregates(outs) => {
            let get = |s: &usize| values.get(s).copied().flatten().unwrap_or(0);
            let aggs =
                outs.iter()
                    .map(|o| match o {
                        AggOutput::Count { count } => AggValue::Count {
                            value: get(count) as u64,
                        },
                        AggOutput::Sum { slot, scale } => AggValue::Number {
                            value: get(slot),
                            scale: *scale,
                        },
                        AggOutput::Avg { sum, count, scale } => match get(count) {
                            0 => AggValue::Null,
                            n => AggValue::Ratio {
                                sum: get(sum),
                                count: n as u64,
                                scale: *scale,
                            },
                        },
                        AggOutput::Min { slot, count, kind }
                        | AggOutput::Max { slot, count, kind } => match get(count) {
                            0 => AggValue::Null,
                            _ => AggValue::of_kind(get(slot), *kind),
                        },
                    })
                    .collect();
            (None, aggs)
        }
    };
    Ok(QueryResult {
        ids,
        aggregates,
        stats: module.stats().since(&before),
        max_row_wear: module.wear_snapshot().max_since(&wear_before),
    })
}
