//! Run reports, the trace-derived counter ledger and the cycle-formula
//! table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarGeometry, Energy};
use crate::error::{Error, Result};
use crate::isa::{table_cycles, FormulaRow, Opcode};
use crate::memsys::{codec, PimModule, RunStats, SimConfig, TraceRecord};
use crate::query::{ExecutionPlan, QueryResult};

/// Baseline bytes over PIM-path bytes; `None` when the PIM path read
/// nothing while the baseline did.
pub fn read_reduction(baseline_bytes: u64, pim_bytes: u64) -> Option<f64> {
    match (baseline_bytes, pim_bytes) {
        (0, 0) => Some(1.0),
        (_, 0) => None,
        (b, p) => Some(b as f64 / p as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPj {
    pub logic: f64,
    pub read: f64,
    pub write: f64,
    pub total: f64,
}

impl EnergyPj {
    fn of(s: &RunStats) -> Self {
        EnergyPj {
            logic: s.logic_energy.pj(),
            read: s.read_energy.pj(),
            write: s.write_energy.pj(),
            total: s.energy().pj(),
        }
    }
}

/// Counters a request trace determines on its own.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub pim_requests: u64,
    pub logic_cycles: u64,
    pub cycles_by_opcode: BTreeMap<String, u64>,
    pub table_cycles: u64,
    pub logic_bits: u64,
    pub line_reads: u64,
    pub line_writes: u64,
    pub bytes_read: u64,
    /// Energy in exact tenths of a femtojoule.
    pub logic_energy: u64,
    pub read_energy: u64,
    pub write_energy: u64,
    pub elapsed_ps: u64,
    pub max_row_writes: u64,
}

impl Ledger {
    fn merge(&mut self, o: &Ledger) {
        self.pim_requests += o.pim_requests;
        self.logic_cycles += o.logic_cycles;
        for (k, v) in &o.cycles_by_opcode {
            *self.cycles_by_opcode.entry(k.clone()).or_insert(0) += v;
        }
        self.table_cycles += o.table_cycles;
        self.logic_bits += o.logic_bits;
        self.line_reads += o.line_reads;
        self.line_writes += o.line_writes;
        self.bytes_read += o.bytes_read;
        self.logic_energy += o.logic_energy;
        self.read_energy += o.read_energy;
        self.write_energy += o.write_energy;
        self.elapsed_ps += o.elapsed_ps;
        self.max_row_writes = self.max_row_writes.max(o.max_row_writes);
    }

    /// Names of the fields that differ from `other`.
    pub fn diff(&self, other: &Ledger) -> Vec<String> {
        let a = serde_json::to_value(self).expect("ledger serializes");
        let b = serde_json::to_value(other).expect("ledger serializes");
        let (a, b) = (a.as_object().unwrap(), b.as_object().unwrap());
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, v)| format!("{k}: {v} vs {}", b[k]))
            .collect()
    }
}

fn table_cycles_of_requests(records: &[TraceRecord], config: &SimConfig) -> Result<u64> {
    let (g, map) = (config.geometry()?, config.address_map()?);
    let mut total = 0;
    for r in records {
        if let TraceRecord::Pim(req) = r {
            total += table_cycles(&codec::decode(req, &map, &g)?).unwrap_or(0);
        }
    }
    Ok(total)
}

/// Recomputes the ledger by replaying `records` on a fresh module. Pages
/// are mapped on first use and read payloads are not checked.
pub fn ledger_from_trace(records: &[TraceRecord], config: &SimConfig) -> Result<Ledger> {
    let mut m = PimModule::new(config.clone())?;
    m.replay(records, false)?;
    m.drain();
    let s = m.stats();
    Ok(Ledger {
        pim_requests: s.pim_requests,
        logic_cycles: s.logic_cycles,
        cycles_by_opcode: s.cycles_by_opcode.clone(),
        table_cycles: table_cycles_of_requests(records, config)?,
        logic_bits: s.logic_bits,
        line_reads: s.line_reads,
        line_writes: s.line_writes,
        bytes_read: s.bytes_read,
        logic_energy: s.logic_energy.tenth_fj(),
        read_energy: s.read_energy.tenth_fj(),
        write_energy: s.write_energy.tenth_fj(),
        elapsed_ps: s.elapsed_ps,
        max_row_writes: m.max_row_writes().map_or(0, |w| w.writes),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query: String,
    /// Matching records of a `SELECT *`.
    pub matches: Option<u64>,
    pub aggregates: Vec<String>,
    pub phases: usize,
    pub pages: usize,
    pub pim_bytes: u64,
    pub baseline_bytes: u64,
    /// `None` with `read_reduction_infinite` when the PIM path read nothing.
    pub read_reduction: Option<f64>,
    pub read_reduction_infinite: bool,
    pub energy_pj: EnergyPj,
    /// Writes per cell of the most-written row.
    pub max_ops_per_cell: f64,
    pub elapsed_ns: f64,
    pub ledger: Ledger,
}

impl QueryReport {
    pub fn new(
        query: &str,
        plan: &ExecutionPlan,
        result: &QueryResult,
        baseline_bytes: u64,
        pages: usize,
        g: &CrossbarGeometry,
    ) -> Self {
        let s = &result.stats;
        let per_page: u64 = plan
            .instructions()
            .map(|i| table_cycles(i).unwrap_or(0))
            .sum();
        let wear = result.max_row_wear.map_or(0, |w| w.writes);
        let reduction = read_reduction(baseline_bytes, s.bytes_read);
        QueryReport {
            query: query.trim().to_string(),
            matches: result.ids.as_ref().map(|v| v.len() as u64),
            aggregates: result.aggregates.iter().map(|a| a.to_string()).collect(),
            phases: plan.phases.len(),
            pages,
            pim_bytes: s.bytes_read,
            baseline_bytes,
            read_reduction: reduction,
            read_reduction_infinite: reduction.is_none(),
            energy_pj: EnergyPj::of(s),
            max_ops_per_cell: wear as f64 / g.cols as f64,
            elapsed_ns: s.elapsed_ps as f64 / 1000.0,
            ledger: Ledger {
                pim_requests: s.pim_requests,
                logic_cycles: s.logic_cycles,
                cycles_by_opcode: s.cycles_by_opcode.clone(),
                table_cycles: per_page * pages as u64,
                logic_bits: s.logic_bits,
                line_reads: s.line_reads,
                line_writes: s.line_writes,
                bytes_read: s.bytes_read,
                logic_energy: s.logic_energy.tenth_fj(),
                read_energy: s.read_energy.tenth_fj(),
                write_energy: s.write_energy.tenth_fj(),
                elapsed_ps: s.elapsed_ps,
                max_row_writes: wear,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: usize,
    pub cols: usize,
    pub read_width: usize,
    pub crossbars_per_page: usize,
    pub queries: Vec<QueryReport>,
}

impl RunReport {
    pub fn new(config: &SimConfig) -> Self {
        RunReport {
            rows: config.geometry.rows,
            cols: config.geometry.cols,
            read_width: config.geometry.read_width,
            crossbars_per_page: config.topology.crossbars_per_page,
            queries: Vec::new(),
        }
    }

    /// Ledger of all queries together. Row wear is the largest single-query
    /// value, so it matches a replay only for one query.
    pub fn ledger(&self) -> Ledger {
        let mut l = Ledger::default();
        for q in &self.queries {
            l.merge(&q.ledger);
        }
        l
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "geometry {}x{}, read width {}, {} crossbars per page",
            self.rows, self.cols, self.read_width, self.crossbars_per_page
        );
        for q in &self.queries {
            let l = &q.ledger;
            let _ = writeln!(out, "\n{}", q.query);
            let result = match q.matches {
                Some(n) => format!("{n} matching records"),
                None => q.aggregates.join(", "),
            };
            let reduction = match q.read_reduction {
                Some(r) => format!("{r:.2}x"),
                None => "infinite".into(),
            };
            let rows = [
                ("result", result),
                ("phases / pages", format!("{} / {}", q.phases, q.pages)),
                ("logic cycles", l.logic_cycles.to_string()),
                ("table-formula cycles", l.table_cycles.to_string()),
                ("PIM requests", l.pim_requests.to_string()),
                ("bytes read (PIM)", q.pim_bytes.to_string()),
                ("bytes read (baseline)", q.baseline_bytes.to_string()),
                ("read reduction", reduction),
                ("energy logic (pJ)", format!("{:.3}", q.energy_pj.logic)),
                ("energy read (pJ)", format!("{:.3}", q.energy_pj.read)),
                ("energy write (pJ)", format!("{:.3}", q.energy_pj.write)),
                ("energy total (pJ)", format!("{:.3}", q.energy_pj.total)),
                ("max ops per cell", format!("{:.4}", q.max_ops_per_cell)),
                ("elapsed (ns)", format!("{:.3}", q.elapsed_ns)),
            ];
            for (k, v) in rows {
                let _ = writeln!(out, "  {k:<22} {v}");
            }
            for (op, c) in &l.cycles_by_opcode {
                let _ = writeln!(out, "    {op:<20} {c}");
            }
        }
        out
    }
}

/// Aligned text of the measured-vs-formula table.
pub fn formulas_text(rows: &[FormulaRow]) -> String {
    let mut out = format!(
        "{:<18} {:>3} {:>9} {:>9} {:>8} {:>6} {:>6}\n",
        "instruction", "n", "measured", "table", "dev", "cells", "table"
    );
    for r in rows {
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        let dev = r
            .cost
            .deviation()
            .map_or("-".to_string(), |d| format!("{:+.1}%", d * 100.0));
        let _ = writeln!(
            out,
            "{:<18} {:>3} {:>9} {:>9} {:>8} {:>6} {:>6}",
            r.opcode.mnemonic(),
            r.n,
            r.cost.cycles,
            opt(r.cost.table_cycles),
            dev,
            r.cost.intermediate_cells,
            opt(r.cost.table_intermediate_cells)
        );
    }
    out
}

/// Largest absolute deviation over the rows with a table value.
pub fn max_deviation(rows: &[FormulaRow]) -> Option<(Opcode, usize, f64)> {
    rows.iter()
        .filter_map(|r| r.cost.deviation().map(|d| (r.opcode, r.n, d)))
        .max_by(|a, b| a.2.abs().total_cmp(&b.2.abs()))
}

/// Energy of a ledger.
pub fn ledger_energy(l: &Ledger) -> Energy {
    Energy::from_tenth_fj(l.logic_energy + l.read_energy + l.write_energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{default_schema, generate};
    use crate::isa::formula_table;
    use crate::layout::Database;
    use crate::oracle::{self, OracleTable};
    use crate::query;

    #[test]
    fn reduction_edge_cases() {
        assert_eq!(read_reduction(100, 10), Some(10.0));
        assert_eq!(read_reduction(100, 0), None);
        assert_eq!(read_reduction(0, 0), Some(1.0));
    }

    #[test]
    fn report_counters_match_the_trace() {
        let mut s = default_schema();
        s.relations[0].rows = 300;
        s.relations[1].rows = 0;
        let data = generate(&s, 3).unwrap();
        let cfg = SimConfig::with_geometry(64, 256, 16, 2);
        let mut m = PimModule::new(cfg.clone()).unwrap();
        let db = Database::load(&s, &data, &mut m).unwrap();
        let table = OracleTable::new(s.relations[0].clone(), data["lineitem"].clone()).unwrap();
        let mut report = RunReport::new(&cfg);
        m.enable_trace();
        for q in [
            "SELECT SUM(l_quantity) FROM lineitem WHERE l_discount < 0.05",
            "SELECT * FROM lineitem WHERE l_tax = 0.02",
        ] {
            let plan = query::plan(q, &db, &m).unwrap();
            let r = query::execute(&plan, db.relation("lineitem").unwrap(), &mut m).unwrap();
            let base = oracle::execute(&plan.query, &table).unwrap().baseline_bytes;
            report
                .queries
                .push(QueryReport::new(q, &plan, &r, base, 3, m.geometry()));
        }
        let trace = m.take_trace();
        let mut expect = ledger_from_trace(&trace, &cfg).unwrap();
        let mut got = report.ledger();
        // Wear over both queries is not a per-query quantity.
        expect.max_row_writes = 0;
        got.max_row_writes = 0;
        assert_eq!(got.diff(&expect), Vec::<String>::new());
        let back = RunReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert!(report.to_text().contains("read reduction"));
    }

    #[test]
    fn formula_text_lists_column_transform() {
        let rows = formula_table(&CrossbarGeometry::default()).unwrap();
        let t = formulas_text(&rows);
        let ct = t
            .lines()
            .find(|l| l.starts_with("column_transform"))
            .unwrap();
        assert!(ct.contains("2050"));
        assert!(max_deviation(&rows).unwrap().2.abs() <= 0.2);
    }
}
