//! Run counters of a PIM module.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crossbar::Energy;

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub pim_requests: u64,
    /// Logic cycles summed over requests (one request runs in lockstep on
    /// every crossbar of its page).
    pub logic_cycles: u64,
    pub cycles_by_opcode: BTreeMap<String, u64>,
    /// Gate outputs written, summed over crossbars.
    pub logic_bits: u64,
    pub line_reads: u64,
    pub line_writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub unit_reads: u64,
    pub unit_writes: u64,
    pub logic_energy: Energy,
    pub read_energy: Energy,
    pub write_energy: Energy,
    /// Completion time of the latest request, in picoseconds.
    pub elapsed_ps: u64,
}

impl RunStats {
    pub fn energy(&self) -> Energy {
        self.logic_energy + self.read_energy + self.write_energy
    }

    /// Counter increments since `before`. The elapsed time is the span
    /// between the two completion horizons.
    pub fn since(&self, before: &RunStats) -> RunStats {
        let mut by_op = BTreeMap::new();
        for (k, &v) in &self.cycles_by_opcode {
            let d = v - before.cycles_by_opcode.get(k).copied().unwrap_or(0);
            if d > 0 {
                by_op.insert(k.clone(), d);
            }
        }
        RunStats {
            pim_requests: self.pim_requests - before.pim_requests,
            logic_cycles: self.logic_cycles - before.logic_cycles,
            cycles_by_opcode: by_op,
            logic_bits: self.logic_bits - before.logic_bits,
            line_reads: self.line_reads - before.line_reads,
            line_writes: self.line_writes - before.line_writes,
            bytes_read: self.bytes_read - before.bytes_read,
            bytes_written: self.bytes_written - before.bytes_written,
            unit_reads: self.unit_reads - before.unit_reads,
            unit_writes: self.unit_writes - before.unit_writes,
            logic_energy: self.logic_energy - before.logic_energy,
            read_energy: self.read_energy - before.read_energy,
            write_energy: self.write_energy - before.write_energy,
            elapsed_ps: self.elapsed_ps.saturating_sub(before.elapsed_ps),
        }
    }
}
