//! Measured instruction costs and the instruction-table cycle formulas they are
//! compared against.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarGeometry, MicroOp};
use crate::error::Result;

use super::{expand, Field, Opcode, PimInstruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionCost {
    /// Length of the expanded micro-op sequence.
    pub cycles: u64,
    /// Distinct compute-region columns the sequence touches.
    pub intermediate_cells: u64,
    /// Cycle count from the instruction table, when one exists.
    pub table_cycles: Option<u64>,
    pub table_intermediate_cells: Option<u64>,
}

impl InstructionCost {
    /// Signed relative deviation of the measured cycles from the table value.
    pub fn deviation(&self) -> Option<f64> {
        self.table_cycles
            .filter(|&p| p > 0)
            .map(|p| (self.cycles as f64 - p as f64) / p as f64)
    }
}

fn touched_scratch(ops: &[MicroOp], instr: &PimInstruction) -> u64 {
    let mut cols = BTreeSet::new();
    for op in ops {
        let c = match *op {
            MicroOp::ColNor2 { a, b, out } => vec![a, b, out],
            MicroOp::ColNot { input, out } => vec![input, out],
            MicroOp::ColSet { col } | MicroOp::ColReset { col } => vec![col],
            MicroOp::RowNot { col, .. } | MicroOp::RowSet { col, .. } => vec![col],
        };
        cols.extend(
            c.into_iter()
                .filter(|&c| instr.compute.contains(c as usize)),
        );
    }
    cols.len() as u64
}

pub fn cost_of(instr: &PimInstruction, g: &CrossbarGeometry) -> Result<InstructionCost> {
    let ops = expand(instr, g)?;
    Ok(InstructionCost {
        cycles: ops.len() as u64,
        intermediate_cells: touched_scratch(&ops, instr),
        table_cycles: table_cycles(instr),
        table_intermediate_cells: table_intermediate_cells(instr),
    })
}

/// Cycle counts of the instruction table. The reduce and column-transform
/// entries are the table values for a 1024x512 crossbar.
pub fn table_cycles(instr: &PimInstruction) -> Option<u64> {
    let n = instr.width() as u64;
    let m = instr.src2.map_or(0, |f| f.len as u64);
    let (i0, i1) = instr.imm.map_or((0, 0), |i| {
        let (z, o) = i.zeros_ones();
        (z as u64, o as u64)
    });
    Some(match instr.opcode {
        Opcode::EqualImm => i0 + 3 * i1 + 1,
        Opcode::NotEqualImm => i0 + 3 * i1 + 3,
        Opcode::LessThanImm => 11 * i0 + 3 * i1 + 4,
        Opcode::GreaterThanImm => 11 * i0 + 3 * i1 + 2,
        Opcode::AddImm => 18 * n + 3,
        Opcode::Equal => 11 * n + 3,
        Opcode::LessThan => 16 * n + 2,
        Opcode::SetCol | Opcode::ResetCol => n,
        Opcode::BitwiseNot => 2 * n,
        Opcode::BitwiseAnd => 6 * n,
        Opcode::BitwiseOr => 4 * n,
        Opcode::Add => 18 * n + 1,
        Opcode::Multiply => (24 * n * m + 2 * m).checked_sub(19 * n + 1)?,
        Opcode::ReduceSum => 2254 * n + 3006,
        Opcode::ReduceMin | Opcode::ReduceMax => 2306 * n + 200,
        Opcode::ColumnTransform => 2050,
        Opcode::ConfigurePage => return None,
    })
}

pub fn table_intermediate_cells(instr: &PimInstruction) -> Option<u64> {
    let n = instr.width() as u64;
    Some(match instr.opcode {
        Opcode::EqualImm => 1,
        Opcode::NotEqualImm => 2,
        Opcode::LessThanImm => 5,
        Opcode::GreaterThanImm => 6,
        Opcode::AddImm => 8,
        Opcode::Equal => 5,
        Opcode::LessThan => 6,
        Opcode::SetCol | Opcode::ResetCol | Opcode::BitwiseNot => 0,
        Opcode::BitwiseAnd => 2,
        Opcode::BitwiseOr => 1,
        Opcode::Add | Opcode::Multiply => 6,
        Opcode::ReduceSum => n + 15,
        Opcode::ReduceMin | Opcode::ReduceMax => n + 7,
        Opcode::ColumnTransform => 1,
        Opcode::ConfigurePage => return None,
    })
}

/// Operand widths of the cycle-formula comparison.
pub const TABLE_WIDTHS: [usize; 5] = [2, 4, 8, 16, 32];

/// One measured-vs-table comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaRow {
    pub opcode: Opcode,
    pub n: usize,
    pub instruction: PimInstruction,
    pub cost: InstructionCost,
}

/// A representative instance of `op` at width `n`: operands from column 0,
/// two-operand forms with equal widths, immediates alternating 1010...,
/// the destination after the operands and the scratch right after it.
pub fn sample_instruction(op: Opcode, n: usize, g: &CrossbarGeometry) -> Option<PimInstruction> {
    let n16 = n as u16;
    let a = Field::new(0, n16);
    let imm = (0..n).filter(|i| i % 2 == 1).fold(0u64, |v, i| v | 1 << i);
    let mut i = match op {
        Opcode::ConfigurePage => return None,
        Opcode::ColumnTransform => PimInstruction::new(op, Field::new(0, 1)),
        Opcode::SetCol | Opcode::ResetCol => {
            return Some(PimInstruction::fill(op == Opcode::SetCol, a))
        }
        _ if op.is_immediate() => PimInstruction::new(op, a).with_imm(imm, n as u8),
        _ if op.descriptor().has_src2 => PimInstruction::new(op, a).with_src2(Field::new(n16, n16)),
        _ => PimInstruction::new(op, a),
    };
    let operands_end = i.src2.map_or(i.src1.end(), |f| f.end());
    i.dst_col = if op == Opcode::ColumnTransform {
        g.read_width as u16
    } else {
        operands_end as u16
    };
    let dst_end = i.dst_field(g).end();
    i.compute = Field::new(dst_end as u16, i.scratch_needed().max(1) as u16);
    i.validate(g).ok()?;
    Some(i)
}

/// Measured cost against the table formula for every opcode with a
/// table entry, over `TABLE_WIDTHS` (ColumnTransform once, on one column).
pub fn formula_table(g: &CrossbarGeometry) -> Result<Vec<FormulaRow>> {
    let mut rows = Vec::new();
    for op in Opcode::ALL {
        let widths: &[usize] = if op == Opcode::ColumnTransform {
            &[1]
        } else {
            &TABLE_WIDTHS
        };
        for &n in widths {
            if let Some(instruction) = sample_instruction(op, n, g) {
                rows.push(FormulaRow {
                    opcode: op,
                    n,
                    instruction,
                    cost: cost_of(&instruction, g)?,
                });
            }
        }
    }
    Ok(rows)
}
