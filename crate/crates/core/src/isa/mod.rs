//! PIM instructions and their expansion into crossbar micro-operations.
//!
//! Every instruction is a fixed bulk-bitwise sequence chosen by the PIM
//! controller from the opcode, operand fields and immediate. The sequence
//! is the same on every crossbar of a page.

mod expand;
mod formula;

pub use expand::expand;
pub use formula::{
    cost_of, formula_table, sample_instruction, table_cycles, table_intermediate_cells, FormulaRow,
    InstructionCost, TABLE_WIDTHS,
};

use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarGeometry;
use crate::error::{Error, Result};

/// Version of the opcode numbering and operand layout in [`DESCRIPTORS`].
pub const ISA_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    EqualImm,
    NotEqualImm,
    LessThanImm,
    GreaterThanImm,
    AddImm,
    Equal,
    LessThan,
    SetCol,
    ResetCol,
    BitwiseNot,
    BitwiseAnd,
    BitwiseOr,
    Add,
    Multiply,
    ReduceSum,
    ReduceMin,
    ReduceMax,
    ColumnTransform,
    ConfigurePage,
}

/// Static facts about one opcode, shared by the request codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpcodeDescriptor {
    pub opcode: Opcode,
    pub code: u8,
    pub mnemonic: &'static str,
    pub has_src2: bool,
    pub has_imm: bool,
    /// The destination names a row as well as a column.
    pub has_dst_row: bool,
}

const fn d(
    opcode: Opcode,
    code: u8,
    mnemonic: &'static str,
    has_src2: bool,
    has_imm: bool,
    has_dst_row: bool,
) -> OpcodeDescriptor {
    OpcodeDescriptor {
        opcode,
        code,
        mnemonic,
        has_src2,
        has_imm,
        has_dst_row,
    }
}

pub const DESCRIPTORS: [OpcodeDescriptor; 19] = [
    d(Opcode::EqualImm, 0, "eq_imm", false, true, false),
    d(Opcode::NotEqualImm, 1, "ne_imm", false, true, false),
    d(Opcode::LessThanImm, 2, "lt_imm", false, true, false),
    d(Opcode::GreaterThanImm, 3, "gt_imm", false, true, false),
    d(Opcode::AddImm, 4, "add_imm", false, true, false),
    d(Opcode::Equal, 5, "eq", true, false, false),
    d(Opcode::LessThan, 6, "lt", true, false, false),
    d(Opcode::SetCol, 7, "set", false, false, false),
    d(Opcode::ResetCol, 8, "reset", false, false, false),
    d(Opcode::BitwiseNot, 9, "not", false, false, false),
    d(Opcode::BitwiseAnd, 10, "and", true, false, false),
    d(Opcode::BitwiseOr, 11, "or", true, false, false),
    d(Opcode::Add, 12, "add", true, false, false),
    d(Opcode::Multiply, 13, "mul", true, false, false),
    d(Opcode::ReduceSum, 14, "reduce_sum", false, false, true),
    d(Opcode::ReduceMin, 15, "reduce_min", false, false, true),
    d(Opcode::ReduceMax, 16, "reduce_max", false, false, true),
    d(
        Opcode::ColumnTransform,
        17,
        "column_transform",
        false,
        false,
        true,
    ),
    d(
        Opcode::ConfigurePage,
        18,
        "configure_page",
        false,
        false,
        false,
    ),
];

impl Opcode {
    pub const ALL: [Opcode; 19] = {
        let mut all = [Opcode::EqualImm; 19];
        let mut i = 0;
        while i < 19 {
            all[i] = DESCRIPTORS[i].opcode;
            i += 1;
        }
        all
    };

    pub fn descriptor(self) -> &'static OpcodeDescriptor {
        &DESCRIPTORS[self as usize]
    }

    pub fn code(self) -> u8 {
        self.descriptor().code
    }

    pub fn from_code(code: u8) -> Option<Opcode> {
        DESCRIPTORS.get(code as usize).map(|d| d.opcode)
    }

    pub fn mnemonic(self) -> &'static str {
        self.descriptor().mnemonic
    }

    pub fn is_reduce(self) -> bool {
        matches!(
            self,
            Opcode::ReduceSum | Opcode::ReduceMin | Opcode::ReduceMax
        )
    }

    /// Instructions whose control sequence depends on an immediate.
    pub fn is_immediate(self) -> bool {
        self.descriptor().has_imm
    }
}

/// A run of consecutive columns.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub start: u16,
    pub len: u16,
}

impl Field {
    pub const fn new(start: u16, len: u16) -> Self {
        Field { start, len }
    }

    pub fn end(&self) -> usize {
        self.start as usize + self.len as usize
    }

    /// Column of bit `i` (bit 0 is the least significant).
    pub fn col(&self, i: usize) -> u32 {
        self.start as u32 + i as u32
    }

    pub fn contains(&self, col: usize) -> bool {
        col >= self.start as usize && col < self.end()
    }

    pub fn overlaps(&self, o: &Field) -> bool {
        self.len > 0
            && o.len > 0
            && (self.start as usize) < o.end()
            && (o.start as usize) < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Immediate {
    pub value: u64,
    /// Number of immediate bits `m`.
    pub len: u8,
}

impl Immediate {
    pub fn new(value: u64, len: u8) -> Result<Self> {
        if len == 0 || len > 64 {
            return Err(Error::Width(format!(
                "immediate length {len} not in 1..=64"
            )));
        }
        if len < 64 && value >> len != 0 {
            return Err(Error::Width(format!(
                "immediate {value} does not fit {len} bits"
            )));
        }
        Ok(Immediate { value, len })
    }

    pub fn bit(&self, i: usize) -> bool {
        i < 64 && (self.value >> i) & 1 == 1
    }

    /// Counts of zero and one bits over the low `len` bits.
    pub fn zeros_ones(&self) -> (u32, u32) {
        let ones = self.value.count_ones();
        (self.len as u32 - ones, ones)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PimInstruction {
    pub opcode: Opcode,
    pub src1: Field,
    pub src2: Option<Field>,
    pub imm: Option<Immediate>,
    pub dst_col: u16,
    /// Result row of reduce and first destination row of column-transform.
    pub dst_row: u32,
    /// Scratch columns the instruction may clobber.
    pub compute: Field,
}

impl PimInstruction {
    pub fn new(opcode: Opcode, src1: Field) -> Self {
        PimInstruction {
            opcode,
            src1,
            src2: None,
            imm: None,
            dst_col: 0,
            dst_row: 0,
            compute: Field::default(),
        }
    }

    pub fn with_src2(mut self, f: Field) -> Self {
        self.src2 = Some(f);
        self
    }

    pub fn with_imm(mut self, value: u64, len: u8) -> Self {
        self.imm = Some(Immediate { value, len });
        self
    }

    pub fn with_dst(mut self, col: u16) -> Self {
        self.dst_col = col;
        self
    }

    pub fn with_dst_row(mut self, row: u32) -> Self {
        self.dst_row = row;
        self
    }

    pub fn with_compute(mut self, f: Field) -> Self {
        self.compute = f;
        self
    }

    /// SET or RESET of a whole field.
    pub fn fill(set: bool, field: Field) -> Self {
        let op = if set {
            Opcode::SetCol
        } else {
            Opcode::ResetCol
        };
        PimInstruction::new(op, field).with_dst(field.start)
    }

    pub fn configure_page(compute: Field) -> Self {
        PimInstruction::new(Opcode::ConfigurePage, Field::default()).with_compute(compute)
    }

    fn src2_or_err(&self) -> Result<Field> {
        self.src2.ok_or_else(|| {
            Error::Instruction(format!("{} needs a second operand", self.opcode.mnemonic()))
        })
    }

    /// Operand width `n` used by the expansion: the wider of the two sources
    /// for two-operand arithmetic.
    pub fn width(&self) -> usize {
        match (self.opcode, self.src2) {
            (Opcode::Add | Opcode::Equal | Opcode::LessThan, Some(s2)) => {
                self.src1.len.max(s2.len) as usize
            }
            _ => self.src1.len as usize,
        }
    }

    /// Result bits written at `dst_col`.
    pub fn dst_width(&self, g: &CrossbarGeometry) -> usize {
        let n = self.width();
        match self.opcode {
            Opcode::EqualImm
            | Opcode::NotEqualImm
            | Opcode::LessThanImm
            | Opcode::GreaterThanImm
            | Opcode::Equal
            | Opcode::LessThan => 1,
            Opcode::SetCol
            | Opcode::ResetCol
            | Opcode::BitwiseNot
            | Opcode::BitwiseAnd
            | Opcode::BitwiseOr
            | Opcode::Add
            | Opcode::AddImm
            | Opcode::ReduceMin
            | Opcode::ReduceMax => n,
            Opcode::Multiply => n + self.src2.map_or(0, |f| f.len as usize),
            Opcode::ReduceSum => n + log2_exact(g.rows).unwrap_or(0),
            Opcode::ColumnTransform => g.read_width,
            Opcode::ConfigurePage => 0,
        }
    }

    pub fn dst_field(&self, g: &CrossbarGeometry) -> Field {
        Field::new(self.dst_col, self.dst_width(g) as u16)
    }

    /// Scratch columns the expansion needs inside `compute`.
    pub fn scratch_needed(&self) -> usize {
        let uneven = matches!(self.src2, Some(s2) if s2.len != self.src1.len) as usize;
        match self.opcode {
            Opcode::EqualImm => 1,
            Opcode::NotEqualImm => 2,
            Opcode::LessThanImm => 5,
            Opcode::GreaterThanImm => 4,
            Opcode::AddImm => 7,
            Opcode::Equal => 5 + uneven,
            Opcode::LessThan => 4 + uneven,
            Opcode::SetCol | Opcode::ResetCol | Opcode::BitwiseNot => 0,
            Opcode::BitwiseAnd => 2,
            Opcode::BitwiseOr => 1,
            Opcode::Add => 5 + uneven,
            Opcode::Multiply => 6,
            Opcode::ReduceSum => 6,
            Opcode::ReduceMin | Opcode::ReduceMax => 9,
            Opcode::ColumnTransform | Opcode::ConfigurePage => 0,
        }
    }

    /// Checks operand placement against a crossbar geometry.
    pub fn validate(&self, g: &CrossbarGeometry) -> Result<()> {
        let desc = self.opcode.descriptor();
        let mn = desc.mnemonic;
        let in_range = |f: &Field, what: &str| -> Result<()> {
            if f.end() > g.cols {
                return Err(Error::Bounds(format!(
                    "{mn}: {what} columns {}..{} exceed {}",
                    f.start,
                    f.end(),
                    g.cols
                )));
            }
            Ok(())
        };
        if self.opcode == Opcode::ConfigurePage {
            in_range(&self.compute, "compute region")?;
            return Ok(());
        }
        if self.src1.len == 0 {
            return Err(Error::Width(format!("{mn}: empty operand")));
        }
        in_range(&self.src1, "src1")?;
        match (desc.has_src2, self.src2) {
            (true, Some(s2)) => {
                if s2.len == 0 {
                    return Err(Error::Width(format!("{mn}: empty second operand")));
                }
                in_range(&s2, "src2")?;
            }
            (true, None) => return Err(self.src2_or_err().unwrap_err()),
            (false, Some(_)) => {
                return Err(Error::Instruction(format!("{mn} takes no second operand")))
            }
            (false, None) => {}
        }
        if matches!(self.opcode, Opcode::BitwiseAnd | Opcode::BitwiseOr)
            && self.src2.map(|f| f.len) != Some(self.src1.len)
        {
            return Err(Error::Width(format!("{mn}: operands differ in width")));
        }
        match (desc.has_imm, self.imm) {
            (true, Some(imm)) => {
                Immediate::new(imm.value, imm.len)?;
                let n = self.src1.len as usize;
                if self.opcode == Opcode::AddImm {
                    if imm.len as usize > n {
                        return Err(Error::Width(format!(
                            "{mn}: immediate wider than operand ({} > {n})",
                            imm.len
                        )));
                    }
                } else if imm.len as usize != n {
                    return Err(Error::Width(format!(
                        "{mn}: immediate length {} != operand length {n}",
                        imm.len
                    )));
                }
            }
            (true, None) => return Err(Error::Instruction(format!("{mn} needs an immediate"))),
            (false, Some(_)) => return Err(Error::Instruction(format!("{mn} takes no immediate"))),
            (false, None) => {}
        }
        if !desc.has_dst_row && self.dst_row != 0 {
            return Err(Error::Instruction(format!("{mn} takes no destination row")));
        }
        if self.dst_row as usize >= g.rows {
            return Err(Error::Bounds(format!(
                "{mn}: destination row {} >= {}",
                self.dst_row, g.rows
            )));
        }
        if self.opcode.is_reduce() && log2_exact(g.rows).is_none() {
            return Err(Error::Geometry(format!(
                "{mn} needs a power-of-two row count, got {}",
                g.rows
            )));
        }
        if self.opcode == Opcode::Multiply
            && self.width() + self.src2.map_or(0, |f| f.len as usize) > 128
        {
            return Err(Error::Width(format!("{mn}: product wider than 128 bits")));
        }
        if self.opcode == Opcode::ColumnTransform {
            if self.src1.len != 1 {
                return Err(Error::Width(format!("{mn} moves exactly one column")));
            }
            let out_rows = g.rows.div_ceil(g.read_width);
            if self.dst_row as usize + out_rows > g.rows {
                return Err(Error::Capacity(format!(
                    "{mn}: {out_rows} destination rows from row {} exceed {}",
                    self.dst_row, g.rows
                )));
            }
        }

        let dst = self.dst_field(g);
        in_range(&dst, "destination")?;
        if matches!(self.opcode, Opcode::SetCol | Opcode::ResetCol) && dst.start != self.src1.start
        {
            return Err(Error::Instruction(format!(
                "{mn}: destination must equal the operand field"
            )));
        }
        // Same-aligned in-place results are allowed where every source bit is
        // consumed before the matching result bit is written.
        let in_place_ok = matches!(
            self.opcode,
            Opcode::BitwiseAnd | Opcode::BitwiseOr | Opcode::Add | Opcode::AddImm
        );
        let set_like = matches!(self.opcode, Opcode::SetCol | Opcode::ResetCol);
        for src in std::iter::once(self.src1).chain(self.src2) {
            if set_like || !dst.overlaps(&src) {
                continue;
            }
            if !(in_place_ok && dst.start == src.start && dst.len >= src.len) {
                return Err(Error::Aliasing(format!(
                    "{mn}: destination {}..{} overlaps operand {}..{}",
                    dst.start,
                    dst.end(),
                    src.start,
                    src.end()
                )));
            }
        }

        let need = self.scratch_needed();
        if (self.compute.len as usize) < need {
            return Err(Error::Capacity(format!(
                "{mn}: needs {need} scratch columns, compute region has {}",
                self.compute.len
            )));
        }
        if need > 0 {
            let used = Field::new(self.compute.start, need as u16);
            in_range(&used, "compute region")?;
            for (f, what) in [
                (Some(self.src1), "src1"),
                (self.src2, "src2"),
                (Some(dst), "destination"),
            ] {
                if let Some(f) = f {
                    if used.overlaps(&f) {
                        return Err(Error::Aliasing(format!(
                            "{mn}: compute region overlaps {what}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn log2_exact(v: usize) -> Option<usize> {
    v.is_power_of_two().then(|| v.trailing_zeros() as usize)
}
