//! Lowering of typed queries into phased PIM plans.
//!
//! A plan is a list of phases. Each phase runs a block of PIM instructions on
//! every page of the relation and then reads results back: a bitmap of
//! matching rows spread over read units by a column transform, or one reduced
//! value per crossbar. The host combines what it read.
//!
//! Columns of the free area are handed out by a stack allocator. Each
//! instruction's compute region is everything above the stack top.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarGeometry;
use crate::error::{Error, Result};
use crate::isa::{cost_of, log2_exact, Field, Opcode, PimInstruction};
use crate::layout::RelationLayout;

use super::ast::{CmpOp, Query};
use super::typed::{TAgg, TExpr, TPred, TypedQuery, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combine {
    Sum,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadOp {
    /// Column-transform output: `read_width` columns from `col`, rows `row..`.
    Bitmap { slot: usize, col: u16, row: u32 },
    /// One value per crossbar, in row 0 of `field`.
    Value {
        slot: usize,
        field: Field,
        combine: Combine,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub instructions: Vec<PimInstruction>,
    pub reads: Vec<ReadOp>,
}

/// Host-side combination of bitmaps read by different phases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HostExpr {
    Bitmap(usize),
    And(Vec<HostExpr>),
    Or(Vec<HostExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggOutput {
    Count {
        count: usize,
    },
    Sum {
        slot: usize,
        scale: u32,
    },
    /// Host division of a sum by the count.
    Avg {
        sum: usize,
        count: usize,
        scale: u32,
    },
    /// `slot` holds the minimum of values forced to all-ones outside the filter.
    Min {
        slot: usize,
        count: usize,
        kind: ValueKind,
    },
    Max {
        slot: usize,
        count: usize,
        kind: ValueKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Output {
    Ids(HostExpr),
    Aggregates(Vec<AggOutput>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub query: Query,
    pub relation: String,
    pub phases: Vec<Phase>,
    pub output: Output,
}

impl ExecutionPlan {
    pub fn instructions(&self) -> impl Iterator<Item = &PimInstruction> {
        self.phases.iter().flat_map(|p| &p.instructions)
    }

    pub fn count_opcode(&self, op: Opcode) -> usize {
        self.instructions().filter(|i| i.opcode == op).count()
    }

    pub fn reduce_count(&self) -> usize {
        self.instructions().filter(|i| i.opcode.is_reduce()).count()
    }

    pub fn host_divisions(&self) -> usize {
        match &self.output {
            Output::Aggregates(a) => a
                .iter()
                .filter(|o| matches!(o, AggOutput::Avg { .. }))
                .count(),
            Output::Ids(_) => 0,
        }
    }

    /// Logic cycles one page spends on the plan.
    pub fn cycles_per_page(&self, g: &CrossbarGeometry) -> Result<u64> {
        self.instructions()
            .map(|i| cost_of(i, g).map(|c| c.cycles))
            .sum()
    }
}

impl fmt::Display for ExecutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "plan for: {}", self.query)?;
        for (k, p) in self.phases.iter().enumerate() {
            writeln!(f, "phase {k}:")?;
            for i in &p.instructions {
                write!(
                    f,
                    "  {:<16} src1={}+{}",
                    i.opcode.mnemonic(),
                    i.src1.start,
                    i.src1.len
                )?;
                if let Some(s2) = i.src2 {
                    write!(f, " src2={}+{}", s2.start, s2.len)?;
                }
                if let Some(imm) = i.imm {
                    write!(f, " imm={}/{}", imm.value, imm.len)?;
                }
                writeln!(
                    f,
                    " dst={} row={} compute={}+{}",
                    i.dst_col, i.dst_row, i.compute.start, i.compute.len
                )?;
            }
            for r in &p.reads {
                match r {
                    ReadOp::Bitmap { slot, col, row } => {
                        writeln!(f, "  read bitmap #{slot} col={col} row={row}")?
                    }
                    ReadOp::Value {
                        slot,
                        field,
                        combine,
                    } => writeln!(
                        f,
                        "  read value #{slot} field={}+{} combine={combine:?}",
                        field.start, field.len
                    )?,
                }
            }
        }
        write!(f, "output: {:?}", self.output)
    }
}

fn capacity(e: &Error) -> bool {
    matches!(e, Error::Capacity(_))
}

fn bits_of(c: u128) -> usize {
    (128 - c.leading_zeros() as usize).max(1)
}

struct Compiler<'a> {
    layout: &'a RelationLayout,
    g: CrossbarGeometry,
    top: usize,
    end: usize,
    out: Vec<PimInstruction>,
}

impl<'a> Compiler<'a> {
    fn new(layout: &'a RelationLayout, g: CrossbarGeometry) -> Self {
        Compiler {
            layout,
            g,
            top: layout.free.start as usize,
            end: layout.free.end(),
            out: Vec::new(),
        }
    }

    fn alloc(&mut self, w: usize) -> Result<Field> {
        if self.top + w > self.end {
            return Err(Error::Capacity(format!(
                "free area {}..{} cannot hold {w} more columns",
                self.layout.free.start, self.end
            )));
        }
        let f = Field::new(self.top as u16, w as u16);
        self.top += w;
        Ok(f)
    }

    fn alloc_aligned(&mut self, w: usize) -> Result<Field> {
        let start = self.top.div_ceil(w) * w;
        if start + w > self.end {
            return Err(Error::Capacity(format!(
                "no aligned {w}-column unit left in the free area"
            )));
        }
        self.top = start + w;
        Ok(Field::new(start as u16, w as u16))
    }

    /// A result field that does not straddle a read-unit boundary when it
    /// fits in one unit.
    fn alloc_result(&mut self, w: usize) -> Result<Field> {
        let unit = self.g.read_width;
        if w <= unit && self.top / unit != (self.top + w - 1) / unit {
            self.top = self.top.div_ceil(unit) * unit;
        }
        self.alloc(w)
    }

    fn emit(&mut self, instr: PimInstruction) -> Result<()> {
        let instr = instr.with_compute(Field::new(self.top as u16, (self.end - self.top) as u16));
        instr.validate(&self.g)?;
        self.out.push(instr);
        Ok(())
    }

    fn one(col: u16) -> Field {
        Field::new(col, 1)
    }

    /// Copies `src` into the low bits of a new `w`-bit field.
    fn widen(&mut self, src: Field, w: usize) -> Result<Field> {
        let d = self.alloc(w)?;
        let n = src.len as usize;
        self.emit(
            PimInstruction::new(Opcode::BitwiseOr, src)
                .with_src2(src)
                .with_dst(d.start),
        )?;
        if w > n {
            self.emit(PimInstruction::fill(
                false,
                Field::new(d.start + n as u16, (w - n) as u16),
            ))?;
        }
        Ok(d)
    }

    /// Evaluates a non-constant expression into a field holding its exact value.
    fn expr(&mut self, e: &TExpr) -> Result<Field> {
        let f = match e {
            TExpr::Attr(i) => self.layout.attributes[*i].field,
            TExpr::Const(_) => {
                return Err(Error::Instruction(
                    "constant operand outside a comparison".into(),
                ))
            }
            TExpr::Add(a, b) => match **b {
                TExpr::Const(c) => {
                    let fa = self.expr(a)?;
                    if c == 0 {
                        return Ok(fa);
                    }
                    if c >> 64 != 0 {
                        return Err(Error::Width(format!("constant {c} wider than 64 bits")));
                    }
                    let cb = bits_of(c);
                    let n = fa.len as usize;
                    // The carry lands in the first compute column, right after
                    // the sum, and is kept as its top bit.
                    let d = if cb <= n {
                        let d = self.alloc(n)?;
                        self.emit(
                            PimInstruction::new(Opcode::AddImm, fa)
                                .with_imm(c as u64, cb as u8)
                                .with_dst(d.start),
                        )?;
                        d
                    } else {
                        let d = self.widen(fa, cb)?;
                        self.emit(
                            PimInstruction::new(Opcode::AddImm, d)
                                .with_imm(c as u64, cb as u8)
                                .with_dst(d.start),
                        )?;
                        d
                    };
                    self.alloc(1)?;
                    Field::new(d.start, d.len + 1)
                }
                _ => {
                    let fa = self.expr(a)?;
                    let fb = self.expr(b)?;
                    let d = self.alloc(fa.len.max(fb.len) as usize)?;
                    self.emit(
                        PimInstruction::new(Opcode::Add, fa)
                            .with_src2(fb)
                            .with_dst(d.start),
                    )?;
                    self.alloc(1)?;
                    Field::new(d.start, d.len + 1)
                }
            },
            TExpr::Mul(a, b) => match **b {
                TExpr::Const(c) => {
                    let fa = self.expr(a)?;
                    match c {
                        0 => {
                            let d = self.alloc(1)?;
                            self.emit(PimInstruction::fill(false, d))?;
                            d
                        }
                        1 => fa,
                        _ => {
                            // Shift-and-add over the set bits of the constant.
                            let w = fa.len as usize + bits_of(c);
                            if w > 128 {
                                return Err(Error::Width(format!(
                                    "product wider than 128 bits: {e:?}"
                                )));
                            }
                            let d = self.alloc(w)?;
                            self.emit(PimInstruction::fill(false, d))?;
                            for k in (0..128).filter(|k| c >> k & 1 == 1) {
                                let acc = Field::new(d.start + k as u16, (w - k) as u16);
                                self.emit(
                                    PimInstruction::new(Opcode::Add, acc)
                                        .with_src2(fa)
                                        .with_dst(acc.start),
                                )?;
                            }
                            d
                        }
                    }
                }
                _ => {
                    let fa = self.expr(a)?;
                    let fb = self.expr(b)?;
                    let d = self.alloc((fa.len + fb.len) as usize)?;
                    self.emit(
                        PimInstruction::new(Opcode::Multiply, fa)
                            .with_src2(fb)
                            .with_dst(d.start),
                    )?;
                    d
                }
            },
        };
        Ok(f)
    }

    /// Writes the truth value of `p` into column `dst`.
    fn pred(&mut self, p: &TPred, dst: u16) -> Result<()> {
        let mark = self.top;
        match p {
            TPred::Const(b) => self.emit(PimInstruction::fill(*b, Self::one(dst)))?,
            TPred::Cmp(a, op, b) => self.cmp(a, *op, b, dst)?,
            TPred::And(ps) | TPred::Or(ps) => {
                let op = if matches!(p, TPred::And(_)) {
                    Opcode::BitwiseAnd
                } else {
                    Opcode::BitwiseOr
                };
                self.pred(&ps[0], dst)?;
                for q in &ps[1..] {
                    let t = self.alloc(1)?.start;
                    self.pred(q, t)?;
                    self.emit(
                        PimInstruction::new(op, Self::one(dst))
                            .with_src2(Self::one(t))
                            .with_dst(dst),
                    )?;
                    self.top = mark;
                }
            }
        }
        self.top = mark;
        Ok(())
    }

    fn cmp(&mut self, a: &TExpr, op: CmpOp, b: &TExpr, dst: u16) -> Result<()> {
        let fa = self.expr(a)?;
        // Non-strict comparisons are the negation of the strict opposite.
        let (strict, negate) = match op {
            CmpOp::Le => (CmpOp::Gt, true),
            CmpOp::Ge => (CmpOp::Lt, true),
            op => (op, false),
        };
        let instr = match b {
            TExpr::Const(c) => {
                let n = fa.len as usize;
                if n < 128 && *c >> n != 0 {
                    // The constant exceeds every value the field can hold.
                    let truth = matches!(op, CmpOp::Ne | CmpOp::Lt | CmpOp::Le);
                    return self.emit(PimInstruction::fill(truth, Self::one(dst)));
                }
                if n > 64 {
                    return Err(Error::Width(format!(
                        "comparison of a {n}-bit value with a constant"
                    )));
                }
                let opcode = match strict {
                    CmpOp::Eq => Opcode::EqualImm,
                    CmpOp::Ne => Opcode::NotEqualImm,
                    CmpOp::Lt => Opcode::LessThanImm,
                    _ => Opcode::GreaterThanImm,
                };
                PimInstruction::new(opcode, fa).with_imm(*c as u64, n as u8)
            }
            _ => {
                let fb = self.expr(b)?;
                match strict {
                    CmpOp::Eq | CmpOp::Ne => PimInstruction::new(Opcode::Equal, fa).with_src2(fb),
                    CmpOp::Lt => PimInstruction::new(Opcode::LessThan, fa).with_src2(fb),
                    _ => PimInstruction::new(Opcode::LessThan, fb).with_src2(fa),
                }
            }
        };
        let negate = negate || (op == CmpOp::Ne && instr.opcode == Opcode::Equal);
        if negate {
            let t = self.alloc(1)?.start;
            self.emit(instr.with_dst(t))?;
            self.emit(PimInstruction::new(Opcode::BitwiseNot, Self::one(t)).with_dst(dst))
        } else {
            self.emit(instr.with_dst(dst))
        }
    }

    /// Computes the filter AND valid bit; returns its column.
    fn filter(&mut self, p: Option<&TPred>) -> Result<u16> {
        let valid = self.layout.valid_col;
        let Some(p) = p else { return Ok(valid) };
        let f = self.alloc(1)?.start;
        self.pred(p, f)?;
        self.emit(
            PimInstruction::new(Opcode::BitwiseAnd, Self::one(f))
                .with_src2(Self::one(valid))
                .with_dst(f),
        )?;
        Ok(f)
    }
}

struct Planner<'a> {
    layout: &'a RelationLayout,
    g: CrossbarGeometry,
    phases: Vec<Phase>,
    slots: usize,
}

impl Planner<'_> {
    fn bitmap_phase(&self, p: Option<&TPred>, slot: usize) -> Result<Phase> {
        let mut c = Compiler::new(self.layout, self.g);
        let f = c.filter(p)?;
        let w = self.g.read_width;
        let t = c.alloc_aligned(w)?;
        // Successive bitmaps land in different rows to spread wear.
        let out_rows = self.g.rows.div_ceil(w);
        let row = ((slot % (self.g.rows / out_rows).max(1)) * out_rows) as u32;
        c.emit(
            PimInstruction::new(Opcode::ColumnTransform, Compiler::one(f))
                .with_dst(t.start)
                .with_dst_row(row),
        )?;
        Ok(Phase {
            instructions: c.out,
            reads: vec![ReadOp::Bitmap {
                slot,
                col: t.start,
                row,
            }],
        })
    }

    fn try_phase(&self, p: &TPred) -> Result<Option<Phase>> {
        match self.bitmap_phase(Some(p), self.slots) {
            Ok(ph) => Ok(Some(ph)),
            Err(e) if capacity(&e) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn push(&mut self, ph: Phase) -> HostExpr {
        self.phases.push(ph);
        self.slots += 1;
        HostExpr::Bitmap(self.slots - 1)
    }

    /// Plans `p` in as few phases as a greedy split allows.
    fn split(&mut self, p: &TPred) -> Result<HostExpr> {
        if let Some(ph) = self.try_phase(p)? {
            return Ok(self.push(ph));
        }
        let (ps, is_and) = match p {
            TPred::And(ps) => (ps, true),
            TPred::Or(ps) => (ps, false),
            _ => {
                // Surface the underlying capacity error.
                self.bitmap_phase(Some(p), self.slots)?;
                unreachable!()
            }
        };
        let group = |g: &[TPred]| {
            if g.len() == 1 {
                g[0].clone()
            } else if is_and {
                TPred::And(g.to_vec())
            } else {
                TPred::Or(g.to_vec())
            }
        };
        let mut parts = Vec::new();
        let mut cur: Vec<TPred> = Vec::new();
        let mut cur_phase: Option<Phase> = None;
        for q in ps {
            let mut cand = cur.clone();
            cand.push(q.clone());
            if let Some(ph) = self.try_phase(&group(&cand))? {
                cur = cand;
                cur_phase = Some(ph);
                continue;
            }
            if let Some(ph) = cur_phase.take() {
                parts.push(self.push(ph));
            }
            cur.clear();
            match self.try_phase(q)? {
                Some(ph) => {
                    cur.push(q.clone());
                    cur_phase = Some(ph);
                }
                None => parts.push(self.split(q)?),
            }
        }
        if let Some(ph) = cur_phase {
            parts.push(self.push(ph));
        }
        Ok(if is_and {
            HostExpr::And(parts)
        } else {
            HostExpr::Or(parts)
        })
    }

    fn aggregates(&mut self, p: Option<&TPred>, aggs: &[TAgg]) -> Result<Output> {
        let mut c = Compiler::new(self.layout, self.g);
        let f = c.filter(p).map_err(|e| match e {
            Error::Capacity(m) => Error::Capacity(format!(
                "the filter of an aggregate query must fit one phase: {m}"
            )),
            e => e,
        })?;
        let base = c.top;
        let levels = log2_exact(self.g.rows).ok_or_else(|| {
            Error::Geometry(format!(
                "reduction needs a power-of-two row count, got {}",
                self.g.rows
            ))
        })?;
        let fcol = Compiler::one(f);
        let mut count = None;
        let needs_count = aggs.iter().any(|a| !matches!(a, TAgg::Sum(..)));
        let mut outputs = Vec::new();
        let mut todo: Vec<Option<&TAgg>> = Vec::new();
        if needs_count {
            todo.push(None);
        }
        todo.extend(aggs.iter().map(Some));
        for agg in todo {
            c.top = base;
            let slot = self.slots;
            self.slots += 1;
            let (r, combine) = match agg {
                None | Some(TAgg::Count) if count.is_some() => {
                    outputs.push(AggOutput::Count {
                        count: count.unwrap(),
                    });
                    self.slots -= 1;
                    continue;
                }
                None | Some(TAgg::Count) => {
                    let r = c.alloc_result(1 + levels)?;
                    c.emit(PimInstruction::new(Opcode::ReduceSum, fcol).with_dst(r.start))?;
                    count = Some(slot);
                    if agg.is_some() {
                        outputs.push(AggOutput::Count { count: slot });
                    }
                    (r, Combine::Sum)
                }
                Some(TAgg::Sum(e, _) | TAgg::Avg(e, _)) => {
                    let fe = c.expr(e)?;
                    let n = fe.len as usize;
                    let masked = c.alloc(n + 1)?;
                    c.emit(
                        PimInstruction::new(Opcode::Multiply, fe)
                            .with_src2(fcol)
                            .with_dst(masked.start),
                    )?;
                    let r = c.alloc_result(n + levels)?;
                    if r.len > 128 {
                        return Err(Error::Width(format!(
                            "sum of a {n}-bit value is wider than 128 bits"
                        )));
                    }
                    c.emit(
                        PimInstruction::new(Opcode::ReduceSum, Field::new(masked.start, n as u16))
                            .with_dst(r.start),
                    )?;
                    outputs.push(match agg {
                        Some(TAgg::Sum(_, s)) => AggOutput::Sum { slot, scale: *s },
                        Some(TAgg::Avg(_, s)) => AggOutput::Avg {
                            sum: slot,
                            count: count.unwrap(),
                            scale: *s,
                        },
                        _ => unreachable!(),
                    });
                    (r, Combine::Sum)
                }
                Some(TAgg::Max(i, kind)) => {
                    let fa = self.layout.attributes[*i].field;
                    let n = fa.len as usize;
                    let masked = c.alloc(n + 1)?;
                    c.emit(
                        PimInstruction::new(Opcode::Multiply, fa)
                            .with_src2(fcol)
                            .with_dst(masked.start),
                    )?;
                    let r = c.alloc_result(n)?;
                    c.emit(
                        PimInstruction::new(Opcode::ReduceMax, Field::new(masked.start, n as u16))
                            .with_dst(r.start),
                    )?;
                    outputs.push(AggOutput::Max {
                        slot,
                        count: count.unwrap(),
                        kind: *kind,
                    });
                    (r, Combine::Max)
                }
                Some(TAgg::Min(i, kind)) => {
                    // Rows outside the filter become all-ones, the neutral value.
                    let fa = self.layout.attributes[*i].field;
                    let n = fa.len as usize;
                    let nf = c.alloc(1)?;
                    c.emit(PimInstruction::new(Opcode::BitwiseNot, fcol).with_dst(nf.start))?;
                    let masked = c.alloc(n)?;
                    for k in 0..n as u16 {
                        let bit = Field::new(fa.start + k, 1);
                        c.emit(
                            PimInstruction::new(Opcode::BitwiseOr, bit)
                                .with_src2(nf)
                                .with_dst(masked.start + k),
                        )?;
                    }
                    let r = c.alloc_result(n)?;
                    c.emit(PimInstruction::new(Opcode::ReduceMin, masked).with_dst(r.start))?;
                    outputs.push(AggOutput::Min {
                        slot,
                        count: count.unwrap(),
                        kind: *kind,
                    });
                    (r, Combine::Min)
                }
            };
            let instructions = std::mem::take(&mut c.out);
            self.phases.push(Phase {
                instructions,
                reads: vec![ReadOp::Value {
                    slot,
                    field: r,
                    combine,
                }],
            });
        }
        Ok(Output::Aggregates(outputs))
    }
}

/// Compiles a type-checked query for `layout` on crossbars of geometry `g`.
pub fn compile(
    query: &Query,
    typed: &TypedQuery,
    layout: &RelationLayout,
    g: &CrossbarGeometry,
) -> Result<ExecutionPlan> {
    if layout.free.start as usize >= g.cols {
        return Err(Error::Capacity(format!(
            "relation {} leaves no free columns",
            layout.name
        )));
    }
    let mut pl = Planner {
        layout,
        g: *g,
        phases: Vec::new(),
        slots: 0,
    };
    let output = match &typed.aggregates {
        None => Output::Ids(match &typed.filter {
            None => {
                let ph = pl.bitmap_phase(None, 0)?;
                pl.push(ph)
            }
            Some(p) => pl.split(p)?,
        }),
        Some(aggs) => pl.aggregates(typed.filter.as_ref(), aggs)?,
    };
    Ok(ExecutionPlan {
        query: query.clone(),
        relation: layout.name.clone(),
        phases: pl.phases,
        output,
    })
}
