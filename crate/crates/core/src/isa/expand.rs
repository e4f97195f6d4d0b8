//! Micro-op sequences for every instruction.
//!
//! Gates only pull outputs from 1 to 0, so a fresh gate is a SET of the
//! output followed by the gate (two cycles); a gate issued onto an output
//! that already holds a partial result ANDs into it (one cycle).

use crate::crossbar::{CrossbarGeometry, MicroOp};
use crate::error::{Error, Result};

use super::{log2_exact, Field, Opcode, PimInstruction};

#[derive(Default)]
struct Seq {
    ops: Vec<MicroOp>,
}

impl Seq {
    fn set(&mut self, col: u32) {
        self.ops.push(MicroOp::ColSet { col });
    }

    fn reset(&mut self, col: u32) {
        self.ops.push(MicroOp::ColReset { col });
    }

    fn and_nor(&mut self, a: u32, b: u32, out: u32) {
        self.ops.push(MicroOp::ColNor2 { a, b, out });
    }

    fn and_not(&mut self, input: u32, out: u32) {
        self.ops.push(MicroOp::ColNot { input, out });
    }

    fn nor(&mut self, a: u32, b: u32, out: u32) {
        self.set(out);
        self.and_nor(a, b, out);
    }

    fn not(&mut self, input: u32, out: u32) {
        self.set(out);
        self.and_not(input, out);
    }

    fn row_set(&mut self, row: usize, col: u32) {
        self.ops.push(MicroOp::RowSet {
            row: row as u32,
            col,
        });
    }

    fn row_not(&mut self, col: u32, from: usize, to: usize) {
        self.ops.push(MicroOp::RowNot {
            col,
            from: from as u32,
            to: to as u32,
        });
    }

    /// `out <- x OR out` built from NOT/NOR macros (12 cycles).
    fn or_into(&mut self, x: u32, out: u32, t: [u32; 4]) {
        self.not(x, t[0]);
        self.not(t[0], t[1]);
        self.not(out, t[2]);
        self.nor(t[1], t[2], t[3]);
        self.nor(x, t[3], t[0]);
        self.not(t[0], out);
    }

    /// XNOR of `a` and `b` into `t[3]`; leaves `!a & b` in `t[1]` and
    /// `a & !b` in `t[2]` (8 cycles).
    fn xnor(&mut self, a: u32, b: u32, t: [u32; 4]) {
        self.nor(a, b, t[0]);
        self.nor(a, t[0], t[1]);
        self.nor(b, t[0], t[2]);
        self.nor(t[1], t[2], t[3]);
    }

    /// Nine-NOR full adder (18 cycles). `sum` may be `a` or `b`; `cout` may be `c`.
    fn full_add(&mut self, a: u32, b: u32, c: u32, t: [u32; 4], sum: u32, cout: u32) {
        self.xnor(a, b, t);
        self.nor(t[3], c, t[1]);
        self.nor(t[3], t[1], t[2]);
        self.nor(c, t[1], t[3]);
        self.nor(t[2], t[3], sum);
        self.nor(t[0], t[1], cout);
    }

    /// `out <- a AND b` (6 cycles).
    fn and(&mut self, a: u32, b: u32, out: u32, t: [u32; 2]) {
        self.not(a, t[0]);
        self.not(b, t[1]);
        self.nor(t[0], t[1], out);
    }
}

/// Bit `i` of an operand, reading the shared zero column past its width.
fn bit(f: Field, i: usize, zero: u32) -> u32 {
    if i < f.len as usize {
        f.col(i)
    } else {
        zero
    }
}

fn t4(s: &Field, from: usize) -> [u32; 4] {
    [
        s.col(from),
        s.col(from + 1),
        s.col(from + 2),
        s.col(from + 3),
    ]
}

/// Expands `instr` into the micro-op sequence every crossbar of the page runs.
pub fn expand(instr: &PimInstruction, g: &CrossbarGeometry) -> Result<Vec<MicroOp>> {
    instr.validate(g)?;
    let mut q = Seq::default();
    let s = instr.compute;
    let a = instr.src1;
    let n = instr.width();
    let dst = instr.dst_field(g);
    let d = dst.start as u32;
    match instr.opcode {
        Opcode::ConfigurePage => {}
        Opcode::SetCol => (0..n).for_each(|i| q.set(dst.col(i))),
        Opcode::ResetCol => (0..n).for_each(|i| q.reset(dst.col(i))),
        Opcode::BitwiseNot => (0..n).for_each(|i| q.not(a.col(i), dst.col(i))),
        Opcode::BitwiseOr => {
            let b = instr.src2.unwrap();
            for i in 0..n {
                q.nor(a.col(i), b.col(i), s.col(0));
                q.not(s.col(0), dst.col(i));
            }
        }
        Opcode::BitwiseAnd => {
            let b = instr.src2.unwrap();
            for i in 0..n {
                q.and(a.col(i), b.col(i), dst.col(i), [s.col(0), s.col(1)]);
            }
        }
        Opcode::EqualImm => equal_imm(&mut q, instr, d, s.col(0)),
        Opcode::NotEqualImm => {
            equal_imm(&mut q, instr, s.col(0), s.col(1));
            q.not(s.col(0), d);
        }
        Opcode::GreaterThanImm => {
            // G_i = v_i AND G (c_i = 1) or v_i OR G (c_i = 0), LSB first.
            q.reset(d);
            compare_imm_steps(&mut q, instr, d, t4(&s, 0));
        }
        Opcode::LessThanImm => {
            // v < c  <=>  NOT (v >= c); the >= chain starts at 1.
            let k = s.col(0);
            q.set(k);
            compare_imm_steps(&mut q, instr, k, t4(&s, 1));
            q.not(k, d);
        }
        Opcode::AddImm => {
            let imm = instr.imm.unwrap();
            let (carry, zero, one) = (s.col(0), s.col(1), s.col(2));
            q.reset(carry);
            q.reset(zero);
            q.set(one);
            for i in 0..n {
                let b = if imm.bit(i) { one } else { zero };
                q.full_add(a.col(i), b, carry, t4(&s, 3), dst.col(i), carry);
            }
        }
        Opcode::Equal => {
            let b = instr.src2.unwrap();
            let zero = s.col(5);
            if a.len != b.len {
                q.reset(zero);
            }
            let t = t4(&s, 0);
            q.set(d);
            for i in 0..n {
                q.xnor(bit(a, i, zero), bit(b, i, zero), t);
                q.not(t[3], s.col(4));
                q.and_not(s.col(4), d);
            }
        }
        Opcode::LessThan => {
            // L_i = (!a_i & b_i) OR (XNOR(a_i, b_i) AND L), LSB first.
            let b = instr.src2.unwrap();
            let zero = s.col(4);
            if a.len != b.len {
                q.reset(zero);
            }
            let t = t4(&s, 0);
            q.reset(d);
            for i in 0..n {
                q.xnor(bit(a, i, zero), bit(b, i, zero), t);
                q.not(t[3], t[0]);
                q.not(d, t[2]);
                q.nor(t[0], t[2], t[3]);
                q.nor(t[1], t[3], t[0]);
                q.not(t[0], d);
            }
        }
        Opcode::Add => {
            let b = instr.src2.unwrap();
            let carry = s.col(0);
            let zero = s.col(5);
            if a.len != b.len {
                q.reset(zero);
            }
            q.reset(carry);
            for i in 0..n {
                q.full_add(
                    bit(a, i, zero),
                    bit(b, i, zero),
                    carry,
                    t4(&s, 1),
                    dst.col(i),
                    carry,
                );
            }
        }
        Opcode::Multiply => {
            let b = instr.src2.unwrap();
            let m = b.len as usize;
            let t = t4(&s, 0);
            let (carry, p) = (s.col(4), s.col(5));
            for i in 0..n {
                q.and(a.col(i), b.col(0), dst.col(i), [t[0], t[1]]);
            }
            q.reset(dst.col(n));
            for j in 1..m {
                q.reset(carry);
                for i in 0..n {
                    q.and(a.col(i), b.col(j), p, [t[0], t[1]]);
                    let cout = if i == n - 1 { dst.col(n + j) } else { carry };
                    q.full_add(dst.col(i + j), p, carry, t, dst.col(i + j), cout);
                }
            }
        }
        Opcode::ReduceSum => reduce_sum(&mut q, instr, g),
        Opcode::ReduceMin | Opcode::ReduceMax => reduce_min_max(&mut q, instr, g),
        Opcode::ColumnTransform => column_transform(&mut q, instr, g)?,
    }
    Ok(q.ops)
}

/// Algorithm 1: m <- 1, then one conjunction per immediate bit with v_i or
/// NOT v_i. The immediate only steers control flow.
fn equal_imm(q: &mut Seq, instr: &PimInstruction, m: u32, t: u32) {
    let imm = instr.imm.unwrap();
    q.set(m);
    for i in 0..instr.src1.len as usize {
        let v = instr.src1.col(i);
        if imm.bit(i) {
            q.not(v, t);
            q.and_not(t, m);
        } else {
            q.and_not(v, m);
        }
    }
}

fn compare_imm_steps(q: &mut Seq, instr: &PimInstruction, acc: u32, t: [u32; 4]) {
    let imm = instr.imm.unwrap();
    for i in 0..instr.src1.len as usize {
        let v = instr.src1.col(i);
        if imm.bit(i) {
            q.not(v, t[0]);
            q.and_not(t[0], acc);
        } else {
            q.or_into(v, acc, t);
        }
    }
}

/// Rows paired at tree level `k` as (receiver, sender), relative to the
/// result row `root`.
fn tree_pairs(rows: usize, k: usize, root: usize) -> impl Iterator<Item = (usize, usize)> {
    let span = 1usize << k;
    (0..rows)
        .step_by(span * 2)
        .map(move |r| (r ^ root, (r + span) ^ root))
}

/// Moves bit column `col` of every sender into column `tmp` of its receiver:
/// `tmp <- NOT col` everywhere, then receiver cells take the negated sender cell.
fn move_bits(q: &mut Seq, col: u32, tmp: u32, rows: usize, k: usize, root: usize) {
    q.not(col, tmp);
    for (r, s) in tree_pairs(rows, k, root) {
        q.row_set(r, tmp);
        q.row_not(tmp, s, r);
    }
}

fn copy_field(q: &mut Seq, src: Field, dst: Field, tmp: u32) {
    for i in 0..src.len as usize {
        q.not(src.col(i), tmp);
        q.not(tmp, dst.col(i));
    }
}

fn reduce_sum(q: &mut Seq, instr: &PimInstruction, g: &CrossbarGeometry) {
    let levels = log2_exact(g.rows).unwrap();
    let n = instr.src1.len as usize;
    let acc = instr.dst_field(g);
    let s = instr.compute;
    let (carry, tmp) = (s.col(0), s.col(1));
    let t = t4(&s, 2);
    let root = instr.dst_row as usize;
    copy_field(q, instr.src1, acc, tmp);
    for k in 0..levels {
        let w = n + k;
        q.reset(carry);
        for b in 0..w {
            move_bits(q, acc.col(b), tmp, g.rows, k, root);
            let cout = if b == w - 1 { acc.col(w) } else { carry };
            q.full_add(acc.col(b), tmp, carry, t, acc.col(b), cout);
        }
    }
}

/// MSB-first pairwise MIN/MAX. `p` marks rows where the receiver is already
/// known smaller, `q` rows where the sender is.
fn reduce_min_max(q: &mut Seq, instr: &PimInstruction, g: &CrossbarGeometry) {
    let levels = log2_exact(g.rows).unwrap();
    let n = instr.src1.len as usize;
    let acc = instr.dst_field(g);
    let s = instr.compute;
    let c: Vec<u32> = (0..9).map(|i| s.col(i)).collect();
    let (x, xb, ab, w, z, u, v, lt_a, lt_b) =
        (c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]);
    let is_min = instr.opcode == Opcode::ReduceMin;
    let root = instr.dst_row as usize;
    copy_field(q, instr.src1, acc, x);
    for k in 0..levels {
        q.reset(lt_a);
        q.reset(lt_b);
        for b in (0..n).rev() {
            let a = acc.col(b);
            move_bits(q, a, x, g.rows, k, root);
            q.not(x, xb);
            q.not(a, ab);
            // w: receiver becomes smaller here; z: sender does.
            q.set(w);
            q.and_nor(a, xb, w);
            q.and_not(lt_b, w);
            q.set(z);
            q.and_nor(ab, x, z);
            q.and_not(lt_a, z);
            if is_min {
                // (a | lt_b) & (x | lt_a)
                q.nor(a, lt_b, u);
                q.nor(x, lt_a, v);
                q.nor(u, v, a);
            } else {
                // (a & !lt_a) | (x & !lt_b)
                q.nor(ab, lt_a, u);
                q.nor(xb, lt_b, v);
                q.nor(u, v, ab);
                q.not(ab, a);
            }
            q.nor(lt_a, w, u);
            q.not(u, lt_a);
            q.nor(lt_b, z, u);
            q.not(u, lt_b);
        }
    }
}

/// Spreads one column over `ceil(rows / w)` rows of `w` destination columns:
/// destination row j, position i receives source row `j * w + i`.
fn column_transform(q: &mut Seq, instr: &PimInstruction, g: &CrossbarGeometry) -> Result<()> {
    let w = g.read_width;
    let rows = g.rows;
    let out_rows = rows.div_ceil(w);
    let src = instr.src1.col(0);
    let base = instr.dst_row as usize;
    let dst = instr.dst_field(g);
    for i in 0..w {
        q.not(src, dst.col(i));
    }
    let is_target = |r: usize| r >= base && r < base + out_rows;
    for i in 0..w {
        let col = dst.col(i);
        let jobs: Vec<usize> = (0..out_rows).filter(|j| j * w + i < rows).collect();
        let source = |j: usize| j * w + i;
        let target = |j: usize| base + j;
        // Job j overwrites its target row, which may be the source of one
        // other job; that job runs first. Sources are distinct, and the map
        // target -> dependent job contracts by w, so the only cycles are
        // fixed points (target == source).
        let reader_of = |r: usize| -> Option<usize> {
            (r >= i && (r - i).is_multiple_of(w) && (r - i) / w < jobs.len()).then(|| (r - i) / w)
        };
        let mut done = vec![false; jobs.len()];
        let mut fixed = None;
        for start in 0..jobs.len() {
            let mut chain = Vec::new();
            let mut j = start;
            while !done[j] {
                done[j] = true;
                if target(j) == source(j) {
                    fixed = Some(j);
                    break;
                }
                chain.push(j);
                match reader_of(target(j)) {
                    Some(next) => j = next,
                    None => break,
                }
            }
            for &j in chain.iter().rev() {
                q.row_set(target(j), col);
                q.row_not(col, source(j), target(j));
            }
        }
        if let Some(j) = fixed {
            let r = target(j);
            let mut spare = (0..rows).filter(|&x| !is_target(x) && x != r);
            let (s1, s2) = match (spare.next(), spare.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Capacity(
                        "column-transform needs two rows outside the destination".into(),
                    ))
                }
            };
            q.row_set(s1, col);
            q.row_not(col, r, s1);
            q.row_set(s2, col);
            q.row_not(col, s1, s2);
            q.row_set(r, col);
            q.row_not(col, s2, r);
        }
    }
    Ok(())
}
