//! A single memristive crossbar.
//!
//! Cells are stored column-major as packed 64-bit words so that the
//! column-wise gates, which act on every row at once, become word-wide
//! bit operations. Gates follow MAGIC NOR behaviour: an output cell can
//! only be switched from 1 to 0 by a gate, so a gate computes
//! `out <- out AND NOR(inputs)`. Outputs must therefore be initialised with
//! an explicit SET before a fresh evaluation, and skipping the SET turns the
//! gate into an AND-accumulation onto the previous output value.
//!
//! Wear is tracked per cell as the sum of three parts: column-wide gate
//! writes (one counter per column), row-granular data writes (one counter per
//! read/write unit) and single-cell row-wise gate writes (sparse).

use std::collections::HashMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy in tenths of a femtojoule. Every constant in the default model is
/// an exact multiple of 0.1 fJ, so all accounting is integer-exact.
#[derive(
    Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Energy(pub u64);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    pub fn from_tenth_fj(v: u64) -> Self {
        Energy(v)
    }

    pub fn tenth_fj(self) -> u64 {
        self.0
    }

    pub fn fj(self) -> f64 {
        self.0 as f64 / 10.0
    }

    pub fn pj(self) -> f64 {
        self.0 as f64 / 10_000.0
    }

    pub fn times(self, n: u64) -> Energy {
        Energy(self.0 * n)
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} fJ", self.0 / 10, self.0 % 10)
    }
}

/// Per-bit energy constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// One stateful-logic gate output (81.6 fJ).
    pub logic_per_bit: Energy,
    /// One bit read from a crossbar (0.84 pJ).
    pub read_per_bit: Energy,
    /// One bit written into a crossbar (6.9 pJ).
    pub write_per_bit: Energy,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            logic_per_bit: Energy(816),
            read_per_bit: Energy(8_400),
            write_per_bit: Energy(69_000),
        }
    }
}

impl EnergyModel {
    /// Builds a model from physical units; each constant must be a
    /// non-negative multiple of 0.1 fJ.
    pub fn from_physical(logic_fj: f64, read_pj: f64, write_pj: f64) -> Result<Self> {
        fn tenths(v: f64, what: &str) -> Result<Energy> {
            let t = v * 10.0;
            if !t.is_finite() || t < 0.0 || (t - t.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{what} = {v} is not a non-negative multiple of 0.1 fJ"
                )));
            }
            Ok(Energy(t.round() as u64))
        }
        Ok(EnergyModel {
            logic_per_bit: tenths(logic_fj, "logic energy (fJ)")?,
            read_per_bit: tenths(read_pj * 1000.0, "read energy (pJ)")?,
            write_per_bit: tenths(write_pj * 1000.0, "write energy (pJ)")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrossbarGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Bits returned by one crossbar read (and written by one write).
    pub read_width: usize,
}

impl Default for CrossbarGeometry {
    fn default() -> Self {
        CrossbarGeometry {
            rows: 1024,
            cols: 512,
            read_width: 16,
        }
    }
}

impl CrossbarGeometry {
    pub fn new(rows: usize, cols: usize, read_width: usize) -> Result<Self> {
        let g = CrossbarGeometry {
            rows,
            cols,
            read_width,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Geometry(format!(
                "crossbar must be at least 2x2, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.rows > u32::MAX as usize / 2 || self.cols > u16::MAX as usize {
            return Err(Error::Geometry("crossbar dimensions too large".into()));
        }
        if self.read_width == 0 || self.read_width > 64 || self.read_width > self.cols {
            return Err(Error::Geometry(format!(
                "read width {} must be in 1..=min(64, cols)",
                self.read_width
            )));
        }
        if !self.cols.is_multiple_of(self.read_width) {
            return Err(Error::Geometry(format!(
                "read width {} does not divide {} columns",
                self.read_width, self.cols
            )));
        }
        Ok(())
    }

    pub fn units_per_row(&self) -> usize {
        self.cols / self.read_width
    }

    pub fn words_per_col(&self) -> usize {
        self.rows.div_ceil(64)
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// The restricted set of operations a PIM controller may send to a crossbar.
///
/// Column-wise kinds act on every row in parallel; row-wise kinds act on a
/// single column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MicroOp {
    ColNor2 { a: u32, b: u32, out: u32 },
    ColNot { input: u32, out: u32 },
    ColSet { col: u32 },
    ColReset { col: u32 },
    RowNot { col: u32, from: u32, to: u32 },
    RowSet { row: u32, col: u32 },
}

impl MicroOp {
    pub fn is_column_wise(&self) -> bool {
        !matches!(self, MicroOp::RowNot { .. } | MicroOp::RowSet { .. })
    }

    /// The column this operation writes.
    pub fn output_col(&self) -> u32 {
        match *self {
            MicroOp::ColNor2 { out, .. } | MicroOp::ColNot { out, .. } => out,
            MicroOp::ColSet { col } | MicroOp::ColReset { col } => col,
            MicroOp::RowNot { col, .. } | MicroOp::RowSet { col, .. } => col,
        }
    }

    /// Gate outputs written on a crossbar with `rows` rows.
    pub fn cells_written(&self, rows: usize) -> u64 {
        if self.is_column_wise() {
            rows as u64
        } else {
            1
        }
    }

    pub fn validate(&self, g: &CrossbarGeometry) -> Result<()> {
        let col = |c: u32| -> Result<()> {
            if (c as usize) < g.cols {
                Ok(())
            } else {
                Err(Error::Bounds(format!("column {c} >= {}", g.cols)))
            }
        };
        let row = |r: u32| -> Result<()> {
            if (r as usize) < g.rows {
                Ok(())
            } else {
                Err(Error::Bounds(format!("row {r} >= {}", g.rows)))
            }
        };
        match *self {
            MicroOp::ColNor2 { a, b, out } => {
                col(a)?;
                col(b)?;
                col(out)?;
                if a == out || b == out {
                    return Err(Error::Aliasing(format!("NOR2 {a},{b} -> {out}")));
                }
            }
            MicroOp::ColNot { input, out } => {
                col(input)?;
                col(out)?;
                if input == out {
                    return Err(Error::Aliasing(format!("NOT {input} -> {out}")));
                }
            }
            MicroOp::ColSet { col: c } | MicroOp::ColReset { col: c } => col(c)?,
            MicroOp::RowNot { col: c, from, to } => {
                col(c)?;
                row(from)?;
                row(to)?;
                if from == to {
                    return Err(Error::Aliasing(format!(
                        "row NOT {from} -> {to} in column {c}"
                    )));
                }
            }
            MicroOp::RowSet { row: r, col: c } => {
                row(r)?;
                col(c)?;
            }
        }
        Ok(())
    }
}

/// Operation and energy counters of one crossbar.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossbarCounters {
    pub col_ops: u64,
    pub row_ops: u64,
    /// Gate outputs written by micro-ops.
    pub logic_bits: u64,
    pub reads: u64,
    pub writes: u64,
    pub read_bits: u64,
    pub write_bits: u64,
    pub logic_energy: Energy,
    pub read_energy: Energy,
    pub write_energy: Energy,
}

impl CrossbarCounters {
    pub fn energy(&self) -> Energy {
        self.logic_energy + self.read_energy + self.write_energy
    }

    pub fn accumulate(&mut self, o: &CrossbarCounters) {
        self.col_ops += o.col_ops;
        self.row_ops += o.row_ops;
        self.logic_bits += o.logic_bits;
        self.reads += o.reads;
        self.writes += o.writes;
        self.read_bits += o.read_bits;
        self.write_bits += o.write_bits;
        self.logic_energy += o.logic_energy;
        self.read_energy += o.read_energy;
        self.write_energy += o.write_energy;
    }
}

/// Raw wear state, exposed for persistence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WearParts {
    pub col_wear: Vec<u64>,
    pub unit_wear: Vec<u32>,
    /// `(row * cols + col, count)` sorted by cell index.
    pub cell_wear: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct Crossbar {
    geometry: CrossbarGeometry,
    wpc: usize,
    bits: Vec<u64>,
    col_wear: Vec<u64>,
    col_wear_total: u64,
    unit_wear: Vec<u32>,
    cell_wear: HashMap<u32, u32>,
    row_extra: Vec<u64>,
    counters: CrossbarCounters,
}

impl PartialEq for Crossbar {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.bits == other.bits
            && self.col_wear == other.col_wear
            && self.unit_wear == other.unit_wear
            && self.cell_wear == other.cell_wear
            && self.counters == other.counters
    }
}

impl Crossbar {
    pub fn new(geometry: CrossbarGeometry) -> Self {
        let wpc = geometry.words_per_col();
        Crossbar {
            geometry,
            wpc,
            bits: vec![0; wpc * geometry.cols],
            col_wear: vec![0; geometry.cols],
            col_wear_total: 0,
            unit_wear: vec![0; geometry.rows * geometry.units_per_row()],
            cell_wear: HashMap::new(),
            row_extra: vec![0; geometry.rows],
            counters: CrossbarCounters::default(),
        }
    }

    pub fn geometry(&self) -> &CrossbarGeometry {
        &self.geometry
    }

    pub fn counters(&self) -> &CrossbarCounters {
        &self.counters
    }

    pub fn energy(&self) -> Energy {
        self.counters.energy()
    }

    fn last_mask(&self) -> u64 {
        match self.geometry.rows % 64 {
            0 => !0,
            r => (1u64 << r) - 1,
        }
    }

    /// Uncounted cell inspection.
    pub fn peek(&self, row: usize, col: usize) -> bool {
        (self.bits[col * self.wpc + row / 64] >> (row % 64)) & 1 == 1
    }

    /// Uncounted cell modification, for test fixtures and image restore.
    pub fn poke(&mut self, row: usize, col: usize, v: bool) {
        let w = &mut self.bits[col * self.wpc + row / 64];
        if v {
            *w |= 1 << (row % 64);
        } else {
            *w &= !(1 << (row % 64));
        }
    }

    /// Packed words of one column, row 0 in bit 0 of word 0.
    pub fn column_words(&self, col: usize) -> &[u64] {
        &self.bits[col * self.wpc..(col + 1) * self.wpc]
    }

    pub fn raw_bits(&self) -> &[u64] {
        &self.bits
    }

    pub fn apply(&mut self, op: MicroOp, model: &EnergyModel) -> Result<()> {
        op.validate(&self.geometry)?;
        let wpc = self.wpc;
        match op {
            MicroOp::ColNor2 { a, b, out } => {
                let (a, b, o) = (a as usize * wpc, b as usize * wpc, out as usize * wpc);
                for w in 0..wpc {
                    let v = !(self.bits[a + w] | self.bits[b + w]);
                    self.bits[o + w] &= v;
                }
            }
            MicroOp::ColNot { input, out } => {
                let (i, o) = (input as usize * wpc, out as usize * wpc);
                for w in 0..wpc {
                    let v = !self.bits[i + w];
                    self.bits[o + w] &= v;
                }
            }
            MicroOp::ColSet { col } => {
                let o = col as usize * wpc;
                self.bits[o..o + wpc].fill(!0);
                self.bits[o + wpc - 1] &= self.last_mask();
            }
            MicroOp::ColReset { col } => {
                let o = col as usize * wpc;
                self.bits[o..o + wpc].fill(0);
            }
            MicroOp::RowNot { col, from, to } => {
                if self.peek(from as usize, col as usize) {
                    self.poke(to as usize, col as usize, false);
                }
            }
            MicroOp::RowSet { row, col } => self.poke(row as usize, col as usize, true),
        }
        let written = op.cells_written(self.geometry.rows);
        if op.is_column_wise() {
            self.col_wear[op.output_col() as usize] += 1;
            self.col_wear_total += 1;
            self.counters.col_ops += 1;
        } else {
            let row = match op {
                MicroOp::RowNot { to, .. } => to,
                MicroOp::RowSet { row, .. } => row,
                _ => unreachable!(),
            } as usize;
            let idx = (row * self.geometry.cols) as u32 + op.output_col();
            *self.cell_wear.entry(idx).or_insert(0) += 1;
            self.row_extra[row] += 1;
            self.counters.row_ops += 1;
        }
        self.counters.logic_bits += written;
        self.counters.logic_energy += model.logic_per_bit.times(written);
        Ok(())
    }

    pub fn apply_all(&mut self, ops: &[MicroOp], model: &EnergyModel) -> Result<()> {
        for &op in ops {
            self.apply(op, model)?;
        }
        Ok(())
    }

    fn check_unit(&self, row: usize, unit: usize) -> Result<()> {
        if row >= self.geometry.rows {
            return Err(Error::Bounds(format!(
                "row {row} >= {}",
                self.geometry.rows
            )));
        }
        if unit >= self.geometry.units_per_row() {
            return Err(Error::Bounds(format!(
                "unit {unit} >= {}",
                self.geometry.units_per_row()
            )));
        }
        Ok(())
    }

    /// Uncounted unit read.
    pub fn peek_unit(&self, row: usize, unit: usize) -> u64 {
        let w = self.geometry.read_width;
        (0..w).fold(0u64, |acc, i| {
            acc | (self.peek(row, unit * w + i) as u64) << i
        })
    }

    /// Reads `read_width` bits of `row` starting at column `unit * read_width`;
    /// the lowest column lands in bit 0.
    pub fn read_unit(&mut self, row: usize, unit: usize, model: &EnergyModel) -> Result<u64> {
        self.check_unit(row, unit)?;
        let w = self.geometry.read_width as u64;
        self.counters.reads += 1;
        self.counters.read_bits += w;
        self.counters.read_energy += model.read_per_bit.times(w);
        Ok(self.peek_unit(row, unit))
    }

    /// Writes a whole unit. Every cell of the unit counts one write.
    pub fn write_unit(
        &mut self,
        row: usize,
        unit: usize,
        value: u64,
        model: &EnergyModel,
    ) -> Result<()> {
        self.check_unit(row, unit)?;
        let w = self.geometry.read_width;
        for i in 0..w {
            self.poke(row, unit * w + i, (value >> i) & 1 == 1);
        }
        self.unit_wear[row * self.geometry.units_per_row() + unit] += 1;
        self.row_extra[row] += w as u64;
        self.counters.writes += 1;
        self.counters.write_bits += w as u64;
        self.counters.write_energy += model.write_per_bit.times(w as u64);
        Ok(())
    }

    pub fn write_count(&self, row: usize, col: usize) -> u64 {
        let g = &self.geometry;
        let unit = self.unit_wear[row * g.units_per_row() + col / g.read_width] as u64;
        let cell = self
            .cell_wear
            .get(&((row * g.cols + col) as u32))
            .copied()
            .unwrap_or(0) as u64;
        self.col_wear[col] + unit + cell
    }

    /// Total cell writes experienced by one row.
    pub fn row_write_ops(&self, row: usize) -> u64 {
        self.col_wear_total + self.row_extra[row]
    }

    pub fn row_write_totals(&self) -> Vec<u64> {
        (0..self.geometry.rows)
            .map(|r| self.row_write_ops(r))
            .collect()
    }

    /// The row with the most cell writes (lowest index on ties) and its total.
    pub fn max_row_write_ops(&self) -> (usize, u64) {
        let mut best = (0, self.row_write_ops(0));
        for r in 1..self.geometry.rows {
            let t = self.row_write_ops(r);
            if t > best.1 {
                best = (r, t);
            }
        }
        best
    }

    pub fn total_writes(&self) -> u64 {
        (0..self.geometry.rows).map(|r| self.row_write_ops(r)).sum()
    }

    pub fn wear_parts(&self) -> WearParts {
        let mut cell_wear: Vec<(u32, u32)> = self.cell_wear.iter().map(|(&k, &v)| (k, v)).collect();
        cell_wear.sort_unstable();
        WearParts {
            col_wear: self.col_wear.clone(),
            unit_wear: self.unit_wear.clone(),
            cell_wear,
        }
    }

    /// Rebuilds a crossbar from persisted state.
    pub fn from_parts(
        geometry: CrossbarGeometry,
        bits: Vec<u64>,
        wear: WearParts,
        counters: CrossbarCounters,
    ) -> Result<Self> {
        geometry.validate()?;
        let mut x = Crossbar::new(geometry);
        if bits.len() != x.bits.len()
            || wear.col_wear.len() != geometry.cols
            || wear.unit_wear.len() != x.unit_wear.len()
        {
            return Err(Error::Image("crossbar section size mismatch".into()));
        }
        x.bits = bits;
        let mask = x.last_mask();
        for c in 0..geometry.cols {
            x.bits[c * x.wpc + x.wpc - 1] &= mask;
        }
        let overflow = || Error::Image("wear counters overflow".into());
        x.col_wear_total = wear
            .col_wear
            .iter()
            .try_fold(0u64, |a, &c| a.checked_add(c))
            .ok_or_else(overflow)?;
        x.col_wear = wear.col_wear;
        let w = geometry.read_width as u64;
        for (i, &u) in wear.unit_wear.iter().enumerate() {
            let extra = &mut x.row_extra[i / geometry.units_per_row()];
            *extra = extra.checked_add(u as u64 * w).ok_or_else(overflow)?;
        }
        x.unit_wear = wear.unit_wear;
        for (idx, n) in wear.cell_wear {
            if idx as usize >= geometry.cells() {
                return Err(Error::Image(format!("cell index {idx} out of range")));
            }
            let extra = &mut x.row_extra[idx as usize / geometry.cols];
            *extra = extra.checked_add(n as u64).ok_or_else(overflow)?;
            let cell = x.cell_wear.entry(idx).or_insert(0);
            *cell = cell.checked_add(n).ok_or_else(overflow)?;
        }
        // Keeps the per-row and whole-crossbar totals in range.
        let col_part = x
            .col_wear_total
            .checked_mul(geometry.rows as u64)
            .ok_or_else(overflow)?;
        x.row_extra
            .iter()
            .try_fold(col_part, |a, &e| a.checked_add(e))
            .ok_or_else(overflow)?;
        x.counters = counters;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xbar(rows: usize, cols: usize) -> Crossbar {
        Crossbar::new(CrossbarGeometry::new(rows, cols, 4.min(cols)).unwrap())
    }

    fn set_col(x: &mut Crossbar, col: usize, vals: &[bool]) {
        for (r, &v) in vals.iter().enumerate() {
            x.poke(r, col, v);
        }
    }

    fn col(x: &Crossbar, col: usize) -> Vec<bool> {
        (0..x.geometry().rows).map(|r| x.peek(r, col)).collect()
    }

    #[test]
    fn not_of_zero_column_is_ones() {
        let mut x = xbar(8, 8);
        let m = EnergyModel::default();
        x.apply(MicroOp::ColSet { col: 1 }, &m).unwrap();
        x.apply(MicroOp::ColNot { input: 0, out: 1 }, &m).unwrap();
        assert_eq!(col(&x, 1), vec![true; 8]);
    }

    #[test]
    fn nor_truth_table() {
        let mut x = xbar(4, 4);
        let m = EnergyModel::default();
        set_col(&mut x, 0, &[true, false, true, false]);
        set_col(&mut x, 1, &[true, true, false, false]);
        x.apply(MicroOp::ColSet { col: 2 }, &m).unwrap();
        x.apply(MicroOp::ColNor2 { a: 0, b: 1, out: 2 }, &m)
            .unwrap();
        assert_eq!(col(&x, 2), vec![false, false, false, true]);
    }

    #[test]
    fn gate_without_init_accumulates() {
        let mut x = xbar(4, 4);
        let m = EnergyModel::default();
        set_col(&mut x, 0, &[false, false, true, true]);
        set_col(&mut x, 2, &[true, false, true, false]);
        x.apply(MicroOp::ColNot { input: 0, out: 2 }, &m).unwrap();
        assert_eq!(col(&x, 2), vec![true, false, false, false]);
    }

    #[test]
    fn nor_energy_full_column() {
        let mut x = Crossbar::new(CrossbarGeometry::default());
        let m = EnergyModel::default();
        x.apply(MicroOp::ColNor2 { a: 0, b: 1, out: 2 }, &m)
            .unwrap();
        assert_eq!(x.energy(), Energy(835_584));
        assert!((x.energy().fj() - 83_558.4).abs() < 1e-9);
    }

    #[test]
    fn aliasing_and_bounds_rejected() {
        let mut x = xbar(4, 4);
        let m = EnergyModel::default();
        assert!(matches!(
            x.apply(MicroOp::ColNor2 { a: 1, b: 2, out: 2 }, &m),
            Err(Error::Aliasing(_))
        ));
        assert!(matches!(
            x.apply(MicroOp::ColNot { input: 3, out: 3 }, &m),
            Err(Error::Aliasing(_))
        ));
        assert!(matches!(
            x.apply(
                MicroOp::RowNot {
                    col: 0,
                    from: 1,
                    to: 1
                },
                &m
            ),
            Err(Error::Aliasing(_))
        ));
        assert!(matches!(
            x.apply(MicroOp::ColSet { col: 4 }, &m),
            Err(Error::Bounds(_))
        ));
        assert!(matches!(
            x.apply(MicroOp::RowSet { row: 4, col: 0 }, &m),
            Err(Error::Bounds(_))
        ));
        assert_eq!(x.counters().col_ops, 0);
    }

    #[test]
    fn row_ops_touch_one_cell() {
        let mut x = xbar(4, 4);
        let m = EnergyModel::default();
        x.apply(MicroOp::RowSet { row: 2, col: 1 }, &m).unwrap();
        assert!(x.peek(2, 1));
        assert_eq!(x.write_count(2, 1), 1);
        x.apply(MicroOp::RowSet { row: 0, col: 1 }, &m).unwrap();
        x.apply(
            MicroOp::RowNot {
                col: 1,
                from: 3,
                to: 0,
            },
            &m,
        )
        .unwrap();
        assert!(x.peek(0, 1));
        x.apply(
            MicroOp::RowNot {
                col: 1,
                from: 2,
                to: 0,
            },
            &m,
        )
        .unwrap();
        assert!(!x.peek(0, 1));
        assert_eq!(x.energy(), Energy(816 * 4));
        let ones: usize = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .filter(|&(r, c)| x.peek(r, c))
            .count();
        assert_eq!(ones, 1);
    }

    #[test]
    fn unit_readback_and_energy() {
        let g = CrossbarGeometry::default();
        let mut x = Crossbar::new(g);
        let m = EnergyModel::default();
        x.write_unit(5, 0, 0xBEEF, &m).unwrap();
        assert_eq!(x.read_unit(5, 0, &m).unwrap(), 0xBEEF);
        assert_eq!(x.counters().read_energy, Energy(134_400)); // 13.44 pJ
        assert_eq!(x.counters().write_energy, Energy(1_104_000)); // 110.4 pJ
        x.write_unit(5, 0, 0xFFFF, &m).unwrap();
        assert_eq!(x.read_unit(5, 0, &m).unwrap(), 0xFFFF);
        assert_eq!(x.write_count(5, 3), 2);
        assert!(x.read_unit(5, 32, &m).is_err());
        assert!(x.write_unit(1024, 0, 0, &m).is_err());
    }

    #[test]
    fn read_after_row_set() {
        let mut x = xbar(8, 8);
        let m = EnergyModel::default();
        x.apply(MicroOp::RowSet { row: 3, col: 6 }, &m).unwrap();
        assert_eq!(x.read_unit(3, 1, &m).unwrap(), 0b0100);
    }

    #[test]
    fn max_row_wear() {
        let mut x = xbar(8, 8);
        assert_eq!(x.max_row_write_ops(), (0, 0));
        let m = EnergyModel::default();
        for _ in 0..10 {
            x.apply(MicroOp::ColSet { col: 3 }, &m).unwrap();
        }
        assert_eq!(x.max_row_write_ops().1, 10);
        // Independent recomputation over the wear matrix.
        let per_row: Vec<u64> = (0..8)
            .map(|r| (0..8).map(|c| x.write_count(r, c)).sum())
            .collect();
        assert!(per_row.iter().all(|&t| t == 10));
        let ops_per_cell = *per_row.iter().max().unwrap() as f64 / 8.0;
        assert_eq!(ops_per_cell, 1.25);
    }

    #[test]
    fn parts_round_trip() {
        let mut x = xbar(8, 8);
        let m = EnergyModel::default();
        x.write_unit(1, 1, 0b1010, &m).unwrap();
        x.apply(MicroOp::ColSet { col: 2 }, &m).unwrap();
        x.apply(MicroOp::RowSet { row: 6, col: 7 }, &m).unwrap();
        let y = Crossbar::from_parts(
            *x.geometry(),
            x.raw_bits().to_vec(),
            x.wear_parts(),
            *x.counters(),
        )
        .unwrap();
        assert_eq!(x, y);
        assert_eq!(x.row_write_totals(), y.row_write_totals());
    }

    #[test]
    fn overflowing_wear_is_rejected() {
        let x = xbar(8, 8);
        let mut wear = x.wear_parts();
        wear.col_wear[0] = u64::MAX;
        wear.col_wear[1] = 1;
        assert!(
            Crossbar::from_parts(*x.geometry(), x.raw_bits().to_vec(), wear, *x.counters())
                .is_err()
        );
        let mut wear = x.wear_parts();
        wear.col_wear[0] = u64::MAX / 4;
        assert!(
            Crossbar::from_parts(*x.geometry(), x.raw_bits().to_vec(), wear, *x.counters())
                .is_err()
        );
    }

    #[test]
    fn energy_model_from_physical() {
        let m = EnergyModel::from_physical(81.6, 0.84, 6.9).unwrap();
        assert_eq!(m, EnergyModel::default());
        assert!(EnergyModel::from_physical(81.65, 0.84, 6.9).is_err());
    }
}
