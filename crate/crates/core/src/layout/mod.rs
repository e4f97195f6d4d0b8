//! Relations stored one record per crossbar row.
//!
//! Attributes sit in schema order from column 0, each in consecutive
//! columns aligned across all rows, followed by a valid bit. Columns after
//! the valid bit are free for PIM computation. Records fill crossbars in
//! load order: record `i` goes to row `i % rows` of crossbar
//! `(i / rows) % crossbars_per_page` of the relation's `i / (rows *
//! crossbars_per_page)`-th page.

mod data;
pub mod schema;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use data::{read_csv, write_csv};
pub use schema::{AttributeSpec, Encoding, LogicalType, RelationSchema, Schema, Value};

use crate::crossbar::CrossbarGeometry;
use crate::error::{Error, Result};
use crate::isa::Field;
use crate::memsys::{Location, PimModule, LINE_BYTES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeLayout {
    pub spec: AttributeSpec,
    pub field: Field,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationLayout {
    pub name: String,
    pub attributes: Vec<AttributeLayout>,
    pub valid_col: u16,
    /// Attribute bits plus the valid bit.
    pub record_bits: usize,
    /// Columns available for computation.
    pub free: Field,
    pub rows_per_crossbar: usize,
    pub crossbars_per_page: usize,
    pub pages: Vec<u32>,
    pub records: usize,
}

/// Where a record lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RecordSlot {
    pub page: u32,
    pub crossbar: usize,
    pub row: usize,
}

pub fn plan_layout(
    schema: &RelationSchema,
    g: &CrossbarGeometry,
    crossbars_per_page: usize,
) -> Result<RelationLayout> {
    let mut col = 0usize;
    let mut attributes = Vec::new();
    for a in &schema.attributes {
        let w = a.bit_width() as usize;
        attributes.push(AttributeLayout {
            spec: a.clone(),
            field: Field::new(col as u16, w as u16),
        });
        col += w;
    }
    let record_bits = col + 1;
    if record_bits > g.cols {
        return Err(Error::Capacity(format!(
            "relation {}: {record_bits}-bit record (with valid bit) exceeds {} columns",
            schema.name, g.cols
        )));
    }
    Ok(RelationLayout {
        name: schema.name.clone(),
        attributes,
        valid_col: col as u16,
        record_bits,
        free: Field::new(record_bits as u16, (g.cols - record_bits) as u16),
        rows_per_crossbar: g.rows,
        crossbars_per_page,
        pages: Vec::new(),
        records: 0,
    })
}

impl RelationLayout {
    pub fn attribute(&self, name: &str) -> Option<&AttributeLayout> {
        self.attributes
            .iter()
            .find(|a| a.spec.name.eq_ignore_ascii_case(name))
    }

    pub fn records_per_page(&self) -> usize {
        self.rows_per_crossbar * self.crossbars_per_page
    }

    pub fn slot(&self, id: usize) -> Result<RecordSlot> {
        let per_page = self.records_per_page();
        let page = *self
            .pages
            .get(id / per_page)
            .ok_or_else(|| Error::Bounds(format!("record {id} of {} has no page", self.name)))?;
        Ok(RecordSlot {
            page,
            crossbar: (id % per_page) / self.rows_per_crossbar,
            row: id % self.rows_per_crossbar,
        })
    }

    /// Record id of a (page index within the relation, crossbar, row) slot.
    pub fn record_id(&self, page_index: usize, crossbar: usize, row: usize) -> usize {
        page_index * self.records_per_page() + crossbar * self.rows_per_crossbar + row
    }

    /// Bits of one row holding `record`, valid bit set; bit 0 is column 0.
    pub fn encode_row(&self, record: &[Value]) -> Result<Vec<u64>> {
        if record.len() != self.attributes.len() {
            return Err(Error::Schema(format!(
                "relation {} has {} attributes, record has {}",
                self.name,
                self.attributes.len(),
                record.len()
            )));
        }
        let mut bits = vec![0u64; self.record_bits.div_ceil(64)];
        for (a, v) in self.attributes.iter().zip(record) {
            let code = a.spec.encode(v)?;
            for i in 0..a.field.len as usize {
                let c = a.field.start as usize + i;
                bits[c / 64] |= ((code >> i) & 1) << (c % 64);
            }
        }
        let vc = self.valid_col as usize;
        bits[vc / 64] |= 1 << (vc % 64);
        Ok(bits)
    }

    /// Inverse of [`encode_row`](Self::encode_row); `None` when the valid bit is clear.
    pub fn decode_row(&self, bits: &[u64]) -> Result<Option<Vec<Value>>> {
        let bit = |c: usize| (bits[c / 64] >> (c % 64)) & 1;
        if bit(self.valid_col as usize) == 0 {
            return Ok(None);
        }
        let mut out = Vec::with_capacity(self.attributes.len());
        for a in &self.attributes {
            let code = (0..a.field.len as usize)
                .fold(0u64, |acc, i| acc | bit(a.field.start as usize + i) << i);
            out.push(a.spec.decode(code)?);
        }
        Ok(Some(out))
    }

    /// Bytes at the start of each row that hold record bits.
    fn row_bytes(&self, g: &CrossbarGeometry) -> usize {
        self.record_bits.div_ceil(g.read_width) * g.read_width / 8
    }

    /// 64-byte lines of `page` that hold record bytes of the given slots.
    fn lines_of(
        &self,
        module: &PimModule,
        slots: impl Iterator<Item = (usize, usize)>,
    ) -> Result<BTreeSet<u64>> {
        let map = module.address_map();
        let unit_bytes = module.geometry().read_width / 8;
        let row_bytes = self.row_bytes(module.geometry());
        let mut lines = BTreeSet::new();
        for (crossbar, row) in slots {
            for b in (0..row_bytes).step_by(unit_bytes) {
                let off = map.encode(Location {
                    crossbar,
                    row,
                    byte_in_row: b,
                })?;
                lines.insert(off - off % LINE_BYTES as u64);
            }
        }
        Ok(lines)
    }

    /// Writes `records` into fresh pages `first_page..`, replacing any
    /// previous contents of this layout.
    pub fn load(
        &mut self,
        records: &[Vec<Value>],
        module: &mut PimModule,
        first_page: u32,
    ) -> Result<()> {
        let g = *module.geometry();
        if g.rows != self.rows_per_crossbar
            || module.crossbars_per_page() != self.crossbars_per_page
        {
            return Err(Error::Geometry(format!(
                "layout of {} does not match the module",
                self.name
            )));
        }
        let per_page = self.records_per_page();
        let n_pages = records.len().div_ceil(per_page).max(1);
        self.pages = (0..n_pages as u32).map(|i| first_page + i).collect();
        self.records = records.len();
        for &p in &self.pages {
            if module.is_mapped(p) {
                return Err(Error::Capacity(format!("page {p} is already in use")));
            }
            module.map_page(p);
        }
        let map = module.address_map().clone();
        for (pi, &page) in self.pages.iter().enumerate() {
            let chunk = &records
                [(pi * per_page).min(records.len())..((pi + 1) * per_page).min(records.len())];
            let mut rows: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
            for (i, rec) in chunk.iter().enumerate() {
                rows.insert(
                    (i / self.rows_per_crossbar, i % self.rows_per_crossbar),
                    self.encode_row(rec)?,
                );
            }
            let lines = self.lines_of(module, rows.keys().copied())?;
            for base in lines {
                let mut data = [0u8; LINE_BYTES];
                for (i, byte) in data.iter_mut().enumerate() {
                    let loc = map.translate(base + i as u64)?;
                    if let Some(bits) = rows.get(&(loc.crossbar, loc.row)) {
                        let bit0 = loc.byte_in_row * 8;
                        for k in 0..8 {
                            let c = bit0 + k;
                            if c < self.record_bits {
                                *byte |= (((bits[c / 64] >> (c % 64)) & 1) as u8) << k;
                            }
                        }
                    }
                }
                module.host_write(page, base, &data)?;
            }
        }
        Ok(())
    }

    /// Decodes every loaded record straight from the cells, without host
    /// reads, so counters and wear are untouched.
    pub fn peek_records(&self, module: &PimModule) -> Result<Vec<Vec<Value>>> {
        (0..self.records)
            .map(|id| {
                let s = self.slot(id)?;
                let x = module.crossbar(s.page, s.crossbar)?;
                let mut bits = vec![0u64; self.record_bits.div_ceil(64)];
                for c in 0..self.record_bits {
                    bits[c / 64] |= (x.peek(s.row, c) as u64) << (c % 64);
                }
                self.decode_row(&bits)?.ok_or_else(|| {
                    Error::Image(format!("record {id} of {} is not valid", self.name))
                })
            })
            .collect()
    }

    /// Reads one record back through host line reads.
    pub fn read_record(&self, module: &mut PimModule, id: usize) -> Result<Option<Vec<Value>>> {
        let s = self.slot(id)?;
        let map = module.address_map().clone();
        let lines = self.lines_of(module, std::iter::once((s.crossbar, s.row)))?;
        let mut bits = vec![0u64; self.record_bits.div_ceil(64)];
        for base in lines {
            let data = module.host_read(s.page, base)?;
            for (i, byte) in data.iter().enumerate() {
                let loc = map.translate(base + i as u64)?;
                if loc.crossbar != s.crossbar || loc.row != s.row {
                    continue;
                }
                for k in 0..8 {
                    let c = loc.byte_in_row * 8 + k;
                    if c < self.record_bits {
                        bits[c / 64] |= (((byte >> k) & 1) as u64) << (c % 64);
                    }
                }
            }
        }
        self.decode_row(&bits)
    }
}

/// Loaded relations and their placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Database {
    pub schema: Schema,
    pub relations: Vec<RelationLayout>,
}

impl Database {
    /// Plans and loads every relation of `schema` that has data, each into
    /// its own pages allocated after those already mapped.
    pub fn load(
        schema: &Schema,
        data: &BTreeMap<String, Vec<Vec<Value>>>,
        module: &mut PimModule,
    ) -> Result<Self> {
        schema.validate()?;
        let mut relations = Vec::new();
        for r in &schema.relations {
            let Some(records) = data.get(&r.name) else {
                continue;
            };
            let mut layout = plan_layout(r, module.geometry(), module.crossbars_per_page())?;
            let next = module.page_ids().last().map_or(0, |p| p + 1);
            layout.load(records, module, next)?;
            relations.push(layout);
        }
        Ok(Database {
            schema: schema.clone(),
            relations,
        })
    }

    pub fn relation(&self, name: &str) -> Option<&RelationLayout> {
        self.relations
            .iter()
            .find(|r| r.name.eq_ignore_ascii_case(name))
    }
}
