//! Page-offset bit fields exposed to software.

use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarGeometry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Byte within one crossbar read unit.
    Byte,
    Crossbar,
    /// Read unit within a crossbar row.
    Unit,
    Row,
}

/// `bits` consecutive offset bits assigned to `field`. A kind may appear in
/// several entries; its value is the concatenation from low to high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddressField {
    pub field: FieldKind,
    pub bits: u32,
}

/// Decoded page offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Location {
    pub crossbar: usize,
    pub row: usize,
    pub byte_in_row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    fields: Vec<AddressField>,
    offset_bits: u32,
    unit_bytes: usize,
}

fn log2(v: usize, what: &str) -> Result<u32> {
    if v == 0 || !v.is_power_of_two() {
        return Err(Error::AddressMap(format!(
            "{what} = {v} is not a power of two"
        )));
    }
    Ok(v.trailing_zeros())
}

impl AddressMap {
    pub fn new(
        fields: Vec<AddressField>,
        g: &CrossbarGeometry,
        crossbars_per_page: usize,
    ) -> Result<Self> {
        if !g.read_width.is_multiple_of(8) {
            return Err(Error::AddressMap(format!(
                "read width {} is not whole bytes",
                g.read_width
            )));
        }
        let need = [
            (FieldKind::Byte, log2(g.read_width / 8, "bytes per unit")?),
            (
                FieldKind::Crossbar,
                log2(crossbars_per_page, "crossbars per page")?,
            ),
            (FieldKind::Unit, log2(g.units_per_row(), "units per row")?),
            (FieldKind::Row, log2(g.rows, "rows")?),
        ];
        for (kind, bits) in need {
            let have: u32 = fields
                .iter()
                .filter(|f| f.field == kind)
                .map(|f| f.bits)
                .sum();
            if have != bits {
                return Err(Error::AddressMap(format!(
                    "{kind:?} field has {have} bits, geometry needs {bits}"
                )));
            }
        }
        let offset_bits: u32 = fields.iter().map(|f| f.bits).sum();
        if offset_bits > 48 {
            return Err(Error::AddressMap(format!(
                "{offset_bits} offset bits exceed 48"
            )));
        }
        Ok(AddressMap {
            fields,
            offset_bits,
            unit_bytes: g.read_width / 8,
        })
    }

    /// Byte-within-unit bits, then enough crossbar bits that one 64-byte line
    /// takes one unit from each of `512 / read_width` crossbars, then unit,
    /// row and the remaining crossbar bits. Pages with fewer crossbars fill
    /// the rest of a line with further units of the same row, then rows.
    pub fn default_for(g: &CrossbarGeometry, crossbars_per_page: usize) -> Result<Self> {
        let mut line = log2(512 / g.read_width.max(1), "units per line")?;
        let mut take = |total: u32| {
            let low = total.min(line);
            line -= low;
            (low, total - low)
        };
        let (xb_low, xb_high) = take(log2(crossbars_per_page, "crossbars per page")?);
        let (unit_low, unit_high) = take(log2(g.units_per_row(), "units per row")?);
        let (row_low, row_high) = take(log2(g.rows, "rows")?);
        if line > 0 {
            return Err(Error::AddressMap(
                "a page is smaller than one 64-byte line".into(),
            ));
        }
        let fields = vec![
            AddressField {
                field: FieldKind::Byte,
                bits: log2(g.read_width / 8, "bytes per unit")?,
            },
            AddressField {
                field: FieldKind::Crossbar,
                bits: xb_low,
            },
            AddressField {
                field: FieldKind::Unit,
                bits: unit_low,
            },
            AddressField {
                field: FieldKind::Row,
                bits: row_low,
            },
            AddressField {
                field: FieldKind::Unit,
                bits: unit_high,
            },
            AddressField {
                field: FieldKind::Row,
                bits: row_high,
            },
            AddressField {
                field: FieldKind::Crossbar,
                bits: xb_high,
            },
        ];
        AddressMap::new(
            fields.into_iter().filter(|f| f.bits > 0).collect(),
            g,
            crossbars_per_page,
        )
    }

    pub fn fields(&self) -> &[AddressField] {
        &self.fields
    }

    pub fn offset_bits(&self) -> u32 {
        self.offset_bits
    }

    pub fn page_bytes(&self) -> u64 {
        1u64 << self.offset_bits
    }

    pub fn translate(&self, offset: u64) -> Result<Location> {
        if offset >> self.offset_bits != 0 {
            return Err(Error::AddressMap(format!(
                "offset {offset:#x} beyond {}-bit page",
                self.offset_bits
            )));
        }
        let mut vals = [0usize; 4];
        let mut filled = [0u32; 4];
        let mut shift = 0;
        for f in &self.fields {
            let k = f.field as usize;
            let chunk = ((offset >> shift) & ((1u64 << f.bits) - 1)) as usize;
            vals[k] |= chunk << filled[k];
            filled[k] += f.bits;
            shift += f.bits;
        }
        let [byte, crossbar, unit, row] = vals;
        Ok(Location {
            crossbar,
            row,
            byte_in_row: unit * self.unit_bytes + byte,
        })
    }

    pub fn encode(&self, loc: Location) -> Result<u64> {
        let vals = [
            loc.byte_in_row % self.unit_bytes,
            loc.crossbar,
            loc.byte_in_row / self.unit_bytes,
            loc.row,
        ];
        let mut used = [0u32; 4];
        let mut offset = 0u64;
        let mut shift = 0;
        for f in &self.fields {
            let k = f.field as usize;
            let chunk = (vals[k] >> used[k]) as u64 & ((1u64 << f.bits) - 1);
            offset |= chunk << shift;
            used[k] += f.bits;
            shift += f.bits;
        }
        for (k, v) in vals.iter().enumerate() {
            if used[k] < usize::BITS && v >> used[k] != 0 {
                return Err(Error::AddressMap(format!("{loc:?} out of range")));
            }
        }
        Ok(offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_fields() {
        let g = CrossbarGeometry::default();
        let m = AddressMap::default_for(&g, 1 << 14).unwrap();
        let bits: Vec<u32> = m.fields().iter().map(|f| f.bits).collect();
        assert_eq!(bits, vec![1, 5, 5, 10, 9]);
        assert_eq!(m.offset_bits(), 30);
        assert_eq!(
            m.translate(0).unwrap(),
            Location {
                crossbar: 0,
                row: 0,
                byte_in_row: 0
            }
        );
        assert_eq!(
            m.translate(1 << 1).unwrap(),
            Location {
                crossbar: 1,
                row: 0,
                byte_in_row: 0
            }
        );
    }

    #[test]
    fn rejects_wrong_widths() {
        let g = CrossbarGeometry::default();
        let f = vec![AddressField {
            field: FieldKind::Row,
            bits: 10,
        }];
        assert!(AddressMap::new(f, &g, 64).is_err());
    }
}
