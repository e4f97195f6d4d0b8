//! PIM request encoding.
//!
//! A request is a write-like transaction to a page. The offset's row and
//! column fields name the result location; its crossbar field is ignored
//! because every crossbar of the page executes the request. The 64-bit data
//! word, least significant bit first:
//!
//! | bits  | field                                   |
//! |-------|-----------------------------------------|
//! | 0..8  | opcode                                  |
//! | 8..18 | src1 start column                       |
//! | 18..28| src1 length                             |
//! | 28..38| src2 start column                       |
//! | 38..48| src2 length, or immediate length        |
//! | 48    | immediate present                       |
//! | 49..52| destination bit within the offset byte  |
//! | 52..64| immediate, when it fits in 12 bits      |
//!
//! Wider immediates travel in a 64-bit extension word with the inline
//! field zero. ConfigurePage carries its compute region in the src1 fields.
//! Unused fields must be zero, so every request has one canonical form.

use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarGeometry;
use crate::error::{Error, Result};
use crate::isa::{Field, Immediate, Opcode, PimInstruction};

use super::address::{AddressMap, Location};

pub const INLINE_IMM_BITS: u8 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PimRequest {
    pub page: u32,
    pub offset: u64,
    pub data: u64,
    pub ext: Option<u64>,
}

fn get(word: u64, lo: u32, bits: u32) -> u64 {
    (word >> lo) & ((1u64 << bits) - 1)
}

fn put(word: &mut u64, lo: u32, bits: u32, v: u64) -> Result<()> {
    if v >> bits != 0 {
        return Err(Error::Codec(format!(
            "value {v} does not fit {bits}-bit field at bit {lo}"
        )));
    }
    *word |= v << lo;
    Ok(())
}

pub fn encode(instr: &PimInstruction, page: u32, map: &AddressMap) -> Result<PimRequest> {
    let desc = instr.opcode.descriptor();
    let mut w = 0u64;
    put(&mut w, 0, 8, desc.code as u64)?;
    let src1 = if instr.opcode == Opcode::ConfigurePage {
        instr.compute
    } else {
        instr.src1
    };
    put(&mut w, 8, 10, src1.start as u64)?;
    put(&mut w, 18, 10, src1.len as u64)?;
    if let Some(s2) = instr.src2 {
        put(&mut w, 28, 10, s2.start as u64)?;
        put(&mut w, 38, 10, s2.len as u64)?;
    }
    let mut ext = None;
    if let Some(imm) = instr.imm {
        Immediate::new(imm.value, imm.len).map_err(|e| Error::Codec(e.to_string()))?;
        if instr.src2.is_some() {
            return Err(Error::Codec(
                "immediate and second operand share a field".into(),
            ));
        }
        put(&mut w, 38, 10, imm.len as u64)?;
        put(&mut w, 48, 1, 1)?;
        if imm.len <= INLINE_IMM_BITS {
            put(&mut w, 52, 12, imm.value)?;
        } else {
            ext = Some(imm.value);
        }
    }
    let (row, dst_col) = if instr.opcode == Opcode::ConfigurePage {
        (0, 0)
    } else {
        (instr.dst_row as usize, instr.dst_col as usize)
    };
    put(&mut w, 49, 3, (dst_col % 8) as u64)?;
    let offset = map.encode(Location {
        crossbar: 0,
        row,
        byte_in_row: dst_col / 8,
    })?;
    Ok(PimRequest {
        page,
        offset,
        data: w,
        ext,
    })
}

/// Decodes a request into an instruction. The compute region of ordinary
/// instructions is left empty; the page configuration supplies it.
pub fn decode(req: &PimRequest, map: &AddressMap, g: &CrossbarGeometry) -> Result<PimInstruction> {
    let w = req.data;
    let code = get(w, 0, 8) as u8;
    let opcode =
        Opcode::from_code(code).ok_or_else(|| Error::Codec(format!("unknown opcode {code}")))?;
    let desc = opcode.descriptor();
    let loc = map
        .translate(req.offset)
        .map_err(|e| Error::Codec(e.to_string()))?;
    if loc.crossbar != 0 {
        return Err(Error::Codec(
            "crossbar field of a PIM request must be zero".into(),
        ));
    }
    let f = |lo| get(w, lo, 10) as u16;
    let src1 = Field::new(f(8), f(18));
    let (s2_start, s2_len) = (f(28), f(38));
    let imm_present = get(w, 48, 1) == 1;
    let dst_bit = get(w, 49, 3) as usize;
    let inline = get(w, 52, 12);

    if opcode == Opcode::ConfigurePage {
        if w >> 28 != 0 || req.offset != 0 || req.ext.is_some() {
            return Err(Error::Codec(
                "configure_page carries only a compute region".into(),
            ));
        }
        return Ok(PimInstruction::configure_page(src1));
    }
    let mut instr = PimInstruction::new(opcode, src1);
    if desc.has_src2 {
        if imm_present || inline != 0 || req.ext.is_some() {
            return Err(Error::Codec(format!(
                "{} takes no immediate",
                desc.mnemonic
            )));
        }
        instr.src2 = Some(Field::new(s2_start, s2_len));
    } else if desc.has_imm {
        if !imm_present || s2_start != 0 {
            return Err(Error::Codec(format!(
                "{} needs an immediate and no second operand",
                desc.mnemonic
            )));
        }
        let len = s2_len;
        if len == 0 || len > 64 {
            return Err(Error::Codec(format!(
                "immediate length {len} not in 1..=64"
            )));
        }
        let value = if len as u8 <= INLINE_IMM_BITS {
            if req.ext.is_some() {
                return Err(Error::Codec("narrow immediate must be inline".into()));
            }
            inline
        } else {
            if inline != 0 {
                return Err(Error::Codec(
                    "wide immediate must leave the inline field zero".into(),
                ));
            }
            req.ext
                .ok_or_else(|| Error::Codec("missing immediate extension word".into()))?
        };
        let imm = Immediate::new(value, len as u8).map_err(|e| Error::Codec(e.to_string()))?;
        instr.imm = Some(imm);
    } else if (w >> 28) & ((1u64 << 21) - 1) != 0 || inline != 0 || req.ext.is_some() {
        return Err(Error::Codec(format!(
            "{} has stray operand bits",
            desc.mnemonic
        )));
    }
    if !desc.has_dst_row && loc.row != 0 {
        return Err(Error::Codec(format!(
            "{} takes no destination row",
            desc.mnemonic
        )));
    }
    let dst_col = loc.byte_in_row * 8 + dst_bit;
    if dst_col >= g.cols {
        return Err(Error::Codec(format!(
            "destination column {dst_col} >= {}",
            g.cols
        )));
    }
    instr.dst_col = dst_col as u16;
    instr.dst_row = loc.row as u32;
    Ok(instr)
}

impl PimRequest {
    /// Payload as written to a trace: the data word, then the extension word
    /// when present, as big-endian hex.
    pub fn payload_hex(&self) -> String {
        match self.ext {
            Some(e) => format!("{:016x}{:016x}", self.data, e),
            None => format!("{:016x}", self.data),
        }
    }

    pub fn from_payload_hex(page: u32, offset: u64, hex: &str) -> Result<Self> {
        let word =
            |s: &str| u64::from_str_radix(s, 16).map_err(|e| Error::Codec(format!("payload: {e}")));
        if !hex.is_ascii() {
            return Err(Error::Codec("payload is not hex".into()));
        }
        match hex.len() {
            16 => Ok(PimRequest {
                page,
                offset,
                data: word(hex)?,
                ext: None,
            }),
            32 => Ok(PimRequest {
                page,
                offset,
                data: word(&hex[..16])?,
                ext: Some(word(&hex[16..])?),
            }),
            n => Err(Error::Codec(format!(
                "PIM payload must be 16 or 32 hex digits, got {n}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (CrossbarGeometry, AddressMap) {
        let g = CrossbarGeometry::default();
        (g, AddressMap::default_for(&g, 64).unwrap())
    }

    #[test]
    fn round_trip_inline_and_wide() {
        let (g, m) = setup();
        let eq = PimInstruction::new(Opcode::EqualImm, Field::new(3, 8))
            .with_imm(200, 8)
            .with_dst(301);
        let r = encode(&eq, 5, &m).unwrap();
        assert_eq!(r.ext, None);
        assert_eq!(decode(&r, &m, &g).unwrap(), eq);

        let wide = PimInstruction::new(Opcode::LessThanImm, Field::new(0, 40))
            .with_imm(1 << 39, 40)
            .with_dst(40);
        let r = encode(&wide, 0, &m).unwrap();
        assert_eq!(r.ext, Some(1 << 39));
        assert_eq!(decode(&r, &m, &g).unwrap(), wide);

        let red = PimInstruction::new(Opcode::ReduceSum, Field::new(0, 8))
            .with_dst(100)
            .with_dst_row(777);
        assert_eq!(decode(&encode(&red, 1, &m).unwrap(), &m, &g).unwrap(), red);

        let cfg = PimInstruction::configure_page(Field::new(200, 312));
        assert_eq!(decode(&encode(&cfg, 1, &m).unwrap(), &m, &g).unwrap(), cfg);
    }

    #[test]
    fn rejects_non_canonical() {
        let (g, m) = setup();
        let not = PimInstruction::new(Opcode::BitwiseNot, Field::new(0, 4)).with_dst(4);
        let mut r = encode(&not, 0, &m).unwrap();
        r.data |= 1 << 60;
        assert!(decode(&r, &m, &g).is_err());
        let r = PimRequest {
            page: 0,
            offset: 0,
            data: 200,
            ext: None,
        };
        assert!(matches!(decode(&r, &m, &g), Err(Error::Codec(_))));
    }
}
