//! Persistent memory images.
//!
//! All integers are little-endian. Layout:
//!
//! ```text
//! magic     8 bytes   "PIMDBIMG"
//! version   u32       1
//! config    u32 len + UTF-8 TOML (SimConfig)
//! catalog   u32 len + UTF-8 JSON (Database)
//! stats     u32 len + UTF-8 JSON (RunStats, cumulative)
//! pages     u32 count, then per page in ascending id:
//!   id        u32
//!   compute   u16 start, u16 len
//!   crossbars crossbars_per_page times:
//!     counters  u32 len + UTF-8 JSON (CrossbarCounters)
//!     bits      cols * ceil(rows / 64) u64, column-major, bit r of a
//!               column word is row r
//!     col wear  cols u64
//!     unit wear rows * (cols / read_width) u32, row-major
//!     cell wear u32 count, then (u32 row * cols + col, u32 writes) pairs
//! ```
//!
//! Wear travels with the bits, so endurance accumulates across sessions.

use std::collections::BTreeMap;
use std::path::Path;

use crate::crossbar::{Crossbar, CrossbarCounters, WearParts};
use crate::error::{Error, Result};
use crate::isa::Field;
use crate::layout::Database;
use crate::memsys::{Page, PimModule, RunStats, SimConfig};

pub const MAGIC: &[u8; 8] = b"PIMDBIMG";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn blob(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Image(format!(
                "truncated {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    /// `n` little-endian words of `size` bytes, after checking they are present.
    fn words(&mut self, n: usize, size: usize, what: &str) -> Result<&'a [u8]> {
        let len = n
            .checked_mul(size)
            .ok_or_else(|| Error::Image(format!("{what} too large")))?;
        self.take(len, what)
    }
    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?)
            .map_err(|_| Error::Image(format!("{what} is not UTF-8")))
    }
}

fn json_err(what: &str) -> impl Fn(serde_json::Error) -> Error + '_ {
    move |e| Error::Image(format!("{what}: {e}"))
}

/// Serializes the module state and the catalog.
pub fn encode(module: &PimModule, db: &Database) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u32(VERSION);
    w.blob(module.config().to_toml().as_bytes());
    w.blob(
        serde_json::to_string(db)
            .expect("catalog serializes")
            .as_bytes(),
    );
    w.blob(
        serde_json::to_string(module.stats())
            .expect("stats serialize")
            .as_bytes(),
    );
    let ids = module.page_ids();
    w.u32(ids.len() as u32);
    for id in ids {
        w.u32(id);
        let c = module.page_compute(id).unwrap();
        w.u16(c.start);
        w.u16(c.len);
        for x in module.crossbars(id).unwrap() {
            w.blob(
                serde_json::to_string(x.counters())
                    .expect("counters serialize")
                    .as_bytes(),
            );
            for &b in x.raw_bits() {
                w.u64(b);
            }
            let wear = x.wear_parts();
            for v in wear.col_wear {
                w.u64(v);
            }
            for v in wear.unit_wear {
                w.u32(v);
            }
            w.u32(wear.cell_wear.len() as u32);
            for (i, n) in wear.cell_wear {
                w.u32(i);
                w.u32(n);
            }
        }
    }
    w.0
}

/// Rebuilds the module and catalog from `encode` output.
pub fn decode(bytes: &[u8]) -> Result<(PimModule, Database)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Image("not a memory image".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Image(format!("unsupported version {version}")));
    }
    let config = SimConfig::from_toml(r.text("config")?)?;
    let db: Database = serde_json::from_str(r.text("catalog")?).map_err(json_err("catalog"))?;
    let stats: RunStats = serde_json::from_str(r.text("stats")?).map_err(json_err("stats"))?;
    let g = config.geometry()?;
    let xpp = config.topology.crossbars_per_page;
    let n_pages = r.u32("page count")?;
    let mut pages = BTreeMap::new();
    for _ in 0..n_pages {
        let id = r.u32("page id")?;
        let compute = Field::new(r.u16("compute")?, r.u16("compute")?);
        let mut crossbars = Vec::new();
        for _ in 0..xpp {
            let counters: CrossbarCounters =
                serde_json::from_str(r.text("counters")?).map_err(json_err("counters"))?;
            let le64 = |c: &[u8]| u64::from_le_bytes(c.try_into().unwrap());
            let le32 = |c: &[u8]| u32::from_le_bytes(c.try_into().unwrap());
            let bits = r
                .words(g.cols * g.words_per_col(), 8, "bits")?
                .chunks(8)
                .map(le64)
                .collect();
            let col_wear = r
                .words(g.cols, 8, "column wear")?
                .chunks(8)
                .map(le64)
                .collect();
            let unit_wear = r
                .words(g.rows * g.units_per_row(), 4, "unit wear")?
                .chunks(4)
                .map(le32)
                .collect();
            let n = r.u32("cell wear")? as usize;
            let cell_wear = r
                .words(n, 8, "cell wear")?
                .chunks(8)
                .map(|c| (le32(&c[..4]), le32(&c[4..])))
                .collect();
            crossbars.push(Crossbar::from_parts(
                g,
                bits,
                WearParts {
                    col_wear,
                    unit_wear,
                    cell_wear,
                },
                counters,
            )?);
        }
        if pages.insert(id, Page { crossbars, compute }).is_some() {
            return Err(Error::Image(format!("page {id} appears twice")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Image(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    for rel in &db.relations {
        if let Some(p) = rel.pages.iter().find(|p| !pages.contains_key(p)) {
            return Err(Error::Image(format!(
                "relation {} refers to missing page {p}",
                rel.name
            )));
        }
    }
    Ok((PimModule::restore(config, pages, stats)?, db))
}

pub fn save(path: &Path, module: &PimModule, db: &Database) -> Result<()> {
    std::fs::write(path, encode(module, db))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(PimModule, Database)> {
    decode(&std::fs::read(path)?)
}
