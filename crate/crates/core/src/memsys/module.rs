use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::crossbar::{Crossbar, CrossbarGeometry, EnergyModel};
use crate::error::{Error, Result};
use crate::isa::{expand, Field, Opcode, PimInstruction};

use super::address::AddressMap;
use super::codec::{self, PimRequest};
use super::config::{SimConfig, Timing};
use super::stats::RunStats;
use super::trace::TraceRecord;

pub const LINE_BYTES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Page {
    pub(crate) crossbars: Vec<Crossbar>,
    pub(crate) compute: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TicketKind {
    Read,
    Write,
    Pim,
}

/// Timing record of one submitted request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ticket {
    pub id: u64,
    pub kind: TicketKind,
    pub page: u32,
    pub issue_ps: u64,
    pub start_ps: u64,
    pub done_ps: u64,
}

/// A PIM module: pages of crossbars, each page behind the PIM controllers
/// of one bank.
///
/// Requests take effect on the memory state in arrival order; the timing
/// model only decides when each one completes. Each bank issues in order,
/// and a request waits for any controller it needs that is still running an
/// earlier PIM request.
#[derive(Debug, Clone)]
pub struct PimModule {
    config: SimConfig,
    geometry: CrossbarGeometry,
    energy: EnergyModel,
    timing: Timing,
    map: AddressMap,
    pub(crate) pages: BTreeMap<u32, Page>,
    now_ps: u64,
    bank_issue_ps: Vec<u64>,
    controller_busy_ps: HashMap<(usize, usize), u64>,
    pending: Vec<Ticket>,
    next_ticket: u64,
    pub(crate) stats: RunStats,
    trace: Option<Vec<TraceRecord>>,
}

impl PimModule {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        Ok(PimModule {
            geometry: config.geometry()?,
            energy: config.energy_model()?,
            timing: config.timing()?,
            map: config.address_map()?,
            bank_issue_ps: vec![0; config.topology.banks],
            config,
            pages: BTreeMap::new(),
            now_ps: 0,
            controller_busy_ps: HashMap::new(),
            pending: Vec::new(),
            next_ticket: 0,
            stats: RunStats::default(),
            trace: None,
        })
    }

    /// Rebuilds a module from persisted pages and counters. The clock
    /// resumes at the recorded completion horizon.
    pub(crate) fn restore(
        config: SimConfig,
        pages: BTreeMap<u32, Page>,
        stats: RunStats,
    ) -> Result<Self> {
        let mut m = PimModule::new(config)?;
        let n = m.crossbars_per_page();
        for (id, p) in &pages {
            if p.crossbars.len() != n || p.crossbars.iter().any(|x| x.geometry() != &m.geometry) {
                return Err(Error::Image(format!(
                    "page {id} does not match the configured geometry"
                )));
            }
            if p.compute.end() > m.geometry.cols {
                return Err(Error::Image(format!(
                    "page {id} compute region ends past the last column"
                )));
            }
        }
        m.pages = pages;
        m.now_ps = stats.elapsed_ps;
        m.bank_issue_ps.fill(stats.elapsed_ps);
        m.stats = stats;
        Ok(m)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn geometry(&self) -> &CrossbarGeometry {
        &self.geometry
    }

    pub fn energy_model(&self) -> &EnergyModel {
        &self.energy
    }

    pub fn address_map(&self) -> &AddressMap {
        &self.map
    }

    pub fn crossbars_per_page(&self) -> usize {
        self.config.topology.crossbars_per_page
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn now_ps(&self) -> u64 {
        self.now_ps
    }

    /// Starts recording every host request.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn record(&mut self, r: impl FnOnce() -> TraceRecord) {
        if let Some(t) = &mut self.trace {
            t.push(r());
        }
    }

    /// Allocates a page of fresh crossbars; mapping an existing page is a no-op.
    pub fn map_page(&mut self, page: u32) {
        let g = self.geometry;
        let n = self.crossbars_per_page();
        self.pages.entry(page).or_insert_with(|| Page {
            crossbars: vec![Crossbar::new(g); n],
            compute: Field::default(),
        });
    }

    pub fn page_ids(&self) -> Vec<u32> {
        self.pages.keys().copied().collect()
    }

    pub fn is_mapped(&self, page: u32) -> bool {
        self.pages.contains_key(&page)
    }

    pub fn page_compute(&self, page: u32) -> Result<Field> {
        Ok(self.page(page)?.compute)
    }

    pub(crate) fn page(&self, page: u32) -> Result<&Page> {
        self.pages.get(&page).ok_or(Error::UnmappedPage(page))
    }

    pub fn crossbar(&self, page: u32, index: usize) -> Result<&Crossbar> {
        self.page(page)?
            .crossbars
            .get(index)
            .ok_or_else(|| Error::Bounds(format!("crossbar {index} of page {page}")))
    }

    pub fn crossbars(&self, page: u32) -> Result<&[Crossbar]> {
        Ok(&self.page(page)?.crossbars)
    }

    pub fn bank_of(&self, page: u32) -> usize {
        page as usize % self.config.topology.banks
    }

    /// Controllers (within the page's bank) that drive the page, in
    /// crossbar order.
    pub fn controllers_of(&self, page: u32) -> Vec<usize> {
        let t = &self.config.topology;
        let per_page = self
            .crossbars_per_page()
            .div_ceil(self.config.crossbars_per_controller());
        let slot = page as usize / t.banks;
        (0..per_page)
            .map(|i| (slot * per_page + i) % t.controllers_per_bank)
            .collect()
    }

    fn controller_of_crossbar(&self, page: u32, crossbar: usize) -> usize {
        self.controllers_of(page)[crossbar / self.config.crossbars_per_controller()]
    }

    fn schedule(
        &mut self,
        kind: TicketKind,
        page: u32,
        controllers: &[usize],
        busy_for_ps: u64,
        occupies: bool,
    ) -> Ticket {
        let bank = self.bank_of(page);
        let mut start = self.now_ps.max(self.bank_issue_ps[bank]);
        for &c in controllers {
            start = start.max(
                self.controller_busy_ps
                    .get(&(bank, c))
                    .copied()
                    .unwrap_or(0),
            );
        }
        let done = start + busy_for_ps;
        self.bank_issue_ps[bank] = start;
        if occupies {
            for &c in controllers {
                self.controller_busy_ps.insert((bank, c), done);
            }
        }
        let t = Ticket {
            id: self.next_ticket,
            kind,
            page,
            issue_ps: self.now_ps,
            start_ps: start,
            done_ps: done,
        };
        self.next_ticket += 1;
        self.stats.elapsed_ps = self.stats.elapsed_ps.max(done);
        self.pending.push(t);
        t
    }

    /// Moves the host clock forward and returns requests completed by then.
    pub fn advance(&mut self, to_ps: u64) -> Vec<Ticket> {
        self.now_ps = self.now_ps.max(to_ps);
        let now = self.now_ps;
        let (mut done, rest): (Vec<_>, Vec<_>) =
            self.pending.drain(..).partition(|t| t.done_ps <= now);
        self.pending = rest;
        done.sort_by_key(|t| (t.done_ps, t.id));
        done
    }

    /// Completes every outstanding request.
    pub fn drain(&mut self) -> Vec<Ticket> {
        let horizon = self
            .pending
            .iter()
            .map(|t| t.done_ps)
            .max()
            .unwrap_or(self.now_ps);
        self.advance(horizon)
    }

    /// Groups the bytes of a line by the crossbar read unit holding them:
    /// `(crossbar, row, unit) -> [(line byte, byte within unit)]`.
    fn line_units(&self, offset: u64) -> Result<LineUnits> {
        if !offset.is_multiple_of(LINE_BYTES as u64) {
            return Err(Error::AddressMap(format!(
                "line offset {offset:#x} is not 64-byte aligned"
            )));
        }
        let unit_bytes = self.geometry.read_width / 8;
        let mut groups: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for i in 0..LINE_BYTES {
            let loc = self.map.translate(offset + i as u64)?;
            let key = (loc.crossbar, loc.row, loc.byte_in_row / unit_bytes);
            groups
                .entry(key)
                .or_default()
                .push((i, loc.byte_in_row % unit_bytes));
        }
        Ok(groups)
    }

    pub fn host_read(&mut self, page: u32, offset: u64) -> Result<[u8; LINE_BYTES]> {
        self.page(page)?;
        let groups = self.line_units(offset)?;
        let energy = self.energy;
        let mut out = [0u8; LINE_BYTES];
        let mut ctrls = BTreeSet::new();
        let p = self.pages.get_mut(&page).unwrap();
        for (&(x, row, unit), bytes) in &groups {
            let v = p.crossbars[x].read_unit(row, unit, &energy)?;
            for &(i, b) in bytes {
                out[i] = (v >> (8 * b)) as u8;
            }
        }
        let w = self.geometry.read_width as u64;
        for &(x, _, _) in groups.keys() {
            ctrls.insert(self.controller_of_crossbar(page, x));
        }
        self.stats.line_reads += 1;
        self.stats.bytes_read += LINE_BYTES as u64;
        self.stats.unit_reads += groups.len() as u64;
        self.stats.read_energy += energy.read_per_bit.times(w * groups.len() as u64);
        let busy = self.timing.read_latency_ps + self.timing.line_transfer_ps;
        let t = self.schedule(
            TicketKind::Read,
            page,
            &ctrls.into_iter().collect::<Vec<_>>(),
            busy,
            false,
        );
        // The in-order host waits for each load.
        self.now_ps = self.now_ps.max(t.done_ps);
        self.record(|| TraceRecord::Read {
            page,
            offset,
            data: out,
        });
        Ok(out)
    }

    pub fn host_write(&mut self, page: u32, offset: u64, data: &[u8; LINE_BYTES]) -> Result<()> {
        self.page(page)?;
        let groups = self.line_units(offset)?;
        let energy = self.energy;
        let w = self.geometry.read_width;
        let full = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
        let p = self.pages.get_mut(&page).unwrap();
        for (&(x, row, unit), bytes) in &groups {
            let xb = &mut p.crossbars[x];
            // Bytes of the unit outside this line keep their value.
            let mut v = xb.peek_unit(row, unit);
            for &(i, b) in bytes {
                v = (v & !(0xffu64 << (8 * b))) | ((data[i] as u64) << (8 * b));
            }
            xb.write_unit(row, unit, v & full, &energy)?;
        }
        let mut ctrls = BTreeSet::new();
        for &(x, _, _) in groups.keys() {
            ctrls.insert(self.controller_of_crossbar(page, x));
        }
        self.stats.line_writes += 1;
        self.stats.bytes_written += LINE_BYTES as u64;
        self.stats.unit_writes += groups.len() as u64;
        self.stats.write_energy += energy.write_per_bit.times(w as u64 * groups.len() as u64);
        let busy = self.timing.write_latency_ps + self.timing.line_transfer_ps;
        self.schedule(
            TicketKind::Write,
            page,
            &ctrls.into_iter().collect::<Vec<_>>(),
            busy,
            false,
        );
        let data = *data;
        self.record(|| TraceRecord::Write { page, offset, data });
        Ok(())
    }

    /// Decodes and executes a PIM request on every crossbar of its page.
    pub fn submit_pim(&mut self, req: &PimRequest) -> Result<Ticket> {
        let compute = self.page(req.page)?.compute;
        let mut instr = codec::decode(req, &self.map, &self.geometry)?;
        let cycles = if instr.opcode == Opcode::ConfigurePage {
            if instr.compute.end() > self.geometry.cols {
                return Err(Error::Bounds(format!(
                    "compute region ends past column {}",
                    self.geometry.cols
                )));
            }
            self.pages.get_mut(&req.page).unwrap().compute = instr.compute;
            0
        } else {
            instr.compute = compute;
            let ops = expand(&instr, &self.geometry)?;
            let energy = self.energy;
            let rows = self.geometry.rows;
            let p = self.pages.get_mut(&req.page).unwrap();
            for x in &mut p.crossbars {
                x.apply_all(&ops, &energy)?;
            }
            let bits: u64 =
                ops.iter().map(|op| op.cells_written(rows)).sum::<u64>() * p.crossbars.len() as u64;
            self.stats.logic_bits += bits;
            self.stats.logic_energy += energy.logic_per_bit.times(bits);
            ops.len() as u64
        };
        self.stats.pim_requests += 1;
        self.stats.logic_cycles += cycles;
        if cycles > 0 {
            *self
                .stats
                .cycles_by_opcode
                .entry(instr.opcode.mnemonic().to_string())
                .or_insert(0) += cycles;
        }
        let controllers = self.controllers_of(req.page);
        let busy = self.timing.line_transfer_ps + cycles * self.timing.logic_cycle_ps;
        let t = self.schedule(TicketKind::Pim, req.page, &controllers, busy, true);
        let req = *req;
        self.record(|| TraceRecord::Pim(req));
        Ok(t)
    }

    /// Encodes `instr` as a request to `page` and submits it. The
    /// instruction's compute field is ignored; the page configuration applies.
    pub fn pim(&mut self, page: u32, instr: &PimInstruction) -> Result<Ticket> {
        let req = codec::encode(instr, page, &self.map)?;
        self.submit_pim(&req)
    }

    pub fn configure_page(&mut self, page: u32, compute: Field) -> Result<Ticket> {
        self.pim(page, &PimInstruction::configure_page(compute))
    }

    /// Replays a trace, mapping pages on first use. With `check_reads`, read
    /// records must observe the recorded data; without, only the counters
    /// and timing are reproduced, which do not depend on cell contents.
    pub fn replay(&mut self, records: &[TraceRecord], check_reads: bool) -> Result<()> {
        for (i, r) in records.iter().enumerate() {
            match r {
                TraceRecord::Read { page, offset, data } => {
                    self.map_page(*page);
                    let got = self.host_read(*page, *offset)?;
                    if check_reads && &got != data {
                        return Err(Error::Instruction(format!(
                            "trace record {}: read of page {page} offset {offset:#x} differs from the recorded data",
                            i + 1
                        )));
                    }
                }
                TraceRecord::Write { page, offset, data } => {
                    self.map_page(*page);
                    self.host_write(*page, *offset, data)?;
                }
                TraceRecord::Pim(req) => {
                    self.map_page(req.page);
                    self.submit_pim(req)?;
                }
            }
        }
        Ok(())
    }

    /// Per-row write totals of every crossbar, keyed by (page, crossbar).
    pub fn wear_snapshot(&self) -> WearSnapshot {
        WearSnapshot(
            self.pages
                .iter()
                .flat_map(|(&p, page)| {
                    page.crossbars
                        .iter()
                        .enumerate()
                        .map(move |(i, x)| ((p, i), x.row_write_totals()))
                })
                .collect(),
        )
    }

    /// Largest per-row write count over every crossbar, with its location.
    pub fn max_row_writes(&self) -> Option<RowWear> {
        self.wear_snapshot().max_since(&WearSnapshot::default())
    }
}

/// Line bytes grouped by the read unit holding them.
type LineUnits = BTreeMap<(usize, usize, usize), Vec<(usize, usize)>>;

/// Per-row cumulative write counts of every crossbar.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct WearSnapshot(pub BTreeMap<(u32, usize), Vec<u64>>);

/// The row with the most writes and its count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowWear {
    pub page: u32,
    pub crossbar: usize,
    pub row: usize,
    pub writes: u64,
}

impl RowWear {
    /// Writes per cell of the row under a uniform-wear assumption.
    pub fn ops_per_cell(&self, cols: usize) -> f64 {
        self.writes as f64 / cols as f64
    }
}

impl WearSnapshot {
    /// Row with the largest write increase since `before` (first on ties).
    pub fn max_since(&self, before: &WearSnapshot) -> Option<RowWear> {
        let mut best: Option<RowWear> = None;
        for (&(page, crossbar), rows) in &self.0 {
            let prev = before.0.get(&(page, crossbar));
            for (row, &t) in rows.iter().enumerate() {
                let d = t - prev.map_or(0, |p| p[row]);
                if best.is_none_or(|b| d > b.writes) {
                    best = Some(RowWear {
                        page,
                        crossbar,
                        row,
                        writes: d,
                    });
                }
            }
        }
        best
    }
}
