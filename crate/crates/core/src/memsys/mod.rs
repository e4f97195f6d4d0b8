//! The PIM memory module: pages of crossbars behind banks and PIM
//! controllers, the software-visible address map, the request codec, a
//! simple in-order timing model and request traces.

pub mod address;
pub mod codec;
pub mod config;
mod module;
pub mod stats;
pub mod trace;

pub use address::{AddressField, AddressMap, FieldKind, Location};
pub use codec::PimRequest;
pub use config::SimConfig;
pub(crate) use module::Page;
pub use module::{PimModule, RowWear, Ticket, TicketKind, WearSnapshot, LINE_BYTES};
pub use stats::RunStats;
pub use trace::TraceRecord;
