//! Functional, cycle- and energy-accounted simulator of a memristive
//! bulk-bitwise processing-in-memory module running relational filter and
//! aggregation queries through in-crossbar NOR micro-operations.
//!
//! Layering, bottom up:
//!
//! * [`crossbar`] one crossbar: bit matrix, MAGIC-style micro-ops, wear and energy.
//! * [`isa`] PIM instructions and their expansion into micro-op sequences.
//! * [`memsys`] pages, controllers, address map, request codec, timing, trace.
//! * [`layout`] relation schemas mapped onto crossbar rows.
//! * [`query`] query text, compilation into phased PIM plans, execution.
//! * [`oracle`] naive row-scan reference executor.
//! * [`report`], [`generate`], [`image`] reports, data generation, memory images.

pub mod crossbar;
pub mod error;
pub mod generate;
pub mod image;
pub mod isa;
pub mod layout;
pub mod memsys;
pub mod oracle;
pub mod query;
pub mod report;

pub use crossbar::{Crossbar, CrossbarGeometry, Energy, EnergyModel, MicroOp};
pub use error::{Error, Result};
