//! Deterministic desk-scale model of a distributed field instrument.
//!
//! Sensor, logger, uplink and output nodes exchange frames over a simulated
//! priority-arbitrated bus. Larger payloads travel through a multipacket
//! transport; logs are checksummed end to end on their way to a gateway
//! service, and nodes can be reflashed over the bus with receiver-paced
//! flow control.
//!
//! Each capability has a runnable program under `examples/`.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bus;
pub mod crc;
pub mod filters;
pub mod gateway;
pub mod ids;
pub mod nodes;
pub mod replay;
pub mod scenario;
pub mod sensors;
pub mod sim;
pub mod transport;
pub mod uplink;
pub mod world;
