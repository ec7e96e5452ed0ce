//! Outlet control for stormwater detention ponds.
//!
//! The crate simulates a single detention pond whose outlet gate is driven in
//! simulated real time: wet periods are scheduled by a rolling-horizon linear
//! program that minimizes (and flattens) the discharge to the receiving
//! stream, dry periods by a three-rule release policy that trades settling
//! time against the storage needed for the next storm. A static, uncontrolled
//! baseline and trace/report emission round out the comparison harness.

pub mod controller;
pub mod hydraulics;
pub mod lp;
pub mod optimizer;
pub mod report;
pub mod rules;
pub mod scenario;

pub use hydraulics::{FlowSample, PondParams, PondState};
