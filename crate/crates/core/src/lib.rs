//! Discrete-event simulation of 802.11 DCF and 802.11e EDCA channel access.

pub mod dcf;
pub mod edca;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod phy;
pub mod scenario;
pub mod sim;
pub mod traffic;

pub use kernel::{EventHandle, Scheduler, Timestamp};
pub use sim::{MacMode, SimSetup, Simulation, StationSetup};
