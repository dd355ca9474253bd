//! Parking-traffic simulation with an embedded simultaneous ascending-auction
//! reservation engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: grid road network, parking areas, price zones and driving
//!   distances.
//! - [`demand`]: sampling of the visitor population.
//! - [`auction`]: simultaneous independent ascending auctions with local
//!   greedy bidding. Pure and simulator independent.
//! - [`sim`]: the 1 s step mesoscopic traffic engine and the three parking
//!   behaviours.
//! - [`metrics`]: detectors, parking records and run summaries.
//! - [`experiment`]: scenario configuration, the penetration sweep runner and
//!   CSV persistence.

pub mod auction;
pub mod demand;
mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod sim;

pub use error::{Error, Result};
