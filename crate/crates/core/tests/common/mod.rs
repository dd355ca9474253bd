#![allow(dead_code)]

use parkauction::demand::Driver;
use parkauction::experiment::ScenarioConfig;
use parkauction::network::{EdgeId, GridSpec, RoadNetwork};

pub fn grid(rows: usize, cols: usize, capacity: usize) -> RoadNetwork {
    RoadNetwork::build_grid(&GridSpec {
        rows,
        cols,
        capacity,
        ..GridSpec::default()
    })
    .unwrap()
}

pub fn driver(id: u32, origin: u32, destination: u32, depart: u32, stay: u32) -> Driver {
    Driver {
        id,
        origin: EdgeId(origin),
        destination: EdgeId(destination),
        beta: 0.5,
        valuation: 5.0,
        participant: false,
        base_depart: depart,
        depart_offset: 0,
        stay,
    }
}

/// A scenario small enough to run in well under a second.
pub fn small_scenario() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.demand.drivers = 1500;
    c.demand.horizon_s = 3600;
    c.metrics.steady_state_start_s = 900;
    c
}
