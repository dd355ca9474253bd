//! Visitor population: origins, human destinations, stays, attitude mix,
//! participation and departure schedule.
//!
//! Each attribute is drawn from its own ChaCha stream of the run seed, so two
//! scenarios that differ only in mix or penetration share every other draw.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::cost;
use crate::network::{AreaId, EdgeId, RoadNetwork};
use crate::{Error, Result};

/// Attitude factor of drivers who favour proximity.
pub const BETA_LOW: f64 = 0.01;
/// Attitude factor of the price-neutral majority.
pub const BETA_HIGH: f64 = 0.5;

const STREAM_DESTINATION: u64 = 1;
const STREAM_ORIGIN: u64 = 2;
const STREAM_OFFSET: u64 = 3;
const STREAM_STAY: u64 = 4;
const STREAM_BETA: u64 = 5;
const STREAM_PARTICIPATION: u64 = 6;

/// Share of low-beta drivers in the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mix {
    #[serde(rename = "MIX10")]
    Mix10,
    #[serde(rename = "MIX25")]
    Mix25,
    #[serde(rename = "MIX50")]
    Mix50,
}

impl Mix {
    pub const ALL: [Mix; 3] = [Mix::Mix10, Mix::Mix25, Mix::Mix50];

    /// Probability of `beta = 0.01`.
    pub fn low_beta_share(self) -> f64 {
        match self {
            Mix::Mix10 => 0.10,
            Mix::Mix25 => 0.25,
            Mix::Mix50 => 0.50,
        }
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mix::Mix10 => "MIX10",
            Mix::Mix25 => "MIX25",
            Mix::Mix50 => "MIX50",
        })
    }
}

impl FromStr for Mix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MIX10" => Ok(Mix::Mix10),
            "MIX25" => Ok(Mix::Mix25),
            "MIX50" => Ok(Mix::Mix50),
            _ => Err(Error::Config(format!(
                "unknown mix {s:?}, expected MIX10, MIX25 or MIX50"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandConfig {
    pub drivers: usize,
    pub horizon_s: u32,
    pub mix: Mix,
    /// Set from the scenario, not the demand section of a config file.
    #[serde(skip)]
    pub penetration: f64,
    #[serde(skip)]
    pub seed: u64,
    pub depart_offset_max_s: u32,
    pub stay_min_s: u32,
    pub stay_max_s: u32,
    pub valuation_eur: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            drivers: 11520,
            horizon_s: 14400,
            mix: Mix::Mix10,
            penetration: 0.0,
            seed: 0,
            depart_offset_max_s: 300,
            stay_min_s: 900,
            stay_max_s: 2700,
            valuation_eur: 5.0,
        }
    }
}

impl DemandConfig {
    pub fn validate(&self) -> Result<()> {
        if self.drivers == 0 {
            return Err(Error::Config("demand.drivers must be positive".into()));
        }
        if self.horizon_s == 0 {
            return Err(Error::Config("demand.horizon_s must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(Error::Config(format!(
                "penetration must lie in [0, 1], got {}",
                self.penetration
            )));
        }
        if self.stay_min_s > self.stay_max_s {
            return Err(Error::Config(format!(
                "demand.stay_min_s ({}) exceeds demand.stay_max_s ({})",
                self.stay_min_s, self.stay_max_s
            )));
        }
        if !(self.valuation_eur > 0.0) {
            return Err(Error::Config("demand.valuation_eur must be positive".into()));
        }
        Ok(())
    }

    /// Exact participant count, `round(penetration * n)`.
    pub fn participant_count(&self) -> usize {
        (self.penetration * self.drivers as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Driver {
    pub id: u32,
    pub origin: EdgeId,
    /// Human destination: the midpoint of this edge.
    pub destination: EdgeId,
    pub beta: f64,
    pub valuation: f64,
    pub participant: bool,
    pub base_depart: u32,
    pub depart_offset: u32,
    pub stay: u32,
}

impl Driver {
    pub fn depart(&self) -> u32 {
        self.base_depart + self.depart_offset
    }
}

/// Destination probability per edge: `(ring + 1)` normalised.
pub fn attraction_weights(net: &RoadNetwork) -> Vec<f64> {
    let raw: Vec<f64> = net.edges().iter().map(|e| (e.ring + 1) as f64).collect();
    normalise(raw)
}

/// Origin probability per edge: affine in the distance of the edge midpoint
/// from the network centre, with the farthest edges nine times as likely as
/// the nearest ones.
pub fn origin_weights(net: &RoadNetwork) -> Vec<f64> {
    let (cx, cy) = net.center_xy();
    let dist: Vec<f64> = net
        .edges()
        .iter()
        .map(|e| {
            let (x, y) = net.edge_midpoint_xy(e.id);
            (x - cx).hypot(y - cy)
        })
        .collect();
    let lo = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw = if hi - lo < 1e-12 {
        vec![1.0; dist.len()]
    } else {
        dist.iter().map(|d| 1.0 + 8.0 * (d - lo) / (hi - lo)).collect()
    };
    normalise(raw)
}

fn normalise(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn sample_population(net: &RoadNetwork, cfg: &DemandConfig) -> Result<Vec<Driver>> {
    cfg.validate()?;
    let n = cfg.drivers;
    let dest_dist = WeightedIndex::new(attraction_weights(net)).expect("positive weights");
    let origin_dist = WeightedIndex::new(origin_weights(net)).expect("positive weights");

    let mut dest_rng = stream(cfg.seed, STREAM_DESTINATION);
    let mut origin_rng = stream(cfg.seed, STREAM_ORIGIN);
    let mut offset_rng = stream(cfg.seed, STREAM_OFFSET);
    let mut stay_rng = stream(cfg.seed, STREAM_STAY);
    let mut beta_rng = stream(cfg.seed, STREAM_BETA);

    let low_share = cfg.mix.low_beta_share();
    let mut drivers: Vec<Driver> = (0..n)
        .map(|i| Driver {
            id: i as u32,
            destination: EdgeId(dest_dist.sample(&mut dest_rng) as u32),
            origin: EdgeId(origin_dist.sample(&mut origin_rng) as u32),
            depart_offset: offset_rng.gen_range(0..=cfg.depart_offset_max_s),
            stay: stay_rng.gen_range(cfg.stay_min_s..=cfg.stay_max_s),
            beta: if beta_rng.gen::<f64>() < low_share {
                BETA_LOW
            } else {
                BETA_HIGH
            },
            valuation: cfg.valuation_eur,
            participant: false,
            base_depart: ((i as u64 * cfg.horizon_s as u64) / n as u64) as u32,
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(cfg.seed, STREAM_PARTICIPATION));
    for &i in &order[..cfg.participant_count()] {
        drivers[i].participant = true;
    }
    Ok(drivers)
}

/// Static parking cost of every area for a destination edge, using zone
/// prices normalised by the highest zone price and distances normalised by
/// the most remote area.
pub fn static_costs(net: &RoadNetwork, destination: EdgeId, beta: f64) -> Vec<f64> {
    let p_max = net.prices().max();
    let d_max = net
        .areas()
        .iter()
        .map(|a| net.mid_distance(a.edge, destination))
        .fold(0.0, f64::max);
    net.areas()
        .iter()
        .map(|a| {
            cost(
                beta,
                a.base_price,
                p_max,
                net.mid_distance(a.edge, destination),
                d_max,
            )
            .expect("zone prices are validated positive")
        })
        .collect()
}

/// All areas in ascending static cost; ties by area id.
pub fn ranked_lots(net: &RoadNetwork, destination: EdgeId, beta: f64) -> Vec<AreaId> {
    let costs = static_costs(net, destination, beta);
    let mut ids: Vec<AreaId> = net.areas().iter().map(|a| a.id).collect();
    ids.sort_by(|a, b| {
        costs[a.index()]
            .total_cmp(&costs[b.index()])
            .then(a.cmp(b))
    });
    ids
}

pub fn preferred_lot(net: &RoadNetwork, driver: &Driver) -> AreaId {
    ranked_lots(net, driver.destination, driver.beta)[0]
}

/// Memoised preference lists keyed by destination and attitude factor.
#[derive(Debug, Default)]
pub struct PreferenceCache {
    lists: HashMap<(EdgeId, u64), Vec<AreaId>>,
}

impl PreferenceCache {
    pub fn ranked(&mut self, net: &RoadNetwork, destination: EdgeId, beta: f64) -> &[AreaId] {
        self.lists
            .entry((destination, beta.to_bits()))
            .or_insert_with(|| ranked_lots(net, destination, beta))
    }

    pub fn preferred(&mut self, net: &RoadNetwork, driver: &Driver) -> AreaId {
        self.ranked(net, driver.destination, driver.beta)[0]
    }
}

const POPULATION_HEADER: [&str; 10] = [
    "driver_id",
    "origin_edge",
    "destination_edge",
    "beta",
    "valuation_eur",
    "participant",
    "base_depart_s",
    "depart_offset_s",
    "depart_s",
    "stay_s",
];

pub fn write_population(path: &Path, drivers: &[Driver]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(POPULATION_HEADER)?;
    for d in drivers {
        w.write_record([
            d.id.to_string(),
            d.origin.0.to_string(),
            d.destination.0.to_string(),
            d.beta.to_string(),
            d.valuation.to_string(),
            u8::from(d.participant).to_string(),
            d.base_depart.to_string(),
            d.depart_offset.to_string(),
            d.depart().to_string(),
            d.stay.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_population(path: &Path) -> Result<Vec<Driver>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(POPULATION_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_owned(),
            msg: format!("unexpected header {headers:?}"),
        });
    }
    let bad = |line: usize, what: &str| Error::Parse {
        path: path.to_owned(),
        msg: format!("record {line}: bad {what}"),
    };
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        macro_rules! parse {
            ($i:expr, $t:ty) => {
                field($i)
                    .parse::<$t>()
                    .map_err(|_| bad(line + 1, POPULATION_HEADER[$i]))?
            };
        }
        out.push(Driver {
            id: parse!(0, u32),
            origin: EdgeId(parse!(1, u32)),
            destination: EdgeId(parse!(2, u32)),
            beta: parse!(3, f64),
            valuation: parse!(4, f64),
            participant: parse!(5, u8) != 0,
            base_depart: parse!(6, u32),
            depart_offset: parse!(7, u32),
            stay: parse!(9, u32),
        });
    }
    Ok(out)
}
