//! Mesoscopic parking-traffic engine advanced in 1 s steps.
//!
//! Vehicles traverse edges at free-flow speed and leave each edge through a
//! FIFO exit queue with a per-edge discharge capacity. On reaching the
//! midpoint of the edge that holds their target area they try to park; when
//! the area is full they cruise to a random area with free kerb space within
//! a fixed radius. After their stay they drive back to their origin edge and
//! leave the network at its downstream end.
//!
//! Within one step the order is: auction tick, departures from parking,
//! spawns, movement and parking attempts, queue discharge.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{run_batch, Auction, AuctionConfig, BidderView};
use crate::demand::{Driver, PreferenceCache};
use crate::metrics::{
    parking_distance, summarize, DetectorSet, MetricsConfig, ParkingEvent, RunRecords,
    RunSummary, TripRecord,
};
use crate::network::{AreaId, EdgeId, EdgePos, JunctionId, ParkingArea, RoadNetwork, SpaceId};
use crate::{Error, Result};

const POS_TOL: f64 = 1e-9;
const STREAM_CRUISE: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Baseline,
    Information,
    Auction,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Baseline => "baseline",
            Behavior::Information => "information",
            Behavior::Auction => "auction",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Behavior::Baseline),
            "information" | "info" => Ok(Behavior::Information),
            "auction" => Ok(Behavior::Auction),
            _ => Err(Error::Config(format!(
                "unknown behavior {s:?}, expected baseline, information or auction"
            ))),
        }
    }
}

/// What a won reservation is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReservationBinding {
    /// The exact space won. A non-participant parking on it voids the
    /// reservation.
    Space,
    /// Any space of the won area. A non-participant parking on the reserved
    /// space shifts the reservation to another free space of the same area;
    /// only when none is left does it fail.
    Area,
}

/// Point a bidding agent measures space distances to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidDistance {
    /// The driver's own destination street.
    Destination,
    /// The driver's preferred parking area, where the vehicle was heading.
    PreferredLot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Vehicles per second that can leave one edge.
    pub exit_capacity_vps: f64,
    /// Cruising search radius in blocks, measured from the vehicle's next
    /// junction to the area position.
    pub cruise_radius_blocks: f64,
    /// Configured in the auction section of a scenario file.
    #[serde(skip)]
    pub auction_period_s: u32,
    pub reservation_binding: ReservationBinding,
    pub bid_distance: BidDistance,
    /// Extra time allowed after the last possible departure from parking
    /// before a run is declared stalled.
    pub drain_guard_s: u32,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            exit_capacity_vps: 0.5,
            cruise_radius_blocks: 2.0,
            auction_period_s: 15,
            reservation_binding: ReservationBinding::Space,
            bid_distance: BidDistance::Destination,
            drain_guard_s: 14400,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exit_capacity_vps > 0.0) {
            return Err(Error::Config("traffic.exit_capacity_vps must be positive".into()));
        }
        if !(self.cruise_radius_blocks >= 0.0) {
            return Err(Error::Config(
                "traffic.cruise_radius_blocks must be non-negative".into(),
            ));
        }
        if self.auction_period_s == 0 {
            return Err(Error::Config("auction.period_s must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub behavior: Behavior,
    pub seed: u64,
    pub traffic: TrafficConfig,
    pub auction: AuctionConfig,
    pub metrics: MetricsConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            behavior: Behavior::Baseline,
            seed: 0,
            traffic: TrafficConfig::default(),
            auction: AuctionConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    EnRoute,
    Cruising,
    Parked,
    Returning,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub driver: u32,
    pub participant: bool,
    pub phase: Phase,
    pub edge: EdgeId,
    pub position: f64,
    /// Where the vehicle entered the current edge segment.
    entry_position: f64,
    pub route: Vec<EdgeId>,
    pub cursor: usize,
    pub target_area: Option<AreaId>,
    pub preferred_area: AreaId,
    pub reservation: Option<SpaceId>,
    pub reservation_price: Option<f64>,
    /// Lost a reservation and went back to searching the kerb.
    pub fallback: bool,
    pub occupied_space: Option<SpaceId>,
    pub paid_price: Option<f64>,
    pub odometer: f64,
    pub spawn_time: u32,
    pub park_time: Option<u32>,
    pub exit_time: Option<u32>,
    /// Free-flow steps from spawn to the first target.
    pub eta_steps: u32,
    queued: bool,
}

impl VehicleState {
    fn at_route_end(&self) -> bool {
        self.cursor + 1 == self.route.len()
    }

    fn pos(&self, net: &RoadNetwork) -> EdgePos {
        EdgePos::new(self.edge, self.position.min(net.edge(self.edge).length))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceState {
    Free,
    Reserved(u32),
    Occupied(u32),
}

#[derive(Debug, Clone)]
pub struct Occupancy {
    spaces: Vec<SpaceState>,
    capacity: usize,
    occupied: Vec<u32>,
    reserved: Vec<u32>,
}

impl Occupancy {
    pub fn new(net: &RoadNetwork) -> Self {
        let areas = net.areas().len();
        Self {
            spaces: vec![SpaceState::Free; net.total_spaces()],
            capacity: net.areas()[0].capacity,
            occupied: vec![0; areas],
            reserved: vec![0; areas],
        }
    }

    pub fn state(&self, s: SpaceId) -> SpaceState {
        self.spaces[s.index()]
    }

    pub fn area_of(&self, s: SpaceId) -> AreaId {
        AreaId((s.index() / self.capacity) as u32)
    }

    pub fn occupied(&self, area: AreaId) -> usize {
        self.occupied[area.index()] as usize
    }

    pub fn reserved(&self, area: AreaId) -> usize {
        self.reserved[area.index()] as usize
    }

    /// Spaces a kerb-side observer sees as empty (reserved ones included).
    pub fn non_occupied(&self, area: AreaId) -> usize {
        self.capacity - self.occupied(area)
    }

    pub fn free(&self, area: AreaId) -> usize {
        self.capacity - self.occupied(area) - self.reserved(area)
    }

    fn spaces_of(&self, area: AreaId) -> std::ops::Range<usize> {
        let first = area.index() * self.capacity;
        first..first + self.capacity
    }

    pub fn set(&mut self, s: SpaceId, new: SpaceState) {
        let area = self.area_of(s).index();
        match self.spaces[s.index()] {
            SpaceState::Free => {}
            SpaceState::Reserved(_) => self.reserved[area] -= 1,
            SpaceState::Occupied(_) => self.occupied[area] -= 1,
        }
        match new {
            SpaceState::Free => {}
            SpaceState::Reserved(_) => self.reserved[area] += 1,
            SpaceState::Occupied(_) => self.occupied[area] += 1,
        }
        self.spaces[s.index()] = new;
    }

    pub fn first_free(&self, area: AreaId) -> Option<SpaceId> {
        self.spaces_of(area)
            .find(|&i| self.spaces[i] == SpaceState::Free)
            .map(|i| SpaceId(i as u32))
    }

    pub fn free_spaces(&self) -> impl Iterator<Item = SpaceId> + '_ {
        self.spaces
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == SpaceState::Free)
            .map(|(i, _)| SpaceId(i as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParkOutcome {
    /// Parked; `displaced` is the driver whose reservation sat on that space.
    Parked {
        space: SpaceId,
        displaced: Option<u32>,
    },
    Full,
}

/// Try to occupy a space in `area`. A vehicle holding a reservation takes
/// exactly that space unless somebody already stands on it. Everybody else
/// takes the lowest-index space nobody stands on, reserved or not.
pub fn attempt_park(
    occ: &mut Occupancy,
    area: &ParkingArea,
    driver: u32,
    reservation: Option<SpaceId>,
) -> ParkOutcome {
    if let Some(s) = reservation {
        debug_assert_eq!(occ.area_of(s), area.id);
        return match occ.state(s) {
            SpaceState::Occupied(_) => ParkOutcome::Full,
            _ => {
                occ.set(s, SpaceState::Occupied(driver));
                ParkOutcome::Parked {
                    space: s,
                    displaced: None,
                }
            }
        };
    }
    let Some(i) = occ
        .spaces_of(area.id)
        .find(|&i| !matches!(occ.spaces[i], SpaceState::Occupied(_)))
    else {
        return ParkOutcome::Full;
    };
    let space = SpaceId(i as u32);
    let displaced = match occ.state(space) {
        SpaceState::Reserved(d) => Some(d),
        _ => None,
    };
    occ.set(space, SpaceState::Occupied(driver));
    ParkOutcome::Parked { space, displaced }
}

/// Areas whose position lies within `radius` metres of each junction.
pub fn cruise_candidates(net: &RoadNetwork, radius: f64) -> Vec<Vec<AreaId>> {
    net.junctions()
        .iter()
        .map(|j| {
            net.areas()
                .iter()
                .filter(|a| net.junction_to_pos(j.id, net.area_position(a.id)) <= radius + POS_TOL)
                .map(|a| a.id)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CruiseChoice {
    Area(AreaId),
    /// Nothing free nearby: drive down this edge and look again.
    Wander(EdgeId),
}

/// Uniform choice among nearby areas with at least one space nobody stands
/// on; otherwise a uniformly random outgoing edge.
pub fn reroute_cruising<R: Rng>(
    net: &RoadNetwork,
    occ: &Occupancy,
    junction: JunctionId,
    candidates: &[AreaId],
    rng: &mut R,
) -> CruiseChoice {
    let open: Vec<AreaId> = candidates
        .iter()
        .copied()
        .filter(|&a| occ.non_occupied(a) > 0)
        .collect();
    if let Some(&a) = open.choose(rng) {
        CruiseChoice::Area(a)
    } else {
        let out = net.out_edges(junction);
        CruiseChoice::Wander(out[rng.gen_range(0..out.len())])
    }
}

/// First area in the ranked list with a visibly empty space; the head of the
/// list when every area is full.
pub fn information_destination(ranked: &[AreaId], occ: &Occupancy) -> AreaId {
    ranked
        .iter()
        .copied()
        .find(|&a| occ.non_occupied(a) > 0)
        .unwrap_or(ranked[0])
}

/// Steps needed to reach `target` along `route` from `start`, with each edge
/// entered at offset 0 and no queueing.
pub fn free_flow_steps(net: &RoadNetwork, route: &[EdgeId], start: f64, target: f64) -> u32 {
    let mut steps = 0u32;
    for (i, &e) in route.iter().enumerate() {
        let from = if i == 0 { start } else { 0.0 };
        let to = if i + 1 == route.len() {
            target
        } else {
            net.edge(e).length
        };
        let speed = net.edge(e).free_flow_speed;
        steps += ((to - from).max(0.0) / speed - POS_TOL).ceil().max(0.0) as u32;
    }
    steps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Spawn,
    ReservationWon,
    ReservationLost,
    Park,
    Unpark,
    Exit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::ReservationWon => "reservation_won",
            EventKind::ReservationLost => "reservation_lost",
            EventKind::Park => "park",
            EventKind::Unpark => "unpark",
            EventKind::Exit => "exit",
        }
    }
}

/// One entry of the per-vehicle event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: u32,
    pub kind: EventKind,
    pub driver: u32,
    pub participant: bool,
    pub edge: EdgeId,
    pub area: Option<AreaId>,
    /// Paid price on `Park`, winning bid on `ReservationWon`.
    pub price: Option<f64>,
    /// Parking distance on `Park`, route length on `Exit`.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<SimEvent>,
    pub parking: Vec<ParkingEvent>,
    pub trips: Vec<TripRecord>,
    pub detectors: DetectorSet,
    pub occupancy_sums: Vec<f64>,
    pub occupancy_samples: u32,
    pub reservations_granted: usize,
    pub auction_batches: usize,
    pub steady_start_s: u32,
    pub steady_end_s: u32,
    pub end_time: u32,
    pub summary: RunSummary,
}

/// Per-step invariant violations, collected when checking is enabled.
#[derive(Debug, Clone, Default)]
pub struct InvariantLog {
    pub violations: Vec<String>,
}

pub struct World<'a> {
    net: &'a RoadNetwork,
    cfg: SimConfig,
    drivers: Vec<Driver>,
    spawn_order: Vec<u32>,
    next_spawn: usize,
    vehicles: Vec<Option<VehicleState>>,
    active: Vec<u32>,
    queues: Vec<VecDeque<u32>>,
    credit: Vec<f64>,
    parked: BinaryHeap<Reverse<(u32, u32)>>,
    occupancy: Occupancy,
    prefs: PreferenceCache,
    candidates: Vec<Vec<AreaId>>,
    rng: ChaCha8Rng,
    clock: u32,
    pending_batch: Vec<u32>,
    detectors: DetectorSet,
    events: Vec<SimEvent>,
    parking: Vec<ParkingEvent>,
    trips: Vec<TripRecord>,
    occupancy_sums: Vec<f64>,
    occupancy_samples: u32,
    reservations_granted: usize,
    auction_batches: usize,
    steady_end: u32,
    deadline: u32,
    done: usize,
}

impl<'a> World<'a> {
    pub fn new(net: &'a RoadNetwork, drivers: Vec<Driver>, cfg: SimConfig) -> Result<Self> {
        cfg.traffic.validate()?;
        cfg.auction.validate()?;
        cfg.metrics.validate()?;
        for (i, d) in drivers.iter().enumerate() {
            if d.id as usize != i {
                return Err(Error::Config(format!(
                    "driver ids must be 0..n in order, found {} at {i}",
                    d.id
                )));
            }
            if d.origin.index() >= net.edges().len() || d.destination.index() >= net.edges().len()
            {
                return Err(Error::Config(format!("driver {i} references a missing edge")));
            }
        }
        let mut spawn_order: Vec<u32> = (0..drivers.len() as u32).collect();
        spawn_order.sort_by_key(|&i| (drivers[i as usize].depart(), i));
        let last_depart = drivers.iter().map(Driver::depart).max().unwrap_or(0);
        let max_stay = drivers.iter().map(|d| d.stay).max().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_CRUISE);
        let edges = net.edges().len();
        Ok(Self {
            net,
            candidates: cruise_candidates(net, cfg.traffic.cruise_radius_blocks * net.spacing()),
            vehicles: vec![None; drivers.len()],
            detectors: DetectorSet::new(edges, cfg.metrics.detector_window_s),
            occupancy_sums: vec![0.0; net.areas().len()],
            steady_end: last_depart,
            deadline: last_depart
                .saturating_add(max_stay)
                .saturating_add(cfg.traffic.drain_guard_s),
            cfg,
            drivers,
            spawn_order,
            next_spawn: 0,
            active: Vec::new(),
            queues: vec![VecDeque::new(); edges],
            credit: vec![1.0; edges],
            parked: BinaryHeap::new(),
            occupancy: Occupancy::new(net),
            prefs: PreferenceCache::default(),
            rng,
            clock: 0,
            pending_batch: Vec::new(),
            events: Vec::new(),
            parking: Vec::new(),
            trips: Vec::new(),
            occupancy_samples: 0,
            reservations_granted: 0,
            auction_batches: 0,
            done: 0,
        })
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn occupancy(&self) -> &Occupancy {
        &self.occupancy
    }

    pub fn vehicle(&self, driver: u32) -> Option<&VehicleState> {
        self.vehicles[driver as usize].as_ref()
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleState> {
        self.vehicles.iter().flatten()
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn spawned(&self) -> usize {
        self.next_spawn
    }

    pub fn done(&self) -> usize {
        self.done
    }

    pub fn active(&self) -> usize {
        self.vehicles().filter(|v| v.phase != Phase::Done).count()
    }

    pub fn finished(&self) -> bool {
        self.next_spawn == self.drivers.len() && self.done == self.drivers.len()
    }

    /// Advance the world by one second.
    pub fn step(&mut self) -> Result<()> {
        let t = self.clock;
        let period = self.cfg.traffic.auction_period_s;
        if self.cfg.behavior == Behavior::Auction && t > 0 && t % period == 0 {
            self.auction_tick(t / period)?;
        }
        self.release_parked(t)?;
        self.spawn_departures(t)?;
        self.advance_vehicles(t)?;
        self.discharge_queues(t)?;
        if t >= self.cfg.metrics.steady_state_start_s && t < self.steady_end {
            for (sum, &occ) in self.occupancy_sums.iter_mut().zip(&self.occupancy.occupied) {
                *sum += occ as f64;
            }
            self.occupancy_samples += 1;
        }
        self.clock += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<RunOutput> {
        while !self.finished() {
            if self.clock > self.deadline {
                return Err(Error::Stalled {
                    time: self.clock,
                    active: self.drivers.len() - self.done,
                });
            }
            self.step()?;
        }
        self.finish()
    }

    /// Run to completion, checking the occupancy and conservation invariants
    /// after every step.
    pub fn run_checked(mut self) -> Result<(RunOutput, InvariantLog)> {
        let mut log = InvariantLog::default();
        while !self.finished() {
            if self.clock > self.deadline {
                return Err(Error::Stalled {
                    time: self.clock,
                    active: self.drivers.len() - self.done,
                });
            }
            self.step()?;
            self.check_invariants(&mut log);
        }
        Ok((self.finish()?, log))
    }

    fn finish(self) -> Result<RunOutput> {
        let run_end = self.clock;
        let summary = summarize(&RunRecords {
            parking: &self.parking,
            trips: &self.trips,
            detectors: &self.detectors,
            occupancy_sums: &self.occupancy_sums,
            occupancy_samples: self.occupancy_samples,
            capacity: self.occupancy.capacity,
            reservations_granted: self.reservations_granted,
            steady_start_s: self.cfg.metrics.steady_state_start_s,
            steady_end_s: self.steady_end,
            run_end_s: run_end,
        })?;
        Ok(RunOutput {
            events: self.events,
            parking: self.parking,
            trips: self.trips,
            detectors: self.detectors,
            occupancy_sums: self.occupancy_sums,
            occupancy_samples: self.occupancy_samples,
            reservations_granted: self.reservations_granted,
            auction_batches: self.auction_batches,
            steady_start_s: self.cfg.metrics.steady_state_start_s,
            steady_end_s: self.steady_end,
            end_time: run_end,
            summary,
        })
    }

    pub fn check_invariants(&self, log: &mut InvariantLog) {
        let t = self.clock;
        let live = self.vehicles().filter(|v| v.phase != Phase::Done).count();
        if self.next_spawn != self.done + live {
            log.violations.push(format!(
                "t={t}: spawned {} != done {} + active {live}",
                self.next_spawn, self.done
            ));
        }
        for a in self.net.areas() {
            if self.occupancy.occupied(a.id) + self.occupancy.reserved(a.id) > a.capacity {
                log.violations.push(format!("t={t}: area {} over capacity", a.id.0));
            }
        }
        for (i, s) in self.occupancy.spaces.iter().enumerate() {
            match *s {
                SpaceState::Reserved(d) => {
                    let ok = self.vehicles[d as usize].as_ref().is_some_and(|v| {
                        v.reservation == Some(SpaceId(i as u32))
                            && matches!(v.phase, Phase::EnRoute | Phase::Cruising)
                    });
                    if !ok {
                        log.violations
                            .push(format!("t={t}: space {i} reserved by stale driver {d}"));
                    }
                }
                SpaceState::Occupied(d) => {
                    let ok = self.vehicles[d as usize].as_ref().is_some_and(|v| {
                        v.phase == Phase::Parked && v.occupied_space == Some(SpaceId(i as u32))
                    });
                    if !ok {
                        log.violations
                            .push(format!("t={t}: space {i} occupied by absent driver {d}"));
                    }
                }
                SpaceState::Free => {}
            }
        }
        for v in self.vehicles() {
            if v.reservation.is_some() && !v.participant {
                log.violations
                    .push(format!("t={t}: non-participant {} holds a reservation", v.driver));
            }
        }
    }

    fn push_event(
        &mut self,
        kind: EventKind,
        driver: u32,
        edge: EdgeId,
        area: Option<AreaId>,
        price: Option<f64>,
        distance: Option<f64>,
    ) {
        let participant = self.drivers[driver as usize].participant;
        self.events.push(SimEvent {
            time: self.clock,
            kind,
            driver,
            participant,
            edge,
            area,
            price,
            distance,
        });
    }

    fn veh_ref(&self, id: u32) -> &VehicleState {
        self.vehicles[id as usize].as_ref().expect("vehicle has spawned")
    }

    fn veh(&mut self, id: u32) -> &mut VehicleState {
        self.vehicles[id as usize]
            .as_mut()
            .expect("vehicle has spawned")
    }

    fn set_route(&mut self, id: u32, target: EdgePos) -> Result<()> {
        let net = self.net;
        let v = self.vehicles[id as usize].as_mut().expect("spawned");
        v.route = net.route(v.pos(net), target)?;
        v.cursor = 0;
        Ok(())
    }

    fn release_parked(&mut self, t: u32) -> Result<()> {
        while let Some(&Reverse((leave, id))) = self.parked.peek() {
            if leave > t {
                break;
            }
            self.parked.pop();
            let net = self.net;
            let origin = self.drivers[id as usize].origin;
            let v = self.veh(id);
            let space = v.occupied_space.expect("parked vehicle holds a space");
            let area = v.target_area.expect("parked vehicle has an area");
            v.phase = Phase::Returning;
            v.position = net.area(area).position;
            v.entry_position = v.position;
            v.target_area = None;
            let edge = v.edge;
            self.occupancy.set(space, SpaceState::Free);
            self.set_route(
                id,
                EdgePos::new(origin, net.edge(origin).length),
            )?;
            self.active.push(id);
            self.push_event(EventKind::Unpark, id, edge, Some(area), None, None);
        }
        Ok(())
    }

    fn spawn_departures(&mut self, t: u32) -> Result<()> {
        while let Some(&id) = self.spawn_order.get(self.next_spawn) {
            let driver = &self.drivers[id as usize];
            if driver.depart() > t {
                break;
            }
            self.next_spawn += 1;
            let net = self.net;
            let participant = driver.participant;
            let origin = driver.origin;
            let ranked = self.prefs.ranked(net, driver.destination, driver.beta);
            let preferred = ranked[0];
            let target = if participant && self.cfg.behavior == Behavior::Information {
                information_destination(ranked, &self.occupancy)
            } else {
                preferred
            };
            self.vehicles[id as usize] = Some(VehicleState {
                driver: id,
                participant,
                phase: Phase::EnRoute,
                edge: origin,
                position: 0.0,
                entry_position: 0.0,
                route: Vec::new(),
                cursor: 0,
                target_area: Some(target),
                preferred_area: preferred,
                reservation: None,
                reservation_price: None,
                fallback: false,
                occupied_space: None,
                paid_price: None,
                odometer: 0.0,
                spawn_time: t,
                park_time: None,
                exit_time: None,
                eta_steps: 0,
                queued: false,
            });
            self.set_route(id, net.area_position(target))?;
            let v = self.veh(id);
            v.eta_steps = free_flow_steps(net, &v.route, 0.0, net.area(target).position);
            self.active.push(id);
            if participant && self.cfg.behavior == Behavior::Auction {
                self.pending_batch.push(id);
            }
            self.push_event(EventKind::Spawn, id, origin, Some(target), None, None);
        }
        Ok(())
    }

    fn advance_vehicles(&mut self, t: u32) -> Result<()> {
        let net = self.net;
        let active = std::mem::take(&mut self.active);
        for &id in &active {
            let v = self.veh(id);
            if v.queued || v.phase == Phase::Parked || v.phase == Phase::Done {
                continue;
            }
            let edge = net.edge(v.edge);
            v.position += edge.free_flow_speed;
            let arrival = match v.target_area {
                Some(a) if v.at_route_end() && a.edge() == v.edge => {
                    let pos = net.area(a).position;
                    (v.position + POS_TOL >= pos).then_some(a)
                }
                _ => None,
            };
            if let Some(area) = arrival {
                v.position = net.area(area).position;
                self.arrive(id, area, t)?;
            } else if v.position + POS_TOL >= edge.length {
                v.position = edge.length;
                v.queued = true;
                self.queues[edge.id.index()].push_back(id);
            }
        }
        self.active = active;
        self.active.retain(|&id| {
            let v = self.vehicles[id as usize].as_ref().expect("spawned");
            !matches!(v.phase, Phase::Parked | Phase::Done)
        });
        Ok(())
    }

    fn arrive(&mut self, id: u32, area: AreaId, t: u32) -> Result<()> {
        let net = self.net;
        let v = self.vehicles[id as usize].as_ref().expect("spawned");
        let reservation = v.reservation;
        let outcome = attempt_park(&mut self.occupancy, net.area(area), id, reservation);
        match outcome {
            ParkOutcome::Parked { space, displaced } => {
                if let Some(other) = displaced {
                    self.reservation_displaced(other, area);
                }
                self.park_and_pay(id, area, space, t);
            }
            ParkOutcome::Full if reservation.is_some() => {
                // The reserved space is taken: forget the reservation and
                // look for kerb space like everybody else, starting here.
                let edge = {
                    let v = self.veh(id);
                    v.reservation = None;
                    v.reservation_price = None;
                    v.fallback = true;
                    v.edge
                };
                self.push_event(EventKind::ReservationLost, id, edge, Some(area), None, None);
                self.arrive(id, area, t)?;
            }
            ParkOutcome::Full => self.cruise(id)?,
        }
        Ok(())
    }

    /// A non-participant stood on a reserved space.
    fn reservation_displaced(&mut self, driver: u32, area: AreaId) {
        if self.cfg.traffic.reservation_binding == ReservationBinding::Area {
            if let Some(s) = self.occupancy.first_free(area) {
                self.occupancy.set(s, SpaceState::Reserved(driver));
                self.veh(driver).reservation = Some(s);
            }
        }
        // Under space binding, or with the area full, the owner discovers the
        // loss on arrival.
    }

    fn park_and_pay(&mut self, id: u32, area: AreaId, space: SpaceId, t: u32) {
        let net = self.net;
        let stay = self.drivers[id as usize].stay;
        let v = self.veh(id);
        let own_reservation = v.reservation == Some(space);
        let price = if own_reservation {
            v.reservation_price.expect("reservation has a price")
        } else {
            net.area(area).base_price
        };
        v.odometer += net.area(area).position - v.entry_position;
        v.entry_position = net.area(area).position;
        v.phase = Phase::Parked;
        v.occupied_space = Some(space);
        v.paid_price = Some(price);
        v.park_time = Some(t);
        v.reservation = None;
        v.target_area = Some(area);
        let preferred = v.preferred_area;
        let participant = v.participant;
        let edge = v.edge;
        let distance = parking_distance(net, area, preferred);
        self.parking.push(ParkingEvent {
            driver: id,
            participant,
            area,
            preferred,
            price,
            distance,
            time: t,
            reserved: own_reservation,
        });
        self.parked.push(Reverse((t + stay, id)));
        self.push_event(EventKind::Park, id, edge, Some(area), Some(price), Some(distance));
    }

    fn cruise(&mut self, id: u32) -> Result<()> {
        let net = self.net;
        let v = self.vehicles[id as usize].as_ref().expect("spawned");
        let junction = net.edge(v.edge).to;
        let choice = reroute_cruising(
            net,
            &self.occupancy,
            junction,
            &self.candidates[junction.index()],
            &mut self.rng,
        );
        let area = match choice {
            CruiseChoice::Area(a) => a,
            CruiseChoice::Wander(e) => e.area(),
        };
        let v = self.veh(id);
        v.phase = Phase::Cruising;
        v.target_area = Some(area);
        match choice {
            CruiseChoice::Area(_) => self.set_route(id, net.area_position(area))?,
            CruiseChoice::Wander(e) => {
                let v = self.veh(id);
                v.route = vec![v.edge, e];
                v.cursor = 0;
            }
        }
        Ok(())
    }

    fn discharge_queues(&mut self, t: u32) -> Result<()> {
        let cap = self.cfg.traffic.exit_capacity_vps;
        let burst = cap.max(1.0);
        for e in 0..self.queues.len() {
            self.credit[e] = (self.credit[e] + cap).min(burst);
            while self.credit[e] >= 1.0 - POS_TOL {
                let Some(id) = self.queues[e].pop_front() else {
                    break;
                };
                self.credit[e] -= 1.0;
                self.exit_edge(id, EdgeId(e as u32), t)?;
            }
        }
        Ok(())
    }

    fn exit_edge(&mut self, id: u32, edge: EdgeId, t: u32) -> Result<()> {
        let net = self.net;
        self.detectors.fire(edge, t);
        let v = self.veh(id);
        v.queued = false;
        v.odometer += net.edge(edge).length - v.entry_position;
        if v.at_route_end() {
            debug_assert_eq!(v.phase, Phase::Returning);
            v.phase = Phase::Done;
            v.exit_time = Some(t);
            let odometer = v.odometer;
            let participant = v.participant;
            let first_target = v.eta_steps;
            self.done += 1;
            self.trips.push(TripRecord {
                driver: id,
                participant,
                route_length: odometer,
                short_route: first_target < self.cfg.traffic.auction_period_s,
            });
            self.push_event(EventKind::Exit, id, edge, None, None, Some(odometer));
            return Ok(());
        }
        v.cursor += 1;
        v.edge = v.route[v.cursor];
        v.position = 0.0;
        v.entry_position = 0.0;
        Ok(())
    }

    fn auction_tick(&mut self, k: u32) -> Result<()> {
        let agents: Vec<u32> = std::mem::take(&mut self.pending_batch)
            .into_iter()
            .filter(|&id| {
                let v = self.vehicles[id as usize].as_ref().expect("spawned");
                matches!(v.phase, Phase::EnRoute | Phase::Cruising)
                    && v.reservation.is_none()
                    && !v.fallback
            })
            .collect();
        if agents.is_empty() {
            return Ok(());
        }
        let net = self.net;
        let auctions: Vec<Auction> = self
            .occupancy
            .free_spaces()
            .enumerate()
            .map(|(i, s)| {
                let area = self.occupancy.area_of(s);
                Auction::new(i, s.0, area.0, net.area(area).base_price)
            })
            .collect();
        if auctions.is_empty() {
            return Ok(());
        }
        let views: Vec<BidderView> = agents
            .iter()
            .map(|&id| {
                let d = &self.drivers[id as usize];
                let to = match self.cfg.traffic.bid_distance {
                    BidDistance::Destination => d.destination,
                    BidDistance::PreferredLot => self.veh_ref(id).preferred_area.edge(),
                };
                let by_area: Vec<f64> =
                    net.areas().iter().map(|a| net.mid_distance(a.edge, to)).collect();
                let distances = auctions.iter().map(|a| by_area[a.area as usize]).collect();
                BidderView::new(id, d.beta, d.valuation, distances)
            })
            .collect();
        let seed = batch_seed(self.cfg.seed, k);
        let result = run_batch(auctions, &views, &self.cfg.auction, seed)?;
        self.auction_batches += 1;
        for (&id, award) in &result.assignments {
            let space = SpaceId(award.space);
            let area = AreaId(award.area);
            self.occupancy.set(space, SpaceState::Reserved(id));
            let v = self.veh(id);
            v.reservation = Some(space);
            v.reservation_price = Some(award.price);
            v.target_area = Some(area);
            v.phase = Phase::EnRoute;
            let edge = v.edge;
            self.set_route(id, net.area_position(area))?;
            self.reservations_granted += 1;
            self.push_event(
                EventKind::ReservationWon,
                id,
                edge,
                Some(area),
                Some(award.price),
                None,
            );
        }
        Ok(())
    }
}

/// Agent-order seed of the batch closing at tick `k`.
pub fn batch_seed(seed: u64, k: u32) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulate a population to completion.
pub fn simulate(net: &RoadNetwork, drivers: Vec<Driver>, cfg: SimConfig) -> Result<RunOutput> {
    World::new(net, drivers, cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::GridSpec;

    fn grid(rows: usize, cols: usize, capacity: usize) -> RoadNetwork {
        RoadNetwork::build_grid(&GridSpec {
            rows,
            cols,
            capacity,
            ..GridSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn occupancy_counters_follow_transitions() {
        let net = grid(2, 2, 3);
        let mut occ = Occupancy::new(&net);
        let a = AreaId(1);
        let s = net.area(a).first_space;
        assert_eq!(occ.free(a), 3);
        occ.set(s, SpaceState::Reserved(4));
        assert_eq!((occ.free(a), occ.reserved(a), occ.non_occupied(a)), (2, 1, 3));
        occ.set(s, SpaceState::Occupied(5));
        assert_eq!((occ.free(a), occ.reserved(a), occ.occupied(a)), (2, 0, 1));
        occ.set(s, SpaceState::Free);
        assert_eq!(occ.free(a), 3);
        assert_eq!(occ.area_of(SpaceId(s.0 + 2)), a);
    }

    #[test]
    fn baseline_takes_lowest_free_space() {
        let net = grid(2, 2, 3);
        let mut occ = Occupancy::new(&net);
        let area = net.area(AreaId(2));
        let first = area.first_space;
        assert_eq!(
            attempt_park(&mut occ, area, 0, None),
            ParkOutcome::Parked { space: first, displaced: None }
        );
        assert_eq!(
            attempt_park(&mut occ, area, 1, None),
            ParkOutcome::Parked { space: SpaceId(first.0 + 1), displaced: None }
        );
    }

    #[test]
    fn reserved_space_is_invisible_to_others() {
        let net = grid(2, 2, 2);
        let mut occ = Occupancy::new(&net);
        let area = net.area(AreaId(0));
        let s0 = area.first_space;
        occ.set(s0, SpaceState::Reserved(7));
        assert_eq!(
            attempt_park(&mut occ, area, 1, None),
            ParkOutcome::Parked { space: s0, displaced: Some(7) }
        );
        // The owner now finds its space taken.
        assert_eq!(attempt_park(&mut occ, area, 7, Some(s0)), ParkOutcome::Full);
    }

    #[test]
    fn reservation_holder_takes_its_own_space() {
        let net = grid(2, 2, 2);
        let mut occ = Occupancy::new(&net);
        let area = net.area(AreaId(0));
        let s1 = SpaceId(area.first_space.0 + 1);
        occ.set(s1, SpaceState::Reserved(3));
        assert_eq!(
            attempt_park(&mut occ, area, 3, Some(s1)),
            ParkOutcome::Parked { space: s1, displaced: None }
        );
        assert_eq!(occ.state(s1), SpaceState::Occupied(3));
        assert_eq!(occ.state(area.first_space), SpaceState::Free);
    }

    #[test]
    fn full_area() {
        let net = grid(2, 2, 1);
        let mut occ = Occupancy::new(&net);
        let area = net.area(AreaId(3));
        occ.set(area.first_space, SpaceState::Occupied(0));
        assert_eq!(attempt_park(&mut occ, area, 1, None), ParkOutcome::Full);
    }

    #[test]
    fn single_open_candidate_is_certain() {
        let net = grid(3, 3, 1);
        let mut occ = Occupancy::new(&net);
        let cands = [AreaId(0), AreaId(1)];
        occ.set(net.area(AreaId(0)).first_space, SpaceState::Occupied(9));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let c = reroute_cruising(&net, &occ, JunctionId(0), &cands, &mut rng);
            assert_eq!(c, CruiseChoice::Area(AreaId(1)));
        }
        occ.set(net.area(AreaId(1)).first_space, SpaceState::Occupied(8));
        let c = reroute_cruising(&net, &occ, JunctionId(0), &cands, &mut rng);
        let CruiseChoice::Wander(e) = c else {
            panic!("expected a random walk, got {c:?}")
        };
        assert_eq!(net.edge(e).from, JunctionId(0));
    }

    #[test]
    fn information_skips_full_lots() {
        let net = grid(2, 2, 1);
        let mut occ = Occupancy::new(&net);
        let ranked = [AreaId(2), AreaId(5), AreaId(1)];
        assert_eq!(information_destination(&ranked, &occ), AreaId(2));
        occ.set(net.area(AreaId(2)).first_space, SpaceState::Occupied(0));
        assert_eq!(information_destination(&ranked, &occ), AreaId(5));
        for a in ranked {
            occ.set(net.area(a).first_space, SpaceState::Occupied(0));
        }
        assert_eq!(information_destination(&ranked, &occ), AreaId(2));
    }

    #[test]
    fn free_flow_step_count() {
        let net = grid(2, 2, 1);
        let e = EdgeId(0);
        // 50 m at 13.9 m/s
        assert_eq!(free_flow_steps(&net, &[e], 0.0, 50.0), 4);
        assert_eq!(free_flow_steps(&net, &[e], 0.0, 100.0), 8);
        let next = net.out_edges(net.edge(e).to)[0];
        assert_eq!(free_flow_steps(&net, &[e, next], 0.0, 50.0), 12);
    }

    #[test]
    fn batch_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|k| batch_seed(42, k)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(batch_seed(1, 5), batch_seed(2, 5));
        assert_eq!(batch_seed(9, 9), batch_seed(9, 9));
    }

    #[test]
    fn behavior_names_round_trip() {
        for b in [Behavior::Baseline, Behavior::Information, Behavior::Auction] {
            assert_eq!(b.to_string().parse::<Behavior>().unwrap(), b);
        }
        assert!("valet".parse::<Behavior>().is_err());
    }

    #[test]
    fn empty_world_only_ticks() {
        let net = grid(2, 2, 1);
        let mut w = World::new(&net, Vec::new(), SimConfig::default()).unwrap();
        w.step().unwrap();
        w.step().unwrap();
        assert_eq!(w.clock(), 2);
        assert!(w.events().is_empty());
        assert!(w.finished());
    }
}
