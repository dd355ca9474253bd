//! Measured quantities: parking records, trip lengths, detector flows and
//! the per-run summary.

use serde::{Deserialize, Serialize};

use crate::network::{AreaId, EdgeId, RoadNetwork};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub detector_window_s: u32,
    /// Windows starting before this are burn-in.
    pub steady_state_start_s: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            detector_window_s: 900,
            steady_state_start_s: 1800,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.detector_window_s == 0 {
            return Err(Error::Config("metrics.detector_window_s must be positive".into()));
        }
        Ok(())
    }
}

/// Driving distance from the occupied area to the driver's preferred one.
pub fn parking_distance(net: &RoadNetwork, occupied: AreaId, preferred: AreaId) -> f64 {
    net.mid_distance(occupied.edge(), preferred.edge())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkingEvent {
    pub driver: u32,
    pub participant: bool,
    pub area: AreaId,
    pub preferred: AreaId,
    pub price: f64,
    pub distance: f64,
    pub time: u32,
    /// The vehicle occupied the space it won at auction.
    pub reserved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub driver: u32,
    pub participant: bool,
    pub route_length: f64,
    pub short_route: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorRecord {
    pub edge: EdgeId,
    pub window: u32,
    pub count: u32,
    pub flow_veh_h: f64,
}

/// One counting detector per edge, fired when a vehicle leaves the edge.
#[derive(Debug, Clone)]
pub struct DetectorSet {
    window_s: u32,
    counts: Vec<Vec<u32>>,
}

impl DetectorSet {
    pub fn new(edges: usize, window_s: u32) -> Self {
        Self {
            window_s,
            counts: vec![Vec::new(); edges],
        }
    }

    pub fn window_s(&self) -> u32 {
        self.window_s
    }

    pub fn fire(&mut self, edge: EdgeId, t: u32) {
        let w = (t / self.window_s) as usize;
        let c = &mut self.counts[edge.index()];
        if c.len() <= w {
            c.resize(w + 1, 0);
        }
        c[w] += 1;
    }

    /// Number of windows touched by a run lasting `end_s` seconds.
    pub fn windows_until(&self, end_s: u32) -> u32 {
        end_s.div_ceil(self.window_s).max(1)
    }

    fn flow(&self, count: u32) -> f64 {
        count as f64 * 3600.0 / self.window_s as f64
    }

    /// Every (edge, window) cell up to `end_s`, zeros included.
    pub fn records(&self, end_s: u32) -> Vec<DetectorRecord> {
        let n = self.windows_until(end_s);
        let mut out = Vec::with_capacity(self.counts.len() * n as usize);
        for (e, c) in self.counts.iter().enumerate() {
            for w in 0..n {
                let count = c.get(w as usize).copied().unwrap_or(0);
                out.push(DetectorRecord {
                    edge: EdgeId(e as u32),
                    window: w,
                    count,
                    flow_veh_h: self.flow(count),
                });
            }
        }
        out
    }

    /// Windows lying entirely inside `[start_s, end_s]`. Falls back to every
    /// window of the run when the steady section holds no full window.
    pub fn steady_windows(&self, start_s: u32, end_s: u32, run_end_s: u32) -> Vec<u32> {
        let w = self.window_s;
        let steady: Vec<u32> = (0..self.windows_until(run_end_s))
            .filter(|&i| i * w >= start_s && (i + 1) * w <= end_s)
            .collect();
        if steady.is_empty() {
            (0..self.windows_until(run_end_s)).collect()
        } else {
            steady
        }
    }

    /// Flow samples (veh/h), one per edge and window.
    pub fn flow_samples(&self, windows: &[u32]) -> Vec<f64> {
        self.counts
            .iter()
            .flat_map(|c| {
                windows
                    .iter()
                    .map(move |&w| self.flow(c.get(w as usize).copied().unwrap_or(0)))
            })
            .collect()
    }
}

/// Nearest-rank percentile of an ascending slice, `q` in `(0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

impl GroupStats {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                mean: f64::NAN,
                p10: f64::NAN,
                p90: f64::NAN,
            };
        }
        values.sort_by(f64::total_cmp);
        Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p10: percentile(&values, 10.0),
            p90: percentile(&values, 90.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Split {
    pub overall: GroupStats,
    pub participants: GroupStats,
    pub non_participants: GroupStats,
}

impl Split {
    fn from_pairs(pairs: impl Iterator<Item = (bool, f64)>) -> Self {
        let (mut all, mut yes, mut no) = (Vec::new(), Vec::new(), Vec::new());
        for (participant, v) in pairs {
            all.push(v);
            if participant {
                yes.push(v);
            } else {
                no.push(v);
            }
        }
        Self {
            overall: GroupStats::from_values(all),
            participants: GroupStats::from_values(yes),
            non_participants: GroupStats::from_values(no),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub edge: EdgeId,
    /// Time-averaged occupied fraction over the steady section.
    pub mean_occupancy: f64,
    /// Mean paid price of vehicles parked here; NaN when nobody parked.
    pub mean_price: f64,
    pub parks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub vehicles: usize,
    pub route_length: Split,
    pub price: Split,
    pub parking_distance: Split,
    pub flow: GroupStats,
    pub reservations_granted: usize,
    pub reservations_fulfilled: usize,
    pub short_route_fraction: f64,
    pub edges: Vec<EdgeStats>,
}

impl RunSummary {
    /// Fulfilled / granted reservations; NaN when none were granted.
    pub fn reservation_success(&self) -> f64 {
        if self.reservations_granted == 0 {
            f64::NAN
        } else {
            self.reservations_fulfilled as f64 / self.reservations_granted as f64
        }
    }
}

/// Inputs to [`summarize`] gathered by one run.
#[derive(Debug, Clone)]
pub struct RunRecords<'a> {
    pub parking: &'a [ParkingEvent],
    pub trips: &'a [TripRecord],
    pub detectors: &'a DetectorSet,
    /// Sum over sampled steps of occupied spaces, per area.
    pub occupancy_sums: &'a [f64],
    pub occupancy_samples: u32,
    pub capacity: usize,
    pub reservations_granted: usize,
    pub steady_start_s: u32,
    pub steady_end_s: u32,
    pub run_end_s: u32,
}

pub fn summarize(rec: &RunRecords<'_>) -> Result<RunSummary> {
    if rec.trips.is_empty() {
        return Err(Error::EmptyRun("no completed trips"));
    }
    if rec.parking.is_empty() {
        return Err(Error::EmptyRun("no parking events"));
    }

    let windows = rec
        .detectors
        .steady_windows(rec.steady_start_s, rec.steady_end_s, rec.run_end_s);
    let flow = GroupStats::from_values(rec.detectors.flow_samples(&windows));

    let n_edges = rec.occupancy_sums.len();
    let mut price_sum = vec![0.0; n_edges];
    let mut parks = vec![0usize; n_edges];
    for p in rec.parking {
        price_sum[p.area.index()] += p.price;
        parks[p.area.index()] += 1;
    }
    let edges = (0..n_edges)
        .map(|i| EdgeStats {
            edge: EdgeId(i as u32),
            mean_occupancy: if rec.occupancy_samples == 0 {
                0.0
            } else {
                rec.occupancy_sums[i] / (rec.occupancy_samples as f64 * rec.capacity as f64)
            },
            mean_price: if parks[i] == 0 {
                f64::NAN
            } else {
                price_sum[i] / parks[i] as f64
            },
            parks: parks[i],
        })
        .collect();

    Ok(RunSummary {
        vehicles: rec.trips.len(),
        route_length: Split::from_pairs(rec.trips.iter().map(|t| (t.participant, t.route_length))),
        price: Split::from_pairs(rec.parking.iter().map(|p| (p.participant, p.price))),
        parking_distance: Split::from_pairs(
            rec.parking.iter().map(|p| (p.participant, p.distance)),
        ),
        flow,
        reservations_granted: rec.reservations_granted,
        reservations_fulfilled: rec.parking.iter().filter(|p| p.reserved).count(),
        short_route_fraction: rec.trips.iter().filter(|t| t.short_route).count() as f64
            / rec.trips.len() as f64,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::GridSpec;

    #[test]
    fn flow_arithmetic() {
        let mut d = DetectorSet::new(1, 900);
        for t in 0..25 {
            d.fire(EdgeId(0), t * 10);
        }
        let r = d.records(900);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].count, 25);
        assert_eq!(r[0].flow_veh_h, 100.0);
        let empty = DetectorSet::new(1, 900);
        assert_eq!(empty.records(900)[0].flow_veh_h, 0.0);
    }

    #[test]
    fn steady_state_cut() {
        // Three-window trace with window 900 s: burn-in cut at 900 s and the
        // last departure at 2700 s keeps windows 1 and 2 only.
        let mut d = DetectorSet::new(2, 900);
        let hits = [(0u32, 0u32, 40u32), (0, 1, 10), (0, 2, 30), (1, 1, 20), (1, 3, 99)];
        for &(e, w, n) in &hits {
            for k in 0..n {
                d.fire(EdgeId(e), w * 900 + k);
            }
        }
        let windows = d.steady_windows(900, 2700, 3600);
        assert_eq!(windows, vec![1, 2]);
        let samples = d.flow_samples(&windows);
        // edge0: 10, 30; edge1: 20, 0 -> counts * 4 veh/h
        assert_eq!(samples, vec![40.0, 120.0, 80.0, 0.0]);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert_eq!(mean, 60.0);
    }

    #[test]
    fn flow_is_linear_in_counts() {
        let mut one = DetectorSet::new(3, 900);
        let mut two = DetectorSet::new(3, 900);
        for (e, t) in [(0, 5), (1, 950), (2, 1900), (1, 1000)] {
            one.fire(EdgeId(e), t);
            two.fire(EdgeId(e), t);
            two.fire(EdgeId(e), t);
        }
        let w = [0, 1, 2];
        let m1: f64 = one.flow_samples(&w).iter().sum();
        let m2: f64 = two.flow_samples(&w).iter().sum();
        assert_eq!(m2, 2.0 * m1);
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 10.0), 2.0);
        assert_eq!(percentile(&v, 90.0), 18.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&[7.0], 10.0), 7.0);
        let s = GroupStats::from_values(vec![3.0, 1.0, 2.0]);
        assert_eq!((s.count, s.mean, s.p10, s.p90), (3, 2.0, 1.0, 3.0));
    }

    #[test]
    fn parking_distance_examples() {
        let net = RoadNetwork::build_grid(&GridSpec::default()).unwrap();
        let a = AreaId(10);
        assert_eq!(parking_distance(&net, a, a), 0.0);
        let j = |r, c| net.junction_at(r, c).unwrap();
        let e1 = net.edge_between(j(1, 1), j(1, 2)).unwrap();
        let e2 = net.edge_between(j(1, 2), j(1, 3)).unwrap();
        assert_eq!(parking_distance(&net, e1.area(), e2.area()), 100.0);
    }

    fn ev(driver: u32, participant: bool, price: f64, distance: f64, reserved: bool) -> ParkingEvent {
        ParkingEvent {
            driver,
            participant,
            area: AreaId(driver % 2),
            preferred: AreaId(0),
            price,
            distance,
            time: 0,
            reserved,
        }
    }

    #[test]
    fn summary_of_synthetic_events() {
        // Hand-computed: prices {0.5, 0.5, 1.0, 0.6, 0.75}
        //   overall mean 3.35/5 = 0.67, p10 = 0.5, p90 = 1.0
        //   participants {0.6, 0.75} mean 0.675; non {0.5, 0.5, 1.0} mean 2/3
        let parking = vec![
            ev(0, false, 0.5, 0.0, false),
            ev(1, false, 0.5, 100.0, false),
            ev(2, false, 1.0, 200.0, false),
            ev(3, true, 0.6, 0.0, true),
            ev(4, true, 0.75, 300.0, false),
        ];
        let trips: Vec<TripRecord> = (0..5)
            .map(|i| TripRecord {
                driver: i,
                participant: i >= 3,
                route_length: 100.0 * (i + 1) as f64,
                short_route: i == 0,
            })
            .collect();
        let det = DetectorSet::new(2, 900);
        let rec = RunRecords {
            parking: &parking,
            trips: &trips,
            detectors: &det,
            occupancy_sums: &[30.0, 15.0],
            occupancy_samples: 2,
            capacity: 15,
            reservations_granted: 2,
            steady_start_s: 0,
            steady_end_s: 900,
            run_end_s: 900,
        };
        let s = summarize(&rec).unwrap();
        assert!((s.price.overall.mean - 0.67).abs() < 1e-12);
        assert_eq!((s.price.overall.p10, s.price.overall.p90), (0.5, 1.0));
        assert!((s.price.participants.mean - 0.675).abs() < 1e-12);
        assert!((s.price.non_participants.mean - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.parking_distance.overall.mean, 120.0);
        assert_eq!(s.route_length.overall.mean, 300.0);
        assert_eq!(s.route_length.participants.mean, 450.0);
        assert_eq!(
            s.price.participants.count + s.price.non_participants.count,
            s.price.overall.count
        );
        assert_eq!(s.reservation_success(), 0.5);
        assert_eq!(s.short_route_fraction, 0.2);
        assert_eq!(s.edges[0].mean_occupancy, 1.0);
        assert_eq!(s.edges[1].mean_occupancy, 0.5);
        // areas: drivers 0,2,4 -> area 0; 1,3 -> area 1
        assert!((s.edges[0].mean_price - 0.75).abs() < 1e-12);
        assert!((s.edges[1].mean_price - 0.55).abs() < 1e-12);
        assert_eq!(s.flow.mean, 0.0);
    }

    #[test]
    fn all_outer_baseline_price() {
        let parking: Vec<ParkingEvent> = (0..7).map(|i| ev(i, false, 0.5, 0.0, false)).collect();
        let trips: Vec<TripRecord> = (0..7)
            .map(|i| TripRecord {
                driver: i,
                participant: false,
                route_length: 500.0,
                short_route: false,
            })
            .collect();
        let det = DetectorSet::new(2, 900);
        let s = summarize(&RunRecords {
            parking: &parking,
            trips: &trips,
            detectors: &det,
            occupancy_sums: &[0.0, 0.0],
            occupancy_samples: 0,
            capacity: 15,
            reservations_granted: 0,
            steady_start_s: 0,
            steady_end_s: 900,
            run_end_s: 900,
        })
        .unwrap();
        assert_eq!(s.price.overall.mean, 0.5);
        assert!(s.reservation_success().is_nan());
        assert_eq!(s.price.participants.count, 0);
    }

    #[test]
    fn empty_run_is_an_error() {
        let det = DetectorSet::new(1, 900);
        let err = summarize(&RunRecords {
            parking: &[],
            trips: &[],
            detectors: &det,
            occupancy_sums: &[0.0],
            occupancy_samples: 0,
            capacity: 15,
            reservations_granted: 0,
            steady_start_s: 0,
            steady_end_s: 0,
            run_end_s: 0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::EmptyRun(_)));
    }
}
