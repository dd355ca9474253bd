//! Scenario configuration, the penetration sweep and CSV persistence.
//!
//! # Output files
//!
//! A single run (`run_scenario`) writes into its output directory:
//!
//! | file | columns |
//! |------|---------|
//! | `events.csv` | `time_s, kind, driver_id, participant, edge_id, area_id, price_eur, distance_m` |
//! | `detectors.csv` | `edge_id, window, start_s, count, flow_veh_h` |
//! | `summary.csv` | see [`SUMMARY_COLUMNS`] (one row) |
//! | `edge_stats.csv` | `edge_id, from_row, from_col, to_row, to_col, zone, mean_occupancy, mean_price_eur, parks` |
//! | `population.csv` | the sampled drivers |
//! | `network.txt` | edge listing with zones and prices |
//! | `config.toml` | the resolved configuration |
//!
//! `kind` in `events.csv` is one of `spawn`, `reservation_won`,
//! `reservation_lost`, `park`, `unpark`, `exit`. `price_eur` is the paid
//! price on `park` and the winning bid on `reservation_won`; `distance_m` is
//! the parking distance on `park` and the driven route length on `exit`.
//! Empty cells mean "not applicable". Events carry full precision.
//!
//! A sweep (`run_matrix`) writes `summary.csv` (one row per run),
//! `matrix.csv` (seed-averaged, one row per mix, behavior and penetration),
//! `edge_stats.csv` (seed-averaged per cell and edge, prefixed by
//! `mix, behavior, penetration`) and `network.txt`, plus the per-run files
//! under `runs/<run_id>/` when requested.
//!
//! Distances are in metres, prices in euros, flows in vehicles per hour.
//! Summary prices are rounded to cents; missing values (no participants, no
//! reservations) are written as empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{AuctionConfig, PriceNormaliser};
use crate::demand::{sample_population, write_population, DemandConfig, Mix};
use crate::metrics::{GroupStats, MetricsConfig, RunSummary, Split};
use crate::network::{EdgeId, GridSpec, RoadNetwork, Zone, ZonePrices};
use crate::sim::{simulate, Behavior, RunOutput, SimConfig, SimEvent, TrafficConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub capacity: usize,
    pub speed_mps: f64,
    pub outer_price_eur: f64,
    pub inner_price_eur: f64,
    /// Explicit list of Inner-zone edge ids; omitted means the central blocks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_edges: Option<Vec<u32>>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            rows: g.rows,
            cols: g.cols,
            spacing_m: g.spacing,
            capacity: g.capacity,
            speed_mps: g.free_flow_speed,
            outer_price_eur: g.prices.outer,
            inner_price_eur: g.prices.inner,
            inner_edges: None,
        }
    }
}

impl NetworkConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            rows: self.rows,
            cols: self.cols,
            spacing: self.spacing_m,
            capacity: self.capacity,
            prices: ZonePrices {
                outer: self.outer_price_eur,
                inner: self.inner_price_eur,
            },
            free_flow_speed: self.speed_mps,
            inner_edges: self
                .inner_edges
                .as_ref()
                .map(|v| v.iter().map(|&e| EdgeId(e)).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuctionSection {
    pub epsilon_eur: f64,
    pub quiescence_rounds: u32,
    pub max_rounds_guard: u32,
    pub price_normaliser: PriceNormaliser,
    pub period_s: u32,
}

impl Default for AuctionSection {
    fn default() -> Self {
        let a = AuctionConfig::default();
        Self {
            epsilon_eur: a.epsilon_eur,
            quiescence_rounds: a.quiescence_rounds,
            max_rounds_guard: a.max_rounds_guard,
            price_normaliser: a.price_normaliser,
            period_s: TrafficConfig::default().auction_period_s,
        }
    }
}

impl AuctionSection {
    pub fn engine(&self) -> AuctionConfig {
        AuctionConfig {
            epsilon_eur: self.epsilon_eur,
            quiescence_rounds: self.quiescence_rounds,
            max_rounds_guard: self.max_rounds_guard,
            price_normaliser: self.price_normaliser,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub behavior: Behavior,
    /// Share of drivers using the app. Ignored (treated as 0) for baseline.
    pub penetration: f64,
    pub network: NetworkConfig,
    pub demand: DemandConfig,
    pub auction: AuctionSection,
    pub traffic: TrafficConfig,
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            behavior: Behavior::Baseline,
            penetration: 0.0,
            network: NetworkConfig::default(),
            demand: DemandConfig::default(),
            auction: AuctionSection::default(),
            traffic: TrafficConfig::default(),
            metrics: MetricsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    pub fn effective_penetration(&self) -> f64 {
        match self.behavior {
            Behavior::Baseline => 0.0,
            _ => self.penetration,
        }
    }

    pub fn demand_config(&self) -> DemandConfig {
        DemandConfig {
            penetration: self.effective_penetration(),
            seed: self.seed,
            ..self.demand.clone()
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            behavior: self.behavior,
            seed: self.seed,
            traffic: TrafficConfig {
                auction_period_s: self.auction.period_s,
                ..self.traffic
            },
            auction: self.auction.engine(),
            metrics: self.metrics,
        }
    }

    /// Check every section; the returned network is ready to use.
    pub fn validate(&self) -> Result<RoadNetwork> {
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(Error::Config(format!(
                "penetration must lie in [0, 1], got {}",
                self.penetration
            )));
        }
        if self.auction.period_s == 0 {
            return Err(Error::Config("auction.period_s must be at least 1".into()));
        }
        let net = RoadNetwork::build_grid(&self.network.grid_spec())?;
        self.demand_config().validate()?;
        let sim = self.sim_config();
        sim.traffic.validate()?;
        sim.auction.validate()?;
        sim.metrics.validate()?;
        Ok(net)
    }

    pub fn run_id(&self) -> String {
        run_id(
            self.demand.mix,
            self.behavior,
            self.effective_penetration(),
            self.seed,
        )
    }
}

pub fn run_id(mix: Mix, behavior: Behavior, penetration: f64, seed: u64) -> String {
    format!(
        "{mix}-{behavior}-p{:03}-s{seed}",
        (penetration * 100.0).round() as u32
    )
}

pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub network: RoadNetwork,
    pub output: RunOutput,
}

impl ScenarioResult {
    pub fn summary(&self) -> &RunSummary {
        &self.output.summary
    }
}

/// Simulate one scenario without writing anything.
pub fn simulate_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let net = cfg.validate()?;
    let drivers = sample_population(&net, &cfg.demand_config())?;
    let output = simulate(&net, drivers, cfg.sim_config())?;
    Ok(ScenarioResult {
        config: cfg.clone(),
        network: net,
        output,
    })
}

/// Simulate one scenario and write all of its files into `dir` (or the
/// configured output directory when `dir` is `None`).
pub fn run_scenario(cfg: &ScenarioConfig, dir: Option<&Path>) -> Result<ScenarioResult> {
    let result = simulate_scenario(cfg)?;
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone());
    if let Some(dir) = dir {
        write_run(&dir, &result)?;
    }
    Ok(result)
}

pub fn write_run(dir: &Path, r: &ScenarioResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_events(&dir.join("events.csv"), &r.output.events)?;
    write_detectors(&dir.join("detectors.csv"), &r.output)?;
    let row = RunRow::new(&r.config, &r.output.summary);
    write_summary(&dir.join("summary.csv"), std::slice::from_ref(&row))?;
    write_edge_stats(&dir.join("edge_stats.csv"), &r.network, &r.output.summary)?;
    let drivers = sample_population(&r.network, &r.config.demand_config())?;
    write_population(&dir.join("population.csv"), &drivers)?;
    fs::write(dir.join("network.txt"), r.network.dump_text())?;
    fs::write(dir.join("config.toml"), r.config.to_toml())?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        String::new()
    }
}

pub fn write_events(path: &Path, events: &[SimEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "time_s",
        "kind",
        "driver_id",
        "participant",
        "edge_id",
        "area_id",
        "price_eur",
        "distance_m",
    ])?;
    for e in events {
        w.write_record([
            e.time.to_string(),
            e.kind.as_str().to_string(),
            e.driver.to_string(),
            u8::from(e.participant).to_string(),
            e.edge.0.to_string(),
            opt(e.area.map(|a| a.0)),
            opt(e.price),
            opt(e.distance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_detectors(path: &Path, out: &RunOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["edge_id", "window", "start_s", "count", "flow_veh_h"])?;
    let window = out.detectors.window_s();
    for r in out.detectors.records(out.end_time) {
        w.write_record([
            r.edge.0.to_string(),
            r.window.to_string(),
            (r.window * window).to_string(),
            r.count.to_string(),
            r.flow_veh_h.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn zone_name(z: Zone) -> &'static str {
    match z {
        Zone::Outer => "outer",
        Zone::Inner => "inner",
    }
}

pub fn write_edge_stats(path: &Path, net: &RoadNetwork, s: &RunSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EDGE_COLUMNS)?;
    for e in &s.edges {
        w.write_record(edge_cells(net, e.edge, e.mean_occupancy, e.mean_price, e.parks as f64))?;
    }
    w.flush()?;
    Ok(())
}

const EDGE_COLUMNS: [&str; 9] = [
    "edge_id",
    "from_row",
    "from_col",
    "to_row",
    "to_col",
    "zone",
    "mean_occupancy",
    "mean_price_eur",
    "parks",
];

fn edge_cells(net: &RoadNetwork, id: EdgeId, occ: f64, price: f64, parks: f64) -> Vec<String> {
    let e = net.edge(id);
    let a = net.junction(e.from);
    let b = net.junction(e.to);
    vec![
        id.0.to_string(),
        a.row.to_string(),
        a.col.to_string(),
        b.row.to_string(),
        b.col.to_string(),
        zone_name(e.zone).to_string(),
        fixed(occ, 4),
        fixed(price, 2),
        fixed(parks, 1),
    ]
}

/// Scalar metrics of one run (or one seed-averaged cell), in summary order.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub vehicles: f64,
    pub participants: f64,
    /// route length, price, parking distance; each overall, participants,
    /// non-participants; each mean, p10, p90.
    pub grouped: [[[f64; 3]; 3]; 3],
    pub flow: [f64; 3],
    pub reservations_granted: f64,
    pub reservations_fulfilled: f64,
    pub reservation_success: f64,
    pub short_route_fraction: f64,
}

pub const METRIC_NAMES: [&str; 3] = ["route_length_m", "price_eur", "parking_distance_m"];
pub const GROUP_NAMES: [&str; 3] = ["all", "part", "nonpart"];
pub const STAT_NAMES: [&str; 3] = ["mean", "p10", "p90"];

fn stats(g: &GroupStats) -> [f64; 3] {
    [g.mean, g.p10, g.p90]
}

fn split(s: &Split) -> [[f64; 3]; 3] {
    [
        stats(&s.overall),
        stats(&s.participants),
        stats(&s.non_participants),
    ]
}

impl Metrics {
    pub fn from_summary(s: &RunSummary) -> Self {
        Self {
            vehicles: s.vehicles as f64,
            participants: s.route_length.participants.count as f64,
            grouped: [
                split(&s.route_length),
                split(&s.price),
                split(&s.parking_distance),
            ],
            flow: stats(&s.flow),
            reservations_granted: s.reservations_granted as f64,
            reservations_fulfilled: s.reservations_fulfilled as f64,
            reservation_success: s.reservation_success(),
            short_route_fraction: s.short_route_fraction,
        }
    }

    pub fn get(&self, metric: usize, group: usize, stat: usize) -> f64 {
        self.grouped[metric][group][stat]
    }

    fn scalars(&self) -> Vec<f64> {
        let mut v = vec![self.vehicles, self.participants];
        for m in &self.grouped {
            for g in m {
                v.extend_from_slice(g);
            }
        }
        v.extend_from_slice(&self.flow);
        v.extend([
            self.reservations_granted,
            self.reservations_fulfilled,
            self.reservation_success,
            self.short_route_fraction,
        ]);
        v
    }

    fn from_scalars(v: &[f64]) -> Self {
        let mut grouped = [[[0.0; 3]; 3]; 3];
        let mut i = 2;
        for m in &mut grouped {
            for g in m.iter_mut() {
                g.copy_from_slice(&v[i..i + 3]);
                i += 3;
            }
        }
        Self {
            vehicles: v[0],
            participants: v[1],
            grouped,
            flow: [v[i], v[i + 1], v[i + 2]],
            reservations_granted: v[i + 3],
            reservations_fulfilled: v[i + 4],
            reservation_success: v[i + 5],
            short_route_fraction: v[i + 6],
        }
    }

    /// Element-wise mean, skipping values that are undefined in some runs.
    pub fn mean(items: &[Metrics]) -> Self {
        let cols: Vec<Vec<f64>> = items.iter().map(Metrics::scalars).collect();
        let n = cols[0].len();
        let avg: Vec<f64> = (0..n)
            .map(|j| {
                let vals: Vec<f64> = cols.iter().map(|c| c[j]).filter(|x| x.is_finite()).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect();
        Self::from_scalars(&avg)
    }

    fn cells(&self) -> Vec<String> {
        let mut out = vec![fixed(self.vehicles, 1), fixed(self.participants, 1)];
        for (m, groups) in self.grouped.iter().enumerate() {
            let digits = if m == 1 { 2 } else { 3 };
            for g in groups {
                out.extend(g.iter().map(|&x| fixed(x, digits)));
            }
        }
        out.extend(self.flow.iter().map(|&x| fixed(x, 3)));
        out.extend([
            fixed(self.reservations_granted, 1),
            fixed(self.reservations_fulfilled, 1),
            fixed(self.reservation_success, 4),
            fixed(self.short_route_fraction, 4),
        ]);
        out
    }
}

fn metric_columns() -> Vec<String> {
    let mut cols = vec!["vehicles".to_string(), "participants".to_string()];
    for m in METRIC_NAMES {
        for g in GROUP_NAMES {
            for s in STAT_NAMES {
                cols.push(format!("{m}_{g}_{s}"));
            }
        }
    }
    for s in STAT_NAMES {
        cols.push(format!("flow_veh_h_{s}"));
    }
    cols.extend(
        [
            "reservations_granted",
            "reservations_fulfilled",
            "reservation_success",
            "short_route_fraction",
        ]
        .map(String::from),
    );
    cols
}

/// Identifying columns of `summary.csv`; the metric columns follow, named
/// `<metric>_<group>_<stat>` with metric in `route_length_m`, `price_eur`,
/// `parking_distance_m`, group in `all`, `part`, `nonpart` and stat in
/// `mean`, `p10`, `p90`, then `flow_veh_h_{mean,p10,p90}`,
/// `reservations_granted`, `reservations_fulfilled`, `reservation_success`
/// and `short_route_fraction`.
pub const SUMMARY_COLUMNS: [&str; 5] = ["run_id", "mix", "behavior", "penetration", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: String,
    pub mix: Mix,
    pub behavior: Behavior,
    pub penetration: f64,
    pub seed: u64,
    pub metrics: Metrics,
}

impl RunRow {
    pub fn new(cfg: &ScenarioConfig, s: &RunSummary) -> Self {
        Self {
            run_id: cfg.run_id(),
            mix: cfg.demand.mix,
            behavior: cfg.behavior,
            penetration: cfg.effective_penetration(),
            seed: cfg.seed,
            metrics: Metrics::from_summary(s),
        }
    }
}

pub fn write_summary(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(metric_columns());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.run_id.clone(),
            r.mix.to_string(),
            r.behavior.to_string(),
            fixed(r.penetration, 1),
            r.seed.to_string(),
        ];
        rec.extend(r.metrics.cells());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One scenario family averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub mix: Mix,
    pub behavior: Behavior,
    pub penetration: f64,
    pub runs: usize,
    pub metrics: Metrics,
    /// Seed-averaged (occupancy, price, parks) per edge.
    pub edges: Vec<(f64, f64, f64)>,
}

impl CellRow {
    pub fn matches(&self, mix: Mix, behavior: Behavior, penetration: f64) -> bool {
        self.mix == mix && self.behavior == behavior && (self.penetration - penetration).abs() < 1e-9
    }
}

pub fn write_matrix(path: &Path, cells: &[CellRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["mix", "behavior", "penetration", "runs"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(metric_columns());
    w.write_record(&header)?;
    for c in cells {
        let mut rec = vec![
            c.mix.to_string(),
            c.behavior.to_string(),
            fixed(c.penetration, 1),
            c.runs.to_string(),
        ];
        rec.extend(c.metrics.cells());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix_edges(path: &Path, net: &RoadNetwork, cells: &[CellRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["mix", "behavior", "penetration"];
    header.extend(EDGE_COLUMNS);
    w.write_record(&header)?;
    for c in cells {
        for (i, &(occ, price, parks)) in c.edges.iter().enumerate() {
            let mut rec = vec![
                c.mix.to_string(),
                c.behavior.to_string(),
                fixed(c.penetration, 1),
            ];
            rec.extend(edge_cells(net, EdgeId(i as u32), occ, price, parks));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The sweep: for each mix one baseline cell plus every app behavior at
/// every penetration level, each over every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub mixes: Vec<Mix>,
    pub include_baseline: bool,
    pub behaviors: Vec<Behavior>,
    pub penetrations: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            mixes: Mix::ALL.to_vec(),
            include_baseline: true,
            behaviors: vec![Behavior::Information, Behavior::Auction],
            penetrations: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: (0..10).collect(),
        }
    }
}

/// One run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub mix: Mix,
    pub behavior: Behavior,
    pub penetration: f64,
    pub seed: u64,
}

impl RunSpec {
    pub fn id(&self) -> String {
        run_id(self.mix, self.behavior, self.penetration, self.seed)
    }

    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.demand.mix = self.mix;
        cfg.behavior = self.behavior;
        cfg.penetration = self.penetration;
        cfg.seed = self.seed;
        cfg.output.dir = None;
        cfg
    }
}

impl MatrixSpec {
    /// Cells in output order: `(mix, behavior, penetration)`.
    pub fn cells(&self) -> Vec<(Mix, Behavior, f64)> {
        let mut out = Vec::new();
        for &mix in &self.mixes {
            if self.include_baseline {
                out.push((mix, Behavior::Baseline, 0.0));
            }
            for &b in &self.behaviors {
                if b == Behavior::Baseline {
                    continue;
                }
                for &p in &self.penetrations {
                    out.push((mix, b, p));
                }
            }
        }
        out
    }

    pub fn runs(&self) -> Vec<RunSpec> {
        self.cells()
            .into_iter()
            .flat_map(|(mix, behavior, penetration)| {
                self.seeds.iter().map(move |&seed| RunSpec {
                    mix,
                    behavior,
                    penetration,
                    seed,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("matrix needs at least one mix and one seed".into()));
        }
        if self.penetrations.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("matrix penetrations must lie in [0, 1]".into()));
        }
        if self.cells().is_empty() {
            return Err(Error::Config("matrix has no cells".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOptions {
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Also write each run's own files under `runs/<run_id>/`.
    pub keep_runs: bool,
}

#[derive(Debug, Clone)]
pub struct MatrixResult {
    pub runs: Vec<RunRow>,
    pub cells: Vec<CellRow>,
}

impl MatrixResult {
    pub fn cell(&self, mix: Mix, behavior: Behavior, penetration: f64) -> Option<&CellRow> {
        self.cells.iter().find(|c| c.matches(mix, behavior, penetration))
    }
}

struct RunDone {
    row: RunRow,
    edges: Vec<(f64, f64, f64)>,
}

fn run_one(base: &ScenarioConfig, spec: &RunSpec, opts: &MatrixOptions) -> Result<RunDone> {
    let cfg = spec.apply(base);
    let r = simulate_scenario(&cfg)?;
    if let (true, Some(out)) = (opts.keep_runs, &opts.out) {
        write_run(&out.join("runs").join(spec.id()), &r)?;
    }
    let s = r.summary();
    Ok(RunDone {
        row: RunRow::new(&cfg, s),
        edges: s
            .edges
            .iter()
            .map(|e| (e.mean_occupancy, e.mean_price, e.parks as f64))
            .collect(),
    })
}

fn nan_mean(vals: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = vals
        .filter(|x| x.is_finite())
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Run every scenario of `spec` on a worker pool. Results come back in spec
/// order whatever the scheduling.
pub fn run_matrix(
    spec: &MatrixSpec,
    base: &ScenarioConfig,
    opts: &MatrixOptions,
) -> Result<MatrixResult> {
    spec.validate()?;
    let net = base.validate()?;
    let runs = spec.runs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunDone>> =
        pool.install(|| runs.par_iter().map(|r| run_one(base, r, opts)).collect());

    let failed: Vec<String> = runs
        .iter()
        .zip(&results)
        .filter_map(|(r, res)| res.as_ref().err().map(|e| format!("{}: {e}", r.id())))
        .collect();
    if !failed.is_empty() {
        return Err(Error::Matrix {
            failed: failed.len(),
            total: runs.len(),
            ids: failed,
        });
    }
    let done: Vec<RunDone> = results.into_iter().map(|r| r.expect("checked")).collect();

    let per_cell = spec.seeds.len();
    let cells: Vec<CellRow> = spec
        .cells()
        .into_iter()
        .zip(done.chunks(per_cell))
        .map(|((mix, behavior, penetration), chunk)| {
            let metrics: Vec<Metrics> = chunk.iter().map(|d| d.row.metrics.clone()).collect();
            let edges = (0..net.edges().len())
                .map(|i| {
                    (
                        nan_mean(chunk.iter().map(|d| d.edges[i].0)),
                        nan_mean(chunk.iter().map(|d| d.edges[i].1)),
                        nan_mean(chunk.iter().map(|d| d.edges[i].2)),
                    )
                })
                .collect();
            CellRow {
                mix,
                behavior,
                penetration,
                runs: chunk.len(),
                metrics: Metrics::mean(&metrics),
                edges,
            }
        })
        .collect();
    let result = MatrixResult {
        runs: done.into_iter().map(|d| d.row).collect(),
        cells,
    };

    if let Some(out) = &opts.out {
        fs::create_dir_all(out)?;
        write_summary(&out.join("summary.csv"), &result.runs)?;
        write_matrix(&out.join("matrix.csv"), &result.cells)?;
        write_matrix_edges(&out.join("edge_stats.csv"), &net, &result.cells)?;
        fs::write(out.join("network.txt"), net.dump_text())?;
        fs::write(out.join("config.toml"), base.to_toml())?;
    }
    Ok(result)
}
