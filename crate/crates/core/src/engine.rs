//! Discrete-event simulation core.
//!
//! One run owns a single event queue ordered by `(time, seq)`; the sequence
//! number breaks ties in scheduling order, so a run is a deterministic
//! function of its [`ScenarioConfig`] (seed included).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::adaptation::{adaptation_tick, AdaptationParams};
use crate::error::{invalid, Result};
use crate::genome::{FitnessKind, FitnessParams, Genotype, GENES};
use crate::metrics::{MeasureSet, MetricsConfig};
use crate::overlay::{NodeId, OverlayGraph, TopologyParams};
use crate::protocol::{
    handle_query, resolve_offer, LookupAction, OfferOutcome, PeerState, PendingQuery, PendingTable, Peers,
    Query, QueryId, ReservationId, Reservations, ResourceVector,
};

pub const CPU_STEP: u32 = 512;
pub const RAM_STEP: u32 = 256;
pub const DISK_STEP: u32 = 10;
pub const MAX_RESOURCES: ResourceVector = ResourceVector::new(2048, 1024, 100);
pub const LIGHT_REQUEST: ResourceVector = ResourceVector::new(256, 128, 1);

/// Network size the default workload and churn rates are quoted for.
pub const REFERENCE_NODES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestProfile {
    /// Uniform over the capacity grid.
    Heavy,
    /// Always [`LIGHT_REQUEST`].
    Light,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadProfile {
    /// Heavy requests throughout.
    Static,
    /// Mostly heavy until the given time (seconds), mostly light afterwards.
    ChangingAt(f64),
}

fn grid_value<R: Rng + ?Sized>(step: u32, levels: u32, rng: &mut R) -> u32 {
    step * rng.random_range(1..=levels)
}

/// Peer capacities: uniform multiples of (512 MHz, 256 MB, 10 GB) up to
/// (2048 MHz, 1024 MB, 100 GB).
pub fn draw_capacities<R: Rng + ?Sized>(rng: &mut R) -> ResourceVector {
    ResourceVector::new(grid_value(CPU_STEP, 4, rng), grid_value(RAM_STEP, 4, rng), grid_value(DISK_STEP, 10, rng))
}

/// Request drawn from `dominant` with probability `mix`, from the other
/// profile otherwise.
pub fn draw_request<R: Rng + ?Sized>(dominant: RequestProfile, mix: f64, rng: &mut R) -> ResourceVector {
    let profile = if mix >= 1.0 || rng.random::<f64>() < mix {
        dominant
    } else {
        match dominant {
            RequestProfile::Heavy => RequestProfile::Light,
            RequestProfile::Light => RequestProfile::Heavy,
        }
    };
    match profile {
        RequestProfile::Heavy => draw_capacities(rng),
        RequestProfile::Light => LIGHT_REQUEST,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Simulated time in seconds.
    pub duration: f64,
    pub topology: TopologyParams,
    /// Rate of each of the join and leave Poisson processes (1/s).
    pub churn_rate: f64,
    /// Query arrivals per second over the whole network.
    pub query_rate: f64,
    pub load_profile: LoadProfile,
    /// Share of queries following the phase-dominant profile.
    pub mix: f64,
    pub sample_period: f64,
    pub adaptation: AdaptationParams,
    /// Genotype window `W` for the complexity measures.
    pub window: usize,
    /// Hit-ratio window `K`.
    pub qhr_window: usize,
    pub hop_latency: f64,
    pub query_timeout: f64,
    pub duplicate_ttl: f64,
    /// Mean holding time of a granted reservation (exponential).
    pub mean_hold_time: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 9000.0,
            topology: TopologyParams::default(),
            churn_rate: 0.14,
            query_rate: 36.0,
            load_profile: LoadProfile::Static,
            mix: 0.9,
            sample_period: 60.0,
            adaptation: AdaptationParams::default(),
            window: 1,
            qhr_window: 50,
            hop_latency: 0.1,
            query_timeout: 5.0,
            duplicate_ttl: 60.0,
            mean_hold_time: 280.0,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Resizes the network to `nodes`, scaling the workload and churn rates
    /// so that per-node load and turnover match the reference size.
    pub fn scaled_to(mut self, nodes: usize) -> Self {
        let factor = nodes as f64 / self.topology.nodes as f64;
        self.topology.nodes = nodes;
        self.query_rate *= factor;
        self.churn_rate *= factor;
        self
    }

    pub fn with_fitness(mut self, kind: FitnessKind) -> Self {
        self.adaptation.fitness = kind;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fitness_params(&self) -> &FitnessParams<f64> {
        &self.adaptation.fitness_params
    }

    pub fn validate(&self) -> Result<()> {
        fn non_negative(name: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name}={v} must be a finite value >= 0")))
            }
        }
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name}={v} must be a finite value > 0")))
            }
        }
        self.topology.validate()?;
        non_negative("duration", self.duration)?;
        non_negative("churn_rate", self.churn_rate)?;
        non_negative("query_rate", self.query_rate)?;
        positive("sample_period", self.sample_period)?;
        positive("adaptation_period", self.adaptation.period)?;
        non_negative("hop_latency", self.hop_latency)?;
        positive("query_timeout", self.query_timeout)?;
        positive("duplicate_ttl", self.duplicate_ttl)?;
        positive("mean_hold_time", self.mean_hold_time)?;
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(invalid(format!("mix={} must lie in [0, 1]", self.mix)));
        }
        if let LoadProfile::ChangingAt(t) = self.load_profile {
            non_negative("switch_time", t)?;
        }
        if self.window < 1 {
            return Err(invalid("window must be >= 1"));
        }
        if self.qhr_window < 1 {
            return Err(invalid("qhr_window must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Query(Query),
    Offer { query: QueryId, provider: NodeId, free: ResourceVector },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    QueryArrival,
    MessageDelivery { to: NodeId, message: Message },
    AdaptTick(NodeId),
    Join,
    Leave,
    ResourceRelease(ReservationId),
    QueryTimeout(QueryId),
    MetricsSample,
    LoadSwitch,
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Future event list with a monotone clock.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: f64,
    late_events: u64,
}

impl EventQueue {
    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `kind` at `now + delay`; negative delays are clamped to zero.
    pub fn schedule_in(&mut self, delay: f64, kind: EventKind) {
        self.schedule_at(self.now + delay.max(0.0), kind);
    }

    pub fn schedule_at(&mut self, time: f64, kind: EventKind) {
        let time = time.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    /// Pops the next event if it is due at or before `horizon`.
    pub fn pop_until(&mut self, horizon: f64) -> Option<Event> {
        if self.heap.peek()?.time > horizon {
            return None;
        }
        let ev = self.heap.pop()?;
        if ev.time < self.now {
            self.late_events += 1;
        }
        self.now = self.now.max(ev.time);
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Events popped with a timestamp behind the clock (always 0).
    pub fn late_events(&self) -> u64 {
        self.late_events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; zeros for an empty input.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.max(0.0).sqrt() }
    }
}

/// Network-wide averages at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsSample {
    pub t: f64,
    pub qhr: MeanStd,
    pub genes: [MeanStd; GENES],
    pub emergence: MeanStd,
    pub self_organization: MeanStd,
    pub complexity: MeanStd,
    pub homeostasis: MeanStd,
    pub alive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub queries_submitted: u64,
    pub local_hits: u64,
    pub hits: u64,
    pub misses: u64,
    /// Queries abandoned because their origin departed.
    pub orphaned_queries: u64,
    pub messages: u64,
    pub adapt_ticks: u64,
    pub isolated_ticks: u64,
    pub mutations: u64,
    pub joins: u64,
    pub leaves: u64,
    pub failed_joins: u64,
    pub declined_offers: u64,
    pub max_chain_hops: u32,
}

/// End-of-run consistency checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Audit {
    pub reservations_made: u64,
    pub reservations_released: u64,
    /// Reservations still held at the end of the run (released by the audit).
    pub reservations_outstanding: u64,
    /// Releases that would have made a reserved amount negative.
    pub release_underflows: u64,
    /// Peers whose reserved amount exceeded capacity at any audit point.
    pub capacity_violations: u64,
    /// Pending queries whose timeout had already passed when the run ended.
    pub overdue_pending: u64,
    /// Pending queries whose timeout lies beyond the end of the run.
    pub in_flight_pending: u64,
    /// Events seen with a timestamp earlier than the clock.
    pub causality_violations: u64,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.release_underflows == 0
            && self.capacity_violations == 0
            && self.overdue_pending == 0
            && self.causality_violations == 0
            && self.reservations_made == self.reservations_released
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub samples: Vec<MetricsSample>,
    pub audit: Audit,
    pub counters: Counters,
}

pub const TRACE_HEADER: &str =
    "t,qhr_mean,qhr_std,m0_mean,m0_std,m1_mean,m1_std,m2_mean,m2_std,e_mean,s_mean,c_mean,c_std,h_mean,alive";

/// Formats like C's `%.6g`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Exponent after rounding to 6 significant digits (999999.7 -> 1e6).
    let sci = format!("{:.5e}", x);
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    if (-4..6).contains(&e) {
        let decimals = (5 - e).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        let m = trim_zeros(mantissa);
        let sign = if e < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", e.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

impl MetricsSample {
    pub fn csv_row(&self) -> String {
        let cols = [
            self.t,
            self.qhr.mean,
            self.qhr.std,
            self.genes[0].mean,
            self.genes[0].std,
            self.genes[1].mean,
            self.genes[1].std,
            self.genes[2].mean,
            self.genes[2].std,
            self.emergence.mean,
            self.self_organization.mean,
            self.complexity.mean,
            self.complexity.std,
            self.homeostasis.mean,
        ];
        let mut row: Vec<String> = cols.iter().map(|v| fmt_sig(*v)).collect();
        row.push(self.alive.to_string());
        row.join(",")
    }

    /// Values in [`TRACE_HEADER`] column order.
    pub fn columns(&self) -> [f64; 15] {
        [
            self.t,
            self.qhr.mean,
            self.qhr.std,
            self.genes[0].mean,
            self.genes[0].std,
            self.genes[1].mean,
            self.genes[1].std,
            self.genes[2].mean,
            self.genes[2].std,
            self.emergence.mean,
            self.self_organization.mean,
            self.complexity.mean,
            self.complexity.std,
            self.homeostasis.mean,
            self.alive as f64,
        ]
    }
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for s in &self.samples {
            writeln!(out, "{}", s.csv_row())?;
        }
        Ok(())
    }

    pub fn final_sample(&self) -> &MetricsSample {
        self.samples.last().expect("a trace always holds the t=0 sample")
    }

    /// `(t, global mean QHR)` series.
    pub fn qhr_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.qhr.mean)).collect()
    }
}

/// State of one simulation run.
pub struct Simulation {
    cfg: ScenarioConfig,
    metrics_cfg: MetricsConfig,
    rng: ChaCha8Rng,
    queue: EventQueue,
    graph: OverlayGraph,
    peers: Peers,
    pending: PendingTable,
    reservations: Reservations,
    next_query: u64,
    dominant: RequestProfile,
    hold: Exp<f64>,
    samples: Vec<MetricsSample>,
    counters: Counters,
    audit: Audit,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let graph = OverlayGraph::generate(&cfg.topology, &mut rng)?;
        Self::with_graph(cfg, graph, rng)
    }

    fn with_graph(cfg: ScenarioConfig, graph: OverlayGraph, rng: ChaCha8Rng) -> Result<Self> {
        let metrics_cfg = MetricsConfig::new(cfg.fitness_params().n, GENES, cfg.window)?;
        let hold = Exp::new(1.0 / cfg.mean_hold_time).map_err(|e| invalid(e.to_string()))?;
        let mut sim = Self {
            metrics_cfg,
            rng,
            queue: EventQueue::default(),
            graph,
            peers: Peers::default(),
            pending: PendingTable::default(),
            reservations: Reservations::default(),
            next_query: 0,
            dominant: RequestProfile::Heavy,
            hold,
            samples: Vec::new(),
            counters: Counters::default(),
            audit: Audit::default(),
            cfg,
        };
        let ids: Vec<NodeId> = sim.graph.alive().to_vec();
        for id in ids {
            sim.spawn_peer(id);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &OverlayGraph {
        &self.graph
    }

    pub fn peers(&self) -> &Peers {
        &self.peers
    }

    pub fn peers_mut(&mut self) -> &mut Peers {
        &mut self.peers
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    fn random_genotype(&mut self) -> Genotype {
        let n = self.cfg.fitness_params().n;
        let genes = std::array::from_fn(|_| self.rng.random_range(1..=n));
        Genotype::new(genes, n).expect("genes drawn in range")
    }

    fn spawn_peer(&mut self, id: NodeId) {
        let genotype = self.random_genotype();
        let capacity = draw_capacities(&mut self.rng);
        let peer = PeerState::new(genotype, capacity, self.cfg.fitness_params(), self.cfg.window, self.cfg.qhr_window);
        self.peers.insert(id, peer);
        let phase = self.rng.random::<f64>() * self.cfg.adaptation.period;
        self.queue.schedule_in(phase, EventKind::AdaptTick(id));
    }

    fn exp_delay(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive rate").sample(&mut self.rng)
    }

    fn schedule_processes(&mut self) {
        self.queue.schedule_at(0.0, EventKind::MetricsSample);
        if self.cfg.query_rate > 0.0 {
            let d = self.exp_delay(self.cfg.query_rate);
            self.queue.schedule_in(d, EventKind::QueryArrival);
        }
        if self.cfg.churn_rate > 0.0 {
            let d = self.exp_delay(self.cfg.churn_rate);
            self.queue.schedule_in(d, EventKind::Join);
            let d = self.exp_delay(self.cfg.churn_rate);
            self.queue.schedule_in(d, EventKind::Leave);
        }
        if let LoadProfile::ChangingAt(t) = self.cfg.load_profile {
            self.queue.schedule_at(t, EventKind::LoadSwitch);
        }
    }

    /// Runs to the configured duration and returns the trace.
    pub fn run(mut self) -> RunTrace {
        self.schedule_processes();
        let horizon = self.cfg.duration;
        while let Some(ev) = self.queue.pop_until(horizon) {
            self.dispatch(ev.kind);
        }
        self.finish()
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::QueryArrival => {
                if let Some(origin) = self.graph.random_alive(&mut self.rng) {
                    let mix = match self.cfg.load_profile {
                        LoadProfile::Static => 1.0,
                        LoadProfile::ChangingAt(_) => self.cfg.mix,
                    };
                    let request = draw_request(self.dominant, mix, &mut self.rng);
                    self.originate_query(origin, request);
                }
                let d = self.exp_delay(self.cfg.query_rate);
                self.queue.schedule_in(d, EventKind::QueryArrival);
            }
            EventKind::MessageDelivery { to, message } => self.deliver(to, message),
            EventKind::AdaptTick(id) => self.adapt(id),
            EventKind::Join => {
                match self.graph.join(self.cfg.topology.links_per_node, &mut self.rng) {
                    Ok(id) => {
                        self.counters.joins += 1;
                        self.spawn_peer(id);
                    }
                    Err(_) => self.counters.failed_joins += 1,
                }
                let d = self.exp_delay(self.cfg.churn_rate);
                self.queue.schedule_in(d, EventKind::Join);
            }
            EventKind::Leave => {
                if let Some(id) = self.graph.random_alive(&mut self.rng) {
                    self.depart(id);
                }
                let d = self.exp_delay(self.cfg.churn_rate);
                self.queue.schedule_in(d, EventKind::Leave);
            }
            EventKind::ResourceRelease(rid) => {
                self.reservations.release(rid, &mut self.peers);
            }
            EventKind::QueryTimeout(qid) => {
                if let Some(q) = self.pending.remove(qid) {
                    if let Some(origin) = self.peers.get_mut(q.origin) {
                        origin.qhr.record(false);
                        self.counters.misses += 1;
                    }
                }
            }
            EventKind::MetricsSample => {
                let s = self.sample();
                self.samples.push(s);
                self.queue.schedule_in(self.cfg.sample_period, EventKind::MetricsSample);
            }
            EventKind::LoadSwitch => {
                self.dominant = RequestProfile::Light;
            }
        }
    }

    /// Starts a lookup at `origin` for `request`.
    pub fn originate_query(&mut self, origin: NodeId, request: ResourceVector) -> Option<QueryId> {
        let peer = self.peers.get(origin)?;
        let id = QueryId(self.next_query);
        self.next_query += 1;
        self.counters.queries_submitted += 1;
        let now = self.queue.now();
        let query = Query { id, origin, request, ttl: peer.phenotype.max_hops, hops: 0, issued_at: now };
        self.pending.insert(id, PendingQuery { origin, request, issued_at: now });
        self.queue.schedule_in(self.cfg.query_timeout, EventKind::QueryTimeout(id));
        self.process_query(origin, query);
        Some(id)
    }

    fn send(&mut self, to: NodeId, message: Message) {
        self.counters.messages += 1;
        self.queue.schedule_in(self.cfg.hop_latency, EventKind::MessageDelivery { to, message });
    }

    fn deliver(&mut self, to: NodeId, message: Message) {
        match message {
            Message::Query(q) => {
                if self.peers.get(to).is_some() {
                    self.process_query(to, q);
                }
            }
            Message::Offer { query, provider, free } => self.offer(query, provider, free),
        }
    }

    fn process_query(&mut self, at: NodeId, query: Query) {
        let Some(neighbors) = self.graph.neighbors(at) else {
            return;
        };
        let Some(peer) = self.peers.get_mut(at) else {
            return;
        };
        let now = self.queue.now();
        let action = handle_query(peer, at, &query, neighbors, now, self.cfg.duplicate_ttl, &mut self.rng);
        self.counters.max_chain_hops = self.counters.max_chain_hops.max(query.hops);
        match action {
            LookupAction::Offer { origin, free } => {
                if origin == at {
                    self.counters.local_hits += 1;
                    self.offer(query.id, at, free);
                } else {
                    self.send(origin, Message::Offer { query: query.id, provider: at, free });
                }
            }
            LookupAction::ForwardCached { to, ttl } => {
                self.send(to, Message::Query(Query { ttl, hops: query.hops + 1, ..query }))
            }
            LookupAction::Flood { to, ttl } => {
                for nb in to {
                    self.send(nb, Message::Query(Query { ttl, hops: query.hops + 1, ..query }));
                }
            }
            LookupAction::Expired | LookupAction::Duplicate => {}
        }
    }

    fn offer(&mut self, query: QueryId, provider: NodeId, free: ResourceVector) {
        let outcome =
            resolve_offer(&mut self.peers, &mut self.pending, &mut self.reservations, query, provider, free);
        match outcome {
            OfferOutcome::Accepted(rid) => {
                self.counters.hits += 1;
                let d = self.hold.sample(&mut self.rng);
                self.queue.schedule_in(d, EventKind::ResourceRelease(rid));
            }
            OfferOutcome::NotInterested | OfferOutcome::ProviderExhausted => self.counters.declined_offers += 1,
        }
    }

    fn adapt(&mut self, id: NodeId) {
        let Some(neighbors) = self.graph.neighbors(id) else {
            return;
        };
        let snapshots: Vec<(Genotype, f64)> = neighbors
            .iter()
            .filter_map(|nb| self.peers.get(*nb))
            .map(|p| (p.genotype, p.qhr.current()))
            .collect();
        let Some(peer) = self.peers.get_mut(id) else {
            return;
        };
        let report = adaptation_tick(peer, &snapshots, &self.cfg.adaptation, &mut self.rng)
            .expect("fitness inputs are in range by construction");
        self.counters.adapt_ticks += 1;
        self.counters.mutations += report.mutations as u64;
        if report.isolated {
            self.counters.isolated_ticks += 1;
        }
        self.queue.schedule_in(self.cfg.adaptation.period, EventKind::AdaptTick(id));
    }

    /// Removes `id`: its reservations are released, its pending queries
    /// dropped and its future ticks become no-ops.
    pub fn depart(&mut self, id: NodeId) {
        if self.graph.leave(id).is_err() {
            return;
        }
        self.counters.leaves += 1;
        self.reservations.release_provider(id, &mut self.peers);
        self.counters.orphaned_queries += self.pending.drop_origin(id) as u64;
        if let Some(p) = self.peers.remove(id) {
            self.check_capacity(&p);
        }
    }

    fn check_capacity(&mut self, p: &PeerState) {
        if !p.reserved.fits_within(&p.capacity) {
            self.audit.capacity_violations += 1;
        }
    }

    fn sample(&mut self) -> MetricsSample {
        let alive = self.graph.alive();
        let mut qhr = Vec::with_capacity(alive.len());
        let mut genes: [Vec<f64>; GENES] = Default::default();
        let (mut e, mut s, mut c, mut h) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut violations = 0;
        for id in alive {
            let p = self.peers.get(*id).expect("alive peer has state");
            if !p.reserved.fits_within(&p.capacity) {
                violations += 1;
            }
            qhr.push(p.qhr.current());
            for (i, g) in p.genotype.genes().into_iter().enumerate() {
                genes[i].push(g as f64);
            }
            let m = MeasureSet::<f64>::compute(&p.window, p.initial.as_ref(), &self.metrics_cfg)
                .expect("window holds valid genotypes");
            e.push(m.emergence);
            s.push(m.self_organization);
            c.push(m.complexity);
            h.push(m.homeostasis);
        }
        self.audit.capacity_violations += violations;
        MetricsSample {
            t: self.queue.now(),
            qhr: MeanStd::of(&qhr),
            genes: genes.map(|g| MeanStd::of(&g)),
            emergence: MeanStd::of(&e),
            self_organization: MeanStd::of(&s),
            complexity: MeanStd::of(&c),
            homeostasis: MeanStd::of(&h),
            alive: alive.len(),
        }
    }

    fn finish(mut self) -> RunTrace {
        self.audit.causality_violations = self.queue.late_events();
        let end = self.cfg.duration;
        for (_, q) in self.pending.iter() {
            if q.issued_at + self.cfg.query_timeout <= end {
                self.audit.overdue_pending += 1;
            } else {
                self.audit.in_flight_pending += 1;
            }
        }
        let peers: Vec<PeerState> = self.peers.iter().map(|(_, p)| p.clone()).collect();
        for p in &peers {
            self.check_capacity(p);
        }
        // Drain what is still held so the ledger can be balanced.
        self.audit.reservations_outstanding = self.reservations.outstanding() as u64;
        let holders: Vec<NodeId> = self.peers.iter().map(|(id, _)| id).collect();
        for id in holders {
            self.reservations.release_provider(id, &mut self.peers);
        }
        for (_, p) in self.peers.iter() {
            if p.reserved != ResourceVector::ZERO {
                self.audit.capacity_violations += 1;
            }
        }
        self.audit.reservations_made = self.reservations.made;
        self.audit.reservations_released = self.reservations.released;
        self.audit.release_underflows = self.reservations.underflows;
        RunTrace { samples: self.samples, audit: self.audit, counters: self.counters }
    }
}

/// Builds and runs one scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<RunTrace> {
    Ok(Simulation::new(cfg.clone())?.run())
}

/// Runs a scenario on a caller-supplied topology; the initial peers get
/// random genotypes and capacities as usual and may be adjusted through
/// `setup` before the clock starts.
pub fn run_on_graph(
    cfg: &ScenarioConfig,
    graph: OverlayGraph,
    setup: impl FnOnce(&mut Simulation),
) -> Result<Simulation> {
    cfg.validate()?;
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = Simulation::with_graph(cfg.clone(), graph, rng)?;
    setup(&mut sim);
    Ok(sim)
}

impl Simulation {
    /// Processes all events due up to `until` without scheduling the
    /// background processes; used for hand-built scenarios.
    pub fn step_until(&mut self, until: f64) {
        while let Some(ev) = self.queue.pop_until(until) {
            self.dispatch(ev.kind);
        }
    }

    pub fn pending(&self) -> &PendingTable {
        &self.pending
    }

    pub fn reservations(&self) -> &Reservations {
        &self.reservations
    }

    /// Drops the initial adaptation ticks so hand-built scenarios keep their
    /// genotypes fixed.
    pub fn clear_events(&mut self) {
        self.queue = EventQueue::default();
    }

    pub fn into_trace(self) -> RunTrace {
        self.finish()
    }
}
