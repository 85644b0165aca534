//! Epidemic resource lookup.
//!
//! A peer receiving a query first tries to serve it from its own free
//! resources and, if it can, sends an offer straight back to the origin.
//! Otherwise the hop budget is decremented and the query goes either to a
//! single cached provider that is believed to be able to serve it or, budget
//! permitting, to a random subset of neighbours. Repeated arrivals of the same
//! query are dropped.
//!
//! The functions here decide *what* happens; the engine turns the returned
//! [`LookupAction`] into timed message deliveries.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::ops::{Add, Sub};

use rand::seq::index;
use rand::Rng;

use crate::genome::{phenotype_of, FitnessParams, Genotype, Phenotype};
use crate::metrics::GenotypeWindow;
use crate::overlay::NodeId;

/// CPU (MHz), RAM (MB) and disk (GB).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ResourceVector {
    pub cpu: u32,
    pub ram: u32,
    pub disk: u32,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { cpu: 0, ram: 0, disk: 0 };

    pub const fn new(cpu: u32, ram: u32, disk: u32) -> Self {
        Self { cpu, ram, disk }
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.cpu <= other.cpu && self.ram <= other.ram && self.disk <= other.disk
    }

    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            cpu: self.cpu.checked_sub(other.cpu)?,
            ram: self.ram.checked_sub(other.ram)?,
            disk: self.disk.checked_sub(other.disk)?,
        })
    }

    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector {
            cpu: self.cpu.saturating_sub(other.cpu),
            ram: self.ram.saturating_sub(other.ram),
            disk: self.disk.saturating_sub(other.disk),
        }
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector { cpu: self.cpu + rhs.cpu, ram: self.ram + rhs.ram, disk: self.disk + rhs.disk }
    }
}

impl Sub for ResourceVector {
    type Output = ResourceVector;

    fn sub(self, rhs: ResourceVector) -> ResourceVector {
        self.checked_sub(&rhs).expect("resource underflow")
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} MHz, {} MB, {} GB)", self.cpu, self.ram, self.disk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub id: QueryId,
    pub origin: NodeId,
    pub request: ResourceVector,
    /// Remaining hop budget.
    pub ttl: u32,
    /// Messages travelled so far.
    pub hops: u32,
    pub issued_at: f64,
}

/// LRU map from provider to the free capacity last seen in one of its offers.
/// Most recently used entries sit at the front.
#[derive(Debug, Clone, Default)]
pub struct DescriptorCache {
    entries: VecDeque<(NodeId, ResourceVector)>,
    capacity: usize,
}

impl DescriptorCache {
    pub fn new(capacity: usize) -> Self {
        Self { entries: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Shrinking evicts least recently used entries immediately.
    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity;
        self.entries.truncate(capacity);
    }

    pub fn insert(&mut self, provider: NodeId, free: ResourceVector) {
        if let Some(pos) = self.entries.iter().position(|(p, _)| *p == provider) {
            self.entries.remove(pos);
        }
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front((provider, free));
    }

    pub fn get(&self, provider: NodeId) -> Option<ResourceVector> {
        self.entries.iter().find(|(p, _)| *p == provider).map(|(_, r)| *r)
    }

    /// Most recently used provider whose recorded free capacity covers
    /// `request`, skipping `exclude`.
    pub fn find_match(&self, request: &ResourceVector, exclude: NodeId) -> Option<NodeId> {
        self.entries
            .iter()
            .find(|(p, free)| *p != exclude && request.fits_within(free))
            .map(|(p, _)| *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(NodeId, ResourceVector)> {
        self.entries.iter()
    }
}

/// Recently seen query ids, each remembered until its expiry time.
#[derive(Debug, Clone, Default)]
pub struct DuplicateCache {
    expiry: HashMap<QueryId, f64>,
    next_purge: f64,
}

impl DuplicateCache {
    /// Records `id`; returns `false` if it was already present and unexpired.
    pub fn observe(&mut self, id: QueryId, now: f64, ttl: f64) -> bool {
        if now >= self.next_purge {
            self.expiry.retain(|_, &mut t| t > now);
            self.next_purge = now + ttl;
        }
        match self.expiry.get(&id) {
            Some(&t) if t > now => false,
            _ => {
                self.expiry.insert(id, now + ttl);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.expiry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expiry.is_empty()
    }
}

/// Hit ratio over the last `K` completed queries, Laplace smoothed so that a
/// fresh peer starts at 0.5.
#[derive(Debug, Clone)]
pub struct QhrTracker {
    outcomes: VecDeque<bool>,
    hits: usize,
    capacity: usize,
}

impl QhrTracker {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "hit-ratio window must be >= 1");
        Self { outcomes: VecDeque::with_capacity(capacity), hits: 0, capacity }
    }

    pub fn record(&mut self, hit: bool) {
        if self.outcomes.len() == self.capacity {
            if self.outcomes.pop_front() == Some(true) {
                self.hits -= 1;
            }
        }
        self.outcomes.push_back(hit);
        if hit {
            self.hits += 1;
        }
    }

    pub fn current(&self) -> f64 {
        (self.hits as f64 + 1.0) / (self.outcomes.len() as f64 + 2.0)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PeerState {
    pub genotype: Genotype,
    pub phenotype: Phenotype<f64>,
    pub capacity: ResourceVector,
    pub reserved: ResourceVector,
    pub cache: DescriptorCache,
    pub seen: DuplicateCache,
    pub qhr: QhrTracker,
    pub window: GenotypeWindow<Genotype>,
    pub initial: Genotype,
    /// Adaptation generations run so far.
    pub generation: u64,
    alphabet: u32,
}

impl PeerState {
    pub fn new(
        genotype: Genotype,
        capacity: ResourceVector,
        params: &FitnessParams<f64>,
        window: usize,
        qhr_window: usize,
    ) -> Self {
        let phenotype = phenotype_of(&genotype, params);
        let mut w = GenotypeWindow::new(window);
        w.push(genotype);
        Self {
            genotype,
            phenotype,
            capacity,
            reserved: ResourceVector::ZERO,
            cache: DescriptorCache::new(phenotype.cache_capacity),
            seen: DuplicateCache::default(),
            qhr: QhrTracker::new(qhr_window),
            window: w,
            initial: genotype,
            generation: 0,
            alphabet: params.n,
        }
    }

    pub fn free(&self) -> ResourceVector {
        self.capacity - self.reserved
    }

    pub fn can_satisfy(&self, request: &ResourceVector) -> bool {
        request.fits_within(&self.free())
    }

    /// Reserves `request` if it fits; returns whether it did.
    pub fn reserve(&mut self, request: &ResourceVector) -> bool {
        if !self.can_satisfy(request) {
            return false;
        }
        self.reserved = self.reserved + *request;
        true
    }

    /// Returns `false` (and leaves state untouched) on underflow.
    pub fn release(&mut self, request: &ResourceVector) -> bool {
        match self.reserved.checked_sub(request) {
            Some(r) => {
                self.reserved = r;
                true
            }
            None => false,
        }
    }

    /// Installs a new genotype and re-derives the lookup parameters.
    pub fn install_genotype(&mut self, genotype: Genotype, params: &FitnessParams<f64>) {
        self.genotype = genotype;
        self.phenotype = phenotype_of(&genotype, params);
        self.cache.set_capacity(self.phenotype.cache_capacity);
    }

    /// Number of neighbours a blind query is sent to: `ceil(f_k * degree)`,
    /// at least one when there is any neighbour.
    pub fn fanout_count(&self, degree: usize) -> usize {
        if degree == 0 {
            return 0;
        }
        let m0 = self.genotype.gene(0) as usize;
        let n = self.alphabet as usize;
        ((m0 * degree).div_ceil(n)).clamp(1, degree)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupAction {
    /// Resources are locally available: notify the origin.
    Offer { origin: NodeId, free: ResourceVector },
    /// Redirect to one cached provider.
    ForwardCached { to: NodeId, ttl: u32 },
    /// Blind propagation to a random subset of neighbours.
    Flood { to: Vec<NodeId>, ttl: u32 },
    /// Hop budget exhausted, nothing cached.
    Expired,
    /// Already seen here.
    Duplicate,
}

/// Runs one lookup step for `query` arriving at `peer` (`self_id`).
///
/// `ttl` counts the hops a message may still travel: the origin sends with
/// its full budget and every receiver spends one before passing it on, so a
/// query reaches peers up to `T_max` hops away.
pub fn handle_query<R: Rng + ?Sized>(
    peer: &mut PeerState,
    self_id: NodeId,
    query: &Query,
    neighbors: &BTreeSet<NodeId>,
    now: f64,
    duplicate_ttl: f64,
    rng: &mut R,
) -> LookupAction {
    if !peer.seen.observe(query.id, now, duplicate_ttl) {
        return LookupAction::Duplicate;
    }
    if peer.can_satisfy(&query.request) {
        return LookupAction::Offer { origin: query.origin, free: peer.free() };
    }
    let at_origin = self_id == query.origin && query.hops == 0;
    let ttl = if at_origin {
        query.ttl
    } else {
        match query.ttl.checked_sub(1) {
            Some(t) => t,
            None => return LookupAction::Expired,
        }
    };
    if let Some(to) = peer.cache.find_match(&query.request, self_id) {
        return LookupAction::ForwardCached { to, ttl };
    }
    if ttl == 0 {
        return LookupAction::Expired;
    }
    let degree = neighbors.len();
    let k = peer.fanout_count(degree);
    if k == 0 {
        return LookupAction::Expired;
    }
    let all: Vec<NodeId> = neighbors.iter().copied().collect();
    let mut picked: Vec<usize> = index::sample(rng, degree, k).into_vec();
    picked.sort_unstable();
    LookupAction::Flood { to: picked.into_iter().map(|i| all[i]).collect(), ttl }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingQuery {
    pub origin: NodeId,
    pub request: ResourceVector,
    pub issued_at: f64,
}

/// Queries waiting for their first successful offer.
#[derive(Debug, Clone, Default)]
pub struct PendingTable {
    queries: HashMap<QueryId, PendingQuery>,
}

impl PendingTable {
    pub fn insert(&mut self, id: QueryId, q: PendingQuery) {
        self.queries.insert(id, q);
    }

    pub fn get(&self, id: QueryId) -> Option<&PendingQuery> {
        self.queries.get(&id)
    }

    pub fn remove(&mut self, id: QueryId) -> Option<PendingQuery> {
        self.queries.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Drops every query originated by `origin`, returning how many.
    pub fn drop_origin(&mut self, origin: NodeId) -> usize {
        let before = self.queries.len();
        self.queries.retain(|_, q| q.origin != origin);
        before - self.queries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &PendingQuery)> {
        self.queries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReservationId(pub u64);

/// Ledger of live reservations; every reservation is released exactly once.
#[derive(Debug, Clone, Default)]
pub struct Reservations {
    active: HashMap<ReservationId, (NodeId, ResourceVector)>,
    next: u64,
    pub made: u64,
    pub released: u64,
    /// Releases that would have driven a provider's reserved amount negative.
    pub underflows: u64,
}

impl Reservations {
    fn open(&mut self, provider: NodeId, request: ResourceVector) -> ReservationId {
        let id = ReservationId(self.next);
        self.next += 1;
        self.made += 1;
        self.active.insert(id, (provider, request));
        id
    }

    /// Releases reservation `id` on its provider. A reservation that is no
    /// longer active (already released, or orphaned by a departure) is a
    /// no-op returning `false`.
    pub fn release(&mut self, id: ReservationId, peers: &mut Peers) -> bool {
        let Some((provider, request)) = self.active.remove(&id) else {
            return false;
        };
        self.released += 1;
        if let Some(p) = peers.get_mut(provider) {
            if !p.release(&request) {
                self.underflows += 1;
            }
        }
        true
    }

    /// Releases everything hosted by a departing provider.
    pub fn release_provider(&mut self, provider: NodeId, peers: &mut Peers) -> usize {
        let mut ids: Vec<ReservationId> =
            self.active.iter().filter(|(_, (p, _))| *p == provider).map(|(id, _)| *id).collect();
        ids.sort_unstable();
        for id in &ids {
            self.release(*id, peers);
        }
        ids.len()
    }

    pub fn outstanding(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, id: ReservationId) -> bool {
        self.active.contains_key(&id)
    }
}

/// Peer storage indexed by [`NodeId`]; departed peers leave a `None` hole.
#[derive(Debug, Clone, Default)]
pub struct Peers {
    slots: Vec<Option<PeerState>>,
}

impl Peers {
    pub fn insert(&mut self, id: NodeId, peer: PeerState) {
        if self.slots.len() <= id.0 {
            self.slots.resize_with(id.0 + 1, || None);
        }
        self.slots[id.0] = Some(peer);
    }

    pub fn remove(&mut self, id: NodeId) -> Option<PeerState> {
        self.slots.get_mut(id.0).and_then(Option::take)
    }

    pub fn get(&self, id: NodeId) -> Option<&PeerState> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, id: NodeId) -> Option<&mut PeerState> {
        self.slots.get_mut(id.0).and_then(Option::as_mut)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &PeerState)> {
        self.slots.iter().enumerate().filter_map(|(i, p)| p.as_ref().map(|p| (NodeId(i), p)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfferOutcome {
    /// First usable offer: the provider now holds a reservation.
    Accepted(ReservationId),
    /// The origin is no longer interested (already served, timed out or gone).
    NotInterested,
    /// The provider cannot honour the request any more; the query stays pending.
    ProviderExhausted,
}

/// Origin-side handling of an offer from `provider` for query `id`.
///
/// Confirmation is atomic: the provider's capacity is checked and reserved at
/// the instant the origin accepts.
pub fn resolve_offer(
    peers: &mut Peers,
    pending: &mut PendingTable,
    reservations: &mut Reservations,
    id: QueryId,
    provider: NodeId,
    offered_free: ResourceVector,
) -> OfferOutcome {
    let Some(query) = pending.get(id).copied() else {
        return OfferOutcome::NotInterested;
    };
    if peers.get(query.origin).is_none() {
        pending.remove(id);
        return OfferOutcome::NotInterested;
    }
    let reserved = peers.get_mut(provider).is_some_and(|p| p.reserve(&query.request));
    if !reserved {
        return OfferOutcome::ProviderExhausted;
    }
    pending.remove(id);
    let rid = reservations.open(provider, query.request);
    let origin = peers.get_mut(query.origin).expect("origin checked above");
    origin.qhr.record(true);
    if provider != query.origin {
        origin.cache.insert(provider, offered_free.saturating_sub(&query.request));
    }
    OfferOutcome::Accepted(rid)
}
