//! Discrete-event model of a sharded UTXO ledger.
//!
//! Every shard is one FIFO server. A client node submits each transaction
//! open-loop: single-shard transactions go out as one `TX` request, while
//! cross-shard ones lock every input shard first and then send a `COMMIT`
//! to the output shard. Every client/shard message pays the link latency.
//! Time is kept in integer nanoseconds so runs are exactly reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::{PlacementDecision, PlacementError, Placer, ShardFeedback, ShardId};
use crate::rng::rng_for;
use crate::txgraph::{TxId, TxStream};

const NS_PER_US: f64 = 1_000.0;
const NS_PER_MS: f64 = 1_000_000.0;
const NS_PER_S: f64 = 1_000_000_000.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("decision {index} does not match the stream (expected {expected}, got {got})")]
    DecisionMismatch { index: usize, expected: TxId, got: TxId },
    #[error("{given} decisions for a stream of {expected} transactions")]
    DecisionCount { expected: usize, given: usize },
    #[error("lock failure requested for {0}, which is not a cross-shard transaction")]
    NotCrossShard(TxId),
    #[error("lock failure requested for {0}, which is not in the stream")]
    UnknownTx(TxId),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Config(msg.into()))
}

/// Per-request service times (µs) and network parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub tx_service_us: f64,
    pub lock_service_us: f64,
    pub commit_service_us: f64,
    /// No published figure; defaults to the LOCK cost.
    pub unlock_service_us: f64,
    /// One-way client/shard latency.
    pub link_latency_ms: f64,
    /// Recorded only. Bandwidth is never the bottleneck at these message sizes.
    pub bandwidth_mbps: f64,
    /// Sigma of a median-one lognormal multiplier on every service time.
    /// Zero keeps service times deterministic.
    pub jitter_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<CostBreakdown>,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            tx_service_us: 211.0,
            lock_service_us: 438.0,
            commit_service_us: 259.0,
            unlock_service_us: 438.0,
            link_latency_ms: 100.0,
            bandwidth_mbps: 500.0,
            jitter_sigma: 0.0,
            breakdown: None,
        }
    }
}

/// Link latency used for latency measurements.
pub const LATENCY_RUN_LINK_MS: f64 = 10.0;

impl CostModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("tx_service_us", self.tx_service_us),
            ("lock_service_us", self.lock_service_us),
            ("commit_service_us", self.commit_service_us),
            ("unlock_service_us", self.unlock_service_us),
            ("link_latency_ms", self.link_latency_ms),
            ("bandwidth_mbps", self.bandwidth_mbps),
            ("jitter_sigma", self.jitter_sigma),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return config_err(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if let Some(b) = &self.breakdown {
            b.check_against(self)?;
        }
        Ok(())
    }

    pub fn service_us(&self, kind: RequestKind) -> f64 {
        match kind {
            RequestKind::Tx => self.tx_service_us,
            RequestKind::Lock => self.lock_service_us,
            RequestKind::Commit => self.commit_service_us,
            RequestKind::Unlock => self.unlock_service_us,
        }
    }

    fn service_ns(&self, kind: RequestKind) -> u64 {
        (self.service_us(kind) * NS_PER_US).round() as u64
    }

    fn link_ns(&self) -> u64 {
        (self.link_latency_ms * NS_PER_MS).round() as u64
    }

    /// Shard busy time a transaction costs when nothing fails.
    pub fn work_us(&self, plan: &RequestPlan) -> f64 {
        plan.requests.iter().map(|r| self.service_us(r.kind)).sum()
    }

    /// Default feedback normalisation: arrival rate × mean service time × 10,
    /// with the mean taken over TX, LOCK and COMMIT.
    pub fn default_feedback_norm(&self, arrival_rate_tps: f64) -> f64 {
        let mean_s = (self.tx_service_us + self.lock_service_us + self.commit_service_us) / 3.0 / 1e6;
        (arrival_rate_tps * mean_s * 10.0).max(f64::MIN_POSITIVE)
    }

    /// Replaces the per-request costs with the sums of an itemised table.
    pub fn with_breakdown(mut self, b: CostBreakdown) -> Self {
        self.tx_service_us = b.tx.values().sum();
        self.lock_service_us = b.lock.values().sum();
        self.commit_service_us = b.commit.values().sum();
        if !b.unlock.is_empty() {
            self.unlock_service_us = b.unlock.values().sum();
        }
        self.breakdown = Some(b);
        self
    }
}

/// Itemised per-step costs (µs) for each request kind, e.g. signature check,
/// UTXO lookup, state update. Useful for what-if studies such as cheaper
/// signatures. An empty `unlock` table leaves the UNLOCK cost alone.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostBreakdown {
    pub tx: BTreeMap<String, f64>,
    pub lock: BTreeMap<String, f64>,
    pub commit: BTreeMap<String, f64>,
    pub unlock: BTreeMap<String, f64>,
}

impl CostBreakdown {
    fn check_against(&self, model: &CostModel) -> Result<(), SimError> {
        let tables = [
            ("tx", &self.tx, model.tx_service_us),
            ("lock", &self.lock, model.lock_service_us),
            ("commit", &self.commit, model.commit_service_us),
            ("unlock", &self.unlock, model.unlock_service_us),
        ];
        for (name, table, total) in tables {
            if let Some((step, v)) = table.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
                return config_err(format!("breakdown.{name}.{step} = {v} must be finite and non-negative"));
            }
            if table.is_empty() {
                if name == "unlock" {
                    continue;
                }
                return config_err(format!("breakdown.{name} has no steps"));
            }
            let sum: f64 = table.values().sum();
            if (sum - total).abs() > 1e-6 {
                return config_err(format!("breakdown.{name} sums to {sum} µs but the {name} cost is {total} µs"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RequestKind {
    Tx,
    Lock,
    Commit,
    Unlock,
}

impl RequestKind {
    pub const ALL: [RequestKind; 4] = [Self::Tx, Self::Lock, Self::Commit, Self::Unlock];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tx => "TX",
            Self::Lock => "LOCK",
            Self::Commit => "COMMIT",
            Self::Unlock => "UNLOCK",
        }
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Request {
    pub kind: RequestKind,
    pub tx: TxId,
    pub shard: ShardId,
    /// Positions in the same plan whose replies must arrive first.
    pub depends_on: BTreeSet<usize>,
}

/// The request DAG of one transaction, in issue order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestPlan {
    pub requests: Vec<Request>,
}

impl RequestPlan {
    pub fn kinds(&self) -> Vec<(RequestKind, ShardId)> {
        self.requests.iter().map(|r| (r.kind, r.shard)).collect()
    }
}

/// Requests needed to execute `decision`.
pub fn plan_requests(decision: &PlacementDecision) -> RequestPlan {
    let tx = decision.tx;
    if !decision.cross_shard {
        return RequestPlan {
            requests: vec![Request {
                kind: RequestKind::Tx,
                tx,
                shard: decision.output_shard,
                depends_on: BTreeSet::new(),
            }],
        };
    }
    let mut requests: Vec<Request> = decision
        .input_shards
        .iter()
        .map(|&shard| Request { kind: RequestKind::Lock, tx, shard, depends_on: BTreeSet::new() })
        .collect();
    let locks = (0..requests.len()).collect();
    requests.push(Request { kind: RequestKind::Commit, tx, shard: decision.output_shard, depends_on: locks });
    RequestPlan { requests }
}

/// UNLOCK requests that undo the successful LOCKs of an aborted transaction.
pub fn plan_abort(tx: TxId, locked: &[ShardId]) -> RequestPlan {
    RequestPlan {
        requests: locked
            .iter()
            .map(|&shard| Request { kind: RequestKind::Unlock, tx, shard, depends_on: BTreeSet::new() })
            .collect(),
    }
}

/// The input shard whose LOCK is made to fail for an injected transaction.
pub fn failing_shard(decision: &PlacementDecision) -> Option<ShardId> {
    decision.input_shards.first().copied()
}

/// Transactions whose lowest-index input shard refuses the LOCK.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LockFailures(BTreeSet<TxId>);

impl LockFailures {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn contains(&self, tx: &TxId) -> bool {
        self.0.contains(tx)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TxId> {
        self.0.iter()
    }
}

/// Marks `txs` for a failing LOCK. Every one must be cross-shard under
/// `decisions`.
pub fn inject_lock_failure(
    decisions: &[PlacementDecision],
    txs: impl IntoIterator<Item = TxId>,
) -> Result<LockFailures, SimError> {
    let cross: BTreeMap<TxId, bool> = decisions.iter().map(|d| (d.tx, d.cross_shard)).collect();
    let mut set = BTreeSet::new();
    for tx in txs {
        match cross.get(&tx) {
            None => return Err(SimError::UnknownTx(tx)),
            Some(false) => return Err(SimError::NotCrossShard(tx)),
            Some(true) => {
                set.insert(tx);
            }
        }
    }
    Ok(LockFailures(set))
}

/// Picks `round(fraction × cross-shard count)` cross-shard transactions.
pub fn sample_lock_failures(
    decisions: &[PlacementDecision],
    fraction: f64,
    seed: u64,
) -> Result<LockFailures, SimError> {
    if !(0.0..=1.0).contains(&fraction) {
        return config_err(format!("lock failure fraction {fraction} is not in [0, 1]"));
    }
    let cross: Vec<TxId> = decisions.iter().filter(|d| d.cross_shard).map(|d| d.tx).collect();
    let k = (fraction * cross.len() as f64).round() as usize;
    let mut rng = rng_for(seed, "lock-failures");
    let picked = sample(&mut rng, cross.len(), k).into_iter().map(|i| cross[i]);
    inject_lock_failure(decisions, picked)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    #[default]
    Uniform,
    Poisson,
}

/// How the client drives the system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveConfig {
    pub arrival_rate_tps: f64,
    pub arrivals: ArrivalProcess,
    /// Stop the clock here; anything still in flight is reported as pending.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_cap_s: Option<f64>,
    pub bucket_s: f64,
    /// How often the client samples shard queues for feedback placement.
    pub probe_period_ms: f64,
    /// Overrides the default feedback normalisation constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_norm: Option<f64>,
    pub seed: u64,
    /// Keep a full request trace (needed for the atomicity audit).
    pub trace: bool,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            arrival_rate_tps: 4_500.0,
            arrivals: ArrivalProcess::Uniform,
            duration_cap_s: None,
            bucket_s: 1.0,
            probe_period_ms: 100.0,
            feedback_norm: None,
            seed: 0,
            trace: false,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.arrival_rate_tps > 0.0 && self.arrival_rate_tps.is_finite()) {
            return config_err(format!("arrival_rate_tps = {} must be positive", self.arrival_rate_tps));
        }
        if !(self.bucket_s > 0.0 && self.bucket_s.is_finite()) {
            return config_err(format!("bucket_s = {} must be positive", self.bucket_s));
        }
        if !(self.probe_period_ms > 0.0 && self.probe_period_ms.is_finite()) {
            return config_err(format!("probe_period_ms = {} must be positive", self.probe_period_ms));
        }
        if let Some(c) = self.duration_cap_s {
            if !(c > 0.0) {
                return config_err(format!("duration_cap_s = {c} must be positive"));
            }
        }
        if let Some(q) = self.feedback_norm {
            if !(q > 0.0 && q.is_finite()) {
                return config_err(format!("feedback_norm = {q} must be positive"));
            }
        }
        Ok(())
    }
}

/// Where output shards come from.
pub enum Placement<'a> {
    /// Decisions made beforehand, one per stream transaction.
    Precomputed(&'a [PlacementDecision]),
    /// Decide at submission time. With `feedback`, the placer sees the most
    /// recent queue snapshot.
    Live { placer: Placer, feedback: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Start,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxOutcome {
    Completed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum TraceEvent {
    Submit { t_ns: u64, tx: TxId },
    Request { t_ns: u64, tx: TxId, kind: RequestKind, shard: ShardId, phase: Phase, ok: bool },
    Finish { t_ns: u64, tx: TxId, outcome: TxOutcome },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
}

/// Nearest-rank percentiles. `None` for an empty sample.
pub fn percentiles(samples_ns: &[u64]) -> Option<Percentiles> {
    if samples_ns.is_empty() {
        return None;
    }
    let mut v = samples_ns.to_vec();
    v.sort_unstable();
    let at = |p: f64| {
        let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
        v[rank.min(v.len()) - 1] as f64 / NS_PER_MS
    };
    Some(Percentiles { p50_ms: at(50.0), p95_ms: at(95.0), p99_ms: at(99.0) })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPoint {
    pub bucket: u64,
    pub submitted: u64,
    pub completed: u64,
    pub aborted: u64,
    /// In flight at the end of the bucket.
    pub pending: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub bucket: u64,
    pub completed: u64,
    pub percentiles: Option<Percentiles>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShardLoadPoint {
    pub bucket: u64,
    pub busy_fraction: Vec<f64>,
    pub queue_length: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTotals {
    pub submitted: u64,
    pub completed: u64,
    pub aborted: u64,
    pub pending: u64,
    pub cross_shard: u64,
    pub elapsed_s: f64,
    /// Completed transactions per simulated second.
    pub overall_tps: f64,
    pub busy_s: Vec<f64>,
    pub requests: BTreeMap<RequestKind, u64>,
    pub truncated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n_shards: u32,
    pub bucket_s: f64,
    pub throughput_series: Vec<ThroughputPoint>,
    pub latency: Option<Percentiles>,
    pub latency_series: Vec<LatencyPoint>,
    pub shard_load_series: Vec<ShardLoadPoint>,
    pub totals: SimTotals,
}

pub struct SimOutcome {
    pub report: SimReport,
    /// The decisions that were executed (equal to the input when precomputed).
    pub decisions: Vec<PlacementDecision>,
    pub trace: Option<Vec<TraceEvent>>,
}

/// Per-shard FIFO servers. Exposed so probes can be checked in isolation.
#[derive(Clone, Debug)]
pub struct Cluster {
    cost: CostModel,
    queues: Vec<VecDeque<usize>>,
    /// Service time of every request waiting or in service, per shard.
    backlog_ns: Vec<u64>,
    in_service: Vec<Option<usize>>,
}

impl Cluster {
    pub fn new(n_shards: u32, cost: CostModel) -> Self {
        let n = n_shards as usize;
        Self { cost, queues: vec![VecDeque::new(); n], backlog_ns: vec![0; n], in_service: vec![None; n] }
    }

    pub fn n_shards(&self) -> usize {
        self.queues.len()
    }

    /// Adds a request of `kind` to the back of `shard`'s queue without
    /// scheduling it. Returns the request's slot.
    pub fn enqueue(&mut self, shard: ShardId, kind: RequestKind) -> usize {
        let slot = self.queues[shard.index()].len();
        self.backlog_ns[shard.index()] += self.cost.service_ns(kind);
        self.queues[shard.index()].push_back(slot);
        slot
    }

    fn queued(&self, shard: usize) -> u64 {
        (self.queues[shard].len() + usize::from(self.in_service[shard].is_some())) as u64
    }

    /// Queue length (waiting plus in service) and a latency sample: one link
    /// traversal plus the full service time of everything queued.
    pub fn probe(&self, shard: ShardId) -> (u64, f64) {
        let s = shard.index();
        let latency_ms = self.cost.link_latency_ms + self.backlog_ns[s] as f64 / NS_PER_MS;
        (self.queued(s), latency_ms)
    }

    pub fn snapshot(&self) -> ShardFeedback {
        let (queue_length, sampled_latency_ms) =
            (0..self.n_shards()).map(|s| self.probe(ShardId(s as u32))).unzip();
        ShardFeedback { queue_length, sampled_latency_ms }
    }
}

/// Single-shard probe, as seen by the placement client.
pub fn feedback_probe(cluster: &Cluster, shard: ShardId) -> ShardFeedback {
    let (q, l) = cluster.probe(shard);
    ShardFeedback { queue_length: vec![q], sampled_latency_ms: vec![l] }
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Arrival(usize),
    /// Request reaches its shard.
    Deliver(usize),
    /// Shard finishes its current request.
    Done(usize),
    /// LOCK reply reaches the client.
    Reply(usize),
    Probe,
}

struct Scheduled {
    t: u64,
    seq: u64,
    ev: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.seq) == (o.t, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, o: &Self) -> Ordering {
        (o.t, o.seq).cmp(&(self.t, self.seq))
    }
}

struct Req {
    kind: RequestKind,
    tx: usize,
    shard: ShardId,
    fails: bool,
    service_ns: u64,
}

#[derive(Default)]
struct TxRun {
    arrival_ns: u64,
    locks_pending: u32,
    locked: Vec<ShardId>,
    failed: bool,
    unlocks_pending: u32,
    done: bool,
}

#[derive(Default)]
struct Bucket {
    submitted: u64,
    completed: u64,
    aborted: u64,
    latencies: Vec<u64>,
    busy_ns: Vec<u64>,
    queue_end: Option<Vec<u64>>,
}

struct Engine<'s, 'p> {
    stream: &'s TxStream,
    placement: Placement<'p>,
    failures: &'s LockFailures,
    drive: &'s DriveConfig,
    cost: CostModel,
    n_shards: u32,
    link: u64,
    bucket_ns: u64,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    reqs: Vec<Req>,
    txs: Vec<TxRun>,
    decisions: Vec<PlacementDecision>,
    cluster: Cluster,
    /// Time the current request on each shard started.
    started: Vec<u64>,
    buckets: Vec<Bucket>,
    feedback: Option<ShardFeedback>,
    trace: Option<Vec<TraceEvent>>,
    jitter: Option<(LogNormal<f64>, ChaCha8Rng)>,
    totals: SimTotals,
    now: u64,
    last_finish: u64,
    arrivals: Vec<u64>,
}

impl<'s, 'p> Engine<'s, 'p> {
    fn schedule(&mut self, t: u64, ev: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { t, seq: self.seq, ev });
    }

    fn bucket(&mut self, t: u64) -> &mut Bucket {
        let b = (t / self.bucket_ns) as usize;
        if self.buckets.len() <= b {
            let n = self.n_shards as usize;
            self.buckets.resize_with(b + 1, || Bucket { busy_ns: vec![0; n], ..Bucket::default() });
        }
        &mut self.buckets[b]
    }

    /// Records queue lengths for every bucket boundary up to `t`.
    fn close_buckets_until(&mut self, t: u64) {
        let upto = (t / self.bucket_ns) as usize;
        for b in 0..upto {
            self.bucket(b as u64 * self.bucket_ns);
            if self.buckets[b].queue_end.is_none() {
                let q = (0..self.cluster.n_shards()).map(|s| self.cluster.queued(s)).collect();
                self.buckets[b].queue_end = Some(q);
            }
        }
    }

    fn record(&mut self, ev: TraceEvent) {
        if let Some(t) = self.trace.as_mut() {
            t.push(ev);
        }
    }

    fn send(&mut self, tx: usize, kind: RequestKind, shard: ShardId, fails: bool) {
        let base = self.cost.service_ns(kind);
        let service_ns = match self.jitter.as_mut() {
            Some((dist, rng)) => (base as f64 * dist.sample(rng)).round() as u64,
            None => base,
        };
        self.reqs.push(Req { kind, tx, shard, fails, service_ns });
        *self.totals.requests.entry(kind).or_insert(0) += 1;
        let id = self.reqs.len() - 1;
        self.schedule(self.now + self.link, Event::Deliver(id));
    }

    fn start_next(&mut self, shard: usize) {
        if self.cluster.in_service[shard].is_some() {
            return;
        }
        if let Some(id) = self.cluster.queues[shard].pop_front() {
            self.cluster.in_service[shard] = Some(id);
            self.started[shard] = self.now;
            let r = &self.reqs[id];
            let ev = TraceEvent::Request {
                t_ns: self.now,
                tx: self.stream.transactions()[r.tx].id,
                kind: r.kind,
                shard: r.shard,
                phase: Phase::Start,
                ok: true,
            };
            let done = self.now + r.service_ns;
            self.record(ev);
            self.schedule(done, Event::Done(shard));
        }
    }

    fn add_busy(&mut self, shard: usize, from: u64, to: u64) {
        let mut t = from;
        while t < to {
            let edge = (t / self.bucket_ns + 1) * self.bucket_ns;
            let end = edge.min(to);
            self.bucket(t).busy_ns[shard] += end - t;
            t = end;
        }
        self.totals.busy_s[shard] += (to - from) as f64 / NS_PER_S;
    }

    fn finish(&mut self, tx: usize, outcome: TxOutcome) {
        let run = &mut self.txs[tx];
        debug_assert!(!run.done);
        run.done = true;
        let latency = self.now - run.arrival_ns;
        let now = self.now;
        self.last_finish = self.last_finish.max(now);
        let b = self.bucket(now);
        match outcome {
            TxOutcome::Completed => {
                b.completed += 1;
                b.latencies.push(latency);
            }
            TxOutcome::Aborted => b.aborted += 1,
        }
        match outcome {
            TxOutcome::Completed => self.totals.completed += 1,
            TxOutcome::Aborted => self.totals.aborted += 1,
        }
        let id = self.stream.transactions()[tx].id;
        self.record(TraceEvent::Finish { t_ns: now, tx: id, outcome });
    }

    fn decide(&mut self, i: usize) -> Result<PlacementDecision, SimError> {
        let tx = &self.stream.transactions()[i];
        match &mut self.placement {
            Placement::Precomputed(d) => Ok(d[i].clone()),
            Placement::Live { placer, feedback } => {
                let fb = if *feedback { self.feedback.as_ref() } else { None };
                Ok(placer.place(tx, fb)?)
            }
        }
    }

    fn on_arrival(&mut self, i: usize) -> Result<(), SimError> {
        let d = self.decide(i)?;
        let id = d.tx;
        self.totals.submitted += 1;
        self.bucket(self.now).submitted += 1;
        self.record(TraceEvent::Submit { t_ns: self.now, tx: id });
        self.txs[i].arrival_ns = self.now;
        let inject = self.failures.contains(&id);
        if inject && !d.cross_shard {
            return Err(SimError::NotCrossShard(id));
        }
        if d.cross_shard {
            self.totals.cross_shard += 1;
            let fail = if inject { failing_shard(&d) } else { None };
            self.txs[i].locks_pending = d.input_shards.len() as u32;
            for &s in &d.input_shards {
                self.send(i, RequestKind::Lock, s, Some(s) == fail);
            }
        } else {
            self.send(i, RequestKind::Tx, d.output_shard, false);
        }
        self.decisions.push(d);
        Ok(())
    }

    fn on_deliver(&mut self, id: usize) {
        let r = &self.reqs[id];
        let s = r.shard.index();
        self.cluster.backlog_ns[s] += r.service_ns;
        self.cluster.queues[s].push_back(id);
        self.start_next(s);
    }

    fn on_done(&mut self, shard: usize) {
        let id = self.cluster.in_service[shard].take().expect("completion on an idle shard");
        let from = self.started[shard];
        self.add_busy(shard, from, self.now);
        let (kind, tx, fails, service) = {
            let r = &self.reqs[id];
            (r.kind, r.tx, r.fails, r.service_ns)
        };
        self.cluster.backlog_ns[shard] -= service;
        let ev = TraceEvent::Request {
            t_ns: self.now,
            tx: self.stream.transactions()[tx].id,
            kind,
            shard: ShardId(shard as u32),
            phase: Phase::End,
            ok: !fails,
        };
        self.record(ev);
        match kind {
            RequestKind::Tx | RequestKind::Commit => self.finish(tx, TxOutcome::Completed),
            RequestKind::Lock => self.schedule(self.now + self.link, Event::Reply(id)),
            RequestKind::Unlock => {
                let run = &mut self.txs[tx];
                run.unlocks_pending -= 1;
                if run.unlocks_pending == 0 {
                    self.finish(tx, TxOutcome::Aborted);
                }
            }
        }
        self.start_next(shard);
    }

    fn on_reply(&mut self, id: usize) {
        let (tx, shard, fails) = {
            let r = &self.reqs[id];
            (r.tx, r.shard, r.fails)
        };
        let run = &mut self.txs[tx];
        if fails {
            run.failed = true;
        } else {
            run.locked.push(shard);
        }
        run.locks_pending -= 1;
        if run.locks_pending > 0 {
            return;
        }
        if run.failed {
            let locked = std::mem::take(&mut run.locked);
            run.unlocks_pending = locked.len() as u32;
            if locked.is_empty() {
                self.finish(tx, TxOutcome::Aborted);
            }
            for s in locked {
                self.send(tx, RequestKind::Unlock, s, false);
            }
        } else {
            let out = self.decisions_output(tx);
            self.send(tx, RequestKind::Commit, out, false);
        }
    }

    fn decisions_output(&self, tx: usize) -> ShardId {
        // Decisions are pushed in arrival order, which is stream order.
        self.decisions[tx].output_shard
    }

    fn run(mut self) -> Result<SimOutcome, SimError> {
        let cap = self.drive.duration_cap_s.map(|c| (c * NS_PER_S).round() as u64);
        let n = self.stream.len();
        if n > 0 {
            self.schedule(self.arrivals[0], Event::Arrival(0));
        }
        let live_feedback = matches!(self.placement, Placement::Live { feedback: true, .. });
        let probe_ns = ((self.drive.probe_period_ms * NS_PER_MS).round() as u64).max(1);
        if live_feedback && n > 0 {
            self.feedback = Some(self.cluster.snapshot());
            self.schedule(probe_ns, Event::Probe);
        }
        let mut submitted_all = n == 0;
        while let Some(Scheduled { t, ev, .. }) = self.heap.pop() {
            if cap.is_some_and(|c| t > c) {
                self.totals.truncated = true;
                self.now = cap.unwrap();
                break;
            }
            self.close_buckets_until(t);
            self.now = t;
            match ev {
                Event::Arrival(i) => {
                    self.on_arrival(i)?;
                    if i + 1 < n {
                        self.schedule(self.arrivals[i + 1], Event::Arrival(i + 1));
                    } else {
                        submitted_all = true;
                    }
                }
                Event::Deliver(id) => self.on_deliver(id),
                Event::Done(s) => self.on_done(s),
                Event::Reply(id) => self.on_reply(id),
                Event::Probe => {
                    self.feedback = Some(self.cluster.snapshot());
                    if !submitted_all {
                        self.schedule(t + probe_ns, Event::Probe);
                    }
                }
            }
        }
        if !submitted_all {
            self.totals.truncated = true;
        }
        // Requests still in service at the cap count as busy until then.
        if self.totals.truncated {
            for s in 0..self.cluster.n_shards() {
                if self.cluster.in_service[s].is_some() {
                    let from = self.started[s];
                    self.add_busy(s, from, self.now);
                }
            }
        }
        let end = if self.totals.truncated { self.now } else { self.last_finish };
        self.close_buckets_until(end);
        let open = self.totals.submitted - self.totals.completed - self.totals.aborted;
        if open > 0 {
            self.totals.truncated = true;
        }
        self.totals.pending = open;
        self.totals.elapsed_s = end as f64 / NS_PER_S;
        self.totals.overall_tps =
            if end > 0 { self.totals.completed as f64 / self.totals.elapsed_s } else { 0.0 };
        for k in RequestKind::ALL {
            self.totals.requests.entry(k).or_insert(0);
        }
        Ok(self.into_outcome())
    }

    fn into_outcome(self) -> SimOutcome {
        let bucket_s = self.bucket_ns as f64 / NS_PER_S;
        let mut throughput = Vec::with_capacity(self.buckets.len());
        let mut latency_series = Vec::with_capacity(self.buckets.len());
        let mut loads = Vec::with_capacity(self.buckets.len());
        let mut all_latencies = Vec::new();
        let (mut sub, mut fin) = (0u64, 0u64);
        let n = self.n_shards as usize;
        for (b, bucket) in self.buckets.into_iter().enumerate() {
            sub += bucket.submitted;
            fin += bucket.completed + bucket.aborted;
            throughput.push(ThroughputPoint {
                bucket: b as u64,
                submitted: bucket.submitted,
                completed: bucket.completed,
                aborted: bucket.aborted,
                pending: sub - fin,
            });
            latency_series.push(LatencyPoint {
                bucket: b as u64,
                completed: bucket.completed,
                percentiles: percentiles(&bucket.latencies),
            });
            loads.push(ShardLoadPoint {
                bucket: b as u64,
                busy_fraction: bucket.busy_ns.iter().map(|&x| x as f64 / self.bucket_ns as f64).collect(),
                queue_length: bucket.queue_end.unwrap_or_else(|| vec![0; n]),
            });
            all_latencies.extend(bucket.latencies);
        }
        SimOutcome {
            report: SimReport {
                n_shards: self.n_shards,
                bucket_s,
                throughput_series: throughput,
                latency: percentiles(&all_latencies),
                latency_series,
                shard_load_series: loads,
                totals: self.totals,
            },
            decisions: self.decisions,
            trace: self.trace,
        }
    }
}

fn arrival_times(n: usize, drive: &DriveConfig) -> Vec<u64> {
    let gap = NS_PER_S / drive.arrival_rate_tps;
    match drive.arrivals {
        ArrivalProcess::Uniform => (0..n).map(|i| (i as f64 * gap).round() as u64).collect(),
        ArrivalProcess::Poisson => {
            let exp = Exp::new(drive.arrival_rate_tps).expect("validated rate");
            let mut rng = rng_for(drive.seed, "arrivals");
            let mut t = 0.0;
            (0..n)
                .map(|i| {
                    if i > 0 {
                        t += exp.sample(&mut rng) * NS_PER_S;
                    }
                    t.round() as u64
                })
                .collect()
        }
    }
}

fn check_decisions(stream: &TxStream, decisions: &[PlacementDecision]) -> Result<u32, SimError> {
    if decisions.len() != stream.len() {
        return Err(SimError::DecisionCount { expected: stream.len(), given: decisions.len() });
    }
    let mut max_shard = 0;
    for (i, (tx, d)) in stream.transactions().iter().zip(decisions).enumerate() {
        if tx.id != d.tx {
            return Err(SimError::DecisionMismatch { index: i, expected: tx.id, got: d.tx });
        }
        max_shard = d.input_shards.iter().chain([&d.output_shard]).map(|s| s.0).fold(max_shard, u32::max);
    }
    Ok(max_shard + 1)
}

/// Runs the stream through the cluster.
///
/// With precomputed decisions the shard count is `n_shards` (it must cover
/// every shard named by a decision); live placement takes it from the placer.
pub fn simulate(
    stream: &TxStream,
    placement: Placement<'_>,
    n_shards: u32,
    cost: &CostModel,
    drive: &DriveConfig,
    failures: &LockFailures,
) -> Result<SimOutcome, SimError> {
    cost.validate()?;
    drive.validate()?;
    let mut placement = placement;
    let n_shards = match &mut placement {
        Placement::Precomputed(d) => {
            let needed = check_decisions(stream, d)?;
            if n_shards == 0 {
                return config_err("n_shards must be at least 1");
            }
            if !d.is_empty() && needed > n_shards {
                return config_err(format!("decisions use {needed} shards but the cluster has {n_shards}"));
            }
            let cross: BTreeMap<TxId, bool> = d.iter().map(|d| (d.tx, d.cross_shard)).collect();
            for tx in failures.iter() {
                match cross.get(tx) {
                    None => return Err(SimError::UnknownTx(*tx)),
                    Some(false) => return Err(SimError::NotCrossShard(*tx)),
                    Some(true) => {}
                }
            }
            n_shards
        }
        Placement::Live { placer, feedback } => {
            if placer.state().n_shards() != n_shards {
                return config_err(format!(
                    "placer has {} shards but the cluster has {n_shards}",
                    placer.state().n_shards()
                ));
            }
            if *feedback {
                let q = drive.feedback_norm.unwrap_or_else(|| cost.default_feedback_norm(drive.arrival_rate_tps));
                placer.state_mut().set_feedback_norm(q)?;
            }
            if let Some(tx) = failures.iter().find(|t| stream.get(t).is_none()) {
                return Err(SimError::UnknownTx(*tx));
            }
            n_shards
        }
    };
    let jitter = (cost.jitter_sigma > 0.0).then(|| {
        (LogNormal::new(0.0, cost.jitter_sigma).expect("validated sigma"), rng_for(drive.seed, "service-jitter"))
    });
    let n = stream.len();
    let engine = Engine {
        stream,
        placement,
        failures,
        drive,
        cost: cost.clone(),
        n_shards,
        link: cost.link_ns(),
        bucket_ns: ((drive.bucket_s * NS_PER_S).round() as u64).max(1),
        heap: BinaryHeap::new(),
        seq: 0,
        reqs: Vec::with_capacity(n * 2),
        txs: (0..n).map(|_| TxRun::default()).collect(),
        decisions: Vec::with_capacity(n),
        cluster: Cluster::new(n_shards, cost.clone()),
        started: vec![0; n_shards as usize],
        buckets: Vec::new(),
        feedback: None,
        trace: drive.trace.then(Vec::new),
        jitter,
        totals: SimTotals { busy_s: vec![0.0; n_shards as usize], ..SimTotals::default() },
        now: 0,
        last_finish: 0,
        arrivals: arrival_times(n, drive),
    };
    engine.run()
}

/// Checks the commit protocol against a trace: completed cross-shard
/// transactions ran every LOCK before their COMMIT started, and aborted ones
/// never committed and unlocked every shard that locked successfully.
pub fn audit_atomicity(trace: &[TraceEvent], decisions: &[PlacementDecision]) -> Result<(), String> {
    #[derive(Default)]
    struct Seen {
        lock_ends: Vec<(u64, ShardId, bool)>,
        commit_starts: Vec<u64>,
        commits: u32,
        unlocks: Vec<ShardId>,
        outcome: Option<TxOutcome>,
    }
    let mut seen: BTreeMap<TxId, Seen> = BTreeMap::new();
    for ev in trace {
        match *ev {
            TraceEvent::Request { t_ns, tx, kind, shard, phase, ok } => {
                let s = seen.entry(tx).or_default();
                match (kind, phase) {
                    (RequestKind::Lock, Phase::End) => s.lock_ends.push((t_ns, shard, ok)),
                    (RequestKind::Commit, Phase::Start) => {
                        s.commit_starts.push(t_ns);
                        s.commits += 1;
                    }
                    (RequestKind::Unlock, Phase::End) => s.unlocks.push(shard),
                    _ => {}
                }
            }
            TraceEvent::Finish { tx, outcome, .. } => {
                let s = seen.entry(tx).or_default();
                if s.outcome.replace(outcome).is_some() {
                    return Err(format!("{tx} finished twice"));
                }
            }
            TraceEvent::Submit { .. } => {}
        }
    }
    for d in decisions.iter().filter(|d| d.cross_shard) {
        let Some(s) = seen.get(&d.tx) else { continue };
        match s.outcome {
            Some(TxOutcome::Completed) => {
                if s.lock_ends.len() != d.input_shards.len() || s.lock_ends.iter().any(|l| !l.2) {
                    return Err(format!("{} committed without every LOCK succeeding", d.tx));
                }
                let last_lock = s.lock_ends.iter().map(|l| l.0).max().unwrap_or(0);
                if s.commits != 1 || s.commit_starts[0] < last_lock {
                    return Err(format!("{} started COMMIT before all LOCKs finished", d.tx));
                }
            }
            Some(TxOutcome::Aborted) => {
                if s.commits > 0 {
                    return Err(format!("aborted {} executed a COMMIT", d.tx));
                }
                let mut locked: Vec<ShardId> = s.lock_ends.iter().filter(|l| l.2).map(|l| l.1).collect();
                let mut unlocked = s.unlocks.clone();
                locked.sort_unstable();
                unlocked.sort_unstable();
                if locked != unlocked {
                    return Err(format!("aborted {} locked {:?} but unlocked {:?}", d.tx, locked, unlocked));
                }
            }
            None => {}
        }
    }
    Ok(())
}

/// Checks submitted = completed + aborted + pending for every bucket.
pub fn check_conservation(report: &SimReport) -> Result<(), String> {
    let (mut sub, mut done) = (0u64, 0u64);
    for p in &report.throughput_series {
        sub += p.submitted;
        done += p.completed + p.aborted;
        if p.completed > sub || sub != done + p.pending {
            return Err(format!("bucket {}: submitted {sub} != finished {done} + pending {}", p.bucket, p.pending));
        }
    }
    let t = &report.totals;
    if t.submitted != t.completed + t.aborted + t.pending {
        return Err(format!(
            "totals: submitted {} != completed {} + aborted {} + pending {}",
            t.submitted, t.completed, t.aborted, t.pending
        ));
    }
    Ok(())
}

pub const THROUGHPUT_HEADER: &str = "time_s,submitted,completed,aborted,pending";
pub const LATENCY_HEADER: &str = "time_s,completed,p50_ms,p95_ms,p99_ms";
pub const SHARD_LOAD_HEADER: &str = "time_s,shard,busy_fraction,queue_length";

impl SimReport {
    fn bucket_start(&self, b: u64) -> f64 {
        b as f64 * self.bucket_s
    }

    pub fn write_throughput_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{THROUGHPUT_HEADER}")?;
        for p in &self.throughput_series {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.bucket_start(p.bucket),
                p.submitted,
                p.completed,
                p.aborted,
                p.pending
            )?;
        }
        w.flush()
    }

    /// Buckets without completions have empty percentile cells.
    pub fn write_latency_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{LATENCY_HEADER}")?;
        for p in &self.latency_series {
            let t = self.bucket_start(p.bucket);
            match p.percentiles {
                Some(q) => writeln!(w, "{t},{},{},{},{}", p.completed, q.p50_ms, q.p95_ms, q.p99_ms)?,
                None => writeln!(w, "{t},{},,,", p.completed)?,
            }
        }
        w.flush()
    }

    pub fn write_shard_load_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SHARD_LOAD_HEADER}")?;
        for p in &self.shard_load_series {
            let t = self.bucket_start(p.bucket);
            for (s, (busy, q)) in p.busy_fraction.iter().zip(&p.queue_length).enumerate() {
                writeln!(w, "{t},{s},{busy},{q}")?;
            }
        }
        w.flush()
    }

    /// JSON summary: totals, overall percentiles and the run configuration.
    pub fn summary_json(&self, cost: &CostModel, drive: &DriveConfig, label: &str) -> serde_json::Value {
        serde_json::json!({
            "placement": label,
            "n_shards": self.n_shards,
            "bucket_s": self.bucket_s,
            "totals": self.totals,
            "latency": self.latency,
            "cost_model": cost,
            "drive": drive,
        })
    }

    /// Writes `throughput.csv`, `latency.csv`, `shard_load.csv` and
    /// `summary.json` into `dir`, which must exist.
    pub fn write_dir(
        &self,
        dir: &Path,
        cost: &CostModel,
        drive: &DriveConfig,
        label: &str,
    ) -> Result<Vec<PathBuf>, SimError> {
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .map(io::BufWriter::new)
                .map(|f| (f, path.clone()))
                .map_err(|source| SimError::Io { path, source })
        };
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SimError::Io { path, source }
        };
        let mut written = Vec::new();
        let (f, p) = create("throughput.csv")?;
        self.write_throughput_csv(f).map_err(io_err(&p))?;
        written.push(p);
        let (f, p) = create("latency.csv")?;
        self.write_latency_csv(f).map_err(io_err(&p))?;
        written.push(p);
        let (f, p) = create("shard_load.csv")?;
        self.write_shard_load_csv(f).map_err(io_err(&p))?;
        written.push(p);
        let (mut f, p) = create("summary.json")?;
        let text = serde_json::to_string_pretty(&self.summary_json(cost, drive, label)).expect("summary serialises");
        writeln!(f, "{text}").and_then(|_| f.flush()).map_err(io_err(&p))?;
        written.push(p);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::{place_stream, Algorithm};
    use crate::txgraph::test_support::{id, tx};
    use crate::txgraph::Transaction;

    fn decision(n: u64, out: u32, inputs: &[u32]) -> PlacementDecision {
        let input_shards: Vec<ShardId> = inputs.iter().map(|&s| ShardId(s)).collect();
        let cross_shard = input_shards.iter().any(|&s| s != ShardId(out));
        PlacementDecision {
            arrival_index: n,
            tx: id(n),
            output_shard: ShardId(out),
            input_shards,
            cross_shard,
            fitness_max: None,
        }
    }

    fn zero_link() -> CostModel {
        CostModel { link_latency_ms: 0.0, ..CostModel::default() }
    }

    fn stream_of(txs: Vec<Transaction>) -> TxStream {
        TxStream::new(txs, BTreeMap::new()).unwrap()
    }

    fn run(stream: &TxStream, d: &[PlacementDecision], n: u32, cost: &CostModel, fail: &LockFailures) -> SimOutcome {
        let drive = DriveConfig { trace: true, ..DriveConfig::default() };
        simulate(stream, Placement::Precomputed(d), n, cost, &drive, fail).unwrap()
    }

    #[test]
    fn plans() {
        let single = plan_requests(&decision(1, 2, &[2]));
        assert_eq!(single.kinds(), vec![(RequestKind::Tx, ShardId(2))]);
        let coinbase = plan_requests(&decision(1, 3, &[]));
        assert_eq!(coinbase.kinds(), vec![(RequestKind::Tx, ShardId(3))]);
        let cross = plan_requests(&decision(1, 3, &[1, 2]));
        assert_eq!(
            cross.kinds(),
            vec![(RequestKind::Lock, ShardId(1)), (RequestKind::Lock, ShardId(2)), (RequestKind::Commit, ShardId(3))]
        );
        assert_eq!(cross.requests[2].depends_on, BTreeSet::from([0, 1]));
        let abort = plan_abort(id(1), &[ShardId(2)]);
        assert_eq!(abort.kinds(), vec![(RequestKind::Unlock, ShardId(2))]);
    }

    #[test]
    fn single_shard_latency_is_one_service_time() {
        let s = stream_of(vec![tx(1, &[])]);
        let out = run(&s, &[decision(1, 0, &[])], 1, &zero_link(), &LockFailures::none());
        let p = out.report.latency.unwrap();
        assert!((p.p50_ms - 0.211).abs() < 1e-12);
        assert_eq!(out.report.totals.completed, 1);
    }

    #[test]
    fn cross_shard_latency_is_lock_plus_commit() {
        let s = stream_of(vec![tx(1, &[]), tx(2, &[(1, 0)])]);
        let d = [decision(1, 0, &[]), decision(2, 1, &[0])];
        // Submit the child long after the parent so queues are empty.
        let drive = DriveConfig { arrival_rate_tps: 1.0, ..DriveConfig::default() };
        let out = simulate(&s, Placement::Precomputed(&d), 2, &zero_link(), &drive, &LockFailures::none()).unwrap();
        let lat = &out.report.latency_series[1];
        assert!((lat.percentiles.unwrap().p50_ms - (0.438 + 0.259)).abs() < 1e-12);
    }

    #[test]
    fn link_latency_adds_three_hops_for_cross_shard() {
        let s = stream_of(vec![tx(1, &[]), tx(2, &[(1, 0)])]);
        let d = [decision(1, 0, &[]), decision(2, 1, &[0])];
        let drive = DriveConfig { arrival_rate_tps: 1.0, ..DriveConfig::default() };
        let out = simulate(&s, Placement::Precomputed(&d), 2, &CostModel::default(), &drive, &LockFailures::none())
            .unwrap();
        let single = out.report.latency_series[0].percentiles.unwrap().p50_ms;
        let cross = out.report.latency_series[1].percentiles.unwrap().p50_ms;
        assert!((single - 100.211).abs() < 1e-9);
        assert!((cross - 300.697).abs() < 1e-9);
    }

    #[test]
    fn work_ratio() {
        let s = stream_of(vec![tx(1, &[]), tx(2, &[(1, 0)])]);
        let d = [decision(1, 0, &[]), decision(2, 1, &[0])];
        let out = run(&s, &d, 2, &zero_link(), &LockFailures::none());
        let busy: Vec<f64> = out.report.totals.busy_s.clone();
        // Shard 0 ran the coinbase TX and the LOCK, shard 1 the COMMIT.
        let cross = busy[0] - 211e-6 + busy[1];
        assert!((cross / 211e-6 - (438.0 + 259.0) / 211.0).abs() < 1e-6);
        assert!(cross / 211e-6 > 3.0);
    }

    #[test]
    fn empty_stream() {
        let s = stream_of(vec![]);
        let out = run(&s, &[], 4, &CostModel::default(), &LockFailures::none());
        assert_eq!(out.report.totals.overall_tps, 0.0);
        assert!(out.report.latency.is_none());
        assert!(out.report.throughput_series.is_empty());
    }

    #[test]
    fn probes() {
        let mut c = Cluster::new(2, CostModel::default());
        assert_eq!(c.probe(ShardId(0)).0, 0);
        for _ in 0..100 {
            c.enqueue(ShardId(1), RequestKind::Lock);
        }
        let fb = feedback_probe(&c, ShardId(1));
        assert_eq!(fb.queue_length, vec![100]);
        assert!(fb.sampled_latency_ms[0] >= 100.0 * 0.438);
        let bad = DriveConfig { probe_period_ms: 0.0, ..DriveConfig::default() };
        assert!(matches!(bad.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn injected_failure_aborts_and_unlocks() {
        let s = stream_of(vec![tx(1, &[]), tx(2, &[]), tx(3, &[(1, 0), (2, 0)])]);
        let d = [decision(1, 0, &[]), decision(2, 1, &[]), decision(3, 2, &[0, 1])];
        let f = inject_lock_failure(&d, [id(3)]).unwrap();
        let out = run(&s, &d, 3, &zero_link(), &f);
        let t = &out.report.totals;
        assert_eq!((t.completed, t.aborted), (2, 1));
        assert_eq!(t.requests[&RequestKind::Unlock], 1);
        assert_eq!(t.requests[&RequestKind::Commit], 0);
        audit_atomicity(out.trace.as_ref().unwrap(), &out.decisions).unwrap();
        check_conservation(&out.report).unwrap();

        assert!(matches!(inject_lock_failure(&d, [id(1)]), Err(SimError::NotCrossShard(_))));
        assert!(inject_lock_failure(&d, []).unwrap().is_empty());
    }

    #[test]
    fn single_input_failure_needs_no_unlock() {
        let s = stream_of(vec![tx(1, &[]), tx(2, &[(1, 0)])]);
        let d = [decision(1, 0, &[]), decision(2, 1, &[0])];
        let f = inject_lock_failure(&d, [id(2)]).unwrap();
        let out = run(&s, &d, 2, &zero_link(), &f);
        assert_eq!(out.report.totals.aborted, 1);
        assert_eq!(out.report.totals.requests[&RequestKind::Unlock], 0);
    }

    fn chain_stream(n: u64) -> TxStream {
        let mut txs = vec![tx(1, &[])];
        for i in 2..=n {
            txs.push(tx(i, &[(i - 1, 0)]));
        }
        stream_of(txs)
    }

    #[test]
    fn all_cross_failed_leaves_single_shard_completions() {
        let s = chain_stream(200);
        let run_hp = place_stream(&s, Algorithm::Hp, 4, None).unwrap();
        let cross: Vec<TxId> = run_hp.decisions.iter().filter(|d| d.cross_shard).map(|d| d.tx).collect();
        let single = run_hp.decisions.len() - cross.len();
        let f = inject_lock_failure(&run_hp.decisions, cross).unwrap();
        let out = run(&s, &run_hp.decisions, 4, &CostModel::default(), &f);
        assert_eq!(out.report.totals.completed as usize, single);
        audit_atomicity(out.trace.as_ref().unwrap(), &out.decisions).unwrap();
    }

    #[test]
    fn deterministic_with_jitter_and_poisson() {
        let s = chain_stream(300);
        let d = place_stream(&s, Algorithm::Hp, 4, None).unwrap().decisions;
        let cost = CostModel { jitter_sigma: 0.3, ..CostModel::default() };
        let drive = DriveConfig { arrivals: ArrivalProcess::Poisson, seed: 9, ..DriveConfig::default() };
        let a = simulate(&s, Placement::Precomputed(&d), 4, &cost, &drive, &LockFailures::none()).unwrap();
        let b = simulate(&s, Placement::Precomputed(&d), 4, &cost, &drive, &LockFailures::none()).unwrap();
        assert_eq!(a.report, b.report);
        let p = a.report.latency.unwrap();
        assert!(p.p50_ms <= p.p95_ms && p.p95_ms <= p.p99_ms);
    }

    #[test]
    fn higher_rate_never_lowers_busy_time() {
        let s = chain_stream(500);
        let d = place_stream(&s, Algorithm::Hp, 4, None).unwrap().decisions;
        let busy = |rate: f64| {
            let drive = DriveConfig { arrival_rate_tps: rate, ..DriveConfig::default() };
            let out = simulate(&s, Placement::Precomputed(&d), 4, &CostModel::default(), &drive, &LockFailures::none())
                .unwrap();
            out.report.totals.busy_s.iter().sum::<f64>()
        };
        let rates = [100.0, 1_000.0, 10_000.0];
        let b: Vec<f64> = rates.iter().map(|&r| busy(r)).collect();
        assert!(b.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{b:?}");
    }

    #[test]
    fn cap_truncates() {
        let s = chain_stream(1_000);
        let d = place_stream(&s, Algorithm::Hp, 4, None).unwrap().decisions;
        let drive = DriveConfig { duration_cap_s: Some(0.05), ..DriveConfig::default() };
        let out = simulate(&s, Placement::Precomputed(&d), 4, &CostModel::default(), &drive, &LockFailures::none())
            .unwrap();
        assert!(out.report.totals.truncated);
        assert!(out.report.totals.pending > 0);
        check_conservation(&out.report).unwrap();
    }

    #[test]
    fn live_placement_matches_precomputed_without_feedback() {
        let s = chain_stream(300);
        let d = place_stream(&s, Algorithm::T2s, 4, None).unwrap().decisions;
        let placer = Placer::for_stream(&s, Algorithm::T2s, 4).unwrap();
        let drive = DriveConfig::default();
        let live = simulate(
            &s,
            Placement::Live { placer, feedback: false },
            4,
            &CostModel::default(),
            &drive,
            &LockFailures::none(),
        )
        .unwrap();
        assert_eq!(live.decisions, d);
    }

    #[test]
    fn breakdown_must_sum() {
        let mut b = CostBreakdown::default();
        b.tx.insert("sig".into(), 150.0);
        b.tx.insert("utxo_exist_value".into(), 40.0);
        b.tx.insert("spend_add".into(), 21.0);
        b.lock.insert("all".into(), 438.0);
        b.commit.insert("all".into(), 259.0);
        let ok = CostModel::default().with_breakdown(b.clone());
        ok.validate().unwrap();
        let bad = CostModel { tx_service_us: 300.0, ..ok };
        assert!(bad.validate().is_err());
        let cheap_sig = {
            let mut b = b;
            b.tx.insert("sig".into(), 50.0);
            CostModel::default().with_breakdown(b)
        };
        assert_eq!(cheap_sig.tx_service_us, 111.0);
    }

    #[test]
    fn percentile_ranks() {
        let v: Vec<u64> = (1..=100).map(|x| x * 1_000_000).collect();
        let p = percentiles(&v).unwrap();
        assert_eq!((p.p50_ms, p.p95_ms, p.p99_ms), (50.0, 95.0, 99.0));
        assert!(percentiles(&[]).is_none());
    }

    #[test]
    fn csv_shapes() {
        let s = chain_stream(50);
        let d = place_stream(&s, Algorithm::Hp, 2, None).unwrap().decisions;
        let out = run(&s, &d, 2, &CostModel::default(), &LockFailures::none());
        let mut buf = Vec::new();
        out.report.write_shard_load_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(SHARD_LOAD_HEADER));
        assert_eq!(text.lines().count(), 1 + 2 * out.report.shard_load_series.len());
    }
}
