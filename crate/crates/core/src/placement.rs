//! Streaming transaction placers.
//!
//! Every placer consumes transactions in arrival order and picks an output
//! shard for each one:
//!
//! * `hp`: prefix of the transaction id, dependency-blind.
//! * `greedy`: the shard holding most of the distinct parents.
//! * `t2s`: fitness-score propagation. A transaction's fitness array is the
//!   weighted sum of its parents' arrays (weight `1/n_c`, `n_c` being the
//!   number of children the parent has had so far, this one included). The
//!   output shard maximises fitness divided by partition size.
//! * `v2`: as `t2s`, but parents contribute once per spending input and
//!   `n_c` counts child edges.
//! * `optnorm`: as `t2s`, but the stored array is normalised to unit sum after
//!   the shard has been chosen.
//!
//! Coinbase transactions and external parents get a one-hot array at their
//! shard. Coinbase shards are chosen by `hp`.
//!
//! With feedback enabled, each T2S score is scaled by
//! `1 / (1 + queue_length / norm)`. This damping rule is our own stand-in for
//! latency-driven load balancing and can be tuned through `feedback_norm`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::txgraph::{Transaction, TxId, TxStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShardId(pub u32);

impl ShardId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ShardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Hp,
    Greedy,
    T2s,
    V2,
    OptNorm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Self::Hp, Self::Greedy, Self::T2s, Self::V2, Self::OptNorm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hp => "hp",
            Self::Greedy => "greedy",
            Self::T2s => "t2s",
            Self::V2 => "v2",
            Self::OptNorm => "optnorm",
        }
    }

    pub fn uses_fitness(self) -> bool {
        matches!(self, Self::T2s | Self::V2 | Self::OptNorm)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hp" => Ok(Self::Hp),
            "greedy" => Ok(Self::Greedy),
            "t2s" | "optchain-t2s" => Ok(Self::T2s),
            "v2" | "optchainv2" => Ok(Self::V2),
            "optnorm" => Ok(Self::OptNorm),
            _ => Err(PlacementError::UnknownAlgorithm(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("unknown placement algorithm '{0}' (expected hp, greedy, t2s, v2 or optnorm)")]
    UnknownAlgorithm(String),
    #[error("shard count must be at least 1")]
    NoShards,
    #[error("shard {shard} out of range for {n_shards} shards")]
    ShardOutOfRange { shard: u32, n_shards: u32 },
    #[error("transaction {child} arrived before its parent {parent} was placed")]
    UnplacedParent { child: TxId, parent: TxId },
    #[error("transaction {0} was already placed")]
    AlreadyPlaced(TxId),
    #[error("cannot normalise an all-zero fitness array")]
    ZeroFitness,
    #[error("fitness array has {got} elements, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("feedback normalisation constant must be positive, got {0}")]
    BadFeedbackNorm(f64),
    #[error("{0} must be greater than {1}")]
    BadThreshold(&'static str, f64),
    #[error("bucket window must be at least 1")]
    ZeroWindow,
    #[error("decisions row {row}: {message}")]
    BadDecisionRow { row: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-shard fitness scores of a transaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FitnessArray(Vec<f64>);

impl FitnessArray {
    pub fn new(scores: Vec<f64>) -> Self {
        Self(scores)
    }

    pub fn zeros(n_shards: usize) -> Self {
        Self(vec![0.0; n_shards])
    }

    pub fn one_hot(n_shards: usize, shard: ShardId) -> Self {
        let mut v = vec![0.0; n_shards];
        v[shard.index()] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest element, lowest index on ties.
    pub fn argmax(&self) -> ShardId {
        ShardId(argmax(self.0.iter().copied()) as u32)
    }

    fn add_scaled(&mut self, other: &FitnessArray, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    /// Divides every element by the element sum.
    pub fn normalize(&self) -> Result<FitnessArray, PlacementError> {
        let sum = self.sum();
        if !(sum > 0.0) {
            return Err(PlacementError::ZeroFitness);
        }
        Ok(Self(self.0.iter().map(|x| x / sum).collect()))
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Sampled server-side state used by feedback load balancing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShardFeedback {
    /// Requests pending per shard.
    pub queue_length: Vec<u64>,
    /// Latency sample per shard, milliseconds.
    pub sampled_latency_ms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub arrival_index: u64,
    pub tx: TxId,
    pub output_shard: ShardId,
    /// Output shards of all parents, ascending.
    pub input_shards: Vec<ShardId>,
    pub cross_shard: bool,
    /// Largest element of the stored fitness array, for fitness-based placers.
    pub fitness_max: Option<f64>,
}

impl PlacementDecision {
    pub fn is_coinbase(&self) -> bool {
        self.input_shards.is_empty()
    }
}

/// Mutable state of a streaming placer. Cloning yields a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacerState {
    algorithm: Algorithm,
    n_shards: u32,
    feedback_norm: f64,
    shards: HashMap<TxId, ShardId>,
    fitness: HashMap<TxId, FitnessArray>,
    children_seen: HashMap<TxId, u64>,
    partition_sizes: Vec<u64>,
}

impl PlacerState {
    pub fn new(algorithm: Algorithm, n_shards: u32) -> Result<Self, PlacementError> {
        if n_shards == 0 {
            return Err(PlacementError::NoShards);
        }
        Ok(Self {
            algorithm,
            n_shards,
            feedback_norm: 1.0,
            shards: HashMap::new(),
            fitness: HashMap::new(),
            children_seen: HashMap::new(),
            partition_sizes: vec![0; n_shards as usize],
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn n_shards(&self) -> u32 {
        self.n_shards
    }

    pub fn feedback_norm(&self) -> f64 {
        self.feedback_norm
    }

    pub fn set_feedback_norm(&mut self, norm: f64) -> Result<(), PlacementError> {
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(PlacementError::BadFeedbackNorm(norm));
        }
        self.feedback_norm = norm;
        Ok(())
    }

    pub fn partition_sizes(&self) -> &[u64] {
        &self.partition_sizes
    }

    pub fn shard_of(&self, id: &TxId) -> Option<ShardId> {
        self.shards.get(id).copied()
    }

    pub fn fitness_of(&self, id: &TxId) -> Option<&FitnessArray> {
        self.fitness.get(id)
    }

    pub fn children_seen(&self, id: &TxId) -> u64 {
        self.children_seen.get(id).copied().unwrap_or(0)
    }

    /// Stored fitness arrays of all placed transactions and external parents.
    pub fn fitness_entries(&self) -> impl Iterator<Item = (&TxId, &FitnessArray)> {
        self.fitness.iter()
    }

    /// Records a transaction placed before the stream start. It gets a
    /// one-hot fitness array and does not count towards partition sizes.
    pub fn register_external(&mut self, id: TxId, shard: u32) -> Result<(), PlacementError> {
        if shard >= self.n_shards {
            return Err(PlacementError::ShardOutOfRange { shard, n_shards: self.n_shards });
        }
        if self.shards.insert(id, ShardId(shard)).is_some() {
            return Err(PlacementError::AlreadyPlaced(id));
        }
        if self.algorithm.uses_fitness() {
            self.fitness.insert(id, FitnessArray::one_hot(self.n_shards as usize, ShardId(shard)));
        }
        Ok(())
    }

    fn check_len(&self, fitness: &FitnessArray) -> Result<(), PlacementError> {
        if fitness.len() != self.n_shards as usize {
            return Err(PlacementError::LengthMismatch { expected: self.n_shards as usize, got: fitness.len() });
        }
        Ok(())
    }
}

/// Hash placement: the first `ceil(log2 n_s)` bits of the id, modulo `n_s`.
pub fn place_hp(id: &TxId, n_shards: u32) -> ShardId {
    if n_shards <= 1 {
        return ShardId(0);
    }
    let bits = 32 - (n_shards - 1).leading_zeros();
    let prefix = u64::from_be_bytes(id.as_bytes()[..8].try_into().unwrap());
    ShardId(((prefix >> (64 - bits)) % n_shards as u64) as u32)
}

fn compute_fitness(tx: &Transaction, state: &PlacerState, multiset: bool) -> Result<FitnessArray, PlacementError> {
    let n = state.n_shards as usize;
    if tx.is_coinbase() {
        return Ok(FitnessArray::one_hot(n, place_hp(&tx.id, state.n_shards)));
    }
    let mut out = FitnessArray::zeros(n);
    for (parent, edges) in tx.parent_multiset() {
        let parent_fitness = state
            .fitness
            .get(&parent)
            .ok_or(PlacementError::UnplacedParent { child: tx.id, parent })?;
        let added = if multiset { edges as u64 } else { 1 };
        let children = state.children_seen(&parent) + added;
        out.add_scaled(parent_fitness, added as f64 / children as f64);
    }
    Ok(out)
}

/// Weighted sum of distinct parents' fitness arrays, weight `1/n_c` with the
/// arriving transaction already counted in `n_c`.
pub fn compute_fitness_t2s(tx: &Transaction, state: &PlacerState) -> Result<FitnessArray, PlacementError> {
    compute_fitness(tx, state, false)
}

/// Multiset variant: a parent referenced by `k` inputs contributes `k / n_c`
/// times its array, where `n_c` counts child edges.
pub fn compute_fitness_v2(tx: &Transaction, state: &PlacerState) -> Result<FitnessArray, PlacementError> {
    compute_fitness(tx, state, true)
}

/// Argmax of fitness over partition size, optionally damped by queue feedback.
pub fn select_shard(
    fitness: &FitnessArray,
    state: &PlacerState,
    feedback: Option<&ShardFeedback>,
) -> Result<ShardId, PlacementError> {
    state.check_len(fitness)?;
    if let Some(fb) = feedback {
        if fb.queue_length.len() != fitness.len() {
            return Err(PlacementError::LengthMismatch { expected: fitness.len(), got: fb.queue_length.len() });
        }
    }
    let norm = state.feedback_norm;
    let scores = fitness.as_slice().iter().enumerate().map(|(i, f)| {
        let t2s = f / state.partition_sizes[i].max(1) as f64;
        match feedback {
            Some(fb) => t2s / (1.0 + fb.queue_length[i] as f64 / norm),
            None => t2s,
        }
    });
    Ok(ShardId(argmax(scores) as u32))
}

fn plurality_shard(parent_shards: &[ShardId], n_shards: u32) -> ShardId {
    let mut counts = vec![0u32; n_shards as usize];
    for s in parent_shards {
        counts[s.index()] += 1;
    }
    ShardId(argmax(counts.into_iter().map(f64::from)) as u32)
}

/// A sequential placer. Feed it transactions in stream order.
#[derive(Clone, Debug)]
pub struct Placer {
    state: PlacerState,
}

impl Placer {
    pub fn new(algorithm: Algorithm, n_shards: u32) -> Result<Self, PlacementError> {
        Ok(Self { state: PlacerState::new(algorithm, n_shards)? })
    }

    /// A placer with the stream's external parents already registered.
    pub fn for_stream(stream: &TxStream, algorithm: Algorithm, n_shards: u32) -> Result<Self, PlacementError> {
        let mut placer = Self::new(algorithm, n_shards)?;
        for (&id, &shard) in stream.external_parents() {
            placer.state.register_external(id, shard)?;
        }
        Ok(placer)
    }

    pub fn from_state(state: PlacerState) -> Self {
        Self { state }
    }

    pub fn state(&self) -> &PlacerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut PlacerState {
        &mut self.state
    }

    pub fn into_state(self) -> PlacerState {
        self.state
    }

    pub fn place(
        &mut self,
        tx: &Transaction,
        feedback: Option<&ShardFeedback>,
    ) -> Result<PlacementDecision, PlacementError> {
        let state = &mut self.state;
        if state.shards.contains_key(&tx.id) {
            return Err(PlacementError::AlreadyPlaced(tx.id));
        }
        let parents = tx.parent_multiset();
        let parent_shards = parents
            .iter()
            .map(|(p, _)| {
                state
                    .shards
                    .get(p)
                    .copied()
                    .ok_or(PlacementError::UnplacedParent { child: tx.id, parent: *p })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let (output_shard, stored) = match state.algorithm {
            Algorithm::Hp => (place_hp(&tx.id, state.n_shards), None),
            Algorithm::Greedy if tx.is_coinbase() => (place_hp(&tx.id, state.n_shards), None),
            Algorithm::Greedy => (plurality_shard(&parent_shards, state.n_shards), None),
            Algorithm::T2s | Algorithm::V2 | Algorithm::OptNorm => {
                let fitness = if state.algorithm == Algorithm::V2 {
                    compute_fitness_v2(tx, state)?
                } else {
                    compute_fitness_t2s(tx, state)?
                };
                let shard = if tx.is_coinbase() {
                    place_hp(&tx.id, state.n_shards)
                } else {
                    select_shard(&fitness, state, feedback)?
                };
                let stored = if state.algorithm == Algorithm::OptNorm { fitness.normalize()? } else { fitness };
                (shard, Some(stored))
            }
        };

        for (parent, edges) in &parents {
            let added = if state.algorithm == Algorithm::V2 { *edges as u64 } else { 1 };
            *state.children_seen.entry(*parent).or_insert(0) += added;
        }
        state.partition_sizes[output_shard.index()] += 1;
        state.shards.insert(tx.id, output_shard);
        let fitness_max = stored.as_ref().map(FitnessArray::max);
        if let Some(f) = stored {
            state.fitness.insert(tx.id, f);
        }

        let mut input_shards = parent_shards;
        input_shards.sort_unstable();
        input_shards.dedup();
        let cross_shard = input_shards.iter().any(|&s| s != output_shard);
        Ok(PlacementDecision {
            arrival_index: tx.arrival_index,
            tx: tx.id,
            output_shard,
            input_shards,
            cross_shard,
            fitness_max,
        })
    }
}

/// Decisions plus the placer state they left behind.
#[derive(Clone, Debug)]
pub struct PlacementRun {
    pub decisions: Vec<PlacementDecision>,
    pub state: PlacerState,
}

/// Places a whole stream. `feedback` is consulted before each transaction.
pub fn place_stream(
    stream: &TxStream,
    algorithm: Algorithm,
    n_shards: u32,
    mut feedback: Option<&mut dyn FnMut(&Transaction) -> ShardFeedback>,
) -> Result<PlacementRun, PlacementError> {
    let mut placer = Placer::for_stream(stream, algorithm, n_shards)?;
    let mut decisions = Vec::with_capacity(stream.len());
    for tx in stream.transactions() {
        let fb = feedback.as_mut().map(|f| f(tx));
        decisions.push(placer.place(tx, fb.as_ref())?);
    }
    Ok(PlacementRun { decisions, state: placer.into_state() })
}

/// Transactions with at least `k` distinct parents whose fitness argmax is
/// the same shard.
pub fn detect_aggregating(
    stream: &TxStream,
    state: &PlacerState,
    k: usize,
) -> Result<BTreeSet<TxId>, PlacementError> {
    if k < 2 {
        return Err(PlacementError::BadThreshold("aggregation parent threshold", 1.0));
    }
    let mut out = BTreeSet::new();
    let mut counts = vec![0usize; state.n_shards as usize];
    for tx in stream.transactions() {
        if tx.inputs.len() < k {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for parent in tx.parent_set() {
            if let Some(f) = state.fitness.get(&parent) {
                counts[f.argmax().index()] += 1;
            }
        }
        if counts.iter().any(|&c| c >= k) {
            out.insert(tx.id);
        }
    }
    Ok(out)
}

/// Transactions whose stored fitness array has an element above `threshold`.
pub fn detect_tainted(state: &PlacerState, threshold: f64) -> Result<BTreeSet<TxId>, PlacementError> {
    if !(threshold > 1.0) {
        return Err(PlacementError::BadThreshold("taint threshold", 1.0));
    }
    Ok(state
        .fitness
        .iter()
        .filter(|(_, f)| f.max() > threshold)
        .map(|(id, _)| *id)
        .collect())
}

/// Largest `fitness_max` per bucket of `window` decisions. Buckets without
/// fitness values are skipped.
pub fn max_fitness_series(
    decisions: &[PlacementDecision],
    window: usize,
) -> Result<Vec<(usize, f64)>, PlacementError> {
    if window == 0 {
        return Err(PlacementError::ZeroWindow);
    }
    Ok(decisions
        .chunks(window)
        .enumerate()
        .filter_map(|(b, chunk)| {
            chunk
                .iter()
                .filter_map(|d| d.fitness_max)
                .reduce(f64::max)
                .map(|m| (b, m))
        })
        .collect())
}

pub const DECISIONS_HEADER: &str = "arrival_index,tx_id,algorithm,output_shard,cross_shard,fitness_max";

pub fn write_decisions_csv<W: Write>(
    mut w: W,
    algorithm: Algorithm,
    decisions: &[PlacementDecision],
) -> io::Result<()> {
    writeln!(w, "{DECISIONS_HEADER}")?;
    for d in decisions {
        write!(w, "{},{},{},{},{},", d.arrival_index, d.tx, algorithm, d.output_shard, d.cross_shard)?;
        if let Some(m) = d.fitness_max {
            write!(w, "{m}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Reads a decisions CSV back, recomputing input shards from the stream and
/// its external parents.
pub fn read_decisions_csv<R: BufRead>(
    reader: R,
    stream: &TxStream,
) -> Result<(Algorithm, Vec<PlacementDecision>), PlacementError> {
    let bad = |row: usize, message: String| PlacementError::BadDecisionRow { row, message };
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == DECISIONS_HEADER => {}
        _ => return Err(bad(0, format!("expected header '{DECISIONS_HEADER}'"))),
    }
    let mut shard_of: HashMap<TxId, ShardId> =
        stream.external_parents().iter().map(|(id, &s)| (*id, ShardId(s))).collect();
    let mut algorithm = None;
    let mut decisions = Vec::with_capacity(stream.len());
    for (row, line) in lines.enumerate() {
        let row = row + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(row, format!("expected 6 fields, got {}", fields.len())));
        }
        let tx = stream
            .transactions()
            .get(decisions.len())
            .ok_or_else(|| bad(row, "more decisions than transactions".into()))?;
        let id: TxId = fields[1].parse().map_err(|e| bad(row, format!("{e}")))?;
        if id != tx.id {
            return Err(bad(row, format!("expected transaction {}, found {id}", tx.id)));
        }
        let alg: Algorithm = fields[2].parse()?;
        if *algorithm.get_or_insert(alg) != alg {
            return Err(bad(row, "mixed algorithms in one file".into()));
        }
        let output_shard = ShardId(fields[3].parse().map_err(|e| bad(row, format!("output_shard: {e}")))?);
        let fitness_max = match fields[5].trim() {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| bad(row, format!("fitness_max: {e}")))?),
        };
        let mut input_shards = tx
            .parent_set()
            .iter()
            .map(|p| shard_of.get(p).copied().ok_or_else(|| bad(row, format!("parent {p} has no decision"))))
            .collect::<Result<Vec<_>, _>>()?;
        input_shards.sort_unstable();
        input_shards.dedup();
        let cross_shard = input_shards.iter().any(|&s| s != output_shard);
        if fields[4].trim().parse::<bool>().ok() != Some(cross_shard) {
            return Err(bad(row, "cross_shard flag disagrees with parent shards".into()));
        }
        shard_of.insert(id, output_shard);
        decisions.push(PlacementDecision {
            arrival_index: tx.arrival_index,
            tx: id,
            output_shard,
            input_shards,
            cross_shard,
            fitness_max,
        });
    }
    if decisions.len() != stream.len() {
        return Err(bad(decisions.len(), format!("{} decisions for {} transactions", decisions.len(), stream.len())));
    }
    Ok((algorithm.unwrap_or(Algorithm::Hp), decisions))
}

pub const CHECKPOINT_FORMAT: &str = "shardplace-placer-state";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointEntry {
    id: TxId,
    shard: Option<ShardId>,
    children: u64,
    fitness: Option<FitnessArray>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    algorithm: Algorithm,
    n_shards: u32,
    feedback_norm: f64,
    partition_sizes: Vec<u64>,
    entries: Vec<CheckpointEntry>,
}

impl PlacerState {
    /// Writes a versioned JSON checkpoint. Entries are sorted by id so equal
    /// states produce identical bytes.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), PlacementError> {
        let mut ids: BTreeMap<TxId, ()> = self.shards.keys().map(|k| (*k, ())).collect();
        ids.extend(self.children_seen.keys().map(|k| (*k, ())));
        let mut entries = Vec::with_capacity(ids.len());
        for id in ids.into_keys() {
            let fitness = self.fitness.get(&id).cloned();
            if fitness.as_ref().is_some_and(|f| f.as_slice().iter().any(|x| !x.is_finite())) {
                return Err(PlacementError::Checkpoint(format!("non-finite fitness for {id}")));
            }
            entries.push(CheckpointEntry {
                id,
                shard: self.shards.get(&id).copied(),
                children: self.children_seen(&id),
                fitness,
            });
        }
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            algorithm: self.algorithm,
            n_shards: self.n_shards,
            feedback_norm: self.feedback_norm,
            partition_sizes: self.partition_sizes.clone(),
            entries,
        };
        serde_json::to_writer(&mut w, &cp).map_err(|e| PlacementError::Checkpoint(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(w.flush()?)
    }

    pub fn read_checkpoint<R: io::Read>(r: R) -> Result<Self, PlacementError> {
        let cp: Checkpoint = serde_json::from_reader(r).map_err(|e| PlacementError::Checkpoint(e.to_string()))?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(PlacementError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                cp.format, cp.version
            )));
        }
        let mut state = PlacerState::new(cp.algorithm, cp.n_shards)?;
        state.set_feedback_norm(cp.feedback_norm)?;
        if cp.partition_sizes.len() != cp.n_shards as usize {
            return Err(PlacementError::Checkpoint("partition size vector length mismatch".into()));
        }
        state.partition_sizes = cp.partition_sizes;
        for e in cp.entries {
            if let Some(s) = e.shard {
                if s.0 >= cp.n_shards {
                    return Err(PlacementError::ShardOutOfRange { shard: s.0, n_shards: cp.n_shards });
                }
                state.shards.insert(e.id, s);
            }
            if e.children > 0 {
                state.children_seen.insert(e.id, e.children);
            }
            if let Some(f) = e.fitness {
                state.check_len(&f)?;
                state.fitness.insert(e.id, f);
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txgraph::test_support::{id, tx};

    fn id_with_prefix(first: u8, n: u64) -> TxId {
        let mut b = *id(n).as_bytes();
        b[0] = first;
        TxId::from_bytes(b)
    }

    fn state_with(alg: Algorithm, n: u32, parents: &[(u64, &[f64], u64)]) -> PlacerState {
        let mut st = PlacerState::new(alg, n).unwrap();
        for &(p, f, children) in parents {
            let fa = FitnessArray::new(f.to_vec());
            st.shards.insert(id(p), fa.argmax());
            st.fitness.insert(id(p), fa);
            if children > 0 {
                st.children_seen.insert(id(p), children);
            }
        }
        st
    }

    #[test]
    fn hp_prefix_bits() {
        let zero = id_with_prefix(0x00, 1);
        assert_eq!(place_hp(&zero, 1), ShardId(0));
        assert_eq!(place_hp(&zero, 2), ShardId(0));
        assert_eq!(place_hp(&id_with_prefix(0x80, 1), 2), ShardId(1));
        assert_eq!(place_hp(&id_with_prefix(0xf0, 1), 16), ShardId(15));
        assert_eq!(place_hp(&id_with_prefix(0x10, 1), 16), ShardId(1));
        // 3 shards use 2 prefix bits, reduced mod 3.
        assert_eq!(place_hp(&id_with_prefix(0xc0, 1), 3), ShardId(0));
        assert_eq!(place_hp(&id_with_prefix(0x80, 1), 3), ShardId(2));
    }

    #[test]
    fn aggregating_parents_amplify_fitness() {
        let parents: Vec<(u64, &[f64], u64)> = (1..=10).map(|p| (p, &[0.0, 1.0][..], 0)).collect();
        let st = state_with(Algorithm::T2s, 2, &parents);
        let x = tx(100, &(1..=10).map(|p| (p, 0)).collect::<Vec<_>>());
        assert_eq!(compute_fitness_t2s(&x, &st).unwrap().as_slice(), &[0.0, 10.0]);
    }

    #[test]
    fn fitness_weights() {
        let st = state_with(Algorithm::T2s, 2, &[(1, &[0.3, 0.7], 0)]);
        assert_eq!(compute_fitness_t2s(&tx(2, &[(1, 0)]), &st).unwrap().as_slice(), &[0.3, 0.7]);

        // Parent already has one child: this one is the second, w = 1/2.
        let st = state_with(Algorithm::T2s, 2, &[(1, &[1.0, 0.0], 1)]);
        assert_eq!(compute_fitness_t2s(&tx(2, &[(1, 1)]), &st).unwrap().as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn v2_counts_edges() {
        let st = state_with(Algorithm::V2, 2, &[(1, &[0.0, 1.0], 0)]);
        let t = tx(2, &[(1, 0), (1, 1)]);
        assert_eq!(compute_fitness_v2(&t, &st).unwrap().as_slice(), &[0.0, 1.0]);
        // T2S sees one parent with weight 1 as well.
        assert_eq!(compute_fitness_t2s(&t, &st).unwrap().as_slice(), &[0.0, 1.0]);

        let st = state_with(Algorithm::V2, 2, &[(1, &[0.2, 0.8], 2), (2, &[1.0, 0.0], 0)]);
        let t = tx(3, &[(1, 0), (2, 0)]);
        assert_eq!(compute_fitness_v2(&t, &st).unwrap(), compute_fitness_t2s(&t, &st).unwrap());

        let coinbase = tx(9, &[]);
        let f = compute_fitness_v2(&coinbase, &st).unwrap();
        assert_eq!(f, FitnessArray::one_hot(2, place_hp(&coinbase.id, 2)));
    }

    #[test]
    fn unplaced_parent_is_an_error() {
        let st = PlacerState::new(Algorithm::T2s, 2).unwrap();
        assert!(matches!(
            compute_fitness_t2s(&tx(2, &[(1, 0)]), &st),
            Err(PlacementError::UnplacedParent { .. })
        ));
    }

    #[test]
    fn select_shard_examples() {
        let mut st = PlacerState::new(Algorithm::T2s, 2).unwrap();
        st.partition_sizes = vec![7, 7];
        assert_eq!(select_shard(&FitnessArray::new(vec![3.0, 10.0]), &st, None).unwrap(), ShardId(1));
        assert_eq!(select_shard(&FitnessArray::new(vec![1.0, 1.0]), &st, None).unwrap(), ShardId(0));
        st.partition_sizes = vec![10, 5];
        assert_eq!(select_shard(&FitnessArray::new(vec![1.0, 1.0]), &st, None).unwrap(), ShardId(1));
        assert!(select_shard(&FitnessArray::new(vec![1.0]), &st, None).is_err());
    }

    #[test]
    fn feedback_damps_busy_shards() {
        let mut st = PlacerState::new(Algorithm::T2s, 2).unwrap();
        st.set_feedback_norm(10.0).unwrap();
        let f = FitnessArray::new(vec![1.0, 0.8]);
        let idle = ShardFeedback { queue_length: vec![0, 0], sampled_latency_ms: vec![0.0; 2] };
        let busy = ShardFeedback { queue_length: vec![100, 0], sampled_latency_ms: vec![0.0; 2] };
        assert_eq!(select_shard(&f, &st, Some(&idle)).unwrap(), ShardId(0));
        assert_eq!(select_shard(&f, &st, Some(&busy)).unwrap(), ShardId(1));
        assert!(st.set_feedback_norm(0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = FitnessArray::new(vec![0.0, 10.0]).normalize().unwrap();
        assert_eq!(n.as_slice(), &[0.0, 1.0]);
        let n = FitnessArray::new(vec![3.0, 10.0]).normalize().unwrap();
        assert!((n.as_slice()[0] - 3.0 / 13.0).abs() < 1e-15);
        assert!((n.as_slice()[1] - 10.0 / 13.0).abs() < 1e-15);
        assert_eq!(FitnessArray::new(vec![2.0, 2.0]).normalize().unwrap().as_slice(), &[0.5, 0.5]);
        assert!(matches!(FitnessArray::zeros(3).normalize(), Err(PlacementError::ZeroFitness)));
    }

    fn chain(n: u64) -> TxStream {
        let mut txs = vec![tx(1, &[])];
        for i in 2..=n {
            txs.push(tx(i, &[(i - 1, 0)]));
        }
        TxStream::new(txs, Default::default()).unwrap()
    }

    #[test]
    fn chain_stays_with_head_under_t2s() {
        let s = chain(50);
        for alg in [Algorithm::T2s, Algorithm::OptNorm, Algorithm::V2, Algorithm::Greedy] {
            let run = place_stream(&s, alg, 4, None).unwrap();
            let head = run.decisions[0].output_shard;
            assert!(run.decisions.iter().all(|d| d.output_shard == head), "{alg}");
            assert!(run.decisions.iter().all(|d| !d.cross_shard), "{alg}");
            assert_eq!(run.state.partition_sizes().iter().sum::<u64>(), 50);
        }
        let run = place_stream(&s, Algorithm::T2s, 4, None).unwrap();
        assert_eq!(max_fitness_series(&run.decisions, 10).unwrap(), vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0)]);
    }

    #[test]
    fn greedy_plurality_with_tie_break() {
        let ext = BTreeMap::from([(id(1), 2), (id(2), 2), (id(3), 1), (id(4), 3), (id(5), 1)]);
        let s = TxStream::new(vec![tx(10, &[(1, 0), (2, 0), (3, 0)]), tx(11, &[(4, 0), (5, 0)])], ext).unwrap();
        let run = place_stream(&s, Algorithm::Greedy, 4, None).unwrap();
        assert_eq!(run.decisions[0].output_shard, ShardId(2));
        assert!(run.decisions[0].cross_shard);
        assert_eq!(run.decisions[0].input_shards, vec![ShardId(1), ShardId(2)]);
        assert_eq!(run.decisions[1].output_shard, ShardId(1));
    }

    #[test]
    fn coinbase_is_never_cross_shard() {
        let s = TxStream::new(vec![tx(1, &[]), tx(2, &[])], Default::default()).unwrap();
        for alg in Algorithm::ALL {
            let run = place_stream(&s, alg, 8, None).unwrap();
            assert!(run.decisions.iter().all(|d| !d.cross_shard && d.is_coinbase()));
            assert_eq!(run.decisions[0].output_shard, place_hp(&id(1), 8));
        }
    }

    #[test]
    fn external_parent_out_of_range() {
        let s = TxStream::new(vec![tx(2, &[(1, 0)])], BTreeMap::from([(id(1), 9)])).unwrap();
        assert!(matches!(
            place_stream(&s, Algorithm::T2s, 4, None),
            Err(PlacementError::ShardOutOfRange { shard: 9, .. })
        ));
    }

    #[test]
    fn detectors() {
        let ext: BTreeMap<TxId, u32> = (1..=10).map(|p| (id(p), 1)).collect();
        let x = tx(100, &(1..=10).map(|p| (p, 0)).collect::<Vec<_>>());
        let s = TxStream::new(vec![x], ext).unwrap();
        let run = place_stream(&s, Algorithm::T2s, 2, None).unwrap();
        assert_eq!(detect_aggregating(&s, &run.state, 10).unwrap(), BTreeSet::from([id(100)]));
        assert_eq!(detect_tainted(&run.state, 5.0).unwrap(), BTreeSet::from([id(100)]));
        assert_eq!(run.decisions[0].fitness_max, Some(10.0));

        let run = place_stream(&s, Algorithm::OptNorm, 2, None).unwrap();
        assert!(detect_tainted(&run.state, 5.0).unwrap().is_empty());

        // Five parents on each shard: no shard reaches k = 10.
        let ext: BTreeMap<TxId, u32> = (1..=10).map(|p| (id(p), (p % 2) as u32)).collect();
        let x = tx(100, &(1..=10).map(|p| (p, 0)).collect::<Vec<_>>());
        let s = TxStream::new(vec![x], ext).unwrap();
        let run = place_stream(&s, Algorithm::T2s, 2, None).unwrap();
        assert!(detect_aggregating(&s, &run.state, 10).unwrap().is_empty());

        let s = chain(20);
        let run = place_stream(&s, Algorithm::T2s, 2, None).unwrap();
        assert!(detect_aggregating(&s, &run.state, 2).unwrap().is_empty());
        assert!(detect_aggregating(&s, &run.state, 1).is_err());

        let empty = PlacerState::new(Algorithm::T2s, 2).unwrap();
        assert!(detect_tainted(&empty, 5.0).unwrap().is_empty());
        assert!(detect_tainted(&empty, 1.0).is_err());
    }

    #[test]
    fn decisions_csv_round_trip() {
        let ext = BTreeMap::from([(id(50), 3)]);
        let s = TxStream::new(
            vec![tx(1, &[]), tx(2, &[(1, 0), (50, 0)]), tx(3, &[(2, 0), (1, 1)])],
            ext,
        )
        .unwrap();
        let run = place_stream(&s, Algorithm::OptNorm, 4, None).unwrap();
        let mut buf = Vec::new();
        write_decisions_csv(&mut buf, Algorithm::OptNorm, &run.decisions).unwrap();
        let (alg, back) = read_decisions_csv(&buf[..], &s).unwrap();
        assert_eq!(alg, Algorithm::OptNorm);
        assert_eq!(back, run.decisions);

        let text = String::from_utf8(buf).unwrap();
        let tampered = text.replacen("true", "false", 1);
        if tampered != text {
            assert!(read_decisions_csv(tampered.as_bytes(), &s).is_err());
        }
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let s = chain(30);
        let mut a = Placer::for_stream(&s, Algorithm::V2, 4).unwrap();
        for t in &s.transactions()[..15] {
            a.place(t, None).unwrap();
        }
        let mut buf = Vec::new();
        a.state().write_checkpoint(&mut buf).unwrap();
        let restored = PlacerState::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(&restored, a.state());

        let mut b = Placer::from_state(restored);
        for t in &s.transactions()[15..] {
            assert_eq!(a.place(t, None).unwrap(), b.place(t, None).unwrap());
        }

        let bad = String::from_utf8(buf).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(PlacerState::read_checkpoint(bad.as_bytes()).is_err());
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("metis".parse::<Algorithm>().is_err());
    }
}
