//! Deterministic synthetic transaction streams.
//!
//! The generator keeps a bounded pool of unspent outputs. Background
//! transactions draw their distinct-parent count from a truncated power law
//! (optionally with a pinned one-parent share) and spend random pool outputs.
//! Two kinds of scripted bursts can be mixed in:
//!
//! * chain bursts, runs of transactions that each spend the transaction right
//!   before them;
//! * aggregation bursts, `depth` rounds in which an aggregator's `fan_in`
//!   outputs are spent by `fan_in` feeders and the next aggregator spends one
//!   output of every feeder. Each round multiplies the aggregator's
//!   propagated fitness, which is what drives fitness-score amplification.
//!
//! Transaction ids are `SHA-256("shardplace-tx" || seed || arrival index)`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexSet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::rng_for;
use crate::txgraph::{StreamError, Transaction, TxId, TxStream, UtxoRef};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("infeasible workload spec: {0}")]
    Infeasible(String),
    #[error("unknown preset '{0}' (expected bitcoin-like, chain-burst, aggregation-storm or uniform-random)")]
    UnknownPreset(String),
    #[error("workload spec: {0}")]
    Parse(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParentDistribution {
    /// Power-law exponent; 0 gives a uniform distribution.
    pub alpha: f64,
    pub max_parents: u32,
}

/// Occasional payout-style transactions with many outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fanout {
    pub probability: f64,
    pub outputs: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainBurst {
    /// Chance that a background slot starts a run.
    pub probability: f64,
    pub mean_run_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationBurst {
    /// Transactions between burst starts.
    pub period: u64,
    pub fan_in: u32,
    pub depth: u32,
}

impl AggregationBurst {
    /// Transactions emitted by one complete burst.
    pub fn burst_len(&self) -> u64 {
        1 + self.depth as u64 * (self.fan_in as u64 + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub n_tx: u64,
    pub seed: u64,
    /// Coinbase transactions at the start of every block.
    pub coinbase_rate: u32,
    /// Extra coinbases at the very start, seeding the pool with roots
    /// spread over every shard.
    pub genesis_coinbases: u32,
    pub block_size: u32,
    pub outputs_per_tx: u32,
    pub parent_dist: ParentDistribution,
    /// Pinned share of one-parent background transactions. When unset the
    /// power law covers `[1, max_parents]`; when set it covers
    /// `[2, max_parents]` for the remainder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_parent_target: Option<f64>,
    /// Chance of also spending the sibling outputs of each chosen parent.
    pub multi_edge_prob: f64,
    /// Capacity of the unspent-output pool; overflow evicts random outputs.
    pub utxo_window: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fanout: Option<Fanout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_burst: Option<ChainBurst>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation_burst: Option<AggregationBurst>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_tx: 100_000,
            seed: 0,
            coinbase_rate: 1,
            genesis_coinbases: 4096,
            block_size: 500,
            outputs_per_tx: 2,
            parent_dist: ParentDistribution { alpha: 2.2, max_parents: 50 },
            one_parent_target: Some(0.75),
            multi_edge_prob: 0.1,
            utxo_window: 16_384,
            fanout: Some(Fanout { probability: 0.1, outputs: 10 }),
            chain_burst: None,
            aggregation_burst: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    BitcoinLike,
    ChainBurst,
    AggregationStorm,
    UniformRandom,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Self::BitcoinLike, Self::ChainBurst, Self::AggregationStorm, Self::UniformRandom];

    pub fn name(self) -> &'static str {
        match self {
            Self::BitcoinLike => "bitcoin-like",
            Self::ChainBurst => "chain-burst",
            Self::AggregationStorm => "aggregation-storm",
            Self::UniformRandom => "uniform-random",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| WorkloadError::UnknownPreset(s.to_string()))
    }
}

/// Chain-start probability giving an expected chain share `share` for runs of
/// mean length `mean`.
fn chain_probability(share: f64, mean: f64) -> f64 {
    share / (mean * (1.0 - share) + share)
}

pub fn preset(p: Preset) -> WorkloadSpec {
    let base = WorkloadSpec::default();
    match p {
        Preset::BitcoinLike => base,
        Preset::ChainBurst => WorkloadSpec {
            chain_burst: Some(ChainBurst { probability: chain_probability(0.2, 20.0), mean_run_length: 20.0 }),
            ..base
        },
        Preset::AggregationStorm => WorkloadSpec {
            aggregation_burst: Some(AggregationBurst { period: 5_000, fan_in: 10, depth: 50 }),
            ..base
        },
        Preset::UniformRandom => WorkloadSpec {
            parent_dist: ParentDistribution { alpha: 0.0, max_parents: 4 },
            one_parent_target: None,
            multi_edge_prob: 0.0,
            ..base
        },
    }
}

pub fn preset_by_name(name: &str) -> Result<WorkloadSpec, WorkloadError> {
    Ok(preset(name.parse()?))
}

fn check_fraction(name: &str, v: f64) -> Result<(), WorkloadError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(WorkloadError::Infeasible(format!("{name} = {v} is not in [0, 1]")));
    }
    Ok(())
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Infeasible(m));
        if self.n_tx == 0 {
            return bad("n_tx must be at least 1".into());
        }
        if self.block_size == 0 {
            return bad("block_size must be at least 1".into());
        }
        if self.coinbase_rate == 0 || self.coinbase_rate > self.block_size {
            return bad(format!("coinbase_rate must be in [1, block_size = {}]", self.block_size));
        }
        if self.outputs_per_tx == 0 {
            return bad("outputs_per_tx must be at least 1".into());
        }
        let pd = &self.parent_dist;
        if !(pd.alpha >= 0.0 && pd.alpha.is_finite()) {
            return bad(format!("parent_dist.alpha = {} must be finite and non-negative", pd.alpha));
        }
        if pd.max_parents == 0 {
            return bad("parent_dist.max_parents must be at least 1".into());
        }
        if pd.max_parents > self.utxo_window {
            return bad(format!(
                "max_parents = {} exceeds the unspent-output window {}",
                pd.max_parents, self.utxo_window
            ));
        }
        if let Some(t) = self.one_parent_target {
            check_fraction("one_parent_target", t)?;
            if t < 1.0 && pd.max_parents < 2 {
                return bad("one_parent_target < 1 needs max_parents >= 2".into());
            }
        }
        check_fraction("multi_edge_prob", self.multi_edge_prob)?;
        if let Some(f) = &self.fanout {
            check_fraction("fanout.probability", f.probability)?;
            if f.outputs == 0 {
                return bad("fanout.outputs must be at least 1".into());
            }
        }
        if let Some(c) = &self.chain_burst {
            check_fraction("chain_burst.probability", c.probability)?;
            if !(c.mean_run_length >= 1.0 && c.mean_run_length.is_finite()) {
                return bad("chain_burst.mean_run_length must be at least 1".into());
            }
        }
        if let Some(a) = &self.aggregation_burst {
            if a.fan_in < 2 {
                return bad("aggregation_burst.fan_in must be at least 2".into());
            }
            if a.depth == 0 {
                return bad("aggregation_burst.depth must be at least 1".into());
            }
            if a.fan_in > self.utxo_window {
                return bad(format!(
                    "aggregation_burst.fan_in = {} exceeds the unspent-output window {}",
                    a.fan_in, self.utxo_window
                ));
            }
            if a.period < a.burst_len() {
                return bad(format!(
                    "aggregation_burst.period = {} is shorter than one burst ({} transactions)",
                    a.period,
                    a.burst_len()
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, WorkloadError> {
        toml::from_str(s).map_err(|e| WorkloadError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("workload spec is always representable as TOML")
    }
}

/// Inverse-CDF sampler over a truncated discrete power law.
struct ParentCountSampler {
    one_parent: Option<f64>,
    first: u32,
    cdf: Vec<f64>,
}

impl ParentCountSampler {
    fn new(spec: &WorkloadSpec) -> Self {
        let first = if spec.one_parent_target.is_some() { 2 } else { 1 };
        let max = spec.parent_dist.max_parents.max(first);
        let weights: Vec<f64> = (first..=max).map(|k| (k as f64).powf(-spec.parent_dist.alpha)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights.iter().map(|w| {
            acc += w / total;
            acc
        });
        Self { one_parent: spec.one_parent_target, first, cdf: cdf.collect() }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        if let Some(p) = self.one_parent {
            if rng.random::<f64>() < p {
                return 1;
            }
        }
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        self.first + i as u32
    }
}

/// What the next non-coinbase slot must emit.
enum Script {
    /// Spend output 0 of the previous transaction.
    ChainLink,
    /// Spend exactly these outputs.
    Spend { inputs: Vec<UtxoRef>, outs: u32, role: BurstRole },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BurstRole {
    /// Outputs stay reserved for the next round's feeders.
    Aggregator { round: u32 },
    /// Output 0 is reserved for the round's aggregator.
    Feeder { round: u32, slot: u32 },
    Final,
}

struct Generator<'a> {
    spec: &'a WorkloadSpec,
    rng: ChaCha8Rng,
    pool: IndexSet<UtxoRef>,
    txs: Vec<Transaction>,
    outs_of: HashMap<TxId, u32>,
    parents: ParentCountSampler,
    script: VecDeque<Script>,
    /// Feeder outputs collected for the current aggregation round.
    feeder_outputs: Vec<UtxoRef>,
    next_burst_at: u64,
}

fn tx_id(seed: u64, index: u64) -> TxId {
    let mut h = Sha256::new();
    h.update(b"shardplace-tx");
    h.update(seed.to_le_bytes());
    h.update(index.to_le_bytes());
    TxId::from_bytes(h.finalize()[..].try_into().unwrap())
}

impl<'a> Generator<'a> {
    fn new(spec: &'a WorkloadSpec) -> Self {
        Self {
            spec,
            rng: rng_for(spec.seed, "workload"),
            pool: IndexSet::with_capacity(spec.utxo_window as usize + 64),
            txs: Vec::with_capacity(spec.n_tx as usize),
            outs_of: HashMap::with_capacity(spec.n_tx as usize),
            parents: ParentCountSampler::new(spec),
            script: VecDeque::new(),
            feeder_outputs: Vec::new(),
            next_burst_at: spec.aggregation_burst.as_ref().map_or(u64::MAX, |a| a.period / 2),
        }
    }

    fn emit(&mut self, inputs: Vec<UtxoRef>, outs: u32, pooled: impl Fn(u32) -> bool) {
        let i = self.txs.len() as u64;
        let id = tx_id(self.spec.seed, i);
        for input in &inputs {
            self.pool.swap_remove(input);
        }
        let n_pooled = (0..outs).filter(|&o| pooled(o)).count();
        let cap = self.spec.utxo_window as usize;
        while !self.pool.is_empty() && self.pool.len() + n_pooled > cap {
            let victim = self.rng.random_range(0..self.pool.len());
            self.pool.swap_remove_index(victim);
        }
        for o in (0..outs).filter(|&o| pooled(o)) {
            self.pool.insert(UtxoRef { tx: id, index: o });
        }
        self.txs.push(Transaction {
            id,
            inputs,
            output_count: outs,
            block_height: i / self.spec.block_size as u64,
            arrival_index: i,
        });
        self.outs_of.insert(id, outs);
    }

    fn emit_coinbase(&mut self) {
        self.emit(Vec::new(), self.spec.outputs_per_tx, |_| true);
    }

    /// Picks outputs of `k` distinct parents, or `None` if the pool cannot
    /// supply them.
    fn pick_parents(&mut self, k: u32) -> Option<Vec<UtxoRef>> {
        if (self.pool.len() as u32) < k {
            return None;
        }
        let mut chosen: Vec<UtxoRef> = Vec::with_capacity(k as usize);
        let mut attempts = 0;
        while (chosen.len() as u32) < k {
            attempts += 1;
            if attempts > 8 * k + 16 {
                return None;
            }
            let r = *self.pool.get_index(self.rng.random_range(0..self.pool.len())).unwrap();
            if chosen.iter().any(|c| c.tx == r.tx) {
                continue;
            }
            chosen.push(r);
        }
        if self.spec.multi_edge_prob > 0.0 {
            let mut extra = Vec::new();
            for c in &chosen {
                if self.rng.random::<f64>() >= self.spec.multi_edge_prob {
                    continue;
                }
                let outs = self.outs_of[&c.tx];
                for j in (0..outs).filter(|&j| j != c.index) {
                    let sib = UtxoRef { tx: c.tx, index: j };
                    if self.pool.contains(&sib) {
                        extra.push(sib);
                    }
                }
            }
            chosen.extend(extra);
        }
        Some(chosen)
    }

    fn emit_background(&mut self) {
        for _ in 0..64 {
            let k = self.parents.sample(&mut self.rng);
            if let Some(inputs) = self.pick_parents(k) {
                let outs = match &self.spec.fanout {
                    Some(f) if self.rng.random::<f64>() < f.probability => f.outputs,
                    _ => self.spec.outputs_per_tx,
                };
                self.emit(inputs, outs, |_| true);
                return;
            }
        }
        // Pool exhausted: mint instead.
        self.emit_coinbase();
    }

    fn start_aggregation(&mut self, a: &AggregationBurst) -> bool {
        if self.pool.is_empty() {
            return false;
        }
        let root = *self.pool.get_index(self.rng.random_range(0..self.pool.len())).unwrap();
        self.script.push_back(Script::Spend {
            inputs: vec![root],
            outs: a.fan_in,
            role: BurstRole::Aggregator { round: 0 },
        });
        true
    }

    /// Queues the feeders of `round` after aggregator `agg` was emitted.
    fn queue_feeders(&mut self, agg: TxId, round: u32, fan_in: u32) {
        for slot in 0..fan_in {
            self.script.push_back(Script::Spend {
                inputs: vec![UtxoRef { tx: agg, index: slot }],
                outs: self.spec.outputs_per_tx,
                role: BurstRole::Feeder { round, slot },
            });
        }
    }

    fn emit_scripted(&mut self, step: Script) {
        match step {
            Script::ChainLink => {
                let prev = self.txs.last().expect("chain link follows a transaction").id;
                self.emit(vec![UtxoRef { tx: prev, index: 0 }], self.spec.outputs_per_tx, |_| true);
            }
            Script::Spend { inputs, outs, role } => {
                let a = self.spec.aggregation_burst.clone().expect("aggregation script without burst config");
                match role {
                    BurstRole::Aggregator { round } => {
                        self.emit(inputs, outs, |_| false);
                        let id = self.txs.last().unwrap().id;
                        self.queue_feeders(id, round + 1, a.fan_in);
                    }
                    BurstRole::Feeder { round, slot } => {
                        self.emit(inputs, outs, |o| o != 0);
                        let id = self.txs.last().unwrap().id;
                        self.feeder_outputs.push(UtxoRef { tx: id, index: 0 });
                        if slot + 1 == a.fan_in {
                            let inputs = std::mem::take(&mut self.feeder_outputs);
                            let role = if round == a.depth {
                                BurstRole::Final
                            } else {
                                BurstRole::Aggregator { round }
                            };
                            self.script.push_back(Script::Spend { inputs, outs: a.fan_in, role });
                        }
                    }
                    BurstRole::Final => self.emit(inputs, outs, |_| true),
                }
            }
        }
    }

    fn run(mut self) -> Vec<Transaction> {
        let spec = self.spec;
        let chain_len = spec
            .chain_burst
            .as_ref()
            .map(|c| Geometric::new(1.0 / c.mean_run_length).expect("validated run length"));
        for i in 0..spec.n_tx {
            if i >= spec.genesis_coinbases as u64 && i % spec.block_size as u64 >= spec.coinbase_rate as u64 {
                if let Some(step) = self.script.pop_front() {
                    self.emit_scripted(step);
                    continue;
                }
                if i >= self.next_burst_at {
                    let a = spec.aggregation_burst.clone().unwrap();
                    self.next_burst_at = i + a.period;
                    if self.start_aggregation(&a) {
                        let step = self.script.pop_front().unwrap();
                        self.emit_scripted(step);
                        continue;
                    }
                }
                if let (Some(c), Some(len)) = (&spec.chain_burst, &chain_len) {
                    if !self.txs.is_empty() && self.rng.random::<f64>() < c.probability {
                        let run = 1 + len.sample(&mut self.rng);
                        for _ in 0..run {
                            self.script.push_back(Script::ChainLink);
                        }
                        let step = self.script.pop_front().unwrap();
                        self.emit_scripted(step);
                        continue;
                    }
                }
                self.emit_background();
            } else {
                self.emit_coinbase();
            }
        }
        self.txs
    }
}

/// Generates a validated stream. Output depends only on `spec`.
pub fn generate(spec: &WorkloadSpec) -> Result<TxStream, WorkloadError> {
    spec.validate()?;
    let txs = Generator::new(spec).run();
    Ok(TxStream::new(txs, BTreeMap::new())?)
}
