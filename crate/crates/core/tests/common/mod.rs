//! Stream builders and a from-scratch fitness oracle, shared by the unit
//! tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use shardplace_core::placement::{FitnessArray, PlacementDecision, ShardId};
use shardplace_core::rng::rng_for;
use shardplace_core::{Transaction, TxId, TxStream, UtxoRef};

/// An id whose leading byte is `prefix`, so hash placement is predictable.
pub fn id(prefix: u8, n: u64) -> TxId {
    let mut b = [0u8; 32];
    b[0] = prefix;
    b[24..].copy_from_slice(&n.to_be_bytes());
    TxId::from_bytes(b)
}

pub fn tx(id: TxId, inputs: &[(TxId, u32)], outputs: u32) -> Transaction {
    Transaction {
        id,
        inputs: inputs.iter().map(|&(tx, index)| UtxoRef { tx, index }).collect(),
        output_count: outputs,
        block_height: 0,
        arrival_index: 0,
    }
}

fn random_id(rng: &mut impl Rng) -> TxId {
    TxId::from_bytes(rng.random())
}

/// A small random DAG with multi-edges: coinbases now and then, otherwise
/// 1..=`max_inputs` inputs drawn from the unspent pool.
pub fn random_stream(seed: u64, n: usize, max_inputs: usize) -> TxStream {
    let mut rng = rng_for(seed, "test-stream");
    let mut pool: Vec<UtxoRef> = Vec::new();
    let mut txs = Vec::with_capacity(n);
    for _ in 0..n {
        let outputs = rng.random_range(1..=4);
        let id = random_id(&mut rng);
        let mut inputs = Vec::new();
        if !pool.is_empty() && !rng.random_bool(0.1) {
            let k = rng.random_range(1..=max_inputs).min(pool.len());
            for _ in 0..k {
                let at = rng.random_range(0..pool.len());
                inputs.push(pool.swap_remove(at));
            }
        }
        pool.extend((0..outputs).map(|index| UtxoRef { tx: id, index }));
        txs.push(Transaction { id, inputs, output_count: outputs, block_height: 0, arrival_index: 0 });
    }
    TxStream::new(txs, BTreeMap::new()).expect("generated stream is valid")
}

/// Every non-coinbase transaction spends exactly one output.
pub fn one_parent_stream(seed: u64, n: usize) -> TxStream {
    let mut rng = rng_for(seed, "one-parent-stream");
    let mut pool: Vec<UtxoRef> = Vec::new();
    let mut txs = Vec::with_capacity(n);
    for i in 0..n {
        let id = random_id(&mut rng);
        let inputs = if i == 0 { Vec::new() } else { vec![pool.swap_remove(rng.random_range(0..pool.len()))] };
        pool.extend((0..2).map(|index| UtxoRef { tx: id, index }));
        txs.push(Transaction { id, inputs, output_count: 2, block_height: 0, arrival_index: 0 });
    }
    TxStream::new(txs, BTreeMap::new()).expect("generated stream is valid")
}

/// Fitness arrays evaluated recursively over the whole stream. Child counts
/// are recounted from the stream for every edge instead of being carried
/// along. Roots take a one-hot array at their placed shard.
pub fn oracle_fitness(
    stream: &TxStream,
    decisions: &[PlacementDecision],
    n_shards: usize,
    multiset: bool,
) -> HashMap<TxId, FitnessArray> {
    let shard: HashMap<TxId, ShardId> = decisions.iter().map(|d| (d.tx, d.output_shard)).collect();
    let mut memo = HashMap::new();
    for t in stream.transactions() {
        eval(stream, &shard, n_shards, multiset, &t.id, &mut memo);
    }
    memo
}

/// Child edges of `parent` among the transactions up to and including
/// position `upto`.
fn children_upto(stream: &TxStream, parent: &TxId, upto: usize, multiset: bool) -> u64 {
    stream.transactions()[..=upto]
        .iter()
        .map(|t| {
            let k = t.inputs.iter().filter(|i| i.tx == *parent).count() as u64;
            if multiset { k } else { k.min(1) }
        })
        .sum()
}

fn eval(
    stream: &TxStream,
    shard: &HashMap<TxId, ShardId>,
    n: usize,
    multiset: bool,
    id: &TxId,
    memo: &mut HashMap<TxId, FitnessArray>,
) -> Vec<f64> {
    if let Some(f) = memo.get(id) {
        return f.as_slice().to_vec();
    }
    let pos = stream.position(id);
    let t = pos.map(|p| &stream.transactions()[p]);
    let out = match t {
        Some(t) if !t.is_coinbase() => {
            let mut acc = vec![0.0; n];
            for (parent, edges) in t.parent_multiset() {
                let pf = eval(stream, shard, n, multiset, &parent, memo);
                let w = if multiset { edges as f64 } else { 1.0 };
                let nc = children_upto(stream, &parent, pos.unwrap(), multiset) as f64;
                for (a, p) in acc.iter_mut().zip(&pf) {
                    *a += w / nc * p;
                }
            }
            acc
        }
        _ => {
            let s = match t {
                Some(_) => shard[id],
                None => ShardId(stream.external_parents()[id]),
            };
            FitnessArray::one_hot(n, s).as_slice().to_vec()
        }
    };
    memo.insert(*id, FitnessArray::new(out.clone()));
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
