//! Transaction-stream data model, JSON-lines ingestion and dependency statistics.
//!
//! A [`TxStream`] is an arrival-ordered list of UTXO transactions plus the set of
//! parents that were placed before the stream started (the external parents).
//! Construction always validates the stream: ids are unique, every input refers
//! to an earlier in-stream transaction or a declared external parent, and no
//! output is spent twice.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 256-bit transaction identifier, hex-encoded on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId([u8; 32]);

impl TxId {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({}..)", &self.to_hex()[..12])
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxIdParseError {
    #[error("expected 64 hex characters, got {0}")]
    Length(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

impl FromStr for TxId {
    type Err = TxIdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 {
            return Err(TxIdParseError::Length(s.len()));
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s, &mut bytes).map_err(|e| TxIdParseError::Hex(e.to_string()))?;
        Ok(Self(bytes))
    }
}

impl Serialize for TxId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reference to one output of a transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtxoRef {
    pub tx: TxId,
    #[serde(rename = "idx")]
    pub index: u32,
}

impl fmt::Display for UtxoRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tx, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxId,
    /// Empty for coinbase transactions.
    pub inputs: Vec<UtxoRef>,
    pub output_count: u32,
    pub block_height: u64,
    /// Position in the global stream order.
    pub arrival_index: u64,
}

/// Parent transactions with edge multiplicity, in first-reference order.
pub type ParentMultiset = Vec<(TxId, u32)>;

impl Transaction {
    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Each parent with the number of inputs that reference it.
    pub fn parent_multiset(&self) -> ParentMultiset {
        let mut out: ParentMultiset = Vec::with_capacity(self.inputs.len());
        for input in &self.inputs {
            match out.iter_mut().find(|(id, _)| *id == input.tx) {
                Some((_, k)) => *k += 1,
                None => out.push((input.tx, 1)),
            }
        }
        out
    }

    /// Distinct parents, in first-reference order.
    pub fn parent_set(&self) -> Vec<TxId> {
        self.parent_multiset().into_iter().map(|(id, _)| id).collect()
    }

    pub fn spends_from(&self, parent: &TxId) -> bool {
        self.inputs.iter().any(|i| i.tx == *parent)
    }
}

/// On-the-wire record. Field order is the canonical serialization order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TxRecord {
    id: TxId,
    inputs: Vec<UtxoRef>,
    outs: u32,
    block: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalRecord {
    id: TxId,
    shard: u32,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: transaction must have at least one output")]
    NoOutputs { line: usize },
    #[error("line {line}: duplicate transaction id {id}")]
    DuplicateId { line: usize, id: TxId },
    #[error("line {line}: transaction {child} spends {parent}, which appears later in the stream")]
    OutOfOrder { line: usize, child: TxId, parent: TxId },
    #[error("line {line}: transaction {child} double-spends {utxo}")]
    DoubleSpend { line: usize, child: TxId, utxo: UtxoRef },
    #[error("line {line}: transaction {child} spends output {index} of {parent}, which has {outs} outputs")]
    OutputOutOfRange { line: usize, child: TxId, parent: TxId, index: u32, outs: u32 },
    #[error("line {line}: transaction {child} references undeclared parent {parent}")]
    UnknownParent { line: usize, child: TxId, parent: TxId },
    #[error("external parents line {line}: {message}")]
    MalformedExternal { line: usize, message: String },
    #[error("external parent {0} is also present in the stream")]
    ExternalInStream(TxId),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

/// Supported on-disk stream encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StreamFormat {
    #[default]
    JsonLines,
}

impl FromStr for StreamFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" | "json-lines" => Ok(Self::JsonLines),
            other => Err(format!("unknown stream format '{other}' (expected jsonl)")),
        }
    }
}

/// Validated, immutable transaction stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TxStream {
    transactions: Vec<Transaction>,
    external_parents: BTreeMap<TxId, u32>,
    positions: HashMap<TxId, usize>,
}

impl TxStream {
    /// Validates and wraps a transaction list. `arrival_index` values are
    /// overwritten with each transaction's position.
    pub fn new(
        mut transactions: Vec<Transaction>,
        external_parents: BTreeMap<TxId, u32>,
    ) -> Result<Self, StreamError> {
        let mut positions = HashMap::with_capacity(transactions.len());
        for (i, tx) in transactions.iter_mut().enumerate() {
            tx.arrival_index = i as u64;
            if tx.output_count == 0 {
                return Err(StreamError::NoOutputs { line: i + 1 });
            }
            if positions.insert(tx.id, i).is_some() {
                return Err(StreamError::DuplicateId { line: i + 1, id: tx.id });
            }
        }
        if let Some(id) = external_parents.keys().find(|id| positions.contains_key(id)) {
            return Err(StreamError::ExternalInStream(*id));
        }

        let mut spent: HashSet<UtxoRef> = HashSet::new();
        for (i, tx) in transactions.iter().enumerate() {
            let line = i + 1;
            for input in &tx.inputs {
                match positions.get(&input.tx) {
                    Some(&j) if j >= i => {
                        return Err(StreamError::OutOfOrder { line, child: tx.id, parent: input.tx });
                    }
                    Some(&j) => {
                        let outs = transactions[j].output_count;
                        if input.index >= outs {
                            return Err(StreamError::OutputOutOfRange {
                                line,
                                child: tx.id,
                                parent: input.tx,
                                index: input.index,
                                outs,
                            });
                        }
                    }
                    None if external_parents.contains_key(&input.tx) => {}
                    None => {
                        return Err(StreamError::UnknownParent { line, child: tx.id, parent: input.tx });
                    }
                }
                if !spent.insert(*input) {
                    return Err(StreamError::DoubleSpend { line, child: tx.id, utxo: *input });
                }
            }
        }

        Ok(Self { transactions, external_parents, positions })
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    /// Parents placed before the stream start, with their assigned shards.
    pub fn external_parents(&self) -> &BTreeMap<TxId, u32> {
        &self.external_parents
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn get(&self, id: &TxId) -> Option<&Transaction> {
        self.positions.get(id).map(|&i| &self.transactions[i])
    }

    pub fn position(&self, id: &TxId) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn non_coinbase_count(&self) -> usize {
        self.transactions.iter().filter(|t| !t.is_coinbase()).count()
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, StreamError> {
        Self::read_jsonl_with_external(reader, BTreeMap::new())
    }

    pub fn read_jsonl_with_external<R: BufRead>(
        reader: R,
        external_parents: BTreeMap<TxId, u32>,
    ) -> Result<Self, StreamError> {
        let mut transactions = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| StreamError::Malformed {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TxRecord = serde_json::from_str(&line).map_err(|e| StreamError::Malformed {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let arrival_index = transactions.len() as u64;
            transactions.push(Transaction {
                id: record.id,
                inputs: record.inputs,
                output_count: record.outs,
                block_height: record.block,
                arrival_index,
            });
        }
        Self::new(transactions, external_parents)
    }

    /// Writes the canonical JSON-lines form.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for tx in &self.transactions {
            let record = TxRecord {
                id: tx.id,
                inputs: tx.inputs.clone(),
                outs: tx.output_count,
                block: tx.block_height,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn write_external_jsonl<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (&id, &shard) in &self.external_parents {
            serde_json::to_writer(&mut writer, &ExternalRecord { id, shard })?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), StreamError> {
        let io_err = |source| StreamError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(BufWriter::new(file)).map_err(io_err)
    }
}

/// Parses an external-parents sidecar (`{"id": .., "shard": ..}` per line).
pub fn read_external_parents<R: BufRead>(reader: R) -> Result<BTreeMap<TxId, u32>, StreamError> {
    let mut out = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let malformed = |message: String| StreamError::MalformedExternal { line: lineno + 1, message };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExternalRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if out.insert(record.id, record.shard).is_some() {
            return Err(malformed(format!("duplicate external parent {}", record.id)));
        }
    }
    Ok(out)
}

/// Loads and validates a stream file, with an optional external-parents sidecar.
pub fn load_stream(
    path: &Path,
    format: StreamFormat,
    external_parents: Option<&Path>,
) -> Result<TxStream, StreamError> {
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|source| StreamError::Io { path: p.to_path_buf(), source })
    };
    let external = match external_parents {
        Some(p) => read_external_parents(open(p)?)?,
        None => BTreeMap::new(),
    };
    match format {
        StreamFormat::JsonLines => TxStream::read_jsonl_with_external(open(path)?, external),
    }
}

/// Transactions per distinct-parent count. Coinbase transactions are skipped.
pub fn parent_count_histogram(stream: &TxStream) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for tx in stream.transactions().iter().filter(|t| !t.is_coinbase()) {
        *hist.entry(tx.parent_set().len()).or_insert(0) += 1;
    }
    hist
}

/// Least-squares slope of log(count) against log(parent count).
pub fn power_law_slope(hist: &BTreeMap<usize, u64>) -> Option<f64> {
    let points: Vec<(f64, f64)> = hist
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&k, &c)| ((k as f64).ln(), (c as f64).ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioPoint {
    pub bucket: usize,
    /// `None` when the bucket has no non-coinbase transactions.
    pub fraction: Option<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("bucket window must be at least 1")]
    ZeroWindow,
    #[error("block-height ranges {0:?} and {1:?} overlap")]
    OverlappingRanges(Range<u64>, Range<u64>),
}

fn one_parent_fraction<'a>(txs: impl Iterator<Item = &'a Transaction>) -> Option<f64> {
    let (mut total, mut one) = (0u64, 0u64);
    for tx in txs.filter(|t| !t.is_coinbase()) {
        total += 1;
        if tx.parent_set().len() == 1 {
            one += 1;
        }
    }
    (total > 0).then(|| one as f64 / total as f64)
}

/// Fraction of non-coinbase transactions with exactly one distinct parent,
/// per bucket of `window` consecutive arrivals.
pub fn one_parent_ratio(stream: &TxStream, window: usize) -> Result<Vec<RatioPoint>, AnalysisError> {
    if window == 0 {
        return Err(AnalysisError::ZeroWindow);
    }
    Ok(stream
        .transactions()
        .chunks(window)
        .enumerate()
        .map(|(bucket, chunk)| RatioPoint { bucket, fraction: one_parent_fraction(chunk.iter()) })
        .collect())
}

pub fn overall_one_parent_ratio(stream: &TxStream) -> Option<f64> {
    one_parent_fraction(stream.transactions().iter())
}

/// For each block-height range, the fraction of non-coinbase transactions
/// that spend an output of the transaction immediately before them in arrival
/// order. `None` for ranges without non-coinbase transactions.
pub fn immediate_predecessor_ratio(
    stream: &TxStream,
    ranges: &[Range<u64>],
) -> Result<Vec<Option<f64>>, AnalysisError> {
    let mut sorted: Vec<&Range<u64>> = ranges.iter().collect();
    sorted.sort_by_key(|r| r.start);
    for pair in sorted.windows(2) {
        if pair[0].end > pair[1].start {
            return Err(AnalysisError::OverlappingRanges(pair[0].clone(), pair[1].clone()));
        }
    }

    let mut counts = vec![(0u64, 0u64); ranges.len()];
    let txs = stream.transactions();
    for (i, tx) in txs.iter().enumerate() {
        if tx.is_coinbase() {
            continue;
        }
        let Some(r) = ranges.iter().position(|r| r.contains(&tx.block_height)) else {
            continue;
        };
        counts[r].0 += 1;
        if i > 0 && tx.spends_from(&txs[i - 1].id) {
            counts[r].1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(total, hits)| (total > 0).then(|| hits as f64 / total as f64))
        .collect())
}

pub fn write_histogram_csv<W: Write>(mut w: W, hist: &BTreeMap<usize, u64>) -> io::Result<()> {
    writeln!(w, "parent_count,transactions")?;
    for (k, c) in hist {
        writeln!(w, "{k},{c}")?;
    }
    w.flush()
}

/// Absent points are omitted.
pub fn write_ratio_series_csv<W: Write>(mut w: W, series: &[RatioPoint]) -> io::Result<()> {
    writeln!(w, "bucket,fraction")?;
    for p in series {
        if let Some(f) = p.fraction {
            writeln!(w, "{},{}", p.bucket, f)?;
        }
    }
    w.flush()
}


#[cfg(test)]
mod tests {
    use super::test_support::{id, tx};
    use super::*;

    fn stream(txs: Vec<Transaction>) -> TxStream {
        TxStream::new(txs, BTreeMap::new()).unwrap()
    }

    #[test]
    fn txid_hex_round_trip() {
        let s = "00ff".repeat(16);
        let id: TxId = s.parse().unwrap();
        assert_eq!(id.to_hex(), s);
        assert_eq!("abc".parse::<TxId>(), Err(TxIdParseError::Length(3)));
        assert!("zz".repeat(32).parse::<TxId>().is_err());
    }

    #[test]
    fn single_coinbase_loads() {
        let line = format!("{{\"id\":\"{}\",\"inputs\":[],\"outs\":1,\"block\":0}}\n", "ab".repeat(32));
        let s = TxStream::read_jsonl(line.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.external_parents().is_empty());
        assert!(s.transactions()[0].is_coinbase());
    }

    #[test]
    fn child_before_parent_is_rejected() {
        let a = "aa".repeat(32);
        let b = "bb".repeat(32);
        let text = format!(
            "{{\"id\":\"{b}\",\"inputs\":[{{\"tx\":\"{a}\",\"idx\":0}}],\"outs\":1,\"block\":0}}\n\
             {{\"id\":\"{a}\",\"inputs\":[],\"outs\":1,\"block\":0}}\n"
        );
        let err = TxStream::read_jsonl(text.as_bytes()).unwrap_err();
        match err {
            StreamError::OutOfOrder { line, child, .. } => {
                assert_eq!(line, 1);
                assert_eq!(child.to_hex(), b);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn double_spend_is_rejected() {
        let err = TxStream::new(vec![tx(1, &[]), tx(2, &[(1, 0)]), tx(3, &[(1, 0)])], BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, StreamError::DoubleSpend { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_and_bad_output_index() {
        let err = TxStream::new(vec![tx(1, &[]), tx(1, &[])], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, StreamError::DuplicateId { line: 2, .. }));
        let err = TxStream::new(vec![tx(1, &[]), tx(2, &[(1, 5)])], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, StreamError::OutputOutOfRange { index: 5, outs: 2, .. }));
    }

    #[test]
    fn undeclared_parent_needs_sidecar() {
        let txs = vec![tx(2, &[(9, 0)])];
        let err = TxStream::new(txs.clone(), BTreeMap::new()).unwrap_err();
        assert!(matches!(err, StreamError::UnknownParent { .. }));
        let s = TxStream::new(txs, BTreeMap::from([(id(9), 3)])).unwrap();
        assert_eq!(s.external_parents()[&id(9)], 3);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let ok = format!("{{\"id\":\"{}\",\"inputs\":[],\"outs\":1,\"block\":0}}\n", "ab".repeat(32));
        let text = format!("{ok}{{\"id\": 5}}\n");
        let err = TxStream::read_jsonl(text.as_bytes()).unwrap_err();
        assert!(matches!(err, StreamError::Malformed { line: 2, .. }));
        let extra = format!("{{\"id\":\"{}\",\"inputs\":[],\"outs\":1,\"block\":0,\"x\":1}}", "ab".repeat(32));
        assert!(TxStream::read_jsonl(extra.as_bytes()).is_err());
    }

    #[test]
    fn parent_multiset_counts_edges() {
        let t = tx(3, &[(1, 0), (1, 1), (2, 0)]);
        assert_eq!(t.parent_multiset(), vec![(id(1), 2), (id(2), 1)]);
        assert!(tx(1, &[]).parent_multiset().is_empty());
        assert_eq!(tx(2, &[(1, 0)]).parent_multiset(), vec![(id(1), 1)]);
    }

    #[test]
    fn histogram_excludes_coinbase_and_uses_support_set() {
        let s = stream(vec![tx(1, &[]), tx(2, &[(1, 0)]), tx(3, &[(1, 1)]), tx(4, &[(2, 0)])]);
        assert_eq!(parent_count_histogram(&s), BTreeMap::from([(1, 3)]));

        let s = stream(vec![tx(1, &[]), tx(2, &[(1, 0), (1, 1)])]);
        assert_eq!(parent_count_histogram(&s), BTreeMap::from([(1, 1)]));
    }

    #[test]
    fn one_parent_ratio_buckets() {
        // bucket 0: coinbase + 3 one-parent; bucket 1: two-parent + coinbase.
        let s = stream(vec![
            tx(1, &[]),
            tx(2, &[(1, 0)]),
            tx(3, &[(1, 1)]),
            tx(4, &[(2, 0)]),
            tx(5, &[(3, 0), (4, 0)]),
            tx(6, &[]),
        ]);
        let series = one_parent_ratio(&s, 4).unwrap();
        assert_eq!(series[0].fraction, Some(1.0));
        assert_eq!(series[1].fraction, Some(0.0));

        let s = stream(vec![tx(1, &[]), tx(2, &[(1, 0)]), tx(3, &[(1, 1)]), tx(4, &[(2, 0), (3, 0)]), tx(5, &[(2, 1)])]);
        assert_eq!(one_parent_ratio(&s, 5).unwrap()[0].fraction, Some(0.75));

        let s = stream(vec![tx(1, &[]), tx(2, &[])]);
        assert_eq!(one_parent_ratio(&s, 2).unwrap()[0].fraction, None);
        assert_eq!(one_parent_ratio(&s, 0), Err(AnalysisError::ZeroWindow));
    }

    #[test]
    fn immediate_predecessor_chain() {
        let s = stream(vec![tx(1, &[]), tx(2, &[(1, 0)]), tx(3, &[(2, 0)])]);
        assert_eq!(immediate_predecessor_ratio(&s, &[0..1]).unwrap(), vec![Some(1.0)]);

        let s = stream(vec![tx(1, &[]), tx(2, &[]), tx(3, &[(1, 0)]), tx(4, &[(2, 0)])]);
        assert_eq!(immediate_predecessor_ratio(&s, &[0..10]).unwrap(), vec![Some(0.0)]);

        assert!(matches!(
            immediate_predecessor_ratio(&s, &[0..10, 5..20]),
            Err(AnalysisError::OverlappingRanges(..))
        ));
    }

    #[test]
    fn power_law_slope_of_exact_law() {
        let hist: BTreeMap<usize, u64> =
            (1..=20usize).map(|k| (k, (1e6 * (k as f64).powf(-2.0)).round() as u64)).collect();
        let slope = power_law_slope(&hist).unwrap();
        assert!((slope + 2.0).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn csv_writers() {
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &BTreeMap::from([(1, 3), (2, 1)])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "parent_count,transactions\n1,3\n2,1\n");
        let mut buf = Vec::new();
        let pts = [RatioPoint { bucket: 0, fraction: Some(0.5) }, RatioPoint { bucket: 1, fraction: None }];
        write_ratio_series_csv(&mut buf, &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bucket,fraction\n0,0.5\n");
    }
}
