//! Partition quality over decision sequences, and report export.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::placement::{Algorithm, PlacementDecision};
use crate::simulator::{CostModel, DriveConfig, SimError, SimReport};
use crate::txgraph::TxStream;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no non-coinbase transactions; the cross-shard ratio is undefined")]
    NoNonCoinbase,
    #[error("bucket window must be at least 1")]
    ZeroWindow,
    #[error("decision for shard {shard} but only {n_shards} shards")]
    ShardOutOfRange { shard: u32, n_shards: u32 },
    #[error("decisions do not match the stream at position {0}")]
    StreamMismatch(usize),
    #[error("{0} exists and is not empty; pass force to overwrite")]
    OutputExists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionSummary {
    pub partition_sizes: Vec<u64>,
    pub cross_shard_count: u64,
    pub total_non_coinbase: u64,
}

impl PartitionSummary {
    pub fn from_decisions(decisions: &[PlacementDecision], n_shards: u32) -> Result<Self, MetricsError> {
        let mut sizes = vec![0u64; n_shards as usize];
        let (mut cross, mut non_coinbase) = (0, 0);
        for d in decisions {
            let slot = sizes
                .get_mut(d.output_shard.index())
                .ok_or(MetricsError::ShardOutOfRange { shard: d.output_shard.0, n_shards })?;
            *slot += 1;
            if !d.is_coinbase() {
                non_coinbase += 1;
                cross += u64::from(d.cross_shard);
            }
        }
        Ok(Self { partition_sizes: sizes, cross_shard_count: cross, total_non_coinbase: non_coinbase })
    }

    pub fn cross_shard_ratio(&self) -> Result<f64, MetricsError> {
        if self.total_non_coinbase == 0 {
            return Err(MetricsError::NoNonCoinbase);
        }
        Ok(self.cross_shard_count as f64 / self.total_non_coinbase as f64)
    }

    pub fn load_imbalance(&self) -> u64 {
        load_imbalance(&self.partition_sizes)
    }
}

/// Cross-shard transactions over non-coinbase transactions.
pub fn cross_shard_ratio(decisions: &[PlacementDecision]) -> Result<f64, MetricsError> {
    let non_coinbase = decisions.iter().filter(|d| !d.is_coinbase()).count();
    if non_coinbase == 0 {
        return Err(MetricsError::NoNonCoinbase);
    }
    let cross = decisions.iter().filter(|d| d.cross_shard).count();
    Ok(cross as f64 / non_coinbase as f64)
}

/// Largest partition minus smallest.
pub fn load_imbalance(partition_sizes: &[u64]) -> u64 {
    let max = partition_sizes.iter().max().copied().unwrap_or(0);
    let min = partition_sizes.iter().min().copied().unwrap_or(0);
    max - min
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoadBucket {
    pub bucket: u64,
    pub placed: u64,
    /// Share of the bucket's placements per shard.
    pub shares: Vec<f64>,
}

impl LoadBucket {
    pub fn max_share(&self) -> f64 {
        self.shares.iter().copied().fold(0.0, f64::max)
    }
}

fn shares_for<'a>(
    n_shards: u32,
    groups: impl Iterator<Item = (u64, Vec<&'a PlacementDecision>)>,
) -> Result<Vec<LoadBucket>, MetricsError> {
    let mut out = Vec::new();
    for (bucket, group) in groups {
        let mut counts = vec![0u64; n_shards as usize];
        for d in &group {
            let slot = counts
                .get_mut(d.output_shard.index())
                .ok_or(MetricsError::ShardOutOfRange { shard: d.output_shard.0, n_shards })?;
            *slot += 1;
        }
        let total = group.len() as u64;
        if total == 0 {
            continue;
        }
        let shares = counts.iter().map(|&c| c as f64 / total as f64).collect();
        out.push(LoadBucket { bucket, placed: total, shares });
    }
    Ok(out)
}

/// Per-shard placement shares in consecutive buckets of `window` decisions.
pub fn dynamic_loads(
    decisions: &[PlacementDecision],
    n_shards: u32,
    window: usize,
) -> Result<Vec<LoadBucket>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let groups = decisions.chunks(window).enumerate().map(|(b, c)| (b as u64, c.iter().collect()));
    shares_for(n_shards, groups)
}

/// Same as [`dynamic_loads`], bucketed by `window` blocks of the stream.
pub fn dynamic_loads_by_block(
    decisions: &[PlacementDecision],
    stream: &TxStream,
    n_shards: u32,
    window: u64,
) -> Result<Vec<LoadBucket>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let txs = stream.transactions();
    if txs.len() != decisions.len() {
        return Err(MetricsError::StreamMismatch(txs.len().min(decisions.len())));
    }
    let mut groups: Vec<(u64, Vec<&PlacementDecision>)> = Vec::new();
    for (i, (tx, d)) in txs.iter().zip(decisions).enumerate() {
        if tx.id != d.tx {
            return Err(MetricsError::StreamMismatch(i));
        }
        let b = tx.block_height / window;
        match groups.last_mut() {
            Some((last, g)) if *last == b => g.push(d),
            _ => groups.push((b, vec![d])),
        }
    }
    shares_for(n_shards, groups.into_iter())
}

pub const DYNAMIC_LOADS_HEADER: &str = "bucket,shard,share";
pub const GRID_HEADER: &str = "algorithm,n_shards,cross_ratio,imbalance";
pub const FITNESS_SERIES_HEADER: &str = "bucket,max_fitness";

pub fn write_dynamic_loads_csv<W: Write>(mut w: W, loads: &[LoadBucket]) -> io::Result<()> {
    writeln!(w, "{DYNAMIC_LOADS_HEADER}")?;
    for b in loads {
        for (s, share) in b.shares.iter().enumerate() {
            writeln!(w, "{},{s},{share}", b.bucket)?;
        }
    }
    w.flush()
}

/// One cell of an algorithm × shard-count sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    pub algorithm: String,
    pub n_shards: u32,
    pub cross_ratio: f64,
    pub imbalance: u64,
}

impl GridRow {
    pub fn new(algorithm: Algorithm, n_shards: u32, decisions: &[PlacementDecision]) -> Result<Self, MetricsError> {
        let summary = PartitionSummary::from_decisions(decisions, n_shards)?;
        Ok(Self {
            algorithm: algorithm.to_string(),
            n_shards,
            cross_ratio: summary.cross_shard_ratio()?,
            imbalance: summary.load_imbalance(),
        })
    }
}

pub fn write_grid_csv<W: Write>(mut w: W, rows: &[GridRow]) -> io::Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.algorithm, r.n_shards, r.cross_ratio, r.imbalance)?;
    }
    w.flush()
}

pub fn write_fitness_series_csv<W: Write>(mut w: W, series: &[(usize, f64)]) -> io::Result<()> {
    writeln!(w, "{FITNESS_SERIES_HEADER}")?;
    for (b, m) in series {
        writeln!(w, "{b},{m}")?;
    }
    w.flush()
}

/// A finished simulation with the configuration that produced it.
#[derive(Clone, Debug)]
pub struct SimArtifact {
    pub label: String,
    pub report: SimReport,
    pub cost: CostModel,
    pub drive: DriveConfig,
}

/// Everything a report directory can hold. Absent parts are skipped.
#[derive(Clone, Debug, Default)]
pub struct ReportBundle {
    pub grid: Vec<GridRow>,
    pub dynamic_loads: Option<Vec<LoadBucket>>,
    pub fitness_series: Option<Vec<(usize, f64)>>,
    pub sim: Option<SimArtifact>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndexEntry {
    pub kind: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReportIndex {
    pub artifacts: Vec<IndexEntry>,
}

pub const INDEX_FILE: &str = "index.json";

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), MetricsError> {
    let io_err = |source| MetricsError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err)
}

/// Writes every present artifact into `dir` plus an `index.json` listing
/// them. An existing non-empty `dir` is refused unless `force` is set.
pub fn export_report(bundle: &ReportBundle, dir: &Path, force: bool) -> Result<ReportIndex, MetricsError> {
    let io_err = |source| MetricsError::Io { path: dir.to_path_buf(), source };
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(io_err)?.next().is_some();
        if non_empty && !force {
            return Err(MetricsError::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err)?;

    let mut artifacts = Vec::new();
    let mut add = |kind: &str, file: &str| artifacts.push(IndexEntry { kind: kind.into(), file: file.into() });
    if !bundle.grid.is_empty() {
        write_file(&dir.join("cross_ratio.csv"), |w| write_grid_csv(w, &bundle.grid))?;
        add("cross_ratio", "cross_ratio.csv");
    }
    if let Some(loads) = &bundle.dynamic_loads {
        write_file(&dir.join("dynamic_loads.csv"), |w| write_dynamic_loads_csv(w, loads))?;
        add("dynamic_loads", "dynamic_loads.csv");
    }
    if let Some(series) = &bundle.fitness_series {
        write_file(&dir.join("fitness_series.csv"), |w| write_fitness_series_csv(w, series))?;
        add("fitness_series", "fitness_series.csv");
    }
    if let Some(sim) = &bundle.sim {
        sim.report.write_dir(dir, &sim.cost, &sim.drive, &sim.label)?;
        add("throughput", "throughput.csv");
        add("latency", "latency.csv");
        add("shard_load", "shard_load.csv");
        add("sim_summary", "summary.json");
    }
    let index = ReportIndex { artifacts };
    let text = serde_json::to_string_pretty(&index).expect("index serialises");
    write_file(&dir.join(INDEX_FILE), |w| writeln!(w, "{text}"))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::{place_stream, ShardId};
    use crate::txgraph::test_support::id;

    fn d(n: u64, out: u32, inputs: &[u32]) -> PlacementDecision {
        let input_shards: Vec<ShardId> = inputs.iter().map(|&s| ShardId(s)).collect();
        PlacementDecision {
            arrival_index: n,
            tx: id(n),
            output_shard: ShardId(out),
            cross_shard: input_shards.iter().any(|&s| s.0 != out),
            input_shards,
            fitness_max: None,
        }
    }

    #[test]
    fn ratio_and_imbalance() {
        let ds = [d(0, 0, &[]), d(1, 0, &[0]), d(2, 1, &[0]), d(3, 1, &[1])];
        assert_eq!(cross_shard_ratio(&ds).unwrap(), 1.0 / 3.0);
        assert!(matches!(cross_shard_ratio(&ds[..1]), Err(MetricsError::NoNonCoinbase)));
        assert_eq!(cross_shard_ratio(&[d(1, 0, &[0])]).unwrap(), 0.0);
        let s = PartitionSummary::from_decisions(&ds, 2).unwrap();
        assert_eq!(s.partition_sizes, vec![2, 2]);
        assert_eq!(s.cross_shard_ratio().unwrap(), cross_shard_ratio(&ds).unwrap());
        assert_eq!(load_imbalance(&[100, 0, 0, 0]), 100);
        assert_eq!(load_imbalance(&[5, 5, 5]), 0);
        assert_eq!(load_imbalance(&[3, 9, 1]), load_imbalance(&[9, 1, 3]));
    }

    #[test]
    fn loads_per_bucket() {
        let ds = [d(0, 0, &[]), d(1, 1, &[]), d(2, 1, &[]), d(3, 3, &[])];
        let loads = dynamic_loads(&ds, 4, 3).unwrap();
        assert_eq!(loads.len(), 2);
        assert_eq!(loads[0].shares, vec![1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0]);
        assert_eq!(loads[1].shares, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(loads[1].max_share(), 1.0);
        assert!(matches!(dynamic_loads(&ds, 4, 0), Err(MetricsError::ZeroWindow)));
    }

    #[test]
    fn loads_by_block() {
        let spec = crate::workload::WorkloadSpec {
            n_tx: 2_000,
            block_size: 100,
            genesis_coinbases: 0,
            ..Default::default()
        };
        let s = crate::workload::generate(&spec).unwrap();
        let run = place_stream(&s, Algorithm::Hp, 4, None).unwrap();
        let loads = dynamic_loads_by_block(&run.decisions, &s, 4, 5).unwrap();
        assert_eq!(loads.len(), 4);
        assert!(loads.iter().all(|b| b.placed == 500));
        for b in &loads {
            assert!((b.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn export_refuses_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r");
        let empty = export_report(&ReportBundle::default(), &out, false).unwrap();
        assert!(empty.artifacts.is_empty());
        assert!(matches!(
            export_report(&ReportBundle::default(), &out, false),
            Err(MetricsError::OutputExists(_))
        ));
        let bundle = ReportBundle {
            grid: vec![GridRow { algorithm: "hp".into(), n_shards: 4, cross_ratio: 0.75, imbalance: 3 }],
            dynamic_loads: Some(dynamic_loads(&[d(0, 0, &[])], 1, 1).unwrap()),
            ..ReportBundle::default()
        };
        let index = export_report(&bundle, &out, true).unwrap();
        assert_eq!(index.artifacts.len(), 2);
        let text = fs::read_to_string(out.join("cross_ratio.csv")).unwrap();
        assert_eq!(text, "algorithm,n_shards,cross_ratio,imbalance\nhp,4,0.75,3\n");
    }
}
