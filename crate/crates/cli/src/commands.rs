use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use log::{info, warn};

use shardplace_core::metrics::{
    dynamic_loads, export_report, GridRow, PartitionSummary, ReportBundle, SimArtifact,
};
use shardplace_core::placement::{
    detect_tainted, max_fitness_series, place_stream, read_decisions_csv, write_decisions_csv, Algorithm,
    PlacementDecision, Placer,
};
use shardplace_core::simulator::{
    audit_atomicity, check_conservation, sample_lock_failures, simulate, ArrivalProcess, CostModel, DriveConfig,
    LockFailures, Placement,
};
use shardplace_core::txgraph::{
    immediate_predecessor_ratio, load_stream, one_parent_ratio, overall_one_parent_ratio, parent_count_histogram,
    power_law_slope, write_histogram_csv, write_ratio_series_csv, StreamFormat, TxStream,
};
use shardplace_core::workload::{generate, preset_by_name, WorkloadError, WorkloadSpec};

use crate::config::{overlay, usage, FileConfig, UsageError};
use crate::{Cli, Command, GlobalArgs};

const DEFAULT_WINDOW: usize = 10_000;
const DEFAULT_TAINT_THRESHOLD: f64 = 10.0;

#[derive(Args, Debug)]
pub struct StreamArgs {
    /// Stream file (JSON lines).
    #[arg(long)]
    pub stream: PathBuf,
    /// Sidecar listing parents placed before the stream started.
    #[arg(long)]
    pub external: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// bitcoin-like, chain-burst, aggregation-storm or uniform-random.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Workload spec file (TOML); missing keys fall back to bitcoin-like.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n_tx: Option<u64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: StreamArgs,
    /// Transactions per one-parent-ratio bucket.
    #[arg(long)]
    pub window: Option<usize>,
    /// Block range `start..end` for the immediate-predecessor ratio; repeatable.
    #[arg(long = "blocks")]
    pub blocks: Vec<String>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub input: StreamArgs,
    /// hp, greedy, t2s, v2 or optnorm.
    #[arg(short, long)]
    pub algorithm: Option<String>,
    #[arg(short = 's', long)]
    pub shards: Option<u32>,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also save the final placer state.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub taint_threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: StreamArgs,
    /// Decisions CSV from `place`.
    #[arg(long, conflicts_with = "algorithm")]
    pub decisions: Option<PathBuf>,
    /// Place live while simulating.
    #[arg(short, long)]
    pub algorithm: Option<String>,
    #[arg(short = 's', long)]
    pub shards: Option<u32>,
    /// Queue-length feedback for live placement (t2s with feedback is OptChain).
    #[arg(long)]
    pub feedback: bool,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_parser = ["uniform", "poisson"])]
    pub arrivals: Option<String>,
    #[arg(long)]
    pub duration_cap_s: Option<f64>,
    #[arg(long)]
    pub bucket_s: Option<f64>,
    #[arg(long)]
    pub probe_period_ms: Option<f64>,
    #[arg(long)]
    pub link_latency_ms: Option<f64>,
    /// Fraction of cross-shard transactions whose LOCK is made to fail.
    #[arg(long)]
    pub fail_fraction: Option<f64>,
    /// Write the request trace and audit the commit protocol.
    #[arg(long)]
    pub trace: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: StreamArgs,
    #[arg(short, long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    #[arg(short = 's', long, value_delimiter = ',')]
    pub shards: Vec<u32>,
    /// Grid CSV; standard output when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: StreamArgs,
    #[arg(long)]
    pub decisions: PathBuf,
    /// Defaults to one more than the highest shard in the decisions.
    #[arg(short = 's', long)]
    pub shards: Option<u32>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx { global: cli.global, file };
    match cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Place(a) => cmd_place(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

struct Ctx {
    global: GlobalArgs,
    file: FileConfig,
}

impl Ctx {
    fn algorithm(&self, flag: &Option<String>) -> anyhow::Result<Option<Algorithm>> {
        flag.as_ref().or(self.file.algorithm.as_ref()).map(|s| parse_algorithm(s)).transpose()
    }

    fn shards(&self, flag: Option<u32>) -> Option<u32> {
        flag.or(self.file.shards)
    }

    fn window(&self, flag: Option<usize>) -> anyhow::Result<usize> {
        let w = flag.or(self.file.window).unwrap_or(DEFAULT_WINDOW);
        if w == 0 {
            return usage("window must be at least 1");
        }
        Ok(w)
    }
}

fn parse_algorithm(s: &str) -> anyhow::Result<Algorithm> {
    s.parse().map_err(|_| {
        UsageError(format!("unknown algorithm '{s}' (expected one of hp, greedy, t2s, v2, optnorm)")).into()
    })
}

fn need_shards(n: Option<u32>) -> anyhow::Result<u32> {
    match n {
        Some(0) => usage("shard count must be at least 1"),
        Some(n) => Ok(n),
        None => usage("missing shard count (-s/--shards)"),
    }
}

/// Prints the resolved settings as a TOML document usable with `--config`.
fn banner(command: &str, paths: &[(&str, &Path)], settings: &toml::Table) {
    let mut text = format!("# shardplace {command}\n");
    for (k, p) in paths {
        text.push_str(&format!("# {k} = {}\n", p.display()));
    }
    text.push_str(&toml::to_string(settings).unwrap_or_default());
    eprint!("{text}");
}

fn table<T: serde::Serialize>(v: &T) -> toml::Value {
    toml::Value::Table(toml::Table::try_from(v).expect("settings are representable as TOML"))
}

fn check_writable(path: &Path, force: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        return Err(anyhow!("{} already exists; pass --force to overwrite", path.display()));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn check_dir(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() && !force && fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(anyhow!("{} exists and is not empty; pass --force to overwrite", dir.display()));
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load(input: &StreamArgs) -> anyhow::Result<TxStream> {
    let s = load_stream(&input.stream, StreamFormat::JsonLines, input.external.as_deref())
        .with_context(|| format!("loading {}", input.stream.display()))?;
    info!("loaded {} transactions from {}", s.len(), input.stream.display());
    Ok(s)
}

fn cmd_gen(ctx: &Ctx, a: GenArgs) -> anyhow::Result<()> {
    let base = match (&a.spec, a.preset.as_ref().or(ctx.file.preset.as_ref())) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let patch: toml::Table =
                toml::from_str(&text).map_err(|e| UsageError(format!("spec {}: {e}", path.display())))?;
            overlay(&WorkloadSpec::default(), Some(&patch), "workload")?
        }
        (None, name) => match preset_by_name(name.map_or("bitcoin-like", String::as_str)) {
            Ok(s) => s,
            Err(WorkloadError::UnknownPreset(p)) => return usage(format!("unknown preset '{p}'")),
            Err(e) => return Err(e.into()),
        },
    };
    let mut spec = overlay(&base, ctx.file.workload.as_ref(), "workload")?;
    spec.seed = ctx.global.seed.or(ctx.file.seed).unwrap_or(spec.seed);
    if let Some(n) = a.n_tx {
        spec.n_tx = n;
    }
    if let Err(e) = spec.validate() {
        return usage(e.to_string());
    }
    let mut settings = toml::Table::new();
    settings.insert("seed".into(), (spec.seed as i64).into());
    settings.insert("workload".into(), table(&spec));
    banner("gen", &[("out", &a.out)], &settings);

    check_writable(&a.out, ctx.global.force)?;
    let stream = generate(&spec)?;
    stream.save(&a.out)?;
    println!("wrote {} transactions to {}", stream.len(), a.out.display());
    Ok(())
}

fn parse_range(s: &str) -> anyhow::Result<Range<u64>> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| UsageError(format!("block range '{s}' is not start..end")))?;
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| UsageError(format!("block range '{s}': {e}")));
    let r = parse(lo)?..parse(hi)?;
    if r.is_empty() {
        return usage(format!("block range '{s}' is empty"));
    }
    Ok(r)
}

fn cmd_analyze(ctx: &Ctx, a: AnalyzeArgs) -> anyhow::Result<()> {
    let window = ctx.window(a.window)?;
    let ranges = a.blocks.iter().map(|s| parse_range(s)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut settings = toml::Table::new();
    settings.insert("window".into(), (window as i64).into());
    banner("analyze", &[("stream", &a.input.stream), ("out", &a.out)], &settings);

    let stream = load(&a.input)?;
    check_dir(&a.out, ctx.global.force)?;
    let hist = parent_count_histogram(&stream);
    write_histogram_csv(create(&a.out.join("parent_counts.csv"))?, &hist)?;
    let series = one_parent_ratio(&stream, window)?;
    write_ratio_series_csv(create(&a.out.join("one_parent_ratio.csv"))?, &series)?;
    if !ranges.is_empty() {
        let ratios = immediate_predecessor_ratio(&stream, &ranges)?;
        let mut w = create(&a.out.join("immediate_predecessor.csv"))?;
        writeln!(w, "start_block,end_block,fraction")?;
        for (r, f) in ranges.iter().zip(&ratios) {
            match f {
                Some(f) => writeln!(w, "{},{},{f}", r.start, r.end)?,
                None => writeln!(w, "{},{},", r.start, r.end)?,
            }
        }
        w.flush()?;
    }
    let fmt_opt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "transactions={} non_coinbase={} one_parent_ratio={} power_law_slope={}",
        stream.len(),
        stream.non_coinbase_count(),
        fmt_opt(overall_one_parent_ratio(&stream)),
        fmt_opt(power_law_slope(&hist)),
    );
    Ok(())
}

fn cmd_place(ctx: &Ctx, a: PlaceArgs) -> anyhow::Result<()> {
    let Some(alg) = ctx.algorithm(&a.algorithm)? else {
        return usage("missing algorithm (-a/--algorithm)");
    };
    let shards = need_shards(ctx.shards(a.shards))?;
    let threshold = a.taint_threshold.or(ctx.file.taint_threshold).unwrap_or(DEFAULT_TAINT_THRESHOLD);
    if !(threshold > 1.0) {
        return usage(format!("taint threshold {threshold} must exceed 1"));
    }
    let mut settings = toml::Table::new();
    settings.insert("algorithm".into(), alg.as_str().into());
    settings.insert("shards".into(), i64::from(shards).into());
    settings.insert("taint_threshold".into(), threshold.into());
    banner("place", &[("stream", &a.input.stream), ("out", &a.out)], &settings);

    check_writable(&a.out, ctx.global.force)?;
    if let Some(cp) = &a.checkpoint {
        check_writable(cp, ctx.global.force)?;
    }
    let stream = load(&a.input)?;
    let run = place_stream(&stream, alg, shards, None)?;
    write_decisions_csv(create(&a.out)?, alg, &run.decisions)?;
    if let Some(cp) = &a.checkpoint {
        run.state.write_checkpoint(create(cp)?)?;
    }
    let summary = PartitionSummary::from_decisions(&run.decisions, shards)?;
    let ratio = summary.cross_shard_ratio().map_or("n/a".to_string(), |r| format!("{r:.6}"));
    if alg.uses_fitness() {
        let tainted = detect_tainted(&run.state, threshold)?;
        if !tainted.is_empty() {
            warn!(
                "{} transactions carry fitness above {threshold}; scores are being amplified by aggregating transactions",
                tainted.len()
            );
        }
    }
    println!(
        "algorithm={alg} shards={shards} transactions={} cross_shard_ratio={ratio} imbalance={}",
        run.decisions.len(),
        summary.load_imbalance()
    );
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> anyhow::Result<()> {
    let file = &ctx.file;
    let mut cost: CostModel = overlay(&CostModel::default(), file.cost.as_ref(), "cost")?;
    if let Some(l) = a.link_latency_ms {
        cost.link_latency_ms = l;
    }
    let mut drive: DriveConfig = overlay(&DriveConfig::default(), file.drive.as_ref(), "drive")?;
    drive.seed = ctx.global.seed.or(file.seed).unwrap_or(drive.seed);
    if let Some(r) = a.rate {
        drive.arrival_rate_tps = r;
    }
    if let Some(p) = &a.arrivals {
        drive.arrivals = if p == "poisson" { ArrivalProcess::Poisson } else { ArrivalProcess::Uniform };
    }
    drive.duration_cap_s = a.duration_cap_s.or(drive.duration_cap_s);
    drive.bucket_s = a.bucket_s.unwrap_or(drive.bucket_s);
    drive.probe_period_ms = a.probe_period_ms.unwrap_or(drive.probe_period_ms);
    drive.trace |= a.trace;
    if let Err(e) = cost.validate().and_then(|_| drive.validate()) {
        return usage(e.to_string());
    }
    let feedback = a.feedback || file.feedback.unwrap_or(false);
    let fail_fraction = a.fail_fraction.or(file.fail_fraction).unwrap_or(0.0);
    if !(0.0..=1.0).contains(&fail_fraction) {
        return usage(format!("fail fraction {fail_fraction} is not in [0, 1]"));
    }
    let algorithm = if a.decisions.is_some() { None } else { ctx.algorithm(&a.algorithm)? };
    if a.decisions.is_none() && algorithm.is_none() {
        return usage("simulate needs either --decisions or an algorithm (-a)");
    }
    if feedback && a.decisions.is_some() {
        return usage("--feedback needs live placement; pass -a instead of --decisions");
    }
    if feedback && fail_fraction > 0.0 {
        return usage("lock failures need decisions known in advance; drop --feedback");
    }

    let mut settings = toml::Table::new();
    settings.insert("seed".into(), (drive.seed as i64).into());
    if let Some(alg) = algorithm {
        settings.insert("algorithm".into(), alg.as_str().into());
        settings.insert("feedback".into(), feedback.into());
    }
    if let Some(s) = ctx.shards(a.shards) {
        settings.insert("shards".into(), i64::from(s).into());
    }
    settings.insert("fail_fraction".into(), fail_fraction.into());
    settings.insert("cost".into(), table(&cost));
    settings.insert("drive".into(), table(&drive));
    let mut paths = vec![("stream", a.input.stream.as_path()), ("out", a.out.as_path())];
    if let Some(d) = &a.decisions {
        paths.push(("decisions", d.as_path()));
    }
    banner("simulate", &paths, &settings);

    if a.out.exists() && !ctx.global.force && fs::read_dir(&a.out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(anyhow!("{} exists and is not empty; pass --force to overwrite", a.out.display()));
    }
    let stream = load(&a.input)?;
    let (label, shards, decisions): (String, u32, Option<Vec<PlacementDecision>>) = match (&a.decisions, algorithm) {
        (Some(path), _) => {
            let f = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
            let (alg, d) = read_decisions_csv(f, &stream).with_context(|| format!("reading {}", path.display()))?;
            let inferred = d.iter().map(|d| d.output_shard.0 + 1).max().unwrap_or(1);
            let shards = ctx.shards(a.shards).unwrap_or(inferred);
            (alg.to_string(), shards, Some(d))
        }
        (None, Some(alg)) => {
            let shards = need_shards(ctx.shards(a.shards))?;
            let label = match (alg, feedback) {
                (Algorithm::T2s, true) => "optchain".to_string(),
                (alg, true) => format!("{alg}+feedback"),
                (alg, false) => alg.to_string(),
            };
            // Without feedback the placement does not depend on timing.
            let d = (!feedback).then(|| place_stream(&stream, alg, shards, None)).transpose()?;
            (label, shards, d.map(|r| r.decisions))
        }
        (None, None) => unreachable!("checked above"),
    };
    let failures = match &decisions {
        Some(d) if fail_fraction > 0.0 => sample_lock_failures(d, fail_fraction, drive.seed)?,
        _ => LockFailures::none(),
    };
    let placement = match &decisions {
        Some(d) => Placement::Precomputed(d),
        None => Placement::Live {
            placer: Placer::for_stream(&stream, algorithm.expect("live placement has an algorithm"), shards)?,
            feedback,
        },
    };
    info!("simulating {} transactions on {shards} shards ({label})", stream.len());
    let out = simulate(&stream, placement, shards, &cost, &drive, &failures)?;
    check_conservation(&out.report).map_err(|e| anyhow!("conservation check failed: {e}"))?;

    let grid = match GridRow::new(algorithm.unwrap_or(Algorithm::Hp), shards, &out.decisions) {
        Ok(mut row) => {
            row.algorithm = label.clone();
            vec![row]
        }
        Err(_) => Vec::new(),
    };
    let bundle = ReportBundle {
        grid,
        sim: Some(SimArtifact { label: label.clone(), report: out.report.clone(), cost, drive }),
        ..ReportBundle::default()
    };
    export_report(&bundle, &a.out, ctx.global.force)?;
    if let Some(trace) = &out.trace {
        let mut w = create(&a.out.join("trace.jsonl"))?;
        for ev in trace {
            serde_json::to_writer(&mut w, ev)?;
            writeln!(w)?;
        }
        w.flush()?;
        match audit_atomicity(trace, &out.decisions) {
            Ok(()) => info!("atomicity audit passed"),
            Err(e) => return Err(anyhow!("atomicity audit failed: {e}")),
        }
    }
    let t = &out.report.totals;
    let p50 = out.report.latency.map_or("n/a".to_string(), |p| format!("{:.3}", p.p50_ms));
    println!(
        "placement={label} shards={shards} completed={} aborted={} pending={} throughput_tps={:.1} p50_ms={p50}{}",
        t.completed,
        t.aborted,
        t.pending,
        t.overall_tps,
        if t.truncated { " truncated" } else { "" }
    );
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> anyhow::Result<()> {
    let names = if a.algorithms.is_empty() { ctx.file.algorithms.clone().unwrap_or_default() } else { a.algorithms };
    let shard_counts = if a.shards.is_empty() { ctx.file.shard_counts.clone().unwrap_or_default() } else { a.shards };
    if names.is_empty() {
        return usage("compare needs at least one algorithm (-a hp,t2s,...)");
    }
    if shard_counts.is_empty() || shard_counts.contains(&0) {
        return usage("compare needs positive shard counts (-s 4,16,...)");
    }
    let algorithms = names.iter().map(|s| parse_algorithm(s)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut settings = toml::Table::new();
    settings.insert("algorithms".into(), algorithms.iter().map(|a| a.as_str()).collect::<Vec<_>>().into());
    settings.insert("shard_counts".into(), shard_counts.iter().map(|&s| i64::from(s)).collect::<Vec<_>>().into());
    let mut paths = vec![("stream", a.input.stream.as_path())];
    if let Some(o) = &a.out {
        paths.push(("out", o.as_path()));
    }
    banner("compare", &paths, &settings);

    if let Some(o) = &a.out {
        check_writable(o, ctx.global.force)?;
    }
    let stream = load(&a.input)?;
    let cells: Vec<(Algorithm, u32)> =
        algorithms.iter().flat_map(|&alg| shard_counts.iter().map(move |&n| (alg, n))).collect();
    let rows: Vec<anyhow::Result<GridRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(alg, n)| {
                let stream = &stream;
                scope.spawn(move || -> anyhow::Result<GridRow> {
                    let run = place_stream(stream, alg, n, None)?;
                    Ok(GridRow::new(alg, n, &run.decisions)?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("placement thread panicked")).collect()
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    match &a.out {
        Some(o) => shardplace_core::metrics::write_grid_csv(create(o)?, &rows)?,
        None => shardplace_core::metrics::write_grid_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_report(ctx: &Ctx, a: ReportArgs) -> anyhow::Result<()> {
    let window = ctx.window(a.window)?;
    let mut settings = toml::Table::new();
    settings.insert("window".into(), (window as i64).into());
    if let Some(s) = ctx.shards(a.shards) {
        settings.insert("shards".into(), i64::from(s).into());
    }
    banner("report", &[("stream", &a.input.stream), ("decisions", &a.decisions), ("out", &a.out)], &settings);

    let stream = load(&a.input)?;
    let f = BufReader::new(File::open(&a.decisions).with_context(|| format!("opening {}", a.decisions.display()))?);
    let (alg, decisions) =
        read_decisions_csv(f, &stream).with_context(|| format!("reading {}", a.decisions.display()))?;
    let inferred = decisions.iter().map(|d| d.output_shard.0 + 1).max().unwrap_or(1);
    let shards = ctx.shards(a.shards).unwrap_or(inferred);
    let grid = match GridRow::new(alg, shards, &decisions) {
        Ok(row) => vec![row],
        Err(shardplace_core::metrics::MetricsError::NoNonCoinbase) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let series = max_fitness_series(&decisions, window)?;
    let bundle = ReportBundle {
        grid,
        dynamic_loads: Some(dynamic_loads(&decisions, shards, window)?),
        fitness_series: (!series.is_empty()).then_some(series),
        sim: None,
    };
    let index = export_report(&bundle, &a.out, ctx.global.force)?;
    for entry in &index.artifacts {
        println!("{}", a.out.join(&entry.file).display());
    }
    Ok(())
}
