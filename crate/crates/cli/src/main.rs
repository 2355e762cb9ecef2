use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use opthash_core::bench::{budget_to_buckets, check_budget, run_experiment, to_csv, top_k, train_opthash, Estimator, ExperimentConfig, Source, TrainParams};
use opthash_core::rng::child_seed;
use opthash_core::sketches::{CountMinSketch, LearnedCms, Mode, SavedSketch};
use opthash_core::solvers::export_milp;
use opthash_core::stream::{read_records, write_records, StreamPrefix};
use opthash_core::synthgen::{gen_stream, gen_universe, SynthConfig};

#[derive(Parser)]
#[command(name = "opthash", version, about = "Learned hashing schemes for frequency estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic universe, prefix and remainder stream.
    Synth(SynthArgs),
    /// Build a sketch from a prefix stream file.
    Train(TrainArgs),
    /// Run an experiment and write the CSV report.
    Bench(BenchArgs),
    /// Write the mixed-integer formulation of a prefix as an LP file.
    ExportMilp(MilpArgs),
    /// Feed a stream into a saved sketch and answer queries.
    Replay(ReplayArgs),
}

/// Options shared by everything driven by an experiment config. Flags
/// override values read from `--config`.
#[derive(Args)]
struct Common {
    /// Plain `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Memory budget in kilobytes; comma separated for `bench`.
    #[arg(long, value_delimiter = ',')]
    buckets_kb: Option<Vec<f64>>,
    /// Ratio of buckets to stored ids.
    #[arg(long)]
    ratio_c: Option<f64>,
    /// Estimator name; comma separated for `bench`.
    #[arg(long, value_delimiter = ',')]
    estimator: Option<Vec<Estimator>>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ExperimentConfig::from_kv(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = &self.buckets_kb {
            cfg.budgets_kb = v.clone();
        }
        if let Some(v) = self.ratio_c {
            cfg.ratio_c = v;
        }
        if let Some(v) = &self.estimator {
            cfg.estimators = v.clone();
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    size_offset: u32,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    eligible_fraction: f64,
    /// Prefix length; defaults to 10·2^groups.
    #[arg(long)]
    prefix_len: Option<usize>,
    /// Total stream length as a multiple of the prefix length.
    #[arg(long, default_value_t = 10)]
    stream_factor: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for universe.csv, prefix.csv and stream.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Prefix stream file (`id,feat...` per arrival).
    #[arg(long)]
    prefix: PathBuf,
    /// CMS depth; also the LCMS backing depth.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Exactly stored heavy ids for LCMS.
    #[arg(long, default_value_t = 100)]
    heavy_buckets: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Record per-cell wall time; makes the CSV nondeterministic.
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MilpArgs {
    #[arg(long)]
    prefix: PathBuf,
    /// Number of buckets.
    #[arg(long)]
    buckets: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Big-M constant; defaults to the largest prefix frequency.
    #[arg(long)]
    big_m: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    sketch: PathBuf,
    /// Stream file (`id,feat...` per arrival).
    #[arg(long)]
    stream: PathBuf,
    /// Records to query; defaults to the distinct ids of the stream.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Write `id,estimate` lines here.
    #[arg(long)]
    out: PathBuf,
    /// Also save the updated sketch.
    #[arg(long)]
    save: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::ExportMilp(a) => milp(a),
        Command::Replay(a) => replay(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.stream_factor < 1 {
        bail!("--stream-factor must be at least 1");
    }
    let cfg = SynthConfig {
        groups: a.groups,
        size_offset: a.size_offset,
        dim: a.dim,
        eligible_fraction: a.eligible_fraction,
        seed: child_seed(a.seed, 0),
        prefix_len: a.prefix_len,
    };
    let u = gen_universe(&cfg)?;
    let len = cfg.prefix_len();
    let prefix = gen_stream(&u, len, true, child_seed(a.seed, 1))?;
    let rest = gen_stream(&u, len * (a.stream_factor - 1), false, child_seed(a.seed, 2))?;
    fs::create_dir_all(&a.out_dir)?;
    let feat = |id: u64| u.features(id).expect("generated id");
    write_records(&a.out_dir.join("universe.csv"), u.elements.iter().map(|e| (e.id, e.features.as_slice())))?;
    write_records(&a.out_dir.join("prefix.csv"), prefix.iter().map(|&id| (id, feat(id))))?;
    write_records(&a.out_dir.join("stream.csv"), rest.iter().map(|&id| (id, feat(id))))?;
    Ok(())
}

fn load_prefix(path: &Path) -> Result<StreamPrefix> {
    let recs = read_records(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(opthash_core::stream::ingest_prefix(recs)?)
}

fn single<T: Copy>(xs: &[T], what: &str) -> Result<T> {
    match xs {
        [x] => Ok(*x),
        _ => bail!("train needs exactly one {what}, got {}", xs.len()),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.common.config()?;
    let kb = single(&cfg.budgets_kb, "budget")?;
    let est = single(&cfg.estimators, "estimator")?;
    let b_total = budget_to_buckets(kb);
    let prefix = load_prefix(&a.prefix)?;
    let seed = cfg.seed;
    let saved = match est {
        Estimator::Cms => {
            let mut s = CountMinSketch::with_budget(b_total, a.depth, seed)?;
            for &id in prefix.events() {
                s.update(id);
            }
            SavedSketch::Cms(s)
        }
        Estimator::Lcms => {
            // Without an oracle, the heavy set is the prefix top.
            let freqs: Vec<(u64, u64)> = prefix.elements().iter().map(|e| e.id).zip(prefix.freqs().iter().copied()).collect();
            let heavy = top_k(&freqs, a.heavy_buckets);
            let mut s = LearnedCms::new(&heavy, b_total, a.heavy_buckets, a.depth, seed)?;
            for &id in prefix.events() {
                s.update(id);
            }
            SavedSketch::Lcms(s)
        }
        Estimator::Opthash => {
            let t = train_opthash(&prefix, b_total, &TrainParams::from(&cfg), seed)?;
            let sampled: HashSet<u64> = t.sampled.iter().copied().collect();
            let mut s = t.sketch;
            for &id in prefix.events().iter().filter(|id| !sampled.contains(id)) {
                let pos = prefix.position(id).expect("prefix id");
                s.update_with(id, prefix.features(pos))?;
            }
            SavedSketch::Opthash(s)
        }
    };
    check_budget(est.name(), saved.memory_buckets(), b_total)?;
    saved.save(&a.out)?;
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = a.common.config()?;
    cfg.record_timing |= a.record_timing;
    if let Source::QueryLog { path, .. } = &cfg.source {
        if !path.exists() {
            bail!("query log {} not found", path.display());
        }
    }
    let rows = run_experiment(&cfg)?;
    fs::write(&a.out, to_csv(&rows)?)?;
    Ok(())
}

fn milp(a: MilpArgs) -> Result<()> {
    let prefix = load_prefix(&a.prefix)?;
    let model = export_milp(&prefix, a.buckets, a.lambda, a.big_m)?;
    model.write_lp(&a.out)?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let mut sketch = SavedSketch::load(&a.sketch).with_context(|| format!("loading {}", a.sketch.display()))?;
    let stream = read_records(&a.stream).with_context(|| format!("reading {}", a.stream.display()))?;
    for (id, x) in &stream {
        match &mut sketch {
            SavedSketch::Cms(s) => s.update(*id),
            SavedSketch::Lcms(s) => s.update(*id),
            SavedSketch::Opthash(s) => s.update_with(*id, x)?,
        }
    }
    let queries: BTreeMap<u64, Vec<f64>> = match &a.queries {
        Some(p) => read_records(p).with_context(|| format!("reading {}", p.display()))?.into_iter().collect(),
        None => stream.into_iter().collect(),
    };
    let mut out = String::from("id,estimate\n");
    for (id, x) in &queries {
        let est = match &sketch {
            SavedSketch::Cms(s) => s.query(*id) as f64,
            SavedSketch::Lcms(s) => s.query(*id) as f64,
            SavedSketch::Opthash(s) => s.query_with(*id, x)?,
        };
        writeln!(out, "{id},{est}").expect("write to string");
    }
    fs::write(&a.out, out)?;
    if let Some(p) = &a.save {
        sketch.save(p)?;
    }
    Ok(())
}
