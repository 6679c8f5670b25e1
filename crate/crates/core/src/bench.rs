//! Storage, retrieval and throughput benchmarks for the two storage modes.
//!
//! Every repetition runs against a fresh temporary data directory. Results
//! are flat rows with the CSV columns
//! `mode,metric,dimension,value,rep,measure,unit`; summary rows carry
//! `rep = median|mean|stddev` and claims are emitted as `verdict_*` rows
//! with measure 1 (holds) or 0.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ledger::Address;
use crate::workflows::{FaultPoint, PersonalInfo, RetrievalCost, StorageMode, Vault, WorkflowError};

const AUDIO_CLIP: usize = 256;
const FILLER_MEDIA: usize = 64;
const STORE_SAMPLES: usize = 3;
const RETRIEVE_SAMPLES: usize = 5;
pub const KIB: usize = 1024;
pub const MIB: usize = 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    /// Media sizes in bytes; 0 is allowed.
    pub file_sizes: Vec<usize>,
    pub block_counts: Vec<usize>,
    pub user_counts: Vec<usize>,
    pub repetitions: usize,
    pub modes: Vec<StorageMode>,
    /// Transactions committed per throughput repetition.
    pub tps_transactions: usize,
    /// Concurrent readers in the retrieval benchmark; 1 disables it.
    pub parallel_readers: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            file_sizes: vec![0, KIB, 100 * KIB, MIB],
            block_counts: vec![10, 100, 1000],
            user_counts: vec![10, 1000, 10_000],
            repetitions: 5,
            modes: vec![StorageMode::CidAnchor, StorageMode::OnchainPayload],
            tps_transactions: 20,
            parallel_readers: 1,
            seed: 0,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if self.repetitions < 3 {
            return bad("repetitions must be at least 3");
        }
        if self.block_counts.contains(&0) || self.user_counts.contains(&0) {
            return bad("block and user counts must be positive");
        }
        if self.tps_transactions == 0 || self.parallel_readers == 0 {
            return bad("tps_transactions and parallel_readers must be positive");
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: String,
    pub metric: String,
    pub dimension: String,
    pub value: u64,
    /// Repetition index, or `median`/`mean`/`stddev` for summaries.
    pub rep: String,
    pub measure: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str = "mode,metric,dimension,value,rep,measure,unit";

impl BenchResult {
    fn push(&mut self, mode: &str, metric: &str, dimension: &str, value: u64, rep: String, measure: f64, unit: &str) {
        self.rows.push(BenchRow {
            mode: mode.to_string(),
            metric: metric.to_string(),
            dimension: dimension.to_string(),
            value,
            rep,
            measure,
            unit: unit.to_string(),
        });
    }

    fn verdict(&mut self, mode: &str, name: &str, dimension: &str, value: u64, holds: bool) {
        self.push(mode, &format!("verdict_{name}"), dimension, value, "all".into(), f64::from(u8::from(holds)), "bool");
    }

    fn summarize(&mut self, mode: &str, metric: &str, dimension: &str, value: u64, samples: &[f64], unit: &str) {
        let (mean, sd) = mean_stddev(samples);
        self.push(mode, metric, dimension, value, "median".into(), median(samples), unit);
        self.push(mode, metric, dimension, value, "mean".into(), mean, unit);
        self.push(mode, metric, dimension, value, "stddev".into(), sd, unit);
    }

    pub fn extend(&mut self, other: BenchResult) {
        self.rows.extend(other.rows);
    }

    /// All verdict rows as `(mode, name, dimension, value, holds)`.
    pub fn verdicts(&self) -> Vec<(&str, &str, &str, u64, bool)> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.metric
                    .strip_prefix("verdict_")
                    .map(|n| (r.mode.as_str(), n, r.dimension.as_str(), r.value, r.measure == 1.0))
            })
            .collect()
    }

    /// Verdict `name` at `value`, if emitted.
    pub fn verdict_at(&self, name: &str, value: u64) -> Option<bool> {
        self.verdicts().into_iter().find(|v| v.1 == name && v.3 == value).map(|v| v.4)
    }

    /// Summary measure for a metric.
    pub fn summary(&self, mode: StorageMode, metric: &str, dimension: &str, value: u64, stat: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mode == mode.as_str() && r.metric == metric && r.dimension == dimension && r.value == value && r.rep == stat)
            .map(|r| r.measure)
    }

    /// Per-repetition measures for a metric.
    pub fn samples(&self, mode: StorageMode, metric: &str, dimension: &str, value: u64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode.as_str() && r.metric == metric && r.dimension == dimension && r.value == value)
            .filter(|r| r.rep.parse::<usize>().is_ok())
            .map(|r| r.measure)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{},{}", r.mode, r.metric, r.dimension, r.value, r.rep, r.measure, r.unit)?;
        }
        Ok(())
    }
}

pub fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and population standard deviation.
pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

fn random_bytes(rng: &mut ChaCha20Rng, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

fn person(i: usize) -> PersonalInfo {
    PersonalInfo {
        name: format!("bench user {i}"),
        date_of_birth: "2000-01-01".into(),
        email: format!("bench{i}@example.test"),
        phone_number: format!("{i}"),
    }
}

fn no_faults(_: FaultPoint) -> Result<(), WorkflowError> {
    Ok(())
}

/// Fresh vault in a new temporary directory.
fn fresh_vault(mode: StorageMode) -> Result<(tempfile::TempDir, Vault), BenchError> {
    let dir = tempfile::tempdir()?;
    let vault = Vault::open(dir.path(), mode, None)?;
    debug_assert_eq!(vault.ledger().height(), 0);
    if vault.ledger().height() != 0 {
        return Err(BenchError::InvalidSpec("fresh ledger is not empty".into()));
    }
    Ok((dir, vault))
}

/// Registers user `i` with the given media and returns its id.
fn register(vault: &Vault, i: usize, audio: &[u8], video: &[u8]) -> Result<String, BenchError> {
    let user_id = format!("bench-{i}");
    let staged = vault.stage(&user_id, &person(i), audio, video, &mut no_faults)?;
    let miner = Address::derive("bench-miner");
    vault.commit(&staged, miner, 0, vault.ledger().height())?;
    Ok(user_id)
}

/// Store time and on-chain byte growth per file size.
pub fn bench_storage(spec: &BenchSpec) -> Result<BenchResult, BenchError> {
    spec.validate()?;
    let mut out = BenchResult::default();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut growth: BTreeMap<(StorageMode, usize), Vec<u64>> = BTreeMap::new();
    let mut times: BTreeMap<(StorageMode, usize), Vec<f64>> = BTreeMap::new();
    for &size in &spec.file_sizes {
        for rep in 0..spec.repetitions {
            for &mode in &spec.modes {
                let (_dir, vault) = fresh_vault(mode)?;
                let mut inner = Vec::with_capacity(STORE_SAMPLES);
                for s in 0..STORE_SAMPLES {
                    let audio = random_bytes(&mut rng, AUDIO_CLIP);
                    let video = random_bytes(&mut rng, size);
                    let before = vault.ledger().onchain_bytes();
                    let start = Instant::now();
                    register(&vault, s, &audio, &video)?;
                    inner.push(start.elapsed().as_secs_f64());
                    let grown = vault.ledger().onchain_bytes() - before;
                    if s == 0 {
                        out.push(mode.as_str(), "onchain_bytes", "file_size", size as u64, rep.to_string(), grown as f64, "bytes");
                    }
                    growth.entry((mode, size)).or_default().push(grown);
                }
                let t = median(&inner);
                out.push(mode.as_str(), "store_seconds", "file_size", size as u64, rep.to_string(), t, "s");
                times.entry((mode, size)).or_default().push(t);
            }
        }
    }
    for (&(mode, size), t) in &times {
        out.summarize(mode.as_str(), "store_seconds", "file_size", size as u64, t, "s");
    }

    if spec.modes.contains(&StorageMode::CidAnchor) {
        let all: Vec<u64> = growth.iter().filter(|((m, _), _)| *m == StorageMode::CidAnchor).flat_map(|(_, g)| g.clone()).collect();
        let constant = all.windows(2).all(|w| w[0] == w[1]);
        out.verdict("cid_anchor", "onchain_growth_constant", "file_size", 0, constant);
    }
    if spec.modes.contains(&StorageMode::OnchainPayload) {
        // linear with slope one: growth − size is the same for every size
        let offsets: Vec<i64> = growth
            .iter()
            .filter(|((m, _), _)| *m == StorageMode::OnchainPayload)
            .flat_map(|((_, size), g)| g.iter().map(move |b| *b as i64 - *size as i64))
            .collect();
        let linear = offsets.windows(2).all(|w| w[0] == w[1]);
        out.verdict("onchain_payload", "onchain_growth_linear", "file_size", 0, linear);
        for &size in &spec.file_sizes {
            let at_least = growth[&(StorageMode::OnchainPayload, size)].iter().all(|&b| b >= size as u64);
            out.verdict("onchain_payload", "onchain_growth_ge_size", "file_size", size as u64, at_least);
        }
    }
    if spec.modes.contains(&StorageMode::CidAnchor) && spec.modes.contains(&StorageMode::OnchainPayload) {
        for &size in spec.file_sizes.iter().filter(|&&s| s >= 100 * KIB) {
            let cid = median(&times[&(StorageMode::CidAnchor, size)]);
            let payload = median(&times[&(StorageMode::OnchainPayload, size)]);
            out.verdict("cid_anchor_vs_onchain_payload", "store_cid_le_payload", "file_size", size as u64, cid <= payload);
        }
    }
    Ok(out)
}

fn cost_rows(out: &mut BenchResult, mode: StorageMode, dimension: &str, value: u64, rep: usize, c: RetrievalCost) {
    for (metric, v) in [("user_lookups", c.user_lookups), ("tx_lookups", c.tx_lookups), ("store_gets", c.store_gets)] {
        out.push(mode.as_str(), metric, dimension, value, rep.to_string(), v as f64, "count");
    }
}

/// Median of several retrievals of `user_id`, plus the probe counts of one.
fn time_retrieval(vault: &Vault, user_id: &str) -> Result<(f64, RetrievalCost), BenchError> {
    let (_, cost) = vault.retrieve_counted(user_id)?;
    let mut t = Vec::with_capacity(RETRIEVE_SAMPLES);
    for _ in 0..RETRIEVE_SAMPLES {
        let start = Instant::now();
        let r = vault.retrieve(user_id)?;
        t.push(start.elapsed().as_secs_f64());
        std::hint::black_box(r);
    }
    Ok((median(&t), cost))
}

fn parallel_retrieval(vault: &Vault, user_ids: &[String], readers: usize) -> Result<f64, BenchError> {
    let start = Instant::now();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..readers)
            .map(|r| {
                let id = &user_ids[r % user_ids.len()];
                s.spawn(move || vault.retrieve(id).map(|_| ()))
            })
            .collect();
        handles.into_iter().try_for_each(|h| h.join().expect("reader thread panicked"))
    })?;
    Ok(start.elapsed().as_secs_f64())
}

/// Populates `n - 1` filler users with small media, then the target user.
fn populate(vault: &Vault, n: usize, target_media: &[u8], rng: &mut ChaCha20Rng) -> Result<(String, Vec<String>), BenchError> {
    let mut ids = Vec::with_capacity(n);
    for i in 0..n.saturating_sub(1) {
        ids.push(register(vault, i + 1, &random_bytes(rng, FILLER_MEDIA), &random_bytes(rng, FILLER_MEDIA))?);
    }
    let target = register(vault, 0, &random_bytes(rng, AUDIO_CLIP), target_media)?;
    ids.push(target.clone());
    Ok((target, ids))
}

/// Appends `n - 1` transactions not mapped to any user, then the target user.
fn populate_blocks(vault: &Vault, n: usize, target_media: &[u8], rng: &mut ChaCha20Rng) -> Result<String, BenchError> {
    let miner = Address::derive("bench-miner");
    for i in 0..n.saturating_sub(1) {
        let mut data_hash = [0u8; 32];
        rng.fill_bytes(&mut data_hash);
        let payload = (vault.mode() == StorageMode::OnchainPayload).then(|| random_bytes(rng, FILLER_MEDIA));
        let payload_hash: Option<[u8; 32]> = payload.as_ref().map(|p| Sha256::digest(p).into());
        let tx = vault.ledger().draft(miner, 0, payload_hash.unwrap_or(data_hash), i as u64, payload);
        vault.ledger().store_transaction(tx).map_err(WorkflowError::from)?;
    }
    register(vault, 0, &random_bytes(rng, AUDIO_CLIP), target_media)
}

/// Retrieval latency and probe counts against media size, chain length and
/// user population.
pub fn bench_retrieval(spec: &BenchSpec) -> Result<BenchResult, BenchError> {
    spec.validate()?;
    let mut out = BenchResult::default();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let mut times: BTreeMap<(StorageMode, &str, usize), Vec<f64>> = BTreeMap::new();
    let mut costs: BTreeMap<(StorageMode, &str, usize), Vec<RetrievalCost>> = BTreeMap::new();
    let population_media = KIB;

    for rep in 0..spec.repetitions {
        for &mode in &spec.modes {
            for &size in &spec.file_sizes {
                let (_dir, vault) = fresh_vault(mode)?;
                let media = random_bytes(&mut rng, size);
                let (target, ids) = populate(&vault, 1, &media, &mut rng)?;
                let (t, c) = time_retrieval(&vault, &target)?;
                out.push(mode.as_str(), "retrieve_seconds", "file_size", size as u64, rep.to_string(), t, "s");
                cost_rows(&mut out, mode, "file_size", size as u64, rep, c);
                times.entry((mode, "file_size", size)).or_default().push(t);
                costs.entry((mode, "file_size", size)).or_default().push(c);
                if spec.parallel_readers > 1 {
                    let t = parallel_retrieval(&vault, &ids, spec.parallel_readers)?;
                    out.push(mode.as_str(), "parallel_retrieve_seconds", "file_size", size as u64, rep.to_string(), t, "s");
                }
            }
            for &n in &spec.user_counts {
                let (_dir, vault) = fresh_vault(mode)?;
                let media = random_bytes(&mut rng, population_media);
                let (target, _) = populate(&vault, n, &media, &mut rng)?;
                let (t, c) = time_retrieval(&vault, &target)?;
                out.push(mode.as_str(), "retrieve_seconds", "user_count", n as u64, rep.to_string(), t, "s");
                cost_rows(&mut out, mode, "user_count", n as u64, rep, c);
                times.entry((mode, "user_count", n)).or_default().push(t);
                costs.entry((mode, "user_count", n)).or_default().push(c);
            }
            for &n in &spec.block_counts {
                let (_dir, vault) = fresh_vault(mode)?;
                let media = random_bytes(&mut rng, population_media);
                let target = populate_blocks(&vault, n, &media, &mut rng)?;
                let (t, c) = time_retrieval(&vault, &target)?;
                out.push(mode.as_str(), "retrieve_seconds", "block_count", n as u64, rep.to_string(), t, "s");
                cost_rows(&mut out, mode, "block_count", n as u64, rep, c);
                times.entry((mode, "block_count", n)).or_default().push(t);
                costs.entry((mode, "block_count", n)).or_default().push(c);
            }
        }
    }
    for (&(mode, dim, v), t) in &times {
        out.summarize(mode.as_str(), "retrieve_seconds", dim, v as u64, t, "s");
    }
    for &mode in &spec.modes {
        for (dim, list) in [("user_count", &spec.user_counts), ("block_count", &spec.block_counts)] {
            if list.is_empty() {
                continue;
            }
            let all: Vec<RetrievalCost> =
                costs.iter().filter(|((m, d, _), _)| *m == mode && *d == dim).flat_map(|(_, c)| c.clone()).collect();
            out.verdict(mode.as_str(), &format!("probes_constant_{dim}"), dim, 0, all.windows(2).all(|w| w[0] == w[1]));
        }
    }
    if spec.modes.contains(&StorageMode::CidAnchor) && spec.modes.contains(&StorageMode::OnchainPayload) {
        for &size in spec.file_sizes.iter().filter(|&&s| s >= MIB) {
            let cid = median(&times[&(StorageMode::CidAnchor, "file_size", size)]);
            let payload = median(&times[&(StorageMode::OnchainPayload, "file_size", size)]);
            out.verdict("cid_anchor_vs_onchain_payload", "retrieve_cid_le_payload", "file_size", size as u64, cid <= payload);
        }
    }
    Ok(out)
}

/// Committed transactions per second against embedded payload size, in
/// on-chain payload mode.
pub fn bench_tps(spec: &BenchSpec) -> Result<BenchResult, BenchError> {
    spec.validate()?;
    let mut out = BenchResult::default();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ 0x7a5);
    let mode = StorageMode::OnchainPayload;
    let mut sizes = spec.file_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut medians = Vec::with_capacity(sizes.len());
    for &size in &sizes {
        let mut tps = Vec::with_capacity(spec.repetitions);
        for rep in 0..spec.repetitions {
            let (_dir, vault) = fresh_vault(mode)?;
            let media: Vec<Vec<u8>> = (0..spec.tps_transactions).map(|_| random_bytes(&mut rng, size)).collect();
            let start = Instant::now();
            for (i, m) in media.iter().enumerate() {
                register(&vault, i, &[], m)?;
            }
            let rate = spec.tps_transactions as f64 / start.elapsed().as_secs_f64();
            out.push(mode.as_str(), "tps", "file_size", size as u64, rep.to_string(), rate, "tx/s");
            tps.push(rate);
        }
        out.summarize(mode.as_str(), "tps", "file_size", size as u64, &tps, "tx/s");
        medians.push((size, median(&tps)));
    }
    if medians.len() >= 2 {
        let nonincreasing = medians.windows(2).all(|w| w[0].1 >= w[1].1);
        out.verdict(mode.as_str(), "tps_nonincreasing", "file_size", 0, nonincreasing);
        let (first, last) = (medians[0], medians[medians.len() - 1]);
        out.verdict(mode.as_str(), "tps_smallest_ge_largest", "file_size", last.0 as u64, first.1 >= last.1);
        let max = medians.iter().map(|m| m.1).fold(f64::MIN, f64::max);
        out.verdict(mode.as_str(), "tps_smallest_is_max", "file_size", first.0 as u64, first.1 == max);
    }
    Ok(out)
}

/// All three benchmarks.
pub fn run_all(spec: &BenchSpec) -> Result<BenchResult, BenchError> {
    let mut out = bench_storage(spec)?;
    out.extend(bench_retrieval(spec)?);
    out.extend(bench_tps(spec)?);
    Ok(out)
}

/// Writes `<dir>/bench.csv`, plus one SVG bar chart per median metric.
pub fn write_outputs(result: &BenchResult, dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("bench.csv"))?;
    result.write_csv(&mut f)?;
    let mut series: BTreeMap<(String, String), Vec<(String, u64, f64)>> = BTreeMap::new();
    for r in result.rows.iter().filter(|r| r.rep == "median") {
        series.entry((r.metric.clone(), r.dimension.clone())).or_default().push((r.mode.clone(), r.value, r.measure));
    }
    for ((metric, dim), points) in series {
        std::fs::write(dir.join(format!("{metric}_{dim}.svg")), svg_bars(&format!("{metric} vs {dim}"), &points))?;
    }
    Ok(())
}

fn svg_bars(title: &str, points: &[(String, u64, f64)]) -> String {
    let width = 60 + 40 * points.len();
    let max = points.iter().map(|p| p.2).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"260\">\n<text x=\"10\" y=\"20\" font-size=\"14\">{title}</text>\n"
    );
    for (i, (mode, value, measure)) in points.iter().enumerate() {
        let h = 180.0 * measure / max;
        let x = 30 + 40 * i;
        let fill = if mode == "cid_anchor" { "#4a7" } else { "#a47" };
        s += &format!(
            "<rect x=\"{x}\" y=\"{:.1}\" width=\"30\" height=\"{h:.1}\" fill=\"{fill}\"><title>{mode} {value}: {measure}</title></rect>\n",
            220.0 - h
        );
        s += &format!("<text x=\"{x}\" y=\"240\" font-size=\"9\">{value}</text>\n");
    }
    s + "</svg>\n"
}
