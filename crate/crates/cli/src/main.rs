//! `fbt`: command-line front end.
//!
//! Exit codes: 0 success, 1 domain error (kind and message on stderr),
//! 2 usage error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fbt_core::bench::{self, BenchSpec};
use fbt_core::consensus::Scenario;
use fbt_core::corpus;
use fbt_core::face::{embed_frame, verify, GrayImage, StageWeights, VerifyConfig};
use fbt_core::ledger::validate_chain_with;
use fbt_core::voice::{enroll, AudioSignal, EnrollConfig, EnrollmentDb, FeatureConfig, KPolicy};
use fbt_core::workflows::{
    derive_user_id, PersonalInfo, Probe, RegistrationRequest, System, SystemConfig, CONFIG_FILE,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fbt", version, about = "Blockchain-anchored identity storage with face and voice login")]
struct Cli {
    /// Data directory holding the store, ledger and enrollments.
    #[arg(long, global = true, default_value = "fbt-data", env = "FBT_DATA_DIR")]
    data_dir: PathBuf,
    /// System configuration (JSON). Defaults to <data-dir>/config.json when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a user from a voice recording and a face video.
    Register {
        #[arg(long)]
        name: String,
        #[arg(long)]
        dob: String,
        #[arg(long)]
        email: String,
        #[arg(long)]
        phone: String,
        /// 16-bit PCM mono WAV.
        #[arg(long)]
        audio: PathBuf,
        /// PGM file (one or more frames) or directory of PGM frames.
        #[arg(long)]
        video: PathBuf,
    },
    /// Face check, then voice check. Exits 1 when access is denied.
    Login {
        #[arg(long)]
        user: String,
        /// Live face frame (PGM).
        #[arg(long)]
        frame: PathBuf,
        /// Spoken paraphrase (WAV).
        #[arg(long)]
        voice: PathBuf,
    },
    /// Walk the chain for a user and optionally write out the stored media.
    Retrieve {
        #[arg(long)]
        user: String,
        /// Directory to write audio.wav and video.pgm into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a voice model into a standalone enrollment directory.
    EnrollVoice {
        #[arg(long)]
        user: String,
        #[arg(long, required = true)]
        audio: Vec<PathBuf>,
        #[arg(long)]
        db: PathBuf,
        /// Fixed component count instead of BIC selection.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        replace: bool,
    },
    /// Compare two face images.
    VerifyFace {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Run a consensus scenario (JSON) and report win counts.
    ConsensusSim {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write per-miner wins as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Storage, retrieval and throughput benchmarks.
    Bench {
        /// Benchmark spec (JSON); defaults to the full sweep.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for bench.csv and SVG charts.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Small sweep for a quick look.
        #[arg(long)]
        quick: bool,
        /// Concurrent readers in the retrieval benchmark.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Equal-error thresholds from a probe directory laid out as <dir>/<user_id>/*.{pgm,wav}.
    Calibrate {
        #[arg(long)]
        probes: PathBuf,
        /// Save the thresholds into <data-dir>/config.json.
        #[arg(long)]
        write: bool,
    },
    /// Export the chain as JSON lines and validate it.
    ExportChain {
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus: per-user media, probes and a manifest.
    SynthCorpus {
        #[arg(long, default_value_t = 4)]
        users: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(cli: &Cli) -> Result<SystemConfig> {
    let path = cli.config.clone().unwrap_or_else(|| cli.data_dir.join(CONFIG_FILE));
    let mut cfg = if path.exists() {
        SystemConfig::load(&path)?
    } else if cli.config.is_some() {
        bail!("InvalidConfig: {} does not exist", path.display());
    } else {
        SystemConfig::default()
    };
    cfg.apply_env_seed()?;
    Ok(cfg)
}

fn open_system(cli: &Cli) -> Result<System> {
    Ok(System::open_with(&cli.data_dir, load_config(cli)?)?)
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(fbt_core::workflows::ENV_SEED) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("InvalidConfig: FBT_SEED={v:?}"))?)),
        Err(_) => Ok(None),
    }
}

fn read_frame(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).with_context(|| format!("MediaUnreadable: {}", path.display()))?;
    fbt_core::face::decode_pgm_stream(&bytes)?
        .into_iter()
        .next()
        .with_context(|| format!("InvalidRequest: {} has no frames", path.display()))
}

fn collect_probes(dir: &Path) -> Result<Vec<Probe>> {
    let mut probes = Vec::new();
    let mut owners: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    owners.sort();
    for owner_dir in owners {
        let owner = owner_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&owner_dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        files.sort();
        for f in files {
            match f.extension().and_then(|e| e.to_str()) {
                Some("pgm") => probes.push(Probe { owner: owner.clone(), frame: Some(f), audio: None }),
                Some("wav") => probes.push(Probe { owner: owner.clone(), frame: None, audio: Some(f) }),
                _ => {}
            }
        }
    }
    if probes.is_empty() {
        bail!("InvalidRequest: no .pgm or .wav probes under {}", dir.display());
    }
    Ok(probes)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Register { name, dob, email, phone, audio, video } => {
            let mut sys = open_system(cli)?;
            let req = RegistrationRequest {
                info: PersonalInfo {
                    name: name.clone(),
                    date_of_birth: dob.clone(),
                    email: email.clone(),
                    phone_number: phone.clone(),
                },
                audio_path: audio.clone(),
                video_path: video.clone(),
            };
            let (user_id, tx) = sys.register(&req)?;
            print_json(&json!({ "user_id": user_id, "tx_hash": tx.to_hex() }))?;
        }
        Command::Login { user, frame, voice } => {
            let sys = open_system(cli)?;
            let session = sys.login(user, frame, voice)?;
            print_json(&serde_json::to_value(&session)?)?;
            if !session.granted() {
                eprintln!(
                    "Denied at {:?}: {}",
                    session.denied_at.expect("denied sessions record the stage"),
                    session.reason.as_deref().unwrap_or_default()
                );
                return Ok(1);
            }
        }
        Command::Retrieve { user, out } => {
            let sys = open_system(cli)?;
            let (r, cost) = sys.retrieve_counted(user)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("audio.wav"), &r.audio)?;
                std::fs::write(dir.join("video.pgm"), &r.video)?;
            }
            print_json(&json!({
                "tx_hash": r.tx_hash.to_hex(),
                "block_number": r.transaction.block_number,
                "record": r.record,
                "audio_bytes": r.audio.len(),
                "video_bytes": r.video.len(),
                "lookups": cost,
            }))?;
        }
        Command::EnrollVoice { user, audio, db, k, replace } => {
            let cfg = load_config(cli)?;
            let mut enroll_cfg: EnrollConfig = cfg.enroll.clone();
            if let Some(k) = k {
                enroll_cfg.k_policy = KPolicy::Fixed { k: *k };
            }
            let feature: FeatureConfig = cfg.feature.clone();
            let recordings = audio
                .iter()
                .map(|p| AudioSignal::from_wav_file(p).with_context(|| p.display().to_string()))
                .collect::<Result<Vec<_>>>()?;
            let e = enroll(user, &recordings, &feature, &enroll_cfg)?;
            let summary = json!({ "user_id": e.user_id, "k": e.k, "frames": e.frames, "log_likelihood": e.log_likelihood, "iterations": e.iterations });
            let mut store = EnrollmentDb::open(db)?;
            store.insert(e, *replace)?;
            print_json(&summary)?;
        }
        Command::VerifyFace { reference, probe, theta } => {
            let cfg = load_config(cli)?;
            let mut verify_cfg: VerifyConfig = cfg.verify.clone();
            if let Some(t) = theta {
                verify_cfg.theta = *t;
                verify_cfg.validate()?;
            }
            let weights = match &cfg.weights_path {
                Some(p) => StageWeights::load(p)?,
                None => StageWeights::random(cfg.weights_seed),
            };
            let a = embed_frame(&read_frame(reference)?, &weights, &verify_cfg)?;
            let b = embed_frame(&read_frame(probe)?, &weights, &verify_cfg)?;
            let d = verify(&b.embedding, &a.embedding, &verify_cfg);
            print_json(&json!({
                "similarity": d.similarity,
                "theta": verify_cfg.theta,
                "accept": d.accept,
                "reference_source": a.source,
                "probe_source": b.source,
            }))?;
        }
        Command::ConsensusSim { scenario, csv } => {
            let text = std::fs::read_to_string(scenario).with_context(|| scenario.display().to_string())?;
            let mut sc: Scenario = serde_json::from_str(&text).context("InvalidRequest: scenario JSON")?;
            if let Some(seed) = env_seed()? {
                sc.seed = seed;
            }
            let stats = sc.run()?;
            if let Some(path) = csv {
                stats.write_csv(BufWriter::new(File::create(path)?))?;
            }
            print_json(&json!({
                "rounds": stats.rounds,
                "seed": sc.seed,
                "wins": stats.wins,
                "skipped_rounds": stats.skipped_rounds,
                "longest_streak": stats.longest_streak(),
            }))?;
        }
        Command::Bench { spec, out, quick, parallel } => {
            let mut spec: BenchSpec = match spec {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).context("InvalidSpec: bench spec JSON")?,
                None if *quick => BenchSpec {
                    file_sizes: vec![0, bench::KIB, 100 * bench::KIB, bench::MIB],
                    block_counts: vec![10, 100],
                    user_counts: vec![10, 100],
                    repetitions: 3,
                    ..BenchSpec::default()
                },
                None => BenchSpec::default(),
            };
            if let Some(seed) = env_seed()? {
                spec.seed = seed;
            }
            if let Some(p) = parallel {
                spec.parallel_readers = *p;
            }
            let result = bench::run_all(&spec)?;
            bench::write_outputs(&result, out)?;
            let mut stdout = std::io::stdout().lock();
            for (mode, name, dim, value, holds) in result.verdicts() {
                writeln!(stdout, "{} {mode} {name} {dim}={value}", if holds { "PASS" } else { "FAIL" })?;
            }
            writeln!(stdout, "wrote {}", out.join("bench.csv").display())?;
        }
        Command::Calibrate { probes, write } => {
            let mut cfg = load_config(cli)?;
            let sys = System::open_with(&cli.data_dir, cfg.clone())?;
            let t = sys.calibrate(&collect_probes(probes)?)?;
            if *write {
                cfg.verify.theta = t.face.threshold.clamp(-1.0, 1.0);
                cfg.auth.tau = t.voice.threshold;
                cfg.save(&cli.data_dir.join(CONFIG_FILE))?;
            }
            print_json(&json!({ "theta": t.face, "tau": t.voice, "written": write }))?;
        }
        Command::ExportChain { out } => {
            let sys = open_system(cli)?;
            let chain = sys.vault().ledger().snapshot()?;
            match out {
                Some(p) => chain.export_jsonl(BufWriter::new(File::create(p)?))?,
                None => chain.export_jsonl(std::io::stdout().lock())?,
            }
            let store = sys.vault().store();
            let report = validate_chain_with(&chain, |d| store.get(&fbt_core::content_store::ContentId::from_digest(*d)).is_ok());
            eprintln!("{}", serde_json::to_string(&json!({ "height": chain.height(), "valid": report.is_valid(), "report": report }))?);
            if !report.is_valid() {
                eprintln!("ChainInvalid: {} transaction(s) flagged", report.failures.len());
                return Ok(1);
            }
        }
        Command::SynthCorpus { users, out, seed } => {
            let seed = env_seed()?.unwrap_or(*seed);
            let mut manifest = Vec::new();
            for (i, u) in corpus::generate(*users, seed).iter().enumerate() {
                let media = u.write_media(&out.join(format!("user{i}")))?;
                let user_id = derive_user_id(&u.name, &u.date_of_birth, &u.email, &u.phone_number);
                let probe_dir = out.join("probes").join(&user_id);
                std::fs::create_dir_all(&probe_dir)?;
                std::fs::copy(&media.registration_frame, probe_dir.join("frame0.pgm"))?;
                std::fs::write(probe_dir.join("probe.wav"), u.login_audio(100).to_wav_bytes())?;
                manifest.push(json!({
                    "user_id": user_id,
                    "name": u.name,
                    "dob": u.date_of_birth,
                    "email": u.email,
                    "phone": u.phone_number,
                    "audio": media.registration_audio,
                    "video": media.registration_video,
                    "frame": media.registration_frame,
                    "login_audio": media.login_audio,
                }));
            }
            let manifest = serde_json::Value::Array(manifest);
            std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
            print_json(&manifest)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e:#}");
            ExitCode::from(1)
        }
    }
}
