use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::chain::Chain;
use super::record::{compute_tx_hash, Address, TransactionRecord, TxHash, TxLine};
use super::LedgerError;

type Result<T> = std::result::Result<T, LedgerError>;

pub const CHAIN_LOG: &str = "chain.jsonl";
pub const USER_LOG: &str = "users.jsonl";

/// Lookup counters. Each public lookup performs exactly one index probe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProbeCounts {
    pub tx_lookups: u64,
    pub user_lookups: u64,
}

enum Slot {
    Inline(TransactionRecord),
    Logged { offset: u64, len: usize },
}

#[derive(Default)]
struct State {
    index: HashMap<TxHash, usize>,
    slots: Vec<Slot>,
    hashes: Vec<TxHash>,
    user_index: HashMap<String, TxHash>,
    onchain_bytes: u64,
    log_len: u64,
}

impl State {
    fn tip(&self) -> TxHash {
        self.hashes.last().copied().unwrap_or(TxHash::GENESIS_PARENT)
    }
}

struct LogFiles {
    chain_path: PathBuf,
    chain_append: Mutex<File>,
    users_append: Mutex<File>,
    reader: Mutex<File>,
}

#[derive(Serialize, Deserialize)]
struct UserLine {
    user_id: String,
    tx_hash: TxHash,
}

/// Append-only transaction store with the user-id index.
///
/// Appends are serialized through a writer lock; readers take a shared lock
/// and never observe a half-appended transaction. With [`Ledger::open`] every
/// transaction is also persisted to `chain.jsonl` and lookups read it back
/// from disk, like a node's block store.
pub struct Ledger {
    state: RwLock<State>,
    log: Option<LogFiles>,
    writer: Mutex<()>,
    tx_probes: AtomicU64,
    user_probes: AtomicU64,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("height", &self.height())
            .field("persistent", &self.log.is_some())
            .finish()
    }
}

impl Default for Ledger {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State::default()),
            log: None,
            writer: Mutex::new(()),
            tx_probes: AtomicU64::new(0),
            user_probes: AtomicU64::new(0),
        }
    }

    /// Opens or creates a persistent ledger in `dir`, replaying and
    /// re-verifying any existing log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let chain_path = dir.join(CHAIN_LOG);
        let users_path = dir.join(USER_LOG);
        let open_append = |p: &Path| OpenOptions::new().create(true).append(true).open(p);
        let chain_append = open_append(&chain_path)?;
        let users_append = open_append(&users_path)?;

        let mut state = State::default();
        let mut reader = BufReader::new(File::open(&chain_path)?);
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            let offset = state.log_len;
            state.log_len += n as u64;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TxLine = serde_json::from_str(line.trim_end())
                .map_err(|e| LedgerError::Corrupt(format!("chain log at byte {offset}: {e}")))?;
            let (hash, record) = parsed.into_record()?;
            if compute_tx_hash(&record) != hash || record.previous_hash != state.tip() {
                return Err(LedgerError::Corrupt(format!(
                    "chain log entry {} ({hash}) fails hash or link check",
                    state.hashes.len()
                )));
            }
            state.onchain_bytes += record.encoded_len() as u64;
            state.index.insert(hash, state.slots.len());
            state.slots.push(Slot::Logged { offset, len: n });
            state.hashes.push(hash);
        }

        for line in BufReader::new(File::open(&users_path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: UserLine = serde_json::from_str(&line)
                .map_err(|e| LedgerError::Corrupt(format!("user log: {e}")))?;
            if !state.index.contains_key(&entry.tx_hash) {
                return Err(LedgerError::Corrupt(format!(
                    "user {} mapped to unknown transaction {}",
                    entry.user_id, entry.tx_hash
                )));
            }
            state.user_index.insert(entry.user_id, entry.tx_hash);
        }

        Ok(Self {
            state: RwLock::new(state),
            log: Some(LogFiles {
                reader: Mutex::new(File::open(&chain_path)?),
                chain_path,
                chain_append: Mutex::new(chain_append),
                users_append: Mutex::new(users_append),
            }),
            writer: Mutex::new(()),
            tx_probes: AtomicU64::new(0),
            user_probes: AtomicU64::new(0),
        })
    }

    /// Rebuilds an in-memory ledger from a materialized chain, re-checking
    /// every hash and link.
    pub fn from_chain(chain: &Chain) -> Result<Self> {
        let ledger = Self::in_memory();
        for (hash, record) in &chain.entries {
            let stored = ledger.store_transaction(record.clone())?;
            if stored != *hash {
                return Err(LedgerError::Corrupt(format!(
                    "transaction keyed {hash} hashes to {stored}"
                )));
            }
        }
        for (user, hash) in &chain.user_index {
            ledger.map_user(user, *hash)?;
        }
        Ok(ledger)
    }

    pub fn is_persistent(&self) -> bool {
        self.log.is_some()
    }

    pub fn height(&self) -> u64 {
        self.read_state().hashes.len() as u64
    }

    pub fn tip(&self) -> TxHash {
        self.read_state().tip()
    }

    /// Sum of the canonical encoding sizes of every stored transaction.
    pub fn onchain_bytes(&self) -> u64 {
        self.read_state().onchain_bytes
    }

    pub fn user_count(&self) -> usize {
        self.read_state().user_index.len()
    }

    pub fn probe_counts(&self) -> ProbeCounts {
        ProbeCounts {
            tx_lookups: self.tx_probes.load(Ordering::Relaxed),
            user_lookups: self.user_probes.load(Ordering::Relaxed),
        }
    }

    pub fn reset_probes(&self) {
        self.tx_probes.store(0, Ordering::Relaxed);
        self.user_probes.store(0, Ordering::Relaxed);
    }

    /// Builds the next transaction on top of the current tip:
    /// `block_number = height + 1`, `previous_hash = tip`.
    pub fn draft(
        &self,
        sender_address: Address,
        timestamp: u64,
        data_hash: [u8; 32],
        nonce: u64,
        payload: Option<Vec<u8>>,
    ) -> TransactionRecord {
        let state = self.read_state();
        TransactionRecord {
            sender_address,
            timestamp,
            block_number: state.hashes.len() as u64 + 1,
            data_hash,
            nonce,
            previous_hash: state.tip(),
            payload,
        }
    }

    /// Appends `record`, which must extend the current tip.
    pub fn store_transaction(&self, record: TransactionRecord) -> Result<TxHash> {
        let _w = self.writer.lock().expect("ledger writer lock poisoned");
        self.store_locked(record, None)
    }

    /// Appends `record` and maps `user_id` to it as one step: either both
    /// land or neither does.
    pub fn store_and_map(&self, record: TransactionRecord, user_id: &str) -> Result<TxHash> {
        let _w = self.writer.lock().expect("ledger writer lock poisoned");
        self.store_locked(record, Some(user_id))
    }

    fn store_locked(&self, record: TransactionRecord, user_id: Option<&str>) -> Result<TxHash> {
        let hash = compute_tx_hash(&record);
        let (tip, log_len) = {
            let state = self.read_state();
            if state.index.contains_key(&hash) {
                return Err(LedgerError::DuplicateTransaction(hash));
            }
            (state.tip(), state.log_len)
        };
        if record.previous_hash != tip {
            return Err(LedgerError::StaleParent { expected: tip, got: record.previous_hash });
        }
        if let Some(user) = user_id {
            check_user_id(user)?;
        }

        let slot = match &self.log {
            None => Slot::Inline(record.clone()),
            Some(log) => {
                let mut line = serde_json::to_vec(&TxLine::from_record(&hash, &record))
                    .map_err(|e| LedgerError::Malformed(e.to_string()))?;
                line.push(b'\n');
                let mut chain_file = log.chain_append.lock().expect("chain log lock poisoned");
                chain_file.write_all(&line)?;
                chain_file.flush()?;
                if let Some(user) = user_id {
                    if let Err(e) = append_user_line(log, user, hash) {
                        // keep the two logs consistent
                        chain_file.set_len(log_len)?;
                        return Err(e);
                    }
                }
                Slot::Logged { offset: log_len, len: line.len() }
            }
        };

        let mut state = self.state.write().expect("ledger state poisoned");
        if let Slot::Logged { len, .. } = &slot {
            state.log_len += *len as u64;
        }
        state.onchain_bytes += record.encoded_len() as u64;
        let position = state.slots.len();
        state.index.insert(hash, position);
        state.slots.push(slot);
        state.hashes.push(hash);
        if let Some(user) = user_id {
            state.user_index.insert(user.to_string(), hash);
        }
        Ok(hash)
    }

    /// Single-probe lookup of a transaction by hash.
    pub fn get_transaction(&self, hash: &TxHash) -> Result<TransactionRecord> {
        self.tx_probes.fetch_add(1, Ordering::Relaxed);
        let state = self.read_state();
        let position = *state.index.get(hash).ok_or(LedgerError::NotFound(*hash))?;
        self.load_slot(&state.slots[position], hash)
    }

    fn load_slot(&self, slot: &Slot, expected: &TxHash) -> Result<TransactionRecord> {
        match slot {
            Slot::Inline(record) => Ok(record.clone()),
            Slot::Logged { offset, len } => {
                let log = self.log.as_ref().expect("logged slot without a log");
                let mut buf = vec![0u8; *len];
                {
                    let mut file = log.reader.lock().expect("chain log reader poisoned");
                    file.seek(SeekFrom::Start(*offset))?;
                    file.read_exact(&mut buf)?;
                }
                let parsed: TxLine = serde_json::from_slice(&buf).map_err(|e| {
                    LedgerError::Corrupt(format!("{}: {e}", log.chain_path.display()))
                })?;
                let (hash, record) = parsed.into_record()?;
                if hash != *expected || compute_tx_hash(&record) != *expected {
                    return Err(LedgerError::Corrupt(format!("stored transaction {expected} was altered")));
                }
                Ok(record)
            }
        }
    }

    /// Points `user_id` at an existing transaction; a later mapping wins.
    pub fn map_user(&self, user_id: &str, hash: TxHash) -> Result<()> {
        check_user_id(user_id)?;
        let _w = self.writer.lock().expect("ledger writer lock poisoned");
        if !self.read_state().index.contains_key(&hash) {
            return Err(LedgerError::UnknownTransaction(hash));
        }
        if let Some(log) = &self.log {
            append_user_line(log, user_id, hash)?;
        }
        self.state
            .write()
            .expect("ledger state poisoned")
            .user_index
            .insert(user_id.to_string(), hash);
        Ok(())
    }

    /// Single-probe lookup of the transaction mapped to `user_id`.
    pub fn get_transaction_hash(&self, user_id: &str) -> Result<TxHash> {
        self.user_probes.fetch_add(1, Ordering::Relaxed);
        self.read_state()
            .user_index
            .get(user_id)
            .copied()
            .ok_or_else(|| LedgerError::UnknownUser(user_id.to_string()))
    }

    /// Whether `user_id` is mapped. Does not count as a probe.
    pub fn has_user(&self, user_id: &str) -> bool {
        self.read_state().user_index.contains_key(user_id)
    }

    /// Copies out the whole chain in append order.
    pub fn snapshot(&self) -> Result<Chain> {
        let state = self.read_state();
        let mut entries = Vec::with_capacity(state.slots.len());
        for (slot, hash) in state.slots.iter().zip(&state.hashes) {
            entries.push((*hash, self.load_slot(slot, hash)?));
        }
        Ok(Chain {
            entries,
            user_index: state.user_index.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        })
    }

    fn read_state(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("ledger state poisoned")
    }
}

fn check_user_id(user_id: &str) -> Result<()> {
    if user_id.is_empty() {
        return Err(LedgerError::Malformed("user id must be non-empty".into()));
    }
    Ok(())
}

fn append_user_line(log: &LogFiles, user_id: &str, hash: TxHash) -> Result<()> {
    let mut line = serde_json::to_vec(&UserLine { user_id: user_id.to_string(), tx_hash: hash })
        .map_err(|e| LedgerError::Malformed(e.to_string()))?;
    line.push(b'\n');
    let mut file = log.users_append.lock().expect("user log lock poisoned");
    file.write_all(&line)?;
    file.flush()?;
    Ok(())
}
