use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::record::{compute_tx_hash, TransactionRecord, TxHash, TxLine};
use super::LedgerError;

/// Materialized chain: every transaction in append order plus the user
/// index. Pure data, used for validation and export/import.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chain {
    pub entries: Vec<(TxHash, TransactionRecord)>,
    pub user_index: BTreeMap<String, TxHash>,
}

impl Chain {
    pub fn height(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn tip(&self) -> TxHash {
        self.entries.last().map_or(TxHash::GENESIS_PARENT, |(h, _)| *h)
    }

    /// Writes one JSON object per transaction, fields in canonical order.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> Result<(), LedgerError> {
        for (hash, record) in &self.entries {
            serde_json::to_writer(&mut out, &TxLine::from_record(hash, record))
                .map_err(|e| LedgerError::Malformed(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a JSON-lines export. Hashes are taken as written, not
    /// recomputed, so a tampered file can still be inspected with
    /// [`validate_chain`].
    pub fn import_jsonl<R: BufRead>(input: R) -> Result<Self, LedgerError> {
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TxLine = serde_json::from_str(&line)
                .map_err(|e| LedgerError::Malformed(format!("line {}: {e}", lineno + 1)))?;
            entries.push(parsed.into_record()?);
        }
        Ok(Self { entries, user_index: BTreeMap::new() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    /// The stored key is not the hash of the stored record.
    HashMismatch,
    /// `previous_hash` does not point at the preceding transaction.
    BrokenLink,
    /// `block_number` is not the 1-based position in the chain.
    BlockNumberMismatch,
    /// Embedded payload or linked off-chain data does not match `data_hash`.
    DataHashMismatch,
    /// An earlier transaction failed, so this one is untrusted.
    DescendsFromInvalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationFailure {
    pub index: usize,
    pub hash: TxHash,
    pub kinds: Vec<FailureKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
    /// User ids whose mapped hash is not a transaction of the chain.
    pub dangling_users: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty() && self.dangling_users.is_empty()
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        self.failures.iter().map(|f| f.index).collect()
    }
}

/// Checks hash keys, parent links, block numbers and embedded payload
/// digests. Once a transaction fails, every later one is flagged too.
pub fn validate_chain(chain: &Chain) -> ValidationReport {
    validate_chain_with(chain, |_| true)
}

/// Like [`validate_chain`], additionally asking `off_chain_ok` whether the
/// off-chain data anchored by a payload-less transaction is present and
/// matches its `data_hash`.
pub fn validate_chain_with<F>(chain: &Chain, mut off_chain_ok: F) -> ValidationReport
where
    F: FnMut(&[u8; 32]) -> bool,
{
    let mut report = ValidationReport::default();
    let mut tainted = false;
    let mut expected_parent = TxHash::GENESIS_PARENT;
    for (index, (hash, record)) in chain.entries.iter().enumerate() {
        let mut kinds = Vec::new();
        if compute_tx_hash(record) != *hash {
            kinds.push(FailureKind::HashMismatch);
        }
        if record.previous_hash != expected_parent {
            kinds.push(FailureKind::BrokenLink);
        }
        if record.block_number != index as u64 + 1 {
            kinds.push(FailureKind::BlockNumberMismatch);
        }
        let data_ok = match &record.payload {
            Some(payload) => <[u8; 32]>::from(Sha256::digest(payload)) == record.data_hash,
            None => off_chain_ok(&record.data_hash),
        };
        if !data_ok {
            kinds.push(FailureKind::DataHashMismatch);
        }
        if kinds.is_empty() && tainted {
            kinds.push(FailureKind::DescendsFromInvalid);
        }
        if !kinds.is_empty() {
            tainted = true;
            report.failures.push(ValidationFailure { index, hash: *hash, kinds });
        }
        expected_parent = *hash;
    }
    let known: HashSet<&TxHash> = chain.entries.iter().map(|(h, _)| h).collect();
    report.dangling_users = chain
        .user_index
        .iter()
        .filter(|(_, h)| !known.contains(h))
        .map(|(u, _)| u.clone())
        .collect();
    report
}
