//! Simulated append-only chain: transactions keyed by hash, plus the
//! user-id → transaction-hash index.
//!
//! One transaction per block; `block_number` equals the chain height after
//! the append. Off-chain user records are anchored by `data_hash`.

mod chain;
mod live;
mod record;

pub use chain::{validate_chain, validate_chain_with, Chain, FailureKind, ValidationFailure, ValidationReport};
pub use live::{Ledger, ProbeCounts, CHAIN_LOG, USER_LOG};
pub use record::{compute_tx_hash, Address, TransactionRecord, TxHash, UserRecord, FIXED_ENCODING_LEN};

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("NotFound: no transaction {0}")]
    NotFound(TxHash),
    #[error("DuplicateTransaction: {0} is already stored")]
    DuplicateTransaction(TxHash),
    #[error("StaleParent: previous_hash {got} does not match tip {expected}")]
    StaleParent { expected: TxHash, got: TxHash },
    #[error("UnknownTransaction: cannot map a user to missing transaction {0}")]
    UnknownTransaction(TxHash),
    #[error("UnknownUser: no transaction mapped for user {0:?}")]
    UnknownUser(String),
    #[error("malformed ledger data: {0}")]
    Malformed(String),
    #[error("corrupt ledger: {0}")]
    Corrupt(String),
    #[error("ledger i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn append(ledger: &Ledger, nonce: u64) -> TxHash {
        let record = ledger.draft(Address::derive("m"), 1000 + nonce, [nonce as u8; 32], nonce, None);
        ledger.store_transaction(record).unwrap()
    }

    #[test]
    fn genesis_append_sets_height_one() {
        let ledger = Ledger::in_memory();
        let record = ledger.draft(Address::default(), 0, [0; 32], 0, None);
        assert_eq!(record.previous_hash, TxHash::GENESIS_PARENT);
        let h = ledger.store_transaction(record.clone()).unwrap();
        assert_eq!(ledger.height(), 1);
        assert_eq!(ledger.tip(), h);
        assert_eq!(ledger.get_transaction(&h).unwrap(), record);
    }

    #[test]
    fn stale_parent_and_duplicate() {
        let ledger = Ledger::in_memory();
        let first = ledger.draft(Address::default(), 0, [0; 32], 0, None);
        ledger.store_transaction(first.clone()).unwrap();
        // a different record that still points at genesis, no longer the tip
        let stale = TransactionRecord { nonce: 1, ..first.clone() };
        assert!(matches!(ledger.store_transaction(stale), Err(LedgerError::StaleParent { .. })));
        assert!(matches!(ledger.store_transaction(first), Err(LedgerError::DuplicateTransaction(_))));
        assert_eq!(ledger.height(), 1);
    }

    #[test]
    fn duplicate_hash_is_rejected() {
        let ledger = Ledger::in_memory();
        let h = append(&ledger, 1);
        let record = ledger.get_transaction(&h).unwrap();
        assert!(matches!(ledger.store_transaction(record), Err(LedgerError::DuplicateTransaction(_))));
    }

    #[test]
    fn unknown_lookups() {
        let ledger = Ledger::in_memory();
        assert!(matches!(ledger.get_transaction(&TxHash([1; 32])), Err(LedgerError::NotFound(_))));
        assert!(matches!(ledger.get_transaction_hash("nobody"), Err(LedgerError::UnknownUser(_))));
        assert!(matches!(
            ledger.map_user("u", TxHash([2; 32])),
            Err(LedgerError::UnknownTransaction(_))
        ));
    }

    #[test]
    fn remap_latest_wins() {
        let ledger = Ledger::in_memory();
        let h1 = append(&ledger, 1);
        let h2 = append(&ledger, 2);
        ledger.map_user("alice", h1).unwrap();
        assert_eq!(ledger.get_transaction_hash("alice").unwrap(), h1);
        ledger.map_user("alice", h2).unwrap();
        assert_eq!(ledger.get_transaction_hash("alice").unwrap(), h2);
    }

    #[test]
    fn empty_chain_validates() {
        assert!(validate_chain(&Chain::default()).is_valid());
    }

    #[test]
    fn persistent_ledger_replays() {
        let dir = tempfile::tempdir().unwrap();
        let (tip, h1) = {
            let ledger = Ledger::open(dir.path()).unwrap();
            let h1 = append(&ledger, 1);
            use sha2::Digest;
            let digest: [u8; 32] = sha2::Sha256::digest(b"payload").into();
            let rec = ledger.draft(Address::default(), 5, digest, 5, Some(b"payload".to_vec()));
            ledger.store_and_map(rec, "bob").unwrap();
            (ledger.tip(), h1)
        };
        let ledger = Ledger::open(dir.path()).unwrap();
        assert_eq!(ledger.height(), 2);
        assert_eq!(ledger.tip(), tip);
        assert_eq!(ledger.get_transaction_hash("bob").unwrap(), tip);
        assert_eq!(ledger.get_transaction(&tip).unwrap().payload.unwrap(), b"payload");
        assert_eq!(ledger.get_transaction(&h1).unwrap().nonce, 1);
        assert!(validate_chain(&ledger.snapshot().unwrap()).is_valid());
    }

    #[test]
    fn tampered_log_is_detected_on_open() {
        let dir = tempfile::tempdir().unwrap();
        {
            let ledger = Ledger::open(dir.path()).unwrap();
            append(&ledger, 1);
        }
        let path = dir.path().join(CHAIN_LOG);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"nonce\":1", "\"nonce\":2")).unwrap();
        assert!(matches!(Ledger::open(dir.path()), Err(LedgerError::Corrupt(_))));
    }
}
