use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::system::{FaultPoint, PersonalInfo};
use super::{StorageMode, WorkflowError};
use crate::content_store::{ContentId, ContentStore, EncryptionKey};
use crate::ledger::{validate_chain_with, Address, Ledger, TransactionRecord, TxHash, UserRecord, ValidationReport};

/// Content store plus ledger, writing user records in one storage mode.
///
/// In [`StorageMode::CidAnchor`] the transaction's `data_hash` is the digest
/// of the stored user-record blob, so it doubles as the blob's address.
#[derive(Debug)]
pub struct Vault {
    store: ContentStore,
    ledger: Ledger,
    mode: StorageMode,
    key: Option<EncryptionKey>,
}

/// Writes made for one registration before the ledger commit.
#[derive(Debug, Clone)]
pub struct Staged {
    pub record: UserRecord,
    pub data_hash: [u8; 32],
    pub payload: Option<Vec<u8>>,
    /// Objects this registration added to the store.
    written: Vec<ContentId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub tx_hash: TxHash,
    pub transaction: TransactionRecord,
    pub record: UserRecord,
    pub audio: Vec<u8>,
    pub video: Vec<u8>,
}

/// Lookups spent on one retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RetrievalCost {
    pub user_lookups: u64,
    pub tx_lookups: u64,
    pub store_gets: u64,
}

/// On-chain payload: three u64 big-endian length-prefixed sections holding
/// the user record JSON, the audio and the video.
pub fn encode_payload(record: &[u8], audio: &[u8], video: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + record.len() + audio.len() + video.len());
    for part in [record, audio, video] {
        out.extend_from_slice(&(part.len() as u64).to_be_bytes());
        out.extend_from_slice(part);
    }
    out
}

pub fn decode_payload(mut bytes: &[u8]) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), WorkflowError> {
    let mut parts = Vec::with_capacity(3);
    for _ in 0..3 {
        if bytes.len() < 8 {
            return Err(WorkflowError::Corrupt("truncated payload".into()));
        }
        let len = u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        bytes = &bytes[8..];
        if bytes.len() < len {
            return Err(WorkflowError::Corrupt("truncated payload section".into()));
        }
        parts.push(bytes[..len].to_vec());
        bytes = &bytes[len..];
    }
    if !bytes.is_empty() {
        return Err(WorkflowError::Corrupt("trailing payload bytes".into()));
    }
    let video = parts.pop().expect("three parts");
    let audio = parts.pop().expect("three parts");
    let record = parts.pop().expect("three parts");
    Ok((record, audio, video))
}

impl Vault {
    /// Opens `<root>/store` and `<root>/ledger`.
    pub fn open(root: &Path, mode: StorageMode, key: Option<EncryptionKey>) -> Result<Self, WorkflowError> {
        Ok(Self::from_parts(ContentStore::open(root.join("store"))?, Ledger::open(root.join("ledger"))?, mode, key))
    }

    pub fn from_parts(store: ContentStore, ledger: Ledger, mode: StorageMode, key: Option<EncryptionKey>) -> Self {
        Self { store, ledger, mode, key }
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn mode(&self) -> StorageMode {
        self.mode
    }

    pub fn encrypted(&self) -> bool {
        self.key.is_some()
    }

    fn put(&self, bytes: &[u8]) -> Result<(ContentId, bool), WorkflowError> {
        Ok(match &self.key {
            Some(key) => self.store.put_encrypted_tracked(bytes, key)?,
            None => self.store.put_tracked(bytes)?,
        })
    }

    fn get(&self, id: &ContentId) -> Result<Vec<u8>, WorkflowError> {
        Ok(match &self.key {
            Some(key) => self.store.get_decrypted(id, key)?,
            None => self.store.get(id)?,
        })
    }

    /// Writes media and the user record off-chain (anchor mode) or builds the
    /// embedded payload. `hook` runs after each write; an error from it, or
    /// from any write, discards everything staged so far.
    pub fn stage(
        &self,
        user_id: &str,
        info: &PersonalInfo,
        audio: &[u8],
        video: &[u8],
        hook: &mut dyn FnMut(FaultPoint) -> Result<(), WorkflowError>,
    ) -> Result<Staged, WorkflowError> {
        let mut staged = Staged {
            record: UserRecord {
                user_id: user_id.to_string(),
                name: info.name.clone(),
                date_of_birth: info.date_of_birth.clone(),
                email: info.email.clone(),
                phone_number: info.phone_number.clone(),
                audio_cid: ContentId::compute(audio),
                video_cid: ContentId::compute(video),
            },
            data_hash: [0; 32],
            payload: None,
            written: Vec::new(),
        };
        let result = self.stage_into(&mut staged, audio, video, hook);
        match result {
            Ok(()) => Ok(staged),
            Err(e) => {
                self.rollback(&staged)?;
                Err(e)
            }
        }
    }

    fn stage_into(
        &self,
        staged: &mut Staged,
        audio: &[u8],
        video: &[u8],
        hook: &mut dyn FnMut(FaultPoint) -> Result<(), WorkflowError>,
    ) -> Result<(), WorkflowError> {
        match self.mode {
            StorageMode::OnchainPayload => {
                // nothing is written off-chain; the hooks still mark the same steps
                hook(FaultPoint::AudioStored)?;
                hook(FaultPoint::VideoStored)?;
                let payload = encode_payload(&staged.record.canonical_bytes(), audio, video);
                staged.data_hash = Sha256::digest(&payload).into();
                staged.payload = Some(payload);
                hook(FaultPoint::RecordStored)?;
            }
            StorageMode::CidAnchor => {
                let track = |staged: &mut Staged, (id, new): (ContentId, bool)| {
                    if new {
                        staged.written.push(id);
                    }
                    id
                };
                staged.record.audio_cid = track(staged, self.put(audio)?);
                hook(FaultPoint::AudioStored)?;
                staged.record.video_cid = track(staged, self.put(video)?);
                hook(FaultPoint::VideoStored)?;
                let record_id = track(staged, self.put(&staged.record.canonical_bytes())?);
                staged.data_hash = *record_id.digest();
                hook(FaultPoint::RecordStored)?;
            }
        }
        Ok(())
    }

    /// Removes the objects a staged registration added.
    pub fn rollback(&self, staged: &Staged) -> Result<(), WorkflowError> {
        for id in &staged.written {
            self.store.discard(id)?;
        }
        Ok(())
    }

    /// Appends the transaction and maps the user in one ledger step.
    pub fn commit(&self, staged: &Staged, sender: Address, timestamp: u64, nonce: u64) -> Result<TxHash, WorkflowError> {
        let tx = self.ledger.draft(sender, timestamp, staged.data_hash, nonce, staged.payload.clone());
        Ok(self.ledger.store_and_map(tx, &staged.record.user_id)?)
    }

    /// User index → transaction → user record → media.
    pub fn retrieve(&self, user_id: &str) -> Result<Retrieved, WorkflowError> {
        let tx_hash = self.ledger.get_transaction_hash(user_id)?;
        let transaction = self.ledger.get_transaction(&tx_hash)?;
        let (record, audio, video) = match &transaction.payload {
            Some(payload) => {
                let (record, audio, video) = decode_payload(payload)?;
                (parse_record(&record)?, audio, video)
            }
            None => {
                let record = parse_record(&self.get(&ContentId::from_digest(transaction.data_hash))?)?;
                let audio = self.get(&record.audio_cid)?;
                let video = self.get(&record.video_cid)?;
                (record, audio, video)
            }
        };
        if record.user_id != user_id {
            return Err(WorkflowError::Corrupt(format!(
                "transaction {tx_hash} holds the record of {}, not {user_id}",
                record.user_id
            )));
        }
        Ok(Retrieved { tx_hash, transaction, record, audio, video })
    }

    /// Full chain validation, checking that every anchored record is
    /// present in the store and matches its digest.
    pub fn validate(&self) -> Result<ValidationReport, WorkflowError> {
        let chain = self.ledger.snapshot()?;
        Ok(validate_chain_with(&chain, |digest| self.store.get(&ContentId::from_digest(*digest)).is_ok()))
    }

    fn counters(&self) -> RetrievalCost {
        let p = self.ledger.probe_counts();
        RetrievalCost { user_lookups: p.user_lookups, tx_lookups: p.tx_lookups, store_gets: self.store.get_count() }
    }

    /// [`Vault::retrieve`] plus the lookups it spent.
    pub fn retrieve_counted(&self, user_id: &str) -> Result<(Retrieved, RetrievalCost), WorkflowError> {
        let before = self.counters();
        let r = self.retrieve(user_id)?;
        let after = self.counters();
        Ok((
            r,
            RetrievalCost {
                user_lookups: after.user_lookups - before.user_lookups,
                tx_lookups: after.tx_lookups - before.tx_lookups,
                store_gets: after.store_gets - before.store_gets,
            },
        ))
    }
}

fn parse_record(bytes: &[u8]) -> Result<UserRecord, WorkflowError> {
    UserRecord::from_canonical_bytes(bytes).map_err(|e| WorkflowError::Corrupt(format!("user record: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> PersonalInfo {
        PersonalInfo {
            name: "A".into(),
            date_of_birth: "2000-01-01".into(),
            email: "a@x".into(),
            phone_number: "1".into(),
        }
    }

    fn no_faults(_: FaultPoint) -> Result<(), WorkflowError> {
        Ok(())
    }

    #[test]
    fn payload_round_trip() {
        let p = encode_payload(b"rec", b"", b"video");
        assert_eq!(decode_payload(&p).unwrap(), (b"rec".to_vec(), vec![], b"video".to_vec()));
        assert!(decode_payload(&p[..p.len() - 1]).is_err());
    }

    #[test]
    fn both_modes_round_trip() {
        for mode in [StorageMode::CidAnchor, StorageMode::OnchainPayload] {
            for key in [None, Some(EncryptionKey::new([7; 32]))] {
                let dir = tempfile::tempdir().unwrap();
                let vault = Vault::open(dir.path(), mode, key).unwrap();
                let staged = vault.stage("u-1", &info(), b"audio", b"video", &mut no_faults).unwrap();
                let hash = vault.commit(&staged, Address::derive("m"), 1, 0).unwrap();
                let (r, cost) = vault.retrieve_counted("u-1").unwrap();
                assert_eq!(r.tx_hash, hash);
                assert_eq!((r.audio.as_slice(), r.video.as_slice()), (&b"audio"[..], &b"video"[..]));
                let gets = if mode == StorageMode::CidAnchor { 3 } else { 0 };
                assert_eq!(cost, RetrievalCost { user_lookups: 1, tx_lookups: 1, store_gets: gets });
                assert!(vault.validate().unwrap().is_valid());
            }
        }
    }

    #[test]
    fn failed_stage_leaves_store_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let vault = Vault::open(dir.path(), StorageMode::CidAnchor, None).unwrap();
        let mut fail = |p: FaultPoint| if p == FaultPoint::RecordStored { Err(WorkflowError::InjectedFault(p)) } else { Ok(()) };
        assert!(vault.stage("u-1", &info(), b"a", b"v", &mut fail).is_err());
        assert!(vault.store().is_empty());
    }
}
