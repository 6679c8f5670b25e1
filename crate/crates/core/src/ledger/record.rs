use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::LedgerError;
use crate::content_store::ContentId;

/// Width of the fixed-size part of a transaction encoding:
/// sender (20) + timestamp (8) + block number (8) + data hash (32) + nonce (8)
/// + previous hash (32).
pub const FIXED_ENCODING_LEN: usize = 20 + 8 + 8 + 32 + 8 + 32;

/// 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Derives a stable address for a named miner or account.
    pub fn derive(label: &str) -> Self {
        let digest = Sha256::digest(label.as_bytes());
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Self(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

/// Transaction hash, the key of the transactions map.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TxHash(pub [u8; 32]);

impl TxHash {
    /// Parent of the first transaction.
    pub const GENESIS_PARENT: TxHash = TxHash([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxHash({})", self.to_hex())
    }
}

impl FromStr for TxHash {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed::<32>(s).map(TxHash)
    }
}

impl Serialize for TxHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TxHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn decode_fixed<const N: usize>(s: &str) -> Result<[u8; N], LedgerError> {
    let mut out = [0u8; N];
    if s.len() != 2 * N || s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(LedgerError::Malformed(format!("expected {} lowercase hex chars, got {s:?}", 2 * N)));
    }
    hex::decode_to_slice(s, &mut out).map_err(|e| LedgerError::Malformed(e.to_string()))?;
    Ok(out)
}

/// Registered user, stored off-chain and anchored by digest.
///
/// Serialized with a fixed field order; that JSON is the record's canonical
/// byte form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub name: String,
    pub date_of_birth: String,
    pub email: String,
    pub phone_number: String,
    pub audio_cid: ContentId,
    pub video_cid: ContentId,
}

impl UserRecord {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("UserRecord serialization is infallible")
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        serde_json::from_slice(bytes).map_err(|e| LedgerError::Malformed(e.to_string()))
    }
}

/// One on-chain transaction. `payload` is only set when the full user data
/// is embedded on-chain instead of being anchored by digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub sender_address: Address,
    pub timestamp: u64,
    pub block_number: u64,
    pub data_hash: [u8; 32],
    pub nonce: u64,
    pub previous_hash: TxHash,
    pub payload: Option<Vec<u8>>,
}

impl TransactionRecord {
    /// Canonical encoding: fixed field order, big-endian integers, and for
    /// embedded payloads a u64 length prefix followed by the bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let payload_len = self.payload.as_ref().map_or(0, |p| 8 + p.len());
        let mut out = Vec::with_capacity(FIXED_ENCODING_LEN + payload_len);
        out.extend_from_slice(&self.sender_address.0);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.block_number.to_be_bytes());
        out.extend_from_slice(&self.data_hash);
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&self.previous_hash.0);
        if let Some(payload) = &self.payload {
            out.extend_from_slice(&(payload.len() as u64).to_be_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_ENCODING_LEN + self.payload.as_ref().map_or(0, |p| 8 + p.len())
    }
}

/// Deterministic digest of the canonical encoding.
pub fn compute_tx_hash(record: &TransactionRecord) -> TxHash {
    let mut hasher = Sha256::new();
    hasher.update(record.sender_address.0);
    hasher.update(record.timestamp.to_be_bytes());
    hasher.update(record.block_number.to_be_bytes());
    hasher.update(record.data_hash);
    hasher.update(record.nonce.to_be_bytes());
    hasher.update(record.previous_hash.0);
    if let Some(payload) = &record.payload {
        hasher.update((payload.len() as u64).to_be_bytes());
        hasher.update(payload);
    }
    TxHash(hasher.finalize().into())
}

/// One line of the chain JSON-lines format, fields in canonical order.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct TxLine {
    pub hash: String,
    pub sender_address: String,
    pub timestamp: u64,
    pub block_number: u64,
    pub data_hash: String,
    pub nonce: u64,
    pub previous_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl TxLine {
    pub fn from_record(hash: &TxHash, r: &TransactionRecord) -> Self {
        Self {
            hash: hash.to_hex(),
            sender_address: r.sender_address.to_hex(),
            timestamp: r.timestamp,
            block_number: r.block_number,
            data_hash: hex::encode(r.data_hash),
            nonce: r.nonce,
            previous_hash: r.previous_hash.to_hex(),
            payload: r.payload.as_ref().map(hex::encode),
        }
    }

    pub fn into_record(self) -> Result<(TxHash, TransactionRecord), LedgerError> {
        let payload = match self.payload {
            Some(p) => Some(hex::decode(&p).map_err(|e| LedgerError::Malformed(e.to_string()))?),
            None => None,
        };
        let record = TransactionRecord {
            sender_address: Address(decode_fixed::<20>(&self.sender_address)?),
            timestamp: self.timestamp,
            block_number: self.block_number,
            data_hash: decode_fixed::<32>(&self.data_hash)?,
            nonce: self.nonce,
            previous_hash: self.previous_hash.parse()?,
            payload,
        };
        Ok((self.hash.parse()?, record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TransactionRecord {
        TransactionRecord {
            sender_address: Address::derive("miner-0"),
            timestamp: 1_700_000_000,
            block_number: 1,
            data_hash: [9; 32],
            nonce: 42,
            previous_hash: TxHash::GENESIS_PARENT,
            payload: None,
        }
    }

    #[test]
    fn fixed_encoding_is_108_bytes() {
        assert_eq!(FIXED_ENCODING_LEN, 108);
        assert_eq!(sample().canonical_bytes().len(), 108);
        let mut with_payload = sample();
        with_payload.payload = Some(vec![1, 2, 3]);
        assert_eq!(with_payload.canonical_bytes().len(), 108 + 8 + 3);
        assert_eq!(with_payload.encoded_len(), 119);
    }

    #[test]
    fn hash_is_digest_of_encoding() {
        let r = sample();
        let direct: [u8; 32] = Sha256::digest(r.canonical_bytes()).into();
        assert_eq!(compute_tx_hash(&r).0, direct);
        assert_eq!(compute_tx_hash(&r), compute_tx_hash(&r.clone()));
    }

    #[test]
    fn nonce_changes_hash() {
        let a = sample();
        let mut b = sample();
        b.nonce += 1;
        assert_ne!(compute_tx_hash(&a), compute_tx_hash(&b));
    }

    #[test]
    fn empty_payload_differs_from_none() {
        let a = sample();
        let mut b = sample();
        b.payload = Some(Vec::new());
        assert_ne!(compute_tx_hash(&a), compute_tx_hash(&b));
    }

    #[test]
    fn big_endian_layout() {
        let bytes = sample().canonical_bytes();
        assert_eq!(&bytes[20..28], &1_700_000_000u64.to_be_bytes());
        assert_eq!(&bytes[28..36], &1u64.to_be_bytes());
        assert_eq!(&bytes[68..76], &42u64.to_be_bytes());
    }

    #[test]
    fn line_round_trip() {
        let mut r = sample();
        r.payload = Some(b"abc".to_vec());
        let h = compute_tx_hash(&r);
        let line = serde_json::to_string(&TxLine::from_record(&h, &r)).unwrap();
        let (h2, r2) = serde_json::from_str::<TxLine>(&line).unwrap().into_record().unwrap();
        assert_eq!((h, r), (h2, r2));
    }
}
