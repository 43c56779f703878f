//! Content fingerprints: hex SHA-256 over canonical JSON.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn of_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fingerprint of a value's compact JSON serialization. Struct field order and
/// `BTreeMap` key order make the serialization canonical.
pub fn of_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes to JSON");
    of_bytes(&bytes)
}
