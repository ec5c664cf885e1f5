use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the JSON rendering of `value`.
pub fn of_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    hex(&Sha256::digest(&bytes))
}

/// Hex SHA-256 over f64 slices, bit patterns included.
pub fn of_floats<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        for v in part {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Hex SHA-256 of raw bytes.
pub fn of_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// First 8 bytes of [`of_json`] as an integer.
pub fn short<T: Serialize + ?Sized>(value: &T) -> u64 {
    let bytes = serde_json::to_vec(value).expect("fingerprinted values serialize");
    let d = Sha256::digest(&bytes);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
