//! Canonical JSON: object keys sorted, two-space indentation, shortest
//! round-trip float formatting, trailing newline. Every persisted artifact
//! and every API response goes through here so byte comparisons are
//! meaningful.

use serde::Serialize;

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    // `Value` objects are `BTreeMap`s, which sorts keys.
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    to_vec(value).map(|v| String::from_utf8(v).expect("serde_json emits UTF-8"))
}
