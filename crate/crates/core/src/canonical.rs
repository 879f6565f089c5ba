//! Canonical JSON: object keys sorted, no insignificant whitespace.
//!
//! Every output surface (library, CLI, HTTP) goes through here so that the
//! same input yields byte-identical JSON.

use serde::Serialize;

/// Serialize `value` as canonical JSON.
///
/// Round-tripping through `serde_json::Value` sorts object keys, since the
/// crate is built without `preserve_order`.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let tree = serde_json::to_value(value)?;
    serde_json::to_string(&tree)
}

/// Indented form for `--pretty`; keys are still sorted.
pub fn to_pretty_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let tree = serde_json::to_value(value)?;
    serde_json::to_string_pretty(&tree)
}
