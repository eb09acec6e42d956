// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::crypto::hex_bytes;
use crate::txflow::WriteEntry;

/// Position of the transaction that last wrote a key: (block height, index
/// within the block). Ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Version {
    pub height: u64,
    pub tx_index: u32,
}

impl Version {
    pub fn new(height: u64, tx_index: u32) -> Self {
        Version { height, tx_index }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    #[serde(with = "hex_bytes")]
    pub value: Vec<u8>,
    pub version: Version,
}

/// Current committed key-value view plus the full per-key write history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
    history: BTreeMap<String, Vec<VersionedValue>>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    pub fn version_of(&self, key: &str) -> Option<Version> {
        self.entries.get(key).map(|v| v.version)
    }

    pub fn history(&self, key: &str) -> &[VersionedValue] {
        self.history.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entries whose key starts with `prefix`, in key order.
    pub fn scan_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a VersionedValue)> + 'a {
        self.entries
            .range::<str, _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn apply_writes(&mut self, writes: &[WriteEntry], version: Version) {
        for w in writes {
            let vv = VersionedValue { value: w.value.clone(), version };
            self.history.entry(w.key.clone()).or_default().push(vv.clone());
            self.entries.insert(w.key.clone(), vv);
        }
    }

    /// Deterministic dump of current entries, used to compare states.
    pub fn canonical_dump(&self) -> Vec<u8> {
        crate::codec::canonical_bytes(&self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_order() {
        assert!(Version::new(1, 5) < Version::new(2, 0));
        assert!(Version::new(2, 0) < Version::new(2, 1));
        assert_eq!(Version::new(3, 3), Version::new(3, 3));
    }

    #[test]
    fn prefix_scan_respects_separator() {
        let mut s = WorldState::new();
        let w = |k: &str| WriteEntry { key: k.into(), value: b"x".to_vec() };
        s.apply_writes(&[w("ehr/idx/patient/P1/r1"), w("ehr/idx/patient/P10/r2")], Version::new(1, 0));
        let hits: Vec<_> = s.scan_prefix("ehr/idx/patient/P1/").map(|(k, _)| k).collect();
        assert_eq!(hits, vec!["ehr/idx/patient/P1/r1"]);
    }
}
