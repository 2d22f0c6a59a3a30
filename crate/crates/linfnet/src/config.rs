//! Flat key=value configuration texts.
//!
//! Config files (and the ensemble manifest) are line-oriented: one
//! `key = value` pair per line, `#` starts a comment, blank lines are
//! ignored. Every key must be consumed by the reader; [`KvMap::finish`]
//! rejects leftovers so typos never pass silently.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A parsed key=value file with consume-tracking.
///
/// Readers `take` the keys they understand and call [`KvMap::finish`] at
/// the end; any key nobody claimed is reported as unknown.
#[derive(Debug, Clone)]
pub struct KvMap {
    map: BTreeMap<String, String>,
}

impl KvMap {
    /// Parses config text. Duplicate keys are rejected — the value that
    /// would win is otherwise invisible in a diff.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(cut) => &raw[..cut],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {:?}", idx + 1, line))
            })?;
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", idx + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", idx + 1)));
            }
        }
        Ok(KvMap { map })
    }

    /// An empty map, for building up overrides programmatically.
    pub fn empty() -> Self {
        KvMap { map: BTreeMap::new() }
    }

    /// Inserts or replaces a key (used by `--set key=value` overrides).
    pub fn set(&mut self, key: &str, value: &str) {
        self.map.insert(key.trim().to_string(), value.trim().to_string());
    }

    /// Removes and returns a key if present.
    pub fn take_opt(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    /// Removes and returns a required key.
    pub fn take(&mut self, key: &str) -> Result<String> {
        self.map.remove(key).ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }

    /// Required unsigned integer.
    pub fn take_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.take(key)?;
        v.parse().map_err(|_| Error::Config(format!("key {key:?}: bad integer {v:?}")))
    }

    /// Optional unsigned integer.
    pub fn take_usize_opt(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take_opt(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("key {key:?}: bad integer {v:?}"))),
        }
    }

    /// Required 64-bit seed value.
    pub fn take_u64(&mut self, key: &str) -> Result<u64> {
        let v = self.take(key)?;
        v.parse().map_err(|_| Error::Config(format!("key {key:?}: bad integer {v:?}")))
    }

    /// Required floating-point value.
    pub fn take_f64(&mut self, key: &str) -> Result<f64> {
        let v = self.take(key)?;
        v.parse().map_err(|_| Error::Config(format!("key {key:?}: bad number {v:?}")))
    }

    /// Optional floating-point value.
    pub fn take_f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take_opt(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("key {key:?}: bad number {v:?}"))),
        }
    }

    /// Required boolean, spelled `true` or `false`.
    pub fn take_bool(&mut self, key: &str) -> Result<bool> {
        match self.take(key)?.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(Error::Config(format!("key {key:?}: expected true or false, got {v:?}"))),
        }
    }

    /// Whether a key is still unconsumed.
    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    /// Remaining (unconsumed) keys in sorted order.
    pub fn remaining(&self) -> Vec<&str> {
        self.map.keys().map(String::as_str).collect()
    }

    /// Fails if any keys were never consumed.
    pub fn finish(self) -> Result<()> {
        if self.map.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.map.keys().cloned().collect();
            Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_spacing() {
        let text = "\n# a comment\n  epochs = 30  # trailing note\nlr=0.02\n\nname = run one\n";
        let mut kv = KvMap::parse(text).unwrap();
        assert_eq!(kv.take_usize("epochs").unwrap(), 30);
        assert_eq!(kv.take_f64("lr").unwrap(), 0.02);
        assert_eq!(kv.take("name").unwrap(), "run one");
        kv.finish().unwrap();
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = KvMap::parse("a=1\na=2\n").unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("duplicate") && msg.contains("a")),
            other => panic!("expected Config, got {other:?}"),
        }
    }

    #[test]
    fn line_without_equals_rejected() {
        let err = KvMap::parse("epochs 30\n").unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("line 1")),
            other => panic!("expected Config, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_reported_sorted() {
        let kv = KvMap::parse("zeta=1\nalpha=2\n").unwrap();
        let err = kv.finish().unwrap_err();
        match err {
            Error::Config(msg) => assert_eq!(msg, "unknown keys: alpha, zeta"),
            other => panic!("expected Config, got {other:?}"),
        }
    }

    #[test]
    fn typed_getters_name_the_key() {
        let mut kv = KvMap::parse("epochs=ten\n").unwrap();
        let err = kv.take_usize("epochs").unwrap_err();
        assert!(err.to_string().contains("epochs"));

        let mut kv = KvMap::parse("ema=yes\n").unwrap();
        let err = kv.take_bool("ema").unwrap_err();
        assert!(err.to_string().contains("ema"));

        let mut kv = KvMap::parse("lr=fast\n").unwrap();
        let err = kv.take_f64("lr").unwrap_err();
        assert!(err.to_string().contains("lr"));
    }

    #[test]
    fn set_overrides_and_inserts() {
        let mut kv = KvMap::parse("epochs=30\n").unwrap();
        kv.set("epochs", "7");
        kv.set("seed", "42");
        assert_eq!(kv.take_usize("epochs").unwrap(), 7);
        assert_eq!(kv.take_u64("seed").unwrap(), 42);
        kv.finish().unwrap();
    }

    #[test]
    fn optional_getters() {
        let mut kv = KvMap::parse("tau=0.99\n").unwrap();
        assert_eq!(kv.take_f64_opt("tau").unwrap(), Some(0.99));
        assert_eq!(kv.take_f64_opt("tau").unwrap(), None);
        assert_eq!(kv.take_usize_opt("absent").unwrap(), None);
        assert!(kv.take_opt("absent").is_none());
    }

    #[test]
    fn missing_required_key() {
        let mut kv = KvMap::empty();
        let err = kv.take("model").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("model")));
    }
}
