use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

/// Files written by the current command. Dropped without `commit` (any
/// error path), it deletes them again so no partial output survives.
#[derive(Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    /// Records `path` before `write` runs so a half-written file is also
    /// cleaned up.
    pub fn create<T>(&mut self, path: &Path, write: impl FnOnce(&Path) -> atp_core::Result<T>) -> Result<T> {
        self.written.push(path.to_path_buf());
        write(path).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn json(&mut self, path: &Path, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.written.push(path.to_path_buf());
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            if p.exists() {
                log::warn!("removing partial output {}", p.display());
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// `{tool_version, seed, config_echo}` followed by the fields of `body`.
pub fn envelope(seed: u64, config_echo: BTreeMap<String, String>, body: impl Serialize) -> Result<Value> {
    let mut out = Map::new();
    out.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    out.insert("seed".into(), seed.into());
    out.insert("config_echo".into(), serde_json::to_value(config_echo)?);
    match serde_json::to_value(body)? {
        Value::Object(fields) => {
            for (k, v) in fields {
                out.entry(k).or_insert(v);
            }
        }
        other => {
            out.insert("result".into(), other);
        }
    }
    Ok(Value::Object(out))
}

/// Drops wall-clock fields so reports of identical runs compare equal.
pub fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("seconds");
            m.remove("train_seconds");
            m.values_mut().for_each(strip_timings);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// `model.atpm` -> `model.report.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_starts_with_the_header() {
        let v = envelope(7, BTreeMap::new(), serde_json::json!({"seed": 7, "auc": 0.5})).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["auc"], 0.5);
        assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["tool_version", "seed", "config_echo", "auc"]);
    }

    #[test]
    fn timings_are_stripped_recursively() {
        let mut v = serde_json::json!({"stages": [{"stage": "a", "seconds": 1.0}], "results": [{"train_seconds": 2.0, "auc": 1}]});
        strip_timings(&mut v);
        assert_eq!(v, serde_json::json!({"stages": [{"stage": "a"}], "results": [{"auc": 1}]}));
    }

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        {
            let mut o = Outputs::default();
            o.json(&p, &Value::Null).unwrap();
        }
        assert!(!p.exists());
        let mut o = Outputs::default();
        o.json(&p, &Value::Null).unwrap();
        o.commit();
        assert!(p.exists());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/model.atpm"), "report.json"), Path::new("out/model.report.json"));
    }
}
