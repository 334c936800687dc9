use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{Map, Value};

use crate::config::Params;

pub const OUT_ENV: &str = "BOWSLAB_OUT";
const DEFAULT_ROOT: &str = "runs";

/// One run's output directory and its accumulated metrics.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    params: Params,
    metrics: Map<String, Value>,
}

impl Run {
    /// Creates `<root>/<command>-<timestamp>-seed<seed>` (with a numeric
    /// suffix if that already exists) and writes the config echo into it.
    pub fn create(root: Option<&Path>, command: &str, header: &str, params: Params, seed: u64) -> anyhow::Result<Run> {
        let root = match root {
            Some(r) => r.to_path_buf(),
            None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT)),
        };
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let base = format!("{command}-{stamp}-seed{seed}");
        let mut dir = root.join(&base);
        let mut n = 2;
        while dir.exists() {
            dir = root.join(format!("{base}-{n}"));
            n += 1;
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("config.txt"), format!("# {header}\n{}", params.echo()))?;
        Ok(Run { dir, command: command.to_string(), params, metrics: Map::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    /// Non-finite and undefined values are recorded as `null`.
    pub fn metric_f64(&mut self, key: &str, value: Option<f64>) {
        let v = value.and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number);
        self.metrics.insert(key.to_string(), v);
    }

    /// Removes the directory of a run that failed before producing metrics.
    pub fn abandon(self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }

    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let mut doc = Map::new();
        doc.insert("command".into(), self.command.into());
        doc.insert("config".into(), Value::Object(self.params.map().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()));
        doc.insert("metrics".into(), Value::Object(self.metrics));
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        std::fs::write(self.dir.join("metrics.json"), text)?;
        println!("{}", self.dir.display());
        Ok(self.dir)
    }
}
