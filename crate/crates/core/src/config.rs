//! The single configuration file shared by every subcommand, plus dotted-key
//! overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::eoh::{SearchConfig, Target};
use crate::error::{Error, Result};
use crate::eval::ExecutorConfig;
use crate::llm::LlmConfig;
use crate::miner::{FilterRules, PerfDirection};
use crate::orchestrator::RunConfig;
use crate::pool::PoolBuildConfig;
use crate::util;

/// Input and output locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Files {
    /// Exported commit log.
    pub log: PathBuf,
    /// Library performance snapshots (CSV).
    pub ppes: PathBuf,
    /// Processed-commit store.
    pub commits: PathBuf,
    pub pool: PathBuf,
    /// Corpus manifest.
    pub corpus: PathBuf,
    /// Saved retrieval index; searches skip documents when unset.
    pub index: Option<PathBuf>,
    /// Task files, or directories of them.
    pub tasks: Vec<PathBuf>,
    /// Kernel source for `evaluate`.
    pub kernel: Option<PathBuf>,
    pub run_dir: PathBuf,
    /// Run directories for `report`.
    pub runs: Vec<PathBuf>,
    pub report_dir: PathBuf,
}

impl Default for Files {
    fn default() -> Self {
        Files {
            log: "commits.log".into(),
            ppes: "ppe.csv".into(),
            commits: "commits.json".into(),
            pool: "pool.json".into(),
            corpus: "corpus.json".into(),
            index: None,
            tasks: Vec::new(),
            kernel: None,
            run_dir: "runs/latest".into(),
            runs: Vec::new(),
            report_dir: "report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineConfig {
    pub direction: PerfDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Characters per chunk.
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            chunk_size: 1500,
            overlap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed for pool building and runs.
    pub seed: u64,
    pub files: Files,
    pub llm: LlmConfig,
    pub executor: ExecutorConfig,
    pub rules: FilterRules,
    pub mine: MineConfig,
    pub pool: PoolBuildConfig,
    pub corpus: CorpusConfig,
    pub run: RunConfig,
    pub search: SearchConfig,
    pub target: Target,
}

/// Parses an override value as a TOML value, falling back to a plain string.
fn override_value(raw: &str) -> Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    match toml::from_str::<Probe>(&format!("v = {raw}")) {
        Ok(p) => serde_json::to_value(p.v).unwrap_or_else(|_| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` to a JSON tree, creating intermediate tables.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}` descends into a non-table")))?;
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    let map = node
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("override key `{key}` descends into a non-table")))?;
    map.insert(parts[parts.len() - 1].to_string(), override_value(raw));
    Ok(())
}

impl Config {
    /// Reads `path` (TOML or JSON by extension; defaults when `None`) and
    /// applies overrides. Unknown keys anywhere are rejected.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Config(format!("config file {} does not exist", p.display())));
                }
                util::read_structured(p)?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let mut config: Config = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        config.pool.seed = config.seed;
        config.run.seed = config.seed;
        Ok(config)
    }

    /// The effective configuration, as written next to outputs.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn write_echo(&self, path: &Path) -> Result<()> {
        util::write_json(path, &self.echo())
    }

    /// Task files named directly plus `*.toml` / `*.json` inside named
    /// directories, in path order per entry.
    pub fn task_files(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for p in &self.files.tasks {
            if p.is_dir() {
                let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                    .map_err(|e| Error::io(p, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.extension().is_some_and(|x| x == "toml" || x == "json"))
                    .collect();
                found.sort();
                out.extend(found);
            } else {
                out.push(p.clone());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = Config::load(None, &[]).unwrap();
        assert_eq!((c.run.searches, c.run.top_k, c.run.iterations), (3, 3, 5));
        assert_eq!((c.search.population_size, c.search.generations), (5, 5));
    }

    #[test]
    fn overrides_are_typed() {
        let c = Config::load(
            None,
            &[
                "seed=7".into(),
                "executor.kind=mock".into(),
                "rules.use_llm_classifier=false".into(),
                "run.alpha=0.5".into(),
                "files.tasks=[\"a.toml\", \"b.toml\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.run.alpha, 0.5);
        assert_eq!(c.files.tasks.len(), 2);
        assert_eq!(c.echo()["rules"]["use_llm_classifier"], Value::Bool(false));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::load(None, &["run.bogus=1".into()]), Err(Error::Config(_))));
        assert!(matches!(Config::load(None, &["nosuch=1".into()]), Err(Error::Config(_))));
        assert!(Config::load(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        let j = dir.path().join("c.json");
        std::fs::write(&t, "seed = 3\n[run]\niterations = 2\n[executor]\nkind = \"mock\"\n").unwrap();
        std::fs::write(&j, r#"{"seed": 3, "run": {"iterations": 2}, "executor": {"kind": "mock"}}"#).unwrap();
        assert_eq!(Config::load(Some(&t), &[]).unwrap(), Config::load(Some(&j), &[]).unwrap());
    }

    #[test]
    fn echo_round_trips() {
        let c = Config::load(None, &["seed=9".into()]).unwrap();
        let back: Config = serde_json::from_value(c.echo()).unwrap();
        assert_eq!(back.files, c.files);
        assert_eq!(back.seed, 9);
    }
}
