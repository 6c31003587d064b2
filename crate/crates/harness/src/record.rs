//! Run records and run directories.
//!
//! Each stage writes into `<out-dir>/<stage>/`:
//!
//! - `record.json`: the [`RunRecord`]. It holds no wall-clock data, so a
//!   rerun with the same spec and seeds reproduces it byte for byte.
//! - `timing.json`: wall-clock seconds per step.
//! - `spec.txt`: the resolved spec the stage ran with.
//! - stage-specific CSVs for plotting.
//! - `COMPLETE`: written last.
//!
//! A stage directory that already exists is never touched again.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use glean_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::metrics::{Aggregate, GoalDistribution, Metrics};
use crate::spec::ExperimentSpec;

pub const RECORD_FORMAT: &str = "glean-run-record";
pub const RECORD_VERSION: u32 = 1;
pub const COMPLETE_MARKER: &str = "COMPLETE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    /// PVRNN, FM or SI; absent for data-only groups.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_kind: Option<String>,
    pub items: Vec<Metrics>,
    pub aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub goal_distribution: Option<GoalDistribution>,
    /// Stage-specific summary values.
    #[serde(default)]
    pub scalars: BTreeMap<String, f64>,
}

impl Group {
    pub fn new(name: impl Into<String>, model_kind: Option<&str>, items: Vec<Metrics>) -> Self {
        Self {
            name: name.into(),
            model_kind: model_kind.map(str::to_string),
            aggregate: Aggregate::of(&items),
            items,
            goal_distribution: None,
            scalars: BTreeMap::new(),
        }
    }

    pub fn with_distribution(mut self, d: GoalDistribution) -> Self {
        self.goal_distribution = Some(d);
        self
    }

    pub fn scalar(mut self, key: &str, value: f64) -> Self {
        self.scalars.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub version: u32,
    pub stage: String,
    pub experiment: String,
    pub seeds: BTreeMap<String, u64>,
    pub spec: ExperimentSpec,
    pub groups: Vec<Group>,
}

impl RunRecord {
    pub fn new(stage: &str, spec: &ExperimentSpec, groups: Vec<Group>) -> Self {
        Self {
            format: RECORD_FORMAT.into(),
            version: RECORD_VERSION,
            stage: stage.into(),
            experiment: spec.name.clone(),
            seeds: spec.seeds(),
            spec: spec.clone(),
            groups,
        }
    }

    pub fn group(&self, name: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Recomputes every aggregate from its items and reports the first
    /// group whose stored aggregate differs.
    pub fn check_aggregates(&self) -> std::result::Result<(), String> {
        for g in &self.groups {
            if Aggregate::of(&g.items) != g.aggregate {
                return Err(format!("group `{}`: aggregate does not match its items", g.name));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(format!("serialising run record: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let r: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if r.format != RECORD_FORMAT || r.version != RECORD_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("unsupported record {} v{}", r.format, r.version),
            });
        }
        Ok(r)
    }
}

/// Wall-clock seconds per named step, kept apart from the record.
#[derive(Debug, Default)]
pub struct Timing {
    entries: Vec<(String, f64)>,
}

impl Timing {
    pub fn time<T>(&mut self, label: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.entries.push((label.into(), t0.elapsed().as_secs_f64()));
        out
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> = self.entries.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        serde_json::to_string_pretty(&map).unwrap_or_default()
    }
}

pub fn stage_dir(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(stage)
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(COMPLETE_MARKER).is_file()
}

/// An exclusively created stage directory.
#[derive(Debug)]
pub struct StageDir {
    path: PathBuf,
}

impl StageDir {
    /// Fails if the directory already exists, complete or not.
    pub fn create(out_dir: &Path, stage: &str) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        let path = stage_dir(out_dir, stage);
        match std::fs::create_dir(&path) {
            Ok(()) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let state = if is_complete(&path) { "completed" } else { "partial" };
                Err(Error::Config(format!(
                    "{} holds a {state} `{stage}` run; refusing to overwrite it",
                    path.display()
                )))
            }
            Err(e) => Err(Error::Io { path, source: e }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.file(name);
        std::fs::write(&p, contents).map_err(|e| Error::Io { path: p, source: e })
    }

    pub fn finish(self, record: &RunRecord, timing: &Timing) -> Result<PathBuf> {
        self.write("spec.txt", &record.spec.to_text())?;
        self.write("record.json", &record.to_json()?)?;
        self.write("timing.json", &timing.to_json())?;
        self.write(COMPLETE_MARKER, "")?;
        Ok(self.file("record.json"))
    }
}
