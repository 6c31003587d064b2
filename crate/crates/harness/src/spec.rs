//! Experiment specification files.
//!
//! A spec is a flat `key = value` document with `[section]` headers. Every
//! section except `[experiment]` is optional and falls back to the bundled
//! experiment1 defaults key by key. `to_text` writes the fully resolved
//! form, which is what run directories store.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use glean_core::baselines::{BaselineConfig, DEFAULT_BLEND, SI_CLIP_NORM};
use glean_core::dataset::{Label, TaskGeometry, DEFAULT_NOISE_SCALE};
use glean_core::kvtext::{Document, SectionView, Writer};
use glean_core::numeric::domain_seed;
use glean_core::planner::{FmInit, DEFAULT_CANDIDATES, DEFAULT_PLAN_EPOCHS, DEFAULT_PLAN_RATE};
use glean_core::pvrnn::{LayerConfig, MetaPrior, ModelConfig};
use glean_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// The bundled spec for the 2D experiment.
pub const EXPERIMENT1: &str = include_str!("../experiments/experiment1.spec");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub steps: usize,
    pub train: usize,
    pub test: usize,
    pub center: usize,
    pub noise_scale: f64,
    pub goal_radius: f64,
    pub goal_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d_size: Vec<usize>,
    pub z_size: Vec<usize>,
    pub tau: Vec<f64>,
    pub w_init: f64,
    pub lr: f64,
    pub epochs: usize,
    pub error_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub epochs: usize,
    pub lr: f64,
    pub blend: f64,
    pub si_clip_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub epochs: usize,
    pub rate: f64,
    pub candidates: usize,
    pub repetitions: usize,
    pub fm_init: FmInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadSpec {
    pub sequences: usize,
    /// `None` means the full prefix.
    pub window: Option<usize>,
    pub regression_epochs: usize,
    pub si_epochs: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub data: DataSpec,
    pub model: ModelSpec,
    /// Per-layer meta-priors, bottom layer first.
    pub meta_prior: BTreeMap<String, Vec<f64>>,
    pub baselines: BaselineSpec,
    pub prior_rollouts: usize,
    pub regen_rollouts: usize,
    pub regen_label: Label,
    pub plan: PlanSpec,
    pub lookahead: LookaheadSpec,
    /// Explicit checkpoint paths by model name; others live in the run's
    /// `train/` directory.
    pub checkpoints: BTreeMap<String, PathBuf>,
}

pub const MODEL_NAMES: [&str; 5] = ["weak", "intermediate", "strong", "fm", "si"];

fn defaults() -> ExperimentSpec {
    let base = ModelConfig::experiment1(MetaPrior::Intermediate);
    ExperimentSpec {
        name: "experiment1".into(),
        seed: 1,
        data: DataSpec {
            steps: base.seq_len,
            train: 60,
            test: 20,
            center: 10,
            noise_scale: DEFAULT_NOISE_SCALE,
            goal_radius: TaskGeometry::default().goal_radius,
            goal_spread: TaskGeometry::default().goal_spread,
        },
        model: ModelSpec {
            d_size: base.layers.iter().map(|l| l.d_size).collect(),
            z_size: base.layers.iter().map(|l| l.z_size).collect(),
            tau: base.layers.iter().map(|l| l.tau).collect(),
            w_init: base.w_init,
            lr: base.lr,
            epochs: base.epochs,
            error_dropout: base.error_dropout,
        },
        meta_prior: MetaPrior::ALL
            .iter()
            .map(|m| (m.name().to_string(), m.weights().to_vec()))
            .collect(),
        baselines: BaselineSpec {
            epochs: base.epochs,
            lr: base.lr,
            blend: DEFAULT_BLEND,
            si_clip_norm: Some(SI_CLIP_NORM),
        },
        prior_rollouts: 60,
        regen_rollouts: 60,
        regen_label: Label::Left,
        plan: PlanSpec {
            epochs: DEFAULT_PLAN_EPOCHS,
            rate: DEFAULT_PLAN_RATE,
            candidates: DEFAULT_CANDIDATES,
            repetitions: 10,
            fm_init: FmInit::Replicate,
        },
        lookahead: LookaheadSpec {
            sequences: 20,
            window: None,
            regression_epochs: 30,
            si_epochs: 500,
            rate: DEFAULT_PLAN_RATE,
        },
        checkpoints: BTreeMap::new(),
    }
}

const SECTIONS: [&str; 9] = [
    "experiment",
    "data",
    "model",
    "meta_prior",
    "baselines",
    "prior_gen",
    "target_regen",
    "plan",
    "lookahead",
];

fn reject_unknown(s: &SectionView<'_>, known: &[&str]) -> Result<()> {
    match s.unknown_keys(known).first() {
        Some(e) => Err(s.error(e.line, format!("unknown key `{}` in [{}]", e.key, s.name()))),
        None => Ok(()),
    }
}

impl ExperimentSpec {
    pub fn bundled() -> Self {
        Self::parse(EXPERIMENT1, Path::new("<bundled experiment1>")).expect("bundled spec is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let doc = Document::parse(text, path)?;
        for s in &doc.sections {
            if !SECTIONS.contains(&s.name.as_str()) && s.name != "checkpoints" {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: s.line,
                    msg: format!("unknown section [{}]", s.name),
                });
            }
        }
        let mut spec = defaults();

        let e = doc.require("experiment")?;
        reject_unknown(&e, &["name", "seed"])?;
        spec.name = e.str("name")?.to_string();
        spec.seed = e.parse_or("seed", spec.seed)?;

        if let Some(s) = doc.section("data") {
            reject_unknown(&s, &["steps", "train", "test", "center", "noise_scale", "goal_radius", "goal_spread"])?;
            let d = &mut spec.data;
            d.steps = s.parse_or("steps", d.steps)?;
            d.train = s.parse_or("train", d.train)?;
            d.test = s.parse_or("test", d.test)?;
            d.center = s.parse_or("center", d.center)?;
            d.noise_scale = s.f64_or("noise_scale", d.noise_scale)?;
            d.goal_radius = s.f64_or("goal_radius", d.goal_radius)?;
            d.goal_spread = s.f64_or("goal_spread", d.goal_spread)?;
        }
        if let Some(s) = doc.section("model") {
            reject_unknown(&s, &["d_size", "z_size", "tau", "w_init", "lr", "epochs", "error_dropout"])?;
            let m = &mut spec.model;
            if s.has("d_size") {
                m.d_size = s.list("d_size")?;
            }
            if s.has("z_size") {
                m.z_size = s.list("z_size")?;
            }
            if s.has("tau") {
                m.tau = s.list("tau")?;
            }
            m.w_init = s.f64_or("w_init", m.w_init)?;
            m.lr = s.f64_or("lr", m.lr)?;
            m.epochs = s.parse_or("epochs", m.epochs)?;
            m.error_dropout = s.f64_or("error_dropout", m.error_dropout)?;
        }
        if let Some(s) = doc.section("meta_prior") {
            reject_unknown(&s, &["weak", "intermediate", "strong"])?;
            for name in ["weak", "intermediate", "strong"] {
                if s.has(name) {
                    spec.meta_prior.insert(name.into(), s.list(name)?);
                }
            }
        }
        if let Some(s) = doc.section("baselines") {
            reject_unknown(&s, &["epochs", "lr", "blend", "si_clip_norm"])?;
            let b = &mut spec.baselines;
            b.epochs = s.parse_or("epochs", b.epochs)?;
            b.lr = s.f64_or("lr", b.lr)?;
            b.blend = s.f64_or("blend", b.blend)?;
            if s.has("si_clip_norm") {
                b.si_clip_norm = match s.str("si_clip_norm")? {
                    "none" => None,
                    _ => Some(s.f64("si_clip_norm")?),
                };
            }
        }
        if let Some(s) = doc.section("prior_gen") {
            reject_unknown(&s, &["rollouts"])?;
            spec.prior_rollouts = s.parse_or("rollouts", spec.prior_rollouts)?;
        }
        if let Some(s) = doc.section("target_regen") {
            reject_unknown(&s, &["rollouts", "label"])?;
            spec.regen_rollouts = s.parse_or("rollouts", spec.regen_rollouts)?;
            if s.has("label") {
                let v = s.str("label")?;
                spec.regen_label = match Label::from_name(v) {
                    Some(l @ (Label::Left | Label::Right)) => l,
                    _ => {
                        let line = s.entry("label").map_or(0, |e| e.line);
                        return Err(s.error(line, format!("label must be left or right, got `{v}`")));
                    }
                };
            }
        }
        if let Some(s) = doc.section("plan") {
            reject_unknown(&s, &["epochs", "rate", "candidates", "repetitions", "fm_init"])?;
            let p = &mut spec.plan;
            p.epochs = s.parse_or("epochs", p.epochs)?;
            p.rate = s.f64_or("rate", p.rate)?;
            p.candidates = s.parse_or("candidates", p.candidates)?;
            p.repetitions = s.parse_or("repetitions", p.repetitions)?;
            if s.has("fm_init") {
                p.fm_init = match s.str("fm_init")? {
                    "replicate" => FmInit::Replicate,
                    "random" => FmInit::Random,
                    other => {
                        let line = s.entry("fm_init").map_or(0, |e| e.line);
                        return Err(s.error(line, format!("fm_init must be replicate or random, got `{other}`")));
                    }
                };
            }
        }
        if let Some(s) = doc.section("lookahead") {
            reject_unknown(&s, &["sequences", "window", "regression_epochs", "si_epochs", "rate"])?;
            let l = &mut spec.lookahead;
            l.sequences = s.parse_or("sequences", l.sequences)?;
            if s.has("window") {
                l.window = match s.str("window")? {
                    "full" => None,
                    _ => Some(s.parse("window")?),
                };
            }
            l.regression_epochs = s.parse_or("regression_epochs", l.regression_epochs)?;
            l.si_epochs = s.parse_or("si_epochs", l.si_epochs)?;
            l.rate = s.f64_or("rate", l.rate)?;
        }
        if let Some(s) = doc.section("checkpoints") {
            reject_unknown(&s, &MODEL_NAMES)?;
            let base = path.parent().unwrap_or(Path::new("."));
            for entry in s.entries() {
                spec.checkpoints.insert(entry.key.clone(), base.join(&entry.value));
            }
        }
        spec.validate(path)?;
        Ok(spec)
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", path.display())));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("invalid experiment name `{}`", self.name));
        }
        if self.data.train == 0 || self.data.train % 2 != 0 {
            return bad(format!("data.train must be even and positive, got {}", self.data.train));
        }
        if self.data.test == 0 || self.data.test % 2 != 0 {
            return bad(format!("data.test must be even and positive, got {}", self.data.test));
        }
        if self.data.center == 0 {
            return bad("data.center must be >= 1".into());
        }
        let n = self.model.d_size.len();
        if self.model.z_size.len() != n || self.model.tau.len() != n {
            return bad("model.d_size, z_size and tau must have one entry per layer".into());
        }
        for (name, w) in &self.meta_prior {
            if w.len() != n {
                return bad(format!("meta_prior.{name} needs {n} values, got {}", w.len()));
            }
        }
        if self.plan.candidates == 0 || self.plan.repetitions == 0 {
            return bad("plan.candidates and plan.repetitions must be >= 1".into());
        }
        if self.prior_rollouts == 0 || self.regen_rollouts == 0 {
            return bad("rollout counts must be >= 1".into());
        }
        if self.lookahead.sequences == 0 || self.lookahead.sequences > self.data.test {
            return bad(format!("lookahead.sequences must be in 1..={}", self.data.test));
        }
        if !(self.plan.rate > 0.0) || !(self.lookahead.rate > 0.0) {
            return bad("rates must be > 0".into());
        }
        self.geometry().validate()?;
        for m in MetaPrior::ALL {
            self.model_config(m).validate()?;
        }
        self.fm_config().validate()?;
        self.si_config().validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn geometry(&self) -> TaskGeometry {
        TaskGeometry {
            goal_radius: self.data.goal_radius,
            goal_spread: self.data.goal_spread,
            ..TaskGeometry::default()
        }
    }

    /// Seed for one named purpose, derived from the master seed.
    pub fn seed_for(&self, purpose: &str) -> u64 {
        domain_seed(self.seed, purpose)
    }

    /// Every derived seed the pipeline uses, for the run record.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        out.insert("master".to_string(), self.seed);
        for p in [
            "data/train",
            "data/test",
            "data/center",
            "prior-gen",
            "target-regen",
            "plan",
            "lookahead",
            "compare",
        ] {
            out.insert(p.to_string(), self.seed_for(p));
        }
        for m in MODEL_NAMES {
            out.insert(format!("model/{m}"), self.seed_for(&format!("model/{m}")));
        }
        out
    }

    fn base_config(&self, epochs: usize, lr: f64, seed: u64) -> ModelConfig {
        ModelConfig {
            layers: (0..self.model.d_size.len())
                .map(|l| LayerConfig {
                    d_size: self.model.d_size[l],
                    z_size: self.model.z_size[l],
                    tau: self.model.tau[l],
                    w: 0.0,
                })
                .collect(),
            w_init: self.model.w_init,
            output_dim: 2,
            seq_len: self.data.steps,
            lr,
            epochs,
            error_dropout: self.model.error_dropout,
            seed,
        }
    }

    pub fn model_config(&self, meta: MetaPrior) -> ModelConfig {
        let seed = self.seed_for(&format!("model/{}", meta.name()));
        self.base_config(self.model.epochs, self.model.lr, seed)
            .with_meta_prior(&self.meta_prior[meta.name()])
    }

    pub fn fm_config(&self) -> BaselineConfig {
        let model = self.base_config(self.baselines.epochs, self.baselines.lr, self.seed_for("model/fm"));
        BaselineConfig {
            blend: self.baselines.blend,
            ..BaselineConfig::fm(model)
        }
    }

    pub fn si_config(&self) -> BaselineConfig {
        let model = self.base_config(self.baselines.epochs, self.baselines.lr, self.seed_for("model/si"));
        BaselineConfig {
            model,
            blend: self.baselines.blend,
            clip_norm: self.baselines.si_clip_norm,
        }
    }

    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(" ");
        let fl = |v: &[f64]| join(v.iter().map(|x| format!("{x}")).collect());
        let mut w = Writer::new();
        w.section("experiment").kv("name", &self.name).kv("seed", self.seed);
        let d = &self.data;
        w.section("data")
            .kv("steps", d.steps)
            .kv("train", d.train)
            .kv("test", d.test)
            .kv("center", d.center)
            .kv("noise_scale", d.noise_scale)
            .kv("goal_radius", d.goal_radius)
            .kv("goal_spread", d.goal_spread);
        let m = &self.model;
        w.section("model")
            .kv("d_size", join(m.d_size.iter().map(|x| x.to_string()).collect()))
            .kv("z_size", join(m.z_size.iter().map(|x| x.to_string()).collect()))
            .kv("tau", fl(&m.tau))
            .kv("w_init", m.w_init)
            .kv("lr", m.lr)
            .kv("epochs", m.epochs)
            .kv("error_dropout", m.error_dropout);
        w.section("meta_prior");
        for (k, v) in &self.meta_prior {
            w.kv(k, fl(v));
        }
        let b = &self.baselines;
        w.section("baselines")
            .kv("epochs", b.epochs)
            .kv("lr", b.lr)
            .kv("blend", b.blend)
            .kv("si_clip_norm", b.si_clip_norm.map_or("none".to_string(), |c| c.to_string()));
        w.section("prior_gen").kv("rollouts", self.prior_rollouts);
        w.section("target_regen")
            .kv("rollouts", self.regen_rollouts)
            .kv("label", self.regen_label.name());
        let p = &self.plan;
        w.section("plan")
            .kv("epochs", p.epochs)
            .kv("rate", p.rate)
            .kv("candidates", p.candidates)
            .kv("repetitions", p.repetitions)
            .kv(
                "fm_init",
                match p.fm_init {
                    FmInit::Replicate => "replicate",
                    FmInit::Random => "random",
                },
            );
        let l = &self.lookahead;
        w.section("lookahead")
            .kv("sequences", l.sequences)
            .kv("window", l.window.map_or("full".to_string(), |x| x.to_string()))
            .kv("regression_epochs", l.regression_epochs)
            .kv("si_epochs", l.si_epochs)
            .kv("rate", l.rate);
        if !self.checkpoints.is_empty() {
            w.section("checkpoints");
            for (k, v) in &self.checkpoints {
                w.kv(k, v.display());
            }
        }
        w.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_spec_parses_and_resolves_round_trip() {
        let s = ExperimentSpec::bundled();
        assert_eq!(s.name, "experiment1");
        let again = ExperimentSpec::parse(&s.to_text(), Path::new("snap.spec")).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn minimal_spec_uses_defaults() {
        let s = ExperimentSpec::parse("[experiment]\nname = x\n", Path::new("m.spec")).unwrap();
        assert_eq!(s.data.train, 60);
        assert_eq!(s.meta_prior["strong"], vec![0.2, 0.1]);
        assert_eq!(s.model_config(MetaPrior::Weak).layers[0].w, 0.00001);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "[experiment]\nname = x\n\n[plan]\nepochs = lots\n";
        match ExperimentSpec::parse(text, Path::new("bad.spec")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentSpec::parse("[experiment]\nname = x\n[plan]\nepoch = 3\n", Path::new("b")).is_err());
        assert!(ExperimentSpec::parse("[experiment]\nname = x\n[bogus]\n", Path::new("b")).is_err());
        assert!(matches!(
            ExperimentSpec::parse("[experiment]\nname = x\n[data]\ntrain = 7\n", Path::new("b")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn model_seeds_differ_by_name() {
        let s = ExperimentSpec::bundled();
        let seeds = s.seeds();
        let mut v: Vec<u64> = MODEL_NAMES.iter().map(|m| seeds[&format!("model/{m}")]).collect();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), MODEL_NAMES.len());
        assert_eq!(s.with_seed(9).seeds()["master"], 9);
    }
}
