//! Trained-model checkpoints in the shared `key = value` text format.
//!
//! ```text
//! [checkpoint]
//! format = glean-checkpoint
//! version = 1
//! kind = PVRNN
//! seed = 0
//!
//! [config]
//! d_size = 20 10
//! ...
//!
//! [params]
//! layer0.w_dd = 1.2e-1 ...
//!
//! [adaptation]
//! count = 60
//! 0.mu = ...
//! 0.sigma = ...
//! ```
//!
//! Floats are written in shortest round-trip form, so a load reproduces the
//! saved model bit for bit. Training curves are not stored.

use std::fmt;
use std::path::Path;

use crate::baselines::{BaselineConfig, FmParams, SiInit, SiParams, TrainedFm, TrainedSi};
use crate::error::{Error, Result};
use crate::kvtext::{Document, SectionView, Writer};
use crate::numeric::SeededRng;
use crate::pvrnn::{AdaptationVars, LayerConfig, ModelConfig, NetworkParams, TrainedModel};

pub const FORMAT: &str = "glean-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Pvrnn,
    Fm,
    Si,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Pvrnn => "PVRNN",
            ModelKind::Fm => "FM",
            ModelKind::Si => "SI",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        [ModelKind::Pvrnn, ModelKind::Fm, ModelKind::Si]
            .into_iter()
            .find(|k| k.tag() == s)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Pvrnn(TrainedModel),
    Fm(TrainedFm),
    Si(TrainedSi),
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        match self {
            Checkpoint::Pvrnn(_) => ModelKind::Pvrnn,
            Checkpoint::Fm(_) => ModelKind::Fm,
            Checkpoint::Si(_) => ModelKind::Si,
        }
    }

    pub fn model_config(&self) -> &ModelConfig {
        match self {
            Checkpoint::Pvrnn(m) => &m.config,
            Checkpoint::Fm(m) => &m.config.model,
            Checkpoint::Si(m) => &m.config.model,
        }
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::new();
        w.section("checkpoint")
            .kv("format", FORMAT)
            .kv("version", VERSION)
            .kv("kind", self.kind())
            .kv("seed", self.model_config().seed);
        write_config(&mut w, self.model_config());
        match self {
            Checkpoint::Pvrnn(m) => {
                write_blocks(&mut w, m.params.blocks());
                w.section("adaptation").kv("count", m.adaptation.len());
                for (i, a) in m.adaptation.iter().enumerate() {
                    w.kv(&format!("{i}.steps"), a.steps);
                    w.floats(&format!("{i}.mu"), &a.mu);
                    w.floats(&format!("{i}.sigma"), &a.sigma);
                }
            }
            Checkpoint::Fm(m) => {
                write_baseline(&mut w, &m.config);
                write_blocks(&mut w, m.params.net.blocks());
            }
            Checkpoint::Si(m) => {
                write_baseline(&mut w, &m.config);
                write_blocks(&mut w, m.params.blocks());
                w.section("adaptation").kv("count", m.adaptation.len());
                for (i, a) in m.adaptation.iter().enumerate() {
                    w.floats(&format!("{i}.mu"), &a.mu);
                    w.floats(&format!("{i}.sigma"), &a.sigma);
                }
            }
        }
        w.finish()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let doc = Document::parse(text, path)?;
        let head = doc.require("checkpoint")?;
        let format = head.str("format")?;
        if format != FORMAT {
            return Err(head.error(head.entry("format").map_or(0, |e| e.line), format!("not a checkpoint: `{format}`")));
        }
        let version: u32 = head.parse("version")?;
        if version != VERSION {
            return Err(head.error(
                head.entry("version").map_or(0, |e| e.line),
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let tag = head.str("kind")?;
        let kind = ModelKind::from_tag(tag)
            .ok_or_else(|| head.error(head.entry("kind").map_or(0, |e| e.line), format!("unknown model kind `{tag}`")))?;
        let config = read_config(&doc.require("config")?)?;
        let blocks = doc.require("params")?;
        // Any seed gives the right shapes; every block is overwritten below.
        let mut rng = SeededRng::new(0);
        Ok(match kind {
            ModelKind::Pvrnn => {
                let mut params = NetworkParams::init(&config, &mut rng);
                fill_blocks(&blocks, params.blocks().into_iter().map(|(n, _)| n).collect(), params.blocks_mut())?;
                let adapt = doc.require("adaptation")?;
                let count: usize = adapt.parse("count")?;
                let width = config.layout().z_total;
                let mut adaptation = Vec::with_capacity(count);
                for i in 0..count {
                    let steps: usize = adapt.parse(&format!("{i}.steps"))?;
                    let mut a = AdaptationVars::zeros(steps, width);
                    a.mu = sized_list(&adapt, &format!("{i}.mu"), steps * width)?;
                    a.sigma = sized_list(&adapt, &format!("{i}.sigma"), steps * width)?;
                    adaptation.push(a);
                }
                Checkpoint::Pvrnn(TrainedModel {
                    config,
                    params,
                    adaptation,
                    history: Vec::new(),
                })
            }
            ModelKind::Fm => {
                let bc = read_baseline(&doc, config)?;
                let mut net = crate::baselines::DrivenNet::init(&bc.model, bc.model.output_dim, &mut rng);
                fill_blocks(&blocks, net.blocks().into_iter().map(|(n, _)| n).collect(), net.blocks_mut())?;
                Checkpoint::Fm(TrainedFm {
                    config: bc,
                    params: FmParams { net },
                    history: Vec::new(),
                })
            }
            ModelKind::Si => {
                let bc = read_baseline(&doc, config)?;
                let mut params = SiParams::init(&bc.model, &mut rng);
                fill_blocks(&blocks, params.blocks().into_iter().map(|(n, _)| n).collect(), params.blocks_mut())?;
                let adapt = doc.require("adaptation")?;
                let count: usize = adapt.parse("count")?;
                let width = crate::baselines::si_width(&bc.model);
                let mut adaptation = Vec::with_capacity(count);
                for i in 0..count {
                    adaptation.push(SiInit {
                        mu: sized_list(&adapt, &format!("{i}.mu"), width)?,
                        sigma: sized_list(&adapt, &format!("{i}.sigma"), width)?,
                    });
                }
                Checkpoint::Si(TrainedSi {
                    config: bc,
                    params,
                    adaptation,
                    history: Vec::new(),
                })
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Loads and requires a specific kind.
    pub fn load_kind(path: &Path, kind: ModelKind) -> Result<Self> {
        let c = Self::load(path)?;
        if c.kind() != kind {
            return Err(Error::parse(path, 0, format!("expected a {kind} checkpoint, found {}", c.kind())));
        }
        Ok(c)
    }
}

fn write_config(w: &mut Writer, c: &ModelConfig) {
    let join = |f: &dyn Fn(&LayerConfig) -> String| c.layers.iter().map(f).collect::<Vec<_>>().join(" ");
    w.section("config")
        .kv("d_size", join(&|l| l.d_size.to_string()))
        .kv("z_size", join(&|l| l.z_size.to_string()))
        .kv("tau", join(&|l| format!("{:e}", l.tau)))
        .kv("meta_prior", join(&|l| format!("{:e}", l.w)))
        .kv("w_init", format!("{:e}", c.w_init))
        .kv("output_dim", c.output_dim)
        .kv("seq_len", c.seq_len)
        .kv("lr", format!("{:e}", c.lr))
        .kv("epochs", c.epochs)
        .kv("error_dropout", format!("{:e}", c.error_dropout))
        .kv("seed", c.seed);
}

fn read_config(s: &SectionView<'_>) -> Result<ModelConfig> {
    let d: Vec<usize> = s.list("d_size")?;
    let z: Vec<usize> = s.list("z_size")?;
    let tau: Vec<f64> = s.list("tau")?;
    let w: Vec<f64> = s.list("meta_prior")?;
    if z.len() != d.len() || tau.len() != d.len() || w.len() != d.len() {
        return Err(s.error(
            s.entry("d_size").map_or(0, |e| e.line),
            "per-layer lists must have equal lengths",
        ));
    }
    let layers = (0..d.len())
        .map(|l| LayerConfig {
            d_size: d[l],
            z_size: z[l],
            tau: tau[l],
            w: w[l],
        })
        .collect();
    let config = ModelConfig {
        layers,
        w_init: s.f64("w_init")?,
        output_dim: s.parse("output_dim")?,
        seq_len: s.parse("seq_len")?,
        lr: s.f64("lr")?,
        epochs: s.parse("epochs")?,
        error_dropout: s.f64("error_dropout")?,
        seed: s.parse("seed")?,
    };
    config.validate()?;
    Ok(config)
}

fn write_baseline(w: &mut Writer, c: &BaselineConfig) {
    w.section("baseline").kv("blend", format!("{:e}", c.blend));
    if let Some(clip) = c.clip_norm {
        w.kv("clip_norm", format!("{clip:e}"));
    }
}

fn read_baseline(doc: &Document, model: ModelConfig) -> Result<BaselineConfig> {
    let s = doc.require("baseline")?;
    let clip_norm = if s.has("clip_norm") { Some(s.f64("clip_norm")?) } else { None };
    let c = BaselineConfig {
        model,
        blend: s.f64("blend")?,
        clip_norm,
    };
    c.validate()?;
    Ok(c)
}

fn write_blocks(w: &mut Writer, blocks: Vec<(String, &[f64])>) {
    w.section("params");
    for (name, values) in blocks {
        w.floats(&name, values);
    }
}

fn fill_blocks(s: &SectionView<'_>, names: Vec<String>, blocks: Vec<&mut [f64]>) -> Result<()> {
    for (name, block) in names.iter().zip(blocks) {
        let v = sized_list(s, name, block.len())?;
        block.copy_from_slice(&v);
    }
    if let Some(e) = s.unknown_keys(&names.iter().map(String::as_str).collect::<Vec<_>>()).first() {
        return Err(s.error(e.line, format!("unexpected parameter block `{}`", e.key)));
    }
    Ok(())
}

fn sized_list(s: &SectionView<'_>, key: &str, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s.list(key)?;
    let line = s.entry(key).map_or(0, |e| e.line);
    if v.len() != n {
        return Err(s.error(line, format!("`{key}` has {} values, expected {n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(s.error(line, format!("`{key}` contains a non-finite value")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvrnn::MetaPrior;

    fn small() -> ModelConfig {
        let mut c = ModelConfig::experiment1(MetaPrior::Intermediate);
        c.layers[0].d_size = 5;
        c.layers[1].d_size = 3;
        c.seq_len = 4;
        c.seed = 17;
        c
    }

    fn scrambled(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..n).map(|_| rng.standard_normal() * 1e-3 + 1.0 / 3.0).collect()
    }

    fn roundtrip(c: &Checkpoint) -> Checkpoint {
        Checkpoint::parse(&c.to_text(), Path::new("x.ckpt")).unwrap()
    }

    #[test]
    fn pvrnn_roundtrip_is_exact() {
        let config = small();
        let params = NetworkParams::init(&config, &mut SeededRng::new(3));
        let mut a = AdaptationVars::for_config(&config);
        a.set_flat(&scrambled(a.flatten().len(), 4));
        let ck = Checkpoint::Pvrnn(TrainedModel {
            config,
            params,
            adaptation: vec![a.clone(), a],
            history: Vec::new(),
        });
        assert_eq!(roundtrip(&ck), ck);
    }

    #[test]
    fn baseline_roundtrips_are_exact() {
        let model = small();
        let fm = Checkpoint::Fm(TrainedFm {
            config: BaselineConfig::fm(model.clone()),
            params: FmParams {
                net: crate::baselines::DrivenNet::init(&model, 2, &mut SeededRng::new(5)),
            },
            history: Vec::new(),
        });
        assert_eq!(roundtrip(&fm), fm);
        let width = crate::baselines::si_width(&model);
        let mut init = SiInit::zeros(width);
        init.set_flat(&scrambled(2 * width, 6));
        let si = Checkpoint::Si(TrainedSi {
            config: BaselineConfig::si(model.clone()),
            params: SiParams::init(&model, &mut SeededRng::new(7)),
            adaptation: vec![init],
            history: Vec::new(),
        });
        assert_eq!(roundtrip(&si), si);
    }

    #[test]
    fn rejects_wrong_kind_and_truncation() {
        let config = small();
        let ck = Checkpoint::Pvrnn(TrainedModel {
            params: NetworkParams::init(&config, &mut SeededRng::new(1)),
            adaptation: vec![],
            config,
            history: vec![],
        });
        let text = ck.to_text();
        assert!(Checkpoint::parse(&text.replace("kind = PVRNN", "kind = XYZ"), Path::new("a")).is_err());
        let cut = &text[..text.len() * 2 / 3];
        assert!(Checkpoint::parse(cut, Path::new("a")).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        ck.save(&p).unwrap();
        assert!(Checkpoint::load_kind(&p, ModelKind::Pvrnn).is_ok());
        assert!(Checkpoint::load_kind(&p, ModelKind::Si).is_err());
    }
}
