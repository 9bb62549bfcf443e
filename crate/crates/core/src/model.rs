//! The dual-branch quality model: two encoders with their own preprocessing,
//! per-branch KAN down-samplers, and a fusion head over the concatenated
//! `[authentic ‖ synthetic]` features.
//!
//! On disk a model is a weights file (`M.larw`) plus a `key=value` sidecar
//! (`M.cfg`) describing the architecture.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::color::{ColorSpace, Image};
use crate::encoder::{Encoder, EncoderKind, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::head::{DualHead, Head, HeadKind};
use crate::kan::{KanGrid, KanStack};
use crate::kv::{self, config_err};
use crate::mlp::MlpStack;
use crate::preprocess::{prepare, BranchPreprocessConfig, Normalization};
use crate::weights::WeightStore;

/// Hidden width of an MLP fusion head. A KAN edge costs `G + k + 2 = 10`
/// MACs, so `[2d → 10 → 1]` roughly matches a `[2d → 1]` KAN fusion.
pub const MLP_FUSION_HIDDEN: usize = 10;

pub const AUTH_ENCODER_PREFIX: &str = "authentic.encoder.";
pub const SYNTH_ENCODER_PREFIX: &str = "synthetic.encoder.";
pub const DOWN_AUTH_PREFIX: &str = "head.down_auth.";
pub const DOWN_SYNTH_PREFIX: &str = "head.down_synth.";
pub const FUSION_PREFIX: &str = "head.fusion.";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub auth_encoder: EncoderKind,
    pub synth_encoder: EncoderKind,
    /// Per-branch down-sampled width `d`; the fusion head sees `2d` inputs.
    pub head_dim: usize,
    pub fusion: HeadKind,
    pub auth_preprocess: BranchPreprocessConfig,
    pub synth_preprocess: BranchPreprocessConfig,
    pub grid: KanGrid,
}

impl Default for ModelConfig {
    /// MobileNetV3-Large in both branches, 384² authentic resize,
    /// 1280² synthetic crop, `d = 128`, KAN fusion.
    fn default() -> Self {
        Self {
            auth_encoder: EncoderKind::MobileNetV3Large,
            synth_encoder: EncoderKind::MobileNetV3Large,
            head_dim: 128,
            fusion: HeadKind::Kan,
            auth_preprocess: BranchPreprocessConfig::authentic(384),
            synth_preprocess: BranchPreprocessConfig::synthetic(Some(1280)),
            grid: KanGrid::default(),
        }
    }
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = match s.split_once(['x', 'X']) {
        Some((w, h)) => (w, h),
        None => (s, s),
    };
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
    Ok((p(w)?, p(h)?))
}

fn triple(e: &kv::Entry, file: &str) -> Result<[f32; 3]> {
    let v: Vec<f32> = e.list(file)?;
    v.try_into()
        .map_err(|_| config_err(file, e.line, format!("`{}` needs exactly 3 values", e.key)))
}

impl ModelConfig {
    /// Tiny encoders at 64² in both branches for desk-scale runs.
    pub fn tiny() -> Self {
        Self {
            auth_encoder: EncoderKind::Tiny,
            synth_encoder: EncoderKind::Tiny,
            auth_preprocess: BranchPreprocessConfig::authentic(64),
            synth_preprocess: BranchPreprocessConfig::synthetic(Some(64)),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 {
            return Err(Error::InvalidArgument("head_dim must be positive".into()));
        }
        self.grid.validate()?;
        self.auth_preprocess.validate()?;
        self.synth_preprocess.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# nriqa model config\nembedding=classifier_logits\n");
        let size = |d: Option<(usize, usize)>| d.map_or("none".to_string(), |(w, h)| format!("{w}x{h}"));
        let join = |v: [f32; 3]| v.map(|x| x.to_string()).join(",");
        let _ = writeln!(s, "auth_encoder={}", self.auth_encoder);
        let _ = writeln!(s, "synth_encoder={}", self.synth_encoder);
        let _ = writeln!(s, "head_dim={}", self.head_dim);
        let _ = writeln!(s, "fusion={}", self.fusion);
        let _ = writeln!(s, "auth_resize={}", size(self.auth_preprocess.resize_to));
        let _ = writeln!(s, "synth_crop={}", size(self.synth_preprocess.center_crop_to));
        for (tag, pp) in [("auth", &self.auth_preprocess), ("synth", &self.synth_preprocess)] {
            for space in ColorSpace::ALL {
                let _ = writeln!(s, "{tag}_mean_{space}={}", join(pp.mean(space)));
                let _ = writeln!(s, "{tag}_std_{space}={}", join(pp.std(space)));
            }
        }
        let _ = writeln!(s, "kan_grid_size={}", self.grid.size);
        let _ = writeln!(s, "kan_spline_order={}", self.grid.order);
        let _ = writeln!(s, "kan_grid_min={}", self.grid.min);
        let _ = writeln!(s, "kan_grid_max={}", self.grid.max);
        s
    }

    /// Parses a config; keys left out keep their [`Default`] values.
    pub fn from_text(text: &str, file: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in kv::parse(text, file)? {
            let bad = |msg: String| config_err(file, e.line, msg);
            match e.key.as_str() {
                "embedding" if e.value == "classifier_logits" => {}
                "embedding" => return Err(bad(format!("unsupported embedding `{}`", e.value))),
                "auth_encoder" => cfg.auth_encoder = e.value.parse().map_err(|x: Error| bad(x.to_string()))?,
                "synth_encoder" => cfg.synth_encoder = e.value.parse().map_err(|x: Error| bad(x.to_string()))?,
                "head_dim" => cfg.head_dim = e.parse(file)?,
                "fusion" => cfg.fusion = e.value.parse().map_err(|x: Error| bad(x.to_string()))?,
                "auth_resize" => cfg.auth_preprocess.resize_to = Some(parse_size(&e.value).map_err(bad)?),
                "synth_crop" => {
                    cfg.synth_preprocess.center_crop_to = match e.value.as_str() {
                        "none" => None,
                        v => Some(parse_size(v).map_err(bad)?),
                    }
                }
                "kan_grid_size" => cfg.grid.size = e.parse(file)?,
                "kan_spline_order" => cfg.grid.order = e.parse(file)?,
                "kan_grid_min" => cfg.grid.min = e.parse(file)?,
                "kan_grid_max" => cfg.grid.max = e.parse(file)?,
                key => {
                    let parsed = key.split_once('_').and_then(|(tag, rest)| {
                        let (stat, space) = rest.split_once('_')?;
                        Some((tag, stat, space.parse::<ColorSpace>().ok()?))
                    });
                    let (pp, stat, space) = match parsed {
                        Some(("auth", stat, sp)) => (&mut cfg.auth_preprocess, stat, sp),
                        Some(("synth", stat, sp)) => (&mut cfg.synth_preprocess, stat, sp),
                        _ => return Err(e.unknown(file)),
                    };
                    let n: &mut Normalization = &mut pp.normalization[space.index()];
                    match stat {
                        "mean" => n.mean = triple(&e, file)?,
                        "std" => n.std = triple(&e, file)?,
                        _ => return Err(e.unknown(file)),
                    }
                }
            }
        }
        cfg.validate()
            .map_err(|e| config_err(file, 0, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Sidecar config path for a weights file: `M.larw` → `M.cfg`.
pub fn config_path(weights: &Path) -> PathBuf {
    weights.with_extension("cfg")
}

/// Fresh trainable head for `cfg`: `[1000 → d]` KAN per branch and a
/// `[2d → 1]` KAN (or `[2d → 10 → 1]` MLP) fusion.
pub fn init_dual_head(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<DualHead<f64>> {
    let d = cfg.head_dim;
    let down_auth = KanStack::init(&[EMBEDDING_DIM, d], cfg.grid, rng)?;
    let down_synth = KanStack::init(&[EMBEDDING_DIM, d], cfg.grid, rng)?;
    let fusion = match cfg.fusion {
        HeadKind::Kan => Head::Kan(KanStack::init(&[2 * d, 1], cfg.grid, rng)?),
        HeadKind::Mlp => Head::Mlp(MlpStack::init(&[2 * d, MLP_FUSION_HIDDEN, 1], rng)?),
    };
    DualHead::new(down_auth, down_synth, fusion)
}

#[derive(Clone, Debug)]
pub struct DualBranchModel {
    config: ModelConfig,
    auth_encoder: Encoder,
    synth_encoder: Encoder,
    head: DualHead<f64>,
}

impl DualBranchModel {
    pub fn new(config: ModelConfig, auth_encoder: Encoder, synth_encoder: Encoder, head: DualHead<f64>) -> Result<Self> {
        config.validate()?;
        if auth_encoder.kind() != config.auth_encoder || synth_encoder.kind() != config.synth_encoder {
            return Err(Error::InvalidArgument("encoder kinds do not match the model config".into()));
        }
        let d = config.head_dim;
        let (a, s) = (head.down_auth.dims(), head.down_synth.dims());
        if a != [EMBEDDING_DIM, d] || s != [EMBEDDING_DIM, d] {
            return Err(Error::shape("model", "down-sampler dims", [EMBEDDING_DIM, d], (a, s)));
        }
        if head.fusion.kind() != config.fusion {
            return Err(Error::InvalidArgument(format!(
                "fusion head is {} but config says {}",
                head.fusion.kind(),
                config.fusion
            )));
        }
        Ok(Self {
            config,
            auth_encoder,
            synth_encoder,
            head,
        })
    }

    /// Seeded random encoders and heads.
    pub fn random(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let a = Encoder::random(config.auth_encoder, rng);
        let s = Encoder::random(config.synth_encoder, rng);
        let head = init_dual_head(&config, rng)?;
        Self::new(config, a, s, head)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn auth_encoder(&self) -> &Encoder {
        &self.auth_encoder
    }

    pub fn synth_encoder(&self) -> &Encoder {
        &self.synth_encoder
    }

    pub fn synth_encoder_mut(&mut self) -> &mut Encoder {
        &mut self.synth_encoder
    }

    pub fn auth_encoder_mut(&mut self) -> &mut Encoder {
        &mut self.auth_encoder
    }

    pub fn head(&self) -> &DualHead<f64> {
        &self.head
    }

    pub fn set_head(&mut self, head: DualHead<f64>) -> Result<()> {
        let cfg = self.config.clone();
        let a = self.auth_encoder.clone();
        let s = self.synth_encoder.clone();
        *self = Self::new(cfg, a, s, head)?;
        Ok(())
    }

    pub fn auth_embedding(&self, img: &Image, space: ColorSpace) -> Result<Vec<f64>> {
        let x = prepare(img, &self.config.auth_preprocess, space)?;
        Ok(self.auth_encoder.forward(&x)?.into_iter().map(f64::from).collect())
    }

    pub fn synth_embedding(&self, img: &Image, space: ColorSpace) -> Result<Vec<f64>> {
        let x = prepare(img, &self.config.synth_preprocess, space)?;
        Ok(self.synth_encoder.forward(&x)?.into_iter().map(f64::from).collect())
    }

    /// `[authentic ‖ synthetic]` embeddings, the fusion head's input order.
    pub fn joint_embedding(&self, img: &Image, space: ColorSpace) -> Result<Vec<f64>> {
        let mut v = self.auth_embedding(img, space)?;
        v.extend(self.synth_embedding(img, space)?);
        Ok(v)
    }

    pub fn predict(&self, img: &Image, space: ColorSpace) -> Result<f64> {
        let x = self.joint_embedding(img, space)?;
        Ok(self.head.forward(&x)?.0)
    }

    pub fn predict_batch(&self, imgs: &[Image], space: ColorSpace) -> Result<Vec<f64>> {
        imgs.iter().map(|i| self.predict(i, space)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.auth_encoder.spec().num_params() + self.synth_encoder.spec().num_params() + self.head.num_params()
    }

    pub fn to_store(&self) -> Result<WeightStore> {
        let mut store = WeightStore::new();
        self.auth_encoder.write_to(&mut store, AUTH_ENCODER_PREFIX)?;
        self.synth_encoder.write_to(&mut store, SYNTH_ENCODER_PREFIX)?;
        Head::Kan(self.head.down_auth.clone()).write_to(&mut store, DOWN_AUTH_PREFIX)?;
        Head::Kan(self.head.down_synth.clone()).write_to(&mut store, DOWN_SYNTH_PREFIX)?;
        self.head.fusion.write_to(&mut store, FUSION_PREFIX)?;
        Ok(store)
    }

    pub fn from_store(config: ModelConfig, store: &WeightStore) -> Result<Self> {
        let a = Encoder::from_store(config.auth_encoder, store, AUTH_ENCODER_PREFIX)?;
        let s = Encoder::from_store(config.synth_encoder, store, SYNTH_ENCODER_PREFIX)?;
        let kan = |prefix| match Head::read_from(store, prefix, HeadKind::Kan, config.grid)? {
            Head::Kan(k) => Ok(k),
            Head::Mlp(_) => unreachable!("read as KAN"),
        };
        let head = DualHead::new(
            kan(DOWN_AUTH_PREFIX)?,
            kan(DOWN_SYNTH_PREFIX)?,
            Head::read_from(store, FUSION_PREFIX, config.fusion, config.grid)?,
        )?;
        Self::new(config, a, s, head)
    }

    /// Writes `path` and its `.cfg` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_store()?.save(path)?;
        self.config.save(&config_path(path))
    }

    /// Reads `path` with the config from `config` or, if `None`, the sidecar.
    pub fn load(path: &Path, config: Option<&Path>) -> Result<Self> {
        let store = WeightStore::load(path)?;
        let cfg_path = config.map_or_else(|| config_path(path), Path::to_path_buf);
        let cfg = ModelConfig::load(&cfg_path)?;
        Self::from_store(cfg, &store)
    }
}
