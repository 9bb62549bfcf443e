//! Forward-only image encoders producing a 1000-dimensional embedding.
//!
//! Two architectures ship: MobileNetV3-Large (classifier variant, the
//! production backbone) and a four-stage `Tiny` CNN for desk-scale training
//! and tests. An architecture is described by an [`EncoderSpec`], a flat list
//! of stages whose tensor names and shapes drive loading, validation,
//! initialization and complexity accounting alike.
//!
//! Batch norm exists only in folded form: each normalized conv carries
//! `bn_scale`/`bn_shift` tensors applied as a per-channel affine map.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{
    self, activation_inplace, affine_channel_inplace, conv2d, global_avg_pool, linear, scale_channels, Activation,
    Conv2dParams, Tensor,
};
use crate::weights::WeightStore;

pub const EMBEDDING_DIM: usize = 1000;
pub const MIN_INPUT: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    MobileNetV3Large,
    Tiny,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::MobileNetV3Large => "mobilenetv3-large",
            EncoderKind::Tiny => "tiny",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mobilenetv3-large" | "mobilenetv3" | "mobilenet_v3_large" => Ok(EncoderKind::MobileNetV3Large),
            "tiny" => Ok(EncoderKind::Tiny),
            other => Err(Error::InvalidArgument(format!("unknown encoder kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub bias: bool,
    pub folded_bn: bool,
    pub activation: Option<Activation>,
}

impl ConvSpec {
    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        vec![self.c_out, self.c_in / self.groups, self.kernel, self.kernel]
    }

    fn tensors(&self, out: &mut Vec<(String, Vec<usize>)>) {
        out.push((format!("{}.weight", self.name), self.weight_dims()));
        if self.bias {
            out.push((format!("{}.bias", self.name), vec![self.c_out]));
        }
        if self.folded_bn {
            out.push((format!("{}.bn_scale", self.name), vec![self.c_out]));
            out.push((format!("{}.bn_shift", self.name), vec![self.c_out]));
        }
    }
}

/// Squeeze-excitation: pool → 1x1 conv (ReLU) → 1x1 conv (hard sigmoid) → gate.
#[derive(Clone, Debug, PartialEq)]
pub struct SeSpec {
    pub name: String,
    pub channels: usize,
    pub squeeze: usize,
}

impl SeSpec {
    fn tensors(&self, out: &mut Vec<(String, Vec<usize>)>) {
        out.push((format!("{}.fc1.weight", self.name), vec![self.squeeze, self.channels]));
        out.push((format!("{}.fc1.bias", self.name), vec![self.squeeze]));
        out.push((format!("{}.fc2.weight", self.name), vec![self.channels, self.squeeze]));
        out.push((format!("{}.fc2.bias", self.name), vec![self.channels]));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpec {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Option<Activation>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Conv(ConvSpec),
    /// Inverted residual: optional 1x1 expansion, depthwise conv, optional SE,
    /// linear 1x1 projection, identity shortcut when shapes allow.
    Bottleneck {
        expand: Option<ConvSpec>,
        depthwise: ConvSpec,
        se: Option<SeSpec>,
        project: ConvSpec,
        residual: bool,
    },
    GlobalPool,
    Linear(LinearSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub stages: Vec<Stage>,
}

/// One MobileNetV3-Large bottleneck row: kernel, expansion width, output
/// channels, squeeze-excitation, activation, stride.
struct BlockRow(usize, usize, usize, bool, Activation, usize);

const RE: Activation = Activation::Relu;
const HS: Activation = Activation::HardSwish;

#[rustfmt::skip]
const MOBILENETV3_LARGE: [BlockRow; 15] = [
    BlockRow(3, 16, 16, false, RE, 1),
    BlockRow(3, 64, 24, false, RE, 2),
    BlockRow(3, 72, 24, false, RE, 1),
    BlockRow(5, 72, 40, true, RE, 2),
    BlockRow(5, 120, 40, true, RE, 1),
    BlockRow(5, 120, 40, true, RE, 1),
    BlockRow(3, 240, 80, false, HS, 2),
    BlockRow(3, 200, 80, false, HS, 1),
    BlockRow(3, 184, 80, false, HS, 1),
    BlockRow(3, 184, 80, false, HS, 1),
    BlockRow(3, 480, 112, true, HS, 1),
    BlockRow(3, 672, 112, true, HS, 1),
    BlockRow(5, 672, 160, true, HS, 2),
    BlockRow(5, 960, 160, true, HS, 1),
    BlockRow(5, 960, 160, true, HS, 1),
];

/// Rounds to the nearest multiple of 8, never dropping more than 10%.
pub fn make_divisible(v: usize) -> usize {
    let d = 8;
    let mut n = ((v + d / 2) / d * d).max(d);
    if (n as f64) < 0.9 * v as f64 {
        n += d;
    }
    n
}

fn conv(name: String, c_in: usize, c_out: usize, kernel: usize, stride: usize, groups: usize, act: Option<Activation>) -> ConvSpec {
    ConvSpec {
        name,
        c_in,
        c_out,
        kernel,
        stride,
        groups,
        bias: false,
        folded_bn: true,
        activation: act,
    }
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind) -> Self {
        match kind {
            EncoderKind::MobileNetV3Large => Self::mobilenet_v3_large(),
            EncoderKind::Tiny => Self::tiny(),
        }
    }

    fn mobilenet_v3_large() -> Self {
        let mut stages = vec![Stage::Conv(conv("stem".into(), 3, 16, 3, 2, 1, Some(HS)))];
        let mut c_in = 16;
        for (i, BlockRow(k, exp, out, se, act, stride)) in MOBILENETV3_LARGE.iter().enumerate() {
            let (k, exp, out, stride) = (*k, *exp, *out, *stride);
            let p = format!("blocks.{i}");
            let expand = (exp != c_in).then(|| conv(format!("{p}.expand"), c_in, exp, 1, 1, 1, Some(*act)));
            let depthwise = conv(format!("{p}.dw"), exp, exp, k, stride, exp, Some(*act));
            let se = se.then(|| SeSpec {
                name: format!("{p}.se"),
                channels: exp,
                squeeze: make_divisible(exp / 4),
            });
            let project = conv(format!("{p}.project"), exp, out, 1, 1, 1, None);
            stages.push(Stage::Bottleneck {
                expand,
                depthwise,
                se,
                project,
                residual: stride == 1 && c_in == out,
            });
            c_in = out;
        }
        stages.push(Stage::Conv(conv("head_conv".into(), c_in, 960, 1, 1, 1, Some(HS))));
        stages.push(Stage::GlobalPool);
        stages.push(Stage::Linear(LinearSpec {
            name: "classifier.0".into(),
            in_dim: 960,
            out_dim: 1280,
            activation: Some(HS),
        }));
        stages.push(Stage::Linear(LinearSpec {
            name: "classifier.1".into(),
            in_dim: 1280,
            out_dim: EMBEDDING_DIM,
            activation: None,
        }));
        Self {
            kind: EncoderKind::MobileNetV3Large,
            stages,
        }
    }

    fn tiny() -> Self {
        let widths = [3, 16, 32, 64, 128];
        let mut stages: Vec<Stage> = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Stage::Conv(ConvSpec {
                    name: format!("conv{i}"),
                    c_in: w[0],
                    c_out: w[1],
                    kernel: 3,
                    stride: 2,
                    groups: 1,
                    bias: true,
                    folded_bn: false,
                    activation: Some(Activation::Relu),
                })
            })
            .collect();
        stages.push(Stage::GlobalPool);
        stages.push(Stage::Linear(LinearSpec {
            name: "fc".into(),
            in_dim: 128,
            out_dim: EMBEDDING_DIM,
            activation: None,
        }));
        Self {
            kind: EncoderKind::Tiny,
            stages,
        }
    }

    /// Every tensor the architecture needs, in canonical order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for stage in &self.stages {
            match stage {
                Stage::Conv(c) => c.tensors(&mut out),
                Stage::Bottleneck {
                    expand,
                    depthwise,
                    se,
                    project,
                    ..
                } => {
                    if let Some(e) = expand {
                        e.tensors(&mut out);
                    }
                    depthwise.tensors(&mut out);
                    if let Some(s) = se {
                        s.tensors(&mut out);
                    }
                    project.tensors(&mut out);
                }
                Stage::GlobalPool => {}
                Stage::Linear(l) => {
                    out.push((format!("{}.weight", l.name), vec![l.out_dim, l.in_dim]));
                    out.push((format!("{}.bias", l.name), vec![l.out_dim]));
                }
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensor_specs()
            .iter()
            .map(|(_, d)| d.iter().product::<usize>())
            .sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub missing: Vec<String>,
    /// `(name, expected, actual)`
    pub mismatched: Vec<(String, Vec<usize>, Vec<usize>)>,
    pub extras: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty() && self.mismatched.is_empty()
    }
}

/// Checks that `store` holds every tensor of `spec` under `prefix` with the
/// right shape. Tensors under `prefix` that the spec does not use are
/// reported as extras.
pub fn validate_weights(spec: &EncoderSpec, store: &WeightStore, prefix: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    let specs = spec.tensor_specs();
    let mut known = std::collections::HashSet::new();
    for (name, dims) in &specs {
        let full = format!("{prefix}{name}");
        match store.get(&full) {
            None => report.missing.push(full.clone()),
            Some(t) if t.dims != *dims => report.mismatched.push((full.clone(), dims.clone(), t.dims.clone())),
            Some(_) => {}
        }
        known.insert(full);
    }
    for t in store.iter() {
        if t.name.starts_with(prefix) && !known.contains(&t.name) {
            report.extras.push(t.name.clone());
        }
    }
    report
}

/// An encoder architecture with loaded `f32` weights.
#[derive(Clone, Debug)]
pub struct Encoder {
    spec: EncoderSpec,
    weights: HashMap<String, Tensor<f32>>,
}

impl Encoder {
    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn kind(&self) -> EncoderKind {
        self.spec.kind
    }

    pub fn zeros(kind: EncoderKind) -> Self {
        let spec = EncoderSpec::new(kind);
        let weights = spec
            .tensor_specs()
            .into_iter()
            .map(|(n, d)| {
                let t = Tensor::zeros(&d);
                (n, t)
            })
            .collect();
        Self { spec, weights }
    }

    /// He-normal convolutions, identity folded BN, zero biases,
    /// uniform `±1/√in` linear layers.
    pub fn random(kind: EncoderKind, rng: &mut impl Rng) -> Self {
        let spec = EncoderSpec::new(kind);
        let mut weights = HashMap::new();
        for (name, dims) in spec.tensor_specs() {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = if name.ends_with("bn_scale") {
                vec![1.0; n]
            } else if name.ends_with("bias") || name.ends_with("bn_shift") {
                vec![0.0; n]
            } else if dims.len() == 4 {
                let fan_in = dims[1] * dims[2] * dims[3];
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive sigma");
                (0..n).map(|_| dist.sample(rng) as f32).collect()
            } else {
                let bound = 1.0 / (dims[1] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| dist.sample(rng) as f32).collect()
            };
            weights.insert(name, Tensor::new(dims, data).expect("dims match"));
        }
        Self { spec, weights }
    }

    /// Loads the encoder stored under `prefix`, failing on the first missing
    /// or mis-shaped tensor.
    pub fn from_store(kind: EncoderKind, store: &WeightStore, prefix: &str) -> Result<Self> {
        let spec = EncoderSpec::new(kind);
        let report = validate_weights(&spec, store, prefix);
        if let Some(name) = report.missing.first() {
            return Err(Error::MissingTensor(name.clone()));
        }
        if let Some((name, expected, actual)) = report.mismatched.into_iter().next() {
            return Err(Error::TensorShape { name, expected, actual });
        }
        let mut weights = HashMap::new();
        for (name, dims) in spec.tensor_specs() {
            let t = store.tensor::<f32>(&format!("{prefix}{name}"), &dims)?;
            weights.insert(name, t);
        }
        Ok(Self { spec, weights })
    }

    pub fn write_to(&self, store: &mut WeightStore, prefix: &str) -> Result<()> {
        for (name, _) in self.spec.tensor_specs() {
            store.insert_tensor(format!("{prefix}{name}"), &self.weights[&name])?;
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.weights.get(name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.weights.get_mut(name)
    }

    /// SHA-256 over tensor names, shapes and little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.spec.kind.name().as_bytes());
        for (name, dims) in self.spec.tensor_specs() {
            h.update(name.as_bytes());
            for d in dims {
                h.update((d as u32).to_le_bytes());
            }
            for v in self.weights[&name].data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn w(&self, name: &str) -> &Tensor<f32> {
        &self.weights[name]
    }

    fn run_conv(&self, c: &ConvSpec, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let bias = c.bias.then(|| self.w(&format!("{}.bias", c.name)));
        let p = Conv2dParams {
            stride: (c.stride, c.stride),
            padding: (c.padding(), c.padding()),
            groups: c.groups,
        };
        let mut y = conv2d(x, self.w(&format!("{}.weight", c.name)), bias, p)?;
        if c.folded_bn {
            affine_channel_inplace(
                &mut y,
                self.w(&format!("{}.bn_scale", c.name)),
                self.w(&format!("{}.bn_shift", c.name)),
            )?;
        }
        if let Some(a) = c.activation {
            activation_inplace(&mut y, a);
        }
        Ok(y)
    }

    fn run_se(&self, s: &SeSpec, x: &mut Tensor<f32>) -> Result<()> {
        let pooled = global_avg_pool(x)?;
        let fc = |n: &str, v: &Tensor<f32>| {
            linear(v, self.w(&format!("{}.{n}.weight", s.name)), Some(self.w(&format!("{}.{n}.bias", s.name))))
        };
        let mut hidden = fc("fc1", &pooled)?;
        activation_inplace(&mut hidden, Activation::Relu);
        let mut gate = fc("fc2", &hidden)?;
        activation_inplace(&mut gate, Activation::HardSigmoid);
        scale_channels(x, &gate)
    }

    /// Maps a normalized `[3, H, W]` tensor (H, W ≥ 32) to the embedding.
    pub fn forward(&self, x: &Tensor<f32>) -> Result<Vec<f32>> {
        match x.shape() {
            [3, h, w] if *h >= MIN_INPUT && *w >= MIN_INPUT => {}
            s => {
                return Err(Error::shape(
                    "encoder_forward",
                    "input shape",
                    format!("[3, >={MIN_INPUT}, >={MIN_INPUT}]"),
                    s,
                ))
            }
        }
        let mut h = x.clone();
        for stage in &self.spec.stages {
            h = match stage {
                Stage::Conv(c) => self.run_conv(c, &h)?,
                Stage::Bottleneck {
                    expand,
                    depthwise,
                    se,
                    project,
                    residual,
                } => {
                    let mut y = match expand {
                        Some(e) => self.run_conv(e, &h)?,
                        None => h.clone(),
                    };
                    y = self.run_conv(depthwise, &y)?;
                    if let Some(s) = se {
                        self.run_se(s, &mut y)?;
                    }
                    y = self.run_conv(project, &y)?;
                    if *residual {
                        tensor::add(&y, &h)?
                    } else {
                        y
                    }
                }
                Stage::GlobalPool => global_avg_pool(&h)?,
                Stage::Linear(l) => {
                    let mut y = linear(
                        &h,
                        self.w(&format!("{}.weight", l.name)),
                        Some(self.w(&format!("{}.bias", l.name))),
                    )?;
                    if let Some(a) = l.activation {
                        activation_inplace(&mut y, a);
                    }
                    y
                }
            };
        }
        if h.len() != EMBEDDING_DIM {
            return Err(Error::shape("encoder_forward", "embedding length", EMBEDDING_DIM, h.len()));
        }
        Ok(h.into_data())
    }
}
