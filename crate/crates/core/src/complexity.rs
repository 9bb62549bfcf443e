//! Multiply-accumulate and parameter accounting.
//!
//! One MAC is one multiply-accumulate (about two FLOPs). Headline counts
//! charge convolutions, linear layers and KAN edges only; [`Counting::Strict`]
//! also charges squeeze-excitation blocks, folded batch norm and hard
//! activations one multiply per element.

use std::fmt::Write as _;

use serde::Serialize;

use crate::encoder::{ConvSpec, EncoderSpec, Stage, EMBEDDING_DIM};
use crate::head::{DualHead, Head, HeadKind};
use crate::kan::KanGrid;
use crate::model::{ModelConfig, MLP_FUSION_HIDDEN};
use crate::tensor::{conv_output_dim, Activation};

pub const MAC_NOTE: &str = "1 MAC = one multiply-accumulate (~2 FLOPs)";

/// Published dual-branch inference budget, in MACs.
pub const MAC_BUDGET: u64 = 37_000_000_000;

/// Published dual-branch parameter count the report is compared against.
pub const REFERENCE_PARAMS: u64 = 21_100_000;

/// Full-resolution UHD frame, the "original size" synthetic input.
pub const UHD_FRAME: (usize, usize) = (3840, 2160);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Counting {
    #[default]
    Headline,
    Strict,
}

impl Counting {
    pub fn name(self) -> &'static str {
        match self {
            Counting::Headline => "headline",
            Counting::Strict => "strict",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerDesc {
    Conv {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    },
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
    Kan {
        in_dim: usize,
        out_dim: usize,
        grid: KanGrid,
    },
    /// Folded batch norm over `channels`.
    Affine { channels: usize },
    Activation { kind: Activation, channels: usize },
    /// Squeeze-excitation over `channels` with a `squeeze`-wide bottleneck.
    SqueezeExcite { channels: usize, squeeze: usize },
    GlobalPool,
}

/// MACs and parameters of one layer applied to an `h × w` input.
pub fn count_layer(desc: &LayerDesc, h: usize, w: usize) -> (u64, u64) {
    count_layer_with(desc, h, w, Counting::Headline)
}

pub fn count_layer_with(desc: &LayerDesc, h: usize, w: usize, mode: Counting) -> (u64, u64) {
    let strict = mode == Counting::Strict;
    let px = (h * w) as u64;
    match *desc {
        LayerDesc::Conv {
            c_in,
            c_out,
            kernel,
            stride,
            padding,
            groups,
            bias,
        } => {
            let ho = conv_output_dim(h, kernel, stride, padding) as u64;
            let wo = conv_output_dim(w, kernel, stride, padding) as u64;
            let per_out = (kernel * kernel * (c_in / groups)) as u64;
            let params = per_out * c_out as u64 + if bias { c_out as u64 } else { 0 };
            (per_out * c_out as u64 * ho * wo, params)
        }
        LayerDesc::Linear { in_dim, out_dim } => ((in_dim * out_dim) as u64, (in_dim * out_dim + out_dim) as u64),
        LayerDesc::Kan { in_dim, out_dim, grid } => {
            let edges = (in_dim * out_dim) as u64;
            let nb = grid.num_bases() as u64;
            (edges * (nb + 2), edges * (nb + 2))
        }
        LayerDesc::Affine { channels } => (if strict { channels as u64 * px } else { 0 }, 2 * channels as u64),
        LayerDesc::Activation { kind, channels } => {
            let hard = matches!(kind, Activation::HardSwish | Activation::HardSigmoid);
            (if strict && hard { channels as u64 * px } else { 0 }, 0)
        }
        LayerDesc::SqueezeExcite { channels, squeeze } => {
            let (c, s) = (channels as u64, squeeze as u64);
            let params = 2 * c * s + c + s;
            // fc1 + fc2 + hard sigmoid + channel gating
            let macs = if strict { 2 * c * s + c + c * px } else { 0 };
            (macs, params)
        }
        LayerDesc::GlobalPool => (0, 0),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComplexityRow {
    pub name: String,
    pub macs: u64,
    pub params: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchInput {
    pub branch: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComplexityReport {
    pub mode: Counting,
    pub inputs: Vec<BranchInput>,
    pub rows: Vec<ComplexityRow>,
    pub total_macs: u64,
    pub total_params: u64,
}

impl ComplexityReport {
    pub fn from_rows(mode: Counting, inputs: Vec<BranchInput>, rows: Vec<ComplexityRow>) -> Self {
        let total_macs = rows.iter().map(|r| r.macs).sum();
        let total_params = rows.iter().map(|r| r.params).sum();
        Self {
            mode,
            inputs,
            rows,
            total_macs,
            total_params,
        }
    }

    /// Sum over rows whose name starts with `prefix`.
    pub fn subtotal(&self, prefix: &str) -> (u64, u64) {
        self.rows
            .iter()
            .filter(|r| r.name.starts_with(prefix))
            .fold((0, 0), |(m, p), r| (m + r.macs, p + r.params))
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("# {MAC_NOTE}; counting={}\n", self.mode.name());
        for i in &self.inputs {
            let _ = writeln!(s, "# input {}: {}x{}", i.branch, i.width, i.height);
        }
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(s, "{:<width$}  {:>16}  {:>12}", "layer", "MACs", "params");
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>16}  {:>12}", r.name, r.macs, r.params);
        }
        let _ = writeln!(s, "{:<width$}  {:>16}  {:>12}", "total", self.total_macs, self.total_params);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,macs,params\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.name, r.macs, r.params);
        }
        let _ = writeln!(s, "total,{},{}", self.total_macs, self.total_params);
        s
    }
}

fn conv_desc(c: &ConvSpec) -> LayerDesc {
    LayerDesc::Conv {
        c_in: c.c_in,
        c_out: c.c_out,
        kernel: c.kernel,
        stride: c.stride,
        padding: c.padding(),
        groups: c.groups,
        bias: c.bias,
    }
}

/// Counts a conv with its folded BN and activation; returns the output size.
fn count_conv(c: &ConvSpec, h: usize, w: usize, mode: Counting, name: String, rows: &mut Vec<ComplexityRow>) -> (usize, usize) {
    let (mut macs, mut params) = count_layer_with(&conv_desc(c), h, w, mode);
    let ho = conv_output_dim(h, c.kernel, c.stride, c.padding());
    let wo = conv_output_dim(w, c.kernel, c.stride, c.padding());
    if c.folded_bn {
        let (m, p) = count_layer_with(&LayerDesc::Affine { channels: c.c_out }, ho, wo, mode);
        macs += m;
        params += p;
    }
    if let Some(kind) = c.activation {
        macs += count_layer_with(&LayerDesc::Activation { kind, channels: c.c_out }, ho, wo, mode).0;
    }
    rows.push(ComplexityRow { name, macs, params });
    (ho, wo)
}

/// Per-layer rows for an encoder on a `width × height` input, names prefixed.
pub fn count_encoder(spec: &EncoderSpec, width: usize, height: usize, mode: Counting, prefix: &str) -> Vec<ComplexityRow> {
    let mut rows = Vec::new();
    let (mut h, mut w) = (height, width);
    for stage in &spec.stages {
        match stage {
            Stage::Conv(c) => {
                (h, w) = count_conv(c, h, w, mode, format!("{prefix}{}", c.name), &mut rows);
            }
            Stage::Bottleneck {
                expand,
                depthwise,
                se,
                project,
                ..
            } => {
                if let Some(e) = expand {
                    (h, w) = count_conv(e, h, w, mode, format!("{prefix}{}", e.name), &mut rows);
                }
                (h, w) = count_conv(depthwise, h, w, mode, format!("{prefix}{}", depthwise.name), &mut rows);
                if let Some(s) = se {
                    let desc = LayerDesc::SqueezeExcite {
                        channels: s.channels,
                        squeeze: s.squeeze,
                    };
                    let (macs, params) = count_layer_with(&desc, h, w, mode);
                    rows.push(ComplexityRow {
                        name: format!("{prefix}{}", s.name),
                        macs,
                        params,
                    });
                }
                (h, w) = count_conv(project, h, w, mode, format!("{prefix}{}", project.name), &mut rows);
            }
            Stage::GlobalPool => {
                (h, w) = (1, 1);
            }
            Stage::Linear(l) => {
                let (mut macs, params) = count_layer_with(
                    &LayerDesc::Linear {
                        in_dim: l.in_dim,
                        out_dim: l.out_dim,
                    },
                    1,
                    1,
                    mode,
                );
                if let Some(kind) = l.activation {
                    macs += count_layer_with(&LayerDesc::Activation { kind, channels: l.out_dim }, 1, 1, mode).0;
                }
                rows.push(ComplexityRow {
                    name: format!("{prefix}{}", l.name),
                    macs,
                    params,
                });
            }
        }
    }
    rows
}

fn kan_rows(dims: &[usize], grid: KanGrid, prefix: &str, rows: &mut Vec<ComplexityRow>) {
    for (i, d) in dims.windows(2).enumerate() {
        let (macs, params) = count_layer(
            &LayerDesc::Kan {
                in_dim: d[0],
                out_dim: d[1],
                grid,
            },
            1,
            1,
        );
        rows.push(ComplexityRow {
            name: format!("{prefix}{i}"),
            macs,
            params,
        });
    }
}

fn linear_rows(dims: &[usize], prefix: &str, rows: &mut Vec<ComplexityRow>) {
    for (i, d) in dims.windows(2).enumerate() {
        let (macs, params) = count_layer(
            &LayerDesc::Linear {
                in_dim: d[0],
                out_dim: d[1],
            },
            1,
            1,
        );
        rows.push(ComplexityRow {
            name: format!("{prefix}{i}"),
            macs,
            params,
        });
    }
}

/// Rows for a standalone head (KAN or MLP) with the given layer widths.
pub fn count_head(kind: HeadKind, dims: &[usize], grid: KanGrid, prefix: &str) -> Vec<ComplexityRow> {
    let mut rows = Vec::new();
    match kind {
        HeadKind::Kan => kan_rows(dims, grid, prefix, &mut rows),
        HeadKind::Mlp => linear_rows(dims, prefix, &mut rows),
    }
    rows
}

pub fn count_head_instance(head: &Head<f64>, grid: KanGrid, prefix: &str) -> Vec<ComplexityRow> {
    count_head(head.kind(), &head.dims(), grid, prefix)
}

pub fn count_dual_head(head: &DualHead<f64>, grid: KanGrid) -> Vec<ComplexityRow> {
    let mut rows = count_head(HeadKind::Kan, &head.down_auth.dims(), grid, "head.down_auth.");
    rows.extend(count_head(HeadKind::Kan, &head.down_synth.dims(), grid, "head.down_synth."));
    rows.extend(count_head_instance(&head.fusion, grid, "head.fusion."));
    rows
}

/// Both branches at the given input sizes plus the heads described by `cfg`.
pub fn count_model(cfg: &ModelConfig, auth: (usize, usize), synth: (usize, usize), mode: Counting) -> ComplexityReport {
    let mut rows = count_encoder(&EncoderSpec::new(cfg.auth_encoder), auth.0, auth.1, mode, "authentic.");
    rows.extend(count_encoder(&EncoderSpec::new(cfg.synth_encoder), synth.0, synth.1, mode, "synthetic."));
    let d = cfg.head_dim;
    rows.extend(count_head(HeadKind::Kan, &[EMBEDDING_DIM, d], cfg.grid, "head.down_auth."));
    rows.extend(count_head(HeadKind::Kan, &[EMBEDDING_DIM, d], cfg.grid, "head.down_synth."));
    let fusion_dims = match cfg.fusion {
        HeadKind::Kan => vec![2 * d, 1],
        HeadKind::Mlp => vec![2 * d, MLP_FUSION_HIDDEN, 1],
    };
    rows.extend(count_head(cfg.fusion, &fusion_dims, cfg.grid, "head.fusion."));
    let inputs = vec![
        BranchInput {
            branch: "authentic".into(),
            width: auth.0,
            height: auth.1,
        },
        BranchInput {
            branch: "synthetic".into(),
            width: synth.0,
            height: synth.1,
        },
    ];
    ComplexityReport::from_rows(mode, inputs, rows)
}

/// Branch input sizes after preprocessing a `width × height` source image.
pub fn branch_inputs(cfg: &ModelConfig, width: usize, height: usize) -> ((usize, usize), (usize, usize)) {
    (
        cfg.auth_preprocess.output_dims(width, height),
        cfg.synth_preprocess.output_dims(width, height),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Encoder, EncoderKind};
    use crate::model::DualBranchModel;
    use crate::weights::WeightStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hand-derived from the published MobileNetV3-Large block table.
    const MOBILENETV3_LARGE_PARAMS: u64 = 5_483_032;

    #[test]
    fn single_conv_formula() {
        let conv = LayerDesc::Conv {
            c_in: 3,
            c_out: 16,
            kernel: 3,
            stride: 2,
            padding: 1,
            groups: 1,
            bias: false,
        };
        assert_eq!(count_layer(&conv, 224, 224), (3 * 3 * 3 * 16 * 112 * 112, 432));
        assert_eq!(count_layer(&conv, 224, 224).0, 5_419_008);
    }

    #[test]
    fn linear_and_kan_formulas() {
        assert_eq!(count_layer(&LayerDesc::Linear { in_dim: 128, out_dim: 1 }, 1, 1), (128, 129));
        let kan = LayerDesc::Kan {
            in_dim: 1000,
            out_dim: 128,
            grid: KanGrid::default(),
        };
        assert_eq!(count_layer(&kan, 1, 1), (1_280_000, 1_280_000));
    }

    #[test]
    fn mobilenet_parameter_golden() {
        let spec = EncoderSpec::new(EncoderKind::MobileNetV3Large);
        let rows = count_encoder(&spec, 224, 224, Counting::Headline, "");
        let params: u64 = rows.iter().map(|r| r.params).sum();
        assert_eq!(params, MOBILENETV3_LARGE_PARAMS);
        assert_eq!(spec.num_params() as u64, MOBILENETV3_LARGE_PARAMS);
        let macs: u64 = rows.iter().map(|r| r.macs).sum();
        assert_eq!(macs, 215_082_560);
    }

    #[test]
    fn strict_counts_more() {
        let spec = EncoderSpec::new(EncoderKind::MobileNetV3Large);
        let head: u64 = count_encoder(&spec, 224, 224, Counting::Headline, "").iter().map(|r| r.macs).sum();
        let strict: u64 = count_encoder(&spec, 224, 224, Counting::Strict, "").iter().map(|r| r.macs).sum();
        assert!(strict > head);
        let p1: u64 = count_encoder(&spec, 224, 224, Counting::Strict, "").iter().map(|r| r.params).sum();
        assert_eq!(p1, MOBILENETV3_LARGE_PARAMS);
    }

    #[test]
    fn tiny_model_hand_sum() {
        let mut cfg = ModelConfig::tiny();
        cfg.head_dim = 128;
        let r = count_model(&cfg, (64, 64), (64, 64), Counting::Headline);
        // conv0..3: 442368 + 3 * 1179648; fc: 128000
        let enc = 442_368 + 3 * 1_179_648 + 128_000;
        let heads = 2 * 1000 * 128 * 10 + 256 * 10;
        assert_eq!(r.total_macs, 2 * enc + heads);
        assert_eq!(r.total_macs, r.rows.iter().map(|x| x.macs).sum::<u64>());
        assert_eq!(r.subtotal("authentic.").0, enc);
    }

    #[test]
    fn trunk_macs_scale_with_pixels() {
        let spec = EncoderSpec::new(EncoderKind::MobileNetV3Large);
        let trunk = |s: usize| -> u64 {
            count_encoder(&spec, s, s, Counting::Headline, "")
                .iter()
                .filter(|r| !r.name.starts_with("classifier"))
                .map(|r| r.macs)
                .sum()
        };
        assert_eq!(trunk(448), 4 * trunk(224));
        assert_eq!(trunk(640), 4 * trunk(320));
    }

    #[test]
    fn params_match_serialized_scalars() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for fusion in [HeadKind::Kan, HeadKind::Mlp] {
            let cfg = ModelConfig {
                head_dim: 16,
                fusion,
                ..ModelConfig::tiny()
            };
            let model = DualBranchModel::random(cfg.clone(), &mut rng).unwrap();
            let r = count_model(&cfg, (64, 64), (64, 64), Counting::Headline);
            assert_eq!(r.total_params as usize, model.to_store().unwrap().num_scalars());
            assert_eq!(r.total_params as usize, model.num_params());
        }
        let enc = Encoder::zeros(EncoderKind::MobileNetV3Large);
        let mut store = WeightStore::new();
        enc.write_to(&mut store, "").unwrap();
        assert_eq!(store.num_scalars() as u64, MOBILENETV3_LARGE_PARAMS);
    }

    #[test]
    fn dual_branch_within_budget() {
        let cfg = ModelConfig {
            head_dim: 512,
            ..ModelConfig::default()
        };
        let r = count_model(&cfg, (384, 384), (1280, 1280), Counting::Headline);
        assert!(r.total_macs <= 37_000_000_000);
        assert_eq!(r.total_params, 2 * MOBILENETV3_LARGE_PARAMS + 2 * 1000 * 512 * 10 + 1024 * 10);
    }

    #[test]
    fn report_formats() {
        let r = count_model(&ModelConfig::tiny(), (64, 64), (64, 64), Counting::Headline);
        let csv = r.to_csv();
        assert!(csv.starts_with("layer,macs,params\n"));
        assert!(csv.trim_end().ends_with(&format!("total,{},{}", r.total_macs, r.total_params)));
        assert_eq!(csv.lines().count(), r.rows.len() + 2);
        assert!(r.to_table().starts_with(&format!("# {MAC_NOTE}; counting=headline")));
    }
}
