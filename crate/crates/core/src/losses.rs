//! Training objectives with analytic gradients w.r.t. predictions.
//!
//! `acc = α·MSE + β·plcc_loss(r)` and the color-space robustness term
//! `Σ_space mean((pred_space − mos)²)`; `total = acc(RGB) + λ·robustness`.

use serde::{Deserialize, Serialize};

use crate::color::{ColorSpace, Image};
use crate::error::{Error, Result};
use crate::model::DualBranchModel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlccLossForm {
    /// `1 − r`, in `[0, 2]`.
    #[default]
    OneMinusR,
    /// `(1 − r) / 2`, in `[0, 1]`.
    HalfOneMinusR,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda_rob: f64,
    pub color_spaces: Vec<ColorSpace>,
    pub plcc_form: PlccLossForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda_rob: 1.0,
            color_spaces: ColorSpace::ALL.to_vec(),
            plcc_form: PlccLossForm::OneMinusR,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda_rob", self.lambda_rob)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.lambda_rob > 0.0 && self.color_spaces.is_empty() {
            return Err(Error::InvalidArgument("color_spaces must be nonempty when lambda_rob > 0".into()));
        }
        Ok(())
    }
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape("loss", "prediction/target lengths", target.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("loss needs a nonempty batch".into()));
    }
    Ok(())
}

/// `mean((p − t)²)` and its gradient `2(p − t)/N`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred, target)?;
    let n = pred.len() as f64;
    let value = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((value, grad))
}

/// Pearson `r` and `dr/dpred`.
///
/// With centered `p̃, t̃`: `dr/dp_i = t̃_i/√(SppStt) − r·p̃_i/Spp`.
pub fn pearson_with_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred, target)?;
    if pred.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 samples".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = target.iter().sum::<f64>() / n;
    let pc: Vec<f64> = pred.iter().map(|p| p - mp).collect();
    let tc: Vec<f64> = target.iter().map(|t| t - mt).collect();
    let spp: f64 = pc.iter().map(|v| v * v).sum();
    let stt: f64 = tc.iter().map(|v| v * v).sum();
    let spt: f64 = pc.iter().zip(&tc).map(|(a, b)| a * b).sum();
    if stt == 0.0 {
        return Err(Error::DegenerateCorrelation("constant target in correlation loss"));
    }
    if spp == 0.0 {
        return Err(Error::DegenerateCorrelation("constant predictions in correlation loss"));
    }
    let denom = (spp * stt).sqrt();
    let r = spt / denom;
    let grad = pc.iter().zip(&tc).map(|(p, t)| t / denom - r * p / spp).collect();
    Ok((r, grad))
}

/// `α·MSE + β·plcc_loss(r)` and its exact gradient.
pub fn acc_loss(pred: &[f64], target: &[f64], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let (m, gm) = mse(pred, target)?;
    let mut value = cfg.alpha * m;
    let mut grad: Vec<f64> = gm.iter().map(|g| cfg.alpha * g).collect();
    if cfg.beta > 0.0 {
        let (r, gr) = pearson_with_grad(pred, target)?;
        let k = match cfg.plcc_form {
            PlccLossForm::OneMinusR => 1.0,
            PlccLossForm::HalfOneMinusR => 0.5,
        };
        value += cfg.beta * k * (1.0 - r);
        for (g, d) in grad.iter_mut().zip(gr) {
            *g -= cfg.beta * k * d;
        }
    }
    Ok((value, grad))
}

/// Anything that scores an RGB image in a given color space.
pub trait ScorePredictor {
    fn score(&self, img: &Image, space: ColorSpace) -> Result<f64>;
}

impl ScorePredictor for DualBranchModel {
    fn score(&self, img: &Image, space: ColorSpace) -> Result<f64> {
        self.predict(img, space)
    }
}

impl<F: Fn(&Image, ColorSpace) -> Result<f64>> ScorePredictor for F {
    fn score(&self, img: &Image, space: ColorSpace) -> Result<f64> {
        self(img, space)
    }
}

/// Robustness term from precomputed per-space predictions; returns the value
/// and one gradient vector per entry of `preds`.
pub fn color_space_loss_from_predictions(preds: &[(ColorSpace, &[f64])], mos: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (_, p) in preds {
        let (v, g) = mse(p, mos)?;
        value += v;
        grads.push(g);
    }
    Ok((value, grads))
}

/// `Σ_{space ∈ cfg.color_spaces} mean((predict(img, space) − mos)²)`.
pub fn color_space_loss(model: &impl ScorePredictor, imgs: &[Image], mos: &[f64], cfg: &LossConfig) -> Result<f64> {
    if imgs.is_empty() {
        return Err(Error::InvalidArgument("color-space loss needs a nonempty batch".into()));
    }
    if imgs.len() != mos.len() {
        return Err(Error::shape("color_space_loss", "image/mos counts", imgs.len(), mos.len()));
    }
    let mut all = Vec::with_capacity(cfg.color_spaces.len());
    for &space in &cfg.color_spaces {
        let p = imgs.iter().map(|i| model.score(i, space)).collect::<Result<Vec<_>>>()?;
        all.push((space, p));
    }
    let views: Vec<(ColorSpace, &[f64])> = all.iter().map(|(s, p)| (*s, p.as_slice())).collect();
    Ok(color_space_loss_from_predictions(&views, mos)?.0)
}

/// `acc_loss` on RGB predictions plus `λ·color_space_loss`.
pub fn total_loss(model: &impl ScorePredictor, imgs: &[Image], mos: &[f64], cfg: &LossConfig) -> Result<f64> {
    let rgb = imgs
        .iter()
        .map(|i| model.score(i, ColorSpace::Rgb))
        .collect::<Result<Vec<_>>>()?;
    let (acc, _) = acc_loss(&rgb, mos, cfg)?;
    if cfg.lambda_rob == 0.0 {
        return Ok(acc);
    }
    Ok(acc + cfg.lambda_rob * color_space_loss(model, imgs, mos, cfg)?)
}
