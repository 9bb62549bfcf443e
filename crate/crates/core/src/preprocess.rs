//! Branch-specific input preparation.
//!
//! The authentic branch resizes (content matters, resolution does not); the
//! synthetic branch never interpolates and only center-crops, so
//! high-frequency distortions survive intact.

use serde::{Deserialize, Serialize};

use crate::color::{convert, to_network_range, ColorSpace, Image};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Authentic,
    Synthetic,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Authentic => "authentic",
            Branch::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    pub const IMAGENET: Normalization = Normalization {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };
    pub const HALF: Normalization = Normalization {
        mean: [0.5, 0.5, 0.5],
        std: [0.5, 0.5, 0.5],
    };
    pub const IDENTITY: Normalization = Normalization {
        mean: [0.0; 3],
        std: [1.0; 3],
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPreprocessConfig {
    pub branch: Branch,
    pub resize_to: Option<(usize, usize)>,
    pub center_crop_to: Option<(usize, usize)>,
    /// Per-space normalization, indexed by [`ColorSpace::index`].
    pub normalization: [Normalization; 3],
}

impl BranchPreprocessConfig {
    pub fn authentic(size: usize) -> Self {
        Self {
            branch: Branch::Authentic,
            resize_to: Some((size, size)),
            center_crop_to: None,
            normalization: [Normalization::IMAGENET, Normalization::HALF, Normalization::HALF],
        }
    }

    /// `crop = None` keeps the original resolution.
    pub fn synthetic(crop: Option<usize>) -> Self {
        Self {
            branch: Branch::Synthetic,
            resize_to: None,
            center_crop_to: crop.map(|c| (c, c)),
            normalization: [Normalization::IMAGENET, Normalization::HALF, Normalization::HALF],
        }
    }

    pub fn mean(&self, space: ColorSpace) -> [f32; 3] {
        self.normalization[space.index()].mean
    }

    pub fn std(&self, space: ColorSpace) -> [f32; 3] {
        self.normalization[space.index()].std
    }

    pub fn validate(&self) -> Result<()> {
        match self.branch {
            Branch::Authentic if self.resize_to.is_none() || self.center_crop_to.is_some() => {
                return Err(Error::InvalidArgument(
                    "authentic branch requires resize_to and no center crop".into(),
                ))
            }
            Branch::Synthetic if self.resize_to.is_some() => {
                return Err(Error::InvalidArgument("synthetic branch must not resize".into()))
            }
            _ => {}
        }
        for (w, h) in self.resize_to.iter().chain(&self.center_crop_to) {
            if *w == 0 || *h == 0 {
                return Err(Error::InvalidArgument("preprocess sizes must be positive".into()));
            }
        }
        if self
            .normalization
            .iter()
            .flat_map(|n| n.std)
            .any(|s| !(s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidArgument("normalization std must be strictly positive".into()));
        }
        Ok(())
    }

    /// Output spatial size for an input of `(w, h)`.
    pub fn output_dims(&self, w: usize, h: usize) -> (usize, usize) {
        self.resize_to.or(self.center_crop_to).unwrap_or((w, h))
    }
}

/// Bilinear resampling with half-pixel centers:
/// `src = (dst + 0.5)·(in/out) − 0.5`, clamped to the border.
pub fn resize_bilinear(img: &Image, w: usize, h: usize) -> Result<Image> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!("resize target must be positive, got {w}x{h}")));
    }
    let (iw, ih) = (img.width(), img.height());
    if (iw, ih) == (w, h) {
        return Ok(img.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(w, iw);
    let ys = taps(h, ih);
    let src = img.data();
    let mut out = Vec::with_capacity(w * h * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p = |x: usize, y: usize| src[(y * iw + x) * 3 + c];
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(img.with_geometry(w, h, out))
}

/// Center crop; windows larger than the image replicate edge pixels.
pub fn center_crop(img: &Image, w: usize, h: usize) -> Result<Image> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!("crop size must be positive, got {w}x{h}")));
    }
    let (iw, ih) = (img.width() as isize, img.height() as isize);
    let left = (iw - w as isize).div_euclid(2);
    let top = (ih - h as isize).div_euclid(2);
    let src = img.data();
    let mut out = Vec::with_capacity(w * h * 3);
    for oy in 0..h as isize {
        let sy = (top + oy).clamp(0, ih - 1) as usize;
        for ox in 0..w as isize {
            let sx = (left + ox).clamp(0, iw - 1) as usize;
            let i = (sy * iw as usize + sx) * 3;
            out.extend_from_slice(&src[i..i + 3]);
        }
    }
    Ok(img.with_geometry(w, h, out))
}

/// Convert → resize or crop → map to `[0,1]` → per-channel `(x − mean)/std`.
pub fn prepare(img: &Image, cfg: &BranchPreprocessConfig, space: ColorSpace) -> Result<Tensor<f32>> {
    cfg.validate()?;
    let converted = convert(img, space)?;
    let shaped = match (cfg.resize_to, cfg.center_crop_to) {
        (Some((w, h)), _) => resize_bilinear(&converted, w, h)?,
        (None, Some((w, h))) => center_crop(&converted, w, h)?,
        (None, None) => converted,
    };
    let mut t = to_network_range(&shaped);
    let (mean, std) = (cfg.mean(space), cfg.std(space));
    let plane = shaped.width() * shaped.height();
    for (c, chunk) in t.data_mut().chunks_mut(plane).enumerate() {
        chunk.iter_mut().for_each(|v| *v = (*v - mean[c]) / std[c]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::rgb(w, h, (0..w * h * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn resize_identity_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 7, 5);
        assert_eq!(resize_bilinear(&img, 7, 5).unwrap(), img);
    }

    #[test]
    fn resize_constant() {
        let img = Image::from_fn(5, 3, |_, _| [0.25, 0.5, 0.75]).unwrap();
        for (w, h) in [(1, 1), (2, 9), (13, 4)] {
            let r = resize_bilinear(&img, w, h).unwrap();
            assert!(r
                .data()
                .chunks(3)
                .all(|p| p.iter().zip([0.25, 0.5, 0.75]).all(|(a, b)| (a - b).abs() < 1e-6)));
        }
    }

    #[test]
    fn resize_ramp_matches_oracle() {
        let img = Image::from_fn(4, 4, |x, y| {
            let v = (x + 4 * y) as f32 / 15.0;
            [v, 1.0 - v, 0.5 * v]
        })
        .unwrap();
        let r = resize_bilinear(&img, 2, 2).unwrap();
        // scale 2: src = 2·dst + 0.5 → {0.5, 2.5}; each output is the mean of a
        // 2x2 neighbourhood.
        for oy in 0..2 {
            for ox in 0..2 {
                let (x0, y0) = (2 * ox, 2 * oy);
                for c in 0..3 {
                    let mut acc = 0.0f64;
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        acc += img.pixel(x0 + dx, y0 + dy)[c] as f64 * 0.25;
                    }
                    let got = r.pixel(ox, oy)[c] as f64;
                    assert!((got - acc).abs() < 1e-6, "({ox},{oy},{c}) {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn crop_full_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 4, 4);
        assert_eq!(center_crop(&img, 4, 4).unwrap(), img);
        let c = center_crop(&img, 2, 2).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(c.pixel(x, y), img.pixel(x + 1, y + 1));
            }
        }
    }

    #[test]
    fn crop_larger_than_image_replicates_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 3, 3);
        let c = center_crop(&img, 5, 5).unwrap();
        // explicit pad-by-one-then-crop oracle
        for y in 0..5 {
            for x in 0..5 {
                let sx = (x as isize - 1).clamp(0, 2) as usize;
                let sy = (y as isize - 1).clamp(0, 2) as usize;
                assert_eq!(c.pixel(x, y), img.pixel(sx, sy));
            }
        }
        assert_eq!(c.pixel(2, 2), img.pixel(1, 1));
    }

    #[test]
    fn prepare_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 300, 200);
        let a = prepare(&img, &BranchPreprocessConfig::authentic(224), ColorSpace::Rgb).unwrap();
        assert_eq!(a.shape(), &[3, 224, 224]);
        let s = prepare(&img, &BranchPreprocessConfig::synthetic(Some(128)), ColorSpace::Lab).unwrap();
        assert_eq!(s.shape(), &[3, 128, 128]);
        let full = prepare(&img, &BranchPreprocessConfig::synthetic(None), ColorSpace::Yuv).unwrap();
        assert_eq!(full.shape(), &[3, 200, 300]);
    }

    #[test]
    fn prepare_identity_normalization_is_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 6, 4);
        let mut cfg = BranchPreprocessConfig::synthetic(None);
        cfg.normalization = [Normalization::IDENTITY; 3];
        let t = prepare(&img, &cfg, ColorSpace::Rgb).unwrap();
        assert_eq!(t, to_network_range(&img));
    }

    #[test]
    fn prepare_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = random_image(&mut rng, 40, 30);
        let cfg = BranchPreprocessConfig::authentic(17);
        let a = prepare(&img, &cfg, ColorSpace::Lab).unwrap();
        let b = prepare(&img, &cfg, ColorSpace::Lab).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn synthetic_crop_never_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (w, h) = (rng.random_range(8..40), rng.random_range(8..40));
            let img = random_image(&mut rng, w, h);
            let cw = rng.random_range(1..=w);
            let ch = rng.random_range(1..=h);
            let c = center_crop(&img, cw, ch).unwrap();
            let mut src: Vec<u32> = img.data().iter().map(|v| v.to_bits()).collect();
            src.sort_unstable();
            assert!(c.data().iter().all(|v| src.binary_search(&v.to_bits()).is_ok()));
        }
    }

    #[test]
    fn config_validation() {
        let mut bad = BranchPreprocessConfig::authentic(224);
        bad.center_crop_to = Some((10, 10));
        assert!(bad.validate().is_err());
        let mut bad = BranchPreprocessConfig::synthetic(None);
        bad.resize_to = Some((10, 10));
        assert!(bad.validate().is_err());
        let mut bad = BranchPreprocessConfig::synthetic(None);
        bad.normalization[1].std[2] = 0.0;
        assert!(bad.validate().is_err());
    }
}
